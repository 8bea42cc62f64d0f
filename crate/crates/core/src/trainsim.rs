//! Numeric end-to-end verification: a tiny dense model trained under a
//! sharding strategy on simulated ranks must produce the same parameters as
//! single-process training.
//!
//! The strategy path interprets the generated schedule op by op, moving real
//! f64 parameter and gradient buffers through the netsim collectives, with
//! Adam running on each rank's optimizer-state shard. Everything is double
//! precision and fully deterministic.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;
use std::ops::Range;

use crate::costmodel::Method;
use crate::netsim::{
    grouped_all_gather, grouped_all_reduce, grouped_reduce_scatter, ring_all_gather,
    ring_all_reduce, ring_reduce_scatter, SimCluster,
};
use crate::schedule::{self, CollectiveKind, CommOp, CommScope, Stage, StateTarget};
use crate::strategy::passes_principle1;
use crate::types::{ClusterSpec, Error, ModelSpec, NetworkSpec, Result, ShardLevel, Strategy};

// ── Optimizer ────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn adam_element(cfg: &AdamConfig, t: u64, p: &mut f64, g: f64, m: &mut f64, v: &mut f64) {
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
    let m_hat = *m / (1.0 - cfg.beta1.powi(t as i32));
    let v_hat = *v / (1.0 - cfg.beta2.powi(t as i32));
    *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
}

// ── Model ────────────────────────────────────────────────────────────────────

/// A small stack of dense layers with tanh between them and an identity
/// output, stored as one flat `[weights | biases]` block per layer.
#[derive(Debug, Clone)]
pub struct TinyModel {
    pub dims: Vec<usize>,
    pub layers: Vec<Vec<f64>>,
}

fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

impl TinyModel {
    pub fn seeded(seed: u64) -> Self {
        TinyModel::with_dims(seed, &[4, 8, 2])
    }

    pub fn with_dims(seed: u64, dims: &[usize]) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (d_in, d_out) = (w[0], w[1]);
                let scale = 0.5 / (d_in as f64).sqrt();
                let mut block = Vec::with_capacity(d_in * d_out + d_out);
                for _ in 0..d_in * d_out {
                    block.push((unit_f64(&mut rng) * 2.0 - 1.0) * scale);
                }
                for _ in 0..d_out {
                    block.push((unit_f64(&mut rng) * 2.0 - 1.0) * 0.1);
                }
                block
            })
            .collect();
        TinyModel {
            dims: dims.to_vec(),
            layers,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn layer_len(&self, l: usize) -> usize {
        self.dims[l] * self.dims[l + 1] + self.dims[l + 1]
    }

    pub fn param_count(&self) -> usize {
        (0..self.n_layers()).map(|l| self.layer_len(l)).sum()
    }

    pub fn flatten(params: &[Vec<f64>]) -> Vec<f64> {
        let mut out = Vec::new();
        for block in params {
            out.extend_from_slice(block);
        }
        out
    }
}

// ── Data ─────────────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (step + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// The global batch of one optimizer step, identical for the baseline and
/// every strategy run.
pub fn make_batch(seed: u64, step: u64, count: usize, d_in: usize, d_out: usize) -> Vec<Sample> {
    let mut rng = step_rng(seed, step);
    (0..count)
        .map(|_| Sample {
            x: (0..d_in).map(|_| unit_f64(&mut rng) * 2.0 - 1.0).collect(),
            y: (0..d_out).map(|_| unit_f64(&mut rng) * 2.0 - 1.0).collect(),
        })
        .collect()
}

// ── Forward / backward ───────────────────────────────────────────────────────

/// Activations per layer boundary; `acts[0]` is the input, `acts[L]` the
/// prediction. Hidden layers apply tanh, the last layer is linear.
fn forward(dims: &[usize], layers: &[Vec<f64>], x: &[f64]) -> Vec<Vec<f64>> {
    let n_layers = dims.len() - 1;
    let mut acts = Vec::with_capacity(n_layers + 1);
    acts.push(x.to_vec());
    for l in 0..n_layers {
        let (d_in, d_out) = (dims[l], dims[l + 1]);
        let block = &layers[l];
        let input = &acts[l];
        let mut out = vec![0.0; d_out];
        for (o, out_o) in out.iter_mut().enumerate() {
            let mut z = block[d_in * d_out + o];
            for i in 0..d_in {
                z += block[o * d_in + i] * input[i];
            }
            *out_o = if l == n_layers - 1 { z } else { z.tanh() };
        }
        acts.push(out);
    }
    acts
}

/// Squared-error loss summed over outputs; accumulates this sample's
/// parameter gradients into `grads` (same block layout as the layers).
fn backward(
    dims: &[usize],
    layers: &[Vec<f64>],
    acts: &[Vec<f64>],
    y: &[f64],
    grads: &mut [Vec<f64>],
) {
    let n_layers = dims.len() - 1;
    let mut da: Vec<f64> = acts[n_layers]
        .iter()
        .zip(y)
        .map(|(p, t)| 2.0 * (p - t))
        .collect();
    for l in (0..n_layers).rev() {
        let (d_in, d_out) = (dims[l], dims[l + 1]);
        let block = &layers[l];
        let a_in = &acts[l];
        let a_out = &acts[l + 1];
        let dz: Vec<f64> = if l == n_layers - 1 {
            da.clone()
        } else {
            da.iter()
                .zip(a_out)
                .map(|(d, a)| d * (1.0 - a * a))
                .collect()
        };
        let gw = &mut grads[l];
        for o in 0..d_out {
            for i in 0..d_in {
                gw[o * d_in + i] += dz[o] * a_in[i];
            }
            gw[d_in * d_out + o] += dz[o];
        }
        if l > 0 {
            let mut dx = vec![0.0; d_in];
            for (i, dx_i) in dx.iter_mut().enumerate() {
                for o in 0..d_out {
                    *dx_i += block[o * d_in + i] * dz[o];
                }
            }
            da = dx;
        }
    }
}

// ── Baseline ─────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrainConfig {
    pub steps: u64,
    pub global_batch: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

/// Single-process training with `accum_steps` micro-batches per step. This
/// is the reference every strategy run is compared against.
pub fn run_baseline(model: &TinyModel, accum_steps: u64, cfg: &TrainConfig) -> Result<Vec<f64>> {
    if cfg.global_batch % accum_steps as usize != 0 {
        return Err(Error::BadSimulation(format!(
            "global batch {} not divisible into {} micro-batches",
            cfg.global_batch, accum_steps
        )));
    }
    let per_micro = cfg.global_batch / accum_steps as usize;
    let dims = &model.dims;
    let mut params = model.layers.clone();
    let mut m: Vec<Vec<f64>> = params.iter().map(|b| vec![0.0; b.len()]).collect();
    let mut v = m.clone();
    for step in 0..cfg.steps {
        let batch = make_batch(
            cfg.seed,
            step,
            cfg.global_batch,
            dims[0],
            dims[dims.len() - 1],
        );
        let mut grads: Vec<Vec<f64>> = params.iter().map(|b| vec![0.0; b.len()]).collect();
        for micro in 0..accum_steps as usize {
            for sample in &batch[micro * per_micro..(micro + 1) * per_micro] {
                let acts = forward(dims, &params, &sample.x);
                backward(dims, &params, &acts, &sample.y, &mut grads);
            }
        }
        let t = step + 1;
        let scale = 1.0 / cfg.global_batch as f64;
        for l in 0..params.len() {
            for k in 0..params[l].len() {
                adam_element(
                    &cfg.adam,
                    t,
                    &mut params[l][k],
                    grads[l][k] * scale,
                    &mut m[l][k],
                    &mut v[l][k],
                );
            }
        }
    }
    Ok(TinyModel::flatten(&params))
}

// ── Shard geometry ───────────────────────────────────────────────────────────

/// Where each rank's shard of a block lives. Grouped strategies index global
/// shards position-major (a rank's 1/N slice nests inside its group's 1/M
/// slice); flat strategies index them rank-major.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    m: usize,
    grouped: bool,
}

impl Geometry {
    fn slice(&self, level: ShardLevel, block_len: usize, rank: usize) -> Range<usize> {
        let (j, q) = (rank / self.m, rank % self.m);
        match level {
            ShardLevel::NoShard => 0..block_len,
            ShardLevel::IntraGroup => {
                let c = block_len / self.m;
                q * c..(q + 1) * c
            }
            ShardLevel::Global => {
                let c = block_len / self.n;
                if self.grouped {
                    let start = q * (block_len / self.m) + j * c;
                    start..start + c
                } else {
                    rank * c..(rank + 1) * c
                }
            }
        }
    }

    /// Source/destination shard level implied by a gather's scope: world
    /// gathers move 1/N shards, inter-group gathers move 1/N shards into a
    /// group slice, intra-group gathers move 1/M slices.
    fn gather_level(scope: CommScope) -> ShardLevel {
        match scope {
            CommScope::World | CommScope::InterGroup => ShardLevel::Global,
            CommScope::IntraGroup => ShardLevel::IntraGroup,
        }
    }
}

// ── Strategy execution ───────────────────────────────────────────────────────

struct Executor {
    strategy: Strategy,
    sim: SimCluster,
    net: NetworkSpec,
    geo: Geometry,
    dims: Vec<usize>,
    block_lens: Vec<usize>,
    real_lens: Vec<usize>,
    /// params[rank][layer]: padded block, zero outside the rank's residency
    /// except while gathered.
    params: Vec<Vec<Vec<f64>>>,
    adam_m: Vec<Vec<Vec<f64>>>,
    adam_v: Vec<Vec<Vec<f64>>>,
}

impl Executor {
    fn new(strategy: Strategy, cluster: &ClusterSpec, model: &TinyModel) -> Result<Executor> {
        if !passes_principle1(&strategy) {
            return Err(Error::Unsupported(format!(
                "strategy {strategy} shards optimizer state more coarsely than parameters or gradients; training under it is not defined"
            )));
        }
        let n = cluster.n_gpus() as usize;
        let geo = Geometry {
            n,
            m: cluster.group_size() as usize,
            grouped: strategy.is_grouped(),
        };
        let real_lens: Vec<usize> = (0..model.n_layers()).map(|l| model.layer_len(l)).collect();
        let block_lens: Vec<usize> = real_lens.iter().map(|&len| len.div_ceil(n) * n).collect();
        let padded_blocks: Vec<Vec<f64>> = model
            .layers
            .iter()
            .zip(&block_lens)
            .map(|(block, &len)| {
                let mut b = block.clone();
                b.resize(len, 0.0);
                b
            })
            .collect();
        let zeros: Vec<Vec<f64>> = block_lens.iter().map(|&len| vec![0.0; len]).collect();
        let mut exec = Executor {
            strategy,
            sim: SimCluster::new(cluster),
            net: NetworkSpec::default(),
            geo,
            dims: model.dims.clone(),
            block_lens,
            real_lens,
            params: vec![padded_blocks; n],
            adam_m: vec![zeros.clone(); n],
            adam_v: vec![zeros; n],
        };
        for rank in 0..n {
            exec.trim_to_residency(rank);
        }
        Ok(exec)
    }

    fn n_ranks(&self) -> usize {
        self.geo.n
    }

    fn n_layers(&self) -> usize {
        self.block_lens.len()
    }

    /// Zero everything outside the rank's declared parameter residency.
    fn trim_to_residency(&mut self, rank: usize) {
        for l in 0..self.n_layers() {
            let keep = self.geo.slice(self.strategy.p, self.block_lens[l], rank);
            for k in 0..self.block_lens[l] {
                if !keep.contains(&k) {
                    self.params[rank][l][k] = 0.0;
                }
            }
        }
    }

    /// Run one parameter all-gather op for one layer: every participant
    /// contributes the shard its scope implies and scatters the gathered
    /// segments back into each peer's home slice.
    fn apply_param_gather(&mut self, op: &CommOp, layer: usize) -> Result<()> {
        let d = self.block_lens[layer];
        let level = Geometry::gather_level(op.scope);
        let contributions: Vec<Vec<f64>> = (0..self.n_ranks())
            .map(|r| self.params[r][layer][self.geo.slice(level, d, r)].to_vec())
            .collect();
        let (outputs, rings): (Vec<Vec<f64>>, Vec<Vec<usize>>) = match op.scope {
            CommScope::World => {
                let run = ring_all_gather(&self.sim, &contributions, 8, &self.net)?;
                (run.outputs, vec![(0..self.n_ranks()).collect()])
            }
            CommScope::IntraGroup => {
                let run = grouped_all_gather(&self.sim, op.scope, &contributions, 8, &self.net)?;
                let rings = (0..self.sim.n_groups())
                    .map(|j| {
                        (0..self.sim.group_size())
                            .map(|q| self.sim.rank_at(j, q))
                            .collect()
                    })
                    .collect();
                (run.outputs, rings)
            }
            CommScope::InterGroup => {
                let run = grouped_all_gather(&self.sim, op.scope, &contributions, 8, &self.net)?;
                let rings = (0..self.sim.group_size())
                    .map(|q| {
                        (0..self.sim.n_groups())
                            .map(|j| self.sim.rank_at(j, q))
                            .collect()
                    })
                    .collect();
                (run.outputs, rings)
            }
        };
        let seg = contributions[0].len();
        for ring in &rings {
            for &rank in ring {
                for (idx, &peer) in ring.iter().enumerate() {
                    let home = self.geo.slice(level, d, peer);
                    let piece = outputs[rank][idx * seg..(idx + 1) * seg].to_vec();
                    self.params[rank][layer][home].copy_from_slice(&piece);
                }
            }
        }
        Ok(())
    }

    /// Per-micro-batch gradient sync: run the op chain on this layer's
    /// freshly computed gradients and add the synced piece into the
    /// accumulation buffers at its slice.
    fn sync_micro_gradient(
        &self,
        ops: &[&CommOp],
        layer: usize,
        micro_grads: Vec<Vec<f64>>,
        accum: &mut [Vec<Vec<f64>>],
    ) -> Result<()> {
        let d = self.block_lens[layer];
        let (pieces, slices) = self.run_grad_chain(ops, d, micro_grads)?;
        for rank in 0..self.n_ranks() {
            let slice = slices[rank].clone();
            for (k, v) in pieces[rank].iter().enumerate() {
                accum[rank][layer][slice.start + k] += v;
            }
        }
        Ok(())
    }

    /// Run a chain of reduce-scatter ops (0, 1 or 2 of them) over per-rank
    /// gradient buffers, returning each rank's synced piece and the block
    /// slice it belongs to.
    fn run_grad_chain(
        &self,
        ops: &[&CommOp],
        d: usize,
        full: Vec<Vec<f64>>,
    ) -> Result<(Vec<Vec<f64>>, Vec<Range<usize>>)> {
        let mut pieces = full;
        let mut slices: Vec<Range<usize>> = (0..self.n_ranks()).map(|_| 0..d).collect();
        for op in ops {
            if op.kind != CollectiveKind::ReduceScatter {
                return Err(Error::Unsupported(format!(
                    "unexpected {:?} in per-micro-batch gradient sync",
                    op.kind
                )));
            }
            let run = match op.scope {
                CommScope::World => ring_reduce_scatter(&self.sim, &pieces, 8, &self.net)?,
                scope => grouped_reduce_scatter(&self.sim, scope, &pieces, 8, &self.net)?,
            };
            pieces = run.outputs;
            let level = Geometry::gather_level(op.scope);
            // An inter-group step scatters the intra-group slice further
            // down to the 1/N shard; the slice math is identical either way.
            slices = (0..self.n_ranks())
                .map(|r| self.geo.slice(level, d, r))
                .collect();
        }
        Ok((pieces, slices))
    }

    /// Apply one update-stage gradient op to the whole accumulated gradient,
    /// layer by layer.
    fn apply_update_grad_op(&self, op: &CommOp, accum: &mut [Vec<Vec<f64>>]) -> Result<()> {
        let n = self.n_ranks();
        for layer in 0..self.n_layers() {
            let d = self.block_lens[layer];
            match (op.kind, op.scope) {
                (CollectiveKind::ReduceScatter, CommScope::IntraGroup) => {
                    let inputs: Vec<Vec<f64>> = (0..n).map(|r| accum[r][layer].clone()).collect();
                    let run = grouped_reduce_scatter(&self.sim, op.scope, &inputs, 8, &self.net)?;
                    for rank in 0..n {
                        let slice = self.geo.slice(ShardLevel::IntraGroup, d, rank);
                        accum[rank][layer] = vec![0.0; d];
                        accum[rank][layer][slice].copy_from_slice(&run.outputs[rank]);
                    }
                }
                (CollectiveKind::ReduceScatter, CommScope::InterGroup) => {
                    let inputs: Vec<Vec<f64>> = (0..n)
                        .map(|r| {
                            accum[r][layer][self.geo.slice(ShardLevel::IntraGroup, d, r)].to_vec()
                        })
                        .collect();
                    let run = grouped_reduce_scatter(&self.sim, op.scope, &inputs, 8, &self.net)?;
                    for rank in 0..n {
                        let slice = self.geo.slice(ShardLevel::Global, d, rank);
                        accum[rank][layer] = vec![0.0; d];
                        accum[rank][layer][slice].copy_from_slice(&run.outputs[rank]);
                    }
                }
                (CollectiveKind::AllReduce, CommScope::InterGroup) => {
                    let inputs: Vec<Vec<f64>> = (0..n)
                        .map(|r| {
                            accum[r][layer][self.geo.slice(ShardLevel::IntraGroup, d, r)].to_vec()
                        })
                        .collect();
                    let run = grouped_all_reduce(&self.sim, op.scope, &inputs, 8, &self.net)?;
                    for rank in 0..n {
                        let slice = self.geo.slice(ShardLevel::IntraGroup, d, rank);
                        accum[rank][layer][slice].copy_from_slice(&run.outputs[rank]);
                    }
                }
                (CollectiveKind::AllReduce, CommScope::World) => {
                    let inputs: Vec<Vec<f64>> = (0..n).map(|r| accum[r][layer].clone()).collect();
                    let run = ring_all_reduce(&self.sim, &inputs, 8, &self.net)?;
                    for rank in 0..n {
                        accum[rank][layer] = run.outputs[rank].clone();
                    }
                }
                other => {
                    return Err(Error::Unsupported(format!(
                        "update-stage gradient op {other:?} is outside the supported strategy set"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Final state of a strategy run.
#[derive(Debug, Clone)]
pub struct StrategyRun {
    /// Full parameters reconstructed from the shard owners (padding removed).
    pub params: Vec<f64>,
    /// Whether every rank ended the run holding exactly its declared
    /// parameter residency and agreeing with the owners' values.
    pub residency_ok: bool,
}

/// Train the tiny model under `strategy` on N simulated ranks and return
/// the reconstructed final parameters.
pub fn run_strategy(
    strategy: Strategy,
    cluster: &ClusterSpec,
    model: &TinyModel,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    Ok(run_strategy_detailed(strategy, cluster, model, cfg)?.params)
}

pub fn run_strategy_detailed(
    strategy: Strategy,
    cluster: &ClusterSpec,
    model: &TinyModel,
    cfg: &TrainConfig,
) -> Result<StrategyRun> {
    let n = cluster.n_gpus() as usize;
    let s = cluster.accum_steps() as usize;
    if cfg.global_batch % (n * s) != 0 {
        return Err(Error::BadSimulation(format!(
            "global batch {} not divisible across {} ranks x {} micro-batches",
            cfg.global_batch, n, s
        )));
    }
    let per_micro = cfg.global_batch / s;
    let per_rank = per_micro / n;
    let mut exec = Executor::new(strategy, cluster, model)?;
    let dims = exec.dims.clone();
    let n_layers = exec.n_layers();
    let plan_model = ModelSpec::full_training(model.param_count() as u64, n_layers as u64)?;
    let plan = schedule::generate(Method::Custom(strategy), cluster, &plan_model)?;

    for step in 0..cfg.steps {
        let batch = make_batch(
            cfg.seed,
            step,
            cfg.global_batch,
            dims[0],
            dims[dims.len() - 1],
        );
        let mut accum: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|_| exec.block_lens.iter().map(|&len| vec![0.0; len]).collect())
            .collect();
        let mut cursor = OpCursor {
            ops: &plan.ops,
            idx: 0,
        };

        for micro in 0..s {
            let micro_samples = &batch[micro * per_micro..(micro + 1) * per_micro];
            let rank_samples: Vec<&[Sample]> = (0..n)
                .map(|r| &micro_samples[r * per_rank..(r + 1) * per_rank])
                .collect();

            // Forward, layer by layer, gathering parameters as the plan says.
            let mut acts: Vec<Vec<Vec<Vec<f64>>>> = (0..n)
                .map(|r| {
                    rank_samples[r]
                        .iter()
                        .map(|smp| vec![smp.x.clone()])
                        .collect()
                })
                .collect();
            for layer in 0..n_layers {
                for op in cursor.take(|op| {
                    op.stage == Stage::Forward
                        && op.layer == Some(layer as u64)
                        && op.micro_batch == Some(micro as u64)
                }) {
                    exec.apply_param_gather(&op, layer)?;
                }
                for rank in 0..n {
                    for k in 0..rank_samples[rank].len() {
                        let out = forward_one_layer(
                            &dims,
                            &exec.params[rank],
                            layer,
                            &acts[rank][k][layer],
                        );
                        acts[rank][k].push(out);
                    }
                }
                if strategy.p != ShardLevel::NoShard {
                    exec.trim_to_residency_all();
                }
            }

            // Backward, deepest layer first.
            let mut da: Vec<Vec<Vec<f64>>> = (0..n)
                .map(|r| {
                    rank_samples[r]
                        .iter()
                        .enumerate()
                        .map(|(k, smp)| {
                            acts[r][k][n_layers]
                                .iter()
                                .zip(&smp.y)
                                .map(|(p, t)| 2.0 * (p - t))
                                .collect()
                        })
                        .collect()
                })
                .collect();
            for layer in (0..n_layers).rev() {
                let gathers = cursor.take(|op| {
                    op.stage == Stage::Backward
                        && op.kind == CollectiveKind::AllGather
                        && op.layer == Some(layer as u64)
                        && op.micro_batch == Some(micro as u64)
                });
                for op in gathers {
                    exec.apply_param_gather(&op, layer)?;
                }
                let mut layer_grads: Vec<Vec<f64>> =
                    (0..n).map(|_| vec![0.0; exec.block_lens[layer]]).collect();
                for rank in 0..n {
                    for k in 0..rank_samples[rank].len() {
                        da[rank][k] = backward_one_layer(
                            &dims,
                            &exec.params[rank],
                            layer,
                            &acts[rank][k],
                            &da[rank][k],
                            &mut layer_grads[rank],
                        );
                    }
                }
                let rs_ops = cursor.take(|op| {
                    op.stage == Stage::Backward
                        && op.kind == CollectiveKind::ReduceScatter
                        && op.layer == Some(layer as u64)
                        && op.micro_batch == Some(micro as u64)
                });
                if rs_ops.is_empty() {
                    // Unsharded gradients accumulate locally.
                    for rank in 0..n {
                        for (k, v) in layer_grads[rank].iter().enumerate() {
                            accum[rank][layer][k] += v;
                        }
                    }
                } else {
                    let refs: Vec<&CommOp> = rs_ops.iter().collect();
                    exec.sync_micro_gradient(&refs, layer, layer_grads, &mut accum)?;
                }
                if strategy.p != ShardLevel::NoShard {
                    exec.trim_to_residency_all();
                }
            }
        }

        // Update: reconcile gradients with the optimizer residency, step
        // Adam on each rank's shard, then restore parameter residency.
        let grad_ops =
            cursor.take(|op| op.stage == Stage::Update && op.target == StateTarget::Grads);
        for op in grad_ops {
            exec.apply_update_grad_op(&op, &mut accum)?;
        }
        let t = step + 1;
        let scale = 1.0 / cfg.global_batch as f64;
        for rank in 0..n {
            for layer in 0..n_layers {
                let d = exec.block_lens[layer];
                let range = exec.geo.slice(strategy.os, d, rank);
                for k in range {
                    let g = accum[rank][layer][k] * scale;
                    let p = &mut exec.params[rank][layer][k];
                    adam_element(
                        &cfg.adam,
                        t,
                        p,
                        g,
                        &mut exec.adam_m[rank][layer][k],
                        &mut exec.adam_v[rank][layer][k],
                    );
                }
            }
        }
        let param_ops =
            cursor.take(|op| op.stage == Stage::Update && op.target == StateTarget::Params);
        for op in param_ops {
            for layer in 0..n_layers {
                exec.apply_param_gather(&op, layer)?;
            }
        }
        if !cursor.done() {
            return Err(Error::BadSimulation(
                "plan interpreter left ops unconsumed".into(),
            ));
        }
        exec.trim_to_residency_all();
    }

    let full = exec.reconstruct_full();
    let residency_ok = exec.residency_matches(&full);
    let mut flat = Vec::new();
    for (layer, block) in full.iter().enumerate() {
        flat.extend_from_slice(&block[..exec.real_lens[layer]]);
    }
    Ok(StrategyRun {
        params: flat,
        residency_ok,
    })
}

struct OpCursor<'a> {
    ops: &'a [CommOp],
    idx: usize,
}

impl<'a> OpCursor<'a> {
    fn take(&mut self, pred: impl Fn(&CommOp) -> bool) -> Vec<CommOp> {
        let mut out = Vec::new();
        while self.idx < self.ops.len() && pred(&self.ops[self.idx]) {
            out.push(self.ops[self.idx]);
            self.idx += 1;
        }
        out
    }

    fn done(&self) -> bool {
        self.idx == self.ops.len()
    }
}

fn forward_one_layer(dims: &[usize], blocks: &[Vec<f64>], layer: usize, input: &[f64]) -> Vec<f64> {
    let n_layers = dims.len() - 1;
    let (d_in, d_out) = (dims[layer], dims[layer + 1]);
    let block = &blocks[layer];
    let mut out = vec![0.0; d_out];
    for (o, out_o) in out.iter_mut().enumerate() {
        let mut z = block[d_in * d_out + o];
        for i in 0..d_in {
            z += block[o * d_in + i] * input[i];
        }
        *out_o = if layer == n_layers - 1 { z } else { z.tanh() };
    }
    out
}

/// One layer of the backward pass; returns the gradient with respect to the
/// layer input for the next (shallower) layer.
fn backward_one_layer(
    dims: &[usize],
    blocks: &[Vec<f64>],
    layer: usize,
    acts: &[Vec<f64>],
    da: &[f64],
    grads: &mut [f64],
) -> Vec<f64> {
    let n_layers = dims.len() - 1;
    let (d_in, d_out) = (dims[layer], dims[layer + 1]);
    let block = &blocks[layer];
    let a_in = &acts[layer];
    let a_out = &acts[layer + 1];
    let dz: Vec<f64> = if layer == n_layers - 1 {
        da.to_vec()
    } else {
        da.iter()
            .zip(a_out)
            .map(|(d, a)| d * (1.0 - a * a))
            .collect()
    };
    for o in 0..d_out {
        for i in 0..d_in {
            grads[o * d_in + i] += dz[o] * a_in[i];
        }
        grads[d_in * d_out + o] += dz[o];
    }
    let mut dx = vec![0.0; d_in];
    for (i, dx_i) in dx.iter_mut().enumerate() {
        for o in 0..d_out {
            *dx_i += block[o * d_in + i] * dz[o];
        }
    }
    dx
}

impl Executor {
    fn trim_to_residency_all(&mut self) {
        for rank in 0..self.n_ranks() {
            self.trim_to_residency(rank);
        }
    }

    /// Rebuild the full padded blocks from whichever ranks own each shard.
    fn reconstruct_full(&self) -> Vec<Vec<f64>> {
        (0..self.n_layers())
            .map(|layer| {
                let d = self.block_lens[layer];
                let mut full = vec![0.0; d];
                match self.strategy.p {
                    ShardLevel::NoShard => full.copy_from_slice(&self.params[0][layer]),
                    ShardLevel::IntraGroup => {
                        for q in 0..self.geo.m {
                            let rank = self.sim.rank_at(0, q);
                            let slice = self.geo.slice(ShardLevel::IntraGroup, d, rank);
                            full[slice.clone()].copy_from_slice(&self.params[rank][layer][slice]);
                        }
                    }
                    ShardLevel::Global => {
                        for rank in 0..self.n_ranks() {
                            let slice = self.geo.slice(ShardLevel::Global, d, rank);
                            full[slice.clone()].copy_from_slice(&self.params[rank][layer][slice]);
                        }
                    }
                }
                full
            })
            .collect()
    }

    /// Every rank must hold exactly its residency: resident values agree
    /// with the reconstruction, everything else is zero.
    fn residency_matches(&self, full: &[Vec<f64>]) -> bool {
        for rank in 0..self.n_ranks() {
            for layer in 0..self.n_layers() {
                let d = self.block_lens[layer];
                let keep = self.geo.slice(self.strategy.p, d, rank);
                for k in 0..d {
                    let have = self.params[rank][layer][k];
                    let want = if keep.contains(&k) {
                        full[layer][k]
                    } else {
                        0.0
                    };
                    if have != want {
                        return false;
                    }
                }
            }
        }
        true
    }
}

// ── Verification ─────────────────────────────────────────────────────────────

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct VerifyResult {
    pub strategy: Strategy,
    pub steps: u64,
    pub max_abs_diff: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub residency_ok: bool,
}

/// Train under the strategy and under the single-process baseline with the
/// same seed and data, and compare final parameters elementwise.
pub fn verify(
    strategy: Strategy,
    cluster: &ClusterSpec,
    steps: u64,
    seed: u64,
    tolerance: f64,
) -> Result<VerifyResult> {
    let model = TinyModel::seeded(seed);
    let cfg = TrainConfig {
        steps,
        global_batch: (cluster.n_gpus() * cluster.accum_steps() * 2) as usize,
        seed,
        adam: AdamConfig::default(),
    };
    let baseline = run_baseline(&model, cluster.accum_steps(), &cfg)?;
    let run = run_strategy_detailed(strategy, cluster, &model, &cfg)?;
    let max_abs_diff = baseline
        .iter()
        .zip(&run.params)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    Ok(VerifyResult {
        strategy,
        steps,
        max_abs_diff,
        tolerance,
        pass: max_abs_diff < tolerance && run.residency_ok,
        residency_ok: run.residency_ok,
    })
}

/// Reduction-completeness probe: feed every rank a constant gradient of 1
/// per element each micro-batch and run only the gradient-sync ops. Every
/// optimizer-shard element must come out exactly N·s: each rank's
/// contribution reduced exactly once per micro-batch.
pub fn gradient_sync_counts(strategy: Strategy, cluster: &ClusterSpec) -> Result<Vec<f64>> {
    let n = cluster.n_gpus() as usize;
    let s = cluster.accum_steps() as usize;
    let model = TinyModel::with_dims(7, &[4, 4]);
    let exec = Executor::new(strategy, cluster, &model)?;
    let n_layers = exec.n_layers();
    let plan_model = ModelSpec::full_training(model.param_count() as u64, n_layers as u64)?;
    let plan = schedule::generate(Method::Custom(strategy), cluster, &plan_model)?;
    let mut accum: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|_| exec.block_lens.iter().map(|&len| vec![0.0; len]).collect())
        .collect();
    let mut cursor = OpCursor {
        ops: &plan.ops,
        idx: 0,
    };
    for micro in 0..s {
        let _ = cursor.take(|op| op.stage == Stage::Forward);
        for layer in (0..n_layers).rev() {
            let _ = cursor.take(|op| {
                op.stage == Stage::Backward
                    && op.kind == CollectiveKind::AllGather
                    && op.layer == Some(layer as u64)
                    && op.micro_batch == Some(micro as u64)
            });
            let ones: Vec<Vec<f64>> = (0..n).map(|_| vec![1.0; exec.block_lens[layer]]).collect();
            let rs_ops = cursor.take(|op| {
                op.stage == Stage::Backward
                    && op.kind == CollectiveKind::ReduceScatter
                    && op.layer == Some(layer as u64)
                    && op.micro_batch == Some(micro as u64)
            });
            if rs_ops.is_empty() {
                for rank in 0..n {
                    for k in 0..exec.block_lens[layer] {
                        accum[rank][layer][k] += 1.0;
                    }
                }
            } else {
                let refs: Vec<&CommOp> = rs_ops.iter().collect();
                exec.sync_micro_gradient(&refs, layer, ones, &mut accum)?;
            }
        }
    }
    for op in cursor.take(|op| op.stage == Stage::Update && op.target == StateTarget::Grads) {
        exec.apply_update_grad_op(&op, &mut accum)?;
    }
    let mut counts = Vec::new();
    for rank in 0..n {
        for layer in 0..n_layers {
            let range = exec.geo.slice(strategy.os, exec.block_lens[layer], rank);
            counts.extend_from_slice(&accum[rank][layer][range]);
        }
    }
    Ok(counts)
}
