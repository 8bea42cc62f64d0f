//! Deterministic round-synchronous simulation of a grouped GPU cluster
//! running ring, hierarchical-ring and hierarchical-overlapping-ring
//! all-gather / reduce-scatter on real payload buffers.
//!
//! Every collective returns the per-rank output buffers together with a
//! [`SimTrace`] recording each round's messages, so byte accounting and
//! timing fall out of the same execution that produces the data.

use serde::Serialize;

use crate::costmodel::{estimate_time_rounds, RoundCost, VolumeReport};
use crate::schedule::{CollectiveKind, CommOp, CommScope, SchedulePlan};
use crate::types::{ClusterSpec, Error, NetworkSpec, Result};

/// Payload element: anything we can copy around and fold together.
pub trait Element: Copy + Default + PartialEq + std::fmt::Debug + std::ops::AddAssign {}
impl<T: Copy + Default + PartialEq + std::fmt::Debug + std::ops::AddAssign> Element for T {}

// ── Cluster topology ─────────────────────────────────────────────────────────

/// Rank/group geometry of the simulated cluster. Rank r sits in group
/// r / M at position r mod M; a link is inter-group iff its endpoints'
/// groups differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SimCluster {
    n_ranks: usize,
    group_size: usize,
    n_groups: usize,
}

impl SimCluster {
    pub fn new(cluster: &ClusterSpec) -> Self {
        SimCluster {
            n_ranks: cluster.n_gpus() as usize,
            group_size: cluster.group_size() as usize,
            n_groups: cluster.n_groups() as usize,
        }
    }

    pub fn from_counts(n_ranks: u64, group_size: u64) -> Result<Self> {
        Ok(SimCluster::new(&ClusterSpec::new(n_ranks, group_size, 1)?))
    }

    pub fn n_ranks(&self) -> usize {
        self.n_ranks
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn group_of(&self, rank: usize) -> usize {
        rank / self.group_size
    }

    pub fn position_of(&self, rank: usize) -> usize {
        rank % self.group_size
    }

    pub fn rank_at(&self, group: usize, position: usize) -> usize {
        group * self.group_size + position
    }

    pub fn is_inter(&self, a: usize, b: usize) -> bool {
        self.group_of(a) != self.group_of(b)
    }
}

// ── Traces ───────────────────────────────────────────────────────────────────

/// One point-to-point transfer inside a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Message {
    pub src: usize,
    pub dst: usize,
    pub bytes: u64,
    pub inter: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Round {
    pub messages: Vec<Message>,
}

/// A named span of rounds (e.g. the overlapped phase of HO-Ring).
#[derive(Debug, Clone, Serialize)]
pub struct Phase {
    pub name: &'static str,
    pub rounds: u64,
}

/// Full record of a simulated collective.
#[derive(Debug, Clone, Serialize)]
pub struct SimTrace {
    pub rounds: Vec<Round>,
    pub phases: Vec<Phase>,
    pub intra_bytes: u64,
    pub inter_bytes: u64,
    pub simulated_time: f64,
}

impl SimTrace {
    pub fn total_rounds(&self) -> u64 {
        self.rounds.len() as u64
    }

    pub fn total_bytes(&self) -> u64 {
        self.intra_bytes + self.inter_bytes
    }

    pub fn sent_by_rank(&self, rank: usize) -> u64 {
        self.rounds
            .iter()
            .flat_map(|r| &r.messages)
            .filter(|msg| msg.src == rank)
            .map(|msg| msg.bytes)
            .sum()
    }

    pub fn inter_sent_by_rank(&self, rank: usize) -> u64 {
        self.rounds
            .iter()
            .flat_map(|r| &r.messages)
            .filter(|msg| msg.src == rank && msg.inter)
            .map(|msg| msg.bytes)
            .sum()
    }

    /// Heaviest per-link load of each round, the quantity the time model
    /// charges for.
    pub fn round_costs(&self) -> Vec<RoundCost> {
        self.rounds
            .iter()
            .map(|round| {
                let mut cost = RoundCost::default();
                let mut link_loads: std::collections::HashMap<(usize, usize), u64> =
                    std::collections::HashMap::new();
                for msg in &round.messages {
                    *link_loads.entry((msg.src, msg.dst)).or_insert(0) += msg.bytes;
                }
                for msg in &round.messages {
                    let load = link_loads[&(msg.src, msg.dst)];
                    if msg.inter {
                        cost.max_inter_link_bytes = cost.max_inter_link_bytes.max(load);
                    } else {
                        cost.max_intra_link_bytes = cost.max_intra_link_bytes.max(load);
                    }
                }
                cost
            })
            .collect()
    }

    /// One JSON object per round.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (i, round) in self.rounds.iter().enumerate() {
            let line = serde_json::json!({
                "round": i,
                "messages": round.messages,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

struct TraceBuilder {
    sim: SimCluster,
    elem_bytes: u64,
    rounds: Vec<Round>,
}

impl TraceBuilder {
    fn new(sim: SimCluster, elem_bytes: u64) -> Self {
        TraceBuilder {
            sim,
            elem_bytes,
            rounds: Vec::new(),
        }
    }

    fn send(&mut self, round: usize, src: usize, dst: usize, elems: usize) {
        while self.rounds.len() <= round {
            self.rounds.push(Round::default());
        }
        self.rounds[round].messages.push(Message {
            src,
            dst,
            bytes: elems as u64 * self.elem_bytes,
            inter: self.sim.is_inter(src, dst),
        });
    }

    fn next_round(&self) -> usize {
        self.rounds.len()
    }

    fn finish(self, phases: Vec<Phase>, net: &NetworkSpec) -> SimTrace {
        let mut intra = 0u64;
        let mut inter = 0u64;
        for round in &self.rounds {
            for msg in &round.messages {
                if msg.inter {
                    inter += msg.bytes;
                } else {
                    intra += msg.bytes;
                }
            }
        }
        let mut trace = SimTrace {
            rounds: self.rounds,
            phases,
            intra_bytes: intra,
            inter_bytes: inter,
            simulated_time: 0.0,
        };
        trace.simulated_time = estimate_time_rounds(&trace.round_costs(), net);
        trace
    }
}

// ── Ring engines ─────────────────────────────────────────────────────────────

/// One ring all-gather instance over `ring` (global rank ids). `shards[i]`
/// belongs to `ring[i]`; every participant ends with the shards concatenated
/// in ring order. Occupies rounds `[start, start + P - 1)`.
fn ring_ag_instance<T: Element>(
    tb: &mut TraceBuilder,
    ring: &[usize],
    shards: &[Vec<T>],
    start: usize,
) -> Vec<Vec<T>> {
    let p = ring.len();
    let c = shards[0].len();
    let mut out: Vec<Vec<T>> = (0..p)
        .map(|i| {
            let mut buf = vec![T::default(); p * c];
            buf[i * c..(i + 1) * c].copy_from_slice(&shards[i]);
            buf
        })
        .collect();
    for t in 1..p {
        let mut incoming: Vec<(usize, usize, Vec<T>)> = Vec::with_capacity(p);
        for i in 0..p {
            let seg = (i + p + 1 - t) % p;
            let dst = (i + 1) % p;
            tb.send(start + t - 1, ring[i], ring[dst], c);
            incoming.push((dst, seg, out[i][seg * c..(seg + 1) * c].to_vec()));
        }
        for (dst, seg, data) in incoming {
            out[dst][seg * c..(seg + 1) * c].copy_from_slice(&data);
        }
    }
    out
}

/// One ring reduce-scatter instance: `inputs[i]` (size P·C) belongs to
/// `ring[i]`; participant i ends with chunk i summed over all inputs, the
/// running sum folding in each hop's local chunk in ring order.
fn ring_rs_instance<T: Element>(
    tb: &mut TraceBuilder,
    ring: &[usize],
    inputs: Vec<Vec<T>>,
    start: usize,
) -> Vec<Vec<T>> {
    let p = ring.len();
    let c = inputs[0].len() / p;
    let mut acc = inputs;
    for t in 1..p {
        let mut incoming: Vec<(usize, usize, Vec<T>)> = Vec::with_capacity(p);
        for i in 0..p {
            let chunk = (i + p - t) % p;
            let dst = (i + 1) % p;
            tb.send(start + t - 1, ring[i], ring[dst], c);
            incoming.push((dst, chunk, acc[i][chunk * c..(chunk + 1) * c].to_vec()));
        }
        for (dst, chunk, mut data) in incoming {
            for (k, v) in data.iter_mut().enumerate() {
                *v += acc[dst][chunk * c + k];
            }
            acc[dst][chunk * c..(chunk + 1) * c].copy_from_slice(&data);
        }
    }
    (0..p)
        .map(|i| acc[i][i * c..(i + 1) * c].to_vec())
        .collect()
}

fn world_ring(sim: &SimCluster) -> Vec<usize> {
    (0..sim.n_ranks()).collect()
}

fn group_ring(sim: &SimCluster, group: usize) -> Vec<usize> {
    (0..sim.group_size())
        .map(|q| sim.rank_at(group, q))
        .collect()
}

fn position_ring(sim: &SimCluster, position: usize) -> Vec<usize> {
    (0..sim.n_groups())
        .map(|j| sim.rank_at(j, position))
        .collect()
}

fn check_equal_shards<T>(shards: &[Vec<T>], n: usize) -> Result<usize> {
    if shards.len() != n {
        return Err(Error::BadSimulation(format!(
            "expected {n} shard buffers, got {}",
            shards.len()
        )));
    }
    let c = shards[0].len();
    for (rank, s) in shards.iter().enumerate() {
        if s.len() != c {
            return Err(Error::ShardSizeMismatch {
                rank,
                got: s.len(),
                expected: c,
            });
        }
    }
    Ok(c)
}

/// Pad every input to a common length divisible by `n`; padding elements are
/// zero and excluded from correctness checks by the callers.
fn pad_inputs<T: Element>(inputs: &[Vec<T>], n: usize) -> Result<(Vec<Vec<T>>, usize)> {
    if inputs.is_empty() {
        return Err(Error::BadSimulation("no input buffers".into()));
    }
    let len = inputs[0].len();
    for (rank, buf) in inputs.iter().enumerate() {
        if buf.len() != len {
            return Err(Error::ShardSizeMismatch {
                rank,
                got: buf.len(),
                expected: len,
            });
        }
    }
    let c = len.div_ceil(n).max(1);
    let padded = inputs
        .iter()
        .map(|buf| {
            let mut v = buf.clone();
            v.resize(n * c, T::default());
            v
        })
        .collect();
    Ok((padded, c))
}

/// Output buffers plus the trace of the rounds that produced them.
#[derive(Debug, Clone)]
pub struct CollectiveRun<T> {
    pub outputs: Vec<Vec<T>>,
    pub trace: SimTrace,
}

// ── Public collectives ───────────────────────────────────────────────────────

/// Flat ring all-gather over all N ranks: N−1 rounds, every rank ends with
/// all shards concatenated in rank order and sends (N−1)·C elements.
pub fn ring_all_gather<T: Element>(
    sim: &SimCluster,
    shards: &[Vec<T>],
    elem_bytes: u64,
    net: &NetworkSpec,
) -> Result<CollectiveRun<T>> {
    let n = sim.n_ranks();
    if n < 2 {
        return Err(Error::BadSimulation(
            "all-gather needs at least 2 ranks".into(),
        ));
    }
    check_equal_shards(shards, n)?;
    let mut tb = TraceBuilder::new(*sim, elem_bytes);
    let outputs = ring_ag_instance(&mut tb, &world_ring(sim), shards, 0);
    let rounds = tb.next_round() as u64;
    Ok(CollectiveRun {
        outputs,
        trace: tb.finish(
            vec![Phase {
                name: "ring",
                rounds,
            }],
            net,
        ),
    })
}

/// Flat ring reduce-scatter: rank i ends with segment i of the elementwise
/// sum of all inputs. Inputs are zero-padded to a multiple of N if needed.
pub fn ring_reduce_scatter<T: Element>(
    sim: &SimCluster,
    inputs: &[Vec<T>],
    elem_bytes: u64,
    net: &NetworkSpec,
) -> Result<CollectiveRun<T>> {
    let n = sim.n_ranks();
    if n < 2 {
        return Err(Error::BadSimulation(
            "reduce-scatter needs at least 2 ranks".into(),
        ));
    }
    let (padded, _c) = pad_inputs(inputs, n)?;
    let mut tb = TraceBuilder::new(*sim, elem_bytes);
    let outputs = ring_rs_instance(&mut tb, &world_ring(sim), padded, 0);
    let rounds = tb.next_round() as u64;
    Ok(CollectiveRun {
        outputs,
        trace: tb.finish(
            vec![Phase {
                name: "ring",
                rounds,
            }],
            net,
        ),
    })
}

/// Hierarchical ring all-gather: intra-group all-gather, an inter-group
/// all-gather of group blocks carried by one leader per group (position 0),
/// then an intra-group relay of the foreign blocks. Falls back to the flat
/// ring when the cluster has a single group or one-GPU groups.
pub fn h_ring_all_gather<T: Element>(
    sim: &SimCluster,
    shards: &[Vec<T>],
    elem_bytes: u64,
    net: &NetworkSpec,
) -> Result<CollectiveRun<T>> {
    let (n, m, g) = (sim.n_ranks(), sim.group_size(), sim.n_groups());
    if g < 2 || m < 2 {
        return ring_all_gather(sim, shards, elem_bytes, net);
    }
    let c = check_equal_shards(shards, n)?;
    let mut tb = TraceBuilder::new(*sim, elem_bytes);

    // Phase 1: each group assembles its block of M shards.
    let mut full: Vec<Vec<T>> = vec![Vec::new(); n];
    for j in 0..g {
        let ring = group_ring(sim, j);
        let local: Vec<Vec<T>> = ring.iter().map(|&r| shards[r].clone()).collect();
        let blocks = ring_ag_instance(&mut tb, &ring, &local, 0);
        for (idx, &r) in ring.iter().enumerate() {
            let mut buf = vec![T::default(); n * c];
            buf[j * m * c..(j + 1) * m * c].copy_from_slice(&blocks[idx]);
            full[r] = buf;
        }
    }
    let phase1_end = tb.next_round();

    // Phase 2: leaders exchange whole group blocks.
    let leaders: Vec<usize> = (0..g).map(|j| sim.rank_at(j, 0)).collect();
    let leader_blocks: Vec<Vec<T>> = (0..g)
        .map(|j| full[leaders[j]][j * m * c..(j + 1) * m * c].to_vec())
        .collect();
    let gathered = ring_ag_instance(&mut tb, &leaders, &leader_blocks, phase1_end);
    for (j, &leader) in leaders.iter().enumerate() {
        full[leader].copy_from_slice(&gathered[j]);
    }
    let phase2_end = tb.next_round();

    // Phase 3: each leader relays the (g−1) foreign blocks down its group,
    // one hop per round.
    for step in 1..m {
        let round = phase2_end + step - 1;
        for j in 0..g {
            let src = sim.rank_at(j, step - 1);
            let dst = sim.rank_at(j, step);
            tb.send(round, src, dst, (g - 1) * m * c);
            let before = full[src][..j * m * c].to_vec();
            let after = full[src][(j + 1) * m * c..].to_vec();
            full[dst][..j * m * c].copy_from_slice(&before);
            full[dst][(j + 1) * m * c..].copy_from_slice(&after);
        }
    }
    let total = tb.next_round();

    let phases = vec![
        Phase {
            name: "intra-gather",
            rounds: phase1_end as u64,
        },
        Phase {
            name: "inter-gather",
            rounds: (phase2_end - phase1_end) as u64,
        },
        Phase {
            name: "intra-relay",
            rounds: (total - phase2_end) as u64,
        },
    ];
    Ok(CollectiveRun {
        outputs: full,
        trace: tb.finish(phases, net),
    })
}

/// Hierarchical overlapping ring all-gather. Phase A runs the intra-group
/// ring and the per-position inter-group rings in the same rounds, so every
/// rank's shard travels both directions at once; phase B is one intra-group
/// ring that spreads the (g−1) foreign position shards each rank collected.
pub fn ho_ring_all_gather<T: Element>(
    sim: &SimCluster,
    shards: &[Vec<T>],
    elem_bytes: u64,
    net: &NetworkSpec,
) -> Result<CollectiveRun<T>> {
    let (n, m, g) = (sim.n_ranks(), sim.group_size(), sim.n_groups());
    if g < 2 || m < 2 {
        return ring_all_gather(sim, shards, elem_bytes, net);
    }
    let c = check_equal_shards(shards, n)?;
    let mut tb = TraceBuilder::new(*sim, elem_bytes);

    // Phase A(i): intra-group all-gather of own-group shards.
    let mut group_blocks: Vec<Vec<T>> = vec![Vec::new(); n];
    for j in 0..g {
        let ring = group_ring(sim, j);
        let local: Vec<Vec<T>> = ring.iter().map(|&r| shards[r].clone()).collect();
        let blocks = ring_ag_instance(&mut tb, &ring, &local, 0);
        for (idx, &r) in ring.iter().enumerate() {
            group_blocks[r] = blocks[idx].clone();
        }
    }
    // Phase A(ii): per-position inter-group all-gather of own shards,
    // overlapping the same rounds.
    let mut position_blocks: Vec<Vec<T>> = vec![Vec::new(); n];
    for q in 0..m {
        let ring = position_ring(sim, q);
        let local: Vec<Vec<T>> = ring.iter().map(|&r| shards[r].clone()).collect();
        let blocks = ring_ag_instance(&mut tb, &ring, &local, 0);
        for (idx, &r) in ring.iter().enumerate() {
            position_blocks[r] = blocks[idx].clone();
        }
    }
    let phase_a = (m - 1).max(g - 1);
    debug_assert_eq!(tb.next_round(), phase_a);

    // Phase B: spread each rank's (g−1) foreign position shards inside the
    // group.
    let mut foreign_all: Vec<Vec<T>> = vec![Vec::new(); n];
    for j in 0..g {
        let ring = group_ring(sim, j);
        let contributions: Vec<Vec<T>> = ring
            .iter()
            .map(|&r| {
                let mut buf = Vec::with_capacity((g - 1) * c);
                for j2 in 0..g {
                    if j2 != j {
                        buf.extend_from_slice(&position_blocks[r][j2 * c..(j2 + 1) * c]);
                    }
                }
                buf
            })
            .collect();
        let spread = ring_ag_instance(&mut tb, &ring, &contributions, phase_a);
        for (idx, &r) in ring.iter().enumerate() {
            foreign_all[r] = spread[idx].clone();
        }
    }
    let total = tb.next_round();

    // Assemble rank-ordered outputs.
    let outputs: Vec<Vec<T>> = (0..n)
        .map(|r| {
            let j = sim.group_of(r);
            let mut buf = vec![T::default(); n * c];
            buf[j * m * c..(j + 1) * m * c].copy_from_slice(&group_blocks[r]);
            for j2 in 0..g {
                if j2 == j {
                    continue;
                }
                let idx = if j2 < j { j2 } else { j2 - 1 };
                for q2 in 0..m {
                    let src = &foreign_all[r][(q2 * (g - 1) + idx) * c..][..c];
                    let dst_rank = sim.rank_at(j2, q2);
                    buf[dst_rank * c..(dst_rank + 1) * c].copy_from_slice(src);
                }
            }
            buf
        })
        .collect();

    let phases = vec![
        Phase {
            name: "overlapped",
            rounds: phase_a as u64,
        },
        Phase {
            name: "intra-completion",
            rounds: (total - phase_a) as u64,
        },
    ];
    Ok(CollectiveRun {
        outputs,
        trace: tb.finish(phases, net),
    })
}

/// Flat ring all-reduce: reduce-scatter then all-gather over the world ring.
/// Every rank ends with the elementwise sum of all inputs.
pub fn ring_all_reduce<T: Element>(
    sim: &SimCluster,
    inputs: &[Vec<T>],
    elem_bytes: u64,
    net: &NetworkSpec,
) -> Result<CollectiveRun<T>> {
    let n = sim.n_ranks();
    if n < 2 {
        return Err(Error::BadSimulation(
            "all-reduce needs at least 2 ranks".into(),
        ));
    }
    let (padded, _c) = pad_inputs(inputs, n)?;
    let real_len = inputs[0].len();
    let mut tb = TraceBuilder::new(*sim, elem_bytes);
    let ring = world_ring(sim);
    let chunks = ring_rs_instance(&mut tb, &ring, padded, 0);
    let rs_rounds = tb.next_round();
    let gathered = ring_ag_instance(&mut tb, &ring, &chunks, rs_rounds);
    let total = tb.next_round();
    let outputs = gathered
        .into_iter()
        .map(|mut buf| {
            buf.truncate(real_len);
            buf
        })
        .collect();
    let phases = vec![
        Phase {
            name: "reduce-scatter",
            rounds: rs_rounds as u64,
        },
        Phase {
            name: "all-gather",
            rounds: (total - rs_rounds) as u64,
        },
    ];
    Ok(CollectiveRun {
        outputs,
        trace: tb.finish(phases, net),
    })
}

fn scope_rings(sim: &SimCluster, scope: CommScope) -> Result<Vec<Vec<usize>>> {
    match scope {
        CommScope::IntraGroup => Ok((0..sim.n_groups()).map(|j| group_ring(sim, j)).collect()),
        CommScope::InterGroup => Ok((0..sim.group_size())
            .map(|q| position_ring(sim, q))
            .collect()),
        CommScope::World => Err(Error::BadSimulation(
            "world scope has no grouped communicator; use the flat collectives".into(),
        )),
    }
}

/// All-gather inside every communicator of the scope at once (one ring per
/// group, or one per position), all instances sharing rounds. Each rank ends
/// with its ring's contributions concatenated in ring order.
pub fn grouped_all_gather<T: Element>(
    sim: &SimCluster,
    scope: CommScope,
    contributions: &[Vec<T>],
    elem_bytes: u64,
    net: &NetworkSpec,
) -> Result<CollectiveRun<T>> {
    let rings = scope_rings(sim, scope)?;
    check_equal_shards(contributions, sim.n_ranks())?;
    let mut tb = TraceBuilder::new(*sim, elem_bytes);
    let mut outputs: Vec<Vec<T>> = vec![Vec::new(); sim.n_ranks()];
    for ring in &rings {
        let local: Vec<Vec<T>> = ring.iter().map(|&r| contributions[r].clone()).collect();
        let gathered = ring_ag_instance(&mut tb, ring, &local, 0);
        for (idx, &r) in ring.iter().enumerate() {
            outputs[r] = gathered[idx].clone();
        }
    }
    let rounds = tb.next_round() as u64;
    Ok(CollectiveRun {
        outputs,
        trace: tb.finish(
            vec![Phase {
                name: "scoped",
                rounds,
            }],
            net,
        ),
    })
}

/// Reduce-scatter inside every communicator of the scope: each rank ends
/// with the chunk at its own ring position, summed over its ring.
pub fn grouped_reduce_scatter<T: Element>(
    sim: &SimCluster,
    scope: CommScope,
    inputs: &[Vec<T>],
    elem_bytes: u64,
    net: &NetworkSpec,
) -> Result<CollectiveRun<T>> {
    let rings = scope_rings(sim, scope)?;
    let p = rings[0].len();
    let (padded, _c) = pad_inputs(inputs, p)?;
    let mut tb = TraceBuilder::new(*sim, elem_bytes);
    let mut outputs: Vec<Vec<T>> = vec![Vec::new(); sim.n_ranks()];
    for ring in &rings {
        let local: Vec<Vec<T>> = ring.iter().map(|&r| padded[r].clone()).collect();
        let chunks = ring_rs_instance(&mut tb, ring, local, 0);
        for (idx, &r) in ring.iter().enumerate() {
            outputs[r] = chunks[idx].clone();
        }
    }
    let rounds = tb.next_round() as u64;
    Ok(CollectiveRun {
        outputs,
        trace: tb.finish(
            vec![Phase {
                name: "scoped",
                rounds,
            }],
            net,
        ),
    })
}

/// All-reduce inside every communicator of the scope (reduce-scatter then
/// all-gather per ring): each rank ends with its ring's elementwise sum.
pub fn grouped_all_reduce<T: Element>(
    sim: &SimCluster,
    scope: CommScope,
    inputs: &[Vec<T>],
    elem_bytes: u64,
    net: &NetworkSpec,
) -> Result<CollectiveRun<T>> {
    let rings = scope_rings(sim, scope)?;
    let p = rings[0].len();
    let (padded, _c) = pad_inputs(inputs, p)?;
    let real_len = inputs[0].len();
    let mut tb = TraceBuilder::new(*sim, elem_bytes);
    let mut chunks_by_rank: Vec<Vec<T>> = vec![Vec::new(); sim.n_ranks()];
    for ring in &rings {
        let local: Vec<Vec<T>> = ring.iter().map(|&r| padded[r].clone()).collect();
        let chunks = ring_rs_instance(&mut tb, ring, local, 0);
        for (idx, &r) in ring.iter().enumerate() {
            chunks_by_rank[r] = chunks[idx].clone();
        }
    }
    let rs_rounds = tb.next_round();
    let mut outputs: Vec<Vec<T>> = vec![Vec::new(); sim.n_ranks()];
    for ring in &rings {
        let local: Vec<Vec<T>> = ring.iter().map(|&r| chunks_by_rank[r].clone()).collect();
        let gathered = ring_ag_instance(&mut tb, ring, &local, rs_rounds);
        for (idx, &r) in ring.iter().enumerate() {
            let mut buf = gathered[idx].clone();
            buf.truncate(real_len);
            outputs[r] = buf;
        }
    }
    let total = tb.next_round();
    let phases = vec![
        Phase {
            name: "reduce-scatter",
            rounds: rs_rounds as u64,
        },
        Phase {
            name: "all-gather",
            rounds: (total - rs_rounds) as u64,
        },
    ];
    Ok(CollectiveRun {
        outputs,
        trace: tb.finish(phases, net),
    })
}

/// Communication dual of [`ho_ring_all_gather`]: first an intra-group
/// reduce-scatter of the foreign-group segments, then (overlapped) the
/// per-position inter-group reduce of those partials and the intra-group
/// reduce-scatter of the own-group block. Rank (j, q) ends with segment
/// j·M+q summed over all inputs.
pub fn ho_ring_reduce_scatter<T: Element>(
    sim: &SimCluster,
    inputs: &[Vec<T>],
    elem_bytes: u64,
    net: &NetworkSpec,
) -> Result<CollectiveRun<T>> {
    let (n, m, g) = (sim.n_ranks(), sim.group_size(), sim.n_groups());
    if g < 2 || m < 2 {
        return ring_reduce_scatter(sim, inputs, elem_bytes, net);
    }
    let (padded, c) = pad_inputs(inputs, n)?;
    let mut tb = TraceBuilder::new(*sim, elem_bytes);
    let seg = |rank: usize| rank * c..(rank + 1) * c;

    // Phase 1: within each group, reduce-scatter the foreign segments so
    // member q holds the group-partial of every foreign segment at its own
    // position.
    let mut foreign_partial: Vec<Vec<T>> = vec![Vec::new(); n];
    for j in 0..g {
        let ring = group_ring(sim, j);
        let virt: Vec<Vec<T>> = ring
            .iter()
            .map(|&r| {
                // Chunk q2 = the (g−1) foreign segments at position q2.
                let mut buf = Vec::with_capacity(m * (g - 1) * c);
                for q2 in 0..m {
                    for j2 in 0..g {
                        if j2 != j {
                            buf.extend_from_slice(&padded[r][seg(sim.rank_at(j2, q2))]);
                        }
                    }
                }
                buf
            })
            .collect();
        let chunks = ring_rs_instance(&mut tb, &ring, virt, 0);
        for (idx, &r) in ring.iter().enumerate() {
            foreign_partial[r] = chunks[idx].clone();
        }
    }
    let phase1 = tb.next_round();

    // Phase 2 (overlapped): inter-group rings reduce the foreign partials
    // home, while intra-group rings reduce-scatter the own-group block.
    let mut from_foreign: Vec<Vec<T>> = vec![Vec::new(); n];
    for q in 0..m {
        let ring = position_ring(sim, q);
        let virt: Vec<Vec<T>> = ring
            .iter()
            .map(|&r| {
                let j = sim.group_of(r);
                let mut buf = vec![T::default(); g * c];
                for j2 in 0..g {
                    if j2 == j {
                        continue;
                    }
                    let idx = if j2 < j { j2 } else { j2 - 1 };
                    buf[j2 * c..(j2 + 1) * c]
                        .copy_from_slice(&foreign_partial[r][idx * c..(idx + 1) * c]);
                }
                buf
            })
            .collect();
        let chunks = ring_rs_instance(&mut tb, &ring, virt, phase1);
        for (idx, &r) in ring.iter().enumerate() {
            from_foreign[r] = chunks[idx].clone();
        }
    }
    let mut own_partial: Vec<Vec<T>> = vec![Vec::new(); n];
    for j in 0..g {
        let ring = group_ring(sim, j);
        let virt: Vec<Vec<T>> = ring
            .iter()
            .map(|&r| {
                let mut buf = Vec::with_capacity(m * c);
                for q2 in 0..m {
                    buf.extend_from_slice(&padded[r][seg(sim.rank_at(j, q2))]);
                }
                buf
            })
            .collect();
        let chunks = ring_rs_instance(&mut tb, &ring, virt, phase1);
        for (idx, &r) in ring.iter().enumerate() {
            own_partial[r] = chunks[idx].clone();
        }
    }
    let total = tb.next_round();

    // Local combine: own-group partial plus the summed foreign partials.
    let outputs: Vec<Vec<T>> = (0..n)
        .map(|r| {
            let mut out = own_partial[r].clone();
            for (k, v) in out.iter_mut().enumerate() {
                *v += from_foreign[r][k];
            }
            out
        })
        .collect();

    let phases = vec![
        Phase {
            name: "intra-foreign-reduce",
            rounds: phase1 as u64,
        },
        Phase {
            name: "overlapped",
            rounds: (total - phase1) as u64,
        },
    ];
    Ok(CollectiveRun {
        outputs,
        trace: tb.finish(phases, net),
    })
}

// ── Plan execution ───────────────────────────────────────────────────────────

/// How world-scope collectives are realized when replaying a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorldTopology {
    /// Flat ring over all N ranks.
    Ring,
    /// Hierarchical overlapping ring.
    HoRing,
}

/// Measured execution of one plan op.
#[derive(Debug, Clone, Serialize)]
pub struct OpExecution {
    pub op: CommOp,
    pub rounds: u64,
    pub intra_bytes: u64,
    pub inter_bytes: u64,
    pub time_seconds: f64,
}

/// Aggregate result of replaying a whole plan.
#[derive(Debug, Clone, Serialize)]
pub struct PlanExecution {
    pub volumes: VolumeReport,
    pub total_rounds: u64,
    pub time_seconds: f64,
    pub ops: Vec<OpExecution>,
}

fn zero_bufs(count: usize, len: usize) -> Vec<Vec<i64>> {
    vec![vec![0i64; len]; count]
}

/// Execute one plan op on synthetic buffers and return the trace(s) of its
/// phases.
fn op_traces(
    sim: &SimCluster,
    op: &CommOp,
    topo: WorldTopology,
    net: &NetworkSpec,
) -> Result<Vec<SimTrace>> {
    let n = sim.n_ranks();
    let payload = op.payload_params as usize;
    match op.scope {
        CommScope::World => {
            let shard = payload / n;
            match (op.kind, topo) {
                (CollectiveKind::AllGather, WorldTopology::Ring) => Ok(vec![
                    ring_all_gather(sim, &zero_bufs(n, shard), 1, net)?.trace,
                ]),
                (CollectiveKind::AllGather, WorldTopology::HoRing) => Ok(vec![
                    ho_ring_all_gather(sim, &zero_bufs(n, shard), 1, net)?.trace,
                ]),
                (CollectiveKind::ReduceScatter, WorldTopology::Ring) => Ok(vec![
                    ring_reduce_scatter(sim, &zero_bufs(n, payload), 1, net)?.trace,
                ]),
                (CollectiveKind::ReduceScatter, WorldTopology::HoRing) => Ok(vec![
                    ho_ring_reduce_scatter(sim, &zero_bufs(n, payload), 1, net)?.trace,
                ]),
                (CollectiveKind::AllReduce, WorldTopology::Ring) => Ok(vec![
                    ring_all_reduce(sim, &zero_bufs(n, payload), 1, net)?.trace,
                ]),
                (CollectiveKind::AllReduce, WorldTopology::HoRing) => Ok(vec![
                    ho_ring_reduce_scatter(sim, &zero_bufs(n, payload), 1, net)?.trace,
                    ho_ring_all_gather(sim, &zero_bufs(n, payload / n), 1, net)?.trace,
                ]),
            }
        }
        scope => {
            let p = match scope {
                CommScope::IntraGroup => sim.group_size(),
                CommScope::InterGroup => sim.n_groups(),
                CommScope::World => unreachable!(),
            };
            let run = match op.kind {
                CollectiveKind::AllGather => {
                    grouped_all_gather(sim, scope, &zero_bufs(n, payload / p), 1, net)?
                }
                CollectiveKind::ReduceScatter => {
                    grouped_reduce_scatter(sim, scope, &zero_bufs(n, payload), 1, net)?
                }
                CollectiveKind::AllReduce => {
                    grouped_all_reduce(sim, scope, &zero_bufs(n, payload), 1, net)?
                }
            };
            Ok(vec![run.trace])
        }
    }
}

/// Replay every op of a plan on synthetic buffers (1 byte per parameter) and
/// return measured volumes for comparison with the analytic model.
pub fn execute_plan(
    cluster: &ClusterSpec,
    plan: &SchedulePlan,
    topo: WorldTopology,
    net: &NetworkSpec,
) -> Result<PlanExecution> {
    let sim = SimCluster::new(cluster);
    let mut volumes = VolumeReport::default();
    let mut total_rounds = 0u64;
    let mut time = 0.0;
    let mut op_execs = Vec::with_capacity(plan.ops.len());
    for op in &plan.ops {
        let traces = op_traces(&sim, op, topo, net)?;
        let mut exec = OpExecution {
            op: *op,
            rounds: 0,
            intra_bytes: 0,
            inter_bytes: 0,
            time_seconds: 0.0,
        };
        for trace in traces {
            exec.rounds += trace.total_rounds();
            exec.intra_bytes += trace.intra_bytes;
            exec.inter_bytes += trace.inter_bytes;
            exec.time_seconds += trace.simulated_time;
        }
        let cell = volumes.cell_mut(crate::schedule::cell_for_op(op));
        cell.intra += exec.intra_bytes as u128;
        cell.inter += exec.inter_bytes as u128;
        total_rounds += exec.rounds;
        time += exec.time_seconds;
        op_execs.push(exec);
    }
    Ok(PlanExecution {
        volumes,
        total_rounds,
        time_seconds: time,
        ops: op_execs,
    })
}

// ── Reference oracles ────────────────────────────────────────────────────────

/// Brute-force references the collectives are checked against: plain
/// concatenation and per-segment summation, no rings involved.
pub mod oracle {
    use super::Element;

    pub fn all_gather<T: Element>(shards: &[Vec<T>]) -> Vec<T> {
        let mut out = Vec::new();
        for s in shards {
            out.extend_from_slice(s);
        }
        out
    }

    /// Segment i of the elementwise sum of all inputs, for each of n ranks.
    pub fn reduce_scatter<T: Element>(inputs: &[Vec<T>], n: usize) -> Vec<Vec<T>> {
        let c = inputs[0].len().div_ceil(n).max(1);
        let mut sum = vec![T::default(); n * c];
        for input in inputs {
            for (k, v) in input.iter().enumerate() {
                sum[k] += *v;
            }
        }
        (0..n).map(|i| sum[i * c..(i + 1) * c].to_vec()).collect()
    }
}
