//! Closed-form cost models: per-GPU memory, per-stage communication volume,
//! the gradient-accumulation saving, and a two-tier time estimate.
//!
//! Volumes are cluster-wide totals in parameter-count units and stay in
//! exact integer arithmetic; bytes and per-GPU views are derived at
//! reporting time.

use serde::{Serialize, Serializer};

use crate::schedule;
use crate::types::{ClusterSpec, Error, ModelSpec, NetworkSpec, Result, Strategy};

// ── Methods ──────────────────────────────────────────────────────────────────

/// A named data-parallel method or a generic strategy code.
///
/// The named methods carry preset analytic volume rows; generic strategies
/// get their volumes by counting the generated schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ddp,
    Zero1,
    Zero2,
    Zero3,
    Mics,
    /// ZeRO-3 plus a secondary intra-group parameter shard used for the
    /// backward gather. Modeled without quantization.
    ZeroPp,
    ParoIgg,
    ParoIig,
    ParoNig,
    Custom(Strategy),
}

impl Method {
    /// The eight methods with published volume rows.
    pub const TABLE3: [Method; 8] = [
        Method::Zero1,
        Method::Zero2,
        Method::Zero3,
        Method::Mics,
        Method::ZeroPp,
        Method::ParoIgg,
        Method::ParoIig,
        Method::ParoNig,
    ];

    pub fn parse(name: &str) -> Result<Method> {
        let lower = name.to_ascii_lowercase().replace('_', "-");
        match lower.as_str() {
            "ddp" => Ok(Method::Ddp),
            "zero-1" | "zero1" => Ok(Method::Zero1),
            "zero-2" | "zero2" => Ok(Method::Zero2),
            "zero-3" | "zero3" => Ok(Method::Zero3),
            "mics" => Ok(Method::Mics),
            "zero++" | "zeropp" | "zero-pp" => Ok(Method::ZeroPp),
            "paro-igg" => Ok(Method::ParoIgg),
            "paro-iig" => Ok(Method::ParoIig),
            "paro-nig" => Ok(Method::ParoNig),
            _ => {
                if name.len() == 3 {
                    Strategy::parse(name).map(Method::Custom)
                } else {
                    Err(Error::UnknownMethod(name.to_string()))
                }
            }
        }
    }

    /// The (P, G, OS) residency this method trains with. ZeRO++ keeps the
    /// ZeRO-3 residency; its secondary parameter shard is extra.
    pub fn strategy(&self) -> Strategy {
        let code = match self {
            Method::Ddp => "NNN",
            Method::Zero1 => "NNG",
            Method::Zero2 => "NGG",
            Method::Zero3 | Method::ZeroPp => "GGG",
            Method::Mics => "III",
            Method::ParoIgg => "IGG",
            Method::ParoIig => "IIG",
            Method::ParoNig => "NIG",
            Method::Custom(s) => return *s,
        };
        Strategy::parse(code).expect("method codes are valid")
    }

    pub fn name(&self) -> String {
        match self {
            Method::Ddp => "DDP".into(),
            Method::Zero1 => "ZeRO-1".into(),
            Method::Zero2 => "ZeRO-2".into(),
            Method::Zero3 => "ZeRO-3".into(),
            Method::Mics => "MiCS".into(),
            Method::ZeroPp => "ZeRO++".into(),
            Method::ParoIgg => "PaRO-IGG".into(),
            Method::ParoIig => "PaRO-IIG".into(),
            Method::ParoNig => "PaRO-NIG".into(),
            Method::Custom(s) => s.code(),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

// ── Memory model ─────────────────────────────────────────────────────────────

/// Per-GPU bytes for each model-state component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MemoryReport {
    pub p_bytes: f64,
    pub g_bytes: f64,
    pub os_bytes: f64,
    pub total_bytes: f64,
}

impl MemoryReport {
    fn new(p_bytes: f64, g_bytes: f64, os_bytes: f64) -> Self {
        MemoryReport {
            p_bytes,
            g_bytes,
            os_bytes,
            total_bytes: p_bytes + g_bytes + os_bytes,
        }
    }
}

/// Per-GPU memory: P = param_bytes·Ψ / div(p), G = grad_bytes·Ψ′ / div(g),
/// OS = K·Ψ′ / div(os), with divisors 1 / M / N per shard level. ZeRO++
/// additionally holds a secondary intra-group parameter replica.
pub fn memory(method: Method, cluster: &ClusterSpec, model: &ModelSpec) -> MemoryReport {
    let s = method.strategy();
    let psi = model.total_params() as f64;
    let psi_t = model.trainable_params() as f64;
    let mut p = model.param_bytes() as f64 * psi / s.p.divisor(cluster) as f64;
    if method == Method::ZeroPp {
        p += model.param_bytes() as f64 * psi / cluster.group_size() as f64;
    }
    let g = model.grad_bytes() as f64 * psi_t / s.g.divisor(cluster) as f64;
    let os = model.optim_factor() * psi_t / s.os.divisor(cluster) as f64;
    MemoryReport::new(p, g, os)
}

// ── Volume model ─────────────────────────────────────────────────────────────

fn ser_u128<S: Serializer>(v: &u128, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u64(u64::try_from(*v).expect("volume exceeds u64 range"))
}

/// Intra/inter split of one table cell, cluster-wide, in parameter units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CellVolume {
    #[serde(serialize_with = "ser_u128")]
    pub intra: u128,
    #[serde(serialize_with = "ser_u128")]
    pub inter: u128,
}

impl CellVolume {
    pub fn new(intra: u128, inter: u128) -> Self {
        CellVolume { intra, inter }
    }

    pub fn total(&self) -> u128 {
        self.intra + self.inter
    }

    fn scaled(&self, k: u128) -> Self {
        CellVolume {
            intra: self.intra * k,
            inter: self.inter * k,
        }
    }

    fn plus(&self, other: CellVolume) -> Self {
        CellVolume {
            intra: self.intra + other.intra,
            inter: self.inter + other.inter,
        }
    }
}

/// Names for the five volume-table columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VolumeCell {
    FwdAllGatherP,
    BwdAllGatherP,
    BwdReduceScatterG,
    UpdGradSync,
    UpdAllGatherP,
}

impl VolumeCell {
    pub const ALL: [VolumeCell; 5] = [
        VolumeCell::FwdAllGatherP,
        VolumeCell::BwdAllGatherP,
        VolumeCell::BwdReduceScatterG,
        VolumeCell::UpdGradSync,
        VolumeCell::UpdAllGatherP,
    ];

    pub fn label(self) -> &'static str {
        match self {
            VolumeCell::FwdAllGatherP => "forward A-G(P)",
            VolumeCell::BwdAllGatherP => "backward A-G(P)",
            VolumeCell::BwdReduceScatterG => "backward R-S(G)",
            VolumeCell::UpdGradSync => "update R-S/A-R(G)",
            VolumeCell::UpdAllGatherP => "update A-G(P)",
        }
    }

    /// Whether the cell moves parameters or gradients (fixes the byte width).
    pub fn moves_params(self) -> bool {
        !matches!(
            self,
            VolumeCell::BwdReduceScatterG | VolumeCell::UpdGradSync
        )
    }
}

/// Per-stage, per-scope communication volume of one mini-batch iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct VolumeReport {
    pub fwd_allgather_p: CellVolume,
    pub bwd_allgather_p: CellVolume,
    pub bwd_reducescatter_g: CellVolume,
    pub upd_gradsync: CellVolume,
    pub upd_allgather_p: CellVolume,
}

impl VolumeReport {
    pub fn cell(&self, which: VolumeCell) -> CellVolume {
        match which {
            VolumeCell::FwdAllGatherP => self.fwd_allgather_p,
            VolumeCell::BwdAllGatherP => self.bwd_allgather_p,
            VolumeCell::BwdReduceScatterG => self.bwd_reducescatter_g,
            VolumeCell::UpdGradSync => self.upd_gradsync,
            VolumeCell::UpdAllGatherP => self.upd_allgather_p,
        }
    }

    pub fn cell_mut(&mut self, which: VolumeCell) -> &mut CellVolume {
        match which {
            VolumeCell::FwdAllGatherP => &mut self.fwd_allgather_p,
            VolumeCell::BwdAllGatherP => &mut self.bwd_allgather_p,
            VolumeCell::BwdReduceScatterG => &mut self.bwd_reducescatter_g,
            VolumeCell::UpdGradSync => &mut self.upd_gradsync,
            VolumeCell::UpdAllGatherP => &mut self.upd_allgather_p,
        }
    }

    pub fn forward(&self) -> CellVolume {
        self.fwd_allgather_p
    }

    pub fn backward(&self) -> CellVolume {
        self.bwd_allgather_p.plus(self.bwd_reducescatter_g)
    }

    pub fn update(&self) -> CellVolume {
        self.upd_gradsync.plus(self.upd_allgather_p)
    }

    pub fn total_intra(&self) -> u128 {
        VolumeCell::ALL.iter().map(|c| self.cell(*c).intra).sum()
    }

    pub fn total_inter(&self) -> u128 {
        VolumeCell::ALL.iter().map(|c| self.cell(*c).inter).sum()
    }

    pub fn total(&self) -> u128 {
        self.total_intra() + self.total_inter()
    }

    /// Per-GPU view, derived by dividing cluster totals by N.
    pub fn per_gpu(&self, cluster: &ClusterSpec) -> f64 {
        self.total() as f64 / cluster.n_gpus() as f64
    }
}

/// Parameter count rounded up so every per-layer shard divides evenly at
/// world scope: the accounting grain is N·layers. Reports surface the padded
/// value whenever it differs from the model's own.
pub fn padded_total_params(cluster: &ClusterSpec, model: &ModelSpec) -> u64 {
    let grain = cluster.n_gpus() * model.layers();
    model.total_params().div_ceil(grain) * grain
}

/// Building blocks for the analytic rows. All quantities are cluster-wide
/// totals in parameter units for one occurrence of the collective, using
/// ring accounting: each participant of a P-rank ring collective over a
/// logical payload D sends D·(P−1)/P.
struct Blocks {
    n: u128,
    m: u128,
    g: u128,
    s: u128,
    psi: u128,
}

impl Blocks {
    fn new(cluster: &ClusterSpec, model: &ModelSpec) -> Self {
        Blocks {
            n: cluster.n_gpus() as u128,
            m: cluster.group_size() as u128,
            g: cluster.n_groups() as u128,
            s: cluster.accum_steps() as u128,
            psi: padded_total_params(cluster, model) as u128,
        }
    }

    /// Flat world collective over the full model: total D·(N−1), with the
    /// g/N link fraction attributed to inter-group traffic. A flat ring over
    /// a single group crosses no group boundary, so g=1 attributes nothing.
    fn world(&self, factor: u128) -> CellVolume {
        let total = factor * self.psi * (self.n - 1);
        let inter = if self.g > 1 {
            factor * (self.psi / self.n) * (self.n - 1) * self.g
        } else {
            0
        };
        CellVolume::new(total - inter, inter)
    }

    /// Intra-group collective touching the full model in every group.
    fn intra(&self) -> CellVolume {
        CellVolume::new(self.g * self.psi * (self.m - 1), 0)
    }

    /// Inter-group ring over the per-group shard (payload Ψ/M per position).
    fn inter(&self, factor: u128) -> CellVolume {
        CellVolume::new(0, factor * self.psi * (self.g - 1))
    }
}

/// Analytic per-stage volumes for one mini-batch. The named rows are preset;
/// generic strategies are counted from the generated schedule (the two paths
/// agree exactly for the named methods).
pub fn comm_volume(
    method: Method,
    cluster: &ClusterSpec,
    model: &ModelSpec,
) -> Result<VolumeReport> {
    let b = Blocks::new(cluster, model);
    let s = b.s;
    let mut r = VolumeReport::default();
    match method {
        Method::Ddp => {
            r.upd_gradsync = b.world(2);
        }
        Method::Zero1 => {
            r.upd_gradsync = b.world(2);
            r.upd_allgather_p = b.world(1);
        }
        Method::Zero2 => {
            r.bwd_reducescatter_g = b.world(1).scaled(s);
            r.upd_allgather_p = b.world(1);
        }
        Method::Zero3 => {
            r.fwd_allgather_p = b.world(1).scaled(s);
            r.bwd_allgather_p = b.world(1).scaled(s);
            r.bwd_reducescatter_g = b.world(1).scaled(s);
        }
        Method::Mics => {
            r.fwd_allgather_p = b.intra().scaled(s);
            r.bwd_allgather_p = b.intra().scaled(s);
            r.bwd_reducescatter_g = b.intra().scaled(s);
            r.upd_gradsync = b.inter(2);
        }
        Method::ZeroPp => {
            r.fwd_allgather_p = b.world(1).scaled(s);
            r.bwd_allgather_p = b.intra().scaled(s);
            r.bwd_reducescatter_g = b.world(1).scaled(s);
        }
        Method::ParoIgg => {
            r.fwd_allgather_p = b.intra().scaled(s);
            r.bwd_allgather_p = b.intra().scaled(s);
            r.bwd_reducescatter_g = b.intra().plus(b.inter(1)).scaled(s);
            r.upd_allgather_p = b.inter(1);
        }
        Method::ParoIig => {
            r.fwd_allgather_p = b.intra().scaled(s);
            r.bwd_allgather_p = b.intra().scaled(s);
            r.bwd_reducescatter_g = b.intra().scaled(s);
            r.upd_gradsync = b.inter(1);
            r.upd_allgather_p = b.inter(1);
        }
        Method::ParoNig => {
            r.bwd_reducescatter_g = b.intra().scaled(s);
            r.upd_gradsync = b.inter(1);
            r.upd_allgather_p = b.inter(1).plus(b.intra());
        }
        Method::Custom(strategy) => {
            let plan = schedule::generate(Method::Custom(strategy), cluster, model)?;
            return Ok(schedule::count_volumes(&plan));
        }
    }
    Ok(r)
}

/// The published volume rows, transcribed literally (including the cells the
/// implemented model deviates from). Only defined for the eight named rows.
pub fn literal_table_volume(
    method: Method,
    cluster: &ClusterSpec,
    model: &ModelSpec,
) -> Option<VolumeReport> {
    let b = Blocks::new(cluster, model);
    let (n, m, g, s, psi) = (b.n, b.m, b.g, b.s, b.psi);
    // Published cells split flat-world collectives into g participants'
    // worth of inter traffic and (N−g) of intra.
    let world_split = |factor: u128, steps: u128| {
        let per = factor * steps * (psi / n) * (n - 1);
        CellVolume::new((n - g) * per, g * per)
    };
    let intra_full = |steps: u128| CellVolume::new(n * steps * (psi / m) * (m - 1), 0);
    let inter_shard = |steps: u128| CellVolume::new(0, n * steps * (psi / n) * (g - 1));

    let mut r = VolumeReport::default();
    match method {
        Method::Zero1 => {
            r.upd_gradsync = world_split(2, 1);
            r.upd_allgather_p = world_split(1, 1);
        }
        Method::Zero2 => {
            r.bwd_reducescatter_g = world_split(1, s);
            r.upd_allgather_p = world_split(1, 1);
        }
        Method::Zero3 => {
            r.fwd_allgather_p = world_split(1, s);
            r.bwd_allgather_p = world_split(1, s);
            r.bwd_reducescatter_g = world_split(1, s);
        }
        Method::Mics => {
            r.fwd_allgather_p = intra_full(s);
            r.bwd_allgather_p = intra_full(s);
            r.bwd_reducescatter_g = intra_full(s);
            // Published as an unchunked all-reduce with the g/(N) split.
            let per = 2 * (psi / m) * (g - 1);
            r.upd_gradsync = CellVolume::new((n - g) * per, g * per);
        }
        Method::ZeroPp => {
            r.fwd_allgather_p = world_split(1, s);
            r.bwd_allgather_p = intra_full(s);
            r.bwd_reducescatter_g = world_split(1, s);
        }
        Method::ParoIgg => {
            r.fwd_allgather_p = intra_full(s);
            r.bwd_allgather_p = intra_full(s);
            r.bwd_reducescatter_g = intra_full(s).plus(inter_shard(s));
            // Published with an s factor although the update runs once.
            r.upd_allgather_p = inter_shard(s);
        }
        Method::ParoIig => {
            r.fwd_allgather_p = intra_full(s);
            r.bwd_allgather_p = intra_full(s);
            r.bwd_reducescatter_g = intra_full(s);
            r.upd_gradsync = inter_shard(1);
            r.upd_allgather_p = inter_shard(1);
        }
        Method::ParoNig => {
            // Published without the per-micro-batch s factor.
            r.bwd_reducescatter_g = intra_full(1);
            r.upd_gradsync = inter_shard(1);
            r.upd_allgather_p = inter_shard(1).plus(intra_full(1));
        }
        _ => return None,
    }
    Some(r)
}

/// One cell where the implemented model differs from the published row.
#[derive(Debug, Clone, Serialize)]
pub struct Deviation {
    pub method: Method,
    pub cell: VolumeCell,
    pub implemented: CellVolume,
    pub literal: CellVolume,
    pub why: &'static str,
}

/// Compare the implemented rows against the published ones, cell by cell.
/// The differences are flagged here and in reports rather than absorbed.
pub fn table_deviations(cluster: &ClusterSpec, model: &ModelSpec) -> Vec<Deviation> {
    let mut out = Vec::new();
    for method in Method::TABLE3 {
        let implemented = comm_volume(method, cluster, model).expect("preset rows cannot fail");
        let literal = literal_table_volume(method, cluster, model).expect("named row");
        for cell in VolumeCell::ALL {
            let a = implemented.cell(cell);
            let b = literal.cell(cell);
            if a != b {
                let why = match (method, cell) {
                    (Method::ParoIgg, VolumeCell::UpdAllGatherP) => {
                        "published cell carries an s factor; the restore all-gather runs once per mini-batch"
                    }
                    (Method::ParoNig, VolumeCell::BwdReduceScatterG) => {
                        "published cell omits the s factor; the intra-group reduce-scatter runs every micro-batch"
                    }
                    (Method::Mics, VolumeCell::UpdGradSync) => {
                        "published cell counts the inter-group all-reduce unchunked with a flat-world link split; ring accounting sends 1/g of that per rank, all of it inter-group"
                    }
                    _ => "implemented model differs from the published cell",
                };
                out.push(Deviation {
                    method,
                    cell,
                    implemented: a,
                    literal: b,
                    why,
                });
            }
        }
    }
    out
}

// ── Gradient-accumulation saving ─────────────────────────────────────────────

/// Per-GPU parameter volume saved by splitting the gradient sync into
/// per-micro-batch intra-group reduce-scatters plus one inter-group
/// reduce-scatter: Ψ·(s−1)·(g−1)/N.
pub fn accumulation_savings(cluster: &ClusterSpec, model: &ModelSpec) -> u128 {
    let n = cluster.n_gpus() as u128;
    let g = cluster.n_groups() as u128;
    let s = cluster.accum_steps() as u128;
    let psi = (model.total_params().div_ceil(cluster.n_gpus()) * cluster.n_gpus()) as u128;
    (psi / n) * (s - 1) * (g - 1)
}

// ── Time model ───────────────────────────────────────────────────────────────

/// Link-level cost of one synchronous communication round: the heaviest
/// intra-group and inter-group per-link loads, in bytes.
#[derive(Debug, Clone, Copy, Default)]
pub struct RoundCost {
    pub max_intra_link_bytes: u64,
    pub max_inter_link_bytes: u64,
}

/// Time for a sequence of synchronous rounds. Each round costs per-class
/// latency plus its heaviest link transfer; classes that run in the same
/// round overlap, so the round takes the slower of the two.
pub fn estimate_time_rounds(rounds: &[RoundCost], net: &NetworkSpec) -> f64 {
    rounds
        .iter()
        .map(|r| {
            let intra = if r.max_intra_link_bytes > 0 {
                net.intra_latency + r.max_intra_link_bytes as f64 / net.intra_bw
            } else {
                0.0
            };
            let inter = if r.max_inter_link_bytes > 0 {
                net.inter_latency + r.max_inter_link_bytes as f64 / net.inter_bw
            } else {
                0.0
            };
            intra.max(inter)
        })
        .sum()
}

/// Closed-form all-gather times for the three topologies, gathering
/// `total_bytes` over N ranks in groups of M. These reproduce exactly what
/// the round-based estimate yields on the simulated traces.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TopologyTimes {
    pub ring: f64,
    pub h_ring: f64,
    pub ho_ring: f64,
}

pub fn all_gather_times(
    n: u64,
    m: u64,
    total_bytes: u64,
    net: &NetworkSpec,
) -> Result<TopologyTimes> {
    if n < 2 || m == 0 || n % m != 0 {
        return Err(Error::BadSimulation(format!(
            "need n >= 2 and m dividing n, got n={n}, m={m}"
        )));
    }
    let g = n / m;
    let shard = total_bytes.div_ceil(n);
    let intra_round = |bytes: u64| net.intra_latency + bytes as f64 / net.intra_bw;
    let inter_round = |bytes: u64| net.inter_latency + bytes as f64 / net.inter_bw;
    let mixed_round = |bytes: u64| intra_round(bytes).max(inter_round(bytes));
    // Accumulated round by round, in the same order the trace-based
    // estimate sums, so the two agree bitwise.
    let repeat = |rounds: u64, per_round: f64| (0..rounds).fold(0.0, |t, _| t + per_round);

    let ring = if g == 1 {
        repeat(n - 1, intra_round(shard))
    } else if m == 1 {
        // One-GPU groups: every ring link crosses a group boundary.
        repeat(n - 1, inter_round(shard))
    } else {
        repeat(n - 1, mixed_round(shard))
    };

    let h_ring = if g >= 2 && m >= 2 {
        let mut t = repeat(m - 1, intra_round(shard));
        t = (0..g - 1).fold(t, |t, _| t + inter_round(m * shard));
        (0..m - 1).fold(t, |t, _| t + intra_round((g - 1) * m * shard))
    } else if g >= 2 {
        repeat(g - 1, inter_round(shard))
    } else {
        repeat(m - 1, intra_round(shard))
    };

    let ho_ring = if g >= 2 && m >= 2 {
        let mut t = 0.0;
        for round in 1..=(m - 1).max(g - 1) {
            let intra_active = round < m;
            let inter_active = round < g;
            t += match (intra_active, inter_active) {
                (true, true) => mixed_round(shard),
                (true, false) => intra_round(shard),
                (false, true) => inter_round(shard),
                (false, false) => 0.0,
            };
        }
        (0..m - 1).fold(t, |t, _| t + intra_round((g - 1) * shard))
    } else {
        ring
    };

    Ok(TopologyTimes {
        ring,
        h_ring,
        ho_ring,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ShardLevel;

    fn fig5() -> (ClusterSpec, ModelSpec) {
        let cluster = ClusterSpec::new(64, 8, 8).unwrap();
        let model = ModelSpec::full_training(7_000_000_000, 8).unwrap();
        (cluster, model)
    }

    #[test]
    fn memory_zero3_fig5() {
        let (cluster, model) = fig5();
        let r = memory(Method::Zero3, &cluster, &model);
        assert_eq!(r.p_bytes, 218_750_000.0);
        assert_eq!(r.g_bytes, 218_750_000.0);
        assert_eq!(r.os_bytes, 1_312_500_000.0);
    }

    #[test]
    fn memory_mics_fig5() {
        let (cluster, model) = fig5();
        let r = memory(Method::Mics, &cluster, &model);
        assert_eq!(r.p_bytes, 1_750_000_000.0);
        assert_eq!(r.g_bytes, 1_750_000_000.0);
        assert_eq!(r.os_bytes, 10_500_000_000.0);
    }

    #[test]
    fn memory_ddp_is_unsharded() {
        let (cluster, model) = fig5();
        let r = memory(Method::Ddp, &cluster, &model);
        assert_eq!(r.p_bytes, 14_000_000_000.0);
        assert_eq!(r.g_bytes, 14_000_000_000.0);
        assert_eq!(r.os_bytes, 84_000_000_000.0);
    }

    #[test]
    fn memory_nig_fig5() {
        let (cluster, model) = fig5();
        let r = memory(Method::ParoNig, &cluster, &model);
        assert_eq!(r.p_bytes, 14e9);
        assert_eq!(r.g_bytes, 1.75e9);
        assert_eq!(r.os_bytes, 1.3125e9);
    }

    #[test]
    fn memory_zeropp_has_secondary_replica() {
        let (cluster, model) = fig5();
        let r = memory(Method::ZeroPp, &cluster, &model);
        assert_eq!(r.p_bytes, 218_750_000.0 + 1_750_000_000.0);
        assert_eq!(r.g_bytes, 218_750_000.0);
    }

    #[test]
    fn memory_monotone_in_shard_level() {
        let cluster = ClusterSpec::new(16, 4, 2).unwrap();
        let model = ModelSpec::full_training(1_000_000, 4).unwrap();
        let levels = ShardLevel::ALL;
        for a in 0..3 {
            for b in (a + 1)..3 {
                let coarse = Method::Custom(Strategy::new(levels[a], levels[a], levels[b]));
                let fine = Method::Custom(Strategy::new(levels[b], levels[b], levels[b]));
                let mc = memory(coarse, &cluster, &model);
                let mf = memory(fine, &cluster, &model);
                assert!(mf.p_bytes <= mc.p_bytes);
                assert!(mf.g_bytes <= mc.g_bytes);
                assert!(mf.os_bytes <= mc.os_bytes);
            }
        }
    }

    #[test]
    fn volume_zero3_forward_fig5() {
        let (cluster, model) = fig5();
        let r = comm_volume(Method::Zero3, &cluster, &model).unwrap();
        assert_eq!(r.fwd_allgather_p.intra, 3_087_000_000_000);
        assert_eq!(r.fwd_allgather_p.inter, 441_000_000_000);
    }

    #[test]
    fn volume_iig_update_fig5() {
        let (cluster, model) = fig5();
        let r = comm_volume(Method::ParoIig, &cluster, &model).unwrap();
        assert_eq!(r.upd_gradsync.inter, 49_000_000_000);
        assert_eq!(r.upd_allgather_p.inter, 49_000_000_000);
        assert_eq!(r.upd_gradsync.intra, 0);
    }

    #[test]
    fn volume_zero1_single_step_allreduce() {
        let cluster = ClusterSpec::new(64, 8, 1).unwrap();
        let model = ModelSpec::full_training(7_000_000_000, 8).unwrap();
        let r = comm_volume(Method::Zero1, &cluster, &model).unwrap();
        assert_eq!(r.backward().total(), 0);
        let psi = 7_000_000_000u128;
        assert_eq!(r.upd_gradsync.total(), 2 * psi * 63);
        assert_eq!(r.upd_gradsync.inter, 2 * (psi / 64) * 63 * 8);
    }

    #[test]
    fn volume_nig_forward_is_zero() {
        let (cluster, model) = fig5();
        let r = comm_volume(Method::ParoNig, &cluster, &model).unwrap();
        assert_eq!(r.fwd_allgather_p.total(), 0);
        assert_eq!(r.bwd_allgather_p.total(), 0);
    }

    #[test]
    fn volume_monotone_in_shard_level() {
        // Finer sharding of any single component never lowers total volume,
        // across every transition whose endpoints both keep the optimizer
        // state at least as fine as parameters and gradients. (Coarser-OS
        // strategies are exactly the ones pruned for wasting memory without
        // saving communication, so the ordering is not defined there.)
        let cluster = ClusterSpec::new(16, 4, 4).unwrap();
        let model = ModelSpec::full_training(16 * 4 * 100, 4).unwrap();
        let total = |s: Strategy| {
            comm_volume(Method::Custom(s), &cluster, &model)
                .unwrap()
                .total()
        };
        let bump = |level: ShardLevel| match level {
            ShardLevel::NoShard => Some(ShardLevel::IntraGroup),
            ShardLevel::IntraGroup => Some(ShardLevel::Global),
            ShardLevel::Global => None,
        };
        let mut transitions = 0;
        for base in crate::strategy::principle1_set() {
            let finer_options = [
                bump(base.p).map(|p| Strategy::new(p, base.g, base.os)),
                bump(base.g).map(|g| Strategy::new(base.p, g, base.os)),
                bump(base.os).map(|os| Strategy::new(base.p, base.g, os)),
            ];
            for finer in finer_options.into_iter().flatten() {
                if !crate::strategy::passes_principle1(&finer) {
                    continue;
                }
                assert!(
                    total(base) <= total(finer),
                    "sharding {} finer to {} lowered volume: {} -> {}",
                    base,
                    finer,
                    total(base),
                    total(finer)
                );
                transitions += 1;
            }
        }
        assert!(transitions >= 20, "only {transitions} transitions checked");
    }

    #[test]
    fn savings_fig5_value() {
        let (cluster, model) = fig5();
        assert_eq!(accumulation_savings(&cluster, &model), 5_359_375_000);
    }

    #[test]
    fn savings_vanish_without_accumulation_or_grouping() {
        let model = ModelSpec::full_training(7_000_000_000, 8).unwrap();
        let s1 = ClusterSpec::new(64, 8, 1).unwrap();
        assert_eq!(accumulation_savings(&s1, &model), 0);
        let g1 = ClusterSpec::new(64, 64, 8).unwrap();
        assert_eq!(accumulation_savings(&g1, &model), 0);
    }

    #[test]
    fn savings_identity_symbolic() {
        // Per-GPU: s·(Ψ/N)·(N−1) − (s·(Ψ/M)·(M−1) + (Ψ/N)·(g−1)) = Δ.
        for (n, m, s, psi) in [(64u64, 8u64, 8u64, 7_000_000_000u64), (8, 2, 4, 64_000)] {
            let cluster = ClusterSpec::new(n, m, s).unwrap();
            let model = ModelSpec::full_training(psi, 1).unwrap();
            let g = n / m;
            let global = s as u128 * (psi as u128 / n as u128) * (n as u128 - 1);
            let two_step = s as u128 * (psi as u128 / m as u128) * (m as u128 - 1)
                + (psi as u128 / n as u128) * (g as u128 - 1);
            assert_eq!(global - two_step, accumulation_savings(&cluster, &model));
        }
    }

    #[test]
    fn deviations_are_exactly_the_three_documented_cells() {
        let (cluster, model) = fig5();
        let devs = table_deviations(&cluster, &model);
        let keys: Vec<(String, VolumeCell)> =
            devs.iter().map(|d| (d.method.name(), d.cell)).collect();
        assert_eq!(
            keys,
            vec![
                ("MiCS".to_string(), VolumeCell::UpdGradSync),
                ("PaRO-IGG".to_string(), VolumeCell::UpdAllGatherP),
                ("PaRO-NIG".to_string(), VolumeCell::BwdReduceScatterG),
            ]
        );
    }

    #[test]
    fn igg_deviation_is_the_s_factor() {
        let (cluster, model) = fig5();
        let devs = table_deviations(&cluster, &model);
        let igg = devs.iter().find(|d| d.method == Method::ParoIgg).unwrap();
        assert_eq!(igg.literal.inter, igg.implemented.inter * 8);
    }

    #[test]
    fn zero_volume_takes_zero_time() {
        assert_eq!(estimate_time_rounds(&[], &NetworkSpec::default()), 0.0);
    }

    #[test]
    fn single_intra_round_arithmetic() {
        let net = NetworkSpec::new(600e9, 100e9, 0.0, 0.0).unwrap();
        let rounds = [RoundCost {
            max_intra_link_bytes: 1_000_000_000,
            max_inter_link_bytes: 0,
        }];
        let t = estimate_time_rounds(&rounds, &net);
        assert!((t - 1.0 / 600.0).abs() < 1e-15);
    }

    #[test]
    fn topology_times_strictly_ordered_at_scale() {
        let net = NetworkSpec::default();
        let t = all_gather_times(128, 8, 1_000_000_000, &net).unwrap();
        assert!(
            t.ho_ring < t.h_ring,
            "HO-Ring {} !< H-Ring {}",
            t.ho_ring,
            t.h_ring
        );
        assert!(t.h_ring < t.ring, "H-Ring {} !< Ring {}", t.h_ring, t.ring);
    }

    #[test]
    fn closed_form_times_match_traces_at_degenerate_groupings() {
        // With one-GPU groups every link is inter; with one group every
        // link is intra. Use a profile where the intra tier is slower so a
        // mixed-round shortcut would get these wrong.
        let odd_net = NetworkSpec::new(50e9, 200e9, 1e-3, 1e-6).unwrap();
        let t = all_gather_times(8, 1, 8 * 64, &odd_net).unwrap();
        let expect_inter = 7.0 * (1e-6 + 64.0 / 200e9);
        assert!((t.ring - expect_inter).abs() < 1e-12);
        let t1 = all_gather_times(8, 8, 8 * 64, &odd_net).unwrap();
        let expect_intra = 7.0 * (1e-3 + 64.0 / 50e9);
        assert!((t1.ring - expect_intra).abs() < 1e-12);
    }

    #[test]
    fn time_monotone_in_inter_bandwidth() {
        let slow = NetworkSpec::new(600e9, 50e9, 20e-6, 200e-6).unwrap();
        let fast = NetworkSpec::new(600e9, 100e9, 20e-6, 200e-6).unwrap();
        let a = all_gather_times(128, 8, 1_000_000_000, &slow).unwrap();
        let b = all_gather_times(128, 8, 1_000_000_000, &fast).unwrap();
        assert!(a.ring >= b.ring);
        assert!(a.h_ring >= b.h_ring);
        assert!(a.ho_ring >= b.ho_ring);
    }

    #[test]
    fn method_parse_round_trips() {
        for m in Method::TABLE3 {
            assert_eq!(Method::parse(&m.name()).unwrap(), m);
        }
        assert_eq!(Method::parse("ddp").unwrap(), Method::Ddp);
        assert_eq!(
            Method::parse("GIG").unwrap(),
            Method::Custom(Strategy::parse("GIG").unwrap())
        );
        assert!(Method::parse("zero-9").is_err());
    }
}
