//! Report builders shared by the CLI and the C API: every run produces a
//! machine-readable document that embeds its own configuration.

use serde::Serialize;
use serde_json::{json, Value};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::costmodel::{
    self, accumulation_savings, all_gather_times, comm_volume, literal_table_volume, memory,
    padded_total_params, table_deviations, Method, VolumeCell,
};
use crate::netsim::{self, oracle, SimCluster};
use crate::schedule;
use crate::strategy::{recommend, Recommendation};
use crate::trainsim::{self, VerifyResult};
use crate::types::{ClusterSpec, Error, ModelSpec, NetworkSpec, Regime, Result, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
    Table,
}

impl OutputFormat {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            "table" => Ok(OutputFormat::Table),
            other => Err(Error::Unsupported(format!(
                "unknown output format '{other}'"
            ))),
        }
    }
}

fn config_value(cluster: &ClusterSpec, model: &ModelSpec, net: &NetworkSpec) -> Value {
    json!({
        "cluster": cluster,
        "model": model,
        "network": net,
    })
}

// ── plan ─────────────────────────────────────────────────────────────────────

/// One strategy's row in the planner output.
#[derive(Debug, Clone, Serialize)]
pub struct PlanRow {
    pub code: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alias: Option<&'static str>,
    pub recommended: bool,
    pub passes_p1: bool,
    pub passes_p2: bool,
    pub passes_p3: bool,
    pub memory_bytes: f64,
    pub intra_params: u64,
    pub inter_params: u64,
    pub est_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn plan_row(
    rec: &Recommendation,
    cluster: &ClusterSpec,
    model: &ModelSpec,
    net: &NetworkSpec,
) -> Result<PlanRow> {
    let method = Method::Custom(rec.strategy);
    let mem = memory(method, cluster, model);
    let volumes = comm_volume(method, cluster, model)?;
    let plan = schedule::generate(method, cluster, model)?;
    Ok(PlanRow {
        code: rec.strategy.code(),
        alias: rec.strategy.named_alias(),
        recommended: rec.recommended,
        passes_p1: rec.passes_p1,
        passes_p2: rec.passes_p2,
        passes_p3: rec.passes_p3,
        memory_bytes: mem.total_bytes,
        intra_params: u64::try_from(volumes.total_intra()).expect("volume fits u64"),
        inter_params: u64::try_from(volumes.total_inter()).expect("volume fits u64"),
        est_time_s: schedule::plan_time(&plan, model, net),
        note: rec.note.clone(),
    })
}

/// All 14 table strategies for a regime, sorted by estimated iteration time.
pub fn plan_rows(
    regime: Regime,
    cluster: &ClusterSpec,
    model: &ModelSpec,
    net: &NetworkSpec,
) -> Result<Vec<PlanRow>> {
    let mut rows = recommend(regime)
        .iter()
        .map(|rec| plan_row(rec, cluster, model, net))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        a.est_time_s
            .total_cmp(&b.est_time_s)
            .then(a.code.cmp(&b.code))
    });
    Ok(rows)
}

pub fn plan_json(
    regime: Regime,
    cluster: &ClusterSpec,
    model: &ModelSpec,
    net: &NetworkSpec,
) -> Result<Value> {
    let rows = plan_rows(regime, cluster, model, net)?;
    Ok(json!({
        "command": "plan",
        "config": config_value(cluster, model, net),
        "regime": regime,
        "rows": rows,
    }))
}

pub fn plan_csv(rows: &[PlanRow]) -> String {
    let mut out = String::from(
        "code,alias,recommended,passes_p1,passes_p2,passes_p3,memory_bytes,intra_params,inter_params,est_time_s\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.0},{},{},{:.9}\n",
            r.code,
            r.alias.unwrap_or(""),
            r.recommended,
            r.passes_p1,
            r.passes_p2,
            r.passes_p3,
            r.memory_bytes,
            r.intra_params,
            r.inter_params,
            r.est_time_s
        ));
    }
    out
}

pub fn plan_table(rows: &[PlanRow]) -> String {
    let mut out = format!(
        "{:<5} {:<8} {:<4} {:<3} {:<3} {:<3} {:>14} {:>16} {:>16} {:>12}\n",
        "code",
        "alias",
        "rec",
        "p1",
        "p2",
        "p3",
        "memory(B)",
        "intra(params)",
        "inter(params)",
        "time(s)"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<5} {:<8} {:<4} {:<3} {:<3} {:<3} {:>14.0} {:>16} {:>16} {:>12.6}\n",
            r.code,
            r.alias.unwrap_or("-"),
            if r.recommended { "yes" } else { "no" },
            tick(r.passes_p1),
            tick(r.passes_p2),
            tick(r.passes_p3),
            r.memory_bytes,
            r.intra_params,
            r.inter_params,
            r.est_time_s
        ));
    }
    out
}

fn tick(b: bool) -> &'static str {
    if b {
        "y"
    } else {
        "n"
    }
}

// ── cost ─────────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    pub cell: &'static str,
    pub intra_params: u64,
    pub inter_params: u64,
    pub intra_bytes: u64,
    pub inter_bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviationReport {
    pub cell: &'static str,
    pub implemented_intra: u64,
    pub implemented_inter: u64,
    pub published_intra: u64,
    pub published_inter: u64,
    pub why: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub method: String,
    pub strategy: String,
    pub extrapolated: bool,
    pub memory: costmodel::MemoryReport,
    pub cells: Vec<CellReport>,
    pub total_intra_params: u64,
    pub total_inter_params: u64,
    pub per_gpu_params: f64,
    pub savings_params: u64,
    pub est_time_s: f64,
    pub padded_params: u64,
    /// Cells where the implemented model differs from the published row.
    pub deviations: Vec<DeviationReport>,
}

pub fn cost_report(
    method: Method,
    cluster: &ClusterSpec,
    model: &ModelSpec,
    net: &NetworkSpec,
) -> Result<CostReport> {
    let volumes = comm_volume(method, cluster, model)?;
    let mem = memory(method, cluster, model);
    let plan = schedule::generate(method, cluster, model)?;
    let width = |cell: VolumeCell| {
        if cell.moves_params() {
            model.param_bytes()
        } else {
            model.grad_bytes()
        }
    };
    let cells = VolumeCell::ALL
        .iter()
        .map(|&c| {
            let v = volumes.cell(c);
            CellReport {
                cell: c.label(),
                intra_params: u64::try_from(v.intra).expect("fits"),
                inter_params: u64::try_from(v.inter).expect("fits"),
                intra_bytes: u64::try_from(v.intra).expect("fits") * width(c),
                inter_bytes: u64::try_from(v.inter).expect("fits") * width(c),
            }
        })
        .collect();
    let deviations = if let Some(literal) = literal_table_volume(method, cluster, model) {
        VolumeCell::ALL
            .iter()
            .filter_map(|&c| {
                let imp = volumes.cell(c);
                let lit = literal.cell(c);
                if imp == lit {
                    return None;
                }
                let why = table_deviations(cluster, model)
                    .into_iter()
                    .find(|d| d.method == method && d.cell == c)
                    .map(|d| d.why)
                    .unwrap_or("implemented model differs from the published cell");
                Some(DeviationReport {
                    cell: c.label(),
                    implemented_intra: u64::try_from(imp.intra).expect("fits"),
                    implemented_inter: u64::try_from(imp.inter).expect("fits"),
                    published_intra: u64::try_from(lit.intra).expect("fits"),
                    published_inter: u64::try_from(lit.inter).expect("fits"),
                    why,
                })
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(CostReport {
        method: method.name(),
        strategy: method.strategy().code(),
        extrapolated: plan.extrapolated,
        memory: mem,
        cells,
        total_intra_params: u64::try_from(volumes.total_intra()).expect("fits"),
        total_inter_params: u64::try_from(volumes.total_inter()).expect("fits"),
        per_gpu_params: volumes.per_gpu(cluster),
        savings_params: u64::try_from(accumulation_savings(cluster, model)).expect("fits"),
        est_time_s: schedule::plan_time(&plan, model, net),
        padded_params: padded_total_params(cluster, model),
        deviations,
    })
}

pub fn cost_json(
    method: Method,
    cluster: &ClusterSpec,
    model: &ModelSpec,
    net: &NetworkSpec,
) -> Result<Value> {
    let report = cost_report(method, cluster, model, net)?;
    Ok(json!({
        "command": "cost",
        "config": config_value(cluster, model, net),
        "report": report,
    }))
}

/// The eight-method summary triple: total intra volume, total inter volume,
/// per-GPU memory.
#[derive(Debug, Clone, Serialize)]
pub struct MethodSummaryRow {
    pub method: String,
    pub intra_params: u64,
    pub inter_params: u64,
    pub memory_bytes: f64,
}

pub fn method_summary_rows(
    cluster: &ClusterSpec,
    model: &ModelSpec,
) -> Result<Vec<MethodSummaryRow>> {
    Method::TABLE3
        .iter()
        .map(|&m| {
            let v = comm_volume(m, cluster, model)?;
            Ok(MethodSummaryRow {
                method: m.name(),
                intra_params: u64::try_from(v.total_intra()).expect("fits"),
                inter_params: u64::try_from(v.total_inter()).expect("fits"),
                memory_bytes: memory(m, cluster, model).total_bytes,
            })
        })
        .collect()
}

pub fn method_summary_json(
    cluster: &ClusterSpec,
    model: &ModelSpec,
    net: &NetworkSpec,
) -> Result<Value> {
    Ok(json!({
        "command": "cost --summary",
        "config": config_value(cluster, model, net),
        "rows": method_summary_rows(cluster, model)?,
    }))
}

pub fn method_summary_csv(rows: &[MethodSummaryRow]) -> String {
    let mut out = String::from("method,intra_params,inter_params,memory_bytes\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.0}\n",
            r.method, r.intra_params, r.inter_params, r.memory_bytes
        ));
    }
    out
}

/// Payload bound for whole-plan replay: the simulator materializes real
/// buffers, so this stays a desk-scale tool.
const MAX_MEASURED_PARAMS: u64 = 64_000_000;

/// Replay the method's plan through the simulator and put measured volumes
/// next to the analytic ones.
pub fn measured_cost_json(
    method: Method,
    cluster: &ClusterSpec,
    model: &ModelSpec,
    net: &NetworkSpec,
) -> Result<Value> {
    let padded = padded_total_params(cluster, model);
    if padded > MAX_MEASURED_PARAMS {
        return Err(Error::BadSimulation(format!(
            "a desk-scale parameter count to replay the plan on real buffers \
             ({padded} exceeds {MAX_MEASURED_PARAMS}; rerun with a scaled --params)"
        )));
    }
    let analytic = comm_volume(method, cluster, model)?;
    let plan = schedule::generate(method, cluster, model)?;
    let exec = netsim::execute_plan(cluster, &plan, netsim::WorldTopology::Ring, net)?;
    Ok(json!({
        "command": "cost --measure",
        "config": config_value(cluster, model, net),
        "method": method.name(),
        "analytic": analytic,
        "measured": exec.volumes,
        "agree": exec.volumes == analytic,
        "simulated_rounds": exec.total_rounds,
        "simulated_time_s": exec.time_seconds,
    }))
}

pub fn savings_json(cluster: &ClusterSpec, model: &ModelSpec, net: &NetworkSpec) -> Value {
    json!({
        "command": "cost --savings",
        "config": config_value(cluster, model, net),
        "savings_params": u64::try_from(accumulation_savings(cluster, model)).expect("fits"),
    })
}

// ── simulate ─────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Ring,
    HRing,
    HoRing,
}

impl Topology {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "ring" => Ok(Topology::Ring),
            "h-ring" | "hring" => Ok(Topology::HRing),
            "ho-ring" | "horing" => Ok(Topology::HoRing),
            other => Err(Error::Unsupported(format!(
                "unknown topology '{other}' (expected ring, h-ring or ho-ring)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollectiveChoice {
    AllGather,
    ReduceScatter,
}

impl CollectiveChoice {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "all-gather" | "allgather" | "ag" => Ok(CollectiveChoice::AllGather),
            "reduce-scatter" | "reducescatter" | "rs" => Ok(CollectiveChoice::ReduceScatter),
            other => Err(Error::Unsupported(format!(
                "unknown collective '{other}' (expected all-gather or reduce-scatter)"
            ))),
        }
    }
}

/// Reference wall-clock numbers measured on a 16-node, 8-GPU-per-node A100
/// cluster for a 1 GB all-gather; simulated times are not comparable in
/// absolute terms, so both are reported side by side.
pub fn reference_hardware() -> Value {
    json!({
        "note": "measured on a 16x8 A100 cluster, 1 GB all-gather; simulated times are not absolute predictions",
        "ring_ms": 288.0,
        "h_ring_ms": 183.0,
        "ho_ring_ms": 162.0,
        "ho_ring_vs_ring_pct": -36.5,
        "ho_ring_vs_h_ring_pct": -11.5,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub topology: Topology,
    pub collective: CollectiveChoice,
    pub ranks: u64,
    pub group_size: u64,
    pub payload_bytes: u64,
    pub seed: u64,
    pub rounds: u64,
    pub phase_rounds: Vec<(String, u64)>,
    pub intra_bytes: u64,
    pub inter_bytes: u64,
    pub per_rank_sent_bytes: u64,
    pub per_rank_inter_bytes: u64,
    pub time_s: f64,
    pub ring_time_s: f64,
    pub delta_vs_ring_pct: f64,
    pub oracle_ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_mismatch: Option<String>,
}

fn random_elems(rng: &mut ChaCha8Rng, count: usize) -> Vec<i64> {
    (0..count)
        .map(|_| (rng.next_u64() % 2_000_001) as i64 - 1_000_000)
        .collect()
}

/// Keep simulated buffers bounded: large payloads are represented by fewer
/// elements of proportionally larger width, leaving byte accounting intact
/// up to the padding of the final element.
const MAX_SIM_ELEMS: u64 = 1 << 15;

fn element_width(payload_bytes: u64) -> u64 {
    let mut eb = 8u64;
    while payload_bytes.div_ceil(eb) > MAX_SIM_ELEMS {
        eb *= 2;
    }
    eb
}

/// Run one collective on synthetic integer payloads, check it against the
/// brute-force oracle, and time it.
pub fn run_simulation(
    topology: Topology,
    collective: CollectiveChoice,
    ranks: u64,
    group_size: u64,
    payload_bytes: u64,
    seed: u64,
    net: &NetworkSpec,
) -> Result<SimulateReport> {
    Ok(run_simulation_traced(
        topology,
        collective,
        ranks,
        group_size,
        payload_bytes,
        seed,
        net,
    )?
    .0)
}

/// Like [`run_simulation`] but also hands back the full round trace.
pub fn run_simulation_traced(
    topology: Topology,
    collective: CollectiveChoice,
    ranks: u64,
    group_size: u64,
    payload_bytes: u64,
    seed: u64,
    net: &NetworkSpec,
) -> Result<(SimulateReport, netsim::SimTrace)> {
    if payload_bytes == 0 {
        return Err(Error::BadSimulation("payload must be positive".into()));
    }
    if ranks < 2 {
        return Err(Error::BadSimulation("need at least 2 ranks".into()));
    }
    let sim = SimCluster::from_counts(ranks, group_size)?;
    let n = ranks as usize;
    let elem_bytes = element_width(payload_bytes);
    let total_elems = (payload_bytes.div_ceil(elem_bytes)) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (run, ring_time, oracle_mismatch) = match collective {
        CollectiveChoice::AllGather => {
            let shard = total_elems.div_ceil(n).max(1);
            let shards: Vec<Vec<i64>> = (0..n).map(|_| random_elems(&mut rng, shard)).collect();
            let run = match topology {
                Topology::Ring => netsim::ring_all_gather(&sim, &shards, elem_bytes, net)?,
                Topology::HRing => netsim::h_ring_all_gather(&sim, &shards, elem_bytes, net)?,
                Topology::HoRing => netsim::ho_ring_all_gather(&sim, &shards, elem_bytes, net)?,
            };
            let ring_time = netsim::ring_all_gather(&sim, &shards, elem_bytes, net)?
                .trace
                .simulated_time;
            let expect = oracle::all_gather(&shards);
            let mismatch = run.outputs.iter().enumerate().find_map(|(rank, out)| {
                if out != &expect {
                    let idx = out.iter().zip(&expect).position(|(a, b)| a != b);
                    Some(format!("rank {rank} output differs at element {idx:?}"))
                } else {
                    None
                }
            });
            (run, ring_time, mismatch)
        }
        CollectiveChoice::ReduceScatter => {
            let inputs: Vec<Vec<i64>> = (0..n)
                .map(|_| random_elems(&mut rng, total_elems))
                .collect();
            let run = match topology {
                Topology::Ring => netsim::ring_reduce_scatter(&sim, &inputs, elem_bytes, net)?,
                Topology::HoRing => netsim::ho_ring_reduce_scatter(&sim, &inputs, elem_bytes, net)?,
                Topology::HRing => {
                    return Err(Error::Unsupported(
                        "h-ring reduce-scatter is not implemented; use ring or ho-ring".into(),
                    ))
                }
            };
            let ring_time = netsim::ring_reduce_scatter(&sim, &inputs, elem_bytes, net)?
                .trace
                .simulated_time;
            let expect = oracle::reduce_scatter(&inputs, n);
            let mismatch = run.outputs.iter().enumerate().find_map(|(rank, out)| {
                if out != &expect[rank] {
                    let idx = out.iter().zip(&expect[rank]).position(|(a, b)| a != b);
                    Some(format!("rank {rank} segment differs at element {idx:?}"))
                } else {
                    None
                }
            });
            (run, ring_time, mismatch)
        }
    };

    let trace = &run.trace;
    let time = trace.simulated_time;
    let report = SimulateReport {
        topology,
        collective,
        ranks,
        group_size,
        payload_bytes,
        seed,
        rounds: trace.total_rounds(),
        phase_rounds: trace
            .phases
            .iter()
            .map(|p| (p.name.to_string(), p.rounds))
            .collect(),
        intra_bytes: trace.intra_bytes,
        inter_bytes: trace.inter_bytes,
        per_rank_sent_bytes: trace.sent_by_rank(0),
        per_rank_inter_bytes: trace.inter_sent_by_rank(0),
        time_s: time,
        ring_time_s: ring_time,
        delta_vs_ring_pct: (time - ring_time) / ring_time * 100.0,
        oracle_ok: oracle_mismatch.is_none(),
        oracle_mismatch,
    };
    Ok((report, run.trace))
}

pub fn simulate_json(report: &SimulateReport, net: &NetworkSpec) -> Value {
    json!({
        "command": "simulate",
        "config": {
            "network": net,
        },
        "report": report,
        "reference_hardware": reference_hardware(),
    })
}

pub fn simulate_csv(report: &SimulateReport) -> String {
    let mut out = String::from(
        "topology,collective,ranks,group_size,bytes_intra,bytes_inter,rounds,time_s\n",
    );
    out.push_str(&format!(
        "{:?},{:?},{},{},{},{},{},{:.9}\n",
        report.topology,
        report.collective,
        report.ranks,
        report.group_size,
        report.intra_bytes,
        report.inter_bytes,
        report.rounds,
        report.time_s
    ));
    out
}

/// Closed-form three-topology comparison for an all-gather of `payload_bytes`.
pub fn topology_comparison_json(
    n: u64,
    m: u64,
    payload_bytes: u64,
    net: &NetworkSpec,
) -> Result<Value> {
    let times = all_gather_times(n, m, payload_bytes, net)?;
    Ok(json!({
        "command": "simulate --compare",
        "config": { "ranks": n, "group_size": m, "payload_bytes": payload_bytes, "network": net },
        "times_s": times,
        "h_ring_vs_ring_pct": (times.h_ring - times.ring) / times.ring * 100.0,
        "ho_ring_vs_ring_pct": (times.ho_ring - times.ring) / times.ring * 100.0,
        "ho_ring_vs_h_ring_pct": (times.ho_ring - times.h_ring) / times.h_ring * 100.0,
        "reference_hardware": reference_hardware(),
    }))
}

// ── verify ───────────────────────────────────────────────────────────────────

pub fn verify_strategies(
    strategies: &[Strategy],
    cluster: &ClusterSpec,
    steps: u64,
    seed: u64,
    tolerance: f64,
) -> Result<Vec<VerifyResult>> {
    strategies
        .iter()
        .map(|&s| trainsim::verify(s, cluster, steps, seed, tolerance))
        .collect()
}

pub fn verify_json(
    results: &[VerifyResult],
    cluster: &ClusterSpec,
    steps: u64,
    seed: u64,
) -> Value {
    json!({
        "command": "verify",
        "config": { "cluster": cluster, "steps": steps, "seed": seed },
        "all_pass": results.iter().all(|r| r.pass),
        "results": results,
    })
}

pub fn verify_csv(results: &[VerifyResult]) -> String {
    let mut out = String::from("strategy,steps,max_abs_diff,tolerance,pass,residency_ok\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{:e},{:e},{},{}\n",
            r.strategy.code(),
            r.steps,
            r.max_abs_diff,
            r.tolerance,
            r.pass,
            r.residency_ok
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (ClusterSpec, ModelSpec, NetworkSpec) {
        (
            ClusterSpec::new(64, 8, 8).unwrap(),
            ModelSpec::full_training(7_000_000_000, 8).unwrap(),
            NetworkSpec::default(),
        )
    }

    #[test]
    fn plan_rows_cover_all_14_and_sort_by_time() {
        let (cluster, model, net) = setup();
        let rows = plan_rows(Regime::Full, &cluster, &model, &net).unwrap();
        assert_eq!(rows.len(), 14);
        for w in rows.windows(2) {
            assert!(w[0].est_time_s <= w[1].est_time_s);
        }
    }

    #[test]
    fn cost_report_flags_igg_deviation() {
        let (cluster, model, net) = setup();
        let report = cost_report(Method::ParoIgg, &cluster, &model, &net).unwrap();
        assert_eq!(report.deviations.len(), 1);
        assert_eq!(report.deviations[0].cell, "update A-G(P)");
    }

    #[test]
    fn cost_report_iig_has_no_deviation() {
        let (cluster, model, net) = setup();
        let report = cost_report(Method::ParoIig, &cluster, &model, &net).unwrap();
        assert!(report.deviations.is_empty());
    }

    #[test]
    fn summary_has_eight_methods() {
        let (cluster, model, _net) = setup();
        let rows = method_summary_rows(&cluster, &model).unwrap();
        assert_eq!(rows.len(), 8);
    }

    #[test]
    fn simulate_small_ring() {
        let net = NetworkSpec::default();
        let report = run_simulation(
            Topology::Ring,
            CollectiveChoice::AllGather,
            2,
            2,
            1024,
            7,
            &net,
        )
        .unwrap();
        assert_eq!(report.rounds, 1);
        assert_eq!(report.per_rank_sent_bytes, 512);
        assert!(report.oracle_ok);
    }

    #[test]
    fn simulate_rejects_h_ring_reduce_scatter() {
        let net = NetworkSpec::default();
        assert!(run_simulation(
            Topology::HRing,
            CollectiveChoice::ReduceScatter,
            8,
            4,
            1024,
            7,
            &net
        )
        .is_err());
    }

    #[test]
    fn json_outputs_are_deterministic() {
        let (cluster, model, net) = setup();
        let a = plan_json(Regime::Peft, &cluster, &model, &net)
            .unwrap()
            .to_string();
        let b = plan_json(Regime::Peft, &cluster, &model, &net)
            .unwrap()
            .to_string();
        assert_eq!(a, b);
    }
}
