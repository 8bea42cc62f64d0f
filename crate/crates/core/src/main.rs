//! Command-line front end: strategy planning, cost reports, collective
//! simulation and numeric verification.
//!
//! Exit codes: 0 success, 1 validation or verification failure, 2 usage
//! error.

use std::io::Write;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use paro::costmodel::Method;
use paro::report::{self, CollectiveChoice, OutputFormat, Topology};
use paro::strategy::principle1_set;
use paro::types::{ClusterSpec, ModelSpec, NetworkSpec, Regime, Strategy};

#[derive(Parser)]
#[command(
    name = "paro",
    version,
    about = "Sharding-strategy planner and collective-communication simulator for distributed LLM training"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Rank the 14 sharding strategies for a training regime
    Plan(PlanArgs),
    /// Memory, per-stage volume, accumulation saving and time of one method
    Cost(CostArgs),
    /// Run one collective on the simulated cluster and verify it
    Simulate(SimulateArgs),
    /// Check strategies for numeric equivalence with single-process training
    Verify(VerifyArgs),
}

/// Parse counts given in scientific notation, e.g. `7e9`.
fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if !f.is_finite() || f < 0.0 || f > u64::MAX as f64 {
        return Err(format!("'{s}' is out of range"));
    }
    Ok(f.round() as u64)
}

#[derive(Args, Clone)]
struct ClusterArgs {
    /// Total number of GPUs (N)
    #[arg(long, value_parser = parse_count)]
    gpus: Option<u64>,
    /// GPUs per group (M)
    #[arg(long, value_parser = parse_count, conflicts_with = "groups")]
    group: Option<u64>,
    /// Number of groups (g); alternative to --group
    #[arg(long, value_parser = parse_count)]
    groups: Option<u64>,
    /// Gradient-accumulation steps per mini-batch (s); defaults to 1
    #[arg(long, value_parser = parse_count)]
    accum: Option<u64>,
}

impl ClusterArgs {
    fn build(&self) -> Result<ClusterSpec, String> {
        let gpus = self.gpus.ok_or("missing required flag --gpus")?;
        let group = match (self.group, self.groups) {
            (Some(m), _) => m,
            (None, Some(g)) => {
                if g == 0 || gpus % g != 0 {
                    return Err(format!("--groups {g} does not divide --gpus {gpus}"));
                }
                gpus / g
            }
            (None, None) => gpus,
        };
        ClusterSpec::new(gpus, group, self.accum.unwrap_or(1)).map_err(|e| e.to_string())
    }
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Total parameter count (accepts scientific notation, e.g. 7e9)
    #[arg(long, value_parser = parse_count)]
    params: Option<u64>,
    /// Trainable parameter count; defaults to --params
    #[arg(long, value_parser = parse_count)]
    trainable: Option<u64>,
    /// Layer count used for schedule granularity
    #[arg(long, value_parser = parse_count, default_value = "8")]
    layers: u64,
    /// Bytes per parameter replica
    #[arg(long, value_parser = parse_count, default_value = "2")]
    param_bytes: u64,
    /// Bytes per gradient element
    #[arg(long, value_parser = parse_count, default_value = "2")]
    grad_bytes: u64,
    /// Optimizer-state bytes per trainable parameter (K)
    #[arg(long, default_value = "12.0")]
    optim_factor: f64,
    /// Treat the model as a parameter-efficient fine-tune
    #[arg(long)]
    peft: bool,
}

impl ModelArgs {
    fn build(&self) -> Result<ModelSpec, String> {
        let params = self.params.ok_or("missing required flag --params")?;
        let trainable = self.trainable.unwrap_or(params);
        ModelSpec::new(params, trainable, self.layers)
            .and_then(|m| m.with_param_bytes(self.param_bytes))
            .and_then(|m| m.with_grad_bytes(self.grad_bytes))
            .and_then(|m| m.with_optim_factor(self.optim_factor))
            .map(|m| m.with_peft(self.peft))
            .map_err(|e| e.to_string())
    }
}

#[derive(Args, Clone)]
struct NetArgs {
    /// Intra-group link bandwidth in bytes/s
    #[arg(long, default_value = "600e9")]
    intra_bw: f64,
    /// Inter-group link bandwidth in bytes/s
    #[arg(long, default_value = "100e9")]
    inter_bw: f64,
    /// Per-round latency on intra-group links, seconds
    #[arg(long, default_value = "20e-6")]
    intra_latency: f64,
    /// Per-round latency on inter-group links, seconds
    #[arg(long, default_value = "200e-6")]
    inter_latency: f64,
}

impl NetArgs {
    fn build(&self) -> Result<NetworkSpec, String> {
        NetworkSpec::new(
            self.intra_bw,
            self.inter_bw,
            self.intra_latency,
            self.inter_latency,
        )
        .map_err(|e| e.to_string())
    }
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// Output format: json, csv or table
    #[arg(long, default_value = "json")]
    format: String,
    /// Write output to a file instead of stdout
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

impl OutputArgs {
    fn emit(&self, text: &str) -> std::io::Result<()> {
        match &self.out {
            Some(path) => std::fs::write(path, text),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(text.as_bytes())?;
                if !text.ends_with('\n') {
                    stdout.write_all(b"\n")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Args)]
struct PlanArgs {
    /// Training regime: full, partial-large, partial-small or peft
    #[arg(long, required_unless_present = "matrix")]
    regime: Option<String>,
    /// Print the full recommendation matrix (all four regimes) as CSV
    #[arg(long)]
    matrix: bool,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    cluster: ClusterArgs,
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CostArgs {
    /// Named method: ddp, zero-1/2/3, mics, zero++, paro-igg/iig/nig
    #[arg(long, conflicts_with = "strategy")]
    method: Option<String>,
    /// Generic three-letter strategy code, e.g. IIG
    #[arg(long)]
    strategy: Option<String>,
    /// Report the per-GPU volume saved by grouped two-step gradient sync
    #[arg(long)]
    savings: bool,
    /// Report all eight named methods (intra/inter volume and memory)
    #[arg(long)]
    fig5: bool,
    /// Preset the 7B-parameter, 64-GPU, 8-group, 8-step configuration
    #[arg(long)]
    fig5_config: bool,
    /// Emit the generated per-iteration collective plan as JSON instead of
    /// the cost report
    #[arg(long)]
    plan: bool,
    /// Replay the plan through the network simulator and report measured
    /// next to analytic volumes (needs a desk-scale parameter count)
    #[arg(long)]
    measure: bool,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    cluster: ClusterArgs,
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Topology: ring, h-ring or ho-ring
    #[arg(long)]
    topo: String,
    /// Collective: all-gather or reduce-scatter
    #[arg(long, default_value = "all-gather")]
    collective: String,
    /// Number of simulated ranks
    #[arg(long, value_parser = parse_count)]
    ranks: u64,
    /// Ranks per group; defaults to all ranks in one group
    #[arg(long, value_parser = parse_count)]
    group: Option<u64>,
    /// Logical payload in bytes (full buffer size)
    #[arg(long, value_parser = parse_count)]
    bytes: u64,
    /// Payload RNG seed
    #[arg(long, default_value = "42")]
    seed: u64,
    /// Also print the closed-form three-topology comparison
    #[arg(long)]
    compare: bool,
    /// Dump the trace as JSON lines to this path
    #[arg(long)]
    trace_out: Option<std::path::PathBuf>,
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// One strategy code to verify
    #[arg(long, conflicts_with = "all_p1")]
    strategy: Option<String>,
    /// Verify all 14 table strategies
    #[arg(long)]
    all_p1: bool,
    #[command(flatten)]
    cluster: ClusterArgs,
    /// Optimizer steps to run
    #[arg(long, value_parser = parse_count, default_value = "20")]
    steps: u64,
    /// Seed for model init and data
    #[arg(long, default_value = "1234")]
    seed: u64,
    /// Max-abs parameter difference allowed against the baseline
    #[arg(long, default_value = "1e-9")]
    tolerance: f64,
    #[command(flatten)]
    output: OutputArgs,
}

fn usage_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn failure(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn run_plan(args: &PlanArgs) -> ExitCode {
    if args.matrix {
        args.output
            .emit(&paro::strategy::matrix_csv())
            .expect("write output");
        return ExitCode::SUCCESS;
    }
    let regime = match Regime::parse(args.regime.as_deref().unwrap_or_default()) {
        Ok(r) => r,
        Err(e) => return usage_error(&e.to_string()),
    };
    let format = match OutputFormat::parse(&args.output.format) {
        Ok(f) => f,
        Err(e) => return usage_error(&e.to_string()),
    };
    let (cluster, model, net) = match (args.cluster.build(), args.model.build(), args.net.build()) {
        (Ok(c), Ok(m), Ok(n)) => (c, m, n),
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => return usage_error(&e),
    };
    let text = match format {
        OutputFormat::Json => report::plan_json(regime, &cluster, &model, &net)
            .map(|v| serde_json::to_string_pretty(&v).expect("serializable")),
        OutputFormat::Csv => {
            report::plan_rows(regime, &cluster, &model, &net).map(|r| report::plan_csv(&r))
        }
        OutputFormat::Table => {
            report::plan_rows(regime, &cluster, &model, &net).map(|r| report::plan_table(&r))
        }
    };
    match text {
        Ok(t) => {
            args.output.emit(&t).expect("write output");
            ExitCode::SUCCESS
        }
        Err(e) => failure(&e.to_string()),
    }
}

fn fig5_defaults(args: &mut CostArgs) {
    if args.model.params.is_none() {
        args.model.params = Some(7_000_000_000);
    }
    if args.cluster.gpus.is_none() {
        args.cluster.gpus = Some(64);
    }
    if args.cluster.group.is_none() && args.cluster.groups.is_none() {
        args.cluster.group = Some(8);
    }
    if args.cluster.accum.is_none() {
        args.cluster.accum = Some(8);
    }
}

fn run_cost(mut args: CostArgs) -> ExitCode {
    if args.fig5_config || args.fig5 {
        fig5_defaults(&mut args);
    }
    let format = match OutputFormat::parse(&args.output.format) {
        Ok(f) => f,
        Err(e) => return usage_error(&e.to_string()),
    };
    let (cluster, model, net) = match (args.cluster.build(), args.model.build(), args.net.build()) {
        (Ok(c), Ok(m), Ok(n)) => (c, m, n),
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => return usage_error(&e),
    };
    if args.savings {
        let text = serde_json::to_string_pretty(&report::savings_json(&cluster, &model, &net))
            .expect("serializable");
        args.output.emit(&text).expect("write output");
        return ExitCode::SUCCESS;
    }
    if args.fig5 {
        let out = match format {
            OutputFormat::Csv | OutputFormat::Table => {
                report::method_summary_rows(&cluster, &model)
                    .map(|r| report::method_summary_csv(&r))
            }
            OutputFormat::Json => report::method_summary_json(&cluster, &model, &net)
                .map(|v| serde_json::to_string_pretty(&v).expect("serializable")),
        };
        return match out {
            Ok(t) => {
                args.output.emit(&t).expect("write output");
                ExitCode::SUCCESS
            }
            Err(e) => failure(&e.to_string()),
        };
    }
    let name = match (&args.method, &args.strategy) {
        (Some(m), None) => m.clone(),
        (None, Some(s)) => s.clone(),
        _ => {
            return usage_error(
                "exactly one of --method, --strategy, --savings or --fig5 is required",
            )
        }
    };
    let method = match Method::parse(&name) {
        Ok(m) => m,
        Err(e) => return failure(&e.to_string()),
    };
    if args.plan {
        return match paro::schedule::generate(method, &cluster, &model) {
            Ok(plan) => {
                args.output
                    .emit(&serde_json::to_string_pretty(&plan).expect("serializable"))
                    .expect("write output");
                ExitCode::SUCCESS
            }
            Err(e) => failure(&e.to_string()),
        };
    }
    if args.measure {
        return match report::measured_cost_json(method, &cluster, &model, &net) {
            Ok(v) => {
                args.output
                    .emit(&serde_json::to_string_pretty(&v).expect("serializable"))
                    .expect("write output");
                ExitCode::SUCCESS
            }
            Err(e) => failure(&e.to_string()),
        };
    }
    match report::cost_json(method, &cluster, &model, &net) {
        Ok(v) => {
            args.output
                .emit(&serde_json::to_string_pretty(&v).expect("serializable"))
                .expect("write output");
            ExitCode::SUCCESS
        }
        Err(e) => failure(&e.to_string()),
    }
}

fn run_simulate(args: &SimulateArgs) -> ExitCode {
    let topo = match Topology::parse(&args.topo) {
        Ok(t) => t,
        Err(e) => return usage_error(&e.to_string()),
    };
    let collective = match CollectiveChoice::parse(&args.collective) {
        Ok(c) => c,
        Err(e) => return usage_error(&e.to_string()),
    };
    let net = match args.net.build() {
        Ok(n) => n,
        Err(e) => return usage_error(&e),
    };
    let group = args.group.unwrap_or(args.ranks);
    let report = match report::run_simulation(
        topo, collective, args.ranks, group, args.bytes, args.seed, &net,
    ) {
        Ok(r) => r,
        Err(e) => return failure(&e.to_string()),
    };
    if let Some(path) = &args.trace_out {
        // Re-run to materialize the trace for dumping; simulations are
        // deterministic so this is the same execution.
        match report::run_simulation_traced(
            topo, collective, args.ranks, group, args.bytes, args.seed, &net,
        ) {
            Ok((_, trace)) => std::fs::write(path, trace.to_jsonl()).expect("write trace"),
            Err(e) => return failure(&e.to_string()),
        }
    }
    let text = match OutputFormat::parse(&args.output.format) {
        Ok(OutputFormat::Csv) | Ok(OutputFormat::Table) => report::simulate_csv(&report),
        Ok(OutputFormat::Json) => {
            let mut v = report::simulate_json(&report, &net);
            if args.compare {
                if let Ok(cmp) =
                    report::topology_comparison_json(args.ranks, group, args.bytes, &net)
                {
                    v["comparison"] = cmp;
                }
            }
            serde_json::to_string_pretty(&v).expect("serializable")
        }
        Err(e) => return usage_error(&e.to_string()),
    };
    args.output.emit(&text).expect("write output");
    if !report.oracle_ok {
        return failure(&format!(
            "collective output failed the brute-force oracle: {}",
            report
                .oracle_mismatch
                .as_deref()
                .unwrap_or("unknown location")
        ));
    }
    ExitCode::SUCCESS
}

fn run_verify(args: &VerifyArgs) -> ExitCode {
    let cluster = match args.cluster.build() {
        Ok(c) => c,
        Err(e) => return usage_error(&e),
    };
    let strategies: Vec<Strategy> = if args.all_p1 {
        principle1_set()
    } else {
        match &args.strategy {
            Some(code) => match Strategy::parse(code) {
                Ok(s) => vec![s],
                Err(e) => return usage_error(&e.to_string()),
            },
            None => return usage_error("pass --strategy <CODE> or --all-p1"),
        }
    };
    let results = match report::verify_strategies(
        &strategies,
        &cluster,
        args.steps,
        args.seed,
        args.tolerance,
    ) {
        Ok(r) => r,
        Err(e) => return failure(&e.to_string()),
    };
    let text = match OutputFormat::parse(&args.output.format) {
        Ok(OutputFormat::Csv) | Ok(OutputFormat::Table) => report::verify_csv(&results),
        Ok(OutputFormat::Json) => serde_json::to_string_pretty(&report::verify_json(
            &results, &cluster, args.steps, args.seed,
        ))
        .expect("serializable"),
        Err(e) => return usage_error(&e.to_string()),
    };
    args.output.emit(&text).expect("write output");
    let failures: Vec<String> = results
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{} (max diff {:e})", r.strategy.code(), r.max_abs_diff))
        .collect();
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        failure(&format!("tolerance exceeded for: {}", failures.join(", ")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Plan(args) => run_plan(&args),
        Cmd::Cost(args) => run_cost(args),
        Cmd::Simulate(args) => run_simulate(&args),
        Cmd::Verify(args) => run_verify(&args),
    }
}
