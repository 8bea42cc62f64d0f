//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measured evidence. Run with
//! `cargo test --test acceptance -- --nocapture` to see the lines.

use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use paro::costmodel::{
    accumulation_savings, all_gather_times, comm_volume, literal_table_volume, memory,
    table_deviations, Method, VolumeCell,
};
use paro::netsim::{
    self, grouped_reduce_scatter, h_ring_all_gather, ho_ring_all_gather, ho_ring_reduce_scatter,
    oracle, ring_all_gather, ring_reduce_scatter, SimCluster, WorldTopology,
};
use paro::report;
use paro::schedule::{self, CommScope};
use paro::strategy::{enumerate_all, filter_principle1, recommend, table_verdict};
use paro::trainsim;
use paro::types::{ClusterSpec, ModelSpec, NetworkSpec, Regime, Strategy};

fn fig5_cluster() -> ClusterSpec {
    ClusterSpec::new(64, 8, 8).unwrap()
}

fn fig5_model() -> ModelSpec {
    ModelSpec::full_training(7_000_000_000, 8).unwrap()
}

/// Criterion 1: the strategy space enumerates to 27, the first principle
/// keeps exactly the 14 published rows, and the recommendation matrix
/// matches the published ticks cell for cell (56 assertions), in under a
/// second.
#[test]
fn criterion_1_strategy_space() {
    let start = Instant::now();

    let all = enumerate_all();
    assert_eq!(all.len(), 27);
    let survivors = filter_principle1(&all);
    let survivor_codes: Vec<String> = survivors.iter().map(|s| s.code()).collect();
    assert_eq!(
        survivor_codes,
        vec![
            "NNN", "NNI", "NNG", "NII", "NIG", "NGG", "INI", "ING", "III", "IIG", "IGG", "GNG",
            "GIG", "GGG"
        ]
    );

    // The published matrix, one tuple per row: (code, full, partial-large,
    // partial-small, peft).
    let expected: [(&str, [bool; 4]); 14] = [
        ("NNN", [true, true, true, true]),
        ("NNI", [true, true, true, true]),
        ("NNG", [true, true, true, false]),
        ("NII", [true, true, true, false]),
        ("NIG", [true, true, true, false]),
        ("NGG", [true, true, true, false]),
        ("INI", [false, false, false, true]),
        ("ING", [false, true, true, false]),
        ("III", [false, false, true, false]),
        ("IIG", [true, true, false, false]),
        ("IGG", [true, true, true, false]),
        ("GNG", [false, true, true, true]),
        ("GIG", [false, true, true, false]),
        ("GGG", [true, true, true, false]),
    ];
    let mut checked = 0;
    for (code, row) in expected {
        let strategy = Strategy::parse(code).unwrap();
        for (col, regime) in Regime::ALL.iter().enumerate() {
            assert_eq!(
                table_verdict(&strategy, *regime),
                Some(row[col]),
                "cell ({code}, {regime})"
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 56);
    for regime in Regime::ALL {
        assert_eq!(recommend(regime).len(), 14);
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1s");
    println!("PASS criterion 1: 27 strategies, 14 survivors, 56/56 matrix cells ({elapsed:?})");
}

/// Criterion 2: the accumulation saving evaluates to 5,359,375,000 at the
/// 7B/64-GPU configuration, and at a scaled configuration it equals the
/// per-GPU difference between the simulator-counted volumes of s global
/// reduce-scatters and the grouped two-step schedule, exactly.
#[test]
fn criterion_2_accumulation_saving() {
    let start = Instant::now();

    assert_eq!(
        accumulation_savings(&fig5_cluster(), &fig5_model()),
        5_359_375_000u128
    );

    // Scaled cross-check: Ψ=64000, N=8, M=2, s=4, counted in simulated bytes
    // (1 byte per parameter unit).
    let psi = 64_000usize;
    let (n, m, s) = (8u64, 2u64, 4u64);
    let cluster = ClusterSpec::new(n, m, s).unwrap();
    let model = ModelSpec::full_training(psi as u64, 1).unwrap();
    let sim = SimCluster::new(&cluster);
    let net = NetworkSpec::default();
    let inputs = vec![vec![1i64; psi]; n as usize];

    let global = ring_reduce_scatter(&sim, &inputs, 1, &net).unwrap();
    let per_gpu_global = global.trace.sent_by_rank(0) * s;

    let intra = grouped_reduce_scatter(&sim, CommScope::IntraGroup, &inputs, 1, &net).unwrap();
    let shard_inputs: Vec<Vec<i64>> = intra.outputs.clone();
    let inter =
        grouped_reduce_scatter(&sim, CommScope::InterGroup, &shard_inputs, 1, &net).unwrap();
    let per_gpu_two_step = intra.trace.sent_by_rank(0) * s + inter.trace.sent_by_rank(0);

    let measured_saving = per_gpu_global - per_gpu_two_step;
    assert_eq!(
        measured_saving as u128,
        accumulation_savings(&cluster, &model)
    );
    assert_eq!(measured_saving, 72_000);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget 5s");
    println!(
        "PASS criterion 2: saving 5359375000 at 7B/64; simulator-counted {measured_saving} matches exactly at the scaled config ({elapsed:?})"
    );
}

/// Criterion 3: for each of the eight named methods, the analytic per-stage
/// intra/inter volumes equal both the schedule-counted and the simulator-
/// counted volumes exactly (at the published cluster shape, with scaled
/// shard sizes for the buffer-level run), and the differences against the
/// published table are exactly the documented ones.
#[test]
fn criterion_3_volume_table_reproduction() {
    let start = Instant::now();

    // Full-scale: analytic == schedule-counted (pure integers, no buffers).
    let cluster = fig5_cluster();
    let full_model = fig5_model();
    for method in Method::TABLE3 {
        let plan = schedule::generate(method, &cluster, &full_model).unwrap();
        assert_eq!(
            schedule::count_volumes(&plan),
            comm_volume(method, &cluster, &full_model).unwrap(),
            "schedule-counted mismatch for {} at full scale",
            method.name()
        );
    }

    // Scaled shards: analytic == schedule-counted == simulator-counted.
    let scaled_model = ModelSpec::full_training(64 * 4 * 50, 4).unwrap();
    let net = NetworkSpec::default();
    for method in Method::TABLE3 {
        let analytic = comm_volume(method, &cluster, &scaled_model).unwrap();
        let plan = schedule::generate(method, &cluster, &scaled_model).unwrap();
        assert_eq!(
            schedule::count_volumes(&plan),
            analytic,
            "{}",
            method.name()
        );
        let exec = netsim::execute_plan(&cluster, &plan, WorldTopology::Ring, &net).unwrap();
        assert_eq!(
            exec.volumes,
            analytic,
            "simulator-counted mismatch for {}",
            method.name()
        );
    }

    // The deviations from the published cells are flagged, specific and
    // exhaustive: nothing else may differ.
    let devs = table_deviations(&cluster, &full_model);
    let keys: Vec<(String, VolumeCell)> = devs.iter().map(|d| (d.method.name(), d.cell)).collect();
    assert_eq!(
        keys,
        vec![
            ("MiCS".to_string(), VolumeCell::UpdGradSync),
            ("PaRO-IGG".to_string(), VolumeCell::UpdAllGatherP),
            ("PaRO-NIG".to_string(), VolumeCell::BwdReduceScatterG),
        ]
    );
    let s = cluster.accum_steps() as u128;
    for d in &devs {
        match (d.method, d.cell) {
            (Method::ParoIgg, VolumeCell::UpdAllGatherP) => {
                assert_eq!(d.literal.inter, d.implemented.inter * s);
            }
            (Method::ParoNig, VolumeCell::BwdReduceScatterG) => {
                assert_eq!(d.implemented.intra, d.literal.intra * s);
            }
            (Method::Mics, VolumeCell::UpdGradSync) => {
                // Published: unchunked all-reduce with a flat-world split;
                // ring accounting moves 1/g of it, entirely inter-group.
                assert_eq!(d.implemented.intra, 0);
                assert_eq!(
                    d.literal.total() / d.implemented.total(),
                    cluster.n_groups() as u128
                );
            }
            other => panic!("undocumented deviation {other:?}"),
        }
    }
    for method in Method::TABLE3 {
        let implemented = comm_volume(method, &cluster, &full_model).unwrap();
        let literal = literal_table_volume(method, &cluster, &full_model).unwrap();
        for cell in VolumeCell::ALL {
            let documented = devs.iter().any(|d| d.method == method && d.cell == cell);
            assert_eq!(
                implemented.cell(cell) == literal.cell(cell),
                !documented,
                "{} {cell:?}",
                method.name()
            );
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget 30s");
    println!(
        "PASS criterion 3: 8 methods analytic == schedule == simulator; 3 documented deviations flagged ({elapsed:?})"
    );
}

/// Criterion 4: the memory model matches all eight published rows
/// symbolically at three distinct cluster shapes, and the qualitative
/// memory/volume orderings of the published comparison hold.
#[test]
fn criterion_4_memory_table_reproduction() {
    let psi = 7_000_000_000f64;
    let k = 12.0;
    for (n, m) in [(64u64, 8u64), (32, 4), (16, 8)] {
        let cluster = ClusterSpec::new(n, m, 8).unwrap();
        let model = fig5_model();
        let (nf, mf) = (n as f64, m as f64);
        let rows: [(Method, [f64; 3]); 8] = [
            (Method::Zero1, [2.0 * psi, 2.0 * psi, k * psi / nf]),
            (Method::Zero2, [2.0 * psi, 2.0 * psi / nf, k * psi / nf]),
            (
                Method::Zero3,
                [2.0 * psi / nf, 2.0 * psi / nf, k * psi / nf],
            ),
            (Method::Mics, [2.0 * psi / mf, 2.0 * psi / mf, k * psi / mf]),
            (
                Method::ZeroPp,
                [
                    2.0 * psi / nf + 2.0 * psi / mf,
                    2.0 * psi / nf,
                    k * psi / nf,
                ],
            ),
            (
                Method::ParoIgg,
                [2.0 * psi / mf, 2.0 * psi / nf, k * psi / nf],
            ),
            (
                Method::ParoIig,
                [2.0 * psi / mf, 2.0 * psi / mf, k * psi / nf],
            ),
            (Method::ParoNig, [2.0 * psi, 2.0 * psi / mf, k * psi / nf]),
        ];
        for (method, [p, g, os]) in rows {
            let rep = memory(method, &cluster, &model);
            assert_eq!(rep.p_bytes, p, "{} P at N={n} M={m}", method.name());
            assert_eq!(rep.g_bytes, g, "{} G at N={n} M={m}", method.name());
            assert_eq!(rep.os_bytes, os, "{} OS at N={n} M={m}", method.name());
            assert_eq!(rep.total_bytes, p + g + os);
        }
    }

    // Qualitative orderings at the published comparison configuration.
    let cluster = fig5_cluster();
    let model = fig5_model();
    let mem = |m: Method| memory(m, &cluster, &model).total_bytes;
    for lighter in [Method::ParoIgg, Method::ParoIig, Method::ZeroPp] {
        assert!(
            mem(Method::Mics) > mem(lighter),
            "MiCS should exceed {}",
            lighter.name()
        );
        assert!(
            mem(lighter) > mem(Method::Zero3),
            "{} should exceed ZeRO-3",
            lighter.name()
        );
    }
    let inter = |m: Method| comm_volume(m, &cluster, &model).unwrap().total_inter();
    let grouped = [
        Method::Mics,
        Method::ZeroPp,
        Method::ParoIgg,
        Method::ParoIig,
        Method::ParoNig,
    ];
    let min_inter = grouped.iter().map(|&m| inter(m)).min().unwrap();
    assert_eq!(inter(Method::Mics), min_inter);
    assert_eq!(inter(Method::ParoIig), min_inter);

    println!("PASS criterion 4: 8 memory rows at 3 shapes; memory and inter-volume orderings hold");
}

/// Criterion 5: all five collective variants match the brute-force oracles
/// exactly on random integer payloads across the rank/group grid, and the
/// per-rank send totals match their closed forms.
#[test]
fn criterion_5_collective_correctness() {
    let start = Instant::now();
    let net = NetworkSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let mut cases = 0u32;

    for n in [2u64, 4, 6, 8, 9, 12, 16, 32] {
        for m in 1..=n {
            if n % m != 0 {
                continue;
            }
            let sim = SimCluster::from_counts(n, m).unwrap();
            for c in [1usize, 3, 17] {
                let shards: Vec<Vec<i64>> = (0..n)
                    .map(|_| {
                        (0..c)
                            .map(|_| (rng.next_u64() % 20_001) as i64 - 10_000)
                            .collect()
                    })
                    .collect();
                let inputs: Vec<Vec<i64>> = (0..n)
                    .map(|_| {
                        (0..n as usize * c)
                            .map(|_| (rng.next_u64() % 20_001) as i64 - 10_000)
                            .collect()
                    })
                    .collect();
                let concat = oracle::all_gather(&shards);
                let sums = oracle::reduce_scatter(&inputs, n as usize);

                let flat = ring_all_gather(&sim, &shards, 1, &net).unwrap();
                for (rank, out) in flat.outputs.iter().enumerate() {
                    assert_eq!(out, &concat, "ring A-G N={n} M={m} C={c} rank {rank}");
                    assert_eq!(flat.trace.sent_by_rank(rank), (n - 1) * c as u64);
                }

                let rs = ring_reduce_scatter(&sim, &inputs, 1, &net).unwrap();
                for (rank, out) in rs.outputs.iter().enumerate() {
                    assert_eq!(out, &sums[rank], "ring R-S N={n} M={m} C={c} rank {rank}");
                    assert_eq!(rs.trace.sent_by_rank(rank), (n - 1) * c as u64);
                }

                let g = n / m;
                let h = h_ring_all_gather(&sim, &shards, 1, &net).unwrap();
                for out in &h.outputs {
                    assert_eq!(out, &concat, "h-ring A-G N={n} M={m} C={c}");
                }
                if g >= 2 && m >= 2 {
                    for rank in 0..n as usize {
                        let want = if rank as u64 % m == 0 {
                            (g - 1) * m * c as u64
                        } else {
                            0
                        };
                        assert_eq!(h.trace.inter_sent_by_rank(rank), want);
                    }
                }

                let ho = ho_ring_all_gather(&sim, &shards, 1, &net).unwrap();
                for (rank, out) in ho.outputs.iter().enumerate() {
                    assert_eq!(out, &concat, "ho-ring A-G N={n} M={m} C={c}");
                    assert_eq!(ho.trace.sent_by_rank(rank), (n - 1) * c as u64);
                    if g >= 2 && m >= 2 {
                        assert_eq!(ho.trace.inter_sent_by_rank(rank), (g - 1) * c as u64);
                    }
                }

                let ho_rs = ho_ring_reduce_scatter(&sim, &inputs, 1, &net).unwrap();
                for (rank, out) in ho_rs.outputs.iter().enumerate() {
                    assert_eq!(
                        out, &sums[rank],
                        "ho-ring R-S N={n} M={m} C={c} rank {rank}"
                    );
                    if g >= 2 && m >= 2 {
                        assert_eq!(ho_rs.trace.inter_sent_by_rank(rank), (g - 1) * c as u64);
                    }
                }
                cases += 5;
            }
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget 60s");
    println!("PASS criterion 5: {cases} collective cases match brute-force oracles exactly ({elapsed:?})");
}

/// Criterion 6: under the default network profile, gathering 1 GB over 16
/// groups of 8 is fastest on the overlapping hierarchical ring, then the
/// hierarchical ring, then the flat ring. Absolute published times are not
/// reproducible here; the report carries them alongside for comparison.
#[test]
fn criterion_6_topology_ordering() {
    let net = NetworkSpec::default();
    let (n, m) = (128u64, 8u64);
    let payload = 1_000_000_000u64;
    let sim = SimCluster::from_counts(n, m).unwrap();
    let shard_bytes = payload.div_ceil(n);
    let shards = vec![vec![1i64]; n as usize];

    let t_ring = ring_all_gather(&sim, &shards, shard_bytes, &net)
        .unwrap()
        .trace
        .simulated_time;
    let t_h = h_ring_all_gather(&sim, &shards, shard_bytes, &net)
        .unwrap()
        .trace
        .simulated_time;
    let t_ho = ho_ring_all_gather(&sim, &shards, shard_bytes, &net)
        .unwrap()
        .trace
        .simulated_time;
    assert!(t_ho < t_h, "HO-Ring {t_ho} !< H-Ring {t_h}");
    assert!(t_h < t_ring, "H-Ring {t_h} !< Ring {t_ring}");

    // Closed forms agree with the traces exactly.
    let analytic = all_gather_times(n, m, payload, &net).unwrap();
    assert_eq!(analytic.ring, t_ring);
    assert_eq!(analytic.h_ring, t_h);
    assert_eq!(analytic.ho_ring, t_ho);

    // The report carries the reference hardware numbers next to the
    // simulated ones.
    let cmp = report::topology_comparison_json(n, m, payload, &net).unwrap();
    assert_eq!(cmp["reference_hardware"]["ring_ms"], 288.0);
    assert_eq!(cmp["reference_hardware"]["h_ring_ms"], 183.0);
    assert_eq!(cmp["reference_hardware"]["ho_ring_ms"], 162.0);
    assert!(
        cmp["times_s"]["ho_ring"].as_f64().unwrap() < cmp["times_s"]["h_ring"].as_f64().unwrap()
    );

    println!(
        "PASS criterion 6: simulated {:.2} ms (Ring) > {:.2} ms (H-Ring) > {:.2} ms (HO-Ring); reference 288/183/162 ms reported alongside",
        t_ring * 1e3,
        t_h * 1e3,
        t_ho * 1e3
    );
}

/// Criterion 7: every strategy in the 14-row table trains the seeded tiny
/// model to the same parameters as the single-process baseline, to 1e-9,
/// over 20 Adam steps at N=4, M=2, s=2.
#[test]
fn criterion_7_convergence_equivalence() {
    let start = Instant::now();
    let cluster = ClusterSpec::new(4, 2, 2).unwrap();
    let mut worst: (String, f64) = (String::new(), 0.0);
    for strategy in filter_principle1(&enumerate_all()) {
        let r = trainsim::verify(strategy, &cluster, 20, 1234, 1e-9).unwrap();
        assert!(
            r.pass,
            "{} diverged: max |Δ| = {:e} (tolerance 1e-9), residency_ok={}",
            strategy, r.max_abs_diff, r.residency_ok
        );
        if r.max_abs_diff > worst.1 {
            worst = (strategy.code(), r.max_abs_diff);
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget 60s");
    println!(
        "PASS criterion 7: 14/14 strategies within 1e-9 of baseline (worst {} at {:e}) ({elapsed:?})",
        worst.0, worst.1
    );
}

/// Criterion 8: repeating any command with the same seed produces
/// byte-identical machine-readable output.
#[test]
fn criterion_8_determinism() {
    let bin = env!("CARGO_BIN_EXE_paro");
    let runs: [&[&str]; 4] = [
        &[
            "plan", "--regime", "full", "--params", "7e9", "--gpus", "64", "--group", "8",
        ],
        &["cost", "--method", "paro-iig", "--fig5-config"],
        &[
            "simulate",
            "--topo",
            "ho-ring",
            "--collective",
            "all-gather",
            "--ranks",
            "16",
            "--group",
            "4",
            "--bytes",
            "65536",
            "--seed",
            "7",
        ],
        &[
            "verify",
            "--strategy",
            "IIG",
            "--gpus",
            "4",
            "--group",
            "2",
            "--accum",
            "2",
            "--steps",
            "5",
            "--seed",
            "9",
        ],
    ];
    for args in runs {
        let out1 = std::process::Command::new(bin).args(args).output().unwrap();
        let out2 = std::process::Command::new(bin).args(args).output().unwrap();
        assert!(
            out1.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out1.stderr)
        );
        assert_eq!(
            out1.stdout, out2.stdout,
            "non-deterministic output for {args:?}"
        );
        assert!(!out1.stdout.is_empty());
    }
    println!("PASS criterion 8: 4 commands byte-identical across repeated runs");
}
