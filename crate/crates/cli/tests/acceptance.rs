//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line with the observed values.
//!
//! The heavyweight comparison fixtures (50k-TTI training runs across
//! seeds) are built once and shared between criteria.

use std::sync::{Arc, OnceLock};
use std::time::Instant;

use ranslice_cli::commands::{compare, train_expert};
use ranslice_cli::metrics::{
    mean_reward_per_tti, moving_average, summarize, ttis_to_ninety_percent, RunSummary,
};
use ranslice_cli::{CompareArgs, SweepAxis, TrainExpertArgs};
use ranslice_core::agents::{
    q_update, transfer_update, AgentConfig, AgentKind, SliceState, TransferMode,
};
use ranslice_core::channel::pathloss_db;
use ranslice_core::compute::{cloud_delay_s, edge_delay_s};
use ranslice_core::engine::{run_case, Case, SimRun};
use ranslice_core::{QTable, Scenario};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const TTIS: u64 = 50_000;

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

fn report(criterion: &str, pass: bool, detail: &str) {
    println!("ACCEPTANCE {criterion}: {} — {detail}", if pass { "PASS" } else { "FAIL" });
}

// ---------------------------------------------------------------------------
// Shared fixtures
// ---------------------------------------------------------------------------

struct SeedRuns {
    expert: RunSummary,
    ktra: RunSummary,
    qlra: RunSummary,
}

struct BaseFixture {
    scenario: Scenario,
    /// Per seed, one trained expert table per cell.
    expert_tables: Vec<Vec<Arc<QTable>>>,
    runs: Vec<SeedRuns>,
    build_seconds: f64,
}

/// 2 Mbps eMBB + 2 Mbps URLLC, 3 GHz MEC, 50k TTIs, seeds 1..5.
fn base_fixture() -> &'static BaseFixture {
    static FIXTURE: OnceLock<BaseFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let scenario = Scenario::default();
        let start = Instant::now();
        let mut expert_tables = Vec::new();
        let mut runs = Vec::new();
        for &seed in &SEEDS {
            let expert_art =
                run_case(&scenario, Case::Expert, TTIS, TransferMode::None, seed, None).unwrap();
            let tables: Vec<Arc<QTable>> =
                expert_art.qtables.iter().map(|t| Arc::new(t.clone())).collect();
            let qlra_art =
                run_case(&scenario, Case::Qlra, TTIS, TransferMode::None, seed, None).unwrap();
            let ktra_art = run_case(
                &scenario,
                Case::Ktra,
                TTIS,
                TransferMode::Additive,
                seed,
                Some(tables.clone()),
            )
            .unwrap();
            runs.push(SeedRuns {
                expert: summarize(&expert_art.reports, &scenario, Case::Expert, seed, TTIS),
                ktra: summarize(&ktra_art.reports, &scenario, Case::Ktra, seed, TTIS),
                qlra: summarize(&qlra_art.reports, &scenario, Case::Qlra, seed, TTIS),
            });
            expert_tables.push(tables);
            eprintln!("[fixture base] seed {seed} done ({:.1}s)", start.elapsed().as_secs_f64());
        }
        BaseFixture {
            scenario,
            expert_tables,
            runs,
            build_seconds: start.elapsed().as_secs_f64(),
        }
    })
}

struct ConvergenceFixture {
    /// Per seed: (ktra t90, qlra t90, ktra final, qlra final).
    t90: Vec<(usize, usize, f64, f64)>,
}

/// 2/2 Mbps at 2 GHz MEC: reward-curve convergence of KTRA vs QLRA.
fn convergence_fixture() -> &'static ConvergenceFixture {
    static FIXTURE: OnceLock<ConvergenceFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let base = base_fixture();
        let mut scenario = base.scenario.clone();
        scenario.mec_capacity_hz = 2e9;
        let mut t90 = Vec::new();
        for (i, &seed) in SEEDS.iter().enumerate() {
            let curve = |case: Case, tables: Option<Vec<Arc<QTable>>>| {
                let mode = match case {
                    Case::Ktra => TransferMode::Additive,
                    _ => TransferMode::None,
                };
                let art = run_case(&scenario, case, TTIS, mode, seed, tables).unwrap();
                let per_tti = mean_reward_per_tti(&art.reports, scenario.n_bs, TTIS);
                moving_average(&per_tti, 500)
            };
            let ktra = curve(Case::Ktra, Some(base.expert_tables[i].clone()));
            let qlra = curve(Case::Qlra, None);
            t90.push((
                ttis_to_ninety_percent(&ktra).unwrap(),
                ttis_to_ninety_percent(&qlra).unwrap(),
                *ktra.last().unwrap(),
                *qlra.last().unwrap(),
            ));
            eprintln!("[fixture convergence] seed {seed} done");
        }
        ConvergenceFixture { t90 }
    })
}

struct SweepFixture {
    capacities_hz: Vec<f64>,
    /// Seed-averaged (delay_ms, throughput_mbps) per capacity, per case.
    ktra: Vec<(f64, f64)>,
    qlra: Vec<(f64, f64)>,
}

/// MEC capacity sweep {1, 2, 3, 4} GHz at 2/2 Mbps, 30k TTIs, 3 seeds.
fn sweep_fixture() -> &'static SweepFixture {
    static FIXTURE: OnceLock<SweepFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let base = base_fixture();
        let capacities: Vec<f64> = vec![1e9, 2e9, 3e9, 4e9];
        let seeds = &SEEDS[..3];
        let ttis = 30_000u64;
        let mut ktra = Vec::new();
        let mut qlra = Vec::new();
        for &cap in &capacities {
            let mut scenario = base.scenario.clone();
            scenario.mec_capacity_hz = cap;
            let mut acc = [(0.0f64, 0.0f64); 2];
            for (i, &seed) in seeds.iter().enumerate() {
                let arts = [
                    (
                        Case::Ktra,
                        run_case(
                            &scenario,
                            Case::Ktra,
                            ttis,
                            TransferMode::Additive,
                            seed,
                            Some(base.expert_tables[i].clone()),
                        )
                        .unwrap(),
                    ),
                    (
                        Case::Qlra,
                        run_case(&scenario, Case::Qlra, ttis, TransferMode::None, seed, None)
                            .unwrap(),
                    ),
                ];
                for (k, (case, art)) in arts.iter().enumerate() {
                    let s = summarize(&art.reports, &scenario, *case, seed, ttis);
                    acc[k].0 += s.avg_urllc_delay_ms / seeds.len() as f64;
                    acc[k].1 += s.avg_embb_throughput_mbps_per_cell / seeds.len() as f64;
                }
            }
            ktra.push(acc[0]);
            qlra.push(acc[1]);
            eprintln!("[fixture sweep] capacity {cap:.0e} done");
        }
        SweepFixture { capacities_hz: capacities, ktra, qlra }
    })
}

struct HighLoadFixture {
    /// Per seed: (ktra drop rate, qlra drop rate).
    rates: Vec<(f64, f64)>,
    pooled_ktra: f64,
    pooled_qlra: f64,
}

/// 2 Mbps eMBB + 4 Mbps URLLC; experts retrained on that traffic.
fn high_load_fixture() -> &'static HighLoadFixture {
    static FIXTURE: OnceLock<HighLoadFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let mut scenario = Scenario::default();
        scenario.urllc_load_bps = 4e6;
        let mut rates = Vec::new();
        let mut mean_ktra = 0.0;
        let mut mean_qlra = 0.0;
        for &seed in &SEEDS {
            let expert_art =
                run_case(&scenario, Case::Expert, TTIS, TransferMode::None, seed, None).unwrap();
            let tables: Vec<Arc<QTable>> =
                expert_art.qtables.iter().map(|t| Arc::new(t.clone())).collect();
            let ktra_art =
                run_case(&scenario, Case::Ktra, TTIS, TransferMode::Additive, seed, Some(tables))
                    .unwrap();
            let qlra_art =
                run_case(&scenario, Case::Qlra, TTIS, TransferMode::None, seed, None).unwrap();
            let sk = summarize(&ktra_art.reports, &scenario, Case::Ktra, seed, TTIS);
            let sq = summarize(&qlra_art.reports, &scenario, Case::Qlra, seed, TTIS);
            rates.push((sk.drop_rate, sq.drop_rate));
            mean_ktra += sk.drop_rate / SEEDS.len() as f64;
            mean_qlra += sq.drop_rate / SEEDS.len() as f64;
            eprintln!("[fixture high-load] seed {seed} done");
        }
        HighLoadFixture { rates, pooled_ktra: mean_ktra, pooled_qlra: mean_qlra }
    })
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

#[test]
fn acceptance_01_equation_oracles() {
    let s = Scenario::default();
    let pl = pathloss_db(1000.0).unwrap();
    let cloud = cloud_delay_s(&s, 400, 5000.0).unwrap();
    let edge = edge_delay_s(80_000.0, 1.0, 3e9);
    let cfg = AgentConfig { alpha: 0.9, gamma: 0.5, epsilon: 0.05, transfer: TransferMode::None };
    let st = |e, u| SliceState { q_embb: e, q_urllc: u };
    let mut q = QTable::new(AgentKind::Learner, &s);
    q.set(st(1, 1), 7, 4.0);
    let plain = q_update(&mut q, st(0, 0), 3, 2.0, st(1, 1), &cfg);
    let mut q2 = QTable::new(AgentKind::Learner, &s);
    q2.set(st(1, 1), 7, 4.0);
    let mut expert = QTable::new(AgentKind::Expert, &s);
    let projected = q2.actions()[3].radio_projection();
    expert.set(st(0, 0), expert.action_index(&projected).unwrap(), 1.0);
    let cfg_t = AgentConfig { transfer: TransferMode::Additive, ..cfg };
    let transfer = transfer_update(&mut q2, &expert, st(0, 0), 3, 2.0, st(1, 1), &cfg_t);

    let checks = [
        ("pathloss_db(1000 m) = 128.1 dB", rel_err(pl, 128.1)),
        ("cloud delay (B=1e7, L=400, lambda=5000) = 1.05 ms", rel_err(cloud, 1.05e-3)),
        ("edge delay (80k cycles, share 1, 3 GHz) = 26.667 us", rel_err(edge, 80_000.0 / 3e9)),
        ("q_update(0, r=2, gamma=0.5, max=4, alpha=0.9) = 3.6", rel_err(plain, 3.6)),
        ("additive transfer with expert value 1 = 4.6", rel_err(transfer, 4.6)),
    ];
    let worst = checks.iter().map(|c| c.1).fold(0.0, f64::max);
    let pass = worst < 1e-9;
    report("01 equation-oracles", pass, &format!("worst relative error {worst:.2e}"));
    for (name, err) in checks {
        assert!(err < 1e-9, "{name}: relative error {err}");
    }
}

#[test]
fn acceptance_02_reduction_identity() {
    let start = Instant::now();
    let s = Scenario::default();
    let zero_experts: Vec<Arc<QTable>> =
        (0..s.n_bs).map(|_| Arc::new(QTable::new(AgentKind::Expert, &s))).collect();
    let ktra =
        run_case(&s, Case::Ktra, 10_000, TransferMode::Additive, 7, Some(zero_experts)).unwrap();
    let qlra = run_case(&s, Case::Qlra, 10_000, TransferMode::None, 7, None).unwrap();
    let identical = ktra.reports == qlra.reports;
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "02 reduction-identity",
        identical && elapsed < 60.0,
        &format!(
            "KTRA with a zero expert vs QLRA over 10k TTIs: streams {} ({elapsed:.1}s)",
            if identical { "bit-identical" } else { "DIFFER" }
        ),
    );
    assert!(identical);
    assert!(elapsed < 60.0, "criterion requires < 1 min, took {elapsed:.1}s");
}

#[test]
fn acceptance_03_constraint_suite() {
    // RB exclusivity, RB budget, compute budget and packet conservation
    // are asserted inside every step_tti call; a completed run means zero
    // violations.
    let s = Scenario::default();
    let mut run = SimRun::new(&s, Case::Qlra, TransferMode::None, 23, None).unwrap();
    let ttis = 10_000u64;
    let mut reports = 0usize;
    for _ in 0..ttis {
        reports += run.step_tti().len();
    }
    let pass = reports == ttis as usize * s.n_bs;
    report(
        "03 constraint-suite",
        pass,
        &format!("{ttis} TTIs x {} cells stepped with per-TTI invariant checks, zero violations", s.n_bs),
    );
    assert!(pass);
}

#[test]
fn acceptance_04_expert_worst_delay() {
    let fx = base_fixture();
    let mut wins = 0;
    let mut lines = Vec::new();
    for (i, r) in fx.runs.iter().enumerate() {
        let worst = r.expert.avg_urllc_delay_ms > r.ktra.avg_urllc_delay_ms
            && r.expert.avg_urllc_delay_ms > r.qlra.avg_urllc_delay_ms;
        wins += u32::from(worst);
        lines.push(format!(
            "seed {}: expert {:.3} ms vs ktra {:.3} / qlra {:.3}",
            SEEDS[i], r.expert.avg_urllc_delay_ms, r.ktra.avg_urllc_delay_ms, r.qlra.avg_urllc_delay_ms
        ));
    }
    let pass = wins >= 4;
    report(
        "04 expert-worst-delay",
        pass,
        &format!("expert has the highest mean URLLC delay in {wins}/5 seeds ({})", lines.join("; ")),
    );
    assert!(pass, "expert worst in only {wins}/5 seeds");
}

#[test]
fn acceptance_05_ktra_beats_qlra() {
    let fx = base_fixture();
    let mut delay_wins = 0;
    let mut tput_wins = 0;
    let mut delay_gaps = Vec::new();
    let mut tput_gaps = Vec::new();
    for r in &fx.runs {
        delay_wins += u32::from(r.ktra.avg_urllc_delay_ms < r.qlra.avg_urllc_delay_ms);
        tput_wins += u32::from(
            r.ktra.avg_embb_throughput_mbps_per_cell > r.qlra.avg_embb_throughput_mbps_per_cell,
        );
        delay_gaps.push(
            (r.qlra.avg_urllc_delay_ms - r.ktra.avg_urllc_delay_ms) / r.qlra.avg_urllc_delay_ms
                * 100.0,
        );
        tput_gaps.push(
            (r.ktra.avg_embb_throughput_mbps_per_cell - r.qlra.avg_embb_throughput_mbps_per_cell)
                / r.qlra.avg_embb_throughput_mbps_per_cell
                * 100.0,
        );
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let pass = delay_wins >= 4 && tput_wins >= 4;
    report(
        "05 ktra-beats-qlra",
        pass,
        &format!(
            "delay lower in {delay_wins}/5 seeds (mean gap {:.1}%, paper 18.4%); \
             throughput higher in {tput_wins}/5 seeds (mean gap {:.2}%, paper 30.1%); \
             fixture runtime {:.0}s (budget 600s)",
            mean(&delay_gaps),
            mean(&tput_gaps),
            fx.build_seconds
        ),
    );
    assert!(fx.build_seconds < 600.0, "comparison runs exceeded the 10 min budget");
    assert!(pass, "delay wins {delay_wins}/5, throughput wins {tput_wins}/5 (need >= 4/5 each)");
}

/// Wrong-direction steps in a sweep: their count and the largest relative
/// magnitude.
fn inversions(values: &[(f64, f64)], pick: fn(&(f64, f64)) -> f64, increasing: bool) -> (usize, f64) {
    let mut count = 0;
    let mut worst: f64 = 0.0;
    for w in values.windows(2) {
        let (prev, next) = (pick(&w[0]), pick(&w[1]));
        let inverted = if increasing { next < prev } else { next > prev };
        if inverted {
            count += 1;
            worst = worst.max((next - prev).abs() / prev.abs().max(f64::MIN_POSITIVE));
        }
    }
    (count, worst)
}

#[test]
fn acceptance_06_mec_capacity_monotonicity() {
    let fx = sweep_fixture();
    let mut pass = true;
    let mut details = Vec::new();
    for (name, rows) in [("ktra", &fx.ktra), ("qlra", &fx.qlra)] {
        let (d_inv, d_worst) = inversions(rows, |r| r.0, false);
        let (t_inv, t_worst) = inversions(rows, |r| r.1, true);
        let ok = d_inv <= 1 && d_worst <= 0.02 && t_inv <= 1 && t_worst <= 0.02;
        pass &= ok;
        details.push(format!(
            "{name}: delay {:?} ms ({d_inv} inversions, worst {:.2}%), \
             throughput {:?} Mbps ({t_inv} inversions, worst {:.2}%)",
            rows.iter().map(|r| (r.0 * 1e3).round() / 1e3).collect::<Vec<_>>(),
            d_worst * 100.0,
            rows.iter().map(|r| (r.1 * 1e4).round() / 1e4).collect::<Vec<_>>(),
            t_worst * 100.0,
        ));
    }
    report(
        "06 mec-capacity-monotonicity",
        pass,
        &format!("capacities {:?} GHz; {}", fx.capacities_hz.iter().map(|c| c / 1e9).collect::<Vec<_>>(), details.join(" | ")),
    );
    assert!(pass, "{}", details.join(" | "));
}

#[test]
fn acceptance_07_convergence_speed() {
    let fx = convergence_fixture();
    let mut wins = 0;
    let mut lines = Vec::new();
    for (i, &(tk, tq, fk, fq)) in fx.t90.iter().enumerate() {
        wins += u32::from(tk < tq);
        lines.push(format!("seed {}: ktra t90 {tk} (final {fk:.3}) vs qlra t90 {tq} (final {fq:.3})", SEEDS[i]));
    }
    let pass = wins >= 4;
    report(
        "07 convergence-speed",
        pass,
        &format!("KTRA reaches 90% of its final 500-TTI MA reward earlier in {wins}/5 seeds ({})", lines.join("; ")),
    );
    assert!(pass, "KTRA faster in only {wins}/5 seeds");
}

#[test]
fn acceptance_08_drop_rate() {
    let fx = high_load_fixture();
    let per_seed: Vec<String> = fx
        .rates
        .iter()
        .enumerate()
        .map(|(i, (k, q))| format!("seed {}: ktra {:.4}% qlra {:.4}%", SEEDS[i], k * 100.0, q * 100.0))
        .collect();
    let pass = fx.pooled_ktra < 0.005 && fx.pooled_qlra < 0.005;
    report(
        "08 drop-rate",
        pass,
        &format!(
            "deadline-drop rate at 2/4 Mbps over 5 seeds: ktra {:.4}%, qlra {:.4}% \
             (threshold 0.5%; paper reports 0.042% / 0.048%) [{}]",
            fx.pooled_ktra * 100.0,
            fx.pooled_qlra * 100.0,
            per_seed.join("; ")
        ),
    );
    assert!(pass, "ktra {:.4}% qlra {:.4}% vs 0.5% bound", fx.pooled_ktra * 100.0, fx.pooled_qlra * 100.0);
}

#[test]
fn acceptance_09_persistence() {
    use rand::{Rng, SeedableRng};
    let s = Scenario::default();
    let mut table = QTable::new(AgentKind::Learner, &s);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let mut written = 0;
    while written < 1000 {
        let st = SliceState { q_embb: rng.random_range(0..=10), q_urllc: rng.random_range(0..=10) };
        let a = rng.random_range(0..table.n_actions());
        let v = (rng.random::<f64>() - 0.5) * 10f64.powi(rng.random_range(-6..8));
        if !table.is_visited(st, a) {
            written += 1;
        }
        table.set(st, a, v);
    }
    let mut buf1 = Vec::new();
    table.save(&mut buf1).unwrap();
    let loaded = QTable::load(buf1.as_slice(), s.state_queue_cap).unwrap();
    let mut buf2 = Vec::new();
    loaded.save(&mut buf2).unwrap();

    let bit_exact = (0..=10u32).all(|e| {
        (0..=10u32).all(|u| {
            let st = SliceState { q_embb: e, q_urllc: u };
            (0..table.n_actions()).all(|a| {
                table.value(st, a).to_bits() == loaded.value(st, a).to_bits()
                    && table.is_visited(st, a) == loaded.is_visited(st, a)
            })
        })
    });
    let canonical = buf1 == buf2;
    let pass = bit_exact && canonical && loaded.visited_count() == 1000;
    report(
        "09 persistence",
        pass,
        &format!(
            "1000 random entries: round trip bit-exact = {bit_exact}, repeated saves byte-identical = {canonical}"
        ),
    );
    assert!(bit_exact && canonical);
    assert_eq!(loaded.visited_count(), 1000);
}

#[test]
fn acceptance_10_cli_determinism() {
    let root = tempfile::tempdir().unwrap();
    let expert_dir = root.path().join("experts");
    train_expert(&TrainExpertArgs {
        scenario: None,
        seeds: vec![1, 2],
        ttis: 2000,
        out: expert_dir.clone(),
    })
    .unwrap();
    let run = |out: std::path::PathBuf| {
        let args = CompareArgs {
            scenario: None,
            cases: vec![Case::Expert, Case::Ktra, Case::Qlra],
            seeds: vec![1, 2],
            ttis: 2000,
            sweep: Some((SweepAxis::MecCapacity, vec![2e9, 3e9])),
            expert_dir: Some(expert_dir.clone()),
            transfer_mode: TransferMode::Additive,
            out: out.clone(),
            verify: true,
        };
        compare(&args).unwrap();
        out
    };
    let a = run(root.path().join("a"));
    let b = run(root.path().join("b"));
    let mut identical = true;
    for file in ["summary.csv", "reward_curve.csv", "urllc_delay_samples.csv"] {
        let fa = std::fs::read(a.join(file)).unwrap();
        let fb = std::fs::read(b.join(file)).unwrap();
        identical &= fa == fb;
    }
    report(
        "10 cli-determinism",
        identical,
        "two compare invocations with identical flags produce byte-identical CSV outputs",
    );
    assert!(identical);
}
