//! Subcommand implementations. Everything is a library function so the
//! test suites can drive the harness without spawning processes.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ranslice_core::engine::{run_case, Case};
use ranslice_core::{parse_scenario, QTable, Scenario, Slice, TransferMode};

use crate::metrics::{
    mean_reward_per_tti, moving_average, summarize, summarize_by_cell, RunSummary,
};
use crate::{CliError, CompareArgs, EcdfArgs, RunArgs, SweepAxis, TrainExpertArgs};

/// Moving-average window for the reward curves.
pub const REWARD_MA_WINDOW: usize = 500;

pub fn load_scenario(path: &Option<PathBuf>) -> Result<Scenario, CliError> {
    match path {
        None => Ok(Scenario::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", p.display())))?;
            parse_scenario(&text).map_err(|e| CliError::Validation(e.to_string()))
        }
    }
}

fn expert_table_name(bs: usize) -> String {
    format!("expert_bs{bs}.qt")
}

/// Train the radio-only expert for each seed and persist one Q-table per
/// cell plus a manifest under `<out>/seed<S>/`.
pub fn train_expert(args: &TrainExpertArgs) -> Result<(), CliError> {
    let scenario = load_scenario(&args.scenario)?;
    for &seed in &args.seeds {
        let art = run_case(&scenario, Case::Expert, args.ttis, TransferMode::None, seed, None)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        let dir = args.out.join(format!("seed{seed}"));
        fs::create_dir_all(&dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        let mut manifest = String::new();
        manifest.push_str("RANSLICE-EXPERT v1\n");
        manifest.push_str(&format!("seed={seed}\n"));
        manifest.push_str(&format!("ttis={}\n", args.ttis));
        manifest.push_str(&format!("cells={}\n", scenario.n_bs));
        manifest.push_str(&format!("scenario={:016x}\n", scenario.fingerprint()));
        for (bs, table) in art.qtables.iter().enumerate() {
            let path = dir.join(expert_table_name(bs));
            let file = fs::File::create(&path)
                .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            table.save(&mut w).map_err(|e| CliError::Runtime(e.to_string()))?;
            w.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
            manifest.push_str(&format!("table={}\n", expert_table_name(bs)));
        }
        let manifest_path = dir.join("manifest.txt");
        fs::write(&manifest_path, manifest)
            .map_err(|e| CliError::Runtime(format!("cannot write manifest: {e}")))?;

        let final_reward = if args.ttis == 0 {
            f64::NAN
        } else {
            let per_tti = mean_reward_per_tti(&art.reports, scenario.n_bs, args.ttis);
            *moving_average(&per_tti, REWARD_MA_WINDOW).last().unwrap()
        };
        println!(
            "seed {seed}: wrote {} expert tables to {} (final {REWARD_MA_WINDOW}-TTI \
             moving-average reward {final_reward:.4})",
            scenario.n_bs,
            dir.display()
        );
    }
    Ok(())
}

/// Load one expert table per cell for a seed: `<dir>/seed<S>/expert_bs*.qt`
/// if that layout exists, else flat `<dir>/expert_bs*.qt`.
pub fn load_expert_tables(
    dir: &Path,
    seed: u64,
    scenario: &Scenario,
) -> Result<Vec<Arc<QTable>>, CliError> {
    let seeded = dir.join(format!("seed{seed}"));
    let base = if seeded.is_dir() { seeded } else { dir.to_path_buf() };
    let mut tables = Vec::with_capacity(scenario.n_bs);
    for bs in 0..scenario.n_bs {
        let path = base.join(expert_table_name(bs));
        let file = fs::File::open(&path).map_err(|e| {
            CliError::Validation(format!(
                "missing expert table {} (train with `ranslice train-expert`): {e}",
                path.display()
            ))
        })?;
        let table = QTable::load(BufReader::new(file), scenario.state_queue_cap)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        tables.push(Arc::new(table));
    }
    Ok(tables)
}

/// One (case, seed, sweep-point) execution plus its artifacts.
struct RunOutput {
    summary: RunSummary,
    verify: RunSummary,
    reward_ma: Vec<f64>,
    /// (tti, delay_s) of every completed URLLC packet.
    urllc_delays: Vec<(u64, f64)>,
}

fn execute_run(
    scenario: &Scenario,
    case: Case,
    seed: u64,
    ttis: u64,
    transfer: TransferMode,
    expert_dir: &Option<PathBuf>,
) -> Result<RunOutput, CliError> {
    let experts = match case {
        Case::Ktra => {
            let dir = expert_dir.as_ref().ok_or_else(|| {
                CliError::Validation("case ktra requires --expert-dir".to_string())
            })?;
            Some(load_expert_tables(dir, seed, scenario)?)
        }
        _ => None,
    };
    let art = run_case(scenario, case, ttis, transfer, seed, experts)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let per_tti = mean_reward_per_tti(&art.reports, scenario.n_bs, ttis);
    let reward_ma = moving_average(&per_tti, REWARD_MA_WINDOW);
    let mut urllc_delays = Vec::new();
    for r in &art.reports {
        for &d in &r.slice(Slice::Urllc).completed_delays_s {
            urllc_delays.push((r.tti, d));
        }
    }
    Ok(RunOutput {
        summary: summarize(&art.reports, scenario, case, seed, ttis),
        verify: summarize_by_cell(&art.reports, scenario, case, seed, ttis),
        reward_ma,
        urllc_delays,
    })
}

fn apply_sweep(base: &Scenario, axis: Option<SweepAxis>, value: f64) -> Scenario {
    let mut s = base.clone();
    match axis {
        Some(SweepAxis::UrllcLoad) => s.urllc_load_bps = value,
        Some(SweepAxis::MecCapacity) => s.mec_capacity_hz = value,
        None => {}
    }
    s
}

pub const SUMMARY_HEADER: &str = "case,seed,urllc_load_bps,mec_capacity_hz,ttis,\
avg_urllc_delay_ms,avg_embb_throughput_mbps_per_cell,drop_rate,harq_drop_rate,avg_reward";

fn summary_row(s: &RunSummary) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        s.case,
        s.seed,
        s.urllc_load_bps,
        s.mec_capacity_hz,
        s.ttis,
        s.avg_urllc_delay_ms,
        s.avg_embb_throughput_mbps_per_cell,
        s.drop_rate,
        s.harq_drop_rate,
        s.avg_reward
    )
}

/// Run the full (sweep point x case x seed) matrix and write the three
/// comparison CSVs. Returns the summary rows in emission order.
pub fn compare(args: &CompareArgs) -> Result<Vec<RunSummary>, CliError> {
    let base = load_scenario(&args.scenario)?;
    if args.cases.is_empty() {
        return Err(CliError::Validation("case set must not be empty".to_string()));
    }
    if args.seeds.is_empty() {
        return Err(CliError::Validation("seed list must not be empty".to_string()));
    }
    let sweep_values: Vec<Option<f64>> = match &args.sweep {
        None => vec![None],
        Some((_, values)) if values.is_empty() => {
            return Err(CliError::Validation("sweep needs at least one value".to_string()))
        }
        Some((_, values)) => values.iter().copied().map(Some).collect(),
    };
    let axis = args.sweep.as_ref().map(|(a, _)| *a);
    if let Some((_, values)) = &args.sweep {
        if values.iter().any(|&v| !(v > 0.0)) {
            return Err(CliError::Validation("sweep values must be positive".to_string()));
        }
    }

    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", args.out.display())))?;
    let mut summary_csv = String::from(SUMMARY_HEADER);
    summary_csv.push('\n');
    let mut curve_csv = String::from("case,seed,urllc_load_bps,mec_capacity_hz,tti,reward_ma\n");
    let mut samples_csv = String::from("case,seed,urllc_load_bps,mec_capacity_hz,tti,delay_ms\n");
    let mut summaries = Vec::new();

    for sweep_value in &sweep_values {
        let scenario = apply_sweep(&base, axis, sweep_value.unwrap_or(0.0));
        for &case in &args.cases {
            for &seed in &args.seeds {
                let out = execute_run(&scenario, case, seed, args.ttis, args.transfer_mode, &args.expert_dir)?;
                if args.verify && !summaries_agree(&out.summary, &out.verify) {
                    return Err(CliError::Runtime(format!(
                        "summary verification mismatch for case {case} seed {seed}: \
                         {:?} vs {:?}",
                        out.summary, out.verify
                    )));
                }
                log::info!(
                    "case {case} seed {seed} load {} cap {}: delay {:.4} ms, \
                     throughput {:.4} Mbps, drop rate {:.6}",
                    scenario.urllc_load_bps,
                    scenario.mec_capacity_hz,
                    out.summary.avg_urllc_delay_ms,
                    out.summary.avg_embb_throughput_mbps_per_cell,
                    out.summary.drop_rate
                );
                summary_csv.push_str(&summary_row(&out.summary));
                summary_csv.push('\n');
                let prefix = format!(
                    "{},{},{},{}",
                    case, seed, scenario.urllc_load_bps, scenario.mec_capacity_hz
                );
                for (tti, ma) in out.reward_ma.iter().enumerate() {
                    curve_csv.push_str(&format!("{prefix},{tti},{ma}\n"));
                }
                for (tti, delay_s) in &out.urllc_delays {
                    samples_csv.push_str(&format!("{prefix},{tti},{}\n", delay_s * 1e3));
                }
                summaries.push(out.summary);
            }
        }
    }

    write_text(&args.out.join("summary.csv"), &summary_csv)?;
    write_text(&args.out.join("reward_curve.csv"), &curve_csv)?;
    write_text(&args.out.join("urllc_delay_samples.csv"), &samples_csv)?;
    println!(
        "wrote {} summary rows to {}",
        summaries.len(),
        args.out.join("summary.csv").display()
    );
    Ok(summaries)
}

/// Run a single case (no sweep) and emit the same CSV trio.
pub fn run(args: &RunArgs) -> Result<Vec<RunSummary>, CliError> {
    let compare_args = CompareArgs {
        scenario: args.scenario.clone(),
        cases: vec![args.case],
        seeds: args.seeds.clone(),
        ttis: args.ttis,
        sweep: None,
        expert_dir: args.expert_dir.clone(),
        transfer_mode: args.transfer_mode,
        out: args.out.clone(),
        verify: args.verify,
    };
    compare(&compare_args)
}

/// Reduce a delay-sample CSV (any file with a `delay_ms` column) to an
/// ECDF CSV of `value,fraction` rows.
pub fn ecdf(args: &EcdfArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.samples)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", args.samples.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Validation("samples file is empty".to_string()))?;
    let col = header
        .split(',')
        .position(|h| h == "delay_ms")
        .ok_or_else(|| CliError::Validation("samples file has no `delay_ms` column".to_string()))?;
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let field = line.split(',').nth(col).ok_or_else(|| {
            CliError::Validation(format!("line {}: missing column {col}", i + 2))
        })?;
        let v: f64 = field
            .parse()
            .map_err(|_| CliError::Validation(format!("line {}: bad delay `{field}`", i + 2)))?;
        samples.push(v);
    }
    if samples.is_empty() {
        return Err(CliError::Validation("samples file contains no rows".to_string()));
    }
    let points = crate::metrics::ecdf(&samples, args.points);
    let mut out = String::from("value,fraction\n");
    for (v, f) in points {
        out.push_str(&format!("{v},{f}\n"));
    }
    write_text(&args.out, &out)?;
    println!("wrote {} ECDF points to {}", args.points.min(samples.len()), args.out.display());
    Ok(())
}

fn write_text(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// The independent recompute sums in a different order, so means may
/// differ in the last ulps; counts and ratios of counts must match
/// exactly.
fn summaries_agree(a: &RunSummary, b: &RunSummary) -> bool {
    fn close(x: f64, y: f64) -> bool {
        x == y || (x - y).abs() <= 1e-12 * x.abs().max(y.abs())
    }
    a.case == b.case
        && a.seed == b.seed
        && a.urllc_load_bps == b.urllc_load_bps
        && a.mec_capacity_hz == b.mec_capacity_hz
        && a.ttis == b.ttis
        && close(a.avg_urllc_delay_ms, b.avg_urllc_delay_ms)
        && close(a.avg_embb_throughput_mbps_per_cell, b.avg_embb_throughput_mbps_per_cell)
        && a.drop_rate == b.drop_rate
        && a.harq_drop_rate == b.harq_drop_rate
        && close(a.avg_reward, b.avg_reward)
}
