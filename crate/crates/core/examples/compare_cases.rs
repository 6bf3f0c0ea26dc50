//! Library-level walkthrough: train the radio-only expert, then compare
//! the three allocators on the same seeded traffic.
//!
//! ```sh
//! cargo run --example compare_cases -- 20000 1
//! ```

use std::sync::Arc;

use ranslice_core::engine::{run_case, Case};
use ranslice_core::{Scenario, Slice, TransferMode, TtiReport};

fn print_summary(label: &str, reports: &[TtiReport], scenario: &Scenario, ttis: u64) {
    let start = ttis / 2;
    let window: Vec<&TtiReport> = reports.iter().filter(|r| r.tti >= start).collect();
    let span_s = (ttis - start) as f64 * scenario.tti_s;
    let embb_bits: u64 = window.iter().map(|r| r.slice(Slice::Embb).served_bits).sum();
    let delays: Vec<f64> = window
        .iter()
        .flat_map(|r| r.slice(Slice::Urllc).completed_delays_s.iter().copied())
        .collect();
    let mean_delay_ms = delays.iter().sum::<f64>() / delays.len().max(1) as f64 * 1e3;
    println!(
        "{label:7}  urllc delay {mean_delay_ms:6.3} ms   embb throughput {:6.3} Mbps/cell",
        embb_bits as f64 / span_s / scenario.n_bs as f64 / 1e6
    );
}

fn main() {
    let mut args = std::env::args().skip(1);
    let ttis: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(20_000);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);
    let scenario = Scenario::default();

    let expert = run_case(&scenario, Case::Expert, ttis, TransferMode::None, seed, None).unwrap();
    let tables: Vec<_> = expert.qtables.iter().map(|t| Arc::new(t.clone())).collect();
    let qlra = run_case(&scenario, Case::Qlra, ttis, TransferMode::None, seed, None).unwrap();
    let ktra =
        run_case(&scenario, Case::Ktra, ttis, TransferMode::Additive, seed, Some(tables)).unwrap();

    println!("{ttis} TTIs, seed {seed}, metrics over the final 50%:");
    print_summary("expert", &expert.reports, &scenario, ttis);
    print_summary("qlra", &qlra.reports, &scenario, ttis);
    print_summary("ktra", &ktra.reports, &scenario, ttis);
}
