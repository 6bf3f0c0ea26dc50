//! Metric aggregation over report streams: post-exploration summaries,
//! moving-average reward curves and the ECDF reduction.

use ranslice_core::engine::Case;
use ranslice_core::{Scenario, Slice, TtiReport};

/// One row of `summary.csv`: steady-state metrics of a single run,
/// measured over the final 50% of TTIs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub case: Case,
    pub seed: u64,
    pub urllc_load_bps: f64,
    pub mec_capacity_hz: f64,
    pub ttis: u64,
    pub avg_urllc_delay_ms: f64,
    pub avg_embb_throughput_mbps_per_cell: f64,
    /// Deadline expiries (plus backhaul-saturation rejections) over arrivals.
    pub drop_rate: f64,
    /// Retransmission-exhaustion losses over arrivals; the flat error
    /// probability makes this a policy-independent floor, reported apart.
    pub harq_drop_rate: f64,
    pub avg_reward: f64,
}

/// First TTI of the measurement window: the final 50% of the run.
pub fn window_start(ttis: u64) -> u64 {
    ttis / 2
}

/// Aggregate a run's reports into its summary row.
pub fn summarize(
    reports: &[TtiReport],
    scenario: &Scenario,
    case: Case,
    seed: u64,
    ttis: u64,
) -> RunSummary {
    let start = window_start(ttis);
    let mut delay_sum = 0.0;
    let mut delay_count = 0u64;
    let mut embb_bits = 0u64;
    let mut drops = 0u64;
    let mut harq_drops = 0u64;
    let mut arrivals = 0u64;
    let mut reward_sum = 0.0;
    let mut report_count = 0u64;
    for r in reports.iter().filter(|r| r.tti >= start) {
        for &d in &r.slice(Slice::Urllc).completed_delays_s {
            delay_sum += d;
            delay_count += 1;
        }
        embb_bits += r.slice(Slice::Embb).served_bits;
        for slice in Slice::ALL {
            drops += u64::from(r.slice(slice).deadline_drops);
            harq_drops += u64::from(r.slice(slice).harq_drops);
            arrivals += u64::from(r.slice(slice).arrivals);
        }
        reward_sum += r.reward;
        report_count += 1;
    }
    let span_s = (ttis - start) as f64 * scenario.tti_s;
    RunSummary {
        case,
        seed,
        urllc_load_bps: scenario.urllc_load_bps,
        mec_capacity_hz: scenario.mec_capacity_hz,
        ttis,
        avg_urllc_delay_ms: delay_sum / delay_count.max(1) as f64 * 1e3,
        avg_embb_throughput_mbps_per_cell: embb_bits as f64
            / span_s
            / scenario.n_bs as f64
            / 1e6,
        drop_rate: drops as f64 / arrivals.max(1) as f64,
        harq_drop_rate: harq_drops as f64 / arrivals.max(1) as f64,
        avg_reward: reward_sum / report_count.max(1) as f64,
    }
}

/// Independent re-aggregation used by `--verify`: accumulates per cell
/// first and merges, so a bookkeeping bug in [`summarize`] cannot hide.
pub fn summarize_by_cell(
    reports: &[TtiReport],
    scenario: &Scenario,
    case: Case,
    seed: u64,
    ttis: u64,
) -> RunSummary {
    let start = window_start(ttis);
    let n = scenario.n_bs;
    let mut delays: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut bits = vec![0u64; n];
    let mut drops = vec![0u64; n];
    let mut harq = vec![0u64; n];
    let mut arrivals = vec![0u64; n];
    let mut rewards: Vec<Vec<f64>> = vec![Vec::new(); n];
    for r in reports {
        if r.tti < start {
            continue;
        }
        delays[r.bs].extend_from_slice(&r.slice(Slice::Urllc).completed_delays_s);
        bits[r.bs] += r.slice(Slice::Embb).served_bits;
        for slice in Slice::ALL {
            drops[r.bs] += u64::from(r.slice(slice).deadline_drops);
            harq[r.bs] += u64::from(r.slice(slice).harq_drops);
            arrivals[r.bs] += u64::from(r.slice(slice).arrivals);
        }
        rewards[r.bs].push(r.reward);
    }
    let span_s = (ttis - start) as f64 * scenario.tti_s;
    let delay_sum: f64 = delays.iter().flatten().sum();
    let delay_count: usize = delays.iter().map(|v| v.len()).sum();
    let reward_sum: f64 = rewards.iter().flatten().sum();
    let report_count: usize = rewards.iter().map(|v| v.len()).sum();
    RunSummary {
        case,
        seed,
        urllc_load_bps: scenario.urllc_load_bps,
        mec_capacity_hz: scenario.mec_capacity_hz,
        ttis,
        avg_urllc_delay_ms: delay_sum / delay_count.max(1) as f64 * 1e3,
        avg_embb_throughput_mbps_per_cell: bits.iter().sum::<u64>() as f64
            / span_s
            / n as f64
            / 1e6,
        drop_rate: drops.iter().sum::<u64>() as f64
            / arrivals.iter().sum::<u64>().max(1) as f64,
        harq_drop_rate: harq.iter().sum::<u64>() as f64
            / arrivals.iter().sum::<u64>().max(1) as f64,
        avg_reward: reward_sum / report_count.max(1) as f64,
    }
}

/// Per-TTI reward averaged across cells.
pub fn mean_reward_per_tti(reports: &[TtiReport], n_bs: usize, ttis: u64) -> Vec<f64> {
    let mut per_tti = vec![0.0f64; ttis as usize];
    for r in reports {
        per_tti[r.tti as usize] += r.reward / n_bs as f64;
    }
    per_tti
}

/// Trailing moving average with warm-up (mean of what is available until
/// the window fills).
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, &v) in values.iter().enumerate() {
        acc += v;
        if i >= window {
            acc -= values[i - window];
        }
        out.push(acc / (i.min(window - 1) + 1) as f64);
    }
    out
}

/// First index where the curve reaches 90% of its final value.
pub fn ttis_to_ninety_percent(ma: &[f64]) -> Option<usize> {
    let last = *ma.last()?;
    let threshold = 0.9 * last;
    ma.iter().position(|&v| v >= threshold)
}

/// Reduce sorted samples to at most `n_points` ECDF rows
/// `(value, fraction <= value)`. The last row is always the maximum sample
/// at fraction exactly one.
pub fn ecdf(samples: &[f64], n_points: usize) -> Vec<(f64, f64)> {
    assert!(!samples.is_empty(), "ecdf of an empty sample set");
    assert!(n_points > 0, "need at least one output point");
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let points = n_points.min(n);
    let mut out = Vec::with_capacity(points);
    for k in 1..=points {
        // index of the k-th quantile point, spread evenly over the samples
        let rank = (k * n).div_ceil(points);
        out.push((sorted[rank - 1], rank as f64 / n as f64));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ecdf_of_four_samples_at_four_points_is_the_definition() {
        let got = ecdf(&[2.0, 1.0, 4.0, 3.0], 4);
        assert_eq!(got, vec![(1.0, 0.25), (2.0, 0.5), (3.0, 0.75), (4.0, 1.0)]);
    }

    #[test]
    fn ecdf_of_a_single_sample() {
        assert_eq!(ecdf(&[7.5], 4), vec![(7.5, 1.0)]);
        assert_eq!(ecdf(&[7.5], 1), vec![(7.5, 1.0)]);
    }

    #[test]
    fn ecdf_reduction_keeps_the_maximum_at_fraction_one() {
        let samples: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.731).sin()).collect();
        let got = ecdf(&samples, 17);
        assert_eq!(got.len(), 17);
        let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let last = *got.last().unwrap();
        assert_eq!(last, (max, 1.0));
        // fractions strictly increase, values non-decreasing
        for w in got.windows(2) {
            assert!(w[1].1 > w[0].1);
            assert!(w[1].0 >= w[0].0);
        }
    }

    #[test]
    fn moving_average_warms_up_then_slides() {
        let v = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let ma = moving_average(&v, 2);
        assert_eq!(ma, vec![1.0, 1.5, 2.5, 3.5, 4.5]);
    }

    #[test]
    fn ninety_percent_crossing_is_the_first_index() {
        let ma = vec![0.0, 0.5, 0.89, 0.95, 1.0];
        assert_eq!(ttis_to_ninety_percent(&ma), Some(3));
    }
}
