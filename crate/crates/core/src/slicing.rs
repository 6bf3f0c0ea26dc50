//! Inter-slice action enactment: the allocation action type, intra-slice
//! proportional-fairness RBG scheduling, queue serving with residual-bit
//! bookkeeping, per-TTI metrics and the scalar reward.

use std::collections::VecDeque;

use crate::scenario::Scenario;
use crate::traffic::{Packet, Slice};

/// Inter-slice split of RBGs and, for joint allocators, of the edge compute
/// capacity. Compute components are step counts out of the scenario's
/// `compute_fraction_steps` denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AllocationAction {
    pub r_embb: u32,
    pub r_urllc: u32,
    /// `(c_embb_steps, c_urllc_steps)`; absent for radio-only actions.
    pub compute: Option<(u32, u32)>,
}

impl AllocationAction {
    pub fn is_joint(&self) -> bool {
        self.compute.is_some()
    }

    /// Drop the compute components, keeping the radio split.
    pub fn radio_projection(&self) -> AllocationAction {
        AllocationAction { r_embb: self.r_embb, r_urllc: self.r_urllc, compute: None }
    }

    /// Compute shares as fractions of the server capacity.
    pub fn compute_fractions(&self, steps: u32) -> (f64, f64) {
        match self.compute {
            Some((ce, cu)) => (ce as f64 / steps as f64, cu as f64 / steps as f64),
            None => (0.5, 0.5),
        }
    }

    pub fn rbg_count(&self, slice: Slice) -> u32 {
        match slice {
            Slice::Embb => self.r_embb,
            Slice::Urllc => self.r_urllc,
        }
    }
}

/// All actions for a given RBG count, radio-only (`csteps = None`) or joint.
/// Radio parts always sum to the RBG count and compute steps to the
/// denominator, so the per-TTI budget constraints hold by construction.
/// Ordering is lexicographic by `(r_embb, c_embb)`.
pub fn enumerate_actions(n_rbgs: usize, csteps: Option<u32>) -> Vec<AllocationAction> {
    let n = n_rbgs as u32;
    let mut out = Vec::new();
    for r_embb in 0..=n {
        match csteps {
            None => out.push(AllocationAction { r_embb, r_urllc: n - r_embb, compute: None }),
            Some(k) => {
                for ce in 0..=k {
                    out.push(AllocationAction {
                        r_embb,
                        r_urllc: n - r_embb,
                        compute: Some((ce, k - ce)),
                    });
                }
            }
        }
    }
    out
}

/// Exponentially averaged served throughput per UE, the denominator of the
/// proportional-fairness metric. Floored at 1 bps so the ratio stays finite.
#[derive(Debug, Clone)]
pub struct PfState {
    avg_bps: Vec<f64>,
    tau_ttis: f64,
}

impl PfState {
    pub fn new(n_ues: usize) -> Self {
        PfState { avg_bps: vec![1.0; n_ues], tau_ttis: 100.0 }
    }

    pub fn avg_bps(&self, ue: usize) -> f64 {
        self.avg_bps[ue]
    }

    /// Fold one TTI of service into the average (zero for unserved UEs).
    pub fn update(&mut self, ue: usize, served_bits: f64, tti_s: f64) {
        let inst = served_bits / tti_s;
        let a = 1.0 / self.tau_ttis;
        self.avg_bps[ue] = ((1.0 - a) * self.avg_bps[ue] + a * inst).max(1.0);
    }
}

/// Greedy proportional-fairness assignment of one slice's granted RBGs.
///
/// RBG by RBG (ascending id), the UE with queued data maximizing
/// `rate(ue, rbg) / avg(ue)` wins; ties break to the lowest UE id. UEs
/// without data never win; with no demand at all the map stays empty.
pub fn pf_schedule(
    granted_rbgs: &[usize],
    candidates: &[usize],
    rate_bps: &dyn Fn(usize, usize) -> f64,
    pf: &PfState,
) -> Vec<(usize, usize)> {
    let mut assignment = Vec::with_capacity(granted_rbgs.len());
    for &rbg in granted_rbgs {
        let mut best: Option<(f64, usize)> = None;
        for &ue in candidates {
            let metric = rate_bps(ue, rbg) / pf.avg_bps(ue);
            let better = match best {
                None => true,
                Some((m, u)) => metric > m || (metric == m && ue < u),
            };
            if better {
                best = Some((metric, ue));
            }
        }
        if let Some((_, ue)) = best {
            assignment.push((rbg, ue));
        }
    }
    assignment
}

/// Packets of one UE that finished a transmission attempt this TTI, with
/// their sub-TTI finish times, plus the bits drained from the queue.
#[derive(Debug)]
pub struct UeServeResult {
    pub finished: Vec<(Packet, f64)>,
    pub drained_bits: f64,
}

/// Drain one UE's FIFO at its link capacity for one TTI.
///
/// The head packet transmits first; leftover time serves the next packet in
/// the same TTI. Partially sent packets keep their residual bits for later
/// TTIs. Queueing delay is stamped when the first bits go on the air.
pub fn serve_ue(
    deque: &mut VecDeque<Packet>,
    capacity_bps: f64,
    t0: f64,
    t_end: f64,
) -> UeServeResult {
    let mut finished = Vec::new();
    let mut drained_bits = 0.0;
    if capacity_bps <= 0.0 {
        return UeServeResult { finished, drained_bits };
    }
    let mut cursor = t0;
    while cursor < t_end {
        let Some(head) = deque.front_mut() else { break };
        if head.service_start_s.is_none() {
            head.service_start_s = Some(cursor);
        }
        let airtime = head.residual_bits / capacity_bps;
        if cursor + airtime <= t_end {
            let mut p = deque.pop_front().expect("head exists");
            drained_bits += p.residual_bits;
            p.residual_bits = 0.0;
            cursor += airtime;
            finished.push((p, cursor));
        } else {
            let sent = (t_end - cursor) * capacity_bps;
            head.residual_bits = (head.residual_bits - sent).max(0.0);
            drained_bits += sent;
            cursor = t_end;
        }
    }
    UeServeResult { finished, drained_bits }
}

/// Per-slice slice of one TTI's metrics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SliceTti {
    pub arrivals: u32,
    /// Bits of packets delivered over the radio this TTI (post-HARQ).
    pub served_bits: u64,
    /// End-to-end delays of packets whose compute stage finished this TTI.
    pub completed_delays_s: Vec<f64>,
    /// Deadline expiries plus cloud-saturation rejections.
    pub deadline_drops: u32,
    /// Losses after exhausting retransmissions.
    pub harq_drops: u32,
    pub queue_len: u32,
}

/// Metrics record of one cell for one TTI.
#[derive(Debug, Clone, PartialEq)]
pub struct TtiReport {
    pub tti: u64,
    pub bs: usize,
    pub slices: [SliceTti; 2],
    pub reward: f64,
}

impl TtiReport {
    pub fn slice(&self, slice: Slice) -> &SliceTti {
        &self.slices[slice.index()]
    }
}

/// Scalar reward over a trailing window of reports (newest last, at most
/// the configured window length): weighted eMBB throughput in Mbps plus the
/// URLLC delay headroom against the target in ms, minus the drop penalty.
/// With no URLLC completion in the window the last defined delay average is
/// reused (zero before any completion). Returns the reward and the delay
/// average that was used.
pub fn reward(window: &[&TtiReport], scenario: &Scenario, last_delay_ms: f64) -> (f64, f64) {
    debug_assert!(!window.is_empty());
    let span_s = window.len() as f64 * scenario.tti_s;
    let embb_bits: u64 = window.iter().map(|r| r.slice(Slice::Embb).served_bits).sum();
    let throughput_mbps = embb_bits as f64 / span_s / 1e6;

    let mut delay_sum = 0.0;
    let mut delay_count = 0usize;
    let mut drops = 0u64;
    for r in window {
        for &d in &r.slice(Slice::Urllc).completed_delays_s {
            delay_sum += d;
            delay_count += 1;
        }
        drops += u64::from(r.slice(Slice::Embb).deadline_drops);
        drops += u64::from(r.slice(Slice::Urllc).deadline_drops);
    }
    let delay_ms = if delay_count > 0 {
        delay_sum / delay_count as f64 * 1e3
    } else {
        last_delay_ms
    };
    let d_target_ms = scenario.d_target_s * 1e3;
    let value = scenario.w_embb * throughput_mbps + scenario.w_urllc * (d_target_ms - delay_ms)
        - scenario.drop_penalty * drops as f64;
    (value, delay_ms)
}
