//! Traffic: Poisson arrivals, per-slice radio queues, HARQ outcomes and
//! deadline expiry.
//!
//! Each packet carries timestamps for every stage it passes through so the
//! end-to-end delay decomposes into queueing, first-attempt airtime,
//! retransmission time and the compute stage.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::scenario::Scenario;

/// Network slice kind. eMBB is throughput-oriented, URLLC delay-oriented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slice {
    Embb,
    Urllc,
}

impl Slice {
    pub const ALL: [Slice; 2] = [Slice::Embb, Slice::Urllc];

    pub fn index(self) -> usize {
        match self {
            Slice::Embb => 0,
            Slice::Urllc => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Slice::Embb => "embb",
            Slice::Urllc => "urllc",
        }
    }
}

/// Where a packet currently lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketLocation {
    RadioQueue,
    AwaitingRetx,
    ComputeQueue,
    Cloud,
    Done,
    Dropped,
}

/// One traffic unit: arrives at a UE, crosses the radio link (possibly with
/// retransmissions) and then the compute stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub slice: Slice,
    /// Local UE index within the owning cell.
    pub ue: usize,
    pub size_bits: u64,
    pub arrival_s: f64,
    /// Bits still to send in the current transmission attempt.
    pub residual_bits: f64,
    /// First time any bits of this packet went on the air.
    pub service_start_s: Option<f64>,
    /// End of the first transmission attempt (success or not).
    pub first_attempt_done_s: Option<f64>,
    /// End of the successful attempt.
    pub tx_done_s: Option<f64>,
    pub retx_count: u32,
    /// TTI at which a retransmission becomes eligible.
    pub retx_ready_tti: u64,
    pub location: PacketLocation,
}

impl Packet {
    pub fn new(id: u64, slice: Slice, ue: usize, size_bits: u64, arrival_s: f64) -> Self {
        Packet {
            id,
            slice,
            ue,
            size_bits,
            arrival_s,
            residual_bits: size_bits as f64,
            service_start_s: None,
            first_attempt_done_s: None,
            tx_done_s: None,
            retx_count: 0,
            retx_ready_tti: 0,
            location: PacketLocation::RadioQueue,
        }
    }
}

/// Poisson arrivals of one slice in one cell for one TTI. The per-UE rate
/// is the cell load split equally across the slice's UEs.
pub fn generate_arrivals(
    scenario: &Scenario,
    slice: Slice,
    rng: &mut impl Rng,
    tti: u64,
    next_id: &mut u64,
) -> Vec<Packet> {
    let bits = scenario.packet_bits(slice) as f64;
    let n_ue = scenario.n_ue(slice);
    let lambda_per_ue = scenario.load_bps(slice) / (bits * n_ue as f64);
    let mean = lambda_per_ue * scenario.tti_s;
    let arrival_s = tti as f64 * scenario.tti_s;
    let mut out = Vec::new();
    if mean <= 0.0 {
        return out;
    }
    let poisson = Poisson::new(mean).expect("positive mean");
    for ue_local in scenario.slice_ue_range(slice) {
        let k = poisson.sample(rng) as u64;
        for _ in 0..k {
            let id = *next_id;
            *next_id += 1;
            out.push(Packet::new(id, slice, ue_local, scenario.packet_bits(slice), arrival_s));
        }
    }
    out
}

/// Result of a finished transmission attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HarqOutcome {
    Delivered,
    ScheduleRetx,
    DropAfterRetx,
}

/// Decide the fate of a transmission attempt: independent failure with the
/// configured probability, one more try while retransmissions remain,
/// otherwise the packet is lost.
pub fn harq_resolve(retx_count: u32, max_retx: u32, err_prob: f64, rng: &mut impl Rng) -> HarqOutcome {
    let u: f64 = rng.random();
    if u >= err_prob {
        HarqOutcome::Delivered
    } else if retx_count < max_retx {
        HarqOutcome::ScheduleRetx
    } else {
        HarqOutcome::DropAfterRetx
    }
}

/// FIFO radio queue of one slice, kept per UE so the scheduler can serve
/// users independently. Arrival order is preserved within each UE.
#[derive(Debug, Clone)]
pub struct SliceQueue {
    pub slice: Slice,
    /// Indexed by cell-local UE id.
    deques: Vec<VecDeque<Packet>>,
    len: usize,
}

impl SliceQueue {
    pub fn new(slice: Slice, ues_per_cell: usize) -> Self {
        SliceQueue {
            slice,
            deques: vec![VecDeque::new(); ues_per_cell],
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn ue_has_data(&self, ue: usize) -> bool {
        !self.deques[ue].is_empty()
    }

    pub fn ue_queue_mut(&mut self, ue: usize) -> &mut VecDeque<Packet> {
        &mut self.deques[ue]
    }

    /// Push a fresh arrival at the back of its UE's deque.
    pub fn push(&mut self, p: Packet) {
        debug_assert_eq!(p.location, PacketLocation::RadioQueue);
        debug_assert_eq!(p.slice, self.slice);
        self.deques[p.ue].push_back(p);
        self.len += 1;
    }

    /// Re-insert a retransmission at the front of its UE's deque (it is the
    /// oldest packet of that UE by construction).
    pub fn push_front(&mut self, p: Packet) {
        debug_assert_eq!(p.location, PacketLocation::RadioQueue);
        self.deques[p.ue].push_front(p);
        self.len += 1;
    }

    /// Called by the serving loop after packets were popped directly from a
    /// UE deque.
    pub fn note_removed(&mut self, n: usize) {
        self.len -= n;
    }

    /// Drop every packet that has waited strictly longer than the deadline.
    /// Returns the number of packets dropped.
    pub fn expire_drops(&mut self, now_s: f64, deadline_s: f64) -> u64 {
        let mut dropped = 0;
        for dq in self.deques.iter_mut() {
            while let Some(front) = dq.front() {
                if now_s - front.arrival_s > deadline_s {
                    dq.pop_front();
                    dropped += 1;
                } else {
                    break;
                }
            }
        }
        self.len -= dropped as usize;
        dropped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Substream};
    use crate::scenario::parse_scenario;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn per_ue_arrival_rate_matches_the_load_split() {
        // 2 Mbps over 10 UEs of 400-bit packets: 500 pkt/s per UE,
        // 0.0714 per TTI of 1/7000 s.
        let s = parse_scenario("").unwrap();
        let lambda = s.urllc_load_bps / (s.packet_bits(Slice::Urllc) as f64 * 10.0);
        assert!((lambda - 500.0).abs() < 1e-9);
        assert!((lambda * s.tti_s - 0.071428).abs() < 1e-4);
    }

    #[test]
    fn zero_load_generates_nothing() {
        let mut s = parse_scenario("").unwrap();
        s.urllc_load_bps = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut id = 0;
        for tti in 0..100 {
            assert!(generate_arrivals(&s, Slice::Urllc, &mut rng, tti, &mut id).is_empty());
        }
    }

    #[test]
    fn long_run_mean_arrivals_match_poisson_intensity() {
        // law of large numbers: 1e6 TTIs within 2% of lambda * tti
        let s = parse_scenario("").unwrap();
        let mut rng = substream(7, Substream::Traffic);
        let mut id = 0;
        let ttis = 1_000_000u64;
        let mut total = 0u64;
        for tti in 0..ttis {
            total += generate_arrivals(&s, Slice::Urllc, &mut rng, tti, &mut id).len() as u64;
        }
        let mean_per_tti = total as f64 / ttis as f64;
        let expect = s.urllc_load_bps / s.packet_bits(Slice::Urllc) as f64 * s.tti_s;
        let rel = (mean_per_tti - expect).abs() / expect;
        assert!(rel < 0.02, "mean {mean_per_tti} vs {expect} (rel {rel})");
    }

    #[test]
    fn arrivals_are_deterministic_per_seed() {
        let s = parse_scenario("").unwrap();
        let run = |seed| {
            let mut rng = substream(seed, Substream::Traffic);
            let mut id = 0;
            let mut ids = Vec::new();
            for tti in 0..2000 {
                for p in generate_arrivals(&s, Slice::Embb, &mut rng, tti, &mut id) {
                    ids.push((tti, p.ue));
                }
            }
            ids
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn harq_error_free_always_delivers() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            assert_eq!(harq_resolve(0, 1, 0.0, &mut rng), HarqOutcome::Delivered);
        }
    }

    #[test]
    fn harq_certain_failure_drops_after_exactly_two_attempts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(harq_resolve(0, 1, 1.0, &mut rng), HarqOutcome::ScheduleRetx);
        assert_eq!(harq_resolve(1, 1, 1.0, &mut rng), HarqOutcome::DropAfterRetx);
    }

    #[test]
    fn harq_drop_fraction_approximates_squared_error_probability() {
        // two independent failures at p = 0.1: expected 0.01 +/- 0.002
        let mut rng = substream(11, Substream::Harq);
        let n = 100_000;
        let mut drops = 0;
        for _ in 0..n {
            match harq_resolve(0, 1, 0.1, &mut rng) {
                HarqOutcome::Delivered => {}
                HarqOutcome::ScheduleRetx => {
                    if harq_resolve(1, 1, 0.1, &mut rng) == HarqOutcome::DropAfterRetx {
                        drops += 1;
                    }
                }
                HarqOutcome::DropAfterRetx => unreachable!("first attempt cannot exhaust"),
            }
        }
        let frac = drops as f64 / n as f64;
        assert!((frac - 0.01).abs() < 0.002, "drop fraction {frac}");
    }

    #[test]
    fn expire_drops_follows_the_strict_deadline_rule() {
        let mut q = SliceQueue::new(Slice::Urllc, 2);
        assert_eq!(q.expire_drops(1.0, 0.01), 0);
        q.push(Packet::new(0, Slice::Urllc, 0, 400, 0.0));
        q.push(Packet::new(1, Slice::Urllc, 1, 400, 0.005));
        // aged 11 ms vs 10 ms deadline: dropped
        assert_eq!(q.expire_drops(0.011, 0.01), 1);
        assert_eq!(q.len(), 1);
        // aged exactly the deadline: kept (strict >)
        assert_eq!(q.expire_drops(0.015, 0.01), 0);
        assert_eq!(q.len(), 1);
    }
}
