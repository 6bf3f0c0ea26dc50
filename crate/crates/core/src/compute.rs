//! Compute stage: MEC processing, the cloud offload path and the offload
//! decision rule.
//!
//! Tasks default to the edge server of their cell. Any task whose MEC queue
//! wait exceeds the configured threshold is pushed over the backhaul to the
//! central cloud, where the upload is an M/M/1 queue (service rate
//! backhaul / packet size, arrival rate measured online over the trailing
//! reward window) plus a fixed cloud queueing delay. The downlink and cloud
//! processing times are negligible and not modeled.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use thiserror::Error;

use crate::scenario::Scenario;
use crate::traffic::Slice;

#[derive(Debug, Error, PartialEq)]
pub enum ComputeError {
    #[error("cloud upload queue unstable: arrival rate {lambda_pps} pps >= service rate {mu_pps} pps")]
    UnstableCloud { lambda_pps: f64, mu_pps: f64 },
}

/// One computation task, created when its packet clears the radio link.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputeTask {
    pub packet_id: u64,
    pub slice: Slice,
    pub ue: usize,
    pub size_bits: u64,
    pub cycles: f64,
    pub remaining_cycles: f64,
    /// Original packet arrival, for end-to-end delay accounting.
    pub arrival_s: f64,
    pub enqueue_s: f64,
    /// True while the task is destined for the MEC server.
    pub on_mec: bool,
}

impl ComputeTask {
    pub fn new(
        packet_id: u64,
        slice: Slice,
        ue: usize,
        size_bits: u64,
        cycles_per_bit: f64,
        arrival_s: f64,
        enqueue_s: f64,
    ) -> Self {
        let cycles = size_bits as f64 * cycles_per_bit;
        ComputeTask {
            packet_id,
            slice,
            ue,
            size_bits,
            cycles,
            remaining_cycles: cycles,
            arrival_s,
            enqueue_s,
            on_mec: true,
        }
    }
}

/// Pure processing delay of a task running alone on a share of the server.
pub fn edge_delay_s(cycles: f64, share: f64, capacity_hz: f64) -> f64 {
    let rate = share * capacity_hz;
    if rate <= 0.0 {
        f64::INFINITY
    } else {
        cycles / rate
    }
}

/// Cloud path delay: M/M/1 upload wait plus the fixed cloud queueing delay.
/// Errors when the measured arrival rate saturates the backhaul.
pub fn cloud_delay_s(
    scenario: &Scenario,
    packet_bits: u64,
    arrival_rate_pps: f64,
) -> Result<f64, ComputeError> {
    let mu = scenario.backhaul_bps / packet_bits as f64;
    if arrival_rate_pps >= mu {
        return Err(ComputeError::UnstableCloud { lambda_pps: arrival_rate_pps, mu_pps: mu });
    }
    Ok(1.0 / (mu - arrival_rate_pps) + scenario.cloud_queue_s)
}

/// Edge server of one cell: a capacity in cycles per second split between
/// the two slices by the current action, with one FIFO task queue per slice.
#[derive(Debug, Clone)]
pub struct MecServer {
    pub capacity_hz: f64,
    shares: [f64; 2],
    queues: [VecDeque<ComputeTask>; 2],
}

impl MecServer {
    pub fn new(capacity_hz: f64) -> Self {
        MecServer {
            capacity_hz,
            shares: [0.5, 0.5],
            queues: [VecDeque::new(), VecDeque::new()],
        }
    }

    /// Set the per-slice capacity shares for the current TTI.
    pub fn set_shares(&mut self, share_embb: f64, share_urllc: f64) {
        assert!(
            share_embb >= 0.0 && share_urllc >= 0.0 && share_embb + share_urllc <= 1.0 + 1e-9,
            "compute shares must be non-negative and sum to at most 1"
        );
        self.shares = [share_embb, share_urllc];
    }

    pub fn share(&self, slice: Slice) -> f64 {
        self.shares[slice.index()]
    }

    pub fn enqueue(&mut self, task: ComputeTask) {
        debug_assert!(task.on_mec);
        self.queues[task.slice.index()].push_back(task);
    }

    pub fn queue_len(&self, slice: Slice) -> usize {
        self.queues[slice.index()].len()
    }

    pub fn total_len(&self) -> usize {
        self.queues[0].len() + self.queues[1].len()
    }

    /// Run one TTI of processing. Each slice's head-of-line task consumes
    /// its share of the capacity; cycles left in the TTI roll over to the
    /// next task of the same slice. Completed tasks are returned with their
    /// sub-TTI completion time.
    pub fn step(&mut self, t0: f64, t_end: f64) -> Vec<(ComputeTask, f64)> {
        let mut done = Vec::new();
        for slice in Slice::ALL {
            let rate = self.shares[slice.index()] * self.capacity_hz;
            if rate <= 0.0 {
                continue;
            }
            let q = &mut self.queues[slice.index()];
            let mut cursor = t0;
            while let Some(head) = q.front_mut() {
                let start = cursor.max(head.enqueue_s);
                if start >= t_end {
                    break;
                }
                let finish = start + head.remaining_cycles / rate;
                if finish <= t_end {
                    let mut task = q.pop_front().expect("head exists");
                    task.remaining_cycles = 0.0;
                    cursor = finish;
                    done.push((task, finish));
                } else {
                    head.remaining_cycles -= (t_end - start) * rate;
                    break;
                }
            }
        }
        done
    }

    /// Remove every queued task whose wait exceeds the offload threshold
    /// (strictly), in slice then FIFO order. The caller sends them to the
    /// cloud.
    pub fn offload_expired(&mut self, now_s: f64, wait_threshold_s: f64) -> Vec<ComputeTask> {
        let mut out = Vec::new();
        for slice in Slice::ALL {
            let q = &mut self.queues[slice.index()];
            let mut i = 0;
            while i < q.len() {
                if now_s - q[i].enqueue_s > wait_threshold_s {
                    let mut task = q.remove(i).expect("index in range");
                    task.on_mec = false;
                    out.push(task);
                } else {
                    i += 1;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct CloudInflight {
    done_s: f64,
    seq: u64,
    task: ComputeTask,
}

impl PartialEq for CloudInflight {
    fn eq(&self, other: &Self) -> bool {
        self.done_s == other.done_s && self.seq == other.seq
    }
}
impl Eq for CloudInflight {}
impl PartialOrd for CloudInflight {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for CloudInflight {
    fn cmp(&self, other: &Self) -> Ordering {
        self.done_s
            .total_cmp(&other.done_s)
            .then(self.seq.cmp(&other.seq))
    }
}

/// Per-cell backhaul and cloud bookkeeping: tasks in flight to the cloud
/// and the arrival-rate estimate over the trailing reward window.
#[derive(Debug, Clone)]
pub struct CloudPath {
    inflight: BinaryHeap<std::cmp::Reverse<CloudInflight>>,
    window: VecDeque<u32>,
    window_len: usize,
    admitted_this_tti: u32,
    seq: u64,
}

impl CloudPath {
    pub fn new(window_len: usize) -> Self {
        CloudPath {
            inflight: BinaryHeap::new(),
            window: VecDeque::new(),
            window_len,
            admitted_this_tti: 0,
            seq: 0,
        }
    }

    /// Measured cloud-bound packet rate over the trailing window.
    pub fn lambda_pps(&self, tti_s: f64) -> f64 {
        if self.window.is_empty() {
            return 0.0;
        }
        let total: u64 = self.window.iter().map(|&c| u64::from(c)).sum();
        total as f64 / (self.window.len() as f64 * tti_s)
    }

    /// Send a task over the backhaul. On success returns its completion
    /// time; an unstable upload queue rejects the task, which the engine
    /// counts as a deadline drop.
    pub fn admit(
        &mut self,
        task: ComputeTask,
        now_s: f64,
        scenario: &Scenario,
    ) -> Result<f64, ComputeError> {
        let lambda = self.lambda_pps(scenario.tti_s);
        let delay = cloud_delay_s(scenario, task.size_bits, lambda)?;
        let done_s = now_s + delay;
        self.admitted_this_tti += 1;
        self.seq += 1;
        self.inflight.push(std::cmp::Reverse(CloudInflight { done_s, seq: self.seq, task }));
        Ok(done_s)
    }

    /// Pop every task whose cloud completion lands at or before `t_end`.
    pub fn pop_completed(&mut self, t_end: f64) -> Vec<(ComputeTask, f64)> {
        let mut out = Vec::new();
        while let Some(std::cmp::Reverse(head)) = self.inflight.peek() {
            if head.done_s <= t_end {
                let std::cmp::Reverse(item) = self.inflight.pop().expect("peeked");
                out.push((item.task, item.done_s));
            } else {
                break;
            }
        }
        out
    }

    /// Close the TTI's arrival-rate accounting.
    pub fn end_tti(&mut self) {
        self.window.push_back(self.admitted_this_tti);
        self.admitted_this_tti = 0;
        while self.window.len() > self.window_len {
            self.window.pop_front();
        }
    }

    pub fn in_flight(&self) -> usize {
        self.inflight.len()
    }
}
