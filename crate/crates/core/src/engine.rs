//! Per-TTI simulation loop across all cells: observe, act, enact the
//! allocation, step radio/compute dynamics, score the reward and update the
//! agent — all under seeded, reproducible randomness.
//!
//! Each cell is an independent agent. Cells are stepped in ascending id
//! order every TTI; inter-cell coupling goes exclusively through the
//! previous TTI's RB occupancy snapshot, which makes the outcome
//! independent of that order. Constraint violations (RB exclusivity, RB
//! and compute budgets, packet conservation) abort the run: they are bugs,
//! not runtime conditions.

use std::sync::Arc;

use thiserror::Error;

use crate::agents::{
    q_update, select_action, transfer_update, AgentConfig, AgentKind, QTable, SliceState,
    TransferMode,
};
use crate::channel::{ChannelModel, LinkBudget};
use crate::compute::{CloudPath, ComputeTask, MecServer};
use crate::rng::{substream, Substream};
use crate::scenario::Scenario;
use crate::slicing::{pf_schedule, serve_ue, AllocationAction, PfState, SliceTti, TtiReport};
use crate::traffic::{
    generate_arrivals, harq_resolve, HarqOutcome, Packet, PacketLocation, Slice, SliceQueue,
};

/// The three allocation schemes under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Case {
    /// Radio-only tabular Q-learning; no edge server is deployed.
    Expert,
    /// Joint allocator bootstrapped from the expert's table.
    Ktra,
    /// Joint allocator learning from scratch.
    Qlra,
}

impl Case {
    pub const ALL: [Case; 3] = [Case::Expert, Case::Ktra, Case::Qlra];

    pub fn name(self) -> &'static str {
        match self {
            Case::Expert => "expert",
            Case::Ktra => "ktra",
            Case::Qlra => "qlra",
        }
    }

    pub fn agent_kind(self) -> AgentKind {
        match self {
            Case::Expert => AgentKind::Expert,
            Case::Ktra | Case::Qlra => AgentKind::Learner,
        }
    }
}

impl std::str::FromStr for Case {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "expert" => Ok(Case::Expert),
            "ktra" => Ok(Case::Ktra),
            "qlra" => Ok(Case::Qlra),
            other => Err(format!("unknown case `{other}` (expected expert|ktra|qlra)")),
        }
    }
}

impl std::fmt::Display for Case {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("case ktra requires one expert table per cell")]
    MissingExpertTables,
    #[error("expert table {index}: {msg}")]
    ExpertTableMismatch { index: usize, msg: String },
}

/// Full trace record of one packet that finished its compute stage.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedPacket {
    pub packet_id: u64,
    pub bs: usize,
    pub slice: Slice,
    pub ue: usize,
    pub arrival_s: f64,
    pub service_start_s: f64,
    pub first_attempt_done_s: f64,
    pub tx_done_s: f64,
    pub compute_done_s: f64,
    pub on_mec: bool,
    pub delay_s: f64,
}

/// Everything a finished run hands back: the per-cell per-TTI metric
/// stream and the trained tables.
#[derive(Debug)]
pub struct RunArtifacts {
    pub reports: Vec<TtiReport>,
    pub qtables: Vec<QTable>,
    /// Per-packet trace, only when requested.
    pub completions: Option<Vec<CompletedPacket>>,
}

#[derive(Debug, Default, Clone)]
struct Counters {
    arrivals: u64,
    done: u64,
    dropped_deadline: u64,
    dropped_harq: u64,
}

/// Radio-stage timestamps kept aside for the packet trace.
#[derive(Debug, Clone, Copy)]
struct RadioTimes {
    service_start_s: f64,
    first_attempt_done_s: f64,
    tx_done_s: f64,
}

struct Cell {
    queues: [SliceQueue; 2],
    awaiting_retx: Vec<Packet>,
    mec: MecServer,
    cloud: CloudPath,
    pf: PfState,
    qtable: QTable,
    expert: Option<Arc<QTable>>,
    window: Vec<TtiReport>,
    last_delay_ms: f64,
    counters: Counters,
}

impl Cell {
    fn observe(&self, cap: u32) -> SliceState {
        SliceState {
            q_embb: (self.queues[0].len() as u32).min(cap),
            q_urllc: (self.queues[1].len() as u32).min(cap),
        }
    }

    fn in_flight(&self) -> u64 {
        (self.queues[0].len()
            + self.queues[1].len()
            + self.awaiting_retx.len()
            + self.mec.total_len()
            + self.cloud.in_flight()) as u64
    }
}

/// One seeded simulation run. Strictly sequential internally; distinct runs
/// share nothing mutable and may execute concurrently.
pub struct SimRun {
    scenario: Scenario,
    case: Case,
    cfg: AgentConfig,
    channel: ChannelModel,
    budget: LinkBudget,
    rbg_ranges: Vec<std::ops::Range<usize>>,
    cells: Vec<Cell>,
    rb_usage_prev: Vec<Vec<bool>>,
    traffic_rng: rand_chacha::ChaCha8Rng,
    harq_rng: rand_chacha::ChaCha8Rng,
    policy_rng: rand_chacha::ChaCha8Rng,
    next_packet_id: u64,
    tti: u64,
    trace: bool,
    radio_times: std::collections::HashMap<u64, RadioTimes>,
    completions: Vec<CompletedPacket>,
}

impl SimRun {
    /// Build a run. KTRA requires one expert table per cell; the expert
    /// case forces the edge capacity to zero so every task takes the cloud
    /// path.
    pub fn new(
        scenario: &Scenario,
        case: Case,
        transfer_mode: TransferMode,
        seed: u64,
        expert_tables: Option<Vec<Arc<QTable>>>,
    ) -> Result<SimRun, EngineError> {
        let experts = match (case, expert_tables) {
            (Case::Ktra, Some(tables)) => {
                if tables.len() != scenario.n_bs {
                    return Err(EngineError::MissingExpertTables);
                }
                for (i, t) in tables.iter().enumerate() {
                    if t.kind() != AgentKind::Expert {
                        return Err(EngineError::ExpertTableMismatch {
                            index: i,
                            msg: format!("kind is {}, expected expert", t.kind().name()),
                        });
                    }
                    if t.n_rbgs() != scenario.n_rbgs() as u32 {
                        return Err(EngineError::ExpertTableMismatch {
                            index: i,
                            msg: format!(
                                "table covers {} RBGs, scenario has {}",
                                t.n_rbgs(),
                                scenario.n_rbgs()
                            ),
                        });
                    }
                    if t.scenario_fingerprint() != scenario.fingerprint() {
                        log::warn!(
                            "expert table {i} was trained under a different scenario \
                             (fingerprint {:016x} vs {:016x}); transferring anyway",
                            t.scenario_fingerprint(),
                            scenario.fingerprint()
                        );
                    }
                }
                tables.into_iter().map(Some).collect::<Vec<_>>()
            }
            (Case::Ktra, None) => return Err(EngineError::MissingExpertTables),
            (_, _) => vec![None; scenario.n_bs],
        };

        let transfer = match case {
            Case::Ktra => match transfer_mode {
                TransferMode::None => TransferMode::Additive,
                other => other,
            },
            _ => TransferMode::None,
        };
        let mut channel_rng = substream(seed, Substream::Channel);
        let channel = ChannelModel::new(scenario, &mut channel_rng);
        let mec_capacity = match case {
            Case::Expert => 0.0,
            _ => scenario.mec_capacity_hz,
        };
        let cells = experts
            .into_iter()
            .map(|expert| Cell {
                queues: [
                    SliceQueue::new(Slice::Embb, scenario.ues_per_cell()),
                    SliceQueue::new(Slice::Urllc, scenario.ues_per_cell()),
                ],
                awaiting_retx: Vec::new(),
                mec: MecServer::new(mec_capacity),
                cloud: CloudPath::new(scenario.reward_window_ttis),
                pf: PfState::new(scenario.ues_per_cell()),
                qtable: QTable::new(case.agent_kind(), scenario),
                expert,
                window: Vec::with_capacity(scenario.reward_window_ttis + 1),
                last_delay_ms: 0.0,
                counters: Counters::default(),
            })
            .collect();

        Ok(SimRun {
            scenario: scenario.clone(),
            case,
            cfg: AgentConfig::from_scenario(scenario, transfer),
            budget: LinkBudget::from_scenario(scenario),
            rbg_ranges: scenario.rbg_rb_ranges(),
            channel,
            cells,
            rb_usage_prev: vec![vec![false; scenario.bandwidth_rbs]; scenario.n_bs],
            traffic_rng: substream(seed, Substream::Traffic),
            harq_rng: substream(seed, Substream::Harq),
            policy_rng: substream(seed, Substream::Policy),
            next_packet_id: 0,
            tti: 0,
            trace: false,
            radio_times: std::collections::HashMap::new(),
            completions: Vec::new(),
        })
    }

    /// Record full per-packet timestamp traces (costs memory; off by default).
    pub fn set_trace(&mut self, on: bool) {
        self.trace = on;
    }

    pub fn tti(&self) -> u64 {
        self.tti
    }

    pub fn case(&self) -> Case {
        self.case
    }

    /// Advance one TTI for every cell; returns one report per cell.
    pub fn step_tti(&mut self) -> Vec<TtiReport> {
        let tti = self.tti;
        let s = &self.scenario;
        let tti_s = s.tti_s;
        let t0 = tti as f64 * tti_s;
        let t_end = (tti + 1) as f64 * tti_s;
        let ues_per_cell = s.ues_per_cell();
        let n_rbgs = s.n_rbgs();
        let csteps = s.compute_fraction_steps;
        let cap = s.state_queue_cap;

        let mut new_usage = vec![vec![false; s.bandwidth_rbs]; s.n_bs];
        let mut reports = Vec::with_capacity(s.n_bs);

        for bs in 0..s.n_bs {
            let cell = &mut self.cells[bs];
            let state = self.channel.state_at(tti, &self.rb_usage_prev);
            let mut slices_tti = [SliceTti::default(), SliceTti::default()];

            // Retransmissions whose round trip elapsed rejoin the radio queue.
            let mut ready: Vec<Packet> = Vec::new();
            let mut i = 0;
            while i < cell.awaiting_retx.len() {
                if cell.awaiting_retx[i].retx_ready_tti <= tti {
                    ready.push(cell.awaiting_retx.swap_remove(i));
                } else {
                    i += 1;
                }
            }
            ready.sort_by(|a, b| {
                (a.ue, a.arrival_s, a.id)
                    .partial_cmp(&(b.ue, b.arrival_s, b.id))
                    .expect("finite timestamps")
            });
            for mut p in ready.into_iter().rev() {
                p.location = PacketLocation::RadioQueue;
                cell.queues[p.slice.index()].push_front(p);
            }

            // Fresh Poisson arrivals.
            for slice in Slice::ALL {
                let arrivals =
                    generate_arrivals(s, slice, &mut self.traffic_rng, tti, &mut self.next_packet_id);
                slices_tti[slice.index()].arrivals = arrivals.len() as u32;
                cell.counters.arrivals += arrivals.len() as u64;
                for p in arrivals {
                    cell.queues[slice.index()].push(p);
                }
            }

            // Head-of-line deadline expiry.
            for slice in Slice::ALL {
                let dropped =
                    cell.queues[slice.index()].expire_drops(t0, s.drop_deadline_s(slice));
                slices_tti[slice.index()].deadline_drops += dropped as u32;
                cell.counters.dropped_deadline += dropped;
            }

            // Observe, pick the inter-slice action.
            let state_before = cell.observe(cap);
            let action_idx =
                select_action(&cell.qtable, state_before, &self.cfg, &mut self.policy_rng);
            let action: AllocationAction = cell.qtable.actions()[action_idx];

            // Enact the radio split: PF inside each slice, then serve.
            let split = action.r_embb as usize;
            let mut rate_scratch = vec![vec![0.0f64; n_rbgs]; ues_per_cell];
            for slice in Slice::ALL {
                let granted: Vec<usize> = match slice {
                    Slice::Embb => (0..split).collect(),
                    Slice::Urllc => (split..n_rbgs).collect(),
                };
                let queue = &mut cell.queues[slice.index()];
                let candidates: Vec<usize> =
                    s.slice_ue_range(slice).filter(|&ue| queue.ue_has_data(ue)).collect();
                let mut drained = vec![0.0f64; ues_per_cell];
                if !granted.is_empty() && !candidates.is_empty() {
                    for &ue in &candidates {
                        let gid = bs * ues_per_cell + ue;
                        for &rbg in &granted {
                            rate_scratch[ue][rbg] = state.link_capacity_bps(
                                bs,
                                gid,
                                self.rbg_ranges[rbg].clone(),
                                &self.budget,
                            );
                        }
                    }
                    let rate = |ue: usize, rbg: usize| rate_scratch[ue][rbg];
                    let assignment = pf_schedule(&granted, &candidates, &rate, &cell.pf);

                    // Aggregate RBGs per UE, mark RB occupancy, enforce
                    // one-UE-per-RB across the whole cell.
                    let mut per_ue_cap = vec![0.0f64; ues_per_cell];
                    let mut scheduled: Vec<usize> = Vec::new();
                    for &(rbg, ue) in &assignment {
                        if per_ue_cap[ue] == 0.0 {
                            scheduled.push(ue);
                        }
                        per_ue_cap[ue] += rate_scratch[ue][rbg];
                        for rb in self.rbg_ranges[rbg].clone() {
                            assert!(
                                !new_usage[bs][rb],
                                "constraint violation: RB {rb} of cell {bs} assigned twice in TTI {tti}"
                            );
                            new_usage[bs][rb] = true;
                        }
                    }
                    scheduled.sort_unstable();

                    for &ue in &scheduled {
                        let result = serve_ue(queue.ue_queue_mut(ue), per_ue_cap[ue], t0, t_end);
                        queue.note_removed(result.finished.len());
                        drained[ue] = result.drained_bits;
                        for (mut p, finish) in result.finished {
                            match harq_resolve(
                                p.retx_count,
                                s.harq_max_retx,
                                s.harq_err_prob,
                                &mut self.harq_rng,
                            ) {
                                HarqOutcome::Delivered => {
                                    if p.first_attempt_done_s.is_none() {
                                        p.first_attempt_done_s = Some(finish);
                                    }
                                    p.tx_done_s = Some(finish);
                                    p.location = PacketLocation::ComputeQueue;
                                    slices_tti[slice.index()].served_bits += p.size_bits;
                                    if self.trace {
                                        self.radio_times.insert(
                                            p.id,
                                            RadioTimes {
                                                service_start_s: p.service_start_s.unwrap_or(finish),
                                                first_attempt_done_s: p
                                                    .first_attempt_done_s
                                                    .unwrap_or(finish),
                                                tx_done_s: finish,
                                            },
                                        );
                                    }
                                    cell.mec.enqueue(ComputeTask::new(
                                        p.id,
                                        slice,
                                        ue,
                                        p.size_bits,
                                        s.cycles_per_bit,
                                        p.arrival_s,
                                        finish,
                                    ));
                                }
                                HarqOutcome::ScheduleRetx => {
                                    if p.first_attempt_done_s.is_none() {
                                        p.first_attempt_done_s = Some(finish);
                                    }
                                    p.retx_count += 1;
                                    p.residual_bits = p.size_bits as f64;
                                    p.retx_ready_tti = tti + s.harq_rtt_ttis;
                                    p.location = PacketLocation::AwaitingRetx;
                                    cell.awaiting_retx.push(p);
                                }
                                HarqOutcome::DropAfterRetx => {
                                    slices_tti[slice.index()].harq_drops += 1;
                                    cell.counters.dropped_harq += 1;
                                }
                            }
                        }
                    }
                }
                // PF averages decay for unserved UEs and fold in service for
                // the scheduled ones.
                for ue in s.slice_ue_range(slice) {
                    cell.pf.update(ue, drained[ue], tti_s);
                }
            }

            // Compute stage: shares from the action, one TTI of processing,
            // then the offload rule and cloud completions.
            let (share_embb, share_urllc) = action.compute_fractions(csteps);
            cell.mec.set_shares(share_embb, share_urllc);
            let mut finished_tasks = cell.mec.step(t0, t_end);
            for task in cell.mec.offload_expired(t_end, s.offload_wait_s) {
                let slice_idx = task.slice.index();
                match cell.cloud.admit(task, t_end, s) {
                    Ok(_done) => {}
                    Err(_unstable) => {
                        // Saturated backhaul: the task counts as deadline-dropped.
                        slices_tti[slice_idx].deadline_drops += 1;
                        cell.counters.dropped_deadline += 1;
                    }
                }
            }
            finished_tasks.extend(cell.cloud.pop_completed(t_end));
            cell.cloud.end_tti();
            for (task, done_s) in finished_tasks {
                let delay = done_s - task.arrival_s;
                slices_tti[task.slice.index()].completed_delays_s.push(delay);
                cell.counters.done += 1;
                if self.trace {
                    let radio = self.radio_times.remove(&task.packet_id);
                    let rt = radio.unwrap_or(RadioTimes {
                        service_start_s: task.enqueue_s,
                        first_attempt_done_s: task.enqueue_s,
                        tx_done_s: task.enqueue_s,
                    });
                    self.completions.push(CompletedPacket {
                        packet_id: task.packet_id,
                        bs,
                        slice: task.slice,
                        ue: task.ue,
                        arrival_s: task.arrival_s,
                        service_start_s: rt.service_start_s,
                        first_attempt_done_s: rt.first_attempt_done_s,
                        tx_done_s: rt.tx_done_s,
                        compute_done_s: done_s,
                        on_mec: task.on_mec,
                        delay_s: delay,
                    });
                }
            }

            // Assemble the report and score the trailing window.
            for slice in Slice::ALL {
                slices_tti[slice.index()].queue_len = cell.queues[slice.index()].len() as u32;
            }
            let mut report = TtiReport { tti, bs, slices: slices_tti, reward: 0.0 };
            // The scoring window is the current report plus the previous
            // `reward_window_ttis - 1` ones.
            let (reward_value, delay_used) = {
                let mut refs: Vec<&TtiReport> = cell.window.iter().collect();
                refs.push(&report);
                crate::slicing::reward(&refs, s, cell.last_delay_ms)
            };
            report.reward = reward_value;
            cell.last_delay_ms = delay_used;
            cell.window.push(report.clone());
            if cell.window.len() >= s.reward_window_ttis {
                cell.window.remove(0);
            }

            // Learn from the transition; the next state is observed after
            // this TTI's dynamics, before the next TTI's arrivals.
            let state_after = cell.observe(cap);
            match self.cfg.transfer {
                TransferMode::None => {
                    q_update(
                        &mut cell.qtable,
                        state_before,
                        action_idx,
                        reward_value,
                        state_after,
                        &self.cfg,
                    );
                }
                _ => {
                    let expert: &QTable =
                        cell.expert.as_deref().expect("ktra carries expert tables");
                    transfer_update(
                        &mut cell.qtable,
                        expert,
                        state_before,
                        action_idx,
                        reward_value,
                        state_after,
                        &self.cfg,
                    );
                }
            }

            // Budget and conservation checks, every TTI.
            let rbs_used = new_usage[bs].iter().filter(|&&u| u).count();
            assert!(
                rbs_used <= s.bandwidth_rbs,
                "constraint violation: {rbs_used} RBs allocated in cell {bs}"
            );
            let c = &cell.counters;
            let accounted = cell.in_flight() + c.done + c.dropped_deadline + c.dropped_harq;
            assert!(
                c.arrivals == accounted,
                "packet conservation violated in cell {bs} at TTI {tti}: \
                 {} arrivals vs {accounted} accounted",
                c.arrivals
            );

            reports.push(report);
        }

        self.rb_usage_prev = new_usage;
        self.tti += 1;
        reports
    }

    /// Consume the run, handing back trained tables and traces.
    pub fn finish(self, reports: Vec<TtiReport>) -> RunArtifacts {
        RunArtifacts {
            reports,
            qtables: self.cells.into_iter().map(|c| c.qtable).collect(),
            completions: self.trace.then_some(self.completions),
        }
    }
}

/// Run one case for a number of TTIs.
pub fn run_case(
    scenario: &Scenario,
    case: Case,
    ttis: u64,
    transfer_mode: TransferMode,
    seed: u64,
    expert_tables: Option<Vec<Arc<QTable>>>,
) -> Result<RunArtifacts, EngineError> {
    run_case_traced(scenario, case, ttis, transfer_mode, seed, expert_tables, false)
}

/// As [`run_case`], optionally collecting the per-packet completion trace.
pub fn run_case_traced(
    scenario: &Scenario,
    case: Case,
    ttis: u64,
    transfer_mode: TransferMode,
    seed: u64,
    expert_tables: Option<Vec<Arc<QTable>>>,
    trace: bool,
) -> Result<RunArtifacts, EngineError> {
    let mut run = SimRun::new(scenario, case, transfer_mode, seed, expert_tables)?;
    run.set_trace(trace);
    let mut reports = Vec::with_capacity((ttis as usize).saturating_mul(scenario.n_bs));
    for t in 0..ttis {
        reports.extend(run.step_tti());
        if t % 10_000 == 9_999 {
            log::debug!("case {} seed {seed}: TTI {}/{ttis}", case.name(), t + 1);
        }
    }
    Ok(run.finish(reports))
}
