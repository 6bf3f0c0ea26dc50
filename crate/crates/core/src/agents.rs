//! Tabular agents: epsilon-greedy action selection, Q-learning updates,
//! the knowledge-transfer update with its state/action map functions, and
//! the Q-table file format.
//!
//! A table is dense in memory (the state grid is small) but persisted
//! sparsely: only pairs that have ever been updated appear in the file,
//! sorted by key so repeated saves are byte-identical.

use std::io::{self, BufRead, Write};

use rand::Rng;
use thiserror::Error;

use crate::scenario::{action_space, Scenario};
use crate::slicing::{enumerate_actions, AllocationAction};

/// Queue-length pair observed by the agents, clipped to the state cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SliceState {
    pub q_embb: u32,
    pub q_urllc: u32,
}

/// Expert tables hold radio-only actions; learner tables hold joint ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    Expert,
    Learner,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Expert => "expert",
            AgentKind::Learner => "learner",
        }
    }
}

/// How a learner consumes the expert table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransferMode {
    /// Plain Q-learning, no expert.
    #[default]
    None,
    /// Add the mapped expert value on every update.
    Additive,
    /// Seed a pair from the expert on its first update, then learn plainly.
    InitOnly,
}

#[derive(Debug, Clone, Copy)]
pub struct AgentConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub transfer: TransferMode,
}

impl AgentConfig {
    pub fn from_scenario(s: &Scenario, transfer: TransferMode) -> Self {
        AgentConfig { alpha: s.lr_alpha, gamma: s.gamma, epsilon: s.epsilon, transfer }
    }
}

/// Map a learner state onto the expert's state space (identity: both agents
/// observe the same queue pair).
pub fn map_state(s: SliceState) -> SliceState {
    s
}

/// Map a learner action onto the expert's action space by dropping the
/// compute components.
pub fn map_action(a: &AllocationAction) -> AllocationAction {
    assert!(a.is_joint(), "map_action expects a joint (learner) action");
    a.radio_projection()
}

#[derive(Debug, Error)]
pub enum QTableError {
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("unsupported version `{0}`")]
    Version(String),
    #[error("line {line}: action arity does not match table kind")]
    Arity { line: usize },
    #[error("metadata mismatch: {0}")]
    Metadata(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Sparse-on-disk, dense-in-memory state-action value store shared by the
/// expert and learner agents.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    kind: AgentKind,
    n_rbgs: u32,
    csteps: Option<u32>,
    state_cap: u32,
    scenario_fingerprint: u64,
    actions: Vec<AllocationAction>,
    values: Vec<f64>,
    visited: Vec<bool>,
}

impl QTable {
    pub fn new(kind: AgentKind, scenario: &Scenario) -> Self {
        let actions = action_space(scenario, kind == AgentKind::Learner);
        let csteps = (kind == AgentKind::Learner).then_some(scenario.compute_fraction_steps);
        let cap = scenario.state_queue_cap;
        let n_states = ((cap + 1) * (cap + 1)) as usize;
        QTable {
            kind,
            n_rbgs: scenario.n_rbgs() as u32,
            csteps,
            state_cap: cap,
            scenario_fingerprint: scenario.fingerprint(),
            values: vec![0.0; n_states * actions.len()],
            visited: vec![false; n_states * actions.len()],
            actions,
        }
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    pub fn actions(&self) -> &[AllocationAction] {
        &self.actions
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn state_cap(&self) -> u32 {
        self.state_cap
    }

    pub fn scenario_fingerprint(&self) -> u64 {
        self.scenario_fingerprint
    }

    pub fn n_rbgs(&self) -> u32 {
        self.n_rbgs
    }

    pub fn csteps(&self) -> Option<u32> {
        self.csteps
    }

    fn state_index(&self, s: SliceState) -> usize {
        debug_assert!(s.q_embb <= self.state_cap && s.q_urllc <= self.state_cap);
        (s.q_embb * (self.state_cap + 1) + s.q_urllc) as usize
    }

    fn offset(&self, s: SliceState, action_idx: usize) -> usize {
        self.state_index(s) * self.actions.len() + action_idx
    }

    /// Canonical index of an action in this table's ordering.
    pub fn action_index(&self, a: &AllocationAction) -> Option<usize> {
        let per_r = self.csteps.map_or(1, |k| k + 1);
        if a.r_embb + a.r_urllc != self.n_rbgs {
            return None;
        }
        let c = match (self.csteps, a.compute) {
            (None, None) => 0,
            (Some(k), Some((ce, cu))) if ce + cu == k => ce,
            _ => return None,
        };
        Some((a.r_embb * per_r + c) as usize)
    }

    pub fn value(&self, s: SliceState, action_idx: usize) -> f64 {
        self.values[self.offset(s, action_idx)]
    }

    pub fn is_visited(&self, s: SliceState, action_idx: usize) -> bool {
        self.visited[self.offset(s, action_idx)]
    }

    pub fn set(&mut self, s: SliceState, action_idx: usize, v: f64) {
        let off = self.offset(s, action_idx);
        self.values[off] = v;
        self.visited[off] = true;
    }

    /// Highest value among the state's actions (zero-initialized defaults
    /// included).
    pub fn max_value(&self, s: SliceState) -> f64 {
        let start = self.state_index(s) * self.actions.len();
        self.values[start..start + self.actions.len()]
            .iter()
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    /// First index attaining the maximum, in canonical action order.
    pub fn argmax(&self, s: SliceState) -> usize {
        let start = self.state_index(s) * self.actions.len();
        let row = &self.values[start..start + self.actions.len()];
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        best
    }

    /// Number of pairs that have ever been updated.
    pub fn visited_count(&self) -> usize {
        self.visited.iter().filter(|&&v| v).count()
    }

    /// Write the canonical text form: a version/kind header, the action
    /// space descriptor, then one sorted row per visited pair.
    pub fn save(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(
            w,
            "QTABLE v1 kind={} scenario={:016x}",
            self.kind.name(),
            self.scenario_fingerprint
        )?;
        match self.csteps {
            Some(k) => writeln!(w, "rbgs={} csteps={}", self.n_rbgs, k)?,
            None => writeln!(w, "rbgs={} csteps=none", self.n_rbgs)?,
        }
        let cap = self.state_cap;
        for qe in 0..=cap {
            for qu in 0..=cap {
                let s = SliceState { q_embb: qe, q_urllc: qu };
                for (i, a) in self.actions.iter().enumerate() {
                    let off = self.offset(s, i);
                    if !self.visited[off] {
                        continue;
                    }
                    match a.compute {
                        None => writeln!(
                            w,
                            "{},{};{},{};{}",
                            qe, qu, a.r_embb, a.r_urllc, self.values[off]
                        )?,
                        Some((ce, cu)) => writeln!(
                            w,
                            "{},{};{},{},{},{};{}",
                            qe, qu, a.r_embb, a.r_urllc, ce, cu, self.values[off]
                        )?,
                    }
                }
            }
        }
        Ok(())
    }

    /// Read a table back. The state cap is not part of the format and must
    /// be supplied by the caller (rows beyond it are rejected).
    pub fn load(r: impl BufRead, state_cap: u32) -> Result<QTable, QTableError> {
        let fmt = |line: usize, msg: String| QTableError::Format { line, msg };
        let mut lines = r.lines().enumerate();

        let (_, header) = lines
            .next()
            .ok_or_else(|| fmt(1, "empty stream".into()))?;
        let header = header?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("QTABLE") {
            return Err(fmt(1, "missing QTABLE magic".into()));
        }
        let version = parts.next().unwrap_or("");
        if version != "v1" {
            return Err(QTableError::Version(version.to_string()));
        }
        let kind = match parts.next().and_then(|t| t.strip_prefix("kind=")) {
            Some("expert") => AgentKind::Expert,
            Some("learner") => AgentKind::Learner,
            other => return Err(fmt(1, format!("bad kind token {other:?}"))),
        };
        let fingerprint = parts
            .next()
            .and_then(|t| t.strip_prefix("scenario="))
            .and_then(|h| u64::from_str_radix(h, 16).ok())
            .ok_or_else(|| fmt(1, "bad scenario fingerprint".into()))?;

        let (_, desc) = lines.next().ok_or_else(|| fmt(2, "missing descriptor line".into()))?;
        let desc = desc?;
        let mut parts = desc.split_whitespace();
        let n_rbgs: u32 = parts
            .next()
            .and_then(|t| t.strip_prefix("rbgs="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| fmt(2, "bad rbgs token".into()))?;
        let csteps = match parts.next().and_then(|t| t.strip_prefix("csteps=")) {
            Some("none") => None,
            Some(v) => Some(
                v.parse::<u32>().map_err(|_| fmt(2, format!("bad csteps value `{v}`")))?,
            ),
            None => return Err(fmt(2, "missing csteps token".into())),
        };
        match (kind, csteps) {
            (AgentKind::Expert, None) | (AgentKind::Learner, Some(_)) => {}
            _ => {
                return Err(QTableError::Metadata(format!(
                    "kind {} is inconsistent with csteps {:?}",
                    kind.name(),
                    csteps
                )))
            }
        }

        let actions = enumerate_actions(n_rbgs as usize, csteps);
        let n_states = ((state_cap + 1) * (state_cap + 1)) as usize;
        let mut table = QTable {
            kind,
            n_rbgs,
            csteps,
            state_cap,
            scenario_fingerprint: fingerprint,
            values: vec![0.0; n_states * actions.len()],
            visited: vec![false; n_states * actions.len()],
            actions,
        };

        for (i, line) in lines {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(';');
            let (state_f, action_f, value_f) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
                (Some(s), Some(a), Some(v), None) => (s, a, v),
                _ => return Err(fmt(line_no, "expected `state;action;value`".into())),
            };
            let state_parts: Vec<&str> = state_f.split(',').collect();
            if state_parts.len() != 2 {
                return Err(fmt(line_no, "state must be `q_embb,q_urllc`".into()));
            }
            let qe: u32 = state_parts[0].parse().map_err(|_| fmt(line_no, "bad q_embb".into()))?;
            let qu: u32 = state_parts[1].parse().map_err(|_| fmt(line_no, "bad q_urllc".into()))?;
            if qe > state_cap || qu > state_cap {
                return Err(fmt(line_no, format!("state ({qe},{qu}) beyond cap {state_cap}")));
            }
            let action_parts: Vec<&str> = action_f.split(',').collect();
            let expected_arity = if csteps.is_some() { 4 } else { 2 };
            if action_parts.len() != expected_arity {
                return Err(QTableError::Arity { line: line_no });
            }
            let nums: Vec<u32> = action_parts
                .iter()
                .map(|t| t.parse::<u32>())
                .collect::<Result<_, _>>()
                .map_err(|_| fmt(line_no, "bad action component".into()))?;
            let action = AllocationAction {
                r_embb: nums[0],
                r_urllc: nums[1],
                compute: csteps.map(|_| (nums[2], nums[3])),
            };
            let idx = table
                .action_index(&action)
                .ok_or_else(|| fmt(line_no, format!("action {action:?} outside the space")))?;
            let value: f64 = value_f.parse().map_err(|_| fmt(line_no, "bad value".into()))?;
            table.set(SliceState { q_embb: qe, q_urllc: qu }, idx, value);
        }
        Ok(table)
    }
}

/// Epsilon-greedy selection: explore uniformly with probability epsilon,
/// otherwise take the argmax with ties broken by canonical action order.
/// Returns the action index.
pub fn select_action(q: &QTable, s: SliceState, cfg: &AgentConfig, rng: &mut impl Rng) -> usize {
    assert!(q.n_actions() > 0, "action space must be non-empty");
    let u: f64 = rng.random();
    if u < cfg.epsilon {
        rng.random_range(0..q.n_actions())
    } else {
        q.argmax(s)
    }
}

/// One-step Q-learning update toward `r + gamma * max_a' Q(s', a')`.
/// Returns the stored value.
pub fn q_update(
    q: &mut QTable,
    s: SliceState,
    action_idx: usize,
    r: f64,
    s_next: SliceState,
    cfg: &AgentConfig,
) -> f64 {
    let old = q.value(s, action_idx);
    let target = r + cfg.gamma * q.max_value(s_next);
    let new = old + cfg.alpha * (target - old);
    q.set(s, action_idx, new);
    new
}

/// Knowledge-transfer update. The expert's value at the mapped state/action
/// pair (zero if the expert never visited it) either adds to every update
/// (`Additive`) or seeds the pair on first visit (`InitOnly`).
pub fn transfer_update(
    q: &mut QTable,
    expert: &QTable,
    s: SliceState,
    action_idx: usize,
    r: f64,
    s_next: SliceState,
    cfg: &AgentConfig,
) -> f64 {
    assert_eq!(expert.kind(), AgentKind::Expert, "transfer requires an expert table");
    let mapped_state = map_state(s);
    let mapped_action = map_action(&q.actions()[action_idx]);
    let expert_value = expert
        .action_index(&mapped_action)
        .map_or(0.0, |idx| expert.value(mapped_state, idx));
    match cfg.transfer {
        TransferMode::Additive => {
            let old = q.value(s, action_idx);
            let target = r + cfg.gamma * q.max_value(s_next);
            let new = expert_value + old + cfg.alpha * (target - old);
            q.set(s, action_idx, new);
            new
        }
        TransferMode::InitOnly => {
            if !q.is_visited(s, action_idx) {
                q.set(s, action_idx, expert_value);
            }
            q_update(q, s, action_idx, r, s_next, cfg)
        }
        TransferMode::None => panic!("transfer_update called with TransferMode::None"),
    }
}
