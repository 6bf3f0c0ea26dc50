//! Experiment configuration: defaults, file parsing, validation.
//!
//! A scenario file is plain UTF-8 text with `[section]` headers, one
//! `key = value` pair per line and `#` comments. Sections are `[network]`,
//! `[traffic]`, `[learning]` and `[reward]`. Every key is optional and
//! falls back to the defaults below; unknown keys are rejected so typos
//! surface instead of silently running a different experiment.

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::rng::fnv1a64;
use crate::slicing::{enumerate_actions, AllocationAction};
use crate::traffic::Slice;

/// Identifier of the only supported propagation model
/// (log-distance urban macro, distance in km).
pub const PATHLOSS_MODEL: &str = "128.1+37.6log10(d_km)";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("scenario validation error on `{field}`: {msg}")]
    Invalid { field: &'static str, msg: String },
}

/// Full immutable experiment configuration.
///
/// Immutable after construction; safe to share read-only across any number
/// of concurrent simulation runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    // [network]
    pub n_bs: usize,
    pub inter_site_distance_m: f64,
    pub n_embb_ue: usize,
    pub n_urllc_ue: usize,
    pub bandwidth_rbs: usize,
    pub rbg_sizes: Vec<usize>,
    pub subcarriers_per_rb: usize,
    pub subcarrier_hz: f64,
    pub tti_s: f64,
    pub tx_power_dbm: f64,
    pub antenna_gain_db: f64,
    pub noise_density_dbm_hz: f64,
    pub shadowing_sigma_db: f64,
    pub pathloss: String,
    pub fast_fading: bool,
    pub mec_capacity_hz: f64,
    pub cycles_per_bit: f64,
    pub backhaul_bps: f64,
    pub cloud_queue_s: f64,
    // [traffic]
    pub embb_load_bps: f64,
    pub urllc_load_bps: f64,
    pub embb_packet_bytes: usize,
    pub urllc_packet_bytes: usize,
    pub harq_max_retx: u32,
    pub harq_rtt_ttis: u64,
    pub harq_err_prob: f64,
    pub drop_deadline_embb_s: f64,
    pub drop_deadline_urllc_s: f64,
    // [learning]
    pub lr_alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub state_queue_cap: u32,
    pub compute_fraction_steps: u32,
    pub master_seed: u64,
    // [reward]
    pub w_embb: f64,
    pub w_urllc: f64,
    pub d_target_s: f64,
    pub drop_penalty: f64,
    pub reward_window_ttis: usize,
    /// MEC queue wait beyond which a task is pushed to the cloud.
    /// Defaults to `d_target_s` when absent from the file.
    pub offload_wait_s: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            n_bs: 5,
            inter_site_distance_m: 500.0,
            n_embb_ue: 5,
            n_urllc_ue: 10,
            bandwidth_rbs: 100,
            rbg_sizes: default_rbg_sizes(),
            subcarriers_per_rb: 12,
            subcarrier_hz: 15_000.0,
            tti_s: 1.0 / 7000.0,
            tx_power_dbm: 40.0,
            antenna_gain_db: 15.0,
            noise_density_dbm_hz: -174.0,
            shadowing_sigma_db: 8.0,
            pathloss: PATHLOSS_MODEL.to_string(),
            fast_fading: true,
            mec_capacity_hz: 3e9,
            cycles_per_bit: 200.0,
            backhaul_bps: 1e7,
            cloud_queue_s: 1e-3,
            embb_load_bps: 2e6,
            urllc_load_bps: 2e6,
            embb_packet_bytes: 100,
            urllc_packet_bytes: 50,
            harq_max_retx: 1,
            harq_rtt_ttis: 4,
            harq_err_prob: 0.1,
            drop_deadline_embb_s: 5e-2,
            drop_deadline_urllc_s: 1e-2,
            lr_alpha: 0.9,
            gamma: 0.5,
            epsilon: 0.05,
            state_queue_cap: 10,
            compute_fraction_steps: 10,
            master_seed: 0,
            w_embb: 1.0,
            w_urllc: 1.0,
            d_target_s: 2e-3,
            drop_penalty: 5.0,
            reward_window_ttis: 10,
            offload_wait_s: 2e-3,
        }
    }
}

/// 12 groups of 8 RBs plus one trailing group of 4 (13 RBGs, 100 RBs).
fn default_rbg_sizes() -> Vec<usize> {
    let mut v = vec![8; 12];
    v.push(4);
    v
}

impl Scenario {
    pub fn n_rbgs(&self) -> usize {
        self.rbg_sizes.len()
    }

    /// RB index ranges covered by each RBG, in RBG order.
    pub fn rbg_rb_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::with_capacity(self.rbg_sizes.len());
        let mut start = 0;
        for &sz in &self.rbg_sizes {
            out.push(start..start + sz);
            start += sz;
        }
        out
    }

    pub fn ues_per_cell(&self) -> usize {
        self.n_embb_ue + self.n_urllc_ue
    }

    pub fn total_ues(&self) -> usize {
        self.n_bs * self.ues_per_cell()
    }

    /// Local UE indices of a slice within one cell (eMBB first).
    pub fn slice_ue_range(&self, slice: Slice) -> std::ops::Range<usize> {
        match slice {
            Slice::Embb => 0..self.n_embb_ue,
            Slice::Urllc => self.n_embb_ue..self.ues_per_cell(),
        }
    }

    pub fn n_ue(&self, slice: Slice) -> usize {
        match slice {
            Slice::Embb => self.n_embb_ue,
            Slice::Urllc => self.n_urllc_ue,
        }
    }

    pub fn packet_bits(&self, slice: Slice) -> u64 {
        let bytes = match slice {
            Slice::Embb => self.embb_packet_bytes,
            Slice::Urllc => self.urllc_packet_bytes,
        };
        (bytes * 8) as u64
    }

    pub fn load_bps(&self, slice: Slice) -> f64 {
        match slice {
            Slice::Embb => self.embb_load_bps,
            Slice::Urllc => self.urllc_load_bps,
        }
    }

    pub fn drop_deadline_s(&self, slice: Slice) -> f64 {
        match slice {
            Slice::Embb => self.drop_deadline_embb_s,
            Slice::Urllc => self.drop_deadline_urllc_s,
        }
    }

    pub fn rb_bandwidth_hz(&self) -> f64 {
        self.subcarriers_per_rb as f64 * self.subcarrier_hz
    }

    /// Total transmit power divided equally across all RBs.
    pub fn tx_power_w_per_rb(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm) / self.bandwidth_rbs as f64
    }

    pub fn noise_w_per_rb(&self) -> f64 {
        dbm_to_watts(self.noise_density_dbm_hz) * self.rb_bandwidth_hz()
    }

    /// Stable 64-bit fingerprint of everything except the master seed.
    pub fn fingerprint(&self) -> u64 {
        let mut canon = self.clone();
        canon.master_seed = 0;
        fnv1a64(render_scenario(&canon).as_bytes())
    }

    /// Check all field invariants, naming the offending field.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        fn invalid(field: &'static str, msg: impl Into<String>) -> ScenarioError {
            ScenarioError::Invalid { field, msg: msg.into() }
        }
        let positive: [(&'static str, f64); 11] = [
            ("inter_site_distance_m", self.inter_site_distance_m),
            ("subcarrier_hz", self.subcarrier_hz),
            ("tti_s", self.tti_s),
            ("cycles_per_bit", self.cycles_per_bit),
            ("backhaul_bps", self.backhaul_bps),
            ("cloud_queue_s", self.cloud_queue_s),
            ("drop_deadline_embb_s", self.drop_deadline_embb_s),
            ("drop_deadline_urllc_s", self.drop_deadline_urllc_s),
            ("d_target_s", self.d_target_s),
            ("offload_wait_s", self.offload_wait_s),
            ("harq_rtt_ttis", self.harq_rtt_ttis as f64),
        ];
        for (field, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(field, format!("must be strictly positive, got {v}")));
            }
        }
        // Offered loads and MEC capacity may legitimately be zero (idle
        // slices, no edge server); they must only be finite and non-negative.
        let non_negative: [(&'static str, f64); 6] = [
            ("embb_load_bps", self.embb_load_bps),
            ("urllc_load_bps", self.urllc_load_bps),
            ("mec_capacity_hz", self.mec_capacity_hz),
            ("shadowing_sigma_db", self.shadowing_sigma_db),
            ("w_embb", self.w_embb),
            ("drop_penalty", self.drop_penalty),
        ];
        for (field, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(field, format!("must be non-negative, got {v}")));
            }
        }
        if !(self.w_urllc >= 0.0) || !self.w_urllc.is_finite() {
            return Err(invalid("w_urllc", "must be non-negative"));
        }
        let probs: [(&'static str, f64); 2] =
            [("harq_err_prob", self.harq_err_prob), ("epsilon", self.epsilon)];
        for (field, v) in probs {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(field, format!("probability must lie in [0, 1], got {v}")));
            }
        }
        if !(self.lr_alpha > 0.0 && self.lr_alpha < 1.0) {
            return Err(invalid("lr_alpha", format!("must lie in (0, 1), got {}", self.lr_alpha)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(invalid("gamma", format!("must lie in (0, 1), got {}", self.gamma)));
        }
        let counts: [(&'static str, usize); 6] = [
            ("n_bs", self.n_bs),
            ("n_embb_ue", self.n_embb_ue),
            ("n_urllc_ue", self.n_urllc_ue),
            ("bandwidth_rbs", self.bandwidth_rbs),
            ("subcarriers_per_rb", self.subcarriers_per_rb),
            ("reward_window_ttis", self.reward_window_ttis),
        ];
        for (field, v) in counts {
            if v == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        if self.embb_packet_bytes == 0 || self.urllc_packet_bytes == 0 {
            return Err(invalid("embb_packet_bytes", "packet sizes must be at least 1 byte"));
        }
        if self.state_queue_cap == 0 {
            return Err(invalid("state_queue_cap", "must be at least 1"));
        }
        if self.compute_fraction_steps == 0 {
            return Err(invalid("compute_fraction_steps", "must be at least 1"));
        }
        if self.rbg_sizes.is_empty() || self.rbg_sizes.iter().any(|&s| s == 0) {
            return Err(invalid("rbg_sizes", "need at least one RBG, all sizes positive"));
        }
        let rbg_sum: usize = self.rbg_sizes.iter().sum();
        if rbg_sum != self.bandwidth_rbs {
            return Err(invalid(
                "rbg_sizes",
                format!("sizes sum to {rbg_sum}, expected bandwidth_rbs = {}", self.bandwidth_rbs),
            ));
        }
        if self.pathloss != PATHLOSS_MODEL {
            return Err(invalid(
                "pathloss",
                format!("unsupported model `{}`, expected `{PATHLOSS_MODEL}`", self.pathloss),
            ));
        }
        Ok(())
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Enumerate the inter-slice allocation actions of a scenario.
///
/// `joint = false` yields radio-only splits `(r_embb, r_urllc)` with
/// `r_embb + r_urllc` equal to the RBG count. `joint = true` crosses those
/// with compute splits summing to one in steps of
/// `1 / compute_fraction_steps`. Ordering is lexicographic by
/// `(r_embb, c_embb)` and is the tie-break order used everywhere.
pub fn action_space(scenario: &Scenario, joint: bool) -> Vec<AllocationAction> {
    enumerate_actions(
        scenario.n_rbgs(),
        joint.then_some(scenario.compute_fraction_steps),
    )
}

// ---------------------------------------------------------------------------
// Scenario file parsing / rendering
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum Section {
    Network,
    Traffic,
    Learning,
    Reward,
}

impl Section {
    fn name(self) -> &'static str {
        match self {
            Section::Network => "network",
            Section::Traffic => "traffic",
            Section::Learning => "learning",
            Section::Reward => "reward",
        }
    }
}

/// Parse a scenario document, fill unspecified keys from defaults and
/// validate the result.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut s = Scenario::default();
    let mut offload_wait_set = false;
    let mut d_target_set = false;
    let mut section: Option<Section> = None;
    let mut seen: HashSet<(Section, String)> = HashSet::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |msg: String| ScenarioError::Parse { line: line_no, msg };
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let name = inner
                .strip_suffix(']')
                .ok_or_else(|| err("unterminated section header".into()))?
                .trim();
            section = Some(match name {
                "network" => Section::Network,
                "traffic" => Section::Traffic,
                "learning" => Section::Learning,
                "reward" => Section::Reward,
                other => return Err(err(format!("unknown section `[{other}]`"))),
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        let value = value.trim();
        let sec = section.ok_or_else(|| err(format!("key `{key}` appears before any [section]")))?;
        if !seen.insert((sec, key.to_string())) {
            return Err(err(format!("duplicate key `{key}` in section [{}]", sec.name())));
        }
        apply_key(&mut s, sec, key, value, line_no)?;
        if sec == Section::Reward && key == "offload_wait_s" {
            offload_wait_set = true;
        }
        if sec == Section::Reward && key == "d_target_s" {
            d_target_set = true;
        }
    }
    if !offload_wait_set && d_target_set {
        s.offload_wait_s = s.d_target_s;
    }
    s.validate()?;
    Ok(s)
}

fn apply_key(
    s: &mut Scenario,
    sec: Section,
    key: &str,
    value: &str,
    line: usize,
) -> Result<(), ScenarioError> {
    fn bad(line: usize, key: &str, value: &str, ty: &str) -> ScenarioError {
        ScenarioError::Parse {
            line,
            msg: format!("key `{key}`: cannot parse `{value}` as {ty}"),
        }
    }
    macro_rules! num {
        ($field:expr, $ty:literal) => {
            $field = value.parse().map_err(|_| bad(line, key, value, $ty))?
        };
    }
    match (sec, key) {
        (Section::Network, "n_bs") => num!(s.n_bs, "count"),
        (Section::Network, "inter_site_distance_m") => num!(s.inter_site_distance_m, "number"),
        (Section::Network, "n_embb_ue") => num!(s.n_embb_ue, "count"),
        (Section::Network, "n_urllc_ue") => num!(s.n_urllc_ue, "count"),
        (Section::Network, "bandwidth_rbs") => num!(s.bandwidth_rbs, "count"),
        (Section::Network, "rbg_sizes") => {
            s.rbg_sizes = value
                .split(',')
                .map(|t| t.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad(line, key, value, "comma-separated counts"))?;
        }
        (Section::Network, "subcarriers_per_rb") => num!(s.subcarriers_per_rb, "count"),
        (Section::Network, "subcarrier_hz") => num!(s.subcarrier_hz, "number"),
        (Section::Network, "tti_s") => num!(s.tti_s, "number"),
        (Section::Network, "tx_power_dbm") => num!(s.tx_power_dbm, "number"),
        (Section::Network, "antenna_gain_db") => num!(s.antenna_gain_db, "number"),
        (Section::Network, "noise_density_dbm_hz") => num!(s.noise_density_dbm_hz, "number"),
        (Section::Network, "shadowing_sigma_db") => num!(s.shadowing_sigma_db, "number"),
        (Section::Network, "pathloss") => s.pathloss = value.to_string(),
        (Section::Network, "fast_fading") => num!(s.fast_fading, "bool"),
        (Section::Network, "mec_capacity_hz") => num!(s.mec_capacity_hz, "number"),
        (Section::Network, "cycles_per_bit") => num!(s.cycles_per_bit, "number"),
        (Section::Network, "backhaul_bps") => num!(s.backhaul_bps, "number"),
        (Section::Network, "cloud_queue_s") => num!(s.cloud_queue_s, "number"),
        (Section::Traffic, "embb_load_bps") => num!(s.embb_load_bps, "number"),
        (Section::Traffic, "urllc_load_bps") => num!(s.urllc_load_bps, "number"),
        (Section::Traffic, "embb_packet_bytes") => num!(s.embb_packet_bytes, "count"),
        (Section::Traffic, "urllc_packet_bytes") => num!(s.urllc_packet_bytes, "count"),
        (Section::Traffic, "harq_max_retx") => num!(s.harq_max_retx, "count"),
        (Section::Traffic, "harq_rtt_ttis") => num!(s.harq_rtt_ttis, "count"),
        (Section::Traffic, "harq_err_prob") => num!(s.harq_err_prob, "number"),
        (Section::Traffic, "drop_deadline_embb_s") => num!(s.drop_deadline_embb_s, "number"),
        (Section::Traffic, "drop_deadline_urllc_s") => num!(s.drop_deadline_urllc_s, "number"),
        (Section::Learning, "lr_alpha") => num!(s.lr_alpha, "number"),
        (Section::Learning, "gamma") => num!(s.gamma, "number"),
        (Section::Learning, "epsilon") => num!(s.epsilon, "number"),
        (Section::Learning, "state_queue_cap") => num!(s.state_queue_cap, "count"),
        (Section::Learning, "compute_fraction_steps") => num!(s.compute_fraction_steps, "count"),
        (Section::Learning, "master_seed") => num!(s.master_seed, "integer"),
        (Section::Reward, "w_embb") => num!(s.w_embb, "number"),
        (Section::Reward, "w_urllc") => num!(s.w_urllc, "number"),
        (Section::Reward, "d_target_s") => num!(s.d_target_s, "number"),
        (Section::Reward, "drop_penalty") => num!(s.drop_penalty, "number"),
        (Section::Reward, "reward_window_ttis") => num!(s.reward_window_ttis, "count"),
        (Section::Reward, "offload_wait_s") => num!(s.offload_wait_s, "number"),
        (sec, key) => {
            return Err(ScenarioError::Parse {
                line,
                msg: format!("unknown key `{key}` in section [{}]", sec.name()),
            })
        }
    }
    Ok(())
}

/// Render a scenario into its canonical file form; `parse_scenario` of the
/// result reproduces the scenario exactly.
pub fn render_scenario(s: &Scenario) -> String {
    let mut out = String::with_capacity(1024);
    let w = &mut out;
    let _ = writeln!(w, "[network]");
    let _ = writeln!(w, "n_bs = {}", s.n_bs);
    let _ = writeln!(w, "inter_site_distance_m = {}", s.inter_site_distance_m);
    let _ = writeln!(w, "n_embb_ue = {}", s.n_embb_ue);
    let _ = writeln!(w, "n_urllc_ue = {}", s.n_urllc_ue);
    let _ = writeln!(w, "bandwidth_rbs = {}", s.bandwidth_rbs);
    let sizes: Vec<String> = s.rbg_sizes.iter().map(|v| v.to_string()).collect();
    let _ = writeln!(w, "rbg_sizes = {}", sizes.join(","));
    let _ = writeln!(w, "subcarriers_per_rb = {}", s.subcarriers_per_rb);
    let _ = writeln!(w, "subcarrier_hz = {}", s.subcarrier_hz);
    let _ = writeln!(w, "tti_s = {}", s.tti_s);
    let _ = writeln!(w, "tx_power_dbm = {}", s.tx_power_dbm);
    let _ = writeln!(w, "antenna_gain_db = {}", s.antenna_gain_db);
    let _ = writeln!(w, "noise_density_dbm_hz = {}", s.noise_density_dbm_hz);
    let _ = writeln!(w, "shadowing_sigma_db = {}", s.shadowing_sigma_db);
    let _ = writeln!(w, "pathloss = {}", s.pathloss);
    let _ = writeln!(w, "fast_fading = {}", s.fast_fading);
    let _ = writeln!(w, "mec_capacity_hz = {}", s.mec_capacity_hz);
    let _ = writeln!(w, "cycles_per_bit = {}", s.cycles_per_bit);
    let _ = writeln!(w, "backhaul_bps = {}", s.backhaul_bps);
    let _ = writeln!(w, "cloud_queue_s = {}", s.cloud_queue_s);
    let _ = writeln!(w);
    let _ = writeln!(w, "[traffic]");
    let _ = writeln!(w, "embb_load_bps = {}", s.embb_load_bps);
    let _ = writeln!(w, "urllc_load_bps = {}", s.urllc_load_bps);
    let _ = writeln!(w, "embb_packet_bytes = {}", s.embb_packet_bytes);
    let _ = writeln!(w, "urllc_packet_bytes = {}", s.urllc_packet_bytes);
    let _ = writeln!(w, "harq_max_retx = {}", s.harq_max_retx);
    let _ = writeln!(w, "harq_rtt_ttis = {}", s.harq_rtt_ttis);
    let _ = writeln!(w, "harq_err_prob = {}", s.harq_err_prob);
    let _ = writeln!(w, "drop_deadline_embb_s = {}", s.drop_deadline_embb_s);
    let _ = writeln!(w, "drop_deadline_urllc_s = {}", s.drop_deadline_urllc_s);
    let _ = writeln!(w);
    let _ = writeln!(w, "[learning]");
    let _ = writeln!(w, "lr_alpha = {}", s.lr_alpha);
    let _ = writeln!(w, "gamma = {}", s.gamma);
    let _ = writeln!(w, "epsilon = {}", s.epsilon);
    let _ = writeln!(w, "state_queue_cap = {}", s.state_queue_cap);
    let _ = writeln!(w, "compute_fraction_steps = {}", s.compute_fraction_steps);
    let _ = writeln!(w, "master_seed = {}", s.master_seed);
    let _ = writeln!(w);
    let _ = writeln!(w, "[reward]");
    let _ = writeln!(w, "w_embb = {}", s.w_embb);
    let _ = writeln!(w, "w_urllc = {}", s.w_urllc);
    let _ = writeln!(w, "d_target_s = {}", s.d_target_s);
    let _ = writeln!(w, "drop_penalty = {}", s.drop_penalty);
    let _ = writeln!(w, "reward_window_ttis = {}", s.reward_window_ttis);
    let _ = writeln!(w, "offload_wait_s = {}", s.offload_wait_s);
    out
}
