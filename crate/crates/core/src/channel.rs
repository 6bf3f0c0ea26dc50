//! Radio link model: log-distance pathloss, per-pair shadowing, block
//! Rayleigh fading, interference-aware Shannon capacity and airtime.
//!
//! Capacity of a set of RBs is the sum of `b_RB * log2(1 + SINR)` per RB
//! (log base 2 so that capacity comes out in bits per second). Interference
//! on an RB is the power received from every other cell that occupied the
//! same RB in the *previous* TTI; that one-TTI-old snapshot breaks the
//! simultaneous coupling between cells deterministically, and the first TTI
//! sees no interference.

use rand::Rng;
use thiserror::Error;

use crate::rng::{fading_hash, hash_to_exp1};
use crate::scenario::Scenario;
use crate::traffic::Slice;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("distance must be strictly positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("negative argument: {0}")]
    NegativeArgument(&'static str),
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Urban-macro log-distance pathloss in dB; distances below 10 m are
/// clamped to 10 m.
pub fn pathloss_db(distance_m: f64) -> Result<f64, ChannelError> {
    if !(distance_m > 0.0) {
        return Err(ChannelError::NonPositiveDistance(distance_m));
    }
    let d = distance_m.max(10.0);
    Ok(128.1 + 37.6 * (d / 1000.0).log10())
}

/// Airtime of a packet at a given link capacity. Zero capacity yields the
/// infinity sentinel: the packet stays queued.
pub fn tx_delay_s(packet_bits: f64, capacity_bps: f64) -> Result<f64, ChannelError> {
    if packet_bits < 0.0 {
        return Err(ChannelError::NegativeArgument("packet_bits"));
    }
    if capacity_bps < 0.0 {
        return Err(ChannelError::NegativeArgument("capacity_bps"));
    }
    if capacity_bps == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(packet_bits / capacity_bps)
}

/// Per-RB power terms of the link equation. Channel gains already include
/// the antenna gain, so it is carried here for reference only.
#[derive(Debug, Clone, Copy)]
pub struct LinkBudget {
    pub tx_power_per_rb_w: f64,
    pub noise_w_per_rb: f64,
    pub rb_bandwidth_hz: f64,
    pub antenna_gain_db: f64,
}

impl LinkBudget {
    pub fn from_scenario(s: &Scenario) -> Self {
        LinkBudget {
            tx_power_per_rb_w: s.tx_power_w_per_rb(),
            noise_w_per_rb: s.noise_w_per_rb(),
            rb_bandwidth_hz: s.rb_bandwidth_hz(),
            antenna_gain_db: s.antenna_gain_db,
        }
    }
}

/// Static channel geometry of one run: cell and UE positions plus the
/// composite pathloss + antenna + shadowing gain of every (cell, UE) pair.
/// Shadowing is drawn once per pair per run; fast fading is re-drawn per
/// (cell, UE, RB) each TTI through a keyed hash, so two runs with equal
/// seeds see identical channels.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    n_bs: usize,
    n_ues: usize,
    bs_xy: Vec<(f64, f64)>,
    ue_xy: Vec<(f64, f64)>,
    /// Linear power gain `[src_bs * n_ues + ue]`, fading excluded.
    static_gain_lin: Vec<f64>,
    fading_key: u64,
    fast_fading: bool,
}

impl ChannelModel {
    /// Draw the run's geometry: cells on a line with the configured
    /// inter-site distance, UEs uniform in a disk of half that radius
    /// around their serving cell.
    pub fn new(s: &Scenario, rng: &mut impl Rng) -> Self {
        let isd = s.inter_site_distance_m;
        let radius = isd / 2.0;
        let bs_xy: Vec<(f64, f64)> = (0..s.n_bs).map(|i| (i as f64 * isd, 0.0)).collect();
        let mut ue_xy = Vec::with_capacity(s.total_ues());
        for bs in 0..s.n_bs {
            for _ in 0..s.ues_per_cell() {
                let u: f64 = rng.random();
                let v: f64 = rng.random();
                let r = radius * u.sqrt();
                let theta = 2.0 * std::f64::consts::PI * v;
                ue_xy.push((bs_xy[bs].0 + r * theta.cos(), bs_xy[bs].1 + r * theta.sin()));
            }
        }
        let mut shadow_db = vec![0.0; s.n_bs * s.total_ues()];
        if s.shadowing_sigma_db > 0.0 {
            use rand_distr::{Distribution, Normal};
            let normal = Normal::new(0.0, s.shadowing_sigma_db).expect("valid sigma");
            for v in shadow_db.iter_mut() {
                *v = normal.sample(rng);
            }
        }
        let fading_key: u64 = rng.random();
        Self::with_geometry(s, bs_xy, ue_xy, &shadow_db, fading_key)
    }

    /// Build a model from explicit geometry and shadowing draws.
    pub fn with_geometry(
        s: &Scenario,
        bs_xy: Vec<(f64, f64)>,
        ue_xy: Vec<(f64, f64)>,
        shadow_db: &[f64],
        fading_key: u64,
    ) -> Self {
        let n_bs = bs_xy.len();
        let n_ues = ue_xy.len();
        assert_eq!(shadow_db.len(), n_bs * n_ues, "one shadowing draw per (bs, ue) pair");
        let mut static_gain_lin = Vec::with_capacity(n_bs * n_ues);
        for (b, &(bx, by)) in bs_xy.iter().enumerate() {
            for (u, &(ux, uy)) in ue_xy.iter().enumerate() {
                let d = ((bx - ux).powi(2) + (by - uy).powi(2)).sqrt().max(1.0);
                let pl = pathloss_db(d).expect("positive distance");
                let g_db = -pl + s.antenna_gain_db + shadow_db[b * n_ues + u];
                static_gain_lin.push(db_to_linear(g_db));
            }
        }
        ChannelModel {
            n_bs,
            n_ues,
            bs_xy,
            ue_xy,
            static_gain_lin,
            fading_key,
            fast_fading: s.fast_fading,
        }
    }

    pub fn n_bs(&self) -> usize {
        self.n_bs
    }

    pub fn bs_position(&self, bs: usize) -> (f64, f64) {
        self.bs_xy[bs]
    }

    pub fn ue_position(&self, ue: usize) -> (f64, f64) {
        self.ue_xy[ue]
    }

    /// Channel view of one TTI. `rb_usage_prev[bs][rb]` is the previous
    /// TTI's RB occupancy used as the interference snapshot.
    pub fn state_at<'a>(&'a self, tti: u64, rb_usage_prev: &'a [Vec<bool>]) -> ChannelState<'a> {
        debug_assert_eq!(rb_usage_prev.len(), self.n_bs);
        ChannelState { model: self, tti, rb_usage_prev }
    }
}

/// Immutable per-TTI channel: composite gains plus the interference
/// snapshot. All queries are pure functions of the run seed and indices.
#[derive(Clone, Copy)]
pub struct ChannelState<'a> {
    model: &'a ChannelModel,
    tti: u64,
    rb_usage_prev: &'a [Vec<bool>],
}

impl<'a> ChannelState<'a> {
    /// Composite linear power gain from `src_bs` to `ue` on `rb`:
    /// pathloss + antenna + shadowing, times the TTI's Rayleigh fade.
    pub fn gain_linear(&self, src_bs: usize, ue: usize, rb: usize) -> f64 {
        let base = self.model.static_gain_lin[src_bs * self.model.n_ues + ue];
        if self.model.fast_fading {
            base * hash_to_exp1(fading_hash(self.model.fading_key, self.tti, src_bs, ue, rb))
        } else {
            base
        }
    }

    pub fn gain_db(&self, src_bs: usize, ue: usize, rb: usize) -> f64 {
        linear_to_db(self.gain_linear(src_bs, ue, rb))
    }

    /// SINR of `ue` served by `serving_bs` on `rb`, with co-channel
    /// interference from every other cell whose `rb` was occupied in the
    /// snapshot.
    pub fn sinr_linear(&self, serving_bs: usize, ue: usize, rb: usize, budget: &LinkBudget) -> f64 {
        let p = budget.tx_power_per_rb_w;
        let signal = p * self.gain_linear(serving_bs, ue, rb);
        let mut interference = 0.0;
        for other in 0..self.model.n_bs {
            if other != serving_bs && self.rb_usage_prev[other][rb] {
                interference += p * self.gain_linear(other, ue, rb);
            }
        }
        signal / (budget.noise_w_per_rb + interference)
    }

    /// Link capacity of a UE over a set of RBs, in bits per second.
    /// The empty set is legal and yields zero.
    pub fn link_capacity_bps<I>(&self, serving_bs: usize, ue: usize, rbs: I, budget: &LinkBudget) -> f64
    where
        I: IntoIterator<Item = usize>,
    {
        rbs.into_iter()
            .map(|rb| budget.rb_bandwidth_hz * (1.0 + self.sinr_linear(serving_bs, ue, rb, budget)).log2())
            .sum()
    }
}

/// Convenience: which local UE indices of a cell belong to a slice.
pub fn slice_local_ues(s: &Scenario, slice: Slice) -> std::ops::Range<usize> {
    s.slice_ue_range(slice)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    fn no_interference(n_bs: usize, n_rbs: usize) -> Vec<Vec<bool>> {
        vec![vec![false; n_rbs]; n_bs]
    }

    #[test]
    fn pathloss_at_one_km_is_the_intercept() {
        assert!((pathloss_db(1000.0).unwrap() - 128.1).abs() < 1e-12);
    }

    #[test]
    fn pathloss_matches_direct_evaluation() {
        // oracle: direct evaluation of the log-distance formula
        let expect_250 = 128.1 + 37.6 * (0.25f64).log10();
        let expect_500 = 128.1 + 37.6 * (0.5f64).log10();
        assert!((pathloss_db(250.0).unwrap() - expect_250).abs() < 0.01);
        assert!((pathloss_db(250.0).unwrap() - 105.46).abs() < 0.01);
        assert!((pathloss_db(500.0).unwrap() - expect_500).abs() < 0.01);
        assert!((pathloss_db(500.0).unwrap() - 116.78).abs() < 0.01);
    }

    #[test]
    fn pathloss_clamps_below_ten_meters_and_rejects_nonpositive() {
        assert_eq!(pathloss_db(3.0).unwrap(), pathloss_db(10.0).unwrap());
        assert!(matches!(pathloss_db(0.0), Err(ChannelError::NonPositiveDistance(_))));
        assert!(matches!(pathloss_db(-5.0), Err(ChannelError::NonPositiveDistance(_))));
    }

    #[test]
    fn tx_delay_examples() {
        assert!((tx_delay_s(400.0, 1e6).unwrap() - 4e-4).abs() < 1e-18);
        assert!(tx_delay_s(123.0, 0.0).unwrap().is_infinite());
        assert_eq!(tx_delay_s(0.0, 1.0).unwrap(), 0.0);
        assert!(tx_delay_s(-1.0, 1.0).is_err());
        assert!(tx_delay_s(1.0, -1.0).is_err());
    }

    fn model_single_ue_at(distance_m: f64, fast_fading: bool) -> (ChannelModel, Scenario) {
        let mut s = parse_scenario("").unwrap();
        s.n_bs = 1;
        s.fast_fading = fast_fading;
        let m = ChannelModel::with_geometry(
            &s,
            vec![(0.0, 0.0)],
            vec![(distance_m, 0.0)],
            &[0.0],
            42,
        );
        (m, s)
    }

    #[test]
    fn composite_gain_without_fading_is_pathloss_plus_antenna() {
        let (m, _s) = model_single_ue_at(1000.0, false);
        let usage = no_interference(1, 100);
        let st = m.state_at(0, &usage);
        assert!((st.gain_db(0, 0, 0) - (-113.1)).abs() < 1e-9);
        // constant across TTIs and RBs when fading is off
        let st2 = m.state_at(9, &usage);
        assert_eq!(st.gain_db(0, 0, 3), st2.gain_db(0, 0, 7));
    }

    #[test]
    fn unit_snr_rb_carries_180_kbps() {
        // b_RB * log2(1 + 1) with linear SNR forced to 1 by gain choice
        let (m, s) = model_single_ue_at(1000.0, false);
        let mut budget = LinkBudget::from_scenario(&s);
        let usage = no_interference(1, s.bandwidth_rbs);
        let st = m.state_at(0, &usage);
        let g = st.gain_linear(0, 0, 0);
        budget.noise_w_per_rb = budget.tx_power_per_rb_w * g;
        let cap = st.link_capacity_bps(0, 0, [0usize], &budget);
        assert!((cap - 180_000.0).abs() < 1e-6, "cap {cap}");
    }

    #[test]
    fn empty_rb_set_has_zero_capacity_and_k_rbs_scale_linearly() {
        let (m, s) = model_single_ue_at(500.0, false);
        let budget = LinkBudget::from_scenario(&s);
        let usage = no_interference(1, s.bandwidth_rbs);
        let st = m.state_at(0, &usage);
        assert_eq!(st.link_capacity_bps(0, 0, std::iter::empty(), &budget), 0.0);
        let one = st.link_capacity_bps(0, 0, 0..1, &budget);
        let four = st.link_capacity_bps(0, 0, 0..4, &budget);
        let eight = st.link_capacity_bps(0, 0, 0..8, &budget);
        assert!((four - 4.0 * one).abs() < 1e-6);
        assert!((eight - 2.0 * four).abs() < 1e-6);
    }

    #[test]
    fn occupied_interferer_strictly_lowers_capacity() {
        let mut s = parse_scenario("").unwrap();
        s.n_bs = 2;
        s.fast_fading = false;
        let m = ChannelModel::with_geometry(
            &s,
            vec![(0.0, 0.0), (500.0, 0.0)],
            vec![(200.0, 0.0)],
            &[0.0, 0.0],
            1,
        );
        let budget = LinkBudget::from_scenario(&s);
        let idle = no_interference(2, s.bandwidth_rbs);
        let mut busy = idle.clone();
        busy[1] = vec![true; s.bandwidth_rbs];
        let quiet = m.state_at(0, &idle).link_capacity_bps(0, 0, 0..8, &budget);
        let loud = m.state_at(0, &busy).link_capacity_bps(0, 0, 0..8, &budget);
        assert!(loud < quiet, "interference must reduce capacity: {loud} vs {quiet}");
    }

    #[test]
    fn fading_is_deterministic_per_seed_and_varies_per_tti() {
        let (m, _s) = model_single_ue_at(300.0, true);
        let usage = no_interference(1, 100);
        let a = m.state_at(5, &usage).gain_linear(0, 0, 17);
        let b = m.state_at(5, &usage).gain_linear(0, 0, 17);
        let c = m.state_at(6, &usage).gain_linear(0, 0, 17);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn drawn_model_is_reproducible_with_equal_seeds() {
        use rand::SeedableRng;
        let s = parse_scenario("").unwrap();
        let m1 = ChannelModel::new(&s, &mut rand_chacha::ChaCha8Rng::seed_from_u64(9));
        let m2 = ChannelModel::new(&s, &mut rand_chacha::ChaCha8Rng::seed_from_u64(9));
        let usage = no_interference(s.n_bs, s.bandwidth_rbs);
        let a = m1.state_at(3, &usage).gain_db(2, 40, 11);
        let b = m2.state_at(3, &usage).gain_db(2, 40, 11);
        assert_eq!(a, b);
        assert_eq!(m1.ue_position(17), m2.ue_position(17));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn db_linear_round_trip(db in -200.0f64..100.0) {
                let back = linear_to_db(db_to_linear(db));
                prop_assert!((back - db).abs() <= 1e-9 * db.abs().max(1.0));
            }

            #[test]
            fn capacity_is_monotone_in_the_rb_set(k in 0usize..100, extra in 1usize..20, key: u64) {
                let (m, s) = {
                    let mut s = parse_scenario("").unwrap();
                    s.n_bs = 1;
                    s.fast_fading = true;
                    let m = ChannelModel::with_geometry(
                        &s, vec![(0.0, 0.0)], vec![(137.0, 40.0)], &[0.0], key,
                    );
                    (m, s)
                };
                let budget = LinkBudget::from_scenario(&s);
                let usage = vec![vec![false; s.bandwidth_rbs]];
                let st = m.state_at(1, &usage);
                let k2 = (k + extra).min(s.bandwidth_rbs);
                let small = st.link_capacity_bps(0, 0, 0..k.min(s.bandwidth_rbs), &budget);
                let large = st.link_capacity_bps(0, 0, 0..k2, &budget);
                prop_assert!(large >= small);
            }
        }
    }
}
