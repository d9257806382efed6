//! FPLinQ and the benchmark scheduling / beamforming strategies.

mod fplinq;
mod heuristics;
mod kernel;
mod wmmse;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fplinq::{
    fplinq_candidate_beams, fplinq_lambda_weights, fplinq_run, fplinq_step, fplinq_update_aux, fplinq_update_gamma,
    fplinq_update_y, AuxState, CandidateBeams, FpState,
};
pub use heuristics::{
    baseline_all_on, baseline_greedy_tin, composite_pc, flashlinq_schedule, itlinq_plus_schedule, itlinq_schedule,
    tin_check, PcBase, ScalarView,
};
pub use wmmse::{bcd_run, bcd_step, rate_matching, wmmse_power_control};

use crate::error::ConfigError;
use crate::linops::LinalgError;
use crate::network::{BeamformerSet, LinkWeights, NetworkError, NetworkInstance, Schedule};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchedulerError {
    #[error("{scheduler} does not support {reason}")]
    Unsupported { scheduler: &'static str, reason: &'static str },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, SchedulerError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RankLimit {
    #[default]
    Full,
    /// One stream per link: beamformers stay rank one.
    One,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ItlinqParams {
    /// `M` in dB; the admission test is `M·INR ≤ SNR^η`.
    pub m_db: f64,
    pub eta: f64,
    /// ITLinQ+ power backoff step in dB.
    pub backoff_step_db: f64,
    /// Number of backoff levels below full power tried by ITLinQ+.
    pub backoff_levels: usize,
}

impl Default for ItlinqParams {
    fn default() -> Self {
        Self { m_db: 25.0, eta: 0.7, backoff_step_db: 3.0, backoff_levels: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub max_iters: usize,
    /// Relative change of the weighted sum rate that counts as converged.
    pub conv_tol: f64,
    pub flash_theta_db: f64,
    pub itlinq: ItlinqParams,
    /// Relative eigenvalue floor for the beamformer solves.
    pub ridge: f64,
    /// Relative tolerance of the power-constraint multiplier search.
    pub bisection_tol: f64,
    pub no_power_control: bool,
    pub rank_limit: RankLimit,
    /// Alternations of a heuristic scheduler with power control.
    pub pc_rounds: usize,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            conv_tol: 1e-6,
            flash_theta_db: 9.0,
            itlinq: ItlinqParams::default(),
            ridge: 1e-12,
            bisection_tol: 1e-12,
            no_power_control: false,
            rank_limit: RankLimit::Full,
            pc_rounds: 20,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        if self.max_iters == 0 {
            return Err(ConfigError::new("scheduler.max_iters", "must be at least 1"));
        }
        if !(self.conv_tol >= 0.0) || !self.conv_tol.is_finite() {
            return Err(ConfigError::new("scheduler.conv_tol", "must be nonnegative and finite"));
        }
        if !(self.itlinq.eta > 0.0 && self.itlinq.eta <= 1.0) {
            return Err(ConfigError::new("scheduler.itlinq.eta", "must lie in (0, 1]"));
        }
        if !self.itlinq.m_db.is_finite() || !self.flash_theta_db.is_finite() {
            return Err(ConfigError::new("scheduler.itlinq.m_db", "thresholds must be finite"));
        }
        if !(self.itlinq.backoff_step_db > 0.0) {
            return Err(ConfigError::new("scheduler.itlinq.backoff_step_db", "must be positive"));
        }
        if !(self.ridge >= 0.0 && self.ridge < 1.0) {
            return Err(ConfigError::new("scheduler.ridge", "must lie in [0, 1)"));
        }
        if !(self.bisection_tol > 0.0 && self.bisection_tol < 1.0) {
            return Err(ConfigError::new("scheduler.bisection_tol", "must lie in (0, 1)"));
        }
        if self.pc_rounds == 0 {
            return Err(ConfigError::new("scheduler.pc_rounds", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SchedulerId {
    Fplinq,
    FplinqNopc,
    FplinqVector,
    Bcd,
    WmmseFixed,
    Flashlinq,
    FlashlinqPc,
    Itlinq,
    ItlinqPlus,
    ItlinqPlusPc,
    AllOn,
    GreedyTin,
}

impl SchedulerId {
    pub const ALL: [SchedulerId; 12] = [
        Self::Fplinq,
        Self::FplinqNopc,
        Self::FplinqVector,
        Self::Bcd,
        Self::WmmseFixed,
        Self::Flashlinq,
        Self::FlashlinqPc,
        Self::Itlinq,
        Self::ItlinqPlus,
        Self::ItlinqPlusPc,
        Self::AllOn,
        Self::GreedyTin,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fplinq => "fplinq",
            Self::FplinqNopc => "fplinq-nopc",
            Self::FplinqVector => "fplinq-vector",
            Self::Bcd => "bcd",
            Self::WmmseFixed => "wmmse-fixed",
            Self::Flashlinq => "flashlinq",
            Self::FlashlinqPc => "flashlinq-pc",
            Self::Itlinq => "itlinq",
            Self::ItlinqPlus => "itlinq-plus",
            Self::ItlinqPlusPc => "itlinq-plus-pc",
            Self::AllOn => "all-on",
            Self::GreedyTin => "greedy-tin",
        }
    }
}

impl fmt::Display for SchedulerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerId {
    type Err = ConfigError;

    fn from_str(s: &str) -> std::result::Result<Self, ConfigError> {
        Self::ALL.into_iter().find(|id| id.as_str() == s).ok_or_else(|| {
            let known: Vec<_> = Self::ALL.iter().map(|id| id.as_str()).collect();
            ConfigError::new("scheduler.id", format!("unknown scheduler `{s}` (known: {})", known.join(", ")))
        })
    }
}

impl TryFrom<String> for SchedulerId {
    type Error = ConfigError;

    fn try_from(s: String) -> std::result::Result<Self, ConfigError> {
        s.parse()
    }
}

impl From<SchedulerId> for String {
    fn from(id: SchedulerId) -> String {
        id.as_str().to_owned()
    }
}

/// Schedule, beamformers and the weighted sum rate after every iteration
/// (entry 0 is the initial point).
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSolution {
    pub schedule: Schedule,
    pub beams: BeamformerSet,
    pub objective_trace: Vec<f64>,
}

impl SlotSolution {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(0.0)
    }

    /// True when the last change was within `conv_tol` relative.
    pub fn converged(&self, conv_tol: f64) -> bool {
        match self.objective_trace.as_slice() {
            [.., a, b] => has_converged(*a, *b, conv_tol),
            _ => false,
        }
    }
}

pub(crate) fn has_converged(prev: f64, next: f64, conv_tol: f64) -> bool {
    (next - prev).abs() <= conv_tol * prev.abs().max(next.abs())
}

/// Greedy injective assignment by descending weight, ties by receiver and
/// then transmitter index.
pub fn initial_schedule(net: &NetworkInstance, w: &LinkWeights) -> Schedule {
    let mut pairs: Vec<(usize, usize)> = net.associated_pairs().filter(|&(j, i)| w.get(j, i) > 0.0).collect();
    pairs.sort_by(|&(ja, ia), &(jb, ib)| w.get(jb, ib).total_cmp(&w.get(ja, ia)).then((ja, ia).cmp(&(jb, ib))));
    let mut s = Schedule::empty(net.num_rx());
    let mut tx_used = vec![false; net.num_tx()];
    for (j, i) in pairs {
        if s.0[j].is_none() && !tx_used[i] {
            s.0[j] = Some(i);
            tx_used[i] = true;
        }
    }
    s
}

/// Runs the scheduler named by `id` for one slot.
pub fn run_scheduler(
    id: SchedulerId,
    net: &NetworkInstance,
    w: &LinkWeights,
    cfg: &SchedulerConfig,
) -> Result<SlotSolution> {
    cfg.validate()?;
    match id {
        SchedulerId::Fplinq => fplinq_run(net, w, cfg),
        SchedulerId::FplinqNopc => fplinq_run(net, w, &SchedulerConfig { no_power_control: true, ..cfg.clone() }),
        SchedulerId::FplinqVector => fplinq_run(net, w, &SchedulerConfig { rank_limit: RankLimit::One, ..cfg.clone() }),
        SchedulerId::Bcd => bcd_run(net, w, cfg),
        SchedulerId::WmmseFixed => {
            let s = initial_schedule(net, w);
            wmmse_power_control(net, w, &s, &BeamformerSet::full_power(net), cfg)
        }
        SchedulerId::Flashlinq => full_power_solution(net, w, flashlinq_schedule(net, w, cfg)?),
        SchedulerId::FlashlinqPc => composite_pc(PcBase::Flashlinq, net, w, cfg),
        SchedulerId::Itlinq => full_power_solution(net, w, itlinq_schedule(net, w, cfg)?),
        SchedulerId::ItlinqPlus => {
            let (s, v) = itlinq_plus_schedule(net, w, cfg)?;
            Ok(fixed_solution(net, w, s, v))
        }
        SchedulerId::ItlinqPlusPc => composite_pc(PcBase::ItlinqPlus, net, w, cfg),
        SchedulerId::AllOn => full_power_solution(net, w, baseline_all_on(net)?),
        SchedulerId::GreedyTin => full_power_solution(net, w, baseline_greedy_tin(net, w)?),
    }
}

/// Scheduled transmitters at `√(p_max/N)·I`, everything else off.
pub fn full_power_solution(net: &NetworkInstance, w: &LinkWeights, s: Schedule) -> Result<SlotSolution> {
    let mut v = BeamformerSet::zeros(net);
    let full = crate::network::full_power_beam(net);
    for (_, i) in s.pairs() {
        v.0[i] = full.clone();
    }
    Ok(fixed_solution(net, w, s, v))
}

fn fixed_solution(net: &NetworkInstance, w: &LinkWeights, s: Schedule, v: BeamformerSet) -> SlotSolution {
    let value = crate::network::weighted_sum_rate(w, &v, &s, net);
    SlotSolution { schedule: s, beams: v, objective_trace: vec![value] }
}
