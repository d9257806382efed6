//! Joint scheduling and beamforming by matrix fractional programming.
//!
//! Each iteration updates `Γ` and `Y` in closed form, computes a tentative
//! beamformer for every associated pair independently of the current
//! schedule, picks beams by a first bipartite matching on the pair weights
//! `λ_ji`, and finally re-matches receivers to the chosen beams by weighted
//! rate.

use crate::linops::{self, c64, identity, inner_re, trace_re, CMatrix, HermitianPsd};
use crate::matching::{hungarian, MatchingProblem};
use crate::network::{full_power_beam, BeamformerSet, LinkWeights, NetworkInstance, Schedule};

use super::kernel::{self, Evaluation, QuadraticEigen};
use super::{has_converged, initial_schedule, RankLimit, Result, SchedulerConfig, SlotSolution};

/// `Γ_j` and `Y_j` per receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxState {
    pub gamma: Vec<HermitianPsd>,
    pub y: Vec<CMatrix>,
}

impl AuxState {
    fn from_evaluation(ev: &Evaluation) -> Self {
        Self { gamma: ev.gamma.iter().cloned().map(HermitianPsd::from_gram).collect(), y: ev.y.clone() }
    }

    fn to_evaluation(&self) -> Result<Evaluation> {
        let mut log_det = Vec::with_capacity(self.gamma.len());
        let mut z = Vec::with_capacity(self.gamma.len());
        for (g, y) in self.gamma.iter().zip(&self.y) {
            let n = g.dim();
            log_det.push(linops::log_det_identity_plus(g.as_matrix())?);
            z.push(y * (g.as_matrix() + identity(n)));
        }
        Ok(Evaluation {
            gamma: self.gamma.iter().map(|g| g.as_matrix().clone()).collect(),
            y: self.y.clone(),
            z,
            log_det,
            wsr: f64::NAN,
        })
    }
}

/// Beams and schedule carried between iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct FpState {
    pub beams: BeamformerSet,
    pub schedule: Schedule,
}

impl FpState {
    /// Full-power beams and the greedy initial schedule.
    pub fn initial(net: &NetworkInstance, w: &LinkWeights, cfg: &SchedulerConfig) -> Self {
        let schedule = initial_schedule(net, w);
        let mut beams = kernel::initial_beams(net, cfg);
        let served = schedule.receiver_of_tx(net.num_tx());
        for (i, v) in beams.0.iter_mut().enumerate() {
            if served[i].is_none() {
                v.fill(c64(0.0, 0.0));
            }
        }
        Self { beams, schedule }
    }
}

/// `Γ_j = V† H† F_j⁻¹ H V` for the scheduled link of every receiver.
pub fn fplinq_update_gamma(net: &NetworkInstance, v: &BeamformerSet, s: &Schedule) -> Result<Vec<HermitianPsd>> {
    let ones = LinkWeights::uniform(net, 1.0);
    Ok(AuxState::from_evaluation(&kernel::evaluate(net, &ones, v, s)?).gamma)
}

/// `Y_j = (F_j + H V V† H†)⁻¹ √w H V`.
pub fn fplinq_update_y(
    net: &NetworkInstance,
    w: &LinkWeights,
    v: &BeamformerSet,
    s: &Schedule,
) -> Result<Vec<CMatrix>> {
    Ok(kernel::evaluate(net, w, v, s)?.y)
}

pub fn fplinq_update_aux(net: &NetworkInstance, w: &LinkWeights, v: &BeamformerSet, s: &Schedule) -> Result<AuxState> {
    Ok(AuxState::from_evaluation(&kernel::evaluate(net, w, v, s)?))
}

/// Tentative beamformer `Ṽ_ji` and its power multiplier for every associated pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateBeams {
    /// Associated pairs in receiver-major order.
    pub pairs: Vec<(usize, usize)>,
    pub beams: Vec<CMatrix>,
    pub multipliers: Vec<f64>,
}

impl CandidateBeams {
    pub fn get(&self, j: usize, i: usize) -> Option<&CMatrix> {
        self.pairs.iter().position(|&p| p == (j, i)).map(|k| &self.beams[k])
    }
}

/// `Ṽ_ji = (μI + K_i)⁻¹ √w_ji H_ji† Y_j (I+Γ_j)` with the power multiplier found
/// by bisection. Depends only on `(Γ, Y)`, never on the current schedule.
pub fn fplinq_candidate_beams(
    net: &NetworkInstance,
    w: &LinkWeights,
    aux: &AuxState,
    cfg: &SchedulerConfig,
) -> Result<CandidateBeams> {
    let ev = aux.to_evaluation()?;
    let k = kernel::quadratic_terms(net, &ev);
    candidates(net, w, &ev, &k, cfg)
}

fn candidates(
    net: &NetworkInstance,
    w: &LinkWeights,
    ev: &Evaluation,
    k: &[CMatrix],
    cfg: &SchedulerConfig,
) -> Result<CandidateBeams> {
    let pairs: Vec<(usize, usize)> = net.associated_pairs().collect();
    let mut beams = Vec::with_capacity(pairs.len());
    let mut multipliers = Vec::with_capacity(pairs.len());
    if cfg.no_power_control {
        let full = full_power_beam(net);
        beams.resize(pairs.len(), full);
        multipliers.resize(pairs.len(), 0.0);
        return Ok(CandidateBeams { pairs, beams, multipliers });
    }
    let mut eigs: Vec<Option<QuadraticEigen>> = (0..net.num_tx()).map(|_| None).collect();
    for &(j, i) in &pairs {
        let num = kernel::beam_numerator(net, w, ev, j, i);
        let eig = eigs[i].get_or_insert_with(|| QuadraticEigen::new(&k[i], cfg.ridge));
        let (mut beam, mu) = kernel::best_beam(eig, &num, net.p_max(), cfg.bisection_tol)?;
        if cfg.rank_limit == RankLimit::One {
            beam = kernel::dominant_column(&beam);
        }
        beams.push(beam);
        multipliers.push(mu);
    }
    Ok(CandidateBeams { pairs, beams, multipliers })
}

/// `λ_ji = w(log|I+Γ_j| − tr Γ_j) + 2√w Re tr((I+Γ_j) Y_j† H_ji Ṽ_ji) − tr(Ṽ_ji† K_i Ṽ_ji)`,
/// natural log, in the order of `cand.pairs`.
pub fn fplinq_lambda_weights(
    net: &NetworkInstance,
    w: &LinkWeights,
    aux: &AuxState,
    cand: &CandidateBeams,
) -> Result<Vec<f64>> {
    let ev = aux.to_evaluation()?;
    let k = kernel::quadratic_terms(net, &ev);
    Ok(lambdas(net, w, &ev, &k, cand))
}

fn lambdas(net: &NetworkInstance, w: &LinkWeights, ev: &Evaluation, k: &[CMatrix], cand: &CandidateBeams) -> Vec<f64> {
    cand.pairs
        .iter()
        .zip(&cand.beams)
        .map(|(&(j, i), v)| {
            let wji = w.get(j, i);
            let num = kernel::beam_numerator(net, w, ev, j, i);
            wji * (ev.log_det[j] - trace_re(&ev.gamma[j])) + 2.0 * inner_re(&num, v) - inner_re(v, &(&k[i] * v))
        })
        .collect()
}

/// One iteration from an already evaluated state.
fn step_evaluated(net: &NetworkInstance, w: &LinkWeights, ev: &Evaluation, cfg: &SchedulerConfig) -> Result<FpState> {
    let k = kernel::quadratic_terms(net, ev);
    let cand = candidates(net, w, ev, &k, cfg)?;
    let lambda = lambdas(net, w, ev, &k, &cand);
    let mut problem = MatchingProblem::new(net.num_rx(), net.num_tx());
    for (&(j, i), &l) in cand.pairs.iter().zip(&lambda) {
        if l > 0.0 {
            problem.push_unique_edge(j, i, l);
        }
    }
    let matching = hungarian(&problem);
    let mut beams = BeamformerSet::zeros(net);
    for &(j, i) in &matching.pairs {
        let k = cand.pairs.iter().position(|&p| p == (j, i)).expect("matched pairs are candidates");
        beams.0[i] = cand.beams[k].clone();
    }
    let schedule = kernel::match_receivers(net, w, &mut beams)?;
    Ok(FpState { beams, schedule })
}

/// Updates `Γ`, `Y`, then `V` by the first matching, then `s` by the second.
pub fn fplinq_step(net: &NetworkInstance, w: &LinkWeights, state: &FpState, cfg: &SchedulerConfig) -> Result<FpState> {
    let ev = kernel::evaluate(net, w, &state.beams, &state.schedule)?;
    step_evaluated(net, w, &ev, cfg)
}

/// Iterates [`fplinq_step`] from [`FpState::initial`] until the weighted sum
/// rate changes by less than `conv_tol` (relative) or `max_iters` is reached.
pub fn fplinq_run(net: &NetworkInstance, w: &LinkWeights, cfg: &SchedulerConfig) -> Result<SlotSolution> {
    fplinq_run_from(net, w, FpState::initial(net, w, cfg), cfg)
}

pub(crate) fn fplinq_run_from(
    net: &NetworkInstance,
    w: &LinkWeights,
    mut state: FpState,
    cfg: &SchedulerConfig,
) -> Result<SlotSolution> {
    let mut ev = kernel::evaluate(net, w, &state.beams, &state.schedule)?;
    let mut trace = vec![ev.wsr];
    for _ in 0..cfg.max_iters {
        let next = step_evaluated(net, w, &ev, cfg)?;
        let next_ev = kernel::evaluate(net, w, &next.beams, &next.schedule)?;
        let done = has_converged(ev.wsr, next_ev.wsr, cfg.conv_tol);
        trace.push(next_ev.wsr);
        state = next;
        ev = next_ev;
        if done {
            break;
        }
    }
    Ok(SlotSolution { schedule: state.schedule, beams: state.beams, objective_trace: trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::diag;
    use crate::network::weighted_sum_rate;

    fn scalar(gains: &[Vec<f64>], noise: f64, p: f64) -> NetworkInstance {
        NetworkInstance::scalar_links(gains, noise, p).unwrap()
    }

    fn all_on(n: usize) -> Schedule {
        Schedule((0..n).map(Some).collect())
    }

    #[test]
    fn gamma_examples() {
        let net = scalar(&[vec![1.0]], 1.0, 7.0);
        let v = BeamformerSet::full_power(&net);
        let g = fplinq_update_gamma(&net, &v, &all_on(1)).unwrap();
        assert!((g[0].as_matrix()[(0, 0)].re - 7.0).abs() < 1e-12);
        let g = fplinq_update_gamma(&net, &v, &Schedule::empty(1)).unwrap();
        assert_eq!(g[0].as_matrix()[(0, 0)].re, 0.0);
    }

    #[test]
    fn y_examples() {
        let net = scalar(&[vec![4.0]], 0.5, 3.0);
        let v = BeamformerSet::full_power(&net);
        let w = LinkWeights::uniform(&net, 2.0);
        let y = fplinq_update_y(&net, &w, &v, &all_on(1)).unwrap();
        let hv = 2.0 * 3f64.sqrt();
        assert!((y[0][(0, 0)].re - 2f64.sqrt() * hv / (0.5 + hv * hv)).abs() < 1e-12);
        let y = fplinq_update_y(&net, &w, &v, &Schedule::empty(1)).unwrap();
        assert_eq!(y[0][(0, 0)].re, 0.0);
    }

    #[test]
    fn zero_aux_gives_zero_beams_and_weights() {
        let net = scalar(&[vec![1.0, 0.5], vec![0.2, 1.0]], 1.0, 2.0);
        let w = LinkWeights::uniform(&net, 1.0);
        let aux = AuxState { gamma: vec![HermitianPsd::zeros(1); 2], y: vec![CMatrix::zeros(1, 1); 2] };
        let cand = fplinq_candidate_beams(&net, &w, &aux, &SchedulerConfig::default()).unwrap();
        assert!(cand.beams.iter().all(|b| b.norm() == 0.0));
        let lambda = fplinq_lambda_weights(&net, &w, &aux, &cand).unwrap();
        assert!(lambda.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn single_link_reaches_full_power_quickly() {
        let net = scalar(&[vec![2.0]], 1.0, 10.0);
        let w = LinkWeights::uniform(&net, 1.0);
        let sol = fplinq_run(&net, &w, &SchedulerConfig::default()).unwrap();
        assert_eq!(sol.schedule, all_on(1));
        assert!((sol.beams.power(0) - 10.0).abs() < 1e-9);
        assert!(sol.objective_trace.len() <= 4);
        assert!((sol.objective() - 21f64.log2()).abs() < 1e-9);
    }

    #[test]
    fn three_weakly_coupled_links_all_scheduled() {
        // 40 dB direct, 8 dB cross
        let d = 1e4;
        let c = 10f64.powf(0.8);
        let gains = vec![vec![d, c, c], vec![c, d, c], vec![c, c, d]];
        let net = scalar(&gains, 1.0, 1.0);
        let w = LinkWeights::uniform(&net, 1.0);
        let sol = fplinq_run(&net, &w, &SchedulerConfig::default()).unwrap();
        assert_eq!(sol.schedule.num_scheduled(), 3);
        let single = (1.0 + d).log2();
        assert!(sol.objective() > single);
    }

    #[test]
    fn shared_transmitter_never_scheduled_twice() {
        let net = NetworkInstance::from_parts(
            1,
            vec![vec![0], vec![0, 1]],
            2,
            vec![diag(&[1.0]), diag(&[0.1]), diag(&[2.0]), diag(&[0.5])],
            0.1,
            1.0,
        )
        .unwrap();
        let w = LinkWeights::uniform(&net, 1.0);
        let cfg = SchedulerConfig::default();
        let mut state = FpState::initial(&net, &w, &cfg);
        for _ in 0..10 {
            state = fplinq_step(&net, &w, &state, &cfg).unwrap();
            assert!(state.schedule.validate(&net).is_ok());
        }
        assert!(weighted_sum_rate(&w, &state.beams, &state.schedule, &net) > 0.0);
    }
}
