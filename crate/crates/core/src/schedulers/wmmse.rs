//! Beamforming for a fixed schedule, and block coordinate descent over
//! schedule and beams.

use crate::linops::c64;
use crate::network::{BeamformerSet, LinkWeights, NetworkInstance, Schedule};

use super::fplinq::FpState;
use super::kernel::{self, QuadraticEigen};
use super::{has_converged, RankLimit, Result, SchedulerConfig, SlotSolution};

fn beam_update(
    net: &NetworkInstance,
    w: &LinkWeights,
    s: &Schedule,
    ev: &kernel::Evaluation,
    cfg: &SchedulerConfig,
) -> Result<BeamformerSet> {
    let k = kernel::quadratic_terms(net, ev);
    let mut v = BeamformerSet::zeros(net);
    for (j, i) in s.pairs() {
        let num = kernel::beam_numerator(net, w, ev, j, i);
        let eig = QuadraticEigen::new(&k[i], cfg.ridge);
        let (beam, _) = kernel::best_beam(&eig, &num, net.p_max(), cfg.bisection_tol)?;
        v.0[i] = match cfg.rank_limit {
            RankLimit::Full => beam,
            RankLimit::One => kernel::dominant_column(&beam),
        };
    }
    Ok(v)
}

/// WMMSE-pattern updates of the scheduled beams for a fixed schedule,
/// starting from `init`. Unscheduled transmitters are switched off.
pub fn wmmse_power_control(
    net: &NetworkInstance,
    w: &LinkWeights,
    s: &Schedule,
    init: &BeamformerSet,
    cfg: &SchedulerConfig,
) -> Result<SlotSolution> {
    s.validate(net)?;
    let served = s.receiver_of_tx(net.num_tx());
    let mut v = init.clone();
    for (i, beam) in v.0.iter_mut().enumerate() {
        if served[i].is_none() {
            beam.fill(c64(0.0, 0.0));
        }
    }
    let mut ev = kernel::evaluate(net, w, &v, s)?;
    let mut trace = vec![ev.wsr];
    for _ in 0..cfg.max_iters {
        let next = beam_update(net, w, s, &ev, cfg)?;
        let next_ev = kernel::evaluate(net, w, &next, s)?;
        let done = has_converged(ev.wsr, next_ev.wsr, cfg.conv_tol);
        trace.push(next_ev.wsr);
        v = next;
        ev = next_ev;
        if done {
            break;
        }
    }
    Ok(SlotSolution { schedule: s.clone(), beams: v, objective_trace: trace })
}

/// Problem (40) for fixed beams: each transmitter with a nonzero beam is
/// matched to at most one receiver by weighted rate. Beams of unmatched
/// transmitters are zeroed.
pub fn rate_matching(net: &NetworkInstance, w: &LinkWeights, v: &mut BeamformerSet) -> Result<Schedule> {
    kernel::match_receivers(net, w, v)
}

/// One BCD round: a WMMSE update of the beams for the current schedule,
/// then the schedule by rate matching for those beams.
pub fn bcd_step(net: &NetworkInstance, w: &LinkWeights, state: &FpState, cfg: &SchedulerConfig) -> Result<FpState> {
    let ev = kernel::evaluate(net, w, &state.beams, &state.schedule)?;
    let mut beams = beam_update(net, w, &state.schedule, &ev, cfg)?;
    let schedule = rate_matching(net, w, &mut beams)?;
    Ok(FpState { beams, schedule })
}

/// Alternates [`bcd_step`] from the same initial point as FPLinQ until the
/// weighted sum rate converges. A transmitter whose beam is zeroed stays
/// off for the rest of the run.
pub fn bcd_run(net: &NetworkInstance, w: &LinkWeights, cfg: &SchedulerConfig) -> Result<SlotSolution> {
    let mut state = FpState::initial(net, w, cfg);
    let mut value = kernel::evaluate(net, w, &state.beams, &state.schedule)?.wsr;
    let mut trace = vec![value];
    for _ in 0..cfg.max_iters {
        let next = bcd_step(net, w, &state, cfg)?;
        let next_value = kernel::evaluate(net, w, &next.beams, &next.schedule)?.wsr;
        let done = has_converged(value, next_value, cfg.conv_tol) || next == state;
        trace.push(next_value);
        state = next;
        value = next_value;
        if done {
            break;
        }
    }
    Ok(SlotSolution { schedule: state.schedule, beams: state.beams, objective_trace: trace })
}
