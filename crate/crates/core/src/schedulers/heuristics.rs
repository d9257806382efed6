//! Sequential link selection for single-antenna, single-association
//! networks: FlashLinQ, ITLinQ, ITLinQ+, greedy TIN and all-on, plus the
//! alternation of a selection rule with WMMSE power control.

use crate::linops::c64;
use crate::network::{BeamformerSet, LinkWeights, NetworkInstance, Schedule};

use super::{wmmse_power_control, Result, SchedulerConfig, SchedulerError, SlotSolution};

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn from_db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// Noise-normalized link gains `|h_ki|²/σ²` of a single-antenna,
/// single-association network, with per-link transmit powers.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarView {
    gain: Vec<Vec<f64>>,
    pub powers: Vec<f64>,
}

impl ScalarView {
    pub fn new(net: &NetworkInstance, scheduler: &'static str) -> Result<Self> {
        if net.num_antennas() != 1 {
            return Err(SchedulerError::Unsupported { scheduler, reason: "multiple antennas" });
        }
        if !net.is_fixed_single() {
            return Err(SchedulerError::Unsupported { scheduler, reason: "flexible association" });
        }
        let l = net.num_rx();
        let gain = (0..l)
            .map(|k| (0..l).map(|i| net.channel(k, i)[(0, 0)].norm_sqr() / net.noise_power()).collect())
            .collect();
        Ok(Self { gain, powers: vec![net.p_max(); l] })
    }

    pub fn num_links(&self) -> usize {
        self.gain.len()
    }

    pub fn snr(&self, i: usize) -> f64 {
        self.gain[i][i] * self.powers[i]
    }

    /// Interference-to-noise ratio at receiver `k` from transmitter `i`.
    pub fn inr(&self, k: usize, i: usize) -> f64 {
        self.gain[k][i] * self.powers[i]
    }

    pub fn sinr(&self, i: usize, active: &[usize]) -> f64 {
        let interference: f64 = active.iter().filter(|&&k| k != i).map(|&k| self.inr(i, k)).sum();
        self.snr(i) / (1.0 + interference)
    }

    /// Largest INR link `i` causes to, and receives from, the other links in `active`.
    fn max_inr(&self, i: usize, active: &[usize]) -> (f64, f64) {
        let others = active.iter().filter(|&&k| k != i);
        let out = others.clone().map(|&k| self.inr(k, i)).fold(0.0, f64::max);
        let inc = others.map(|&k| self.inr(i, k)).fold(0.0, f64::max);
        (out, inc)
    }
}

/// Whether link `i` satisfies the TIN condition within the links `active`:
/// `SNR_i ≥ max INR caused + max INR received`, in dB with negative values
/// clamped to zero.
pub fn tin_check(view: &ScalarView, i: usize, active: &[usize]) -> bool {
    let (out, inc) = view.max_inr(i, active);
    let exponent = |x: f64| if x > 1.0 { db(x) } else { 0.0 };
    exponent(view.snr(i)) >= exponent(out) + exponent(inc)
}

fn itlinq_ok(view: &ScalarView, i: usize, active: &[usize], cfg: &SchedulerConfig) -> bool {
    let (out, inc) = view.max_inr(i, active);
    from_db(cfg.itlinq.m_db) * out.max(inc) <= view.snr(i).powf(cfg.itlinq.eta)
}

/// Links by descending weight, ties by index.
fn admission_order(w: &LinkWeights, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| w.get(b, b).total_cmp(&w.get(a, a)).then(a.cmp(&b)));
    order
}

/// Algorithm 1: admit each link in order if `fits` holds for every link of
/// the enlarged set.
fn sequential(
    view: &ScalarView,
    w: &LinkWeights,
    mut fits: impl FnMut(&ScalarView, usize, &[usize]) -> bool,
) -> Schedule {
    let n = view.num_links();
    let mut admitted: Vec<usize> = Vec::new();
    for i in admission_order(w, n) {
        if w.get(i, i) <= 0.0 {
            continue;
        }
        admitted.push(i);
        if !admitted.iter().all(|&k| fits(view, k, &admitted)) {
            admitted.pop();
        }
    }
    let mut s = Schedule::empty(n);
    for i in admitted {
        s.0[i] = Some(i);
    }
    s
}

pub fn baseline_all_on(net: &NetworkInstance) -> Result<Schedule> {
    if !net.is_fixed_single() {
        return Err(SchedulerError::Unsupported { scheduler: "all-on", reason: "flexible association" });
    }
    Ok(Schedule((0..net.num_rx()).map(Some).collect()))
}

pub fn baseline_greedy_tin(net: &NetworkInstance, w: &LinkWeights) -> Result<Schedule> {
    let view = ScalarView::new(net, "greedy-tin")?;
    Ok(sequential(&view, w, tin_check))
}

fn flashlinq_with(view: &ScalarView, w: &LinkWeights, cfg: &SchedulerConfig) -> Schedule {
    let theta = from_db(cfg.flash_theta_db);
    sequential(view, w, |v, k, active| v.sinr(k, active) >= theta)
}

/// Admits a link when every admitted link keeps `SINR ≥ θ` at full power.
pub fn flashlinq_schedule(net: &NetworkInstance, w: &LinkWeights, cfg: &SchedulerConfig) -> Result<Schedule> {
    Ok(flashlinq_with(&ScalarView::new(net, "flashlinq")?, w, cfg))
}

/// Admits a link when every admitted link satisfies `M·max(INR) ≤ SNR^η`.
pub fn itlinq_schedule(net: &NetworkInstance, w: &LinkWeights, cfg: &SchedulerConfig) -> Result<Schedule> {
    let view = ScalarView::new(net, "itlinq")?;
    Ok(sequential(&view, w, |v, k, active| itlinq_ok(v, k, active, cfg)))
}

/// ITLinQ with power backoff: a link failing the test at its power cap is
/// retried at successively lower powers before being rejected.
fn itlinq_plus_with(view: &mut ScalarView, w: &LinkWeights, cfg: &SchedulerConfig) -> Schedule {
    let n = view.num_links();
    let caps = view.powers.clone();
    let mut admitted: Vec<usize> = Vec::new();
    for i in admission_order(w, n) {
        if w.get(i, i) <= 0.0 {
            continue;
        }
        admitted.push(i);
        let level = (0..=cfg.itlinq.backoff_levels).find(|&k| {
            view.powers[i] = caps[i] * from_db(-(k as f64) * cfg.itlinq.backoff_step_db);
            admitted.iter().all(|&m| itlinq_ok(view, m, &admitted, cfg))
        });
        if level.is_none() {
            admitted.pop();
            view.powers[i] = caps[i];
        }
    }
    let mut s = Schedule::empty(n);
    for &i in &admitted {
        s.0[i] = Some(i);
    }
    s
}

/// ITLinQ+ schedule with the chosen per-link powers as beamformers.
pub fn itlinq_plus_schedule(
    net: &NetworkInstance,
    w: &LinkWeights,
    cfg: &SchedulerConfig,
) -> Result<(Schedule, BeamformerSet)> {
    let mut view = ScalarView::new(net, "itlinq-plus")?;
    let s = itlinq_plus_with(&mut view, w, cfg);
    Ok((s.clone(), scalar_beams(net, &s, &view.powers)))
}

fn scalar_beams(net: &NetworkInstance, s: &Schedule, powers: &[f64]) -> BeamformerSet {
    let mut v = BeamformerSet::zeros(net);
    for (_, i) in s.pairs() {
        v.0[i][(0, 0)] = c64(powers[i].sqrt(), 0.0);
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcBase {
    Flashlinq,
    ItlinqPlus,
}

/// Alternates the base selection rule (evaluated at the current powers)
/// with WMMSE power control for the selected links. Stops at the first
/// alternation that does not improve the weighted sum rate and returns the
/// best solution; the trace lists the accepted values.
pub fn composite_pc(
    base: PcBase,
    net: &NetworkInstance,
    w: &LinkWeights,
    cfg: &SchedulerConfig,
) -> Result<SlotSolution> {
    let name = match base {
        PcBase::Flashlinq => "flashlinq-pc",
        PcBase::ItlinqPlus => "itlinq-plus-pc",
    };
    let mut view = ScalarView::new(net, name)?;
    let mut best: Option<SlotSolution> = None;
    let mut trace = Vec::new();
    for _ in 0..cfg.pc_rounds {
        let s = match base {
            PcBase::Flashlinq => flashlinq_with(&view, w, cfg),
            PcBase::ItlinqPlus => itlinq_plus_with(&mut view, w, cfg),
        };
        let init = scalar_beams(net, &s, &view.powers);
        let sol = wmmse_power_control(net, w, &s, &init, cfg)?;
        if let Some(b) = &best {
            if sol.objective() <= b.objective() * (1.0 + cfg.conv_tol) {
                break;
            }
        }
        for (_, i) in sol.schedule.pairs() {
            view.powers[i] = sol.beams.power(i).max(f64::MIN_POSITIVE);
        }
        trace.push(sol.objective());
        best = Some(sol);
    }
    let mut best = best.expect("pc_rounds ≥ 1");
    best.objective_trace = trace;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::weighted_sum_rate;
    use crate::schedulers::full_power_solution;

    fn net(gains: &[Vec<f64>]) -> NetworkInstance {
        NetworkInstance::scalar_links(gains, 1.0, 1.0).unwrap()
    }

    /// Three links, 40 dB direct; link 0 exchanges 24 dB interference with
    /// links 1 and 2, which do not interfere with each other.
    fn star() -> NetworkInstance {
        let d = 1e4;
        let c = 10f64.powf(2.4);
        net(&[vec![d, c, c], vec![c, d, 0.0], vec![c, 0.0, d]])
    }

    #[test]
    fn tin_examples() {
        let iso = ScalarView::new(&net(&[vec![100.0]]), "t").unwrap();
        assert!(tin_check(&iso, 0, &[0]));
        let p = 1e10f64;
        let mk = |cross: f64| {
            let c = p.powf(cross);
            ScalarView::new(&net(&[vec![p, c], vec![c, p]]), "t").unwrap()
        };
        assert!(!tin_check(&mk(0.6), 0, &[0, 1]));
        assert!(tin_check(&mk(0.4), 0, &[0, 1]));
        let star = ScalarView::new(&star(), "t").unwrap();
        assert!((0..3).all(|i| !tin_check(&star, i, &[0, 1, 2])));
    }

    #[test]
    fn baselines_on_the_star() {
        let net = star();
        let w = LinkWeights::uniform(&net, 1.0);
        assert_eq!(baseline_all_on(&net).unwrap().num_scheduled(), 3);
        let greedy = baseline_greedy_tin(&net, &w).unwrap();
        assert_eq!(greedy.num_scheduled(), 1);
        let all = full_power_solution(&net, &w, baseline_all_on(&net).unwrap()).unwrap();
        let tin = full_power_solution(&net, &w, greedy).unwrap();
        assert!(all.objective() > tin.objective());
    }

    #[test]
    fn disjoint_links_all_pass_tin() {
        let net = net(&[vec![100.0, 0.0, 0.0], vec![0.0, 100.0, 0.0], vec![0.0, 0.0, 100.0]]);
        let w = LinkWeights::uniform(&net, 1.0);
        assert_eq!(baseline_greedy_tin(&net, &w).unwrap().num_scheduled(), 3);
    }

    #[test]
    fn flashlinq_examples() {
        let cfg = SchedulerConfig::default();
        let one = net(&[vec![1e3]]);
        assert_eq!(flashlinq_schedule(&one, &LinkWeights::uniform(&one, 1.0), &cfg).unwrap().num_scheduled(), 1);
        let two = net(&[vec![100.0, 100.0], vec![100.0, 100.0]]);
        let s = flashlinq_schedule(&two, &LinkWeights::uniform(&two, 1.0), &cfg).unwrap();
        assert_eq!(s, Schedule(vec![Some(0), None]));
    }

    #[test]
    fn itlinq_examples() {
        let cfg = SchedulerConfig::default();
        let one = net(&[vec![2.0]]);
        let w = LinkWeights::uniform(&one, 1.0);
        assert_eq!(itlinq_schedule(&one, &w, &cfg).unwrap().num_scheduled(), 1);
        assert_eq!(itlinq_plus_schedule(&one, &w, &cfg).unwrap().0.num_scheduled(), 1);
        let strict = SchedulerConfig {
            itlinq: crate::schedulers::ItlinqParams { m_db: 0.0, eta: 1.0, ..Default::default() },
            ..Default::default()
        };
        let star = star();
        let s = itlinq_schedule(&star, &LinkWeights::uniform(&star, 1.0), &strict).unwrap();
        assert_eq!(s.num_scheduled(), 3);
    }

    #[test]
    fn rejects_mimo_and_flexible() {
        let mimo =
            NetworkInstance::from_parts(2, vec![vec![0]], 1, vec![crate::linops::identity(2)], 1.0, 1.0).unwrap();
        let w = LinkWeights::uniform(&mimo, 1.0);
        assert!(matches!(
            flashlinq_schedule(&mimo, &w, &SchedulerConfig::default()),
            Err(SchedulerError::Unsupported { .. })
        ));
    }

    #[test]
    fn composite_single_link() {
        let one = net(&[vec![50.0]]);
        let w = LinkWeights::uniform(&one, 1.0);
        for base in [PcBase::Flashlinq, PcBase::ItlinqPlus] {
            let sol = composite_pc(base, &one, &w, &SchedulerConfig::default()).unwrap();
            assert_eq!(sol.schedule.num_scheduled(), 1);
            assert!((sol.beams.power(0) - 1.0).abs() < 1e-9);
            assert!((weighted_sum_rate(&w, &sol.beams, &sol.schedule, &one) - 51f64.log2()).abs() < 1e-9);
        }
    }
}
