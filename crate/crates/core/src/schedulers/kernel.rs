//! Shared numerical steps of FPLinQ, WMMSE and BCD.

use std::f64::consts::LN_2;

use crate::linops::{self, c64, identity, CMatrix, HermitianEigen};
use crate::matching::{hungarian, MatchingProblem};
use crate::network::{BeamformerSet, LinkWeights, NetworkInstance, Schedule};

use super::{RankLimit, Result, SchedulerConfig};

/// Scratch buffers for `acc += (H V)(H V)†`.
pub(crate) struct OuterBuf {
    p: CMatrix,
    pa: CMatrix,
}

impl OuterBuf {
    pub(crate) fn new(n: usize) -> Self {
        Self { p: CMatrix::zeros(n, n), pa: CMatrix::zeros(n, n) }
    }

    pub(crate) fn add(&mut self, acc: &mut CMatrix, h: &CMatrix, v: &CMatrix, sign: f64) {
        self.p.gemm(c64(1.0, 0.0), h, v, c64(0.0, 0.0));
        self.p.adjoint_to(&mut self.pa);
        acc.gemm_ad(c64(sign, 0.0), &self.pa, &self.pa, c64(1.0, 0.0));
    }
}

pub(crate) fn noise_matrix(net: &NetworkInstance) -> CMatrix {
    identity(net.num_antennas()) * c64(net.noise_power(), 0.0)
}

/// Closed-form auxiliaries for a fixed `(V, s)` together with the quantities
/// the beam and weight updates reuse.
pub(crate) struct Evaluation {
    /// `Γ_j`, zero for unscheduled receivers.
    pub gamma: Vec<CMatrix>,
    /// `Y_j`, zero for unscheduled receivers.
    pub y: Vec<CMatrix>,
    /// `Y_j (I + Γ_j)`.
    pub z: Vec<CMatrix>,
    /// `ln|I + Γ_j|`.
    pub log_det: Vec<f64>,
    /// `Σ_j w_{j s_j} log₂|I + Γ_j|`.
    pub wsr: f64,
}

pub(crate) fn evaluate(net: &NetworkInstance, w: &LinkWeights, v: &BeamformerSet, s: &Schedule) -> Result<Evaluation> {
    let n = net.num_antennas();
    let rx = net.num_rx();
    let noise = noise_matrix(net);
    let mut buf = OuterBuf::new(n);
    let pairs: Vec<(usize, usize)> = s.pairs().collect();
    let mut out = Evaluation {
        gamma: vec![CMatrix::zeros(n, n); rx],
        y: vec![CMatrix::zeros(n, n); rx],
        z: vec![CMatrix::zeros(n, n); rx],
        log_det: vec![0.0; rx],
        wsr: 0.0,
    };
    for &(j, i) in &pairs {
        let mut f = noise.clone();
        for &(jj, ii) in &pairs {
            if jj != j {
                buf.add(&mut f, net.channel(j, ii), &v.0[ii], 1.0);
            }
        }
        let u = net.channel(j, i) * &v.0[i];
        let f = linops::hermitian_part(&f);
        let x = linops::psd_solve(&f, &u, 0.0)?;
        let gamma = linops::hermitian_part(&(u.adjoint() * x));
        let log_det = linops::log_det_identity_plus(&gamma)?;
        let wji = w.get(j, i);
        let total = linops::hermitian_part(&(&f + &u * u.adjoint()));
        let y = linops::psd_solve(&total, &(u * c64(wji.sqrt(), 0.0)), 0.0)?;
        out.z[j] = &y * (&gamma + identity(n));
        out.y[j] = y;
        out.gamma[j] = gamma;
        out.log_det[j] = log_det;
        out.wsr += wji * log_det / LN_2;
    }
    Ok(out)
}

/// `K_i = Σ_j H_ji† Y_j (I+Γ_j) Y_j† H_ji` for every transmitter.
pub(crate) fn quadratic_terms(net: &NetworkInstance, ev: &Evaluation) -> Vec<CMatrix> {
    let n = net.num_antennas();
    let zero = CMatrix::zeros(n, n);
    let active: Vec<(usize, CMatrix)> = (0..net.num_rx())
        .filter(|&j| ev.y[j] != zero)
        .map(|j| (j, linops::hermitian_part(&(&ev.z[j] * ev.y[j].adjoint()))))
        .collect();
    let mut tmp = CMatrix::zeros(n, n);
    (0..net.num_tx())
        .map(|i| {
            let mut k = CMatrix::zeros(n, n);
            for (j, m) in &active {
                let h = net.channel(*j, i);
                tmp.gemm(c64(1.0, 0.0), m, h, c64(0.0, 0.0));
                k.gemm_ad(c64(1.0, 0.0), h, &tmp, c64(1.0, 0.0));
            }
            linops::hermitian_part(&k)
        })
        .collect()
}

/// `√w_ji H_ji† Y_j (I+Γ_j)`.
pub(crate) fn beam_numerator(net: &NetworkInstance, w: &LinkWeights, ev: &Evaluation, j: usize, i: usize) -> CMatrix {
    let n = net.num_antennas();
    let mut out = CMatrix::zeros(n, n);
    out.gemm_ad(c64(w.get(j, i).sqrt(), 0.0), net.channel(j, i), &ev.z[j], c64(0.0, 0.0));
    out
}

/// Eigenstructure of a transmitter's quadratic term with the relative ridge applied.
pub(crate) struct QuadraticEigen {
    values: Vec<f64>,
    vectors: CMatrix,
}

impl QuadraticEigen {
    pub(crate) fn new(k: &CMatrix, ridge: f64) -> Self {
        let eig = HermitianEigen::new(k);
        let floor = ridge * eig.max().max(0.0);
        Self { values: eig.values.iter().map(|&l| l.max(floor)).collect(), vectors: eig.vectors }
    }
}

/// Maximizer of `2Re tr(V† B) − tr(V† K V)` subject to `tr(V†V) ≤ p_max`,
/// i.e. `(μI + K)⁻¹ B` with the smallest feasible `μ ≥ 0`. Returns the beam
/// and `μ`.
pub(crate) fn best_beam(eig: &QuadraticEigen, numerator: &CMatrix, p_max: f64, tol: f64) -> Result<(CMatrix, f64)> {
    let c = eig.vectors.adjoint() * numerator;
    let d: Vec<f64> = c.row_iter().map(|r| r.norm_squared()).collect();
    let total: f64 = d.iter().sum();
    if total == 0.0 {
        return Ok((CMatrix::zeros(numerator.nrows(), numerator.ncols()), 0.0));
    }
    let power = |mu: f64| -> f64 {
        eig.values.iter().zip(&d).map(|(&l, &dk)| if dk == 0.0 { 0.0 } else { dk / ((mu + l) * (mu + l)) }).sum()
    };
    let mu = if power(0.0) <= p_max {
        0.0
    } else {
        // μ ≥ √(Σd / p_max) is always feasible, so bracket on that scale
        let scale = (total / p_max).sqrt();
        let m = linops::bisect_multiplier(|m| power(scale * m), p_max, tol)?;
        scale * m
    };
    let mut scaled = c;
    for (k, mut row) in scaled.row_iter_mut().enumerate() {
        let denom = mu + eig.values[k];
        let factor = if denom > 0.0 { 1.0 / denom } else { 0.0 };
        row *= c64(factor, 0.0);
    }
    Ok((&eig.vectors * scaled, mu))
}

/// Keeps the column with the largest norm and zeroes the rest.
pub(crate) fn dominant_column(v: &CMatrix) -> CMatrix {
    let best = (0..v.ncols()).max_by(|&a, &b| v.column(a).norm_squared().total_cmp(&v.column(b).norm_squared()));
    let mut out = CMatrix::zeros(v.nrows(), v.ncols());
    if let Some(c) = best {
        out.set_column(c, &v.column(c));
    }
    out
}

/// Initial beamformers: isotropic full power, or a single equal-gain stream
/// at full power when rank one is required.
pub(crate) fn initial_beams(net: &NetworkInstance, cfg: &SchedulerConfig) -> BeamformerSet {
    match (cfg.rank_limit, cfg.no_power_control) {
        (RankLimit::One, false) => {
            let n = net.num_antennas();
            let amp = (net.p_max() / n as f64).sqrt();
            let mut v = CMatrix::zeros(n, n);
            v.column_mut(0).fill(c64(amp, 0.0));
            BeamformerSet(vec![v; net.num_tx()])
        }
        _ => BeamformerSet::full_power(net),
    }
}

/// Problem (40): each active transmitter picks a receiver given fixed beams.
/// Returns the new schedule; beams of unmatched transmitters are zeroed.
pub(crate) fn match_receivers(net: &NetworkInstance, w: &LinkWeights, v: &mut BeamformerSet) -> Result<Schedule> {
    let n = net.num_antennas();
    let active: Vec<bool> = v.0.iter().map(|m| m.iter().any(|z| *z != c64(0.0, 0.0))).collect();
    let noise = noise_matrix(net);
    let mut buf = OuterBuf::new(n);
    let mut problem = MatchingProblem::new(net.num_rx(), net.num_tx());
    for j in 0..net.num_rx() {
        let candidates: Vec<usize> =
            net.assoc_tx_of_rx(j).iter().copied().filter(|&i| active[i] && w.get(j, i) > 0.0).collect();
        if candidates.is_empty() {
            continue;
        }
        let mut total = noise.clone();
        for i in (0..net.num_tx()).filter(|&i| active[i]) {
            buf.add(&mut total, net.channel(j, i), &v.0[i], 1.0);
        }
        let total = linops::hermitian_part(&total);
        let log_total = linops::log_det_hpd(&total)?;
        for i in candidates {
            let mut f = total.clone();
            buf.add(&mut f, net.channel(j, i), &v.0[i], -1.0);
            let rate = (log_total - linops::log_det_hpd(&linops::hermitian_part(&f))?) / LN_2;
            let weight = w.get(j, i) * rate;
            if weight > 0.0 {
                problem.push_unique_edge(j, i, weight);
            }
        }
    }
    let matching = hungarian(&problem);
    let s = Schedule(matching.col_of_row(net.num_rx()));
    let served = s.receiver_of_tx(net.num_tx());
    for (i, beam) in v.0.iter_mut().enumerate() {
        if served[i].is_none() {
            beam.fill(c64(0.0, 0.0));
        }
    }
    Ok(s)
}
