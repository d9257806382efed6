//! D2D network instances, schedules, beamformers and rate evaluation.

mod topology;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use topology::{
    dbm_to_watts, draw_channel, generate_topology, pathloss_db, AssociationMode, ExtraTxPlacement, TopologyConfig,
    MIN_PATHLOSS_DISTANCE,
};

use crate::linops::{self, c64, identity, log_det_identity_plus, psd_solve, CMatrix, HermitianPsd, LinalgError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("beamformer of transmitter {tx} uses power {power} > {p_max}")]
    PowerExceeded { tx: usize, power: f64, p_max: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, NetworkError>;

/// Transmitters `I`, receivers `J`, associations and all `|J|·|I|` channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "NetworkRepr", try_from = "NetworkRepr")]
pub struct NetworkInstance {
    num_antennas: usize,
    num_tx: usize,
    assoc_tx_of_rx: Vec<Vec<usize>>,
    assoc_rx_of_tx: Vec<Vec<usize>>,
    channels: Vec<CMatrix>,
    noise_power: f64,
    p_max: f64,
    pub tx_positions: Vec<[f64; 2]>,
    pub rx_positions: Vec<[f64; 2]>,
    /// Path loss plus shadowing per `(j, i)`, row-major by receiver. Present
    /// for generated instances; lets the fading be redrawn per slot.
    pub large_scale_db: Option<Vec<f64>>,
}

impl NetworkInstance {
    /// `channels[j·num_tx + i]` is `H_ji`, the channel from transmitter `i` to receiver `j`.
    pub fn from_parts(
        num_antennas: usize,
        assoc_tx_of_rx: Vec<Vec<usize>>,
        num_tx: usize,
        channels: Vec<CMatrix>,
        noise_power: f64,
        p_max: f64,
    ) -> Result<Self> {
        let invalid = |m: String| Err(NetworkError::InvalidNetwork(m));
        let num_rx = assoc_tx_of_rx.len();
        if num_antennas == 0 {
            return invalid("num_antennas must be at least 1".into());
        }
        if !(noise_power > 0.0) || !noise_power.is_finite() {
            return invalid(format!("noise power must be positive, got {noise_power}"));
        }
        if !(p_max > 0.0) || !p_max.is_finite() {
            return invalid(format!("p_max must be positive, got {p_max}"));
        }
        if channels.len() != num_rx * num_tx {
            return invalid(format!("expected {} channels, got {}", num_rx * num_tx, channels.len()));
        }
        for (k, h) in channels.iter().enumerate() {
            if h.nrows() != num_antennas || h.ncols() != num_antennas {
                return invalid(format!("channel {k} is {}x{}", h.nrows(), h.ncols()));
            }
            if !linops::is_finite(h) {
                return invalid(format!("channel {k} is not finite"));
            }
        }
        let mut assoc_rx_of_tx = vec![Vec::new(); num_tx];
        for (j, k) in assoc_tx_of_rx.iter().enumerate() {
            for (pos, &i) in k.iter().enumerate() {
                if i >= num_tx {
                    return invalid(format!("receiver {j} associates unknown transmitter {i}"));
                }
                if k[..pos].contains(&i) {
                    return invalid(format!("receiver {j} lists transmitter {i} twice"));
                }
                assoc_rx_of_tx[i].push(j);
            }
        }
        Ok(Self {
            num_antennas,
            num_tx,
            assoc_tx_of_rx,
            assoc_rx_of_tx,
            channels,
            noise_power,
            p_max,
            tx_positions: Vec::new(),
            rx_positions: Vec::new(),
            large_scale_db: None,
        })
    }

    /// Single-antenna instance from power gains `|h_ji|²` (row `j`, column `i`), with
    /// transmitter `k` serving receiver `k`.
    pub fn scalar_links(gains: &[Vec<f64>], noise_power: f64, p_max: f64) -> Result<Self> {
        let n = gains.len();
        let mut channels = Vec::with_capacity(n * n);
        for row in gains {
            if row.len() != n {
                return Err(NetworkError::InvalidNetwork("gain matrix must be square".into()));
            }
            channels.extend(row.iter().map(|&g| CMatrix::from_element(1, 1, c64(g.sqrt(), 0.0))));
        }
        Self::from_parts(1, (0..n).map(|j| vec![j]).collect(), n, channels, noise_power, p_max)
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn num_tx(&self) -> usize {
        self.num_tx
    }

    pub fn num_rx(&self) -> usize {
        self.assoc_tx_of_rx.len()
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    /// `K_j`, sorted ascending for generated instances.
    pub fn assoc_tx_of_rx(&self, j: usize) -> &[usize] {
        &self.assoc_tx_of_rx[j]
    }

    /// `L_i`.
    pub fn assoc_rx_of_tx(&self, i: usize) -> &[usize] {
        &self.assoc_rx_of_tx[i]
    }

    pub fn is_associated(&self, j: usize, i: usize) -> bool {
        self.assoc_tx_of_rx[j].contains(&i)
    }

    /// Every associated `(j, i)` pair, ordered by receiver then transmitter.
    pub fn associated_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.assoc_tx_of_rx.iter().enumerate().flat_map(|(j, k)| k.iter().map(move |&i| (j, i)))
    }

    /// True when transmitter `k` serves exactly receiver `k` and nothing else.
    pub fn is_fixed_single(&self) -> bool {
        self.num_tx == self.num_rx() && self.assoc_tx_of_rx.iter().enumerate().all(|(j, k)| k == &[j])
    }

    /// `H_ji`.
    pub fn channel(&self, j: usize, i: usize) -> &CMatrix {
        &self.channels[j * self.num_tx + i]
    }

    /// Redraws small-scale fading around the stored large-scale gains. A
    /// no-op for hand-built instances without large-scale data.
    pub fn redraw_fading(&mut self, rng: &mut impl Rng) {
        if let Some(loss) = &self.large_scale_db {
            for (h, &l) in self.channels.iter_mut().zip(loss) {
                *h = draw_channel(l, 0.0, self.num_antennas, rng);
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ComplexMatrixRepr {
    rows: usize,
    cols: usize,
    /// Column-major, interleaved `re, im`.
    data: Vec<f64>,
}

impl From<&CMatrix> for ComplexMatrixRepr {
    fn from(m: &CMatrix) -> Self {
        Self { rows: m.nrows(), cols: m.ncols(), data: m.iter().flat_map(|z| [z.re, z.im]).collect() }
    }
}

impl TryFrom<ComplexMatrixRepr> for CMatrix {
    type Error = String;

    fn try_from(r: ComplexMatrixRepr) -> std::result::Result<Self, String> {
        if r.data.len() != 2 * r.rows * r.cols {
            return Err(format!(
                "{}x{} matrix needs {} numbers, got {}",
                r.rows,
                r.cols,
                2 * r.rows * r.cols,
                r.data.len()
            ));
        }
        Ok(CMatrix::from_iterator(r.rows, r.cols, r.data.chunks_exact(2).map(|p| c64(p[0], p[1]))))
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    num_antennas: usize,
    num_tx: usize,
    noise_power: f64,
    p_max: f64,
    tx_positions: Vec<[f64; 2]>,
    rx_positions: Vec<[f64; 2]>,
    assoc_tx_of_rx: Vec<Vec<usize>>,
    #[serde(default)]
    large_scale_db: Option<Vec<f64>>,
    channels: Vec<ComplexMatrixRepr>,
}

impl From<NetworkInstance> for NetworkRepr {
    fn from(n: NetworkInstance) -> Self {
        Self {
            num_antennas: n.num_antennas,
            num_tx: n.num_tx,
            noise_power: n.noise_power,
            p_max: n.p_max,
            channels: n.channels.iter().map(ComplexMatrixRepr::from).collect(),
            tx_positions: n.tx_positions,
            rx_positions: n.rx_positions,
            assoc_tx_of_rx: n.assoc_tx_of_rx,
            large_scale_db: n.large_scale_db,
        }
    }
}

impl TryFrom<NetworkRepr> for NetworkInstance {
    type Error = NetworkError;

    fn try_from(r: NetworkRepr) -> Result<Self> {
        let channels = r
            .channels
            .into_iter()
            .map(CMatrix::try_from)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(NetworkError::InvalidNetwork)?;
        let mut net = Self::from_parts(r.num_antennas, r.assoc_tx_of_rx, r.num_tx, channels, r.noise_power, r.p_max)?;
        if let Some(loss) = &r.large_scale_db {
            if loss.len() != net.num_rx() * net.num_tx() {
                return Err(NetworkError::InvalidNetwork("large_scale_db has the wrong length".into()));
            }
        }
        net.tx_positions = r.tx_positions;
        net.rx_positions = r.rx_positions;
        net.large_scale_db = r.large_scale_db;
        Ok(net)
    }
}

/// `s_j` per receiver: the serving transmitter, or `None`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule(pub Vec<Option<usize>>);

impl Schedule {
    pub fn empty(num_rx: usize) -> Self {
        Self(vec![None; num_rx])
    }

    pub fn get(&self, j: usize) -> Option<usize> {
        self.0[j]
    }

    pub fn num_scheduled(&self) -> usize {
        self.0.iter().flatten().count()
    }

    /// Scheduled `(j, s_j)` pairs in receiver order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.iter().enumerate().filter_map(|(j, s)| s.map(|i| (j, i)))
    }

    /// Receiver served by each transmitter, if any.
    pub fn receiver_of_tx(&self, num_tx: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; num_tx];
        for (j, i) in self.pairs() {
            out[i] = Some(j);
        }
        out
    }

    /// Checks `s_j ∈ K_j ∪ {∅}` and injectivity.
    pub fn validate(&self, net: &NetworkInstance) -> Result<()> {
        if self.0.len() != net.num_rx() {
            return Err(NetworkError::InvalidSchedule(format!(
                "{} entries for {} receivers",
                self.0.len(),
                net.num_rx()
            )));
        }
        let mut used = vec![false; net.num_tx()];
        for (j, i) in self.pairs() {
            if !net.is_associated(j, i) {
                return Err(NetworkError::InvalidSchedule(format!(
                    "receiver {j} is not associated with transmitter {i}"
                )));
            }
            if std::mem::replace(&mut used[i], true) {
                return Err(NetworkError::InvalidSchedule(format!("transmitter {i} is scheduled twice")));
            }
        }
        Ok(())
    }
}

/// `V_i` per transmitter; columns are per-stream beamformers.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet(pub Vec<CMatrix>);

impl BeamformerSet {
    pub fn zeros(net: &NetworkInstance) -> Self {
        let n = net.num_antennas();
        Self(vec![CMatrix::zeros(n, n); net.num_tx()])
    }

    /// `√(p_max/N)·I`, the isotropic full-power beamformer.
    pub fn full_power(net: &NetworkInstance) -> Self {
        Self(vec![full_power_beam(net); net.num_tx()])
    }

    pub fn power(&self, i: usize) -> f64 {
        self.0[i].norm_squared()
    }

    pub fn check_power(&self, p_max: f64) -> Result<()> {
        for i in 0..self.0.len() {
            let power = self.power(i);
            if !(power <= p_max * (1.0 + 1e-9)) {
                return Err(NetworkError::PowerExceeded { tx: i, power, p_max });
            }
        }
        Ok(())
    }
}

pub fn full_power_beam(net: &NetworkInstance) -> CMatrix {
    let n = net.num_antennas();
    identity(n) * c64((net.p_max() / n as f64).sqrt(), 0.0)
}

/// Nonnegative weights `w_ji` on associated pairs; zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkWeights {
    num_tx: usize,
    values: Vec<f64>,
}

impl LinkWeights {
    pub fn uniform(net: &NetworkInstance, w: f64) -> Self {
        Self::per_receiver(net, &vec![w; net.num_rx()])
    }

    /// `w_ji = w_j` for every `i ∈ K_j`.
    pub fn per_receiver(net: &NetworkInstance, w: &[f64]) -> Self {
        let mut out = Self { num_tx: net.num_tx(), values: vec![0.0; net.num_rx() * net.num_tx()] };
        for (j, i) in net.associated_pairs() {
            out.set(j, i, w[j]);
        }
        out
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.num_tx + i]
    }

    pub fn set(&mut self, j: usize, i: usize, w: f64) {
        assert!(w >= 0.0 && w.is_finite(), "weights must be finite and nonnegative");
        self.values[j * self.num_tx + i] = w;
    }

    /// Multiplies every weight by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { num_tx: self.num_tx, values: self.values.iter().map(|w| w * c).collect() }
    }
}

/// `H V V† H†`.
pub fn received_covariance(h: &CMatrix, v: &CMatrix) -> CMatrix {
    let hv = h * v;
    &hv * hv.adjoint()
}

/// `F_j = σ²I + Σ_{j'≠j} H_{j s_j'} V_{s_j'} V†_{s_j'} H†_{j s_j'}`.
pub fn interference_plus_noise(j: usize, v: &BeamformerSet, s: &Schedule, net: &NetworkInstance) -> HermitianPsd {
    let n = net.num_antennas();
    let mut f = identity(n) * c64(net.noise_power(), 0.0);
    for (jj, i) in s.pairs() {
        if jj != j {
            f += received_covariance(net.channel(j, i), &v.0[i]);
        }
    }
    HermitianPsd::from_gram(f)
}

/// `log₂|I + V† H† F⁻¹ H V|` for the scheduled transmitter, `0` if none.
pub fn link_rate(j: usize, v: &BeamformerSet, s: &Schedule, net: &NetworkInstance) -> f64 {
    let Some(i) = s.get(j) else { return 0.0 };
    let f = interference_plus_noise(j, v, s, net);
    rate_given_interference(net.channel(j, i), &v.0[i], f.as_matrix())
}

/// `log₂|I + V† H† F⁻¹ H V|`.
pub fn rate_given_interference(h: &CMatrix, v: &CMatrix, f: &CMatrix) -> f64 {
    let hv = h * v;
    let x = psd_solve(f, &hv, 0.0).expect("interference-plus-noise is positive definite");
    let sinr = HermitianPsd::from_gram(hv.adjoint() * x);
    log_det_identity_plus(sinr.as_matrix()).expect("I + PSD is positive definite") / std::f64::consts::LN_2
}

pub fn link_rates(v: &BeamformerSet, s: &Schedule, net: &NetworkInstance) -> Vec<f64> {
    (0..net.num_rx()).map(|j| link_rate(j, v, s, net)).collect()
}

/// `Σ_j w_{j s_j} R_j`.
pub fn weighted_sum_rate(w: &LinkWeights, v: &BeamformerSet, s: &Schedule, net: &NetworkInstance) -> f64 {
    s.pairs().map(|(j, i)| w.get(j, i) * link_rate(j, v, s, net)).sum()
}
