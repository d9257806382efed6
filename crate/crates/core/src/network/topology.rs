use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::NetworkInstance;
use crate::error::ConfigError;
use crate::linops::{c64, CMatrix};
use crate::rng::{self, Stream};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Distances below this are clamped before evaluating path loss.
pub const MIN_PATHLOSS_DISTANCE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationMode {
    /// Transmitter `k` serves only receiver `k`.
    FixedSingle,
    /// Extra candidate transmitters per receiver plus extra receivers for a
    /// fraction of the transmitters.
    Flexible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtraTxPlacement {
    /// Uniform distance in `[link_dist_min, link_dist_max]` around the receiver.
    Annulus,
    /// Uniform in the whole area.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub area_side: f64,
    pub num_links: usize,
    pub link_dist_min: f64,
    pub link_dist_max: f64,
    pub num_antennas: usize,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub tx_power_max_dbm: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub antenna_gain_dbi: f64,
    pub antenna_height: f64,
    pub shadowing_std_db: f64,
    pub association_mode: AssociationMode,
    pub extra_tx_per_rx: usize,
    pub frac_tx_extra_rx: f64,
    pub extra_tx_placement: ExtraTxPlacement,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            area_side: 1000.0,
            num_links: 50,
            link_dist_min: 2.0,
            link_dist_max: 65.0,
            num_antennas: 1,
            carrier_hz: 2.4e9,
            bandwidth_hz: 5e6,
            tx_power_max_dbm: 20.0,
            noise_psd_dbm_hz: -169.0,
            noise_figure_db: 7.0,
            antenna_gain_dbi: 2.5,
            antenna_height: 1.5,
            shadowing_std_db: 10.0,
            association_mode: AssociationMode::FixedSingle,
            extra_tx_per_rx: 2,
            frac_tx_extra_rx: 1.0 / 3.0,
            extra_tx_placement: ExtraTxPlacement::Annulus,
        }
    }
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("area_side", self.area_side),
            ("link_dist_min", self.link_dist_min),
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("antenna_height", self.antenna_height),
        ];
        for (field, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ConfigError::new(field, format!("must be positive and finite, got {v}")));
            }
        }
        if self.num_links == 0 {
            return Err(ConfigError::new("num_links", "must be at least 1"));
        }
        if self.num_antennas == 0 {
            return Err(ConfigError::new("num_antennas", "must be at least 1"));
        }
        if !(self.link_dist_min < self.link_dist_max) || !self.link_dist_max.is_finite() {
            return Err(ConfigError::new("link_dist_max", "must be finite and exceed link_dist_min"));
        }
        if !(self.shadowing_std_db >= 0.0) || !self.shadowing_std_db.is_finite() {
            return Err(ConfigError::new("shadowing_std_db", "must be nonnegative and finite"));
        }
        if !(0.0..=1.0).contains(&self.frac_tx_extra_rx) {
            return Err(ConfigError::new("frac_tx_extra_rx", "must lie in [0, 1]"));
        }
        for (field, v) in [
            ("tx_power_max_dbm", self.tx_power_max_dbm),
            ("noise_psd_dbm_hz", self.noise_psd_dbm_hz),
            ("noise_figure_db", self.noise_figure_db),
            ("antenna_gain_dbi", self.antenna_gain_dbi),
        ] {
            if !v.is_finite() {
                return Err(ConfigError::new(field, "must be finite"));
            }
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Thermal noise plus noise figure over the band, in watts.
    pub fn noise_power(&self) -> f64 {
        dbm_to_watts(self.noise_psd_dbm_hz + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db)
    }

    pub fn p_max(&self) -> f64 {
        dbm_to_watts(self.tx_power_max_dbm)
    }

    /// Breakpoint distance `4 h_tx h_rx / λ`.
    pub fn breakpoint(&self) -> f64 {
        4.0 * self.antenna_height * self.antenna_height / self.wavelength()
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// ITU-R P.1411 line-of-sight lower-bound path loss, net of both antenna gains.
pub fn pathloss_db(distance: f64, cfg: &TopologyConfig) -> f64 {
    let lambda = cfg.wavelength();
    let h = cfg.antenna_height;
    let r_bp = cfg.breakpoint();
    let l_bp = (20.0 * (lambda * lambda / (8.0 * PI * h * h)).log10()).abs();
    let d = distance.max(MIN_PATHLOSS_DISTANCE);
    let slope = if d <= r_bp { 20.0 } else { 40.0 };
    l_bp + slope * (d / r_bp).log10() - 2.0 * cfg.antenna_gain_dbi
}

/// `√(10^(−(pl+shadow)/10)) · G` with `G` i.i.d. CN(0, 1).
pub fn draw_channel(pl_db: f64, shadow_db: f64, n: usize, rng: &mut impl Rng) -> CMatrix {
    let amp = 10f64.powf(-(pl_db + shadow_db) / 20.0) * std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(n, n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c64(amp * re, amp * im)
    })
}

fn offset(center: [f64; 2], rng: &mut impl Rng, dmin: f64, dmax: f64) -> [f64; 2] {
    let d = rng.random_range(dmin..=dmax);
    let theta = rng.random_range(0.0..2.0 * PI);
    [center[0] + d * theta.cos(), center[1] + d * theta.sin()]
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Draws positions, associations, shadowing and one fading realization.
///
/// Link `k` pairs transmitter `k` with receiver `k`. In flexible mode the
/// extra transmitters of receiver `j` get indices `L + extra·j + m`.
pub fn generate_topology(cfg: &TopologyConfig, seed: u64) -> Result<NetworkInstance, ConfigError> {
    cfg.validate()?;
    let mut rng = rng::stream(seed, Stream::Topology, 0);
    let l = cfg.num_links;
    let side = cfg.area_side;

    let mut tx_positions = Vec::with_capacity(l);
    let mut rx_positions = Vec::with_capacity(l);
    for _ in 0..l {
        let tx = [rng.random_range(0.0..side), rng.random_range(0.0..side)];
        rx_positions.push(offset(tx, &mut rng, cfg.link_dist_min, cfg.link_dist_max));
        tx_positions.push(tx);
    }
    let mut assoc_tx_of_rx: Vec<Vec<usize>> = (0..l).map(|j| vec![j]).collect();

    if cfg.association_mode == AssociationMode::Flexible {
        for (j, assoc) in assoc_tx_of_rx.iter_mut().enumerate() {
            for _ in 0..cfg.extra_tx_per_rx {
                let pos = match cfg.extra_tx_placement {
                    ExtraTxPlacement::Annulus => {
                        offset(rx_positions[j], &mut rng, cfg.link_dist_min, cfg.link_dist_max)
                    }
                    ExtraTxPlacement::Uniform => [rng.random_range(0.0..side), rng.random_range(0.0..side)],
                };
                assoc.push(tx_positions.len());
                tx_positions.push(pos);
            }
        }
        let num_tx = tx_positions.len();
        let extra = ((num_tx as f64) * cfg.frac_tx_extra_rx).round() as usize;
        let chosen = rand::seq::index::sample(&mut rng, num_tx, extra.min(num_tx));
        let mut chosen: Vec<usize> = chosen.into_iter().collect();
        chosen.sort_unstable();
        for i in chosen {
            let closest = (0..l).filter(|&j| !assoc_tx_of_rx[j].contains(&i)).min_by(|&a, &b| {
                distance(tx_positions[i], rx_positions[a]).total_cmp(&distance(tx_positions[i], rx_positions[b]))
            });
            if let Some(j) = closest {
                assoc_tx_of_rx[j].push(i);
            }
        }
        for assoc in &mut assoc_tx_of_rx {
            assoc.sort_unstable();
        }
    }

    let num_tx = tx_positions.len();
    let shadow = Normal::new(0.0, cfg.shadowing_std_db).expect("validated std");
    let mut large_scale_db = Vec::with_capacity(l * num_tx);
    for rx in &rx_positions {
        for tx in &tx_positions {
            large_scale_db.push(pathloss_db(distance(*tx, *rx), cfg) + shadow.sample(&mut rng));
        }
    }
    let mut fading = rng::stream(seed, Stream::Fading, 0);
    let channels = large_scale_db.iter().map(|&loss| draw_channel(loss, 0.0, cfg.num_antennas, &mut fading)).collect();

    let mut net =
        NetworkInstance::from_parts(cfg.num_antennas, assoc_tx_of_rx, num_tx, channels, cfg.noise_power(), cfg.p_max())
            .map_err(|e| ConfigError::new("topology", e.to_string()))?;
    net.tx_positions = tx_positions;
    net.rx_positions = rx_positions;
    net.large_scale_db = Some(large_scale_db);
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::frobenius_sq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn defaults_match_the_documented_setup() {
        let cfg = TopologyConfig::default();
        assert!(cfg.validate().is_ok());
        assert!((cfg.p_max() - 0.1).abs() < 1e-15);
        let noise_dbm = 10.0 * (cfg.noise_power() * 1e3).log10();
        assert!((noise_dbm - (-169.0 + 10.0 * 5e6f64.log10() + 7.0)).abs() < 1e-9);
    }

    #[test]
    fn validation_names_the_field() {
        let cfg = TopologyConfig { link_dist_min: 70.0, ..Default::default() };
        assert_eq!(cfg.validate().unwrap_err().field, "link_dist_max");
        let cfg = TopologyConfig { num_antennas: 0, ..Default::default() };
        assert_eq!(cfg.validate().unwrap_err().field, "num_antennas");
    }

    #[test]
    fn pathloss_breakpoint_and_slopes() {
        let cfg = TopologyConfig::default();
        let r_bp = cfg.breakpoint();
        let at_bp = pathloss_db(r_bp, &cfg);
        let lambda = cfg.wavelength();
        let l_bp = (20.0 * (lambda * lambda / (8.0 * PI * 1.5 * 1.5)).log10()).abs();
        assert!((at_bp - (l_bp - 5.0)).abs() < 1e-12);
        assert!((pathloss_db(2.0 * r_bp, &cfg) - at_bp - 40.0 * 2f64.log10()).abs() < 1e-12);
        assert!((at_bp - pathloss_db(r_bp / 2.0, &cfg) - 20.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn pathloss_at_30m_by_hand() {
        // λ = c/2.4 GHz, R_bp = 4·1.5²/λ, d < R_bp
        let lambda: f64 = 299_792_458.0 / 2.4e9;
        let r_bp = 9.0 / lambda;
        let l_bp = -20.0 * (lambda.powi(2) / (8.0 * PI * 2.25)).log10();
        let expected = l_bp + 20.0 * (30.0 / r_bp).log10() - 5.0;
        assert!((pathloss_db(30.0, &TopologyConfig::default()) - expected).abs() < 1e-10);
    }

    #[test]
    fn channel_power_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 10_000;
        let mean = |pl: f64, n: usize, rng: &mut ChaCha8Rng| {
            (0..draws).map(|_| frobenius_sq(&draw_channel(pl, 0.0, n, rng))).sum::<f64>() / draws as f64
        };
        assert!((mean(0.0, 1, &mut rng) - 1.0).abs() < 0.05);
        assert!((mean(20.0, 1, &mut rng) / 1e-2 - 1.0).abs() < 0.05);
        assert!((mean(10.0, 2, &mut rng) / (4.0 * 0.1) - 1.0).abs() < 0.05);
        let h = draw_channel(3.0, 2.0, 3, &mut ChaCha8Rng::seed_from_u64(1));
        let g = draw_channel(5.0, 0.0, 3, &mut ChaCha8Rng::seed_from_u64(1));
        assert!((h - g).norm() < 1e-18);
    }

    #[test]
    fn single_link_topology() {
        let cfg = TopologyConfig { num_links: 1, ..Default::default() };
        let net = generate_topology(&cfg, 5).unwrap();
        assert_eq!(net.num_tx(), 1);
        assert_eq!(net.num_rx(), 1);
        assert_eq!(net.assoc_tx_of_rx(0), &[0]);
        let d = distance(net.tx_positions[0], net.rx_positions[0]);
        assert!((2.0..=65.0).contains(&d));
    }

    #[test]
    fn flexible_association_counts() {
        let cfg = TopologyConfig { num_links: 100, association_mode: AssociationMode::Flexible, ..Default::default() };
        let net = generate_topology(&cfg, 9).unwrap();
        assert_eq!(net.num_tx(), 300);
        assert_eq!(net.num_rx(), 100);
        let mut augmented = 0;
        for j in 0..100 {
            let k = net.assoc_tx_of_rx(j);
            let own: Vec<usize> = k.iter().copied().filter(|&i| i == j || (i >= 100 && (i - 100) / 2 == j)).collect();
            assert_eq!(own.len(), 3, "receiver {j}");
            augmented += k.len() - 3;
        }
        assert_eq!(augmented, 100);
        for i in 0..300 {
            assert!(net.assoc_rx_of_tx(i).len() <= 2);
            for &j in net.assoc_rx_of_tx(i) {
                assert!(net.assoc_tx_of_rx(j).contains(&i));
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = TopologyConfig {
            num_links: 20,
            num_antennas: 2,
            association_mode: AssociationMode::Flexible,
            ..Default::default()
        };
        let a = generate_topology(&cfg, 42).unwrap();
        let b = generate_topology(&cfg, 42).unwrap();
        let c = generate_topology(&cfg, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
