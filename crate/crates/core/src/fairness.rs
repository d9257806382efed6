//! Proportional-fairness weights and long-term log utility.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::network::{LinkWeights, NetworkInstance};

pub const DEFAULT_SMOOTHING: f64 = 0.05;
pub const DEFAULT_RATE_FLOOR: f64 = 1e-6;

/// Per-receiver rate state in bits/s/Hz: an exponentially smoothed average
/// that drives the weights, and the plain running mean used for utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateAverages {
    smoothing: f64,
    floor: f64,
    smoothed: Vec<f64>,
    totals: Vec<f64>,
    slots: usize,
}

impl RateAverages {
    pub fn new(num_rx: usize, smoothing: f64, floor: f64) -> Result<Self, ConfigError> {
        if !(smoothing > 0.0 && smoothing < 1.0) {
            return Err(ConfigError::new("smoothing", "must lie in (0, 1)"));
        }
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(ConfigError::new("rate_floor", "must be positive and finite"));
        }
        Ok(Self { smoothing, floor, smoothed: vec![floor; num_rx], totals: vec![0.0; num_rx], slots: 0 })
    }

    pub fn with_defaults(num_rx: usize) -> Self {
        Self::new(num_rx, DEFAULT_SMOOTHING, DEFAULT_RATE_FLOOR).expect("defaults are valid")
    }

    pub fn num_rx(&self) -> usize {
        self.smoothed.len()
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn smoothed(&self) -> &[f64] {
        &self.smoothed
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    /// Mean rate per receiver over all recorded slots, or the floor before any.
    pub fn long_term(&self) -> Vec<f64> {
        if self.slots == 0 {
            return vec![self.floor; self.num_rx()];
        }
        self.totals.iter().map(|t| t / self.slots as f64).collect()
    }

    /// Per-receiver weights `1 / max(R̄_j, ε)`.
    pub fn receiver_weights(&self) -> Vec<f64> {
        self.smoothed.iter().map(|&r| 1.0 / r.max(self.floor)).collect()
    }

    /// Link weights giving every associated pair its receiver's PF weight.
    pub fn link_weights(&self, net: &NetworkInstance) -> LinkWeights {
        LinkWeights::per_receiver(net, &self.receiver_weights())
    }
}

/// Folds one slot's per-receiver rates (zero for unserved receivers) into
/// the averages and returns the next weights.
pub fn pf_update(avg: &RateAverages, slot_rates: &[f64]) -> (Vec<f64>, RateAverages) {
    assert_eq!(slot_rates.len(), avg.num_rx(), "one rate per receiver");
    let mut next = avg.clone();
    for ((s, t), &r) in next.smoothed.iter_mut().zip(next.totals.iter_mut()).zip(slot_rates) {
        debug_assert!(r >= 0.0);
        *s = ((1.0 - avg.smoothing) * *s + avg.smoothing * r).max(avg.floor);
        *t += r;
    }
    next.slots += 1;
    (next.receiver_weights(), next)
}

/// `Σ_j ln R̄_j` over the long-term mean rates, floored at `ε`.
pub fn log_utility(avg: &RateAverages) -> f64 {
    avg.long_term().iter().map(|&r| r.max(avg.floor).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_averages_give_equal_weights() {
        let avg = RateAverages::with_defaults(3);
        let (w, _) = pf_update(&avg, &[2.0, 2.0, 2.0]);
        assert!(w.windows(2).all(|p| p[0] == p[1]));
    }

    #[test]
    fn starved_receiver_weight_grows_to_the_cap() {
        let mut avg = RateAverages::with_defaults(2);
        let mut last = 0.0;
        for slot in 0..400 {
            let rates = if slot == 0 { [1.0, 1.0] } else { [1.0, 0.0] };
            let (w, next) = pf_update(&avg, &rates);
            if slot > 0 {
                assert!(w[1] >= last);
            }
            last = w[1];
            avg = next;
        }
        assert!((last - 1.0 / DEFAULT_RATE_FLOOR).abs() < 1e-6 / DEFAULT_RATE_FLOOR);
    }

    #[test]
    fn stationary_link_reaches_unit_product() {
        let mut avg = RateAverages::with_defaults(1);
        let mut w = vec![0.0];
        for _ in 0..2000 {
            (w, avg) = pf_update(&avg, &[3.5]);
        }
        assert!((w[0] * avg.smoothed()[0] - 1.0).abs() < 1e-12);
        assert!((avg.smoothed()[0] - 3.5).abs() < 1e-12);
    }

    #[test]
    fn utility_examples() {
        let mut ones = RateAverages::with_defaults(4);
        (_, ones) = pf_update(&ones, &[1.0; 4]);
        assert_eq!(log_utility(&ones), 0.0);
        let mut twos = RateAverages::with_defaults(4);
        (_, twos) = pf_update(&twos, &[2.0; 4]);
        assert!((log_utility(&twos) - 4.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(RateAverages::new(2, 0.0, 1e-6).is_err());
        assert!(RateAverages::new(2, 1.0, 1e-6).is_err());
        assert!(RateAverages::new(2, 0.5, 0.0).is_err());
    }
}
