//! Exact per-slot click and coincidence probabilities.
//!
//! Sums over the pair number `n` and over every idler split (`k` photons
//! towards port 1, `n - k` towards port 2); loss, detection and gate overlap
//! enter as per-photon efficiencies and uncorrelated counts as independent
//! per-slot probabilities. Dead time is not modeled here.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{check_fraction, Result};
use crate::metrics::Coincidences;
use crate::source::PairNumberDistribution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub distribution: PairNumberDistribution,
    /// Signal channel transmission times trigger efficiency.
    pub signal_efficiency: f64,
    /// Idler channel transmission times detector efficiency, per splitter port.
    pub idler_efficiency: [f64; 2],
    pub splitter_ratio: f64,
    /// Per-slot probability of an uncorrelated count: trigger, idler 1, idler 2.
    pub noise: [f64; 3],
    pub gate_overlap: f64,
}

impl OracleConfig {
    /// Lossless, noiseless setup with a balanced splitter.
    pub fn ideal(distribution: PairNumberDistribution) -> Self {
        Self {
            distribution,
            signal_efficiency: 1.0,
            idler_efficiency: [1.0, 1.0],
            splitter_ratio: 0.5,
            noise: [0.0; 3],
            gate_overlap: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        check_fraction("signal efficiency", self.signal_efficiency)?;
        check_fraction("idler efficiency (port 1)", self.idler_efficiency[0])?;
        check_fraction("idler efficiency (port 2)", self.idler_efficiency[1])?;
        check_fraction("splitter ratio", self.splitter_ratio)?;
        for p in self.noise {
            check_fraction("noise probability", p)?;
        }
        check_fraction("gate overlap", self.gate_overlap)
    }
}

/// Per-slot probabilities of one counting configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotProbabilities {
    pub trigger: f64,
    pub trigger_idler1: f64,
    pub trigger_idler2: f64,
    pub triple: f64,
    /// Unconditioned idler click probabilities.
    pub idler1: f64,
    pub idler2: f64,
    pub idler_both: f64,
    /// Pair-number mass not enumerated.
    pub truncation_mass: f64,
}

impl Coincidences for SlotProbabilities {
    fn n_slots(&self) -> f64 {
        1.0
    }
    fn trigger(&self) -> f64 {
        self.trigger
    }
    fn idler1(&self) -> f64 {
        self.trigger_idler1
    }
    fn idler2(&self) -> f64 {
        self.trigger_idler2
    }
    fn triple(&self) -> f64 {
        self.triple
    }
    fn counted(&self) -> bool {
        false
    }
}

fn powers(base: f64, n: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(n + 1);
    let mut x = 1.0;
    for _ in 0..=n {
        v.push(x);
        x *= base;
    }
    v
}

/// Aligned-slot probabilities (trigger and idlers from the same pulse).
pub fn expected_rates(cfg: &OracleConfig) -> Result<SlotProbabilities> {
    cfg.validate()?;
    let pmf = cfg.distribution.probabilities();
    Ok(enumerate(cfg, &pmf, cfg.distribution.tail_mass()))
}

/// [`expected_rates`] for an arbitrary pair-number law `pmf[n]`; the
/// configured distribution is ignored.
pub fn expected_rates_for_pmf(cfg: &OracleConfig, pmf: &[f64]) -> SlotProbabilities {
    let total: f64 = pmf.iter().sum();
    enumerate(cfg, pmf, (1.0 - total).max(0.0))
}

fn enumerate(cfg: &OracleConfig, pmf: &[f64], truncation_mass: f64) -> SlotProbabilities {
    let nmax = pmf.len().saturating_sub(1);
    let [dt, d1, d2] = cfg.noise;
    let c1 = cfg.idler_efficiency[0] * cfg.gate_overlap;
    let c2 = cfg.idler_efficiency[1] * cfg.gate_overlap;
    let miss_s = powers(1.0 - cfg.signal_efficiency, nmax);
    let miss_1 = powers(1.0 - c1, nmax);
    let miss_2 = powers(1.0 - c2, nmax);
    let r = cfg.splitter_ratio;

    let mut out = SlotProbabilities {
        trigger: 0.0,
        trigger_idler1: 0.0,
        trigger_idler2: 0.0,
        triple: 0.0,
        idler1: 0.0,
        idler2: 0.0,
        idler_both: 0.0,
        truncation_mass,
    };
    // Binomial split row, updated in place from n - 1 to n.
    let mut split = vec![0.0; nmax + 1];
    split[0] = 1.0;
    for n in 0..=nmax {
        if n > 0 {
            for k in (1..=n).rev() {
                split[k] = split[k] * (1.0 - r) + split[k - 1] * r;
            }
            split[0] *= 1.0 - r;
        }
        let pn = pmf[n];
        if pn == 0.0 {
            continue;
        }
        let trig = 1.0 - miss_s[n] * (1.0 - dt);
        let (mut a1, mut a2, mut a12) = (0.0, 0.0, 0.0);
        for (k, &b) in split.iter().enumerate().take(n + 1) {
            if b == 0.0 {
                continue;
            }
            let p1 = 1.0 - miss_1[k] * (1.0 - d1);
            let p2 = 1.0 - miss_2[n - k] * (1.0 - d2);
            a1 += b * p1;
            a2 += b * p2;
            a12 += b * p1 * p2;
        }
        out.trigger += pn * trig;
        out.trigger_idler1 += pn * trig * a1;
        out.trigger_idler2 += pn * trig * a2;
        out.triple += pn * trig * a12;
        out.idler1 += pn * a1;
        out.idler2 += pn * a2;
        out.idler_both += pn * a12;
    }
    out
}

/// Probabilities for a slot offset `m >= 1`: trigger and idlers come from
/// independent pulses, while both idlers still share one pulse.
pub fn expected_offset_rates(cfg: &OracleConfig) -> Result<SlotProbabilities> {
    let a = expected_rates(cfg)?;
    Ok(SlotProbabilities {
        trigger_idler1: a.trigger * a.idler1,
        trigger_idler2: a.trigger * a.idler2,
        triple: a.trigger * a.idler_both,
        ..a
    })
}
