//! Photon-pair generation and lossy propagation to the detector inputs.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{check_fraction, Error, Result};

/// Largest tail mass tolerated beyond the cutoff.
pub const MAX_TAIL_MASS: f64 = 1e-12;
/// Smallest admissible cutoff.
pub const MIN_CUTOFF: usize = 8;

/// Per-pulse pair-number statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairLaw {
    /// Single Schmidt mode: p(n) = mu^n / (1 + mu)^(n + 1).
    Thermal,
    /// Highly multimode limit: p(n) = exp(-mu) mu^n / n!.
    Poisson,
}

/// Pair-number law truncated at `cutoff`.
///
/// Probabilities are the exact law values; the mass beyond the cutoff is not
/// redistributed and is reported by [`tail_mass`](Self::tail_mass).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairNumberDistribution {
    pub law: PairLaw,
    pub mean_pairs: f64,
    pub cutoff: usize,
}

impl PairNumberDistribution {
    pub fn new(law: PairLaw, mean_pairs: f64, cutoff: usize) -> Result<Self> {
        let d = Self {
            law,
            mean_pairs,
            cutoff,
        };
        d.validate()?;
        Ok(d)
    }

    /// Smallest cutoff (at least [`MIN_CUTOFF`]) whose tail is below [`MAX_TAIL_MASS`].
    pub fn with_auto_cutoff(law: PairLaw, mean_pairs: f64) -> Result<Self> {
        if !(mean_pairs.is_finite() && mean_pairs >= 0.0) {
            return Err(Error::OutOfRange {
                quantity: "mean_pairs",
                value: mean_pairs,
                min: 0.0,
                max: f64::INFINITY,
            });
        }
        let mut d = Self {
            law,
            mean_pairs,
            cutoff: MIN_CUTOFF,
        };
        while d.tail_mass() >= MAX_TAIL_MASS {
            d.cutoff += 1;
        }
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_pairs.is_finite() && self.mean_pairs >= 0.0) {
            return Err(Error::OutOfRange {
                quantity: "mean_pairs",
                value: self.mean_pairs,
                min: 0.0,
                max: f64::INFINITY,
            });
        }
        if self.cutoff < MIN_CUTOFF {
            return Err(Error::InvalidParameter {
                name: "cutoff",
                reason: alloc::format!("{} is below the minimum of {MIN_CUTOFF}", self.cutoff),
            });
        }
        let tail = self.tail_mass();
        if tail >= MAX_TAIL_MASS {
            return Err(Error::InvalidParameter {
                name: "cutoff",
                reason: alloc::format!(
                    "tail mass {tail:.3e} beyond n = {} exceeds {MAX_TAIL_MASS:e}",
                    self.cutoff
                ),
            });
        }
        Ok(())
    }

    /// p(n) of the untruncated law.
    pub fn pmf(&self, n: usize) -> f64 {
        let mu = self.mean_pairs;
        match self.law {
            PairLaw::Thermal => {
                if mu == 0.0 {
                    return if n == 0 { 1.0 } else { 0.0 };
                }
                let r = mu / (1.0 + mu);
                libm::pow(r, n as f64) / (1.0 + mu)
            }
            PairLaw::Poisson => {
                if mu == 0.0 {
                    return if n == 0 { 1.0 } else { 0.0 };
                }
                let log_p = -mu + n as f64 * libm::log(mu) - libm::lgamma(n as f64 + 1.0);
                libm::exp(log_p)
            }
        }
    }

    /// Probabilities p(0) ..= p(cutoff).
    pub fn probabilities(&self) -> Vec<f64> {
        (0..=self.cutoff).map(|n| self.pmf(n)).collect()
    }

    /// Mass of the law beyond the cutoff.
    pub fn tail_mass(&self) -> f64 {
        let mu = self.mean_pairs;
        if mu == 0.0 {
            return 0.0;
        }
        match self.law {
            PairLaw::Thermal => libm::pow(mu / (1.0 + mu), (self.cutoff + 1) as f64),
            PairLaw::Poisson => {
                // Direct summation of the tail avoids cancellation in 1 - sum.
                let mut n = self.cutoff + 1;
                let mut term = self.pmf(n);
                let mut tail = 0.0;
                while term > 0.0 && (term > tail * 1e-17 || (n as f64) < mu) {
                    tail += term;
                    n += 1;
                    term *= mu / n as f64;
                }
                tail
            }
        }
    }

    pub fn sampler(&self) -> PairSampler {
        let mut cdf = Vec::with_capacity(self.cutoff + 1);
        let mut acc = 0.0;
        for p in self.probabilities() {
            acc += p;
            cdf.push(acc);
        }
        PairSampler { cdf }
    }
}

/// Inverse-CDF sampler over a truncated pair-number law.
#[derive(Debug, Clone)]
pub struct PairSampler {
    cdf: Vec<f64>,
}

impl PairSampler {
    /// Draws n in [0, cutoff]; the (sub-1e-12) tail is folded onto the cutoff.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        if u < self.cdf[0] {
            return 0;
        }
        let last = self.cdf.len() - 1;
        let mut n = 1;
        while n < last && u >= self.cdf[n] {
            n += 1;
        }
        n as u32
    }

    pub fn vacuum_probability(&self) -> f64 {
        self.cdf[0]
    }

    /// Draws n conditioned on `n >= 1`.
    #[inline]
    pub fn sample_nonzero<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let p0 = self.cdf[0];
        let u = p0 + (1.0 - p0) * rng.random::<f64>();
        let last = self.cdf.len() - 1;
        let mut n = 1;
        while n < last && u >= self.cdf[n] {
            n += 1;
        }
        n as u32
    }
}

pub fn sample_pair_count<R: Rng + ?Sized>(dist: &PairNumberDistribution, rng: &mut R) -> u32 {
    dist.sampler().sample(rng)
}

/// Linear map from pump power to mean generated pairs per pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpPowerMap {
    /// Pairs per pulse per microwatt of pump power.
    pub slope_per_uw: f64,
    pub repetition_rate_hz: f64,
}

impl PumpPowerMap {
    /// Slope through the origin and one calibration point.
    pub fn through_point(power_uw: f64, mean_pairs: f64, repetition_rate_hz: f64) -> Self {
        Self {
            slope_per_uw: mean_pairs / power_uw,
            repetition_rate_hz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slope_per_uw.is_finite() && self.slope_per_uw > 0.0) {
            return Err(Error::InvalidParameter {
                name: "slope_per_uw",
                reason: alloc::format!("{} must be positive", self.slope_per_uw),
            });
        }
        if !(self.repetition_rate_hz.is_finite() && self.repetition_rate_hz > 0.0) {
            return Err(Error::InvalidParameter {
                name: "repetition_rate_hz",
                reason: alloc::format!("{} must be positive", self.repetition_rate_hz),
            });
        }
        Ok(())
    }

    pub fn mean_pairs_from_power(&self, power_uw: f64) -> Result<f64> {
        if !(power_uw.is_finite() && power_uw >= 0.0) {
            return Err(Error::OutOfRange {
                quantity: "pump power (uW)",
                value: power_uw,
                min: 0.0,
                max: f64::INFINITY,
            });
        }
        Ok(self.slope_per_uw * power_uw)
    }

    /// Repetition period in ns.
    pub fn period_ns(&self) -> f64 {
        1e9 / self.repetition_rate_hz
    }
}

/// One named transmission factor of an optical path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub transmission: f64,
}

impl Stage {
    pub fn new(name: &str, transmission: f64) -> Self {
        Self {
            name: name.into(),
            transmission,
        }
    }

    /// Stage for a propagation loss given in dB/cm over `length_cm`.
    pub fn from_db_loss(name: &str, db_per_cm: f64, length_cm: f64) -> Self {
        Self::new(name, libm::pow(10.0, -db_per_cm * length_cm / 10.0))
    }
}

/// Composable transmission chain.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OpticalChannel {
    pub stages: Vec<Stage>,
}

impl OpticalChannel {
    pub fn new(stages: Vec<Stage>) -> Self {
        Self { stages }
    }

    pub fn with_stage(mut self, name: &str, transmission: f64) -> Self {
        self.stages.push(Stage::new(name, transmission));
        self
    }

    pub fn transmission(&self) -> f64 {
        self.stages.iter().map(|s| s.transmission).product()
    }

    pub fn stage(&self, name: &str) -> Option<&Stage> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn stage_mut(&mut self, name: &str) -> Option<&mut Stage> {
        self.stages.iter_mut().find(|s| s.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.stages {
            check_fraction("stage transmission", s.transmission)?;
        }
        Ok(())
    }
}

/// Below this photon number, thinning draws one Bernoulli per photon.
const SMALL_THIN: u32 = 16;

/// Binomial loss: each of `n` photons survives independently with `transmission`.
pub fn thin<R: Rng + ?Sized>(n: u32, transmission: f64, rng: &mut R) -> u32 {
    if n == 0 || transmission <= 0.0 {
        return 0;
    }
    if transmission >= 1.0 {
        return n;
    }
    if n <= SMALL_THIN {
        return (0..n).map(|_| (rng.random::<f64>() < transmission) as u32).sum();
    }
    match Binomial::new(n as u64, transmission) {
        Ok(b) => b.sample(rng) as u32,
        Err(_) => 0,
    }
}

/// Photon numbers reaching the trigger and the two idler detector inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DetectorInputs {
    pub signal: u32,
    pub idler1: u32,
    pub idler2: u32,
}

/// Signal photons go to the trigger; idler survivors are split between
/// the two idler detectors with `splitter_ratio` to port 1.
pub fn propagate_pulse<R: Rng + ?Sized>(
    n_pairs: u32,
    signal_transmission: f64,
    idler_transmission: f64,
    splitter_ratio: f64,
    rng: &mut R,
) -> DetectorInputs {
    if n_pairs == 0 {
        return DetectorInputs::default();
    }
    let signal = thin(n_pairs, signal_transmission, rng);
    let idler = thin(n_pairs, idler_transmission, rng);
    let idler1 = thin(idler, splitter_ratio, rng);
    DetectorInputs {
        signal,
        idler1,
        idler2: idler - idler1,
    }
}
