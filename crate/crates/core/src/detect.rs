//! Click-detector model: efficiency, dark and background counts, gating,
//! and non-paralyzable dead time.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_fraction, Error, Result};
use crate::source::DetectorInputs;

const FOUR_LN2: f64 = 4.0 * core::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorMode {
    FreeRunning,
    Gated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiency: f64,
    pub dark_rate_cps: f64,
    /// Non-paralyzable dead time; zero disables censoring.
    pub dead_time_ns: f64,
    /// FWHM of the Gaussian effective gate (gated mode only).
    pub gate_fwhm_ns: f64,
    /// Electronic acquisition gate as configured on the instrument.
    pub nominal_gate_ns: f64,
    pub mode: DetectorMode,
}

impl DetectorModel {
    pub fn free_running(efficiency: f64, dark_rate_cps: f64, dead_time_ns: f64) -> Self {
        Self {
            efficiency,
            dark_rate_cps,
            dead_time_ns,
            gate_fwhm_ns: 0.0,
            nominal_gate_ns: 0.0,
            mode: DetectorMode::FreeRunning,
        }
    }

    pub fn gated(efficiency: f64, gate_fwhm_ns: f64, nominal_gate_ns: f64) -> Self {
        Self {
            efficiency,
            dark_rate_cps: 0.0,
            dead_time_ns: 0.0,
            gate_fwhm_ns,
            nominal_gate_ns,
            mode: DetectorMode::Gated,
        }
    }

    /// Perfect free-running detector.
    pub fn ideal() -> Self {
        Self::free_running(1.0, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        check_fraction("detector efficiency", self.efficiency)?;
        if !(self.dark_rate_cps.is_finite() && self.dark_rate_cps >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "dark_rate_cps",
                reason: alloc::format!("{} must be non-negative", self.dark_rate_cps),
            });
        }
        if !(self.dead_time_ns.is_finite() && self.dead_time_ns >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "dead_time_ns",
                reason: alloc::format!("{} must be non-negative", self.dead_time_ns),
            });
        }
        if self.mode == DetectorMode::Gated && !(self.gate_fwhm_ns.is_finite() && self.gate_fwhm_ns > 0.0) {
            return Err(Error::InvalidParameter {
                name: "gate_fwhm_ns",
                reason: alloc::format!("{} must be positive for a gated detector", self.gate_fwhm_ns),
            });
        }
        Ok(())
    }

    /// Time window (ns) per pulse slot during which uncorrelated counts register.
    ///
    /// Free-running: the whole slot. Gated: the area of the unit-peak Gaussian gate.
    pub fn effective_window_ns(&self, period_ns: f64) -> f64 {
        match self.mode {
            DetectorMode::FreeRunning => period_ns,
            DetectorMode::Gated => {
                self.gate_fwhm_ns * libm::sqrt(core::f64::consts::PI / FOUR_LN2)
            }
        }
    }

    /// Per-slot probability of at least one uncorrelated count from darks
    /// plus `background_cps`, treated as a Poisson process over the window.
    pub fn noise_probability(&self, background_cps: f64, period_ns: f64) -> f64 {
        let rate = self.dark_rate_cps + background_cps.max(0.0);
        -libm::expm1(-rate * self.effective_window_ns(period_ns) * 1e-9)
    }
}

/// Binary click probability for `n_photons` at the detector input.
///
/// `1 - (1 - eta * overlap)^n * (1 - p_noise)`.
pub fn click_probability(n_photons: u32, det: &DetectorModel, gate_overlap: f64, p_noise: f64) -> f64 {
    let miss = 1.0 - det.efficiency * gate_overlap;
    let p = 1.0 - libm::pow(miss, n_photons as f64) * (1.0 - p_noise);
    p.clamp(0.0, 1.0)
}

/// Gaussian effective-gate response with FWHM equal to the gate width.
pub fn gate_overlap(delay_ns: f64, det: &DetectorModel) -> Result<f64> {
    match det.mode {
        DetectorMode::FreeRunning => Err(Error::FreeRunningGate),
        DetectorMode::Gated => {
            let x = delay_ns / det.gate_fwhm_ns;
            Ok(libm::exp(-FOUR_LN2 * x * x))
        }
    }
}

/// Trigger-to-idler delay setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelaySetting {
    /// Sub-slot delay of the idler gate relative to the correlated photon.
    pub delay_ns: f64,
    pub repetition_period_ns: f64,
}

impl DelaySetting {
    pub fn aligned(repetition_period_ns: f64) -> Self {
        Self {
            delay_ns: 0.0,
            repetition_period_ns,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.repetition_period_ns.is_finite() && self.repetition_period_ns > 0.0) {
            return Err(Error::InvalidParameter {
                name: "repetition_period_ns",
                reason: alloc::format!("{} must be positive", self.repetition_period_ns),
            });
        }
        if !self.delay_ns.is_finite() {
            return Err(Error::InvalidParameter {
                name: "delay_ns",
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }
}

/// Non-paralyzable dead-time censor over a time-ordered click stream.
///
/// The state carries across calls so consecutive batches can be stitched.
#[derive(Debug, Clone, PartialEq)]
pub struct DeadTimeFilter {
    dead_time_ns: f64,
    last_accepted: Option<f64>,
    last_seen: Option<f64>,
}

impl DeadTimeFilter {
    pub fn new(dead_time_ns: f64) -> Self {
        Self {
            dead_time_ns,
            last_accepted: None,
            last_seen: None,
        }
    }

    /// Offers a click at `t_ns`; returns whether it survives.
    pub fn offer(&mut self, t_ns: f64) -> core::result::Result<bool, f64> {
        if let Some(prev) = self.last_seen {
            if t_ns < prev {
                return Err(prev);
            }
        }
        self.last_seen = Some(t_ns);
        let accept = match self.last_accepted {
            Some(t0) => t_ns - t0 >= self.dead_time_ns,
            None => true,
        };
        if accept {
            self.last_accepted = Some(t_ns);
        }
        Ok(accept)
    }
}

/// Removes every click falling within the dead time of the last accepted one.
pub fn apply_dead_time(click_times_ns: &[f64], dead_time_ns: f64) -> Result<Vec<f64>> {
    let mut filter = DeadTimeFilter::new(dead_time_ns);
    let mut out = Vec::with_capacity(click_times_ns.len());
    for (index, &t) in click_times_ns.iter().enumerate() {
        match filter.offer(t) {
            Ok(true) => out.push(t),
            Ok(false) => {}
            Err(_) => return Err(Error::UnorderedClicks { index }),
        }
    }
    Ok(out)
}

/// Si trigger plus two gated idler detectors behind the splitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSet {
    pub trigger: DetectorModel,
    pub idler1: DetectorModel,
    pub idler2: DetectorModel,
}

impl DetectorSet {
    pub fn ideal() -> Self {
        Self {
            trigger: DetectorModel::ideal(),
            idler1: DetectorModel::ideal(),
            idler2: DetectorModel::ideal(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.trigger.validate()?;
        self.idler1.validate()?;
        self.idler2.validate()
    }
}

/// Uncorrelated background count rates at the detectors (s^-1), on top of darks.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BackgroundRates {
    pub trigger_cps: f64,
    /// Applied to each idler detector.
    pub idler_cps: f64,
}

/// Clicks registered in one pulse slot.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SlotClicks {
    /// Trigger click time relative to the slot start (ns).
    pub trigger_ns: Option<f64>,
    pub idler1: bool,
    pub idler2: bool,
}

impl SlotClicks {
    pub fn any(&self) -> bool {
        self.trigger_ns.is_some() || self.idler1 || self.idler2
    }
}

/// Precomputed per-slot detection probabilities for a fixed operating point.
#[derive(Debug, Clone)]
pub struct DetectionStage {
    trigger_efficiency: f64,
    idler1_efficiency: f64,
    idler2_efficiency: f64,
    noise: [f64; 3],
    period_ns: f64,
}

impl DetectionStage {
    pub fn new(detectors: &DetectorSet, delay: &DelaySetting, background: &BackgroundRates) -> Result<Self> {
        detectors.validate()?;
        delay.validate()?;
        let overlap = |d: &DetectorModel| match d.mode {
            DetectorMode::Gated => gate_overlap(delay.delay_ns, d),
            DetectorMode::FreeRunning => Ok(1.0),
        };
        let period = delay.repetition_period_ns;
        Ok(Self {
            trigger_efficiency: detectors.trigger.efficiency,
            idler1_efficiency: detectors.idler1.efficiency * overlap(&detectors.idler1)?,
            idler2_efficiency: detectors.idler2.efficiency * overlap(&detectors.idler2)?,
            noise: [
                detectors.trigger.noise_probability(background.trigger_cps, period),
                detectors.idler1.noise_probability(background.idler_cps, period),
                detectors.idler2.noise_probability(background.idler_cps, period),
            ],
            period_ns: period,
        })
    }

    /// Effective per-photon detection probability (efficiency times gate overlap).
    pub fn photon_efficiencies(&self) -> [f64; 3] {
        [self.trigger_efficiency, self.idler1_efficiency, self.idler2_efficiency]
    }

    pub fn noise_probabilities(&self) -> [f64; 3] {
        self.noise
    }

    #[inline]
    fn photon_click<R: Rng + ?Sized>(n: u32, eff: f64, rng: &mut R) -> bool {
        if n == 0 || eff <= 0.0 {
            return false;
        }
        let p = 1.0 - libm::pow(1.0 - eff, n as f64);
        rng.random::<f64>() < p
    }

    #[inline]
    fn noise_click<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
        p > 0.0 && rng.random::<f64>() < p
    }

    /// Converts detector-input photon numbers into a click triple.
    ///
    /// Photon-induced trigger clicks are stamped at the slot start; a
    /// noise-only trigger click is placed uniformly within the slot.
    pub fn detect<R: Rng + ?Sized>(&self, photons: &DetectorInputs, rng: &mut R) -> SlotClicks {
        let noise = [
            Self::noise_click(self.noise[0], rng),
            Self::noise_click(self.noise[1], rng),
            Self::noise_click(self.noise[2], rng),
        ];
        self.detect_with_noise(photons, noise, rng)
    }

    /// [`detect`](Self::detect) with the uncorrelated counts already drawn.
    pub fn detect_with_noise<R: Rng + ?Sized>(&self, photons: &DetectorInputs, noise: [bool; 3], rng: &mut R) -> SlotClicks {
        let trig_photon = Self::photon_click(photons.signal, self.trigger_efficiency, rng);
        let trigger_ns = if trig_photon {
            Some(0.0)
        } else if noise[0] {
            Some(rng.random::<f64>() * self.period_ns)
        } else {
            None
        };
        SlotClicks {
            trigger_ns,
            idler1: Self::photon_click(photons.idler1, self.idler1_efficiency, rng) || noise[1],
            idler2: Self::photon_click(photons.idler2, self.idler2_efficiency, rng) || noise[2],
        }
    }
}

/// Single-slot detection for the trigger/idler triple.
pub fn detect_pulse<R: Rng + ?Sized>(
    photons: &DetectorInputs,
    detectors: &DetectorSet,
    delay: &DelaySetting,
    background: &BackgroundRates,
    rng: &mut R,
) -> Result<SlotClicks> {
    Ok(DetectionStage::new(detectors, delay, background)?.detect(photons, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_relative_eq;

    fn ingaas() -> DetectorModel {
        DetectorModel::gated(0.23, 1.16, 2.5)
    }

    #[test]
    fn click_probability_cases() {
        let mut d = DetectorModel::free_running(0.23, 0.0, 0.0);
        assert_eq!(click_probability(0, &d, 1.0, 0.0), 0.0);
        assert_relative_eq!(click_probability(1, &d, 1.0, 0.0), 0.23, epsilon = 1e-15);
        d.efficiency = 0.5;
        assert_relative_eq!(click_probability(2, &d, 1.0, 0.0), 0.75, epsilon = 1e-15);
        assert_relative_eq!(click_probability(0, &d, 1.0, 0.01), 0.01, epsilon = 1e-15);
    }

    #[test]
    fn gate_overlap_shape() {
        let d = ingaas();
        assert_eq!(gate_overlap(0.0, &d).unwrap(), 1.0);
        assert_relative_eq!(gate_overlap(0.58, &d).unwrap(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(gate_overlap(-0.58, &d).unwrap(), 0.5, epsilon = 1e-12);
        assert!(gate_overlap(50.0, &d).unwrap() < 1e-6);
        assert_eq!(
            gate_overlap(0.0, &DetectorModel::ideal()),
            Err(Error::FreeRunningGate)
        );
    }

    #[test]
    fn dead_time_identity_and_alternation() {
        let t = [0.0, 100.0, 200.0, 300.0, 400.0, 500.0];
        assert_eq!(apply_dead_time(&t, 0.0).unwrap(), t.to_vec());
        assert_eq!(apply_dead_time(&t, 150.0).unwrap(), alloc::vec![0.0, 200.0, 400.0]);
        assert_eq!(
            apply_dead_time(&[0.0, 5.0, 3.0], 1.0),
            Err(Error::UnorderedClicks { index: 2 })
        );
    }

    #[test]
    fn dead_time_renewal_formula() {
        // Poisson input at 1e6 s^-1 through a 50 ns non-paralyzable dead time.
        let mut rng = substream(11, &[]);
        let rate_per_ns = 1e6 * 1e-9;
        let mut t = 0.0;
        let mut times = Vec::new();
        while t < 2e8 {
            let u: f64 = rng.random();
            t += -libm::log(1.0 - u) / rate_per_ns;
            times.push(t);
        }
        let kept = apply_dead_time(&times, 50.0).unwrap();
        let out_rate = kept.len() as f64 / (t * 1e-9);
        let expected = 1e6 / (1.0 + 1e6 * 50e-9);
        assert_relative_eq!(expected, 9.5238e5, epsilon = 1e1);
        assert!((out_rate / expected - 1.0).abs() < 0.02);
    }

    #[test]
    fn perfect_detectors_report_photon_presence() {
        let stage = DetectionStage::new(
            &DetectorSet::ideal(),
            &DelaySetting::aligned(100.0),
            &BackgroundRates::default(),
        )
        .unwrap();
        let mut rng = substream(12, &[]);
        for (s, a, b) in [(1, 1, 0), (0, 0, 0), (2, 0, 3), (0, 1, 1)] {
            let c = stage.detect(
                &DetectorInputs {
                    signal: s,
                    idler1: a,
                    idler2: b,
                },
                &mut rng,
            );
            assert_eq!(c.trigger_ns.is_some(), s > 0);
            assert_eq!(c.idler1, a > 0);
            assert_eq!(c.idler2, b > 0);
        }
    }

    #[test]
    fn si_dark_count_fraction() {
        let mut dets = DetectorSet::ideal();
        dets.trigger = DetectorModel::free_running(0.55, 238.0, 0.0);
        let stage = DetectionStage::new(&dets, &DelaySetting::aligned(100.0), &BackgroundRates::default()).unwrap();
        let mut rng = substream(13, &[]);
        let n = 20_000_000u64;
        let vacuum = DetectorInputs::default();
        let clicks = (0..n).filter(|_| stage.detect(&vacuum, &mut rng).trigger_ns.is_some()).count();
        let p = 238.0 / 1e7;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!(((clicks as f64 / n as f64) - p).abs() < 3.0 * sigma);
    }
}
