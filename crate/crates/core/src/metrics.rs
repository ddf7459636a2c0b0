//! Figures of merit of the conditioned detection scheme.
//!
//! All functions work on per-slot frequencies, so they accept measured
//! [`CountTotals`] and exact oracle probabilities alike. Uncertainties are
//! first-order Poisson propagation of the underlying counts and are zero
//! for exact inputs.

use serde::{Deserialize, Serialize};

use crate::counter::{CountTotals, ZERO_COUNT_UPPER_95};
use crate::error::{Error, Result};

/// Trigger, two-fold and three-fold frequencies of one setting.
pub trait Coincidences {
    /// Normalization (number of slots, or 1 for probabilities).
    fn n_slots(&self) -> f64;
    fn trigger(&self) -> f64;
    fn idler1(&self) -> f64;
    fn idler2(&self) -> f64;
    fn triple(&self) -> f64;
    /// True when the values are Poisson counts rather than exact expectations.
    fn counted(&self) -> bool;

    fn double(&self) -> f64 {
        self.idler1() + self.idler2()
    }
}

impl Coincidences for CountTotals {
    fn n_slots(&self) -> f64 {
        self.n_slots as f64
    }
    fn trigger(&self) -> f64 {
        self.trigger as f64
    }
    fn idler1(&self) -> f64 {
        self.idler1 as f64
    }
    fn idler2(&self) -> f64 {
        self.idler2 as f64
    }
    fn triple(&self) -> f64 {
        self.triple as f64
    }
    fn counted(&self) -> bool {
        true
    }
}

/// Metric value, or a typed marker when a denominator vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Metric {
    Value { value: f64, std_err: f64 },
    /// Zero denominator counts: one-sided bound at the given confidence.
    LowerBound { value: f64, confidence: f64 },
    Undefined,
}

impl Metric {
    pub fn exact(value: f64) -> Self {
        Metric::Value { value, std_err: 0.0 }
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            Metric::Value { value, .. } => Some(value),
            _ => None,
        }
    }

    pub fn std_err(&self) -> Option<f64> {
        match *self {
            Metric::Value { std_err, .. } => Some(std_err),
            _ => None,
        }
    }

    /// The value, or the bound for [`Metric::LowerBound`].
    pub fn estimate(&self) -> Option<f64> {
        match *self {
            Metric::Value { value, .. } | Metric::LowerBound { value, .. } => Some(value),
            Metric::Undefined => None,
        }
    }

    fn scaled(self, k: f64) -> Self {
        match self {
            Metric::Value { value, std_err } => Metric::Value {
                value: value * k,
                std_err: std_err * k.abs(),
            },
            Metric::LowerBound { value, confidence } => Metric::LowerBound {
                value: value * k,
                confidence,
            },
            Metric::Undefined => Metric::Undefined,
        }
    }
}

const BOUND_CONFIDENCE: f64 = 0.95;

/// Relative variance contribution of a count (0 for exact data). Zero counts
/// contribute as one count.
fn rel_var<C: Coincidences + ?Sized>(c: &C, count: f64) -> f64 {
    if c.counted() {
        1.0 / count.max(1.0)
    } else {
        0.0
    }
}

fn with_rel(value: f64, rel_var: f64) -> Metric {
    Metric::Value {
        value,
        std_err: value.abs() * libm::sqrt(rel_var),
    }
}

/// Anti-correlation parameter `R_Si R_c / (R_Id,1 R_Id,2)`.
pub fn alpha<C: Coincidences + ?Sized>(c: &C) -> Metric {
    let (s, i1, i2, t) = (c.trigger(), c.idler1(), c.idler2(), c.triple());
    if i1 <= 0.0 || i2 <= 0.0 {
        return Metric::Undefined;
    }
    let value = (s * t) / (i1 * i2);
    with_rel(value, rel_var(c, s) + rel_var(c, t) + rel_var(c, i1) + rel_var(c, i2))
}

/// Conditioned autocorrelation `4 R_Si R_c / (R_Id,1 + R_Id,2)^2`.
pub fn g2_zero<C: Coincidences + ?Sized>(c: &C) -> Metric {
    let (s, d, t) = (c.trigger(), c.double(), c.triple());
    if d <= 0.0 {
        return Metric::Undefined;
    }
    let value = (4.0 * (s * t)) / (d * d);
    with_rel(value, rel_var(c, s) + rel_var(c, t) + 4.0 * rel_var(c, d))
}

/// Klyshko efficiency `(R_Id,1 + R_Id,2) / R_Si`.
pub fn klyshko<C: Coincidences + ?Sized>(c: &C) -> Metric {
    let (s, d) = (c.trigger(), c.double());
    if s <= 0.0 {
        return Metric::Undefined;
    }
    with_rel(d / s, rel_var(c, s) + rel_var(c, d))
}

/// Heralding efficiency: Klyshko efficiency divided by the idler detector efficiency.
pub fn heralding<C: Coincidences + ?Sized>(c: &C, idler_detector_efficiency: f64) -> Result<Metric> {
    if !(idler_detector_efficiency > 0.0 && idler_detector_efficiency <= 1.0) {
        return Err(Error::OutOfRange {
            quantity: "idler detector efficiency",
            value: idler_detector_efficiency,
            min: f64::MIN_POSITIVE,
            max: 1.0,
        });
    }
    Ok(klyshko(c).scaled(1.0 / idler_detector_efficiency))
}

/// Ratio of two per-slot frequencies; a zero counted denominator yields a lower bound.
fn rate_ratio<A, B>(num: &A, num_count: f64, den: &B, den_count: f64) -> Metric
where
    A: Coincidences + ?Sized,
    B: Coincidences + ?Sized,
{
    let num_rate = num_count / num.n_slots();
    if den_count <= 0.0 {
        if den.counted() && num_count > 0.0 {
            return Metric::LowerBound {
                value: num_rate / (ZERO_COUNT_UPPER_95 / den.n_slots()),
                confidence: BOUND_CONFIDENCE,
            };
        }
        return Metric::Undefined;
    }
    let den_rate = den_count / den.n_slots();
    with_rel(num_rate / den_rate, rel_var(num, num_count) + rel_var(den, den_count))
}

/// Klyshko efficiency at the aligned delay over that at a delay between pulses.
pub fn car_dtau<A, B>(aligned: &A, shifted: &B) -> Metric
where
    A: Coincidences + ?Sized,
    B: Coincidences + ?Sized,
{
    let (sa, da) = (aligned.trigger(), aligned.double());
    let (ss, ds) = (shifted.trigger(), shifted.double());
    if sa <= 0.0 || ss <= 0.0 || da <= 0.0 {
        return Metric::Undefined;
    }
    let k_aligned = da / sa;
    if ds <= 0.0 {
        if shifted.counted() {
            return Metric::LowerBound {
                value: k_aligned / (ZERO_COUNT_UPPER_95 / ss),
                confidence: BOUND_CONFIDENCE,
            };
        }
        return Metric::Undefined;
    }
    let value = k_aligned / (ds / ss);
    with_rel(
        value,
        rel_var(aligned, sa) + rel_var(aligned, da) + rel_var(shifted, ss) + rel_var(shifted, ds),
    )
}

/// Two-fold coincidence rate at the aligned slot over that at slot offset `m >= 1`.
pub fn car_rep<A, B>(aligned: &A, offset: &B) -> Metric
where
    A: Coincidences + ?Sized,
    B: Coincidences + ?Sized,
{
    rate_ratio(aligned, aligned.double(), offset, offset.double())
}

/// Two-fold over three-fold coincidences at the aligned slot.
pub fn car_hop<C: Coincidences + ?Sized>(aligned: &C) -> Metric {
    rate_ratio(aligned, aligned.double(), aligned, aligned.triple())
}

/// Output noise factor, the inverse of `CAR_dtau`.
pub fn output_noise_factor(car_dtau: &Metric) -> Metric {
    match *car_dtau {
        Metric::Value { value, std_err } if value > 0.0 => Metric::Value {
            value: 1.0 / value,
            std_err: std_err / (value * value),
        },
        _ => Metric::Undefined,
    }
}

/// Mean generated pairs per pulse: trigger rate divided by the signal-arm
/// transmission, the trigger efficiency and the repetition rate.
pub fn brightness<C: Coincidences + ?Sized>(
    c: &C,
    signal_transmission: f64,
    trigger_efficiency: f64,
) -> Result<Metric> {
    let t = signal_transmission * trigger_efficiency;
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::OutOfRange {
            quantity: "signal-arm transmission",
            value: t,
            min: f64::MIN_POSITIVE,
            max: 1.0,
        });
    }
    let s = c.trigger();
    let per_slot = s / c.n_slots();
    Ok(with_rel(per_slot / t, if s > 0.0 { rel_var(c, s) } else { 0.0 }))
}

/// Inputs for [`MetricsReport::compute`] beyond the coincidence data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub idler_detector_efficiency: f64,
    pub signal_transmission: f64,
    pub trigger_efficiency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub alpha: Metric,
    pub g2_zero: Metric,
    pub klyshko: Metric,
    pub heralding: Metric,
    pub car_dtau: Metric,
    pub car_rep: Metric,
    pub car_hop: Metric,
    pub mean_pairs: Metric,
}

impl MetricsReport {
    /// `offset` holds the same run counted at slot offset `m >= 1`;
    /// `shifted` a run at an intra-period delay beyond the gate, if measured.
    pub fn compute<A, B, S>(aligned: &A, offset: &B, shifted: Option<&S>, params: &ReportParams) -> Result<Self>
    where
        A: Coincidences + ?Sized,
        B: Coincidences + ?Sized,
        S: Coincidences + ?Sized,
    {
        Ok(Self {
            alpha: alpha(aligned),
            g2_zero: g2_zero(aligned),
            klyshko: klyshko(aligned),
            heralding: heralding(aligned, params.idler_detector_efficiency)?,
            car_dtau: shifted.map_or(Metric::Undefined, |s| car_dtau(aligned, s)),
            car_rep: car_rep(aligned, offset),
            car_hop: car_hop(aligned),
            mean_pairs: brightness(aligned, params.signal_transmission, params.trigger_efficiency)?,
        })
    }

    /// Metrics in their serialization order.
    pub fn entries(&self) -> [(&'static str, Metric); 8] {
        [
            ("alpha", self.alpha),
            ("g2_zero", self.g2_zero),
            ("klyshko", self.klyshko),
            ("heralding", self.heralding),
            ("car_dtau", self.car_dtau),
            ("car_rep", self.car_rep),
            ("car_hop", self.car_hop),
            ("mean_pairs", self.mean_pairs),
        ]
    }
}
