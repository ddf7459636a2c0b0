//! Fits the free parameters of a [`SourceModel`] to measured operating
//! points using exact oracle probabilities.
//!
//! Four unknowns, four targets:
//! - residual signal-arm loss from the trigger rate at one power,
//! - pump-proportional trigger background from the heralding efficiency,
//! - constant and pump-proportional idler background from `CAR_dtau` at
//!   two powers.
//!
//! Each target is monotone in its own parameter; the four one-dimensional
//! solves are repeated until the parameters stop moving.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{car_dtau, heralding, Coincidences};
use crate::model::{SourceModel, RESIDUAL_STAGE};
use crate::oracle::{expected_rates, SlotProbabilities};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTarget {
    pub power_uw: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    /// Trigger count rate (s^-1).
    pub trigger_rate: PowerTarget,
    pub heralding_efficiency: PowerTarget,
    /// `CAR_dtau` at a low and a high power.
    pub car_dtau: [PowerTarget; 2],
    /// Gate delay used for the accidental reference.
    pub far_delay_ns: f64,
}

impl CalibrationTargets {
    pub fn lab() -> Self {
        Self {
            trigger_rate: PowerTarget {
                power_uw: 0.5,
                value: 5.3e3,
            },
            heralding_efficiency: PowerTarget {
                power_uw: 5.0,
                value: 0.60,
            },
            car_dtau: [
                PowerTarget {
                    power_uw: 0.5,
                    value: 1383.0,
                },
                PowerTarget {
                    power_uw: 5.0,
                    value: 1165.0,
                },
            ],
            far_delay_ns: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub residual_transmission: f64,
    pub trigger_cps_per_uw: f64,
    pub idler_cps: f64,
    pub idler_cps_per_uw: f64,
    pub iterations: usize,
}

fn oracle_at(model: &SourceModel, power_uw: f64, delay_ns: f64) -> Result<SlotProbabilities> {
    expected_rates(&model.point(power_uw, delay_ns)?.oracle_config()?)
}

pub fn trigger_rate(model: &SourceModel, power_uw: f64) -> Result<f64> {
    Ok(oracle_at(model, power_uw, 0.0)?.trigger * model.pump.repetition_rate_hz)
}

pub fn heralding_efficiency(model: &SourceModel, power_uw: f64) -> Result<f64> {
    let p = oracle_at(model, power_uw, 0.0)?;
    heralding(&p, model.detectors.idler1.efficiency)?
        .value()
        .ok_or(Error::Calibration("heralding efficiency undefined"))
}

pub fn car_dtau_at(model: &SourceModel, power_uw: f64, far_delay_ns: f64) -> Result<f64> {
    let a = oracle_at(model, power_uw, 0.0)?;
    let s = oracle_at(model, power_uw, far_delay_ns)?;
    if s.double() <= 0.0 {
        return Ok(f64::INFINITY);
    }
    car_dtau(&a, &s).value().ok_or(Error::Calibration("CAR_dtau undefined"))
}

/// Root of a monotone `f(x) = target` on `[lo, hi]` by bisection.
fn solve_monotone<F>(mut f: F, mut lo: f64, mut hi: f64, target: f64, what: &'static str) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let flo = f(lo)? - target;
    let fhi = f(hi)? - target;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if (flo < 0.0) == (fhi < 0.0) {
        return Err(Error::Calibration(what));
    }
    let rising = flo < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let below = f(mid)? < target;
        if below == rising {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.abs().max(1e-300) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Adjusts the residual stage and background model of `model` in place.
pub fn calibrate(model: &mut SourceModel, targets: &CalibrationTargets) -> Result<CalibrationReport> {
    model.validate()?;
    if model.signal_channel.stage(RESIDUAL_STAGE).is_none() {
        return Err(Error::Calibration("signal channel has no residual stage"));
    }
    let set_residual = |m: &mut SourceModel, r: f64| {
        if let Some(s) = m.signal_channel.stage_mut(RESIDUAL_STAGE) {
            s.transmission = r;
        }
    };
    let mut iterations = 0;
    loop {
        iterations += 1;
        let before = (
            model.signal_channel.stage(RESIDUAL_STAGE).map_or(1.0, |s| s.transmission),
            model.background,
        );

        let t = targets.trigger_rate;
        let r = solve_monotone(
            |r| {
                let mut m = model.clone();
                set_residual(&mut m, r);
                trigger_rate(&m, t.power_uw)
            },
            1e-6,
            1.0,
            t.value,
            "trigger rate target unreachable",
        )?;
        set_residual(model, r);

        let h = targets.heralding_efficiency;
        let bt = solve_monotone(
            |b| {
                let mut m = model.clone();
                m.background.trigger_cps_per_uw = b;
                heralding_efficiency(&m, h.power_uw)
            },
            0.0,
            1e9,
            h.value,
            "heralding target unreachable with non-negative trigger background",
        )?;
        model.background.trigger_cps_per_uw = bt;

        let mut rates = [0.0; 2];
        for (k, c) in targets.car_dtau.iter().enumerate() {
            rates[k] = solve_monotone(
                |rate| {
                    let mut m = model.clone();
                    m.background.idler_cps = rate;
                    m.background.idler_cps_per_uw = 0.0;
                    car_dtau_at(&m, c.power_uw, targets.far_delay_ns)
                },
                1e-3,
                1e10,
                c.value,
                "CAR_dtau target unreachable",
            )?;
        }
        let [p1, p2] = targets.car_dtau.map(|c| c.power_uw);
        let slope = if p1 == p2 { 0.0 } else { (rates[1] - rates[0]) / (p2 - p1) };
        let offset = rates[0] - slope * p1;
        if slope < 0.0 || offset < 0.0 {
            return Err(Error::Calibration("idler background targets need a negative rate"));
        }
        model.background.idler_cps = offset;
        model.background.idler_cps_per_uw = slope;

        let rel = |a: f64, b: f64| if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) };
        let moved = rel(before.0, r)
            .max(rel(before.1.trigger_cps_per_uw, bt))
            .max(rel(before.1.idler_cps, offset))
            .max(rel(before.1.idler_cps_per_uw, slope));
        if moved < 1e-10 {
            break;
        }
        if iterations >= 100 {
            return Err(Error::Calibration("calibration did not converge"));
        }
    }
    Ok(CalibrationReport {
        residual_transmission: model.signal_channel.stage(RESIDUAL_STAGE).map_or(1.0, |s| s.transmission),
        trigger_cps_per_uw: model.background.trigger_cps_per_uw,
        idler_cps: model.background.idler_cps,
        idler_cps_per_uw: model.background.idler_cps_per_uw,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lab_targets_are_met() {
        let mut m = SourceModel::lab_baseline();
        let t = CalibrationTargets::lab();
        let rep = calibrate(&mut m, &t).unwrap();
        assert!(rep.residual_transmission > 0.0 && rep.residual_transmission <= 1.0);
        assert_relative_eq!(trigger_rate(&m, 0.5).unwrap(), 5.3e3, max_relative = 1e-8);
        assert_relative_eq!(heralding_efficiency(&m, 5.0).unwrap(), 0.60, max_relative = 1e-8);
        assert_relative_eq!(car_dtau_at(&m, 0.5, 5.0).unwrap(), 1383.0, max_relative = 1e-6);
        assert_relative_eq!(car_dtau_at(&m, 5.0, 5.0).unwrap(), 1165.0, max_relative = 1e-6);
    }

    #[test]
    fn unreachable_heralding_target() {
        let mut m = SourceModel::lab_baseline();
        let mut t = CalibrationTargets::lab();
        t.heralding_efficiency.value = 0.9;
        assert!(matches!(calibrate(&mut m, &t), Err(Error::Calibration(_))));
    }
}
