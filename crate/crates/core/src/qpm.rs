//! Type-I quasi-phase-matching: dispersion, mismatch, signal/idler solver,
//! phase-matching spectrum and tuning curves.
//!
//! Wavelengths are vacuum wavelengths in nm, poling periods in um,
//! temperatures in degC, mismatch in rad/um.

use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::profile;

/// Temperature-dependent extraordinary-index Sellmeier set,
///
/// `n^2 = a1 + b1 f + (a2 + b2 f) / (l^2 - (a3 + b3 f)^2) + (a4 + b4 f) / (l^2 - a5^2) - a6 l^2`
/// with `f = (T - t_ref)(T + t_shift)` and `l` in um.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sellmeier {
    pub a: [f64; 6],
    pub b: [f64; 4],
    pub t_ref: f64,
    pub t_shift: f64,
}

impl Sellmeier {
    /// Congruent lithium niobate, extraordinary index (D. H. Jundt, Opt. Lett. 22, 1553 (1997)).
    pub fn congruent_lithium_niobate() -> Self {
        Self {
            a: [5.35583, 0.100473, 0.20692, 100.0, 11.34927, 1.5334e-2],
            b: [4.629e-7, 3.862e-8, -0.89e-8, 2.657e-5],
            t_ref: 24.5,
            t_shift: 570.82,
        }
    }

    pub fn index(&self, wavelength_nm: f64, temperature_c: f64) -> f64 {
        let [a1, a2, a3, a4, a5, a6] = self.a;
        let [b1, b2, b3, b4] = self.b;
        let l = wavelength_nm * 1e-3;
        let l2 = l * l;
        let f = (temperature_c - self.t_ref) * (temperature_c + self.t_shift);
        let pole = a3 + b3 * f;
        let n2 = a1 + b1 * f + (a2 + b2 * f) / (l2 - pole * pole) + (a4 + b4 * f) / (l2 - a5 * a5) - a6 * l2;
        libm::sqrt(n2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Pump,
    Signal,
    Idler,
}

/// Additive effective-index corrections of the guided modes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BandOffsets {
    pub pump: f64,
    pub signal: f64,
    pub idler: f64,
}

impl BandOffsets {
    pub fn get(&self, band: Band) -> f64 {
        match band {
            Band::Pump => self.pump,
            Band::Signal => self.signal,
            Band::Idler => self.idler,
        }
    }

    pub fn get_mut(&mut self, band: Band) -> &mut f64 {
        match band {
            Band::Pump => &mut self.pump,
            Band::Signal => &mut self.signal,
            Band::Idler => &mut self.idler,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionModel {
    pub sellmeier: Sellmeier,
    pub offsets: BandOffsets,
    pub wavelength_range_nm: [f64; 2],
    pub temperature_range_c: [f64; 2],
}

impl Default for DispersionModel {
    fn default() -> Self {
        Self {
            sellmeier: Sellmeier::congruent_lithium_niobate(),
            offsets: BandOffsets::default(),
            wavelength_range_nm: [400.0, 5000.0],
            temperature_range_c: [20.0, 250.0],
        }
    }
}

impl DispersionModel {
    /// Effective index: bulk Sellmeier value plus the band offset.
    pub fn refractive_index(&self, wavelength_nm: f64, temperature_c: f64, band: Band) -> Result<f64> {
        let [lmin, lmax] = self.wavelength_range_nm;
        let [tmin, tmax] = self.temperature_range_c;
        check_range("wavelength (nm)", wavelength_nm, lmin, lmax)?;
        check_range("temperature (degC)", temperature_c, tmin, tmax)?;
        Ok(self.sellmeier.index(wavelength_nm, temperature_c) + self.offsets.get(band))
    }

    /// Propagation constant `2 pi n / lambda` in rad/um.
    fn wavenumber(&self, wavelength_nm: f64, temperature_c: f64, band: Band) -> Result<f64> {
        Ok(2.0 * PI * self.refractive_index(wavelength_nm, temperature_c, band)? / (wavelength_nm * 1e-3))
    }
}

pub fn refractive_index(model: &DispersionModel, wavelength_nm: f64, temperature_c: f64, band: Band) -> Result<f64> {
    model.refractive_index(wavelength_nm, temperature_c, band)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpmConfig {
    pub pump_wavelength_nm: f64,
    pub poling_period_um: f64,
    pub temperature_c: f64,
    pub interaction_length_mm: f64,
}

impl QpmConfig {
    pub fn validate(&self, model: &DispersionModel) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: alloc::format!("{v} must be positive"),
                })
            }
        };
        positive("pump_wavelength_nm", self.pump_wavelength_nm)?;
        positive("poling_period_um", self.poling_period_um)?;
        positive("interaction_length_mm", self.interaction_length_mm)?;
        let [tmin, tmax] = model.temperature_range_c;
        check_range("temperature (degC)", self.temperature_c, tmin, tmax)
    }
}

/// Idler wavelength fixed by energy conservation.
pub fn idler_wavelength(pump_nm: f64, signal_nm: f64) -> f64 {
    1.0 / (1.0 / pump_nm - 1.0 / signal_nm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMatchSolution {
    pub signal_wavelength_nm: f64,
    pub idler_wavelength_nm: f64,
    pub residual_mismatch: f64,
    pub spectral_fwhm_nm: f64,
}

/// Material mismatch `k_p - k_s - k_i` without the grating term.
pub fn phase_mismatch(model: &DispersionModel, cfg: &QpmConfig, signal_nm: f64) -> Result<f64> {
    if !(signal_nm > cfg.pump_wavelength_nm) {
        return Err(Error::OutOfRange {
            quantity: "signal wavelength (nm)",
            value: signal_nm,
            min: cfg.pump_wavelength_nm,
            max: f64::INFINITY,
        });
    }
    let idler_nm = idler_wavelength(cfg.pump_wavelength_nm, signal_nm);
    let t = cfg.temperature_c;
    let kp = model.wavenumber(cfg.pump_wavelength_nm, t, Band::Pump)?;
    let ks = model.wavenumber(signal_nm, t, Band::Signal)?;
    let ki = model.wavenumber(idler_nm, t, Band::Idler)?;
    Ok(kp - ks - ki)
}

/// First-order quasi-phase-matching residual `dk - 2 pi / period`.
pub fn mismatch(model: &DispersionModel, cfg: &QpmConfig, signal_nm: f64) -> Result<f64> {
    Ok(phase_mismatch(model, cfg, signal_nm)? - 2.0 * PI / cfg.poling_period_um)
}

pub const ROOT_TOLERANCE: f64 = 1e-10;
pub const SEARCH_INTERVAL_NM: [f64; 2] = [600.0, 1060.0];
const SCAN_STEP_NM: f64 = 2.0;
/// `sinc^2(x) = 1/2` at `x = 1.3915573...`.
const SINC2_HALF: f64 = 1.391_557_377_251_488_8;

/// Root of `f(x) = target` inside a sign-changing bracket: secant steps
/// guarded by bisection.
fn bracketed_root<F>(mut f: F, mut lo: f64, mut hi: f64, target: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut flo = f(lo)? - target;
    let mut fhi = f(hi)? - target;
    if flo == 0.0 {
        return Ok((lo, 0.0));
    }
    if fhi == 0.0 {
        return Ok((hi, 0.0));
    }
    let mut best = if flo.abs() < fhi.abs() { (lo, flo) } else { (hi, fhi) };
    for iter in 0..400 {
        let secant = hi - fhi * (hi - lo) / (fhi - flo);
        let mid = 0.5 * (lo + hi);
        let width = hi - lo;
        let x = if iter % 3 != 2 && secant > lo + 0.01 * width && secant < hi - 0.01 * width {
            secant
        } else {
            mid
        };
        let fx = f(x)? - target;
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx.abs() < tol {
            return Ok((x, fx));
        }
        if (fx < 0.0) == (flo < 0.0) {
            lo = x;
            flo = fx;
        } else {
            hi = x;
            fhi = fx;
        }
        if hi - lo <= f64::EPSILON * hi.abs() {
            break;
        }
    }
    Ok(best)
}

/// Signal/idler pair phase-matched at `cfg`, searched over 600-1060 nm.
pub fn solve_signal_idler(model: &DispersionModel, cfg: &QpmConfig) -> Result<PhaseMatchSolution> {
    cfg.validate(model)?;
    let [start, stop] = SEARCH_INTERVAL_NM;
    let steps = ((stop - start) / SCAN_STEP_NM).round() as usize;
    let mut extrema = (f64::INFINITY, f64::NEG_INFINITY);
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    for i in 0..=steps {
        let x = start + i as f64 * SCAN_STEP_NM;
        let fx = mismatch(model, cfg, x)?;
        extrema = (extrema.0.min(fx), extrema.1.max(fx));
        if let Some((px, pf)) = prev {
            if (pf < 0.0) != (fx < 0.0) || fx == 0.0 {
                bracket = Some((px, x));
                break;
            }
        }
        prev = Some((x, fx));
    }
    let (lo, hi) = bracket.ok_or(Error::NoPhaseMatch {
        min_mismatch: extrema.0,
        max_mismatch: extrema.1,
    })?;
    let (signal, residual) = bracketed_root(|x| mismatch(model, cfg, x), lo, hi, 0.0, ROOT_TOLERANCE)?;
    let spectral_fwhm_nm = half_maximum_width(model, cfg, signal)?;
    Ok(PhaseMatchSolution {
        signal_wavelength_nm: signal,
        idler_wavelength_nm: idler_wavelength(cfg.pump_wavelength_nm, signal),
        residual_mismatch: residual,
        spectral_fwhm_nm,
    })
}

/// Exact FWHM of `sinc^2(dK L / 2)` around the root at `signal_nm`.
fn half_maximum_width(model: &DispersionModel, cfg: &QpmConfig, signal_nm: f64) -> Result<f64> {
    let length_um = cfg.interaction_length_mm * 1e3;
    let dk_half = 2.0 * SINC2_HALF / length_um;
    let slope_sign = {
        let h = 1e-3;
        let d = mismatch(model, cfg, signal_nm + h)? - mismatch(model, cfg, signal_nm - h)?;
        if d >= 0.0 { 1.0 } else { -1.0 }
    };
    let edge = |dir: f64| -> Result<f64> {
        // Expand until the half-maximum level is bracketed on this side.
        let target = dir * slope_sign * dk_half;
        let mut step = 0.01;
        let mut far = signal_nm + dir * step;
        while (mismatch(model, cfg, far)? - target) * dir * slope_sign < 0.0 {
            step *= 2.0;
            far = signal_nm + dir * step;
            if step > 200.0 {
                return Err(Error::GridMissesPeak);
            }
        }
        let (lo, hi) = if dir > 0.0 { (signal_nm, far) } else { (far, signal_nm) };
        Ok(bracketed_root(|x| mismatch(model, cfg, x), lo, hi, target, 1e-14)?.0)
    };
    Ok(edge(1.0)? - edge(-1.0)?)
}

/// Normalized `sinc^2(dK L / 2)` intensity on a signal-wavelength grid.
pub fn spectrum(model: &DispersionModel, cfg: &QpmConfig, signal_grid_nm: &[f64]) -> Result<Vec<(f64, f64)>> {
    let sol = solve_signal_idler(model, cfg)?;
    let covers = signal_grid_nm.len() >= 3
        && signal_grid_nm.first().copied().unwrap_or(f64::NAN) < sol.signal_wavelength_nm
        && signal_grid_nm.last().copied().unwrap_or(f64::NAN) > sol.signal_wavelength_nm;
    if !covers {
        return Err(Error::GridMissesPeak);
    }
    let half_length = 0.5 * cfg.interaction_length_mm * 1e3;
    signal_grid_nm
        .iter()
        .map(|&x| {
            let arg = mismatch(model, cfg, x)? * half_length;
            let s = if arg == 0.0 { 1.0 } else { libm::sin(arg) / arg };
            Ok((x, s * s))
        })
        .collect()
}

/// FWHM of a sampled spectrum by linear interpolation.
pub fn spectral_fwhm(spectrum: &[(f64, f64)]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = spectrum.iter().copied().unzip();
    profile::fwhm(&xs, &ys, 0.0)
}

/// Uniform grid of `points` samples spanning `center +- half_span`.
pub fn grid_around(center: f64, half_span: f64, points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n)
        .map(|i| center - half_span + 2.0 * half_span * i as f64 / (n - 1) as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    PolingPeriod,
    Temperature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningPoint {
    pub sweep_value: f64,
    pub solution: Result<PhaseMatchSolution>,
}

/// One solver call per sweep value; failed points are kept and marked.
pub fn tuning_curve(
    model: &DispersionModel,
    variable: SweepVariable,
    values: &[f64],
    base: &QpmConfig,
) -> Vec<TuningPoint> {
    values
        .iter()
        .map(|&v| {
            let mut cfg = *base;
            match variable {
                SweepVariable::PolingPeriod => cfg.poling_period_um = v,
                SweepVariable::Temperature => cfg.temperature_c = v,
            }
            TuningPoint {
                sweep_value: v,
                solution: solve_signal_idler(model, &cfg),
            }
        })
        .collect()
}

/// Offset for `band` that places the phase-matched signal exactly at
/// `target_signal_nm`. The residual is linear in a band offset, so the
/// correction is closed-form.
pub fn calibrate_offset(model: &DispersionModel, cfg: &QpmConfig, target_signal_nm: f64, band: Band) -> Result<f64> {
    cfg.validate(model)?;
    let residual = mismatch(model, cfg, target_signal_nm)?;
    let wavelength_um = match band {
        Band::Pump => cfg.pump_wavelength_nm,
        Band::Signal => target_signal_nm,
        Band::Idler => idler_wavelength(cfg.pump_wavelength_nm, target_signal_nm),
    } * 1e-3;
    // d(residual)/d(offset) is +2 pi / lambda for the pump, -2 pi / lambda otherwise.
    let sign = if band == Band::Pump { 1.0 } else { -1.0 };
    Ok(model.offsets.get(band) - residual * wavelength_um / (2.0 * PI * sign))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lab_cfg() -> QpmConfig {
        QpmConfig {
            pump_wavelength_nm: 532.0,
            poling_period_um: 6.80,
            temperature_c: 185.0,
            interaction_length_mm: 30.0,
        }
    }

    fn calibrated() -> DispersionModel {
        let mut m = DispersionModel::default();
        m.offsets.idler = calibrate_offset(&m, &lab_cfg(), 803.0, Band::Idler).unwrap();
        m
    }

    #[test]
    fn bulk_index_at_1064() {
        // Hand evaluation of the coefficient set at 1.064 um, 25 degC: n_e = 2.1558.
        let n = refractive_index(&DispersionModel::default(), 1064.0, 25.0, Band::Pump).unwrap();
        assert_relative_eq!(n, 2.15, epsilon = 0.02);
        assert_relative_eq!(n, 2.155_817, epsilon = 1e-5);
    }

    #[test]
    fn offset_is_additive() {
        let mut m = DispersionModel::default();
        let a = m.refractive_index(900.0, 100.0, Band::Signal).unwrap();
        m.offsets.signal = 0.0123;
        let b = m.refractive_index(900.0, 100.0, Band::Signal).unwrap();
        assert_relative_eq!(b - a, 0.0123, epsilon = 1e-15);
    }

    #[test]
    fn out_of_range_inputs() {
        let m = DispersionModel::default();
        assert!(matches!(
            m.refractive_index(300.0, 25.0, Band::Pump),
            Err(Error::OutOfRange { quantity: "wavelength (nm)", .. })
        ));
        assert!(matches!(
            m.refractive_index(800.0, 400.0, Band::Pump),
            Err(Error::OutOfRange { quantity: "temperature (degC)", .. })
        ));
    }

    #[test]
    fn calibrated_operating_point() {
        let m = calibrated();
        let s = solve_signal_idler(&m, &lab_cfg()).unwrap();
        assert_relative_eq!(s.signal_wavelength_nm, 803.0, epsilon = 1e-6);
        assert_relative_eq!(s.idler_wavelength_nm, 1576.37, epsilon = 0.01);
        assert!(s.residual_mismatch.abs() < ROOT_TOLERANCE);
        let energy = 1.0 / 532.0 - 1.0 / s.signal_wavelength_nm - 1.0 / s.idler_wavelength_nm;
        assert!(energy.abs() < 1e-9);
        assert!(s.signal_wavelength_nm < s.idler_wavelength_nm);
    }

    #[test]
    fn idler_from_energy_conservation() {
        assert_relative_eq!(idler_wavelength(532.0, 803.0), 1576.369, epsilon = 1e-3);
    }

    #[test]
    fn infinite_period_limit() {
        let m = calibrated();
        let mut cfg = lab_cfg();
        let dk = phase_mismatch(&m, &cfg, 810.0).unwrap();
        cfg.poling_period_um = f64::INFINITY;
        assert_eq!(mismatch(&m, &cfg, 810.0).unwrap(), dk);
    }

    #[test]
    fn perturbed_root_follows_slope() {
        let m = calibrated();
        let cfg = lab_cfg();
        let s = solve_signal_idler(&m, &cfg).unwrap().signal_wavelength_nm;
        let h = 1e-4;
        let slope = (mismatch(&m, &cfg, s + h).unwrap() - mismatch(&m, &cfg, s - h).unwrap()) / (2.0 * h);
        let v = mismatch(&m, &cfg, s + 1.0).unwrap();
        assert!(v != 0.0);
        assert_eq!(v.signum(), slope.signum());
    }

    #[test]
    fn temperature_tuning_direction() {
        let m = calibrated();
        let mut cfg = lab_cfg();
        let a = solve_signal_idler(&m, &cfg).unwrap().signal_wavelength_nm;
        cfg.temperature_c += 10.0;
        let b = solve_signal_idler(&m, &cfg).unwrap();
        assert!(b.residual_mismatch.abs() < ROOT_TOLERANCE);
        assert!(b.signal_wavelength_nm < a);
    }

    #[test]
    fn no_root_reports_extrema() {
        let m = calibrated();
        let mut cfg = lab_cfg();
        cfg.poling_period_um = 20.0;
        match solve_signal_idler(&m, &cfg) {
            Err(Error::NoPhaseMatch { min_mismatch, max_mismatch }) => assert!(min_mismatch <= max_mismatch),
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn spectrum_peak_and_width() {
        let m = calibrated();
        let cfg = lab_cfg();
        let sol = solve_signal_idler(&m, &cfg).unwrap();
        let grid = grid_around(sol.signal_wavelength_nm, 2.0, 4001);
        let spec = spectrum(&m, &cfg, &grid).unwrap();
        let w = spectral_fwhm(&spec).unwrap();
        assert_relative_eq!(w, sol.spectral_fwhm_nm, epsilon = 2e-3);
        let at_root = spectrum(&m, &cfg, &[sol.signal_wavelength_nm - 1.0, sol.signal_wavelength_nm, sol.signal_wavelength_nm + 1.0]).unwrap();
        assert_relative_eq!(at_root[1].1, 1.0, epsilon = 1e-12);
        assert_eq!(spectrum(&m, &cfg, &grid_around(790.0, 1.0, 11)), Err(Error::GridMissesPeak));
    }

    #[test]
    fn width_scales_inversely_with_length() {
        let m = calibrated();
        let mut cfg = lab_cfg();
        let w1 = solve_signal_idler(&m, &cfg).unwrap().spectral_fwhm_nm;
        cfg.interaction_length_mm *= 2.0;
        let w2 = solve_signal_idler(&m, &cfg).unwrap().spectral_fwhm_nm;
        assert_relative_eq!(w1 / w2, 2.0, epsilon = 0.1);
    }

    #[test]
    fn tuning_sweeps() {
        let m = calibrated();
        let cfg = lab_cfg();
        let periods: Vec<f64> = (0..=8).map(|i| 6.76 + 0.01 * i as f64).collect();
        let curve = tuning_curve(&m, SweepVariable::PolingPeriod, &periods, &cfg);
        let ls: Vec<f64> = curve.iter().map(|p| p.solution.as_ref().unwrap().signal_wavelength_nm).collect();
        assert!(ls.windows(2).all(|w| w[1] < w[0]));
        assert!(ls[0] - ls[8] > 5.0);
        assert!(ls[0] > 803.0 && ls[8] < 803.0);

        let single = tuning_curve(&m, SweepVariable::PolingPeriod, &[6.80], &cfg);
        assert_eq!(single[0].solution, solve_signal_idler(&m, &cfg));

        let temps = [175.0, 180.0, 185.0, 190.0];
        let fwd = tuning_curve(&m, SweepVariable::Temperature, &temps, &cfg);
        let mut rev_t = temps;
        rev_t.reverse();
        let mut rev = tuning_curve(&m, SweepVariable::Temperature, &rev_t, &cfg);
        rev.reverse();
        assert_eq!(fwd, rev);
    }
}
