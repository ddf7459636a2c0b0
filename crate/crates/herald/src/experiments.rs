//! Sweep drivers. Each returns plain tables; writing them is left to
//! [`crate::output`].
//!
//! Random streams are addressed as `[experiment, point, ..., repeat]`, so a
//! point's result depends only on the seed and its position in the sweep.

use herald_core::counter::CountTotals;
use herald_core::detect::gate_overlap;
use herald_core::metrics::{car_dtau, klyshko, output_noise_factor, Metric, MetricsReport};
use herald_core::oracle::{expected_offset_rates, expected_rates, SlotProbabilities};
use herald_core::profile;
use herald_core::qpm::{
    grid_around, idler_wavelength, solve_signal_idler, spectral_fwhm, spectrum, tuning_curve, PhaseMatchSolution,
    SweepVariable, TuningPoint,
};
use herald_core::wdm::{cross_coupling_fraction, stem_sweep, ModeBeatModel, StemSweepRow};

use crate::config::Experiment;
use crate::runner::Runner;

const POWER_SWEEP: u64 = 1;
const DELAY_SCAN: u64 = 2;

/// Number of metrics in a [`MetricsReport`].
pub const METRIC_COUNT: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerRow {
    pub power_uw: f64,
    /// Configured mean pairs per pulse.
    pub mean_pairs: f64,
    /// Totals pooled over repeats.
    pub aligned: CountTotals,
    pub offset: CountTotals,
    pub shifted: CountTotals,
    pub report: MetricsReport,
    /// Sample standard deviation of each metric over repeats (needs two or more).
    pub repeat_sd: [Option<f64>; METRIC_COUNT],
}

fn sample_sd(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some(var.sqrt())
}

pub fn power_sweep(exp: &Experiment, runner: &Runner) -> herald_core::Result<Vec<PowerRow>> {
    let cfg = &exp.config;
    let run = &cfg.run;
    let sweep = &cfg.power_sweep;
    let params = exp.model.report_params();
    let offsets = [0, sweep.slot_offset];
    let mut rows = Vec::with_capacity(sweep.powers_uw.len());
    for (i, &power) in sweep.powers_uw.iter().enumerate() {
        let aligned_setup = exp.model.point(power, 0.0)?;
        let shifted_setup = exp.model.point(power, sweep.far_delay_ns)?;
        let mut pooled: [Option<CountTotals>; 3] = [None; 3];
        let mut per_repeat = vec![Vec::new(); METRIC_COUNT];
        for r in 0..u64::from(run.repeats) {
            let a = runner.run(&aligned_setup, run.seed, &[POWER_SWEEP, i as u64, r, 0], run.pulses, &offsets)?;
            let s = runner.run(&shifted_setup, run.seed, &[POWER_SWEEP, i as u64, r, 1], run.pulses, &[0])?;
            if run.repeats > 1 {
                let rep = MetricsReport::compute(&a[0], &a[1], Some(&s[0]), &params)?;
                for (k, (_, m)) in rep.entries().iter().enumerate() {
                    if let Some(v) = m.value() {
                        per_repeat[k].push(v);
                    }
                }
            }
            for (acc, t) in pooled.iter_mut().zip([a[0], a[1], s[0]]) {
                *acc = Some(acc.map_or(t, |x| x + t));
            }
        }
        let [aligned, offset, shifted] = pooled.map(|t| t.expect("at least one repeat"));
        let mut repeat_sd = [None; METRIC_COUNT];
        for (k, v) in per_repeat.iter().enumerate() {
            repeat_sd[k] = sample_sd(v);
        }
        rows.push(PowerRow {
            power_uw: power,
            mean_pairs: exp.model.pump.mean_pairs_from_power(power)?,
            aligned,
            offset,
            shifted,
            report: MetricsReport::compute(&aligned, &offset, Some(&shifted), &params)?,
            repeat_sd,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayPoint {
    pub delay_ns: f64,
    pub gate_overlap: f64,
    pub totals: CountTotals,
    pub klyshko: Metric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayProfile {
    pub power_uw: f64,
    pub points: Vec<DelayPoint>,
    pub far_delay_ns: f64,
    pub far: CountTotals,
    pub far_klyshko: Metric,
    /// Profile width above the far-delay floor.
    pub fwhm_ns: Option<f64>,
    /// Peak point against the far-delay point.
    pub car_dtau: Metric,
    pub output_noise_factor: Metric,
    /// No grid point lies within the half-maximum gate window.
    pub gate_missed: bool,
}

pub fn delay_scan(exp: &Experiment, runner: &Runner) -> herald_core::Result<Vec<DelayProfile>> {
    let cfg = &exp.config;
    let run = &cfg.run;
    let scan = &cfg.delay_scan;
    let delays = scan.delay_ns.values();
    let far_pulses = scan.far_pulses.unwrap_or(run.pulses);
    let idler = &exp.model.detectors.idler1;
    let period = exp.model.pump.period_ns();
    let mut out = Vec::with_capacity(scan.powers_uw.len());
    for (p, &power) in scan.powers_uw.iter().enumerate() {
        let mut points = Vec::with_capacity(delays.len());
        for (d, &delay) in delays.iter().enumerate() {
            let setup = exp.model.point(power, delay)?;
            let mut totals = CountTotals::default();
            for r in 0..u64::from(run.repeats) {
                totals += runner.run(&setup, run.seed, &[DELAY_SCAN, p as u64, 0, d as u64, r], run.pulses, &[0])?[0];
            }
            let wrapped = delay - period * (delay / period).round();
            points.push(DelayPoint {
                delay_ns: delay,
                gate_overlap: gate_overlap(wrapped, idler)?,
                klyshko: klyshko(&totals),
                totals,
            });
        }
        let far_setup = exp.model.point(power, scan.far_delay_ns)?;
        let mut far = CountTotals::default();
        for r in 0..u64::from(run.repeats) {
            far += runner.run(&far_setup, run.seed, &[DELAY_SCAN, p as u64, 1, 0, r], far_pulses, &[0])?[0];
        }
        let far_klyshko = klyshko(&far);
        let xs: Vec<f64> = points.iter().map(|q| q.delay_ns).collect();
        let ys: Vec<f64> = points.iter().map(|q| q.klyshko.value().unwrap_or(0.0)).collect();
        let floor = far_klyshko.value().unwrap_or(0.0);
        let peak = points
            .iter()
            .max_by(|a, b| a.klyshko.value().unwrap_or(0.0).total_cmp(&b.klyshko.value().unwrap_or(0.0)));
        let car = peak.map_or(Metric::Undefined, |q| car_dtau(&q.totals, &far));
        out.push(DelayProfile {
            power_uw: power,
            gate_missed: points.iter().all(|q| q.gate_overlap < 0.5),
            fwhm_ns: profile::fwhm(&xs, &ys, floor),
            points,
            far_delay_ns: scan.far_delay_ns,
            far,
            far_klyshko,
            output_noise_factor: output_noise_factor(&car),
            car_dtau: car,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub power_uw: f64,
    pub mean_pairs: f64,
    pub aligned: SlotProbabilities,
    pub offset: SlotProbabilities,
    pub shifted: SlotProbabilities,
    pub report: MetricsReport,
}

/// Exact per-slot probabilities and metrics at each configured power.
pub fn oracle_table(exp: &Experiment) -> herald_core::Result<Vec<OracleRow>> {
    let t = &exp.config.oracle_table;
    let params = exp.model.report_params();
    t.powers_uw
        .iter()
        .map(|&power| {
            let aligned_cfg = exp.model.point(power, 0.0)?.oracle_config()?;
            let aligned = expected_rates(&aligned_cfg)?;
            let offset = expected_offset_rates(&aligned_cfg)?;
            let shifted = expected_rates(&exp.model.point(power, t.far_delay_ns)?.oracle_config()?)?;
            Ok(OracleRow {
                power_uw: power,
                mean_pairs: exp.model.pump.mean_pairs_from_power(power)?,
                report: MetricsReport::compute(&aligned, &offset, Some(&shifted), &params)?,
                aligned,
                offset,
                shifted,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitCheck {
    pub stem_length_um: f64,
    pub wavelength_nm: f64,
    pub measured: f64,
    pub model: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WdmSweep {
    pub model: ModeBeatModel,
    pub rows: Vec<StemSweepRow>,
    /// Index of the row with the largest `eta_signal * eta_idler`.
    pub optimum: Option<usize>,
    pub fit_checks: Vec<FitCheck>,
}

pub fn wdm_sweep(exp: &Experiment) -> herald_core::Result<WdmSweep> {
    let cfg = &exp.config;
    let rows = stem_sweep(&exp.coupler, &exp.beat_model, &cfg.wdm.stem_length_um.values())?;
    let optimum = herald_core::wdm::optimum(&rows).and_then(|best| rows.iter().position(|r| r == best));
    let fit_checks = cfg
        .measurements()
        .iter()
        .map(|m| {
            let g = cfg.coupler(m.stem_length_um);
            Ok(FitCheck {
                stem_length_um: m.stem_length_um,
                wavelength_nm: m.wavelength_nm,
                measured: m.cross_fraction,
                model: cross_coupling_fraction(&g, &exp.beat_model, m.wavelength_nm)?,
            })
        })
        .collect::<herald_core::Result<_>>()?;
    Ok(WdmSweep {
        model: exp.beat_model.clone(),
        rows,
        optimum,
        fit_checks,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpmCurves {
    pub operating_point: PhaseMatchSolution,
    pub period: Vec<TuningPoint>,
    pub temperature: Vec<TuningPoint>,
    /// `(signal_nm, idler_nm, intensity)` around the operating point.
    pub spectrum: Vec<(f64, f64, f64)>,
    pub sampled_fwhm_nm: Option<f64>,
}

pub fn qpm_curves(exp: &Experiment) -> herald_core::Result<QpmCurves> {
    let q = &exp.config.qpm;
    let op = solve_signal_idler(&exp.dispersion, &exp.qpm)?;
    let grid = grid_around(op.signal_wavelength_nm, q.spectrum_half_span_nm, q.spectrum_points);
    let spec = spectrum(&exp.dispersion, &exp.qpm, &grid)?;
    Ok(QpmCurves {
        operating_point: op,
        period: tuning_curve(
            &exp.dispersion,
            SweepVariable::PolingPeriod,
            &q.poling_period_sweep_um.values(),
            &exp.qpm,
        ),
        temperature: tuning_curve(
            &exp.dispersion,
            SweepVariable::Temperature,
            &q.temperature_sweep_c.values(),
            &exp.qpm,
        ),
        sampled_fwhm_nm: spectral_fwhm(&spec),
        spectrum: spec
            .iter()
            .map(|&(s, y)| (s, idler_wavelength(exp.qpm.pump_wavelength_nm, s), y))
            .collect(),
    })
}
