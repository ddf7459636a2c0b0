//! TOML experiment configuration, total validation and the derived model
//! objects every subcommand runs on.

use std::fmt;
use std::path::{Path, PathBuf};

use herald_core::calibration::{calibrate, CalibrationReport, CalibrationTargets, PowerTarget};
use herald_core::detect::{gate_overlap, DetectorModel, DetectorMode, DetectorSet};
use herald_core::model::{BackgroundModel, SourceModel, RESIDUAL_STAGE};
use herald_core::qpm::{calibrate_offset, solve_signal_idler, Band, BandOffsets, DispersionModel, QpmConfig};
use herald_core::source::{OpticalChannel, PairLaw, PumpPowerMap, Stage};
use herald_core::wdm::{fit_beat_model, CouplerGeometry, CouplingMeasurement, ModeBeatModel};
use serde::{Deserialize, Serialize};

/// Laboratory defaults shipped with the binary.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/lab_defaults.toml");

/// Upper bound on the number of points generated from one grid.
const MAX_GRID_POINTS: usize = 100_000;
/// Largest idler-gate overlap tolerated at a far delay.
const FAR_OVERLAP_MAX: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    pub source: SourceConfig,
    pub detectors: DetectorsConfig,
    #[serde(default)]
    pub background: BackgroundConfig,
    pub calibration: Option<CalibrationConfig>,
    pub power_sweep: PowerSweepConfig,
    pub delay_scan: DelayScanConfig,
    pub wdm: WdmConfig,
    pub qpm: QpmSection,
    pub oracle_table: OracleTableConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Pulses per sweep point and repeat.
    pub pulses: u64,
    #[serde(default = "one")]
    pub repeats: u32,
    pub out_dir: PathBuf,
    /// Worker threads; 0 selects one per core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub plots: bool,
}

fn one() -> u32 {
    1
}

fn default_offset() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub law: PairLaw,
    pub splitter_ratio: f64,
    pub pump: PumpConfig,
    pub signal_stages: Vec<StageConfig>,
    pub idler_stages: Vec<StageConfig>,
}

/// Linear pump map through the origin and one reference point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpConfig {
    pub repetition_rate_hz: f64,
    pub reference_power_uw: f64,
    pub reference_mean_pairs: f64,
}

/// A stage is given either by its transmission or by a loss per length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub name: String,
    pub transmission: Option<f64>,
    pub loss_db_per_cm: Option<f64>,
    pub length_cm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorsConfig {
    pub trigger: DetectorConfig,
    pub idler1: DetectorConfig,
    pub idler2: DetectorConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub mode: DetectorMode,
    pub efficiency: f64,
    #[serde(default)]
    pub dark_rate_cps: f64,
    #[serde(default)]
    pub dead_time_ns: f64,
    #[serde(default)]
    pub gate_fwhm_ns: f64,
    #[serde(default)]
    pub nominal_gate_ns: f64,
}

impl DetectorConfig {
    pub fn model(&self) -> DetectorModel {
        DetectorModel {
            efficiency: self.efficiency,
            dark_rate_cps: self.dark_rate_cps,
            dead_time_ns: self.dead_time_ns,
            gate_fwhm_ns: self.gate_fwhm_ns,
            nominal_gate_ns: self.nominal_gate_ns,
            mode: self.mode,
        }
    }
}

/// Starting values; replaced by the fit when calibration is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundConfig {
    #[serde(default)]
    pub trigger_cps_per_uw: f64,
    #[serde(default)]
    pub idler_cps: f64,
    #[serde(default)]
    pub idler_cps_per_uw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub power_uw: f64,
    pub value: f64,
}

impl From<TargetConfig> for PowerTarget {
    fn from(t: TargetConfig) -> Self {
        PowerTarget {
            power_uw: t.power_uw,
            value: t.value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub enabled: bool,
    pub far_delay_ns: f64,
    pub trigger_rate: TargetConfig,
    pub heralding_efficiency: TargetConfig,
    pub car_dtau: [TargetConfig; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSweepConfig {
    pub powers_uw: Vec<f64>,
    pub far_delay_ns: f64,
    #[serde(default = "default_offset")]
    pub slot_offset: u64,
}

/// Inclusive arithmetic grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    fn len(&self) -> Option<usize> {
        if !(self.start.is_finite() && self.stop.is_finite() && self.step.is_finite()) {
            return None;
        }
        if self.step <= 0.0 || self.stop < self.start {
            return None;
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() + 1.0;
        (n <= MAX_GRID_POINTS as f64).then_some(n as usize)
    }

    /// Grid points computed as `start + i * step`, so no error accumulates.
    pub fn values(&self) -> Vec<f64> {
        (0..self.len().unwrap_or(0))
            .map(|i| self.start + i as f64 * self.step)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayScanConfig {
    pub powers_uw: Vec<f64>,
    pub delay_ns: GridSpec,
    pub far_delay_ns: f64,
    /// Pulses for the far-delay reference point; defaults to `run.pulses`.
    pub far_pulses: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementConfig {
    pub stem_length_um: f64,
    pub wavelength_nm: f64,
    pub cross_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WdmConfig {
    pub stem_gap_um: f64,
    pub port_gap_um: f64,
    pub min_bend_radius_um: f64,
    pub band_half_width_nm: f64,
    pub stem_length_um: GridSpec,
    pub measurements: Vec<MeasurementConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetsConfig {
    #[serde(default)]
    pub pump: f64,
    #[serde(default)]
    pub signal: f64,
    #[serde(default)]
    pub idler: f64,
}

/// Shifts the offset of `band` so that the base configuration phase-matches
/// at `target_signal_nm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QpmCalibrationConfig {
    pub target_signal_nm: f64,
    pub band: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QpmSection {
    pub pump_wavelength_nm: f64,
    pub poling_period_um: f64,
    pub temperature_c: f64,
    pub interaction_length_mm: f64,
    #[serde(default)]
    pub offsets: OffsetsConfig,
    pub calibrate: Option<QpmCalibrationConfig>,
    pub poling_period_sweep_um: GridSpec,
    pub temperature_sweep_c: GridSpec,
    pub spectrum_half_span_nm: f64,
    pub spectrum_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleTableConfig {
    pub powers_uw: Vec<f64>,
    pub far_delay_ns: f64,
    #[serde(default = "default_offset")]
    pub slot_offset: u64,
}

/// One violated constraint, addressed by its dotted config path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Every violation found in a configuration; never empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn single(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            diagnostics: vec![Diagnostic {
                path: path.into(),
                message: message.into(),
            }],
        }
    }

    pub fn has_path(&self, path: &str) -> bool {
        self.diagnostics.iter().any(|d| d.path == path)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "configuration has {} problem(s):", self.diagnostics.len())?;
        for d in &self.diagnostics {
            writeln!(f, "  {d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationReport {}

#[derive(Default)]
struct Checker {
    diagnostics: Vec<Diagnostic>,
}

impl Checker {
    fn fail(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.diagnostics.push(Diagnostic {
            path: path.into(),
            message: message.into(),
        });
    }

    fn positive(&mut self, path: &str, v: f64) {
        if !(v.is_finite() && v > 0.0) {
            self.fail(path, format!("{v} must be finite and positive"));
        }
    }

    fn non_negative(&mut self, path: &str, v: f64) {
        if !(v.is_finite() && v >= 0.0) {
            self.fail(path, format!("{v} must be finite and non-negative"));
        }
    }

    fn fraction(&mut self, path: &str, v: f64) {
        if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
            self.fail(path, format!("{v} must lie in [0, 1]"));
        }
    }

    fn core<T>(&mut self, path: &str, r: herald_core::Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.fail(path, e.to_string());
                None
            }
        }
    }

    fn powers(&mut self, path: &str, powers: &[f64]) {
        if powers.is_empty() {
            self.fail(path, "needs at least one power");
        }
        for (i, &p) in powers.iter().enumerate() {
            self.positive(&format!("{path}[{i}]"), p);
        }
    }

    fn grid(&mut self, path: &str, g: &GridSpec) -> bool {
        if g.len().is_none() {
            self.fail(
                path,
                format!(
                    "grid {}..{} step {} must be finite, ascending, with a positive step and at most {MAX_GRID_POINTS} points",
                    g.start, g.stop, g.step
                ),
            );
            return false;
        }
        true
    }
}

/// A validated configuration with its model objects built, calibrated and fitted.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: SourceModel,
    pub calibration: Option<CalibrationReport>,
    pub dispersion: DispersionModel,
    pub qpm: QpmConfig,
    pub coupler: CouplerGeometry,
    pub beat_model: ModeBeatModel,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ValidationReport> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().trim().to_string();
            let at = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "document".to_string());
            ValidationReport::single(at, msg)
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, ValidationReport> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ValidationReport::single(path.display().to_string(), format!("cannot read config: {e}")))?;
        Self::from_toml(&text)
    }

    pub fn lab_defaults() -> Self {
        Self::from_toml(DEFAULT_CONFIG).expect("shipped defaults parse")
    }

    pub fn signal_channel(&self) -> OpticalChannel {
        OpticalChannel::new(self.source.signal_stages.iter().map(stage).collect())
    }

    pub fn idler_channel(&self) -> OpticalChannel {
        OpticalChannel::new(self.source.idler_stages.iter().map(stage).collect())
    }

    /// Source model before calibration.
    pub fn source_model(&self) -> SourceModel {
        let p = &self.source.pump;
        SourceModel {
            law: self.source.law,
            pump: PumpPowerMap::through_point(p.reference_power_uw, p.reference_mean_pairs, p.repetition_rate_hz),
            signal_channel: self.signal_channel(),
            idler_channel: self.idler_channel(),
            splitter_ratio: self.source.splitter_ratio,
            detectors: DetectorSet {
                trigger: self.detectors.trigger.model(),
                idler1: self.detectors.idler1.model(),
                idler2: self.detectors.idler2.model(),
            },
            background: BackgroundModel {
                trigger_cps_per_uw: self.background.trigger_cps_per_uw,
                idler_cps: self.background.idler_cps,
                idler_cps_per_uw: self.background.idler_cps_per_uw,
            },
        }
    }

    pub fn qpm_config(&self) -> QpmConfig {
        QpmConfig {
            pump_wavelength_nm: self.qpm.pump_wavelength_nm,
            poling_period_um: self.qpm.poling_period_um,
            temperature_c: self.qpm.temperature_c,
            interaction_length_mm: self.qpm.interaction_length_mm,
        }
    }

    /// Coupler at the stem length `stem_length_um`.
    pub fn coupler(&self, stem_length_um: f64) -> CouplerGeometry {
        let w = &self.wdm;
        CouplerGeometry::with_bend_radius(stem_length_um, w.stem_gap_um, w.port_gap_um, w.min_bend_radius_um)
    }

    pub fn measurements(&self) -> Vec<CouplingMeasurement> {
        self.wdm
            .measurements
            .iter()
            .map(|m| CouplingMeasurement {
                stem_length_um: m.stem_length_um,
                wavelength_nm: m.wavelength_nm,
                cross_fraction: m.cross_fraction,
            })
            .collect()
    }

    /// Checks every field, then builds, calibrates and fits the models.
    /// Either all diagnostics are returned or a fully prepared experiment.
    pub fn prepare(self) -> Result<Experiment, ValidationReport> {
        let mut c = Checker::default();
        self.check_fields(&mut c);
        if !c.diagnostics.is_empty() {
            return Err(ValidationReport {
                diagnostics: c.diagnostics,
            });
        }
        let prepared = self.build(&mut c);
        match prepared {
            Some(e) if c.diagnostics.is_empty() => Ok(e),
            _ => Err(ValidationReport {
                diagnostics: c.diagnostics,
            }),
        }
    }

    fn check_fields(&self, c: &mut Checker) {
        let r = &self.run;
        if r.pulses == 0 {
            c.fail("run.pulses", "must be at least 1");
        }
        if r.repeats == 0 {
            c.fail("run.repeats", "must be at least 1");
        }
        if r.out_dir.as_os_str().is_empty() {
            c.fail("run.out_dir", "must not be empty");
        }

        let s = &self.source;
        c.fraction("source.splitter_ratio", s.splitter_ratio);
        c.positive("source.pump.repetition_rate_hz", s.pump.repetition_rate_hz);
        c.positive("source.pump.reference_power_uw", s.pump.reference_power_uw);
        c.positive("source.pump.reference_mean_pairs", s.pump.reference_mean_pairs);
        for (arm, stages) in [("signal_stages", &s.signal_stages), ("idler_stages", &s.idler_stages)] {
            for (i, st) in stages.iter().enumerate() {
                check_stage(c, &format!("source.{arm}[{i}]"), st);
            }
        }

        for (name, d) in [
            ("trigger", &self.detectors.trigger),
            ("idler1", &self.detectors.idler1),
            ("idler2", &self.detectors.idler2),
        ] {
            let p = format!("detectors.{name}");
            c.fraction(&format!("{p}.efficiency"), d.efficiency);
            c.non_negative(&format!("{p}.dark_rate_cps"), d.dark_rate_cps);
            c.non_negative(&format!("{p}.dead_time_ns"), d.dead_time_ns);
            c.non_negative(&format!("{p}.nominal_gate_ns"), d.nominal_gate_ns);
            match d.mode {
                DetectorMode::Gated => c.positive(&format!("{p}.gate_fwhm_ns"), d.gate_fwhm_ns),
                DetectorMode::FreeRunning => c.non_negative(&format!("{p}.gate_fwhm_ns"), d.gate_fwhm_ns),
            }
        }
        if self.detectors.trigger.mode != DetectorMode::FreeRunning {
            c.fail("detectors.trigger.mode", "the trigger detector must be free_running");
        }
        for name in ["idler1", "idler2"] {
            let d = if name == "idler1" { &self.detectors.idler1 } else { &self.detectors.idler2 };
            if d.mode != DetectorMode::Gated {
                c.fail(format!("detectors.{name}.mode"), "idler detectors must be gated");
            }
        }

        let b = &self.background;
        c.non_negative("background.trigger_cps_per_uw", b.trigger_cps_per_uw);
        c.non_negative("background.idler_cps", b.idler_cps);
        c.non_negative("background.idler_cps_per_uw", b.idler_cps_per_uw);

        if let Some(cal) = &self.calibration {
            c.positive("calibration.trigger_rate.power_uw", cal.trigger_rate.power_uw);
            c.positive("calibration.trigger_rate.value", cal.trigger_rate.value);
            c.positive("calibration.heralding_efficiency.power_uw", cal.heralding_efficiency.power_uw);
            c.fraction("calibration.heralding_efficiency.value", cal.heralding_efficiency.value);
            for (i, t) in cal.car_dtau.iter().enumerate() {
                c.positive(&format!("calibration.car_dtau[{i}].power_uw"), t.power_uw);
                c.positive(&format!("calibration.car_dtau[{i}].value"), t.value);
            }
            c.positive("calibration.far_delay_ns", cal.far_delay_ns);
            if cal.enabled && !s.signal_stages.iter().any(|st| st.name == RESIDUAL_STAGE) {
                c.fail(
                    "source.signal_stages",
                    format!("calibration needs a signal stage named \"{RESIDUAL_STAGE}\""),
                );
            }
        }

        let ps = &self.power_sweep;
        c.powers("power_sweep.powers_uw", &ps.powers_uw);
        c.positive("power_sweep.far_delay_ns", ps.far_delay_ns);
        check_offset(c, "power_sweep.slot_offset", ps.slot_offset, r.pulses);

        let ds = &self.delay_scan;
        c.powers("delay_scan.powers_uw", &ds.powers_uw);
        c.positive("delay_scan.far_delay_ns", ds.far_delay_ns);
        if c.grid("delay_scan.delay_ns", &ds.delay_ns) && (ds.delay_ns.start > -2.0 || ds.delay_ns.stop < 2.0) {
            c.fail(
                "delay_scan.delay_ns",
                format!("grid {}..{} ns must cover at least -2..2 ns", ds.delay_ns.start, ds.delay_ns.stop),
            );
        }
        if ds.far_pulses == Some(0) {
            c.fail("delay_scan.far_pulses", "must be at least 1");
        }

        let w = &self.wdm;
        c.positive("wdm.stem_gap_um", w.stem_gap_um);
        c.positive("wdm.port_gap_um", w.port_gap_um);
        if w.port_gap_um <= w.stem_gap_um {
            c.fail("wdm.port_gap_um", "must exceed the stem gap");
        }
        c.positive("wdm.min_bend_radius_um", w.min_bend_radius_um);
        c.positive("wdm.band_half_width_nm", w.band_half_width_nm);
        if c.grid("wdm.stem_length_um", &w.stem_length_um) && w.stem_length_um.start < 0.0 {
            c.fail("wdm.stem_length_um", "stem lengths must be non-negative");
        }
        if w.measurements.is_empty() {
            c.fail("wdm.measurements", "needs measurements for both bands");
        }
        for (i, m) in w.measurements.iter().enumerate() {
            c.non_negative(&format!("wdm.measurements[{i}].stem_length_um"), m.stem_length_um);
            c.positive(&format!("wdm.measurements[{i}].wavelength_nm"), m.wavelength_nm);
            c.fraction(&format!("wdm.measurements[{i}].cross_fraction"), m.cross_fraction);
        }

        let q = &self.qpm;
        c.positive("qpm.pump_wavelength_nm", q.pump_wavelength_nm);
        c.positive("qpm.poling_period_um", q.poling_period_um);
        c.positive("qpm.interaction_length_mm", q.interaction_length_mm);
        if !q.temperature_c.is_finite() {
            c.fail("qpm.temperature_c", "must be finite");
        }
        for (name, v) in [
            ("pump", q.offsets.pump),
            ("signal", q.offsets.signal),
            ("idler", q.offsets.idler),
        ] {
            if !v.is_finite() {
                c.fail(format!("qpm.offsets.{name}"), "must be finite");
            }
        }
        if let Some(cal) = &q.calibrate {
            if !(cal.target_signal_nm > q.pump_wavelength_nm && cal.target_signal_nm < 2.0 * q.pump_wavelength_nm) {
                c.fail(
                    "qpm.calibrate.target_signal_nm",
                    format!(
                        "{} must lie between the pump wavelength and its double (signal branch)",
                        cal.target_signal_nm
                    ),
                );
            }
        }
        c.grid("qpm.poling_period_sweep_um", &q.poling_period_sweep_um);
        c.grid("qpm.temperature_sweep_c", &q.temperature_sweep_c);
        c.positive("qpm.spectrum_half_span_nm", q.spectrum_half_span_nm);
        if q.spectrum_points < 3 {
            c.fail("qpm.spectrum_points", "needs at least 3 points");
        }

        let o = &self.oracle_table;
        c.powers("oracle_table.powers_uw", &o.powers_uw);
        c.positive("oracle_table.far_delay_ns", o.far_delay_ns);
        if o.slot_offset == 0 {
            c.fail("oracle_table.slot_offset", "must be at least 1");
        }
    }

    /// Model-level checks that need the assembled objects.
    fn build(self, c: &mut Checker) -> Option<Experiment> {
        let mut model = self.source_model();
        let model_ok = [
            ("source.pump", model.pump.validate()),
            ("source.signal_stages", model.signal_channel.validate()),
            ("source.idler_stages", model.idler_channel.validate()),
            ("detectors", model.detectors.validate()),
            ("background", model.background.validate()),
        ]
        .into_iter()
        .fold(true, |ok, (path, r)| c.core(path, r).is_some() && ok);

        let mut calibration = None;
        if model_ok {
            if let Some(cal) = self.calibration.filter(|cal| cal.enabled) {
                let targets = CalibrationTargets {
                    trigger_rate: cal.trigger_rate.into(),
                    heralding_efficiency: cal.heralding_efficiency.into(),
                    car_dtau: cal.car_dtau.map(Into::into),
                    far_delay_ns: cal.far_delay_ns,
                };
                calibration = c.core("calibration", calibrate(&mut model, &targets));
            }
            let delay_checks = [
                ("power_sweep", &self.power_sweep.powers_uw, self.power_sweep.far_delay_ns),
                ("delay_scan", &self.delay_scan.powers_uw, self.delay_scan.far_delay_ns),
                ("oracle_table", &self.oracle_table.powers_uw, self.oracle_table.far_delay_ns),
            ];
            for (section, powers, far) in delay_checks {
                for (i, &p) in powers.iter().enumerate() {
                    c.core(&format!("{section}.powers_uw[{i}]"), model.point(p, 0.0));
                }
                if let Some(&p) = powers.first() {
                    let path = format!("{section}.far_delay_ns");
                    c.core(&path, model.point(p, far));
                    // The far point must sample accidentals only, also after wrapping onto a neighbouring pulse.
                    let period = model.pump.period_ns();
                    let wrapped = far - period * (far / period).round();
                    if let Some(overlap) = c.core(&path, gate_overlap(wrapped, &model.detectors.idler1)) {
                        if overlap > FAR_OVERLAP_MAX {
                            c.fail(path, format!("{far} ns still overlaps the idler gate ({overlap:.3e})"));
                        }
                    }
                }
            }
        }

        let q = &self.qpm;
        let mut dispersion = DispersionModel {
            offsets: BandOffsets {
                pump: q.offsets.pump,
                signal: q.offsets.signal,
                idler: q.offsets.idler,
            },
            ..DispersionModel::default()
        };
        let qpm = self.qpm_config();
        if c.core("qpm", qpm.validate(&dispersion)).is_some() {
            if let Some(cal) = q.calibrate {
                if let Some(v) = c.core(
                    "qpm.calibrate",
                    calibrate_offset(&dispersion, &qpm, cal.target_signal_nm, cal.band),
                ) {
                    *dispersion.offsets.get_mut(cal.band) = v;
                }
            }
            c.core("qpm", solve_signal_idler(&dispersion, &qpm));
        }

        let coupler = self.coupler(self.wdm.stem_length_um.start);
        let beat_model = c.core("wdm.geometry", coupler.validate()).and_then(|_| {
            c.core(
                "wdm.measurements",
                fit_beat_model(&self.measurements(), &coupler, self.wdm.band_half_width_nm),
            )
        });
        if let Some(m) = &beat_model {
            if m.bands.len() != 2 {
                c.fail(
                    "wdm.measurements",
                    format!("expected a signal and an idler band, found {} band(s)", m.bands.len()),
                );
            }
        }

        Some(Experiment {
            model,
            calibration,
            dispersion,
            qpm,
            coupler,
            beat_model: beat_model?,
            config: self,
        })
    }
}

fn stage(s: &StageConfig) -> Stage {
    match (s.transmission, s.loss_db_per_cm, s.length_cm) {
        (Some(t), _, _) => Stage::new(&s.name, t),
        (None, Some(db), Some(len)) => Stage::from_db_loss(&s.name, db, len),
        _ => Stage::new(&s.name, f64::NAN),
    }
}

fn check_stage(c: &mut Checker, path: &str, s: &StageConfig) {
    if s.name.trim().is_empty() {
        c.fail(format!("{path}.name"), "must not be empty");
    }
    match (s.transmission, s.loss_db_per_cm, s.length_cm) {
        (Some(t), None, None) => c.fraction(&format!("{path}.transmission"), t),
        (None, Some(db), Some(len)) => {
            c.non_negative(&format!("{path}.loss_db_per_cm"), db);
            c.non_negative(&format!("{path}.length_cm"), len);
        }
        _ => c.fail(path, "give either `transmission` or both `loss_db_per_cm` and `length_cm`"),
    }
}

fn check_offset(c: &mut Checker, path: &str, offset: u64, pulses: u64) {
    if offset == 0 {
        c.fail(path, "must be at least 1 (0 is the aligned count)");
    } else if pulses > 0 && offset >= pulses {
        c.fail(path, format!("{offset} must be smaller than run.pulses = {pulses}"));
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub pulses: Option<u64>,
    pub repeats: Option<u32>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub plots: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if let Some(p) = self.pulses {
            cfg.run.pulses = p;
        }
        if let Some(r) = self.repeats {
            cfg.run.repeats = r;
        }
        if let Some(o) = &self.out_dir {
            cfg.run.out_dir = o.clone();
        }
        if let Some(w) = self.workers {
            cfg.run.workers = w;
        }
        cfg.run.plots |= self.plots;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_prepare() {
        let e = ExperimentConfig::lab_defaults().prepare().unwrap();
        let cal = e.calibration.unwrap();
        assert!(cal.residual_transmission > 0.5 && cal.residual_transmission < 1.0);
        assert_eq!(e.beat_model.bands.len(), 2);
    }

    #[test]
    fn grid_values_are_exact_multiples() {
        let g = GridSpec {
            start: -3.0,
            stop: 3.0,
            step: 0.2,
        };
        let v = g.values();
        assert_eq!(v.len(), 31);
        assert_eq!(v[15], 0.0);
        assert!((v[30] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_pulses_is_named() {
        let mut cfg = ExperimentConfig::lab_defaults();
        cfg.run.pulses = 0;
        let err = cfg.prepare().unwrap_err();
        assert!(err.has_path("run.pulses"));
    }

    #[test]
    fn stage_needs_one_form() {
        let mut cfg = ExperimentConfig::lab_defaults();
        cfg.source.idler_stages[0].loss_db_per_cm = Some(0.1);
        assert!(cfg.prepare().unwrap_err().has_path("source.idler_stages[0]"));
    }
}
