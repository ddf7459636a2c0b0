//! Versioned CSV tables and the matching SVG charts.
//!
//! Every CSV starts with one comment line `# herald <kind> v<N> <meta>`,
//! followed by a header row. Floats use the shortest round-trip form
//! (exponent notation outside [1e-4, 1e15)), so identical results give
//! identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use herald_core::counter::CountTotals;
use herald_core::metrics::{Metric, MetricsReport};
use herald_core::wdm::Decibels;

use crate::experiments::{DelayProfile, OracleRow, PowerRow, QpmCurves, WdmSweep};
use crate::plot::{line_chart, Chart, Scale, Series};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("plot failed: {0}")]
    Plot(String),
}

pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }
}

pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v != 0.0 && !(1e-4..1e15).contains(&v.abs()) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

fn db(d: Decibels) -> String {
    num(d.as_f64())
}

/// Value and standard error cells; a bound keeps its value and leaves the error empty.
fn metric_cells(m: &Metric) -> [String; 2] {
    match *m {
        Metric::Value { value, std_err } => [num(value), num(std_err)],
        Metric::LowerBound { value, .. } => [num(value), String::new()],
        Metric::Undefined => [String::new(), String::new()],
    }
}

/// `name:lower_bound` / `name:undefined` markers joined by `;`.
fn metric_flags(report: &MetricsReport) -> String {
    report
        .entries()
        .iter()
        .filter_map(|(name, m)| match m {
            Metric::Value { .. } => None,
            Metric::LowerBound { .. } => Some(format!("{name}:lower_bound")),
            Metric::Undefined => Some(format!("{name}:undefined")),
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn rate(count: u64, n_slots: u64, rep_hz: f64) -> f64 {
    if n_slots == 0 {
        f64::NAN
    } else {
        count as f64 * rep_hz / n_slots as f64
    }
}

fn rate_cells(t: &CountTotals, rep_hz: f64) -> [String; 4] {
    [t.trigger, t.idler1, t.idler2, t.triple].map(|c| num(rate(c, t.n_slots, rep_hz)))
}

pub fn write_csv(path: &Path, kind: &str, meta: &str, table: &Table) -> Result<(), OutputError> {
    let io = |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    };
    let csv_err = |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut file = BufWriter::new(File::create(path).map_err(io)?);
    let meta = if meta.is_empty() { String::new() } else { format!(" {meta}") };
    writeln!(file, "# herald {kind} v{SCHEMA_VERSION}{meta}").map_err(io)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(&table.headers).map_err(csv_err)?;
    for row in &table.rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

/// Run parameters recorded in the comment line of Monte Carlo tables.
#[derive(Debug, Clone, Copy)]
pub struct RunMeta {
    pub seed: u64,
    pub pulses: u64,
    pub repeats: u32,
}

impl RunMeta {
    fn render(&self) -> String {
        format!("seed={} pulses={} repeats={}", self.seed, self.pulses, self.repeats)
    }
}

/// Writes tables and, when `plots` is set, charts into `dir`. Returns the files written.
pub struct Writer {
    pub dir: PathBuf,
    pub plots: bool,
    pub written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path, plots: bool) -> Result<Self, OutputError> {
        std::fs::create_dir_all(dir).map_err(|source| OutputError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            plots,
            written: Vec::new(),
        })
    }

    fn csv(&mut self, name: &str, kind: &str, meta: &str, table: &Table) -> Result<(), OutputError> {
        let path = self.dir.join(name);
        write_csv(&path, kind, meta, table)?;
        self.written.push(path);
        Ok(())
    }

    fn chart(&mut self, name: &str, chart: &Chart, series: &[Series]) -> Result<(), OutputError> {
        if !self.plots {
            return Ok(());
        }
        let path = self.dir.join(name);
        line_chart(&path, chart, series).map_err(OutputError::Plot)?;
        self.written.push(path);
        Ok(())
    }

    pub fn power_sweep(&mut self, rows: &[PowerRow], rep_hz: f64, meta: RunMeta) -> Result<(), OutputError> {
        let names: Vec<&str> = rows
            .first()
            .map(|r| r.report.entries().map(|(n, _)| n).to_vec())
            .unwrap_or_default();
        let mut headers: Vec<String> = ["power_uw", "mu", "n_slots", "R_Si_cps", "R_Id1_cps", "R_Id2_cps", "R_c_cps"]
            .into_iter()
            .map(String::from)
            .collect();
        for n in &names {
            headers.extend([n.to_string(), format!("{n}_err"), format!("{n}_sd")]);
        }
        headers.push("flags".into());
        let mut t = Table::new(headers);
        for r in rows {
            let mut row = vec![num(r.power_uw), num(r.mean_pairs), r.aligned.n_slots.to_string()];
            row.extend(rate_cells(&r.aligned, rep_hz));
            for (k, (_, m)) in r.report.entries().iter().enumerate() {
                row.extend(metric_cells(m));
                row.push(opt(r.repeat_sd[k]));
            }
            row.push(metric_flags(&r.report));
            t.rows.push(row);
        }
        self.csv("power_sweep.csv", "power-sweep", &meta.render(), &t)?;

        let pw = |f: &dyn Fn(&PowerRow) -> Option<f64>| -> Vec<(f64, f64)> {
            rows.iter().filter_map(|r| Some((r.power_uw, f(r)?))).collect()
        };
        let hz = |c: u64, n: u64| Some(rate(c, n, rep_hz));
        self.chart(
            "power_sweep_rates.svg",
            &Chart {
                title: "Count rates",
                x_label: "pump power (uW)",
                y_label: "rate (1/s)",
                x_scale: Scale::Log10,
                y_scale: Scale::Log10,
            },
            &[
                Series::new("R_Si", pw(&|r| hz(r.aligned.trigger, r.aligned.n_slots))),
                Series::new("R_Id,1", pw(&|r| hz(r.aligned.idler1, r.aligned.n_slots))),
                Series::new("R_Id,2", pw(&|r| hz(r.aligned.idler2, r.aligned.n_slots))),
                Series::new("R_c", pw(&|r| hz(r.aligned.triple, r.aligned.n_slots))),
            ],
        )?;
        self.chart(
            "power_sweep_efficiency.svg",
            &Chart {
                title: "Klyshko and heralding efficiency",
                x_label: "pump power (uW)",
                y_label: "efficiency",
                x_scale: Scale::Log10,
                y_scale: Scale::Linear,
            },
            &[
                Series::new("eta_K", pw(&|r| r.report.klyshko.value())),
                Series::new("eta_H", pw(&|r| r.report.heralding.value())),
            ],
        )?;
        self.chart(
            "power_sweep_car.svg",
            &Chart {
                title: "Coincidence-to-accidentals ratios",
                x_label: "pump power (uW)",
                y_label: "CAR",
                x_scale: Scale::Log10,
                y_scale: Scale::Log10,
            },
            &[
                Series::new("CAR_dtau", pw(&|r| r.report.car_dtau.value())),
                Series::new("CAR_rep", pw(&|r| r.report.car_rep.value())),
                Series::new("CAR_HOP", pw(&|r| r.report.car_hop.value())),
            ],
        )?;
        self.chart(
            "power_sweep_brightness.svg",
            &Chart {
                title: "Mean pairs per pulse",
                x_label: "pump power (uW)",
                y_label: "mu",
                x_scale: Scale::Linear,
                y_scale: Scale::Linear,
            },
            &[
                Series::new("estimated", pw(&|r| r.report.mean_pairs.value())),
                Series::new("configured", pw(&|r| Some(r.mean_pairs))),
            ],
        )
    }

    pub fn delay_scan(&mut self, profiles: &[DelayProfile], rep_hz: f64, meta: RunMeta) -> Result<(), OutputError> {
        let mut t = Table::new([
            "power_uw",
            "delay_ns",
            "gate_overlap",
            "n_slots",
            "R_Si_cps",
            "R_Id1_cps",
            "R_Id2_cps",
            "R_c_cps",
            "eta_K",
            "eta_K_err",
        ]);
        for p in profiles {
            for q in &p.points {
                let mut row = vec![num(p.power_uw), num(q.delay_ns), num(q.gate_overlap), q.totals.n_slots.to_string()];
                row.extend(rate_cells(&q.totals, rep_hz));
                row.extend(metric_cells(&q.klyshko));
                t.rows.push(row);
            }
        }
        self.csv("delay_scan.csv", "delay-scan", &meta.render(), &t)?;

        let mut s = Table::new([
            "power_uw",
            "fwhm_ns",
            "far_delay_ns",
            "far_n_slots",
            "far_eta_K",
            "far_eta_K_err",
            "car_dtau",
            "car_dtau_err",
            "car_dtau_kind",
            "output_noise_factor",
            "warning",
        ]);
        for p in profiles {
            let kind = match p.car_dtau {
                Metric::Value { .. } => "value",
                Metric::LowerBound { .. } => "lower_bound",
                Metric::Undefined => "undefined",
            };
            let mut row = vec![num(p.power_uw), opt(p.fwhm_ns), num(p.far_delay_ns), p.far.n_slots.to_string()];
            row.extend(metric_cells(&p.far_klyshko));
            row.extend(metric_cells(&p.car_dtau));
            row.push(kind.into());
            row.push(opt(p.output_noise_factor.value()));
            row.push(if p.gate_missed { "grid_outside_gate".into() } else { String::new() });
            s.rows.push(row);
        }
        self.csv("delay_scan_summary.csv", "delay-scan-summary", &meta.render(), &s)?;

        let series: Vec<Series> = profiles
            .iter()
            .map(|p| {
                Series::new(
                    format!("{} uW", num(p.power_uw)),
                    p.points.iter().filter_map(|q| Some((q.delay_ns, q.klyshko.value()?))).collect(),
                )
            })
            .collect();
        self.chart(
            "delay_scan.svg",
            &Chart {
                title: "Klyshko efficiency versus gate delay",
                x_label: "delay (ns)",
                y_label: "eta_K",
                x_scale: Scale::Linear,
                y_scale: Scale::Linear,
            },
            &series,
        )
    }

    pub fn oracle_table(&mut self, rows: &[OracleRow]) -> Result<(), OutputError> {
        let mut headers: Vec<String> = [
            "power_uw",
            "mu",
            "p_trigger",
            "p_trigger_idler1",
            "p_trigger_idler2",
            "p_triple",
            "p_offset_double",
            "p_shifted_double",
            "truncation_mass",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        if let Some(r) = rows.first() {
            headers.extend(r.report.entries().iter().map(|(n, _)| n.to_string()));
        }
        let mut t = Table::new(headers);
        for r in rows {
            let a = &r.aligned;
            let mut row = vec![
                num(r.power_uw),
                num(r.mean_pairs),
                num(a.trigger),
                num(a.trigger_idler1),
                num(a.trigger_idler2),
                num(a.triple),
                num(r.offset.trigger_idler1 + r.offset.trigger_idler2),
                num(r.shifted.trigger_idler1 + r.shifted.trigger_idler2),
                num(a.truncation_mass),
            ];
            row.extend(r.report.entries().iter().map(|(_, m)| opt(m.value())));
            t.rows.push(row);
        }
        self.csv("oracle_table.csv", "oracle-table", "", &t)
    }

    pub fn wdm_sweep(&mut self, sweep: &WdmSweep) -> Result<(), OutputError> {
        let mut t = Table::new(["L_C_um", "S_s_dB", "S_i_dB", "eta_s", "eta_i", "eta_product", "optimum"]);
        for (i, r) in sweep.rows.iter().enumerate() {
            t.rows.push(vec![
                num(r.stem_length_um),
                db(r.signal_suppression),
                db(r.idler_suppression),
                num(r.eta_signal),
                num(r.eta_idler),
                num(r.eta_signal * r.eta_idler),
                if sweep.optimum == Some(i) { "1".into() } else { "0".into() },
            ]);
        }
        self.csv("wdm_sweep.csv", "wdm-sweep", "", &t)?;

        let mut f = Table::new(["center_nm", "half_width_nm", "kappa0_rad_per_um", "d_decay_um"]);
        for b in &sweep.model.bands {
            f.rows.push(vec![num(b.center_nm), num(b.half_width_nm), num(b.kappa0), num(b.d_decay_um)]);
        }
        self.csv("wdm_fit.csv", "wdm-fit", "", &f)?;

        let mut c = Table::new(["L_C_um", "wavelength_nm", "measured_cross", "model_cross", "residual"]);
        for k in &sweep.fit_checks {
            c.rows.push(vec![
                num(k.stem_length_um),
                num(k.wavelength_nm),
                num(k.measured),
                num(k.model),
                num(k.model - k.measured),
            ]);
        }
        self.csv("wdm_fit_check.csv", "wdm-fit-check", "", &c)?;

        let pick = |f: &dyn Fn(&herald_core::wdm::StemSweepRow) -> f64| -> Vec<(f64, f64)> {
            sweep.rows.iter().map(|r| (r.stem_length_um, f(r))).collect()
        };
        self.chart(
            "wdm_sweep.svg",
            &Chart {
                title: "Port suppression versus stem length",
                x_label: "L_C (um)",
                y_label: "suppression (dB)",
                x_scale: Scale::Linear,
                y_scale: Scale::Linear,
            },
            &[
                Series::new("S_s", pick(&|r| r.signal_suppression.as_f64())),
                Series::new("S_i", pick(&|r| r.idler_suppression.as_f64())),
            ],
        )?;
        self.chart(
            "wdm_efficiency.svg",
            &Chart {
                title: "Demultiplexing efficiency versus stem length",
                x_label: "L_C (um)",
                y_label: "fraction",
                x_scale: Scale::Linear,
                y_scale: Scale::Linear,
            },
            &[
                Series::new("eta_s", pick(&|r| r.eta_signal)),
                Series::new("eta_i", pick(&|r| r.eta_idler)),
            ],
        )
    }

    pub fn qpm_curves(&mut self, c: &QpmCurves) -> Result<(), OutputError> {
        let op = &c.operating_point;
        let meta = format!(
            "signal_nm={} idler_nm={}",
            num(op.signal_wavelength_nm),
            num(op.idler_wavelength_nm)
        );
        for (name, kind, var, curve) in [
            ("qpm_period.csv", "qpm-period", "poling_period_um", &c.period),
            ("qpm_temperature.csv", "qpm-temperature", "temperature_c", &c.temperature),
        ] {
            let mut t = Table::new([var, "signal_nm", "idler_nm", "residual_mismatch", "fwhm_nm", "status"]);
            for p in curve {
                t.rows.push(match &p.solution {
                    Ok(s) => vec![
                        num(p.sweep_value),
                        num(s.signal_wavelength_nm),
                        num(s.idler_wavelength_nm),
                        num(s.residual_mismatch),
                        num(s.spectral_fwhm_nm),
                        "ok".into(),
                    ],
                    Err(e) => vec![
                        num(p.sweep_value),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        e.to_string(),
                    ],
                });
            }
            self.csv(name, kind, &meta, &t)?;
        }
        let mut s = Table::new(["signal_nm", "idler_nm", "intensity"]);
        for &(ls, li, y) in &c.spectrum {
            s.rows.push(vec![num(ls), num(li), num(y)]);
        }
        self.csv("qpm_spectrum.csv", "qpm-spectrum", &meta, &s)?;

        let tuned = |curve: &[herald_core::qpm::TuningPoint], idler: bool| -> Vec<(f64, f64)> {
            curve
                .iter()
                .filter_map(|p| {
                    let s = p.solution.as_ref().ok()?;
                    Some((p.sweep_value, if idler { s.idler_wavelength_nm } else { s.signal_wavelength_nm }))
                })
                .collect()
        };
        for (name, title, x_label, curve) in [
            ("qpm_period.svg", "Tuning with poling period", "poling period (um)", &c.period),
            ("qpm_temperature.svg", "Tuning with temperature", "temperature (degC)", &c.temperature),
        ] {
            self.chart(
                name,
                &Chart {
                    title,
                    x_label,
                    y_label: "wavelength (nm)",
                    x_scale: Scale::Linear,
                    y_scale: Scale::Linear,
                },
                &[Series::new("signal", tuned(curve, false)), Series::new("idler", tuned(curve, true))],
            )?;
        }
        self.chart(
            "qpm_spectrum.svg",
            &Chart {
                title: "Phase-matching spectrum",
                x_label: "signal wavelength (nm)",
                y_label: "normalized intensity",
                x_scale: Scale::Linear,
                y_scale: Scale::Linear,
            },
            &[Series::new("sinc^2", c.spectrum.iter().map(|&(x, _, y)| (x, y)).collect())],
        )
    }
}
