use herald::config::{ExperimentConfig, DEFAULT_CONFIG};

fn defaults() -> ExperimentConfig {
    ExperimentConfig::lab_defaults()
}

#[test]
fn every_violation_is_reported() {
    let mut cfg = defaults();
    cfg.run.pulses = 0;
    cfg.source.splitter_ratio = 1.5;
    cfg.detectors.idler2.efficiency = -0.1;
    cfg.power_sweep.powers_uw.clear();
    cfg.wdm.port_gap_um = 5.0;
    cfg.qpm.spectrum_points = 1;
    let report = cfg.prepare().unwrap_err();
    for path in [
        "run.pulses",
        "source.splitter_ratio",
        "detectors.idler2.efficiency",
        "power_sweep.powers_uw",
        "wdm.port_gap_um",
        "qpm.spectrum_points",
    ] {
        assert!(report.has_path(path), "missing diagnostic for {path}:\n{report}");
    }
}

#[test]
fn unknown_field_is_rejected() {
    let text = DEFAULT_CONFIG.replace("[run]\n", "[run]\nsede = 4\n");
    let report = ExperimentConfig::from_toml(&text).unwrap_err();
    assert!(report.to_string().contains("sede"), "{report}");
}

#[test]
fn delay_grid_must_cover_two_ns() {
    let mut cfg = defaults();
    cfg.delay_scan.delay_ns.start = -1.0;
    assert!(cfg.prepare().unwrap_err().has_path("delay_scan.delay_ns"));
}

#[test]
fn unreachable_calibration_is_a_config_error() {
    let mut cfg = defaults();
    cfg.calibration.as_mut().unwrap().heralding_efficiency.value = 0.95;
    assert!(cfg.prepare().unwrap_err().has_path("calibration"));
}

#[test]
fn far_delay_inside_the_gate_is_rejected() {
    for far in [0.5, 100.0] {
        let mut cfg = defaults();
        cfg.power_sweep.far_delay_ns = far;
        assert!(cfg.prepare().unwrap_err().has_path("power_sweep.far_delay_ns"), "{far}");
    }
    let mut cfg = defaults();
    cfg.power_sweep.far_delay_ns = 80.0;
    assert!(cfg.prepare().is_ok());
}

#[test]
fn slot_offset_must_fit_the_run() {
    let mut cfg = defaults();
    cfg.run.pulses = 10;
    cfg.power_sweep.slot_offset = 10;
    assert!(cfg.prepare().unwrap_err().has_path("power_sweep.slot_offset"));
}

#[test]
fn single_band_measurements_are_rejected() {
    let mut cfg = defaults();
    cfg.wdm.measurements.retain(|m| m.wavelength_nm > 1000.0);
    assert!(cfg.prepare().unwrap_err().has_path("wdm.measurements"));
}

#[test]
fn calibration_can_be_disabled() {
    let mut cfg = defaults();
    cfg.calibration.as_mut().unwrap().enabled = false;
    let exp = cfg.prepare().unwrap();
    assert!(exp.calibration.is_none());
    assert_eq!(exp.model.background.idler_cps, 0.0);
}

#[test]
fn defaults_round_trip_through_toml() {
    let cfg = defaults();
    let text = toml::to_string(&cfg).unwrap();
    assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
}
