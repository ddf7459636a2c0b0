use herald::config::{ExperimentConfig, GridSpec};
use herald::experiments::{delay_scan, oracle_table, power_sweep, wdm_sweep};
use herald::runner::Runner;
use herald_core::metrics::Metric;
use herald_core::wdm::{stem_sweep, suppression_idler, suppression_signal};

#[test]
fn dark_free_scan_reports_a_lower_bound() {
    let mut cfg = ExperimentConfig::lab_defaults();
    cfg.calibration.as_mut().unwrap().enabled = false;
    cfg.detectors.trigger.dark_rate_cps = 0.0;
    cfg.run.pulses = 200_000;
    cfg.delay_scan.powers_uw = vec![20.0];
    cfg.delay_scan.far_pulses = Some(200_000);
    let exp = cfg.prepare().unwrap();
    let p = &delay_scan(&exp, &Runner::new(1).unwrap()).unwrap()[0];
    assert_eq!(p.far.double(), 0);
    assert_eq!(p.far_klyshko.value(), Some(0.0));
    assert!(matches!(p.car_dtau, Metric::LowerBound { .. }));
    assert!(!p.gate_missed);
}

#[test]
fn coarse_grid_outside_gate_is_flagged() {
    let mut cfg = ExperimentConfig::lab_defaults();
    cfg.run.pulses = 10_000;
    cfg.delay_scan.powers_uw = vec![5.0];
    cfg.delay_scan.delay_ns = GridSpec {
        start: -5.0,
        stop: 5.0,
        step: 10.0,
    };
    let exp = cfg.prepare().unwrap();
    assert!(delay_scan(&exp, &Runner::new(1).unwrap()).unwrap()[0].gate_missed);
}

#[test]
fn power_sweep_tracks_the_oracle() {
    let mut cfg = ExperimentConfig::lab_defaults();
    cfg.run.pulses = 2_000_000;
    cfg.power_sweep.powers_uw = vec![50.0];
    cfg.oracle_table.powers_uw = vec![50.0];
    for d in [&mut cfg.detectors.trigger, &mut cfg.detectors.idler1, &mut cfg.detectors.idler2] {
        d.dead_time_ns = 0.0;
    }
    let exp = cfg.prepare().unwrap();
    let mc = &power_sweep(&exp, &Runner::new(2).unwrap()).unwrap()[0];
    let exact = &oracle_table(&exp).unwrap()[0];
    let n = mc.aligned.n_slots as f64;
    let p = exact.aligned.trigger;
    let sigma = (n * p * (1.0 - p)).sqrt();
    assert!((mc.aligned.trigger as f64 - n * p).abs() < 4.0 * sigma);
    let h = mc.report.heralding.value().unwrap();
    let h0 = exact.report.heralding.value().unwrap();
    assert!((h - h0).abs() < 4.0 * mc.report.heralding.std_err().unwrap());
}

#[test]
fn repeats_pool_counts_and_give_spreads() {
    let mut cfg = ExperimentConfig::lab_defaults();
    cfg.run.pulses = 100_000;
    cfg.run.repeats = 4;
    cfg.power_sweep.powers_uw = vec![85.14];
    let exp = cfg.prepare().unwrap();
    let row = &power_sweep(&exp, &Runner::new(1).unwrap()).unwrap()[0];
    assert_eq!(row.aligned.n_slots, 400_000);
    assert_eq!(row.offset.n_slots, 4 * (100_000 - 1));
    assert!(row.repeat_sd[3].is_some_and(|sd| sd > 0.0));
}

#[test]
fn wdm_sweep_of_one_point_equals_direct_call() {
    let mut cfg = ExperimentConfig::lab_defaults();
    cfg.wdm.stem_length_um = GridSpec {
        start: 4000.0,
        stop: 4000.0,
        step: 1.0,
    };
    let exp = cfg.prepare().unwrap();
    let sweep = wdm_sweep(&exp).unwrap();
    let g = exp.config.coupler(4000.0);
    assert_eq!(sweep.rows.len(), 1);
    assert_eq!(sweep.rows[0].signal_suppression, suppression_signal(&g, &exp.beat_model).unwrap());
    assert_eq!(sweep.rows[0].idler_suppression, suppression_idler(&g, &exp.beat_model).unwrap());
    assert_eq!(sweep.rows, stem_sweep(&g, &exp.beat_model, &[4000.0]).unwrap());
}

#[test]
fn wdm_optimum_is_near_four_millimetres() {
    let exp = ExperimentConfig::lab_defaults().prepare().unwrap();
    let sweep = wdm_sweep(&exp).unwrap();
    let best = &sweep.rows[sweep.optimum.unwrap()];
    assert!((best.stem_length_um - 4000.0).abs() <= 300.0, "{}", best.stem_length_um);
    for c in &sweep.fit_checks {
        assert!((c.model - c.measured).abs() < 1e-3);
    }
}
