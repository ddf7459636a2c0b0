//! Power-parametrized source: pump map, arms, detectors and backgrounds,
//! turned into a [`PointSetup`] for any pump power and gate delay.

use alloc::vec;

use serde::{Deserialize, Serialize};

use crate::detect::{BackgroundRates, DelaySetting, DetectorModel, DetectorSet};
use crate::error::{Error, Result};
use crate::metrics::ReportParams;
use crate::sim::PointSetup;
use crate::source::{OpticalChannel, PairLaw, PairNumberDistribution, PumpPowerMap, Stage};

/// Name of the signal-arm stage adjusted by calibration.
pub const RESIDUAL_STAGE: &str = "residual";

/// Uncorrelated count rates (s^-1) as functions of pump power (uW).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BackgroundModel {
    pub trigger_cps_per_uw: f64,
    pub idler_cps: f64,
    pub idler_cps_per_uw: f64,
}

impl BackgroundModel {
    pub fn at(&self, power_uw: f64) -> BackgroundRates {
        BackgroundRates {
            trigger_cps: self.trigger_cps_per_uw * power_uw,
            idler_cps: self.idler_cps + self.idler_cps_per_uw * power_uw,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("trigger_cps_per_uw", self.trigger_cps_per_uw),
            ("idler_cps", self.idler_cps),
            ("idler_cps_per_uw", self.idler_cps_per_uw),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: alloc::format!("{v} must be finite and non-negative"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    pub law: PairLaw,
    pub pump: PumpPowerMap,
    pub signal_channel: OpticalChannel,
    pub idler_channel: OpticalChannel,
    pub splitter_ratio: f64,
    pub detectors: DetectorSet,
    pub background: BackgroundModel,
}

impl SourceModel {
    /// Laboratory setup before calibration: residual signal loss 1 and no
    /// uncorrelated background beyond the trigger darks.
    pub fn lab_baseline() -> Self {
        Self {
            law: PairLaw::Thermal,
            pump: PumpPowerMap::through_point(85.14, 0.24, 10e6),
            signal_channel: OpticalChannel::new(vec![
                Stage::from_db_loss("waveguide", 0.07, 2.6),
                Stage::new("wdm_original_port", 0.965),
                Stage::new("rg715", 0.97),
                Stage::new("bandpass", 0.995),
                Stage::new("needle_filter", 0.78),
                Stage::new(RESIDUAL_STAGE, 1.0),
            ]),
            idler_channel: OpticalChannel::new(vec![
                Stage::new("wdm_cross_port", 0.991),
                Stage::new("endface_to_detector", 0.663),
            ]),
            splitter_ratio: 0.5,
            detectors: DetectorSet {
                trigger: DetectorModel::free_running(0.55, 238.0, 50.0),
                idler1: DetectorModel::gated(0.23, 1.16, 2.5),
                idler2: DetectorModel::gated(0.23, 1.16, 2.5),
            },
            background: BackgroundModel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pump.validate()?;
        self.signal_channel.validate()?;
        self.idler_channel.validate()?;
        crate::error::check_fraction("splitter ratio", self.splitter_ratio)?;
        self.detectors.validate()?;
        self.background.validate()
    }

    pub fn distribution(&self, power_uw: f64) -> Result<PairNumberDistribution> {
        PairNumberDistribution::with_auto_cutoff(self.law, self.pump.mean_pairs_from_power(power_uw)?)
    }

    /// Operating point at `power_uw` with the idler gates shifted by `delay_ns`.
    pub fn point(&self, power_uw: f64, delay_ns: f64) -> Result<PointSetup> {
        self.validate()?;
        let setup = PointSetup {
            distribution: self.distribution(power_uw)?,
            signal_transmission: self.signal_channel.transmission(),
            idler_transmission: self.idler_channel.transmission(),
            splitter_ratio: self.splitter_ratio,
            detectors: self.detectors.clone(),
            delay: DelaySetting {
                delay_ns,
                repetition_period_ns: self.pump.period_ns(),
            },
            background: self.background.at(power_uw),
        };
        setup.validate()?;
        Ok(setup)
    }

    pub fn report_params(&self) -> ReportParams {
        ReportParams {
            idler_detector_efficiency: self.detectors.idler1.efficiency,
            signal_transmission: self.signal_channel.transmission(),
            trigger_efficiency: self.detectors.trigger.efficiency,
        }
    }

    /// Idler transmission times detector efficiency.
    pub fn idler_total_efficiency(&self) -> f64 {
        self.idler_channel.transmission() * self.detectors.idler1.efficiency
    }
}
