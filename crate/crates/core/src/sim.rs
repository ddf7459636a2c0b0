//! Pulse-by-pulse Monte Carlo of one operating point.
//!
//! A run of `n` pulses is cut into blocks of [`BLOCK_SLOTS`]; block `b`
//! draws from its own substream `(seed, stream_path ++ [b])`, so blocks can
//! be simulated in any order or in parallel. Dead time and counting then
//! consume the blocks in slot order through a [`ClickPipeline`].

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::counter::{ClickRun, CountTotals, PulseSlotRecord, StreamingCounter};
use crate::detect::{BackgroundRates, DeadTimeFilter, DelaySetting, DetectionStage, DetectorSet, SlotClicks};
use crate::error::{check_fraction, Error, Result};
use crate::oracle::OracleConfig;
use crate::rng::{substream, BLOCK_SLOTS};
use crate::source::{propagate_pulse, DetectorInputs, PairNumberDistribution, PairSampler};

/// Everything needed to simulate one power/delay setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSetup {
    pub distribution: PairNumberDistribution,
    /// Signal-arm transmission up to the trigger detector.
    pub signal_transmission: f64,
    /// Idler-arm transmission up to the splitter input.
    pub idler_transmission: f64,
    pub splitter_ratio: f64,
    pub detectors: DetectorSet,
    pub delay: DelaySetting,
    pub background: BackgroundRates,
}

impl PointSetup {
    pub fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        check_fraction("signal transmission", self.signal_transmission)?;
        check_fraction("idler transmission", self.idler_transmission)?;
        check_fraction("splitter ratio", self.splitter_ratio)?;
        self.detectors.validate()?;
        self.delay.validate()?;
        if !(self.background.trigger_cps >= 0.0 && self.background.idler_cps >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "background",
                reason: "rates must be non-negative".into(),
            });
        }
        Ok(())
    }

    pub fn detection_stage(&self) -> Result<DetectionStage> {
        DetectionStage::new(&self.detectors, &self.delay, &self.background)
    }

    /// Exact per-slot model of this setup (dead time excluded).
    pub fn oracle_config(&self) -> Result<OracleConfig> {
        self.validate()?;
        let stage = self.detection_stage()?;
        let [et, e1, e2] = stage.photon_efficiencies();
        Ok(OracleConfig {
            distribution: self.distribution.clone(),
            signal_efficiency: self.signal_transmission * et,
            idler_efficiency: [self.idler_transmission * e1, self.idler_transmission * e2],
            splitter_ratio: self.splitter_ratio,
            noise: stage.noise_probabilities(),
            gate_overlap: 1.0,
        })
    }
}

/// Clicks of one slot before dead-time censoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawClick {
    pub slot: u64,
    pub clicks: SlotClicks,
}

/// Number of blocks covering `n_slots`.
pub fn block_count(n_slots: u64) -> u64 {
    n_slots.div_ceil(BLOCK_SLOTS)
}

/// Slot range of block `block` within a run of `n_slots`.
pub fn block_range(n_slots: u64, block: u64) -> core::ops::Range<u64> {
    let start = block * BLOCK_SLOTS;
    start..(start + BLOCK_SLOTS).min(n_slots)
}

#[derive(Debug, Clone)]
pub struct PulseSimulator {
    sampler: PairSampler,
    signal_transmission: f64,
    idler_transmission: f64,
    splitter_ratio: f64,
    stage: DetectionStage,
    dead_time_ns: [f64; 3],
    period_ns: f64,
}

impl PulseSimulator {
    pub fn new(setup: &PointSetup) -> Result<Self> {
        setup.validate()?;
        Ok(Self {
            sampler: setup.distribution.sampler(),
            signal_transmission: setup.signal_transmission,
            idler_transmission: setup.idler_transmission,
            splitter_ratio: setup.splitter_ratio,
            stage: setup.detection_stage()?,
            dead_time_ns: [
                setup.detectors.trigger.dead_time_ns,
                setup.detectors.idler1.dead_time_ns,
                setup.detectors.idler2.dead_time_ns,
            ],
            period_ns: setup.delay.repetition_period_ns,
        })
    }

    /// Simulates `slots` with `rng`, appending slots that clicked to `out`.
    ///
    /// Quiet slots (no pair, no uncorrelated count) are i.i.d., so runs of
    /// them are skipped with one geometric draw.
    pub fn simulate_slots<R: Rng + ?Sized>(&self, slots: core::ops::Range<u64>, rng: &mut R, out: &mut Vec<RawClick>) {
        let p0 = self.sampler.vacuum_probability();
        let noise = self.stage.noise_probabilities();
        let quiet_noise: f64 = noise.iter().map(|p| 1.0 - p).product();
        let ln_quiet = libm::log(p0) + noise.iter().map(|&p| libm::log1p(-p)).sum::<f64>();
        let p_event = -libm::expm1(ln_quiet);
        let p_pair_given_event = if p_event > 0.0 { (1.0 - p0) / p_event } else { 0.0 };
        let noise_only = 1.0 - quiet_noise;

        let mut slot = slots.start;
        while slot < slots.end {
            if p_event <= 0.0 {
                break;
            }
            if p_event < 1.0 {
                let u: f64 = rng.random();
                let gap = libm::floor(libm::log1p(-u) / ln_quiet);
                if !(gap < (slots.end - slot) as f64) {
                    break;
                }
                slot += gap as u64;
            }
            let clicks = if rng.random::<f64>() < p_pair_given_event {
                let n = self.sampler.sample_nonzero(rng);
                let photons = propagate_pulse(n, self.signal_transmission, self.idler_transmission, self.splitter_ratio, rng);
                self.stage.detect(&photons, rng)
            } else {
                let bits = noise_given_any(noise, noise_only, rng);
                self.stage.detect_with_noise(&DetectorInputs::default(), bits, rng)
            };
            if clicks.any() {
                out.push(RawClick { slot, clicks });
            }
            slot += 1;
        }
    }

    /// Block `block` of a run, drawn from substream `(seed, stream ++ [block])`.
    pub fn simulate_block(&self, seed: u64, stream: &[u64], n_slots: u64, block: u64) -> Vec<RawClick> {
        let mut path = Vec::with_capacity(stream.len() + 1);
        path.extend_from_slice(stream);
        path.push(block);
        let mut rng = substream(seed, &path);
        let mut out = Vec::new();
        self.simulate_slots(block_range(n_slots, block), &mut rng, &mut out);
        out
    }

    pub fn pipeline(&self, n_slots: u64, offsets: &[u64], keep_records: bool) -> Result<ClickPipeline> {
        Ok(ClickPipeline {
            filters: self.dead_time_ns.map(DeadTimeFilter::new),
            period_ns: self.period_ns,
            counter: StreamingCounter::new(n_slots, offsets)?,
            records: keep_records.then(Vec::new),
            n_slots,
        })
    }
}

/// Dead-time censoring and counting over blocks delivered in slot order.
#[derive(Debug, Clone)]
pub struct ClickPipeline {
    filters: [DeadTimeFilter; 3],
    period_ns: f64,
    counter: StreamingCounter,
    records: Option<Vec<PulseSlotRecord>>,
    n_slots: u64,
}

impl ClickPipeline {
    pub fn push_block(&mut self, clicks: &[RawClick]) -> Result<()> {
        for (index, raw) in clicks.iter().enumerate() {
            let t0 = raw.slot as f64 * self.period_ns;
            let mut pass = |i: usize, t: f64| self.filters[i].offer(t).map_err(|_| Error::UnorderedClicks { index });
            let trigger = match raw.clicks.trigger_ns {
                Some(dt) => pass(0, t0 + dt)?,
                None => false,
            };
            let idler1 = raw.clicks.idler1 && pass(1, t0)?;
            let idler2 = raw.clicks.idler2 && pass(2, t0)?;
            if trigger || idler1 || idler2 {
                let rec = PulseSlotRecord::new(raw.slot, trigger, idler1, idler2);
                self.counter.push(&rec)?;
                if let Some(r) = self.records.as_mut() {
                    r.push(rec);
                }
            }
        }
        Ok(())
    }

    /// Totals per requested offset, plus the censored records if kept.
    pub fn finish(self) -> (Vec<CountTotals>, Option<ClickRun>) {
        let run = self.records.map(|records| ClickRun {
            n_slots: self.n_slots,
            records,
        });
        (self.counter.finish(), run)
    }
}

/// Independent Bernoulli draws conditioned on at least one success;
/// `any` is the unconditional probability of at least one.
fn noise_given_any<R: Rng + ?Sized>(p: [f64; 3], any: f64, rng: &mut R) -> [bool; 3] {
    let mut bits = [false; 3];
    let mut rest_any = any;
    for i in 0..3 {
        if i == 2 {
            bits[2] = true;
            break;
        }
        if rng.random::<f64>() * rest_any < p[i] {
            bits[i] = true;
            for j in i + 1..3 {
                bits[j] = rng.random::<f64>() < p[j];
            }
            break;
        }
        // P(at least one among i+1..) = (rest_any - p_i) / (1 - p_i)
        rest_any = (rest_any - p[i]) / (1.0 - p[i]);
    }
    bits
}

/// Sequential run of `n_pulses`, counted at each slot offset in `offsets`.
pub fn run_point(setup: &PointSetup, seed: u64, stream: &[u64], n_pulses: u64, offsets: &[u64]) -> Result<Vec<CountTotals>> {
    let sim = PulseSimulator::new(setup)?;
    let mut pipe = sim.pipeline(n_pulses, offsets, false)?;
    for b in 0..block_count(n_pulses) {
        pipe.push_block(&sim.simulate_block(seed, stream, n_pulses, b))?;
    }
    Ok(pipe.finish().0)
}

/// Sequential run returning the censored click records.
pub fn run_records(setup: &PointSetup, seed: u64, stream: &[u64], n_pulses: u64) -> Result<ClickRun> {
    let sim = PulseSimulator::new(setup)?;
    let mut pipe = sim.pipeline(n_pulses, &[0], true)?;
    for b in 0..block_count(n_pulses) {
        pipe.push_block(&sim.simulate_block(seed, stream, n_pulses, b))?;
    }
    Ok(pipe.finish().1.unwrap_or_default())
}
