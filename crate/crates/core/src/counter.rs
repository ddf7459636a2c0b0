//! Pulse-synchronized coincidence counting.
//!
//! Idler clicks in slot `s + m` are matched against the trigger of slot `s`;
//! `m = 0` is the aligned case, `m >= 1` pairs uncorrelated pulses.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Range};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Click triple of one pulse slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseSlotRecord {
    pub slot: u64,
    pub trigger: bool,
    pub idler1: bool,
    pub idler2: bool,
}

impl PulseSlotRecord {
    pub fn new(slot: u64, trigger: bool, idler1: bool, idler2: bool) -> Self {
        Self {
            slot,
            trigger,
            idler1,
            idler2,
        }
    }
}

/// A run of `n_slots` pulses. Slots without any click may be omitted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClickRun {
    pub n_slots: u64,
    pub records: Vec<PulseSlotRecord>,
}

impl ClickRun {
    pub fn new(n_slots: u64, records: Vec<PulseSlotRecord>) -> Result<Self> {
        let run = Self { n_slots, records };
        run.validate()?;
        Ok(run)
    }

    /// Slot indices must be strictly increasing and below `n_slots`.
    pub fn validate(&self) -> Result<()> {
        for (i, w) in self.records.windows(2).enumerate() {
            if w[1].slot <= w[0].slot {
                return Err(Error::InvalidParameter {
                    name: "records",
                    reason: alloc::format!("slot index not strictly increasing at record {}", i + 1),
                });
            }
        }
        if let Some(last) = self.records.last() {
            if last.slot >= self.n_slots {
                return Err(Error::InvalidParameter {
                    name: "records",
                    reason: alloc::format!("slot {} beyond run length {}", last.slot, self.n_slots),
                });
            }
        }
        Ok(())
    }

    fn find(&self, slot: u64) -> Option<&PulseSlotRecord> {
        self.records
            .binary_search_by_key(&slot, |r| r.slot)
            .ok()
            .map(|i| &self.records[i])
    }
}

/// Aggregated counts at one trigger-idler slot offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountTotals {
    /// Trigger slots that could be paired (run length minus offset).
    pub n_slots: u64,
    pub trigger: u64,
    pub idler1: u64,
    pub idler2: u64,
    pub triple: u64,
    pub slot_offset: u64,
}

impl CountTotals {
    /// Two-fold coincidence sum `R_Id,1 + R_Id,2`.
    pub fn double(&self) -> u64 {
        self.idler1 + self.idler2
    }

    pub fn rates(&self, repetition_rate_hz: f64) -> Result<RateSet> {
        rates(self, repetition_rate_hz)
    }
}

impl Add for CountTotals {
    type Output = CountTotals;

    fn add(mut self, rhs: CountTotals) -> CountTotals {
        self += rhs;
        self
    }
}

impl AddAssign for CountTotals {
    fn add_assign(&mut self, rhs: CountTotals) {
        debug_assert_eq!(self.slot_offset, rhs.slot_offset);
        self.n_slots += rhs.n_slots;
        self.trigger += rhs.trigger;
        self.idler1 += rhs.idler1;
        self.idler2 += rhs.idler2;
        self.triple += rhs.triple;
    }
}

/// Counts for trigger slots in `slots`, looking ahead `offset` slots into the
/// whole run for the idler partner. Partitions of `0..n_slots - offset`
/// sum to the full [`accumulate`].
pub fn accumulate_range(run: &ClickRun, slots: Range<u64>, offset: u64) -> Result<CountTotals> {
    if run.n_slots == 0 {
        return Err(Error::EmptyRun);
    }
    if offset >= run.n_slots {
        return Err(Error::OffsetTooLarge {
            offset,
            n_slots: run.n_slots,
        });
    }
    let usable = run.n_slots - offset;
    let start = slots.start.min(usable);
    let end = slots.end.min(usable);
    let mut totals = CountTotals {
        n_slots: end.saturating_sub(start),
        slot_offset: offset,
        ..Default::default()
    };
    let first = run.records.partition_point(|r| r.slot < start);
    for rec in run.records[first..].iter().take_while(|r| r.slot < end) {
        if !rec.trigger {
            continue;
        }
        totals.trigger += 1;
        let partner = if offset == 0 {
            Some(rec)
        } else {
            run.find(rec.slot + offset)
        };
        if let Some(p) = partner {
            totals.idler1 += p.idler1 as u64;
            totals.idler2 += p.idler2 as u64;
            totals.triple += (p.idler1 && p.idler2) as u64;
        }
    }
    Ok(totals)
}

/// Counts over the whole run at slot offset `offset`.
pub fn accumulate(run: &ClickRun, offset: u64) -> Result<CountTotals> {
    accumulate_range(run, 0..run.n_slots, offset)
}

/// Single-pass counter for several slot offsets over a record stream.
///
/// Equivalent to [`accumulate`] per offset but keeps only the triggers of
/// the last `max(offsets)` slots.
#[derive(Debug, Clone)]
pub struct StreamingCounter {
    n_slots: u64,
    offsets: Vec<u64>,
    totals: Vec<CountTotals>,
    pending: VecDeque<u64>,
    horizon: u64,
    last_slot: Option<u64>,
}

impl StreamingCounter {
    pub fn new(n_slots: u64, offsets: &[u64]) -> Result<Self> {
        if n_slots == 0 {
            return Err(Error::EmptyRun);
        }
        if let Some(&offset) = offsets.iter().find(|&&m| m >= n_slots) {
            return Err(Error::OffsetTooLarge { offset, n_slots });
        }
        Ok(Self {
            n_slots,
            offsets: offsets.to_vec(),
            totals: offsets
                .iter()
                .map(|&m| CountTotals {
                    n_slots: n_slots - m,
                    slot_offset: m,
                    ..Default::default()
                })
                .collect(),
            pending: VecDeque::new(),
            horizon: offsets.iter().copied().max().unwrap_or(0),
            last_slot: None,
        })
    }

    /// Adds the next record; slots must be strictly increasing and below `n_slots`.
    pub fn push(&mut self, rec: &PulseSlotRecord) -> Result<()> {
        if self.last_slot.is_some_and(|s| rec.slot <= s) || rec.slot >= self.n_slots {
            return Err(Error::InvalidParameter {
                name: "records",
                reason: alloc::format!("slot {} out of order or beyond run length", rec.slot),
            });
        }
        self.last_slot = Some(rec.slot);
        while self.pending.front().is_some_and(|&t| t + self.horizon < rec.slot) {
            self.pending.pop_front();
        }
        let both = rec.idler1 && rec.idler2;
        if rec.idler1 || rec.idler2 {
            for &t in &self.pending {
                let lag = rec.slot - t;
                for (m, tot) in self.offsets.iter().zip(self.totals.iter_mut()) {
                    if *m == lag {
                        tot.idler1 += rec.idler1 as u64;
                        tot.idler2 += rec.idler2 as u64;
                        tot.triple += both as u64;
                    }
                }
            }
        }
        if rec.trigger {
            for (m, tot) in self.offsets.iter().zip(self.totals.iter_mut()) {
                if rec.slot + m < self.n_slots {
                    tot.trigger += 1;
                    if *m == 0 {
                        tot.idler1 += rec.idler1 as u64;
                        tot.idler2 += rec.idler2 as u64;
                        tot.triple += both as u64;
                    }
                }
            }
            if self.horizon > 0 {
                self.pending.push_back(rec.slot);
            }
        }
        Ok(())
    }

    /// Totals in the order of the requested offsets.
    pub fn finish(self) -> Vec<CountTotals> {
        self.totals
    }
}

/// Rate with its counting uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    /// Events per second.
    pub value: f64,
    /// Binomial standard error (s^-1).
    pub std_err: f64,
    /// One-sided 95 % upper limit (s^-1).
    pub upper_95: f64,
}

/// Poisson 95 % upper limit on the mean for zero observed events.
pub const ZERO_COUNT_UPPER_95: f64 = 2.995_732_273_553_991;

impl Rate {
    pub fn from_counts(count: u64, n_slots: u64, repetition_rate_hz: f64) -> Self {
        let n = n_slots as f64;
        let p = count as f64 / n;
        let std_err = libm::sqrt(p * (1.0 - p) / n) * repetition_rate_hz;
        let upper_95 = if count == 0 {
            ZERO_COUNT_UPPER_95 / n * repetition_rate_hz
        } else {
            (p + 1.645 * libm::sqrt(p * (1.0 - p) / n)) * repetition_rate_hz
        };
        Self {
            value: p * repetition_rate_hz,
            std_err,
            upper_95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSet {
    pub trigger: Rate,
    pub idler1: Rate,
    pub idler2: Rate,
    pub triple: Rate,
}

pub fn rates(totals: &CountTotals, repetition_rate_hz: f64) -> Result<RateSet> {
    if totals.n_slots == 0 {
        return Err(Error::EmptyRun);
    }
    let r = |c| Rate::from_counts(c, totals.n_slots, repetition_rate_hz);
    Ok(RateSet {
        trigger: r(totals.trigger),
        idler1: r(totals.idler1),
        idler2: r(totals.idler2),
        triple: r(totals.triple),
    })
}
