use alloc::string::String;

/// Errors raised by the core model.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{quantity} = {value} is outside the valid range [{min}, {max}]")]
    OutOfRange {
        quantity: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no phase-matching root in the search interval (mismatch spans {min_mismatch:.6e} .. {max_mismatch:.6e} rad/um)")]
    NoPhaseMatch { min_mismatch: f64, max_mismatch: f64 },

    #[error("spectrum grid does not cover the phase-matching peak")]
    GridMissesPeak,

    #[error("wavelength {wavelength_nm} nm is not covered by a fitted coupler band")]
    UnfittedBand { wavelength_nm: f64 },

    #[error("degenerate fit input: {0}")]
    DegenerateFit(&'static str),

    #[error("gate overlap is undefined for a free-running detector")]
    FreeRunningGate,

    #[error("click times are not ordered at index {index}")]
    UnorderedClicks { index: usize },

    #[error("slot offset {offset} is not smaller than the run length {n_slots}")]
    OffsetTooLarge { offset: u64, n_slots: u64 },

    #[error("run contains no slots")]
    EmptyRun,

    #[error("calibration failed: {0}")]
    Calibration(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_range(quantity: &'static str, value: f64, min: f64, max: f64) -> Result<()> {
    if value.is_finite() && value >= min && value <= max {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            quantity,
            value,
            min,
            max,
        })
    }
}

pub(crate) fn check_fraction(quantity: &'static str, value: f64) -> Result<()> {
    check_range(quantity, value, 0.0, 1.0)
}
