//! Peak-width helpers for sampled profiles.

/// Full width at half maximum of a sampled single-peaked profile, using
/// linear interpolation between the samples that straddle half maximum on
/// each side of the highest sample. `xs` must be increasing.
///
/// `floor` is subtracted before locating half maximum. Returns `None` when
/// either side never drops below half maximum inside the grid.
pub fn fwhm(xs: &[f64], ys: &[f64], floor: f64) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return None;
    }
    let (peak_idx, peak) = ys
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &y)| if y > acc.1 { (i, y) } else { acc });
    let half = floor + 0.5 * (peak - floor);
    if !(peak > floor) {
        return None;
    }
    let cross = |i: usize, j: usize| {
        let (x0, y0, x1, y1) = (xs[i], ys[i], xs[j], ys[j]);
        x0 + (half - y0) * (x1 - x0) / (y1 - y0)
    };
    let mut left = None;
    for i in (0..peak_idx).rev() {
        if ys[i] < half {
            left = Some(cross(i, i + 1));
            break;
        }
    }
    let mut right = None;
    for i in peak_idx + 1..ys.len() {
        if ys[i] < half {
            right = Some(cross(i - 1, i));
            break;
        }
    }
    Some(right? - left?)
}
