//! S-bend directional-coupler demultiplexer.
//!
//! The supermode beat `kappa(lambda, d) = kappa0 * exp(-d / d_decay)` is
//! integrated along the gap profile `d(z)`: raised-cosine approach bend,
//! straight stem at the minimum gap, mirrored exit bend. Power in the cross
//! port is `sin^2(dphi / 2)`. Lengths in um, wavelengths in nm.

use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplerGeometry {
    pub stem_length_um: f64,
    pub stem_gap_um: f64,
    pub port_gap_um: f64,
    /// Length of each raised-cosine bend.
    pub bend_length_um: f64,
}

impl CouplerGeometry {
    /// Bend length whose peak curvature matches `min_radius_um` for a
    /// raised-cosine offset of half the gap change on each guide.
    pub fn with_bend_radius(stem_length_um: f64, stem_gap_um: f64, port_gap_um: f64, min_radius_um: f64) -> Self {
        let offset = 0.5 * (port_gap_um - stem_gap_um);
        let bend_length_um = libm::sqrt(min_radius_um * PI * PI * offset / 2.0);
        Self {
            stem_length_um,
            stem_gap_um,
            port_gap_um,
            bend_length_um,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.into(),
            })
        };
        if !(self.stem_length_um >= 0.0 && self.stem_length_um.is_finite()) {
            return bad("stem_length_um", "must be finite and non-negative");
        }
        if !(self.stem_gap_um > 0.0 && self.stem_gap_um.is_finite()) {
            return bad("stem_gap_um", "must be positive");
        }
        if !(self.port_gap_um >= self.stem_gap_um && self.port_gap_um.is_finite()) {
            return bad("port_gap_um", "must be finite and at least the stem gap");
        }
        if !(self.bend_length_um >= 0.0 && self.bend_length_um.is_finite()) {
            return bad("bend_length_um", "must be finite and non-negative");
        }
        Ok(())
    }

    pub fn total_length_um(&self) -> f64 {
        2.0 * self.bend_length_um + self.stem_length_um
    }

    /// Gap at distance `u` from the start of a bend, `u` in `[0, bend_length]`.
    fn bend_gap(&self, u: f64) -> f64 {
        let s = (u / self.bend_length_um).clamp(0.0, 1.0);
        self.stem_gap_um + (self.port_gap_um - self.stem_gap_um) * 0.5 * (1.0 + libm::cos(PI * s))
    }

    /// Center-to-center gap at position `z` along the device.
    pub fn gap_at(&self, z: f64) -> f64 {
        let lb = self.bend_length_um;
        if z <= 0.0 {
            self.port_gap_um
        } else if z < lb {
            self.bend_gap(z)
        } else if z <= lb + self.stem_length_um {
            self.stem_gap_um
        } else if z < self.total_length_um() {
            self.bend_gap(self.total_length_um() - z)
        } else {
            self.port_gap_um
        }
    }

    /// Stem length equivalent of both bends for a given decay length:
    /// `2 * int exp(-(d(u) - d0) / d_decay) du`.
    pub fn bend_equivalent_length(&self, d_decay_um: f64) -> f64 {
        if self.bend_length_um == 0.0 {
            return 0.0;
        }
        let d0 = self.stem_gap_um;
        2.0 * simpson(|u| libm::exp(-(self.bend_gap(u) - d0) / d_decay_um), 0.0, self.bend_length_um, BEND_INTERVALS)
    }
}

const BEND_INTERVALS: usize = 2048;

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// Beat law of one wavelength band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatBand {
    pub center_nm: f64,
    pub half_width_nm: f64,
    /// rad/um at zero gap.
    pub kappa0: f64,
    pub d_decay_um: f64,
}

impl BeatBand {
    pub fn contains(&self, wavelength_nm: f64) -> bool {
        (wavelength_nm - self.center_nm).abs() <= self.half_width_nm
    }

    pub fn kappa(&self, gap_um: f64) -> f64 {
        self.kappa0 * libm::exp(-gap_um / self.d_decay_um)
    }
}

/// Fitted beat laws, sorted by band center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeBeatModel {
    pub bands: Vec<BeatBand>,
}

impl ModeBeatModel {
    pub fn band(&self, wavelength_nm: f64) -> Result<&BeatBand> {
        self.bands
            .iter()
            .find(|b| b.contains(wavelength_nm))
            .ok_or(Error::UnfittedBand { wavelength_nm })
    }

    pub fn kappa(&self, wavelength_nm: f64, gap_um: f64) -> Result<f64> {
        Ok(self.band(wavelength_nm)?.kappa(gap_um))
    }

    /// Shortest-wavelength band.
    pub fn signal(&self) -> Result<&BeatBand> {
        self.bands.first().ok_or(Error::DegenerateFit("model has no bands"))
    }

    /// Longest-wavelength band; distinct from the signal band.
    pub fn idler(&self) -> Result<&BeatBand> {
        match self.bands.len() {
            0 | 1 => Err(Error::DegenerateFit("model needs a signal and an idler band")),
            n => Ok(&self.bands[n - 1]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for b in &self.bands {
            if !(b.kappa0 > 0.0 && b.kappa0.is_finite() && b.d_decay_um > 0.0 && b.d_decay_um.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "beat band",
                    reason: alloc::format!("kappa0 and d_decay must be positive at {} nm", b.center_nm),
                });
            }
        }
        if self.bands.windows(2).any(|w| w[0].center_nm >= w[1].center_nm) {
            return Err(Error::InvalidParameter {
                name: "beat bands",
                reason: "band centers must be strictly increasing".into(),
            });
        }
        Ok(())
    }
}

/// Accumulated supermode phase difference over bends and stem.
pub fn phase_difference(geom: &CouplerGeometry, model: &ModeBeatModel, wavelength_nm: f64) -> Result<f64> {
    let band = model.band(wavelength_nm)?;
    let stem = band.kappa(geom.stem_gap_um) * geom.stem_length_um;
    let bends = if geom.bend_length_um > 0.0 {
        2.0 * simpson(|u| band.kappa(geom.bend_gap(u)), 0.0, geom.bend_length_um, BEND_INTERVALS)
    } else {
        0.0
    };
    Ok(stem + bends)
}

/// Fraction of input power leaving through the cross port.
pub fn cross_coupling_fraction(geom: &CouplerGeometry, model: &ModeBeatModel, wavelength_nm: f64) -> Result<f64> {
    let s = libm::sin(0.5 * phase_difference(geom, model, wavelength_nm)?);
    Ok(s * s)
}

/// Port power ratio in dB. Ratios of exactly zero or infinity are kept apart
/// from finite values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Decibels {
    Finite(f64),
    NegativeInfinity,
    PositiveInfinity,
}

impl Decibels {
    pub fn ratio(numerator: f64, denominator: f64) -> Self {
        match (numerator == 0.0, denominator == 0.0) {
            (true, _) => Decibels::NegativeInfinity,
            (false, true) => Decibels::PositiveInfinity,
            _ => Decibels::Finite(10.0 * libm::log10(numerator / denominator)),
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Decibels::Finite(v) => v,
            Decibels::NegativeInfinity => f64::NEG_INFINITY,
            Decibels::PositiveInfinity => f64::INFINITY,
        }
    }
}

/// Signal power in the cross port relative to the original port.
pub fn suppression_signal(geom: &CouplerGeometry, model: &ModeBeatModel) -> Result<Decibels> {
    let x = cross_coupling_fraction(geom, model, model.signal()?.center_nm)?;
    Ok(Decibels::ratio(x, 1.0 - x))
}

/// Idler power in the original port relative to the cross port.
pub fn suppression_idler(geom: &CouplerGeometry, model: &ModeBeatModel) -> Result<Decibels> {
    let x = cross_coupling_fraction(geom, model, model.idler()?.center_nm)?;
    Ok(Decibels::ratio(1.0 - x, x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingMeasurement {
    pub stem_length_um: f64,
    pub wavelength_nm: f64,
    pub cross_fraction: f64,
}

/// Two-parameter sin^2 law of one band: `sin^2(kappa_stem (L + extra) / 2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StemLaw {
    pub kappa_stem: f64,
    pub extra_length_um: f64,
}

impl StemLaw {
    pub fn fraction(&self, stem_length_um: f64) -> f64 {
        let s = libm::sin(0.5 * self.kappa_stem * (stem_length_um + self.extra_length_um));
        s * s
    }

    fn sse(&self, pts: &[(f64, f64)]) -> f64 {
        pts.iter().map(|&(l, f)| (self.fraction(l) - f).powi(2)).sum()
    }
}

/// Least-squares sin^2 law over `(stem length, fraction)` points, with the
/// extra length bounded to `[0, max_extra]`. Among equally good solutions
/// the one with the smallest beat constant is returned.
pub fn fit_stem_law(points: &[(f64, f64)], max_extra: f64) -> Result<StemLaw> {
    let l_max = points.iter().map(|p| p.0).fold(0.0, f64::max);
    let distinct = points.iter().any(|p| (p.0 - points[0].0).abs() > 1e-9);
    if points.len() < 2 || !distinct {
        return Err(Error::DegenerateFit("need at least two distinct stem lengths per band"));
    }
    if points.iter().any(|p| !(0.0..=1.0).contains(&p.1)) {
        return Err(Error::DegenerateFit("cross fraction outside [0, 1]"));
    }
    // Up to two full beat periods across the longest device.
    let kappa_max = 4.0 * PI / (l_max + max_extra).max(1.0);
    const NK: usize = 800;
    const NL: usize = 41;
    let grid_l = |j: usize| max_extra * j as f64 / (NL - 1) as f64;
    let grid_k = |i: usize| kappa_max * (i + 1) as f64 / NK as f64;
    let mut sse = alloc::vec![0.0; NK * NL];
    for i in 0..NK {
        for j in 0..NL {
            sse[i * NL + j] = StemLaw {
                kappa_stem: grid_k(i),
                extra_length_um: grid_l(j),
            }
            .sse(points);
        }
    }
    let mut candidates = Vec::new();
    for i in 0..NK {
        for j in 0..NL {
            let v = sse[i * NL + j];
            let mut is_min = true;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) == (0, 0) || ii < 0 || jj < 0 || ii >= NK as i64 || jj >= NL as i64 {
                        continue;
                    }
                    if sse[ii as usize * NL + jj as usize] < v {
                        is_min = false;
                    }
                }
            }
            if is_min {
                candidates.push(refine(
                    StemLaw {
                        kappa_stem: grid_k(i),
                        extra_length_um: grid_l(j),
                    },
                    points,
                    max_extra,
                ));
            }
        }
    }
    let best = candidates.iter().map(|c| c.sse(points)).fold(f64::INFINITY, f64::min);
    candidates
        .into_iter()
        .filter(|c| c.sse(points) <= best * (1.0 + 1e-6) + 1e-14)
        .min_by(|a, b| a.kappa_stem.total_cmp(&b.kappa_stem))
        .ok_or(Error::DegenerateFit("no converged candidate"))
}

/// Levenberg-Marquardt refinement in scaled coordinates.
fn refine(start: StemLaw, pts: &[(f64, f64)], max_extra: f64) -> StemLaw {
    let ks = start.kappa_stem.max(1e-12);
    let ls = max_extra.max(1.0);
    let mut p = [start.kappa_stem / ks, start.extra_length_um / ls];
    let law = |p: [f64; 2]| StemLaw {
        kappa_stem: p[0] * ks,
        extra_length_um: p[1] * ls,
    };
    let mut cost = law(p).sse(pts);
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let cur = law(p);
        let (mut a00, mut a01, mut a11, mut g0, mut g1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(l, f) in pts {
            let x = cur.kappa_stem * (l + cur.extra_length_um);
            let r = cur.fraction(l) - f;
            let dx = 0.5 * libm::sin(x);
            let j0 = dx * (l + cur.extra_length_um) * ks;
            let j1 = dx * cur.kappa_stem * ls;
            a00 += j0 * j0;
            a01 += j0 * j1;
            a11 += j1 * j1;
            g0 += j0 * r;
            g1 += j1 * r;
        }
        let mut improved = false;
        for _ in 0..30 {
            let (b00, b11) = (a00 * (1.0 + lambda) + 1e-30, a11 * (1.0 + lambda) + 1e-30);
            let det = b00 * b11 - a01 * a01;
            if det == 0.0 {
                lambda *= 10.0;
                continue;
            }
            let d0 = -(b11 * g0 - a01 * g1) / det;
            let d1 = -(b00 * g1 - a01 * g0) / det;
            let trial = [(p[0] + d0).max(1e-9), (p[1] + d1).clamp(0.0, 1.0)];
            let c = law(trial).sse(pts);
            if c < cost {
                let step = (d0.abs() + d1.abs()) < 1e-15;
                p = trial;
                cost = c;
                lambda = (lambda * 0.3).max(1e-12);
                improved = !step;
                break;
            }
            lambda *= 10.0;
        }
        if !improved || cost < 1e-30 {
            break;
        }
    }
    law(p)
}

/// Decay length whose bend-equivalent length equals `extra_um`.
fn decay_for_extra(geom: &CouplerGeometry, extra_um: f64) -> Result<f64> {
    let (mut lo, mut hi) = (1e-3, 1e5);
    if !(extra_um > geom.bend_equivalent_length(lo) && extra_um < geom.bend_equivalent_length(hi)) {
        return Err(Error::DegenerateFit("bend contribution not reachable with this geometry"));
    }
    for _ in 0..200 {
        let mid = libm::sqrt(lo * hi);
        if geom.bend_equivalent_length(mid) < extra_um {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-13 {
            break;
        }
    }
    Ok(libm::sqrt(lo * hi))
}

/// Fits one beat band per wavelength cluster (points within
/// `band_half_width_nm` of the cluster's first wavelength). The stem-law
/// extra length is converted into a gap decay length via `geom`.
pub fn fit_beat_model(
    measurements: &[CouplingMeasurement],
    geom: &CouplerGeometry,
    band_half_width_nm: f64,
) -> Result<ModeBeatModel> {
    geom.validate()?;
    if geom.bend_length_um <= 0.0 || geom.port_gap_um <= geom.stem_gap_um {
        return Err(Error::DegenerateFit("gap dependence needs bends"));
    }
    let mut sorted: Vec<CouplingMeasurement> = measurements.to_vec();
    sorted.sort_by(|a, b| a.wavelength_nm.total_cmp(&b.wavelength_nm));
    let mut bands = Vec::new();
    let mut rest = &sorted[..];
    while let Some(first) = rest.first() {
        let n = rest
            .iter()
            .take_while(|m| m.wavelength_nm - first.wavelength_nm <= band_half_width_nm)
            .count();
        let (cluster, tail) = rest.split_at(n);
        rest = tail;
        let pts: Vec<(f64, f64)> = cluster.iter().map(|m| (m.stem_length_um, m.cross_fraction)).collect();
        let law = fit_stem_law(&pts, 2.0 * geom.bend_length_um)?;
        let d_decay_um = decay_for_extra(geom, law.extra_length_um)?;
        let center_nm = cluster.iter().map(|m| m.wavelength_nm).sum::<f64>() / n as f64;
        bands.push(BeatBand {
            center_nm,
            half_width_nm: band_half_width_nm,
            kappa0: law.kappa_stem * libm::exp(geom.stem_gap_um / d_decay_um),
            d_decay_um,
        });
    }
    let model = ModeBeatModel { bands };
    model.validate()?;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StemSweepRow {
    pub stem_length_um: f64,
    pub signal_suppression: Decibels,
    pub idler_suppression: Decibels,
    /// Signal fraction kept in the original port.
    pub eta_signal: f64,
    /// Idler fraction transferred to the cross port.
    pub eta_idler: f64,
}

pub fn stem_sweep(geom: &CouplerGeometry, model: &ModeBeatModel, stem_lengths_um: &[f64]) -> Result<Vec<StemSweepRow>> {
    let (ls, li) = (model.signal()?.center_nm, model.idler()?.center_nm);
    stem_lengths_um
        .iter()
        .map(|&l| {
            let g = CouplerGeometry {
                stem_length_um: l,
                ..*geom
            };
            g.validate()?;
            let xs = cross_coupling_fraction(&g, model, ls)?;
            let xi = cross_coupling_fraction(&g, model, li)?;
            Ok(StemSweepRow {
                stem_length_um: l,
                signal_suppression: suppression_signal(&g, model)?,
                idler_suppression: suppression_idler(&g, model)?,
                eta_signal: 1.0 - xs,
                eta_idler: xi,
            })
        })
        .collect()
}

/// Row maximizing the joint demultiplexing efficiency `eta_signal * eta_idler`.
pub fn optimum(rows: &[StemSweepRow]) -> Option<&StemSweepRow> {
    rows.iter()
        .max_by(|a, b| (a.eta_signal * a.eta_idler).total_cmp(&(b.eta_signal * b.eta_idler)))
}
