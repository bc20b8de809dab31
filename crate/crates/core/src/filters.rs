//! Speckle filters and the multitemporal Quegan-Yu filter.
//!
//! All filters work on linear power, use mirror padding at the borders and
//! ignore NaN (no-data) neighbours. A NaN centre pixel stays NaN.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array4, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stack::{RasterStack, UnitDomain};

pub const DEFAULT_FROST_DAMPING: f64 = 1.0;
/// Nominal looks of Sentinel-1 IW GRD products.
pub const DEFAULT_LEE_LOOKS: f64 = 4.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    None,
    Median,
    Frost,
    Lee,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialFilterSpec {
    pub kind: FilterKind,
    pub window: usize,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_looks")]
    pub nominal_looks: f64,
}

fn default_damping() -> f64 {
    DEFAULT_FROST_DAMPING
}

fn default_looks() -> f64 {
    DEFAULT_LEE_LOOKS
}

impl SpatialFilterSpec {
    fn with_kind(kind: FilterKind, window: usize) -> Self {
        SpatialFilterSpec {
            kind,
            window,
            damping: DEFAULT_FROST_DAMPING,
            nominal_looks: DEFAULT_LEE_LOOKS,
        }
    }

    pub fn none() -> Self {
        Self::with_kind(FilterKind::None, 1)
    }

    pub fn median(window: usize) -> Self {
        Self::with_kind(FilterKind::Median, window)
    }

    pub fn frost(window: usize) -> Self {
        Self::with_kind(FilterKind::Frost, window)
    }

    pub fn lee(window: usize) -> Self {
        Self::with_kind(FilterKind::Lee, window)
    }

    pub fn with_damping(mut self, damping: f64) -> Self {
        self.damping = damping;
        self
    }

    pub fn with_nominal_looks(mut self, looks: f64) -> Self {
        self.nominal_looks = looks;
        self
    }

    pub fn is_none(&self) -> bool {
        self.kind == FilterKind::None
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == FilterKind::None {
            return Ok(());
        }
        check_window(self.window)?;
        match self.kind {
            FilterKind::Frost if !(self.damping > 0.0) => Err(Error::InvalidParameter(format!(
                "frost damping must be positive, got {}",
                self.damping
            ))),
            FilterKind::Lee if !(self.nominal_looks > 0.0) => Err(Error::InvalidParameter(format!(
                "lee nominal looks must be positive, got {}",
                self.nominal_looks
            ))),
            _ => Ok(()),
        }
    }

    pub fn apply(&self, image: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match self.kind {
            FilterKind::None => Ok(image.to_owned()),
            FilterKind::Median => median_filter(image, self.window),
            FilterKind::Frost => frost_filter(image, self.window, self.damping),
            FilterKind::Lee => lee_filter(image, self.window, self.nominal_looks),
        }
    }
}

impl fmt::Display for SpatialFilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            FilterKind::None => write!(f, "none"),
            FilterKind::Median => write!(f, "median{}", self.window),
            FilterKind::Frost => write!(f, "frost{}", self.window),
            FilterKind::Lee => write!(f, "lee{}", self.window),
        }
    }
}

impl FromStr for SpatialFilterSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "none" {
            return Ok(SpatialFilterSpec::none());
        }
        let split = s
            .find(|c: char| c.is_ascii_digit())
            .ok_or_else(|| Error::InvalidParameter(format!("filter {s:?} lacks a window size")))?;
        let (name, window) = s.split_at(split);
        let window: usize = window
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad window in {s:?}")))?;
        let spec = match name {
            "median" => SpatialFilterSpec::median(window),
            "frost" => SpatialFilterSpec::frost(window),
            "lee" => SpatialFilterSpec::lee(window),
            _ => return Err(Error::InvalidParameter(format!("unknown filter {name:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Estimator used inside Quegan-Yu (or none for no temporal filtering)
/// followed by a spatial filter applied to every date.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterCombination {
    pub temporal_inner: SpatialFilterSpec,
    pub post_spatial: SpatialFilterSpec,
}

impl FilterCombination {
    pub fn new(temporal_inner: SpatialFilterSpec, post_spatial: SpatialFilterSpec) -> Self {
        FilterCombination {
            temporal_inner,
            post_spatial,
        }
    }

    pub fn identity() -> Self {
        Self::new(SpatialFilterSpec::none(), SpatialFilterSpec::none())
    }

    /// `none+none`, `none+median9`, `qy-median9+frost9`, ...
    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for FilterCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.temporal_inner.is_none() {
            write!(f, "none+{}", self.post_spatial)
        } else {
            write!(f, "qy-{}+{}", self.temporal_inner, self.post_spatial)
        }
    }
}

impl FromStr for FilterCombination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (temporal, post) = s
            .trim()
            .split_once('+')
            .ok_or_else(|| Error::InvalidParameter(format!("combination {s:?} needs '+'")))?;
        let temporal = match temporal.trim().strip_prefix("qy-") {
            Some(inner) => {
                let spec: SpatialFilterSpec = inner.parse()?;
                if spec.is_none() {
                    return Err(Error::InvalidParameter(
                        "Quegan-Yu needs a spatial estimator".into(),
                    ));
                }
                spec
            }
            None if temporal.trim() == "none" => SpatialFilterSpec::none(),
            None => {
                return Err(Error::InvalidParameter(format!(
                    "temporal part {temporal:?} must be 'none' or 'qy-<filter>'"
                )))
            }
        };
        Ok(FilterCombination::new(temporal, post.parse()?))
    }
}

/// The five filter choices of the bench: none, median 9, Frost 5, Frost 9,
/// Lee 3.
pub fn bench_filters() -> [SpatialFilterSpec; 5] {
    [
        SpatialFilterSpec::none(),
        SpatialFilterSpec::median(9),
        SpatialFilterSpec::frost(5),
        SpatialFilterSpec::frost(9),
        SpatialFilterSpec::lee(3),
    ]
}

/// All 25 (temporal estimator, post-spatial filter) combinations.
pub fn bench_grid() -> Vec<FilterCombination> {
    let filters = bench_filters();
    filters
        .iter()
        .flat_map(|t| filters.iter().map(move |p| FilterCombination::new(*t, *p)))
        .collect()
}

fn check_window(window: usize) -> Result<()> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "window must be odd and at least 3, got {window}"
        )));
    }
    Ok(())
}

/// Symmetric (half-sample) mirror of index `i` into `0..n`.
#[inline]
pub fn mirror_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Run `f(values, distances, centre)` over every window of valid neighbours.
fn map_windows<F>(image: ArrayView2<'_, f64>, window: usize, f: F) -> Array2<f64>
where
    F: Fn(&mut [f64], &[f64], f64) -> f64 + Sync,
{
    let (h, w) = image.dim();
    let half = (window / 2) as isize;
    let mut out = Array2::zeros((h, w));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(r, mut row)| {
            let mut values = Vec::with_capacity(window * window);
            let mut dists = Vec::with_capacity(window * window);
            for c in 0..w {
                let centre = image[[r, c]];
                if centre.is_nan() {
                    row[c] = f64::NAN;
                    continue;
                }
                values.clear();
                dists.clear();
                for dr in -half..=half {
                    let rr = mirror_index(r as isize + dr, h);
                    for dc in -half..=half {
                        let v = image[[rr, mirror_index(c as isize + dc, w)]];
                        if !v.is_nan() {
                            values.push(v);
                            dists.push(((dr * dr + dc * dc) as f64).sqrt());
                        }
                    }
                }
                row[c] = f(&mut values, &dists, centre);
            }
        });
    out
}

fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

pub fn median_filter(image: ArrayView2<'_, f64>, window: usize) -> Result<Array2<f64>> {
    check_window(window)?;
    Ok(map_windows(image, window, |values, _, _| median_in_place(values)))
}

/// Median of a non-empty slice; mean of the two middle values for even length.
pub fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (lower, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let m = *m;
    if n % 2 == 1 {
        m
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + m)
    }
}

/// Lee filter: `m + W·(I − m)` with `W = max(0, 1 − C_u²/C_I²)`,
/// `C_u = 1/√L` and `C_I` the local coefficient of variation.
pub fn lee_filter(image: ArrayView2<'_, f64>, window: usize, nominal_looks: f64) -> Result<Array2<f64>> {
    check_window(window)?;
    if !(nominal_looks > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lee nominal looks must be positive, got {nominal_looks}"
        )));
    }
    let cu2 = 1.0 / nominal_looks;
    Ok(map_windows(image, window, move |values, _, centre| {
        let (mean, var) = mean_and_variance(values);
        let ci2 = if mean != 0.0 { var / (mean * mean) } else { 0.0 };
        let weight = if ci2 > 0.0 { (1.0 - cu2 / ci2).max(0.0) } else { 0.0 };
        mean + weight * (centre - mean)
    }))
}

/// Frost filter: weighted window mean with weights
/// `exp(−damping·C_I²·d)`, `d` the distance to the centre pixel.
pub fn frost_filter(image: ArrayView2<'_, f64>, window: usize, damping: f64) -> Result<Array2<f64>> {
    check_window(window)?;
    if !(damping > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "frost damping must be positive, got {damping}"
        )));
    }
    Ok(map_windows(image, window, move |values, dists, _| {
        let (mean, var) = mean_and_variance(values);
        let ci2 = if mean > 0.0 { var / (mean * mean) } else { 0.0 };
        let k = damping * ci2;
        let (mut num, mut den) = (0.0, 0.0);
        for (v, d) in values.iter().zip(dists) {
            let w = (-k * d).exp();
            num += w * v;
            den += w;
        }
        num / den
    }))
}

fn single_band_stack(stack: &RasterStack, band_index: usize, slices: Vec<Array2<f64>>) -> Result<RasterStack> {
    let (h, w) = (stack.height(), stack.width());
    let mut pixels = Array4::zeros((slices.len(), 1, h, w));
    for (d, s) in slices.iter().enumerate() {
        pixels
            .index_axis_mut(Axis(0), d)
            .index_axis_mut(Axis(0), 0)
            .assign(s);
    }
    RasterStack::new(
        vec![stack.bands()[band_index].clone()],
        stack.dates().to_vec(),
        pixels,
        UnitDomain::Linear,
    )
    .map(|s| s.with_geotransform(stack.geotransform()))
}

/// Quegan-Yu multitemporal filter on one band:
///
/// `J_k = ⟨I_k⟩/N · Σ_i I_i/⟨I_i⟩`, with `⟨I_i⟩` the estimator applied to
/// date `i`. Returns a single-band stack. Pixels where any estimate is
/// non-positive become NaN on every date; no-data dates are left out of the
/// sum and stay no-data.
pub fn quegan_yu(stack: &RasterStack, estimator: &SpatialFilterSpec, band: &str) -> Result<RasterStack> {
    stack.unit_domain().expect(UnitDomain::Linear)?;
    if estimator.is_none() {
        return Err(Error::InvalidParameter(
            "Quegan-Yu needs a spatial estimator".into(),
        ));
    }
    estimator.validate()?;
    let b = stack.band_index(band)?;
    let n = stack.dates().len();
    let estimates: Vec<Array2<f64>> = (0..n)
        .into_par_iter()
        .map(|d| estimator.apply(stack.slice(d, b)))
        .collect::<Result<_>>()?;

    let (h, w) = (stack.height(), stack.width());
    let mut mean_ratio = Array2::<f64>::zeros((h, w));
    mean_ratio
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(r, mut row)| {
            for c in 0..w {
                let (mut sum, mut count) = (0.0, 0usize);
                let mut masked = false;
                for (d, est) in estimates.iter().enumerate() {
                    let e = est[[r, c]];
                    let v = stack.slice(d, b)[[r, c]];
                    if v.is_nan() {
                        continue;
                    }
                    if !(e > 0.0) {
                        masked = true;
                        break;
                    }
                    sum += v / e;
                    count += 1;
                }
                row[c] = if masked || count == 0 {
                    f64::NAN
                } else {
                    sum / count as f64
                };
            }
        });

    let slices = estimates
        .into_par_iter()
        .enumerate()
        .map(|(d, est)| {
            let src = stack.slice(d, b);
            let mut out = est;
            ndarray::Zip::from(&mut out)
                .and(&mean_ratio)
                .and(&src)
                .for_each(|o, &ratio, &v| {
                    *o = if v.is_nan() { f64::NAN } else { *o * ratio };
                });
            out
        })
        .collect();
    single_band_stack(stack, b, slices)
}

/// Apply `spec` to every date of one band.
pub fn spatial_filter_stack(stack: &RasterStack, spec: &SpatialFilterSpec, band: &str) -> Result<RasterStack> {
    stack.unit_domain().expect(UnitDomain::Linear)?;
    spec.validate()?;
    let b = stack.band_index(band)?;
    let slices = (0..stack.dates().len())
        .into_par_iter()
        .map(|d| spec.apply(stack.slice(d, b)))
        .collect::<Result<Vec<_>>>()?;
    single_band_stack(stack, b, slices)
}

/// Temporal filtering (if any) followed by the post-spatial filter, on one
/// band. `(none, none)` returns the band unchanged.
pub fn apply_combination(stack: &RasterStack, combo: &FilterCombination, band: &str) -> Result<RasterStack> {
    stack.unit_domain().expect(UnitDomain::Linear)?;
    let temporal = if combo.temporal_inner.is_none() {
        stack.select_band(band)?
    } else {
        quegan_yu(stack, &combo.temporal_inner, band)?
    };
    if combo.post_spatial.is_none() {
        Ok(temporal)
    } else {
        spatial_filter_stack(&temporal, &combo.post_spatial, band)
    }
}

/// Filter every band of the stack with the same combination.
pub fn apply_combination_all_bands(stack: &RasterStack, combo: &FilterCombination) -> Result<RasterStack> {
    let parts = stack
        .bands()
        .iter()
        .map(|b| apply_combination(stack, combo, b))
        .collect::<Result<Vec<_>>>()?;
    RasterStack::stack_bands(parts)
}
