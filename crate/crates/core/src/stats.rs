//! Stable-forest statistics: normality and equal-variance tests, the
//! per-pixel baseline with a pooled temporal sigma, and one-sided z-test
//! thresholds.
//!
//! Everything here works on filtered backscatter in dB.

use std::fmt;
use std::fs;
use std::path::Path;

use chrono::{Months, NaiveDate};
use ndarray::{s, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::special::{kolmogorov_sf, normal_cdf, normal_sf};
use crate::stack::{read_raster, write_raster, Location, RasterStack, SampleSet, UnitDomain};

pub use crate::special::z_quantile;

/// Fewest calibration dates accepted by [`fit_baseline`].
pub const MIN_CALIBRATION_DATES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    ShapiroWilk,
    Ks,
    Bartlett,
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestKind::ShapiroWilk => "shapiro-wilk",
            TestKind::Ks => "ks",
            TestKind::Bartlett => "bartlett",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub test: TestKind,
}

impl TestResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

// Royston's polynomial approximations (AS R94).
const SW_C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
const SW_C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const SW_C3: [f64; 4] = [0.544, -0.39978, 0.025054, -6.714e-4];
const SW_C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const SW_C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const SW_C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const SW_G: [f64; 2] = [-2.273, 0.459];

/// Shapiro-Wilk W test for normality, Royston's AS R94 algorithm.
/// Supports 3 ≤ n ≤ 5000.
pub fn shapiro_wilk(sample: &[f64]) -> Result<TestResult> {
    let n = sample.len();
    if !(3..=5000).contains(&n) {
        return Err(Error::SampleSize { n, min: 3, max: 5000 });
    }
    if let Some(&v) = sample.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidValue {
            value: v,
            context: "Shapiro-Wilk sample".into(),
        });
    }
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let ssq: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ssq <= 0.0 || x[n - 1] == x[0] {
        return Err(Error::Degenerate("zero-variance sample".into()));
    }

    let half = n / 2;
    let a: Vec<f64> = if n == 3 {
        vec![std::f64::consts::FRAC_1_SQRT_2]
    } else {
        // Blom scores for the upper half, positive.
        let m: Vec<f64> = (0..half)
            .map(|i| -crate::special::z_quantile((i as f64 + 1.0 - 0.375) / (nf + 0.25)).expect("level in (0,1)"))
            .collect();
        let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / nf.sqrt();
        let a1 = poly(&SW_C1, rsn) + m[0] / ssumm2;
        let mut a = vec![0.0; half];
        a[0] = a1;
        let first_plain = if n > 5 {
            let a2 = poly(&SW_C2, rsn) + m[1] / ssumm2;
            let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
                / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
                .sqrt();
            a[1] = a2;
            for i in 2..half {
                a[i] = m[i] / fac;
            }
            2
        } else {
            let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
            for i in 1..half {
                a[i] = m[i] / fac;
            }
            1
        };
        debug_assert!(first_plain <= half.max(1));
        a
    };

    let numerator: f64 = a
        .iter()
        .enumerate()
        .map(|(i, ai)| ai * (x[n - 1 - i] - x[i]))
        .sum();
    let w = (numerator * numerator / ssq).min(1.0);

    let p_value = if n == 3 {
        let pi6 = 6.0 / std::f64::consts::PI;
        let stqr = std::f64::consts::FRAC_PI_3;
        (pi6 * (w.sqrt().asin() - stqr)).clamp(0.0, 1.0)
    } else {
        let w1 = 1.0 - w;
        if w1 <= 0.0 {
            1.0
        } else {
            let y = w1.ln();
            if n <= 11 {
                let gamma = poly(&SW_G, nf);
                if y >= gamma {
                    0.0
                } else {
                    let y = -(gamma - y).ln();
                    let m = poly(&SW_C3, nf);
                    let s = poly(&SW_C4, nf).exp();
                    normal_sf((y - m) / s)
                }
            } else {
                let ln_n = nf.ln();
                let m = poly(&SW_C5, ln_n);
                let s = poly(&SW_C6, ln_n).exp();
                normal_sf((y - m) / s)
            }
        }
    };

    Ok(TestResult {
        statistic: w,
        p_value: p_value.clamp(0.0, 1.0),
        n,
        test: TestKind::ShapiroWilk,
    })
}

/// One-sample Kolmogorov-Smirnov test against a fully specified CDF, with the
/// asymptotic Kolmogorov p-value `Q(√n·D)`.
pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<TestResult> {
    let n = sample.len();
    if n == 0 {
        return Err(Error::SampleSize { n, min: 1, max: usize::MAX });
    }
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (((i + 1) as f64 / nf) - f).max(f - i as f64 / nf)
        })
        .fold(0.0, f64::max);
    Ok(TestResult {
        statistic: d,
        p_value: kolmogorov_sf(nf.sqrt() * d),
        n,
        test: TestKind::Ks,
    })
}

/// KS normality test with mean and standard deviation estimated from the
/// sample. The asymptotic p-value is conservative in this setting since the
/// null distribution of D shrinks when parameters are fitted.
pub fn ks_normality(sample: &[f64]) -> Result<TestResult> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::SampleSize { n, min: 2, max: usize::MAX });
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let var = sample.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    if !(var > 0.0) {
        return Err(Error::Degenerate("zero-variance sample".into()));
    }
    let sd = var.sqrt();
    ks_test(sample, |v| normal_cdf((v - mean) / sd))
}

/// Bartlett's test that all groups share one variance; χ² with k − 1
/// degrees of freedom.
pub fn bartlett<S: AsRef<[f64]>>(groups: &[S]) -> Result<TestResult> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "Bartlett's test needs at least two groups, got {k}"
        )));
    }
    let mut total = 0usize;
    let mut pooled_num = 0.0;
    let mut log_sum = 0.0;
    let mut inv_sum = 0.0;
    for (i, g) in groups.iter().enumerate() {
        let g = g.as_ref();
        let n = g.len();
        if n < 2 {
            return Err(Error::Degenerate(format!("group {i} has {n} values")));
        }
        let nf = n as f64;
        let mean = g.iter().sum::<f64>() / nf;
        let var = g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
        if !(var > 0.0) {
            return Err(Error::Degenerate(format!("group {i} has zero variance")));
        }
        total += n;
        pooled_num += (nf - 1.0) * var;
        log_sum += (nf - 1.0) * var.ln();
        inv_sum += 1.0 / (nf - 1.0);
    }
    let dof_within = (total - k) as f64;
    let pooled = pooled_num / dof_within;
    let correction = 1.0 + (inv_sum - 1.0 / dof_within) / (3.0 * (k as f64 - 1.0));
    let statistic = ((dof_within * pooled.ln() - log_sum) / correction).max(0.0);
    let chi2 = ChiSquared::new((k - 1) as f64)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(TestResult {
        statistic,
        p_value: chi2.sf(statistic).clamp(0.0, 1.0),
        n: total,
        test: TestKind::Bartlett,
    })
}

/// Inclusive date interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateInterval {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateInterval {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidParameter(format!(
                "calibration window ends ({end}) before it starts ({start})"
            )));
        }
        Ok(DateInterval { start, end })
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    /// Indices of `dates` inside the interval.
    pub fn indices(&self, dates: &[NaiveDate]) -> Vec<usize> {
        dates
            .iter()
            .enumerate()
            .filter(|(_, d)| self.contains(**d))
            .map(|(i, _)| i)
            .collect()
    }
}

impl fmt::Display for DateInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// Earliest two years of the stack, cut before the earliest reference date
/// of the cleared samples when given.
pub fn default_calibration_window(dates: &[NaiveDate], cleared: Option<&SampleSet>) -> Result<DateInterval> {
    let start = *dates
        .first()
        .ok_or_else(|| Error::InvalidParameter("stack has no dates".into()))?;
    let limit = start
        .checked_add_months(Months::new(24))
        .expect("date within chrono range");
    let cutoff = cleared.and_then(|c| c.earliest_reference_date());
    let end = dates
        .iter()
        .copied()
        .rfind(|d| *d < limit && cutoff.is_none_or(|c| *d < c))
        .ok_or_else(|| {
            Error::InvalidParameter("no stack date precedes the first reference date".into())
        })?;
    DateInterval::new(start, end)
}

/// Per-pixel forest baseline (dB) and pooled temporal sigma for one band.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub baseline_mean: Array2<f64>,
    pub pooled_sigma: f64,
    pub calibration_window: DateInterval,
    pub band: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelMeta {
    band: String,
    width: usize,
    height: usize,
    pooled_sigma: f64,
    calibration_window: DateInterval,
}

impl ForestModel {
    pub fn baseline_file(band: &str) -> String {
        format!("baseline_{band}.raw")
    }

    pub fn meta_file(band: &str) -> String {
        format!("model_{band}.json")
    }

    /// Write `baseline_<band>.raw` and `model_<band>.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_raster(&dir.join(Self::baseline_file(&self.band)), self.baseline_mean.view())?;
        let (height, width) = self.baseline_mean.dim();
        let meta = ModelMeta {
            band: self.band.clone(),
            width,
            height,
            pooled_sigma: self.pooled_sigma,
            calibration_window: self.calibration_window,
        };
        let path = dir.join(Self::meta_file(&self.band));
        fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>, band: &str) -> Result<ForestModel> {
        let dir = dir.as_ref();
        let path = dir.join(Self::meta_file(band));
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: ModelMeta = serde_json::from_str(&text).map_err(|e| Error::Metadata {
            path: path.clone(),
            message: e.to_string(),
        })?;
        if !(meta.pooled_sigma > 0.0) {
            return Err(Error::Metadata {
                path,
                message: format!("pooled_sigma must be positive, got {}", meta.pooled_sigma),
            });
        }
        let baseline_mean = read_raster(&dir.join(Self::baseline_file(band)), meta.height, meta.width)?;
        Ok(ForestModel {
            baseline_mean,
            pooled_sigma: meta.pooled_sigma,
            calibration_window: meta.calibration_window,
            band: meta.band,
        })
    }
}

/// Calibration-window values (no-data removed) at each forest location.
pub fn calibration_series(
    stack: &RasterStack,
    window: &DateInterval,
    forest: &SampleSet,
    band: &str,
) -> Result<Vec<(Location, Vec<f64>)>> {
    let b = stack.band_index(band)?;
    let idx = window.indices(stack.dates());
    forest
        .locations()
        .map(|loc| {
            stack.check_location(loc)?;
            let values = idx
                .iter()
                .map(|&d| stack.slice(d, b)[[loc.row, loc.col]])
                .filter(|v| !v.is_nan())
                .collect();
            Ok((loc, values))
        })
        .collect()
}

/// Fit the baseline: per-pixel temporal mean over the calibration window and
/// σ = √(mean of the per-location sample variances over forest samples).
pub fn fit_baseline(
    stack: &RasterStack,
    window: DateInterval,
    forest: &SampleSet,
    band: &str,
) -> Result<ForestModel> {
    stack.unit_domain().expect(UnitDomain::Db)?;
    if forest.is_empty() {
        return Err(Error::InvalidParameter("forest sample set is empty".into()));
    }
    let b = stack.band_index(band)?;
    let idx = window.indices(stack.dates());
    if idx.len() < MIN_CALIBRATION_DATES {
        return Err(Error::InvalidParameter(format!(
            "calibration window {window} holds {} dates, need at least {MIN_CALIBRATION_DATES}",
            idx.len()
        )));
    }

    let cube = stack.pixels().slice(s![.., b, .., ..]);
    let (h, w) = (stack.height(), stack.width());
    let mut baseline = Array2::zeros((h, w));
    baseline
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(r, mut row)| {
            for c in 0..w {
                let (mut sum, mut count) = (0.0, 0usize);
                for &d in &idx {
                    let v = cube[[d, r, c]];
                    if !v.is_nan() {
                        sum += v;
                        count += 1;
                    }
                }
                row[c] = if count == 0 { f64::NAN } else { sum / count as f64 };
            }
        });

    let variances: Vec<f64> = calibration_series(stack, &window, forest, band)?
        .into_iter()
        .filter(|(_, v)| v.len() >= 2)
        .map(|(_, v)| {
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
        })
        .collect();
    if variances.is_empty() {
        return Err(Error::Degenerate(
            "no forest location has two valid calibration values".into(),
        ));
    }
    let pooled_var = variances.iter().sum::<f64>() / variances.len() as f64;
    if !(pooled_var > 0.0) {
        return Err(Error::Degenerate(
            "forest calibration series have zero variance".into(),
        ));
    }
    Ok(ForestModel {
        baseline_mean: baseline,
        pooled_sigma: pooled_var.sqrt(),
        calibration_window: window,
        band: band.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub alpha: f64,
    pub z_crit: f64,
    /// z_crit · σ, added to the per-pixel baseline.
    pub offset_db: f64,
    pub band: String,
}

/// One-sided z-test threshold `H1: x < μ` at significance `alpha`.
pub fn threshold_for_sigma(sigma: f64, alpha: f64, band: &str) -> Result<ThresholdSpec> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let z_crit = z_quantile(alpha)?;
    Ok(ThresholdSpec {
        alpha,
        z_crit,
        offset_db: z_crit * sigma,
        band: band.to_string(),
    })
}

pub fn derive_threshold(model: &ForestModel, alpha: f64) -> Result<ThresholdSpec> {
    threshold_for_sigma(model.pooled_sigma, alpha, &model.band)
}
