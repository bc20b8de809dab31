//! Filter quality indexes and the combination bench.
//!
//! ENL rewards speckle suppression over stable forest; the Range index
//! rewards keeping the backscatter contrast of a clearing. Each index is
//! min-max normalized across the evaluated combinations and the score is
//! their mean.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::s;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filters::{quegan_yu, spatial_filter_stack, FilterCombination, SpatialFilterSpec};
use crate::report::fmt_sig;
use crate::stack::{Location, RasterStack, SampleSet, UnitDomain};

/// Side of the square window sampled around each forest location.
pub const ENL_WINDOW: usize = 7;

/// Equivalent number of looks, mean² over unbiased variance.
pub fn enl(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::SampleSize {
            n: values.len(),
            min: 2,
            max: usize::MAX,
        });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 || values.iter().all(|v| *v == values[0]) {
        return Err(Error::Degenerate("degenerate homogeneous sample".into()));
    }
    Ok(mean * mean / var)
}

/// Percentile `p ∈ [0, 100]` of sorted data by linear interpolation between
/// order statistics at rank `(n − 1)·p/100`.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = (n - 1) as f64 * p / 100.0;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// `10·log10(P90/P10)` of a positive linear-power series.
pub fn range_index(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::SampleSize {
            n: values.len(),
            min: 2,
            max: usize::MAX,
        });
    }
    if let Some(&v) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidValue {
            value: v,
            context: "range index needs positive linear power".into(),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p90 = percentile_sorted(&sorted, 90.0);
    let p10 = percentile_sorted(&sorted, 10.0);
    Ok(10.0 * (p90 / p10).log10())
}

/// Min-max scaling to [0, 1]; an all-equal input maps to 0.5.
pub fn normalize_scores(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::InvalidParameter("nothing to normalize".into()));
    }
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(vec![0.5; raw.len()]);
    }
    Ok(raw.iter().map(|x| (x - min) / (max - min)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinationScore {
    pub combo: FilterCombination,
    pub mean_enl: f64,
    pub mean_range: f64,
    pub normalized_enl: f64,
    pub normalized_range: f64,
    pub score: f64,
}

/// Combination left out of the ranking because it failed on more than half
/// of the forest or cleared samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsentCombination {
    pub combo: FilterCombination,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchReport {
    /// Sorted by descending score, ties by combination name.
    pub scores: Vec<CombinationScore>,
    pub absent: Vec<AbsentCombination>,
}

impl BenchReport {
    pub fn best(&self) -> Option<&CombinationScore> {
        self.scores.first()
    }

    pub fn get(&self, combo: &FilterCombination) -> Option<&CombinationScore> {
        self.scores.iter().find(|s| &s.combo == combo)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("combo,mean_enl,mean_range,norm_enl,norm_range,score\n");
        for s in &self.scores {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.combo,
                fmt_sig(s.mean_enl),
                fmt_sig(s.mean_range),
                fmt_sig(s.normalized_enl),
                fmt_sig(s.normalized_range),
                fmt_sig(s.score)
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// ENL of the pooled 7×7 window (clipped to the image) around `loc` over
/// every date.
pub fn enl_at(stack: &RasterStack, band_index: usize, loc: Location, window: usize) -> Result<f64> {
    let half = window / 2;
    let r0 = loc.row.saturating_sub(half);
    let c0 = loc.col.saturating_sub(half);
    let r1 = (loc.row + half + 1).min(stack.height());
    let c1 = (loc.col + half + 1).min(stack.width());
    let values: Vec<f64> = stack
        .pixels()
        .slice(s![.., band_index, r0..r1, c0..c1])
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .collect();
    enl(&values)
}

struct RawIndexes {
    mean_enl: f64,
    mean_range: f64,
}

fn evaluate_filtered(filtered: &RasterStack, forest: &SampleSet, cleared: &SampleSet) -> std::result::Result<RawIndexes, String> {
    let band = &filtered.bands()[0];
    let enls: Vec<Result<f64>> = forest
        .locations()
        .map(|loc| enl_at(filtered, 0, loc, ENL_WINDOW))
        .collect();
    let ranges: Vec<Result<f64>> = cleared
        .locations()
        .map(|loc| {
            let series = filtered.extract_series(loc, band)?;
            let values: Vec<f64> = series.valid_values().collect();
            range_index(&values)
        })
        .collect();
    let mean_ok = |results: &[Result<f64>], what: &str| {
        let ok: Vec<f64> = results.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
        let failed = results.len() - ok.len();
        if 2 * failed > results.len() {
            let first = results
                .iter()
                .find_map(|r| r.as_ref().err())
                .map(|e| e.to_string())
                .unwrap_or_default();
            return Err(format!(
                "{what} failed on {failed} of {} samples ({first})",
                results.len()
            ));
        }
        Ok(ok.iter().sum::<f64>() / ok.len() as f64)
    };
    Ok(RawIndexes {
        mean_enl: mean_ok(&enls, "ENL")?,
        mean_range: mean_ok(&ranges, "Range")?,
    })
}

/// Filter the band with every combination, score ENL over the forest
/// samples and Range over the cleared samples, and rank.
///
/// Combinations sharing a temporal estimator reuse one Quegan-Yu pass.
pub fn score_combinations(
    stack: &RasterStack,
    forest: &SampleSet,
    cleared: &SampleSet,
    combos: &[FilterCombination],
    band: &str,
) -> Result<BenchReport> {
    stack.unit_domain().expect(UnitDomain::Linear)?;
    if combos.is_empty() {
        return Err(Error::InvalidParameter("no filter combinations to score".into()));
    }
    if forest.is_empty() || cleared.is_empty() {
        return Err(Error::InvalidParameter(
            "bench needs non-empty forest and cleared sample sets".into(),
        ));
    }
    forest.check_bounds(stack.height(), stack.width())?;
    cleared.check_bounds(stack.height(), stack.width())?;
    stack.band_index(band)?;

    let mut temporal_specs: Vec<SpatialFilterSpec> = Vec::new();
    for c in combos {
        if !temporal_specs.contains(&c.temporal_inner) {
            temporal_specs.push(c.temporal_inner);
        }
    }

    let mut raw: Vec<(FilterCombination, std::result::Result<RawIndexes, String>)> = Vec::new();
    for temporal in &temporal_specs {
        let base = if temporal.is_none() {
            stack.select_band(band)
        } else {
            quegan_yu(stack, temporal, band)
        };
        let members: Vec<&FilterCombination> =
            combos.iter().filter(|c| &c.temporal_inner == temporal).collect();
        let base = match base {
            Ok(b) => b,
            Err(e) => {
                for c in members {
                    raw.push((*c, Err(format!("temporal filter failed: {e}"))));
                }
                continue;
            }
        };
        let results: Vec<_> = members
            .par_iter()
            .map(|c| {
                let filtered = if c.post_spatial.is_none() {
                    Ok(base.clone())
                } else {
                    spatial_filter_stack(&base, &c.post_spatial, band)
                };
                let res = match filtered {
                    Ok(f) => evaluate_filtered(&f, forest, cleared),
                    Err(e) => Err(format!("spatial filter failed: {e}")),
                };
                (**c, res)
            })
            .collect();
        raw.extend(results);
    }

    let mut report = BenchReport::default();
    let mut present = Vec::new();
    for (combo, res) in raw {
        match res {
            Ok(idx) => present.push((combo, idx)),
            Err(reason) => report.absent.push(AbsentCombination { combo, reason }),
        }
    }
    if present.is_empty() {
        return Ok(report);
    }
    let enl_norm = normalize_scores(&present.iter().map(|p| p.1.mean_enl).collect::<Vec<_>>())?;
    let range_norm = normalize_scores(&present.iter().map(|p| p.1.mean_range).collect::<Vec<_>>())?;
    report.scores = present
        .into_iter()
        .zip(enl_norm.into_iter().zip(range_norm))
        .map(|((combo, idx), (ne, nr))| CombinationScore {
            combo,
            mean_enl: idx.mean_enl,
            mean_range: idx.mean_range,
            normalized_enl: ne,
            normalized_range: nr,
            score: 0.5 * (ne + nr),
        })
        .collect();
    report.scores.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.combo.name().cmp(&b.combo.name()))
    });
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn enl_by_hand() {
        assert_eq!(enl(&[1.0, 3.0]).unwrap(), 2.0);
        let e = enl(&[0.4; 10]).unwrap_err();
        assert!(e.to_string().contains("degenerate homogeneous sample"));
        assert!(enl(&[1.0]).is_err());
    }

    #[test]
    fn range_examples() {
        assert_eq!(range_index(&[0.3; 8]).unwrap(), 0.0);
        // 11 points: P10 and P90 land on order statistics 1 and 9
        let mut v = vec![1.0; 11];
        for x in v.iter_mut().skip(5) {
            *x = 10.0;
        }
        v[0] = 0.5;
        v[10] = 20.0;
        assert!((range_index(&v).unwrap() - 10.0).abs() < 1e-12);
        assert!(range_index(&[1.0, 0.0]).is_err());
        assert!(range_index(&[1.0, -2.0]).is_err());
    }

    #[test]
    fn range_matches_percentile_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for n in 2..40 {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..10.0)).collect();
            let mut sorted = v.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // numpy "linear": value at fractional position (n-1)p
            let pct = |p: f64| {
                let pos = (n - 1) as f64 * p;
                let i = pos as usize;
                if i + 1 >= n {
                    sorted[n - 1]
                } else {
                    sorted[i] * (1.0 - (pos - i as f64)) + sorted[i + 1] * (pos - i as f64)
                }
            };
            let want = 10.0 * (pct(0.9) / pct(0.1)).log10();
            assert!((range_index(&v).unwrap() - want).abs() < 1e-10);
        }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_scores(&[2.0, 4.0, 6.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_scores(&[7.0; 3]).unwrap(), vec![0.5; 3]);
        assert!(normalize_scores(&[]).is_err());
    }

    proptest! {
        #[test]
        fn normalize_properties(raw in proptest::collection::vec(-1e3..1e3f64, 2..30)) {
            let out = normalize_scores(&raw).unwrap();
            let distinct = raw.iter().any(|x| *x != raw[0]);
            if distinct {
                let min = out.iter().copied().fold(f64::INFINITY, f64::min);
                let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!(min, 0.0);
                prop_assert_eq!(max, 1.0);
            }
            for i in 0..raw.len() {
                for j in 0..raw.len() {
                    if raw[i] < raw[j] {
                        prop_assert!(out[i] <= out[j]);
                    }
                }
            }
        }

        #[test]
        fn enl_scale_free(v in proptest::collection::vec(0.01..10.0f64, 3..40), k in 1e-3..1e3f64) {
            prop_assume!(v.iter().any(|x| *x != v[0]));
            let a = enl(&v).unwrap();
            let scaled: Vec<f64> = v.iter().map(|x| x * k).collect();
            let b = enl(&scaled).unwrap();
            prop_assert!(((a - b) / a).abs() < 1e-9);
        }

        #[test]
        fn range_scale_free(v in proptest::collection::vec(0.01..10.0f64, 2..40), k in 1e-3..1e3f64) {
            let scaled: Vec<f64> = v.iter().map(|x| x * k).collect();
            prop_assert!((range_index(&v).unwrap() - range_index(&scaled).unwrap()).abs() < 1e-9);
        }

        // Interpolated percentiles only invert exactly when P10 and P90 fall
        // on order statistics, i.e. n = 10m + 1.
        #[test]
        fn range_symmetric_under_inversion(m in 1usize..6, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..10 * m + 1).map(|_| rng.random_range(0.01..10.0)).collect();
            let inv: Vec<f64> = v.iter().map(|x| 1.0 / x).collect();
            prop_assert!((range_index(&v).unwrap() - range_index(&inv).unwrap()).abs() < 1e-9);
        }
    }
}
