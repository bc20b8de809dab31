//! Synthetic SAR scenes with known clearcut events.
//!
//! Per pixel and date the true level in dB is the band's forest mean plus an
//! independent N(0, σ) fluctuation, lowered by `drop_db` inside an event
//! rectangle from its event date on. The emitted linear value is
//! `10^(level/10) · G` with `G ~ Gamma(L, 1/L)`.
//!
//! Randomness comes from ChaCha8 seeded with `seed`; slice `(date d, band b)`
//! draws from stream `d · bands + b`, and sample selection from the stream
//! after the last slice. Output is therefore independent of thread count.
//! Values are rounded through `f32` so a scene written to disk reads back
//! bit-identical.

use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use ndarray::{Array2, Array4, Axis};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::fmt_sig;
use crate::stack::{write_sample_set, Location, RasterStack, SampleSet, UnitDomain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandParams {
    pub name: String,
    pub forest_mean_db: f64,
    pub forest_sigma_db: f64,
}

/// Pixel rectangle `[row, row + height) × [col, col + width)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
    pub event_date: NaiveDate,
    pub drop_db: f64,
}

impl EventRect {
    pub fn contains(&self, loc: Location) -> bool {
        (self.row..self.row + self.height).contains(&loc.row)
            && (self.col..self.col + self.width).contains(&loc.col)
    }

    /// Chebyshev distance from `loc` to the nearest pixel outside the
    /// rectangle (0 when outside).
    fn depth(&self, loc: Location) -> usize {
        if !self.contains(loc) {
            return 0;
        }
        let top = loc.row - self.row + 1;
        let bottom = self.row + self.height - loc.row;
        let left = loc.col - self.col + 1;
        let right = self.col + self.width - loc.col;
        top.min(bottom).min(left).min(right)
    }

    /// Chebyshev distance from `loc` to the rectangle (0 when inside).
    fn distance(&self, loc: Location) -> usize {
        let gap = |p: usize, lo: usize, len: usize| {
            if p < lo {
                lo - p
            } else if p >= lo + len {
                p - (lo + len) + 1
            } else {
                0
            }
        };
        gap(loc.row, self.row, self.height).max(gap(loc.col, self.col, self.width))
    }

    fn overlaps(&self, other: &EventRect) -> bool {
        self.row < other.row + other.height
            && other.row < self.row + self.height
            && self.col < other.col + other.width
            && other.col < self.col + self.width
    }
}

/// Acquisition dates, either listed or as a regular series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DateSpec {
    List(Vec<NaiveDate>),
    Regular {
        start: NaiveDate,
        interval_days: u32,
        count: usize,
    },
}

impl DateSpec {
    pub fn resolve(&self) -> Vec<NaiveDate> {
        match self {
            DateSpec::List(d) => d.clone(),
            DateSpec::Regular {
                start,
                interval_days,
                count,
            } => regular_dates(*start, *interval_days, *count),
        }
    }
}

pub fn regular_dates(start: NaiveDate, interval_days: u32, count: usize) -> Vec<NaiveDate> {
    (0..count)
        .map(|i| start + Duration::days(i as i64 * interval_days as i64))
        .collect()
}

fn default_margin() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub dates: DateSpec,
    pub bands: Vec<BandParams>,
    pub looks: f64,
    #[serde(default)]
    pub events: Vec<EventRect>,
    pub seed: u64,
    /// Invariant-forest samples drawn at least `sample_margin` pixels away
    /// from every event.
    #[serde(default)]
    pub forest_samples: usize,
    /// Cleared samples drawn at least `sample_margin` pixels inside an event.
    #[serde(default)]
    pub cleared_samples: usize,
    #[serde(default = "default_margin")]
    pub sample_margin: usize,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<Vec<NaiveDate>> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter("scene must have a positive extent".into()));
        }
        if self.bands.is_empty() {
            return Err(Error::InvalidParameter("scene needs at least one band".into()));
        }
        for b in &self.bands {
            if !b.forest_mean_db.is_finite() || !(b.forest_sigma_db >= 0.0) || !b.forest_sigma_db.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "band {}: mean must be finite and sigma non-negative",
                    b.name
                )));
            }
        }
        if !(self.looks > 0.0) || !self.looks.is_finite() {
            return Err(Error::InvalidParameter(format!("looks must be positive, got {}", self.looks)));
        }
        let dates = self.dates.resolve();
        if dates.is_empty() {
            return Err(Error::InvalidParameter("scene needs at least one date".into()));
        }
        for (i, e) in self.events.iter().enumerate() {
            if e.height == 0 || e.width == 0 || e.row + e.height > self.height || e.col + e.width > self.width {
                return Err(Error::OutOfBounds {
                    row: (e.row + e.height) as i64 - 1,
                    col: (e.col + e.width) as i64 - 1,
                    height: self.height,
                    width: self.width,
                });
            }
            if !(e.drop_db > 0.0) || !e.drop_db.is_finite() {
                return Err(Error::InvalidParameter(format!("event {i}: drop_db must be positive")));
            }
            if e.event_date < dates[0] || e.event_date > dates[dates.len() - 1] {
                return Err(Error::InvalidParameter(format!(
                    "event {i}: date {} outside the acquisition range",
                    e.event_date
                )));
            }
            if self.events[..i].iter().any(|o| o.overlaps(e)) {
                return Err(Error::InvalidParameter(format!("event {i} overlaps an earlier event")));
            }
        }
        Ok(dates)
    }
}

/// Generator truth: the event covering each pixel and the noise-free mean
/// levels before and after it.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    pub height: usize,
    pub width: usize,
    pub bands: Vec<BandParams>,
    pub events: Vec<EventRect>,
}

impl SceneTruth {
    pub fn event_at(&self, loc: Location) -> Option<&EventRect> {
        self.events.iter().find(|e| e.contains(loc))
    }

    pub fn event_date(&self, loc: Location) -> Option<NaiveDate> {
        self.event_at(loc).map(|e| e.event_date)
    }

    /// Mean dB level of `band` at `loc` on `date`.
    pub fn mean_db(&self, loc: Location, band: usize, date: NaiveDate) -> f64 {
        let base = self.bands[band].forest_mean_db;
        match self.event_at(loc) {
            Some(e) if date >= e.event_date => base - e.drop_db,
            _ => base,
        }
    }

    /// `row,col,event_date,pre_db,post_db` for every event pixel of one band.
    /// Pixels outside all events keep the band's forest mean throughout.
    pub fn to_csv(&self, band: usize) -> String {
        let mut out = String::from("row,col,event_date,pre_db,post_db\n");
        let pre = self.bands[band].forest_mean_db;
        for r in 0..self.height {
            for c in 0..self.width {
                if let Some(e) = self.event_at(Location::new(r, c)) {
                    out.push_str(&format!(
                        "{r},{c},{},{},{}\n",
                        e.event_date,
                        fmt_sig(pre),
                        fmt_sig(pre - e.drop_db)
                    ));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub stack: RasterStack,
    pub truth: SceneTruth,
    pub forest: SampleSet,
    pub cleared: SampleSet,
}

impl Scene {
    /// Write `stack/`, `forest.csv`, `cleared.csv` and `truth_<band>.csv`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.stack.write(dir.join("stack"))?;
        write_sample_set(&self.forest, dir.join("forest.csv"))?;
        write_sample_set(&self.cleared, dir.join("cleared.csv"))?;
        for (b, band) in self.truth.bands.iter().enumerate() {
            let path = dir.join(format!("truth_{}.csv", band.name));
            fs::write(&path, self.truth.to_csv(b)).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn slice_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn generate_scene(config: &SceneConfig) -> Result<Scene> {
    let dates = config.validate()?;
    let (h, w, nb, nd) = (config.height, config.width, config.bands.len(), dates.len());
    let gamma = Gamma::new(config.looks, 1.0 / config.looks)
        .map_err(|e| Error::InvalidParameter(format!("speckle distribution: {e}")))?;

    // Drop applied per pixel on each date, 0 outside events.
    let mut drop = vec![Array2::<f64>::zeros((h, w)); nd];
    for e in &config.events {
        for (d, date) in dates.iter().enumerate() {
            if *date >= e.event_date {
                drop[d]
                    .slice_mut(ndarray::s![e.row..e.row + e.height, e.col..e.col + e.width])
                    .fill(e.drop_db);
            }
        }
    }

    let mut pixels = Array4::<f64>::zeros((nd, nb, h, w));
    pixels
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(d, mut per_date)| {
            for (b, mut slice) in per_date.axis_iter_mut(Axis(0)).enumerate() {
                let params = &config.bands[b];
                let normal = Normal::new(0.0, params.forest_sigma_db).expect("validated sigma");
                let mut rng = slice_rng(config.seed, (d * nb + b) as u64);
                for ((r, c), v) in slice.indexed_iter_mut() {
                    let level = params.forest_mean_db + normal.sample(&mut rng) - drop[d][[r, c]];
                    let g: f64 = gamma.sample(&mut rng);
                    *v = (10f64.powf(level / 10.0) * g) as f32 as f64;
                }
            }
        });

    let names = config.bands.iter().map(|b| b.name.clone()).collect();
    let stack = RasterStack::new(names, dates, pixels, UnitDomain::Linear)?;

    let mut rng = slice_rng(config.seed, (nd * nb) as u64);
    let margin = config.sample_margin;
    let mut forest_candidates = Vec::new();
    let mut cleared_candidates = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let loc = Location::new(r, c);
            match config.events.iter().find(|e| e.contains(loc)) {
                Some(e) if e.depth(loc) > margin => cleared_candidates.push((loc, e.event_date)),
                Some(_) => {}
                None if config.events.iter().all(|e| e.distance(loc) > margin) => forest_candidates.push(loc),
                None => {}
            }
        }
    }
    let forest = pick(&mut rng, forest_candidates, config.forest_samples, "forest")?;
    let cleared = pick(&mut rng, cleared_candidates, config.cleared_samples, "cleared")?;

    Ok(Scene {
        stack,
        truth: SceneTruth {
            height: h,
            width: w,
            bands: config.bands.clone(),
            events: config.events.clone(),
        },
        forest: SampleSet::forest(forest),
        cleared: SampleSet::cleared(cleared),
    })
}

fn pick<T: Copy, R: Rng>(rng: &mut R, candidates: Vec<T>, count: usize, what: &str) -> Result<Vec<T>> {
    if count > candidates.len() {
        return Err(Error::InvalidParameter(format!(
            "{count} {what} samples requested, only {} eligible pixels",
            candidates.len()
        )));
    }
    let mut idx = sample(rng, candidates.len(), count).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| candidates[i]).collect())
}

pub fn load_scene_config(path: impl AsRef<Path>) -> Result<SceneConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Metadata {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
