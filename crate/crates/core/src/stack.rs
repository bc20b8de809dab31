//! Raster time-series stacks, sample sets and per-location series.
//!
//! A stack lives in a directory holding `meta.json` and one flat raster per
//! (date, band) named `<date>_<band>.raw`. Rasters are row-major float32,
//! little-endian. NaN marks no-data in both unit domains.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use ndarray::{Array2, Array4, ArrayView2, ArrayViewMut2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnitDomain {
    #[serde(rename = "linear-power")]
    Linear,
    #[serde(rename = "dB")]
    Db,
}

impl UnitDomain {
    pub fn as_str(self) -> &'static str {
        match self {
            UnitDomain::Linear => "linear-power",
            UnitDomain::Db => "dB",
        }
    }

    pub(crate) fn expect(self, expected: UnitDomain) -> Result<()> {
        if self == expected {
            Ok(())
        } else {
            Err(Error::UnitDomain {
                expected: expected.as_str(),
                found: self.as_str(),
            })
        }
    }
}

/// Pixel position in the stack grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Location {
    pub row: usize,
    pub col: usize,
}

impl Location {
    pub fn new(row: usize, col: usize) -> Self {
        Location { row, col }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

impl TryFrom<(i64, i64)> for Location {
    type Error = Error;

    fn try_from((row, col): (i64, i64)) -> Result<Self> {
        if row < 0 || col < 0 {
            return Err(Error::OutOfBounds {
                row,
                col,
                height: 0,
                width: 0,
            });
        }
        Ok(Location::new(row as usize, col as usize))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StackMeta {
    width: usize,
    height: usize,
    bands: Vec<String>,
    dates: Vec<NaiveDate>,
    unit_domain: UnitDomain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    geotransform: Option<[f64; 6]>,
}

/// Co-registered multi-date, multi-band backscatter cube indexed
/// `(date, band, row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterStack {
    bands: Vec<String>,
    dates: Vec<NaiveDate>,
    pixels: Array4<f64>,
    unit_domain: UnitDomain,
    geotransform: Option<[f64; 6]>,
}

impl RasterStack {
    pub fn new(
        bands: Vec<String>,
        dates: Vec<NaiveDate>,
        pixels: Array4<f64>,
        unit_domain: UnitDomain,
    ) -> Result<Self> {
        let stack = RasterStack {
            bands,
            dates,
            pixels,
            unit_domain,
            geotransform: None,
        };
        stack.validate()?;
        Ok(stack)
    }

    pub fn with_geotransform(mut self, geotransform: Option<[f64; 6]>) -> Self {
        self.geotransform = geotransform;
        self
    }

    /// Build a stack from a per-slice generator `f(date_index, band_index)`.
    pub fn from_slices<F>(
        bands: Vec<String>,
        dates: Vec<NaiveDate>,
        height: usize,
        width: usize,
        unit_domain: UnitDomain,
        mut f: F,
    ) -> Result<Self>
    where
        F: FnMut(usize, usize) -> Array2<f64>,
    {
        let mut pixels = Array4::zeros((dates.len(), bands.len(), height, width));
        for d in 0..dates.len() {
            for b in 0..bands.len() {
                let slice = f(d, b);
                if slice.dim() != (height, width) {
                    return Err(Error::ShapeMismatch(format!(
                        "slice ({d}, {b}) is {:?}, stack is {:?}",
                        slice.dim(),
                        (height, width)
                    )));
                }
                pixels
                    .index_axis_mut(Axis(0), d)
                    .index_axis_mut(Axis(0), b)
                    .assign(&slice);
            }
        }
        RasterStack::new(bands, dates, pixels, unit_domain)
    }

    fn validate(&self) -> Result<()> {
        let (nd, nb, _, _) = self.pixels.dim();
        if nd != self.dates.len() || nb != self.bands.len() {
            return Err(Error::ShapeMismatch(format!(
                "pixel cube has {nd} dates x {nb} bands, metadata {} x {}",
                self.dates.len(),
                self.bands.len()
            )));
        }
        check_dates(&self.dates)?;
        let mut seen = HashSet::new();
        for band in &self.bands {
            if !seen.insert(band) {
                return Err(Error::Metadata {
                    path: PathBuf::new(),
                    message: format!("duplicate band {band:?}"),
                });
            }
        }
        for ((d, b, r, c), &v) in self.pixels.indexed_iter() {
            let bad = match self.unit_domain {
                UnitDomain::Linear => v.is_infinite() || v < 0.0,
                UnitDomain::Db => v.is_infinite(),
            };
            if bad {
                return Err(Error::InvalidValue {
                    value: v,
                    context: format!(
                        "{} {} ({r}, {c}) [{}]",
                        self.dates[d],
                        self.bands[b],
                        self.unit_domain.as_str()
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().3
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().2
    }

    pub fn bands(&self) -> &[String] {
        &self.bands
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn unit_domain(&self) -> UnitDomain {
        self.unit_domain
    }

    pub fn geotransform(&self) -> Option<[f64; 6]> {
        self.geotransform
    }

    pub fn pixels(&self) -> &Array4<f64> {
        &self.pixels
    }

    pub fn band_index(&self, band: &str) -> Result<usize> {
        self.bands
            .iter()
            .position(|b| b == band)
            .ok_or_else(|| Error::UnknownBand(band.to_string()))
    }

    pub fn slice(&self, date: usize, band: usize) -> ArrayView2<'_, f64> {
        self.pixels
            .index_axis(Axis(0), date)
            .index_axis_move(Axis(0), band)
    }

    pub fn slice_mut(&mut self, date: usize, band: usize) -> ArrayViewMut2<'_, f64> {
        self.pixels
            .index_axis_mut(Axis(0), date)
            .index_axis_move(Axis(0), band)
    }

    pub fn check_location(&self, loc: Location) -> Result<()> {
        if loc.row >= self.height() || loc.col >= self.width() {
            return Err(Error::OutOfBounds {
                row: loc.row as i64,
                col: loc.col as i64,
                height: self.height(),
                width: self.width(),
            });
        }
        Ok(())
    }

    /// Single-band stack holding only `band`.
    pub fn select_band(&self, band: &str) -> Result<RasterStack> {
        let b = self.band_index(band)?;
        let pixels = self.pixels.select(Axis(1), &[b]);
        Ok(RasterStack {
            bands: vec![band.to_string()],
            dates: self.dates.clone(),
            pixels,
            unit_domain: self.unit_domain,
            geotransform: self.geotransform,
        })
    }

    /// Stack restricted to the given date indices (ascending).
    pub fn select_dates(&self, indices: &[usize]) -> Result<RasterStack> {
        let dates = indices.iter().map(|&i| self.dates[i]).collect();
        let pixels = self.pixels.select(Axis(0), indices);
        let out = RasterStack {
            bands: self.bands.clone(),
            dates,
            pixels,
            unit_domain: self.unit_domain,
            geotransform: self.geotransform,
        };
        check_dates(&out.dates)?;
        Ok(out)
    }

    /// Replace the pixel cube and unit domain, keeping dates, bands and
    /// geotransform.
    pub fn with_pixels(&self, pixels: Array4<f64>, unit_domain: UnitDomain) -> Result<RasterStack> {
        RasterStack::new(self.bands.clone(), self.dates.clone(), pixels, unit_domain)
            .map(|s| s.with_geotransform(self.geotransform))
    }

    /// Concatenate single-band stacks sharing dates and shape.
    pub fn stack_bands(parts: Vec<RasterStack>) -> Result<RasterStack> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("no bands to stack".into()))?;
        let views: Vec<_> = parts.iter().map(|p| p.pixels.view()).collect();
        for p in &parts {
            if p.dates != first.dates || p.unit_domain != first.unit_domain {
                return Err(Error::ShapeMismatch(
                    "band stacks differ in dates or unit domain".into(),
                ));
            }
        }
        let pixels = ndarray::concatenate(Axis(1), &views)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let bands = parts.iter().flat_map(|p| p.bands.clone()).collect();
        RasterStack::new(bands, first.dates.clone(), pixels, first.unit_domain)
            .map(|s| s.with_geotransform(first.geotransform))
    }

    /// Time series at `location` for `band`, in stack date order.
    pub fn extract_series(&self, location: Location, band: &str) -> Result<TimeSeries> {
        let b = self.band_index(band)?;
        self.check_location(location)?;
        let values = self
            .pixels
            .slice(ndarray::s![.., b, location.row, location.col])
            .to_vec();
        Ok(TimeSeries {
            dates: self.dates.clone(),
            values,
            band: band.to_string(),
            location,
            unit_domain: self.unit_domain,
        })
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<RasterStack> {
        load_stack(dir)
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        write_stack(self, dir)
    }
}

fn check_dates(dates: &[NaiveDate]) -> Result<()> {
    for w in dates.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Dates(format!("{} followed by {}", w[0], w[1])));
        }
    }
    Ok(())
}

pub fn raster_file_name(date: NaiveDate, band: &str) -> String {
    format!("{}_{}.raw", date.format("%Y-%m-%d"), band)
}

/// Read one float32 LE row-major raster of the given shape.
pub fn read_raster(path: &Path, height: usize, width: usize) -> Result<Array2<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = height * width * 4;
    if bytes.len() != expected {
        return Err(Error::RasterSize {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(Array2::from_shape_vec((height, width), values).expect("length checked above"))
}

/// Write a raster as float32 LE, row-major. Values are rounded to f32.
pub fn write_raster(path: &Path, grid: ArrayView2<'_, f64>) -> Result<()> {
    let mut bytes = Vec::with_capacity(grid.len() * 4);
    for &v in grid.iter() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_stack(dir: impl AsRef<Path>) -> Result<RasterStack> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut meta: StackMeta = serde_json::from_str(&text).map_err(|e| Error::Metadata {
        path: meta_path.clone(),
        message: e.to_string(),
    })?;
    if meta.bands.is_empty() || meta.dates.is_empty() {
        return Err(Error::Metadata {
            path: meta_path,
            message: "stack needs at least one band and one date".into(),
        });
    }
    meta.dates.sort();
    if let Some(w) = meta.dates.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Dates(format!("duplicate date {}", w[0])));
    }

    let expected = meta.dates.len() * meta.bands.len();
    let found = meta
        .dates
        .iter()
        .flat_map(|d| meta.bands.iter().map(move |b| raster_file_name(*d, b)))
        .filter(|name| dir.join(name).is_file())
        .count();
    if found != expected {
        return Err(Error::SliceCountMismatch { expected, found });
    }

    let (h, w) = (meta.height, meta.width);
    let mut pixels = Array4::zeros((meta.dates.len(), meta.bands.len(), h, w));
    for (d, date) in meta.dates.iter().enumerate() {
        for (b, band) in meta.bands.iter().enumerate() {
            let grid = read_raster(&dir.join(raster_file_name(*date, band)), h, w)?;
            pixels
                .index_axis_mut(Axis(0), d)
                .index_axis_mut(Axis(0), b)
                .assign(&grid);
        }
    }
    Ok(RasterStack::new(meta.bands, meta.dates, pixels, meta.unit_domain)?
        .with_geotransform(meta.geotransform))
}

pub fn write_stack(stack: &RasterStack, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = StackMeta {
        width: stack.width(),
        height: stack.height(),
        bands: stack.bands.clone(),
        dates: stack.dates.clone(),
        unit_domain: stack.unit_domain,
        geotransform: stack.geotransform,
    };
    let meta_path = dir.join(META_FILE);
    let text = serde_json::to_string_pretty(&meta)?;
    fs::write(&meta_path, text + "\n").map_err(|e| Error::io(&meta_path, e))?;
    for (d, date) in stack.dates.iter().enumerate() {
        for (b, band) in stack.bands.iter().enumerate() {
            write_raster(&dir.join(raster_file_name(*date, band)), stack.slice(d, b))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SampleClass {
    #[serde(rename = "invariant-forest")]
    InvariantForest,
    #[serde(rename = "cleared-forest")]
    ClearedForest,
}

impl SampleClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleClass::InvariantForest => "invariant-forest",
            SampleClass::ClearedForest => "cleared-forest",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "invariant-forest" | "forest" => Some(SampleClass::InvariantForest),
            "cleared-forest" | "cleared" => Some(SampleClass::ClearedForest),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sample {
    pub location: Location,
    pub reference_date: Option<NaiveDate>,
}

/// Reference locations of one class. Cleared samples carry the date the
/// clearing was observed by the reference system; forest samples carry none.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    class: SampleClass,
    samples: Vec<Sample>,
}

impl SampleSet {
    pub fn new(class: SampleClass, samples: Vec<Sample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            match (class, s.reference_date) {
                (SampleClass::ClearedForest, None) => {
                    return Err(Error::InvalidParameter(format!(
                        "cleared-forest sample {i} at {} has no reference_date",
                        s.location
                    )))
                }
                (SampleClass::InvariantForest, Some(_)) => {
                    return Err(Error::InvalidParameter(format!(
                        "invariant-forest sample {i} at {} carries a reference_date",
                        s.location
                    )))
                }
                _ => {}
            }
        }
        Ok(SampleSet { class, samples })
    }

    pub fn forest(locations: impl IntoIterator<Item = Location>) -> Self {
        SampleSet {
            class: SampleClass::InvariantForest,
            samples: locations
                .into_iter()
                .map(|location| Sample {
                    location,
                    reference_date: None,
                })
                .collect(),
        }
    }

    pub fn cleared(samples: impl IntoIterator<Item = (Location, NaiveDate)>) -> Self {
        SampleSet {
            class: SampleClass::ClearedForest,
            samples: samples
                .into_iter()
                .map(|(location, date)| Sample {
                    location,
                    reference_date: Some(date),
                })
                .collect(),
        }
    }

    pub fn class(&self) -> SampleClass {
        self.class
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn locations(&self) -> impl Iterator<Item = Location> + '_ {
        self.samples.iter().map(|s| s.location)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn check_bounds(&self, height: usize, width: usize) -> Result<()> {
        for s in &self.samples {
            if s.location.row >= height || s.location.col >= width {
                return Err(Error::OutOfBounds {
                    row: s.location.row as i64,
                    col: s.location.col as i64,
                    height,
                    width,
                });
            }
        }
        Ok(())
    }

    pub fn earliest_reference_date(&self) -> Option<NaiveDate> {
        self.samples.iter().filter_map(|s| s.reference_date).min()
    }
}

#[derive(Debug, Deserialize)]
struct SampleRow {
    row: String,
    col: String,
    class: String,
    #[serde(default)]
    reference_date: Option<String>,
}

/// Load a `row,col,class,reference_date` CSV. When `bounds` is given as
/// `(height, width)` every location must fall inside it.
pub fn load_sample_set(path: impl AsRef<Path>, bounds: Option<(usize, usize)>) -> Result<SampleSet> {
    let path = path.as_ref();
    let err = |line: usize, message: String| Error::SampleSet {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => err(0, format!("{other:?}")),
        })?;

    let mut class = None;
    let mut samples = Vec::new();
    for (i, record) in reader.deserialize::<SampleRow>().enumerate() {
        let line = i + 2;
        let rec = record.map_err(|e| err(line, e.to_string()))?;
        let row: i64 = rec.row.parse().map_err(|_| err(line, format!("bad row {:?}", rec.row)))?;
        let col: i64 = rec.col.parse().map_err(|_| err(line, format!("bad col {:?}", rec.col)))?;
        let this_class = SampleClass::parse(&rec.class)
            .ok_or_else(|| err(line, format!("unknown class {:?}", rec.class)))?;
        match class {
            None => class = Some(this_class),
            Some(c) if c != this_class => {
                return Err(err(line, "a sample set holds a single class".into()))
            }
            _ => {}
        }
        let location = Location::try_from((row, col)).map_err(|e| err(line, e.to_string()))?;
        if let Some((h, w)) = bounds {
            if location.row >= h || location.col >= w {
                return Err(err(
                    line,
                    format!("location {location} outside {h}x{w} extent"),
                ));
            }
        }
        let reference_date = match rec.reference_date.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(
                NaiveDate::parse_from_str(s, "%Y-%m-%d")
                    .map_err(|e| err(line, format!("bad reference_date {s:?}: {e}")))?,
            ),
        };
        match (this_class, reference_date) {
            (SampleClass::ClearedForest, None) => {
                return Err(err(line, "cleared-forest row missing reference_date".into()))
            }
            (SampleClass::InvariantForest, Some(_)) => {
                return Err(err(line, "invariant-forest row carries a reference_date".into()))
            }
            _ => {}
        }
        samples.push(Sample {
            location,
            reference_date,
        });
    }
    let class = class.ok_or_else(|| err(1, "sample set is empty".into()))?;
    SampleSet::new(class, samples)
}

pub fn write_sample_set(set: &SampleSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("row,col,class,reference_date\n");
    for s in &set.samples {
        let date = s
            .reference_date
            .map(|d| d.format("%Y-%m-%d").to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.location.row,
            s.location.col,
            set.class.as_str(),
            date
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Backscatter at one pixel and band across all stack dates.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
    pub band: String,
    pub location: Location,
    pub unit_domain: UnitDomain,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values that are not no-data.
    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(|v| !v.is_nan())
    }
}
