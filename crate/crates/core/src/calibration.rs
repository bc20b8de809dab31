//! Terrain calibration from σ⁰ to γ⁰ and linear/dB conversion.
//!
//! Angles are radians. Azimuths are measured clockwise from north. The local
//! incidence angle is the angle between the terrain normal and the unit
//! vector pointing from the ground back to the sensor.

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stack::{read_raster, write_raster, RasterStack, TimeSeries, UnitDomain};

/// Local incidence angles at or beyond this are masked to no-data (78°).
pub const LIA_MAX: f64 = 78.0 * std::f64::consts::PI / 180.0;

/// Per-pixel terrain slope and aspect (direction the slope faces).
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainGrid {
    pub slope: Array2<f64>,
    pub aspect: Array2<f64>,
}

impl TerrainGrid {
    pub fn new(slope: Array2<f64>, aspect: Array2<f64>) -> Result<Self> {
        if slope.dim() != aspect.dim() {
            return Err(Error::ShapeMismatch(format!(
                "slope {:?} vs aspect {:?}",
                slope.dim(),
                aspect.dim()
            )));
        }
        if let Some(s) = slope
            .iter()
            .find(|s| !(0.0..FRAC_PI_2).contains(*s))
        {
            return Err(Error::InvalidParameter(format!(
                "slope {s} outside [0, pi/2)"
            )));
        }
        Ok(TerrainGrid { slope, aspect })
    }

    pub fn flat(height: usize, width: usize) -> Self {
        TerrainGrid {
            slope: Array2::zeros((height, width)),
            aspect: Array2::zeros((height, width)),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.slope.dim()
    }

    /// Load `slope.raw` and `aspect.raw` described by `meta.json`
    /// (`width`, `height`) from a directory.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta_path = dir.join("meta.json");
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: GridMeta = serde_json::from_str(&text).map_err(|e| Error::Metadata {
            path: meta_path,
            message: e.to_string(),
        })?;
        let slope = read_raster(&dir.join("slope.raw"), meta.height, meta.width)?;
        let aspect = read_raster(&dir.join("aspect.raw"), meta.height, meta.width)?;
        TerrainGrid::new(slope, aspect)
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (height, width) = self.dim();
        let meta = serde_json::to_string_pretty(&GridMeta { width, height })?;
        let meta_path = dir.join("meta.json");
        fs::write(&meta_path, meta + "\n").map_err(|e| Error::io(&meta_path, e))?;
        write_raster(&dir.join("slope.raw"), self.slope.view())?;
        write_raster(&dir.join("aspect.raw"), self.aspect.view())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GridMeta {
    width: usize,
    height: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IncidenceAngle {
    Scalar(f64),
    Grid(Array2<f64>),
}

/// Ellipsoid incidence angle and ground-projected look direction
/// (sensor towards target).
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionGeometry {
    pub incidence_angle: IncidenceAngle,
    pub look_azimuth: f64,
}

impl AcquisitionGeometry {
    pub fn scalar(incidence_angle: f64, look_azimuth: f64) -> Result<Self> {
        check_incidence(incidence_angle)?;
        Ok(AcquisitionGeometry {
            incidence_angle: IncidenceAngle::Scalar(incidence_angle),
            look_azimuth,
        })
    }

    fn incidence_at(&self, r: usize, c: usize) -> f64 {
        match &self.incidence_angle {
            IncidenceAngle::Scalar(t) => *t,
            IncidenceAngle::Grid(g) => g[[r, c]],
        }
    }
}

fn check_incidence(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < FRAC_PI_2 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "incidence angle {theta} outside (0, pi/2)"
        )))
    }
}

/// cos(LIA) = cos s·cos θ − sin s·sin θ·cos(aspect − look_azimuth).
///
/// The normal tilts towards the aspect direction and the sensor sits at
/// azimuth `look_azimuth + π`, elevation `π/2 − θ`. Flat pixels use a vertical
/// normal regardless of aspect.
fn lia_at(slope: f64, aspect: f64, theta: f64, look_azimuth: f64) -> f64 {
    let lia = if slope == 0.0 {
        theta
    } else {
        let cos_lia = slope.cos() * theta.cos() - slope.sin() * theta.sin() * (aspect - look_azimuth).cos();
        cos_lia.clamp(-1.0, 1.0).acos()
    };
    lia.min(FRAC_PI_2 - f64::EPSILON)
}

/// Per-pixel local incidence angle, clamped below π/2.
pub fn local_incidence_angle(terrain: &TerrainGrid, geom: &AcquisitionGeometry) -> Result<Array2<f64>> {
    let dim = terrain.dim();
    if terrain.aspect.dim() != dim {
        return Err(Error::ShapeMismatch(format!(
            "slope {:?} vs aspect {:?}",
            dim,
            terrain.aspect.dim()
        )));
    }
    match &geom.incidence_angle {
        IncidenceAngle::Scalar(t) => check_incidence(*t)?,
        IncidenceAngle::Grid(g) => {
            if g.dim() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "incidence grid {:?} vs terrain {:?}",
                    g.dim(),
                    dim
                )));
            }
            for &t in g.iter() {
                check_incidence(t)?;
            }
        }
    }
    let mut out = Array2::zeros(dim);
    Zip::indexed(&mut out)
        .and(&terrain.slope)
        .and(&terrain.aspect)
        .par_for_each(|(r, c), o, &s, &a| {
            *o = lia_at(s, a, geom.incidence_at(r, c), geom.look_azimuth);
        });
    Ok(out)
}

/// γ⁰ = σ⁰ / cos(LIA). Pixels with LIA ≥ `lia_max` become NaN.
pub fn sigma0_to_gamma0(sigma0: ArrayView2<'_, f64>, lia: ArrayView2<'_, f64>, lia_max: f64) -> Result<Array2<f64>> {
    if sigma0.dim() != lia.dim() {
        return Err(Error::ShapeMismatch(format!(
            "sigma0 {:?} vs LIA {:?}",
            sigma0.dim(),
            lia.dim()
        )));
    }
    let mut out = Array2::zeros(sigma0.dim());
    Zip::from(&mut out)
        .and(&sigma0)
        .and(&lia)
        .par_for_each(|o, &s, &a| {
            *o = if a.is_nan() || a >= lia_max || a < 0.0 {
                f64::NAN
            } else {
                s / a.cos()
            };
        });
    Ok(out)
}

/// Apply [`sigma0_to_gamma0`] to every slice of a linear σ⁰ stack.
pub fn calibrate_stack(stack: &RasterStack, lia: ArrayView2<'_, f64>, lia_max: f64) -> Result<RasterStack> {
    stack.unit_domain().expect(UnitDomain::Linear)?;
    let mut out = stack.clone();
    for d in 0..stack.dates().len() {
        for b in 0..stack.bands().len() {
            let g = sigma0_to_gamma0(stack.slice(d, b), lia, lia_max)?;
            out.slice_mut(d, b).assign(&g);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DbDirection {
    ToDb,
    ToLinear,
}

impl DbDirection {
    pub fn target(self) -> UnitDomain {
        match self {
            DbDirection::ToDb => UnitDomain::Db,
            DbDirection::ToLinear => UnitDomain::Linear,
        }
    }
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn to_linear(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// Convert values in place. NaN passes through; `ToDb` rejects values ≤ 0.
pub fn db_convert_slice(values: &mut [f64], direction: DbDirection) -> Result<()> {
    match direction {
        DbDirection::ToDb => {
            if let Some(&v) = values.iter().find(|v| **v <= 0.0) {
                return Err(Error::InvalidValue {
                    value: v,
                    context: "dB conversion needs strictly positive power".into(),
                });
            }
            values.iter_mut().for_each(|v| *v = to_db(*v));
        }
        DbDirection::ToLinear => values.iter_mut().for_each(|v| *v = to_linear(*v)),
    }
    Ok(())
}

pub fn db_convert_grid(grid: ArrayView2<'_, f64>, direction: DbDirection) -> Result<Array2<f64>> {
    let mut out = grid.to_owned();
    db_convert_slice(out.as_slice_mut().expect("owned grid is contiguous"), direction)?;
    Ok(out)
}

pub fn db_convert_series(series: &TimeSeries, direction: DbDirection) -> Result<TimeSeries> {
    check_source(series.unit_domain, direction)?;
    let mut out = series.clone();
    db_convert_slice(&mut out.values, direction)?;
    out.unit_domain = direction.target();
    Ok(out)
}

pub fn db_convert_stack(stack: &RasterStack, direction: DbDirection) -> Result<RasterStack> {
    check_source(stack.unit_domain(), direction)?;
    let mut pixels = stack.pixels().to_owned();
    if direction == DbDirection::ToDb {
        if let Some(&v) = pixels.iter().find(|v| **v <= 0.0) {
            return Err(Error::InvalidValue {
                value: v,
                context: "dB conversion needs strictly positive power".into(),
            });
        }
    }
    pixels.par_mapv_inplace(|v| match direction {
        DbDirection::ToDb => to_db(v),
        DbDirection::ToLinear => to_linear(v),
    });
    stack.with_pixels(pixels, direction.target())
}

fn check_source(domain: UnitDomain, direction: DbDirection) -> Result<()> {
    match direction {
        DbDirection::ToDb => domain.expect(UnitDomain::Linear),
        DbDirection::ToLinear => domain.expect(UnitDomain::Db),
    }
}
