//! Deterministic synthetic snow scenes with known ground truth.
//!
//! Terrain is seeded lattice value noise plus an east-west ramp. Snow cover
//! follows a sigmoid of height above a seasonal, latitude-dependent
//! snowline, perturbed by smooth noise that is AR(1) in time.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AuxLayers, Layer, RasterCube, ValueRange};

/// Parameters of a synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub rows: usize,
    pub cols: usize,
    pub n_days: usize,
    pub seed: u64,
    /// Day-of-year of the first slice; slices are consecutive days.
    pub start_day: u32,
    pub dem_base: f64,
    /// Elevation span in metres.
    pub relief: f64,
    /// Cell edge length in metres, used for slope.
    pub cell_size: f64,
    pub snowline_base: f64,
    pub snowline_amplitude: f64,
    /// Day-of-year on which the snowline is lowest.
    pub snowline_day_of_min: f64,
    /// Snowline rise in metres per degree of latitude southward.
    pub lat_gradient: f64,
    pub lat_north: f64,
    pub lat_south: f64,
    pub lon_west: f64,
    pub lon_step: f64,
    /// Sigmoid width in metres.
    pub transition_scale: f64,
    pub noise_sigma: f64,
    /// Lag-one correlation of the noise field between consecutive days.
    pub noise_rho: f64,
    /// Coarsest noise lattice spacing, in cells.
    pub corr_length: f64,
    pub albedo_coupling: f64,
    pub albedo_offset: f64,
    pub albedo_noise: f64,
    pub tile_id: String,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            rows: 64,
            cols: 64,
            n_days: 60,
            seed: 0,
            start_day: 150,
            dem_base: 0.0,
            relief: 2500.0,
            cell_size: 500.0,
            snowline_base: 900.0,
            snowline_amplitude: 800.0,
            snowline_day_of_min: 20.0,
            lat_gradient: 60.0,
            lat_north: 70.0,
            lat_south: 66.0,
            lon_west: -50.0,
            lon_step: 0.1,
            transition_scale: 120.0,
            noise_sigma: 0.02,
            noise_rho: 0.7,
            corr_length: 6.0,
            albedo_coupling: 0.7,
            albedo_offset: 0.15,
            albedo_noise: 0.08,
            tile_id: "synthetic".into(),
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParam(msg.into()));
        if self.rows == 0 || self.cols == 0 || self.n_days == 0 {
            return bad("scene dimensions must be positive");
        }
        if self.start_day as usize + self.n_days > 367 || self.start_day == 0 {
            return bad("scene days must stay within 1..=366");
        }
        if !(self.noise_sigma >= 0.0) || !(self.albedo_noise >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        if !(self.relief >= 0.0) || !(self.cell_size > 0.0) || !(self.transition_scale > 0.0) {
            return bad("relief must be >= 0; cell size and transition scale > 0");
        }
        if !(self.corr_length >= 1.0) {
            return bad("correlation length must be at least one cell");
        }
        if !(-1.0..=1.0).contains(&self.noise_rho) {
            return bad("noise_rho must lie in [-1, 1]");
        }
        if !(-90.0..=90.0).contains(&self.lat_north) || !(-90.0..=90.0).contains(&self.lat_south) {
            return bad("latitudes must lie in [-90, 90]");
        }
        let lon_east = self.lon_west + self.lon_step * (self.cols.saturating_sub(1)) as f64;
        if !(-180.0..=360.0).contains(&self.lon_west) || !(-180.0..=360.0).contains(&lon_east) {
            return bad("longitudes must lie in [-180, 360]");
        }
        let finite = [
            self.dem_base,
            self.snowline_base,
            self.snowline_amplitude,
            self.snowline_day_of_min,
            self.lat_gradient,
            self.albedo_coupling,
            self.albedo_offset,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("scene parameters must be finite");
        }
        Ok(())
    }

    pub fn days(&self) -> Vec<u32> {
        (0..self.n_days as u32)
            .map(|t| self.start_day + t)
            .collect()
    }

    pub fn latitude(&self, m: usize) -> f64 {
        if self.rows == 1 {
            return 0.5 * (self.lat_north + self.lat_south);
        }
        let f = m as f64 / (self.rows - 1) as f64;
        self.lat_north + f * (self.lat_south - self.lat_north)
    }

    /// Snowline elevation on day-of-year `day` at latitude `lat`.
    pub fn snowline(&self, day: f64, lat: f64) -> f64 {
        let lat_ref = 0.5 * (self.lat_north + self.lat_south);
        self.snowline_base
            - self.snowline_amplitude * (2.0 * PI * (day - self.snowline_day_of_min) / 365.0).cos()
            + self.lat_gradient * (lat_ref - lat)
    }
}

/// Streams of the scene generator; each draws from its own RNG stream.
mod stream {
    pub const DEM: u64 = 1;
    pub const NDSI_NOISE: u64 = 2;
    pub const ALBEDO: u64 = 3;
    pub const ANGLES: u64 = 4;
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Bilinear lattice value noise summed over `octaves`, normalised to [0, 1].
///
/// The coarsest lattice has spacing `spacing` cells; each further octave
/// halves the spacing and the amplitude.
pub fn value_noise(
    rows: usize,
    cols: usize,
    spacing: f64,
    octaves: u32,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    let mut amp = 1.0;
    let mut total = 0.0;
    let mut s = spacing.max(1.0);
    for _ in 0..octaves.max(1) {
        let lr = (rows as f64 / s).ceil() as usize + 2;
        let lc = (cols as f64 / s).ceil() as usize + 2;
        let lattice: Vec<f64> = (0..lr * lc).map(|_| rng.gen::<f64>()).collect();
        for m in 0..rows {
            let y = m as f64 / s;
            let (y0, fy) = (y.floor() as usize, y.fract());
            for n in 0..cols {
                let x = n as f64 / s;
                let (x0, fx) = (x.floor() as usize, x.fract());
                let at = |i: usize, j: usize| lattice[i * lc + j];
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
                let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
                out[m * cols + n] += amp * (top * (1.0 - fy) + bottom * fy);
            }
        }
        total += amp;
        amp *= 0.5;
        s = (s * 0.5).max(1.0);
    }
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Rescales a field to zero mean and unit standard deviation; constant
/// fields become all zeros.
fn standardize(field: &mut [f64]) {
    let n = field.len() as f64;
    let mean = field.iter().sum::<f64>() / n;
    let var = field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    for v in field.iter_mut() {
        *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
    }
}

/// Slope and aspect planes derived from a DEM.
#[derive(Debug, Clone, PartialEq)]
pub struct Terrain {
    /// Degrees in [0, 90].
    pub slope: Vec<f64>,
    /// Compass bearing of steepest descent, degrees in [0, 360).
    pub aspect: Vec<f64>,
    /// Cells whose gradient magnitude is below 1e-9; their aspect is 0.
    pub flat: Vec<bool>,
}

const FLAT_GRADIENT: f64 = 1e-9;

/// Horn's 8-neighbour gradient in the interior, one-sided differences on
/// the border. Row 0 is north and columns increase eastward.
pub fn derive_slope_aspect(
    dem: &[f64],
    rows: usize,
    cols: usize,
    cell_size: f64,
) -> Result<Terrain> {
    if rows < 2 || cols < 2 {
        return Err(Error::Shape(format!(
            "DEM must be at least 2x2, got {rows}x{cols}"
        )));
    }
    if dem.len() != rows * cols {
        return Err(Error::Shape(format!(
            "DEM has {} cells, expected {}",
            dem.len(),
            rows * cols
        )));
    }
    if !(cell_size > 0.0) {
        return Err(Error::InvalidParam("cell size must be positive".into()));
    }
    Ok(terrain_any(dem, rows, cols, cell_size))
}

fn terrain_any(dem: &[f64], rows: usize, cols: usize, cs: f64) -> Terrain {
    let z = |m: usize, n: usize| dem[m * cols + n];
    let mut slope = vec![0.0; rows * cols];
    let mut aspect = vec![0.0; rows * cols];
    let mut flat = vec![true; rows * cols];
    for m in 0..rows {
        for n in 0..cols {
            let interior = m > 0 && m + 1 < rows && n > 0 && n + 1 < cols;
            let (dx, dnorth) = if interior {
                let (a, b, c) = (z(m - 1, n - 1), z(m - 1, n), z(m - 1, n + 1));
                let (d, f) = (z(m, n - 1), z(m, n + 1));
                let (g, h, i) = (z(m + 1, n - 1), z(m + 1, n), z(m + 1, n + 1));
                (
                    ((c + 2.0 * f + i) - (a + 2.0 * d + g)) / (8.0 * cs),
                    ((a + 2.0 * b + c) - (g + 2.0 * h + i)) / (8.0 * cs),
                )
            } else {
                let diff = |lo: f64, hi: f64, span: usize| {
                    if span == 0 {
                        0.0
                    } else {
                        (hi - lo) / (span as f64 * cs)
                    }
                };
                let (w, e) = (n.saturating_sub(1), (n + 1).min(cols - 1));
                let (nn, s) = (m.saturating_sub(1), (m + 1).min(rows - 1));
                (
                    diff(z(m, w), z(m, e), e - w),
                    diff(z(s, n), z(nn, n), s - nn),
                )
            };
            let mag = dx.hypot(dnorth);
            let k = m * cols + n;
            slope[k] = mag.atan().to_degrees();
            if mag >= FLAT_GRADIENT {
                flat[k] = false;
                let mut bearing = (-dx).atan2(-dnorth).to_degrees();
                if bearing < 0.0 {
                    bearing += 360.0;
                }
                if bearing >= 360.0 {
                    bearing = 0.0;
                }
                aspect[k] = bearing;
            }
        }
    }
    Terrain {
        slope,
        aspect,
        flat,
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Elevation band code, 1 (lowest) to 4.
fn landcover_code(z: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 1.0;
    }
    let band = ((z - lo) / (hi - lo) * 4.0).floor().clamp(0.0, 3.0);
    band + 1.0
}

/// Solar declination in degrees for a day-of-year.
fn declination(day: f64) -> f64 {
    23.44 * (2.0 * PI * (284.0 + day) / 365.0).sin()
}

fn to_f32_layer(values: Vec<f64>) -> Layer {
    Layer::full(values.into_iter().map(|v| v as f32).collect())
}

fn wrap_degrees(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    if w as f32 >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Generates the truth cube (fully valid) and its auxiliary layers.
pub fn generate_scene(spec: &SceneSpec) -> Result<(RasterCube, AuxLayers)> {
    spec.validate()?;
    let (rows, cols, nt) = (spec.rows, spec.cols, spec.n_days);
    let plane = rows * cols;
    let days = spec.days();

    let mut dem_rng = rng_for(spec.seed, stream::DEM);
    let field = value_noise(rows, cols, spec.corr_length * 2.0, 3, &mut dem_rng);
    let dem: Vec<f64> = (0..plane)
        .map(|k| {
            let ramp = if cols > 1 {
                (k % cols) as f64 / (cols - 1) as f64
            } else {
                0.0
            };
            spec.dem_base + spec.relief * (0.6 * field[k] + 0.4 * ramp)
        })
        .collect();
    let terrain = terrain_any(&dem, rows, cols, spec.cell_size);
    let lat: Vec<f64> = (0..plane).map(|k| spec.latitude(k / cols)).collect();
    let lon: Vec<f64> = (0..plane)
        .map(|k| spec.lon_west + spec.lon_step * (k % cols) as f64)
        .collect();
    let (zlo, zhi) = dem
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &z| {
            (lo.min(z), hi.max(z))
        });
    let landcover: Vec<f64> = dem.iter().map(|&z| landcover_code(z, zlo, zhi)).collect();

    let mut noise_rng = rng_for(spec.seed, stream::NDSI_NOISE);
    let innovation = (1.0 - spec.noise_rho * spec.noise_rho).max(0.0).sqrt();
    let mut noise = vec![0.0; plane];
    let mut ndsi = vec![0.0f32; nt * plane];
    for t in 0..nt {
        let mut fresh = value_noise(rows, cols, spec.corr_length, 3, &mut noise_rng);
        standardize(&mut fresh);
        for k in 0..plane {
            noise[k] = if t == 0 {
                fresh[k]
            } else {
                spec.noise_rho * noise[k] + innovation * fresh[k]
            };
        }
        let day = days[t] as f64;
        for k in 0..plane {
            let line = spec.snowline(day, lat[k]);
            let v = sigmoid((dem[k] - line) / spec.transition_scale) + spec.noise_sigma * noise[k];
            ndsi[t * plane + k] = v.clamp(0.0, 1.0) as f32;
        }
    }

    let mut albedo_rng = rng_for(spec.seed, stream::ALBEDO);
    let albedo_dist = Normal::new(0.0, spec.albedo_noise.max(0.0))
        .map_err(|e| Error::InvalidParam(e.to_string()))?;
    let albedo: Vec<f64> = ndsi
        .iter()
        .map(|&v| {
            let a = spec.albedo_coupling * v as f64
                + spec.albedo_offset
                + albedo_dist.sample(&mut albedo_rng);
            a.clamp(0.0, 1.0)
        })
        .collect();

    let mut angle_rng = rng_for(spec.seed, stream::ANGLES);
    let mut sun_zenith = Vec::with_capacity(nt * plane);
    let mut sun_azimuth = Vec::with_capacity(nt * plane);
    let mut sensor_zenith = Vec::with_capacity(nt * plane);
    let mut sensor_azimuth = Vec::with_capacity(nt * plane);
    let spacing = spec.corr_length * 4.0;
    for &day in &days {
        let decl = declination(day as f64);
        let overpass: f64 = angle_rng.gen_range(-30.0..30.0);
        let heading: f64 = angle_rng.gen_range(0.0..360.0);
        let f_sun = value_noise(rows, cols, spacing, 1, &mut angle_rng);
        let f_view = value_noise(rows, cols, spacing, 2, &mut angle_rng);
        for k in 0..plane {
            sun_zenith.push((lat[k] - decl + 6.0 * (f_sun[k] - 0.5)).clamp(0.0, 180.0));
            sun_azimuth.push(wrap_degrees(180.0 + overpass + 20.0 * (f_sun[k] - 0.5)));
            sensor_zenith.push((65.0 * f_view[k]).clamp(0.0, 90.0));
            sensor_azimuth.push(wrap_degrees(heading + 90.0 * (f_view[k] - 0.5)));
        }
    }

    let cube = RasterCube::new(
        rows,
        cols,
        days.clone(),
        ndsi,
        vec![true; nt * plane],
        ValueRange::UNIT,
        spec.tile_id.clone(),
    )?;
    let aux = AuxLayers::new(
        rows,
        cols,
        days,
        to_f32_layer(dem),
        to_f32_layer(terrain.aspect.into_iter().map(wrap_degrees).collect()),
        to_f32_layer(terrain.slope),
        to_f32_layer(lat),
        to_f32_layer(lon),
        to_f32_layer(landcover),
        to_f32_layer(sun_zenith),
        to_f32_layer(sun_azimuth),
        to_f32_layer(sensor_zenith),
        to_f32_layer(sensor_azimuth),
        to_f32_layer(albedo),
    )?;
    Ok((cube, aux))
}
