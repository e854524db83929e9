//! Raster data model and the grid-stack file format.
//!
//! A grid-stack file is a compact UTF-8 JSON header terminated by `"\n\0"`,
//! followed by raw planes in header order. Every plane is `rows * cols`
//! little-endian `f32` values (row-major) immediately followed by its
//! validity plane (`rows * cols` bytes, each 0 or 1). Static layers hold one
//! plane; dynamic layers hold `n_times` planes, time-major.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &str = "STGAP1";
pub const DTYPE: &str = "f32le";
const HEADER_TERMINATOR: &[u8] = b"\n\0";

/// Name of the single dynamic layer stored in a cube file.
pub const CUBE_LAYER: &str = "ndsi";

/// Closed interval `[lo, hi]` of admissible values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 2]", from = "[f64; 2]")]
pub struct ValueRange {
    pub lo: f64,
    pub hi: f64,
}

impl ValueRange {
    pub const UNIT: ValueRange = ValueRange { lo: 0.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidParam(format!(
                "value range [{lo}, {hi}] must be finite with lo <= hi"
            )));
        }
        Ok(ValueRange { lo, hi })
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    #[inline]
    pub fn clamp(&self, x: f64) -> f64 {
        clamp_to_range(x, *self)
    }
}

impl Default for ValueRange {
    fn default() -> Self {
        ValueRange::UNIT
    }
}

impl From<ValueRange> for [f64; 2] {
    fn from(r: ValueRange) -> Self {
        [r.lo, r.hi]
    }
}

impl From<[f64; 2]> for ValueRange {
    fn from(a: [f64; 2]) -> Self {
        ValueRange { lo: a[0], hi: a[1] }
    }
}

/// `min(hi, max(lo, x))`.
#[inline]
pub fn clamp_to_range(x: f64, range: ValueRange) -> f64 {
    x.max(range.lo).min(range.hi)
}

/// A `(time, rows, cols)` stack of values with a per-cell validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterCube {
    rows: usize,
    cols: usize,
    days: Vec<u32>,
    values: Vec<f32>,
    valid: Vec<bool>,
    range: ValueRange,
    tile_id: String,
}

impl RasterCube {
    pub fn new(
        rows: usize,
        cols: usize,
        days: Vec<u32>,
        values: Vec<f32>,
        valid: Vec<bool>,
        range: ValueRange,
        tile_id: impl Into<String>,
    ) -> Result<Self> {
        let n_times = days.len();
        if rows == 0 || cols == 0 || n_times == 0 {
            return Err(Error::Shape(format!(
                "cube must have positive extent, got {n_times}x{rows}x{cols}"
            )));
        }
        let len = n_times * rows * cols;
        if values.len() != len || valid.len() != len {
            return Err(Error::Shape(format!(
                "expected {len} cells, got {} values and {} validity flags",
                values.len(),
                valid.len()
            )));
        }
        check_days(&days)?;
        let cube = RasterCube {
            rows,
            cols,
            days,
            values,
            valid,
            range,
            tile_id: tile_id.into(),
        };
        cube.check_range(CUBE_LAYER)?;
        Ok(cube)
    }

    /// Builds a fully valid cube from a value function.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        days: Vec<u32>,
        range: ValueRange,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(days.len() * rows * cols);
        for t in 0..days.len() {
            for m in 0..rows {
                for n in 0..cols {
                    values.push(f(t, m, n));
                }
            }
        }
        let valid = vec![true; values.len()];
        RasterCube::new(rows, cols, days, values, valid, range, "")
    }

    fn check_range(&self, layer: &str) -> Result<()> {
        let plane = self.rows * self.cols;
        for (i, (&v, &ok)) in self.values.iter().zip(&self.valid).enumerate() {
            if ok && !self.range.contains(v as f64) {
                return Err(Error::OutOfRange {
                    layer: layer.to_string(),
                    t: i / plane,
                    m: (i % plane) / self.cols,
                    n: i % self.cols,
                    value: v as f64,
                    lo: self.range.lo,
                    hi: self.range.hi,
                });
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn n_times(&self) -> usize {
        self.days.len()
    }
    pub fn days(&self) -> &[u32] {
        &self.days
    }
    pub fn range(&self) -> ValueRange {
        self.range
    }
    pub fn tile_id(&self) -> &str {
        &self.tile_id
    }
    pub fn values(&self) -> &[f32] {
        &self.values
    }
    pub fn valid(&self) -> &[bool] {
        &self.valid
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n_times(), self.rows, self.cols)
    }

    #[inline]
    pub fn index(&self, t: usize, m: usize, n: usize) -> usize {
        (t * self.rows + m) * self.cols + n
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let plane = self.rows * self.cols;
        (idx / plane, (idx % plane) / self.cols, idx % self.cols)
    }

    /// Observed value at `(t, m, n)`, or `None` when the cell is invalid.
    #[inline]
    pub fn get(&self, t: usize, m: usize, n: usize) -> Option<f32> {
        let i = self.index(t, m, n);
        if self.valid[i] {
            Some(self.values[i])
        } else {
            None
        }
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn with_tile_id(mut self, tile_id: impl Into<String>) -> Self {
        self.tile_id = tile_id.into();
        self
    }

    /// Replaces values and validity, re-checking every invariant.
    pub fn with_cells(&self, values: Vec<f32>, valid: Vec<bool>) -> Result<Self> {
        RasterCube::new(
            self.rows,
            self.cols,
            self.days.clone(),
            values,
            valid,
            self.range,
            self.tile_id.clone(),
        )
    }

    pub fn into_parts(self) -> (Vec<f32>, Vec<bool>) {
        (self.values, self.valid)
    }
}

fn check_days(days: &[u32]) -> Result<()> {
    if days.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Shape("days must be strictly increasing".into()));
    }
    Ok(())
}

/// One raster layer: a single plane (static) or `n_times` planes (dynamic).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub values: Vec<f32>,
    pub valid: Vec<bool>,
}

impl Layer {
    pub fn full(values: Vec<f32>) -> Self {
        let valid = vec![true; values.len()];
        Layer { values, valid }
    }

    #[inline]
    pub fn get(&self, i: usize) -> Option<f32> {
        if self.valid[i] {
            Some(self.values[i])
        } else {
            None
        }
    }
}

pub mod layer_names {
    pub const DEM: &str = "dem";
    pub const ASPECT: &str = "aspect";
    pub const SLOPE: &str = "slope";
    pub const LAT: &str = "lat";
    pub const LON: &str = "lon";
    pub const LANDCOVER: &str = "landcover";
    pub const SUN_ZENITH: &str = "sun_zenith";
    pub const SUN_AZIMUTH: &str = "sun_azimuth";
    pub const SENSOR_ZENITH: &str = "sensor_zenith";
    pub const SENSOR_AZIMUTH: &str = "sensor_azimuth";
    pub const ALBEDO: &str = "albedo";
}

/// Static covariate planes plus per-day dynamic planes aligned with a cube.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxLayers {
    rows: usize,
    cols: usize,
    days: Vec<u32>,
    pub dem: Layer,
    pub aspect: Layer,
    pub slope: Layer,
    pub lat: Layer,
    pub lon: Layer,
    pub landcover: Layer,
    pub sun_zenith: Layer,
    pub sun_azimuth: Layer,
    pub sensor_zenith: Layer,
    pub sensor_azimuth: Layer,
    pub albedo: Layer,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum LayerKindTag {
    Static,
    Dynamic,
}

struct AuxSlot {
    name: &'static str,
    kind: LayerKindTag,
    range: Option<ValueRange>,
}

const AUX_SLOTS: [AuxSlot; 11] = {
    use layer_names::*;
    use LayerKindTag::*;
    const ANGLE: Option<ValueRange> = Some(ValueRange { lo: 0.0, hi: 360.0 });
    const ZENITH: Option<ValueRange> = Some(ValueRange { lo: 0.0, hi: 90.0 });
    [
        AuxSlot {
            name: DEM,
            kind: Static,
            range: None,
        },
        AuxSlot {
            name: ASPECT,
            kind: Static,
            range: ANGLE,
        },
        AuxSlot {
            name: SLOPE,
            kind: Static,
            range: ZENITH,
        },
        AuxSlot {
            name: LAT,
            kind: Static,
            range: Some(ValueRange {
                lo: -90.0,
                hi: 90.0,
            }),
        },
        AuxSlot {
            name: LON,
            kind: Static,
            range: Some(ValueRange {
                lo: -180.0,
                hi: 360.0,
            }),
        },
        AuxSlot {
            name: LANDCOVER,
            kind: Static,
            range: None,
        },
        AuxSlot {
            name: SUN_ZENITH,
            kind: Dynamic,
            range: Some(ValueRange { lo: 0.0, hi: 180.0 }),
        },
        AuxSlot {
            name: SUN_AZIMUTH,
            kind: Dynamic,
            range: ANGLE,
        },
        AuxSlot {
            name: SENSOR_ZENITH,
            kind: Dynamic,
            range: ZENITH,
        },
        AuxSlot {
            name: SENSOR_AZIMUTH,
            kind: Dynamic,
            range: ANGLE,
        },
        AuxSlot {
            name: ALBEDO,
            kind: Dynamic,
            range: Some(ValueRange::UNIT),
        },
    ]
};

impl AuxLayers {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rows: usize,
        cols: usize,
        days: Vec<u32>,
        dem: Layer,
        aspect: Layer,
        slope: Layer,
        lat: Layer,
        lon: Layer,
        landcover: Layer,
        sun_zenith: Layer,
        sun_azimuth: Layer,
        sensor_zenith: Layer,
        sensor_azimuth: Layer,
        albedo: Layer,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || days.is_empty() {
            return Err(Error::Shape("aux layers must have positive extent".into()));
        }
        check_days(&days)?;
        let aux = AuxLayers {
            rows,
            cols,
            days,
            dem,
            aspect,
            slope,
            lat,
            lon,
            landcover,
            sun_zenith,
            sun_azimuth,
            sensor_zenith,
            sensor_azimuth,
            albedo,
        };
        aux.validate()?;
        Ok(aux)
    }

    fn layers(&self) -> [&Layer; 11] {
        [
            &self.dem,
            &self.aspect,
            &self.slope,
            &self.lat,
            &self.lon,
            &self.landcover,
            &self.sun_zenith,
            &self.sun_azimuth,
            &self.sensor_zenith,
            &self.sensor_azimuth,
            &self.albedo,
        ]
    }

    fn validate(&self) -> Result<()> {
        let plane = self.rows * self.cols;
        for (slot, layer) in AUX_SLOTS.iter().zip(self.layers()) {
            let expected = match slot.kind {
                LayerKindTag::Static => plane,
                LayerKindTag::Dynamic => plane * self.days.len(),
            };
            if layer.values.len() != expected || layer.valid.len() != expected {
                return Err(Error::Shape(format!(
                    "aux layer '{}' has {} cells, expected {expected}",
                    slot.name,
                    layer.values.len()
                )));
            }
            check_layer_range(slot.name, layer, slot.range, self.cols, plane)?;
            let is_azimuth = matches!(
                slot.name,
                layer_names::ASPECT | layer_names::SUN_AZIMUTH | layer_names::SENSOR_AZIMUTH
            );
            // azimuths are half-open: [0, 360)
            if is_azimuth {
                if let Some(i) =
                    (0..layer.values.len()).find(|&i| layer.valid[i] && layer.values[i] >= 360.0)
                {
                    return Err(Error::OutOfRange {
                        layer: slot.name.to_string(),
                        t: i / plane,
                        m: (i % plane) / self.cols,
                        n: i % self.cols,
                        value: layer.values[i] as f64,
                        lo: 0.0,
                        hi: 360.0,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn days(&self) -> &[u32] {
        &self.days
    }

    /// Errors unless these layers align with `cube` in space and time.
    pub fn check_matches(&self, cube: &RasterCube) -> Result<()> {
        if self.rows != cube.rows() || self.cols != cube.cols() {
            return Err(Error::Shape(format!(
                "aux grid {}x{} does not match cube grid {}x{}",
                self.rows,
                self.cols,
                cube.rows(),
                cube.cols()
            )));
        }
        if self.days != cube.days() {
            return Err(Error::Shape(
                "aux time axis does not match cube days".into(),
            ));
        }
        Ok(())
    }
}

fn check_layer_range(
    name: &str,
    layer: &Layer,
    range: Option<ValueRange>,
    cols: usize,
    plane: usize,
) -> Result<()> {
    for (i, (&v, &ok)) in layer.values.iter().zip(&layer.valid).enumerate() {
        if !ok {
            continue;
        }
        let bad = match range {
            Some(r) => !r.contains(v as f64),
            None => !v.is_finite(),
        };
        if bad {
            let r = range.unwrap_or(ValueRange {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            });
            return Err(Error::OutOfRange {
                layer: name.to_string(),
                t: i / plane,
                m: (i % plane) / cols,
                n: i % cols,
                value: v as f64,
                lo: r.lo,
                hi: r.hi,
            });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerHeader {
    pub name: String,
    pub kind: LayerKind,
    pub range: Option<ValueRange>,
}

/// JSON header of a grid-stack file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridHeader {
    pub magic: String,
    pub rows: usize,
    pub cols: usize,
    pub n_times: usize,
    pub days: Vec<u32>,
    pub layers: Vec<LayerHeader>,
    pub dtype: String,
    #[serde(default)]
    pub tile_id: String,
    pub payload_sha256: String,
}

impl GridHeader {
    fn plane_count(&self, layer: &LayerHeader) -> usize {
        match layer.kind {
            LayerKind::Static => 1,
            LayerKind::Dynamic => self.n_times,
        }
    }

    /// Payload length in bytes implied by the header.
    pub fn payload_len(&self) -> usize {
        let cells = self.rows * self.cols;
        self.layers
            .iter()
            .map(|l| self.plane_count(l) * cells * 5)
            .sum()
    }

    fn validate(&self) -> Result<()> {
        if self.magic != MAGIC {
            return Err(Error::Header(format!("bad magic '{}'", self.magic)));
        }
        if self.dtype != DTYPE {
            return Err(Error::Header(format!("unsupported dtype '{}'", self.dtype)));
        }
        if self.rows == 0 || self.cols == 0 || self.n_times == 0 {
            return Err(Error::Header(format!(
                "degenerate extent {}x{}x{}",
                self.n_times, self.rows, self.cols
            )));
        }
        if self.days.len() != self.n_times {
            return Err(Error::Header(format!(
                "{} days listed for n_times = {}",
                self.days.len(),
                self.n_times
            )));
        }
        if self.days.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Header("days must be strictly increasing".into()));
        }
        for l in &self.layers {
            if let Some(r) = l.range {
                ValueRange::new(r.lo, r.hi)
                    .map_err(|e| Error::Header(format!("layer '{}': {e}", l.name)))?;
            }
        }
        Ok(())
    }
}

/// Raw contents of a grid-stack file.
#[derive(Debug, Clone, PartialEq)]
pub struct GridStack {
    pub header: GridHeader,
    pub layers: Vec<Layer>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl GridStack {
    fn encode_payload(&self) -> Vec<u8> {
        let cells = self.header.rows * self.header.cols;
        let mut out = Vec::with_capacity(self.header.payload_len());
        for layer in &self.layers {
            for (vals, flags) in layer.values.chunks(cells).zip(layer.valid.chunks(cells)) {
                for v in vals {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out.extend(flags.iter().map(|&b| b as u8));
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let payload = self.encode_payload();
        let mut header = self.header.clone();
        header.payload_sha256 = sha256_hex(&payload);
        header.validate()?;
        if payload.len() != header.payload_len() {
            return Err(Error::PayloadSize {
                expected: header.payload_len(),
                found: payload.len(),
            });
        }
        let mut out = serde_json::to_vec(&header)
            .map_err(|e| Error::Header(format!("cannot encode header: {e}")))?;
        out.extend_from_slice(HEADER_TERMINATOR);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .windows(HEADER_TERMINATOR.len())
            .position(|w| w == HEADER_TERMINATOR)
            .ok_or_else(|| Error::Header("missing header terminator".into()))?;
        let header: GridHeader =
            serde_json::from_slice(&bytes[..split]).map_err(|e| Error::Header(e.to_string()))?;
        header.validate()?;
        let payload = &bytes[split + HEADER_TERMINATOR.len()..];
        let expected = header.payload_len();
        if payload.len() != expected {
            return Err(Error::PayloadSize {
                expected,
                found: payload.len(),
            });
        }
        let computed = sha256_hex(payload);
        if computed != header.payload_sha256 {
            return Err(Error::Checksum {
                expected: header.payload_sha256.clone(),
                computed,
            });
        }

        let cells = header.rows * header.cols;
        let mut offset = 0;
        let mut layers = Vec::with_capacity(header.layers.len());
        for lh in &header.layers {
            let planes = header.plane_count(lh);
            let mut values = Vec::with_capacity(planes * cells);
            let mut valid = Vec::with_capacity(planes * cells);
            for _ in 0..planes {
                let raw = &payload[offset..offset + 4 * cells];
                values.extend(
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])),
                );
                offset += 4 * cells;
                for &b in &payload[offset..offset + cells] {
                    match b {
                        0 => valid.push(false),
                        1 => valid.push(true),
                        other => {
                            return Err(Error::ValidityByte {
                                layer: lh.name.clone(),
                                value: other,
                            })
                        }
                    }
                }
                offset += cells;
            }
            let layer = Layer { values, valid };
            check_layer_range(&lh.name, &layer, lh.range, header.cols, cells)?;
            layers.push(layer);
        }
        Ok(GridStack { header, layers })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        GridStack::from_bytes(&bytes)
    }

    fn layer(&self, name: &str) -> Result<&Layer> {
        self.header
            .layers
            .iter()
            .position(|l| l.name == name)
            .map(|i| &self.layers[i])
            .ok_or_else(|| Error::Header(format!("missing layer '{name}'")))
    }
}

impl RasterCube {
    pub fn to_stack(&self) -> GridStack {
        GridStack {
            header: GridHeader {
                magic: MAGIC.into(),
                rows: self.rows,
                cols: self.cols,
                n_times: self.n_times(),
                days: self.days.clone(),
                layers: vec![LayerHeader {
                    name: CUBE_LAYER.into(),
                    kind: LayerKind::Dynamic,
                    range: Some(self.range),
                }],
                dtype: DTYPE.into(),
                tile_id: self.tile_id.clone(),
                payload_sha256: String::new(),
            },
            layers: vec![Layer {
                values: self.values.clone(),
                valid: self.valid.clone(),
            }],
        }
    }

    pub fn from_stack(stack: GridStack) -> Result<Self> {
        let GridStack { header, mut layers } = stack;
        if header.layers.len() != 1
            || header.layers[0].name != CUBE_LAYER
            || header.layers[0].kind != LayerKind::Dynamic
        {
            return Err(Error::Header(format!(
                "a cube file holds exactly one dynamic layer named '{CUBE_LAYER}'"
            )));
        }
        let range = header.layers[0]
            .range
            .ok_or_else(|| Error::Header("cube layer needs a value range".into()))?;
        let layer = layers.pop().expect("one layer");
        RasterCube::new(
            header.rows,
            header.cols,
            header.days,
            layer.values,
            layer.valid,
            range,
            header.tile_id,
        )
    }
}

/// Reads a cube file, enforcing every [`RasterCube`] invariant.
pub fn load_cube(path: &Path) -> Result<RasterCube> {
    RasterCube::from_stack(GridStack::read(path)?)
}

pub fn save_cube(cube: &RasterCube, path: &Path) -> Result<()> {
    cube.to_stack().write(path)
}

impl AuxLayers {
    pub fn to_stack(&self) -> GridStack {
        let layers = self.layers();
        GridStack {
            header: GridHeader {
                magic: MAGIC.into(),
                rows: self.rows,
                cols: self.cols,
                n_times: self.days.len(),
                days: self.days.clone(),
                layers: AUX_SLOTS
                    .iter()
                    .map(|s| LayerHeader {
                        name: s.name.into(),
                        kind: match s.kind {
                            LayerKindTag::Static => LayerKind::Static,
                            LayerKindTag::Dynamic => LayerKind::Dynamic,
                        },
                        range: s.range,
                    })
                    .collect(),
                dtype: DTYPE.into(),
                tile_id: String::new(),
                payload_sha256: String::new(),
            },
            layers: layers.iter().map(|l| (*l).clone()).collect(),
        }
    }

    pub fn from_stack(stack: GridStack) -> Result<Self> {
        use layer_names::*;
        for slot in &AUX_SLOTS {
            let lh = stack
                .header
                .layers
                .iter()
                .find(|l| l.name == slot.name)
                .ok_or_else(|| Error::Header(format!("missing aux layer '{}'", slot.name)))?;
            let want = match slot.kind {
                LayerKindTag::Static => LayerKind::Static,
                LayerKindTag::Dynamic => LayerKind::Dynamic,
            };
            if lh.kind != want {
                return Err(Error::Header(format!(
                    "aux layer '{}' has wrong kind",
                    slot.name
                )));
            }
        }
        let get = |name| stack.layer(name).cloned();
        AuxLayers::new(
            stack.header.rows,
            stack.header.cols,
            stack.header.days.clone(),
            get(DEM)?,
            get(ASPECT)?,
            get(SLOPE)?,
            get(LAT)?,
            get(LON)?,
            get(LANDCOVER)?,
            get(SUN_ZENITH)?,
            get(SUN_AZIMUTH)?,
            get(SENSOR_ZENITH)?,
            get(SENSOR_AZIMUTH)?,
            get(ALBEDO)?,
        )
    }
}

pub fn load_aux(path: &Path) -> Result<AuxLayers> {
    AuxLayers::from_stack(GridStack::read(path)?)
}

pub fn save_aux(aux: &AuxLayers, path: &Path) -> Result<()> {
    aux.to_stack().write(path)
}
