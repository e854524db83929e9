//! Predictor table assembly: auxiliary covariates plus the spatial (SN) and
//! temporal (TN) neighbour means of observed values.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AuxLayers, RasterCube};

/// Predictors, declared in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Feature {
    Day,
    Lat,
    Lon,
    #[serde(rename = "DEM")]
    Dem,
    Asp,
    Slo,
    #[serde(rename = "LAC")]
    Lac,
    SoA,
    SoZ,
    SeA,
    SeZ,
    Albedo,
    #[serde(rename = "SN")]
    Sn,
    #[serde(rename = "TN")]
    Tn,
}

impl Feature {
    pub const ALL: [Feature; 14] = [
        Feature::Day,
        Feature::Lat,
        Feature::Lon,
        Feature::Dem,
        Feature::Asp,
        Feature::Slo,
        Feature::Lac,
        Feature::SoA,
        Feature::SoZ,
        Feature::SeA,
        Feature::SeZ,
        Feature::Albedo,
        Feature::Sn,
        Feature::Tn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Day => "Day",
            Feature::Lat => "Lat",
            Feature::Lon => "Lon",
            Feature::Dem => "DEM",
            Feature::Asp => "Asp",
            Feature::Slo => "Slo",
            Feature::Lac => "LAC",
            Feature::SoA => "SoA",
            Feature::SoZ => "SoZ",
            Feature::SeA => "SeA",
            Feature::SeZ => "SeZ",
            Feature::Albedo => "Albedo",
            Feature::Sn => "SN",
            Feature::Tn => "TN",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .iter()
            .copied()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParam(format!("unknown feature '{s}'")))
    }
}

/// Which predictors to build, and the SN/TN half-window radii.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    features: Vec<Feature>,
    pub sw: usize,
    pub tw: usize,
    pub normalize: bool,
}

impl FeatureSpec {
    pub fn new(features: &[Feature], sw: usize, tw: usize, normalize: bool) -> Result<Self> {
        let mut features = features.to_vec();
        features.sort();
        features.dedup();
        let spec = FeatureSpec {
            features,
            sw,
            tw,
            normalize,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Every predictor, `sw = tw = 1`, normalised.
    pub fn full() -> Self {
        FeatureSpec::new(&Feature::ALL, 1, 1, true).expect("valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::InvalidParam("feature set is empty".into()));
        }
        if self.features.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParam(
                "features must be in canonical order".into(),
            ));
        }
        if self.features.contains(&Feature::Sn) && self.sw == 0 {
            return Err(Error::InvalidParam("spatial window must be >= 1".into()));
        }
        if self.features.contains(&Feature::Tn) && self.tw == 0 {
            return Err(Error::InvalidParam("temporal window must be >= 1".into()));
        }
        Ok(())
    }

    /// Features in canonical order.
    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn contains(&self, f: Feature) -> bool {
        self.features.contains(&f)
    }

    pub fn with_windows(mut self, sw: usize, tw: usize) -> Result<Self> {
        self.sw = sw;
        self.tw = tw;
        self.validate()?;
        Ok(self)
    }
}

/// A `(t, m, n)` cube coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub t: usize,
    pub m: usize,
    pub n: usize,
}

impl Cell {
    pub fn new(t: usize, m: usize, n: usize) -> Self {
        Cell { t, m, n }
    }
}

/// Which cube cells become rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    /// Observed cells; targets are the observed values.
    AllValid,
    /// Gap cells; no target.
    AllInvalid,
    /// Listed cells in the given order; targets are attached only when every
    /// listed cell is observed.
    Cells(Vec<Cell>),
}

/// Min-max scaling parameters of one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        if self.max == self.min {
            0.0
        } else {
            (x - self.min) / (self.max - self.min)
        }
    }
}

/// Row-per-sample predictor table with explicit missingness.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    features: Vec<Feature>,
    values: Vec<f64>,
    missing: Vec<bool>,
    target: Option<Vec<f64>>,
    cells: Vec<Cell>,
    norm: Option<Vec<MinMax>>,
}

impl FeatureMatrix {
    /// Builds a matrix from row-major values; `None` marks a missing cell.
    pub fn from_rows(
        features: Vec<Feature>,
        rows: &[Vec<Option<f64>>],
        target: Option<Vec<f64>>,
        cells: Option<Vec<Cell>>,
    ) -> Result<Self> {
        let p = features.len();
        let mut values = Vec::with_capacity(rows.len() * p);
        let mut missing = Vec::with_capacity(rows.len() * p);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::Shape(format!(
                    "row {i} has {} cells, expected {p}",
                    r.len()
                )));
            }
            for v in r {
                values.push(v.unwrap_or(f64::NAN));
                missing.push(v.is_none());
            }
        }
        let cells = cells.unwrap_or_else(|| (0..rows.len()).map(|i| Cell::new(0, 0, i)).collect());
        FeatureMatrix::from_parts(features, values, missing, target, cells)
    }

    pub fn from_parts(
        features: Vec<Feature>,
        values: Vec<f64>,
        missing: Vec<bool>,
        target: Option<Vec<f64>>,
        cells: Vec<Cell>,
    ) -> Result<Self> {
        let n = cells.len();
        let p = features.len();
        if values.len() != n * p || missing.len() != n * p {
            return Err(Error::Shape(format!(
                "{} values / {} flags for {n} rows x {p} features",
                values.len(),
                missing.len()
            )));
        }
        if let Some(t) = &target {
            if t.len() != n {
                return Err(Error::Shape(format!("{} targets for {n} rows", t.len())));
            }
            if t.iter().any(|y| !y.is_finite()) {
                return Err(Error::InvalidParam("targets must be finite".into()));
            }
        }
        Ok(FeatureMatrix {
            features,
            values,
            missing,
            target,
            cells,
            norm: None,
        })
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }
    pub fn n_rows(&self) -> usize {
        self.cells.len()
    }
    pub fn n_features(&self) -> usize {
        self.features.len()
    }
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }
    pub fn target(&self) -> Option<&[f64]> {
        self.target.as_deref()
    }
    pub fn norm(&self) -> Option<&[MinMax]> {
        self.norm.as_deref()
    }

    /// Raw row slice; entries flagged missing hold unspecified values.
    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        let p = self.features.len();
        &self.values[r * p..(r + 1) * p]
    }

    #[inline]
    pub fn row_missing(&self, r: usize) -> &[bool] {
        let p = self.features.len();
        &self.missing[r * p..(r + 1) * p]
    }

    #[inline]
    pub fn get(&self, r: usize, f: usize) -> Option<f64> {
        let i = r * self.features.len() + f;
        if self.missing[i] {
            None
        } else {
            Some(self.values[i])
        }
    }

    pub fn column_of(&self, f: Feature) -> Option<usize> {
        self.features.iter().position(|&x| x == f)
    }

    /// Overwrites the stored payload of every missing cell.
    pub fn fill_missing_payload(&mut self, value: f64) {
        for (v, &m) in self.values.iter_mut().zip(&self.missing) {
            if m {
                *v = value;
            }
        }
    }

    pub fn with_target(mut self, target: Option<Vec<f64>>) -> Result<Self> {
        if let Some(t) = &target {
            if t.len() != self.n_rows() {
                return Err(Error::Shape("target length mismatch".into()));
            }
        }
        self.target = target;
        Ok(self)
    }

    /// Rows at `rows`, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let p = self.features.len();
        let mut values = Vec::with_capacity(rows.len() * p);
        let mut missing = Vec::with_capacity(rows.len() * p);
        for &r in rows {
            values.extend_from_slice(self.row(r));
            missing.extend_from_slice(self.row_missing(r));
        }
        FeatureMatrix {
            features: self.features.clone(),
            values,
            missing,
            target: self
                .target
                .as_ref()
                .map(|t| rows.iter().map(|&r| t[r]).collect()),
            cells: rows.iter().map(|&r| self.cells[r]).collect(),
            norm: self.norm.clone(),
        }
    }

    /// Row-wise concatenation of matrices sharing the same columns.
    pub fn concat(parts: &[FeatureMatrix]) -> Result<FeatureMatrix> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Empty("nothing to concatenate".into()))?;
        let mut out = first.clone();
        for m in &parts[1..] {
            if m.features != out.features {
                return Err(Error::Shape("column sets differ".into()));
            }
            out.values.extend_from_slice(&m.values);
            out.missing.extend_from_slice(&m.missing);
            out.cells.extend_from_slice(&m.cells);
            out.target = match (out.target.take(), &m.target) {
                (Some(mut a), Some(b)) => {
                    a.extend_from_slice(b);
                    Some(a)
                }
                _ => None,
            };
        }
        Ok(out)
    }

    /// Per-column min/max over non-missing entries. Empty columns get (0, 0).
    pub fn min_max(&self) -> Vec<MinMax> {
        let p = self.n_features();
        let mut mm = vec![
            MinMax {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY
            };
            p
        ];
        for r in 0..self.n_rows() {
            for (f, acc) in mm.iter_mut().enumerate() {
                if let Some(v) = self.get(r, f) {
                    acc.min = acc.min.min(v);
                    acc.max = acc.max.max(v);
                }
            }
        }
        for acc in &mut mm {
            if acc.min > acc.max {
                *acc = MinMax { min: 0.0, max: 0.0 };
            }
        }
        mm
    }
}

/// Applies min-max scaling; missing entries stay missing.
pub fn normalize_apply(matrix: &FeatureMatrix, params: &[MinMax]) -> Result<FeatureMatrix> {
    if params.len() != matrix.n_features() {
        return Err(Error::Shape(format!(
            "{} normalisation pairs for {} features",
            params.len(),
            matrix.n_features()
        )));
    }
    let p = params.len();
    let mut out = matrix.clone();
    for (i, (v, &miss)) in out.values.iter_mut().zip(&matrix.missing).enumerate() {
        if !miss {
            *v = params[i % p].apply(*v);
        }
    }
    out.norm = Some(params.to_vec());
    Ok(out)
}

/// Mean of observed values in the `(2 sw + 1)^2` window around `(m, n)` on
/// slice `t`, excluding the centre, truncated at the grid edge.
pub fn spatial_neighbor_mean(
    cube: &RasterCube,
    t: usize,
    m: usize,
    n: usize,
    sw: usize,
) -> Option<f64> {
    let m_lo = m.saturating_sub(sw);
    let m_hi = (m + sw).min(cube.rows() - 1);
    let n_lo = n.saturating_sub(sw);
    let n_hi = (n + sw).min(cube.cols() - 1);
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for mm in m_lo..=m_hi {
        for nn in n_lo..=n_hi {
            if mm == m && nn == n {
                continue;
            }
            if let Some(v) = cube.get(t, mm, nn) {
                sum += v as f64;
                count += 1;
            }
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Mean of observed values at pixel `(m, n)` over slices `t - tw ..= t + tw`,
/// excluding `t`, truncated at the ends of the time axis.
pub fn temporal_neighbor_mean(
    cube: &RasterCube,
    t: usize,
    m: usize,
    n: usize,
    tw: usize,
) -> Option<f64> {
    let lo = t.saturating_sub(tw);
    let hi = (t + tw).min(cube.n_times() - 1);
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for tt in lo..=hi {
        if tt == t {
            continue;
        }
        if let Some(v) = cube.get(tt, m, n) {
            sum += v as f64;
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

fn resolve_selection(cube: &RasterCube, selection: &Selection) -> Result<Vec<Cell>> {
    let cells: Vec<Cell> = match selection {
        Selection::AllValid | Selection::AllInvalid => {
            let want = matches!(selection, Selection::AllValid);
            cube.valid()
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == want)
                .map(|(i, _)| {
                    let (t, m, n) = cube.coords(i);
                    Cell::new(t, m, n)
                })
                .collect()
        }
        Selection::Cells(list) => {
            let (nt, rows, cols) = cube.shape();
            if let Some(c) = list
                .iter()
                .find(|c| c.t >= nt || c.m >= rows || c.n >= cols)
            {
                return Err(Error::Shape(format!(
                    "cell ({}, {}, {}) outside {nt}x{rows}x{cols} cube",
                    c.t, c.m, c.n
                )));
            }
            list.clone()
        }
    };
    if cells.is_empty() {
        return Err(Error::Empty("feature selection matched no cells".into()));
    }
    Ok(cells)
}

/// Builds the predictor table for `selection`.
///
/// SN and TN are computed from the observed cells of `cube` only.
pub fn assemble_features(
    cube: &RasterCube,
    aux: &AuxLayers,
    spec: &FeatureSpec,
    selection: &Selection,
) -> Result<FeatureMatrix> {
    assemble_with_neighbors(cube, cube, aux, spec, selection)
}

/// As [`assemble_features`], but SN and TN are read from `neighbors`, which
/// must share the cube's shape. Used by iterative reconstruction.
pub fn assemble_with_neighbors(
    cube: &RasterCube,
    neighbors: &RasterCube,
    aux: &AuxLayers,
    spec: &FeatureSpec,
    selection: &Selection,
) -> Result<FeatureMatrix> {
    spec.validate()?;
    aux.check_matches(cube)?;
    if neighbors.shape() != cube.shape() {
        return Err(Error::Shape(
            "neighbour source shape differs from cube".into(),
        ));
    }
    let cells = resolve_selection(cube, selection)?;
    let p = spec.features().len();
    let plane = cube.rows() * cube.cols();
    let mut values = vec![0.0f64; cells.len() * p];
    let mut missing = vec![false; cells.len() * p];

    values
        .par_chunks_mut(p)
        .zip(missing.par_chunks_mut(p))
        .zip(cells.par_iter())
        .for_each(|((vals, miss), c)| {
            let s = c.m * cube.cols() + c.n;
            let d = c.t * plane + s;
            for (j, &f) in spec.features().iter().enumerate() {
                let v = match f {
                    Feature::Day => Some(cube.days()[c.t] as f32),
                    Feature::Lat => aux.lat.get(s),
                    Feature::Lon => aux.lon.get(s),
                    Feature::Dem => aux.dem.get(s),
                    Feature::Asp => aux.aspect.get(s),
                    Feature::Slo => aux.slope.get(s),
                    Feature::Lac => aux.landcover.get(s),
                    Feature::SoA => aux.sun_azimuth.get(d),
                    Feature::SoZ => aux.sun_zenith.get(d),
                    Feature::SeA => aux.sensor_azimuth.get(d),
                    Feature::SeZ => aux.sensor_zenith.get(d),
                    Feature::Albedo => aux.albedo.get(d),
                    Feature::Sn => {
                        vals[j] = spatial_neighbor_mean(neighbors, c.t, c.m, c.n, spec.sw)
                            .unwrap_or(f64::NAN);
                        miss[j] = vals[j].is_nan();
                        continue;
                    }
                    Feature::Tn => {
                        vals[j] = temporal_neighbor_mean(neighbors, c.t, c.m, c.n, spec.tw)
                            .unwrap_or(f64::NAN);
                        miss[j] = vals[j].is_nan();
                        continue;
                    }
                };
                vals[j] = v.map_or(f64::NAN, |x| x as f64);
                miss[j] = v.is_none();
            }
        });

    let target = match selection {
        Selection::AllInvalid => None,
        _ => cells
            .iter()
            .map(|c| cube.get(c.t, c.m, c.n).map(|v| v as f64))
            .collect::<Option<Vec<f64>>>(),
    };
    let matrix =
        FeatureMatrix::from_parts(spec.features().to_vec(), values, missing, target, cells)?;
    if spec.normalize {
        let params = matrix.min_max();
        normalize_apply(&matrix, &params)
    } else {
        Ok(matrix)
    }
}

/// Seeded uniform partition into (train, test); each part keeps input order.
pub fn split_train_test(
    matrix: &FeatureMatrix,
    train_fraction: f64,
    seed: u64,
) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let n = matrix.n_rows();
    let (train, test) = split_indices(n, train_fraction, seed)?;
    Ok((matrix.select_rows(&train), matrix.select_rows(&test)))
}

/// Index-level form of [`split_train_test`].
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParam(format!(
            "train fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    if n == 0 {
        return Err(Error::Empty("cannot split an empty matrix".into()));
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

const CSV_TAIL: [&str; 4] = ["t", "m", "n", "target"];

/// Writes the matrix as CSV: feature columns, then `t,m,n,target`.
/// Missing cells and absent targets are empty fields.
pub fn write_csv<W: Write>(matrix: &FeatureMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = matrix
        .features
        .iter()
        .map(|f| f.name())
        .chain(CSV_TAIL)
        .collect();
    w.write_record(&header)?;
    for r in 0..matrix.n_rows() {
        let mut rec: Vec<String> = (0..matrix.n_features())
            .map(|f| matrix.get(r, f).map(|v| v.to_string()).unwrap_or_default())
            .collect();
        let c = matrix.cells[r];
        rec.push(c.t.to_string());
        rec.push(c.m.to_string());
        rec.push(c.n.to_string());
        rec.push(
            matrix
                .target()
                .map(|t| t[r].to_string())
                .unwrap_or_default(),
        );
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<FeatureMatrix> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let n_cols = header.len();
    if n_cols < CSV_TAIL.len() || header.iter().skip(n_cols - 4).ne(CSV_TAIL) {
        return Err(Error::Schema(
            "feature CSV must end with t,m,n,target".into(),
        ));
    }
    let features = header
        .iter()
        .take(n_cols - 4)
        .map(Feature::from_str)
        .collect::<Result<Vec<_>>>()?;
    let p = features.len();
    let parse = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::Schema(format!("bad number '{s}'")))
    };
    let parse_idx = |s: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::Schema(format!("bad index '{s}'")))
    };
    let (mut values, mut missing, mut cells, mut target) = (vec![], vec![], vec![], vec![]);
    let mut all_targets = true;
    for rec in rdr.records() {
        let rec = rec?;
        for s in rec.iter().take(p) {
            if s.is_empty() {
                values.push(f64::NAN);
                missing.push(true);
            } else {
                values.push(parse(s)?);
                missing.push(false);
            }
        }
        cells.push(Cell::new(
            parse_idx(&rec[p])?,
            parse_idx(&rec[p + 1])?,
            parse_idx(&rec[p + 2])?,
        ));
        if rec[p + 3].is_empty() {
            all_targets = false;
        } else {
            target.push(parse(&rec[p + 3])?);
        }
    }
    let target = (all_targets && !cells.is_empty()).then_some(target);
    FeatureMatrix::from_parts(features, values, missing, target, cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ValueRange;
    use crate::synth::{generate_scene, SceneSpec};

    fn slice_cube(rows: usize, cols: usize, vals: &[Option<f32>]) -> RasterCube {
        let values = vals.iter().map(|v| v.unwrap_or(0.9)).collect();
        let valid = vals.iter().map(|v| v.is_some()).collect();
        RasterCube::new(rows, cols, vec![1], values, valid, ValueRange::UNIT, "").unwrap()
    }

    fn series_cube(vals: &[Option<f32>]) -> RasterCube {
        let values = vals.iter().map(|v| v.unwrap_or(0.9)).collect();
        let valid = vals.iter().map(|v| v.is_some()).collect();
        let days = (1..=vals.len() as u32).collect();
        RasterCube::new(1, 1, days, values, valid, ValueRange::UNIT, "").unwrap()
    }

    #[test]
    fn sn_uniform_field() {
        let cube = slice_cube(3, 3, &[Some(0.4); 9]);
        let v = spatial_neighbor_mean(&cube, 0, 1, 1, 1).unwrap();
        assert!((v - 0.4f32 as f64).abs() < 1e-15);
    }

    #[test]
    fn sn_three_valid_neighbours() {
        let mut vals = [None; 9];
        vals[0] = Some(0.1);
        vals[5] = Some(0.2);
        vals[7] = Some(0.3);
        let cube = slice_cube(3, 3, &vals);
        let v = spatial_neighbor_mean(&cube, 0, 1, 1, 1).unwrap();
        let expected = (0.1f32 as f64 + 0.2f32 as f64 + 0.3f32 as f64) / 3.0;
        assert_eq!(v, expected);
        assert!((v - 0.2).abs() < 1e-7);
    }

    #[test]
    fn sn_no_valid_neighbour_is_missing() {
        let mut vals = [None; 9];
        vals[4] = Some(0.5);
        let cube = slice_cube(3, 3, &vals);
        assert_eq!(spatial_neighbor_mean(&cube, 0, 1, 1, 1), None);
    }

    #[test]
    fn sn_truncates_at_corner() {
        let cube = slice_cube(2, 2, &[Some(0.0), Some(0.25), Some(0.5), Some(0.75)]);
        assert_eq!(spatial_neighbor_mean(&cube, 0, 0, 0, 1), Some(0.5));
    }

    #[test]
    fn tn_examples() {
        let c = series_cube(&[Some(0.3), None, Some(0.3)]);
        assert!((temporal_neighbor_mean(&c, 1, 0, 0, 1).unwrap() - 0.3).abs() < 1e-7);

        let c = series_cube(&[Some(0.25), Some(0.9), Some(0.75)]);
        assert_eq!(temporal_neighbor_mean(&c, 1, 0, 0, 1), Some(0.5));

        let c = series_cube(&[Some(0.2), None, Some(0.6)]);
        assert!((temporal_neighbor_mean(&c, 1, 0, 0, 1).unwrap() - 0.4).abs() < 1e-7);

        let c = series_cube(&[Some(0.2), None, Some(0.6)]);
        assert_eq!(temporal_neighbor_mean(&c, 0, 0, 0, 1), None);
    }

    #[test]
    fn normalize_examples() {
        let m = FeatureMatrix::from_rows(
            vec![Feature::Dem, Feature::Slo],
            &[
                vec![Some(0.0), Some(3.0)],
                vec![Some(5.0), Some(3.0)],
                vec![Some(10.0), Some(3.0)],
                vec![None, Some(3.0)],
            ],
            None,
            None,
        )
        .unwrap();
        let params = m.min_max();
        let out = normalize_apply(&m, &params).unwrap();
        let col0: Vec<Option<f64>> = (0..4).map(|r| out.get(r, 0)).collect();
        assert_eq!(col0, vec![Some(0.0), Some(0.5), Some(1.0), None]);
        assert!((0..4).all(|r| out.get(r, 1) == Some(0.0)));

        let test =
            FeatureMatrix::from_rows(vec![Feature::Dem], &[vec![Some(12.0)]], None, None).unwrap();
        let out = normalize_apply(
            &test,
            &[MinMax {
                min: 0.0,
                max: 10.0,
            }],
        )
        .unwrap();
        assert!((out.get(0, 0).unwrap() - 1.2).abs() < 1e-15);
    }

    #[test]
    fn normalize_rejects_wrong_arity() {
        let m =
            FeatureMatrix::from_rows(vec![Feature::Dem], &[vec![Some(1.0)]], None, None).unwrap();
        assert!(normalize_apply(&m, &[]).is_err());
    }

    fn dummy(n: usize) -> FeatureMatrix {
        let rows: Vec<Vec<Option<f64>>> = (0..n).map(|i| vec![Some(i as f64)]).collect();
        FeatureMatrix::from_rows(
            vec![Feature::Dem],
            &rows,
            Some((0..n).map(|i| i as f64).collect()),
            None,
        )
        .unwrap()
    }

    #[test]
    fn split_seventy_thirty() {
        let (tr, te) = split_train_test(&dummy(100), 0.7, 11).unwrap();
        assert_eq!((tr.n_rows(), te.n_rows()), (70, 30));
        let mut all: Vec<usize> = tr.cells().iter().chain(te.cells()).map(|c| c.n).collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn split_single_row_rounds_half_up() {
        let (tr, te) = split_train_test(&dummy(1), 0.5, 3).unwrap();
        assert_eq!((tr.n_rows(), te.n_rows()), (1, 0));
    }

    #[test]
    fn split_deterministic_and_validated() {
        let a = split_train_test(&dummy(50), 0.7, 9).unwrap();
        let b = split_train_test(&dummy(50), 0.7, 9).unwrap();
        assert_eq!(a, b);
        let c = split_train_test(&dummy(50), 0.7, 10).unwrap();
        assert_ne!(a.0.cells(), c.0.cells());
        assert!(split_train_test(&dummy(5), 1.5, 0).is_err());
        assert!(split_train_test(&dummy(5), 0.0, 0).is_err());
    }

    fn small_scene(rows: usize, cols: usize, days: usize) -> (RasterCube, AuxLayers) {
        let spec = SceneSpec {
            rows,
            cols,
            n_days: days,
            seed: 5,
            ..SceneSpec::default()
        };
        generate_scene(&spec).unwrap()
    }

    #[test]
    fn single_cell_cube_has_missing_neighbours() {
        let (cube, aux) = small_scene(1, 1, 1);
        let m = assemble_features(&cube, &aux, &FeatureSpec::full(), &Selection::AllValid).unwrap();
        assert_eq!(m.n_rows(), 1);
        let sn = m.column_of(Feature::Sn).unwrap();
        let tn = m.column_of(Feature::Tn).unwrap();
        assert_eq!(m.get(0, sn), None);
        assert_eq!(m.get(0, tn), None);
        for f in 0..12 {
            assert!(m.get(0, f).is_some(), "feature {f} populated");
        }
    }

    #[test]
    fn counting_rows_all_valid() {
        let (cube, aux) = small_scene(8, 8, 5);
        let m = assemble_features(&cube, &aux, &FeatureSpec::full(), &Selection::AllValid).unwrap();
        assert_eq!(m.n_rows(), 320);
        assert_eq!(m.target().unwrap().len(), 320);
    }

    #[test]
    fn aux_only_spec_columns() {
        use Feature::*;
        let (cube, aux) = small_scene(4, 4, 3);
        let feats = [Dem, Asp, Slo, Lac, SoA, SoZ, SeA, SeZ, Albedo];
        let spec = FeatureSpec::new(&feats, 1, 1, false).unwrap();
        let m = assemble_features(&cube, &aux, &spec, &Selection::AllValid).unwrap();
        assert_eq!(m.features(), &feats);
    }

    #[test]
    fn all_invalid_selection_has_no_target() {
        let (cube, aux) = small_scene(4, 4, 3);
        let mut valid = cube.valid().to_vec();
        valid[5] = false;
        let masked = cube.with_cells(cube.values().to_vec(), valid).unwrap();
        let m =
            assemble_features(&masked, &aux, &FeatureSpec::full(), &Selection::AllInvalid).unwrap();
        assert_eq!(m.n_rows(), 1);
        assert!(m.target().is_none());
        assert!(
            assemble_features(&cube, &aux, &FeatureSpec::full(), &Selection::AllInvalid).is_err()
        );
    }

    #[test]
    fn union_of_selections_is_concatenation() {
        let (cube, aux) = small_scene(5, 5, 4);
        let spec = FeatureSpec::new(&Feature::ALL, 2, 1, false).unwrap();
        let a = vec![Cell::new(0, 1, 1), Cell::new(3, 4, 0)];
        let b = vec![Cell::new(2, 2, 3)];
        let ma = assemble_features(&cube, &aux, &spec, &Selection::Cells(a.clone())).unwrap();
        let mb = assemble_features(&cube, &aux, &spec, &Selection::Cells(b.clone())).unwrap();
        let ab: Vec<Cell> = a.into_iter().chain(b).collect();
        let mab = assemble_features(&cube, &aux, &spec, &Selection::Cells(ab)).unwrap();
        let joined = FeatureMatrix::concat(&[ma, mb]).unwrap();
        assert_eq!(joined.cells(), mab.cells());
        assert_eq!(joined.target(), mab.target());
        for r in 0..mab.n_rows() {
            for f in 0..mab.n_features() {
                assert_eq!(joined.get(r, f), mab.get(r, f));
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(FeatureSpec::new(&[Feature::Sn], 0, 1, false).is_err());
        assert!(FeatureSpec::new(&[Feature::Tn], 1, 0, false).is_err());
        assert!(FeatureSpec::new(&[], 1, 1, false).is_err());
        let s = FeatureSpec::new(&[Feature::Tn, Feature::Day, Feature::Day], 1, 1, false).unwrap();
        assert_eq!(s.features(), &[Feature::Day, Feature::Tn]);
    }

    #[test]
    fn csv_round_trip_keeps_missing() {
        let m = FeatureMatrix::from_rows(
            vec![Feature::Dem, Feature::Sn],
            &[
                vec![Some(1.5), None],
                vec![Some(0.1), Some(0.30000000000000004)],
            ],
            Some(vec![0.25, 0.5]),
            Some(vec![Cell::new(0, 1, 2), Cell::new(3, 4, 5)]),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("DEM,SN,t,m,n,target\n1.5,,0,1,2,0.25\n"));
        let back = read_csv(&buf[..]).unwrap();
        assert_eq!(back.cells(), m.cells());
        assert_eq!(back.target(), m.target());
        for r in 0..2 {
            for f in 0..2 {
                assert_eq!(back.get(r, f), m.get(r, f));
            }
        }
    }
}
