use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Cell;
use crate::grid::RasterCube;
use crate::synth::value_noise;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    /// Cells drawn uniformly without replacement.
    Uniform,
    /// Spatially coherent patches from thresholded smooth noise.
    Blob,
}

impl MaskKind {
    pub fn name(self) -> &'static str {
        match self {
            MaskKind::Uniform => "uniform",
            MaskKind::Blob => "blob",
        }
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(MaskKind::Uniform),
            "blob" => Ok(MaskKind::Blob),
            _ => Err(Error::InvalidParam(format!(
                "unknown mask kind '{s}' (uniform|blob)"
            ))),
        }
    }
}

/// Simulated cloud mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub kind: MaskKind,
    /// Fraction of currently valid cells to hide, in (0, 1).
    pub ratio: f64,
    /// Allowed gap between achieved and requested blob coverage.
    pub tolerance: f64,
    /// Coarsest noise lattice spacing of blob masks, in cells.
    pub corr_length: f64,
    pub seed: u64,
}

impl MaskSpec {
    pub fn new(kind: MaskKind, ratio: f64, seed: u64) -> Self {
        MaskSpec {
            kind,
            ratio,
            tolerance: 0.01,
            corr_length: 8.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::InvalidParam(format!(
                "mask ratio {} must lie in (0, 1)",
                self.ratio
            )));
        }
        if !(self.tolerance >= 0.0) || !(self.corr_length >= 1.0) {
            return Err(Error::InvalidParam(
                "mask tolerance must be >= 0 and correlation length >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// A cell hidden by a mask, with the value it held.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiddenCell {
    pub t: usize,
    pub m: usize,
    pub n: usize,
    pub day: u32,
    pub value: f32,
}

impl HiddenCell {
    pub fn cell(&self) -> Cell {
        Cell::new(self.t, self.m, self.n)
    }
}

/// Hidden cells in cube index order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HiddenTruth {
    pub cells: Vec<HiddenCell>,
}

impl HiddenTruth {
    pub fn len(&self) -> usize {
        self.cells.len()
    }
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Hides `round(ratio * n_valid)` observed cells and returns the masked cube
/// together with the hidden values.
pub fn apply_mask(cube: &RasterCube, spec: &MaskSpec) -> Result<(RasterCube, HiddenTruth)> {
    spec.validate()?;
    let valid_idx: Vec<usize> = (0..cube.len()).filter(|&i| cube.valid()[i]).collect();
    if valid_idx.is_empty() {
        return Err(Error::Insufficient(
            "cube has no valid cells to mask".into(),
        ));
    }
    let k = (spec.ratio * valid_idx.len() as f64).round() as usize;
    if k == 0 {
        return Err(Error::Insufficient(format!(
            "ratio {} of {} valid cells hides nothing",
            spec.ratio,
            valid_idx.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut chosen: Vec<usize> = match spec.kind {
        MaskKind::Uniform => index::sample(&mut rng, valid_idx.len(), k)
            .into_iter()
            .map(|j| valid_idx[j])
            .collect(),
        MaskKind::Blob => {
            let (nt, rows, cols) = cube.shape();
            let mut field = Vec::with_capacity(cube.len());
            for _ in 0..nt {
                field.extend(value_noise(rows, cols, spec.corr_length, 3, &mut rng));
            }
            let mut order = valid_idx.clone();
            // highest field first; ties by cube index
            order.sort_by(|&a, &b| field[b].total_cmp(&field[a]).then(a.cmp(&b)));
            order.truncate(k);
            order
        }
    };
    chosen.sort_unstable();

    let mut valid = cube.valid().to_vec();
    let mut hidden = Vec::with_capacity(k);
    for &i in &chosen {
        valid[i] = false;
        let (t, m, n) = cube.coords(i);
        hidden.push(HiddenCell {
            t,
            m,
            n,
            day: cube.days()[t],
            value: cube.values()[i],
        });
    }
    let achieved = k as f64 / valid_idx.len() as f64;
    if spec.kind == MaskKind::Blob && (achieved - spec.ratio).abs() > spec.tolerance {
        return Err(Error::Insufficient(format!(
            "blob coverage {achieved} misses target {} by more than {}",
            spec.ratio, spec.tolerance
        )));
    }
    let masked = cube.with_cells(cube.values().to_vec(), valid)?;
    Ok((masked, HiddenTruth { cells: hidden }))
}

const TRUTH_HEADER: [&str; 5] = ["t", "m", "n", "day", "value"];

/// Writes the hidden-truth table as CSV `t,m,n,day,value`.
pub fn write_truth<W: Write>(truth: &HiddenTruth, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRUTH_HEADER)?;
    for c in &truth.cells {
        w.write_record([
            c.t.to_string(),
            c.m.to_string(),
            c.n.to_string(),
            c.day.to_string(),
            c.value.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<truth>", e))?;
    Ok(())
}

pub fn read_truth<R: Read>(input: R) -> Result<HiddenTruth> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != TRUTH_HEADER {
        return Err(Error::Schema(format!("unexpected truth header {header:?}")));
    }
    let mut cells = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Schema(format!("truth row {}: malformed", line + 1));
        let int = |i: usize| {
            rec.get(i)
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(bad)
        };
        cells.push(HiddenCell {
            t: int(0)?,
            m: int(1)?,
            n: int(2)?,
            day: rec.get(3).and_then(|s| s.parse().ok()).ok_or_else(bad)?,
            value: rec.get(4).and_then(|s| s.parse().ok()).ok_or_else(bad)?,
        });
    }
    Ok(HiddenTruth { cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ValueRange;

    fn cube(nt: usize, rows: usize, cols: usize) -> RasterCube {
        let days = (1..=nt as u32).collect();
        RasterCube::from_fn(rows, cols, days, ValueRange::UNIT, |t, m, n| {
            ((t * 31 + m * 7 + n) % 100) as f32 / 100.0
        })
        .unwrap()
    }

    #[test]
    fn uniform_count_is_exact() {
        let c = cube(1, 100, 100);
        let (masked, truth) = apply_mask(&c, &MaskSpec::new(MaskKind::Uniform, 0.2857, 4)).unwrap();
        assert_eq!(truth.len(), 2857);
        assert_eq!(masked.n_valid(), 10000 - 2857);
    }

    #[test]
    fn blob_ratio_within_tolerance() {
        let c = cube(4, 30, 30);
        for ratio in [0.1, 0.3, 0.6] {
            let (masked, _) = apply_mask(&c, &MaskSpec::new(MaskKind::Blob, ratio, 2)).unwrap();
            let achieved = 1.0 - masked.n_valid() as f64 / c.len() as f64;
            assert!((achieved - ratio).abs() <= 0.01);
        }
    }

    #[test]
    fn blob_is_spatially_clustered() {
        let c = cube(1, 40, 40);
        let (masked, _) = apply_mask(&c, &MaskSpec::new(MaskKind::Blob, 0.3, 8)).unwrap();
        // a hidden cell's right neighbour is hidden far more often than 30%
        let (mut both, mut first) = (0, 0);
        for m in 0..40 {
            for n in 0..39 {
                if !masked.valid()[m * 40 + n] {
                    first += 1;
                    if !masked.valid()[m * 40 + n + 1] {
                        both += 1;
                    }
                }
            }
        }
        assert!(both as f64 / first as f64 > 0.6);
    }

    #[test]
    fn deterministic_per_seed() {
        let c = cube(3, 12, 12);
        for kind in [MaskKind::Uniform, MaskKind::Blob] {
            let a = apply_mask(&c, &MaskSpec::new(kind, 0.3, 1)).unwrap();
            let b = apply_mask(&c, &MaskSpec::new(kind, 0.3, 1)).unwrap();
            assert_eq!(a, b);
            let d = apply_mask(&c, &MaskSpec::new(kind, 0.3, 2)).unwrap();
            assert_ne!(a.1, d.1);
        }
    }

    #[test]
    fn never_touches_invalid_cells() {
        let c = cube(2, 10, 10);
        let valid: Vec<bool> = (0..c.len()).map(|i| i % 3 != 0).collect();
        let c = c.with_cells(c.values().to_vec(), valid).unwrap();
        for kind in [MaskKind::Uniform, MaskKind::Blob] {
            let (_, truth) = apply_mask(&c, &MaskSpec::new(kind, 0.5, 3)).unwrap();
            assert!(truth
                .cells
                .iter()
                .all(|h| c.valid()[c.index(h.t, h.m, h.n)]));
            assert_eq!(truth.len(), (0.5 * c.n_valid() as f64).round() as usize);
        }
    }

    #[test]
    fn ratio_validated() {
        let c = cube(1, 4, 4);
        assert!(apply_mask(&c, &MaskSpec::new(MaskKind::Uniform, 1.2, 0)).is_err());
        assert!(apply_mask(&c, &MaskSpec::new(MaskKind::Uniform, 0.0, 0)).is_err());
        assert!(apply_mask(&c, &MaskSpec::new(MaskKind::Uniform, 0.01, 0)).is_err());
    }

    #[test]
    fn truth_csv_round_trip() {
        let c = cube(2, 6, 6);
        let (_, truth) = apply_mask(&c, &MaskSpec::new(MaskKind::Uniform, 0.25, 9)).unwrap();
        let mut buf = Vec::new();
        write_truth(&truth, &mut buf).unwrap();
        assert_eq!(read_truth(buf.as_slice()).unwrap(), truth);
    }
}
