use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mask::{apply_mask, HiddenCell, HiddenTruth, MaskSpec};
use super::metrics::{metrics, EvalReport};
use crate::error::{Error, Result};
use crate::features::Feature;
use crate::grid::{AuxLayers, RasterCube};
use crate::models::{fit_model, fit_on_valid, reconstruct, ModelConfig, ReconstructMode};
use crate::smoothing::{sg_smooth_cube, SgParams};

/// Scores `pred` at the hidden cells only.
pub fn score_hidden(pred: &RasterCube, truth: &HiddenTruth) -> Result<EvalReport> {
    let (p, t) = gather(pred, &truth.cells)?;
    metrics(&p, &t)
}

fn gather(pred: &RasterCube, cells: &[HiddenCell]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (nt, rows, cols) = pred.shape();
    let mut p = Vec::with_capacity(cells.len());
    let mut t = Vec::with_capacity(cells.len());
    for c in cells {
        if c.t >= nt || c.m >= rows || c.n >= cols {
            return Err(Error::Shape(format!(
                "truth cell ({}, {}, {}) outside {nt}x{rows}x{cols} prediction",
                c.t, c.m, c.n
            )));
        }
        let v = pred.get(c.t, c.m, c.n).ok_or_else(|| {
            Error::Insufficient(format!("no prediction at ({}, {}, {})", c.t, c.m, c.n))
        })?;
        p.push(v as f64);
        t.push(c.value as f64);
    }
    Ok((p, t))
}

/// Truth table from a reference cube: cells valid in `truth` and, when a
/// masked cube is given, invalid in it.
pub fn hidden_from_cubes(truth: &RasterCube, masked: Option<&RasterCube>) -> Result<HiddenTruth> {
    if let Some(m) = masked {
        if m.shape() != truth.shape() {
            return Err(Error::Shape(
                "masked cube shape differs from truth cube".into(),
            ));
        }
    }
    let cells = (0..truth.len())
        .filter(|&i| truth.valid()[i] && masked.is_none_or(|m| !m.valid()[i]))
        .map(|i| {
            let (t, m, n) = truth.coords(i);
            HiddenCell {
                t,
                m,
                n,
                day: truth.days()[t],
                value: truth.values()[i],
            }
        })
        .collect();
    Ok(HiddenTruth { cells })
}

/// One report per day that has at least one hidden cell, in day order.
pub fn per_day_report(pred: &RasterCube, truth: &HiddenTruth) -> Result<Vec<EvalReport>> {
    let mut by_day: BTreeMap<u32, Vec<HiddenCell>> = BTreeMap::new();
    for c in &truth.cells {
        by_day.entry(c.day).or_default().push(*c);
    }
    by_day
        .into_iter()
        .map(|(day, cells)| {
            let (p, t) = gather(pred, &cells)?;
            Ok(metrics(&p, &t)?.at("day", day.to_string()))
        })
        .collect()
}

/// Masks `cube`, fits on what remains, fills the gaps, optionally smooths,
/// and scores the hidden cells.
pub fn mask_and_score(
    cube: &RasterCube,
    aux: &AuxLayers,
    config: &ModelConfig,
    mask: &MaskSpec,
    sg: Option<&SgParams>,
) -> Result<EvalReport> {
    let (masked, truth) = apply_mask(cube, mask)?;
    let model = fit_on_valid(&masked, aux, config)?;
    let mut filled = reconstruct(&masked, aux, &model, ReconstructMode::Single)?;
    if let Some(sg) = sg {
        filled = sg_smooth_cube(&filled, masked.valid(), sg)?;
    }
    Ok(score_hidden(&filled, &truth)?
        .labelled(config.kind.name(), cube.tile_id())
        .masked(mask.kind.name(), mask.ratio))
}

/// Feature sets of the seven ablation runs, from terrain and position only
/// up to the full set.
pub fn ablation_presets() -> [Vec<Feature>; 7] {
    use Feature::*;
    let base = vec![Day, Lat, Lon, Asp, Slo, Dem];
    let angles = [SoZ, SeA, SeZ, SoA];
    let join = |extra: &[Feature]| {
        let mut v = base.clone();
        v.extend_from_slice(extra);
        v.sort();
        v
    };
    let with_lac_angles: Vec<Feature> = [&[Lac][..], &angles[..]].concat();
    let with_albedo: Vec<Feature> = [&with_lac_angles[..], &[Albedo][..]].concat();
    let full: Vec<Feature> = [&with_albedo[..], &[Sn, Tn][..]].concat();
    [
        join(&[]),
        join(&[Lac]),
        join(&[Albedo]),
        join(&angles),
        join(&with_lac_angles),
        join(&with_albedo),
        join(&full),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Cartesian grid over boosting settings; an empty list keeps the base value.
    Params {
        learning_rate: Vec<f64>,
        max_depth: Vec<usize>,
        n_estimators: Vec<usize>,
    },
    /// Cartesian grid over SN and TN half-windows.
    Windows {
        sw: Vec<usize>,
        tw: Vec<usize>,
    },
    TrainFraction(Vec<f64>),
    Ablation,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Params { .. } => "params",
            SweepAxis::Windows { .. } => "windows",
            SweepAxis::TrainFraction(_) => "train-fraction",
            SweepAxis::Ablation => "ablation",
        }
    }
}

/// One evaluation of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub label: String,
    pub config: ModelConfig,
    pub train_fraction: f64,
}

fn or_base<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

/// Expands an axis into its points, in grid order.
pub fn sweep_points(
    axis: &SweepAxis,
    base: &ModelConfig,
    train_fraction: f64,
) -> Result<Vec<SweepPoint>> {
    let point = |label: String, config: ModelConfig| SweepPoint {
        label,
        config,
        train_fraction,
    };
    let points: Vec<SweepPoint> = match axis {
        SweepAxis::Params {
            learning_rate,
            max_depth,
            n_estimators,
        } => {
            let mut out = Vec::new();
            for &lr in &or_base(learning_rate, base.gbt.learning_rate) {
                for &depth in &or_base(max_depth, base.gbt.max_depth) {
                    for &k in &or_base(n_estimators, base.gbt.n_estimators) {
                        let mut c = base.clone();
                        c.gbt.learning_rate = lr;
                        c.gbt.max_depth = depth;
                        c.gbt.n_estimators = k;
                        c.validate()?;
                        out.push(point(
                            format!("learning_rate={lr};max_depth={depth};n_estimators={k}"),
                            c,
                        ));
                    }
                }
            }
            out
        }
        SweepAxis::Windows { sw, tw } => {
            let mut out = Vec::new();
            for &s in &or_base(sw, base.features.sw) {
                for &t in &or_base(tw, base.features.tw) {
                    out.push(point(
                        format!("sw={s};tw={t}"),
                        base.clone().with_windows(s, t)?,
                    ));
                }
            }
            out
        }
        SweepAxis::TrainFraction(fractions) => fractions
            .iter()
            .map(|&f| {
                if !(f > 0.0 && f < 1.0) {
                    return Err(Error::InvalidParam(format!(
                        "train fraction {f} must lie in (0, 1)"
                    )));
                }
                Ok(SweepPoint {
                    label: format!("train_fraction={f}"),
                    config: base.clone(),
                    train_fraction: f,
                })
            })
            .collect::<Result<_>>()?,
        SweepAxis::Ablation => ablation_presets()
            .iter()
            .enumerate()
            .map(|(i, feats)| {
                Ok(point(
                    format!("model{}", i + 1),
                    base.clone().with_features(feats)?,
                ))
            })
            .collect::<Result<_>>()?,
    };
    if points.is_empty() {
        return Err(Error::InvalidParam("sweep grid is empty".into()));
    }
    Ok(points)
}

fn run_point(
    cube: &RasterCube,
    aux: &AuxLayers,
    axis: &str,
    p: &SweepPoint,
    seed: u64,
) -> Result<EvalReport> {
    let (_, report) = fit_model(cube, aux, &p.config, p.train_fraction, seed)?;
    Ok(report.at(axis, p.label.clone()))
}

/// Runs every point (concurrently) and returns reports in grid order.
pub fn sweep(
    cube: &RasterCube,
    aux: &AuxLayers,
    axis: &SweepAxis,
    base: &ModelConfig,
    train_fraction: f64,
    seed: u64,
) -> Result<Vec<EvalReport>> {
    let points = sweep_points(axis, base, train_fraction)?;
    points
        .par_iter()
        .map(|p| run_point(cube, aux, axis.name(), p, seed))
        .collect()
}

/// Runs points one after another, handing each report to `sink` as soon as
/// it is ready. Stops at the first error.
pub fn sweep_each(
    cube: &RasterCube,
    aux: &AuxLayers,
    axis: &SweepAxis,
    base: &ModelConfig,
    train_fraction: f64,
    seed: u64,
    mut sink: impl FnMut(&EvalReport) -> Result<()>,
) -> Result<()> {
    for p in sweep_points(axis, base, train_fraction)? {
        sink(&run_point(cube, aux, axis.name(), &p, seed)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::mask::MaskKind;
    use crate::gbt::GbtParams;
    use crate::grid::ValueRange;
    use crate::models::ModelKind;
    use crate::synth::{generate_scene, SceneSpec};

    fn scene() -> (RasterCube, AuxLayers) {
        generate_scene(&SceneSpec {
            rows: 12,
            cols: 12,
            n_days: 5,
            seed: 4,
            ..SceneSpec::default()
        })
        .unwrap()
    }

    fn quick() -> ModelConfig {
        ModelConfig::new(ModelKind::Stxgb).with_gbt(GbtParams {
            n_estimators: 20,
            max_depth: 3,
            learning_rate: 0.3,
            ..GbtParams::default()
        })
    }

    #[test]
    fn presets_match_documented_sets() {
        use Feature::*;
        let p = ablation_presets();
        assert_eq!(p[0], vec![Day, Lat, Lon, Dem, Asp, Slo]);
        assert_eq!(p[1].len(), 7);
        assert!(p[2].contains(&Albedo) && !p[2].contains(&Lac));
        assert_eq!(p[3].len(), 10);
        assert_eq!(p[4].len(), 11);
        assert_eq!(p[5].len(), 12);
        assert_eq!(p[6], Feature::ALL.to_vec());
    }

    #[test]
    fn grid_cardinalities() {
        let base = quick();
        let params = SweepAxis::Params {
            learning_rate: vec![0.01, 0.1, 0.2],
            max_depth: vec![],
            n_estimators: vec![50, 200, 450],
        };
        assert_eq!(sweep_points(&params, &base, 0.7).unwrap().len(), 9);
        let windows = SweepAxis::Windows {
            sw: (1..=5).collect(),
            tw: (1..=5).collect(),
        };
        assert_eq!(sweep_points(&windows, &base, 0.7).unwrap().len(), 25);
        assert_eq!(
            sweep_points(&SweepAxis::Ablation, &base, 0.7)
                .unwrap()
                .len(),
            7
        );
        assert!(sweep_points(&SweepAxis::TrainFraction(vec![]), &base, 0.7).is_err());
        assert!(sweep_points(&SweepAxis::TrainFraction(vec![1.2]), &base, 0.7).is_err());
    }

    #[test]
    fn sweep_orders_reports_by_grid() {
        let (cube, aux) = scene();
        let axis = SweepAxis::TrainFraction(vec![0.5, 0.7, 0.9]);
        let reports = sweep(&cube, &aux, &axis, &quick(), 0.7, 3).unwrap();
        let labels: Vec<&str> = reports.iter().map(|r| r.point.as_str()).collect();
        assert_eq!(
            labels,
            [
                "train_fraction=0.5",
                "train_fraction=0.7",
                "train_fraction=0.9"
            ]
        );
        let mut streamed = Vec::new();
        sweep_each(&cube, &aux, &axis, &quick(), 0.7, 3, |r| {
            streamed.push(r.clone());
            Ok(())
        })
        .unwrap();
        assert_eq!(streamed, reports);
    }

    #[test]
    fn single_hidden_cell_scores_one_sample() {
        let (cube, aux) = scene();
        let ratio = 1.0 / cube.len() as f64;
        let spec = MaskSpec::new(MaskKind::Uniform, ratio, 1);
        let r = mask_and_score(&cube, &aux, &quick(), &spec, None).unwrap();
        assert_eq!(r.n, 1);
        assert_eq!(r.mask_kind, "uniform");
    }

    #[test]
    fn mask_and_score_is_reproducible() {
        let (cube, aux) = scene();
        let spec = MaskSpec::new(MaskKind::Blob, 0.3, 5);
        let sg = SgParams::default();
        let a = mask_and_score(&cube, &aux, &quick(), &spec, Some(&sg)).unwrap();
        let b = mask_and_score(&cube, &aux, &quick(), &spec, Some(&sg)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n, (0.3 * cube.len() as f64).round() as usize);
    }

    fn cube_of(values: Vec<f32>) -> RasterCube {
        let days = vec![10, 11, 12];
        RasterCube::new(2, 2, days, values, vec![true; 12], ValueRange::UNIT, "t").unwrap()
    }

    #[test]
    fn per_day_rows_localise_errors() {
        let truth_vals: Vec<f32> = (0..12).map(|i| i as f32 / 12.0).collect();
        let truth_cube = cube_of(truth_vals.clone());
        let truth = hidden_from_cubes(&truth_cube, None).unwrap();
        let perfect = per_day_report(&truth_cube, &truth).unwrap();
        assert_eq!(perfect.len(), 3);
        assert!(perfect.iter().all(|r| r.r2 == 1.0 && r.rmse == 0.0));

        let mut bad = truth_vals;
        bad[5] += 0.25;
        let rows = per_day_report(&cube_of(bad), &truth).unwrap();
        let rmse: Vec<bool> = rows.iter().map(|r| r.rmse > 0.0).collect();
        assert_eq!(rmse, [false, true, false]);
        assert_eq!(rows[1].point, "11");

        let partial = HiddenTruth {
            cells: truth.cells.iter().filter(|c| c.t != 1).copied().collect(),
        };
        assert_eq!(per_day_report(&truth_cube, &partial).unwrap().len(), 2);
    }
}
