use serde::{Deserialize, Serialize};

use super::{fit_rows, FittedModel, ModelConfig};
use crate::error::Result;
use crate::eval::{metrics, EvalReport};
use crate::features::{assemble_features, assemble_with_neighbors, split_train_test, Selection};
use crate::grid::{AuxLayers, RasterCube};

/// Held-out protocol: build rows for every observed cell, split them, fit on
/// the training part and score the clamped predictions on the rest.
pub fn fit_model(
    cube: &RasterCube,
    aux: &AuxLayers,
    config: &ModelConfig,
    train_fraction: f64,
    seed: u64,
) -> Result<(FittedModel, EvalReport)> {
    config.validate()?;
    let raw = assemble_features(cube, aux, &config.raw_spec(), &Selection::AllValid)?;
    let (train, test) = split_train_test(&raw, train_fraction, seed)?;
    let model = fit_rows(config, &train)?;
    let range = cube.range();
    let pred: Vec<f64> = model
        .predict_raw(&test)?
        .into_iter()
        .map(|p| range.clamp(p))
        .collect();
    let truth = test.target().unwrap_or(&[]);
    let report = metrics(&pred, truth)?.labelled(config.kind.name(), cube.tile_id());
    Ok((model, report))
}

/// Fits on every observed cell of `cube`.
pub fn fit_on_valid(
    cube: &RasterCube,
    aux: &AuxLayers,
    config: &ModelConfig,
) -> Result<FittedModel> {
    config.validate()?;
    let raw = assemble_features(cube, aux, &config.raw_spec(), &Selection::AllValid)?;
    fit_rows(config, &raw)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReconstructMode {
    /// Neighbour means use observed cells only.
    #[default]
    Single,
    /// Re-derive neighbour means from the previous pass until the RMS change
    /// over gap cells drops below `tol` or `max_passes` passes have run.
    Iterative { max_passes: usize, tol: f64 },
}

impl ReconstructMode {
    pub fn iterative() -> Self {
        ReconstructMode::Iterative {
            max_passes: 5,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructReport {
    pub passes: usize,
    /// RMS change over gap cells after each pass beyond the first.
    pub changes: Vec<f64>,
    pub n_filled: usize,
}

/// Fills every invalid cell with the clamped model prediction. Observed
/// cells keep their stored bits.
pub fn reconstruct(
    cube: &RasterCube,
    aux: &AuxLayers,
    model: &FittedModel,
    mode: ReconstructMode,
) -> Result<RasterCube> {
    reconstruct_with_report(cube, aux, model, mode).map(|(c, _)| c)
}

pub fn reconstruct_with_report(
    cube: &RasterCube,
    aux: &AuxLayers,
    model: &FittedModel,
    mode: ReconstructMode,
) -> Result<(RasterCube, ReconstructReport)> {
    aux.check_matches(cube)?;
    let gaps: Vec<usize> = (0..cube.len()).filter(|&i| !cube.valid()[i]).collect();
    if gaps.is_empty() {
        let report = ReconstructReport {
            passes: 0,
            changes: Vec::new(),
            n_filled: 0,
        };
        return Ok((cube.clone(), report));
    }
    let spec = model.config.raw_spec();
    let range = cube.range();
    let fill = |neighbors: &RasterCube| -> Result<RasterCube> {
        let raw = assemble_with_neighbors(cube, neighbors, aux, &spec, &Selection::AllInvalid)?;
        let pred = model.predict_raw(&raw)?;
        let mut values = cube.values().to_vec();
        for (&i, p) in gaps.iter().zip(pred) {
            values[i] = range.clamp(p) as f32;
        }
        cube.with_cells(values, vec![true; cube.len()])
    };

    let mut out = fill(cube)?;
    let mut passes = 1;
    let mut changes = Vec::new();
    if let ReconstructMode::Iterative { max_passes, tol } = mode {
        while passes < max_passes {
            let next = fill(&out)?;
            passes += 1;
            let ss: f64 = gaps
                .iter()
                .map(|&i| {
                    let d = next.values()[i] as f64 - out.values()[i] as f64;
                    d * d
                })
                .sum();
            let rms = (ss / gaps.len() as f64).sqrt();
            changes.push(rms);
            out = next;
            if rms < tol {
                break;
            }
        }
    }
    let report = ReconstructReport {
        passes,
        changes,
        n_filled: gaps.len(),
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbt::GbtParams;
    use crate::models::ModelKind;
    use crate::synth::{generate_scene, SceneSpec};

    fn scene() -> (RasterCube, AuxLayers) {
        generate_scene(&SceneSpec {
            rows: 16,
            cols: 16,
            n_days: 6,
            seed: 2,
            ..SceneSpec::default()
        })
        .unwrap()
    }

    fn quick(kind: ModelKind) -> ModelConfig {
        ModelConfig::new(kind).with_gbt(GbtParams {
            n_estimators: 30,
            max_depth: 4,
            learning_rate: 0.3,
            ..GbtParams::default()
        })
    }

    fn with_gaps(cube: &RasterCube, every: usize) -> RasterCube {
        let valid: Vec<bool> = (0..cube.len()).map(|i| i % every != 0).collect();
        cube.with_cells(cube.values().to_vec(), valid).unwrap()
    }

    #[test]
    fn fit_model_is_reproducible() {
        let (cube, aux) = scene();
        let a = fit_model(&cube, &aux, &quick(ModelKind::Stxgb), 0.7, 5).unwrap();
        let b = fit_model(&cube, &aux, &quick(ModelKind::Stxgb), 0.7, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.1.n,
            cube.len() - (0.7 * cube.len() as f64).round() as usize
        );
        assert_eq!(a.1.model, "stxgb");
    }

    #[test]
    fn complete_cube_passes_through() {
        let (cube, aux) = scene();
        let model = fit_on_valid(&cube, &aux, &quick(ModelKind::Xgb)).unwrap();
        let out = reconstruct(&cube, &aux, &model, ReconstructMode::Single).unwrap();
        assert_eq!(out, cube);
    }

    #[test]
    fn observed_cells_untouched_and_gaps_in_range() {
        let (cube, aux) = scene();
        let masked = with_gaps(&cube, 4);
        let model = fit_on_valid(&masked, &aux, &quick(ModelKind::Stxgb)).unwrap();
        let out = reconstruct(&masked, &aux, &model, ReconstructMode::Single).unwrap();
        assert_eq!(out.n_valid(), out.len());
        for i in 0..cube.len() {
            if masked.valid()[i] {
                assert_eq!(out.values()[i].to_bits(), masked.values()[i].to_bits());
            } else {
                assert!((0.0..=1.0).contains(&out.values()[i]));
            }
        }
    }

    #[test]
    fn iterative_without_neighbour_features_is_a_fixed_point() {
        let (cube, aux) = scene();
        let masked = with_gaps(&cube, 3);
        let model = fit_on_valid(&masked, &aux, &quick(ModelKind::Xgb)).unwrap();
        let single = reconstruct(&masked, &aux, &model, ReconstructMode::Single).unwrap();
        let (iter, report) =
            reconstruct_with_report(&masked, &aux, &model, ReconstructMode::iterative()).unwrap();
        assert_eq!(report.passes, 2);
        assert_eq!(report.changes, vec![0.0]);
        assert_eq!(iter, single);
    }

    #[test]
    fn iterative_converges_with_neighbour_features() {
        let (cube, aux) = scene();
        let masked = with_gaps(&cube, 2);
        let model = fit_on_valid(&masked, &aux, &quick(ModelKind::Stxgb)).unwrap();
        let (_, report) =
            reconstruct_with_report(&masked, &aux, &model, ReconstructMode::iterative()).unwrap();
        assert!(report.passes >= 2 && report.passes <= 5);
        assert_eq!(report.changes.len(), report.passes - 1);
    }

    #[test]
    fn mismatched_aux_rejected() {
        let (cube, _) = scene();
        let (_, other) = generate_scene(&SceneSpec {
            rows: 8,
            cols: 8,
            n_days: 6,
            ..SceneSpec::default()
        })
        .unwrap();
        let (_, aux) = scene();
        let model = fit_on_valid(&cube, &aux, &quick(ModelKind::Xgb)).unwrap();
        assert!(reconstruct(
            &with_gaps(&cube, 5),
            &other,
            &model,
            ReconstructMode::Single
        )
        .is_err());
    }
}
