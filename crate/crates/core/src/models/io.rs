//! JSON model format `stgap-model`, version 1: a model configuration, its
//! input scaling, and the learner payload. Boosted payloads embed a complete
//! `stgap-gbt` document.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FittedModel, Forest, Learner, LinearModel, ModelConfig};
use crate::error::{Error, Result};
use crate::features::MinMax;
use crate::gbt::io::{model_from_value, model_to_value, tree_from_doc, tree_to_doc, NodeDoc};

pub const MODEL_FORMAT: &str = "stgap-model";
pub const MODEL_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum LearnerDoc {
    Boosted {
        model: serde_json::Value,
    },
    Forest {
        bases: Vec<f64>,
        trees: Vec<Vec<NodeDoc>>,
        gain: Vec<f64>,
    },
    Linear {
        coef: Vec<f64>,
        intercept: f64,
        fill: Vec<f64>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FittedDoc {
    format: String,
    version: u64,
    config: ModelConfig,
    norm: Option<Vec<MinMax>>,
    learner: LearnerDoc,
}

pub fn model_to_json(model: &FittedModel) -> String {
    let learner = match &model.learner {
        Learner::Boosted(m) => LearnerDoc::Boosted {
            model: model_to_value(m),
        },
        Learner::Forest(f) => LearnerDoc::Forest {
            bases: f.bases.clone(),
            trees: f.trees.iter().map(tree_to_doc).collect(),
            gain: f.gain.clone(),
        },
        Learner::Linear(l) => LearnerDoc::Linear {
            coef: l.coef.clone(),
            intercept: l.intercept,
            fill: l.fill.clone(),
        },
    };
    let doc = FittedDoc {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        config: model.config.clone(),
        norm: model.norm.clone(),
        learner,
    };
    serde_json::to_string(&doc).expect("model document serialises")
}

pub fn model_from_json(text: &str) -> Result<FittedModel> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    if value.get("format").and_then(|v| v.as_str()) != Some(MODEL_FORMAT) {
        return Err(Error::Schema(format!(
            "missing or wrong format tag (want '{MODEL_FORMAT}')"
        )));
    }
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(MODEL_VERSION) => {}
        Some(found) => {
            return Err(Error::UnsupportedVersion {
                format: MODEL_FORMAT.into(),
                found,
                expected: MODEL_VERSION,
            })
        }
        None => return Err(Error::Schema("missing version".into())),
    }
    let doc: FittedDoc = serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
    doc.config.validate()?;
    let features = doc.config.features.features().to_vec();
    let p = features.len();
    if doc.norm.as_ref().is_some_and(|n| n.len() != p) {
        return Err(Error::Schema(
            "scaling parameters do not match the feature count".into(),
        ));
    }
    let learner = match doc.learner {
        LearnerDoc::Boosted { model } => {
            let m = model_from_value(model)?;
            if m.features() != features.as_slice() {
                return Err(Error::Schema(
                    "boosted payload features differ from the configuration".into(),
                ));
            }
            Learner::Boosted(m)
        }
        LearnerDoc::Forest { bases, trees, gain } => {
            if bases.len() != trees.len() || trees.is_empty() || gain.len() != p {
                return Err(Error::Schema("forest payload is inconsistent".into()));
            }
            let trees = trees
                .into_iter()
                .enumerate()
                .map(|(k, t)| {
                    tree_from_doc(t, p).map_err(|e| Error::Schema(format!("tree {k}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Learner::Forest(Forest {
                features,
                bases,
                trees,
                gain,
            })
        }
        LearnerDoc::Linear {
            coef,
            intercept,
            fill,
        } => {
            if coef.len() != p || fill.len() != p {
                return Err(Error::Schema(
                    "linear payload does not match the feature count".into(),
                ));
            }
            Learner::Linear(LinearModel {
                features,
                coef,
                intercept,
                fill,
            })
        }
    };
    Ok(FittedModel {
        config: doc.config,
        norm: doc.norm,
        learner,
    })
}

pub fn save_fitted(model: &FittedModel, path: &Path) -> Result<()> {
    fs::write(path, model_to_json(model)).map_err(|e| Error::io(path, e))
}

pub fn load_fitted(path: &Path) -> Result<FittedModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{assemble_features, Selection};
    use crate::gbt::GbtParams;
    use crate::models::{fit_on_valid, ModelKind, RfParams};
    use crate::synth::{generate_scene, SceneSpec};

    #[test]
    fn every_kind_round_trips_bitwise() {
        let (cube, aux) = generate_scene(&SceneSpec {
            rows: 10,
            cols: 10,
            n_days: 4,
            seed: 8,
            ..SceneSpec::default()
        })
        .unwrap();
        for kind in ModelKind::ALL {
            let config = ModelConfig::new(kind)
                .with_gbt(GbtParams {
                    n_estimators: 10,
                    max_depth: 3,
                    ..GbtParams::default()
                })
                .with_rf(RfParams {
                    n_trees: 4,
                    max_depth: 5,
                    ..RfParams::default()
                });
            let model = fit_on_valid(&cube, &aux, &config).unwrap();
            let text = model_to_json(&model);
            let back = model_from_json(&text).unwrap();
            assert_eq!(back, model, "{kind}");
            assert_eq!(model_to_json(&back), text);
            let raw =
                assemble_features(&cube, &aux, &config.raw_spec(), &Selection::AllValid).unwrap();
            let a = model.predict_raw(&raw).unwrap();
            let b = back.predict_raw(&raw).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn wrong_tags_rejected() {
        assert!(matches!(model_from_json("{}"), Err(Error::Schema(_))));
        assert!(matches!(
            model_from_json(r#"{"format":"stgap-model","version":3}"#),
            Err(Error::UnsupportedVersion { found: 3, .. })
        ));
        assert!(matches!(
            model_from_json("{\"format\":"),
            Err(Error::Schema(_))
        ));
    }
}
