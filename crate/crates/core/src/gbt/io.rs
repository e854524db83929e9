//! JSON model format `stgap-gbt`, version 1.
//!
//! Floats are written in shortest round-trip form, so a reloaded model
//! predicts bit-identically.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{GbtEnsemble, GbtParams, Node, Tree};
use crate::error::{Error, Result};
use crate::features::Feature;

pub const GBT_FORMAT: &str = "stgap-gbt";
pub const GBT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub(crate) enum Direction {
    Left,
    Right,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
pub(crate) enum NodeDoc {
    Split {
        feat: usize,
        thresh: f64,
        default: Direction,
        left: usize,
        right: usize,
        gain: f64,
    },
    Leaf {
        leaf: f64,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ModelDoc {
    format: String,
    version: u64,
    base_score: f64,
    learning_rate: f64,
    feature_names: Vec<String>,
    params: GbtParams,
    trees: Vec<Vec<NodeDoc>>,
    importance: BTreeMap<String, f64>,
}

impl From<&GbtEnsemble> for ModelDoc {
    fn from(m: &GbtEnsemble) -> Self {
        ModelDoc {
            format: GBT_FORMAT.into(),
            version: GBT_VERSION,
            base_score: m.base_score,
            learning_rate: m.learning_rate,
            feature_names: m.features.iter().map(|f| f.name().to_string()).collect(),
            params: m.params.clone(),
            trees: m.trees.iter().map(tree_to_doc).collect(),
            importance: m
                .features
                .iter()
                .zip(&m.gain)
                .map(|(f, g)| (f.name().to_string(), *g))
                .collect(),
        }
    }
}

impl ModelDoc {
    fn into_model(self) -> Result<GbtEnsemble> {
        if self.format != GBT_FORMAT {
            return Err(Error::Schema(format!(
                "format '{}' is not '{GBT_FORMAT}'",
                self.format
            )));
        }
        if self.version != GBT_VERSION {
            return Err(Error::UnsupportedVersion {
                format: GBT_FORMAT.into(),
                found: self.version,
                expected: GBT_VERSION,
            });
        }
        let features = self
            .feature_names
            .iter()
            .map(|s| Feature::from_str(s))
            .collect::<Result<Vec<_>>>()?;
        if !self.base_score.is_finite() || !(self.learning_rate > 0.0 && self.learning_rate <= 1.0)
        {
            return Err(Error::Schema(
                "base_score or learning_rate out of domain".into(),
            ));
        }
        let p = features.len();
        let trees = self
            .trees
            .into_iter()
            .enumerate()
            .map(|(k, nodes)| {
                tree_from_doc(nodes, p).map_err(|e| Error::Schema(format!("tree {k}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let gain = features
            .iter()
            .map(|f| self.importance.get(f.name()).copied().unwrap_or(0.0))
            .collect();
        Ok(GbtEnsemble {
            features,
            base_score: self.base_score,
            learning_rate: self.learning_rate,
            trees,
            params: self.params,
            gain,
        })
    }
}

pub(crate) fn tree_to_doc(tree: &Tree) -> Vec<NodeDoc> {
    tree.nodes
        .iter()
        .map(|n| match *n {
            Node::Leaf { weight } => NodeDoc::Leaf { leaf: weight },
            Node::Split {
                feature,
                threshold,
                default_left,
                left,
                right,
                gain,
            } => NodeDoc::Split {
                feat: feature,
                thresh: threshold,
                default: if default_left {
                    Direction::Left
                } else {
                    Direction::Right
                },
                left,
                right,
                gain,
            },
        })
        .collect()
}

/// Rebuilds a tree and checks its layout against `n_features` columns.
pub(crate) fn tree_from_doc(
    nodes: Vec<NodeDoc>,
    n_features: usize,
) -> std::result::Result<Tree, String> {
    let tree = Tree {
        nodes: nodes
            .into_iter()
            .map(|d| match d {
                NodeDoc::Leaf { leaf } => Node::Leaf { weight: leaf },
                NodeDoc::Split {
                    feat,
                    thresh,
                    default,
                    left,
                    right,
                    gain,
                } => Node::Split {
                    feature: feat,
                    threshold: thresh,
                    default_left: matches!(default, Direction::Left),
                    left,
                    right,
                    gain,
                },
            })
            .collect(),
    };
    tree.check_structure(n_features)?;
    Ok(tree)
}

pub(crate) fn model_to_value(model: &GbtEnsemble) -> serde_json::Value {
    serde_json::to_value(ModelDoc::from(model)).expect("model document serialises")
}

pub(crate) fn model_from_value(value: serde_json::Value) -> Result<GbtEnsemble> {
    check_header(&value)?;
    let doc: ModelDoc = serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
    doc.into_model()
}

fn check_header(value: &serde_json::Value) -> Result<()> {
    let format = value.get("format").and_then(|v| v.as_str());
    if format != Some(GBT_FORMAT) {
        return Err(Error::Schema(format!(
            "missing or wrong format tag (want '{GBT_FORMAT}')"
        )));
    }
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(GBT_VERSION) => Ok(()),
        Some(found) => Err(Error::UnsupportedVersion {
            format: GBT_FORMAT.into(),
            found,
            expected: GBT_VERSION,
        }),
        None => Err(Error::Schema("missing version".into())),
    }
}

pub fn model_to_json(model: &GbtEnsemble) -> String {
    serde_json::to_string(&ModelDoc::from(model)).expect("model document serialises")
}

pub fn model_from_json(text: &str) -> Result<GbtEnsemble> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    model_from_value(value)
}

pub fn save_model(model: &GbtEnsemble, path: &Path) -> Result<()> {
    fs::write(path, model_to_json(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<GbtEnsemble> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMatrix;
    use crate::gbt::{fit, predict};

    fn fitted() -> (GbtEnsemble, FeatureMatrix) {
        let rows: Vec<Vec<Option<f64>>> = (0..60)
            .map(|i| {
                let a = (i as f64 * 0.37).sin();
                let b = if i % 5 == 0 {
                    None
                } else {
                    Some((i % 9) as f64 / 9.0)
                };
                vec![Some(a), b]
            })
            .collect();
        let y = rows
            .iter()
            .map(|r| r[0].unwrap() * 0.5 + r[1].unwrap_or(0.2))
            .collect();
        let x = FeatureMatrix::from_rows(vec![Feature::Dem, Feature::Sn], &rows, Some(y), None)
            .unwrap();
        let params = GbtParams {
            n_estimators: 15,
            learning_rate: 0.3,
            max_depth: 3,
            ..GbtParams::default()
        };
        (fit(&x, &params).unwrap(), x)
    }

    #[test]
    fn round_trip_predicts_identically() {
        let (m, x) = fitted();
        let back = model_from_json(&model_to_json(&m)).unwrap();
        assert_eq!(back, m);
        let a = predict(&m, &x).unwrap();
        let b = predict(&back, &x).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn truncated_file_is_schema_error() {
        let (m, _) = fitted();
        let text = model_to_json(&m);
        let cut = &text[..text.len() / 2];
        assert!(matches!(model_from_json(cut), Err(Error::Schema(_))));
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let (m, _) = fitted();
        let text = model_to_json(&m).replace("\"version\":1", "\"version\":2");
        assert!(matches!(
            model_from_json(&text),
            Err(Error::UnsupportedVersion { found: 2, .. })
        ));
    }

    #[test]
    fn broken_child_reference_rejected() {
        let text = r#"{"format":"stgap-gbt","version":1,"base_score":0.5,"learning_rate":0.1,
            "feature_names":["DEM"],"params":{"n_estimators":1,"learning_rate":0.1,"max_depth":1,
            "lambda":1.0,"gamma":0.0,"min_child_weight":1.0,"seed":0},
            "trees":[[{"feat":0,"thresh":0.5,"default":"left","left":1,"right":5,"gain":1.0},{"leaf":0.1},{"leaf":0.2}]],
            "importance":{"DEM":1.0}}"#;
        assert!(matches!(model_from_json(text), Err(Error::Schema(_))));
    }

    #[test]
    fn layout_matches_documented_schema() {
        let (m, _) = fitted();
        let v: serde_json::Value = serde_json::from_str(&model_to_json(&m)).unwrap();
        assert_eq!(v["format"], "stgap-gbt");
        assert_eq!(v["version"], 1);
        assert_eq!(v["feature_names"], serde_json::json!(["DEM", "SN"]));
        let root = &v["trees"][0][0];
        assert!(root["feat"].is_u64() && root["thresh"].is_f64());
        assert!(root["default"] == "left" || root["default"] == "right");
        assert!(v["importance"]["SN"].is_f64());
    }
}
