//! Second-order gradient-boosted regression trees.
//!
//! Squared-error loss, so every row has gradient `prediction - target` and
//! hessian 1. Each round grows one tree greedily, choosing the split that
//! maximises
//!
//! ```text
//! gain = 1/2 * [G_L^2/(H_L + lambda) + G_R^2/(H_R + lambda) - G^2/(H + lambda)] - gamma
//! ```
//!
//! and sets leaf weights to `-G / (H + lambda)`. A model predicts
//! `base_score + learning_rate * sum(leaf weights)`.

mod grow;
pub(crate) mod io;
mod tree;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Feature, FeatureMatrix};

pub use grow::GAIN_TIE_RTOL;
pub(crate) use grow::{grow_tree, ColumnIndex, TreeParams};
pub use io::{load_model, model_from_json, model_to_json, save_model, GBT_FORMAT, GBT_VERSION};
pub use tree::{Node, Tree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
    /// Reserved for stochastic variants; exact boosting is deterministic.
    pub seed: u64,
    /// Restrict split candidates to equal-frequency cuts (`None` = exact).
    #[serde(default)]
    pub histogram_bins: Option<usize>,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_estimators: 200,
            learning_rate: 0.1,
            max_depth: 6,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            seed: 0,
            histogram_bins: None,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if self.n_estimators == 0 {
            return bad("n_estimators must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!(
                "learning_rate {} outside (0, 1]",
                self.learning_rate
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda {} must be >= 0", self.lambda));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma {} must be >= 0", self.gamma));
        }
        if !(self.min_child_weight >= 0.0 && self.min_child_weight.is_finite()) {
            return bad(format!(
                "min_child_weight {} must be >= 0",
                self.min_child_weight
            ));
        }
        if let Some(b) = self.histogram_bins {
            if !(2..=u16::MAX as usize).contains(&b) {
                return bad(format!("histogram_bins {b} outside [2, 65535]"));
            }
        }
        Ok(())
    }

    pub(crate) fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            lambda: self.lambda,
            gamma: self.gamma,
            min_child_weight: self.min_child_weight,
        }
    }
}

/// A fitted boosted ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct GbtEnsemble {
    pub(crate) features: Vec<Feature>,
    pub(crate) base_score: f64,
    pub(crate) learning_rate: f64,
    pub(crate) trees: Vec<Tree>,
    pub(crate) params: GbtParams,
    /// Cumulative split gain per feature column.
    pub(crate) gain: Vec<f64>,
}

impl GbtEnsemble {
    /// An ensemble with no trees.
    pub fn constant(features: Vec<Feature>, base_score: f64, params: GbtParams) -> Self {
        let gain = vec![0.0; features.len()];
        GbtEnsemble {
            features,
            base_score,
            learning_rate: params.learning_rate,
            trees: Vec::new(),
            params,
            gain,
        }
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }
    pub fn base_score(&self) -> f64 {
        self.base_score
    }
    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }
    pub fn params(&self) -> &GbtParams {
        &self.params
    }

    #[inline]
    pub fn predict_row(&self, row: &[f64], missing: &[bool]) -> f64 {
        let mut y = self.base_score;
        for t in &self.trees {
            y += self.learning_rate * t.predict_row(row, missing);
        }
        y
    }

    fn check_arity(&self, rows: &FeatureMatrix) -> Result<()> {
        if rows.features() != self.features.as_slice() {
            return Err(Error::Shape(format!(
                "model expects {} features {:?}, matrix has {} {:?}",
                self.features.len(),
                self.features,
                rows.n_features(),
                rows.features()
            )));
        }
        Ok(())
    }
}

/// Weighted mean computed as `y[0] + mean(y - y[0])`, which is exact for
/// constant inputs. Zero-weight entries are ignored.
pub(crate) fn shifted_mean(y: &[f64], weights: Option<&[f64]>) -> f64 {
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let Some(anchor) = (0..y.len()).find(|&i| w(i) > 0.0).map(|i| y[i]) else {
        return 0.0;
    };
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &v) in y.iter().enumerate() {
        num += w(i) * (v - anchor);
        den += w(i);
    }
    anchor + num / den
}

/// Fits a boosted ensemble to `train`.
pub fn fit(train: &FeatureMatrix, params: &GbtParams) -> Result<GbtEnsemble> {
    params.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training matrix has no rows".into()));
    }
    let y = train
        .target()
        .ok_or_else(|| Error::InvalidParam("training matrix has no target".into()))?;
    let n = train.n_rows();
    let base_score = shifted_mean(y, None);

    let index = ColumnIndex::build(train, params.histogram_bins);
    let tree_params = params.tree_params();
    let hess = vec![1.0; n];
    let mut grad = vec![0.0; n];
    let mut pred = vec![base_score; n];
    let mut gain = vec![0.0; train.n_features()];
    let mut trees = Vec::with_capacity(params.n_estimators);

    for _ in 0..params.n_estimators {
        for i in 0..n {
            grad[i] = pred[i] - y[i];
        }
        let grown = grow_tree(train, &index, &grad, &hess, &tree_params, None);
        let nodes = grown.tree.nodes();
        for (p, &leaf) in pred.iter_mut().zip(&grown.leaf_of_row) {
            if let Node::Leaf { weight } = nodes[leaf] {
                *p += params.learning_rate * weight;
            }
        }
        for node in nodes {
            if let Node::Split {
                feature, gain: g, ..
            } = *node
            {
                gain[feature] += g;
            }
        }
        trees.push(grown.tree);
    }

    Ok(GbtEnsemble {
        features: train.features().to_vec(),
        base_score,
        learning_rate: params.learning_rate,
        trees,
        params: params.clone(),
        gain,
    })
}

/// Raw ensemble output per row (no clamping).
pub fn predict(model: &GbtEnsemble, rows: &FeatureMatrix) -> Result<Vec<f64>> {
    model.check_arity(rows)?;
    Ok((0..rows.n_rows())
        .into_par_iter()
        .map(|r| model.predict_row(rows.row(r), rows.row_missing(r)))
        .collect())
}

/// Total split gain per feature, descending; ties keep column order.
pub fn feature_importance(model: &GbtEnsemble) -> Vec<(Feature, f64)> {
    let mut out: Vec<(Feature, f64)> = model
        .features
        .iter()
        .copied()
        .zip(model.gain.iter().copied())
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(xs: &[Vec<Option<f64>>], y: &[f64]) -> FeatureMatrix {
        let feats = Feature::ALL[..xs[0].len()].to_vec();
        FeatureMatrix::from_rows(feats, xs, Some(y.to_vec()), None).unwrap()
    }

    fn params(n: usize, depth: usize, lr: f64, lambda: f64) -> GbtParams {
        GbtParams {
            n_estimators: n,
            learning_rate: lr,
            max_depth: depth,
            lambda,
            gamma: 0.0,
            min_child_weight: 0.0,
            ..GbtParams::default()
        }
    }

    #[test]
    fn depth_zero_predicts_mean() {
        let y = [0.25, 0.5, 1.0, 0.0, 0.75, 0.5, 0.25, 0.75];
        let xs: Vec<_> = (0..8).map(|i| vec![Some(i as f64)]).collect();
        let m = fit(&matrix(&xs, &y), &params(1, 0, 1.0, 0.0)).unwrap();
        let p = predict(&m, &matrix(&xs, &y)).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn stump_fits_separable_data() {
        let xs: Vec<_> = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]
            .iter()
            .map(|&v| vec![Some(v)])
            .collect();
        let y = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let train = matrix(&xs, &y);
        let m = fit(&train, &params(1, 1, 1.0, 0.0)).unwrap();
        match *m.trees[0].root() {
            Node::Split {
                feature, threshold, ..
            } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 0.5);
            }
            _ => panic!("expected a split"),
        }
        let leaves: Vec<f64> = m.trees[0]
            .nodes()
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { weight } => Some(*weight),
                _ => None,
            })
            .collect();
        assert_eq!(leaves, vec![-0.5, 0.5]);
        assert_eq!(predict(&m, &train).unwrap(), y.to_vec());
    }

    #[test]
    fn constant_residual_leaf_weight_is_shrunk() {
        // Two groups; each leaf sees n identical residuals r.
        let n = 5;
        let lambda = 2.0;
        let mut xs = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            xs.push(vec![Some(0.0)]);
            y.push(1.0);
        }
        for _ in 0..n {
            xs.push(vec![Some(1.0)]);
            y.push(3.0);
        }
        let m = fit(&matrix(&xs, &y), &params(1, 1, 1.0, lambda)).unwrap();
        let r = 1.0 - 2.0; // left-group residual against base 2.0
        let expected = n as f64 * r / (n as f64 + lambda);
        match m.trees[0].nodes()[1] {
            Node::Leaf { weight } => assert!((weight - expected).abs() < 1e-12),
            _ => panic!(),
        }
    }

    #[test]
    fn empty_ensemble_predicts_base() {
        let m = GbtEnsemble::constant(vec![Feature::Day], 0.3, GbtParams::default());
        let x = matrix(&[vec![Some(1.0)], vec![None]], &[0.0, 0.0]);
        assert_eq!(predict(&m, &x).unwrap(), vec![0.3, 0.3]);
        assert!(feature_importance(&m).iter().all(|(_, g)| *g == 0.0));
    }

    #[test]
    fn missing_rows_follow_default_path() {
        let mut xs: Vec<Vec<Option<f64>>> = (0..20)
            .map(|i| vec![Some(i as f64), Some((i % 3) as f64)])
            .collect();
        xs[3][0] = None;
        xs[17][0] = None;
        let y: Vec<f64> = (0..20).map(|i| if i < 10 { 0.0 } else { 1.0 }).collect();
        let m = fit(&matrix(&xs, &y), &params(3, 2, 0.5, 1.0)).unwrap();
        let probe = matrix(&[vec![None, None]], &[0.0]);
        let mut expected = m.base_score;
        for t in &m.trees {
            let mut i = 0;
            loop {
                match t.nodes()[i] {
                    Node::Leaf { weight } => {
                        expected += m.learning_rate * weight;
                        break;
                    }
                    Node::Split {
                        default_left,
                        left,
                        right,
                        ..
                    } => {
                        i = if default_left { left } else { right };
                    }
                }
            }
        }
        assert_eq!(predict(&m, &probe).unwrap()[0], expected);
    }

    #[test]
    fn all_missing_degrades_to_constant() {
        let xs: Vec<_> = (0..6).map(|_| vec![None, None]).collect();
        let y = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let m = fit(&matrix(&xs, &y), &params(5, 3, 0.3, 1.0)).unwrap();
        assert!(m.trees.iter().all(|t| t.nodes().len() == 1));
        assert!(feature_importance(&m).iter().all(|(_, g)| *g == 0.0));
    }

    #[test]
    fn importance_only_on_informative_feature() {
        let xs: Vec<_> = (0..40)
            .map(|i| vec![Some((i % 7) as f64), Some(i as f64), Some(3.0)])
            .collect();
        let y: Vec<f64> = (0..40).map(|i| (i as f64 / 10.0).sin()).collect();
        // target depends on column 1 only; columns 0 and 2 are uninformative
        let mut rows = xs.clone();
        for r in &mut rows {
            r[0] = Some(1.0);
        }
        let m = fit(&matrix(&rows, &y), &params(10, 3, 0.3, 1.0)).unwrap();
        let imp = feature_importance(&m);
        assert_eq!(imp[0].0, Feature::Lat);
        assert!(imp[0].1 > 0.0);
        assert!(imp[1..].iter().all(|(_, g)| *g == 0.0));
    }

    #[test]
    fn depth_never_exceeds_limit() {
        let xs: Vec<_> = (0..64)
            .map(|i| vec![Some(i as f64), Some(((i * 37) % 64) as f64)])
            .collect();
        let y: Vec<f64> = (0..64).map(|i| ((i * 13) % 17) as f64).collect();
        let m = fit(&matrix(&xs, &y), &params(5, 3, 0.5, 0.0)).unwrap();
        assert!(m.trees.iter().all(|t| t.depth() <= 3));
    }

    #[test]
    fn params_validation() {
        let mut p = GbtParams::default();
        assert!(p.validate().is_ok());
        p.learning_rate = 0.0;
        assert!(p.validate().is_err());
        p.learning_rate = 1.5;
        assert!(p.validate().is_err());
        p = GbtParams {
            lambda: -1.0,
            ..GbtParams::default()
        };
        assert!(p.validate().is_err());
        p = GbtParams {
            n_estimators: 0,
            ..GbtParams::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn arity_mismatch_rejected() {
        let m = GbtEnsemble::constant(vec![Feature::Day, Feature::Lat], 0.0, GbtParams::default());
        let x = matrix(&[vec![Some(1.0)]], &[0.0]);
        assert!(predict(&m, &x).is_err());
    }

    #[test]
    fn histogram_mode_matches_exact_on_few_distinct_values() {
        let xs: Vec<_> = (0..50)
            .map(|i| vec![Some((i % 5) as f64), Some((i % 7) as f64)])
            .collect();
        let y: Vec<f64> = (0..50).map(|i| ((i % 5) * (i % 7)) as f64 / 10.0).collect();
        let train = matrix(&xs, &y);
        let exact = fit(&train, &params(10, 3, 0.3, 1.0)).unwrap();
        let mut hp = params(10, 3, 0.3, 1.0);
        hp.histogram_bins = Some(256);
        let hist = fit(&train, &hp).unwrap();
        assert_eq!(exact.trees, hist.trees);
    }
}
