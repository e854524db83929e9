//! Bagged regression trees grown with the boosting splitter at `lambda = 0`.
//!
//! A bootstrap sample is expressed as integer row weights: a row drawn `c`
//! times contributes gradient `c (base - y)` and hessian `c`, and rows never
//! drawn have zero hessian and take no part in the tree.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Feature, FeatureMatrix};
use crate::gbt::{grow_tree, shifted_mean, ColumnIndex, Node, Tree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    /// `floor(sqrt(p))` candidate features per split, at least one.
    Sqrt,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub bootstrap: bool,
    pub max_features: MaxFeatures,
    pub min_child_weight: f64,
    pub seed: u64,
}

impl Default for RfParams {
    fn default() -> Self {
        RfParams {
            n_trees: 100,
            max_depth: 12,
            bootstrap: true,
            max_features: MaxFeatures::Sqrt,
            min_child_weight: 1.0,
            seed: 0,
        }
    }
}

impl RfParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParam("forest needs at least one tree".into()));
        }
        if !(self.min_child_weight >= 0.0) {
            return Err(Error::InvalidParam("min_child_weight must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub(crate) features: Vec<Feature>,
    /// In-bag target mean of each tree.
    pub(crate) bases: Vec<f64>,
    pub(crate) trees: Vec<Tree>,
    pub(crate) gain: Vec<f64>,
}

impl Forest {
    pub fn features(&self) -> &[Feature] {
        &self.features
    }
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Mean of the per-tree predictions.
    pub fn predict_row(&self, row: &[f64], missing: &[bool]) -> f64 {
        let mut outs = self
            .bases
            .iter()
            .zip(&self.trees)
            .map(|(b, t)| b + t.predict_row(row, missing));
        let first = outs.next().unwrap_or(0.0);
        let mut acc = 0.0;
        for v in outs {
            acc += v - first;
        }
        first + acc / self.trees.len() as f64
    }

    /// Total split gain per feature column.
    pub fn gain(&self) -> &[f64] {
        &self.gain
    }
}

/// SplitMix64 finaliser, used to derive per-node seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fit_forest(train: &FeatureMatrix, params: &RfParams) -> Result<Forest> {
    params.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training matrix has no rows".into()));
    }
    let y = train
        .target()
        .ok_or_else(|| Error::InvalidParam("training matrix has no target".into()))?;
    let n = train.n_rows();
    let p = train.n_features();
    let index = ColumnIndex::build(train, None);
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        lambda: 0.0,
        gamma: 0.0,
        min_child_weight: params.min_child_weight,
    };
    let k = match params.max_features {
        MaxFeatures::All => p,
        MaxFeatures::Sqrt => ((p as f64).sqrt().floor() as usize).clamp(1, p.max(1)),
    };

    let grown: Vec<(f64, Tree)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let weights: Vec<f64> = if params.bootstrap {
                let mut c = vec![0.0; n];
                for _ in 0..n {
                    c[rng.gen_range(0..n)] += 1.0;
                }
                c
            } else {
                vec![1.0; n]
            };
            let base = shifted_mean(y, Some(&weights));
            let grad: Vec<f64> = (0..n).map(|i| weights[i] * (base - y[i])).collect();
            let tree_seed = mix(params.seed ^ mix(t as u64));
            let choose = move |node: usize| {
                let mut mask = vec![k >= p; p];
                if k < p {
                    let mut r = ChaCha8Rng::seed_from_u64(mix(tree_seed ^ mix(node as u64)));
                    for j in index::sample(&mut r, p, k) {
                        mask[j] = true;
                    }
                }
                mask
            };
            let filter: Option<&dyn Fn(usize) -> Vec<bool>> =
                if k < p { Some(&choose) } else { None };
            let tree = grow_tree(train, &index, &grad, &weights, &tree_params, filter).tree;
            (base, tree)
        })
        .collect();

    let mut gain = vec![0.0; p];
    for (_, tree) in &grown {
        for node in tree.nodes() {
            if let Node::Split {
                feature, gain: g, ..
            } = *node
            {
                gain[feature] += g;
            }
        }
    }
    let (bases, trees) = grown.into_iter().unzip();
    Ok(Forest {
        features: train.features().to_vec(),
        bases,
        trees,
        gain,
    })
}
