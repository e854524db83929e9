//! Level-wise exact greedy tree growth on second-order statistics.
//!
//! Each feature column is sorted once per fit. At every level the grower
//! walks each sorted column a single time, keeping running gradient and
//! hessian sums per open node, so a level costs `O(rows * features)`
//! regardless of how many nodes it holds. Rows whose split feature is
//! missing are tried on both sides of every candidate and the better side
//! becomes the node's default direction.

use rayon::prelude::*;

use super::tree::{Node, Tree};
use crate::features::FeatureMatrix;

const NONE: u32 = u32::MAX;

/// Relative gain margin under which two candidates count as tied.
pub const GAIN_TIE_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
}

/// Sorted non-missing entries and missing rows of every feature.
pub(crate) struct ColumnIndex {
    sorted: Vec<Vec<(f64, u32)>>,
    missing: Vec<Vec<u32>>,
    /// Histogram mode: bin of each sorted entry plus the cut values.
    bins: Option<Vec<(Vec<u16>, Vec<f64>)>>,
}

impl ColumnIndex {
    pub(crate) fn build(x: &FeatureMatrix, histogram_bins: Option<usize>) -> Self {
        let p = x.n_features();
        let columns: Vec<(Vec<(f64, u32)>, Vec<u32>)> = (0..p)
            .into_par_iter()
            .map(|f| {
                let mut present = Vec::with_capacity(x.n_rows());
                let mut absent = Vec::new();
                for r in 0..x.n_rows() {
                    match x.get(r, f) {
                        Some(v) => present.push((v, r as u32)),
                        None => absent.push(r as u32),
                    }
                }
                // stable: equal values keep row order
                present.sort_by(|a, b| a.0.total_cmp(&b.0));
                (present, absent)
            })
            .collect();
        let (sorted, missing): (Vec<_>, Vec<_>) = columns.into_iter().unzip();
        let bins = histogram_bins.map(|nb| {
            sorted
                .iter()
                .map(|col| {
                    let cuts = quantile_cuts(col, nb);
                    let ids = col
                        .iter()
                        .map(|&(v, _)| cuts.partition_point(|&c| c < v) as u16)
                        .collect();
                    (ids, cuts)
                })
                .collect()
        });
        ColumnIndex {
            sorted,
            missing,
            bins,
        }
    }
}

/// Equal-frequency cut points (at most `bins - 1`), each a midpoint between
/// two consecutive distinct values.
fn quantile_cuts(col: &[(f64, u32)], bins: usize) -> Vec<f64> {
    let n = col.len();
    let mut cuts: Vec<f64> = Vec::new();
    if n < 2 || bins < 2 {
        return cuts;
    }
    for k in 1..bins {
        let mut i = (k * n).div_ceil(bins).max(1);
        while i < n && col[i - 1].0 == col[i].0 {
            i += 1;
        }
        if i >= n {
            break;
        }
        let c = midpoint(col[i - 1].0, col[i].0);
        if cuts.last().is_none_or(|&last| c > last) {
            cuts.push(c);
        }
    }
    cuts
}

/// A threshold `t` with `a <= t < b`, as close to `(a + b) / 2` as rounding allows.
#[inline]
pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let m = 0.5 * a + 0.5 * b;
    if m >= a && m < b {
        m
    } else {
        a
    }
}

#[inline]
pub(crate) fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    let denom = h + lambda;
    if denom > 0.0 {
        -g / denom
    } else {
        0.0
    }
}

/// Regularised second-order split gain.
#[cfg(test)]
#[inline]
pub(crate) fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, params: &TreeParams) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + params.lambda);
    0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr)) - params.gamma
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Candidate {
    pub feature: usize,
    pub threshold: f64,
    pub default_left: bool,
    pub gain: f64,
}

/// `challenger` replaces `incumbent` only when it is better by more than
/// the tie margin; callers enumerate in tie-break order.
#[inline]
pub(crate) fn beats(challenger: f64, incumbent: Option<&Candidate>) -> bool {
    match incumbent {
        None => true,
        Some(b) => challenger > b.gain + GAIN_TIE_RTOL * b.gain.abs(),
    }
}

struct BuildNode {
    g: f64,
    h: f64,
    depth: usize,
    split: Option<(Candidate, usize, usize)>,
}

pub(crate) struct GrownTree {
    pub tree: Tree,
    /// Preorder leaf index per row; `usize::MAX` for rows with zero hessian.
    pub leaf_of_row: Vec<usize>,
}

/// Per-node feature filter, keyed by build order; `None` allows everything.
pub(crate) type FeatureFilter<'a> = &'a dyn Fn(usize) -> Vec<bool>;

/// Grows one tree. Rows with `hess == 0` do not participate.
pub(crate) fn grow_tree(
    x: &FeatureMatrix,
    index: &ColumnIndex,
    grad: &[f64],
    hess: &[f64],
    params: &TreeParams,
    filter: Option<FeatureFilter<'_>>,
) -> GrownTree {
    let n = x.n_rows();
    let p = x.n_features();
    let mut pos: Vec<u32> = hess
        .iter()
        .map(|&h| if h > 0.0 { 0 } else { NONE })
        .collect();

    let (mut g0, mut h0) = (0.0, 0.0);
    for r in 0..n {
        if pos[r] != NONE {
            g0 += grad[r];
            h0 += hess[r];
        }
    }
    let mut nodes = vec![BuildNode {
        g: g0,
        h: h0,
        depth: 0,
        split: None,
    }];
    let mut frontier: Vec<usize> = vec![0];

    while !frontier.is_empty() {
        frontier.retain(|&id| nodes[id].depth < params.max_depth);
        if frontier.is_empty() {
            break;
        }
        let mut slot_of = vec![-1i32; nodes.len()];
        for (s, &id) in frontier.iter().enumerate() {
            slot_of[id] = s as i32;
        }
        let allowed: Option<Vec<Vec<bool>>> =
            filter.map(|f| frontier.iter().map(|&id| f(id)).collect());
        let totals: Vec<(f64, f64)> = frontier
            .iter()
            .map(|&id| (nodes[id].g, nodes[id].h))
            .collect();
        let state: Vec<RowState> = (0..n)
            .map(|r| {
                let id = pos[r];
                let s = if id == NONE { -1 } else { slot_of[id as usize] };
                RowState {
                    g: grad[r],
                    h: hess[r] as f32,
                    slot: if s >= 0 { s as u32 } else { NONE },
                }
            })
            .collect();

        let per_feature: Vec<Vec<Option<Candidate>>> = (0..p)
            .into_par_iter()
            .map(|f| {
                if let Some(a) = &allowed {
                    if a.iter().all(|mask| !mask[f]) {
                        return vec![None; frontier.len()];
                    }
                }
                scan_feature(f, index, &state, &totals, params)
            })
            .collect();

        let mut next = Vec::new();
        for (s, &id) in frontier.iter().enumerate() {
            let mut best: Option<Candidate> = None;
            for (f, cands) in per_feature.iter().enumerate() {
                if let Some(a) = &allowed {
                    if !a[s][f] {
                        continue;
                    }
                }
                if let Some(c) = cands[s] {
                    if beats(c.gain, best.as_ref()) {
                        best = Some(c);
                    }
                }
            }
            if let Some(c) = best {
                let depth = nodes[id].depth + 1;
                let l = nodes.len();
                nodes.push(BuildNode {
                    g: 0.0,
                    h: 0.0,
                    depth,
                    split: None,
                });
                nodes.push(BuildNode {
                    g: 0.0,
                    h: 0.0,
                    depth,
                    split: None,
                });
                nodes[id].split = Some((c, l, l + 1));
                next.push(l);
                next.push(l + 1);
            }
        }
        if next.is_empty() {
            break;
        }

        let first_new = next[0];
        for r in 0..n {
            let id = pos[r];
            if id == NONE {
                continue;
            }
            if let Some((c, l, rt)) = nodes[id as usize].split {
                let go_left = match x.get(r, c.feature) {
                    None => c.default_left,
                    Some(v) => v <= c.threshold,
                };
                let child = if go_left { l } else { rt };
                pos[r] = child as u32;
                nodes[child].g += grad[r];
                nodes[child].h += hess[r];
            }
        }
        debug_assert!(next.iter().all(|&id| id >= first_new));
        frontier = next;
    }

    // Renumber build order into preorder.
    let mut out = Vec::with_capacity(nodes.len());
    let mut preorder_id = vec![0usize; nodes.len()];
    fn emit(
        id: usize,
        nodes: &[BuildNode],
        out: &mut Vec<Node>,
        map: &mut [usize],
        lambda: f64,
    ) -> usize {
        let me = out.len();
        map[id] = me;
        match nodes[id].split {
            None => out.push(Node::Leaf {
                weight: leaf_weight(nodes[id].g, nodes[id].h, lambda),
            }),
            Some((c, l, r)) => {
                out.push(Node::Leaf { weight: 0.0 });
                let li = emit(l, nodes, out, map, lambda);
                let ri = emit(r, nodes, out, map, lambda);
                out[me] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    default_left: c.default_left,
                    left: li,
                    right: ri,
                    gain: c.gain,
                };
            }
        }
        me
    }
    emit(0, &nodes, &mut out, &mut preorder_id, params.lambda);

    let leaf_of_row = pos
        .iter()
        .map(|&id| {
            if id == NONE {
                usize::MAX
            } else {
                preorder_id[id as usize]
            }
        })
        .collect();
    GrownTree {
        tree: Tree { nodes: out },
        leaf_of_row,
    }
}

#[derive(Clone, Copy)]
struct RunningSum {
    g: f64,
    h: f64,
    last: f64,
    last_bin: u16,
    seen: bool,
}

#[derive(Clone, Copy)]
struct RowState {
    g: f64,
    /// Hessians are row counts, so f32 holds them exactly.
    h: f32,
    /// Frontier slot of the row's node, `NONE` when the row is inactive.
    slot: u32,
}

fn scan_feature(
    f: usize,
    index: &ColumnIndex,
    state: &[RowState],
    totals: &[(f64, f64)],
    params: &TreeParams,
) -> Vec<Option<Candidate>> {
    let k = totals.len();
    let mut miss = vec![(0.0f64, 0.0f64); k];
    let mut any_missing = vec![false; k];
    for &r in &index.missing[f] {
        let st = state[r as usize];
        if st.slot != NONE {
            let s = st.slot as usize;
            miss[s].0 += st.g;
            miss[s].1 += st.h as f64;
            any_missing[s] = true;
        }
    }
    let score = |g: f64, h: f64| g * g / (h + params.lambda);
    let parent: Vec<f64> = totals.iter().map(|&(g, h)| score(g, h)).collect();

    let column = &index.sorted[f];
    if index.bins.is_none() {
        return scan_exact(
            f,
            column,
            state,
            totals,
            &miss,
            &any_missing,
            &parent,
            params,
        );
    }
    let mut run = vec![
        RunningSum {
            g: 0.0,
            h: 0.0,
            last: 0.0,
            last_bin: 0,
            seen: false
        };
        k
    ];
    let mut best: Vec<Option<Candidate>> = vec![None; k];
    let bins = index.bins.as_ref().map(|b| &b[f]);

    for (j, &(v, r)) in column.iter().enumerate() {
        let st = state[r as usize];
        if st.slot == NONE {
            continue;
        }
        let s = st.slot as usize;
        let acc = &mut run[s];
        let bin = bins.map_or(0, |(ids, _)| ids[j]);
        if acc.seen && v > acc.last {
            let threshold = match bins {
                None => Some(midpoint(acc.last, v)),
                Some((_, cuts)) => (bin != acc.last_bin).then(|| cuts[acc.last_bin as usize]),
            };
            if let Some(threshold) = threshold {
                let (g, h) = totals[s];
                let (mg, mh) = miss[s];
                // without missing rows both directions give the same gain and left wins the tie
                let directions: &[bool] = if any_missing[s] {
                    &[true, false]
                } else {
                    &[true]
                };
                for &default_left in directions {
                    let (gl, hl) = if default_left {
                        (acc.g + mg, acc.h + mh)
                    } else {
                        (acc.g, acc.h)
                    };
                    let (gr, hr) = (g - gl, h - hl);
                    if hl < params.min_child_weight || hr < params.min_child_weight {
                        continue;
                    }
                    let gain = 0.5 * (score(gl, hl) + score(gr, hr) - parent[s]) - params.gamma;
                    if gain > 0.0 && beats(gain, best[s].as_ref()) {
                        best[s] = Some(Candidate {
                            feature: f,
                            threshold,
                            default_left,
                            gain,
                        });
                    }
                }
            }
        }
        acc.g += st.g;
        acc.h += st.h as f64;
        acc.last = v;
        acc.last_bin = bin;
        acc.seen = true;
    }
    best
}

#[derive(Clone, Copy)]
struct ExactSum {
    g: f64,
    h: f64,
    last: f64,
    seen: bool,
}

#[allow(clippy::too_many_arguments)]
fn scan_exact(
    f: usize,
    column: &[(f64, u32)],
    state: &[RowState],
    totals: &[(f64, f64)],
    miss: &[(f64, f64)],
    any_missing: &[bool],
    parent: &[f64],
    params: &TreeParams,
) -> Vec<Option<Candidate>> {
    let k = totals.len();
    let lambda = params.lambda;
    let mcw = params.min_child_weight;
    let mut run = vec![
        ExactSum {
            g: 0.0,
            h: 0.0,
            last: 0.0,
            seen: false,
        };
        k
    ];
    let mut best: Vec<Option<Candidate>> = vec![None; k];
    let mut best_gain = vec![0.0f64; k];

    for &(v, r) in column {
        let st = state[r as usize];
        if st.slot == NONE {
            continue;
        }
        let s = st.slot as usize;
        let acc = &mut run[s];
        if acc.seen && v > acc.last {
            let (g, h) = totals[s];
            let (mg, mh) = miss[s];
            // without missing rows the right default ties and left is kept
            let n_dir = if any_missing[s] { 2 } else { 1 };
            for d in 0..n_dir {
                let default_left = d == 0;
                let (gl, hl) = if default_left {
                    (acc.g + mg, acc.h + mh)
                } else {
                    (acc.g, acc.h)
                };
                let (gr, hr) = (g - gl, h - hl);
                if hl < mcw || hr < mcw {
                    continue;
                }
                let gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent[s])
                    - params.gamma;
                // same test as `beats`, on a cached incumbent gain
                let bg = best_gain[s];
                let wins = if best[s].is_none() {
                    gain > 0.0
                } else {
                    gain > bg + GAIN_TIE_RTOL * bg.abs()
                };
                if wins {
                    best_gain[s] = gain;
                    best[s] = Some(Candidate {
                        feature: f,
                        threshold: midpoint(acc.last, v),
                        default_left,
                        gain,
                    });
                }
            }
        }
        acc.g += st.g;
        acc.h += st.h as f64;
        acc.last = v;
        acc.seen = true;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_stays_below_upper() {
        assert_eq!(midpoint(0.0, 1.0), 0.5);
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(m >= a && m < b);
    }

    #[test]
    fn gain_formula() {
        let p = TreeParams {
            max_depth: 1,
            lambda: 1.0,
            gamma: 0.5,
            min_child_weight: 0.0,
        };
        // 0.5 * (4/3 + 9/4 - 1/6) - 0.5
        let g = split_gain(2.0, 2.0, -3.0, 3.0, &p);
        let expected = 0.5 * (4.0 / 3.0 + 9.0 / 4.0 - 1.0 / 6.0) - 0.5;
        assert!((g - expected).abs() < 1e-15);
    }

    #[test]
    fn quantile_cuts_collapse_to_distinct_values() {
        let col: Vec<(f64, u32)> = [1.0, 1.0, 2.0, 3.0]
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, i as u32))
            .collect();
        assert_eq!(quantile_cuts(&col, 256), vec![1.5, 2.5]);
        let many: Vec<(f64, u32)> = (0..1000).map(|i| (i as f64, i as u32)).collect();
        let cuts = quantile_cuts(&many, 4);
        assert_eq!(cuts, vec![249.5, 499.5, 749.5]);
    }
}
