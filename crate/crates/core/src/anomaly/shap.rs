//! Path-dependent TreeSHAP over the expected-depth output of an isolation forest.
//!
//! Each tree's output is the path length of `x`; attributions are averaged over
//! trees so that `base + Σφ = E[h(x)]`.

use super::forest::{ForestModel, IsolationTree, Node};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct ShapExplanation {
    pub values: Vec<f64>,
    /// Cover-weighted mean leaf value, averaged over trees.
    pub base: f64,
    /// E[h(x)] the attributions explain.
    pub output: f64,
}

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: usize,
    zero_fraction: f64,
    one_fraction: f64,
    weight: f64,
}

const NO_FEATURE: usize = usize::MAX;

fn extend(path: &mut Vec<PathElement>, zero_fraction: f64, one_fraction: f64, feature: usize) {
    let depth = path.len();
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        weight: if depth == 0 { 1.0 } else { 0.0 },
    });
    let d1 = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].weight += one_fraction * path[i].weight * (i + 1) as f64 / d1;
        path[i].weight = zero_fraction * path[i].weight * (depth - i) as f64 / d1;
    }
}

fn unwind(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = (depth + 1) as f64;
    let mut next_one = path[depth].weight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next_one * d1 / ((i + 1) as f64 * one);
            next_one = tmp - path[i].weight * zero * (depth - i) as f64 / d1;
        } else {
            path[i].weight = path[i].weight * d1 / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let mut next_one = path[depth].weight;
    let mut total = 0.0;
    if one != 0.0 {
        for i in (0..depth).rev() {
            let tmp = next_one / ((i + 1) as f64 * one);
            total += tmp;
            next_one = path[i].weight - tmp * zero * (depth - i) as f64;
        }
    } else {
        for i in (0..depth).rev() {
            total += path[i].weight / (zero * (depth - i) as f64);
        }
    }
    total * (depth + 1) as f64
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    tree: &IsolationTree,
    node: usize,
    x: &[f64],
    parent: &[PathElement],
    zero_fraction: f64,
    one_fraction: f64,
    feature: usize,
    phi: &mut [f64],
) {
    let mut path = parent.to_vec();
    extend(&mut path, zero_fraction, one_fraction, feature);

    match tree.nodes()[node] {
        Node::Leaf { cover, depth } => {
            let value = IsolationTree::leaf_value(cover, depth);
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let el = path[i];
                phi[el.feature] += w * (el.one_fraction - el.zero_fraction) * value;
            }
        }
        Node::Internal {
            feature: split_feature,
            split,
            left,
            right,
            cover,
        } => {
            let (hot, cold) = if x[split_feature] < split {
                (left, right)
            } else {
                (right, left)
            };
            let cover = cover as f64;
            let hot_zero = tree.nodes()[hot].cover() as f64 / cover;
            let cold_zero = tree.nodes()[cold].cover() as f64 / cover;
            let mut incoming_zero = 1.0;
            let mut incoming_one = 1.0;
            if let Some(k) = (1..path.len()).find(|&k| path[k].feature == split_feature) {
                incoming_zero = path[k].zero_fraction;
                incoming_one = path[k].one_fraction;
                unwind(&mut path, k);
            }
            recurse(
                tree,
                hot,
                x,
                &path,
                hot_zero * incoming_zero,
                incoming_one,
                split_feature,
                phi,
            );
            recurse(
                tree,
                cold,
                x,
                &path,
                cold_zero * incoming_zero,
                0.0,
                split_feature,
                phi,
            );
        }
    }
}

/// Cover-weighted mean of leaf values: the tree output with no feature known.
pub fn tree_base_value(tree: &IsolationTree) -> f64 {
    let root = tree.nodes()[0].cover() as f64;
    tree.nodes()
        .iter()
        .filter_map(|n| match *n {
            Node::Leaf { cover, depth } => {
                Some(cover as f64 / root * IsolationTree::leaf_value(cover, depth))
            }
            Node::Internal { .. } => None,
        })
        .sum()
}

/// Attributions of one tree's path length at `x`.
pub fn tree_shap_single(tree: &IsolationTree, x: &[f64], n_features: usize) -> (Vec<f64>, f64) {
    let mut phi = vec![0.0; n_features];
    recurse(tree, 0, x, &[], 1.0, 1.0, NO_FEATURE, &mut phi);
    (phi, tree_base_value(tree))
}

/// Forest attributions, accumulated in tree order.
pub fn tree_shap(model: &ForestModel, x: &[f64]) -> Result<ShapExplanation> {
    let output = model.expected_depth(x)?;
    let n = model.trees().len() as f64;
    let mut values = vec![0.0; model.n_features()];
    let mut base = 0.0;
    for tree in model.trees() {
        let (phi, b) = tree_shap_single(tree, x, model.n_features());
        values.iter_mut().zip(&phi).for_each(|(v, p)| *v += p);
        base += b;
    }
    values.iter_mut().for_each(|v| *v /= n);
    Ok(ShapExplanation {
        values,
        base: base / n,
        output,
    })
}
