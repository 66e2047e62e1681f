//! Random forest classifier: class-weighted Gini CART trees grown
//! best-first under a leaf budget, soft voting, MDI importances.

pub mod io;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::domain::{FeatureRow, FeatureSchema, FeatureTable, EVENT_VOCABULARY};
use crate::error::{Error, Result};
use crate::rng::{seeded_rng, stream_id, NS_TREE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeighting {
    None,
    Balanced,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_leaves: usize,
    pub features_per_split: usize,
    pub min_samples_leaf: usize,
    pub class_weighting: ClassWeighting,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 64,
            max_leaves: 128,
            features_per_split: 7,
            min_samples_leaf: 1,
            class_weighting: ClassWeighting::Balanced,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::param("n_trees", "must be >= 1".to_string()));
        }
        if self.max_leaves < 2 {
            return Err(Error::param("max_leaves", "must be >= 2".to_string()));
        }
        if self.features_per_split < 1 {
            return Err(Error::param("features_per_split", "must be >= 1".to_string()));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::param("min_samples_leaf", "must be >= 1".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    Leaf { distribution: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Leaf distribution reached by a complete row. Left branch takes
    /// values <= threshold.
    fn leaf_for(&self, values: &[f64]) -> &[f64] {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { distribution } => return distribution,
                Node::Split { feature, threshold, left, right } => {
                    at = if values[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub schema: FeatureSchema,
    /// Class labels in canonical vocabulary order; leaf distributions and
    /// prediction vectors are indexed by this list.
    pub classes: Vec<String>,
    pub params: ForestParams,
    pub trees: Vec<Tree>,
    /// Mean decrease in impurity per feature, normalized to sum 1 unless
    /// no split was ever made.
    pub importances: Vec<f64>,
    pub trained_rows: usize,
    pub dropped_rows: usize,
    /// True when training saw a single class; the model is a constant
    /// predictor and importances are all zero.
    pub degenerate: bool,
}

/// Errors unless the model was trained against the same feature schema.
pub fn ensure_schema_matches(model: &ForestModel, schema: &FeatureSchema) -> Result<()> {
    if model.schema != *schema {
        return Err(Error::Schema(format!(
            "model schema v{} ({} features) does not match table schema v{} ({} features)",
            model.schema.version,
            model.schema.names.len(),
            schema.version,
            schema.names.len()
        )));
    }
    Ok(())
}

/// Total order on rows so bootstrap indices are independent of input
/// row order.
fn canonical_cmp(a: &FeatureRow, b: &FeatureRow) -> Ordering {
    a.patient_id
        .cmp(&b.patient_id)
        .then(a.window_start_s.total_cmp(&b.window_start_s))
        .then_with(|| a.label.cmp(&b.label))
        .then_with(|| {
            for (x, y) in a.values.iter().zip(&b.values) {
                let ord = x.total_cmp(y);
                if ord != Ordering::Equal {
                    return ord;
                }
            }
            Ordering::Equal
        })
}

/// Candidate expansion in the best-first queue: largest weighted gain
/// first, then oldest node.
#[derive(Debug, PartialEq)]
struct Expansion {
    gain: f64,
    node_id: u32,
    feature: u32,
    threshold: f64,
}

impl Eq for Expansion {}

impl Ord for Expansion {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.node_id.cmp(&self.node_id))
    }
}

impl PartialOrd for Expansion {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Rows reaching a node, as (row index, bootstrap multiplicity).
type NodeRows = Vec<(u32, u32)>;

struct TreeBuilder<'a> {
    rows: &'a [&'a FeatureRow],
    class_of: &'a [usize],
    class_weight: &'a [f64],
    n_classes: usize,
    params: &'a ForestParams,
    root_weight: f64,
}

impl<'a> TreeBuilder<'a> {
    fn class_weights_in(&self, rows: &NodeRows) -> Vec<f64> {
        let mut w = vec![0.0; self.n_classes];
        for &(row, count) in rows {
            let c = self.class_of[row as usize];
            w[c] += count as f64 * self.class_weight[c];
        }
        w
    }

    fn gini(weights: &[f64], total: f64) -> f64 {
        if total <= 0.0 {
            return 0.0;
        }
        1.0 - weights.iter().map(|w| (w / total) * (w / total)).sum::<f64>()
    }

    /// Best midpoint split over the drawn feature subset. Gain is the
    /// root-weight fraction times the impurity decrease, the same
    /// quantity MDI accumulates. Ties break toward the lower feature
    /// index, then the lower threshold.
    fn best_split(&self, rows: &NodeRows, features: &[usize]) -> Option<Expansion> {
        let node_weights = self.class_weights_in(rows);
        let node_total: f64 = node_weights.iter().sum();
        let node_gini = Self::gini(&node_weights, node_total);
        if node_gini <= 0.0 {
            return None;
        }
        let node_count: u32 = rows.iter().map(|&(_, c)| c).sum();
        let min_leaf = self.params.min_samples_leaf as u32;

        let mut best: Option<(f64, usize, f64)> = None;
        let mut points: Vec<(f64, usize, u32)> = Vec::with_capacity(rows.len());
        for &feature in features {
            points.clear();
            for &(row, count) in rows {
                points.push((self.rows[row as usize].values[feature], self.class_of[row as usize], count));
            }
            points.sort_by(|a, b| a.0.total_cmp(&b.0));

            let mut left_weights = vec![0.0; self.n_classes];
            let mut left_total = 0.0;
            let mut left_count = 0u32;
            for i in 0..points.len() - 1 {
                let (value, class, count) = points[i];
                let w = count as f64 * self.class_weight[class];
                left_weights[class] += w;
                left_total += w;
                left_count += count;
                let next = points[i + 1].0;
                if value >= next {
                    continue;
                }
                let threshold = value + (next - value) / 2.0;
                // Guard against midpoint rounding onto the upper value.
                if threshold >= next {
                    continue;
                }
                if left_count < min_leaf || node_count - left_count < min_leaf {
                    continue;
                }
                let right_total = node_total - left_total;
                let mut right_sq = 0.0;
                let mut left_sq = 0.0;
                for c in 0..self.n_classes {
                    let l = left_weights[c] / left_total;
                    left_sq += l * l;
                    let r = (node_weights[c] - left_weights[c]) / right_total;
                    right_sq += r * r;
                }
                let children = left_total / node_total * (1.0 - left_sq)
                    + right_total / node_total * (1.0 - right_sq);
                let gain = node_total / self.root_weight * (node_gini - children);
                let candidate = (gain, feature, threshold);
                let better = match &best {
                    None => gain > 0.0,
                    Some((bg, bf, bt)) => {
                        gain > *bg
                            || (gain == *bg && (feature < *bf || (feature == *bf && threshold < *bt)))
                    }
                };
                if better {
                    best = Some(candidate);
                }
            }
        }
        best.map(|(gain, feature, threshold)| Expansion {
            gain,
            node_id: 0,
            feature: feature as u32,
            threshold,
        })
    }

    fn leaf_distribution(&self, rows: &NodeRows) -> Vec<f64> {
        let weights = self.class_weights_in(rows);
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            weights.iter().map(|w| w / total).collect()
        } else {
            weights
        }
    }

    fn grow(&self, tree_index: usize) -> (Tree, Vec<f64>) {
        let n = self.rows.len();
        let mut rng = seeded_rng(self.params.seed, stream_id(NS_TREE, tree_index as u64));
        let mut counts = vec![0u32; n];
        for _ in 0..n {
            counts[rand::Rng::gen_range(&mut rng, 0..n)] += 1;
        }
        let root_rows: NodeRows = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i as u32, c))
            .collect();

        let d = self.rows[0].values.len();
        let subset = self.params.features_per_split.min(d);
        let mut nodes: Vec<Node> = Vec::new();
        let mut pending: Vec<Option<NodeRows>> = Vec::new();
        let mut heap: BinaryHeap<Expansion> = BinaryHeap::new();
        let mut importance = vec![0.0f64; d];

        let create = |rows: NodeRows,
                          nodes: &mut Vec<Node>,
                          pending: &mut Vec<Option<NodeRows>>,
                          heap: &mut BinaryHeap<Expansion>,
                          rng: &mut rand_chacha::ChaCha8Rng| {
            let id = nodes.len() as u32;
            nodes.push(Node::Leaf { distribution: self.leaf_distribution(&rows) });
            let mut features: Vec<usize> = rand::seq::index::sample(rng, d, subset).into_vec();
            features.sort_unstable();
            if let Some(mut exp) = self.best_split(&rows, &features) {
                exp.node_id = id;
                heap.push(exp);
                pending.push(Some(rows));
            } else {
                pending.push(None);
            }
            id
        };

        create(root_rows, &mut nodes, &mut pending, &mut heap, &mut rng);
        let mut leaves = 1usize;
        while leaves < self.params.max_leaves {
            let Some(exp) = heap.pop() else { break };
            let rows = pending[exp.node_id as usize].take().expect("queued node has rows");
            let feature = exp.feature as usize;
            let (left_rows, right_rows): (NodeRows, NodeRows) = rows
                .into_iter()
                .partition(|&(row, _)| self.rows[row as usize].values[feature] <= exp.threshold);
            let left = create(left_rows, &mut nodes, &mut pending, &mut heap, &mut rng);
            let right = create(right_rows, &mut nodes, &mut pending, &mut heap, &mut rng);
            nodes[exp.node_id as usize] =
                Node::Split { feature: exp.feature, threshold: exp.threshold, left, right };
            importance[feature] += exp.gain;
            leaves += 1;
        }

        (Tree { nodes }, importance)
    }
}

/// Trains the forest. Rows containing not-a-value are dropped and counted;
/// a single-class table yields a constant predictor flagged degenerate.
pub fn fit_forest(table: &FeatureTable, params: &ForestParams) -> Result<ForestModel> {
    params.validate()?;
    let complete = table.complete_rows();
    let dropped = table.rows.len() - complete.rows.len();
    if complete.rows.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "need >= 10 complete rows to train, got {}",
            complete.rows.len()
        )));
    }

    let mut sorted: Vec<&FeatureRow> = complete.rows.iter().collect();
    sorted.sort_by(|a, b| canonical_cmp(a, b));

    let classes: Vec<String> = EVENT_VOCABULARY
        .iter()
        .filter(|c| sorted.iter().any(|r| r.label == **c))
        .map(|c| c.to_string())
        .collect();
    let n_features = table.schema.names.len();

    if classes.len() < 2 {
        let distribution = vec![1.0];
        let trees = (0..params.n_trees)
            .map(|_| Tree { nodes: vec![Node::Leaf { distribution: distribution.clone() }] })
            .collect();
        return Ok(ForestModel {
            schema: table.schema.clone(),
            classes,
            params: params.clone(),
            trees,
            importances: vec![0.0; n_features],
            trained_rows: sorted.len(),
            dropped_rows: dropped,
            degenerate: true,
        });
    }

    let class_index = |label: &str| classes.iter().position(|c| c == label).expect("known class");
    let class_of: Vec<usize> = sorted.iter().map(|r| class_index(&r.label)).collect();
    let mut class_counts = vec![0usize; classes.len()];
    for &c in &class_of {
        class_counts[c] += 1;
    }
    let n = sorted.len() as f64;
    let k = classes.len() as f64;
    let class_weight: Vec<f64> = match params.class_weighting {
        ClassWeighting::None => vec![1.0; classes.len()],
        ClassWeighting::Balanced => class_counts.iter().map(|&c| n / (k * c as f64)).collect(),
    };
    // Bootstrap multiplicities enter every node weight, so the exact root
    // weight varies per tree; gains are normalized by the nominal total.
    let root_weight: f64 = class_counts
        .iter()
        .zip(&class_weight)
        .map(|(&c, &w)| c as f64 * w)
        .sum();

    let builder = TreeBuilder {
        rows: &sorted,
        class_of: &class_of,
        class_weight: &class_weight,
        n_classes: classes.len(),
        params,
        root_weight,
    };

    let grown: Vec<(Tree, Vec<f64>)> =
        (0..params.n_trees).into_par_iter().map(|t| builder.grow(t)).collect();

    let mut importances = vec![0.0f64; n_features];
    let mut trees = Vec::with_capacity(params.n_trees);
    for (tree, imp) in grown {
        for (acc, v) in importances.iter_mut().zip(&imp) {
            *acc += v / params.n_trees as f64;
        }
        trees.push(tree);
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        for v in &mut importances {
            *v /= total;
        }
    }

    Ok(ForestModel {
        schema: table.schema.clone(),
        classes,
        params: params.clone(),
        trees,
        importances,
        trained_rows: sorted.len(),
        dropped_rows: dropped,
        degenerate: false,
    })
}

/// Soft-voted prediction: mean of per-tree leaf distributions; ties break
/// to the lowest class index.
pub fn predict(model: &ForestModel, values: &[f64]) -> Result<(String, Vec<f64>)> {
    if values.len() != model.schema.names.len() {
        return Err(Error::Schema(format!(
            "row has {} values, schema expects {}",
            values.len(),
            model.schema.names.len()
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::param(
            "row",
            format!("not-a-value in column {} ({})", i, model.schema.names[i]),
        ));
    }
    let mut distribution = vec![0.0f64; model.classes.len()];
    for tree in &model.trees {
        for (acc, p) in distribution.iter_mut().zip(tree.leaf_for(values)) {
            *acc += p;
        }
    }
    for p in &mut distribution {
        *p /= model.trees.len() as f64;
    }
    let mut best = 0usize;
    for (i, p) in distribution.iter().enumerate() {
        if *p > distribution[best] {
            best = i;
        }
    }
    Ok((model.classes[best].clone(), distribution))
}

/// Predictions for every row of a table, in row order.
pub fn predict_table(model: &ForestModel, table: &FeatureTable) -> Result<Vec<(String, Vec<f64>)>> {
    ensure_schema_matches(model, &table.schema)?;
    table
        .rows
        .par_iter()
        .map(|row| predict(model, &row.values))
        .collect()
}
