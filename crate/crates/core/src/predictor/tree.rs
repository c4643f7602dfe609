//! CART classification tree with weighted Gini impurity.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    #[default]
    All,
    Sqrt,
}

impl MaxFeatures {
    pub fn count(self, d: usize) -> usize {
        match self {
            MaxFeatures::All => d,
            MaxFeatures::Sqrt => ((d as f64).sqrt().ceil() as usize).clamp(1, d),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeParams {
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    #[serde(default = "default_leaf")]
    pub min_leaf: usize,
    #[serde(default)]
    pub max_features: MaxFeatures,
}

fn default_depth() -> usize {
    12
}
fn default_leaf() -> usize {
    5
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: default_depth(),
            min_leaf: default_leaf(),
            max_features: MaxFeatures::All,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        /// Weighted fraction of FAILED examples.
        prob: f64,
        samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

/// Training data in column-major layout.
pub struct TrainData<'a> {
    pub cols: Vec<Vec<f64>>,
    pub y: &'a [bool],
    pub w: &'a [f64],
}

impl<'a> TrainData<'a> {
    pub fn new<const D: usize>(x: &[[f64; D]], y: &'a [bool], w: &'a [f64]) -> Self {
        let cols = (0..D).map(|f| x.iter().map(|r| r[f]).collect()).collect();
        TrainData { cols, y, w }
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }
}

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
    split_at: usize,
}

impl DecisionTree {
    /// Grows a tree over the (possibly repeated) example indices `idx`.
    pub fn fit<R: Rng + ?Sized>(data: &TrainData, idx: Vec<usize>, params: &TreeParams, rng: &mut R) -> DecisionTree {
        let mut tree = DecisionTree { nodes: Vec::new() };
        tree.grow(data, idx, 0, params, rng);
        tree
    }

    fn leaf(data: &TrainData, idx: &[usize]) -> TreeNode {
        let (mut w, mut wp) = (0.0, 0.0);
        for &i in idx {
            w += data.w[i];
            if data.y[i] {
                wp += data.w[i];
            }
        }
        TreeNode::Leaf {
            prob: if w > 0.0 { wp / w } else { 0.0 },
            samples: idx.len(),
        }
    }

    fn grow<R: Rng + ?Sized>(&mut self, data: &TrainData, idx: Vec<usize>, depth: usize, p: &TreeParams, rng: &mut R) -> usize {
        let me = self.nodes.len();
        self.nodes.push(Self::leaf(data, &idx));
        let pure = idx.iter().all(|&i| data.y[i]) || idx.iter().all(|&i| !data.y[i]);
        if depth >= p.max_depth || pure || idx.len() < 2 * p.min_leaf.max(1) {
            return me;
        }
        let d = data.n_features();
        let mut features: Vec<usize> = match p.max_features {
            MaxFeatures::All => (0..d).collect(),
            m => sample(rng, d, m.count(d)).into_vec(),
        };
        features.sort_unstable();
        let Some(best) = best_split(data, &idx, &features, p.min_leaf.max(1)) else {
            return me;
        };
        let mut sorted = idx;
        sort_by_feature(data, &mut sorted, best.feature);
        let right_idx = sorted.split_off(best.split_at);
        let left = self.grow(data, sorted, depth + 1, p, rng);
        let right = self.grow(data, right_idx, depth + 1, p, rng);
        self.nodes[me] = TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        me
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { prob, .. } => return *prob,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Depth of the deepest leaf (root alone is depth 0).
    pub fn depth(&self) -> usize {
        fn walk(t: &DecisionTree, at: usize) -> usize {
            match &t.nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        if self.nodes.is_empty() {
            0
        } else {
            walk(self, 0)
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Leaf { prob, samples } => Some((*prob, *samples)),
            _ => None,
        })
    }
}

fn sort_by_feature(data: &TrainData, idx: &mut [usize], f: usize) {
    let col = &data.cols[f];
    idx.sort_by(|&a, &b| col[a].partial_cmp(&col[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
}

fn gini(w: f64, wp: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let p = wp / w;
    w * 2.0 * p * (1.0 - p)
}

fn best_split(data: &TrainData, idx: &[usize], features: &[usize], min_leaf: usize) -> Option<Best> {
    let (mut w_tot, mut wp_tot) = (0.0, 0.0);
    for &i in idx {
        w_tot += data.w[i];
        if data.y[i] {
            wp_tot += data.w[i];
        }
    }
    let parent = gini(w_tot, wp_tot);
    let n = idx.len();
    let mut best: Option<Best> = None;
    let mut order = idx.to_vec();
    for &f in features {
        sort_by_feature(data, &mut order, f);
        let col = &data.cols[f];
        let (mut wl, mut wpl) = (0.0, 0.0);
        for k in 0..n - 1 {
            let i = order[k];
            wl += data.w[i];
            if data.y[i] {
                wpl += data.w[i];
            }
            let left_n = k + 1;
            if left_n < min_leaf || n - left_n < min_leaf {
                continue;
            }
            let (a, b) = (col[i], col[order[k + 1]]);
            if a == b {
                continue;
            }
            let gain = parent - gini(wl, wpl) - gini(w_tot - wl, wp_tot - wpl);
            if gain > 1e-12 && best.as_ref().is_none_or(|bb| gain > bb.gain) {
                let mut threshold = a + (b - a) / 2.0;
                if threshold >= b {
                    threshold = a;
                }
                best = Some(Best {
                    gain,
                    feature: f,
                    threshold,
                    split_at: left_n,
                });
            }
        }
    }
    best
}
