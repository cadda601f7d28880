use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cca::{canonical_correlation, one_hot, Matrix};

use super::split::{best_split, best_split_1d};
use super::{project, ForestParams, SplitMode, TrainingSet};

/// Gains at or below this are treated as "no useful split".
const MIN_GAIN: f64 = 1e-12;

/// Projection-bootstrap attempts before falling back to an axis split.
const CCA_ATTEMPTS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        features: Vec<usize>,
        projection: Vec<f64>,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        distribution: Vec<f64>,
    },
}

/// A trained tree stored as a node arena; node 0 is the root and children
/// always have larger indices than their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub(crate) nodes: Vec<Node>,
}

impl Tree {
    pub fn from_nodes(nodes: Vec<Node>) -> Self {
        Tree { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Index of the leaf reached by `row`.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut n = 0;
        loop {
            match &self.nodes[n] {
                Node::Split {
                    features,
                    projection,
                    threshold,
                    left,
                    right,
                } => {
                    n = if project(row, features, projection) <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
                Node::Leaf { .. } => return n,
            }
        }
    }

    pub fn leaf_distribution(&self, row: &[f64]) -> &[f64] {
        match &self.nodes[self.leaf_index(row)] {
            Node::Leaf { distribution } => distribution,
            Node::Split { .. } => unreachable!("leaf_index stops at leaves"),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], n: usize) -> usize {
            match &nodes[n] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

/// Random stream for tree `index` of a forest seeded with `seed`.
///
/// Every tree gets its own ChaCha stream, so trees can be grown in any order
/// or concurrently without changing the result.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

struct Grower<'a, R: Rng> {
    data: &'a TrainingSet,
    params: &'a ForestParams,
    lambda: usize,
    rng: R,
    nodes: Vec<Node>,
}

struct ChosenSplit {
    features: Vec<usize>,
    projection: Vec<f64>,
    threshold: f64,
}

/// Grow one tree on every row of `data`.
pub fn train_tree<R: Rng>(data: &TrainingSet, params: &ForestParams, rng: R) -> Tree {
    let mut grower = Grower {
        data,
        params,
        lambda: params.resolved_subsample(data.n_features()),
        rng,
        nodes: Vec::new(),
    };
    let rows: Vec<usize> = (0..data.len()).collect();
    grower.grow(rows, 0);
    Tree {
        nodes: grower.nodes,
    }
}

impl<R: Rng> Grower<'_, R> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            distribution: Vec::new(),
        });

        let labels = self.data.labels();
        let first = labels[rows[0]];
        let pure = rows.iter().all(|&r| labels[r] == first);
        let at_depth_limit = self.params.max_depth.is_some_and(|m| depth >= m);
        let split = if pure || rows.len() < self.params.min_node_size || at_depth_limit {
            None
        } else {
            self.find_split(&rows)
        };

        match split {
            None => self.nodes[id] = self.leaf(&rows),
            Some(s) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&r| {
                        project(self.data.row(r), &s.features, &s.projection) <= s.threshold
                    });
                debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());
                let left = self.grow(left_rows, depth + 1);
                let right = self.grow(right_rows, depth + 1);
                self.nodes[id] = Node::Split {
                    features: s.features,
                    projection: s.projection,
                    threshold: s.threshold,
                    left,
                    right,
                };
            }
        }
        id
    }

    fn leaf(&self, rows: &[usize]) -> Node {
        let mut counts = vec![0usize; self.data.n_classes()];
        for &r in rows {
            counts[self.data.labels()[r]] += 1;
        }
        let n = rows.len() as f64;
        Node::Leaf {
            distribution: counts.iter().map(|&c| c as f64 / n).collect(),
        }
    }

    /// λ distinct feature indices, sorted.
    fn draw_features(&mut self) -> Vec<usize> {
        let d = self.data.n_features();
        let mut pool: Vec<usize> = (0..d).collect();
        for i in 0..self.lambda {
            let j = self.rng.gen_range(i..d);
            pool.swap(i, j);
        }
        let mut chosen = pool[..self.lambda].to_vec();
        chosen.sort_unstable();
        chosen
    }

    fn find_split(&mut self, rows: &[usize]) -> Option<ChosenSplit> {
        let features = self.draw_features();
        if self.params.mode == SplitMode::Ccf {
            for _ in 0..CCA_ATTEMPTS {
                if let Some(s) = self.projection_split(rows, &features) {
                    return Some(s);
                }
            }
        }
        self.axis_split(rows, &features)
    }

    fn projection_split(&mut self, rows: &[usize], features: &[usize]) -> Option<ChosenSplit> {
        let n = rows.len();
        let boot: Vec<usize> = (0..n).map(|_| rows[self.rng.gen_range(0..n)]).collect();

        // compact one-hot over the classes present in the resample
        let labels = self.data.labels();
        let mut code = vec![usize::MAX; self.data.n_classes()];
        let mut k = 0;
        let boot_labels: Vec<usize> = boot
            .iter()
            .map(|&r| {
                let l = labels[r];
                if code[l] == usize::MAX {
                    code[l] = k;
                    k += 1;
                }
                code[l]
            })
            .collect();
        if k < 2 {
            return None;
        }

        // Rescale to unit mean variance so gamma is relative and the split does
        // not depend on feature units. A scalar factor leaves directions alone.
        let mut x = Matrix::from_fn(n, features.len(), |i, j| {
            self.data.row(boot[i])[features[j]]
        });
        let scale = mean_variance(&x).sqrt();
        if scale.is_finite() && scale > 0.0 {
            x /= scale;
        }
        let y = one_hot(&boot_labels, k).ok()?;
        let cca = canonical_correlation(&x, &y, self.params.gamma).ok()?;

        let directions: Vec<Vec<f64>> = cca
            .projections_x
            .column_iter()
            .filter_map(|c| {
                let norm = c.norm();
                (norm.is_finite() && norm > 0.0).then(|| c.iter().map(|v| v / norm).collect())
            })
            .collect();
        if directions.is_empty() {
            return None;
        }

        let node_labels: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
        let projected = Matrix::from_fn(n, directions.len(), |i, j| {
            project(self.data.row(rows[i]), features, &directions[j])
        });
        let best = best_split(
            &projected,
            &node_labels,
            self.data.n_classes(),
            self.params.impurity,
        );
        if best.gain > MIN_GAIN && best.threshold.is_finite() {
            Some(ChosenSplit {
                features: features.to_vec(),
                projection: directions[best.dim].clone(),
                threshold: best.threshold,
            })
        } else {
            None
        }
    }

    fn axis_split(&self, rows: &[usize], features: &[usize]) -> Option<ChosenSplit> {
        let labels: Vec<usize> = rows.iter().map(|&r| self.data.labels()[r]).collect();
        let mut best: Option<(usize, f64, f64)> = None;
        for &f in features {
            let values: Vec<f64> = rows.iter().map(|&r| self.data.row(r)[f]).collect();
            if let Some((t, g)) = best_split_1d(
                &values,
                &labels,
                self.data.n_classes(),
                self.params.impurity,
            ) {
                if best.is_none_or(|(_, _, bg)| g > bg) {
                    best = Some((f, t, g));
                }
            }
        }
        let (f, threshold, gain) = best?;
        (gain > MIN_GAIN).then(|| ChosenSplit {
            features: vec![f],
            projection: vec![1.0],
            threshold,
        })
    }
}

fn mean_variance(x: &Matrix) -> f64 {
    let n = x.nrows() as f64;
    let total: f64 = x
        .column_iter()
        .map(|c| {
            let mean = c.sum() / n;
            c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .sum();
    total / x.ncols() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccf::Impurity;

    fn set(features: &[&[f64]], labels: &[usize], k: usize) -> TrainingSet {
        let f: Vec<Vec<f64>> = features.iter().map(|r| r.to_vec()).collect();
        let names = (0..k).map(|i| format!("c{i}")).collect();
        TrainingSet::new(&f, labels, names).unwrap()
    }

    #[test]
    fn pure_node_is_a_leaf() {
        let data = set(&[&[1.0], &[2.0], &[3.0]], &[1, 1, 1], 2);
        let t = train_tree(&data, &ForestParams::new(2), tree_rng(0, 0));
        assert_eq!(
            t.nodes,
            vec![Node::Leaf {
                distribution: vec![0.0, 1.0]
            }]
        );
    }

    #[test]
    fn one_dimensional_split_between_classes() {
        let data = set(&[&[-1.0], &[-2.0], &[1.0], &[2.0]], &[0, 0, 1, 1], 2);
        for mode in [SplitMode::Ccf, SplitMode::AxisAligned] {
            let params = ForestParams {
                mode,
                ..ForestParams::new(2)
            };
            let t = train_tree(&data, &params, tree_rng(3, 1));
            assert_eq!(t.nodes.len(), 3, "{mode}");
            match &t.nodes[0] {
                Node::Split {
                    threshold,
                    projection,
                    ..
                } => {
                    let x = threshold / projection[0];
                    assert!(-1.0 < x && x < 1.0);
                }
                leaf => panic!("expected split, got {leaf:?}"),
            }
            for n in &t.nodes[1..] {
                match n {
                    Node::Leaf { distribution } => {
                        assert!(distribution.contains(&1.0))
                    }
                    _ => panic!("children must be pure leaves"),
                }
            }
        }
    }

    #[test]
    fn identical_rows_with_different_labels_form_a_mixed_leaf() {
        let data = set(&[&[0.5, 0.5], &[0.5, 0.5]], &[0, 1], 2);
        let t = train_tree(&data, &ForestParams::new(2), tree_rng(0, 0));
        assert_eq!(
            t.nodes,
            vec![Node::Leaf {
                distribution: vec![0.5, 0.5]
            }]
        );
    }

    #[test]
    fn max_depth_zero_gives_root_leaf() {
        let data = set(&[&[0.0], &[1.0]], &[0, 1], 2);
        let params = ForestParams {
            max_depth: Some(0),
            ..ForestParams::new(2)
        };
        let t = train_tree(&data, &params, tree_rng(0, 0));
        assert_eq!(t.n_leaves(), 1);
        assert_eq!(t.depth(), 0);
    }

    #[test]
    fn min_node_size_stops_growth() {
        let data = set(&[&[0.0], &[1.0], &[2.0], &[3.0]], &[0, 1, 0, 1], 2);
        let params = ForestParams {
            min_node_size: 5,
            impurity: Impurity::Entropy,
            ..ForestParams::new(2)
        };
        let t = train_tree(&data, &params, tree_rng(0, 0));
        assert_eq!(t.nodes.len(), 1);
    }

    #[test]
    fn children_follow_parents() {
        let data = set(
            &[
                &[0.0, 1.0],
                &[1.0, 0.0],
                &[0.2, 0.9],
                &[0.9, 0.3],
                &[0.5, 0.5],
                &[0.4, 0.6],
            ],
            &[0, 1, 0, 1, 2, 2],
            3,
        );
        let t = train_tree(&data, &ForestParams::new(3), tree_rng(11, 2));
        for (i, n) in t.nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = n {
                assert!(*left > i && *right > i);
            }
        }
    }

    #[test]
    fn tree_streams_differ_by_index() {
        let a: u64 = tree_rng(5, 0).gen();
        let b: u64 = tree_rng(5, 1).gen();
        let c: u64 = tree_rng(5, 0).gen();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
