//! Exact k-th nearest neighbor distances: a brute-force scan and a kd-tree
//! index that returns bit-identical values.

use serde::{Deserialize, Serialize};

use crate::data::FeatureVector;
use crate::error::{Error, Result};

/// Nominal reference points (already normalized) and the neighbor rank `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    dim: usize,
    k: usize,
    /// Row-major `len × dim`.
    points: Vec<f64>,
}

impl TrainingSet {
    pub fn new(features: &[FeatureVector], k: usize) -> Result<Self> {
        let dim = features
            .first()
            .map(FeatureVector::dim)
            .ok_or_else(|| Error::InsufficientData("empty training set".into()))?;
        let mut points = Vec::with_capacity(features.len() * dim);
        for f in features {
            if f.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: f.dim(),
                });
            }
            points.extend_from_slice(f.values());
        }
        Self::from_flat(points, dim, k)
    }

    pub fn from_flat(points: Vec<f64>, dim: usize, k: usize) -> Result<Self> {
        if dim == 0 || points.len() % dim != 0 {
            return Err(Error::Validation(format!(
                "{} values do not form rows of width {dim}",
                points.len()
            )));
        }
        if k == 0 {
            return Err(Error::Validation("k must be at least 1".into()));
        }
        let n = points.len() / dim;
        if n < k {
            return Err(Error::InsufficientData(format!(
                "{n} training points for k = {k}"
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite training feature".into()));
        }
        Ok(TrainingSet { dim, k, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn flat(&self) -> &[f64] {
        &self.points
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Euclidean distance from `query` to its k-th nearest training point, by
/// exhaustive scan.
pub fn knn_distance(query: &FeatureVector, train: &TrainingSet) -> Result<f64> {
    brute_force_kth(train, query.values(), train.k(), None)
}

/// k-th nearest distance by scanning every point, optionally skipping one
/// training index (leave-one-out).
pub fn brute_force_kth(
    train: &TrainingSet,
    query: &[f64],
    k: usize,
    exclude: Option<usize>,
) -> Result<f64> {
    check_query(train, query, k, exclude)?;
    let mut d2: Vec<f64> = train
        .rows()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(_, p)| squared_distance(query, p))
        .collect();
    let (_, kth, _) = d2.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(kth.sqrt())
}

fn check_query(train: &TrainingSet, query: &[f64], k: usize, exclude: Option<usize>) -> Result<()> {
    if query.len() != train.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            found: query.len(),
        });
    }
    let available = train.len() - usize::from(exclude.is_some_and(|i| i < train.len()));
    if k == 0 || available < k {
        return Err(Error::InsufficientData(format!(
            "{available} candidate points for k = {k}"
        )));
    }
    Ok(())
}

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Static kd-tree over a [`TrainingSet`].
#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    /// Points permuted into tree order, row-major.
    points: Vec<f64>,
    /// Original training index of each permuted row.
    indices: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(train: &TrainingSet) -> Self {
        let dim = train.dim();
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut nodes = Vec::new();
        build_node(train, &mut order, 0, &mut nodes);
        let mut points = Vec::with_capacity(train.flat().len());
        for &i in &order {
            points.extend_from_slice(train.point(i));
        }
        KdTree {
            dim,
            points,
            indices: order,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// k-th nearest distance, skipping training index `exclude` when given.
    pub fn kth_distance(&self, query: &[f64], k: usize, exclude: Option<usize>) -> Result<f64> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        let available = self.len() - usize::from(exclude.is_some_and(|i| i < self.len()));
        if k == 0 || available < k {
            return Err(Error::InsufficientData(format!(
                "{available} candidate points for k = {k}"
            )));
        }
        let mut best = KBest::new(k);
        self.search(0, query, exclude, &mut best);
        Ok(best.worst().sqrt())
    }

    fn search(&self, node: usize, query: &[f64], exclude: Option<usize>, best: &mut KBest) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for row in start..end {
                    if Some(self.indices[row]) == exclude {
                        continue;
                    }
                    let p = &self.points[row * self.dim..(row + 1) * self.dim];
                    best.offer(squared_distance(query, p));
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = query[dim] - value;
                let (near, far) = if diff <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, query, exclude, best);
                // Every point across the plane is at least |diff| away.
                if diff * diff <= best.worst() {
                    self.search(far, query, exclude, best);
                }
            }
        }
    }
}

fn build_node(train: &TrainingSet, order: &mut [usize], offset: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }
    // split on the dimension with the widest spread
    let dim = (0..train.dim())
        .map(|d| {
            let (lo, hi) = order.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = train.point(i)[d];
                (lo.min(v), hi.max(v))
            });
            (d, hi - lo)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(d, _)| d)
        .unwrap_or(0);
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        train.point(a)[dim].total_cmp(&train.point(b)[dim])
    });
    let value = train.point(order[mid])[dim];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (lo, hi) = order.split_at_mut(mid);
    let left = build_node(train, lo, offset, nodes);
    let right = build_node(train, hi, offset + mid, nodes);
    nodes[id] = Node::Split {
        dim,
        value,
        left,
        right,
    };
    id
}

/// The k smallest squared distances seen so far, kept sorted ascending.
struct KBest {
    k: usize,
    values: Vec<f64>,
}

impl KBest {
    fn new(k: usize) -> Self {
        KBest {
            k,
            values: Vec::with_capacity(k + 1),
        }
    }

    fn worst(&self) -> f64 {
        if self.values.len() < self.k {
            f64::INFINITY
        } else {
            self.values[self.k - 1]
        }
    }

    fn offer(&mut self, d2: f64) {
        if d2 >= self.worst() {
            return;
        }
        let pos = self.values.partition_point(|&v| v <= d2);
        self.values.insert(pos, d2);
        self.values.truncate(self.k);
    }
}
