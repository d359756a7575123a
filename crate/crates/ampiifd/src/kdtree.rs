//! Kd-tree over descriptor vectors with best-bin-first (BBF) two-nearest
//! queries: a priority queue visits subtrees in order of their lower-bound
//! distance to the query and stops after a bounded number of leaves.
//!
//! Bounds are admissible (the max over ancestor splitting-plane distances),
//! so with an unbounded leaf budget the search is exact.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::descriptor::Descriptor;
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 16;

#[derive(Debug)]
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

/// Kd-tree index over a descriptor set; split dimension by maximum spread,
/// leaf size 16.
#[derive(Debug)]
pub struct DescriptorIndex {
    points: Vec<Vec<f64>>,
    order: Vec<usize>,
    nodes: Vec<Node>,
    root: usize,
    leaf_count: usize,
}

/// One neighbor: original descriptor index and Euclidean distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

struct QueueEntry {
    bound_sq: f64,
    node: usize,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.bound_sq == other.bound_sq
    }
}
impl Eq for QueueEntry {}
impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on the bound; node index breaks ties deterministically.
        other
            .bound_sq
            .partial_cmp(&self.bound_sq)
            .unwrap_or(Ordering::Equal)
            .then(other.node.cmp(&self.node))
    }
}

impl DescriptorIndex {
    /// Builds a balanced tree; deterministic for identical input order.
    pub fn build(descriptors: &[Descriptor]) -> Result<DescriptorIndex> {
        if descriptors.is_empty() {
            return Err(Error::EmptyInput("descriptor index"));
        }
        let points: Vec<Vec<f64>> = descriptors.iter().map(|d| d.values.clone()).collect();
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        let mut leaf_count = 0usize;
        let root = build_node(&points, &mut order, 0, points.len(), &mut nodes, &mut leaf_count);
        Ok(DescriptorIndex {
            points,
            order,
            nodes,
            root,
            leaf_count,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of leaves; a `max_checks` at or above this makes BBF exact.
    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    /// Best-bin-first two-nearest query examining at most `max_checks`
    /// leaves. Returns the nearest and, when present, second-nearest.
    pub fn bbf_query(&self, query: &[f64], max_checks: usize) -> (Neighbor, Option<Neighbor>) {
        let mut best: Option<Neighbor> = None;
        let mut second: Option<Neighbor> = None;
        let mut checks = 0usize;
        let mut heap = BinaryHeap::new();
        heap.push(QueueEntry {
            bound_sq: 0.0,
            node: self.root,
        });
        while let Some(entry) = heap.pop() {
            if checks >= max_checks {
                break;
            }
            // Prune: every remaining subtree is at least this far away.
            if let Some(s) = second {
                if entry.bound_sq >= s.distance * s.distance {
                    break;
                }
            }
            match self.nodes[entry.node] {
                Node::Leaf { start, end } => {
                    checks += 1;
                    for &idx in &self.order[start..end] {
                        let d_sq = dist_sq(&self.points[idx], query);
                        let cand = Neighbor {
                            index: idx,
                            distance: d_sq.sqrt(),
                        };
                        match best {
                            None => best = Some(cand),
                            Some(b) if cand.distance < b.distance => {
                                second = Some(b);
                                best = Some(cand);
                            }
                            Some(_) => match second {
                                None => second = Some(cand),
                                Some(s) if cand.distance < s.distance => second = Some(cand),
                                Some(_) => {}
                            },
                        }
                    }
                }
                Node::Split {
                    dim,
                    value,
                    left,
                    right,
                } => {
                    let diff = query[dim] - value;
                    let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                    let far_bound = entry.bound_sq.max(diff * diff);
                    heap.push(QueueEntry {
                        bound_sq: entry.bound_sq,
                        node: near,
                    });
                    heap.push(QueueEntry {
                        bound_sq: far_bound,
                        node: far,
                    });
                }
            }
        }
        (best.expect("index is nonempty"), second)
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn build_node(
    points: &[Vec<f64>],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
    leaf_count: &mut usize,
) -> usize {
    let slice_len = end - start;
    if slice_len <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        *leaf_count += 1;
        return nodes.len() - 1;
    }
    let dims = points[0].len();
    // Split dimension by maximum spread over this node's points.
    let mut best_dim = 0;
    let mut best_spread = -1.0;
    for d in 0..dims {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &idx in &order[start..end] {
            let v = points[idx][d];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let spread = hi - lo;
        if spread > best_spread {
            best_spread = spread;
            best_dim = d;
        }
    }
    if best_spread <= 0.0 {
        // All points identical along every axis; keep them in one leaf.
        nodes.push(Node::Leaf { start, end });
        *leaf_count += 1;
        return nodes.len() - 1;
    }
    let mid = start + slice_len / 2;
    order[start..end].sort_by(|&a, &b| {
        points[a][best_dim]
            .partial_cmp(&points[b][best_dim])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let split_value = 0.5 * (points[order[mid - 1]][best_dim] + points[order[mid]][best_dim]);
    let left = build_node(points, order, start, mid, nodes, leaf_count);
    let right = build_node(points, order, mid, end, nodes, leaf_count);
    nodes.push(Node::Split {
        dim: best_dim,
        value: split_value,
        left,
        right,
    });
    nodes.len() - 1
}
