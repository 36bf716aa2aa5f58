//! Exact k-nearest-neighbour search over a KD-tree with bounding boxes.
//!
//! Neighbours are ordered by (squared distance, row index), so equidistant
//! points resolve to the lower index exactly as a brute-force scan would.

const LEAF_SIZE: usize = 16;
/// Midpoint splits are used down to this depth, median splits below it.
const MIDPOINT_DEPTH: usize = 64;

/// Relative slack on the pruning bound: a box whose lower bound equals the
/// current k-th distance may still hold an equidistant lower-index point,
/// and the two distances are computed in different summation orders.
const PRUNE_SLACK: f64 = 1.0 + 1e-9;

#[derive(Debug, Clone, PartialEq)]
struct Node {
    start: usize,
    end: usize,
    /// Child node ids; `None` for leaves.
    children: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdTree {
    dims: usize,
    /// Row indices, permuted so every node covers a contiguous range.
    index: Vec<usize>,
    nodes: Vec<Node>,
    /// Per node: `dims` minima followed by `dims` maxima.
    bounds: Vec<f64>,
    /// Copy of the points in `index` order, so leaves are contiguous.
    ordered: Vec<f64>,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KdTree {
    /// Builds a tree over `n` row-major points of width `dims`.
    pub fn build(points: &[f64], dims: usize) -> Self {
        let n = points.len().checked_div(dims).unwrap_or(0);
        let mut tree = Self {
            dims,
            index: (0..n).collect(),
            nodes: Vec::new(),
            bounds: Vec::new(),
            ordered: Vec::with_capacity(points.len()),
        };
        if n > 0 {
            tree.build_node(points, 0, n, 0);
        }
        for &i in &tree.index {
            tree.ordered.extend_from_slice(&points[i * dims..(i + 1) * dims]);
        }
        tree
    }

    fn build_node(&mut self, points: &[f64], start: usize, end: usize, depth: usize) -> usize {
        let d = self.dims;
        let id = self.nodes.len();
        self.nodes.push(Node {
            start,
            end,
            children: None,
        });
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &i in &self.index[start..end] {
            for j in 0..d {
                let v = points[i * d + j];
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        self.bounds.extend_from_slice(&lo);
        self.bounds.extend_from_slice(&hi);

        if end - start <= LEAF_SIZE {
            return id;
        }
        let (axis, spread) = (0..d)
            .map(|j| (j, hi[j] - lo[j]))
            .fold((0, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best });
        if !(spread > 0.0) {
            return id;
        }
        // Splitting at the midpoint of the widest axis separates binary
        // columns cleanly; median splits below bound the depth.
        let range = &mut self.index[start..end];
        let mid = if depth < MIDPOINT_DEPTH {
            let cut = lo[axis] + 0.5 * spread;
            range.sort_unstable_by(|&a, &b| {
                (points[a * d + axis] >= cut)
                    .cmp(&(points[b * d + axis] >= cut))
                    .then(a.cmp(&b))
            });
            start + range.partition_point(|&i| points[i * d + axis] < cut)
        } else {
            let m = range.len() / 2;
            range.select_nth_unstable_by(m, |&a, &b| {
                points[a * d + axis]
                    .total_cmp(&points[b * d + axis])
                    .then(a.cmp(&b))
            });
            start + m
        };
        let left = self.build_node(points, start, mid, depth + 1);
        let right = self.build_node(points, mid, end, depth + 1);
        self.nodes[id].children = Some((left, right));
        id
    }

    fn box_distance(&self, node: usize, q: &[f64]) -> f64 {
        let d = self.dims;
        let b = &self.bounds[node * 2 * d..(node + 1) * 2 * d];
        let (lo, hi) = b.split_at(d);
        lo.iter()
            .zip(hi)
            .zip(q)
            .map(|((&l, &h), &x)| {
                let gap = (l - x).max(0.0) + (x - h).max(0.0);
                gap * gap
            })
            .sum()
    }

    /// The `k` nearest rows to `q` as `(squared distance, row)`, nearest
    /// first.
    pub fn nearest(&self, q: &[f64], k: usize) -> Vec<(f64, usize)> {
        let d = self.dims;
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if self.nodes.is_empty() || k == 0 {
            return best;
        }
        let mut stack = vec![(0usize, 0.0f64)];
        while let Some((node, lb)) = stack.pop() {
            if best.len() == k && lb > best[k - 1].0 * PRUNE_SLACK {
                continue;
            }
            let n = &self.nodes[node];
            match n.children {
                None => {
                    for pos in n.start..n.end {
                        let p = &self.ordered[pos * d..(pos + 1) * d];
                        let dist = if best.len() == k {
                            match bounded_distance(p, q, best[k - 1].0) {
                                Some(dist) => dist,
                                None => continue,
                            }
                        } else {
                            squared_distance(p, q)
                        };
                        let cand = (dist, self.index[pos]);
                        if best.len() < k || less(cand, best[k - 1]) {
                            let pos = best.partition_point(|&b| less(b, cand));
                            best.insert(pos, cand);
                            best.truncate(k);
                        }
                    }
                }
                Some((l, r)) => {
                    let (dl, dr) = (self.box_distance(l, q), self.box_distance(r, q));
                    // Push the farther child first so the nearer is explored first.
                    if dl <= dr {
                        stack.push((r, dr));
                        stack.push((l, dl));
                    } else {
                        stack.push((l, dl));
                        stack.push((r, dr));
                    }
                }
            }
        }
        best
    }
}

/// Squared distance, or `None` once the partial sum exceeds `limit`.
/// Partial sums never decrease, so a `None` point can never tie `limit`.
fn bounded_distance(a: &[f64], b: &[f64], limit: f64) -> Option<f64> {
    let mut s = 0.0;
    for (ca, cb) in a.chunks(8).zip(b.chunks(8)) {
        for (x, y) in ca.iter().zip(cb) {
            s += (x - y) * (x - y);
        }
        if s > limit {
            return None;
        }
    }
    Some(s)
}

fn less(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Reference scan used to check the tree.
#[cfg(test)]
fn brute_force_nearest(points: &[f64], dims: usize, q: &[f64], k: usize) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = points
        .chunks_exact(dims)
        .enumerate()
        .map(|(i, p)| (squared_distance(p, q), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.truncate(k);
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn matches_brute_force_with_duplicates() {
        let mut rng = SplitMix64::new(9);
        let dims = 3;
        // coarse grid values produce many exact ties
        let points: Vec<f64> = (0..600 * dims).map(|_| rng.index(4) as f64).collect();
        let tree = KdTree::build(&points, dims);
        for _ in 0..100 {
            let q: Vec<f64> = (0..dims).map(|_| rng.index(5) as f64 - 0.5).collect();
            assert_eq!(
                tree.nearest(&q, 5),
                brute_force_nearest(&points, dims, &q, 5)
            );
        }
    }

    #[test]
    fn matches_brute_force_continuous() {
        let mut rng = SplitMix64::new(10);
        let dims = 6;
        let points: Vec<f64> = (0..2000 * dims).map(|_| rng.gaussian()).collect();
        let tree = KdTree::build(&points, dims);
        for _ in 0..100 {
            let q: Vec<f64> = (0..dims).map(|_| 1.5 * rng.gaussian()).collect();
            assert_eq!(
                tree.nearest(&q, 7),
                brute_force_nearest(&points, dims, &q, 7)
            );
        }
    }

    #[test]
    fn matches_brute_force_on_binary_and_heavy_tailed_columns() {
        let mut rng = SplitMix64::new(11);
        let dims = 5;
        let points: Vec<f64> = (0..3000)
            .flat_map(|_| {
                [
                    f64::from(u8::from(rng.bernoulli(0.03))) * 5.0,
                    f64::from(u8::from(rng.bernoulli(0.5))),
                    -rng.uniform(1e-12, 1.0).ln().powi(3),
                    rng.gaussian(),
                    (rng.index(3) as f64) * 1e-300,
                ]
            })
            .collect();
        let tree = KdTree::build(&points, dims);
        for i in (0..3000).step_by(37) {
            let q = &points[i * dims..(i + 1) * dims];
            assert_eq!(tree.nearest(q, 5), brute_force_nearest(&points, dims, q, 5));
        }
    }
}
