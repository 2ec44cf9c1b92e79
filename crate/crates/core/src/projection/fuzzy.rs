use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::features::TargetVector;

use super::knn::Knn;
use super::smooth::Smoothing;

/// Sparse symmetric graph in compressed-row form. Weights lie in `(0, 1]`,
/// there are no self edges and `w(i, j)` is bitwise equal to `w(j, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    n: usize,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: Vec<f64>,
}

impl FuzzyGraph {
    /// Builds a graph from undirected edges `(i, j, w)`; each unordered pair
    /// must appear at most once. Zero weights are dropped.
    pub fn from_undirected(n: usize, edges: impl IntoIterator<Item = (u32, u32, f64)>) -> Self {
        let mut entries: Vec<(u32, u32, f64)> = Vec::new();
        for (i, j, w) in edges {
            debug_assert!(i != j && w <= 1.0 && w.is_finite());
            if w > 0.0 {
                entries.push((i, j, w));
                entries.push((j, i, w));
            }
        }
        entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut offsets = vec![0usize; n + 1];
        for &(i, _, _) in &entries {
            offsets[i as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let (neighbors, weights) = entries.into_iter().map(|(_, j, w)| (j, w)).unzip();
        FuzzyGraph {
            n,
            offsets,
            neighbors,
            weights,
        }
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    /// Number of stored directed entries (twice the undirected edge count).
    pub fn nnz(&self) -> usize {
        self.neighbors.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.neighbors[range.clone()]
            .iter()
            .zip(&self.weights[range])
            .map(|(&j, &w)| (j as usize, w))
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let range = self.offsets[i]..self.offsets[i + 1];
        match self.neighbors[range.clone()].binary_search(&(j as u32)) {
            Ok(pos) => self.weights[range.start + pos],
            Err(_) => 0.0,
        }
    }

    /// Directed entries `(i, j, w)` in row order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, w)| (i, j, w)))
    }

    /// Undirected edges with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries().filter(|(i, j, _)| i < j)
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.row(i).map(|(_, w)| w).sum()
    }

    /// Largest `|w(i,j) − w(j,i)|` over all stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        self.entries()
            .map(|(i, j, w)| (w - self.weight(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for (j, _) in self.row(i) {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == self.n
    }
}

/// Fuzzy union `a + b − a·b`, evaluated as `hi + lo·(1 − hi)` so that a
/// membership of exactly 1 stays exactly 1.
pub fn fuzzy_union(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + lo * (1.0 - hi)
}

/// Local memberships `exp(−max(0, d − rho_i)/sigma_i)`, symmetrized by
/// fuzzy union.
pub fn fuzzy_simplicial_set(knn: &Knn, smoothing: &Smoothing) -> FuzzyGraph {
    let n = knn.rows();
    // (lo, hi, weight of lo→hi, weight of hi→lo)
    let mut directed: Vec<(u32, u32, f64, f64)> = Vec::with_capacity(knn.indices.len());
    for i in 0..n {
        let (rho, sigma) = (smoothing.rho[i], smoothing.sigma[i]);
        for (&j, &d) in knn.neighbors(i).iter().zip(knn.distances(i)) {
            let w = libm::exp(-(d - rho).max(0.0) / sigma);
            let i = i as u32;
            if i < j {
                directed.push((i, j, w, 0.0));
            } else {
                directed.push((j, i, 0.0, w));
            }
        }
    }
    directed.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut edges = Vec::with_capacity(directed.len());
    let mut iter = directed.into_iter().peekable();
    while let Some((lo, hi, mut up, mut down)) = iter.next() {
        while let Some(&(l2, h2, u2, d2)) = iter.peek() {
            if (l2, h2) != (lo, hi) {
                break;
            }
            up = up.max(u2);
            down = down.max(d2);
            iter.next();
        }
        edges.push((lo, hi, fuzzy_union(up, down)));
    }
    FuzzyGraph::from_undirected(n, edges)
}

/// Label supervision: edges between particles labeled with different
/// classes are scaled by `far_weight`; every other edge is unchanged.
pub fn target_intersect(
    graph: &FuzzyGraph,
    target: &TargetVector,
    far_weight: f64,
) -> Result<FuzzyGraph> {
    if target.classes.len() != graph.nodes() {
        return Err(Error::LengthMismatch {
            expected: graph.nodes(),
            actual: target.classes.len(),
        });
    }
    if !(0.0..=1.0).contains(&far_weight) {
        return Err(Error::InvalidConfig {
            field: "far_weight",
            message: "must lie in [0, 1]".into(),
        });
    }
    let edges = graph.edges().map(|(i, j, w)| {
        let w = match (target.classes[i], target.classes[j]) {
            (Some(a), Some(b)) if a != b => w * far_weight,
            _ => w,
        };
        (i as u32, j as u32, w)
    });
    Ok(FuzzyGraph::from_undirected(graph.nodes(), edges))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> FuzzyGraph {
        FuzzyGraph::from_undirected(3, [(0, 1, 0.8), (1, 2, 0.5), (0, 2, 1.0)])
    }

    #[test]
    fn union_arithmetic() {
        assert_eq!(fuzzy_union(0.5, 0.0), 0.5);
        assert_eq!(fuzzy_union(1.0, 0.37), 1.0);
        assert_eq!(fuzzy_union(0.37, 1.0), 1.0);
        assert!((fuzzy_union(0.5, 0.5) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn csr_access() {
        let g = triangle();
        assert_eq!(g.nnz(), 6);
        assert_eq!(g.weight(1, 0), 0.8);
        assert_eq!(g.weight(2, 1), 0.5);
        assert_eq!(g.weight(1, 1), 0.0);
        assert_eq!(g.max_asymmetry(), 0.0);
        assert!(g.is_connected());
        assert!(!FuzzyGraph::from_undirected(3, [(0, 1, 0.2)]).is_connected());
    }

    #[test]
    fn all_missing_target_is_identity() {
        let g = triangle();
        let t = TargetVector::unlabeled(3);
        assert_eq!(target_intersect(&g, &t, 0.0).unwrap(), g);
    }

    #[test]
    fn rule_table() {
        let g = triangle();
        let t = TargetVector {
            classes: vec![Some(0), Some(1), Some(0)],
            names: vec![],
        };
        let s = target_intersect(&g, &t, 0.0).unwrap();
        assert_eq!(s.weight(0, 2), 1.0); // same class
        assert_eq!(s.weight(0, 1), 0.0); // different class, removed
        assert_eq!(s.nnz(), 2);
        let half = target_intersect(&g, &t, 0.5).unwrap();
        assert_eq!(half.weight(0, 1), 0.4);
        let partial = TargetVector {
            classes: vec![Some(0), None, Some(1)],
            names: vec![],
        };
        let p = target_intersect(&g, &partial, 0.0).unwrap();
        assert_eq!(p.weight(0, 1), 0.8);
        assert_eq!(p.weight(0, 2), 0.0);
        assert!(target_intersect(&g, &TargetVector::unlabeled(2), 0.0).is_err());
    }
}
