//! Symmetric conductance graphs stored by bandwidth.
//!
//! Node `s` and offset `d` in `1..=bandwidth` address the edge `{s, s+d}`.
//! All networks in this crate are one-dimensional, so after an index cutoff
//! the Laplacian is banded and this layout is both compact and what the
//! direct solver wants.

use crate::error::{MottError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BandedGraph {
    nodes: usize,
    bandwidth: usize,
    band: Vec<f64>,
}

impl BandedGraph {
    pub fn new(nodes: usize, bandwidth: usize) -> Self {
        let bandwidth = bandwidth.min(nodes.saturating_sub(1)).max(if nodes > 1 { 1 } else { 0 });
        Self {
            nodes,
            bandwidth,
            band: vec![0.0; nodes * bandwidth],
        }
    }

    /// Build from an edge list; parallel edges are merged by adding conductances.
    pub fn from_edges(nodes: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut bw = 1;
        for &(a, b, c) in edges {
            if a == b || a >= nodes || b >= nodes {
                return Err(MottError::domain(format!("bad edge ({a}, {b}) on {nodes} nodes")));
            }
            if !(c >= 0.0 && c.is_finite()) {
                return Err(MottError::domain(format!("bad conductance {c} on edge ({a}, {b})")));
            }
            bw = bw.max(a.abs_diff(b));
        }
        let mut g = Self::new(nodes, bw);
        for &(a, b, c) in edges {
            g.add(a, b, c);
        }
        Ok(g)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn pos(&self, a: usize, b: usize) -> Option<usize> {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let d = hi - lo;
        if d == 0 || d > self.bandwidth || hi >= self.nodes {
            None
        } else {
            Some(lo * self.bandwidth + d - 1)
        }
    }

    /// Conductance between `a` and `b` (0 when absent or beyond the band).
    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.pos(a, b).map_or(0.0, |p| self.band[p])
    }

    /// Conductance between `s` and `s + d` for `1 <= d <= bandwidth`.
    #[inline]
    pub fn at_offset(&self, s: usize, d: usize) -> f64 {
        self.band[s * self.bandwidth + d - 1]
    }

    /// Row of offsets 1..=bandwidth starting at node `s`.
    #[inline]
    pub fn forward_row(&self, s: usize) -> &[f64] {
        &self.band[s * self.bandwidth..(s + 1) * self.bandwidth]
    }

    pub fn set(&mut self, a: usize, b: usize, c: f64) {
        let p = self.pos(a, b).expect("edge outside band");
        self.band[p] = c;
    }

    pub fn add(&mut self, a: usize, b: usize, c: f64) {
        let p = self.pos(a, b).expect("edge outside band");
        self.band[p] += c;
    }

    /// Total conductance at node `s`.
    pub fn row_sum(&self, s: usize) -> f64 {
        let mut t = 0.0;
        let hi = self.bandwidth.min(self.nodes - 1 - s);
        for d in 1..=hi {
            t += self.at_offset(s, d);
        }
        let lo = self.bandwidth.min(s);
        for d in 1..=lo {
            t += self.at_offset(s - d, d);
        }
        t
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes];
        for s in 0..self.nodes {
            let hi = self.bandwidth.min(self.nodes - 1 - s);
            for d in 1..=hi {
                let c = self.at_offset(s, d);
                out[s] += c;
                out[s + d] += c;
            }
        }
        out
    }

    /// Nonzero edges `(a, b, c)` with `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nodes).flat_map(move |s| {
            let hi = self.bandwidth.min(self.nodes - 1 - s);
            (1..=hi).filter_map(move |d| {
                let c = self.at_offset(s, d);
                (c > 0.0).then_some((s, s + d, c))
            })
        })
    }

    pub fn total_conductance(&self) -> f64 {
        self.band.iter().sum()
    }

    /// Sum of c(f_a - f_b)^2 over edges.
    pub fn dirichlet_energy(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.nodes);
        let mut e = 0.0;
        for s in 0..self.nodes {
            let hi = self.bandwidth.min(self.nodes - 1 - s);
            for d in 1..=hi {
                let df = f[s] - f[s + d];
                e += self.at_offset(s, d) * df * df;
            }
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_triangle_masses() {
        let g = BandedGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        assert_eq!(g.row_sums(), vec![2.0, 2.0, 2.0]);
        assert_eq!(g.row_sum(1), 2.0);
    }

    #[test]
    fn handshake() {
        let g = BandedGraph::from_edges(4, &[(0, 1, 0.5), (1, 3, 2.0), (0, 3, 0.25), (0, 1, 1.0)]).unwrap();
        let s: f64 = g.row_sums().iter().sum();
        assert!((s - 2.0 * g.total_conductance()).abs() < 1e-14);
        assert_eq!(g.get(1, 0), 1.5);
        assert_eq!(g.edges().count(), 3);
    }

    #[test]
    fn rejects_loops_and_negative() {
        assert!(BandedGraph::from_edges(3, &[(1, 1, 1.0)]).is_err());
        assert!(BandedGraph::from_edges(3, &[(0, 1, -1.0)]).is_err());
        assert!(BandedGraph::from_edges(3, &[(0, 3, 1.0)]).is_err());
    }
}
