//! Flat node view shared by grids, step demands and scenario trees.
//!
//! A grid is a chain, a step demand is a chain of two unequal intervals, and a
//! tree is itself. Each node carries its interval length `dt` and the
//! probability `p` of reaching it, so `E ∫ f dt = Σ p dt f`.

use crate::demand::Demand;

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub roots: Vec<usize>,
    pub leaves: Vec<usize>,
    pub dt: Vec<f64>,
    pub prob: Vec<f64>,
    pub demand: Vec<f64>,
}

impl Layout {
    pub fn of(demand: &Demand) -> Self {
        match demand {
            Demand::Path(p) => {
                let n = p.values().len();
                Self::chain(p.values().to_vec(), vec![1.0 / n as f64; n])
            }
            Demand::Step(s) => Self::chain(vec![s.d1, s.d2], vec![s.t1, 1.0 - s.t1]),
            Demand::Tree(t) => {
                let nodes = t.nodes();
                let dt = t.dt();
                Layout {
                    parent: nodes.iter().map(|n| n.parent).collect(),
                    children: (0..nodes.len()).map(|i| t.children(i).to_vec()).collect(),
                    roots: t.roots().to_vec(),
                    leaves: t.leaves().to_vec(),
                    dt: vec![dt; nodes.len()],
                    prob: nodes.iter().map(|n| n.path_prob).collect(),
                    demand: nodes.iter().map(|n| n.value).collect(),
                }
            }
        }
    }

    fn chain(demand: Vec<f64>, dt: Vec<f64>) -> Self {
        let n = demand.len();
        Layout {
            parent: (0..n).map(|i| i.checked_sub(1)).collect(),
            children: (0..n).map(|i| if i + 1 < n { vec![i + 1] } else { vec![] }).collect(),
            roots: vec![0],
            leaves: vec![n - 1],
            dt,
            prob: vec![1.0; n],
            demand,
        }
    }

    pub fn len(&self) -> usize {
        self.demand.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demand.is_empty()
    }

    /// Inner-product weight `p dt` of each node.
    pub fn weights(&self) -> Vec<f64> {
        self.prob.iter().zip(&self.dt).map(|(p, d)| p * d).collect()
    }

    /// `E ∫ x y dt`.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.len()).map(|i| self.prob[i] * self.dt[i] * x[i] * y[i]).sum()
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        self.inner(x, x).sqrt()
    }

    /// `E ∫ x dt`.
    pub fn integral(&self, x: &[f64]) -> f64 {
        (0..self.len()).map(|i| self.prob[i] * self.dt[i] * x[i]).sum()
    }

    /// Nodes from the top level down to `leaf`.
    pub fn path_to(&self, leaf: usize) -> Vec<usize> {
        let mut path = vec![leaf];
        let mut cur = leaf;
        while let Some(p) = self.parent[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// `∫ x dt` along every root-to-leaf path.
    pub fn path_integrals(&self, x: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.len()];
        for i in 0..self.len() {
            let up = self.parent[i].map_or(0.0, |p| acc[p]);
            acc[i] = up + self.dt[i] * x[i];
        }
        self.leaves.iter().map(|&l| acc[l]).collect()
    }

    /// `(ancestor, node)` pairs with `ancestor` on the path above or at `node`.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for v in 0..self.len() {
            let mut cur = Some(v);
            while let Some(u) = cur {
                out.push((u, v));
                cur = self.parent[u];
            }
        }
        out
    }

    /// Nodes on the segment from `top` down to `bottom`.
    pub fn segment_nodes(&self, top: usize, bottom: usize) -> Vec<usize> {
        let mut nodes = vec![bottom];
        let mut cur = bottom;
        while cur != top {
            cur = self.parent[cur].expect("top is an ancestor of bottom");
            nodes.push(cur);
        }
        nodes
    }
}
