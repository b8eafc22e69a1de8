//! Values of an adapted process on grid nodes x paths.

use crate::error::{Error, Result};

/// Dense `nodes x paths x width` array, node-major.
///
/// `width` is the number of scalar components per path: 1 for a scalar Y,
/// `n` for a vector Y, `d` for one row of Z, `n * d` for a full Z (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedField {
    nodes: usize,
    n_paths: usize,
    width: usize,
    data: Vec<f64>,
}

impl AdaptedField {
    pub fn zeros(nodes: usize, n_paths: usize, width: usize) -> Self {
        Self {
            nodes,
            n_paths,
            width,
            data: vec![0.0; nodes * n_paths * width],
        }
    }

    pub fn from_fn<F>(nodes: usize, n_paths: usize, width: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize, &mut [f64]),
    {
        let mut field = Self::zeros(nodes, n_paths, width);
        for node in 0..nodes {
            for path in 0..n_paths {
                f(node, path, field.get_mut(node, path));
            }
        }
        field
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, node: usize, path: usize) -> &[f64] {
        let at = (node * self.n_paths + path) * self.width;
        &self.data[at..at + self.width]
    }

    #[inline]
    pub fn get_mut(&mut self, node: usize, path: usize) -> &mut [f64] {
        let at = (node * self.n_paths + path) * self.width;
        &mut self.data[at..at + self.width]
    }

    /// All paths at one node, path-major.
    pub fn node(&self, node: usize) -> &[f64] {
        let len = self.n_paths * self.width;
        &self.data[node * len..(node + 1) * len]
    }

    pub fn node_mut(&mut self, node: usize) -> &mut [f64] {
        let len = self.n_paths * self.width;
        &mut self.data[node * len..(node + 1) * len]
    }

    /// Component `c` at `node` across paths.
    pub fn component(&self, node: usize, c: usize) -> Vec<f64> {
        self.node(node).chunks(self.width).map(|row| row[c]).collect()
    }

    pub fn set_component(&mut self, node: usize, c: usize, values: &[f64]) {
        let width = self.width;
        for (row, v) in self.node_mut(node).chunks_mut(width).zip(values) {
            row[c] = *v;
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Copies columns `offset..offset + width` into a narrower field.
    pub fn columns(&self, offset: usize, width: usize) -> AdaptedField {
        assert!(offset + width <= self.width);
        AdaptedField::from_fn(self.nodes, self.n_paths, width, |node, path, out| {
            out.copy_from_slice(&self.get(node, path)[offset..offset + width])
        })
    }

    /// Writes `block` into columns `offset..offset + block.width`.
    pub fn set_columns(&mut self, offset: usize, block: &AdaptedField) {
        assert!(block.nodes == self.nodes && block.n_paths == self.n_paths);
        assert!(offset + block.width <= self.width);
        for node in 0..self.nodes {
            for path in 0..self.n_paths {
                let src = block.get(node, path);
                self.get_mut(node, path)[offset..offset + src.len()].copy_from_slice(src);
            }
        }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> AdaptedField {
        AdaptedField {
            nodes: self.nodes,
            n_paths: self.n_paths,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sub(&self, other: &AdaptedField) -> Result<AdaptedField> {
        self.check_shape(other)?;
        Ok(AdaptedField {
            nodes: self.nodes,
            n_paths: self.n_paths,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn check_shape(&self, other: &AdaptedField) -> Result<()> {
        if (self.nodes, self.n_paths, self.width) != (other.nodes, other.n_paths, other.width) {
            return Err(Error::InvalidArgument(format!(
                "field shapes differ: {:?} vs {:?}",
                (self.nodes, self.n_paths, self.width),
                (other.nodes, other.n_paths, other.width)
            )));
        }
        Ok(())
    }

    /// Largest Euclidean norm of a per-path row over all nodes and paths.
    pub fn sup_norm(&self) -> f64 {
        self.data
            .chunks(self.width.max(1))
            .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Largest Euclidean row norm at one node.
    pub fn node_sup_norm(&self, node: usize) -> f64 {
        self.node(node)
            .chunks(self.width.max(1))
            .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        let i = self.data.iter().position(|v| !v.is_finite())?;
        let row = i / self.width;
        Some((row / self.n_paths, row % self.n_paths))
    }

    /// Mean across paths of component `c` at `node`.
    pub fn mean(&self, node: usize, c: usize) -> f64 {
        let s: f64 = self.node(node).chunks(self.width).map(|row| row[c]).sum();
        s / self.n_paths as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_and_columns() {
        let f = AdaptedField::from_fn(3, 2, 4, |n, p, out| {
            for (c, v) in out.iter_mut().enumerate() {
                *v = (100 * n + 10 * p + c) as f64;
            }
        });
        assert_eq!(f.get(2, 1), &[210.0, 211.0, 212.0, 213.0]);
        assert_eq!(f.component(1, 3), vec![103.0, 113.0]);
        let block = f.columns(1, 2);
        assert_eq!(block.get(0, 1), &[11.0, 12.0]);
        let mut g = AdaptedField::zeros(3, 2, 4);
        g.set_columns(2, &block);
        assert_eq!(g.get(2, 0), &[0.0, 0.0, 201.0, 202.0]);
        assert_eq!(f.mean(0, 0), 5.0);
    }

    #[test]
    fn norms_and_shapes() {
        let f = AdaptedField::from_fn(2, 2, 2, |n, p, out| {
            out[0] = 3.0 * (n + p) as f64;
            out[1] = 4.0 * (n + p) as f64;
        });
        assert_eq!(f.sup_norm(), 10.0);
        assert_eq!(f.node_sup_norm(0), 5.0);
        assert!(f.sub(&AdaptedField::zeros(2, 2, 1)).is_err());
        assert_eq!(f.sub(&f).unwrap().sup_norm(), 0.0);
        let mut bad = f.clone();
        bad.get_mut(1, 0)[1] = f64::INFINITY;
        assert_eq!(bad.first_non_finite(), Some((1, 0)));
    }
}
