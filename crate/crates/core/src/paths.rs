//! Time grids and seeded Brownian path ensembles.
//!
//! Gaussian increments are drawn from a ChaCha8 stream keyed by `(seed, path)`,
//! so the ensemble does not depend on the order in which paths are generated.
//! Storage is node-major: `w[(node * n_paths + path) * d + k]`.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Uniform time grid on `[t0, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t_end.is_finite()) || t_end <= t0 {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive, got [{t0}, {t_end}]"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("grid needs at least one step".into()));
        }
        Ok(Self { t0, t_end, steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn n_nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.steps as f64
    }

    pub fn horizon(&self) -> f64 {
        self.t_end - self.t0
    }

    /// Time of node `k`; the last node is exactly `t_end`.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t_end
        } else {
            self.t0 + k as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    /// Index of the node closest to `t`.
    pub fn nearest_node(&self, t: f64) -> usize {
        let k = ((t - self.t0) / self.dt()).round();
        k.clamp(0.0, self.steps as f64) as usize
    }
}

/// Shorthand for [`TimeGrid::new`].
pub fn make_grid(t0: f64, t_end: f64, steps: usize) -> Result<TimeGrid> {
    TimeGrid::new(t0, t_end, steps)
}

/// A bundle of `d`-dimensional Brownian paths sampled on a [`TimeGrid`].
///
/// Immutable once built. A window over a sub-range of nodes keeps the
/// absolute Brownian levels, so `W` at the first node of a window need not
/// be zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    grid: TimeGrid,
    n_paths: usize,
    d: usize,
    seed: u64,
    increments: Vec<f64>,
    w: Vec<f64>,
}

/// Simulates `n_paths` independent `d`-dimensional Brownian motions started
/// at zero on `grid`.
pub fn simulate_brownian(grid: TimeGrid, n_paths: usize, d: usize, seed: u64) -> Result<PathEnsemble> {
    if n_paths == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!(
            "need n_paths >= 1 and d >= 1, got {n_paths} and {d}"
        )));
    }
    let steps = grid.steps();
    let sqrt_dt = grid.dt().sqrt();
    let mut increments = vec![0.0; steps * n_paths * d];
    let mut w = vec![0.0; (steps + 1) * n_paths * d];
    for path in 0..n_paths {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path as u64);
        for step in 0..steps {
            for k in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                let dw = z * sqrt_dt;
                let at = (step * n_paths + path) * d + k;
                increments[at] = dw;
                w[((step + 1) * n_paths + path) * d + k] = w[at] + dw;
            }
        }
    }
    Ok(PathEnsemble {
        grid,
        n_paths,
        d,
        seed,
        increments,
        w,
    })
}

impl PathEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    /// Brownian level `W_node` of `path` (length `d`).
    #[inline]
    pub fn w(&self, node: usize, path: usize) -> &[f64] {
        let at = (node * self.n_paths + path) * self.d;
        &self.w[at..at + self.d]
    }

    /// Increment `W_{step+1} - W_step` of `path` (length `d`).
    #[inline]
    pub fn dw(&self, step: usize, path: usize) -> &[f64] {
        let at = (step * self.n_paths + path) * self.d;
        &self.increments[at..at + self.d]
    }

    /// All levels at one node, path-major.
    pub fn w_node(&self, node: usize) -> &[f64] {
        let len = self.n_paths * self.d;
        &self.w[node * len..(node + 1) * len]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn view(&self, node: usize, path: usize) -> PathView<'_> {
        assert!(node <= self.steps() && path < self.n_paths);
        PathView {
            ensemble: self,
            node,
            path,
        }
    }

    /// Copy of the nodes `start..=end` as a standalone ensemble on the
    /// corresponding sub-grid.
    pub fn window(&self, start: usize, end: usize) -> Result<PathEnsemble> {
        if start >= end || end > self.steps() {
            return Err(Error::InvalidArgument(format!(
                "window {start}..={end} outside 0..={}",
                self.steps()
            )));
        }
        let grid = TimeGrid::new(self.grid.time(start), self.grid.time(end), end - start)?;
        let len = self.n_paths * self.d;
        Ok(PathEnsemble {
            grid,
            n_paths: self.n_paths,
            d: self.d,
            seed: self.seed,
            increments: self.increments[start * len..end * len].to_vec(),
            w: self.w[start * len..(end + 1) * len].to_vec(),
        })
    }

    /// CSV dump with columns `path,step,coordinate,increment`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "path,step,coordinate,increment")?;
        for path in 0..self.n_paths {
            for step in 0..self.steps() {
                for (k, dw) in self.dw(step, path).iter().enumerate() {
                    writeln!(out, "{path},{step},{k},{dw:e}")?;
                }
            }
        }
        Ok(())
    }

    /// Flat little-endian binary dump: magic `QBPE`, version `u32`, then
    /// `n_paths`, `steps`, `d`, `seed` as `u64`, `t0` and `t_end` as `f64`,
    /// then increments in `(path, step, coordinate)` order as `f64`.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(BINARY_MAGIC)?;
        out.write_all(&BINARY_VERSION.to_le_bytes())?;
        for v in [self.n_paths as u64, self.steps() as u64, self.d as u64, self.seed] {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&self.grid.t0().to_le_bytes())?;
        out.write_all(&self.grid.t_end().to_le_bytes())?;
        for path in 0..self.n_paths {
            for step in 0..self.steps() {
                for dw in self.dw(step, path) {
                    out.write_all(&dw.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    /// Reads a dump produced by [`PathEnsemble::write_binary`]; levels are
    /// rebuilt from zero.
    pub fn read_binary<R: Read>(mut input: R) -> Result<PathEnsemble> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::InvalidArgument("not an ensemble dump".into()));
        }
        let mut b4 = [0u8; 4];
        input.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != BINARY_VERSION {
            return Err(Error::InvalidArgument(format!("unsupported dump version {version}")));
        }
        let mut b8 = [0u8; 8];
        let mut next_u64 = |input: &mut R| -> Result<u64> {
            input.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let n_paths = next_u64(&mut input)? as usize;
        let steps = next_u64(&mut input)? as usize;
        let d = next_u64(&mut input)? as usize;
        let seed = next_u64(&mut input)?;
        let t0 = f64::from_bits(next_u64(&mut input)?);
        let t_end = f64::from_bits(next_u64(&mut input)?);
        let grid = TimeGrid::new(t0, t_end, steps)?;
        if n_paths == 0 || d == 0 {
            return Err(Error::InvalidArgument("empty ensemble dump".into()));
        }
        let mut increments = vec![0.0; steps * n_paths * d];
        let mut w = vec![0.0; (steps + 1) * n_paths * d];
        for path in 0..n_paths {
            for step in 0..steps {
                for k in 0..d {
                    let dw = f64::from_bits(next_u64(&mut input)?);
                    let at = (step * n_paths + path) * d + k;
                    increments[at] = dw;
                    w[((step + 1) * n_paths + path) * d + k] = w[at] + dw;
                }
            }
        }
        Ok(PathEnsemble {
            grid,
            n_paths,
            d,
            seed,
            increments,
            w,
        })
    }
}

const BINARY_MAGIC: &[u8; 4] = b"QBPE";
const BINARY_VERSION: u32 = 1;

/// Read access to one path's history up to (and including) a node.
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    ensemble: &'a PathEnsemble,
    node: usize,
    path: usize,
}

impl<'a> PathView<'a> {
    pub fn node(&self) -> usize {
        self.node
    }

    pub fn path(&self) -> usize {
        self.path
    }

    pub fn time(&self) -> f64 {
        self.ensemble.grid.time(self.node)
    }

    /// `W` at the current node.
    pub fn current(&self) -> &'a [f64] {
        self.ensemble.w(self.node, self.path)
    }

    /// `W` at an earlier node; panics on look-ahead.
    pub fn at(&self, node: usize) -> &'a [f64] {
        assert!(node <= self.node, "look-ahead: node {node} > {}", self.node);
        self.ensemble.w(node, self.path)
    }

    pub fn time_at(&self, node: usize) -> f64 {
        self.ensemble.grid.time(node)
    }
}

/// Per-path terminal values with their realized sup-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalValues {
    n: usize,
    values: Vec<f64>,
    sup_norm: f64,
}

impl TerminalValues {
    /// Wraps path-major values (`n` per path).
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || values.len() % n != 0 {
            return Err(Error::InvalidArgument("terminal values not a multiple of n".into()));
        }
        let mut sup_norm: f64 = 0.0;
        for (path, row) in values.chunks(n).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "terminal condition",
                    node: usize::MAX,
                    path,
                });
            }
            sup_norm = sup_norm.max(row.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        Ok(Self { n, values, sup_norm })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_paths(&self) -> usize {
        self.values.len() / self.n
    }

    pub fn path(&self, path: usize) -> &[f64] {
        &self.values[path * self.n..(path + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Component `i` across paths.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.values.chunks(self.n).map(|row| row[i]).collect()
    }

    /// Realized `max_path |xi|` (Euclidean norm over components).
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }
}

/// Evaluates an `n`-vector terminal map on every path at the last node.
pub fn evaluate_terminal<F>(ensemble: &PathEnsemble, n: usize, xi: F) -> Result<TerminalValues>
where
    F: Fn(&PathView<'_>, &mut [f64]),
{
    let last = ensemble.steps();
    let mut values = vec![0.0; ensemble.n_paths() * n];
    for (path, row) in values.chunks_mut(n).enumerate() {
        xi(&ensemble.view(last, path), row);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "terminal condition",
                node: last,
                path,
            });
        }
    }
    TerminalValues::from_values(n, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_examples() {
        assert_eq!(make_grid(0.0, 1.0, 1).unwrap().nodes(), vec![0.0, 1.0]);
        assert_eq!(
            make_grid(0.0, 1.0, 4).unwrap().nodes(),
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        );
        assert_eq!(make_grid(0.5, 1.0, 2).unwrap().nodes(), vec![0.5, 0.75, 1.0]);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(make_grid(1.0, 1.0, 3).is_err());
        assert!(make_grid(1.0, 0.5, 3).is_err());
        assert!(make_grid(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn brownian_is_reproducible_and_starts_at_zero() {
        let grid = make_grid(0.0, 1.0, 8).unwrap();
        let a = simulate_brownian(grid, 50, 2, 7).unwrap();
        let b = simulate_brownian(grid, 50, 2, 7).unwrap();
        let c = simulate_brownian(grid, 50, 2, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.increments(), c.increments());
        assert!(a.w_node(0).iter().all(|&v| v == 0.0));
        for p in 0..50 {
            let total: f64 = (0..8).map(|s| a.dw(s, p)[1]).sum();
            assert!((total - a.w(8, p)[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn paths_are_keyed_by_index() {
        let grid = make_grid(0.0, 1.0, 5).unwrap();
        let small = simulate_brownian(grid, 3, 1, 11).unwrap();
        let large = simulate_brownian(grid, 10, 1, 11).unwrap();
        for p in 0..3 {
            for s in 0..5 {
                assert_eq!(small.dw(s, p), large.dw(s, p));
            }
        }
    }

    #[test]
    fn increment_moments() {
        let grid = make_grid(0.0, 1.0, 10).unwrap();
        let n = 20_000;
        let ens = simulate_brownian(grid, n, 2, 3).unwrap();
        let dt = grid.dt();
        for step in 0..10 {
            let mut m = [0.0; 2];
            let mut cross = 0.0;
            let mut var = [0.0; 2];
            for p in 0..n {
                let dw = ens.dw(step, p);
                m[0] += dw[0];
                m[1] += dw[1];
                var[0] += dw[0] * dw[0];
                var[1] += dw[1] * dw[1];
                cross += dw[0] * dw[1];
            }
            let nf = n as f64;
            for k in 0..2 {
                assert!((m[k] / nf).abs() <= 4.0 * (dt / nf).sqrt());
                // sd of the sample variance is dt * sqrt(2/n)
                assert!((var[k] / nf - dt).abs() <= 5.0 * dt * (2.0 / nf).sqrt());
            }
            assert!((cross / nf).abs() <= 5.0 * dt / nf.sqrt());
        }
    }

    #[test]
    fn window_keeps_absolute_levels() {
        let grid = make_grid(0.0, 1.0, 10).unwrap();
        let ens = simulate_brownian(grid, 4, 1, 1).unwrap();
        let win = ens.window(4, 10).unwrap();
        assert_eq!(win.steps(), 6);
        assert!((win.grid().t0() - 0.4).abs() < 1e-15);
        assert_eq!(win.w(0, 2), ens.w(4, 2));
        assert_eq!(win.dw(5, 3), ens.dw(9, 3));
        assert!(ens.window(5, 5).is_err());
    }

    #[test]
    fn terminal_examples() {
        let grid = make_grid(0.0, 1.0, 4).unwrap();
        let ens = simulate_brownian(grid, 100, 1, 5).unwrap();
        let c = evaluate_terminal(&ens, 1, |_, out| out[0] = -2.5).unwrap();
        assert!(c.values().iter().all(|&v| v == -2.5));
        assert_eq!(c.sup_norm(), 2.5);

        let s = evaluate_terminal(&ens, 1, |v, out| out[0] = v.current()[0].sin()).unwrap();
        assert!(s.values().iter().all(|v| v.abs() <= 1.0));
        assert!(s.sup_norm() <= 1.0);

        let cs = evaluate_terminal(&ens, 2, |v, out| {
            out[0] = v.current()[0].cos();
            out[1] = v.current()[0].sin();
        })
        .unwrap();
        assert!(cs.values().iter().all(|v| v.abs() <= 1.0));
        assert!((cs.sup_norm() - 1.0).abs() < 1e-12);

        let bad = evaluate_terminal(&ens, 1, |_, out| out[0] = f64::NAN);
        assert!(matches!(bad, Err(Error::NonFinite { .. })));
    }

    #[test]
    #[should_panic(expected = "look-ahead")]
    fn path_view_forbids_look_ahead() {
        let grid = make_grid(0.0, 1.0, 4).unwrap();
        let ens = simulate_brownian(grid, 2, 1, 5).unwrap();
        ens.view(2, 0).at(3);
    }

    #[test]
    fn binary_and_csv_dumps() {
        let grid = make_grid(0.0, 2.0, 3).unwrap();
        let ens = simulate_brownian(grid, 5, 2, 9).unwrap();
        let mut buf = Vec::new();
        ens.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 4 * 8 + 2 * 8 + 5 * 3 * 2 * 8);
        let back = PathEnsemble::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.increments(), ens.increments());
        assert_eq!(back.seed(), 9);

        let mut csv = Vec::new();
        ens.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("path,step,coordinate,increment"));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(&first[..3], &["0", "0", "0"]);
        assert_eq!(first[3].parse::<f64>().unwrap(), ens.dw(0, 0)[0]);
        assert_eq!(text.lines().count(), 1 + 5 * 3 * 2);
    }
}
