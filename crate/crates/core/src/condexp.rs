//! Least-squares estimation of conditional expectations `E[X | F_t]` on a
//! path ensemble.
//!
//! Targets are regressed on basis functions of a Markov state observed at the
//! node (by default `W_t`). The intercept is fitted as the (weighted) target
//! mean and the slopes on centered features, so constants are reproduced
//! exactly and the fitted values average back to the target mean. Ridge
//! regularization acts on the slopes only.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::paths::{PathEnsemble, PathView};

/// Default ridge factor, scaled by `trace(G) / p`.
pub const DEFAULT_RIDGE: f64 = 1e-8;

type StateFn = dyn Fn(&PathView<'_>) -> Vec<f64> + Send + Sync;

/// Map from a path's history to the low-dimensional regression state.
#[derive(Clone, Default)]
pub enum StateMap {
    /// The Brownian level `W_t` itself.
    #[default]
    Brownian,
    /// Any function of the history up to the node. [`PathView`] refuses
    /// look-ahead, so the state is adapted by construction.
    Custom(Arc<StateFn>),
}

impl fmt::Debug for StateMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateMap::Brownian => write!(f, "Brownian"),
            StateMap::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl StateMap {
    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(&PathView<'_>) -> Vec<f64> + Send + Sync + 'static,
    {
        StateMap::Custom(Arc::new(f))
    }

    fn states(&self, ensemble: &PathEnsemble, node: usize) -> (usize, Vec<f64>) {
        match self {
            StateMap::Brownian => (ensemble.dim(), ensemble.w_node(node).to_vec()),
            StateMap::Custom(f) => {
                let mut dim = 0;
                let mut out = Vec::new();
                for path in 0..ensemble.n_paths() {
                    let s = f(&ensemble.view(node, path));
                    if path == 0 {
                        dim = s.len();
                        out.reserve(dim * ensemble.n_paths());
                    }
                    assert_eq!(s.len(), dim, "state map must return a fixed dimension");
                    out.extend_from_slice(&s);
                }
                (dim, out)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// Monomials of total degree `1..=degree` in the standardized state.
    Polynomial { degree: usize },
    /// Local averages on a tensor grid of equal-count marginal bins.
    Bins { bins: usize },
}

/// Regression basis: kind, state map and slope ridge factor.
#[derive(Debug, Clone)]
pub struct RegressionBasis {
    pub kind: BasisKind,
    pub state: StateMap,
    pub ridge: f64,
}

impl Default for RegressionBasis {
    fn default() -> Self {
        Self::polynomial(3)
    }
}

impl RegressionBasis {
    pub fn polynomial(degree: usize) -> Self {
        Self {
            kind: BasisKind::Polynomial { degree },
            state: StateMap::Brownian,
            ridge: DEFAULT_RIDGE,
        }
    }

    pub fn bins(bins: usize) -> Self {
        Self {
            kind: BasisKind::Bins { bins },
            state: StateMap::Brownian,
            ridge: DEFAULT_RIDGE,
        }
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn with_state(mut self, state: StateMap) -> Self {
        self.state = state;
        self
    }

    fn validate(&self) -> Result<()> {
        let size = match self.kind {
            BasisKind::Polynomial { degree } => degree,
            BasisKind::Bins { bins } => bins,
        };
        if size == 0 {
            return Err(Error::InvalidArgument("basis degree/bins must be >= 1".into()));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::InvalidArgument("ridge must be a finite nonnegative number".into()));
        }
        Ok(())
    }
}

/// Standardizing transform plus monomial exponents.
#[derive(Debug, Clone)]
struct PolyTransform {
    active: Vec<usize>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    exponents: Vec<Vec<u32>>,
}

impl PolyTransform {
    fn new(dim: usize, states: &[f64], n_paths: usize, degree: usize) -> Self {
        let mut active = Vec::new();
        let mut mean = Vec::new();
        let mut scale = Vec::new();
        for j in 0..dim {
            let m = (0..n_paths).map(|p| states[p * dim + j]).sum::<f64>() / n_paths as f64;
            let v = (0..n_paths)
                .map(|p| (states[p * dim + j] - m).powi(2))
                .sum::<f64>()
                / n_paths as f64;
            let sd = v.sqrt();
            if sd > 1e-12 * m.abs().max(1.0) {
                active.push(j);
                mean.push(m);
                scale.push(sd);
            }
        }
        let exponents = monomials(active.len(), degree);
        Self {
            active,
            mean,
            scale,
            exponents,
        }
    }

    fn n_features(&self) -> usize {
        self.exponents.len()
    }

    fn features(&self, state: &[f64], out: &mut [f64]) {
        let z: Vec<f64> = self
            .active
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&j, (m, s))| (state[j] - m) / s)
            .collect();
        for (slot, e) in out.iter_mut().zip(&self.exponents) {
            *slot = e.iter().zip(&z).map(|(&k, &x)| x.powi(k as i32)).product();
        }
    }
}

/// All exponent vectors with total degree in `1..=degree`.
fn monomials(vars: usize, degree: usize) -> Vec<Vec<u32>> {
    fn rec(vars: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == vars {
            if prefix.iter().sum::<u32>() > 0 {
                out.push(prefix.clone());
            }
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(vars, left - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(vars, degree as u32, &mut Vec::new(), &mut out);
    out.sort_by_key(|e| e.iter().sum::<u32>());
    out
}

/// Equal-count marginal bin edges.
#[derive(Debug, Clone)]
struct BinTransform {
    edges: Vec<Vec<f64>>,
}

impl BinTransform {
    fn new(dim: usize, states: &[f64], n_paths: usize, bins: usize) -> Self {
        let edges = (0..dim)
            .map(|j| {
                let mut col: Vec<f64> = (0..n_paths).map(|p| states[p * dim + j]).collect();
                col.sort_by(f64::total_cmp);
                let mut e: Vec<f64> = (1..bins).map(|b| col[b * n_paths / bins]).collect();
                e.dedup();
                // a constant coordinate collapses to a single bin
                if col[0] == col[n_paths - 1] {
                    e.clear();
                }
                e
            })
            .collect();
        Self { edges }
    }

    fn n_cells(&self) -> usize {
        self.edges.iter().map(|e| e.len() + 1).product()
    }

    fn cell(&self, state: &[f64]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (j, e) in self.edges.iter().enumerate() {
            let b = e.partition_point(|&edge| edge <= state[j]);
            idx += b * stride;
            stride *= e.len() + 1;
        }
        idx
    }
}

#[derive(Debug, Clone)]
enum Transform {
    Poly(PolyTransform),
    Bins(BinTransform),
}

#[derive(Debug, Clone)]
enum Coefficients {
    Poly {
        feature_mean: Vec<f64>,
        slopes: Vec<f64>,
    },
    Bins {
        cell_means: Vec<f64>,
    },
}

/// A fitted conditional-expectation estimator at one node.
#[derive(Debug, Clone)]
pub struct CondExpEstimator {
    node: usize,
    state: StateMap,
    state_dim: usize,
    transform: Transform,
    intercept: f64,
    coefficients: Coefficients,
    ridge: f64,
    residual_sd: f64,
}

impl CondExpEstimator {
    pub fn node(&self) -> usize {
        self.node
    }

    /// Target mean used as intercept.
    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Root mean squared residual of the fit.
    pub fn residual_sd(&self) -> f64 {
        self.residual_sd
    }

    /// Estimates on every path of `ensemble` at `node`.
    pub fn predict(&self, ensemble: &PathEnsemble, node: usize) -> Result<Vec<f64>> {
        if node != self.node {
            return Err(Error::NodeMismatch {
                fitted: self.node,
                requested: node,
            });
        }
        let (dim, states) = self.state.states(ensemble, node);
        if dim != self.state_dim {
            return Err(Error::InvalidArgument(format!(
                "state dimension {dim} differs from fitted {}",
                self.state_dim
            )));
        }
        Ok(states.chunks(dim.max(1)).map(|s| self.eval(s)).collect())
    }

    fn eval(&self, state: &[f64]) -> f64 {
        match (&self.transform, &self.coefficients) {
            (
                Transform::Poly(t),
                Coefficients::Poly {
                    feature_mean,
                    slopes,
                },
            ) => {
                let mut phi = vec![0.0; t.n_features()];
                t.features(state, &mut phi);
                self.intercept
                    + phi
                        .iter()
                        .zip(feature_mean)
                        .zip(slopes)
                        .map(|((x, m), b)| (x - m) * b)
                        .sum::<f64>()
            }
            (Transform::Bins(t), Coefficients::Bins { cell_means }) => cell_means[t.cell(state)],
            _ => unreachable!("transform and coefficients always match"),
        }
    }
}

/// Fitted values plus per-path standard errors of the estimate.
#[derive(Debug, Clone)]
pub struct Projection {
    pub values: Vec<f64>,
    pub se: Vec<f64>,
}

impl Projection {
    pub fn max_se(&self) -> f64 {
        self.se.iter().copied().fold(0.0, f64::max)
    }

    /// Clamps the values into `[lo, hi]`.
    pub fn clamp(mut self, lo: f64, hi: f64) -> Self {
        for v in &mut self.values {
            *v = v.clamp(lo, hi);
        }
        self
    }
}

/// Regression design at one node: features, weights and the factorized
/// normal matrix. Reused across many targets at the same node.
#[derive(Debug, Clone)]
pub struct Projector {
    node: usize,
    n_paths: usize,
    state: StateMap,
    state_dim: usize,
    transform: Transform,
    ridge: f64,
    weights: Option<Vec<f64>>,
    weight_sum: f64,
    weight_sq_sum: f64,
    design: Design,
}

#[derive(Debug, Clone)]
enum Design {
    Poly {
        features: Vec<f64>,
        feature_mean: Vec<f64>,
        chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
        leverage: Vec<f64>,
    },
    Bins {
        cells: Vec<usize>,
        cell_weight: Vec<f64>,
    },
}

impl Projector {
    pub fn new(ensemble: &PathEnsemble, node: usize, basis: &RegressionBasis) -> Result<Self> {
        Self::build(ensemble, node, basis, None)
    }

    pub fn weighted(
        ensemble: &PathEnsemble,
        node: usize,
        basis: &RegressionBasis,
        weights: &[f64],
    ) -> Result<Self> {
        if weights.len() != ensemble.n_paths() {
            return Err(Error::InvalidArgument("one weight per path required".into()));
        }
        if let Some(path) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinite {
                what: "regression weights",
                node,
                path,
            });
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvalidArgument("regression weights must be positive".into()));
        }
        Self::build(ensemble, node, basis, Some(weights.to_vec()))
    }

    fn build(
        ensemble: &PathEnsemble,
        node: usize,
        basis: &RegressionBasis,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        basis.validate()?;
        if node > ensemble.steps() {
            return Err(Error::InvalidArgument(format!(
                "node {node} outside grid 0..={}",
                ensemble.steps()
            )));
        }
        let n_paths = ensemble.n_paths();
        let (dim, states) = basis.state.states(ensemble, node);
        let w = |p: usize| weights.as_ref().map_or(1.0, |w| w[p]);
        let weight_sum: f64 = (0..n_paths).map(w).sum();
        let weight_sq_sum: f64 = (0..n_paths).map(|p| w(p) * w(p)).sum();

        let (transform, design) = match basis.kind {
            BasisKind::Polynomial { degree } => {
                let t = PolyTransform::new(dim, &states, n_paths, degree);
                let p = t.n_features();
                let mut features = vec![0.0; n_paths * p];
                for (path, row) in features.chunks_mut(p.max(1)).enumerate().take(n_paths) {
                    if p > 0 {
                        t.features(&states[path * dim..(path + 1) * dim], row);
                    }
                }
                let mut feature_mean = vec![0.0; p];
                for path in 0..n_paths {
                    for j in 0..p {
                        feature_mean[j] += w(path) * features[path * p + j];
                    }
                }
                feature_mean.iter_mut().for_each(|m| *m /= weight_sum);
                let mut gram = DMatrix::<f64>::zeros(p, p);
                let mut centered = vec![0.0; p];
                for path in 0..n_paths {
                    let wp = w(path);
                    for j in 0..p {
                        centered[j] = features[path * p + j] - feature_mean[j];
                    }
                    for a in 0..p {
                        let ca = wp * centered[a];
                        for b in a..p {
                            gram[(a, b)] += ca * centered[b];
                        }
                    }
                }
                for a in 0..p {
                    for b in 0..a {
                        gram[(a, b)] = gram[(b, a)];
                    }
                }
                let (chol, leverage) = if p == 0 {
                    (None, vec![0.0; n_paths])
                } else {
                    let lambda = basis.ridge * gram.trace() / p as f64;
                    let diag: Vec<f64> = (0..p).map(|a| gram[(a, a)]).collect();
                    for a in 0..p {
                        gram[(a, a)] += lambda;
                    }
                    let chol = gram.cholesky().ok_or(Error::RankDeficient { node })?;
                    if basis.ridge == 0.0 {
                        let l = chol.l_dirty();
                        let degenerate = (0..p).any(|a| l[(a, a)].powi(2) <= 1e-11 * diag[a].max(f64::MIN_POSITIVE));
                        if degenerate {
                            return Err(Error::RankDeficient { node });
                        }
                    }
                    let mut leverage = vec![0.0; n_paths];
                    let mut x = DVector::<f64>::zeros(p);
                    for (path, lev) in leverage.iter_mut().enumerate() {
                        for j in 0..p {
                            x[j] = features[path * p + j] - feature_mean[j];
                        }
                        let solved = chol.solve(&x);
                        *lev = x.dot(&solved);
                    }
                    (Some(chol), leverage)
                };
                (
                    Transform::Poly(t),
                    Design::Poly {
                        features,
                        feature_mean,
                        chol,
                        leverage,
                    },
                )
            }
            BasisKind::Bins { bins } => {
                let t = BinTransform::new(dim, &states, n_paths, bins);
                let mut cell_weight = vec![0.0; t.n_cells()];
                let cells: Vec<usize> = (0..n_paths)
                    .map(|p| {
                        let c = t.cell(&states[p * dim..(p + 1) * dim]);
                        cell_weight[c] += w(p);
                        c
                    })
                    .collect();
                (Transform::Bins(t), Design::Bins { cells, cell_weight })
            }
        };
        Ok(Self {
            node,
            n_paths,
            state: basis.state.clone(),
            state_dim: dim,
            transform,
            ridge: basis.ridge,
            weights,
            weight_sum,
            weight_sq_sum,
            design,
        })
    }

    pub fn node(&self) -> usize {
        self.node
    }

    #[inline]
    fn weight(&self, path: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[path])
    }

    /// Fits `targets` and returns the estimator.
    pub fn fit(&self, targets: &[f64]) -> Result<CondExpEstimator> {
        Ok(self.solve(targets)?.0)
    }

    /// Fits `targets` and returns fitted values with standard errors.
    pub fn project(&self, targets: &[f64]) -> Result<Projection> {
        Ok(self.solve(targets)?.1)
    }

    fn solve(&self, targets: &[f64]) -> Result<(CondExpEstimator, Projection)> {
        if targets.len() != self.n_paths {
            return Err(Error::InvalidArgument(format!(
                "{} targets for {} paths",
                targets.len(),
                self.n_paths
            )));
        }
        if let Some(path) = targets.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "regression targets",
                node: self.node,
                path,
            });
        }
        let mean = (0..self.n_paths)
            .map(|p| self.weight(p) * targets[p])
            .sum::<f64>()
            / self.weight_sum;
        let neff_inv = self.weight_sq_sum / (self.weight_sum * self.weight_sum);

        match &self.design {
            Design::Poly {
                features,
                feature_mean,
                chol,
                leverage,
            } => {
                let p = feature_mean.len();
                let slopes = match chol {
                    None => Vec::new(),
                    Some(chol) => {
                        let mut rhs = DVector::<f64>::zeros(p);
                        for path in 0..self.n_paths {
                            let wy = self.weight(path) * (targets[path] - mean);
                            for j in 0..p {
                                rhs[j] += wy * (features[path * p + j] - feature_mean[j]);
                            }
                        }
                        chol.solve(&rhs).iter().copied().collect()
                    }
                };
                let mut values = vec![mean; self.n_paths];
                let mut rss = 0.0;
                for (path, v) in values.iter_mut().enumerate() {
                    for j in 0..p {
                        *v += (features[path * p + j] - feature_mean[j]) * slopes[j];
                    }
                    rss += self.weight(path) * (targets[path] - *v).powi(2);
                }
                let dof = (self.n_paths as f64 - p as f64 - 1.0).max(1.0);
                let sigma2 = rss / self.weight_sum * self.n_paths as f64 / dof;
                let se = leverage
                    .iter()
                    .map(|h| (sigma2 * neff_inv * (1.0 + self.weight_sum * h)).sqrt())
                    .collect();
                let estimator = CondExpEstimator {
                    node: self.node,
                    state: self.state.clone(),
                    state_dim: self.state_dim,
                    transform: self.transform.clone(),
                    intercept: mean,
                    coefficients: Coefficients::Poly {
                        feature_mean: feature_mean.clone(),
                        slopes,
                    },
                    ridge: self.ridge,
                    residual_sd: (rss / self.weight_sum).sqrt(),
                };
                Ok((estimator, Projection { values, se }))
            }
            Design::Bins { cells, cell_weight } => {
                let n_cells = cell_weight.len();
                let mut sums = vec![0.0; n_cells];
                for (path, &c) in cells.iter().enumerate() {
                    sums[c] += self.weight(path) * targets[path];
                }
                let cell_means: Vec<f64> = sums
                    .iter()
                    .zip(cell_weight)
                    .map(|(s, &w)| if w > 0.0 { s / w } else { mean })
                    .collect();
                let mut var_num = vec![0.0; n_cells];
                let mut w2 = vec![0.0; n_cells];
                let mut rss = 0.0;
                for (path, &c) in cells.iter().enumerate() {
                    let wp = self.weight(path);
                    let r = targets[path] - cell_means[c];
                    var_num[c] += wp * wp * r * r;
                    w2[c] += wp * wp;
                    rss += wp * r * r;
                }
                let cell_se: Vec<f64> = (0..n_cells)
                    .map(|c| {
                        if cell_weight[c] > 0.0 {
                            // small-sample correction n/(n-1) on the effective count
                            let neff = cell_weight[c] * cell_weight[c] / w2[c];
                            let corr = if neff > 1.0 { neff / (neff - 1.0) } else { 1.0 };
                            (var_num[c] * corr).sqrt() / cell_weight[c]
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let values = cells.iter().map(|&c| cell_means[c]).collect();
                let se = cells.iter().map(|&c| cell_se[c]).collect();
                let estimator = CondExpEstimator {
                    node: self.node,
                    state: self.state.clone(),
                    state_dim: self.state_dim,
                    transform: self.transform.clone(),
                    intercept: mean,
                    coefficients: Coefficients::Bins { cell_means },
                    ridge: self.ridge,
                    residual_sd: (rss / self.weight_sum).sqrt(),
                };
                Ok((estimator, Projection { values, se }))
            }
        }
    }
}

/// Least-squares projection of `targets` onto the basis at `node`.
pub fn fit(
    ensemble: &PathEnsemble,
    node: usize,
    targets: &[f64],
    basis: &RegressionBasis,
) -> Result<CondExpEstimator> {
    Projector::new(ensemble, node, basis)?.fit(targets)
}

/// Weighted projection; with weights `E(N)_t^T` this estimates the
/// conditional expectation under the measure `dQ = E(N) dP`.
pub fn weighted_fit(
    ensemble: &PathEnsemble,
    node: usize,
    targets: &[f64],
    weights: &[f64],
    basis: &RegressionBasis,
) -> Result<CondExpEstimator> {
    Projector::weighted(ensemble, node, basis, weights)?.fit(targets)
}

/// Smoothed essential supremum: the largest fitted value over paths.
pub fn smoothed_ess_sup(projection: &Projection) -> f64 {
    projection
        .values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}
