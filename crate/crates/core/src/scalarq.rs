//! Scalar BSDE `dY = -(f(t, Z) + g_t) dt + Z dW` with `f` of quadratic growth
//! in `z` and a frozen adapted driver `g`.
//!
//! The numerical solve is an explicit least-squares backward sweep. The
//! pure-quadratic case `f = (gamma/2)|z|^2` has the exponential closed form
//! in [`cole_hopf_solve`], used as the oracle for the sweep.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::condexp::{Projector, RegressionBasis};
use crate::constants::{phi, phi_prime};
use crate::error::{Error, Result};
use crate::field::AdaptedField;
use crate::paths::PathEnsemble;

pub type ScalarFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// Number of random probes used to spot-check declared bounds.
pub const GROWTH_PROBES: usize = 2000;

/// Generator `f(t, z)` with declared growth `|f| <= C + (gamma/2)|z|^2` and
/// local Lipschitz constant `L`: `|f(z) - f(z')| <= L (1 + |z| + |z'|) |z - z'|`.
#[derive(Clone)]
pub struct ScalarGenerator {
    f: ScalarFn,
    d: usize,
    pub c: f64,
    pub gamma: f64,
    pub lipschitz: f64,
}

impl fmt::Debug for ScalarGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarGenerator")
            .field("d", &self.d)
            .field("c", &self.c)
            .field("gamma", &self.gamma)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl ScalarGenerator {
    /// Wraps `f` and spot-checks the declared constants on random probes in
    /// `[0, horizon] x R^d`.
    pub fn new<F>(d: usize, c: f64, gamma: f64, lipschitz: f64, horizon: f64, f: F) -> Result<Self>
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::from_arc(d, c, gamma, lipschitz, horizon, Arc::new(f))
    }

    pub fn from_arc(
        d: usize,
        c: f64,
        gamma: f64,
        lipschitz: f64,
        horizon: f64,
        f: ScalarFn,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("generator needs d >= 1".into()));
        }
        if !(c >= 0.0 && gamma > 0.0 && lipschitz >= 0.0) {
            return Err(Error::InvalidArgument(
                "generator constants need C >= 0, gamma > 0, L >= 0".into(),
            ));
        }
        let gen = Self {
            f,
            d,
            c,
            gamma,
            lipschitz,
        };
        gen.check_bounds(horizon, GROWTH_PROBES)?;
        Ok(gen)
    }

    /// `f(z) = (gamma/2)|z|^2`.
    pub fn pure_quadratic(d: usize, gamma: f64) -> Self {
        let half = 0.5 * gamma;
        Self {
            f: Arc::new(move |_, z: &[f64]| half * z.iter().map(|v| v * v).sum::<f64>()),
            d,
            c: 0.0,
            gamma,
            lipschitz: half,
        }
    }

    /// `f = 0` (declared with the given `gamma`).
    pub fn zero(d: usize, gamma: f64) -> Self {
        Self {
            f: Arc::new(|_, _: &[f64]| 0.0),
            d,
            c: 0.0,
            gamma,
            lipschitz: 0.0,
        }
    }

    /// `f + shift` with the growth constant raised accordingly.
    pub fn shifted(&self, shift: f64) -> Self {
        let f = self.f.clone();
        Self {
            f: Arc::new(move |t, z: &[f64]| f(t, z) + shift),
            d: self.d,
            c: self.c + shift.abs(),
            gamma: self.gamma,
            lipschitz: self.lipschitz,
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn eval(&self, t: f64, z: &[f64]) -> f64 {
        (self.f)(t, z)
    }

    pub fn function(&self) -> ScalarFn {
        self.f.clone()
    }

    /// Checks the declared growth and Lipschitz bounds on `probes` seeded
    /// random points; the error names the first violating probe.
    pub fn check_bounds(&self, horizon: f64, probes: usize) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_f00d);
        let scales = [0.01, 0.3, 1.0, 3.0, 30.0];
        let mut z = vec![0.0; self.d];
        let mut z2 = vec![0.0; self.d];
        for i in 0..probes {
            let t = horizon * rng.gen::<f64>();
            let s = scales[i % scales.len()];
            for (a, b) in z.iter_mut().zip(z2.iter_mut()) {
                *a = s * rng.sample::<f64, _>(StandardNormal);
                *b = *a + 0.1 * s * rng.sample::<f64, _>(StandardNormal);
            }
            let v = self.eval(t, &z);
            let nz = norm(&z);
            let bound = self.c + 0.5 * self.gamma * nz * nz;
            if !v.is_finite() || v.abs() > bound * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::GrowthBound {
                    probe: format!("t={t:.6}, z={z:?}: |f|={:.6e} > C + (gamma/2)|z|^2 = {bound:.6e}", v.abs()),
                });
            }
            let nz2 = norm(&z2);
            let diff: f64 = z.iter().zip(&z2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let lip = self.lipschitz * (1.0 + nz + nz2) * diff;
            let dv = (self.eval(t, &z2) - v).abs();
            if dv > lip * (1.0 + 1e-9) + 1e-12 * (1.0 + v.abs()) {
                return Err(Error::GrowthBound {
                    probe: format!(
                        "t={t:.6}, z={z:?}, z'={z2:?}: |f(z)-f(z')|={dv:.6e} > L(1+|z|+|z'|)|z-z'| = {lip:.6e}"
                    ),
                });
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Frozen adapted driver `g`, one value per node and path (left endpoints;
/// the terminal node is unused).
#[derive(Debug, Clone, PartialEq)]
pub struct DriverField {
    values: AdaptedField,
}

impl DriverField {
    pub fn zeros(ensemble: &PathEnsemble) -> Self {
        Self {
            values: AdaptedField::zeros(ensemble.grid().n_nodes(), ensemble.n_paths(), 1),
        }
    }

    pub fn constant(ensemble: &PathEnsemble, c: f64) -> Self {
        let mut values = AdaptedField::zeros(ensemble.grid().n_nodes(), ensemble.n_paths(), 1);
        values = values.map(|_| c);
        Self { values }
    }

    pub fn from_field(values: AdaptedField) -> Result<Self> {
        if values.width() != 1 {
            return Err(Error::InvalidArgument("driver field must be scalar".into()));
        }
        if let Some((node, path)) = values.first_non_finite() {
            return Err(Error::NonFinite {
                what: "driver",
                node,
                path,
            });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &AdaptedField {
        &self.values
    }

    #[inline]
    pub fn get(&self, node: usize, path: usize) -> f64 {
        self.values.get(node, path)[0]
    }

    fn check(&self, ensemble: &PathEnsemble) -> Result<()> {
        if self.values.nodes() != ensemble.grid().n_nodes() || self.values.n_paths() != ensemble.n_paths() {
            return Err(Error::InvalidArgument(format!(
                "driver has {}x{} values, ensemble {}x{}",
                self.values.nodes(),
                self.values.n_paths(),
                ensemble.grid().n_nodes(),
                ensemble.n_paths()
            )));
        }
        Ok(())
    }

    /// `int_{t_k}^T transform(g_s) ds` per node and path, left-endpoint rule.
    pub fn tail_integrals<F: Fn(f64) -> f64>(&self, dt: f64, transform: F) -> AdaptedField {
        let nodes = self.values.nodes();
        let n_paths = self.values.n_paths();
        let mut out = AdaptedField::zeros(nodes, n_paths, 1);
        for k in (0..nodes.saturating_sub(1)).rev() {
            for p in 0..n_paths {
                let next = out.get(k + 1, p)[0];
                out.get_mut(k, p)[0] = next + transform(self.get(k, p)) * dt;
            }
        }
        out
    }

    /// Sample moments `mean(exp(m gamma int_0^T |g|))`, `m = 1..=max_order`.
    pub fn exp_moments(&self, dt: f64, gamma: f64, max_order: usize) -> Result<Vec<f64>> {
        let tails = self.tail_integrals(dt, f64::abs);
        let totals = tails.component(0, 0);
        (1..=max_order)
            .map(|m| {
                let v = totals.iter().map(|x| (m as f64 * gamma * x).exp()).sum::<f64>() / totals.len() as f64;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFinite {
                        what: "driver exponential moment",
                        node: 0,
                        path: 0,
                    })
                }
            })
            .collect()
    }
}

/// Cap on `|z|` inside the quadratic generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZCap {
    /// Ten times a BMO-based bound on `|Z|` (see [`auto_z_cap`]).
    Auto,
    Fixed(f64),
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalarOptions {
    pub z_cap: ZCap,
    /// Abort when `max|Y|` exceeds this multiple of the a priori bound.
    pub divergence_factor: f64,
}

impl Default for ScalarOptions {
    fn default() -> Self {
        Self {
            z_cap: ZCap::Auto,
            divergence_factor: 10.0,
        }
    }
}

/// Output of [`solve_scalar`].
#[derive(Debug, Clone)]
pub struct ScalarSolution {
    /// `Y`, width 1, every node.
    pub y: AdaptedField,
    /// `Z`, width `d`, left endpoints (terminal node is zero).
    pub z: AdaptedField,
    /// Largest standard error of the continuation estimate per node
    /// (zero at the terminal node).
    pub y_se: Vec<f64>,
    pub z_cap: f64,
    pub cap_hits: usize,
    pub y_bound: f64,
}

impl ScalarSolution {
    pub fn y0(&self) -> f64 {
        self.y.mean(0, 0)
    }
}

/// `|xi|_inf + C (T - t0) + max_path int |g|`.
pub fn a_priori_y_bound(gen: &ScalarGenerator, xi: &[f64], horizon: f64, max_abs_driver_integral: f64) -> f64 {
    let xi_sup = xi.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    xi_sup + gen.c * horizon + max_abs_driver_integral
}

/// `10 sqrt(2 R / (T - t0))` with `R = phi(|xi|) + phi'(Ybound)(C (T-t0) + max int |g|)`,
/// the BMO energy bound of `Z` spread uniformly over the horizon.
pub fn auto_z_cap(gen: &ScalarGenerator, xi_sup: f64, horizon: f64, driver_integral: f64, y_bound: f64) -> f64 {
    let r = phi(xi_sup, gen.gamma).unwrap_or(f64::INFINITY)
        + phi_prime(y_bound, gen.gamma).unwrap_or(f64::INFINITY) * (gen.c * horizon + driver_integral);
    10.0 * (2.0 * r / horizon).sqrt()
}

fn check_terminal(ensemble: &PathEnsemble, xi: &[f64]) -> Result<()> {
    if xi.len() != ensemble.n_paths() {
        return Err(Error::InvalidArgument(format!(
            "{} terminal values for {} paths",
            xi.len(),
            ensemble.n_paths()
        )));
    }
    if let Some(path) = xi.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "terminal values",
            node: ensemble.steps(),
            path,
        });
    }
    Ok(())
}

/// Explicit backward sweep.
///
/// At node `k`: `Yhat = E_k[Y_{k+1}]` (clamped to the range of `Y_{k+1}`), `Z_k = E_k[(Y_{k+1} - Yhat) dW / dt]`,
/// `Y_k = Yhat + (f(t_k, Z_k) + g_k) dt`, with `f` evaluated at `Z_k`
/// radially truncated to `|z| <= z_cap`.
pub fn solve_scalar(
    ensemble: &PathEnsemble,
    gen: &ScalarGenerator,
    driver: &DriverField,
    xi: &[f64],
    basis: &RegressionBasis,
    options: &ScalarOptions,
) -> Result<ScalarSolution> {
    check_terminal(ensemble, xi)?;
    driver.check(ensemble)?;
    if gen.d() != ensemble.dim() {
        return Err(Error::InvalidArgument(format!(
            "generator dimension {} differs from Brownian dimension {}",
            gen.d(),
            ensemble.dim()
        )));
    }
    let grid = ensemble.grid();
    let (steps, n_paths, d, dt) = (grid.steps(), ensemble.n_paths(), ensemble.dim(), grid.dt());
    let horizon = grid.horizon();

    let abs_tails = driver.tail_integrals(dt, f64::abs);
    let max_int = abs_tails.node(0).iter().fold(0.0_f64, |m, v| m.max(*v));
    let y_bound = a_priori_y_bound(gen, xi, horizon, max_int);
    let xi_sup = xi.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let z_cap = match options.z_cap {
        ZCap::Auto => auto_z_cap(gen, xi_sup, horizon, max_int, y_bound),
        ZCap::Fixed(c) => c,
        ZCap::Off => f64::INFINITY,
    };
    let divergence_bound = options.divergence_factor * y_bound.max(1e-3);

    let mut y = AdaptedField::zeros(steps + 1, n_paths, 1);
    let mut z = AdaptedField::zeros(steps + 1, n_paths, d);
    let mut y_se = vec![0.0; steps + 1];
    y.node_mut(steps).copy_from_slice(xi);
    let mut cap_hits = 0;
    let mut target = vec![0.0; n_paths];
    let mut zrow = vec![0.0; d];

    for k in (0..steps).rev() {
        let projector = Projector::new(ensemble, k, basis)?;
        let y_next = y.node(k + 1).to_vec();
        let (lo, hi) = min_max(&y_next);
        let cont = projector.project(&y_next)?.clamp(lo, hi);
        y_se[k] = cont.max_se();
        for j in 0..d {
            for p in 0..n_paths {
                target[p] = (y_next[p] - cont.values[p]) * ensemble.dw(k, p)[j] / dt;
            }
            let zj = projector.project(&target)?;
            z.set_component(k, j, &zj.values);
        }
        let t = grid.time(k);
        let mut max_abs = 0.0_f64;
        for p in 0..n_paths {
            zrow.copy_from_slice(z.get(k, p));
            let nz = norm(&zrow);
            if nz > z_cap {
                cap_hits += 1;
                let s = z_cap / nz;
                zrow.iter_mut().for_each(|v| *v *= s);
            }
            let v = cont.values[p] + (gen.eval(t, &zrow) + driver.get(k, p)) * dt;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    what: "Y",
                    node: k,
                    path: p,
                });
            }
            max_abs = max_abs.max(v.abs());
            y.get_mut(k, p)[0] = v;
        }
        if max_abs > divergence_bound {
            return Err(Error::Divergence {
                node: k,
                max_abs_y: max_abs,
                bound: divergence_bound,
            });
        }
    }
    Ok(ScalarSolution {
        y,
        z,
        y_se,
        z_cap,
        cap_hits,
        y_bound,
    })
}

/// Output of [`cole_hopf_solve`].
#[derive(Debug, Clone)]
pub struct ColeHopfSolution {
    pub y: AdaptedField,
    /// Delta-method standard error of `Y` per node (largest over paths).
    pub y_se: Vec<f64>,
}

impl ColeHopfSolution {
    pub fn y0(&self) -> f64 {
        self.y.mean(0, 0)
    }

    pub fn y0_se(&self) -> f64 {
        self.y_se[0]
    }
}

/// `Y_t = (1/gamma) log E_t[exp(gamma (xi + int_t^T g ds))]`, the solution of
/// the pure-quadratic equation `f = (gamma/2)|z|^2` with driver `g`.
pub fn cole_hopf_solve(
    ensemble: &PathEnsemble,
    gamma: f64,
    driver: &DriverField,
    xi: &[f64],
    basis: &RegressionBasis,
) -> Result<ColeHopfSolution> {
    check_terminal(ensemble, xi)?;
    driver.check(ensemble)?;
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument("gamma must be positive".into()));
    }
    let grid = ensemble.grid();
    let (steps, n_paths) = (grid.steps(), ensemble.n_paths());
    let tails = driver.tail_integrals(grid.dt(), |g| g);
    let mut y = AdaptedField::zeros(steps + 1, n_paths, 1);
    let mut y_se = vec![0.0; steps + 1];
    y.node_mut(steps).copy_from_slice(xi);
    let mut target = vec![0.0; n_paths];
    for k in 0..steps {
        let mut max_exp = f64::NEG_INFINITY;
        for p in 0..n_paths {
            let e = gamma * (xi[p] + tails.get(k, p)[0]);
            max_exp = max_exp.max(e.abs());
            target[p] = e.exp();
        }
        if max_exp > 709.0 {
            return Err(Error::Overflow {
                quantity: "Cole-Hopf exponential",
                exponent: max_exp,
            });
        }
        let (lo, hi) = min_max(&target);
        let proj = Projector::new(ensemble, k, basis)?.project(&target)?.clamp(lo, hi);
        let mut se = 0.0_f64;
        for p in 0..n_paths {
            y.get_mut(k, p)[0] = proj.values[p].ln() / gamma;
            se = se.max(proj.se[p] / (gamma * proj.values[p]));
        }
        y_se[k] = se;
    }
    Ok(ColeHopfSolution { y, y_se })
}

pub(crate) fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Result of [`a_priori_check`].
#[derive(Debug, Clone, Serialize)]
pub struct AprioriReport {
    /// Largest `(e^{gamma|Y_t|} - rhs) / se(rhs)` over nodes and paths.
    pub max_violation_se: f64,
    pub worst_node: usize,
    pub worst_path: usize,
    /// Largest `e^{gamma|Y_t|} / rhs` over nodes and paths.
    pub max_ratio: f64,
    pub holds: bool,
}

/// Compares `e^{gamma|Y_t|}` with the regression estimate of
/// `E_t[e^{gamma|xi| + gamma int_t^T |g|}]` node by node; violations are
/// measured in standard errors of the right side, and the check passes at
/// 3 standard errors.
pub fn a_priori_check(
    y: &AdaptedField,
    driver: &DriverField,
    xi: &[f64],
    gamma: f64,
    ensemble: &PathEnsemble,
    basis: &RegressionBasis,
) -> Result<AprioriReport> {
    check_terminal(ensemble, xi)?;
    driver.check(ensemble)?;
    let grid = ensemble.grid();
    let (steps, n_paths) = (grid.steps(), ensemble.n_paths());
    if y.nodes() != steps + 1 || y.n_paths() != n_paths || y.width() != 1 {
        return Err(Error::InvalidArgument("Y does not match the ensemble".into()));
    }
    let tails = driver.tail_integrals(grid.dt(), f64::abs);
    let mut report = AprioriReport {
        max_violation_se: f64::NEG_INFINITY,
        worst_node: 0,
        worst_path: 0,
        max_ratio: 0.0,
        holds: true,
    };
    let mut target = vec![0.0; n_paths];
    for k in 0..=steps {
        for p in 0..n_paths {
            target[p] = (gamma * (xi[p].abs() + tails.get(k, p)[0])).exp();
        }
        let (lo, hi) = min_max(&target);
        let proj = if k == steps {
            crate::condexp::Projection {
                values: target.clone(),
                se: vec![0.0; n_paths],
            }
        } else {
            Projector::new(ensemble, k, basis)?.project(&target)?.clamp(lo, hi)
        };
        for p in 0..n_paths {
            let lhs = (gamma * y.get(k, p)[0].abs()).exp();
            let rhs = proj.values[p];
            let scale = proj.se[p].max(1e-12 * rhs);
            let v = (lhs - rhs) / scale;
            if v > report.max_violation_se {
                report.max_violation_se = v;
                report.worst_node = k;
                report.worst_path = p;
            }
            report.max_ratio = report.max_ratio.max(lhs / rhs);
        }
    }
    report.holds = report.max_violation_se <= 3.0;
    Ok(report)
}

/// Result of [`comparison_check`].
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    /// `min (Y_upper - Y_lower)` over nodes and paths.
    pub min_gap: f64,
    /// `min (Y_upper - Y_lower + tol_k)`; nonnegative when the check passes.
    pub min_slack: f64,
    pub worst_node: usize,
    pub worst_path: usize,
    pub max_tol: f64,
    pub holds: bool,
}

/// Checks the pointwise ordering of the data: `f_lo <= f_hi` on random
/// probes and `xi_lo <= xi_hi` on every path.
pub fn check_ordering(
    lower: &ScalarGenerator,
    upper: &ScalarGenerator,
    xi_lower: &[f64],
    xi_upper: &[f64],
    horizon: f64,
) -> Result<()> {
    if let Some(p) = xi_lower.iter().zip(xi_upper).position(|(a, b)| a > b) {
        return Err(Error::InvalidArgument(format!("terminal values are not ordered on path {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0ffee);
    let mut z = vec![0.0; lower.d()];
    for _ in 0..GROWTH_PROBES {
        let t = horizon * rng.gen::<f64>();
        let s = 3.0 * rng.gen::<f64>();
        z.iter_mut().for_each(|v| *v = s * rng.sample::<f64, _>(StandardNormal));
        if lower.eval(t, &z) > upper.eval(t, &z) {
            return Err(Error::InvalidArgument(format!("generators are not ordered at t={t}, z={z:?}")));
        }
    }
    Ok(())
}

/// Verifies `Y_upper >= Y_lower - tol_k` at every node and path, with
/// `tol_k = 5 sqrt(se_lower_k^2 + se_upper_k^2)`.
pub fn comparison_check(lower: &ScalarSolution, upper: &ScalarSolution) -> Result<ComparisonReport> {
    lower.y.check_shape(&upper.y)?;
    let mut report = ComparisonReport {
        min_gap: f64::INFINITY,
        min_slack: f64::INFINITY,
        worst_node: 0,
        worst_path: 0,
        max_tol: 0.0,
        holds: true,
    };
    for k in 0..lower.y.nodes() {
        let tol = 5.0 * lower.y_se[k].hypot(upper.y_se[k]);
        report.max_tol = report.max_tol.max(tol);
        for p in 0..lower.y.n_paths() {
            let gap = upper.y.get(k, p)[0] - lower.y.get(k, p)[0];
            report.min_gap = report.min_gap.min(gap);
            if gap + tol < report.min_slack {
                report.min_slack = gap + tol;
                report.worst_node = k;
                report.worst_path = p;
            }
        }
    }
    report.holds = report.min_slack >= 0.0;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{make_grid, simulate_brownian};

    fn ens(steps: usize, paths: usize) -> PathEnsemble {
        simulate_brownian(make_grid(0.0, 1.0, steps).unwrap(), paths, 1, 9).unwrap()
    }

    fn terminal(e: &PathEnsemble, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..e.n_paths()).map(|p| f(e.w(e.steps(), p)[0])).collect()
    }

    #[test]
    fn constant_solution() {
        let e = ens(20, 2000);
        let gen = ScalarGenerator::pure_quadratic(1, 1.0);
        let xi = vec![0.7; e.n_paths()];
        let sol = solve_scalar(&e, &gen, &DriverField::zeros(&e), &xi, &RegressionBasis::default(), &ScalarOptions::default())
            .unwrap();
        assert!(sol.y.data().iter().all(|v| (v - 0.7).abs() < 1e-12));
        assert!(sol.z.sup_norm() < 1e-12);
    }

    #[test]
    fn deterministic_driver() {
        let e = ens(20, 1000);
        let gen = ScalarGenerator::zero(1, 1.0);
        let xi = vec![0.0; e.n_paths()];
        let sol = solve_scalar(&e, &gen, &DriverField::constant(&e, 1.0), &xi, &RegressionBasis::default(), &ScalarOptions::default())
            .unwrap();
        for k in 0..=20 {
            let t = e.grid().time(k);
            assert!(sol.y.component(k, 0).iter().all(|v| (v - (1.0 - t)).abs() < 1e-12));
        }
        let ch = cole_hopf_solve(&e, 1.0, &DriverField::constant(&e, 1.0), &xi, &RegressionBasis::default()).unwrap();
        assert!((ch.y0() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_is_self_consistent() {
        let e = ens(10, 3000);
        let gen = ScalarGenerator::pure_quadratic(1, 1.0);
        let driver = DriverField::constant(&e, 0.3);
        let xi = terminal(&e, f64::cos);
        let basis = RegressionBasis::polynomial(3);
        let sol = solve_scalar(&e, &gen, &driver, &xi, &basis, &ScalarOptions::default()).unwrap();
        let dt = e.grid().dt();
        for k in 0..10 {
            let next = sol.y.component(k + 1, 0);
            let (lo, hi) = min_max(&next);
            let cont = crate::condexp::fit(&e, k, &next, &basis).unwrap().predict(&e, k).unwrap();
            for p in 0..e.n_paths() {
                let expect = cont[p].clamp(lo, hi) + (gen.eval(0.0, sol.z.get(k, p)) + 0.3) * dt;
                assert!((sol.y.get(k, p)[0] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn growth_violation_is_rejected() {
        let err = ScalarGenerator::new(1, 0.0, 0.1, 1.0, 1.0, |_, z: &[f64]| z[0] * z[0]).unwrap_err();
        assert!(matches!(err, Error::GrowthBound { .. }));
        assert!(ScalarGenerator::new(2, 0.0, 2.0, 1.0, 1.0, |_, z: &[f64]| z[0] * z[0]).is_ok());
    }

    #[test]
    fn divergence_is_detected() {
        let e = ens(10, 500);
        let gen = ScalarGenerator::pure_quadratic(1, 1.0);
        let xi = terminal(&e, f64::cos);
        // a driver of 1e6 at one node blows past the bound computed without it
        let mut g = AdaptedField::zeros(11, 500, 1);
        g.get_mut(5, 0)[0] = 1e6;
        let driver = DriverField::from_field(g).unwrap();
        let opts = ScalarOptions {
            divergence_factor: 1e-9,
            ..Default::default()
        };
        let err = solve_scalar(&e, &gen, &driver, &xi, &RegressionBasis::default(), &opts).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn corrupted_y_is_flagged() {
        let e = ens(10, 4000);
        let xi = vec![0.5; e.n_paths()];
        let d = DriverField::zeros(&e);
        let basis = RegressionBasis::bins(8);
        let y = AdaptedField::zeros(11, 4000, 1).map(|_| 0.5);
        let ok = a_priori_check(&y, &d, &xi, 1.0, &e, &basis).unwrap();
        assert!(ok.holds && (ok.max_ratio - 1.0).abs() < 1e-12);
        let bad = a_priori_check(&y.map(|v| v + 1.0), &d, &xi, 1.0, &e, &basis).unwrap();
        assert!(!bad.holds);
    }
}
