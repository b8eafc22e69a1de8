//! Picard iteration for the diagonally quadratic system
//! `dY^i = -(f^i(t, Z^i) + h^i(t, Y, Z)) dt + Z^i dW` on a short interval.
//!
//! The solution map freezes `(U, V)` inside `h` and solves the `n`
//! resulting scalar quadratic equations independently.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bmo::{bmo2_norm, IntegrandField};
use crate::condexp::{Projector, RegressionBasis};
use crate::constants::{local_parameters, LocalSolveParameters, StructuralConstants};
use crate::error::{Error, Result};
use crate::field::AdaptedField;
use crate::paths::{PathEnsemble, TerminalValues};
use crate::scalarq::{norm, solve_scalar, DriverField, ScalarGenerator, ScalarOptions};

/// `h(t, y, z, out)`: `y` has `n` entries, `z` is `n x d` row-major.
pub type CouplingFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Growth class of the coupling term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingClass {
    /// `|h| <= C(1 + |y| + |z|^{1+alpha})`,
    /// `|dh| <= C|dy| + C(1 + |z1|^alpha + |z2|^alpha)|dz|`.
    SubQuadratic,
    /// `|h| <= C(1 + |y| + |z|)`, `|dh| <= C(|dy| + |dz|)`.
    Lipschitz,
}

/// Diagonally quadratic generator `g^i = f^i(t, z^i) + h^i(t, y, z)`.
#[derive(Clone)]
pub struct SystemGenerator {
    f: Vec<ScalarGenerator>,
    h: CouplingFn,
    h_is_zero: bool,
    pub class: CouplingClass,
    pub constants: StructuralConstants,
}

impl fmt::Debug for SystemGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemGenerator")
            .field("f", &self.f)
            .field("class", &self.class)
            .field("constants", &self.constants)
            .finish()
    }
}

impl SystemGenerator {
    /// Builds the generator and spot-checks the declared bounds of `h` on
    /// random probes. The `f^i` must declare constants within `(C, gamma)`.
    pub fn new(constants: StructuralConstants, f: Vec<ScalarGenerator>, h: CouplingFn, class: CouplingClass) -> Result<Self> {
        constants.validate()?;
        if class == CouplingClass::Lipschitz && constants.alpha != 0.0 {
            return Err(Error::InvalidArgument("Lipschitz coupling needs alpha = 0".into()));
        }
        if f.len() != constants.n {
            return Err(Error::InvalidArgument(format!("{} components for n = {}", f.len(), constants.n)));
        }
        for (i, fi) in f.iter().enumerate() {
            if fi.d() != constants.d || fi.c > constants.c || fi.gamma > constants.gamma {
                return Err(Error::Component {
                    component: i,
                    source: Box::new(Error::InvalidArgument(format!(
                        "f declares (d={}, C={}, gamma={}) outside (d={}, C={}, gamma={})",
                        fi.d(),
                        fi.c,
                        fi.gamma,
                        constants.d,
                        constants.c,
                        constants.gamma
                    ))),
                });
            }
        }
        let gen = Self {
            f,
            h,
            h_is_zero: false,
            class,
            constants,
        };
        gen.check_coupling(crate::scalarq::GROWTH_PROBES)?;
        Ok(gen)
    }

    /// Decoupled system (`h = 0`).
    pub fn decoupled(constants: StructuralConstants, f: Vec<ScalarGenerator>) -> Result<Self> {
        let mut gen = Self::new(constants, f, Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0)), CouplingClass::SubQuadratic)?;
        gen.h_is_zero = true;
        Ok(gen)
    }

    pub fn n(&self) -> usize {
        self.constants.n
    }

    pub fn d(&self) -> usize {
        self.constants.d
    }

    pub fn f(&self, i: usize) -> &ScalarGenerator {
        &self.f[i]
    }

    pub fn coupling(&self) -> CouplingFn {
        self.h.clone()
    }

    pub fn is_decoupled(&self) -> bool {
        self.h_is_zero
    }

    #[inline]
    pub fn eval_h(&self, t: f64, y: &[f64], z: &[f64], out: &mut [f64]) {
        (self.h)(t, y, z, out)
    }

    /// Same generator with a different coupling term.
    pub fn with_coupling(&self, h: CouplingFn, class: CouplingClass) -> Result<Self> {
        Self::new(self.constants, self.f.clone(), h, class)
    }

    /// Checks the declared bounds of `h` on `probes` seeded random points.
    pub fn check_coupling(&self, probes: usize) -> Result<()> {
        let (n, d) = (self.n(), self.d());
        let (c, a) = (self.constants.c, self.constants.alpha);
        let mut rng = ChaCha8Rng::seed_from_u64(0x0b5e_55ed);
        let scales = [0.01, 0.3, 1.0, 3.0, 30.0];
        let (mut y1, mut y2) = (vec![0.0; n], vec![0.0; n]);
        let (mut z1, mut z2) = (vec![0.0; n * d], vec![0.0; n * d]);
        let (mut h1, mut h2) = (vec![0.0; n], vec![0.0; n]);
        let gauss = |rng: &mut ChaCha8Rng| rng.sample::<f64, _>(StandardNormal);
        for i in 0..probes {
            let s = scales[i % scales.len()];
            let t = self.constants.horizon * rng.gen::<f64>();
            for (u, v) in y1.iter_mut().zip(y2.iter_mut()) {
                *u = s * gauss(&mut rng);
                *v = *u + 0.1 * s * gauss(&mut rng);
            }
            for (u, v) in z1.iter_mut().zip(z2.iter_mut()) {
                *u = s * gauss(&mut rng);
                *v = *u + 0.1 * s * gauss(&mut rng);
            }
            self.eval_h(t, &y1, &z1, &mut h1);
            self.eval_h(t, &y2, &z2, &mut h2);
            let (ny, nz, nz2) = (norm(&y1), norm(&z1), norm(&z2));
            let growth = match self.class {
                CouplingClass::SubQuadratic => c * (1.0 + ny + nz.powf(1.0 + a)),
                CouplingClass::Lipschitz => c * (1.0 + ny + nz),
            };
            let nh = norm(&h1);
            if !nh.is_finite() || nh > growth * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::GrowthBound {
                    probe: format!("t={t:.6}, y={y1:?}, z={z1:?}: |h|={nh:.6e} > {growth:.6e}"),
                });
            }
            let dy: f64 = y1.iter().zip(&y2).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            let dz: f64 = z1.iter().zip(&z2).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            let lip = match self.class {
                CouplingClass::SubQuadratic => c * dy + c * (1.0 + nz.powf(a) + nz2.powf(a)) * dz,
                CouplingClass::Lipschitz => c * (dy + dz),
            };
            let dh: f64 = h1.iter().zip(&h2).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            if dh > lip * (1.0 + 1e-9) + 1e-12 * (1.0 + nh) {
                return Err(Error::GrowthBound {
                    probe: format!(
                        "t={t:.6}, (y, z)={y1:?} {z1:?} vs {y2:?} {z2:?}: |h1-h2|={dh:.6e} > {lip:.6e}"
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Candidate `(U, V)` with its norms.
#[derive(Debug, Clone)]
pub struct BallState {
    /// Width `n`, every node.
    pub u: AdaptedField,
    /// Width `n * d`, left endpoints.
    pub v: AdaptedField,
    /// `||V . W||^2_{BMO_2}`.
    pub v_bmo_sq: f64,
    /// `max |U|` (Euclidean) over nodes and paths.
    pub u_sup: f64,
}

impl BallState {
    pub fn new(ensemble: &PathEnsemble, u: AdaptedField, v: AdaptedField, basis: &RegressionBasis) -> Result<Self> {
        let n_nodes = ensemble.grid().n_nodes();
        if u.nodes() != n_nodes || v.nodes() != n_nodes || u.n_paths() != ensemble.n_paths() {
            return Err(Error::InvalidArgument("ball state does not match the ensemble".into()));
        }
        if v.width() != u.width() * ensemble.dim() {
            return Err(Error::InvalidArgument("V must have n x d columns".into()));
        }
        for (what, f) in [("U", &u), ("V", &v)] {
            if let Some((node, path)) = f.first_non_finite() {
                return Err(Error::NonFinite { what, node, path });
            }
        }
        let v_bmo_sq = bmo2_norm(ensemble, &IntegrandField::new(v.clone(), ensemble.dim())?, basis)?.norm_sq;
        let u_sup = u.sup_norm();
        Ok(Self { u, v, v_bmo_sq, u_sup })
    }

    pub fn zeros(ensemble: &PathEnsemble, n: usize) -> Self {
        let nodes = ensemble.grid().n_nodes();
        Self {
            u: AdaptedField::zeros(nodes, ensemble.n_paths(), n),
            v: AdaptedField::zeros(nodes, ensemble.n_paths(), n * ensemble.dim()),
            v_bmo_sq: 0.0,
            u_sup: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BallMembership {
    pub member: bool,
    /// `A - ||V . W||^2`.
    pub v_margin: f64,
    /// `log(rhs) - 2 n gamma |U| / (1 - alpha)`, the U-inequality in log scale.
    pub u_log_margin: f64,
}

/// Both ball inequalities:
/// `||V . W||^2 <= A` and `exp(2 n gamma |U| / (1 - alpha)) <= C_delta e^{3 n gamma |xi| / (1-alpha)} / (1 - delta A)`.
pub fn ball_membership(state: &BallState, params: &LocalSolveParameters, s: &StructuralConstants) -> BallMembership {
    let v_margin = params.a - state.v_bmo_sq;
    let u_log_margin = params.log_ball_rhs(s) - 2.0 * s.n as f64 * s.gamma * state.u_sup / (1.0 - s.alpha);
    BallMembership {
        member: v_margin >= 0.0 && u_log_margin >= 0.0,
        v_margin,
        u_log_margin,
    }
}

/// `Gamma(U, V)`.
#[derive(Debug, Clone)]
pub struct GammaImage {
    pub y: AdaptedField,
    pub z: AdaptedField,
    /// Largest continuation standard error per node over components.
    pub y_se: Vec<f64>,
    pub cap_hits: usize,
}

/// Solves the `n` scalar equations with drivers `h^i(t, U, V)` frozen.
pub fn gamma_map(
    state: &BallState,
    gen: &SystemGenerator,
    xi: &TerminalValues,
    ensemble: &PathEnsemble,
    basis: &RegressionBasis,
    options: &ScalarOptions,
) -> Result<GammaImage> {
    let (n, d) = (gen.n(), gen.d());
    let grid = ensemble.grid();
    let (nodes, n_paths) = (grid.n_nodes(), ensemble.n_paths());
    if xi.n() != n || xi.n_paths() != n_paths {
        return Err(Error::InvalidArgument("terminal values do not match the system".into()));
    }
    if state.u.width() != n || state.v.width() != n * d || state.u.nodes() != nodes || state.u.n_paths() != n_paths {
        return Err(Error::InvalidArgument("ball state does not match the system".into()));
    }
    let mut drivers = AdaptedField::zeros(nodes, n_paths, n);
    if !gen.is_decoupled() {
        let mut out = vec![0.0; n];
        for k in 0..grid.steps() {
            let t = grid.time(k);
            for p in 0..n_paths {
                gen.eval_h(t, state.u.get(k, p), state.v.get(k, p), &mut out);
                drivers.get_mut(k, p).copy_from_slice(&out);
            }
        }
    }
    let mut y = AdaptedField::zeros(nodes, n_paths, n);
    let mut z = AdaptedField::zeros(nodes, n_paths, n * d);
    let mut y_se = vec![0.0_f64; nodes];
    let mut cap_hits = 0;
    for i in 0..n {
        let wrap = |e: Error| Error::Component {
            component: i,
            source: Box::new(e),
        };
        let driver = DriverField::from_field(drivers.columns(i, 1)).map_err(wrap)?;
        let sol = solve_scalar(ensemble, gen.f(i), &driver, &xi.component(i), basis, options).map_err(wrap)?;
        y.set_columns(i, &sol.y);
        z.set_columns(i * d, &sol.z);
        for (a, b) in y_se.iter_mut().zip(&sol.y_se) {
            *a = a.max(*b);
        }
        cap_hits += sol.cap_hits;
    }
    Ok(GammaImage { y, z, y_se, cap_hits })
}

/// `(sup |Y1 - Y2|, ||(Z1 - Z2) . W||_{BMO_2})`.
pub fn distances(
    ensemble: &PathEnsemble,
    y1: &AdaptedField,
    z1: &AdaptedField,
    y2: &AdaptedField,
    z2: &AdaptedField,
    basis: &RegressionBasis,
) -> Result<(f64, f64)> {
    let dy = y1.sub(y2)?.sup_norm();
    let dz = bmo2_norm(ensemble, &IntegrandField::new(z1.sub(z2)?, ensemble.dim())?, basis)?.norm();
    Ok((dy, dz))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    /// The interval must not exceed the certified `epsilon`.
    Certified,
    /// Any interval; contraction is measured, not certified.
    Working,
}

/// Starting point of the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Initialization {
    /// `U_t = E_t[xi]` by regression, `V = 0`.
    ConditionalExpectation,
    /// `U = 0`, `V = 0`.
    Zero,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LocalOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub mode: SolveMode,
    pub init: Initialization,
    pub scalar: ScalarOptions,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 50,
            mode: SolveMode::Working,
            init: Initialization::ConditionalExpectation,
            scalar: ScalarOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub y_dist_sup: f64,
    pub z_dist_bmo: f64,
    /// `max(dy, dz)` over the previous iteration's value; from iteration 2.
    pub ratio: Option<f64>,
    /// Membership of the new iterate in the certified ball, when the
    /// certified constants are finite.
    pub in_ball: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct IterationTrace {
    pub rows: Vec<TraceRow>,
    /// Some ratio was at least one.
    pub non_contraction: bool,
}

impl IterationTrace {
    /// Geometric mean of the recorded ratios.
    pub fn mean_ratio(&self) -> Option<f64> {
        let r: Vec<f64> = self.rows.iter().filter_map(|r| r.ratio).filter(|r| *r > 0.0).collect();
        if r.is_empty() {
            None
        } else {
            Some((r.iter().map(|v| v.ln()).sum::<f64>() / r.len() as f64).exp())
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,y_dist_sup,z_dist_bmo,ratio,in_ball")?;
        for r in &self.rows {
            let ratio = r.ratio.map_or(String::new(), |v| format!("{v:.10e}"));
            let in_ball = r.in_ball.map_or(String::new(), |v| v.to_string());
            writeln!(out, "{},{:.10e},{:.10e},{},{}", r.iteration, r.y_dist_sup, r.z_dist_bmo, ratio, in_ball)?;
        }
        Ok(())
    }
}

/// Solution of the system on the ensemble's grid.
#[derive(Debug, Clone)]
pub struct BsdeSolution {
    pub y: AdaptedField,
    pub z: AdaptedField,
    pub y_se: Vec<f64>,
    pub iterations: usize,
    /// `max` of both distances between the solution and its image.
    pub residual: f64,
    pub cap_hits: usize,
}

impl BsdeSolution {
    pub fn y0(&self) -> Vec<f64> {
        (0..self.y.width()).map(|i| self.y.mean(0, i)).collect()
    }
}

/// Regression extension `U_t = E_t[xi]`, `U_T = xi`.
pub fn conditional_extension(ensemble: &PathEnsemble, xi: &TerminalValues, basis: &RegressionBasis) -> Result<AdaptedField> {
    let (steps, n) = (ensemble.steps(), xi.n());
    let mut u = AdaptedField::zeros(steps + 1, ensemble.n_paths(), n);
    let comps: Vec<Vec<f64>> = (0..n).map(|i| xi.component(i)).collect();
    for (i, c) in comps.iter().enumerate() {
        u.set_component(steps, i, c);
    }
    for k in 0..steps {
        let proj = Projector::new(ensemble, k, basis)?;
        for (i, c) in comps.iter().enumerate() {
            u.set_component(k, i, &proj.project(c)?.values);
        }
    }
    Ok(u)
}

/// Certified constants for the realized terminal bound, when finite.
pub fn certified_parameters(gen: &SystemGenerator, xi: &TerminalValues, horizon: f64) -> Result<LocalSolveParameters> {
    local_parameters(&gen.constants.with_xi_bound(xi.sup_norm()).with_horizon(horizon))
}

/// Picard iteration `state_{k+1} = Gamma(state_k)` until
/// `max(sup |dY|, ||dZ . W||_{BMO_2}) <= tol`.
pub fn local_solve(
    gen: &SystemGenerator,
    xi: &TerminalValues,
    ensemble: &PathEnsemble,
    basis: &RegressionBasis,
    options: &LocalOptions,
) -> Result<(BsdeSolution, IterationTrace)> {
    let horizon = ensemble.grid().horizon();
    let params = certified_parameters(gen, xi, gen.constants.horizon).ok();
    if options.mode == SolveMode::Certified {
        let p = certified_parameters(gen, xi, gen.constants.horizon)?;
        if horizon > p.epsilon {
            return Err(Error::InvalidArgument(format!(
                "interval {horizon:.3e} exceeds the certified epsilon {:.3e}; use working mode",
                p.epsilon
            )));
        }
    }
    let s = gen.constants.with_xi_bound(xi.sup_norm());
    let n = gen.n();
    let mut state = match options.init {
        Initialization::ConditionalExpectation => {
            let u = conditional_extension(ensemble, xi, basis)?;
            let v = AdaptedField::zeros(u.nodes(), u.n_paths(), n * gen.d());
            BallState::new(ensemble, u, v, basis)?
        }
        Initialization::Zero => BallState::zeros(ensemble, n),
    };
    let mut trace = IterationTrace::default();
    let mut prev: Option<f64> = None;
    let mut history = Vec::new();
    for iteration in 1..=options.max_iter {
        let image = gamma_map(&state, gen, xi, ensemble, basis, &options.scalar)?;
        let (dy, dz) = distances(ensemble, &image.y, &image.z, &state.u, &state.v, basis)?;
        let next = BallState::new(ensemble, image.y, image.z, basis)?;
        let dist = dy.max(dz);
        let ratio = prev.filter(|p| *p > 0.0).map(|p| dist / p);
        if ratio.is_some_and(|r| r >= 1.0) {
            trace.non_contraction = true;
        }
        trace.rows.push(TraceRow {
            iteration,
            y_dist_sup: dy,
            z_dist_bmo: dz,
            ratio,
            in_ball: params.as_ref().map(|p| ball_membership(&next, p, &s).member),
        });
        history.push(dist);
        prev = Some(dist);
        state = next;
        if dist <= options.tol {
            let check = gamma_map(&state, gen, xi, ensemble, basis, &options.scalar)?;
            let (ry, rz) = distances(ensemble, &check.y, &check.z, &state.u, &state.v, basis)?;
            return Ok((
                BsdeSolution {
                    y: state.u,
                    z: state.v,
                    y_se: image.y_se,
                    iterations: iteration,
                    residual: ry.max(rz),
                    cap_hits: image.cap_hits,
                },
                trace,
            ));
        }
    }
    Err(Error::NotConverged {
        iterations: options.max_iter,
        tol: options.tol,
        last: prev.unwrap_or(f64::NAN),
        distances: history,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    pub identity_input: bool,
    pub input_distance: f64,
    pub output_distance: f64,
    pub ratio: Option<f64>,
    /// `||beta(i) . W||^2_{BMO_2}` for the difference-quotient integrands
    /// `beta(i) = (f^i(Z^i) - f^i(Z~^i)) (Z^i - Z~^i) / |Z^i - Z~^i|^2`.
    pub beta_bmo_sq: Vec<f64>,
}

/// `d(Gamma(A), Gamma(B)) / d(A, B)` with `d^2 = sup |dY|^2 + ||dZ . W||^2_{BMO_2}`.
pub fn contraction_probe(
    a: &BallState,
    b: &BallState,
    gen: &SystemGenerator,
    xi: &TerminalValues,
    ensemble: &PathEnsemble,
    basis: &RegressionBasis,
    options: &ScalarOptions,
) -> Result<ContractionReport> {
    let (iy, iz) = distances(ensemble, &a.u, &a.v, &b.u, &b.v, basis)?;
    let input = iy.hypot(iz);
    let ga = gamma_map(a, gen, xi, ensemble, basis, options)?;
    let gb = gamma_map(b, gen, xi, ensemble, basis, options)?;
    let (oy, oz) = distances(ensemble, &ga.y, &ga.z, &gb.y, &gb.z, basis)?;
    let output = oy.hypot(oz);
    let (n, d) = (gen.n(), gen.d());
    let grid = ensemble.grid();
    let mut beta_bmo_sq = Vec::with_capacity(n);
    for i in 0..n {
        let f = gen.f(i);
        let field = AdaptedField::from_fn(grid.n_nodes(), ensemble.n_paths(), d, |k, p, out| {
            if k == grid.steps() {
                return;
            }
            let z1 = &ga.z.get(k, p)[i * d..(i + 1) * d];
            let z2 = &gb.z.get(k, p)[i * d..(i + 1) * d];
            let diff: Vec<f64> = z1.iter().zip(z2).map(|(u, v)| u - v).collect();
            let nn: f64 = diff.iter().map(|v| v * v).sum();
            if nn > 0.0 {
                let t = grid.time(k);
                let q = (f.eval(t, z1) - f.eval(t, z2)) / nn;
                for (o, v) in out.iter_mut().zip(&diff) {
                    *o = q * v;
                }
            }
        });
        beta_bmo_sq.push(bmo2_norm(ensemble, &IntegrandField::new(field, d)?, basis)?.norm_sq);
    }
    Ok(ContractionReport {
        identity_input: input == 0.0,
        input_distance: input,
        output_distance: output,
        ratio: (input > 0.0).then(|| output / input),
        beta_bmo_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{evaluate_terminal, make_grid, simulate_brownian};

    fn constants(n: usize) -> StructuralConstants {
        StructuralConstants {
            c: 1.0,
            gamma: 1.0,
            alpha: 0.0,
            n,
            d: 1,
            horizon: 0.5,
            xi_bound: 0.0,
        }
    }

    #[test]
    fn coupling_growth_is_checked() {
        let f = vec![ScalarGenerator::pure_quadratic(1, 1.0); 2];
        let bad: CouplingFn = Arc::new(|_, y: &[f64], _, out: &mut [f64]| {
            out[0] = 3.0 * y[1];
            out[1] = 0.0;
        });
        let err = SystemGenerator::new(constants(2), f.clone(), bad, CouplingClass::SubQuadratic).unwrap_err();
        assert!(matches!(err, Error::GrowthBound { .. }));
        let good: CouplingFn = Arc::new(|_, y: &[f64], _, out: &mut [f64]| {
            out[0] = 0.5 * y[1].sin();
            out[1] = 0.5 * y[0].cos();
        });
        assert!(SystemGenerator::new(constants(2), f, good, CouplingClass::Lipschitz).is_ok());
    }

    #[test]
    fn constant_terminal_is_a_fixed_point() {
        let e = simulate_brownian(make_grid(0.0, 0.5, 10).unwrap(), 500, 1, 1).unwrap();
        let gen = SystemGenerator::decoupled(constants(2), vec![ScalarGenerator::pure_quadratic(1, 1.0); 2]).unwrap();
        let xi = evaluate_terminal(&e, 2, |_, out| {
            out[0] = 0.3;
            out[1] = -0.2;
        })
        .unwrap();
        let (sol, trace) = local_solve(&gen, &xi, &e, &RegressionBasis::default(), &LocalOptions::default()).unwrap();
        assert!(sol.iterations <= 2);
        assert!(trace.rows[0].y_dist_sup < 1e-12);
        assert!(sol.y.component(0, 0).iter().all(|v| (v - 0.3).abs() < 1e-12));
        assert!(sol.z.sup_norm() < 1e-12);
    }

    #[test]
    fn ball_margins() {
        let s = constants(1);
        let p = local_parameters(&s).unwrap();
        let e = simulate_brownian(make_grid(0.0, 0.5, 4).unwrap(), 10, 1, 1).unwrap();
        let mut state = BallState::zeros(&e, 1);
        let m = ball_membership(&state, &p, &s);
        assert!(m.member && m.u_log_margin > 0.0);
        state.v_bmo_sq = 2.0 * p.a;
        let m = ball_membership(&state, &p, &s);
        assert!(!m.member);
        assert!((m.v_margin + p.a).abs() < 1e-12);
    }
}
