//! Global solution for Lipschitz coupling (`alpha = 0`) by backward
//! stitching of local solves.
//!
//! Segments are solved from `T` backward. Each inner segment takes as
//! terminal data the regression projection of the later segment's `Y` at
//! the seam (clamped to the range of the raw values), and `|Y|` is checked against the time-dependent uniform bound
//! `lambda(t) = (C' + 1) e^{(C'+1)^2 (T-t)/2}`, `C' = max(C, |xi|)`.

use serde::Serialize;

use crate::bmo::{bmo2_norm, IntegrandField};
use crate::condexp::{Projector, RegressionBasis};
use crate::constants::{global_parameters, uniform_bound, z_bmo_bound, StructuralConstants};
use crate::error::{Error, Result};
use crate::field::AdaptedField;
use crate::instances::TerminalFn;
use crate::paths::{evaluate_terminal, simulate_brownian, PathEnsemble, TerminalValues, TimeGrid};
use crate::picard::{distances, local_solve, CouplingClass, Initialization, IterationTrace, LocalOptions, SolveMode, SystemGenerator};

/// Decreasing breakpoints `T = tau_0 > tau_1 > ... > tau_m = t0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StitchPlan {
    pub eta: f64,
    pub breakpoints: Vec<f64>,
    /// Grid nodes of the breakpoints, when snapped.
    pub nodes: Option<Vec<usize>>,
}

impl StitchPlan {
    pub fn n_segments(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// Segment lengths in time order.
    pub fn lengths(&self) -> Vec<f64> {
        self.breakpoints.windows(2).rev().map(|w| w[0] - w[1]).collect()
    }
}

/// Breakpoints spaced by `eta` from `t_end` backward; the earliest segment
/// takes the remainder.
pub fn plan_segments(t0: f64, t_end: f64, eta: f64, floor: f64) -> Result<StitchPlan> {
    if !(t_end > t0) {
        return Err(Error::InvalidArgument(format!("empty interval [{t0}, {t_end}]")));
    }
    if !(eta >= floor) || !(eta > 0.0) {
        return Err(Error::StepBelowFloor { eta, floor });
    }
    let horizon = t_end - t0;
    let full = (horizon / eta * (1.0 + 1e-12)).floor() as usize;
    let mut breakpoints = vec![t_end];
    for k in 1..=full {
        let tau = t_end - k as f64 * eta;
        if tau - t0 > 1e-12 * horizon {
            breakpoints.push(tau);
        }
    }
    breakpoints.push(t0);
    Ok(StitchPlan {
        eta,
        breakpoints,
        nodes: None,
    })
}

/// Plan with the certified step `eta_lambda`.
pub fn plan_stitch(s: &StructuralConstants, floor: f64) -> Result<StitchPlan> {
    let g = global_parameters(s)?;
    if g.log_eta_lambda < floor.ln() {
        return Err(Error::StepBelowFloor {
            eta: g.eta_lambda,
            floor,
        });
    }
    plan_segments(0.0, s.horizon, g.eta_lambda, floor)
}

/// Snaps a plan to the grid: each segment spans `floor(eta / dt)` steps,
/// the earliest one the remainder.
pub fn snap_plan(grid: &TimeGrid, eta: f64) -> Result<StitchPlan> {
    let dt = grid.dt();
    let m = (eta / dt * (1.0 + 1e-9)).floor() as usize;
    if m == 0 {
        return Err(Error::StepBelowFloor { eta, floor: dt });
    }
    let mut nodes = vec![grid.steps()];
    while *nodes.last().unwrap() > m {
        nodes.push(nodes.last().unwrap() - m);
    }
    nodes.push(0);
    Ok(StitchPlan {
        eta,
        breakpoints: nodes.iter().map(|&k| grid.time(k)).collect(),
        nodes: Some(nodes),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GlobalOptions {
    pub mode: SolveMode,
    /// Segment length in working mode; `None` solves in one piece.
    pub segment_length: Option<f64>,
    /// Smallest admissible certified step; defaults to the grid step.
    pub floor: Option<f64>,
    /// Allowance in units of the continuation standard error.
    pub se_factor: f64,
    pub local: LocalOptions,
}

impl Default for GlobalOptions {
    fn default() -> Self {
        Self {
            mode: SolveMode::Working,
            segment_length: None,
            floor: None,
            se_factor: 3.0,
            local: LocalOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeamReport {
    pub node: usize,
    pub time: f64,
    /// `max |Y(tau) - E_tau[Y(tau)]|` over paths and components.
    pub jump_sup: f64,
    /// Root mean square of the same difference.
    pub jump_rms: f64,
    /// `se_factor` times the continuation standard error at the seam.
    pub tolerance: f64,
    pub max_abs_y: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentSummary {
    pub start: usize,
    pub end: usize,
    pub iterations: usize,
    pub residual: f64,
    pub mean_ratio: Option<f64>,
    pub non_contraction: bool,
}

#[derive(Debug, Clone)]
pub struct GlobalSolution {
    pub y: AdaptedField,
    pub z: AdaptedField,
    pub y_se: Vec<f64>,
    pub plan: StitchPlan,
    pub segments: Vec<SegmentSummary>,
    /// Traces in solve order (latest segment first).
    pub traces: Vec<IterationTrace>,
    pub seams: Vec<SeamReport>,
    /// `lambda(t0)`.
    pub lambda: f64,
    /// `lambda(t_k)` per node.
    pub lambda_path: Vec<f64>,
    /// `min_k (lambda(t_k) - max|Y_k|)`.
    pub lambda_slack: f64,
    /// Empirical `||Z . W||_{BMO_2}`.
    pub z_bmo_estimate: f64,
    pub constants: StructuralConstants,
}

impl GlobalSolution {
    pub fn y0(&self) -> Vec<f64> {
        (0..self.y.width()).map(|i| self.y.mean(0, i)).collect()
    }

    /// Largest seam jump over its tolerance (`<= 1` when every seam passes).
    pub fn worst_seam_ratio(&self) -> f64 {
        self.seams
            .iter()
            .map(|s| if s.tolerance > 0.0 { s.jump_sup / s.tolerance } else if s.jump_sup > 0.0 { f64::INFINITY } else { 0.0 })
            .fold(0.0, f64::max)
    }
}

fn check_global(gen: &SystemGenerator) -> Result<()> {
    if gen.constants.alpha != 0.0 || !(gen.class == CouplingClass::Lipschitz || gen.is_decoupled()) {
        return Err(Error::InvalidArgument(
            "global solve needs alpha = 0 and a Lipschitz coupling".into(),
        ));
    }
    Ok(())
}

fn max_abs_rows(y: &AdaptedField, node: usize) -> f64 {
    (0..y.n_paths()).map(|p| crate::scalarq::norm(y.get(node, p))).fold(0.0, f64::max)
}

pub fn global_solve(
    gen: &SystemGenerator,
    xi: &TerminalValues,
    ensemble: &PathEnsemble,
    basis: &RegressionBasis,
    options: &GlobalOptions,
) -> Result<GlobalSolution> {
    check_global(gen)?;
    let grid = ensemble.grid();
    let t_end = grid.t_end();
    let horizon = grid.horizon();
    let s = gen.constants.with_xi_bound(xi.sup_norm()).with_horizon(horizon);
    let floor = options.floor.unwrap_or(grid.dt());
    let plan = match options.mode {
        SolveMode::Certified => {
            let p = plan_stitch(&s, floor)?;
            snap_plan(grid, p.eta)?
        }
        SolveMode::Working => snap_plan(grid, options.segment_length.unwrap_or(horizon))?,
    };
    let lambda_path: Vec<f64> = (0..grid.n_nodes())
        .map(|k| uniform_bound(&s, t_end - grid.time(k)))
        .collect::<Result<_>>()?;
    let nodes = plan.nodes.clone().expect("snapped plan");
    let (n, d, n_paths) = (gen.n(), gen.d(), ensemble.n_paths());
    let mut y = AdaptedField::zeros(grid.n_nodes(), n_paths, n);
    let mut z = AdaptedField::zeros(grid.n_nodes(), n_paths, n * d);
    let mut y_se = vec![0.0; grid.n_nodes()];
    let mut terminal = xi.clone();
    let mut segments = Vec::new();
    let mut traces = Vec::new();
    let mut seams = Vec::new();
    let local = LocalOptions {
        mode: SolveMode::Working,
        ..options.local
    };
    for w in nodes.windows(2) {
        let (end, start) = (w[0], w[1]);
        let window = ensemble.window(start, end)?;
        let (sol, trace) = local_solve(gen, &terminal, &window, basis, &local)?;
        let last_node = if end == grid.steps() { end + 1 } else { end };
        for j in 0..(last_node - start) {
            y.node_mut(start + j).copy_from_slice(sol.y.node(j));
            z.node_mut(start + j).copy_from_slice(sol.z.node(j));
            y_se[start + j] = sol.y_se[j];
        }
        segments.push(SegmentSummary {
            start,
            end,
            iterations: sol.iterations,
            residual: sol.residual,
            mean_ratio: trace.mean_ratio(),
            non_contraction: trace.non_contraction,
        });
        traces.push(trace);
        if start == 0 {
            break;
        }
        // seam: smooth Y(tau) onto the Markov state and hand it down
        let projector = Projector::new(ensemble, start, basis)?;
        let mut values = vec![0.0; n_paths * n];
        let (mut jump_sup, mut jump_sq) = (0.0_f64, 0.0_f64);
        for i in 0..n {
            let raw = sol.y.component(0, i);
            let (lo, hi) = crate::scalarq::min_max(&raw);
            let proj = projector.project(&raw)?.clamp(lo, hi);
            for (p, (r, v)) in raw.iter().zip(&proj.values).enumerate() {
                values[p * n + i] = *v;
                jump_sup = jump_sup.max((r - v).abs());
                jump_sq += (r - v).powi(2);
            }
        }
        terminal = TerminalValues::from_values(n, values)?;
        let max_abs_y = max_abs_rows(&y, start);
        let lambda = lambda_path[start];
        seams.push(SeamReport {
            node: start,
            time: grid.time(start),
            jump_sup,
            jump_rms: (jump_sq / (n * n_paths) as f64).sqrt(),
            tolerance: options.se_factor * sol.y_se[0] + 1e-12 * max_abs_y.max(1.0),
            max_abs_y,
            lambda,
        });
        if terminal.sup_norm() > lambda + options.se_factor * y_se[start] {
            return Err(Error::UniformBound {
                time: grid.time(start),
                max_abs_y: terminal.sup_norm(),
                bound: lambda,
            });
        }
    }
    let lambda_slack = (0..grid.n_nodes())
        .map(|k| lambda_path[k] - max_abs_rows(&y, k))
        .fold(f64::INFINITY, f64::min);
    let z_bmo_estimate = bmo2_norm(ensemble, &IntegrandField::new(z.clone(), d)?, basis)?.norm();
    Ok(GlobalSolution {
        y,
        z,
        y_se,
        plan,
        segments,
        traces,
        seams,
        lambda: lambda_path[0],
        lambda_path,
        lambda_slack,
        z_bmo_estimate,
        constants: s,
    })
}

/// Seed of replicate `r` derived from a base seed.
pub fn replicate_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add((r as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateEstimate {
    pub mean: Vec<f64>,
    /// Standard error of `mean` from the spread across replicates.
    pub se: Vec<f64>,
    pub replicates: Vec<Vec<f64>>,
}

/// `Y_0` from independent ensembles of `n_paths` paths each; the standard
/// error reflects the full Monte Carlo and regression variability.
#[allow(clippy::too_many_arguments)]
pub fn replicate_y0(
    gen: &SystemGenerator,
    terminal: &TerminalFn,
    grid: &TimeGrid,
    n_paths: usize,
    replicates: usize,
    seed: u64,
    basis: &RegressionBasis,
    options: &GlobalOptions,
) -> Result<ReplicateEstimate> {
    if replicates < 2 {
        return Err(Error::InvalidArgument("at least two replicates are needed".into()));
    }
    let mut values = Vec::with_capacity(replicates);
    for r in 0..replicates {
        let ensemble = simulate_brownian(*grid, n_paths, gen.d(), replicate_seed(seed, r))?;
        let xi = evaluate_terminal(&ensemble, gen.n(), |v, out| terminal(v, out))?;
        values.push(global_solve(gen, &xi, &ensemble, basis, options)?.y0());
    }
    let n = gen.n();
    let rf = replicates as f64;
    let mean: Vec<f64> = (0..n).map(|i| values.iter().map(|v| v[i]).sum::<f64>() / rf).collect();
    let se = (0..n)
        .map(|i| (values.iter().map(|v| (v[i] - mean[i]).powi(2)).sum::<f64>() / (rf - 1.0) / rf).sqrt())
        .collect();
    Ok(ReplicateEstimate {
        mean,
        se,
        replicates: values,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ZBmoReport {
    pub estimate: f64,
    pub bound: f64,
    pub slack: f64,
    pub holds: bool,
}

/// Empirical `||Z . W||_{BMO_2}` against
/// `C n phi'(lambda) sqrt(T) + sqrt(2 n phi(|xi|) + 2 C n phi'(lambda)(2 + lambda) T)`.
pub fn z_bmo_report(solution: &GlobalSolution) -> Result<ZBmoReport> {
    let bound = z_bmo_bound(&solution.constants, solution.lambda)?;
    Ok(ZBmoReport {
        estimate: solution.z_bmo_estimate,
        bound,
        slack: bound - solution.z_bmo_estimate,
        holds: solution.z_bmo_estimate <= bound,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    /// Same ensemble, two initializations: `sup |dY|`.
    pub same_seed_y_sup: f64,
    /// Same ensemble, two initializations: `||dZ . W||_{BMO_2}`.
    pub same_seed_z_bmo: f64,
    pub same_seed_tolerance: f64,
    /// Two ensembles: `max_i |Y_0^i - Y_0'^i|`.
    pub cross_seed_y0: f64,
    pub cross_seed_tolerance: f64,
    /// Whether the cross-seed tolerance came from a supplied `Y_0` spread.
    pub cross_seed_sd_supplied: bool,
    pub holds: bool,
}

/// Solves `gen_a` from the conditional-expectation start and `gen_b` from
/// zero on `ensemble_a`, and `gen_b` again on `ensemble_b`. Passes when the
/// pathwise distances are within five times the combined Picard tolerance
/// and the `Y_0` estimates within five combined standard errors.
///
/// `y0_sd` is the per-solve standard deviation of `Y_0` (e.g. from
/// [`replicate_y0`]); without it the projection standard error at node 0 is
/// used, which ignores the regression noise accumulated over the sweep.
#[allow(clippy::too_many_arguments)]
pub fn uniqueness_probe(
    gen_a: &SystemGenerator,
    gen_b: &SystemGenerator,
    xi_a: &TerminalValues,
    xi_b: &TerminalValues,
    ensemble_a: &PathEnsemble,
    ensemble_b: &PathEnsemble,
    basis: &RegressionBasis,
    options: &GlobalOptions,
    y0_sd: Option<&[f64]>,
) -> Result<UniquenessReport> {
    let mut opt_a = *options;
    opt_a.local.init = Initialization::ConditionalExpectation;
    let mut opt_b = *options;
    opt_b.local.init = Initialization::Zero;
    let a = global_solve(gen_a, xi_a, ensemble_a, basis, &opt_a)?;
    let b = global_solve(gen_b, xi_a, ensemble_a, basis, &opt_b)?;
    let c = global_solve(gen_b, xi_b, ensemble_b, basis, &opt_b)?;
    let (dy, dz) = distances(ensemble_a, &a.y, &a.z, &b.y, &b.z, basis)?;
    let same_tol = 5.0 * 2.0 * options.local.tol;
    let (ya, yc) = (a.y0(), c.y0());
    let cross = ya.iter().zip(&yc).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    let cross_tol = match y0_sd {
        Some(sd) => 5.0 * std::f64::consts::SQRT_2 * sd.iter().fold(0.0_f64, |m, v| m.max(*v)),
        None => 5.0 * a.y_se[0].hypot(c.y_se[0]),
    };
    Ok(UniquenessReport {
        same_seed_y_sup: dy,
        same_seed_z_bmo: dz,
        same_seed_tolerance: same_tol,
        cross_seed_y0: cross,
        cross_seed_tolerance: cross_tol,
        cross_seed_sd_supplied: y0_sd.is_some(),
        holds: dy <= same_tol && dz <= same_tol && cross <= cross_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::make_grid;

    #[test]
    fn single_segment_when_horizon_fits() {
        let p = plan_segments(0.0, 1.0, 2.0, 1e-3).unwrap();
        assert_eq!(p.breakpoints, vec![1.0, 0.0]);
    }

    #[test]
    fn remainder_goes_first() {
        let p = plan_segments(0.0, 2.5, 1.0, 1e-3).unwrap();
        assert_eq!(p.n_segments(), 3);
        let l = p.lengths();
        assert!((l[0] - 0.5).abs() < 1e-12 && (l[1] - 1.0).abs() < 1e-12 && (l[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn below_floor_is_rejected() {
        assert!(matches!(plan_segments(0.0, 1.0, 1e-6, 1e-3), Err(Error::StepBelowFloor { .. })));
        let s = StructuralConstants {
            c: 1.0,
            gamma: 1.0,
            alpha: 0.0,
            n: 2,
            d: 1,
            horizon: 1.0,
            xi_bound: 1.0,
        };
        assert!(matches!(plan_stitch(&s, 1e-3), Err(Error::StepBelowFloor { .. })));
    }

    #[test]
    fn snapping_respects_eta() {
        let g = make_grid(0.0, 1.0, 100).unwrap();
        let p = snap_plan(&g, 0.3).unwrap();
        assert_eq!(p.nodes.as_deref(), Some(&[100, 70, 40, 10, 0][..]));
        assert!(p.lengths().iter().all(|l| *l <= 0.3 + 1e-12));
        assert!(matches!(snap_plan(&g, 0.001), Err(Error::StepBelowFloor { .. })));
    }
}
