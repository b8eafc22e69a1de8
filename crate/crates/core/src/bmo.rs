//! BMO norms of stochastic integrals `beta . W` on an ensemble, stochastic
//! exponentials, and empirical checks of the John-Nirenberg, reverse Hölder
//! and change-of-measure inequalities.
//!
//! Suprema over stopping times are taken over grid times only, so every norm
//! here is a lower estimate of the true one. Essential suprema are maxima of
//! regression-smoothed conditional expectations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::condexp::{Projection, Projector, RegressionBasis};
use crate::constants::{capital_phi_excess, find_p_for_threshold, HolderExponent};
use crate::error::{Error, Result};
use crate::field::AdaptedField;
use crate::paths::{PathEnsemble, PathView};
use crate::scalarq::min_max;

/// Integrand of `beta . W`: `rows` stacked row vectors in `R^d` per node and
/// path (left endpoints; the terminal node is unused).
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrandField {
    values: AdaptedField,
    d: usize,
}

impl IntegrandField {
    pub fn new(values: AdaptedField, d: usize) -> Result<Self> {
        if d == 0 || values.width() % d != 0 || values.width() == 0 {
            return Err(Error::InvalidArgument(format!(
                "integrand width {} is not a positive multiple of d = {d}",
                values.width()
            )));
        }
        if let Some((node, path)) = values.first_non_finite() {
            return Err(Error::NonFinite {
                what: "integrand",
                node,
                path,
            });
        }
        Ok(Self { values, d })
    }

    pub fn zeros(ensemble: &PathEnsemble, rows: usize) -> Self {
        let d = ensemble.dim();
        Self {
            values: AdaptedField::zeros(ensemble.grid().n_nodes(), ensemble.n_paths(), rows * d),
            d,
        }
    }

    /// The same row `c` (length `d`) on every node and path.
    pub fn constant(ensemble: &PathEnsemble, c: &[f64]) -> Result<Self> {
        if c.len() != ensemble.dim() {
            return Err(Error::InvalidArgument("constant integrand needs d entries".into()));
        }
        Self::new(
            AdaptedField::from_fn(ensemble.grid().n_nodes(), ensemble.n_paths(), c.len(), |_, _, out| {
                out.copy_from_slice(c)
            }),
            ensemble.dim(),
        )
    }

    /// Adapted integrand from a function of the path history.
    pub fn from_fn<F>(ensemble: &PathEnsemble, rows: usize, f: F) -> Result<Self>
    where
        F: Fn(&PathView<'_>, &mut [f64]),
    {
        let d = ensemble.dim();
        Self::new(
            AdaptedField::from_fn(ensemble.grid().n_nodes(), ensemble.n_paths(), rows * d, |node, path, out| {
                f(&ensemble.view(node, path), out)
            }),
            d,
        )
    }

    /// Random Markov integrand, piecewise in time: on each of four time
    /// blocks, `a + b tanh(W_t) + c 1{W_t > theta}` coordinatewise, with
    /// coefficients uniform in `[-amplitude, amplitude]`.
    pub fn random_markov(ensemble: &PathEnsemble, seed: u64, amplitude: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = ensemble.dim();
        let blocks = 4;
        let coef: Vec<[f64; 4]> = (0..blocks * d)
            .map(|_| {
                [
                    amplitude * rng.gen_range(-1.0..1.0),
                    amplitude * rng.gen_range(-1.0..1.0),
                    amplitude * rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]
            })
            .collect();
        let steps = ensemble.steps();
        Self::from_fn(ensemble, 1, |view, out| {
            let block = (view.node() * blocks / steps.max(1)).min(blocks - 1);
            let w = view.current();
            for j in 0..d {
                let [a, b, c, theta] = coef[block * d + j];
                out[j] = a + b * w[j].tanh() + if w[j] > theta { c } else { 0.0 };
            }
        })
    }

    pub fn values(&self) -> &AdaptedField {
        &self.values
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn rows(&self) -> usize {
        self.values.width() / self.d
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            values: self.values.map(|v| a * v),
            d: self.d,
        }
    }

    pub fn sub(&self, other: &IntegrandField) -> Result<Self> {
        Ok(Self {
            values: self.values.sub(&other.values)?,
            d: self.d,
        })
    }

    fn check(&self, ensemble: &PathEnsemble) -> Result<()> {
        if self.values.nodes() != ensemble.grid().n_nodes()
            || self.values.n_paths() != ensemble.n_paths()
            || self.d != ensemble.dim()
        {
            return Err(Error::InvalidArgument("integrand does not match the ensemble".into()));
        }
        Ok(())
    }

    /// `int_{t_k}^T |beta_s|^2 ds` per node and path.
    pub fn quadratic_variation_tails(&self, dt: f64) -> AdaptedField {
        let (nodes, n_paths) = (self.values.nodes(), self.values.n_paths());
        let mut out = AdaptedField::zeros(nodes, n_paths, 1);
        for k in (0..nodes.saturating_sub(1)).rev() {
            for p in 0..n_paths {
                let sq: f64 = self.values.get(k, p).iter().map(|v| v * v).sum();
                let next = out.get(k + 1, p)[0];
                out.get_mut(k, p)[0] = next + sq * dt;
            }
        }
        out
    }

    fn check_scalar(&self) -> Result<()> {
        if self.rows() != 1 {
            return Err(Error::InvalidArgument(
                "stochastic exponentials need a single-row integrand".into(),
            ));
        }
        Ok(())
    }

    /// `log E(beta . W)_{t_k}^T` per node and path, left-endpoint rule.
    pub fn log_exponential_tails(&self, ensemble: &PathEnsemble) -> Result<AdaptedField> {
        self.check(ensemble)?;
        self.check_scalar()?;
        let (steps, n_paths, dt) = (ensemble.steps(), ensemble.n_paths(), ensemble.grid().dt());
        let mut out = AdaptedField::zeros(steps + 1, n_paths, 1);
        for k in (0..steps).rev() {
            for p in 0..n_paths {
                let b = self.values.get(k, p);
                let dw = ensemble.dw(k, p);
                let inc: f64 = b.iter().zip(dw).map(|(b, w)| b * w - 0.5 * b * b * dt).sum();
                let next = out.get(k + 1, p)[0];
                out.get_mut(k, p)[0] = next + inc;
            }
        }
        Ok(out)
    }
}

/// `log E(beta . W)_s^t` per path for grid nodes `from <= to`.
pub fn log_stochastic_exponential(
    ensemble: &PathEnsemble,
    integrand: &IntegrandField,
    from: usize,
    to: usize,
) -> Result<Vec<f64>> {
    integrand.check(ensemble)?;
    integrand.check_scalar()?;
    if from > to || to > ensemble.steps() {
        return Err(Error::InvalidArgument(format!("bad node range {from}..{to}")));
    }
    let dt = ensemble.grid().dt();
    Ok((0..ensemble.n_paths())
        .map(|p| {
            (from..to)
                .map(|k| {
                    integrand
                        .values
                        .get(k, p)
                        .iter()
                        .zip(ensemble.dw(k, p))
                        .map(|(b, w)| b * w - 0.5 * b * b * dt)
                        .sum::<f64>()
                })
                .sum()
        })
        .collect())
}

/// `E(beta . W)_s^t = exp(int_s^t beta dW - 1/2 int_s^t |beta|^2 ds)` per path.
pub fn stochastic_exponential(
    ensemble: &PathEnsemble,
    integrand: &IntegrandField,
    from: usize,
    to: usize,
) -> Result<Vec<f64>> {
    let logs = log_stochastic_exponential(ensemble, integrand, from, to)?;
    if let Some(&m) = logs.iter().find(|v| **v > 709.0) {
        return Err(Error::Overflow {
            quantity: "stochastic exponential",
            exponent: m,
        });
    }
    Ok(logs.into_iter().map(f64::exp).collect())
}

/// Per-node weights `exp(log_weights - max)`; the shift leaves weighted
/// regressions unchanged.
fn node_weights(log_weights: &AdaptedField, node: usize) -> Vec<f64> {
    let col = log_weights.component(node, 0);
    let m = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    col.iter().map(|v| (v - m).exp()).collect()
}

fn projector(
    ensemble: &PathEnsemble,
    node: usize,
    basis: &RegressionBasis,
    log_weights: Option<&AdaptedField>,
) -> Result<Projector> {
    match log_weights {
        None => Projector::new(ensemble, node, basis),
        Some(lw) => Projector::weighted(ensemble, node, basis, &node_weights(lw, node)),
    }
}

/// Node-wise smoothed essential suprema of `E_t[target_k]`, clamped into the
/// range of the targets. Returns `(sup, se at the sup)` per node `0..steps`.
fn node_sups<F>(
    ensemble: &PathEnsemble,
    basis: &RegressionBasis,
    log_weights: Option<&AdaptedField>,
    mut targets: F,
) -> Result<Vec<(f64, f64)>>
where
    F: FnMut(usize) -> Vec<f64>,
{
    (0..ensemble.steps())
        .map(|k| {
            let t = targets(k);
            if let Some(path) = t.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "conditional expectation target",
                    node: k,
                    path,
                });
            }
            let (lo, hi) = min_max(&t);
            let proj: Projection = projector(ensemble, k, basis, log_weights)?.project(&t)?.clamp(lo, hi);
            let (i, v) = proj
                .values
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
            Ok((v, proj.se[i]))
        })
        .collect()
}

/// Estimate of `||beta . W||^2_{BMO_2}`.
#[derive(Debug, Clone, Serialize)]
pub struct BmoEstimate {
    pub norm_sq: f64,
    pub per_node_ess_sup: Vec<f64>,
    /// Standard error of the estimate at the maximizing node.
    pub se: f64,
    pub settings: String,
}

impl BmoEstimate {
    pub fn norm(&self) -> f64 {
        self.norm_sq.sqrt()
    }
}

fn bmo_from_sups(sups: Vec<(f64, f64)>, basis: &RegressionBasis, weighted: bool) -> BmoEstimate {
    let (mut norm_sq, mut se) = (0.0_f64, 0.0);
    for &(v, s) in &sups {
        if v > norm_sq {
            norm_sq = v;
            se = s;
        }
    }
    BmoEstimate {
        norm_sq,
        per_node_ess_sup: sups.into_iter().map(|(v, _)| v).collect(),
        se,
        settings: format!("{:?}, ridge {:e}, weighted {weighted}", basis.kind, basis.ridge),
    }
}

/// `max_k ess sup E_{t_k}[int_{t_k}^T |beta|^2 ds]`.
pub fn bmo2_norm(ensemble: &PathEnsemble, integrand: &IntegrandField, basis: &RegressionBasis) -> Result<BmoEstimate> {
    bmo2_norm_under(ensemble, integrand, basis, None)
}

/// BMO_2 norm under the measure with density `exp(log_weights[k])` relative
/// to `F_{t_k}` at node `k`; `None` is the reference measure.
pub fn bmo2_norm_under(
    ensemble: &PathEnsemble,
    integrand: &IntegrandField,
    basis: &RegressionBasis,
    log_weights: Option<&AdaptedField>,
) -> Result<BmoEstimate> {
    integrand.check(ensemble)?;
    let qv = integrand.quadratic_variation_tails(ensemble.grid().dt());
    let sups = node_sups(ensemble, basis, log_weights, |k| qv.component(k, 0))?;
    Ok(bmo_from_sups(sups, basis, log_weights.is_some()))
}

/// `||beta . W||_{BMO_p} = max_k ess sup E_{t_k}[(int_{t_k}^T |beta|^2)^{p/2}]^{1/p}`.
pub fn bmo_p_norm(
    ensemble: &PathEnsemble,
    integrand: &IntegrandField,
    p: f64,
    basis: &RegressionBasis,
    log_weights: Option<&AdaptedField>,
) -> Result<f64> {
    integrand.check(ensemble)?;
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("BMO_p needs p >= 1, got {p}")));
    }
    let qv = integrand.quadratic_variation_tails(ensemble.grid().dt());
    // scale each node by its largest <M>_t^T so large p neither overflows nor underflows
    let scales: Vec<f64> = (0..ensemble.steps())
        .map(|k| qv.node(k).iter().copied().fold(0.0, f64::max))
        .collect();
    let sups = node_sups(ensemble, basis, log_weights, |k| {
        let s = scales[k];
        qv.component(k, 0)
            .iter()
            .map(|v| if s > 0.0 { (0.5 * p * (v / s).ln()).exp() } else { 0.0 })
            .collect()
    })?;
    Ok(sups
        .iter()
        .zip(&scales)
        .map(|((v, _), s)| if *s > 0.0 { s.sqrt() * v.powf(1.0 / p) } else { 0.0 })
        .fold(0.0_f64, f64::max))
}

#[derive(Debug, Clone, Serialize)]
pub struct JohnNirenbergReport {
    pub applicable: bool,
    pub norm_sq: f64,
    /// `1 / (1 - norm_sq)`.
    pub bound: f64,
    /// Largest smoothed `E_t[exp(<M>_t^T)]` over nodes and paths.
    pub max_estimate: f64,
    /// `min_k (bound + 3 se_k - estimate_k)`.
    pub worst_slack: f64,
    pub worst_node: usize,
    pub holds: bool,
}

/// `E_t[exp(<M>_t^T)] <= 1 / (1 - ||M||^2_{BMO_2})` at every node, up to
/// three standard errors. Inapplicable when the norm is at least one.
pub fn john_nirenberg_check(
    ensemble: &PathEnsemble,
    integrand: &IntegrandField,
    basis: &RegressionBasis,
) -> Result<JohnNirenbergReport> {
    let est = bmo2_norm(ensemble, integrand, basis)?;
    let mut report = JohnNirenbergReport {
        applicable: est.norm_sq < 1.0,
        norm_sq: est.norm_sq,
        bound: if est.norm_sq < 1.0 { 1.0 / (1.0 - est.norm_sq) } else { f64::INFINITY },
        max_estimate: f64::NAN,
        worst_slack: f64::NAN,
        worst_node: 0,
        holds: false,
    };
    if !report.applicable {
        return Ok(report);
    }
    let qv = integrand.quadratic_variation_tails(ensemble.grid().dt());
    let sups = node_sups(ensemble, basis, None, |k| qv.component(k, 0).iter().map(|v| v.exp()).collect())?;
    report.max_estimate = sups.iter().fold(0.0_f64, |m, (v, _)| m.max(*v));
    report.worst_slack = f64::INFINITY;
    for (k, (v, se)) in sups.iter().enumerate() {
        let slack = report.bound + 3.0 * se - v;
        if slack < report.worst_slack {
            report.worst_slack = slack;
            report.worst_node = k;
        }
    }
    report.holds = report.worst_slack >= 0.0;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReverseHolderReport {
    pub applicable: bool,
    pub p: f64,
    pub norm: f64,
    pub phi_p: f64,
    /// Empirical `c_p`: largest smoothed `E_t[(E(M)_t^T)^p]`.
    pub c_p: f64,
    pub per_node: Vec<f64>,
    /// Standard error at the maximizing node.
    pub se: f64,
    pub finite: bool,
    /// Explicit constant from [`reverse_holder_bound`] at the estimated norm.
    pub bound: f64,
    /// `min_k (bound + 3 se_k - estimate_k)`.
    pub worst_slack: f64,
    pub holds: bool,
}

/// Explicit reverse Hölder constant for `||M||_{BMO_2} = x < Phi(p)`:
/// `2 / (1 - (2p-2)/(2p-1) exp(p^2 (x^2 + 2x)))`. The denominator vanishes
/// exactly at `x = Phi(p)`.
pub fn reverse_holder_bound(p: HolderExponent, x: f64) -> f64 {
    let pp = p.p();
    // (2p-2)/(2p-1) = 2s/(1+2s) with s = p - 1
    let r = 2.0 * p.excess / (1.0 + 2.0 * p.excess);
    let denom = -(r.ln() + pp * pp * (x * x + 2.0 * x)).exp_m1();
    if denom > 0.0 {
        2.0 / denom
    } else {
        f64::INFINITY
    }
}

/// Empirical reverse Hölder constant of `E(M)` for exponent `p`,
/// applicable when `||M||_{BMO_2} < Phi(p)`.
pub fn reverse_holder_check(
    ensemble: &PathEnsemble,
    integrand: &IntegrandField,
    p: HolderExponent,
    basis: &RegressionBasis,
) -> Result<ReverseHolderReport> {
    let est = bmo2_norm(ensemble, integrand, basis)?;
    let phi_p = capital_phi_excess(p.excess)?;
    let mut report = ReverseHolderReport {
        applicable: est.norm() < phi_p,
        p: p.p(),
        norm: est.norm(),
        phi_p,
        c_p: f64::NAN,
        per_node: Vec::new(),
        se: f64::NAN,
        finite: false,
        bound: reverse_holder_bound(p, est.norm()),
        worst_slack: f64::NAN,
        holds: false,
    };
    if !report.applicable {
        return Ok(report);
    }
    let (c_p, per_node, se) = exponential_moment_sup(ensemble, integrand, p.p(), basis)?;
    report.c_p = c_p;
    report.worst_slack = per_node
        .iter()
        .zip(&se)
        .map(|(v, s)| report.bound + 3.0 * s - v)
        .fold(f64::INFINITY, f64::min);
    report.se = se.iter().zip(&per_node).fold((f64::NEG_INFINITY, 0.0), |(bv, bs), (s, v)| {
        if *v > bv {
            (*v, *s)
        } else {
            (bv, bs)
        }
    }).1;
    report.per_node = per_node;
    report.finite = c_p.is_finite();
    report.holds = report.finite && report.worst_slack >= 0.0;
    Ok(report)
}

/// `max_k ess sup E_{t_k}[(E(M)_{t_k}^T)^r]` with the per-node values and
/// their standard errors.
pub fn exponential_moment_sup(
    ensemble: &PathEnsemble,
    integrand: &IntegrandField,
    r: f64,
    basis: &RegressionBasis,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let logs = integrand.log_exponential_tails(ensemble)?;
    let max_exp = logs.data().iter().fold(0.0_f64, |m, v| m.max((r * v).abs()));
    if max_exp > 709.0 {
        return Err(Error::Overflow {
            quantity: "stochastic exponential moment",
            exponent: max_exp,
        });
    }
    let sups = node_sups(ensemble, basis, None, |k| logs.component(k, 0).iter().map(|v| (r * v).exp()).collect())?;
    let best = sups.iter().fold(f64::NEG_INFINITY, |m, (v, _)| m.max(*v));
    let (values, se) = sups.into_iter().unzip();
    Ok((best, values, se))
}

/// Empirical norm-equivalence constants `L_r >= ||M||_{BMO_r} / ||M||_{BMO_2}`.
#[derive(Debug, Clone, Serialize)]
pub struct NormEquivalence {
    pub r: f64,
    pub l: f64,
    pub samples: usize,
}

/// Largest observed `||M||_{BMO_r} / ||M||_{BMO_2}` over a battery of
/// integrands and measures. Diagnostic only, never a certified constant.
pub fn estimate_l_constant(
    ensemble: &PathEnsemble,
    battery: &[(&IntegrandField, Option<&AdaptedField>)],
    r: f64,
    basis: &RegressionBasis,
) -> Result<NormEquivalence> {
    let mut l = 1.0_f64;
    let mut samples = 0;
    for (m, lw) in battery {
        let n2 = bmo2_norm_under(ensemble, m, basis, *lw)?.norm();
        if n2 <= 0.0 {
            continue;
        }
        let nr = bmo_p_norm(ensemble, m, r, basis, *lw)?;
        l = l.max(nr / n2);
        samples += 1;
    }
    Ok(NormEquivalence { r, l, samples })
}

/// Constants of the two-sided estimate under the change of measure.
#[derive(Debug, Clone, Serialize)]
pub struct GirsanovBounds {
    pub k: f64,
    pub p: f64,
    pub q: f64,
    pub c_p: f64,
    pub k_bar: f64,
    pub p_bar: f64,
    pub q_bar: f64,
    pub c_p_bar: f64,
    pub l_2q: f64,
    pub l_2q_bar: f64,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GirsanovReport {
    pub applicable: bool,
    pub norm_n: f64,
    pub norm_m: f64,
    /// `||M - <M, N>||_{BMO_2}` under `dQ = E(N) dP`.
    pub norm_m_tilde: f64,
    pub ratio: f64,
    /// Delta-method standard error of `ratio`.
    pub ratio_se: f64,
    pub within: bool,
}

/// Checks `c1 ||M|| <= ||M~||_{BMO_2(Q)} <= c2 ||M||` with `M~ = M - <M, N>`
/// and `dQ = E(N) dP`.
///
/// Since `<M~> = <M>`, the `Q`-norm is the `BMO_2` norm of the same integrand
/// with conditional expectations weighted by `E(N)_t^T`. The chain of
/// constants: `p` with `Phi(p) > K`, empirical `c_p`, `q = p/(p-1)`,
/// `c2 = L_{2q} c_p^{1/(2p)}`; `K_bar^2 = 2(q-1) log(c_p + 1)`, `p_bar` with
/// `Phi(p_bar) > K_bar`, `c_{p_bar} = sup E_t[(E(N)_t^T)^{1-p_bar}]`,
/// `c1 = 1 / (L_{2 q_bar} c_{p_bar}^{1/(2 p_bar)})`. The `L` constants are
/// estimated on the battery `{M, constant}` under both measures.
pub fn girsanov_bmo_equivalence(
    ensemble: &PathEnsemble,
    m: &IntegrandField,
    n: &IntegrandField,
    k: f64,
    basis: &RegressionBasis,
) -> Result<(GirsanovReport, Option<GirsanovBounds>)> {
    m.check(ensemble)?;
    n.check(ensemble)?;
    let norm_n = bmo2_norm(ensemble, n, basis)?.norm();
    let est_m = bmo2_norm(ensemble, m, basis)?;
    let mut report = GirsanovReport {
        applicable: norm_n <= k,
        norm_n,
        norm_m: est_m.norm(),
        norm_m_tilde: f64::NAN,
        ratio: f64::NAN,
        ratio_se: f64::NAN,
        within: false,
    };
    if !report.applicable {
        return Ok((report, None));
    }
    let log_w = n.log_exponential_tails(ensemble)?;
    let est_t = bmo2_norm_under(ensemble, m, basis, Some(&log_w))?;
    report.norm_m_tilde = est_t.norm();
    report.ratio = report.norm_m_tilde / report.norm_m;
    let rel = |e: &BmoEstimate| if e.norm_sq > 0.0 { e.se / e.norm_sq } else { 0.0 };
    report.ratio_se = 0.5 * report.ratio * rel(&est_t).hypot(rel(&est_m));

    let p = find_p_for_threshold(k)?;
    let (c_p, _, _) = exponential_moment_sup(ensemble, n, p.p(), basis)?;
    let q = p.q();
    let k_bar = (2.0 * (q - 1.0) * (c_p + 1.0).ln()).sqrt();
    let p_bar = find_p_for_threshold(k_bar)?;
    let (c_p_bar, _, _) = exponential_moment_sup(ensemble, n, 1.0 - p_bar.p(), basis)?;
    let q_bar = p_bar.q();

    let constant = IntegrandField::constant(ensemble, &vec![1.0; ensemble.dim()])?;
    let battery: [(&IntegrandField, Option<&AdaptedField>); 4] =
        [(m, None), (m, Some(&log_w)), (&constant, None), (&constant, Some(&log_w))];
    let l_2q = estimate_l_constant(ensemble, &battery, 2.0 * q, basis)?.l;
    let l_2q_bar = estimate_l_constant(ensemble, &battery, 2.0 * q_bar, basis)?.l;
    let c2 = l_2q * c_p.powf(0.5 / p.p());
    let c1 = 1.0 / (l_2q_bar * c_p_bar.powf(0.5 / p_bar.p()));
    let tol = 3.0 * report.ratio_se;
    report.within = report.ratio >= c1 - tol && report.ratio <= c2 + tol;
    Ok((
        report,
        Some(GirsanovBounds {
            k,
            p: p.p(),
            q,
            c_p,
            k_bar,
            p_bar: p_bar.p(),
            q_bar,
            c_p_bar,
            l_2q,
            l_2q_bar,
            c1,
            c2,
        }),
    ))
}
