//! Closed-form constants of the local and global existence arguments.
//!
//! Everything that involves products of large exponentials is evaluated in
//! log space; `C_delta` alone can exceed `1e4` for unit parameters and
//! overflows `f64` long before the quantities built from it do.

use serde::Serialize;

use crate::error::{Error, Result};

const MAX_EXP: f64 = 709.0;

/// Structural constants of the generator and terminal condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StructuralConstants {
    /// Growth / Lipschitz constant `C`.
    pub c: f64,
    /// Quadratic growth coefficient `gamma`.
    pub gamma: f64,
    /// Sub-quadratic exponent of the coupling term, in `[0, 1)`.
    pub alpha: f64,
    /// System dimension.
    pub n: usize,
    /// Brownian dimension.
    pub d: usize,
    /// Horizon `T`.
    pub horizon: f64,
    /// `|xi|_inf`.
    pub xi_bound: f64,
}

impl StructuralConstants {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("structural constants: {what}")));
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad("C must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be positive");
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1)");
        }
        if self.n == 0 || self.d == 0 {
            return bad("n and d must be >= 1");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("T must be positive");
        }
        if !(self.xi_bound >= 0.0 && self.xi_bound.is_finite()) {
            return bad("|xi|_inf must be finite and nonnegative");
        }
        Ok(())
    }

    pub fn with_xi_bound(mut self, xi_bound: f64) -> Self {
        self.xi_bound = xi_bound;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }
}

fn checked_exp(quantity: &'static str, exponent: f64) -> Result<f64> {
    if exponent > MAX_EXP {
        Err(Error::Overflow { quantity, exponent })
    } else {
        Ok(exponent.exp())
    }
}

/// `phi(y) = (e^{gamma|y|} - gamma|y| - 1) / gamma^2`.
pub fn phi(y: f64, gamma: f64) -> Result<f64> {
    let x = gamma * y.abs();
    checked_exp("phi", x)?;
    let v = if x < 1e-2 {
        // e^x - 1 - x loses digits to cancellation here
        x * x * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x * (1.0 / 120.0 + x / 720.0))))
    } else {
        x.exp_m1() - x
    };
    Ok(v / (gamma * gamma))
}

/// `phi'(y) = (e^{gamma|y|} - 1) sgn(y) / gamma`.
pub fn phi_prime(y: f64, gamma: f64) -> Result<f64> {
    let x = gamma * y.abs();
    checked_exp("phi'", x)?;
    Ok((x.exp_m1() / gamma).copysign(y))
}

/// `phi''(y) = e^{gamma|y|}`.
pub fn phi_double_prime(y: f64, gamma: f64) -> Result<f64> {
    checked_exp("phi''", gamma * y.abs())
}

/// `Phi(x) = sqrt(1 + x^{-2} log((2x-1)/(2(x-1)))) - 1` for `x > 1`.
pub fn capital_phi(x: f64) -> Result<f64> {
    if !(x > 1.0) {
        return Err(Error::InvalidArgument(format!("Phi needs x > 1, got {x}")));
    }
    capital_phi_excess(x - 1.0)
}

/// `Phi(1 + s)`, usable when `s` is below the resolution of `1 + s`.
pub fn capital_phi_excess(s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::InvalidArgument(format!("Phi needs x > 1, got excess {s}")));
    }
    let x = 1.0 + s;
    // (2x-1)/(2(x-1)) = 1 + 1/(2s)
    let log_term = (0.5 / s).ln_1p();
    let u = log_term / (x * x);
    Ok(u / ((1.0 + u).sqrt() + 1.0))
}

/// Reverse-Hölder exponent `p = 1 + excess` with its conjugate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderExponent {
    pub excess: f64,
}

impl HolderExponent {
    pub fn from_p(p: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidArgument(format!("exponent must exceed 1, got {p}")));
        }
        Ok(Self { excess: p - 1.0 })
    }

    pub fn p(&self) -> f64 {
        1.0 + self.excess
    }

    /// Conjugate exponent `q = p / (p - 1)`.
    pub fn q(&self) -> f64 {
        1.0 + 1.0 / self.excess
    }

    pub fn conjugate(&self) -> HolderExponent {
        HolderExponent {
            excess: 1.0 / self.excess,
        }
    }

    pub fn phi(&self) -> f64 {
        capital_phi_excess(self.excess).expect("excess is positive")
    }
}

/// Relative margin above the threshold used by [`find_p_for_threshold`].
pub const THRESHOLD_MARGIN: f64 = 1e-3;

/// Returns `p > 1` with `Phi(p) > k`: the bisection root of
/// `Phi(p) = k (1 + 1e-3)`.
pub fn find_p_for_threshold(k: f64) -> Result<HolderExponent> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {k}")));
    }
    let target = k * (1.0 + THRESHOLD_MARGIN);
    let f = |log_s: f64| capital_phi_excess(log_s.exp()).expect("positive excess") - target;
    let (mut lo, mut hi) = (-690.0_f64, 230.0_f64);
    if f(lo) <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "threshold {k} exceeds the largest representable Phi value"
        )));
    }
    if f(hi) > 0.0 {
        return Ok(HolderExponent { excess: hi.exp() });
    }
    // Phi decreases in s: f(lo) > 0 >= f(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    // lo keeps Phi(p) > target > k
    Ok(HolderExponent { excess: lo.exp() })
}

/// Which cap determines the certified local interval length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonBinding {
    LipschitzCap,
    ExponentialCap,
    Override,
}

/// Constants of the local existence argument on `[T - epsilon, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalSolveParameters {
    pub c_delta: f64,
    pub log_c_delta: f64,
    pub beta: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub log_epsilon: f64,
    pub epsilon_lipschitz_cap: f64,
    pub log_epsilon_exponential_cap: f64,
    pub epsilon_binding: EpsilonBinding,
    /// Discriminant of the quadratic equation for `A`.
    pub discriminant: f64,
    pub a: f64,
    pub one_minus_delta_a: f64,
    /// `C n gamma^{-2} e^{gamma |xi|}`.
    pub k_xi: f64,
    /// `mu C_delta e^{3 n gamma |xi| / (1 - alpha)} epsilon`, the product
    /// formed in log space.
    pub m_epsilon: f64,
    pub balance_lhs: f64,
    pub balance_rhs: f64,
    pub balance_rel_error: f64,
    pub quadratic_rel_residual: f64,
}

impl LocalSolveParameters {
    /// Log of the ball's right-hand side
    /// `C_delta e^{3 n gamma |xi| / (1-alpha)} / (1 - delta A)`.
    pub fn log_ball_rhs(&self, s: &StructuralConstants) -> f64 {
        self.log_c_delta + 3.0 * s.n as f64 * s.gamma * s.xi_bound / (1.0 - s.alpha)
            - self.one_minus_delta_a.ln()
    }

    /// Largest `|U|_inf` allowed in the ball.
    pub fn u_sup_bound(&self, s: &StructuralConstants) -> f64 {
        (1.0 - s.alpha) * self.log_ball_rhs(s) / (2.0 * s.n as f64 * s.gamma)
    }

    /// Bound on `|Y|_inf` of an image under the solution map: from
    /// `e^{3 gamma |Y| / (1-alpha)} <= (ball rhs)^{3/2}`.
    pub fn step2_y_bound(&self, s: &StructuralConstants) -> f64 {
        (1.0 - s.alpha) * self.log_ball_rhs(s) / (2.0 * s.gamma)
    }
}

struct LogPieces {
    beta: f64,
    mu1: f64,
    mu2: f64,
    mu: f64,
    log_delta: f64,
    log_c_delta: f64,
    log_e3: f64,
    lipschitz_cap: f64,
    log_exp_cap: f64,
}

fn log_pieces(s: &StructuralConstants) -> LogPieces {
    let (c, g, a, n, t, xi) = (s.c, s.gamma, s.alpha, s.n as f64, s.horizon, s.xi_bound);
    let beta = 0.5 * (1.0 - a) * c.powf(2.0 / (1.0 - a)) * (2.0 * (1.0 + a)).powf((1.0 + a) / (1.0 - a));
    let mu1 = 1.0 - a + (1.0 - a).powi(2) / ((1.0 + a) * g);
    let mu2 = 1.0 + a + (1.0 - a) / g;
    let mu = (beta + c * mu1) * g.powf(2.0 / (a - 1.0)) + c * mu2;
    let log_delta = 2.0 * g.ln() - g * xi - (8.0 * c * n).ln();
    let n_over_delta_pow = ((1.0 + a) / 2.0 * (n.ln() - log_delta)).exp();
    let log_c_delta = 6.0 / (1.0 - a) * g * c * t + 1.5 * g * c * n_over_delta_pow * t;
    let log_e3 = 3.0 * n * g * xi / (1.0 - a);
    let lipschitz_cap = 1.0 / (3.0 * n * c);
    let log_exp_cap = (c * n / (8.0 * mu)).ln() - 2.0 * g.ln() - log_c_delta
        + (1.0 - 3.0 * n / (1.0 - a)) * g * xi;
    LogPieces {
        beta,
        mu1,
        mu2,
        mu,
        log_delta,
        log_c_delta,
        log_e3,
        lipschitz_cap,
        log_exp_cap,
    }
}

/// Log of the certified interval length, without overflow checks on
/// `C_delta`. Used where only `epsilon` is needed (e.g. the stitching step).
pub fn certified_log_epsilon(s: &StructuralConstants) -> Result<f64> {
    s.validate()?;
    let p = log_pieces(s);
    Ok(p.lipschitz_cap.ln().min(p.log_exp_cap))
}

/// The local constants ledger at the maximal admissible `epsilon`.
pub fn local_parameters(s: &StructuralConstants) -> Result<LocalSolveParameters> {
    local_parameters_with(s, None)
}

/// The local constants ledger, optionally at a smaller `epsilon`.
pub fn local_parameters_with(
    s: &StructuralConstants,
    epsilon_override: Option<f64>,
) -> Result<LocalSolveParameters> {
    s.validate()?;
    let p = log_pieces(s);
    let c_delta = checked_exp("C_delta", p.log_c_delta)?;
    let delta = p.log_delta.exp();
    let (log_epsilon, binding) = match epsilon_override {
        Some(eps) => {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
            }
            (eps.ln(), EpsilonBinding::Override)
        }
        None if p.lipschitz_cap.ln() <= p.log_exp_cap => (p.lipschitz_cap.ln(), EpsilonBinding::LipschitzCap),
        None => (p.log_exp_cap, EpsilonBinding::ExponentialCap),
    };
    let epsilon = log_epsilon.exp();
    if epsilon > p.lipschitz_cap * (1.0 + 1e-15) {
        return Err(Error::Invariant {
            inequality: "epsilon <= 1/(3nC)",
            value: epsilon,
        });
    }

    let k_xi = (s.c * s.n as f64 / (s.gamma * s.gamma)).ln() + s.gamma * s.xi_bound;
    let k_xi = k_xi.exp();
    let four_k_delta = 4.0 * (k_xi.ln() + p.log_delta).exp();
    let log_m_eps = p.mu.ln() + p.log_c_delta + p.log_e3 + log_epsilon;
    let m_epsilon = log_m_eps.exp();
    let sixteen_delta_m_eps = (16f64.ln() + p.log_delta + log_m_eps).exp();
    let lead = (1.0 - four_k_delta).powi(2);
    let mut discriminant = lead - sixteen_delta_m_eps;
    if discriminant < 0.0 {
        if discriminant > -1e-12 * lead && binding == EpsilonBinding::ExponentialCap {
            // the exponential cap is exactly the root of the discriminant
            discriminant = 0.0;
        } else {
            return Err(Error::Invariant {
                inequality: "Delta >= 0",
                value: discriminant,
            });
        }
    }
    let a = (1.0 + four_k_delta - discriminant.sqrt()) / (2.0 * delta);
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Invariant {
            inequality: "A > 0",
            value: a,
        });
    }
    let one_minus_delta_a = 1.0 - delta * a;
    if !(one_minus_delta_a > 0.0) {
        return Err(Error::Invariant {
            inequality: "1 - delta A > 0",
            value: one_minus_delta_a,
        });
    }
    let balance_lhs = k_xi + m_epsilon / one_minus_delta_a + 0.25 * a;
    let balance_rhs = 0.5 * a;
    let balance_rel_error = (balance_lhs - balance_rhs).abs() / balance_rhs.abs();
    if balance_rel_error > 1e-10 {
        return Err(Error::Invariant {
            inequality: "balance identity",
            value: balance_rel_error,
        });
    }
    let terms = [
        delta * a * a,
        (1.0 + four_k_delta) * a,
        4.0 * k_xi,
        4.0 * m_epsilon,
    ];
    let scale = terms.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
    let quadratic_rel_residual = (terms[0] - terms[1] + terms[2] + terms[3]).abs() / scale;
    if quadratic_rel_residual > 1e-10 {
        return Err(Error::Invariant {
            inequality: "A solves its quadratic equation",
            value: quadratic_rel_residual,
        });
    }

    Ok(LocalSolveParameters {
        c_delta,
        log_c_delta: p.log_c_delta,
        beta: p.beta,
        mu1: p.mu1,
        mu2: p.mu2,
        mu: p.mu,
        delta,
        epsilon,
        log_epsilon,
        epsilon_lipschitz_cap: p.lipschitz_cap,
        log_epsilon_exponential_cap: p.log_exp_cap,
        epsilon_binding: binding,
        discriminant,
        a,
        one_minus_delta_a,
        k_xi,
        m_epsilon,
        balance_lhs,
        balance_rhs,
        balance_rel_error,
        quadratic_rel_residual,
    })
}

/// `delta_alpha = (1/2) gamma^{2/(1-alpha)} delta^{-(1+alpha)/(1-alpha)} (1 - alpha)`.
pub fn delta_alpha(gamma: f64, delta: f64, alpha: f64) -> Result<f64> {
    if !(gamma > 0.0 && delta > 0.0) {
        return Err(Error::InvalidArgument("gamma and delta must be positive".into()));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    let log = 2.0 / (1.0 - alpha) * gamma.ln() - (1.0 + alpha) / (1.0 - alpha) * delta.ln()
        + (0.5 * (1.0 - alpha)).ln();
    checked_exp("delta_alpha", log)
}

/// Constants of the global (stitched) argument for `alpha = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GlobalSolveParameters {
    /// Uniform bound on `|Y|`.
    pub lambda: f64,
    /// The constant entering `lambda`: `max(C, |xi|_inf)`.
    pub c_effective: f64,
    /// Certified step length; may underflow to zero, see `log_eta_lambda`.
    pub eta_lambda: f64,
    pub log_eta_lambda: f64,
    /// Bound on `||Z.W||_BMO2`; `+inf` when `phi'(lambda)` overflows.
    pub z_bmo_bound: f64,
}

/// `lambda = (C' + 1) e^{(C'+1)^2 (T - t) / 2}` with `C' = max(C, |xi|_inf)`.
pub fn uniform_bound(s: &StructuralConstants, time_to_go: f64) -> Result<f64> {
    let c = s.c.max(s.xi_bound) + 1.0;
    Ok(c * checked_exp("lambda", 0.5 * c * c * time_to_go)?)
}

/// `C n phi'(lambda) sqrt(T) + sqrt(2 n phi(|xi|) + 2 C n phi'(lambda)(2 + lambda) T)`.
pub fn z_bmo_bound(s: &StructuralConstants, lambda: f64) -> Result<f64> {
    let n = s.n as f64;
    let pp = match phi_prime(lambda, s.gamma) {
        Ok(v) => v,
        Err(Error::Overflow { .. }) => return Ok(f64::INFINITY),
        Err(e) => return Err(e),
    };
    let phi_xi = phi(s.xi_bound, s.gamma)?;
    Ok(s.c * n * pp * s.horizon.sqrt()
        + (2.0 * n * phi_xi + 2.0 * s.c * n * pp * (2.0 + lambda) * s.horizon).sqrt())
}

pub fn global_parameters(s: &StructuralConstants) -> Result<GlobalSolveParameters> {
    s.validate()?;
    if s.alpha != 0.0 {
        return Err(Error::InvalidArgument(
            "global constants need alpha = 0 (Lipschitz coupling)".into(),
        ));
    }
    let lambda = uniform_bound(s, s.horizon)?;
    let log_eta_lambda = certified_log_epsilon(&s.with_xi_bound(lambda))?;
    Ok(GlobalSolveParameters {
        lambda,
        c_effective: s.c.max(s.xi_bound),
        eta_lambda: log_eta_lambda.exp(),
        log_eta_lambda,
        z_bmo_bound: z_bmo_bound(s, lambda)?,
    })
}
