//! Property batteries for the scalar and BMO estimates.
//!
//! Each battery builds its own ensemble from [`BatterySettings`] and returns
//! a serializable report whose `holds` flag aggregates every case.

use qbsde::bmo::{
    bmo2_norm, girsanov_bmo_equivalence, john_nirenberg_check, reverse_holder_bound, reverse_holder_check,
    GirsanovBounds, GirsanovReport, IntegrandField, JohnNirenbergReport, ReverseHolderReport,
};
use qbsde::condexp::RegressionBasis;
use qbsde::constants::find_p_for_threshold;
use qbsde::paths::{make_grid, simulate_brownian, PathEnsemble};
use qbsde::scalarq::{
    a_priori_check, check_ordering, comparison_check, solve_scalar, AprioriReport, ComparisonReport, DriverField,
    ScalarGenerator, ScalarOptions, ZCap,
};
use qbsde::AdaptedField;
use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BatterySettings {
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
}

impl BatterySettings {
    fn ensemble(&self) -> Result<PathEnsemble> {
        Ok(simulate_brownian(make_grid(0.0, self.horizon, self.steps)?, self.paths, 1, self.seed)?)
    }
}

fn terminal(e: &PathEnsemble, f: impl Fn(f64) -> f64) -> Vec<f64> {
    (0..e.n_paths()).map(|p| f(e.w(e.steps(), p)[0])).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct AprioriCase {
    pub name: &'static str,
    pub gamma: f64,
    pub report: AprioriReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonCase {
    pub name: &'static str,
    pub report: ComparisonReport,
    /// For a constant generator shift `c`, the exact gap `c (T - t)` and
    /// the largest deviation of the mean gap from it.
    pub shift_gap_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalarBatteryReport {
    pub settings: BatterySettings,
    pub a_priori: Vec<AprioriCase>,
    pub comparison: Vec<ComparisonCase>,
    pub holds: bool,
}

/// `e^{gamma|Y_t|} <= E_t[e^{gamma|xi| + gamma int |g|}]` on three
/// pure-quadratic problems, and the comparison ordering under a terminal
/// shift and a generator shift.
pub fn scalar_battery(settings: &BatterySettings) -> Result<ScalarBatteryReport> {
    let e = settings.ensemble()?;
    let nodes = e.grid().n_nodes();
    let bins = RegressionBasis::bins(16);
    let opts = ScalarOptions::default();

    let wavy = AdaptedField::from_fn(nodes, e.n_paths(), 1, |k, p, out| out[0] = 0.3 * e.w(k, p)[0].sin());
    let cases: Vec<(&'static str, f64, DriverField, Vec<f64>)> = vec![
        ("cos-terminal-constant-driver", 1.0, DriverField::constant(&e, 0.2), terminal(&e, f64::cos)),
        ("sin-terminal-no-driver", 0.5, DriverField::zeros(&e), terminal(&e, |w| (2.0 * w).sin())),
        ("tanh-terminal-path-driver", 2.0, DriverField::from_field(wavy)?, terminal(&e, f64::tanh)),
    ];
    let mut a_priori = Vec::new();
    for (name, gamma, driver, xi) in cases {
        let gen = ScalarGenerator::pure_quadratic(1, gamma);
        let sol = solve_scalar(&e, &gen, &driver, &xi, &bins, &opts)?;
        let report = a_priori_check(&sol.y, &driver, &xi, gamma, &e, &bins)?;
        a_priori.push(AprioriCase { name, gamma, report });
    }

    let poly = RegressionBasis::polynomial(3);
    let zero = DriverField::zeros(&e);
    let gen = ScalarGenerator::pure_quadratic(1, 1.0);
    let mut comparison = Vec::new();

    let xi = terminal(&e, f64::sin);
    let xi_hi: Vec<f64> = xi.iter().map(|v| v + 0.5).collect();
    check_ordering(&gen, &gen, &xi, &xi_hi, settings.horizon)?;
    let lo = solve_scalar(&e, &gen, &zero, &xi, &poly, &opts)?;
    let hi = solve_scalar(&e, &gen, &zero, &xi_hi, &poly, &opts)?;
    comparison.push(ComparisonCase {
        name: "terminal-shift",
        report: comparison_check(&lo, &hi)?,
        shift_gap_error: None,
    });

    // equal caps on both sides keep the shift exact
    let capped = ScalarOptions {
        z_cap: ZCap::Fixed(50.0),
        ..opts
    };
    let up = gen.shifted(1.0);
    let xi = terminal(&e, |w| (2.0 * w).cos());
    check_ordering(&gen, &up, &xi, &xi, settings.horizon)?;
    let lo = solve_scalar(&e, &gen, &zero, &xi, &poly, &capped)?;
    let hi = solve_scalar(&e, &up, &zero, &xi, &poly, &capped)?;
    let gap_error = (0..nodes)
        .map(|k| (hi.y.mean(k, 0) - lo.y.mean(k, 0) - (settings.horizon - e.grid().time(k))).abs())
        .fold(0.0, f64::max);
    comparison.push(ComparisonCase {
        name: "generator-shift",
        report: comparison_check(&lo, &hi)?,
        shift_gap_error: Some(gap_error),
    });

    let holds = a_priori.iter().all(|c| c.report.holds)
        && comparison.iter().all(|c| c.report.holds)
        && gap_error < 1e-9;
    Ok(ScalarBatteryReport {
        settings: *settings,
        a_priori,
        comparison,
        holds,
    })
}

/// Both sides in closed form for `M = c W` on `[0, T]`.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantCase {
    pub c: f64,
    pub norm_sq: f64,
    /// `e^{c^2 T}`.
    pub jn_lhs: f64,
    /// `1 / (1 - c^2 T)`.
    pub jn_rhs: f64,
    /// Largest ensemble estimate of `E_t[e^{<M>_t^T}]`; exact for constants.
    pub jn_estimate: f64,
    pub p: f64,
    /// `e^{p(p-1) c^2 T / 2}`.
    pub rh_lhs: f64,
    pub rh_rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RandomCase {
    pub seed: u64,
    pub john_nirenberg: JohnNirenbergReport,
    pub reverse_holder: ReverseHolderReport,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BmoBatteryReport {
    pub settings: BatterySettings,
    pub constant: Vec<ConstantCase>,
    pub random: Vec<RandomCase>,
    pub holds: bool,
}

pub const RANDOM_INSTANCES: usize = 20;
const M_AMPLITUDE: f64 = 0.45;
const N_AMPLITUDE: f64 = 0.25;
const M_SEED: u64 = 100;
const N_SEED: u64 = 500;

/// John-Nirenberg and reverse Hölder inequalities: exact on constant
/// integrands, within three standard errors on random Markov integrands.
pub fn bmo_battery(settings: &BatterySettings) -> Result<BmoBatteryReport> {
    let e = settings.ensemble()?;
    let basis = RegressionBasis::bins(16);
    let t = settings.horizon;
    let mut constant = Vec::new();
    for c in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let x = c * c * t;
        if x >= 1.0 {
            continue;
        }
        let m = IntegrandField::constant(&e, &[c])?;
        let jn = john_nirenberg_check(&e, &m, &basis)?;
        let p = find_p_for_threshold(c * t.sqrt())?;
        let (jn_lhs, jn_rhs) = (x.exp(), 1.0 / (1.0 - x));
        let rh_lhs = (p.p() * p.excess * x / 2.0).exp();
        let rh_rhs = reverse_holder_bound(p, c * t.sqrt());
        constant.push(ConstantCase {
            c,
            norm_sq: jn.norm_sq,
            jn_lhs,
            jn_rhs,
            jn_estimate: jn.max_estimate,
            p: p.p(),
            rh_lhs,
            rh_rhs,
            holds: jn_lhs <= jn_rhs
                && rh_lhs <= rh_rhs
                && (jn.norm_sq - x).abs() <= 1e-12 * x.max(1.0)
                && (jn.max_estimate - jn_lhs).abs() <= 1e-12 * jn_lhs,
        });
    }
    let mut random = Vec::new();
    for i in 0..RANDOM_INSTANCES as u64 {
        let m = IntegrandField::random_markov(&e, M_SEED + i, M_AMPLITUDE)?;
        let jn = john_nirenberg_check(&e, &m, &basis)?;
        let p = find_p_for_threshold(bmo2_norm(&e, &m, &basis)?.norm())?;
        let rh = reverse_holder_check(&e, &m, p, &basis)?;
        let holds = jn.applicable && jn.holds && rh.applicable && rh.holds;
        random.push(RandomCase {
            seed: M_SEED + i,
            john_nirenberg: jn,
            reverse_holder: rh,
            holds,
        });
    }
    let holds = !constant.is_empty() && constant.iter().all(|c| c.holds) && random.iter().all(|c| c.holds);
    Ok(BmoBatteryReport {
        settings: *settings,
        constant,
        random,
        holds,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GirsanovCase {
    pub m_seed: u64,
    pub n_seed: Option<u64>,
    pub report: GirsanovReport,
    pub bounds: Option<GirsanovBounds>,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GirsanovBatteryReport {
    pub settings: BatterySettings,
    /// Bound on `||N||_{BMO_2}`.
    pub k: f64,
    pub zero_density: GirsanovCase,
    pub random: Vec<GirsanovCase>,
    pub holds: bool,
}

/// Two-sided BMO norm estimate under the change of measure `dQ = E(N) dP`.
pub fn girsanov_battery(settings: &BatterySettings) -> Result<GirsanovBatteryReport> {
    let e = settings.ensemble()?;
    let basis = RegressionBasis::bins(16);
    let k = 0.5;

    let m = IntegrandField::random_markov(&e, M_SEED, M_AMPLITUDE)?;
    let (report, bounds) = girsanov_bmo_equivalence(&e, &m, &IntegrandField::zeros(&e, 1), k, &basis)?;
    let holds = report.applicable && (report.ratio - 1.0).abs() <= 2.0 * report.ratio_se;
    let zero_density = GirsanovCase {
        m_seed: M_SEED,
        n_seed: None,
        report,
        bounds,
        holds,
    };

    let mut random = Vec::new();
    for i in 0..RANDOM_INSTANCES as u64 {
        let m = IntegrandField::random_markov(&e, M_SEED + i, M_AMPLITUDE)?;
        let n = IntegrandField::random_markov(&e, N_SEED + i, N_AMPLITUDE)?;
        let (report, bounds) = girsanov_bmo_equivalence(&e, &m, &n, k, &basis)?;
        let holds = report.applicable && report.within;
        random.push(GirsanovCase {
            m_seed: M_SEED + i,
            n_seed: Some(N_SEED + i),
            report,
            bounds,
            holds,
        });
    }
    let holds = zero_density.holds && random.iter().all(|c| c.holds);
    Ok(GirsanovBatteryReport {
        settings: *settings,
        k,
        zero_density,
        random,
        holds,
    })
}
