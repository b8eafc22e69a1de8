//! Built-in problems and batteries, and run configuration.

use std::path::{Path, PathBuf};

use qbsde::condexp::RegressionBasis;
use qbsde::instances::{coupled_linear, coupled_quadratic, decoupled_pure_quadratic, Instance};
use qbsde::picard::SolveMode;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::instance::load_instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Battery {
    Scalar,
    Bmo,
    Girsanov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    Polynomial,
    Bins,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub kind: BasisKind,
    /// Polynomial degree or number of bins per axis.
    pub size: usize,
    #[serde(default)]
    pub ridge: Option<f64>,
}

impl BasisConfig {
    pub fn polynomial(degree: usize) -> Self {
        Self {
            kind: BasisKind::Polynomial,
            size: degree,
            ridge: None,
        }
    }

    pub fn build(&self) -> RegressionBasis {
        let b = match self.kind {
            BasisKind::Polynomial => RegressionBasis::polynomial(self.size),
            BasisKind::Bins => RegressionBasis::bins(self.size),
        };
        match self.ridge {
            Some(r) => b.with_ridge(r),
            None => b,
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// Built-in id or instance file path.
    pub instance: String,
    pub mode: SolveMode,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub basis: BasisConfig,
    pub tol: f64,
    pub max_iter: usize,
    /// `solve-local` interval length in working mode (`None`: whole horizon).
    pub epsilon: Option<f64>,
    /// `solve-global` segment length in working mode.
    pub segment_length: Option<f64>,
    /// `solve-global`: independent ensembles for the `Y_0` standard error
    /// (0 disables).
    pub replicates: usize,
    /// `solve-global`: run the uniqueness probe.
    pub uniqueness: bool,
    /// Fixed cap on `|z|` inside the quadratic generators.
    pub z_cap: Option<f64>,
    /// Not serialized, so manifests do not depend on the output location.
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    fn generic(instance: &str) -> Self {
        Self {
            instance: instance.to_string(),
            mode: SolveMode::Working,
            steps: 50,
            paths: 20_000,
            seed: 1,
            basis: BasisConfig::polynomial(3),
            tol: 1e-6,
            max_iter: 50,
            epsilon: None,
            segment_length: None,
            replicates: 0,
            uniqueness: false,
            z_cap: None,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.steps == 0 || self.paths < 2 {
            return bad("steps must be >= 1 and paths >= 2");
        }
        if self.basis.size == 0 {
            return bad("basis size must be >= 1");
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return bad("tol and max_iter must be positive");
        }
        for (name, v) in [("epsilon", self.epsilon), ("segment_length", self.segment_length), ("z_cap", self.z_cap)] {
            if v.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if self.replicates == 1 {
            return bad("replicates must be 0 or >= 2");
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = o.$f.clone() { self.$f = v.into(); })* };
        }
        set!(mode, steps, paths, seed, basis, tol, max_iter, replicates, uniqueness);
        if o.epsilon.is_some() {
            self.epsilon = o.epsilon;
        }
        if o.segment_length.is_some() {
            self.segment_length = o.segment_length;
        }
        if o.z_cap.is_some() {
            self.z_cap = o.z_cap;
        }
        if o.out.is_some() {
            self.out = o.out.clone();
        }
    }
}

/// Partial configuration: a run-config file or command-line flags.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub instance: Option<String>,
    pub mode: Option<SolveMode>,
    pub steps: Option<usize>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub basis: Option<BasisConfig>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub epsilon: Option<f64>,
    pub segment_length: Option<f64>,
    pub replicates: Option<usize>,
    pub uniqueness: Option<bool>,
    pub z_cap: Option<f64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| {
            let (line, column) = crate::error::line_column(&text, e.span().map_or(0, |s| s.start));
            CliError::Parse {
                file: path.display().to_string(),
                line,
                column,
                message: e.message().to_string(),
            }
        })
    }

    /// `self` with the fields set in `other` replaced.
    pub fn merge(mut self, other: Overrides) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $(if other.$f.is_some() { self.$f = other.$f; })* };
        }
        take!(instance, mode, steps, paths, seed, basis, tol, max_iter, epsilon, segment_length, replicates, uniqueness, z_cap, out);
        self
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Kind {
    Problem(fn() -> qbsde::Result<Instance>),
    Battery(Battery),
}

#[derive(Debug, Clone)]
pub struct Builtin {
    pub id: &'static str,
    pub description: &'static str,
    pub kind: Kind,
    pub defaults: RunConfig,
}

pub const DECOUPLED_HORIZON: f64 = 1.0;
pub const LINEAR_HORIZON: f64 = 1.0;
pub const QUADRATIC_HORIZON: f64 = 0.5;
pub const BATTERY_HORIZON: f64 = 1.0;

pub fn builtins() -> Vec<Builtin> {
    let with = |id: &'static str, f: &dyn Fn(&mut RunConfig)| {
        let mut c = RunConfig::generic(id);
        f(&mut c);
        c
    };
    vec![
        Builtin {
            id: "decoupled-quadratic",
            description: "two independent pure-quadratic components, xi^i = cos(W_T), T = 1",
            kind: Kind::Problem(|| decoupled_pure_quadratic(2, 1, 1.0, DECOUPLED_HORIZON)),
            defaults: with("decoupled-quadratic", &|c| {
                c.steps = 50;
                c.basis = BasisConfig::polynomial(4);
            }),
        },
        Builtin {
            id: "coupled-linear",
            description: "n = 2 linear drift with linear coupling, closed-form Y_0, T = 1",
            kind: Kind::Problem(|| coupled_linear(LINEAR_HORIZON)),
            defaults: with("coupled-linear", &|c| {
                c.steps = 100;
                c.paths = 10_000;
                c.basis = BasisConfig::polynomial(5);
                c.segment_length = Some(0.25);
                c.replicates = 10;
                c.uniqueness = true;
                c.seed = 2024;
            }),
        },
        Builtin {
            id: "coupled-quadratic",
            description: "n = 2 pure-quadratic components with bounded Lipschitz cross-coupling, T = 0.5",
            kind: Kind::Problem(|| coupled_quadratic(QUADRATIC_HORIZON)),
            defaults: with("coupled-quadratic", &|c| {
                c.steps = 20;
                c.tol = 1e-8;
                c.seed = 7;
            }),
        },
        Builtin {
            id: "scalar-battery",
            description: "a priori bound and comparison checks for the scalar quadratic solver",
            kind: Kind::Battery(Battery::Scalar),
            defaults: with("scalar-battery", &|c| c.seed = 5),
        },
        Builtin {
            id: "bmo-battery",
            description: "John-Nirenberg and reverse Hoelder checks, constant and 20 random integrands",
            kind: Kind::Battery(Battery::Bmo),
            defaults: with("bmo-battery", &|c| {
                c.steps = 40;
                c.seed = 77;
            }),
        },
        Builtin {
            id: "girsanov-battery",
            description: "BMO norm equivalence under a change of measure, 20 random pairs",
            kind: Kind::Battery(Battery::Girsanov),
            defaults: with("girsanov-battery", &|c| {
                c.steps = 40;
                c.seed = 77;
            }),
        },
    ]
}

pub fn builtin(id: &str) -> Option<Builtin> {
    builtins().into_iter().find(|b| b.id == id)
}

/// A resolved problem: a built-in or a loaded instance file.
pub enum Resolved {
    Problem(Box<Instance>),
    Battery(Battery),
}

/// Default configuration for `instance` (generic for files).
pub fn defaults_for(instance: &str) -> Result<RunConfig> {
    match builtin(instance) {
        Some(b) => Ok(b.defaults),
        None if Path::new(instance).is_file() => Ok(RunConfig::generic(instance)),
        None => Err(CliError::UnknownInstance(instance.to_string())),
    }
}

pub fn resolve(instance: &str) -> Result<Resolved> {
    match builtin(instance) {
        Some(Builtin {
            kind: Kind::Problem(make), ..
        }) => Ok(Resolved::Problem(Box::new(make()?))),
        Some(Builtin {
            kind: Kind::Battery(b), ..
        }) => Ok(Resolved::Battery(b)),
        None if Path::new(instance).is_file() => Ok(Resolved::Problem(Box::new(load_instance(Path::new(instance))?))),
        None => Err(CliError::UnknownInstance(instance.to_string())),
    }
}

/// Builtin defaults, then the run-config file, then flags.
pub fn resolve_config(file: Option<&Path>, flags: Overrides, fallback_instance: &str) -> Result<RunConfig> {
    let from_file = match file {
        Some(p) => Overrides::load(p)?,
        None => Overrides::default(),
    };
    let merged = from_file.merge(flags);
    let instance = merged.instance.clone().unwrap_or_else(|| fallback_instance.to_string());
    let mut config = defaults_for(&instance)?;
    config.apply(&merged);
    config.validate()?;
    Ok(config)
}
