//! Instance files (TOML, `schema_version = 1`).
//!
//! ```toml
//! schema_version = 1
//! id = "my-instance"
//!
//! [constants]
//! C = 1.0
//! gamma = 1.0
//! alpha = 0.0
//! n = 2
//! d = 1
//! T = 0.5
//! xi_bound = 0.5                 # |xi|_inf, used by the constants ledger
//!
//! [generator]
//! coupling = "lipschitz"          # or "sub-quadratic" (default)
//! f = ["0.5*z^2", "0.5*z^2"]
//! h = ["0.3*(sin(y2) + tanh(z2))", "0.3*(cos(y1) + tanh(z1))"]
//!
//! [terminal]
//! xi = ["0.5*cos(w)", "0.5*sin(w)"]
//! ```
//!
//! Variables: in `f[i]`, `t` and `z1..zd` (row `i` of `z`; `z` when
//! `d = 1`); in `h[i]`, `t`, `y1..yn` and `zI_J` (`zI` when `d = 1`); in
//! `xi[i]`, `w1..wd` for `W_T` (`w` when `d = 1`) and `t`.
//! `f` is checked against `|f| <= C + (gamma/2)|z|^2` and
//! `|f(z) - f(z')| <= L(1 + |z| + |z'|)|z - z'|` with `L = f_lipschitz`
//! (default `C`); `h` against the bounds of its coupling class.

use std::path::Path;
use std::sync::Arc;

use qbsde::constants::StructuralConstants;
use qbsde::instances::{Instance, TerminalFn};
use qbsde::picard::{CouplingClass, CouplingFn, SystemGenerator};
use qbsde::scalarq::{ScalarFn, ScalarGenerator};
use serde::Deserialize;
use toml::Spanned;

use crate::error::{line_column, CliError, Result};
use crate::expr::Expr;

pub const SCHEMA_VERSION: u32 = 1;
/// Random probes used to validate the declared constants.
pub const VALIDATION_PROBES: usize = 10_000;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    schema_version: Spanned<u32>,
    id: Option<String>,
    description: Option<String>,
    constants: ConstantsBlock,
    generator: GeneratorBlock,
    terminal: TerminalBlock,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantsBlock {
    #[serde(rename = "C")]
    c: f64,
    gamma: f64,
    #[serde(default)]
    alpha: f64,
    n: usize,
    d: usize,
    #[serde(rename = "T")]
    horizon: f64,
    #[serde(default)]
    xi_bound: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorBlock {
    coupling: Option<Spanned<String>>,
    f: Spanned<Vec<Spanned<String>>>,
    h: Option<Spanned<Vec<Spanned<String>>>>,
    f_lipschitz: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TerminalBlock {
    xi: Spanned<Vec<Spanned<String>>>,
}

struct Source<'a> {
    name: &'a str,
    text: &'a str,
}

impl Source<'_> {
    fn error(&self, offset: usize, message: impl Into<String>) -> CliError {
        let (line, column) = line_column(self.text, offset);
        CliError::Parse {
            file: self.name.to_string(),
            line,
            column,
            message: message.into(),
        }
    }

    /// Compiles a string value; offsets are relative to the opening quote.
    fn compile(&self, value: &Spanned<String>, vars: &[&str], what: &str) -> Result<Expr> {
        Expr::parse(value.get_ref(), vars)
            .map_err(|e| self.error(value.span().start + 1 + e.offset, format!("{what}: {}", e.message)))
    }

    fn count(&self, list: &Spanned<Vec<Spanned<String>>>, want: usize, what: &str) -> Result<()> {
        if list.get_ref().len() != want {
            return Err(self.error(
                list.span().start,
                format!("{what} needs {want} expressions, found {}", list.get_ref().len()),
            ));
        }
        Ok(())
    }
}

fn names(prefix: &str, count: usize, alias_single: bool) -> Vec<String> {
    let mut v: Vec<String> = (1..=count).map(|i| format!("{prefix}{i}")).collect();
    if alias_single && count == 1 {
        v.push(prefix.to_string());
    }
    v
}

/// Evaluates with a stack buffer when the variable list is short.
fn with_buffer<R>(len: usize, fill: impl FnOnce(&mut [f64]) -> R) -> R {
    if len <= 64 {
        let mut buf = [0.0; 64];
        fill(&mut buf[..len])
    } else {
        fill(&mut vec![0.0; len])
    }
}

pub fn load_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path)?;
    parse_instance(&text, &path.display().to_string())
}

/// Parses and validates an instance file.
pub fn parse_instance(text: &str, name: &str) -> Result<Instance> {
    let src = Source { name, text };
    let file: InstanceFile = toml::from_str(text).map_err(|e| {
        let offset = e.span().map_or(0, |s| s.start);
        src.error(offset, e.message().to_string())
    })?;
    if *file.schema_version.get_ref() != SCHEMA_VERSION {
        return Err(src.error(
            file.schema_version.span().start,
            format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", file.schema_version.get_ref()),
        ));
    }
    let k = &file.constants;
    let constants = StructuralConstants {
        c: k.c,
        gamma: k.gamma,
        alpha: k.alpha,
        n: k.n,
        d: k.d,
        horizon: k.horizon,
        xi_bound: k.xi_bound,
    };
    constants.validate()?;
    let (n, d) = (k.n, k.d);
    let g = &file.generator;
    let class = match g.coupling.as_ref() {
        None => CouplingClass::SubQuadratic,
        Some(s) => match s.get_ref().as_str() {
            "sub-quadratic" => CouplingClass::SubQuadratic,
            "lipschitz" => CouplingClass::Lipschitz,
            other => {
                return Err(src.error(
                    s.span().start,
                    format!("unknown coupling '{other}' (expected 'sub-quadratic' or 'lipschitz')"),
                ))
            }
        },
    };

    // f^i(t, row i of z)
    src.count(&g.f, n, "f")?;
    let mut f_vars = vec!["t".to_string()];
    f_vars.extend(names("z", d, true));
    let f_refs: Vec<&str> = f_vars.iter().map(String::as_str).collect();
    let lipschitz = g.f_lipschitz.unwrap_or(k.c);
    let mut f = Vec::with_capacity(n);
    for (i, value) in g.f.get_ref().iter().enumerate() {
        let e = Arc::new(src.compile(value, &f_refs, &format!("f[{i}]"))?);
        let alias = d == 1;
        let func: ScalarFn = Arc::new(move |t, z: &[f64]| {
            with_buffer(d + 1 + alias as usize, |v| {
                v[0] = t;
                v[1..=d].copy_from_slice(z);
                if alias {
                    v[2] = z[0];
                }
                e.eval(v)
            })
        });
        let wrap = |err: qbsde::Error| CliError::Solver(qbsde::Error::Component { component: i, source: Box::new(err) });
        let gen = ScalarGenerator::from_arc(d, k.c, k.gamma, lipschitz, k.horizon, func).map_err(wrap)?;
        gen.check_bounds(k.horizon, VALIDATION_PROBES).map_err(wrap)?;
        f.push(gen);
    }

    // h(t, y, z)
    let generator = match &g.h {
        None => SystemGenerator::decoupled(constants, f)?,
        Some(list) => {
            src.count(list, n, "h")?;
            let mut h_vars = vec!["t".to_string()];
            h_vars.extend(names("y", n, false));
            for i in 1..=n {
                for j in 1..=d {
                    h_vars.push(format!("z{i}_{j}"));
                }
            }
            if d == 1 {
                h_vars.extend((1..=n).map(|i| format!("z{i}")));
            }
            let h_refs: Vec<&str> = h_vars.iter().map(String::as_str).collect();
            let exprs: Vec<Expr> = list
                .get_ref()
                .iter()
                .enumerate()
                .map(|(i, v)| src.compile(v, &h_refs, &format!("h[{i}]")))
                .collect::<Result<_>>()?;
            let len = h_vars.len();
            let h: CouplingFn = Arc::new(move |t, y: &[f64], z: &[f64], out: &mut [f64]| {
                with_buffer(len, |v| {
                    v[0] = t;
                    v[1..=n].copy_from_slice(y);
                    v[n + 1..n + 1 + n * d].copy_from_slice(z);
                    if d == 1 {
                        v[n + 1 + n..].copy_from_slice(z);
                    }
                    for (o, e) in out.iter_mut().zip(&exprs) {
                        *o = e.eval(v);
                    }
                })
            });
            let gen = SystemGenerator::new(constants, f, h, class)?;
            gen.check_coupling(VALIDATION_PROBES)?;
            gen
        }
    };

    // xi(W_T)
    src.count(&file.terminal.xi, n, "xi")?;
    let mut xi_vars = names("w", d, true);
    xi_vars.push("t".to_string());
    let xi_refs: Vec<&str> = xi_vars.iter().map(String::as_str).collect();
    let exprs: Vec<Expr> = file
        .terminal
        .xi
        .get_ref()
        .iter()
        .enumerate()
        .map(|(i, v)| src.compile(v, &xi_refs, &format!("xi[{i}]")))
        .collect::<Result<_>>()?;
    let len = xi_vars.len();
    let terminal: TerminalFn = Arc::new(move |view, out: &mut [f64]| {
        with_buffer(len, |v| {
            let w = view.current();
            v[..d].copy_from_slice(w);
            if d == 1 {
                v[1] = w[0];
            }
            v[len - 1] = view.time();
            for (o, e) in out.iter_mut().zip(&exprs) {
                *o = e.eval(v);
            }
        })
    });

    Ok(Instance {
        id: file.id.unwrap_or_else(|| name.to_string()),
        description: file.description.unwrap_or_default(),
        generator,
        terminal,
        closed_form_y0: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANONICAL: &str = r#"schema_version = 1
id = "canonical"

[constants]
C = 1.0
gamma = 1.0
n = 1
d = 1
T = 1.0

[generator]
f = ["0.5*|z|^2"]

[terminal]
xi = ["cos(w)"]
"#;

    #[test]
    fn canonical_instance_is_valid() {
        let inst = parse_instance(CANONICAL, "canonical.toml").unwrap();
        assert_eq!(inst.generator.constants.gamma, 1.0);
        assert!(inst.generator.is_decoupled());
        assert_eq!(inst.generator.f(0).eval(0.0, &[2.0]), 2.0);
    }

    #[test]
    fn coupled_file_matches_builtin() {
        let text = r#"schema_version = 1
[constants]
C = 1.0
gamma = 1.0
n = 2
d = 1
T = 0.5
[generator]
coupling = "lipschitz"
f = ["0.5*z^2", "0.5*z1^2"]
h = ["0.3*(sin(y2) + tanh(z2))", "0.3*(cos(y1) + tanh(z1_1))"]
[terminal]
xi = ["0.5*cos(w)", "0.5*sin(w1)"]
"#;
        let inst = parse_instance(text, "c.toml").unwrap();
        let builtin = qbsde::instances::coupled_quadratic(0.5).unwrap();
        let (y, z) = ([0.3, -1.2], [0.7, 2.0]);
        let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
        inst.generator.eval_h(0.1, &y, &z, &mut a);
        builtin.generator.eval_h(0.1, &y, &z, &mut b);
        assert!((a[0] - b[0]).abs() < 1e-15 && (a[1] - b[1]).abs() < 1e-15);
    }

    #[test]
    fn growth_violation_names_a_probe() {
        let text = CANONICAL.replace("gamma = 1.0", "gamma = 0.1").replace("0.5*|z|^2", "|z|^2");
        match parse_instance(&text, "bad.toml") {
            Err(CliError::Solver(e)) => {
                let msg = e.to_string();
                assert!(msg.contains("growth bound") && msg.contains("z="), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn alpha_one_is_rejected() {
        let text = CANONICAL.replace("\nn = 1", "\nalpha = 1.0\nn = 1");
        assert!(matches!(parse_instance(&text, "a.toml"), Err(CliError::Solver(qbsde::Error::InvalidArgument(_)))));
    }

    #[test]
    fn expression_errors_report_line_and_column() {
        let text = CANONICAL.replace("cos(w)", "cos(w) + q");
        match parse_instance(&text, "e.toml") {
            Err(CliError::Parse { line, column, message, .. }) => {
                assert_eq!(line, 15);
                assert_eq!(column, 17);
                assert!(message.contains("unknown variable 'q'"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn toml_errors_report_line_and_column() {
        let text = CANONICAL.replace("\nn = 1", "\nn = = 1");
        match parse_instance(&text, "t.toml") {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
        let text = CANONICAL.replace("schema_version = 1", "schema_version = 2");
        assert!(matches!(parse_instance(&text, "v.toml"), Err(CliError::Parse { line: 1, .. })));
    }

    #[test]
    fn wrong_expression_count_is_rejected() {
        let text = CANONICAL.replace("\nn = 1", "\nn = 2");
        assert!(matches!(parse_instance(&text, "n.toml"), Err(CliError::Parse { .. })));
    }
}
