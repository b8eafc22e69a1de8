//! Built-in test problems with known solutions or known structure.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};

use crate::constants::StructuralConstants;
use crate::error::Result;
use crate::paths::{evaluate_terminal, PathEnsemble, PathView, TerminalValues};
use crate::picard::{CouplingClass, CouplingFn, SystemGenerator};
use crate::scalarq::ScalarGenerator;

/// Terminal map `xi(path, out)` evaluated at the last node of an ensemble.
pub type TerminalFn = Arc<dyn Fn(&PathView<'_>, &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub struct Instance {
    pub id: String,
    pub description: String,
    pub generator: SystemGenerator,
    pub terminal: TerminalFn,
    /// `Y_0` at `t = 0` when known in closed form.
    pub closed_form_y0: Option<Vec<f64>>,
}

impl fmt::Debug for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Instance")
            .field("id", &self.id)
            .field("generator", &self.generator)
            .field("closed_form_y0", &self.closed_form_y0)
            .finish()
    }
}

impl Instance {
    pub fn terminal_values(&self, ensemble: &PathEnsemble) -> Result<TerminalValues> {
        let xi = self.terminal.clone();
        evaluate_terminal(ensemble, self.generator.n(), move |v, out| xi(v, out))
    }

    pub fn constants(&self) -> StructuralConstants {
        self.generator.constants
    }
}

pub const LINEAR_DRIFT: f64 = 0.5;
pub const LINEAR_COUPLING: [[f64; 2]; 2] = [[-0.5, 0.3], [0.2, -0.4]];
pub const QUADRATIC_KAPPA: f64 = 0.3;

/// `f^i = (gamma/2)|z^i|^2`, `h = 0`, `xi^i = cos(W^1_T)`.
pub fn decoupled_pure_quadratic(n: usize, d: usize, gamma: f64, horizon: f64) -> Result<Instance> {
    let constants = StructuralConstants {
        c: 1.0,
        gamma,
        alpha: 0.0,
        n,
        d,
        horizon,
        xi_bound: 1.0,
    };
    let f = vec![ScalarGenerator::pure_quadratic(d, gamma); n];
    Ok(Instance {
        id: "decoupled-quadratic".into(),
        description: "n independent pure-quadratic components, xi^i = cos(W_T)".into(),
        generator: SystemGenerator::decoupled(constants, f)?,
        terminal: Arc::new(|v, out| out.fill(v.current()[0].cos())),
        closed_form_y0: None,
    })
}

/// `f^i(z) = a z^i`, `h(y) = B y`, `xi = (cos W_T, sin W_T)`, `n = 2`, `d = 1`.
///
/// Under the measure with drift `a`, `Y_t = e^{B(T-t)} E_t[xi]`, so
/// `Y_0 = e^{BT} e^{-T/2} (cos aT, sin aT)`.
pub fn coupled_linear(horizon: f64) -> Result<Instance> {
    let a = LINEAR_DRIFT;
    let b = Matrix2::from_fn(|i, j| LINEAR_COUPLING[i][j]);
    let constants = StructuralConstants {
        c: 1.0,
        gamma: 1.0,
        alpha: 0.0,
        n: 2,
        d: 1,
        horizon,
        xi_bound: 1.0,
    };
    let fi = ScalarGenerator::new(1, a * a / 2.0, 1.0, a, horizon, move |_, z| a * z[0])?;
    let h: CouplingFn = Arc::new(move |_, y: &[f64], _, out: &mut [f64]| {
        let v = b * Vector2::new(y[0], y[1]);
        out[0] = v[0];
        out[1] = v[1];
    });
    let damp = (-horizon / 2.0).exp();
    let y0 = (b * horizon).exp() * Vector2::new((a * horizon).cos() * damp, (a * horizon).sin() * damp);
    Ok(Instance {
        id: "coupled-linear".into(),
        description: "linear drift a z^i with linear coupling B y, closed-form Y_0".into(),
        generator: SystemGenerator::new(constants, vec![fi.clone(), fi], h, CouplingClass::Lipschitz)?,
        terminal: Arc::new(|v, out| {
            let w = v.current()[0];
            out[0] = w.cos();
            out[1] = w.sin();
        }),
        closed_form_y0: Some(vec![y0[0], y0[1]]),
    })
}

/// `f^i = z_i^2 / 2`, `h = kappa (sin y_2 + tanh z_2, cos y_1 + tanh z_1)`,
/// `xi = (cos W_T, sin W_T) / 2`, `n = 2`, `d = 1`.
pub fn coupled_quadratic(horizon: f64) -> Result<Instance> {
    coupled_quadratic_with(horizon, QUADRATIC_KAPPA)
}

pub fn coupled_quadratic_with(horizon: f64, kappa: f64) -> Result<Instance> {
    let constants = StructuralConstants {
        c: 1.0,
        gamma: 1.0,
        alpha: 0.0,
        n: 2,
        d: 1,
        horizon,
        xi_bound: 0.5,
    };
    let h: CouplingFn = Arc::new(move |_, y: &[f64], z: &[f64], out: &mut [f64]| {
        out[0] = kappa * (y[1].sin() + z[1].tanh());
        out[1] = kappa * (y[0].cos() + z[0].tanh());
    });
    let f = vec![ScalarGenerator::pure_quadratic(1, 1.0); 2];
    Ok(Instance {
        id: "coupled-quadratic".into(),
        description: "two pure-quadratic components with bounded Lipschitz cross-coupling".into(),
        generator: SystemGenerator::new(constants, f, h, CouplingClass::Lipschitz)?,
        terminal: Arc::new(|v, out| {
            let w = v.current()[0];
            out[0] = 0.5 * w.cos();
            out[1] = 0.5 * w.sin();
        }),
        closed_form_y0: None,
    })
}
