//! Browser bindings: particle trajectories, a stepping density heatmap and
//! the conformal volume factor.

use conkin_core::geometry::{ContactState, PhaseState, ScalarFunction, State};
use conkin_core::grid::{DensityGrid, GridSpec};
use conkin_core::hierarchy::extend_hamiltonian;
use conkin_core::kinetic_density::{DensityModel, DensitySolver};
use conkin_core::particle::{flow_volume_factor, integrate, FieldKind, Method};
use wasm_bindgen::prelude::*;

fn js_err(e: conkin_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Harmonic oscillator trajectory from `(q0, p0)`, flattened as
/// `[q, p, H, q, p, H, ...]`. `model` is `hamiltonian`, `conformal` or
/// `contact` (the latter under `H - c z` from `z = 0`, reporting `H-bar`).
#[wasm_bindgen]
pub fn trajectory(
    model: &str,
    c: f64,
    q0: f64,
    p0: f64,
    t_final: f64,
    dt: f64,
) -> Result<Vec<f64>, JsError> {
    let h = ScalarFunction::harmonic(1);
    let (kind, func, s0): (FieldKind, ScalarFunction, State) = match model {
        "hamiltonian" => (
            FieldKind::Hamiltonian,
            h,
            PhaseState::new(vec![q0], vec![p0]).map_err(js_err)?.into(),
        ),
        "conformal" => (
            FieldKind::Conformal { c },
            h,
            PhaseState::new(vec![q0], vec![p0]).map_err(js_err)?.into(),
        ),
        "contact" => (
            FieldKind::Contact,
            extend_hamiltonian(&h, c)
                .map_err(js_err)?
                .function()
                .clone(),
            ContactState::new(vec![q0], vec![p0], 0.0)
                .map_err(js_err)?
                .into(),
        ),
        other => return Err(JsError::new(&format!("unknown model `{other}`"))),
    };
    let tr = integrate(kind, &func, &s0, t_final, dt, Method::Rk4).map_err(js_err)?;
    Ok(tr
        .states
        .iter()
        .zip(&tr.diagnostics)
        .flat_map(|(x, d)| [x[0], x[1], d.energy])
        .collect())
}

/// Determinant of the time-`T` conformal flow map; the exact value is
/// `exp(c T)`.
#[wasm_bindgen]
pub fn volume_factor(c: f64, t_final: f64, dt: f64) -> Result<f64, JsError> {
    let s0: State = PhaseState::new(vec![1.0], vec![0.0])
        .map_err(js_err)?
        .into();
    flow_volume_factor(
        FieldKind::Conformal { c },
        &ScalarFunction::harmonic(1),
        &s0,
        t_final,
        dt,
    )
    .map_err(js_err)
}

/// Gaussian density on `[-L, L]^2` under the harmonic oscillator, stepped
/// with the conformal (or, at `c = 0`, Vlasov) solver.
#[wasm_bindgen]
pub struct DensityDemo {
    solver: DensitySolver,
    f: DensityGrid,
    dt: f64,
    time: f64,
    mass0: f64,
}

#[wasm_bindgen]
impl DensityDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(
        cells: usize,
        half_width: f64,
        c: f64,
        q0: f64,
        p0: f64,
    ) -> Result<DensityDemo, JsError> {
        let spec = GridSpec::phase(
            (-half_width, half_width, cells),
            (-half_width, half_width, cells),
        )
        .map_err(js_err)?;
        let model = if c == 0.0 {
            DensityModel::Vlasov
        } else {
            DensityModel::Conformal { c }
        };
        let solver =
            DensitySolver::new(model, &ScalarFunction::harmonic(1), &spec).map_err(js_err)?;
        let mut f = DensityGrid::sample(spec, |x| {
            (-2.0 * ((x[0] - q0).powi(2) + (x[1] - p0).powi(2))).exp()
        });
        if c != 0.0 {
            f = f.with_cstar(0.0);
        }
        let dt = 0.5 * solver.max_stable_dt();
        let mass0 = f.mass();
        Ok(DensityDemo {
            solver,
            f,
            dt,
            time: 0.0,
            mass0,
        })
    }

    pub fn step(&mut self, steps: usize) -> Result<(), JsError> {
        self.solver
            .run(&mut self.f, self.dt, steps)
            .map_err(js_err)?;
        self.time += steps as f64 * self.dt;
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.f.spec.axis(0).cells
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Current mass over initial mass.
    pub fn mass_ratio(&self) -> f64 {
        self.f.mass() / self.mass0
    }

    /// Values with `q` along rows, `p` along columns.
    pub fn values(&self) -> Vec<f64> {
        self.f.values.clone()
    }
}
