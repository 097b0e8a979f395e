//! Density-form kinetic equations on `n = 1` grids.
//!
//! Four models share one advective kernel
//! `rate = sum_k a_k d_k f + a_0 f` with coefficient arrays sampled from the
//! Hamiltonian:
//!
//! * Vlasov: `df/dt = {H, f}`
//! * conformal: `df/dt = {H, f} + c Z(f) - c (n+1) f`, `Z(f) = -p df/dp`,
//!   with `dc*/dt = int f (Z(H) + H)`
//! * contact, vector-field lift: `df/dt = -div(f xi_H)`, also available in
//!   conservative flux form
//! * contact, bracket lift: as above with `(n+2) f dH/dz` in place of
//!   `(n+1) f dH/dz`
//!
//! Time stepping is classical RK4.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Arity, ScalarFunction};
use crate::grid::{
    boundary_mass_fraction, grid_dot, Boundary, DensityGrid, Differ, GridSpec, StencilKind,
};

const N: f64 = 1.0;
pub const BOUNDARY_MASS_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityModel {
    Vlasov,
    Conformal { c: f64 },
    ContactVf { flux: bool },
    ContactBracket,
}

impl DensityModel {
    pub fn arity(self) -> Arity {
        match self {
            DensityModel::Vlasov | DensityModel::Conformal { .. } => Arity::Symplectic(1),
            DensityModel::ContactVf { .. } | DensityModel::ContactBracket => Arity::Contact(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactVariant {
    VectorField,
    Bracket,
}

#[derive(Debug, Clone)]
enum Kernel {
    /// `sum_k coeff[k] * d_k f + a0 * f`
    Advective {
        coeff: Vec<Vec<f64>>,
        a0: Option<Vec<f64>>,
    },
    /// `-sum_k D_k (f v_k)` with flux-difference stencils
    Flux { velocity: Vec<Vec<f64>> },
}

/// Precomputed right-hand side and RK4 stepper for one model and Hamiltonian.
#[derive(Debug, Clone)]
pub struct DensitySolver {
    model: DensityModel,
    spec: GridSpec,
    differ: Differ,
    kernel: Kernel,
    /// `(Z(H) + H) dV` per cell, conformal runs only.
    cstar_weight: Option<Vec<f64>>,
    max_stable_dt: f64,
    cfl_warned: Arc<AtomicBool>,
    /// Truncated-edge cells where the transport velocity points inward; their
    /// rate is held at zero.
    inflow: Vec<usize>,
    scratch: Vec<f64>,
    stages: [Vec<f64>; 4],
    trial: Vec<f64>,
}

impl DensitySolver {
    pub fn new(model: DensityModel, h: &ScalarFunction, spec: &GridSpec) -> Result<Self> {
        spec.require_arity(model.arity())?;
        h.arity().expect(model.arity())?;
        let ndim = spec.ndim();
        // per cell: H, dH/dq, dH/dp[, dH/dz]
        let fields = spec.sample_many(ndim + 1, |x, out| {
            out[0] = h.value(x);
            h.gradient(x, &mut out[1..]);
        });
        let (hv, hq, hp) = (&fields[0], &fields[1], &fields[2]);
        let p = spec.sample(|x| x[1]);
        let len = spec.len();
        let kernel = match model {
            DensityModel::Vlasov | DensityModel::Conformal { .. } => {
                let a_q: Vec<f64> = hp.iter().map(|v| -v).collect();
                let mut a_p = hq.clone();
                let mut a0 = None;
                if let DensityModel::Conformal { c } = model {
                    if c != 0.0 {
                        for i in 0..len {
                            a_p[i] -= c * p[i];
                        }
                        a0 = Some(vec![-c * (N + 1.0); len]);
                    }
                }
                Kernel::Advective {
                    coeff: vec![a_q, a_p],
                    a0,
                }
            }
            DensityModel::ContactVf { flux } => {
                let hz = &fields[3];
                if flux {
                    let velocity = vec![
                        hp.clone(),
                        (0..len).map(|i| -hq[i] - p[i] * hz[i]).collect(),
                        (0..len).map(|i| p[i] * hp[i] - hv[i]).collect(),
                    ];
                    Kernel::Flux { velocity }
                } else {
                    contact_advective(hv, hq, hp, hz, &p, N + 1.0)
                }
            }
            DensityModel::ContactBracket => contact_advective(hv, hq, hp, &fields[3], &p, N + 2.0),
        };
        let cell = spec.cell_volume();
        let cstar_weight = matches!(model, DensityModel::Conformal { .. })
            .then(|| (0..len).map(|i| (hv[i] - p[i] * hp[i]) * cell).collect());
        let speeds: Vec<&Vec<f64>> = match &kernel {
            Kernel::Advective { coeff, .. } => coeff.iter().collect(),
            Kernel::Flux { velocity } => velocity.iter().collect(),
        };
        let mut max_stable_dt = f64::INFINITY;
        for (k, v) in speeds.iter().enumerate() {
            let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if vmax > 0.0 {
                max_stable_dt = max_stable_dt.min(0.5 * spec.axis(k).h() / vmax);
            }
        }
        let inflow = match &kernel {
            Kernel::Advective { coeff, .. } => inflow_cells(spec, coeff),
            Kernel::Flux { .. } => Vec::new(),
        };
        let stencil = match kernel {
            Kernel::Flux { .. } => StencilKind::Flux,
            Kernel::Advective { .. } => StencilKind::Central,
        };
        Ok(Self {
            model,
            spec: spec.clone(),
            differ: Differ::new(spec, stencil),
            kernel,
            cstar_weight,
            max_stable_dt,
            cfl_warned: Arc::default(),
            inflow,
            scratch: vec![0.0; len],
            stages: std::array::from_fn(|_| vec![0.0; len]),
            trial: vec![0.0; len],
        })
    }

    pub fn model(&self) -> DensityModel {
        self.model
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// CFL bound `0.5 min_k h_k / max |v_k|`.
    pub fn max_stable_dt(&self) -> f64 {
        self.max_stable_dt
    }

    /// `dc*/dt` for the density `values`.
    pub fn cstar_rate(&self, values: &[f64]) -> Option<f64> {
        self.cstar_weight
            .as_ref()
            .map(|w| grid_dot(&self.spec, values, w))
    }

    /// Right-hand side of the density equation into `out`. The zero-inflow
    /// condition is applied by `step`, not here.
    pub fn rate_into(&mut self, values: &[f64], out: &mut [f64]) {
        rate(&self.kernel, &self.differ, values, &mut self.scratch, out);
    }

    fn rate_into_trial(&mut self, out: &mut [f64]) {
        rate(
            &self.kernel,
            &self.differ,
            &self.trial,
            &mut self.scratch,
            out,
        );
        for &i in &self.inflow {
            out[i] = 0.0;
        }
    }

    pub fn rate(&mut self, f: &DensityGrid) -> Result<DensityGrid> {
        self.spec.require(&f.spec)?;
        let mut out = vec![0.0; f.values.len()];
        self.rate_into(&f.values, &mut out);
        Ok(DensityGrid {
            spec: f.spec.clone(),
            values: out,
            cstar: self.cstar_rate(&f.values),
        })
    }

    /// One RK4 step. `c*` is advanced alongside for conformal runs.
    pub fn step(&mut self, f: &mut DensityGrid, dt: f64) -> Result<()> {
        self.spec.require(&f.spec)?;
        if dt > self.max_stable_dt * (1.0 + 1e-12) && !self.cfl_warned.swap(true, Ordering::Relaxed)
        {
            warn!(
                "dt = {dt} exceeds the CFL estimate {:.3e} for {:?}",
                self.max_stable_dt, self.model
            );
        }
        let mut crates = [0.0; 4];
        for stage in 0..4 {
            let a = [0.0, 0.5, 0.5, 1.0][stage] * dt;
            if stage == 0 {
                self.trial.copy_from_slice(&f.values);
            } else {
                let prev = &self.stages[stage - 1];
                self.trial
                    .par_iter_mut()
                    .zip(f.values.par_iter())
                    .zip(prev.par_iter())
                    .for_each(|((t, v), k)| *t = v + a * k);
            }
            let mut k = std::mem::take(&mut self.stages[stage]);
            self.rate_into_trial(&mut k);
            crates[stage] = self.cstar_rate(&self.trial).unwrap_or(0.0);
            self.stages[stage] = k;
        }
        let [k1, k2, k3, k4] = &self.stages;
        let w = dt / 6.0;
        f.values
            .par_iter_mut()
            .zip(k1.par_iter().zip(k2.par_iter()))
            .zip(k3.par_iter().zip(k4.par_iter()))
            .for_each(|((v, (a, b)), (c, d))| *v += w * (a + 2.0 * b + 2.0 * c + d));
        if self.cstar_weight.is_some() {
            let c = f.cstar.unwrap_or(0.0);
            f.cstar = Some(c + w * (crates[0] + 2.0 * crates[1] + 2.0 * crates[2] + crates[3]));
        }
        Ok(())
    }

    /// Runs `steps` RK4 steps, aborting on non-finite values.
    pub fn run(&mut self, f: &mut DensityGrid, dt: f64, steps: usize) -> Result<()> {
        for s in 0..steps {
            self.step(f, dt)?;
            if f.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteDensity(s + 1));
            }
        }
        Ok(())
    }

    /// Fraction of the mass in the outer three cells of truncated axes; warns
    /// above the monitor threshold.
    pub fn boundary_monitor(&self, f: &DensityGrid) -> f64 {
        let axes: Vec<usize> = (0..self.spec.ndim()).collect();
        let frac = boundary_mass_fraction(&self.spec, &f.values, &axes, 3);
        if frac > BOUNDARY_MASS_THRESHOLD {
            warn!("{frac:.2e} of the density sits next to a truncated boundary");
        }
        frac
    }
}

/// Edge cells of truncated axes where `-coeff[k]` (the transport velocity
/// along axis k) enters the domain.
fn inflow_cells(spec: &GridSpec, coeff: &[Vec<f64>]) -> Vec<usize> {
    let dims: Vec<usize> = spec.axes().iter().map(|a| a.cells).collect();
    let mut cells = Vec::new();
    for idx in 0..spec.len() {
        let mut rem = idx;
        for k in (0..dims.len()).rev() {
            let i = rem % dims[k];
            rem /= dims[k];
            if spec.axis(k).boundary != Boundary::Truncated {
                continue;
            }
            let a = coeff[k][idx];
            if (i == 0 && a < 0.0) || (i + 1 == dims[k] && a > 0.0) {
                cells.push(idx);
                break;
            }
        }
    }
    cells
}

fn contact_advective(hv: &[f64], hq: &[f64], hp: &[f64], hz: &[f64], p: &[f64], k0: f64) -> Kernel {
    let len = hv.len();
    Kernel::Advective {
        coeff: vec![
            hp.iter().map(|v| -v).collect(),
            (0..len).map(|i| hq[i] + p[i] * hz[i]).collect(),
            (0..len).map(|i| hv[i] - p[i] * hp[i]).collect(),
        ],
        a0: Some(hz.iter().map(|v| k0 * v).collect()),
    }
}

fn rate(kernel: &Kernel, differ: &Differ, values: &[f64], scratch: &mut [f64], out: &mut [f64]) {
    let row = differ.spec().row_len();
    match kernel {
        Kernel::Advective { coeff, a0 } => {
            match a0 {
                Some(a0) => out
                    .par_chunks_mut(row)
                    .zip(values.par_chunks(row).zip(a0.par_chunks(row)))
                    .for_each(|(o, (v, a))| {
                        o.iter_mut()
                            .zip(v)
                            .zip(a)
                            .for_each(|((o, v), a)| *o = a * v)
                    }),
                None => out.iter_mut().for_each(|o| *o = 0.0),
            }
            for (axis, a) in coeff.iter().enumerate() {
                differ.apply(axis, values, scratch);
                out.par_chunks_mut(row)
                    .zip(scratch.par_chunks(row).zip(a.par_chunks(row)))
                    .for_each(|(o, (d, a))| {
                        o.iter_mut()
                            .zip(d)
                            .zip(a)
                            .for_each(|((o, d), a)| *o += a * d)
                    });
            }
        }
        Kernel::Flux { velocity } => {
            out.iter_mut().for_each(|o| *o = 0.0);
            let mut g = vec![0.0; values.len()];
            for (axis, v) in velocity.iter().enumerate() {
                g.par_chunks_mut(row)
                    .zip(values.par_chunks(row).zip(v.par_chunks(row)))
                    .for_each(|(g, (f, v))| {
                        g.iter_mut()
                            .zip(f)
                            .zip(v)
                            .for_each(|((g, f), v)| *g = f * v)
                    });
                differ.apply(axis, &g, scratch);
                out.par_chunks_mut(row)
                    .zip(scratch.par_chunks(row))
                    .for_each(|(o, d)| o.iter_mut().zip(d).for_each(|(o, d)| *o -= d));
            }
        }
    }
}

/// `(df/dt, dc*/dt)` for the conformal density equation.
pub fn conformal_density_rhs(
    f: &DensityGrid,
    h: &ScalarFunction,
    c: f64,
) -> Result<(DensityGrid, f64)> {
    let mut solver = DensitySolver::new(DensityModel::Conformal { c }, h, &f.spec)?;
    let r = solver.rate(f)?;
    let cs = r.cstar.unwrap_or(0.0);
    Ok((DensityGrid { cstar: None, ..r }, cs))
}

/// Right-hand side `{H, f}` of the Vlasov equation.
pub fn vlasov_density_rhs(f: &DensityGrid, h: &ScalarFunction) -> Result<DensityGrid> {
    DensitySolver::new(DensityModel::Vlasov, h, &f.spec)?.rate(f)
}

/// Right-hand side of the contact density equation in advective form.
pub fn contact_density_rhs(
    f: &DensityGrid,
    h: &ScalarFunction,
    variant: ContactVariant,
) -> Result<DensityGrid> {
    let model = match variant {
        ContactVariant::VectorField => DensityModel::ContactVf { flux: false },
        ContactVariant::Bracket => DensityModel::ContactBracket,
    };
    DensitySolver::new(model, h, &f.spec)?.rate(f)
}

/// `-div(f xi_H)` in conservative flux form.
pub fn contact_density_rhs_flux(f: &DensityGrid, h: &ScalarFunction) -> Result<DensityGrid> {
    DensitySolver::new(DensityModel::ContactVf { flux: true }, h, &f.spec)?.rate(f)
}

/// One RK4 step of `model`. Builds a fresh solver; use `DensitySolver` for
/// repeated steps.
pub fn step_density(
    model: DensityModel,
    f: &DensityGrid,
    h: &ScalarFunction,
    dt: f64,
) -> Result<DensityGrid> {
    let mut solver = DensitySolver::new(model, h, &f.spec)?;
    let mut out = f.clone();
    if matches!(model, DensityModel::Conformal { .. }) && out.cstar.is_none() {
        out.cstar = Some(0.0);
    }
    solver.run(&mut out, dt, 1)?;
    Ok(out)
}

/// Midpoint-rule `int a f dV`.
pub fn observable(f: &DensityGrid, a: &ScalarFunction) -> Result<f64> {
    f.spec.require_arity(a.arity())?;
    let av = f.spec.sample(|x| a.value(x));
    Ok(grid_dot(&f.spec, &f.values, &av) * f.spec.cell_volume())
}
