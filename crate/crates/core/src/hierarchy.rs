//! Maps between the contact, conformal and Hamiltonian levels.
//!
//! A symplectic `H` with factor `c` embeds as the contact Hamiltonian
//! `H-bar = H - c z`. Contact data project back by integrating out `z`:
//!
//! * trajectories: drop `z`
//! * densities: `f = int f-bar dz`, `c* = -int z f-bar`
//! * one-forms: `Pi_i = int Pi-bar_i dz`, with `Pi-bar_z` discarded
//!
//! The sign of `c*` is fixed so that the projected pair `(f, c*)` obeys the
//! conformal density equation with `dc*/dt = int f (Z(H) + H)`.

use crate::brackets::contact_bracket;
use crate::error::{Error, Result};
use crate::geometry::{Arity, ScalarFunction};
use crate::grid::{boundary_mass_fraction, pairwise_sum, DensityGrid, GridSpec};
use crate::kinetic_density::{DensityModel, DensitySolver, BOUNDARY_MASS_THRESHOLD};
use crate::kinetic_momentum::{conformal_dual, MomentumKind, MomentumSolver, OneFormGrid};
use crate::lifts::conformal_bracket_generator;
use crate::particle::{StepRecord, Trajectory};
use crate::polynomial::Polynomial;

/// Cells at each end of the `z` axis checked for decay.
const Z_EDGE: usize = 3;

/// `H-bar(q, p, z) = H(q, p) - c z`.
#[derive(Debug, Clone)]
pub struct ExtendedHamiltonian {
    base: ScalarFunction,
    c: f64,
    function: ScalarFunction,
}

impl ExtendedHamiltonian {
    pub fn base(&self) -> &ScalarFunction {
        &self.base
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// The contact-arity function `H-bar`.
    pub fn function(&self) -> &ScalarFunction {
        &self.function
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.function.value(x)
    }
}

pub fn extend_hamiltonian(h: &ScalarFunction, c: f64) -> Result<ExtendedHamiltonian> {
    let n = match h.arity() {
        Arity::Symplectic(n) => n,
        a => {
            return Err(Error::ArityMismatch {
                expected: "symplectic Hamiltonian".into(),
                found: a.to_string(),
            })
        }
    };
    let arity = Arity::Contact(n);
    let name = format!("{} - {c} z", h.name());
    let function = match h.as_polynomial() {
        Some(p) => {
            let lifted = p.extend_dim(2 * n + 1);
            let z = Polynomial::variable(2 * n + 1, 2 * n).scale(c);
            ScalarFunction::polynomial(arity, name, &lifted - &z)
        }
        None => {
            let (hv, hg) = (h.clone(), h.clone());
            ScalarFunction::from_fn(arity, name, move |x| hv.value(&x[..2 * n]) - c * x[2 * n])
                .with_gradient(move |x, g| {
                    hg.gradient(&x[..2 * n], &mut g[..2 * n]);
                    g[2 * n] = -c;
                })
        }
    };
    Ok(ExtendedHamiltonian {
        base: h.clone(),
        c,
        function,
    })
}

/// The bracket of extended pairs, `(G, 0)` with
/// `G = {F,H} + c_F (Z(H) + H) - c_H (Z(F) + F)`.
pub fn extension_bracket(
    f: &ExtendedHamiltonian,
    h: &ExtendedHamiltonian,
) -> Result<ExtendedHamiltonian> {
    let g = conformal_bracket_generator(&f.base, f.c, &h.base, h.c)?;
    extend_hamiltonian(&g, 0.0)
}

/// Largest `|{F-bar, H-bar}^C - G|` over `states` on the contact space.
pub fn extension_bracket_residual(
    f: &ExtendedHamiltonian,
    h: &ExtendedHamiltonian,
    states: &[Vec<f64>],
) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::NoData);
    }
    let g = extension_bracket(f, h)?;
    let mut worst: f64 = 0.0;
    for x in states {
        let lhs = contact_bracket(&f.function, &h.function, x)?;
        worst = worst.max((lhs - g.value(x)).abs());
    }
    Ok(worst)
}

/// Drops `z`; energies become `H(q, p)` and the log-volume `n c t`.
pub fn project_trajectory(tr: &Trajectory, ext: &ExtendedHamiltonian) -> Result<Trajectory> {
    ext.function.arity().expect(tr.arity)?;
    let n = tr.arity.n();
    let states: Vec<Vec<f64>> = tr.states.iter().map(|x| x[..2 * n].to_vec()).collect();
    let diagnostics = tr
        .times
        .iter()
        .zip(&states)
        .zip(&tr.diagnostics)
        .map(|((t, x), d)| StepRecord {
            energy: ext.base.value(x),
            log_volume: n as f64 * ext.c * t,
            dt: d.dt,
        })
        .collect();
    Ok(Trajectory {
        arity: Arity::Symplectic(n),
        times: tr.times.clone(),
        states,
        diagnostics,
    })
}

/// Largest mismatch between `dz/dt` from fourth-order differences of the
/// stored history and `p dH/dp - H + c z`, over the uniform-step interior.
pub fn z_equation_residual(tr: &Trajectory, ext: &ExtendedHamiltonian) -> Result<f64> {
    ext.function.arity().expect(tr.arity)?;
    let n = tr.arity.n();
    let k = tr.states.len();
    if k < 5 {
        return Err(Error::NoData);
    }
    let dt = tr.diagnostics[1].dt;
    let mut worst: f64 = 0.0;
    let mut grad = vec![0.0; 2 * n];
    for i in 2..k - 2 {
        if (i - 1..=i + 2).any(|j| (tr.diagnostics[j].dt - dt).abs() > 1e-12 * dt) {
            continue;
        }
        let z = |j: usize| tr.states[j][2 * n];
        let zdot = (z(i - 2) - 8.0 * z(i - 1) + 8.0 * z(i + 1) - z(i + 2)) / (12.0 * dt);
        let x = &tr.states[i];
        ext.base.gradient(&x[..2 * n], &mut grad);
        let php: f64 = (0..n).map(|a| x[n + a] * grad[n + a]).sum();
        let rhs = php - ext.base.value(&x[..2 * n]) + ext.c * x[2 * n];
        worst = worst.max((zdot - rhs).abs());
    }
    Ok(worst)
}

fn require_contact_grid(spec: &GridSpec) -> Result<()> {
    if spec.ndim() != 3 {
        return Err(Error::GridMismatch(
            "projection needs a (q,p,z) grid".into(),
        ));
    }
    Ok(())
}

fn check_z_decay(spec: &GridSpec, values: &[f64]) -> Result<()> {
    let fraction = boundary_mass_fraction(spec, values, &[2], Z_EDGE);
    if fraction > BOUNDARY_MASS_THRESHOLD {
        return Err(Error::BoundaryMass {
            fraction,
            threshold: BOUNDARY_MASS_THRESHOLD,
        });
    }
    Ok(())
}

/// Midpoint-rule `int v dz` per `(q, p)` column.
fn integrate_z(spec: &GridSpec, values: &[f64], weight: Option<&[f64]>) -> Vec<f64> {
    let nz = spec.axis(2).cells;
    let hz = spec.axis(2).h();
    match weight {
        None => values
            .chunks(nz)
            .map(|col| pairwise_sum(col) * hz)
            .collect(),
        Some(w) => values
            .chunks(nz)
            .map(|col| {
                pairwise_sum(&col.iter().zip(w).map(|(v, w)| v * w).collect::<Vec<_>>()) * hz
            })
            .collect(),
    }
}

/// `(f, c*)` with `f = int f-bar dz` and `c* = -int z f-bar`. The returned
/// grid carries `c*` as well.
pub fn project_kinetic(fbar: &DensityGrid) -> Result<(DensityGrid, f64)> {
    require_contact_grid(&fbar.spec)?;
    check_z_decay(&fbar.spec, &fbar.values)?;
    let spec = &fbar.spec;
    let zs: Vec<f64> = (0..spec.axis(2).cells)
        .map(|i| spec.axis(2).coord(i))
        .collect();
    let base = spec.base();
    let values = integrate_z(spec, &fbar.values, None);
    let moments = integrate_z(spec, &fbar.values, Some(&zs));
    let cstar = -pairwise_sum(&moments) * base.cell_volume();
    Ok((DensityGrid::new(base, values)?.with_cstar(cstar), cstar))
}

/// `Pi_i = int Pi-bar_i dz` for the `q` and `p` components.
pub fn project_oneform(pi: &OneFormGrid) -> Result<OneFormGrid> {
    require_contact_grid(&pi.spec)?;
    let size: Vec<f64> = (0..pi.spec.len())
        .map(|i| pi.components.iter().map(|c| c[i].abs()).sum())
        .collect();
    check_z_decay(&pi.spec, &size)?;
    let comps = pi.components[..2]
        .iter()
        .map(|c| integrate_z(&pi.spec, c, None))
        .collect();
    OneFormGrid::new(pi.spec.base(), comps)
}

/// One row of a commuting-square table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareResidual {
    /// Cells along `q`.
    pub cells: usize,
    pub h: f64,
    pub steps: usize,
    /// L2 distance of the two routes' densities (or one-forms).
    pub l2: f64,
    /// `|c*|` mismatch of the two routes, zero where not applicable.
    pub cstar: f64,
}

fn steps_for(t_final: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(t_final > 0.0) {
        return Err(Error::InvalidArgument("need dt > 0 and T > 0".into()));
    }
    Ok((t_final / dt).round().max(1.0) as usize)
}

fn oneform_l2(a: &OneFormGrid, b: &OneFormGrid) -> Result<f64> {
    a.spec.require(&b.spec)?;
    let mut sq = Vec::with_capacity(a.spec.len());
    for (x, y) in a.components.iter().zip(&b.components) {
        sq.push(pairwise_sum(
            &x.iter()
                .zip(y)
                .map(|(u, v)| (u - v) * (u - v))
                .collect::<Vec<_>>(),
        ));
    }
    Ok((pairwise_sum(&sq) * a.spec.cell_volume()).sqrt())
}

/// Conformal momentum flow followed by `(f, c*)`, against the conformal
/// density flow of `(f, c*)` at time zero. Runs `round(T/dt)` RK4 steps.
pub fn conformal_intertwining(
    h: &ScalarFunction,
    c: f64,
    pi0: &OneFormGrid,
    t_final: f64,
    dt: f64,
) -> Result<SquareResidual> {
    let steps = steps_for(t_final, dt)?;
    let spec = &pi0.spec;
    let mut pi = pi0.clone();
    MomentumSolver::new(MomentumKind::Conformal { c }, h, spec)?.run(&mut pi, dt, steps)?;
    let via_momentum = conformal_dual(&pi)?;
    let mut f = conformal_dual(pi0)?;
    DensitySolver::new(DensityModel::Conformal { c }, h, spec)?.run(&mut f, dt, steps)?;
    Ok(SquareResidual {
        cells: spec.axis(0).cells,
        h: spec.axis(0).h(),
        steps,
        l2: via_momentum.l2_distance(&f)?,
        cstar: (via_momentum.cstar.unwrap_or(0.0) - f.cstar.unwrap_or(0.0)).abs(),
    })
}

/// Contact bracket-lift density flow of `f-bar` under `H-bar` followed by
/// projection, against the conformal density flow of the projected data.
pub fn kinetic_hierarchy_square(
    ext: &ExtendedHamiltonian,
    fbar0: &DensityGrid,
    t_final: f64,
    dt: f64,
) -> Result<SquareResidual> {
    let steps = steps_for(t_final, dt)?;
    let mut fbar = fbar0.clone();
    DensitySolver::new(DensityModel::ContactBracket, ext.function(), &fbar.spec)?
        .run(&mut fbar, dt, steps)?;
    let (projected, cstar) = project_kinetic(&fbar)?;
    let (mut f, _) = project_kinetic(fbar0)?;
    DensitySolver::new(DensityModel::Conformal { c: ext.c }, ext.base(), &f.spec)?
        .run(&mut f, dt, steps)?;
    Ok(SquareResidual {
        cells: f.spec.axis(0).cells,
        h: f.spec.axis(0).h(),
        steps,
        l2: projected.l2_distance(&f)?,
        cstar: (cstar - f.cstar.unwrap_or(0.0)).abs(),
    })
}

/// Contact momentum flow under `H-bar` followed by `project_oneform`,
/// against the conformal momentum flow of the projected one-form.
pub fn momentum_hierarchy_square(
    ext: &ExtendedHamiltonian,
    pi0: &OneFormGrid,
    t_final: f64,
    dt: f64,
) -> Result<SquareResidual> {
    let steps = steps_for(t_final, dt)?;
    let mut pibar = pi0.clone();
    MomentumSolver::new(MomentumKind::Contact, ext.function(), &pibar.spec)?
        .run(&mut pibar, dt, steps)?;
    let projected = project_oneform(&pibar)?;
    let mut pi = project_oneform(pi0)?;
    MomentumSolver::new(MomentumKind::Conformal { c: ext.c }, ext.base(), &pi.spec)?
        .run(&mut pi, dt, steps)?;
    Ok(SquareResidual {
        cells: pi.spec.axis(0).cells,
        h: pi.spec.axis(0).h(),
        steps,
        l2: oneform_l2(&projected, &pi)?,
        cstar: 0.0,
    })
}

/// `project_oneform` then `f = dPi_p/dq - dPi_q/dp`, against the contact
/// density of `Pi-bar` projected over `z`.
pub fn static_square(pibar: &OneFormGrid) -> Result<f64> {
    let left = crate::kinetic_momentum::density_from_oneform(&project_oneform(pibar)?)?;
    let fbar = crate::kinetic_momentum::contact_density_from_oneform(pibar, false)?;
    let right = DensityGrid::new(
        fbar.spec.base(),
        integrate_z(&fbar.spec, &fbar.values, None),
    )?;
    left.l2_distance(&right)
}

/// Observed orders `log(r_k / r_{k+1}) / log(h_k / h_{k+1})`.
pub fn convergence_orders(rows: &[SquareResidual]) -> Vec<f64> {
    rows.windows(2)
        .map(|w| (w[0].l2 / w[1].l2).ln() / (w[0].h / w[1].h).ln())
        .collect()
}
