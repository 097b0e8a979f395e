//! Scenario-driven batch runs: parse, dispatch to the solvers and verifiers,
//! write artifacts and record checks in a JSON-lines manifest.

pub mod output;
pub mod scenario;
pub mod verify;

use std::path::Path;
use std::time::Instant;

use serde_json::json;

use crate::error::{Error, Result};
use crate::geometry::{Arity, ContactState, PhaseState, ScalarFunction, State};
use crate::grid::{pairwise_sum, Axis, Boundary, DensityGrid, GridSpec};
use crate::hierarchy::{
    conformal_intertwining, convergence_orders, extend_hamiltonian, extension_bracket_residual,
    kinetic_hierarchy_square, momentum_hierarchy_square, project_trajectory, static_square,
    z_equation_residual, ExtendedHamiltonian, SquareResidual,
};
use crate::kinetic_density::{DensityModel, DensitySolver, BOUNDARY_MASS_THRESHOLD};
use crate::kinetic_momentum::{
    component_sums, conformal_dual, contact_density_from_oneform, cstar_from_oneform,
    density_from_oneform, MomentumKind, MomentumSolver, OneFormGrid,
};
use crate::particle::{
    divergence, fd_divergence, flow_volume_factor_with, integrate, FieldKind, Method,
};
use crate::polynomial::Polynomial;

pub use output::{emit_plot, PlotKind, RunManifest, Series};
pub use scenario::{parse_scenario, RunKind, Scenario, SchemaError, SchemaErrors};

use output::{csv_bytes, num};
use scenario::{
    DensityChoice, GridSettings, HamiltonianSpec, Model, MomentumChoice, ParticleModel,
};
use verify::algebra_check;

/// Order a commuting-square residual must reach under refinement.
pub const MIN_ORDER: f64 = 1.8;
/// Residuals below this sit at round-off and carry no order information.
pub const ROUND_OFF_FLOOR: f64 = 1e-10;

pub fn build_hamiltonian(spec: &HamiltonianSpec) -> Result<ScalarFunction> {
    Ok(match spec {
        HamiltonianSpec::Harmonic => ScalarFunction::harmonic(1),
        HamiltonianSpec::Plasma {
            mass,
            charge,
            potential,
        } => ScalarFunction::plasma(1, *mass, *charge, *potential),
        HamiltonianSpec::Polynomial(expr) => ScalarFunction::polynomial(
            Arity::Symplectic(1),
            expr.clone(),
            Polynomial::parse(expr, &["q", "p"])?,
        ),
    })
}

/// Grid from scenario settings; `cells` overrides the `q`/`p` resolution and
/// scales `z` in proportion.
pub fn build_grid(g: &GridSettings, contact: bool, cells: Option<usize>) -> Result<GridSpec> {
    let resize = |axis: (f64, f64, usize)| match cells {
        Some(m) => (
            axis.0,
            axis.1,
            ((axis.2 as f64) * m as f64 / g.q.2 as f64).round() as usize,
        ),
        None => axis,
    };
    let q = resize(g.q);
    let p = resize(g.p);
    let qb = if g.periodic_q {
        Boundary::Periodic
    } else {
        Boundary::Truncated
    };
    let mut axes = vec![
        Axis::new(q.0, q.1, q.2, qb),
        Axis::new(p.0, p.1, p.2, Boundary::Truncated),
    ];
    if contact {
        let z =
            g.z.ok_or_else(|| Error::InvalidArgument("contact runs need a z axis".into()))?;
        let z = resize(z);
        axes.push(Axis::new(z.0, z.1, z.2, Boundary::Truncated));
    }
    GridSpec::new(axes)
}

/// Runs a scenario into `out_dir`. Solver failures are recorded as a failed
/// `run` check; only I/O problems with the manifest itself return `Err`.
pub fn run_scenario(s: &Scenario, out_dir: &Path) -> Result<RunManifest> {
    let mut m = RunManifest::create(out_dir)?;
    run_into(s, &mut m)?;
    Ok(m)
}

/// As [`run_scenario`], recording into an existing manifest.
pub fn run_into(s: &Scenario, m: &mut RunManifest) -> Result<()> {
    m.push(json!({
        "record": "scenario",
        "kind": s.kind.name(),
        "seed": s.seed,
        "keys": s.echo,
    }))?;
    let start = Instant::now();
    let outcome = match s.kind {
        RunKind::Particle => run_particle(s, m),
        RunKind::KineticDensity => run_density(s, m),
        RunKind::KineticMomentum => run_momentum(s, m),
        RunKind::Verify => run_verify(s, m),
        RunKind::Hierarchy => run_hierarchy(s, m),
    };
    if let Err(e) = outcome {
        match e {
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => return Err(e),
            other => {
                log::error!("run aborted: {other}");
                m.abort(&other)?;
            }
        }
    }
    m.timing("total", start.elapsed().as_secs_f64())?;
    m.finish()
}

fn particle_setup(s: &Scenario, h: &ScalarFunction) -> Result<(FieldKind, ScalarFunction, State)> {
    let (q, p, z) = (vec![s.initial.q], vec![s.initial.p], s.initial.z);
    Ok(match s.model {
        Model::Particle(ParticleModel::Hamiltonian) => (
            FieldKind::Hamiltonian,
            h.clone(),
            PhaseState::new(q, p)?.into(),
        ),
        Model::Particle(ParticleModel::Conformal) => (
            FieldKind::Conformal { c: s.c },
            h.clone(),
            PhaseState::new(q, p)?.into(),
        ),
        Model::Particle(ParticleModel::Contact) => (
            FieldKind::Contact,
            extend_hamiltonian(h, s.c)?.function().clone(),
            ContactState::new(q, p, z)?.into(),
        ),
        Model::Particle(ParticleModel::StrictContact) => (
            FieldKind::StrictContact,
            extend_hamiltonian(h, 0.0)?.function().clone(),
            ContactState::new(q, p, z)?.into(),
        ),
        _ => {
            return Err(Error::InvalidArgument(
                "particle run without a particle model".into(),
            ))
        }
    })
}

fn run_particle(s: &Scenario, m: &mut RunManifest) -> Result<()> {
    let h = build_hamiltonian(&s.hamiltonian)?;
    let (kind, func, s0) = particle_setup(s, &h)?;
    let tr = integrate(kind, &func, &s0, s.t_final, s.dt, s.method)?;
    let contact = kind.is_contact();

    for (k, (t, d)) in tr.times.iter().zip(&tr.diagnostics).enumerate() {
        m.push(json!({"record": "step", "step": k, "t": t, "energy": d.energy, "log_volume": d.log_volume}))?;
    }
    let mut header = vec!["t", "q", "p"];
    if contact {
        header.push("z");
    }
    header.extend(["energy", "log_volume"]);
    let rows: Vec<Vec<String>> = tr
        .times
        .iter()
        .zip(&tr.states)
        .zip(&tr.diagnostics)
        .map(|((t, x), d)| {
            let mut r = vec![num(*t)];
            r.extend(x.iter().map(|v| num(*v)));
            r.push(num(d.energy));
            r.push(num(d.log_volume));
            r
        })
        .collect();
    m.write_file("trajectory.csv", &csv_bytes(&header, &rows)?)?;
    let energy = Series::new(
        "energy",
        tr.times
            .iter()
            .zip(&tr.diagnostics)
            .map(|(t, d)| (*t, d.energy))
            .collect(),
    );
    m.write_file(
        "energy.svg",
        &emit_plot(PlotKind::Line {
            title: "energy history",
            x_label: "t",
            y_label: if contact { "H-bar" } else { "H" },
            series: &[energy],
        })?,
    )?;
    let phase = Series::new("orbit", tr.states.iter().map(|x| (x[0], x[1])).collect());
    m.write_file(
        "phase.svg",
        &emit_plot(PlotKind::Line {
            title: "phase portrait",
            x_label: "q",
            y_label: "p",
            series: &[phase],
        })?,
    )?;

    let div = divergence(kind, &func, &s0)?;
    let fd = fd_divergence(kind, &func, &s0)?;
    m.check_at_most("divergence_vs_fd", (div - fd).abs(), 1e-6)?;

    let e0 = tr.diagnostics[0].energy;
    let scale = e0.abs().max(1.0);
    let drift = tr
        .diagnostics
        .iter()
        .map(|d| (d.energy - e0).abs() / scale)
        .fold(0.0, f64::max);
    match kind {
        FieldKind::Hamiltonian | FieldKind::StrictContact => {
            m.check_at_most("energy_drift", drift, s.energy_tol)?;
        }
        FieldKind::Conformal { c } => {
            let n = 1.0;
            let factor = flow_volume_factor_with(kind, &func, &s0, s.t_final, s.dt, s.method)?;
            let expect = (n * c * s.t_final).exp();
            m.check_at_most("volume_law", (factor / expect - 1.0).abs(), 1e-5)?;
            if c == 0.0 {
                m.check_at_most("energy_drift", drift, s.energy_tol)?;
            }
        }
        FieldKind::Contact => {
            // dH-bar/dt = c H-bar for H-bar = H - c z
            let law = tr
                .times
                .iter()
                .zip(&tr.diagnostics)
                .map(|(t, d)| {
                    (d.energy - e0 * (s.c * t).exp()).abs() / e0.abs().max(f64::MIN_POSITIVE)
                })
                .fold(0.0, f64::max);
            m.check_at_most("energy_law", law, s.energy_tol)?;
            if e0 != 0.0 {
                let v = flow_volume_factor_with(kind, &func, &s0, s.t_final, s.dt, Method::Rk4)?;
                let ratio = tr.diagnostics.last().expect("non-empty").energy / e0;
                m.check_at_most("preserved_quantity", (v * ratio.powi(-2) - 1.0).abs(), 1e-4)?;
            }
        }
    }
    Ok(())
}

fn gaussian(center: &[f64], width: f64) -> impl Fn(&[f64]) -> f64 + Sync + '_ {
    move |x| {
        let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
        (-r2 / (2.0 * width * width)).exp()
    }
}

/// `(q, p)` density for display: the grid itself or its `z`-integral.
fn display_density(f: &DensityGrid) -> DensityGrid {
    if f.spec.ndim() == 2 {
        return f.clone();
    }
    let nz = f.spec.axis(2).cells;
    let hz = f.spec.axis(2).h();
    let values = f.values.chunks(nz).map(|c| pairwise_sum(c) * hz).collect();
    DensityGrid {
        spec: f.spec.base(),
        values,
        cstar: f.cstar,
    }
}

/// Heatmap pixels with `q` across and `p` up.
fn heatmap(f: &DensityGrid) -> Result<Vec<u8>> {
    let (nq, np) = (f.spec.axis(0).cells, f.spec.axis(1).cells);
    let mut pixels = Vec::with_capacity(nq * np);
    for r in 0..np {
        for c in 0..nq {
            pixels.push(f.values[c * np + (np - 1 - r)]);
        }
    }
    emit_plot(PlotKind::Heatmap {
        width: nq,
        height: np,
        values: &pixels,
    })
}

fn snapshot_steps(steps: usize, snapshots: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..=snapshots).map(|k| k * steps / snapshots).collect();
    out.dedup();
    out
}

fn run_density(s: &Scenario, m: &mut RunManifest) -> Result<()> {
    let Model::Density(choice) = s.model else {
        return Err(Error::InvalidArgument(
            "kinetic run without a density model".into(),
        ));
    };
    let h = build_hamiltonian(&s.hamiltonian)?;
    let contact = s.model.is_contact();
    let spec = build_grid(s.grid.as_ref().expect("validated"), contact, None)?;
    let (model, func, decay) = match choice {
        DensityChoice::Vlasov => (DensityModel::Vlasov, h.clone(), 0.0),
        DensityChoice::Conformal => (DensityModel::Conformal { c: s.c }, h.clone(), s.c),
        DensityChoice::ContactVf => (
            DensityModel::ContactVf { flux: false },
            extend_hamiltonian(&h, s.c)?.function().clone(),
            0.0,
        ),
        DensityChoice::ContactFlux => (
            DensityModel::ContactVf { flux: true },
            extend_hamiltonian(&h, s.c)?.function().clone(),
            0.0,
        ),
        DensityChoice::ContactBracket => (
            DensityModel::ContactBracket,
            extend_hamiltonian(&h, s.c)?.function().clone(),
            s.c,
        ),
    };
    let mass_tol = s
        .mass_tol
        .unwrap_or(if choice == DensityChoice::ContactFlux {
            1e-10
        } else {
            1e-6
        });
    let center = [s.initial.q, s.initial.p, s.initial.z];
    let mut f = DensityGrid::sample(
        spec.clone(),
        gaussian(&center[..spec.ndim()], s.initial.width),
    );
    if matches!(model, DensityModel::Conformal { .. }) {
        f.cstar = Some(0.0);
    }
    let mut solver = DensitySolver::new(model, &func, &spec)?;
    let steps = ((s.t_final / s.dt).round() as usize).max(1);
    let snaps = snapshot_steps(steps, s.snapshots);
    let mass0 = f.mass();
    let mut rows = Vec::new();
    let mut mass_series = Vec::new();
    let timer = Instant::now();
    for k in 0..=steps {
        if k > 0 {
            solver.step(&mut f, s.dt)?;
            if let Some(i) = f.values.iter().position(|v| !v.is_finite()) {
                log::error!("non-finite density at cell {i}");
                return Err(Error::NonFiniteDensity(k));
            }
        }
        let t = k as f64 * s.dt;
        let mass = f.mass();
        let boundary = solver.boundary_monitor(&f);
        let (lo, hi) = f.min_max();
        mass_series.push((t, mass));
        m.push(json!({"record": "step", "step": k, "t": t, "mass": mass, "cstar": f.cstar, "boundary_fraction": boundary}))?;
        let hash = if snaps.contains(&k) {
            let hash = f.hash();
            let name = format!("density_{k:06}.pgm");
            m.write_file(&name, &heatmap(&display_density(&f))?)?;
            m.push(json!({"record": "snapshot", "step": k, "t": t, "hash": hash, "cstar": f.cstar, "file": name}))?;
            hash
        } else {
            String::new()
        };
        rows.push(vec![
            k.to_string(),
            num(t),
            num(mass),
            f.cstar.map(num).unwrap_or_default(),
            num(f.l2_norm()),
            num(lo),
            num(hi),
            num(boundary),
            hash,
        ]);
    }
    m.timing("solve", timer.elapsed().as_secs_f64())?;
    m.write_file(
        "diagnostics.csv",
        &csv_bytes(
            &[
                "step",
                "t",
                "mass",
                "cstar",
                "l2",
                "min",
                "max",
                "boundary_fraction",
                "hash",
            ],
            &rows,
        )?,
    )?;
    m.write_file(
        "mass.svg",
        &emit_plot(PlotKind::Line {
            title: "mass history",
            x_label: "t",
            y_label: "mass",
            series: &[Series::new("mass", mass_series)],
        })?,
    )?;

    let t_end = steps as f64 * s.dt;
    let expect = mass0 * (-decay * t_end).exp();
    m.check_at_most("mass_law", ((f.mass() - expect) / mass0).abs(), mass_tol)?;
    m.check_at_most(
        "boundary_mass",
        solver.boundary_monitor(&f),
        BOUNDARY_MASS_THRESHOLD,
    )?;
    Ok(())
}

/// `Pi = (-(p - p0) dq + (q - q0) dp) g / 2` with a Gaussian `g`, times a
/// Gaussian in `z` on contact grids (with `Pi_z = 0`).
pub fn rotational_oneform(spec: &GridSpec, center: [f64; 3], width: f64) -> OneFormGrid {
    let contact = spec.ndim() == 3;
    OneFormGrid::sample(spec.clone(), move |x, out| {
        let (dq, dp) = (x[0] - center[0], x[1] - center[1]);
        let mut g = (-(dq * dq + dp * dp) / (2.0 * width * width)).exp();
        if contact {
            let dz = x[2] - center[2];
            g *= (-(dz * dz) / (2.0 * width * width)).exp();
            out[2] = 0.0;
        }
        out[0] = -0.5 * dp * g;
        out[1] = 0.5 * dq * g;
    })
}

fn momentum_density(pi: &OneFormGrid) -> Result<DensityGrid> {
    if pi.spec.ndim() == 3 {
        contact_density_from_oneform(pi, true)
    } else {
        Ok(density_from_oneform(pi)?.with_cstar(cstar_from_oneform(pi)?))
    }
}

fn run_momentum(s: &Scenario, m: &mut RunManifest) -> Result<()> {
    let Model::Momentum(choice) = s.model else {
        return Err(Error::InvalidArgument(
            "momentum run without a momentum model".into(),
        ));
    };
    let h = build_hamiltonian(&s.hamiltonian)?;
    let contact = choice == MomentumChoice::Contact;
    let spec = build_grid(s.grid.as_ref().expect("validated"), contact, None)?;
    let (kind, func, c_eff) = match choice {
        MomentumChoice::Hamiltonian => (MomentumKind::Hamiltonian, h.clone(), 0.0),
        MomentumChoice::Conformal => (MomentumKind::Conformal { c: s.c }, h.clone(), s.c),
        MomentumChoice::Contact => (
            MomentumKind::Contact,
            extend_hamiltonian(&h, s.c)?.function().clone(),
            s.c,
        ),
    };
    let pi0 = rotational_oneform(
        &spec,
        [s.initial.q, s.initial.p, s.initial.z],
        s.initial.width,
    );
    let mut pi = pi0.clone();
    let solver = MomentumSolver::new(kind, &func, &spec)?;
    if s.dt > solver.max_stable_dt() {
        log::warn!(
            "dt = {} exceeds the CFL estimate {:.3e}",
            s.dt,
            solver.max_stable_dt()
        );
    }
    let steps = ((s.t_final / s.dt).round() as usize).max(1);
    let snaps = snapshot_steps(steps, s.snapshots);
    let mut rows = Vec::new();
    let mut norm = Vec::new();
    let timer = Instant::now();
    for k in 0..=steps {
        if k > 0 {
            solver.step(&mut pi, s.dt)?;
            if pi
                .components
                .iter()
                .any(|c| c.iter().any(|v| !v.is_finite()))
            {
                return Err(Error::NonFiniteDensity(k));
            }
        }
        let t = k as f64 * s.dt;
        let sums = component_sums(&pi);
        let max_abs = pi.max_abs();
        norm.push((t, max_abs));
        let cstar = if contact {
            None
        } else {
            Some(cstar_from_oneform(&pi)?)
        };
        m.push(json!({"record": "step", "step": k, "t": t, "max_abs": max_abs, "component_sums": sums, "cstar": cstar}))?;
        let mut hash = String::new();
        if snaps.contains(&k) {
            let f = momentum_density(&pi)?;
            hash = f.hash();
            let name = format!("density_{k:06}.pgm");
            m.write_file(&name, &heatmap(&f)?)?;
            m.push(json!({"record": "snapshot", "step": k, "t": t, "hash": hash, "file": name}))?;
        }
        let mut row = vec![k.to_string(), num(t), num(max_abs)];
        row.extend(sums.iter().map(|v| num(*v)));
        if sums.len() == 2 {
            row.push(String::new());
        }
        row.push(cstar.map(num).unwrap_or_default());
        row.push(hash);
        rows.push(row);
    }
    m.timing("solve", timer.elapsed().as_secs_f64())?;
    m.write_file(
        "diagnostics.csv",
        &csv_bytes(
            &[
                "step", "t", "max_abs", "sum_q", "sum_p", "sum_z", "cstar", "hash",
            ],
            &rows,
        )?,
    )?;
    m.write_file(
        "norm.svg",
        &emit_plot(PlotKind::Line {
            title: "one-form size",
            x_label: "t",
            y_label: "max |Pi|",
            series: &[Series::new("max |Pi|", norm)],
        })?,
    )?;

    if contact {
        let scale = momentum_density(&pi)?.l2_norm().max(f64::MIN_POSITIVE);
        m.check_at_most(
            "static_square",
            static_square(&pi)? / scale,
            s.intertwining_tol,
        )?;
    } else {
        let r = conformal_intertwining(&h, c_eff, &pi0, steps as f64 * s.dt, s.dt)?;
        let scale = conformal_dual(&pi)?.l2_norm().max(f64::MIN_POSITIVE);
        m.check_at_most("intertwining", r.l2 / scale, s.intertwining_tol)?;
    }
    Ok(())
}

fn run_verify(s: &Scenario, m: &mut RunManifest) -> Result<()> {
    let v = &s.verify;
    let mut kinds: Vec<String> = v.kinds.clone();
    if v.jacobi {
        kinds.push("jacobi_symplectic".into());
        kinds.push("jacobi_contact".into());
    }
    if v.leibniz {
        kinds.push("leibniz".into());
    }
    let mut lines = Vec::new();
    let mut rows = Vec::new();
    for kind in &kinds {
        let timer = Instant::now();
        let c = algebra_check(kind, v.instances, v.degree, s.seed)?;
        m.timing(kind, timer.elapsed().as_secs_f64())?;
        lines.push(serde_json::to_string(&c)?);
        rows.push(vec![
            c.kind.clone(),
            c.instances.to_string(),
            num(c.residual),
            num(c.tolerance),
            c.pass.to_string(),
        ]);
        m.check(kind, c.residual, c.tolerance, c.pass)?;
    }
    let mut report = lines.join("\n");
    report.push('\n');
    m.write_file("verify.jsonl", report.as_bytes())?;
    m.write_file(
        "residuals.csv",
        &csv_bytes(
            &["kind", "instances", "residual", "tolerance", "pass"],
            &rows,
        )?,
    )?;
    Ok(())
}

fn square_rows(name: &str, rows: &[SquareResidual], out: &mut Vec<Vec<String>>) {
    let orders = convergence_orders(rows);
    for (i, r) in rows.iter().enumerate() {
        let order = if i == 0 {
            String::new()
        } else {
            num(orders[i - 1])
        };
        out.push(vec![
            name.to_string(),
            r.cells.to_string(),
            num(r.h),
            r.steps.to_string(),
            num(r.l2),
            num(r.cstar),
            order,
        ]);
    }
}

/// Passes when the last observed order reaches [`MIN_ORDER`] or the finest
/// residual is already at round-off.
fn order_check(m: &mut RunManifest, name: &str, rows: &[SquareResidual]) -> Result<()> {
    let Some(last) = rows.last() else {
        return Ok(());
    };
    if rows.len() < 2 {
        return m.check_at_most(name, last.l2, ROUND_OFF_FLOOR).map(|_| ());
    }
    let order = *convergence_orders(rows).last().expect("two rows");
    let pass = order >= MIN_ORDER || last.l2 <= ROUND_OFF_FLOOR;
    m.push(json!({
        "record": "check",
        "name": name,
        "value": if order.is_finite() { json!(order) } else { serde_json::Value::Null },
        "tolerance": MIN_ORDER,
        "finest_residual": last.l2,
        "pass": pass,
    }))
}

/// Particle-level projection: contact run of `H - c z` against the
/// conformal run, max `|(q, p)|` difference and the `z` equation residual.
pub fn particle_projection(
    ext: &ExtendedHamiltonian,
    q: f64,
    p: f64,
    z: f64,
    t_final: f64,
    dt: f64,
) -> Result<(f64, f64)> {
    let s = ContactState::new(vec![q], vec![p], z)?;
    let contact = integrate(
        FieldKind::Contact,
        ext.function(),
        &s.clone().into(),
        t_final,
        dt,
        Method::Rk4,
    )?;
    let conformal = integrate(
        FieldKind::Conformal { c: ext.c() },
        ext.base(),
        &s.project().into(),
        t_final,
        dt,
        Method::Rk4,
    )?;
    let proj = project_trajectory(&contact, ext)?;
    let worst = proj
        .states
        .iter()
        .zip(&conformal.states)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    Ok((worst, z_equation_residual(&contact, ext)?))
}

fn run_hierarchy(s: &Scenario, m: &mut RunManifest) -> Result<()> {
    let h = build_hamiltonian(&s.hamiltonian)?;
    let ext = extend_hamiltonian(&h, s.c)?;
    let grid = s.grid.as_ref().expect("validated");
    let hs = &s.hierarchy;

    let (dev, zres) =
        particle_projection(&ext, s.initial.q, s.initial.p, s.initial.z, s.t_final, s.dt)?;
    m.check_at_most("particle_projection", dev, 1e-10)?;
    m.check_at_most("z_equation", zres, 1e-6)?;

    if h.as_polynomial().is_some() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s.seed);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let f = ScalarFunction::polynomial(
                Arity::Symplectic(1),
                "F",
                Polynomial::random(2, 3, &mut rng),
            );
            let ef = extend_hamiltonian(&f, rng.gen_range(-1.0..1.0))?;
            let states: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            worst = worst.max(extension_bracket_residual(&ef, &ext, &states)?);
        }
        m.check_at_most("extension_bracket", worst, 1e-8)?;
    }

    let center = [s.initial.q, s.initial.p, s.initial.z];
    let w = s.initial.width;
    let (mut kin, mut mom, mut conf) = (Vec::new(), Vec::new(), Vec::new());
    let mut static_worst: f64 = 0.0;
    let timer = Instant::now();
    for &level in &hs.levels {
        let spec3 = build_grid(grid, true, Some(level))?;
        let spec2 = spec3.base();
        let dt = hs.courant * spec3.axis(0).h();
        let fbar = DensityGrid::sample(spec3.clone(), gaussian(&center, w));
        kin.push(kinetic_hierarchy_square(&ext, &fbar, hs.t_final, dt)?);
        let pibar = rotational_oneform(&spec3, center, w);
        mom.push(momentum_hierarchy_square(&ext, &pibar, hs.t_final, dt)?);
        static_worst = static_worst.max(static_square(&pibar)?);
        let pi = rotational_oneform(&spec2, center, w);
        conf.push(conformal_intertwining(&h, s.c, &pi, hs.t_final, dt)?);
    }
    m.timing("squares", timer.elapsed().as_secs_f64())?;
    let mut rows = Vec::new();
    square_rows("kinetic", &kin, &mut rows);
    square_rows("momentum", &mom, &mut rows);
    square_rows("momentum_density", &conf, &mut rows);
    for r in &rows {
        m.push(json!({"record": "square", "square": r[0], "cells": r[1], "h": r[2], "steps": r[3], "l2": r[4], "cstar": r[5], "order": r[6]}))?;
    }
    m.write_file(
        "residuals.csv",
        &csv_bytes(
            &["square", "cells", "h", "steps", "l2", "cstar", "order"],
            &rows,
        )?,
    )?;
    let series: Vec<Series> = [
        ("kinetic", &kin),
        ("momentum", &mom),
        ("momentum_density", &conf),
    ]
    .iter()
    .map(|(name, rs)| {
        Series::new(
            *name,
            rs.iter()
                .map(|r| (r.h.log10(), r.l2.max(1e-300).log10()))
                .collect(),
        )
    })
    .collect();
    m.write_file(
        "convergence.svg",
        &emit_plot(PlotKind::Line {
            title: "commuting-square residuals",
            x_label: "log10 h",
            y_label: "log10 L2 residual",
            series: &series,
        })?,
    )?;
    order_check(m, "kinetic_square_order", &kin)?;
    order_check(m, "momentum_square_order", &mom)?;
    order_check(m, "momentum_density_order", &conf)?;
    m.check_at_most("static_square", static_worst, 1e-8)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(text: &str) -> (RunManifest, tempfile::TempDir) {
        let dir = tempfile::tempdir().unwrap();
        let s = parse_scenario(text).unwrap();
        let m = run_scenario(&s, dir.path()).unwrap();
        (m, dir)
    }

    #[test]
    fn particle_run_writes_artifacts() {
        let (m, dir) = run("kind = particle\nc = 0.2\nintegrator.dt = 1e-2\nintegrator.T = 1\n");
        assert_eq!(m.exit_code(), 0, "{:?}", m.failed_checks());
        for f in [
            "trajectory.csv",
            "energy.svg",
            "phase.svg",
            "manifest.jsonl",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let files: Vec<_> = m
            .records()
            .iter()
            .filter(|r| r["record"] == "file")
            .collect();
        assert_eq!(files.len(), 3);
    }

    #[test]
    fn conformal_zero_matches_vlasov_hashes() {
        let base = "kind = kinetic_density\ninitial.width = 0.8\nintegrator.dt = 0.01\nintegrator.T = 0.5\ngrid.q = -6, 6, 48\ngrid.p = -6, 6, 48\n";
        let (a, _da) = run(&format!("{base}model = conformal\nc = 0\n"));
        let (b, _db) = run(&format!("{base}model = vlasov\n"));
        let hashes = |m: &RunManifest| -> Vec<String> {
            m.records()
                .iter()
                .filter(|r| r["record"] == "snapshot")
                .map(|r| r["hash"].as_str().unwrap().to_string())
                .collect()
        };
        assert_eq!(a.exit_code(), 0, "{:?}", a.checks().collect::<Vec<_>>());
        assert_eq!(hashes(&a).len(), 5);
        assert_eq!(hashes(&a), hashes(&b));
        let strip = |m: &RunManifest| -> Vec<f64> {
            m.records()
                .iter()
                .filter(|r| r["record"] == "step")
                .map(|r| r["mass"].as_f64().unwrap())
                .collect()
        };
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn verify_run_has_five_entries() {
        let (m, dir) = run("kind = verify\nverify.instances = 4\nseed = 3\n");
        assert_eq!(m.checks().count(), 5);
        assert_eq!(m.exit_code(), 0);
        let report = std::fs::read_to_string(dir.path().join("verify.jsonl")).unwrap();
        assert_eq!(report.lines().count(), 5);
        assert!(report.contains("\"tolerance\":1e-6") || report.contains("\"tolerance\":0.000001"));
    }

    #[test]
    fn runtime_abort_exits_four() {
        let (m, _d) = run("kind = particle\nmodel = hamiltonian\nhamiltonian.builtin = polynomial\nhamiltonian.expr = q^2*p^2\ninitial.q = 30\ninitial.p = 30\nintegrator.dt = 0.1\nintegrator.T = 5\n");
        assert_eq!(m.exit_code(), 4);
        assert!(m.aborted().unwrap().contains("blew up"));
    }

    #[test]
    fn hierarchy_run_emits_table() {
        let text = "kind = hierarchy\nc = 0.1\ninitial.q = 0.5\ninitial.p = 0\ninitial.z = 0\ninitial.width = 1\nintegrator.dt = 1e-2\nintegrator.T = 2\ngrid.q = -6, 6, 16\ngrid.p = -6, 6, 16\ngrid.z = -9, 9, 24\nhierarchy.levels = 16, 32\nhierarchy.T = 0.2\n";
        let (m, dir) = run(text);
        assert_eq!(m.exit_code(), 0, "{:?}", m.checks().collect::<Vec<_>>());
        let table = std::fs::read_to_string(dir.path().join("residuals.csv")).unwrap();
        assert_eq!(table.lines().count(), 7);
    }
}
