//! Momentum-form (one-form) kinetic dynamics and the maps from momenta to
//! densities.
//!
//! A one-form `Pi = Pi_q dq + Pi_p dp [+ Pi_z dz]` is stored as one array per
//! component. The evolution is the Lie-Poisson flow
//! `dPi/dt = -L_X Pi - div(X) Pi` for the particle field `X`, with the Lie
//! derivative in coordinates `(L_X Pi)_a = X^b d_b Pi_a + Pi_b d_a X^b`.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::ScalarFunction;
use crate::grid::{grid_dot, grid_sum, DensityGrid, Differ, GridSpec, StencilKind};
use crate::particle::{field_flat, FieldKind};

const N: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct OneFormGrid {
    pub spec: GridSpec,
    /// `[Pi_q, Pi_p]` or `[Pi_q, Pi_p, Pi_z]`.
    pub components: Vec<Vec<f64>>,
}

impl OneFormGrid {
    pub fn new(spec: GridSpec, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != spec.ndim() {
            return Err(Error::GridMismatch(format!(
                "{} components on a {}-axis grid",
                components.len(),
                spec.ndim()
            )));
        }
        for c in &components {
            if c.len() != spec.len() {
                return Err(Error::GridMismatch(format!(
                    "component of length {} for {} cells",
                    c.len(),
                    spec.len()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(
                    "one-form has non-finite entries".into(),
                ));
            }
        }
        Ok(Self { spec, components })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        let components = vec![vec![0.0; spec.len()]; spec.ndim()];
        Self { spec, components }
    }

    /// Samples `f(x, out)`, which writes one value per component.
    pub fn sample<F: Fn(&[f64], &mut [f64]) + Sync>(spec: GridSpec, f: F) -> Self {
        let components = spec.sample_many(spec.ndim(), f);
        Self { spec, components }
    }

    pub fn scaled_add(&mut self, other: &OneFormGrid, a: f64) -> Result<()> {
        self.spec.require(&other.spec)?;
        for (c, o) in self.components.iter_mut().zip(&other.components) {
            c.iter_mut().zip(o).for_each(|(x, y)| *x += a * y);
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A vector field sampled at cell centres, one array per component.
#[derive(Debug, Clone)]
pub struct SampledField {
    pub spec: GridSpec,
    pub components: Vec<Vec<f64>>,
}

impl SampledField {
    pub fn from_kind(kind: FieldKind, h: &ScalarFunction, spec: &GridSpec) -> Result<Self> {
        spec.require_arity(h.arity())?;
        if kind.is_contact() != h.arity().is_contact() {
            return Err(Error::ArityMismatch {
                expected: format!("{kind:?}"),
                found: h.arity().to_string(),
            });
        }
        let components = spec.sample_many(spec.ndim(), |x, out| {
            out.copy_from_slice(&field_flat(kind, h, x))
        });
        Ok(Self {
            spec: spec.clone(),
            components,
        })
    }

    pub fn from_fn<F: Fn(&[f64], &mut [f64]) + Sync>(spec: &GridSpec, f: F) -> Self {
        Self {
            spec: spec.clone(),
            components: spec.sample_many(spec.ndim(), f),
        }
    }
}

/// Precomputed `X` and `d_a X^b` for repeated Lie derivatives.
#[derive(Debug, Clone)]
struct LieOperator {
    differ: Differ,
    field: Vec<Vec<f64>>,
    /// `jac[a][b] = d_a X^b`
    jac: Vec<Vec<Vec<f64>>>,
}

impl LieOperator {
    fn new(field: &SampledField) -> Self {
        let differ = Differ::new(&field.spec, StencilKind::Central);
        let d = field.spec.ndim();
        let jac = (0..d)
            .map(|a| {
                (0..d)
                    .map(|b| differ.derivative(a, &field.components[b]))
                    .collect()
            })
            .collect();
        Self {
            differ,
            field: field.components.clone(),
            jac,
        }
    }

    /// `out_a += sign * (L_X Pi)_a`
    fn accumulate(&self, pi: &[Vec<f64>], sign: f64, out: &mut [Vec<f64>], scratch: &mut [f64]) {
        let d = pi.len();
        let row = self.differ.spec().row_len();
        for a in 0..d {
            for b in 0..d {
                self.differ.apply(b, &pi[a], scratch);
                let xb = &self.field[b];
                let pb = &pi[b];
                let jab = &self.jac[a][b];
                out[a]
                    .par_chunks_mut(row)
                    .zip(scratch.par_chunks(row))
                    .enumerate()
                    .for_each(|(r, (o, dpi))| {
                        let base = r * row;
                        for j in 0..o.len() {
                            let i = base + j;
                            o[j] += sign * (xb[i] * dpi[j] + pb[i] * jab[i]);
                        }
                    });
            }
        }
    }
}

/// `L_X Pi` with fourth-order differences for both `Pi` and `X`.
pub fn lie_derivative_oneform(x: &SampledField, pi: &OneFormGrid) -> Result<OneFormGrid> {
    x.spec.require(&pi.spec)?;
    let op = LieOperator::new(x);
    let mut out = OneFormGrid::zeros(pi.spec.clone());
    let mut scratch = vec![0.0; pi.spec.len()];
    op.accumulate(&pi.components, 1.0, &mut out.components, &mut scratch);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentumKind {
    Hamiltonian,
    Conformal { c: f64 },
    Contact,
}

impl MomentumKind {
    fn field_kind(self) -> FieldKind {
        match self {
            MomentumKind::Hamiltonian => FieldKind::Hamiltonian,
            MomentumKind::Conformal { c } if c == 0.0 => FieldKind::Hamiltonian,
            MomentumKind::Conformal { c } => FieldKind::Conformal { c },
            MomentumKind::Contact => FieldKind::Contact,
        }
    }
}

/// RK4 stepper for the momentum equation of one kind and Hamiltonian.
#[derive(Debug, Clone)]
pub struct MomentumSolver {
    kind: MomentumKind,
    spec: GridSpec,
    lie: LieOperator,
    /// `-div X` per cell, `None` when it vanishes.
    damping: Option<Vec<f64>>,
    max_stable_dt: f64,
    cfl_warned: Arc<AtomicBool>,
}

impl MomentumSolver {
    pub fn new(kind: MomentumKind, h: &ScalarFunction, spec: &GridSpec) -> Result<Self> {
        let field = SampledField::from_kind(kind.field_kind(), h, spec)?;
        let damping = match kind {
            MomentumKind::Hamiltonian => None,
            MomentumKind::Conformal { c } if c == 0.0 => None,
            MomentumKind::Conformal { c } => Some(vec![-c * N; spec.len()]),
            MomentumKind::Contact => Some(spec.sample(|x| (N + 1.0) * h.reeb_derivative(x))),
        };
        let mut max_stable_dt = f64::INFINITY;
        for (k, v) in field.components.iter().enumerate() {
            let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if vmax > 0.0 {
                max_stable_dt = max_stable_dt.min(0.5 * spec.axis(k).h() / vmax);
            }
        }
        Ok(Self {
            kind,
            spec: spec.clone(),
            lie: LieOperator::new(&field),
            damping,
            max_stable_dt,
            cfl_warned: Arc::default(),
        })
    }

    pub fn kind(&self) -> MomentumKind {
        self.kind
    }

    pub fn max_stable_dt(&self) -> f64 {
        self.max_stable_dt
    }

    fn rate_into(&self, pi: &[Vec<f64>], out: &mut [Vec<f64>], scratch: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(pi) {
            match &self.damping {
                Some(s) => o
                    .iter_mut()
                    .zip(p)
                    .zip(s)
                    .for_each(|((o, p), s)| *o = s * p),
                None => o.iter_mut().for_each(|o| *o = 0.0),
            }
        }
        self.lie.accumulate(pi, -1.0, out, scratch);
    }

    pub fn rate(&self, pi: &OneFormGrid) -> Result<OneFormGrid> {
        self.spec.require(&pi.spec)?;
        let mut out = OneFormGrid::zeros(pi.spec.clone());
        let mut scratch = vec![0.0; pi.spec.len()];
        self.rate_into(&pi.components, &mut out.components, &mut scratch);
        Ok(out)
    }

    pub fn step(&self, pi: &mut OneFormGrid, dt: f64) -> Result<()> {
        self.spec.require(&pi.spec)?;
        if dt > self.max_stable_dt * (1.0 + 1e-12) && !self.cfl_warned.swap(true, Ordering::Relaxed)
        {
            log::warn!(
                "dt = {dt} exceeds the CFL estimate {:.3e}",
                self.max_stable_dt
            );
        }
        let d = pi.components.len();
        let len = self.spec.len();
        let mut scratch = vec![0.0; len];
        let mut ks: Vec<Vec<Vec<f64>>> = vec![vec![vec![0.0; len]; d]; 4];
        let mut trial = pi.components.clone();
        for stage in 0..4 {
            let a = [0.0, 0.5, 0.5, 1.0][stage] * dt;
            if stage > 0 {
                for c in 0..d {
                    for i in 0..len {
                        trial[c][i] = pi.components[c][i] + a * ks[stage - 1][c][i];
                    }
                }
            }
            let (_, rest) = ks.split_at_mut(stage);
            self.rate_into(&trial, &mut rest[0], &mut scratch);
        }
        let w = dt / 6.0;
        for c in 0..d {
            for i in 0..len {
                pi.components[c][i] +=
                    w * (ks[0][c][i] + 2.0 * ks[1][c][i] + 2.0 * ks[2][c][i] + ks[3][c][i]);
            }
        }
        Ok(())
    }

    pub fn run(&self, pi: &mut OneFormGrid, dt: f64, steps: usize) -> Result<()> {
        for s in 0..steps {
            self.step(pi, dt)?;
            if pi
                .components
                .iter()
                .any(|c| c.iter().any(|v| !v.is_finite()))
            {
                return Err(Error::NonFiniteDensity(s + 1));
            }
        }
        Ok(())
    }
}

/// Right-hand side of the momentum equation:
/// `-L_X Pi` (Hamiltonian), `-L_{X^c} Pi - c n Pi` (conformal),
/// `-L_xi Pi + (n+1) R(H) Pi` (contact).
pub fn momentum_rhs(
    kind: MomentumKind,
    pi: &OneFormGrid,
    h: &ScalarFunction,
) -> Result<OneFormGrid> {
    MomentumSolver::new(kind, h, &pi.spec)?.rate(pi)
}

/// `f = div(sharp Pi) = d Pi_p / dq - d Pi_q / dp`.
pub fn density_from_oneform(pi: &OneFormGrid) -> Result<DensityGrid> {
    if pi.spec.ndim() != 2 {
        return Err(Error::GridMismatch(
            "density_from_oneform needs a (q,p) grid".into(),
        ));
    }
    let d = Differ::new(&pi.spec, StencilKind::Central);
    let a = d.derivative(0, &pi.components[1]);
    let b = d.derivative(1, &pi.components[0]);
    let values = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    Ok(DensityGrid {
        spec: pi.spec.clone(),
        values,
        cstar: None,
    })
}

/// `c* = int <p dq, sharp Pi> = int p Pi_p`.
pub fn cstar_from_oneform(pi: &OneFormGrid) -> Result<f64> {
    if pi.spec.ndim() != 2 {
        return Err(Error::GridMismatch(
            "cstar_from_oneform needs a (q,p) grid".into(),
        ));
    }
    let p = pi.spec.sample(|x| x[1]);
    Ok(grid_dot(&pi.spec, &p, &pi.components[1]) * pi.spec.cell_volume())
}

/// Both conformal dual variables `(f, c*)` of a symplectic one-form.
pub fn conformal_dual(pi: &OneFormGrid) -> Result<DensityGrid> {
    let c = cstar_from_oneform(pi)?;
    Ok(density_from_oneform(pi)?.with_cstar(c))
}

/// Contact density of a one-form on `(q, p, z)`:
/// `d Pi_p/dq - d Pi_q/dp - p (d Pi_z/dp - d Pi_p/dz) - (n-1) Pi_z`.
/// With `strict`, adds `d Pi_z/dz` and integrates over `z`, returning a
/// density on the `(q, p)` grid.
pub fn contact_density_from_oneform(pi: &OneFormGrid, strict: bool) -> Result<DensityGrid> {
    if pi.spec.ndim() != 3 {
        return Err(Error::GridMismatch(
            "contact density needs a (q,p,z) grid".into(),
        ));
    }
    let spec = &pi.spec;
    let d = Differ::new(spec, StencilKind::Central);
    let [pq, pp, pz] = [&pi.components[0], &pi.components[1], &pi.components[2]];
    let dq_pp = d.derivative(0, pp);
    let dp_pq = d.derivative(1, pq);
    let dp_pz = d.derivative(1, pz);
    let dz_pp = d.derivative(2, pp);
    let p = spec.sample(|x| x[1]);
    let mut values: Vec<f64> = (0..spec.len())
        .map(|i| dq_pp[i] - dp_pq[i] - p[i] * (dp_pz[i] - dz_pp[i]) - (N - 1.0) * pz[i])
        .collect();
    if !strict {
        return Ok(DensityGrid {
            spec: spec.clone(),
            values,
            cstar: None,
        });
    }
    let dz_pz = d.derivative(2, pz);
    values.iter_mut().zip(&dz_pz).for_each(|(v, a)| *v += a);
    let base = spec.base();
    let nz = spec.axis(2).cells;
    let hz = spec.axis(2).h();
    let reduced = values
        .chunks(nz)
        .map(|col| crate::grid::pairwise_sum(col) * hz)
        .collect();
    Ok(DensityGrid {
        spec: base,
        values: reduced,
        cstar: None,
    })
}

/// Total of all components, for linearity checks.
pub fn component_sums(pi: &OneFormGrid) -> Vec<f64> {
    pi.components
        .iter()
        .map(|c| grid_sum(&pi.spec, c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Arity;
    use crate::grid::{Axis, Boundary};
    use crate::kinetic_density::{DensityModel, DensitySolver};
    use crate::polynomial::Polynomial;

    fn sym(text: &str) -> ScalarFunction {
        ScalarFunction::polynomial(
            Arity::Symplectic(1),
            text,
            Polynomial::parse(text, &["q", "p"]).unwrap(),
        )
    }

    fn con(text: &str) -> ScalarFunction {
        ScalarFunction::polynomial(
            Arity::Contact(1),
            text,
            Polynomial::parse(text, &["q", "p", "z"]).unwrap(),
        )
    }

    fn boxed(m: usize) -> GridSpec {
        GridSpec::new(vec![
            Axis::new(-2.0, 2.0, m, Boundary::Truncated),
            Axis::new(-2.0, 2.0, m, Boundary::Truncated),
        ])
        .unwrap()
    }

    fn boxed3(m: usize) -> GridSpec {
        GridSpec::new(vec![
            Axis::new(-2.0, 2.0, m, Boundary::Truncated),
            Axis::new(-2.0, 2.0, m, Boundary::Truncated),
            Axis::new(-2.0, 2.0, m, Boundary::Truncated),
        ])
        .unwrap()
    }

    fn max_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn p_dq(spec: GridSpec) -> OneFormGrid {
        OneFormGrid::sample(spec, |x, out| {
            out.iter_mut().for_each(|o| *o = 0.0);
            out[0] = x[1];
        })
    }

    #[test]
    fn lie_derivative_examples() {
        let spec = boxed(16);
        let pi = p_dq(spec.clone());
        // X = d/dq
        let x = SampledField::from_kind(FieldKind::Hamiltonian, &sym("p"), &spec).unwrap();
        let l = lie_derivative_oneform(&x, &pi).unwrap();
        assert!(l.max_abs() < 1e-12);
        // X = q d/dq, Pi = q dq
        let x = SampledField::from_fn(&spec, |x, out| {
            out[0] = x[0];
            out[1] = 0.0;
        });
        let pi = OneFormGrid::sample(spec.clone(), |x, out| {
            out[0] = x[0];
            out[1] = 0.0;
        });
        let l = lie_derivative_oneform(&x, &pi).unwrap();
        let want = spec.sample(|x| 2.0 * x[0]);
        assert!(l.components[0]
            .iter()
            .zip(&want)
            .all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(max_abs(&l.components[1]) < 1e-12);
        // X = Z = -p d/dp on p dq gives -p dq
        let z = SampledField::from_fn(&spec, |x, out| {
            out[0] = 0.0;
            out[1] = -x[1];
        });
        let l = lie_derivative_oneform(&z, &p_dq(spec.clone())).unwrap();
        let want = spec.sample(|x| -x[1]);
        assert!(l.components[0]
            .iter()
            .zip(&want)
            .all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn momentum_examples() {
        let spec = boxed(16);
        let pi = p_dq(spec.clone());
        assert!(
            momentum_rhs(MomentumKind::Hamiltonian, &pi, &sym("p"))
                .unwrap()
                .max_abs()
                < 1e-12
        );
        // L_{X^c}(p dq) = c p dq, so the rate is -c p dq - c n p dq
        let r = momentum_rhs(MomentumKind::Conformal { c: 0.4 }, &pi, &sym("p")).unwrap();
        let want = spec.sample(|x| -0.8 * x[1]);
        assert!(r.components[0]
            .iter()
            .zip(&want)
            .all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(max_abs(&r.components[1]) < 1e-12);
        // H-bar = -z: xi = p d/dp + z d/dz; on dz the rate is -L_xi dz - 2 dz = -3 dz
        let spec3 = boxed3(12);
        let dz = OneFormGrid::sample(spec3.clone(), |_, out| {
            out[0] = 0.0;
            out[1] = 0.0;
            out[2] = 1.0;
        });
        let r = momentum_rhs(MomentumKind::Contact, &dz, &con("-1*z")).unwrap();
        assert!(max_abs(&r.components[0]) < 1e-12 && max_abs(&r.components[1]) < 1e-12);
        assert!(r.components[2].iter().all(|v| (v + 3.0).abs() < 1e-12));
    }

    #[test]
    fn conformal_zero_is_hamiltonian() {
        let spec = GridSpec::phase((-4.0, 4.0, 24), (-4.0, 4.0, 24)).unwrap();
        let pi = OneFormGrid::sample(spec, |x, out| {
            let g = (-(x[0] * x[0] + x[1] * x[1])).exp();
            out[0] = x[1] * g;
            out[1] = (x[0] - 0.3) * g;
        });
        let h = sym("0.5*p^2 + 0.5*q^2 + 0.2*q^3");
        let a = momentum_rhs(MomentumKind::Conformal { c: 0.0 }, &pi, &h).unwrap();
        let b = momentum_rhs(MomentumKind::Hamiltonian, &pi, &h).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn density_anchors() {
        let spec = boxed(16);
        let f = density_from_oneform(&p_dq(spec.clone())).unwrap();
        assert!(f.values.iter().all(|v| (v + 1.0).abs() < 1e-12));
        let dq = OneFormGrid::sample(spec.clone(), |_, out| {
            out[0] = 1.0;
            out[1] = 0.0;
        });
        assert!(density_from_oneform(&dq)
            .unwrap()
            .values
            .iter()
            .all(|v| v.abs() < 1e-12));
        // exact form of a compactly supported function carries no mass
        let wide = GridSpec::phase((-6.0, 6.0, 64), (-6.0, 6.0, 64)).unwrap();
        let df = OneFormGrid::sample(wide, |x, out| {
            let g = (-(x[0] * x[0] + 2.0 * x[1] * x[1])).exp();
            out[0] = -2.0 * x[0] * g * (1.0 + x[1]);
            out[1] = g * (1.0 - 4.0 * x[1] * (1.0 + x[1]));
        });
        let f = density_from_oneform(&df).unwrap();
        assert!(f.mass().abs() < 1e-10, "{}", f.mass());
    }

    #[test]
    fn cstar_examples() {
        let spec = GridSpec::phase((-5.0, 5.0, 40), (-5.0, 5.0, 40)).unwrap();
        let w = |x: &[f64]| (-(x[0] * x[0] + (x[1] - 0.5).powi(2))).exp();
        let pi = OneFormGrid::sample(spec.clone(), |x, out| {
            out[0] = w(x) * x[1];
            out[1] = 0.0;
        });
        assert_eq!(cstar_from_oneform(&pi).unwrap(), 0.0);
        let pi = OneFormGrid::sample(spec.clone(), |x, out| {
            out[0] = 0.0;
            out[1] = w(x);
        });
        let want = std::f64::consts::PI * 0.5;
        assert!((cstar_from_oneform(&pi).unwrap() - want).abs() < 1e-8);
        assert_eq!(cstar_from_oneform(&OneFormGrid::zeros(spec)).unwrap(), 0.0);
    }

    #[test]
    fn contact_density_examples() {
        let spec = boxed3(12);
        let pdq = OneFormGrid::sample(spec.clone(), |x, out| {
            out.iter_mut().for_each(|o| *o = 0.0);
            out[0] = x[1];
        });
        let f = contact_density_from_oneform(&pdq, false).unwrap();
        assert!(f.values.iter().all(|v| (v + 1.0).abs() < 1e-12));
        let zdz = OneFormGrid::sample(spec.clone(), |x, out| {
            out.iter_mut().for_each(|o| *o = 0.0);
            out[2] = x[2];
        });
        let f = contact_density_from_oneform(&zdz, false).unwrap();
        assert!(f.values.iter().all(|v| v.abs() < 1e-12));
        // strict variant adds d Pi_z / dz = 1 and integrates over z in [-2, 2]
        let f = contact_density_from_oneform(&zdz, true).unwrap();
        assert_eq!(f.spec, spec.base());
        assert!(f.values.iter().all(|v| (v - 4.0).abs() < 1e-12));
        let zero = contact_density_from_oneform(&OneFormGrid::zeros(spec), false).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn maps_are_linear() {
        let spec = GridSpec::phase((-4.0, 4.0, 24), (-4.0, 4.0, 24)).unwrap();
        let a = OneFormGrid::sample(spec.clone(), |x, out| {
            out[0] = (x[0]).sin() * (-x[1] * x[1]).exp();
            out[1] = x[0] * (-x[1] * x[1]).exp();
        });
        let b = OneFormGrid::sample(spec.clone(), |x, out| {
            out[0] = x[1].powi(2) * (-x[1] * x[1]).exp();
            out[1] = (2.0 * x[0]).cos() * (-x[1] * x[1]).exp();
        });
        let mut ab = a.clone();
        ab.scaled_add(&b, -2.5).unwrap();
        let fa = density_from_oneform(&a).unwrap();
        let fb = density_from_oneform(&b).unwrap();
        let fab = density_from_oneform(&ab).unwrap();
        for i in 0..fa.values.len() {
            assert!((fab.values[i] - (fa.values[i] - 2.5 * fb.values[i])).abs() < 1e-12);
        }
        let h = ScalarFunction::harmonic(1);
        let k = MomentumKind::Conformal { c: 0.3 };
        let ra = momentum_rhs(k, &a, &h).unwrap();
        let rb = momentum_rhs(k, &b, &h).unwrap();
        let rab = momentum_rhs(k, &ab, &h).unwrap();
        for c in 0..2 {
            for i in 0..ra.components[c].len() {
                let lin = ra.components[c][i] - 2.5 * rb.components[c][i];
                assert!((rab.components[c][i] - lin).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn rates_intertwine() {
        // density of the momentum rate equals the density rate of the density
        let spec = GridSpec::phase((-6.0, 6.0, 96), (-6.0, 6.0, 96)).unwrap();
        let pi = OneFormGrid::sample(spec.clone(), |x, out| {
            let g = (-(x[0] * x[0] + (x[1] - 0.5).powi(2))).exp();
            out[0] = (x[0] + 0.3) * g;
            out[1] = (1.0 - x[1]) * g;
        });
        let h = sym("0.5*p^2 + 0.5*q^2 + 0.1*q^3");
        let c = 0.25;
        let mrate = momentum_rhs(MomentumKind::Conformal { c }, &pi, &h).unwrap();
        let lhs = conformal_dual(&mrate).unwrap();
        let f0 = conformal_dual(&pi).unwrap();
        let mut solver = DensitySolver::new(DensityModel::Conformal { c }, &h, &spec).unwrap();
        let rhs = solver.rate(&f0).unwrap();
        let err = lhs.l2_distance(&rhs).unwrap() / rhs.l2_norm();
        assert!(err < 1e-3, "{err}");
        let dc = (lhs.cstar.unwrap() - rhs.cstar.unwrap()).abs();
        assert!(dc < 1e-6 * rhs.cstar.unwrap().abs().max(1.0), "{dc}");
    }
}
