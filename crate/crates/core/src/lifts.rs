//! Lifts of base vector fields to the cotangent bundle and numerical checks
//! of the Lie-algebra homomorphisms between functions and vector fields.
//!
//! On `T*M` with coordinates `(x^a, y_a)`:
//!
//! * complete cotangent lift `X^ = X^a d/dx^a - (dX^b/dx^a) y_b d/dy_a`
//! * `kappa(X) = X^ + div(X) W` with `W = -y_a d/dy_a`, for `X` of constant
//!   divergence
//! * holonomic part at a first jet `(x, y, dy/dx)`:
//!   `X^a d/dx^a + X^a (dy_b/dx^a) d/dy_b`
//! * vertical representative `kappa(X) - H kappa(X)`, which on the section
//!   `Pi = y_a dx^a` reproduces `-L_X Pi - div(X) Pi`.
//!
//! Vector-field brackets use `[X,Y]^a = X^b d_b Y^a - Y^b d_b X^a`, with the
//! Jacobians taken by central differences and one Richardson extrapolation.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::brackets::{
    bracket_function, liouville_derivative_poly, poisson_bracket_poly, BracketKind,
};
use crate::error::{Error, Result};
use crate::geometry::{Arity, ScalarFunction};
use crate::grid::{DensityGrid, Differ, StencilKind};
use crate::kinetic_density::{conformal_density_rhs, observable, vlasov_density_rhs};
use crate::particle::{field_flat, FieldKind};
use crate::polynomial::Polynomial;

const CONSTANT_DIVERGENCE_TOL: f64 = 1e-8;

type FieldFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type JacobianFn = dyn Fn(&[f64], &mut DMatrix<f64>) + Send + Sync;

/// A vector field on `R^m`.
#[derive(Clone)]
pub struct BaseField {
    dim: usize,
    repr: BaseRepr,
}

#[derive(Clone)]
enum BaseRepr {
    Polynomial(Vec<Polynomial>),
    Closure {
        value: Arc<FieldFn>,
        jacobian: Option<Arc<JacobianFn>>,
    },
}

impl std::fmt::Debug for BaseField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BaseField")
            .field("dim", &self.dim)
            .field("polynomial", &matches!(self.repr, BaseRepr::Polynomial(_)))
            .finish()
    }
}

impl BaseField {
    pub fn polynomial(components: Vec<Polynomial>) -> Result<Self> {
        let dim = components.len();
        if dim == 0 || components.iter().any(|p| p.dim() != dim) {
            return Err(Error::InvalidArgument(
                "base field needs m polynomial components in m variables".into(),
            ));
        }
        Ok(Self {
            dim,
            repr: BaseRepr::Polynomial(components),
        })
    }

    pub fn from_fn<F>(dim: usize, value: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            dim,
            repr: BaseRepr::Closure {
                value: Arc::new(value),
                jacobian: None,
            },
        }
    }

    /// Attaches an analytic Jacobian `J[(b, a)] = dX^b / dx^a`.
    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&[f64], &mut DMatrix<f64>) + Send + Sync + 'static,
    {
        if let BaseRepr::Closure { jacobian: j, .. } = &mut self.repr {
            *j = Some(Arc::new(jacobian));
        }
        self
    }

    /// Random polynomial field on `R^m` whose divergence is the constant
    /// `divergence`; the components other than the first have degree
    /// `<= degree - 1`, the first is fixed by the divergence.
    pub fn random_constant_divergence<R: Rng + ?Sized>(
        m: usize,
        degree: u32,
        divergence: f64,
        rng: &mut R,
    ) -> Self {
        let mut comps: Vec<Polynomial> = (0..m)
            .map(|_| Polynomial::random(m, degree.saturating_sub(1), rng))
            .collect();
        let mut rest = Polynomial::zero(m);
        for (a, c) in comps.iter().enumerate().skip(1) {
            rest = &rest + &c.derivative(a);
        }
        // X^1 = divergence * x^1 - int (sum_{a>1} d_a X^a) dx^1 + g(x^2..x^m)
        let mut g = Polynomial::zero(m);
        for (e, c) in Polynomial::random(m, degree, rng)
            .terms()
            .filter(|(e, _)| e[0] == 0)
        {
            g = &g + &Polynomial::monomial(m, e.to_vec(), c);
        }
        let lin = Polynomial::variable(m, 0).scale(divergence);
        comps[0] = &(&lin - &rest.integrate(0)) + &g;
        Self {
            dim: m,
            repr: BaseRepr::Polynomial(comps),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_polynomials(&self) -> Option<&[Polynomial]> {
        match &self.repr {
            BaseRepr::Polynomial(p) => Some(p),
            BaseRepr::Closure { .. } => None,
        }
    }

    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.value_into(x, &mut out);
        out
    }

    fn value_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.repr {
            BaseRepr::Polynomial(ps) => {
                for (o, p) in out.iter_mut().zip(ps) {
                    *o = p.eval(x);
                }
            }
            BaseRepr::Closure { value, .. } => value(x, out),
        }
    }

    /// `J[(b, a)] = dX^b / dx^a`, analytic when available.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let m = self.dim;
        let mut j = DMatrix::zeros(m, m);
        match &self.repr {
            BaseRepr::Polynomial(ps) => {
                let mut g = vec![0.0; m];
                for (b, p) in ps.iter().enumerate() {
                    p.gradient_at(x, &mut g);
                    for a in 0..m {
                        j[(b, a)] = g[a];
                    }
                }
            }
            BaseRepr::Closure {
                jacobian: Some(jf), ..
            } => jf(x, &mut j),
            BaseRepr::Closure { .. } => {
                let f = |y: &[f64], out: &mut [f64]| self.value_into(y, out);
                j = richardson_jacobian(&f, x, m);
            }
        }
        j
    }

    pub fn divergence(&self, x: &[f64]) -> f64 {
        self.jacobian(x).trace()
    }

    /// `[X, Y]`, symbolic when both fields are polynomial.
    pub fn bracket(&self, other: &BaseField) -> Result<BaseField> {
        if self.dim != other.dim {
            return Err(dim_error(self.dim, other.dim));
        }
        if let (Some(xs), Some(ys)) = (self.as_polynomials(), other.as_polynomials()) {
            let m = self.dim;
            let comps = (0..m)
                .map(|a| {
                    let mut out = Polynomial::zero(m);
                    for b in 0..m {
                        out = &out + &(&xs[b] * &ys[a].derivative(b));
                        out = &out - &(&ys[b] * &xs[a].derivative(b));
                    }
                    out
                })
                .collect();
            return BaseField::polynomial(comps);
        }
        let (x, y) = (self.clone(), other.clone());
        Ok(BaseField::from_fn(self.dim, move |pt, out| {
            out.copy_from_slice(&lie_bracket_at(
                &|p, o| x.value_into(p, o),
                &|p, o| y.value_into(p, o),
                pt,
                x.dim,
            ));
        }))
    }

    /// Sampled check that `div X` is constant (tolerance `1e-8`).
    pub fn check_constant_divergence(&self, extra: &[&[f64]]) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(0xd1f);
        let mut probes: Vec<Vec<f64>> = (0..16)
            .map(|_| (0..self.dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        probes.extend(extra.iter().map(|x| x.to_vec()));
        let divs: Vec<f64> = probes.iter().map(|x| self.divergence(x)).collect();
        let lo = divs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = divs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > CONSTANT_DIVERGENCE_TOL {
            return Err(Error::NonConstantDivergence(hi - lo));
        }
        Ok(divs[0])
    }
}

fn dim_error(expected: usize, found: usize) -> Error {
    Error::ArityMismatch {
        expected: format!("dimension {expected}"),
        found: format!("dimension {found}"),
    }
}

/// A section `y(x)` of `T*M` together with its Jacobian `dy_a/dx^b` at `(a, b)`.
#[derive(Clone)]
pub struct Section {
    value: Arc<FieldFn>,
    jacobian: Arc<JacobianFn>,
}

impl Section {
    pub fn new<V, J>(value: V, jacobian: J) -> Self
    where
        V: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        J: Fn(&[f64], &mut DMatrix<f64>) + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            jacobian: Arc::new(jacobian),
        }
    }

    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        (self.value)(x, &mut y);
        y
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(x.len(), x.len());
        (self.jacobian)(x, &mut j);
        j
    }
}

fn check_point(x: &BaseField, pt: &[f64], y: &[f64]) -> Result<()> {
    if pt.len() != x.dim() {
        return Err(dim_error(x.dim(), pt.len()));
    }
    if y.len() != x.dim() {
        return Err(dim_error(x.dim(), y.len()));
    }
    Ok(())
}

/// `(X^a, -(dX^b/dx^a) y_b)` at `(x, y)`.
pub fn complete_cotangent_lift(x: &BaseField, pt: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_point(x, pt, y)?;
    let m = x.dim();
    let j = x.jacobian(pt);
    let mut out = x.value(pt);
    for a in 0..m {
        out.push(-(0..m).map(|b| j[(b, a)] * y[b]).sum::<f64>());
    }
    Ok(out)
}

/// `(X^a, -(div X y_a + (dX^b/dx^a) y_b))`; requires constant divergence.
pub fn kappa_lift(x: &BaseField, pt: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_point(x, pt, y)?;
    x.check_constant_divergence(&[pt])?;
    Ok(kappa_unchecked(x, pt, y))
}

fn kappa_unchecked(x: &BaseField, pt: &[f64], y: &[f64]) -> Vec<f64> {
    let m = x.dim();
    let j = x.jacobian(pt);
    let div = j.trace();
    let mut out = x.value(pt);
    for a in 0..m {
        out.push(-(div * y[a] + (0..m).map(|b| j[(b, a)] * y[b]).sum::<f64>()));
    }
    out
}

/// Divergence lift `div(X) W = -div(X) y_a d/dy_a`.
pub fn divergence_lift(x: &BaseField, pt: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_point(x, pt, y)?;
    let div = x.divergence(pt);
    let mut out = vec![0.0; x.dim()];
    out.extend(y.iter().map(|v| -div * v));
    Ok(out)
}

/// Holonomic part at the jet `(x, y, yx)` with `yx[(b, a)] = dy_b/dx^a`.
pub fn holonomic_part(x: &BaseField, pt: &[f64], y: &[f64], yx: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_point(x, pt, y)?;
    let m = x.dim();
    let xv = x.value(pt);
    let mut out = xv.clone();
    for b in 0..m {
        out.push((0..m).map(|a| xv[a] * yx[(b, a)]).sum());
    }
    Ok(out)
}

/// Fibre rate `-(div X y_a + (dX^b/dx^a) y_b + X^b dy_a/dx^b)` along a section.
pub fn vertical_representative(x: &BaseField, section: &Section, pt: &[f64]) -> Result<Vec<f64>> {
    if pt.len() != x.dim() {
        return Err(dim_error(x.dim(), pt.len()));
    }
    let m = x.dim();
    let y = section.value(pt);
    let yx = section.jacobian(pt);
    let j = x.jacobian(pt);
    let div = j.trace();
    let xv = x.value(pt);
    Ok((0..m)
        .map(|a| {
            let transport: f64 = (0..m).map(|b| xv[b] * yx[(a, b)]).sum();
            let stretch: f64 = (0..m).map(|b| j[(b, a)] * y[b]).sum();
            -(div * y[a] + stretch + transport)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiftKind {
    CompleteLift,
    Kappa,
    HolonomicPart,
    VerticalRep,
}

/// A base field with a lift kind; jet-dependent kinds carry a section.
#[derive(Clone)]
pub struct LiftedField {
    pub base: BaseField,
    pub kind: LiftKind,
    pub section: Option<Section>,
}

impl LiftedField {
    pub fn new(base: BaseField, kind: LiftKind, section: Option<Section>) -> Result<Self> {
        let needs_section = matches!(kind, LiftKind::HolonomicPart | LiftKind::VerticalRep);
        if needs_section && section.is_none() {
            return Err(Error::InvalidArgument(format!("{kind:?} needs a section")));
        }
        if kind == LiftKind::Kappa {
            base.check_constant_divergence(&[])?;
        }
        Ok(Self {
            base,
            kind,
            section,
        })
    }

    /// Value on `T*M` at `(x, y)`; jet-dependent kinds evaluate along the
    /// section and ignore `y`.
    pub fn evaluate(&self, pt: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        match self.kind {
            LiftKind::CompleteLift => complete_cotangent_lift(&self.base, pt, y),
            LiftKind::Kappa => {
                check_point(&self.base, pt, y)?;
                Ok(kappa_unchecked(&self.base, pt, y))
            }
            LiftKind::HolonomicPart => {
                let s = self.section.as_ref().expect("checked in new");
                holonomic_part(&self.base, pt, &s.value(pt), &s.jacobian(pt))
            }
            LiftKind::VerticalRep => {
                let s = self.section.as_ref().expect("checked in new");
                let mut out = vec![0.0; self.base.dim()];
                out.extend(vertical_representative(&self.base, s, pt)?);
                Ok(out)
            }
        }
    }
}

/// Step for the Richardson-extrapolated central differences.
fn richardson_step(x: f64) -> f64 {
    f64::EPSILON.powf(0.2) * x.abs().max(1.0)
}

/// Jacobian `J[(i, j)] = dF^i/dx^j` of `f: R^d -> R^d`, fourth order.
pub fn richardson_jacobian(f: &dyn Fn(&[f64], &mut [f64]), x: &[f64], d: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(d, d);
    let mut probe = x.to_vec();
    let mut up = vec![0.0; d];
    let mut dn = vec![0.0; d];
    for c in 0..x.len() {
        let h = richardson_step(x[c]);
        let mut central = |step: f64, out: &mut [f64]| {
            probe[c] = x[c] + step;
            f(&probe, &mut up);
            probe[c] = x[c] - step;
            f(&probe, &mut dn);
            probe[c] = x[c];
            for i in 0..d {
                out[i] = (up[i] - dn[i]) / (2.0 * step);
            }
        };
        let mut coarse = vec![0.0; d];
        let mut fine = vec![0.0; d];
        central(h, &mut coarse);
        central(0.5 * h, &mut fine);
        for i in 0..d {
            j[(i, c)] = (4.0 * fine[i] - coarse[i]) / 3.0;
        }
    }
    j
}

/// `[X, Y](x) = J_Y X - J_X Y` with Richardson-extrapolated Jacobians.
pub fn lie_bracket_at(
    xf: &dyn Fn(&[f64], &mut [f64]),
    yf: &dyn Fn(&[f64], &mut [f64]),
    pt: &[f64],
    d: usize,
) -> Vec<f64> {
    let mut xv = vec![0.0; d];
    let mut yv = vec![0.0; d];
    xf(pt, &mut xv);
    yf(pt, &mut yv);
    let jx = richardson_jacobian(xf, pt, d);
    let jy = richardson_jacobian(yf, pt, d);
    (0..d)
        .map(|a| {
            (0..d)
                .map(|b| jy[(a, b)] * xv[b] - jx[(a, b)] * yv[b])
                .sum()
        })
        .collect()
}

/// One homomorphism identity to verify.
#[derive(Debug, Clone)]
pub enum HomomorphismCase {
    /// `[X_F, X_H] + X_{{F,H}} = 0`
    Hamiltonian {
        f: ScalarFunction,
        h: ScalarFunction,
    },
    /// `[X^c_F, X^c_H] + X_G = 0` with
    /// `G = {F,H} + c_F (Z(H) + H) - c_H (Z(F) + F)`
    Conformal {
        f: ScalarFunction,
        c_f: f64,
        h: ScalarFunction,
        c_h: f64,
    },
    /// `[xi_F, xi_H] + xi_{{F,H}^C} = 0`
    Contact {
        f: ScalarFunction,
        h: ScalarFunction,
    },
    /// `[kappa X, kappa Y] - kappa [X, Y] = 0`, probes are points of `T*M`
    Kappa { x: BaseField, y: BaseField },
    /// Conformal density right side against its assembly from the Vlasov
    /// part, the extension action `c (Z(f) - (n+1) f)` and the moment
    /// `int f (Z(H) + H)`; probes are ignored.
    Extension {
        f: DensityGrid,
        h: ScalarFunction,
        c: f64,
    },
}

impl HomomorphismCase {
    pub fn name(&self) -> &'static str {
        match self {
            HomomorphismCase::Hamiltonian { .. } => "ham",
            HomomorphismCase::Conformal { .. } => "conformal",
            HomomorphismCase::Contact { .. } => "contact",
            HomomorphismCase::Kappa { .. } => "kappa",
            HomomorphismCase::Extension { .. } => "extension",
        }
    }
}

/// `Z(F) + F = F - p dF/dp` as a function, symbolic for polynomials.
pub fn liouville_plus_identity(f: &ScalarFunction) -> ScalarFunction {
    let n = f.arity().n();
    if let Some(p) = f.as_polynomial() {
        return ScalarFunction::polynomial(
            f.arity(),
            format!("Z{0}+{0}", f.name()),
            &liouville_derivative_poly(n, p) + p,
        );
    }
    let g = f.clone();
    ScalarFunction::from_fn(f.arity(), format!("Z{0}+{0}", f.name()), move |x| {
        let grad = g.gradient_vec(x);
        g.value(x) - (0..n).map(|i| x[n + i] * grad[n + i]).sum::<f64>()
    })
}

/// The function `G` generating `-[X^c_F, X^c_H]`.
pub fn conformal_bracket_generator(
    f: &ScalarFunction,
    c_f: f64,
    h: &ScalarFunction,
    c_h: f64,
) -> Result<ScalarFunction> {
    f.arity().expect(h.arity())?;
    let n = f.arity().n();
    let name = format!("[({},{c_f}),({},{c_h})]", f.name(), h.name());
    if let (Some(pf), Some(ph)) = (f.as_polynomial(), h.as_polynomial()) {
        let zh = &liouville_derivative_poly(n, ph) + ph;
        let zf = &liouville_derivative_poly(n, pf) + pf;
        let g = &(&poisson_bracket_poly(n, pf, ph) + &zh.scale(c_f)) - &zf.scale(c_h);
        return Ok(ScalarFunction::polynomial(f.arity(), name, g));
    }
    let fh = bracket_function(BracketKind::Symplectic, f, h)?;
    let (zh, zf) = (liouville_plus_identity(h), liouville_plus_identity(f));
    Ok(ScalarFunction::from_fn(f.arity(), name, move |x| {
        fh.value(x) + c_f * zh.value(x) - c_h * zf.value(x)
    }))
}

fn field_fn(kind: FieldKind, h: &ScalarFunction) -> impl Fn(&[f64], &mut [f64]) + '_ {
    move |x, out| out.copy_from_slice(&field_flat(kind, h, x))
}

fn max_component_residual(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x + y).abs())
        .fold(0.0, f64::max)
}

/// Largest residual of the chosen identity over `probes`.
pub fn homomorphism_residual(case: &HomomorphismCase, probes: &[Vec<f64>]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    match case {
        HomomorphismCase::Hamiltonian { f, h } => {
            require_symplectic(f, h)?;
            let g = bracket_function(BracketKind::Symplectic, f, h)?;
            let d = f.arity().dim();
            for x in probes {
                let lhs = lie_bracket_at(
                    &field_fn(FieldKind::Hamiltonian, f),
                    &field_fn(FieldKind::Hamiltonian, h),
                    x,
                    d,
                );
                let rhs = field_flat(FieldKind::Hamiltonian, &g, x);
                worst = worst.max(max_component_residual(&lhs, &rhs));
            }
        }
        HomomorphismCase::Conformal { f, c_f, h, c_h } => {
            require_symplectic(f, h)?;
            let g = conformal_bracket_generator(f, *c_f, h, *c_h)?;
            let d = f.arity().dim();
            let (kf, kh) = (
                FieldKind::Conformal { c: *c_f },
                FieldKind::Conformal { c: *c_h },
            );
            for x in probes {
                let lhs = lie_bracket_at(&field_fn(kf, f), &field_fn(kh, h), x, d);
                let rhs = field_flat(FieldKind::Hamiltonian, &g, x);
                worst = worst.max(max_component_residual(&lhs, &rhs));
            }
        }
        HomomorphismCase::Contact { f, h } => {
            if !f.arity().is_contact() {
                return Err(Error::ArityMismatch {
                    expected: "contact functions".into(),
                    found: f.arity().to_string(),
                });
            }
            let g = bracket_function(BracketKind::Contact, f, h)?;
            let d = f.arity().dim();
            for x in probes {
                let lhs = lie_bracket_at(
                    &field_fn(FieldKind::Contact, f),
                    &field_fn(FieldKind::Contact, h),
                    x,
                    d,
                );
                let rhs = field_flat(FieldKind::Contact, &g, x);
                worst = worst.max(max_component_residual(&lhs, &rhs));
            }
        }
        HomomorphismCase::Kappa { x, y } => {
            if x.dim() != y.dim() {
                return Err(dim_error(x.dim(), y.dim()));
            }
            x.check_constant_divergence(&[])?;
            y.check_constant_divergence(&[])?;
            let m = x.dim();
            let xy = x.bracket(y)?;
            let kx = |pt: &[f64], out: &mut [f64]| {
                out.copy_from_slice(&kappa_unchecked(x, &pt[..m], &pt[m..]))
            };
            let ky = |pt: &[f64], out: &mut [f64]| {
                out.copy_from_slice(&kappa_unchecked(y, &pt[..m], &pt[m..]))
            };
            for pt in probes {
                if pt.len() != 2 * m {
                    return Err(dim_error(2 * m, pt.len()));
                }
                let lhs = lie_bracket_at(&kx, &ky, pt, 2 * m);
                let rhs: Vec<f64> = kappa_unchecked(&xy, &pt[..m], &pt[m..])
                    .iter()
                    .map(|v| -v)
                    .collect();
                worst = worst.max(max_component_residual(&lhs, &rhs));
            }
        }
        HomomorphismCase::Extension { f, h, c } => {
            let (rate, cstar_rate) = conformal_density_rhs(f, h, *c)?;
            let vlasov = vlasov_density_rhs(f, h)?;
            let differ = Differ::new(&f.spec, StencilKind::Central);
            let fp = differ.derivative(1, &f.values);
            let p = f.spec.sample(|x| x[1]);
            let n = 1.0;
            for i in 0..f.values.len() {
                let action = c * (-p[i] * fp[i] - (n + 1.0) * f.values[i]);
                worst = worst.max((rate.values[i] - (vlasov.values[i] + action)).abs());
            }
            let moment = observable(f, &liouville_plus_identity(h))?;
            worst = worst.max((cstar_rate - moment).abs());
        }
    }
    Ok(worst)
}

fn require_symplectic(f: &ScalarFunction, h: &ScalarFunction) -> Result<()> {
    f.arity().expect(h.arity())?;
    match f.arity() {
        Arity::Symplectic(_) => Ok(()),
        a => Err(Error::ArityMismatch {
            expected: "symplectic functions".into(),
            found: a.to_string(),
        }),
    }
}

/// `[kappa(X), div(Y) W]` at a point of `T*M`; vanishes for constant
/// divergences.
pub fn kappa_divergence_bracket(x: &BaseField, y: &BaseField, pt: &[f64]) -> Result<f64> {
    let m = x.dim();
    if y.dim() != m || pt.len() != 2 * m {
        return Err(dim_error(2 * m, pt.len()));
    }
    let kx =
        |p: &[f64], out: &mut [f64]| out.copy_from_slice(&kappa_unchecked(x, &p[..m], &p[m..]));
    let dy = |p: &[f64], out: &mut [f64]| {
        out.copy_from_slice(&divergence_lift(y, &p[..m], &p[m..]).expect("dimensions checked"))
    };
    Ok(lie_bracket_at(&kx, &dy, pt, 2 * m)
        .iter()
        .fold(0.0, |w, v| w.max(v.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn field1(text: &str) -> BaseField {
        BaseField::polynomial(vec![Polynomial::parse(text, &["x"]).unwrap()]).unwrap()
    }

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

    fn probes(rng: &mut ChaCha8Rng, d: usize, count: usize) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn lift_examples() {
        let x = field1("x");
        assert_eq!(
            complete_cotangent_lift(&x, &[2.0], &[3.0]).unwrap(),
            vec![2.0, -3.0]
        );
        assert_eq!(kappa_lift(&x, &[2.0], &[3.0]).unwrap(), vec![2.0, -6.0]);
        let k = field1("1.5");
        assert_eq!(
            complete_cotangent_lift(&k, &[0.7], &[-4.0]).unwrap(),
            vec![1.5, 0.0]
        );
        assert!(kappa_lift(&field1("x^2"), &[1.0], &[1.0]).is_err());
        assert!(complete_cotangent_lift(&x, &[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn kappa_in_two_dimensions() {
        // X = (x1 + x2) d/dx1: div = 1, dX^1/dx^1 = dX^1/dx^2 = 1
        let vars = ["a", "b"];
        let x = BaseField::polynomial(vec![
            Polynomial::parse("a + b", &vars).unwrap(),
            Polynomial::zero(2),
        ])
        .unwrap();
        let (pt, y) = ([0.3, -1.2], [2.0, 5.0]);
        let k = kappa_lift(&x, &pt, &y).unwrap();
        for (a, b) in k.iter().zip([0.3 - 1.2, 0.0, -4.0, -7.0]) {
            assert!((a - b).abs() < 1e-14, "{k:?}");
        }
        // divergence-free: kappa equals the complete lift
        let rot = BaseField::polynomial(vec![
            Polynomial::parse("-1*b", &vars).unwrap(),
            Polynomial::parse("a", &vars).unwrap(),
        ])
        .unwrap();
        assert_eq!(
            kappa_lift(&rot, &pt, &y).unwrap(),
            complete_cotangent_lift(&rot, &pt, &y).unwrap()
        );
    }

    fn x_section() -> Section {
        Section::new(|x, y| y[0] = x[0], |_, j| j[(0, 0)] = 1.0)
    }

    #[test]
    fn vertical_representative_examples() {
        let x = field1("x");
        let v = vertical_representative(&x, &x_section(), &[1.7]).unwrap();
        assert!((v[0] + 3.0 * 1.7).abs() < 1e-14);
        let c = field1("2");
        let s = Section::new(|_, y| y[0] = 4.0, |_, j| j[(0, 0)] = 0.0);
        assert_eq!(vertical_representative(&c, &s, &[0.3]).unwrap(), vec![0.0]);
        // kappa - holonomic part = vertical representative
        let pt = [1.7];
        let y = x_section().value(&pt);
        let k = kappa_lift(&x, &pt, &y).unwrap();
        let h = holonomic_part(&x, &pt, &y, &x_section().jacobian(&pt)).unwrap();
        let v = LiftedField::new(x.clone(), LiftKind::VerticalRep, Some(x_section())).unwrap();
        let vv = v.evaluate(&pt, &y).unwrap();
        for i in 0..2 {
            assert!((k[i] - h[i] - vv[i]).abs() < 1e-14);
        }
        assert!(LiftedField::new(x, LiftKind::HolonomicPart, None).is_err());
    }

    #[test]
    fn vertical_representative_is_lie_poisson() {
        // compare with -L_X Pi - div(X) Pi on a grid for X = (x1 x2, 1 - x2^2/2)
        use crate::grid::{Axis, Boundary};
        use crate::kinetic_momentum::{lie_derivative_oneform, OneFormGrid, SampledField};
        let vars = ["a", "b"];
        let x = BaseField::polynomial(vec![
            Polynomial::parse("a*b", &vars).unwrap(),
            Polynomial::parse("1 - 0.5*b^2", &vars).unwrap(),
        ])
        .unwrap();
        let sec = Section::new(
            |x, y| {
                y[0] = x[0] * x[1].powi(2);
                y[1] = x[0] - x[1];
            },
            |x, j| {
                j[(0, 0)] = x[1].powi(2);
                j[(0, 1)] = 2.0 * x[0] * x[1];
                j[(1, 0)] = 1.0;
                j[(1, 1)] = -1.0;
            },
        );
        let spec = GridSpec::new(vec![
            Axis::new(-1.0, 1.0, 16, Boundary::Truncated),
            Axis::new(-1.0, 1.0, 16, Boundary::Truncated),
        ])
        .unwrap();
        let xs = x.clone();
        let field = SampledField::from_fn(&spec, move |p, out| out.copy_from_slice(&xs.value(p)));
        let s2 = sec.clone();
        let pi = OneFormGrid::sample(spec.clone(), move |p, out| {
            out.copy_from_slice(&s2.value(p))
        });
        let lie = lie_derivative_oneform(&field, &pi).unwrap();
        let mut pt = [0.0; 2];
        for idx in 0..spec.len() {
            spec.coords(idx, &mut pt);
            let v = vertical_representative(&x, &sec, &pt).unwrap();
            let div = x.divergence(&pt);
            let y = sec.value(&pt);
            for a in 0..2 {
                let lp = -lie.components[a][idx] - div * y[a];
                assert!((v[a] - lp).abs() < 1e-10, "{} vs {lp}", v[a]);
            }
        }
    }

    #[test]
    fn complete_lift_preserves_brackets() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let x =
                BaseField::polynomial((0..2).map(|_| Polynomial::random(2, 2, &mut rng)).collect())
                    .unwrap();
            let y =
                BaseField::polynomial((0..2).map(|_| Polynomial::random(2, 2, &mut rng)).collect())
                    .unwrap();
            let xy = x.bracket(&y).unwrap();
            let lx = |p: &[f64], o: &mut [f64]| {
                o.copy_from_slice(&complete_cotangent_lift(&x, &p[..2], &p[2..]).unwrap())
            };
            let ly = |p: &[f64], o: &mut [f64]| {
                o.copy_from_slice(&complete_cotangent_lift(&y, &p[..2], &p[2..]).unwrap())
            };
            for pt in probes(&mut rng, 4, 5) {
                let lhs = lie_bracket_at(&lx, &ly, &pt, 4);
                let rhs = complete_cotangent_lift(&xy, &pt[..2], &pt[2..]).unwrap();
                for i in 0..4 {
                    assert!((lhs[i] - rhs[i]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn homomorphism_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ps = probes(&mut rng, 2, 20);
        let r = homomorphism_residual(
            &HomomorphismCase::Hamiltonian {
                f: sym("q"),
                h: sym("p"),
            },
            &ps,
        )
        .unwrap();
        assert!(r <= 1e-10, "{r}");
        let case = HomomorphismCase::Conformal {
            f: sym("q^2*p + 0.5*p^3 - q"),
            c_f: 0.3,
            h: sym("0.5*p^2 + 0.5*q^2 + q*p^2"),
            c_h: -0.7,
        };
        assert!(homomorphism_residual(&case, &ps).unwrap() <= 1e-6);
        let cs = probes(&mut rng, 3, 20);
        let r = homomorphism_residual(
            &HomomorphismCase::Contact {
                f: con("z"),
                h: con("p"),
            },
            &cs,
        )
        .unwrap();
        assert!(r <= 1e-6, "{r}");
    }

    #[test]
    fn random_homomorphisms() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let f = ScalarFunction::polynomial(
                Arity::Symplectic(1),
                "F",
                Polynomial::random(2, 3, &mut rng),
            );
            let h = ScalarFunction::polynomial(
                Arity::Symplectic(1),
                "H",
                Polynomial::random(2, 3, &mut rng),
            );
            let ps = probes(&mut rng, 2, 5);
            let c_f = rng.gen_range(-1.0..1.0);
            let c_h = rng.gen_range(-1.0..1.0);
            for case in [
                HomomorphismCase::Hamiltonian {
                    f: f.clone(),
                    h: h.clone(),
                },
                HomomorphismCase::Conformal {
                    f: f.clone(),
                    c_f,
                    h: h.clone(),
                    c_h,
                },
            ] {
                assert!(
                    homomorphism_residual(&case, &ps).unwrap() <= 1e-6,
                    "{}",
                    case.name()
                );
            }
            let fc = ScalarFunction::polynomial(
                Arity::Contact(1),
                "F",
                Polynomial::random(3, 3, &mut rng),
            );
            let hc = ScalarFunction::polynomial(
                Arity::Contact(1),
                "H",
                Polynomial::random(3, 3, &mut rng),
            );
            let cs = probes(&mut rng, 3, 5);
            assert!(
                homomorphism_residual(&HomomorphismCase::Contact { f: fc, h: hc }, &cs).unwrap()
                    <= 1e-6
            );
            let x = BaseField::random_constant_divergence(2, 3, rng.gen_range(-1.0..1.0), &mut rng);
            let y = BaseField::random_constant_divergence(2, 3, rng.gen_range(-1.0..1.0), &mut rng);
            let tp = probes(&mut rng, 4, 5);
            assert!(
                homomorphism_residual(
                    &HomomorphismCase::Kappa {
                        x: x.clone(),
                        y: y.clone()
                    },
                    &tp
                )
                .unwrap()
                    <= 1e-6
            );
            for pt in &tp {
                assert!(kappa_divergence_bracket(&x, &y, pt).unwrap() <= 1e-8);
            }
        }
    }

    #[test]
    fn extension_assembly() {
        let spec = GridSpec::phase((-4.0, 4.0, 24), (-4.0, 4.0, 24)).unwrap();
        let f = DensityGrid::sample(spec, |x| {
            (1.0 + 0.3 * x[0]) * (-(x[0] * x[0] + (x[1] - 0.4).powi(2))).exp()
        });
        let case = HomomorphismCase::Extension {
            f,
            h: sym("0.5*p^2 + 0.5*q^2 + 0.2*q^3"),
            c: 0.35,
        };
        assert!(homomorphism_residual(&case, &[]).unwrap() <= 1e-10);
    }

    #[test]
    fn constant_divergence_generator() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let d = rng.gen_range(-1.0..1.0);
            let x = BaseField::random_constant_divergence(3, 3, d, &mut rng);
            let got = x.check_constant_divergence(&[]).unwrap();
            assert!((got - d).abs() < 1e-10);
        }
    }
}
