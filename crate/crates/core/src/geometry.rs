//! Darboux-coordinate realizations of the canonical symplectic structure on
//! `R^{2n}` and of its contactization on `R^{2n+1}`.
//!
//! Coordinates are laid out flat as `(q_1..q_n, p_1..p_n)` for phase space and
//! `(q_1..q_n, p_1..p_n, z)` for the contact space. The symplectic form is
//! `dq^i ^ dp_i` and Hamiltonian fields follow `i_X Omega = dH`, which gives
//! `X_H = (dH/dp, -dH/dq)`. Every other module inherits this convention.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::polynomial::Polynomial;

/// Which space a function or state lives on, with the half-dimension `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arity {
    Symplectic(usize),
    Contact(usize),
}

impl Arity {
    pub fn n(self) -> usize {
        match self {
            Arity::Symplectic(n) | Arity::Contact(n) => n,
        }
    }

    /// Number of flat coordinates.
    pub fn dim(self) -> usize {
        match self {
            Arity::Symplectic(n) => 2 * n,
            Arity::Contact(n) => 2 * n + 1,
        }
    }

    pub fn is_contact(self) -> bool {
        matches!(self, Arity::Contact(_))
    }

    pub(crate) fn expect(self, found: Arity) -> Result<()> {
        if self == found {
            Ok(())
        } else {
            Err(Error::ArityMismatch {
                expected: self.to_string(),
                found: found.to_string(),
            })
        }
    }
}

impl fmt::Display for Arity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arity::Symplectic(n) => write!(f, "symplectic(n={n})"),
            Arity::Contact(n) => write!(f, "contact(n={n})"),
        }
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{what} has non-finite entries"
        )))
    }
}

/// A point `(q, p)` of the symplectic phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    q: Vec<f64>,
    p: Vec<f64>,
}

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.is_empty() || q.len() != p.len() {
            return Err(Error::InvalidArgument(format!(
                "phase state needs equal non-zero lengths, got q:{} p:{}",
                q.len(),
                p.len()
            )));
        }
        check_finite(&q, "q")?;
        check_finite(&p, "p")?;
        Ok(Self { q, p })
    }

    pub fn from_flat(x: &[f64]) -> Result<Self> {
        if x.len() % 2 != 0 {
            return Err(Error::InvalidArgument(
                "odd length for a phase state".into(),
            ));
        }
        let n = x.len() / 2;
        Self::new(x[..n].to_vec(), x[n..].to_vec())
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn arity(&self) -> Arity {
        Arity::Symplectic(self.n())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut x = self.q.clone();
        x.extend_from_slice(&self.p);
        x
    }
}

/// A point `(q, p, z)` of the contact space.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactState {
    q: Vec<f64>,
    p: Vec<f64>,
    z: f64,
}

impl ContactState {
    pub fn new(q: Vec<f64>, p: Vec<f64>, z: f64) -> Result<Self> {
        if q.is_empty() || q.len() != p.len() {
            return Err(Error::InvalidArgument(format!(
                "contact state needs equal non-zero lengths, got q:{} p:{}",
                q.len(),
                p.len()
            )));
        }
        check_finite(&q, "q")?;
        check_finite(&p, "p")?;
        check_finite(&[z], "z")?;
        Ok(Self { q, p, z })
    }

    pub fn from_flat(x: &[f64]) -> Result<Self> {
        if x.len() % 2 != 1 {
            return Err(Error::InvalidArgument(
                "even length for a contact state".into(),
            ));
        }
        let n = x.len() / 2;
        Self::new(x[..n].to_vec(), x[n..2 * n].to_vec(), x[2 * n])
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn arity(&self) -> Arity {
        Arity::Contact(self.n())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut x = self.q.clone();
        x.extend_from_slice(&self.p);
        x.push(self.z);
        x
    }

    /// Drops the fiber coordinate.
    pub fn project(&self) -> PhaseState {
        PhaseState {
            q: self.q.clone(),
            p: self.p.clone(),
        }
    }
}

/// Either kind of state, for code that handles both spaces uniformly.
#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Phase(PhaseState),
    Contact(ContactState),
}

impl State {
    pub fn arity(&self) -> Arity {
        match self {
            State::Phase(s) => s.arity(),
            State::Contact(s) => s.arity(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        match self {
            State::Phase(s) => s.to_flat(),
            State::Contact(s) => s.to_flat(),
        }
    }

    pub fn from_flat(arity: Arity, x: &[f64]) -> Result<Self> {
        arity_of_len(arity, x.len())?;
        Ok(match arity {
            Arity::Symplectic(_) => State::Phase(PhaseState::from_flat(x)?),
            Arity::Contact(_) => State::Contact(ContactState::from_flat(x)?),
        })
    }
}

impl From<PhaseState> for State {
    fn from(s: PhaseState) -> Self {
        State::Phase(s)
    }
}

impl From<ContactState> for State {
    fn from(s: ContactState) -> Self {
        State::Contact(s)
    }
}

fn arity_of_len(arity: Arity, len: usize) -> Result<()> {
    if arity.dim() == len {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{arity} needs {} coordinates, got {len}",
            arity.dim()
        )))
    }
}

/// A tangent vector in flat Darboux components `(dq, dp[, dz])`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub arity: Arity,
    pub components: Vec<f64>,
}

impl TangentVector {
    pub fn new(arity: Arity, components: Vec<f64>) -> Self {
        debug_assert_eq!(arity.dim(), components.len());
        Self { arity, components }
    }

    pub fn q(&self) -> &[f64] {
        &self.components[..self.arity.n()]
    }

    pub fn p(&self) -> &[f64] {
        let n = self.arity.n();
        &self.components[n..2 * n]
    }

    pub fn z(&self) -> Option<f64> {
        self.arity
            .is_contact()
            .then(|| self.components[2 * self.arity.n()])
    }
}

/// A covector `alpha_i dq^i + alpha^i dp_i [+ u dz]`, stored flat in the same
/// order as the coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CovectorValue {
    pub arity: Arity,
    pub components: Vec<f64>,
}

impl CovectorValue {
    pub fn new(arity: Arity, components: Vec<f64>) -> Result<Self> {
        arity_of_len(arity, components.len())?;
        Ok(Self { arity, components })
    }

    pub fn zero(arity: Arity) -> Self {
        Self {
            arity,
            components: vec![0.0; arity.dim()],
        }
    }

    /// Pairing with a tangent vector at the same point.
    pub fn pair(&self, v: &TangentVector) -> Result<f64> {
        self.arity.expect(v.arity)?;
        Ok(self
            .components
            .iter()
            .zip(&v.components)
            .map(|(a, b)| a * b)
            .sum())
    }
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

#[derive(Clone)]
enum Repr {
    Polynomial(Polynomial),
    Closure {
        value: Arc<ValueFn>,
        gradient: Option<Arc<GradientFn>>,
    },
}

/// A smooth real function on phase space or contact space.
///
/// Polynomial functions carry exact gradients and compose symbolically under
/// brackets; closure-backed functions may supply a gradient and otherwise
/// fall back to central differences with `h = eps^(1/3) * max(1, |x|)`.
#[derive(Clone)]
pub struct ScalarFunction {
    arity: Arity,
    name: String,
    repr: Repr,
}

impl fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFunction")
            .field("arity", &self.arity)
            .field("name", &self.name)
            .field("polynomial", &self.as_polynomial().is_some())
            .finish()
    }
}

/// Central-difference step for coordinate value `x`.
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

impl ScalarFunction {
    pub fn polynomial(arity: Arity, name: impl Into<String>, poly: Polynomial) -> Self {
        assert_eq!(
            poly.dim(),
            arity.dim(),
            "polynomial dimension must match arity"
        );
        Self {
            arity,
            name: name.into(),
            repr: Repr::Polynomial(poly),
        }
    }

    pub fn from_fn<F>(arity: Arity, name: impl Into<String>, value: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            arity,
            name: name.into(),
            repr: Repr::Closure {
                value: Arc::new(value),
                gradient: None,
            },
        }
    }

    /// Attaches an analytic gradient to a closure-backed function.
    pub fn with_gradient<G>(mut self, gradient: G) -> Self
    where
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        match &mut self.repr {
            Repr::Closure { gradient: g, .. } => *g = Some(Arc::new(gradient)),
            Repr::Polynomial(_) => {}
        }
        self
    }

    /// `H = (|q|^2 + |p|^2) / 2`.
    pub fn harmonic(n: usize) -> Self {
        let dim = 2 * n;
        let mut poly = Polynomial::zero(dim);
        for i in 0..dim {
            let mut e = vec![0; dim];
            e[i] = 2;
            poly = &poly + &Polynomial::monomial(dim, e, 0.5);
        }
        Self::polynomial(Arity::Symplectic(n), "harmonic", poly)
    }

    /// Single-particle plasma energy `|p|^2 / 2m + e * phi(q)`.
    pub fn plasma(n: usize, mass: f64, charge: f64, potential: Potential) -> Self {
        let name = format!("plasma(m={mass}, e={charge}, {potential})");
        ScalarFunction::from_fn(Arity::Symplectic(n), name, move |x| {
            let (q, p) = x.split_at(n);
            p.iter().map(|pi| pi * pi).sum::<f64>() / (2.0 * mass) + charge * potential.value(q)
        })
        .with_gradient(move |x, g| {
            let (q, p) = x.split_at(n);
            let (gq, gp) = g.split_at_mut(n);
            potential.gradient(q, gq);
            gq.iter_mut().for_each(|v| *v *= charge);
            for (o, pi) in gp.iter_mut().zip(p) {
                *o = pi / mass;
            }
        })
    }

    pub fn arity(&self) -> Arity {
        self.arity
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn as_polynomial(&self) -> Option<&Polynomial> {
        match &self.repr {
            Repr::Polynomial(p) => Some(p),
            Repr::Closure { .. } => None,
        }
    }

    pub fn has_analytic_gradient(&self) -> bool {
        match &self.repr {
            Repr::Polynomial(_) => true,
            Repr::Closure { gradient, .. } => gradient.is_some(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.repr {
            Repr::Polynomial(p) => p.eval(x),
            Repr::Closure { value, .. } => value(x),
        }
    }

    /// Gradient into `out`, analytic when available.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match &self.repr {
            Repr::Polynomial(p) => p.gradient_at(x, out),
            Repr::Closure {
                gradient: Some(g), ..
            } => g(x, out),
            Repr::Closure { gradient: None, .. } => self.fd_gradient(x, out),
        }
    }

    pub fn gradient_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient(x, &mut g);
        g
    }

    /// Central-difference gradient, independent of any analytic gradient.
    pub fn fd_gradient(&self, x: &[f64], out: &mut [f64]) {
        let mut probe = x.to_vec();
        for i in 0..x.len() {
            let h = fd_step(x[i]);
            probe[i] = x[i] + h;
            let up = self.value(&probe);
            probe[i] = x[i] - h;
            let down = self.value(&probe);
            probe[i] = x[i];
            out[i] = (up - down) / (2.0 * h);
        }
    }

    /// Largest relative disagreement between the analytic and the
    /// finite-difference gradient over `probes`.
    pub fn gradient_consistency(&self, probes: &[Vec<f64>]) -> f64 {
        let dim = self.arity.dim();
        let mut worst: f64 = 0.0;
        let mut a = vec![0.0; dim];
        let mut b = vec![0.0; dim];
        for x in probes {
            self.gradient(x, &mut a);
            self.fd_gradient(x, &mut b);
            for (ga, gb) in a.iter().zip(&b) {
                let scale = ga.abs().max(gb.abs()).max(1.0);
                worst = worst.max((ga - gb).abs() / scale);
            }
        }
        worst
    }

    /// Partial derivative along the Reeb direction `d/dz` (contact arity only).
    pub fn reeb_derivative(&self, x: &[f64]) -> f64 {
        debug_assert!(self.arity.is_contact());
        let mut g = vec![0.0; x.len()];
        self.gradient(x, &mut g);
        g[x.len() - 1]
    }
}

/// External electrostatic potential used by the plasma Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential {
    /// `phi = 0`
    Free,
    /// `phi(q) = amplitude * cos(k q_1)`
    Cosine { amplitude: f64, wavenumber: f64 },
    /// `phi(q) = strength * |q|^2 / 2`
    Harmonic { strength: f64 },
}

impl Potential {
    pub fn value(&self, q: &[f64]) -> f64 {
        match *self {
            Potential::Free => 0.0,
            Potential::Cosine {
                amplitude,
                wavenumber,
            } => amplitude * (wavenumber * q[0]).cos(),
            Potential::Harmonic { strength } => {
                0.5 * strength * q.iter().map(|v| v * v).sum::<f64>()
            }
        }
    }

    pub fn gradient(&self, q: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match *self {
            Potential::Free => {}
            Potential::Cosine {
                amplitude,
                wavenumber,
            } => out[0] = -amplitude * wavenumber * (wavenumber * q[0]).sin(),
            Potential::Harmonic { strength } => {
                for (o, qi) in out.iter_mut().zip(q) {
                    *o = strength * qi;
                }
            }
        }
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Free => write!(f, "phi=0"),
            Potential::Cosine {
                amplitude,
                wavenumber,
            } => write!(f, "phi={amplitude}cos({wavenumber}q)"),
            Potential::Harmonic { strength } => write!(f, "phi={strength}q^2/2"),
        }
    }
}

/// Liouville field `Z = -p d/dp`, so `(qdot, pdot) = (0, -p)`.
pub fn liouville_field(s: &PhaseState) -> TangentVector {
    let mut c = vec![0.0; 2 * s.n()];
    for (o, p) in c[s.n()..].iter_mut().zip(s.p()) {
        *o = -p;
    }
    TangentVector::new(s.arity(), c)
}

/// Canonical one-form `Theta = p dq` at `s`.
pub fn liouville_form(s: &PhaseState) -> CovectorValue {
    let mut c = vec![0.0; 2 * s.n()];
    c[..s.n()].copy_from_slice(s.p());
    CovectorValue {
        arity: s.arity(),
        components: c,
    }
}

/// Inverse of `X -> i_X Omega`: `a dq + b dp` maps to `(b, -a)`.
pub fn symplectic_sharp(alpha: &CovectorValue, s: &PhaseState) -> Result<TangentVector> {
    s.arity().expect(alpha.arity)?;
    let n = s.n();
    let mut c = vec![0.0; 2 * n];
    for i in 0..n {
        c[i] = alpha.components[n + i];
        c[n + i] = -alpha.components[i];
    }
    Ok(TangentVector::new(s.arity(), c))
}

/// `X -> i_X Omega`: `(u, v)` maps to `-v dq + u dp`.
pub fn symplectic_flat(v: &TangentVector, s: &PhaseState) -> Result<CovectorValue> {
    s.arity().expect(v.arity)?;
    let n = s.n();
    let mut c = vec![0.0; 2 * n];
    for i in 0..n {
        c[i] = -v.components[n + i];
        c[n + i] = v.components[i];
    }
    Ok(CovectorValue {
        arity: s.arity(),
        components: c,
    })
}

/// Contact form `eta = dz - p dq` and Reeb field `R = d/dz` at `s`.
pub fn contact_form_and_reeb(s: &ContactState) -> (CovectorValue, TangentVector) {
    let n = s.n();
    let mut eta = vec![0.0; 2 * n + 1];
    for (o, p) in eta[..n].iter_mut().zip(s.p()) {
        *o = -p;
    }
    eta[2 * n] = 1.0;
    let mut reeb = vec![0.0; 2 * n + 1];
    reeb[2 * n] = 1.0;
    (
        CovectorValue {
            arity: s.arity(),
            components: eta,
        },
        TangentVector::new(s.arity(), reeb),
    )
}

/// Contact bivector map: `(a_i, a^i, u) -> (a^i, -(a_i + p_i u), a^i p_i)`.
pub fn sharp_lambda(alpha: &CovectorValue, s: &ContactState) -> Result<TangentVector> {
    s.arity().expect(alpha.arity)?;
    let n = s.n();
    let u = alpha.components[2 * n];
    let mut c = vec![0.0; 2 * n + 1];
    let mut zdot = 0.0;
    for i in 0..n {
        let a_lower = alpha.components[i];
        let a_upper = alpha.components[n + i];
        let p = s.p()[i];
        c[i] = a_upper;
        c[n + i] = -(a_lower + p * u);
        zdot += a_upper * p;
    }
    c[2 * n] = zdot;
    Ok(TangentVector::new(s.arity(), c))
}

/// `d eta(X, Y)` for `d eta = dq^i ^ dp_i` (from `eta = dz - p dq`).
pub fn d_eta(s: &ContactState, x: &TangentVector, y: &TangentVector) -> f64 {
    let n = s.n();
    (0..n)
        .map(|i| x.components[i] * y.components[n + i] - x.components[n + i] * y.components[i])
        .sum()
}
