//! Particle-level vector fields and trajectory integration.
//!
//! Supports Hamiltonian, conformal Hamiltonian (`X_H - c Z`), contact and
//! strict contact dynamics, with divergence and flow-volume diagnostics.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{fd_step, Arity, ScalarFunction, State, TangentVector};

const BLOW_UP: f64 = 1e12;
const STRICT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldKind {
    Hamiltonian,
    Conformal { c: f64 },
    Contact,
    StrictContact,
}

impl FieldKind {
    pub fn is_contact(self) -> bool {
        matches!(self, FieldKind::Contact | FieldKind::StrictContact)
    }

    fn check(self, h: &ScalarFunction) -> Result<()> {
        if self.is_contact() != h.arity().is_contact() {
            return Err(Error::ArityMismatch {
                expected: format!(
                    "{} Hamiltonian for {self:?}",
                    if self.is_contact() {
                        "contact"
                    } else {
                        "symplectic"
                    }
                ),
                found: h.arity().to_string(),
            });
        }
        if self == FieldKind::StrictContact {
            check_strict(h, &[])?;
        }
        Ok(())
    }
}

/// Probes `dH/dz` at seeded sample states (and any `extra` states).
pub fn check_strict(h: &ScalarFunction, extra: &[Vec<f64>]) -> Result<()> {
    let dim = h.arity().dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut probes: Vec<Vec<f64>> = (0..16)
        .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    probes.extend(extra.iter().cloned());
    for x in &probes {
        let hz = h.reeb_derivative(x);
        if hz.abs() > STRICT_TOL {
            return Err(Error::NotStrict(hz.abs()));
        }
    }
    Ok(())
}

/// Field value on flat coordinates; `grad` is scratch of length `dim`.
fn field_into(kind: FieldKind, h: &ScalarFunction, x: &[f64], grad: &mut [f64], out: &mut [f64]) {
    let n = h.arity().n();
    h.gradient(x, grad);
    for i in 0..n {
        out[i] = grad[n + i];
        out[n + i] = -grad[i];
    }
    match kind {
        FieldKind::Hamiltonian => {}
        FieldKind::Conformal { c } => {
            for i in 0..n {
                out[n + i] += c * x[n + i];
            }
        }
        FieldKind::Contact | FieldKind::StrictContact => {
            let hz = if kind == FieldKind::StrictContact {
                0.0
            } else {
                grad[2 * n]
            };
            let mut p_hp = 0.0;
            for i in 0..n {
                out[n + i] -= x[n + i] * hz;
                p_hp += x[n + i] * grad[n + i];
            }
            out[2 * n] = p_hp - h.value(x);
        }
    }
}

/// The vector field of `kind` generated by `h`, at `s`.
pub fn evaluate_field(kind: FieldKind, h: &ScalarFunction, s: &State) -> Result<TangentVector> {
    kind.check(h)?;
    h.arity().expect(s.arity())?;
    let x = s.to_flat();
    Ok(TangentVector::new(h.arity(), field_flat(kind, h, &x)))
}

pub fn field_flat(kind: FieldKind, h: &ScalarFunction, x: &[f64]) -> Vec<f64> {
    let dim = x.len();
    let mut grad = vec![0.0; dim];
    let mut out = vec![0.0; dim];
    field_into(kind, h, x, &mut grad, &mut out);
    out
}

fn divergence_flat(kind: FieldKind, h: &ScalarFunction, x: &[f64]) -> f64 {
    let n = h.arity().n();
    match kind {
        FieldKind::Hamiltonian | FieldKind::StrictContact => 0.0,
        FieldKind::Conformal { c } => n as f64 * c,
        FieldKind::Contact => -((n + 1) as f64) * h.reeb_derivative(x),
    }
}

/// Closed-form divergence of the field.
pub fn divergence(kind: FieldKind, h: &ScalarFunction, s: &State) -> Result<f64> {
    kind.check(h)?;
    h.arity().expect(s.arity())?;
    Ok(divergence_flat(kind, h, &s.to_flat()))
}

/// Central-difference divergence of `evaluate_field`, for cross-checking.
pub fn fd_divergence(kind: FieldKind, h: &ScalarFunction, s: &State) -> Result<f64> {
    kind.check(h)?;
    h.arity().expect(s.arity())?;
    let x = s.to_flat();
    Ok(field_jacobian(kind, h, &x).trace())
}

/// Jacobian of the field by central differences of the field values.
pub fn field_jacobian(kind: FieldKind, h: &ScalarFunction, x: &[f64]) -> DMatrix<f64> {
    let dim = x.len();
    let mut jac = DMatrix::zeros(dim, dim);
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; dim];
    let mut up = vec![0.0; dim];
    let mut dn = vec![0.0; dim];
    for j in 0..dim {
        // a slightly larger step than for gradients: the field is itself differenced
        let step = fd_step(x[j]) * 4.0;
        probe[j] = x[j] + step;
        field_into(kind, h, &probe, &mut grad, &mut up);
        probe[j] = x[j] - step;
        field_into(kind, h, &probe, &mut grad, &mut dn);
        probe[j] = x[j];
        for i in 0..dim {
            jac[(i, j)] = (up[i] - dn[i]) / (2.0 * step);
        }
    }
    jac
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rk4,
    ConformalSplitting,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// `H` (or `H-bar` on the contact space) at the end of the step.
    pub energy: f64,
    /// Integrated divergence from `t = 0`.
    pub log_volume: f64,
    pub dt: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub arity: Arity,
    pub times: Vec<f64>,
    /// Flat coordinates, one entry per time.
    pub states: Vec<Vec<f64>>,
    /// One record per stored state; the first has `dt = 0`.
    pub diagnostics: Vec<StepRecord>,
}

impl Trajectory {
    pub fn state(&self, k: usize) -> State {
        State::from_flat(self.arity, &self.states[k]).expect("trajectory states are validated")
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory is never empty")
    }
}

fn step_sizes(t_final: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() || !(t_final >= dt) || !t_final.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need dt > 0 and T >= dt, got dt={dt}, T={t_final}"
        )));
    }
    let full = ((t_final / dt) * (1.0 + 1e-12)).floor() as usize;
    let mut steps = vec![dt; full];
    let rest = t_final - full as f64 * dt;
    if rest > 1e-12 * t_final {
        steps.push(rest);
    }
    Ok(steps)
}

fn blown_up(x: &[f64]) -> bool {
    x.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP)
}

/// Separability probe `d^2H / dq dp = 0`, exact for polynomials.
pub fn is_separable(h: &ScalarFunction) -> bool {
    let n = h.arity().n();
    if let Some(poly) = h.as_polynomial() {
        return poly.terms().all(|(e, _)| {
            let has_q = e[..n].iter().any(|&k| k > 0);
            let has_p = e[n..2 * n].iter().any(|&k| k > 0);
            !(has_q && has_p)
        });
    }
    let dim = h.arity().dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0xa11);
    for _ in 0..8 {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        for j in 0..n {
            let step = 1e-4;
            let mut up = x.clone();
            up[j] += step;
            let mut dn = x.clone();
            dn[j] -= step;
            let gu = h.gradient_vec(&up);
            let gd = h.gradient_vec(&dn);
            for i in n..2 * n {
                if ((gu[i] - gd[i]) / (2.0 * step)).abs() > 1e-6 {
                    return false;
                }
            }
        }
    }
    true
}

struct Rk4Work {
    grad: Vec<f64>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4Work {
    fn new(dim: usize) -> Self {
        Self {
            grad: vec![0.0; dim],
            k: std::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
        }
    }
}

/// One classical RK4 step of the state together with the log-volume.
fn rk4_step(
    kind: FieldKind,
    h: &ScalarFunction,
    x: &mut [f64],
    log_vol: &mut f64,
    dt: f64,
    w: &mut Rk4Work,
) {
    let dim = x.len();
    let mut divs = [0.0; 4];
    for stage in 0..4 {
        let a = match stage {
            0 => 0.0,
            1 | 2 => 0.5 * dt,
            _ => dt,
        };
        for i in 0..dim {
            w.tmp[i] = if stage == 0 {
                x[i]
            } else {
                x[i] + a * w.k[stage - 1][i]
            };
        }
        let (k_prev, k_rest) = w.k.split_at_mut(stage);
        let _ = k_prev;
        field_into(kind, h, &w.tmp, &mut w.grad, &mut k_rest[0]);
        divs[stage] = divergence_flat(kind, h, &w.tmp);
    }
    for i in 0..dim {
        x[i] += dt / 6.0 * (w.k[0][i] + 2.0 * w.k[1][i] + 2.0 * w.k[2][i] + w.k[3][i]);
    }
    *log_vol += dt / 6.0 * (divs[0] + 2.0 * divs[1] + 2.0 * divs[2] + divs[3]);
}

/// Strang splitting: half dissipation, kick-drift-kick, half dissipation.
fn splitting_step(c: f64, h: &ScalarFunction, x: &mut [f64], dt: f64, grad: &mut [f64]) {
    let n = h.arity().n();
    let damp = (0.5 * c * dt).exp();
    x[n..].iter_mut().for_each(|p| *p *= damp);
    h.gradient(x, grad);
    for i in 0..n {
        x[n + i] -= 0.5 * dt * grad[i];
    }
    h.gradient(x, grad);
    for i in 0..n {
        x[i] += dt * grad[n + i];
    }
    h.gradient(x, grad);
    for i in 0..n {
        x[n + i] -= 0.5 * dt * grad[i];
    }
    x[n..].iter_mut().for_each(|p| *p *= damp);
}

fn validate_integration(
    kind: FieldKind,
    h: &ScalarFunction,
    s0: &State,
    method: Method,
) -> Result<()> {
    kind.check(h)?;
    h.arity().expect(s0.arity())?;
    if kind == FieldKind::StrictContact {
        check_strict(h, &[s0.to_flat()])?;
    }
    if method == Method::ConformalSplitting {
        if !matches!(kind, FieldKind::Conformal { .. }) {
            return Err(Error::InvalidArgument(
                "conformal_splitting needs a conformal field".into(),
            ));
        }
        if !is_separable(h) {
            return Err(Error::InvalidArgument(
                "conformal_splitting needs a separable Hamiltonian T(p) + V(q)".into(),
            ));
        }
    }
    Ok(())
}

/// Integrates from `s0` to time `T`, storing every step. The final step is
/// shortened when `T` is not a multiple of `dt`.
pub fn integrate(
    kind: FieldKind,
    h: &ScalarFunction,
    s0: &State,
    t_final: f64,
    dt: f64,
    method: Method,
) -> Result<Trajectory> {
    validate_integration(kind, h, s0, method)?;
    let steps = step_sizes(t_final, dt)?;
    let mut x = s0.to_flat();
    let dim = x.len();
    let mut traj = Trajectory {
        arity: h.arity(),
        times: Vec::with_capacity(steps.len() + 1),
        states: Vec::with_capacity(steps.len() + 1),
        diagnostics: Vec::with_capacity(steps.len() + 1),
    };
    traj.times.push(0.0);
    traj.states.push(x.clone());
    traj.diagnostics.push(StepRecord {
        energy: h.value(&x),
        log_volume: 0.0,
        dt: 0.0,
    });
    let mut work = Rk4Work::new(dim);
    let mut log_vol = 0.0;
    let mut t = 0.0;
    for (k, &step) in steps.iter().enumerate() {
        match (method, kind) {
            (Method::ConformalSplitting, FieldKind::Conformal { c }) => {
                splitting_step(c, h, &mut x, step, &mut work.grad);
                log_vol += h.arity().n() as f64 * c * step;
            }
            _ => rk4_step(kind, h, &mut x, &mut log_vol, step, &mut work),
        }
        t += step;
        if k + 1 == steps.len() {
            t = t_final;
        }
        if blown_up(&x) {
            return Err(Error::BlowUp {
                step: k + 1,
                time: t,
            });
        }
        traj.times.push(t);
        traj.states.push(x.clone());
        traj.diagnostics.push(StepRecord {
            energy: h.value(&x),
            log_volume: log_vol,
            dt: step,
        });
    }
    Ok(traj)
}

/// Determinant of the tangent map of the time-`T` flow at `s0`, from the
/// variational equations `M' = J M` integrated with the state.
pub fn flow_volume_factor(
    kind: FieldKind,
    h: &ScalarFunction,
    s0: &State,
    t_final: f64,
    dt: f64,
) -> Result<f64> {
    flow_volume_factor_with(kind, h, s0, t_final, dt, Method::Rk4)
}

pub fn flow_volume_factor_with(
    kind: FieldKind,
    h: &ScalarFunction,
    s0: &State,
    t_final: f64,
    dt: f64,
    method: Method,
) -> Result<f64> {
    validate_integration(kind, h, s0, method)?;
    let steps = step_sizes(t_final, dt)?;
    let mut x = s0.to_flat();
    let dim = x.len();
    let mut m = DMatrix::<f64>::identity(dim, dim);
    let mut work = Rk4Work::new(dim);
    let mut t = 0.0;
    for (k, &step) in steps.iter().enumerate() {
        match (method, kind) {
            (Method::ConformalSplitting, FieldKind::Conformal { c }) => {
                let jac = step_map_jacobian(c, h, &x, step);
                m = jac * m;
                splitting_step(c, h, &mut x, step, &mut work.grad);
            }
            _ => {
                // variational RK4 stages share the state stages
                let mut stage_x = x.clone();
                let mut km: Vec<DMatrix<f64>> = Vec::with_capacity(4);
                let mut kx: Vec<Vec<f64>> = Vec::with_capacity(4);
                for stage in 0..4 {
                    let a = [0.0, 0.5, 0.5, 1.0][stage] * step;
                    let stage_m = if stage == 0 {
                        m.clone()
                    } else {
                        &m + &km[stage - 1] * a
                    };
                    if stage > 0 {
                        for i in 0..dim {
                            stage_x[i] = x[i] + a * kx[stage - 1][i];
                        }
                    }
                    let jac = field_jacobian(kind, h, &stage_x);
                    km.push(jac * stage_m);
                    kx.push(field_flat(kind, h, &stage_x));
                }
                for i in 0..dim {
                    x[i] += step / 6.0 * (kx[0][i] + 2.0 * kx[1][i] + 2.0 * kx[2][i] + kx[3][i]);
                }
                m += (&km[0] + &km[1] * 2.0 + &km[2] * 2.0 + &km[3]) * (step / 6.0);
            }
        }
        t += step;
        if blown_up(&x) || m.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                step: k + 1,
                time: t,
            });
        }
    }
    Ok(m.lu().determinant())
}

fn step_map_jacobian(c: f64, h: &ScalarFunction, x: &[f64], dt: f64) -> DMatrix<f64> {
    let dim = x.len();
    let mut jac = DMatrix::zeros(dim, dim);
    let mut grad = vec![0.0; dim];
    for j in 0..dim {
        let step = fd_step(x[j]) * 4.0;
        let mut up = x.to_vec();
        up[j] += step;
        splitting_step(c, h, &mut up, dt, &mut grad);
        let mut dn = x.to_vec();
        dn[j] -= step;
        splitting_step(c, h, &mut dn, dt, &mut grad);
        for i in 0..dim {
            jac[(i, j)] = (up[i] - dn[i]) / (2.0 * step);
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ContactState, PhaseState};
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

    fn ps(q: f64, p: f64) -> State {
        PhaseState::new(vec![q], vec![p]).unwrap().into()
    }

    fn cs(q: f64, p: f64, z: f64) -> State {
        ContactState::new(vec![q], vec![p], z).unwrap().into()
    }

    #[test]
    fn field_examples() {
        let h = sym("0.5*q^2 + 0.5*p^2");
        let v = evaluate_field(FieldKind::Conformal { c: 0.5 }, &h, &ps(0.0, 1.0)).unwrap();
        assert_eq!(v.components, vec![1.0, 0.5]);
        let hb = con("0.5*q^2 + 0.5*p^2 + 0.1*z");
        let v = evaluate_field(FieldKind::Contact, &hb, &cs(0.0, 1.0, 0.0)).unwrap();
        assert!((v.components[0] - 1.0).abs() < 1e-15);
        assert!((v.components[1] + 0.1).abs() < 1e-15);
        assert!((v.components[2] - 0.5).abs() < 1e-15);
        assert!(evaluate_field(FieldKind::Contact, &h, &ps(0.0, 1.0)).is_err());
        assert!(matches!(
            evaluate_field(FieldKind::StrictContact, &hb, &cs(0.0, 1.0, 0.0)),
            Err(Error::NotStrict(_))
        ));
    }

    #[test]
    fn divergence_examples() {
        let h = sym("0.5*q^2 + 0.5*p^2 + q*p^2");
        let c = FieldKind::Conformal { c: 0.3 };
        assert_eq!(divergence(c, &h, &ps(0.2, 0.4)).unwrap(), 0.3);
        assert_eq!(
            divergence(FieldKind::Hamiltonian, &h, &ps(0.2, 0.4)).unwrap(),
            0.0
        );
        let hb = con("0.5*q^2 + 0.5*p^2 - 0.5*z");
        assert_eq!(
            divergence(FieldKind::Contact, &hb, &cs(1.0, 2.0, 3.0)).unwrap(),
            1.0
        );
        let hz = con("q*z^2 + p^3 - z*p");
        for s in [cs(0.3, -0.2, 0.9), cs(-1.0, 1.2, 0.1)] {
            let a = divergence(FieldKind::Contact, &hz, &s).unwrap();
            let b = fd_divergence(FieldKind::Contact, &hz, &s).unwrap();
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        let a = fd_divergence(c, &h, &ps(0.2, 0.4)).unwrap();
        assert!((a - 0.3).abs() < 1e-6);
    }

    #[test]
    fn conformal_zero_matches_hamiltonian() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = ScalarFunction::polynomial(
            Arity::Symplectic(1),
            "r",
            Polynomial::random(2, 4, &mut rng),
        );
        for _ in 0..100 {
            let s = ps(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let a = evaluate_field(FieldKind::Conformal { c: 0.0 }, &h, &s).unwrap();
            let b = evaluate_field(FieldKind::Hamiltonian, &h, &s).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn circular_orbit_returns() {
        let h = ScalarFunction::harmonic(1);
        let tr = integrate(
            FieldKind::Conformal { c: 0.0 },
            &h,
            &ps(1.0, 0.0),
            2.0 * std::f64::consts::PI,
            1e-3,
            Method::Rk4,
        )
        .unwrap();
        let end = tr.last();
        assert!(
            (end[0] - 1.0).abs() < 1e-9 && end[1].abs() < 1e-9,
            "{end:?}"
        );
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*tr.times.last().unwrap(), 2.0 * std::f64::consts::PI);
    }

    #[test]
    fn conformal_linear_matches_matrix_exponential() {
        let h = ScalarFunction::harmonic(1);
        let c = 0.2;
        let tr = integrate(
            FieldKind::Conformal { c },
            &h,
            &ps(1.0, 0.0),
            5.0,
            1e-3,
            Method::Rk4,
        )
        .unwrap();
        let a = nalgebra::Matrix2::new(0.0, 1.0, -1.0, c);
        for k in (0..tr.times.len()).step_by(500) {
            let exact = (a * tr.times[k]).exp() * nalgebra::Vector2::new(1.0, 0.0);
            let x = &tr.states[k];
            assert!((x[0] - exact[0]).abs() < 1e-10 && (x[1] - exact[1]).abs() < 1e-10);
        }
        // conformal energy law dH/dt = -c Z(H) = c p H_p
        for k in 1..tr.times.len() - 1 {
            let dt = tr.times[k + 1] - tr.times[k - 1];
            let dh = (tr.diagnostics[k + 1].energy - tr.diagnostics[k - 1].energy) / dt;
            let p = tr.states[k][1];
            assert!((dh - c * p * p).abs() < 1e-5);
        }
    }

    #[test]
    fn contact_with_linear_z_reproduces_conformal() {
        let c = 0.1;
        let hb = con("0.5*q^2 + 0.5*p^2 - 0.1*z");
        let h = ScalarFunction::harmonic(1);
        let a = integrate(
            FieldKind::Contact,
            &hb,
            &cs(1.0, 0.0, 0.0),
            3.0,
            1e-2,
            Method::Rk4,
        )
        .unwrap();
        let b = integrate(
            FieldKind::Conformal { c },
            &h,
            &ps(1.0, 0.0),
            3.0,
            1e-2,
            Method::Rk4,
        )
        .unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!((x[0] - y[0]).abs() < 1e-10 && (x[1] - y[1]).abs() < 1e-10);
        }
        // H-bar grows like e^{ct}
        let e0 = a.diagnostics[0].energy;
        for (t, d) in a.times.iter().zip(&a.diagnostics) {
            assert!((d.energy - e0 * (c * t).exp()).abs() <= 1e-6 * d.energy.abs());
        }
    }

    #[test]
    fn volume_factors() {
        let h = ScalarFunction::harmonic(1);
        let v = flow_volume_factor(
            FieldKind::Conformal { c: 0.2 },
            &h,
            &ps(0.5, 0.3),
            1.0,
            1e-2,
        )
        .unwrap();
        assert!((v - 0.2f64.exp()).abs() < 1e-5, "{v}");
        let v = flow_volume_factor(
            FieldKind::Hamiltonian,
            &sym("0.5*p^2 + 0.25*q^4"),
            &ps(0.5, 0.3),
            1.0,
            1e-2,
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-6, "{v}");
        let hb = con("0.5*q^2 + 0.5*p^2 - 0.3*z");
        let v = flow_volume_factor(FieldKind::Contact, &hb, &cs(0.5, 0.3, 0.1), 1.0, 1e-2).unwrap();
        assert!((v - 0.6f64.exp()).abs() < 1e-4, "{v}");
        let v = flow_volume_factor_with(
            FieldKind::Conformal { c: 0.2 },
            &h,
            &ps(0.5, 0.3),
            1.0,
            1e-2,
            Method::ConformalSplitting,
        )
        .unwrap();
        assert!((v - 0.2f64.exp()).abs() < 1e-6, "{v}");
    }

    #[test]
    fn contact_preserved_quantity() {
        // V H-bar^{-(n+1)} is constant when H-bar does not vanish
        let hb = con("1 + 0.5*q^2 + 0.5*p^2 + 0.2*z + 0.1*q*z");
        let s0 = cs(0.3, 0.2, 0.1);
        let h0 = hb.value(&s0.to_flat());
        for t in [0.25, 0.5, 1.0] {
            let tr = integrate(FieldKind::Contact, &hb, &s0, t, 1e-2, Method::Rk4).unwrap();
            let v = flow_volume_factor(FieldKind::Contact, &hb, &s0, t, 1e-2).unwrap();
            let ht = hb.value(tr.last());
            let q = v * ht.powi(-2);
            assert!(
                (q - h0.powi(-2)).abs() <= 1e-4 * q.abs(),
                "{q} vs {}",
                h0.powi(-2)
            );
            // log-volume diagnostic agrees with the tangent-map determinant
            assert!((tr.diagnostics.last().unwrap().log_volume - v.ln()).abs() < 1e-6);
        }
    }

    #[test]
    fn strict_contact_conserves_energy() {
        let hb = con("0.5*q^2 + 0.5*p^2 + 0.1*q^3");
        let tr = integrate(
            FieldKind::StrictContact,
            &hb,
            &cs(0.4, 0.1, 0.0),
            2.0,
            1e-2,
            Method::Rk4,
        )
        .unwrap();
        let e0 = tr.diagnostics[0].energy;
        assert!(tr.diagnostics.iter().all(|d| (d.energy - e0).abs() < 1e-8));
    }

    #[test]
    fn splitting_is_second_order() {
        let h = sym("0.5*p^2 + 0.5*q^2 + 0.1*q^4");
        let kind = FieldKind::Conformal { c: 0.2 };
        let reference = integrate(kind, &h, &ps(1.0, 0.0), 1.0, 1e-4, Method::Rk4).unwrap();
        let err = |dt: f64| {
            let tr =
                integrate(kind, &h, &ps(1.0, 0.0), 1.0, dt, Method::ConformalSplitting).unwrap();
            let (a, b) = (tr.last(), reference.last());
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
        };
        let order = (err(0.02) / err(0.01)).log2();
        assert!((order - 2.0).abs() < 0.2, "order {order}");
        assert!(integrate(
            kind,
            &sym("q*p"),
            &ps(1.0, 0.0),
            1.0,
            0.1,
            Method::ConformalSplitting
        )
        .is_err());
    }

    #[test]
    fn blow_up_reports_step() {
        let h = sym("0.5*p^2");
        let err = integrate(
            FieldKind::Conformal { c: 30.0 },
            &h,
            &ps(0.0, 1.0),
            2.0,
            1e-2,
            Method::Rk4,
        )
        .unwrap_err();
        match err {
            Error::BlowUp { step, .. } => assert!(step > 1 && step < 200),
            other => panic!("{other}"),
        }
    }
}
