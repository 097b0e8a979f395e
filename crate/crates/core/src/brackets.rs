//! Pointwise canonical Poisson and contact (Jacobi) brackets.
//!
//! `{F,H} = dF/dq . dH/dp - dF/dp . dH/dq` on phase space, and on the contact
//! space
//!
//! `{F,H}^C = {F,H} + (F - p.dF/dp) dH/dz - (H - p.dH/dp) dF/dz`.
//!
//! Bracket *functions* of two polynomials are assembled symbolically; for any
//! other input the bracket is a closure whose gradient falls back to central
//! differences of the bracket value.

use crate::error::{Error, Result};
use crate::geometry::{Arity, ScalarFunction};
use crate::polynomial::Polynomial;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BracketKind {
    Symplectic,
    Contact,
}

fn check_pair(
    kind: BracketKind,
    f: &ScalarFunction,
    h: &ScalarFunction,
    x: &[f64],
) -> Result<usize> {
    f.arity().expect(h.arity())?;
    let n = f.arity().n();
    match (kind, f.arity()) {
        (BracketKind::Symplectic, Arity::Symplectic(_))
        | (BracketKind::Contact, Arity::Contact(_)) => {}
        (_, found) => {
            return Err(Error::ArityMismatch {
                expected: format!("{kind:?} bracket input"),
                found: found.to_string(),
            })
        }
    }
    if x.len() != f.arity().dim() {
        return Err(Error::ArityMismatch {
            expected: f.arity().to_string(),
            found: format!("state of length {}", x.len()),
        });
    }
    Ok(n)
}

fn poisson_from_gradients(n: usize, gf: &[f64], gh: &[f64]) -> f64 {
    (0..n).map(|i| gf[i] * gh[n + i] - gf[n + i] * gh[i]).sum()
}

fn contact_from_gradients(n: usize, x: &[f64], fv: f64, hv: f64, gf: &[f64], gh: &[f64]) -> f64 {
    let p = &x[n..2 * n];
    let p_dfp: f64 = (0..n).map(|i| p[i] * gf[n + i]).sum();
    let p_dhp: f64 = (0..n).map(|i| p[i] * gh[n + i]).sum();
    poisson_from_gradients(n, gf, gh) + (fv - p_dfp) * gh[2 * n] - (hv - p_dhp) * gf[2 * n]
}

/// Canonical Poisson bracket `{F,H}` at the flat phase-space point `x`.
pub fn poisson_bracket(f: &ScalarFunction, h: &ScalarFunction, x: &[f64]) -> Result<f64> {
    let n = check_pair(BracketKind::Symplectic, f, h, x)?;
    Ok(poisson_from_gradients(
        n,
        &f.gradient_vec(x),
        &h.gradient_vec(x),
    ))
}

/// Contact bracket `{F,H}^C` at the flat contact point `x`.
pub fn contact_bracket(f: &ScalarFunction, h: &ScalarFunction, x: &[f64]) -> Result<f64> {
    let n = check_pair(BracketKind::Contact, f, h, x)?;
    Ok(contact_from_gradients(
        n,
        x,
        f.value(x),
        h.value(x),
        &f.gradient_vec(x),
        &h.gradient_vec(x),
    ))
}

pub fn bracket(
    kind: BracketKind,
    f: &ScalarFunction,
    h: &ScalarFunction,
    x: &[f64],
) -> Result<f64> {
    match kind {
        BracketKind::Symplectic => poisson_bracket(f, h, x),
        BracketKind::Contact => contact_bracket(f, h, x),
    }
}

/// Symbolic canonical bracket of two polynomials in `(q, p)`.
pub fn poisson_bracket_poly(n: usize, f: &Polynomial, h: &Polynomial) -> Polynomial {
    let mut out = Polynomial::zero(f.dim());
    for i in 0..n {
        out = &out + &(&f.derivative(i) * &h.derivative(n + i));
        out = &out - &(&f.derivative(n + i) * &h.derivative(i));
    }
    out
}

/// `sum_i p_i dF/dp_i` for a polynomial in flat Darboux coordinates.
fn p_dot_dp(n: usize, f: &Polynomial) -> Polynomial {
    let mut out = Polynomial::zero(f.dim());
    for i in 0..n {
        out = &out + &(&Polynomial::variable(f.dim(), n + i) * &f.derivative(n + i));
    }
    out
}

/// Liouville derivative `Z(F) = -p . dF/dp`, symbolically.
pub fn liouville_derivative_poly(n: usize, f: &Polynomial) -> Polynomial {
    -&p_dot_dp(n, f)
}

/// Symbolic contact bracket of two polynomials in `(q, p, z)`.
pub fn contact_bracket_poly(n: usize, f: &Polynomial, h: &Polynomial) -> Polynomial {
    let z = 2 * n;
    let a = &(f - &p_dot_dp(n, f)) * &h.derivative(z);
    let b = &(h - &p_dot_dp(n, h)) * &f.derivative(z);
    &(&poisson_bracket_poly(n, f, h) + &a) - &b
}

/// The bracket `{F,H}` as a new scalar function. Symbolic when both inputs
/// are polynomials; otherwise a closure evaluated from the input gradients.
pub fn bracket_function(
    kind: BracketKind,
    f: &ScalarFunction,
    h: &ScalarFunction,
) -> Result<ScalarFunction> {
    f.arity().expect(h.arity())?;
    let arity = f.arity();
    let n = arity.n();
    let name = format!("{{{},{}}}", f.name(), h.name());
    if let (Some(pf), Some(ph)) = (f.as_polynomial(), h.as_polynomial()) {
        let poly = match kind {
            BracketKind::Symplectic => poisson_bracket_poly(n, pf, ph),
            BracketKind::Contact => contact_bracket_poly(n, pf, ph),
        };
        // validates kind against arity
        let probe = vec![0.0; arity.dim()];
        check_pair(kind, f, h, &probe)?;
        return Ok(ScalarFunction::polynomial(arity, name, poly));
    }
    Ok(numeric_bracket_function(kind, f, h)?.renamed(name))
}

/// The bracket as a value-only closure, so any outer differentiation goes
/// through central differences of the bracket value.
pub fn numeric_bracket_function(
    kind: BracketKind,
    f: &ScalarFunction,
    h: &ScalarFunction,
) -> Result<ScalarFunction> {
    let probe = vec![0.0; f.arity().dim()];
    check_pair(kind, f, h, &probe)?;
    let (f, h) = (f.clone(), h.clone());
    let arity = f.arity();
    let name = format!("{{{},{}}}~", f.name(), h.name());
    Ok(ScalarFunction::from_fn(arity, name, move |x| {
        bracket(kind, &f, &h, x).expect("arity checked at construction")
    }))
}

/// Largest `|{{F,G},H} + {{G,H},F} + {{H,F},G}|` over `states`. Inner brackets
/// are differentiated by central differences of their values.
pub fn jacobi_residual(
    kind: BracketKind,
    f: &ScalarFunction,
    g: &ScalarFunction,
    h: &ScalarFunction,
    states: &[Vec<f64>],
) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::InvalidArgument(
            "jacobi_residual needs at least one state".into(),
        ));
    }
    let fg = numeric_bracket_function(kind, f, g)?;
    let gh = numeric_bracket_function(kind, g, h)?;
    let hf = numeric_bracket_function(kind, h, f)?;
    let mut worst: f64 = 0.0;
    for x in states {
        let r = bracket(kind, &fg, h, x)? + bracket(kind, &gh, f, x)? + bracket(kind, &hf, g, x)?;
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// `{FG,H}^C - F{G,H}^C - G{F,H}^C + FG R(H)`, which vanishes identically.
pub fn contact_leibniz_defect(
    f: &ScalarFunction,
    g: &ScalarFunction,
    h: &ScalarFunction,
    x: &[f64],
) -> Result<f64> {
    let (fc, gc) = (f.clone(), g.clone());
    let product = ScalarFunction::from_fn(f.arity(), "FG", move |y| fc.value(y) * gc.value(y));
    let (fc, gc) = (f.clone(), g.clone());
    let product = product.with_gradient(move |y, out| {
        let (fv, gv) = (fc.value(y), gc.value(y));
        let df = fc.gradient_vec(y);
        let dg = gc.gradient_vec(y);
        for i in 0..out.len() {
            out[i] = df[i] * gv + fv * dg[i];
        }
    });
    let lhs = contact_bracket(&product, h, x)?;
    let rest = f.value(x) * contact_bracket(g, h, x)? + g.value(x) * contact_bracket(f, h, x)?;
    Ok(lhs - rest + f.value(x) * g.value(x) * h.reeb_derivative(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SEED: u64 = 20240611;

    fn sym(poly: &str) -> ScalarFunction {
        ScalarFunction::polynomial(
            Arity::Symplectic(1),
            poly,
            Polynomial::parse(poly, &["q", "p"]).unwrap(),
        )
    }

    fn con(poly: &str) -> ScalarFunction {
        ScalarFunction::polynomial(
            Arity::Contact(1),
            poly,
            Polynomial::parse(poly, &["q", "p", "z"]).unwrap(),
        )
    }

    fn random_states(rng: &mut ChaCha8Rng, dim: usize, count: usize) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn poisson_examples() {
        let x = [0.3, -0.8];
        assert_eq!(poisson_bracket(&sym("q"), &sym("p"), &x).unwrap(), 1.0);
        let h = sym("0.5*q^2 + q*p");
        assert_eq!(poisson_bracket(&h, &h, &x).unwrap(), 0.0);
        let v = poisson_bracket(&sym("0.5*q^2"), &sym("0.5*p^2"), &[2.0, 3.0]).unwrap();
        assert_eq!(v, 6.0);
    }

    #[test]
    fn contact_examples() {
        let x = [0.4, 1.7, -0.6];
        assert_eq!(contact_bracket(&con("q"), &con("p"), &x).unwrap(), 1.0);
        // F = z against a z-independent H gives p dH/dp - H
        let h = con("0.5*p^2 + 0.5*q^2 + q*p");
        let expected = {
            let (q, p) = (x[0], x[1]);
            p * (p + q) - (0.5 * p * p + 0.5 * q * q + q * p)
        };
        let got = contact_bracket(&con("z"), &h, &x).unwrap();
        assert!((got - expected).abs() < 1e-14);
        let g = con("q*z + p^2");
        assert_eq!(contact_bracket(&g, &g, &x).unwrap(), 0.0);
    }

    #[test]
    fn arity_mismatch_is_reported() {
        assert!(poisson_bracket(&sym("q"), &con("q"), &[0.0, 0.0]).is_err());
        assert!(contact_bracket(&sym("q"), &sym("p"), &[0.0, 0.0]).is_err());
    }

    #[test]
    fn symbolic_brackets_match_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        for _ in 0..20 {
            let f = ScalarFunction::polynomial(
                Arity::Contact(1),
                "F",
                Polynomial::random(3, 4, &mut rng),
            );
            let h = ScalarFunction::polynomial(
                Arity::Contact(1),
                "H",
                Polynomial::random(3, 4, &mut rng),
            );
            let fh = bracket_function(BracketKind::Contact, &f, &h).unwrap();
            for x in random_states(&mut rng, 3, 5) {
                let direct = contact_bracket(&f, &h, &x).unwrap();
                assert!((fh.value(&x) - direct).abs() < 1e-12 * direct.abs().max(1.0));
            }
        }
    }

    #[test]
    fn antisymmetry_and_reduction_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
        for _ in 0..50 {
            let pf = Polynomial::random(2, 4, &mut rng);
            let ph = Polynomial::random(2, 4, &mut rng);
            let f = ScalarFunction::polynomial(Arity::Symplectic(1), "F", pf.clone());
            let h = ScalarFunction::polynomial(Arity::Symplectic(1), "H", ph.clone());
            let fc = ScalarFunction::polynomial(Arity::Contact(1), "F", pf.extend_dim(3));
            let hc = ScalarFunction::polynomial(Arity::Contact(1), "H", ph.extend_dim(3));
            for x in random_states(&mut rng, 3, 4) {
                let a = poisson_bracket(&f, &h, &x[..2]).unwrap();
                let b = poisson_bracket(&h, &f, &x[..2]).unwrap();
                assert!((a + b).abs() < 1e-12);
                let c = contact_bracket(&fc, &hc, &x).unwrap();
                assert!(
                    (c - a).abs() < 1e-12,
                    "contact bracket of z-free functions must reduce"
                );
                let d = contact_bracket(&hc, &fc, &x).unwrap();
                assert!((c + d).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
        let states = random_states(&mut rng, 2, 100);
        let r = jacobi_residual(
            BracketKind::Symplectic,
            &sym("q"),
            &sym("p"),
            &sym("q*p"),
            &states,
        )
        .unwrap();
        assert!(r <= 1e-6, "{r}");
        let cstates = random_states(&mut rng, 3, 100);
        let r = jacobi_residual(
            BracketKind::Contact,
            &con("q"),
            &con("p"),
            &con("z"),
            &cstates,
        )
        .unwrap();
        assert!(r <= 1e-6, "{r}");
        let f = con("q*z + p^3");
        let r = jacobi_residual(BracketKind::Contact, &f, &f, &con("z^2 - q"), &cstates).unwrap();
        assert!(r <= 1e-8, "{r}");
        assert!(jacobi_residual(BracketKind::Contact, &f, &f, &f, &[]).is_err());
    }

    #[test]
    fn jacobi_random_polynomials() {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
        for kind in [BracketKind::Symplectic, BracketKind::Contact] {
            let (arity, dim) = match kind {
                BracketKind::Symplectic => (Arity::Symplectic(1), 2),
                BracketKind::Contact => (Arity::Contact(1), 3),
            };
            for _ in 0..10 {
                let fs: Vec<_> = (0..3)
                    .map(|_| {
                        ScalarFunction::polynomial(arity, "r", Polynomial::random(dim, 4, &mut rng))
                    })
                    .collect();
                let states = random_states(&mut rng, dim, 10);
                let r = jacobi_residual(kind, &fs[0], &fs[1], &fs[2], &states).unwrap();
                assert!(r <= 1e-6, "{kind:?}: {r}");
            }
        }
    }

    #[test]
    fn leibniz_defect_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
        for _ in 0..30 {
            let fs: Vec<_> = (0..3)
                .map(|_| {
                    ScalarFunction::polynomial(
                        Arity::Contact(1),
                        "r",
                        Polynomial::random(3, 4, &mut rng),
                    )
                })
                .collect();
            for x in random_states(&mut rng, 3, 5) {
                let d = contact_leibniz_defect(&fs[0], &fs[1], &fs[2], &x).unwrap();
                assert!(d.abs() < 1e-8, "{d}");
            }
        }
    }
}
