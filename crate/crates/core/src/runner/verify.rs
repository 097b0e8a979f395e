//! Seeded algebra suite: homomorphism residuals, Jacobi identities and the
//! contact Leibniz defect over random polynomial inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::brackets::{contact_leibniz_defect, jacobi_residual, BracketKind};
use crate::error::{Error, Result};
use crate::geometry::{Arity, ScalarFunction};
use crate::grid::{DensityGrid, GridSpec};
use crate::lifts::{homomorphism_residual, BaseField, HomomorphismCase};
use crate::polynomial::Polynomial;

pub const HOMOMORPHISM_TOL: f64 = 1e-6;
pub const JACOBI_TOL: f64 = 1e-6;
pub const LEIBNIZ_TOL: f64 = 1e-8;

const PROBES: usize = 5;

/// One line of the verification report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgebraCheck {
    pub kind: String,
    pub seed: u64,
    pub instances: usize,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn instance_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn probes(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Vec<f64>> {
    (0..PROBES)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

fn random_function(rng: &mut ChaCha8Rng, arity: Arity, degree: u32, name: &str) -> ScalarFunction {
    ScalarFunction::polynomial(arity, name, Polynomial::random(arity.dim(), degree, rng))
}

/// Residual of one random instance of `kind`.
pub fn algebra_instance(kind: &str, degree: u32, rng: &mut ChaCha8Rng) -> Result<f64> {
    let sym = Arity::Symplectic(1);
    let con = Arity::Contact(1);
    match kind {
        "ham" => {
            let f = random_function(rng, sym, degree, "F");
            let h = random_function(rng, sym, degree, "H");
            homomorphism_residual(&HomomorphismCase::Hamiltonian { f, h }, &probes(rng, 2))
        }
        "conformal" => {
            let f = random_function(rng, sym, degree, "F");
            let h = random_function(rng, sym, degree, "H");
            let (c_f, c_h) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            homomorphism_residual(
                &HomomorphismCase::Conformal { f, c_f, h, c_h },
                &probes(rng, 2),
            )
        }
        "contact" => {
            let f = random_function(rng, con, degree, "F");
            let h = random_function(rng, con, degree, "H");
            homomorphism_residual(&HomomorphismCase::Contact { f, h }, &probes(rng, 3))
        }
        "kappa" => {
            let x = BaseField::random_constant_divergence(2, degree, rng.gen_range(-1.0..1.0), rng);
            let y = BaseField::random_constant_divergence(2, degree, rng.gen_range(-1.0..1.0), rng);
            homomorphism_residual(&HomomorphismCase::Kappa { x, y }, &probes(rng, 4))
        }
        "extension" => {
            let h = random_function(rng, sym, degree, "H");
            let c = rng.gen_range(-1.0..1.0);
            let (q0, p0) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
            let spec = GridSpec::phase((-3.0, 3.0, 24), (-3.0, 3.0, 24))?;
            let f = DensityGrid::sample(spec, move |x| {
                (-((x[0] - q0).powi(2) + (x[1] - p0).powi(2))).exp()
            });
            homomorphism_residual(&HomomorphismCase::Extension { f, h, c }, &[])
        }
        "jacobi_symplectic" | "jacobi_contact" => {
            let (bk, arity) = if kind == "jacobi_symplectic" {
                (BracketKind::Symplectic, sym)
            } else {
                (BracketKind::Contact, con)
            };
            let f = random_function(rng, arity, degree, "F");
            let g = random_function(rng, arity, degree, "G");
            let h = random_function(rng, arity, degree, "H");
            jacobi_residual(bk, &f, &g, &h, &probes(rng, arity.dim()))
        }
        "leibniz" => {
            let f = random_function(rng, con, degree, "F");
            let g = random_function(rng, con, degree, "G");
            let h = random_function(rng, con, degree, "H");
            let mut worst: f64 = 0.0;
            for x in probes(rng, 3) {
                worst = worst.max(contact_leibniz_defect(&f, &g, &h, &x)?.abs());
            }
            Ok(worst)
        }
        other => Err(Error::InvalidArgument(format!(
            "unknown algebra check `{other}`"
        ))),
    }
}

pub fn tolerance_for(kind: &str) -> f64 {
    match kind {
        "jacobi_symplectic" | "jacobi_contact" => JACOBI_TOL,
        "leibniz" => LEIBNIZ_TOL,
        _ => HOMOMORPHISM_TOL,
    }
}

/// Largest residual of `kind` over `instances` seeded instances. Instance
/// `i` draws from ChaCha stream `i` of `seed`, so the result does not depend
/// on the worker count.
pub fn algebra_check(kind: &str, instances: usize, degree: u32, seed: u64) -> Result<AlgebraCheck> {
    let tag = kind
        .bytes()
        .fold(0u64, |a, b| a.wrapping_mul(31).wrapping_add(b as u64));
    let residuals: Vec<Result<f64>> = (0..instances as u64)
        .into_par_iter()
        .map(|i| algebra_instance(kind, degree, &mut instance_rng(seed ^ tag, i)))
        .collect();
    let mut worst: f64 = 0.0;
    let mut nan = false;
    for r in residuals {
        let r = r?;
        nan |= r.is_nan();
        worst = worst.max(r);
    }
    if nan {
        worst = f64::NAN;
    }
    let tolerance = tolerance_for(kind);
    Ok(AlgebraCheck {
        kind: kind.to_string(),
        seed,
        instances,
        residual: worst,
        tolerance,
        pass: worst <= tolerance,
    })
}
