//! Scenario files.
//!
//! A scenario is flat `key = value` text. `[section]` headers prefix the keys
//! that follow, so `[integrator]` then `dt = 1e-3` is the same as
//! `integrator.dt = 1e-3`. `#` starts a comment; values may be quoted.
//!
//! ```text
//! kind = particle
//! c = 0.2
//! [hamiltonian]
//! builtin = harmonic
//! [integrator]
//! method = rk4
//! dt = 1e-3
//! T = 10
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use crate::geometry::Potential;
use crate::particle::Method;

/// Largest grid a scenario may request.
pub const MAX_CELLS: u64 = 1 << 27;

const KEYS: &[&str] = &[
    "kind",
    "seed",
    "c",
    "model",
    "output",
    "hamiltonian.builtin",
    "hamiltonian.expr",
    "hamiltonian.mass",
    "hamiltonian.charge",
    "hamiltonian.potential",
    "hamiltonian.amplitude",
    "hamiltonian.wavenumber",
    "hamiltonian.strength",
    "initial.q",
    "initial.p",
    "initial.z",
    "initial.width",
    "integrator.method",
    "integrator.dt",
    "integrator.T",
    "grid.q",
    "grid.p",
    "grid.z",
    "grid.periodic_q",
    "output.snapshots",
    "checks.energy_tol",
    "checks.intertwining_tol",
    "checks.mass_tol",
    "verify.instances",
    "verify.degree",
    "verify.kinds",
    "verify.jacobi",
    "verify.leibniz",
    "hierarchy.levels",
    "hierarchy.T",
    "hierarchy.courant",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Particle,
    KineticDensity,
    KineticMomentum,
    Verify,
    Hierarchy,
}

impl RunKind {
    pub fn name(self) -> &'static str {
        match self {
            RunKind::Particle => "particle",
            RunKind::KineticDensity => "kinetic_density",
            RunKind::KineticMomentum => "kinetic_momentum",
            RunKind::Verify => "verify",
            RunKind::Hierarchy => "hierarchy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HamiltonianSpec {
    Harmonic,
    Plasma {
        mass: f64,
        charge: f64,
        potential: Potential,
    },
    /// Polynomial in `q` and `p`.
    Polynomial(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParticleModel {
    Hamiltonian,
    Conformal,
    Contact,
    StrictContact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityChoice {
    Vlasov,
    Conformal,
    ContactVf,
    ContactFlux,
    ContactBracket,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentumChoice {
    Hamiltonian,
    Conformal,
    Contact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    Particle(ParticleModel),
    Density(DensityChoice),
    Momentum(MomentumChoice),
    None,
}

impl Model {
    pub fn is_contact(self) -> bool {
        matches!(
            self,
            Model::Particle(ParticleModel::Contact | ParticleModel::StrictContact)
                | Model::Density(
                    DensityChoice::ContactVf
                        | DensityChoice::ContactFlux
                        | DensityChoice::ContactBracket
                )
                | Model::Momentum(MomentumChoice::Contact)
        )
    }
}

/// `(min, max, cells)` per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSettings {
    pub q: (f64, f64, usize),
    pub p: (f64, f64, usize),
    pub z: Option<(f64, f64, usize)>,
    pub periodic_q: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Initial {
    pub q: f64,
    pub p: f64,
    pub z: f64,
    /// Gaussian width for kinetic initial data.
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySettings {
    pub instances: usize,
    pub degree: u32,
    pub kinds: Vec<String>,
    pub jacobi: bool,
    pub leibniz: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchySettings {
    pub levels: Vec<usize>,
    pub t_final: f64,
    pub courant: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: RunKind,
    pub seed: u64,
    pub hamiltonian: HamiltonianSpec,
    pub c: f64,
    pub model: Model,
    pub initial: Initial,
    pub method: Method,
    pub dt: f64,
    pub t_final: f64,
    pub grid: Option<GridSettings>,
    pub snapshots: usize,
    pub energy_tol: f64,
    pub intertwining_tol: f64,
    /// Relative mass-law tolerance; the runner picks a model default when unset.
    pub mass_tol: Option<f64>,
    pub verify: VerifySettings,
    pub hierarchy: HierarchySettings,
    pub output: Option<PathBuf>,
    /// Every key as written, for the manifest echo.
    pub echo: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaError {
    /// 1-based line, absent for missing keys.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// All problems found in one scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaErrors(pub Vec<SchemaError>);

impl fmt::Display for SchemaErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for SchemaErrors {}

impl SchemaErrors {
    pub fn mentions(&self, text: &str) -> bool {
        self.0.iter().any(|e| e.message.contains(text))
    }
}

struct Entries {
    map: BTreeMap<String, (String, usize)>,
    errors: Vec<SchemaError>,
}

impl Entries {
    fn err(&mut self, line: Option<usize>, message: impl Into<String>) {
        self.errors.push(SchemaError {
            line,
            message: message.into(),
        });
    }

    fn raw(&self, key: &str) -> Option<(&str, usize)> {
        self.map.get(key).map(|(v, l)| (v.as_str(), *l))
    }

    fn required(&mut self, key: &str) -> Option<(String, usize)> {
        match self.map.get(key) {
            Some((v, l)) => Some((v.clone(), *l)),
            None => {
                self.err(None, format!("missing required key `{key}`"));
                None
            }
        }
    }

    fn real(&mut self, key: &str, default: f64) -> f64 {
        match self.raw(key) {
            None => default,
            Some((v, l)) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => x,
                _ => {
                    let msg = format!("`{key}` must be a finite number, got `{v}`");
                    self.err(Some(l), msg);
                    default
                }
            },
        }
    }

    fn required_real(&mut self, key: &str) -> f64 {
        if self.raw(key).is_none() {
            self.err(None, format!("missing required key `{key}`"));
            return f64::NAN;
        }
        self.real(key, f64::NAN)
    }

    fn positive(&mut self, key: &str, short: &str, value: f64) {
        if value.is_finite() && value <= 0.0 {
            let line = self.raw(key).map(|(_, l)| l);
            self.err(line, format!("{short} must be positive"));
        }
    }

    fn integer(&mut self, key: &str, default: u64) -> u64 {
        match self.raw(key) {
            None => default,
            Some((v, l)) => match v.parse::<u64>() {
                Ok(x) => x,
                Err(_) => {
                    let msg = format!("`{key}` must be a non-negative integer, got `{v}`");
                    self.err(Some(l), msg);
                    default
                }
            },
        }
    }

    fn boolean(&mut self, key: &str, default: bool) -> bool {
        match self.raw(key) {
            None => default,
            Some(("true", _)) => true,
            Some(("false", _)) => false,
            Some((v, l)) => {
                let msg = format!("`{key}` must be true or false, got `{v}`");
                self.err(Some(l), msg);
                default
            }
        }
    }

    fn choice<T: Copy>(
        &mut self,
        key: &str,
        options: &[(&str, T)],
        default: Option<T>,
    ) -> Option<T> {
        let Some((v, l)) = self.raw(key) else {
            if default.is_none() {
                self.err(None, format!("missing required key `{key}`"));
            }
            return default;
        };
        match options.iter().find(|(name, _)| *name == v) {
            Some((_, t)) => Some(*t),
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                let msg = format!("`{key}` must be one of {}, got `{v}`", names.join(", "));
                self.err(Some(l), msg);
                default
            }
        }
    }

    fn axis(&mut self, key: &str) -> Option<(f64, f64, usize)> {
        let (v, l) = self.raw(key)?;
        let parts: Vec<&str> = v.split(',').map(str::trim).collect();
        let parsed = match parts.as_slice() {
            [a, b, m] => match (a.parse::<f64>(), b.parse::<f64>(), m.parse::<usize>()) {
                (Ok(a), Ok(b), Ok(m)) => Some((a, b, m)),
                _ => None,
            },
            _ => None,
        };
        match parsed {
            Some((a, b, m)) if a.is_finite() && b.is_finite() && b > a && m >= 8 => Some((a, b, m)),
            Some(_) => {
                self.err(
                    Some(l),
                    format!("`{key}` needs min < max and at least 8 cells"),
                );
                None
            }
            None => {
                let msg = format!("`{key}` must be `min, max, cells`, got `{v}`");
                self.err(Some(l), msg);
                None
            }
        }
    }
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    if v.len() >= 2
        && ((v.starts_with('"') && v.ends_with('"')) || (v.starts_with('\'') && v.ends_with('\'')))
    {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

fn strip_comment(line: &str) -> &str {
    let mut quote = None;
    for (i, ch) in line.char_indices() {
        match (ch, quote) {
            ('"' | '\'', None) => quote = Some(ch),
            (q, Some(open)) if q == open => quote = None,
            ('#', None) => return &line[..i],
            _ => {}
        }
    }
    line
}

fn tokenize(text: &str) -> Entries {
    let mut entries = Entries {
        map: BTreeMap::new(),
        errors: Vec::new(),
    };
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            match rest.strip_suffix(']') {
                Some(name) if !name.trim().is_empty() => section = name.trim().to_string(),
                _ => entries.err(Some(line_no), format!("malformed section header `{line}`")),
            }
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            entries.err(
                Some(line_no),
                format!("expected `key = value`, got `{line}`"),
            );
            continue;
        };
        let k = k.trim();
        let key = if section.is_empty() {
            k.to_string()
        } else {
            format!("{section}.{k}")
        };
        if !KEYS.contains(&key.as_str()) {
            entries.err(Some(line_no), format!("unknown key `{key}`"));
            continue;
        }
        if let Some((_, first)) = entries.map.get(&key) {
            let msg = format!("duplicate key `{key}` (first set on line {first})");
            entries.err(Some(line_no), msg);
            continue;
        }
        entries.map.insert(key, (unquote(v).to_string(), line_no));
    }
    entries
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str) -> Result<Scenario, SchemaErrors> {
    let mut e = tokenize(text);
    let echo: BTreeMap<String, String> = e
        .map
        .iter()
        .map(|(k, (v, _))| (k.clone(), v.clone()))
        .collect();

    let kinds = [
        ("particle", RunKind::Particle),
        ("kinetic_density", RunKind::KineticDensity),
        ("kinetic_momentum", RunKind::KineticMomentum),
        ("verify", RunKind::Verify),
        ("hierarchy", RunKind::Hierarchy),
    ];
    let kind = e.choice("kind", &kinds, None);
    let seed = e.integer("seed", 0);
    let c = e.real("c", 0.0);

    let builtin = e.choice(
        "hamiltonian.builtin",
        &[("harmonic", 0u8), ("plasma", 1), ("polynomial", 2)],
        Some(0),
    );
    let hamiltonian = match builtin {
        Some(1) => {
            let mass = e.real("hamiltonian.mass", 1.0);
            e.positive("hamiltonian.mass", "mass", mass);
            let charge = e.real("hamiltonian.charge", 1.0);
            let which = e.choice(
                "hamiltonian.potential",
                &[("free", 0u8), ("cosine", 1), ("harmonic", 2)],
                Some(0),
            );
            let potential = match which {
                Some(1) => Potential::Cosine {
                    amplitude: e.real("hamiltonian.amplitude", 0.1),
                    wavenumber: e.real("hamiltonian.wavenumber", 0.5),
                },
                Some(2) => Potential::Harmonic {
                    strength: e.real("hamiltonian.strength", 1.0),
                },
                _ => Potential::Free,
            };
            HamiltonianSpec::Plasma {
                mass,
                charge,
                potential,
            }
        }
        Some(2) => match e.required("hamiltonian.expr") {
            Some((expr, line)) => {
                if let Err(err) = crate::polynomial::Polynomial::parse(&expr, &["q", "p"]) {
                    e.err(Some(line), format!("`hamiltonian.expr`: {err}"));
                }
                HamiltonianSpec::Polynomial(expr)
            }
            None => HamiltonianSpec::Harmonic,
        },
        _ => HamiltonianSpec::Harmonic,
    };

    let model = match kind {
        Some(RunKind::Particle) => e
            .choice(
                "model",
                &[
                    ("hamiltonian", ParticleModel::Hamiltonian),
                    ("conformal", ParticleModel::Conformal),
                    ("contact", ParticleModel::Contact),
                    ("strict_contact", ParticleModel::StrictContact),
                ],
                Some(ParticleModel::Conformal),
            )
            .map_or(Model::None, Model::Particle),
        Some(RunKind::KineticDensity) => e
            .choice(
                "model",
                &[
                    ("vlasov", DensityChoice::Vlasov),
                    ("conformal", DensityChoice::Conformal),
                    ("contact_vf", DensityChoice::ContactVf),
                    ("contact_flux", DensityChoice::ContactFlux),
                    ("contact_bracket", DensityChoice::ContactBracket),
                ],
                Some(DensityChoice::Conformal),
            )
            .map_or(Model::None, Model::Density),
        Some(RunKind::KineticMomentum) => e
            .choice(
                "model",
                &[
                    ("hamiltonian", MomentumChoice::Hamiltonian),
                    ("conformal", MomentumChoice::Conformal),
                    ("contact", MomentumChoice::Contact),
                ],
                Some(MomentumChoice::Conformal),
            )
            .map_or(Model::None, Model::Momentum),
        _ => {
            if let Some((_, l)) = e.raw("model") {
                e.err(Some(l), "`model` is not used by this run kind");
            }
            Model::None
        }
    };
    if model == Model::Particle(ParticleModel::StrictContact) && c != 0.0 {
        let line = e.raw("c").map(|(_, l)| l);
        e.err(
            line,
            "strict_contact needs c = 0 (the extended Hamiltonian H - c z depends on z)",
        );
    }

    let initial = Initial {
        q: e.real("initial.q", 1.0),
        p: e.real("initial.p", 0.0),
        z: e.real("initial.z", 0.0),
        width: e.real("initial.width", 0.5),
    };
    e.positive("initial.width", "width", initial.width);

    let method = e
        .choice(
            "integrator.method",
            &[
                ("rk4", Method::Rk4),
                ("conformal_splitting", Method::ConformalSplitting),
            ],
            Some(Method::Rk4),
        )
        .unwrap_or(Method::Rk4);
    if method == Method::ConformalSplitting
        && !matches!(model, Model::Particle(ParticleModel::Conformal))
    {
        let line = e.raw("integrator.method").map(|(_, l)| l);
        e.err(
            line,
            "conformal_splitting applies to particle runs with model = conformal",
        );
    }
    let needs_time = !matches!(kind, Some(RunKind::Verify));
    let (dt, t_final) = if needs_time {
        (
            e.required_real("integrator.dt"),
            e.required_real("integrator.T"),
        )
    } else {
        (e.real("integrator.dt", 1e-3), e.real("integrator.T", 1.0))
    };
    e.positive("integrator.dt", "dt", dt);
    e.positive("integrator.T", "T", t_final);
    if dt > 0.0 && t_final > 0.0 && t_final < dt {
        let line = e.raw("integrator.T").map(|(_, l)| l);
        e.err(line, format!("T = {t_final} is shorter than dt = {dt}"));
    }

    let grid_q = e.axis("grid.q");
    let grid_p = e.axis("grid.p");
    let grid_z = e.axis("grid.z");
    let periodic_q = e.boolean("grid.periodic_q", false);
    let needs_grid = matches!(
        kind,
        Some(RunKind::KineticDensity | RunKind::KineticMomentum | RunKind::Hierarchy)
    );
    let needs_z = model.is_contact() && needs_grid || kind == Some(RunKind::Hierarchy);
    let mut grid = None;
    if needs_grid {
        for (key, present) in [
            ("grid.q", e.raw("grid.q").is_some()),
            ("grid.p", e.raw("grid.p").is_some()),
        ] {
            if !present {
                e.err(None, format!("missing required key `{key}`"));
            }
        }
        if needs_z && e.raw("grid.z").is_none() {
            e.err(
                None,
                "missing required key `grid.z` (contact runs use a (q, p, z) grid)",
            );
        }
        if let (Some(q), Some(p)) = (grid_q, grid_p) {
            let z = if needs_z { grid_z } else { None };
            let cells = q.2 as u64 * p.2 as u64 * z.map_or(1, |z| z.2 as u64);
            if cells > MAX_CELLS {
                let line = e.raw("grid.q").map(|(_, l)| l);
                e.err(
                    line,
                    format!("grid has {cells} cells, above the 2^27 = {MAX_CELLS} cap"),
                );
            }
            grid = Some(GridSettings {
                q,
                p,
                z,
                periodic_q,
            });
        }
    } else if let Some((_, l)) = e.raw("grid.q").or(e.raw("grid.p")).or(e.raw("grid.z")) {
        e.err(Some(l), "grid keys are not used by this run kind");
    }

    let snapshots = e.integer("output.snapshots", 4) as usize;
    if snapshots == 0 {
        let line = e.raw("output.snapshots").map(|(_, l)| l);
        e.err(line, "snapshots must be positive");
    }
    let energy_tol = e.real("checks.energy_tol", 1e-6);
    e.positive("checks.energy_tol", "energy_tol", energy_tol);
    let intertwining_tol = e.real("checks.intertwining_tol", 1e-3);
    e.positive(
        "checks.intertwining_tol",
        "intertwining_tol",
        intertwining_tol,
    );

    let mass_tol = e
        .raw("checks.mass_tol")
        .is_some()
        .then(|| e.real("checks.mass_tol", 1e-6));
    if let Some(t) = mass_tol {
        e.positive("checks.mass_tol", "mass_tol", t);
    }

    let instances = e.integer("verify.instances", 100) as usize;
    if instances == 0 {
        let line = e.raw("verify.instances").map(|(_, l)| l);
        e.err(line, "instances must be positive");
    }
    let degree = e.integer("verify.degree", 3);
    if !(1..=6).contains(&degree) {
        let line = e.raw("verify.degree").map(|(_, l)| l);
        e.err(line, format!("degree must lie in 1..=6, got {degree}"));
    }
    let all_kinds = ["ham", "conformal", "contact", "kappa", "extension"];
    let kinds: Vec<String> = match e.raw("verify.kinds") {
        None => all_kinds.iter().map(|s| s.to_string()).collect(),
        Some((v, l)) => {
            let list: Vec<String> = v
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            for k in &list {
                if !all_kinds.contains(&k.as_str()) {
                    let msg = format!(
                        "unknown homomorphism kind `{k}` (expected {})",
                        all_kinds.join(", ")
                    );
                    e.err(Some(l), msg);
                }
            }
            list
        }
    };
    let jacobi = e.boolean("verify.jacobi", false);
    let leibniz = e.boolean("verify.leibniz", false);

    let levels: Vec<usize> = match e.raw("hierarchy.levels") {
        None => vec![16, 32],
        Some((v, l)) => {
            let parsed: Result<Vec<usize>, _> =
                v.split(',').map(|s| s.trim().parse::<usize>()).collect();
            match parsed {
                Ok(ls) if !ls.is_empty() && ls.iter().all(|&m| m >= 8) => ls,
                _ => {
                    e.err(
                        Some(l),
                        format!("`hierarchy.levels` must list cell counts >= 8, got `{v}`"),
                    );
                    Vec::new()
                }
            }
        }
    };
    let h_t = e.real("hierarchy.T", 0.3);
    e.positive("hierarchy.T", "hierarchy T", h_t);
    let courant = e.real("hierarchy.courant", 0.2);
    e.positive("hierarchy.courant", "courant", courant);

    let output = e.raw("output").map(|(v, _)| PathBuf::from(v));

    if !e.errors.is_empty() {
        e.errors.sort_by_key(|err| err.line.unwrap_or(usize::MAX));
        return Err(SchemaErrors(e.errors));
    }
    Ok(Scenario {
        kind: kind.expect("checked above"),
        seed,
        hamiltonian,
        c,
        model,
        initial,
        method,
        dt,
        t_final,
        grid,
        snapshots,
        energy_tol,
        intertwining_tol,
        mass_tol,
        verify: VerifySettings {
            instances,
            degree: degree as u32,
            kinds,
            jacobi,
            leibniz,
        },
        hierarchy: HierarchySettings {
            levels,
            t_final: h_t,
            courant,
        },
        output,
        echo,
    })
}
