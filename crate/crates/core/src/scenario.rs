//! Scenario configuration: a small TOML file describing the algebra, the
//! path, the solver and the sampling plan.
//!
//! ```toml
//! seed = 7
//!
//! [algebra]
//! dimension = 2
//! ranks = [1, 1]
//!
//! [generator]
//! kind = "rotation"   # zero | constant | rotation | random
//! i = 0
//! j = 1
//! speed = 1.0
//!
//! [path]
//! interval = [0.0, 1.0]
//! step = 1e-3
//! drift = 0.0
//!
//! [solver]
//! backend = "picard"  # picard | reference
//! step = 1e-3
//! ```

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{Element, ElementKind};
use crate::error::{Error, Result};
use crate::expectation::ExpectationPath;
use crate::projection::{make_rotation_path, Generator, ProjectionSystem, DEFAULT_PATH_STEP};
use crate::transport::{Backend, PicardConfig, Propagator, DEFAULT_REFERENCE_STEP};
use crate::verify::Thresholds;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub algebra: AlgebraConfig,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub path: PathConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub samples: SampleConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraConfig {
    pub dimension: usize,
    pub ranks: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GeneratorConfig {
    #[default]
    Zero,
    /// Real and optional imaginary parts of an anti-Hermitian matrix, by rows.
    Constant {
        real: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        imag: Option<Vec<Vec<f64>>>,
    },
    /// `speed·(e_ji − e_ij)`.
    Rotation {
        i: usize,
        j: usize,
        #[serde(default = "one")]
        speed: f64,
    },
    /// Random anti-Hermitian matrix with the given operator norm, drawn from
    /// the path stream.
    Random {
        #[serde(default = "one")]
        norm: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathConfig {
    pub interval: [f64; 2],
    /// Magnus step for `u_t`.
    pub step: f64,
    /// `K(t) = K₀ + t·drift·K₁` with `K₁` a random anti-Hermitian matrix of
    /// unit operator norm.
    pub drift: f64,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            interval: [0.0, 1.0],
            step: DEFAULT_PATH_STEP,
            drift: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Picard,
    Reference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub backend: BackendKind,
    /// RK4 step of the reference backend.
    pub step: f64,
    pub picard: PicardConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Picard,
            step: DEFAULT_REFERENCE_STEP,
            picard: PicardConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    /// Samples for intertwining, multiplicativity and the constant estimate.
    pub count: usize,
    /// Random `(t, x)` draws for pointwise identities.
    pub pointwise: usize,
    /// Initial conditions pushed through the solvers for propagator laws.
    pub solves: usize,
    /// Times at which propagator checks are evaluated.
    pub times: Vec<f64>,
    /// Quadrature grid for the hypothesis constant.
    pub constant_grid: usize,
    /// Grid for trajectory checks.
    pub suite_grid: usize,
    /// Rows of the simulate time grid.
    pub simulate_points: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            count: 50,
            pointwise: 50,
            solves: 20,
            times: vec![0.25, 0.5, 1.0],
            constant_grid: 64,
            suite_grid: 11,
            simulate_points: 101,
        }
    }
}

/// Named random sub-streams derived from the scenario seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Path,
    Samples,
    Suite,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Path => 1,
            Stream::Samples => 2,
            Stream::Suite => 3,
        }
    }
}

/// Objects built from a validated scenario.
#[derive(Clone)]
pub struct Setup {
    pub base: ProjectionSystem,
    pub ep: ExpectationPath,
    pub propagator: Propagator,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_seed(text, None)
    }

    /// Parses a scenario, replacing (or supplying) the seed when `seed` is set.
    pub fn from_toml_with_seed(text: &str, seed: Option<u64>) -> Result<Self> {
        let mut value: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        if let Some(s) = seed {
            let s = i64::try_from(s).map_err(|_| config_err("seed override exceeds i64 range"))?;
            value.insert("seed".into(), toml::Value::Integer(s));
        }
        let scenario: Scenario = value
            .try_into()
            .map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.path.interval[0], self.path.interval[1])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.algebra.dimension;
        if n == 0 {
            return Err(config_err("algebra.dimension must be positive"));
        }
        if self.algebra.ranks.is_empty() || self.algebra.ranks.contains(&0) {
            return Err(config_err("algebra.ranks must be non-empty and positive"));
        }
        let total: usize = self.algebra.ranks.iter().sum();
        if total != n {
            return Err(config_err(format!(
                "algebra.ranks sum to {total}, expected dimension {n}"
            )));
        }
        let (lo, hi) = self.interval();
        if !(lo.is_finite() && hi.is_finite() && lo < hi && lo <= 0.0 && 0.0 <= hi) {
            return Err(config_err(
                "path.interval must be finite, increasing and contain 0",
            ));
        }
        for (name, v) in [
            ("path.step", self.path.step),
            ("solver.step", self.solver.step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_err(format!("{name} must be positive")));
            }
        }
        if !self.path.drift.is_finite() {
            return Err(config_err("path.drift must be finite"));
        }
        self.solver.picard.validate()?;
        let s = &self.samples;
        for (name, v, min) in [
            ("samples.count", s.count, 1),
            ("samples.pointwise", s.pointwise, 1),
            ("samples.solves", s.solves, 1),
            ("samples.constant_grid", s.constant_grid, 2),
            ("samples.suite_grid", s.suite_grid, 2),
            ("samples.simulate_points", s.simulate_points, 2),
        ] {
            if v < min {
                return Err(config_err(format!("{name} must be at least {min}")));
            }
        }
        if s.times.is_empty() || s.times.iter().any(|&t| !(lo..=hi).contains(&t)) {
            return Err(config_err(
                "samples.times must be non-empty and inside path.interval",
            ));
        }
        match &self.generator {
            GeneratorConfig::Zero => {}
            GeneratorConfig::Constant { real, imag } => {
                let shape_ok =
                    |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
                if !shape_ok(real) || !imag.as_ref().is_none_or(shape_ok) {
                    return Err(config_err(format!("generator matrix must be {n}x{n}")));
                }
            }
            GeneratorConfig::Rotation { i, j, speed } => {
                if *i >= n || *j >= n || i == j {
                    return Err(config_err(
                        "generator.i and generator.j must be distinct indices",
                    ));
                }
                if !speed.is_finite() {
                    return Err(config_err("generator.speed must be finite"));
                }
            }
            GeneratorConfig::Random { norm } => {
                if !(norm.is_finite() && *norm >= 0.0) {
                    return Err(config_err("generator.norm must be non-negative"));
                }
            }
        }
        let th = &self.thresholds;
        for v in [
            th.algebraic,
            th.codiagonal,
            th.propagator,
            th.integrated,
            th.path_intertwining,
            th.unitarity,
            th.finite_difference,
            th.contraction_slack,
            th.slope_stability,
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(config_err("thresholds must be non-negative"));
            }
        }
        Ok(())
    }

    /// Independent generator for a named stream; `offset` separates draws
    /// within one stream.
    pub fn rng(&self, stream: Stream, offset: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((stream.id() << 32) | offset);
        rng
    }

    /// A derived seed for APIs that take a plain `u64`.
    pub fn stream_seed(&self, stream: Stream) -> u64 {
        self.rng(stream, u32::MAX as u64).next_u64()
    }

    pub fn backend(&self) -> Backend {
        match self.solver.backend {
            BackendKind::Picard => Backend::Picard(self.solver.picard),
            BackendKind::Reference => Backend::Reference {
                step: self.solver.step,
            },
        }
    }

    fn random_skew(&self, offset: u64, norm: f64) -> Element {
        let n = self.algebra.dimension;
        let mut rng = self.rng(Stream::Path, offset);
        let g = Element::random(n, &mut rng, ElementKind::General);
        let k = (&g - &g.adjoint()).scale(0.5);
        let size = k.op_norm();
        if size > 0.0 {
            k.scale(norm / size)
        } else {
            k
        }
    }

    pub fn generator_at_zero(&self) -> Result<Element> {
        let n = self.algebra.dimension;
        Ok(match &self.generator {
            GeneratorConfig::Zero => Element::zeros(n),
            GeneratorConfig::Constant { real, imag } => {
                let mut m = nalgebra::DMatrix::zeros(n, n);
                for r in 0..n {
                    for c in 0..n {
                        let im = imag.as_ref().map_or(0.0, |v| v[r][c]);
                        m[(r, c)] = num_complex::Complex64::new(real[r][c], im);
                    }
                }
                Element::from_matrix(m)?
            }
            GeneratorConfig::Rotation { i, j, speed } => {
                (Element::unit(n, *j, *i) - Element::unit(n, *i, *j)).scale(*speed)
            }
            GeneratorConfig::Random { norm } => self.random_skew(0, *norm),
        })
    }

    pub fn generator(&self) -> Result<Generator> {
        let constant = self.generator_at_zero()?;
        if self.path.drift == 0.0 {
            return Ok(Generator::constant(constant));
        }
        let drift = self.random_skew(1, self.path.drift);
        Ok(Generator::Affine { constant, drift })
    }

    pub fn build(&self) -> Result<Setup> {
        self.validate()?;
        let base = ProjectionSystem::from_ranks(&self.algebra.ranks)?;
        let path = make_rotation_path(
            base.clone(),
            self.generator()?,
            self.interval(),
            self.path.step,
        )
        .map_err(|e| match e {
            Error::InvalidInput(msg) => config_err(msg),
            other => other,
        })?;
        let ep = ExpectationPath::new(path);
        let propagator = Propagator::new(ep.clone(), self.backend());
        Ok(Setup {
            base,
            ep,
            propagator,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const M2: &str = r#"
seed = 3
[algebra]
dimension = 2
ranks = [1, 1]
[generator]
kind = "rotation"
i = 0
j = 1
"#;

    #[test]
    fn parses_with_defaults() {
        let s = Scenario::from_toml_str(M2).unwrap();
        assert_eq!(s.seed, 3);
        assert_eq!(s.interval(), (0.0, 1.0));
        assert_eq!(s.solver.backend, BackendKind::Picard);
        assert_eq!(
            s.generator,
            GeneratorConfig::Rotation {
                i: 0,
                j: 1,
                speed: 1.0
            }
        );
        let k = s.generator_at_zero().unwrap();
        assert_eq!(
            k,
            Element::from_real_rows(&[&[0.0, -1.0], &[1.0, 0.0]]).unwrap()
        );
    }

    #[test]
    fn missing_seed_names_the_field() {
        let text = M2.replace("seed = 3", "");
        match Scenario::from_toml_str(&text) {
            Err(Error::Config(msg)) => assert!(msg.contains("seed"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
        let s = Scenario::from_toml_with_seed(&text, Some(11)).unwrap();
        assert_eq!(s.seed, 11);
    }

    #[test]
    fn rejects_invalid_configs() {
        let cases = [
            M2.replace("ranks = [1, 1]", "ranks = [1, 2]"),
            M2.replace("j = 1", "j = 0"),
            format!("{M2}\n[path]\ninterval = [0.5, 1.0]\n"),
            format!("{M2}\n[solver]\nstep = 0.0\n"),
            format!("{M2}\n[samples]\ntimes = [2.0]\n"),
            format!("{M2}\nunknown = 1\n"),
            M2.replace("rotation", "spiral"),
        ];
        for text in &cases {
            assert!(
                matches!(Scenario::from_toml_str(text), Err(Error::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn non_skew_constant_generator_is_a_config_error() {
        let text = r#"
seed = 1
[algebra]
dimension = 2
ranks = [1, 1]
[generator]
kind = "constant"
real = [[1.0, 0.0], [0.0, 0.0]]
"#;
        let s = Scenario::from_toml_str(text).unwrap();
        assert!(matches!(s.build(), Err(Error::Config(_))));
    }

    #[test]
    fn dump_round_trips() {
        let s = Scenario::from_toml_str(M2).unwrap();
        let dumped = s.to_toml_string().unwrap();
        let again = Scenario::from_toml_str(&dumped).unwrap();
        assert_eq!(s, again);
        assert_eq!(dumped, again.to_toml_string().unwrap());
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        let s = Scenario::from_toml_str(M2).unwrap();
        let a = s.rng(Stream::Path, 0).next_u64();
        assert_eq!(a, s.rng(Stream::Path, 0).next_u64());
        assert_ne!(a, s.rng(Stream::Samples, 0).next_u64());
        assert_ne!(a, s.rng(Stream::Path, 1).next_u64());
    }

    #[test]
    fn random_generator_has_requested_norm() {
        let text = M2.replace(
            "kind = \"rotation\"\ni = 0\nj = 1",
            "kind = \"random\"\nnorm = 0.7",
        );
        let s = Scenario::from_toml_str(&text).unwrap();
        let k = s.generator_at_zero().unwrap();
        assert!((k.op_norm() - 0.7).abs() < 1e-12);
        assert!((&k + &k.adjoint()).two_norm() < 1e-15);
    }
}
