//! Smooth paths of finite projection systems.
//!
//! The primary construction conjugates a base system by the unitary curve
//! solving `u̇ = K(t)·u`, `u₀ = 1`, so orthogonality, completeness and ranks
//! hold exactly along the path and `ṗᵢ = [K(t), pᵢ(t)]` in closed form.
//! Paths given by an arbitrary closure are also accepted; their derivatives
//! fall back to central differences.

use std::sync::Arc;

use crate::algebra::Element;
use crate::error::{Error, Result};
use crate::stepper::magnus4_step;

/// Pairwise-orthogonal self-adjoint idempotents summing to the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionSystem {
    projections: Vec<Element>,
}

impl ProjectionSystem {
    /// Validates and wraps a list of projections.
    pub fn new(projections: Vec<Element>, tol: f64) -> Result<Self> {
        let sys = Self::new_unchecked(projections)?;
        let r = sys.residuals();
        if r.max() > tol {
            return Err(Error::invalid(format!(
                "not a projection system: self-adjoint {:.3e}, idempotent {:.3e}, \
                 orthogonal {:.3e}, completeness {:.3e}",
                r.self_adjoint, r.idempotent, r.orthogonal, r.completeness
            )));
        }
        Ok(sys)
    }

    pub(crate) fn new_unchecked(projections: Vec<Element>) -> Result<Self> {
        let first = projections
            .first()
            .ok_or_else(|| Error::invalid("projection system must be non-empty"))?;
        for p in &projections[1..] {
            first.check_same(p)?;
        }
        Ok(Self { projections })
    }

    /// Diagonal block projections for consecutive ranks `r₁,…,r_k`.
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        if ranks.is_empty() || ranks.contains(&0) {
            return Err(Error::invalid(
                "ranks must be a non-empty list of positive integers",
            ));
        }
        let n: usize = ranks.iter().sum();
        let mut offset = 0;
        let projections = ranks
            .iter()
            .map(|&r| {
                let mut p = Element::zeros(n);
                for i in offset..offset + r {
                    p += &Element::unit(n, i, i);
                }
                offset += r;
                p
            })
            .collect();
        Ok(Self { projections })
    }

    pub fn projections(&self) -> &[Element] {
        &self.projections
    }

    pub fn len(&self) -> usize {
        self.projections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projections.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.projections[0].dim()
    }

    /// Ranks via traces.
    pub fn ranks(&self) -> Vec<usize> {
        let n = self.dim() as f64;
        self.projections
            .iter()
            .map(|p| (p.trace().re * n).round() as usize)
            .collect()
    }

    /// `u pᵢ u*` for each projection.
    pub fn conjugate(&self, u: &Element) -> Self {
        let ua = u.adjoint();
        Self {
            projections: self.projections.iter().map(|p| &(u * p) * &ua).collect(),
        }
    }

    pub fn residuals(&self) -> SystemResiduals {
        let n = self.dim();
        let mut r = SystemResiduals::default();
        let mut sum = Element::zeros(n);
        for (i, p) in self.projections.iter().enumerate() {
            r.self_adjoint = r.self_adjoint.max(p.dist(&p.adjoint()));
            r.idempotent = r.idempotent.max((p * p).dist(p));
            for q in &self.projections[i + 1..] {
                r.orthogonal = r.orthogonal.max((p * q).two_norm());
            }
            sum += p;
        }
        r.completeness = sum.dist(&Element::identity(n));
        r
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SystemResiduals {
    pub self_adjoint: f64,
    pub idempotent: f64,
    pub orthogonal: f64,
    pub completeness: f64,
}

impl SystemResiduals {
    pub fn max(&self) -> f64 {
        self.self_adjoint
            .max(self.idempotent)
            .max(self.orthogonal)
            .max(self.completeness)
    }
}

/// Derivatives `(ṗ₁(t),…,ṗ_k(t))`.
#[derive(Clone, Debug)]
pub struct PathDerivative {
    pub dots: Vec<Element>,
}

impl PathDerivative {
    /// Largest residual among: self-adjointness, `ṗ = ṗp + pṗ`, `Σṗᵢ = 0`.
    pub fn invariant_residual(&self, system: &ProjectionSystem) -> f64 {
        let n = system.dim();
        let mut worst: f64 = 0.0;
        let mut sum = Element::zeros(n);
        for (d, p) in self.dots.iter().zip(system.projections()) {
            worst = worst.max(d.dist(&d.adjoint()));
            worst = worst.max(d.dist(&(&(d * p) + &(p * d))));
            sum += d;
        }
        worst.max(sum.two_norm())
    }
}

type GeneratorFn = dyn Fn(f64) -> Element + Send + Sync;

/// The anti-Hermitian generator `t ↦ K(t)` of a rotation path.
#[derive(Clone)]
pub enum Generator {
    /// `K(t) = constant + t·drift`.
    Affine {
        constant: Element,
        drift: Element,
    },
    /// Piecewise-linear interpolation of tabulated values, held constant
    /// beyond the first and last nodes.
    Tabulated {
        times: Vec<f64>,
        values: Vec<Element>,
    },
    Function(Arc<GeneratorFn>),
}

impl std::fmt::Debug for Generator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Generator::Affine { constant, drift } => f
                .debug_struct("Affine")
                .field("constant", constant)
                .field("drift", drift)
                .finish(),
            Generator::Tabulated { times, .. } => {
                f.debug_struct("Tabulated").field("times", times).finish()
            }
            Generator::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl Generator {
    pub fn constant(k: Element) -> Self {
        let n = k.dim();
        Generator::Affine {
            constant: k,
            drift: Element::zeros(n),
        }
    }

    pub fn zero(n: usize) -> Self {
        Self::constant(Element::zeros(n))
    }

    pub fn tabulated(times: Vec<f64>, values: Vec<Element>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::invalid(
                "tabulated generator needs matching non-empty tables",
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "tabulated generator times must be strictly increasing",
            ));
        }
        for v in &values[1..] {
            values[0].check_same(v)?;
        }
        Ok(Generator::Tabulated { times, values })
    }

    pub fn from_fn(f: impl Fn(f64) -> Element + Send + Sync + 'static) -> Self {
        Generator::Function(Arc::new(f))
    }

    pub fn at(&self, t: f64) -> Element {
        match self {
            Generator::Affine { constant, drift } => constant + &drift.scale(t),
            Generator::Tabulated { times, values } => {
                let last = times.len() - 1;
                if t <= times[0] {
                    return values[0].clone();
                }
                if t >= times[last] {
                    return values[last].clone();
                }
                let k = times.partition_point(|&s| s <= t) - 1;
                let w = (t - times[k]) / (times[k + 1] - times[k]);
                values[k].scale(1.0 - w) + values[k + 1].scale(w)
            }
            Generator::Function(f) => f(t),
        }
    }

    /// True when `K(t)` does not depend on `t`.
    pub fn is_time_independent(&self) -> bool {
        match self {
            Generator::Affine { drift, .. } => drift.two_norm() == 0.0,
            Generator::Tabulated { values, .. } => values.windows(2).all(|w| w[0] == w[1]),
            Generator::Function(_) => false,
        }
    }
}

type SystemFn = dyn Fn(f64) -> ProjectionSystem + Send + Sync;

#[derive(Clone)]
enum PathKind {
    Rotation {
        base: ProjectionSystem,
        generator: Generator,
        step: f64,
        /// `u` at `0, step, 2·step, …` up to `t_max`.
        forward: Vec<(f64, Element)>,
        /// `u` at `0, −step, …` down to `t_min`.
        backward: Vec<(f64, Element)>,
    },
    Explicit {
        f: Arc<SystemFn>,
        fd_scale: f64,
    },
}

/// A smooth curve `t ↦ (p₁(t),…,p_k(t))` on a closed interval containing 0.
#[derive(Clone)]
pub struct ProjectionPath {
    kind: PathKind,
    t_min: f64,
    t_max: f64,
    dim: usize,
    len: usize,
}

/// Default step of the unitary integrator behind rotation paths.
pub const DEFAULT_PATH_STEP: f64 = 1e-3;

/// Default relative step for central differences: `h = 1e−5·(1+|t|)`.
pub const DEFAULT_FD_SCALE: f64 = 1e-5;

const INTERVAL_SLACK: f64 = 1e-12;

fn check_interval(t_min: f64, t_max: f64) -> Result<()> {
    if !(t_min <= 0.0 && 0.0 <= t_max && t_min < t_max) || !t_min.is_finite() || !t_max.is_finite()
    {
        return Err(Error::invalid(format!(
            "interval [{t_min}, {t_max}] must be finite, non-degenerate and contain 0"
        )));
    }
    Ok(())
}

/// Builds `pᵢ(t) = u_t pᵢ(0) u_t*` where `u̇ = K(t)u`, `u₀ = 1`.
pub fn make_rotation_path(
    base: ProjectionSystem,
    generator: Generator,
    interval: (f64, f64),
    step: f64,
) -> Result<ProjectionPath> {
    let (t_min, t_max) = interval;
    check_interval(t_min, t_max)?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid("path step must be positive"));
    }
    let n = base.dim();
    let samples = 33;
    for k in 0..samples {
        let t = t_min + (t_max - t_min) * k as f64 / (samples - 1) as f64;
        let kt = generator.at(t);
        base.projections[0].check_same(&kt)?;
        let skew = (&kt + &kt.adjoint()).two_norm();
        if skew > 1e-12 * kt.two_norm().max(1.0) {
            return Err(Error::invalid(format!(
                "generator is not anti-Hermitian at t = {t} (‖K + K*‖₂ = {skew:.3e})"
            )));
        }
    }
    let march = |end: f64| {
        let gen = |t: f64| generator.at(t);
        let mut nodes = vec![(0.0, Element::identity(n))];
        let dir = end.signum();
        let mut t = 0.0;
        while (end - t) * dir > 0.0 {
            let h = dir * step.min((end - t).abs());
            let u = magnus4_step(&gen, t, h, &nodes.last().unwrap().1);
            t = if (end - (t + h)).abs() < 1e-15 {
                end
            } else {
                t + h
            };
            nodes.push((t, u));
        }
        nodes
    };
    let forward = march(t_max);
    let backward = march(t_min);
    let len = base.len();
    Ok(ProjectionPath {
        kind: PathKind::Rotation {
            base,
            generator,
            step,
            forward,
            backward,
        },
        t_min,
        t_max,
        dim: n,
        len,
    })
}

impl ProjectionPath {
    /// Path with `pᵢ(t) = pᵢ(0)` for all `t`.
    pub fn constant(base: ProjectionSystem, interval: (f64, f64)) -> Result<Self> {
        let n = base.dim();
        make_rotation_path(base, Generator::zero(n), interval, DEFAULT_PATH_STEP)
    }

    /// Path given directly by a closure; derivatives use central differences.
    pub fn from_fn(
        interval: (f64, f64),
        f: impl Fn(f64) -> ProjectionSystem + Send + Sync + 'static,
    ) -> Result<Self> {
        check_interval(interval.0, interval.1)?;
        let s0 = f(0.0);
        Ok(Self {
            dim: s0.dim(),
            len: s0.len(),
            kind: PathKind::Explicit {
                f: Arc::new(f),
                fd_scale: DEFAULT_FD_SCALE,
            },
            t_min: interval.0,
            t_max: interval.1,
        })
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.t_min, self.t_max)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of projections in the system.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_rotation(&self) -> bool {
        matches!(self.kind, PathKind::Rotation { .. })
    }

    pub fn generator(&self) -> Option<&Generator> {
        match &self.kind {
            PathKind::Rotation { generator, .. } => Some(generator),
            PathKind::Explicit { .. } => None,
        }
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        if t.is_nan() || t < self.t_min - INTERVAL_SLACK || t > self.t_max + INTERVAL_SLACK {
            return Err(Error::OutOfInterval {
                t,
                t_min: self.t_min,
                t_max: self.t_max,
            });
        }
        Ok(())
    }

    pub fn base(&self) -> ProjectionSystem {
        self.system_at(0.0)
    }

    /// The conjugating unitary `u_t` of a rotation path.
    pub fn rotation_unitary(&self, t: f64) -> Result<Element> {
        self.check_time(t)?;
        match &self.kind {
            PathKind::Rotation { .. } => Ok(self.unitary_at(t)),
            PathKind::Explicit { .. } => Err(Error::invalid(
                "explicit paths carry no conjugating unitary",
            )),
        }
    }

    fn unitary_at(&self, t: f64) -> Element {
        let PathKind::Rotation {
            generator,
            step,
            forward,
            backward,
            ..
        } = &self.kind
        else {
            unreachable!("unitary_at is only called on rotation paths")
        };
        let nodes = if t >= 0.0 { forward } else { backward };
        let k = ((t.abs() / step).floor() as usize).min(nodes.len() - 1);
        let (tk, uk) = &nodes[k];
        let gen = |s: f64| generator.at(s);
        magnus4_step(&gen, *tk, t - tk, uk)
    }

    fn system_at(&self, t: f64) -> ProjectionSystem {
        match &self.kind {
            PathKind::Rotation { base, .. } => base.conjugate(&self.unitary_at(t)),
            PathKind::Explicit { f, .. } => f(t),
        }
    }

    pub fn evaluate(&self, t: f64) -> Result<ProjectionSystem> {
        self.check_time(t)?;
        Ok(self.system_at(t))
    }

    pub fn derivative(&self, t: f64) -> Result<PathDerivative> {
        self.check_time(t)?;
        Ok(self.derivative_unchecked(t, &self.system_at(t)))
    }

    /// System and derivative at `t` together, sharing the evaluation.
    pub fn jet(&self, t: f64) -> Result<(ProjectionSystem, PathDerivative)> {
        self.check_time(t)?;
        let sys = self.system_at(t);
        let d = self.derivative_unchecked(t, &sys);
        Ok((sys, d))
    }

    fn derivative_unchecked(&self, t: f64, sys: &ProjectionSystem) -> PathDerivative {
        match &self.kind {
            PathKind::Rotation { generator, .. } => {
                let k = generator.at(t);
                PathDerivative {
                    dots: sys.projections().iter().map(|p| k.commutator(p)).collect(),
                }
            }
            PathKind::Explicit { f, fd_scale } => {
                let h = fd_scale * (1.0 + t.abs());
                let plus = f(t + h);
                let minus = f(t - h);
                PathDerivative {
                    dots: plus
                        .projections()
                        .iter()
                        .zip(minus.projections())
                        .map(|(a, b)| (a - b).scale(0.5 / h))
                        .collect(),
                }
            }
        }
    }
}

/// Empirical square-summable-derivatives constant on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareSummable {
    /// `max_t λ_max(Σᵢ ṗᵢ(t)* ṗᵢ(t))`, so `Σᵢ‖ṗᵢ(t)ξ‖₂² ≤ value·‖ξ‖₂²` on the grid.
    pub value: f64,
    pub argmax: f64,
    pub grid: usize,
}

/// Uniform grid of `points` times on `[a, b]` (a single point gives `a`).
pub fn linspace(a: f64, b: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![a],
        _ => (0..points)
            .map(|k| {
                if k + 1 == points {
                    b
                } else {
                    a + (b - a) * k as f64 / (points - 1) as f64
                }
            })
            .collect(),
    }
}

pub fn square_summable_constant(
    path: &ProjectionPath,
    interval: (f64, f64),
    grid: usize,
) -> Result<SquareSummable> {
    if grid == 0 {
        return Err(Error::invalid("grid must contain at least one point"));
    }
    path.check_time(interval.0)?;
    path.check_time(interval.1)?;
    let mut best = SquareSummable {
        value: 0.0,
        argmax: interval.0,
        grid,
    };
    for t in linspace(interval.0, interval.1, grid) {
        let d = path.derivative(t)?;
        let n = path.dim();
        let mut gram = Element::zeros(n);
        for p in &d.dots {
            gram += &(&p.adjoint() * p);
        }
        let value = gram.op_norm();
        if value > best.value {
            best.value = value;
            best.argmax = t;
        }
    }
    Ok(best)
}
