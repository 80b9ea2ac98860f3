//! The curve of pinching expectations `E_t(x) = Σᵢ pᵢ(t) x pᵢ(t)`, its
//! derivative `dE_t`, and the transport field `H_t = [dE_t, E_t]`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algebra::{spectral_norm, Element, ElementKind, SuperOperator};
use crate::error::{Error, Result};
use crate::projection::{linspace, PathDerivative, ProjectionPath, ProjectionSystem};

/// A projection path viewed through its conditional expectations.
#[derive(Clone)]
pub struct ExpectationPath {
    path: Arc<ProjectionPath>,
}

impl ExpectationPath {
    pub fn new(path: ProjectionPath) -> Self {
        Self {
            path: Arc::new(path),
        }
    }

    pub fn path(&self) -> &ProjectionPath {
        &self.path
    }

    pub fn dim(&self) -> usize {
        self.path.dim()
    }

    pub fn interval(&self) -> (f64, f64) {
        self.path.interval()
    }

    /// Evaluates the path once at `t`; the returned frame applies `E_t`,
    /// `dE_t` and `H_t` without re-integrating.
    pub fn frame(&self, t: f64) -> Result<Frame> {
        let (system, derivative) = self.path.jet(t)?;
        Ok(Frame {
            t,
            system,
            derivative,
        })
    }

    pub fn expectation(&self, t: f64, x: &Element) -> Result<Element> {
        self.check(x)?;
        Ok(self.frame(t)?.expectation(x))
    }

    pub fn d_expectation(&self, t: f64, x: &Element) -> Result<Element> {
        self.check(x)?;
        Ok(self.frame(t)?.d_expectation(x))
    }

    pub fn commutator_field(&self, t: f64, x: &Element) -> Result<Element> {
        self.check(x)?;
        Ok(self.frame(t)?.commutator_field(x))
    }

    /// `E_t` as a superoperator.
    pub fn at(&self, t: f64) -> Result<FrameOp> {
        Ok(FrameOp::new(self.frame(t)?, FrameMap::Expectation))
    }

    /// `dE_t` as a superoperator.
    pub fn d_at(&self, t: f64) -> Result<FrameOp> {
        Ok(FrameOp::new(self.frame(t)?, FrameMap::Derivative))
    }

    /// `H_t` as a superoperator.
    pub fn h_at(&self, t: f64) -> Result<FrameOp> {
        Ok(FrameOp::new(self.frame(t)?, FrameMap::Transport))
    }

    pub(crate) fn check(&self, x: &Element) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.dim(),
            });
        }
        Ok(())
    }
}

/// The projection system and its derivative at one instant.
#[derive(Clone, Debug)]
pub struct Frame {
    pub t: f64,
    pub system: ProjectionSystem,
    pub derivative: PathDerivative,
}

impl Frame {
    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    /// `Σᵢ pᵢ x pᵢ`.
    pub fn expectation(&self, x: &Element) -> Element {
        let mut out = Element::zeros(x.dim());
        for p in self.system.projections() {
            out += &(&(p * x) * p);
        }
        out
    }

    /// `Σᵢ ṗᵢ x pᵢ + pᵢ x ṗᵢ`.
    pub fn d_expectation(&self, x: &Element) -> Element {
        let mut out = Element::zeros(x.dim());
        for (p, d) in self.system.projections().iter().zip(&self.derivative.dots) {
            out += &(&(d * x) * p);
            out += &(&(p * x) * d);
        }
        out
    }

    /// `dE(E(x)) − E(dE(x))`.
    pub fn commutator_field(&self, x: &Element) -> Element {
        self.d_expectation(&self.expectation(x)) - self.expectation(&self.d_expectation(x))
    }

    /// `(1 − 2E)(dE(x))`, algebraically equal to [`Frame::commutator_field`].
    pub fn commutator_field_via_symmetry(&self, x: &Element) -> Element {
        let d = self.d_expectation(x);
        let e = self.expectation(&d);
        d - e.scale(2.0)
    }

    pub fn expectation_matrix(&self) -> DMatrix<C64> {
        FrameOp::new(self.clone(), FrameMap::Expectation).matrix()
    }

    pub fn d_matrix(&self) -> DMatrix<C64> {
        FrameOp::new(self.clone(), FrameMap::Derivative).matrix()
    }

    pub fn h_matrix(&self) -> DMatrix<C64> {
        FrameOp::new(self.clone(), FrameMap::Transport).matrix()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameMap {
    Expectation,
    Derivative,
    Transport,
}

/// One of `E_t`, `dE_t`, `H_t` frozen at a time.
#[derive(Clone, Debug)]
pub struct FrameOp {
    frame: Frame,
    map: FrameMap,
}

impl FrameOp {
    pub fn new(frame: Frame, map: FrameMap) -> Self {
        Self { frame, map }
    }
}

impl SuperOperator for FrameOp {
    fn dim(&self) -> usize {
        self.frame.dim()
    }

    fn apply(&self, x: &Element) -> Element {
        match self.map {
            FrameMap::Expectation => self.frame.expectation(x),
            FrameMap::Derivative => self.frame.d_expectation(x),
            FrameMap::Transport => self.frame.commutator_field(x),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CodiagonalResiduals {
    /// `‖dE(E(x)) + E(dE(x)) − dE(x)‖₂`.
    pub codiagonal: f64,
    /// `‖E(dE(E(x)))‖₂`.
    pub corner: f64,
}

pub fn verify_codiagonal(ep: &ExpectationPath, t: f64, x: &Element) -> Result<CodiagonalResiduals> {
    ep.check(x)?;
    let f = ep.frame(t)?;
    let ex = f.expectation(x);
    let dx = f.d_expectation(x);
    let lhs = f.d_expectation(&ex) + f.expectation(&dx);
    Ok(CodiagonalResiduals {
        codiagonal: lhs.dist(&dx),
        corner: f.expectation(&f.d_expectation(&ex)).two_norm(),
    })
}

/// Empirical Hypothesis constant `C_J` together with its analytic ceiling.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisEstimate {
    pub interval: (f64, f64),
    /// `max_a ∫_J ‖dE_t(a)‖₂² dt` over unit `a` (trapezoid rule).
    pub empirical: f64,
    /// Largest value among the sampled directions alone.
    pub sampled: f64,
    /// Top eigenvalue of `∫_J dE_t* dE_t dt`, the exact supremum for the rule.
    pub exact: f64,
    /// `max_t ‖dE_t‖_{2→2}` over the grid.
    pub de_norm: f64,
    /// `4·|J|·de_norm²`.
    pub bound: f64,
    /// `|C_J(2·grid − 1) − C_J(grid)|`.
    pub quadrature_error: f64,
    pub grid: usize,
    pub samples: usize,
}

impl HypothesisEstimate {
    pub fn certified(&self) -> bool {
        self.empirical <= self.bound + self.tolerance()
    }

    pub fn tolerance(&self) -> f64 {
        self.quadrature_error.max(1e-12 * self.bound.max(1.0))
    }
}

/// Matrix-unit basis is always included; `samples` random unit directions are added.
pub fn estimate_hypothesis_constant(
    ep: &ExpectationPath,
    interval: (f64, f64),
    samples: usize,
    grid: usize,
    seed: u64,
) -> Result<HypothesisEstimate> {
    if samples == 0 {
        return Err(Error::invalid("at least one sample is required"));
    }
    if grid < 2 {
        return Err(Error::invalid("quadrature grid needs at least two points"));
    }
    let (a, b) = interval;
    if b < a {
        return Err(Error::invalid("interval end precedes its start"));
    }
    ep.path().check_time(a)?;
    ep.path().check_time(b)?;

    let n = ep.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut directions: Vec<DVector<C64>> = (0..n * n)
        .map(|k| {
            let mut v = DVector::zeros(n * n);
            v[k] = C64::new(1.0, 0.0);
            v
        })
        .collect();
    for _ in 0..samples {
        let x = Element::random(n, &mut rng, ElementKind::General);
        let v = DVector::from_column_slice(x.vec());
        let norm = v.norm();
        directions.push(v / C64::new(norm, 0.0));
    }

    let fine = integrate_gram(ep, interval, 2 * grid - 1)?;
    let coarse = integrate_gram(ep, interval, grid)?;

    let sampled = directions
        .iter()
        .map(|v| (v.adjoint() * &coarse.gram * v)[(0, 0)].re)
        .fold(0.0, f64::max);
    let exact = top_eigenvalue(&coarse.gram);
    let exact_fine = top_eigenvalue(&fine.gram);
    let empirical = sampled.max(exact);
    let de_norm = coarse.de_norm.max(fine.de_norm);
    let bound = 4.0 * (b - a) * de_norm * de_norm;
    let est = HypothesisEstimate {
        interval,
        empirical,
        sampled,
        exact,
        de_norm,
        bound,
        quadrature_error: (exact_fine - exact).abs(),
        grid,
        samples,
    };
    if !est.certified() {
        return Err(Error::Numerical(format!(
            "empirical C_J = {:.6e} exceeds 4|J|D_J² = {:.6e} beyond quadrature tolerance {:.3e}",
            est.empirical,
            est.bound,
            est.tolerance()
        )));
    }
    Ok(est)
}

struct GramIntegral {
    gram: DMatrix<C64>,
    de_norm: f64,
}

/// Trapezoid rule for `∫ M_t^H M_t dt`, `M_t` the matrix of `dE_t`.
fn integrate_gram(ep: &ExpectationPath, (a, b): (f64, f64), points: usize) -> Result<GramIntegral> {
    let n2 = ep.dim() * ep.dim();
    let mut gram = DMatrix::zeros(n2, n2);
    let mut de_norm: f64 = 0.0;
    let ts = linspace(a, b, points);
    let h = if points > 1 {
        (b - a) / (points - 1) as f64
    } else {
        0.0
    };
    for (k, &t) in ts.iter().enumerate() {
        let m = ep.frame(t)?.d_matrix();
        de_norm = de_norm.max(spectral_norm(&m));
        let w = if k == 0 || k + 1 == points {
            0.5 * h
        } else {
            h
        };
        gram += m.adjoint() * &m * C64::new(w, 0.0);
    }
    Ok(GramIntegral { gram, de_norm })
}

fn top_eigenvalue(hermitian: &DMatrix<C64>) -> f64 {
    let sym = (hermitian + hermitian.adjoint()) * C64::new(0.5, 0.0);
    sym.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}
