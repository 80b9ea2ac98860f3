//! Finite-dimensional tracial *-algebras.
//!
//! The ambient algebra is `M_n(ℂ)` with the normalized trace `τ = Tr / n`,
//! so that `τ(1) = 1`. The same matrices, with the inner product
//! `⟨x, y⟩ = τ(y* x)`, form the Hilbert–Schmidt space `L²(M_n, τ)`.
//!
//! Superoperators (linear maps of the algebra into itself) are represented
//! in the matrix-unit basis: the column of index `k + l·n` holds the entries
//! of `F(e_kl)`, stacked column-major. The normalization factor `√n` of the
//! orthonormal basis `{√n·e_kl}` cancels, so the 2→2 operator norm of `F`
//! equals the spectral norm of that `n² × n²` matrix.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// `M_n(ℂ)` with its normalized trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TracialAlgebra {
    dim: usize,
}

impl TracialAlgebra {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("algebra dimension must be positive"));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Factor `1/n` applied to the matrix trace.
    pub fn trace_normalization(&self) -> f64 {
        1.0 / self.dim as f64
    }

    pub fn identity(&self) -> Element {
        Element::identity(self.dim)
    }

    pub fn zero(&self) -> Element {
        Element::zeros(self.dim)
    }

    /// Matrix unit `e_ij` (zero-based indices).
    pub fn unit(&self, i: usize, j: usize) -> Element {
        Element::unit(self.dim, i, j)
    }

    /// Hilbert–Schmidt orthonormal basis `{√n·e_ij}`, ordered column-major.
    pub fn orthonormal_basis(&self) -> Vec<Element> {
        let n = self.dim;
        let scale = (n as f64).sqrt();
        (0..n * n)
            .map(|k| Element::unit(n, k % n, k / n).scale(scale))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementKind {
    General,
    SelfAdjoint,
}

/// An element of `M_n(ℂ)`, doubling as a vector of `L²(M_n, τ)`.
#[derive(Clone, PartialEq)]
pub struct Element {
    m: DMatrix<C64>,
}

impl fmt::Debug for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Element{}", self.m)
    }
}

impl Element {
    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::invalid(format!(
                "algebra elements are non-empty square matrices, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self { m })
    }

    /// Builds an element from real row-major entries.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("rows must form a square matrix"));
        }
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j], 0.0)))
    }

    /// Inverse of [`Element::vec`]: column-major entries.
    pub fn from_vec(n: usize, v: &[C64]) -> Result<Self> {
        if v.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: v.len(),
            });
        }
        Self::from_matrix(DMatrix::from_column_slice(n, n, v))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            m: DMatrix::identity(n, n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            m: DMatrix::zeros(n, n),
        }
    }

    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = DMatrix::zeros(n, n);
        m[(i, j)] = C64::new(1.0, 0.0);
        Self { m }
    }

    /// Deterministic draw: i.i.d. standard complex Gaussian entries
    /// (`E|z|² = 1`); the self-adjoint kind returns `(g + g*)/2`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R, kind: ElementKind) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let m = DMatrix::from_fn(n, n, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(s * re, s * im)
        });
        let g = Self { m };
        match kind {
            ElementKind::General => g,
            ElementKind::SelfAdjoint => (&g + &g.adjoint()).scale(0.5),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn algebra(&self) -> TracialAlgebra {
        TracialAlgebra { dim: self.dim() }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    /// Column-major entries.
    pub fn vec(&self) -> &[C64] {
        self.m.as_slice()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            m: self.m.adjoint(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            m: &self.m * C64::new(s, 0.0),
        }
    }

    pub fn scale_c(&self, s: C64) -> Self {
        Self { m: &self.m * s }
    }

    /// Normalized trace `τ(x) = Tr(x)/n`.
    pub fn trace(&self) -> C64 {
        self.m.trace() / self.dim() as f64
    }

    /// `⟨self, other⟩ = τ(other* self)`.
    pub fn inner(&self, other: &Element) -> Result<C64> {
        self.check_same(other)?;
        Ok(self.inner_unchecked(other))
    }

    pub(crate) fn inner_unchecked(&self, other: &Element) -> C64 {
        let s: C64 = self
            .m
            .iter()
            .zip(other.m.iter())
            .map(|(a, b)| b.conj() * a)
            .sum();
        s / self.dim() as f64
    }

    /// `‖x‖₂ = τ(x* x)^{1/2}`.
    pub fn two_norm(&self) -> f64 {
        self.m.norm() / (self.dim() as f64).sqrt()
    }

    /// Largest singular value.
    pub fn op_norm(&self) -> f64 {
        self.m
            .clone()
            .singular_values()
            .iter()
            .cloned()
            .fold(0.0, f64::max)
    }

    pub fn commutator(&self, other: &Element) -> Element {
        Self {
            m: &self.m * &other.m - &other.m * &self.m,
        }
    }

    pub fn is_self_adjoint(&self, tol: f64) -> bool {
        (self - &self.adjoint()).two_norm() <= tol
    }

    pub fn check_same(&self, other: &Element) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    /// `‖self − other‖₂`.
    pub fn dist(&self, other: &Element) -> f64 {
        (self - other).two_norm()
    }
}

macro_rules! forward_binop {
    ($tr:ident, $f:ident, $op:tt) => {
        impl $tr<&Element> for &Element {
            type Output = Element;
            fn $f(self, rhs: &Element) -> Element {
                Element { m: &self.m $op &rhs.m }
            }
        }
        impl $tr<Element> for Element {
            type Output = Element;
            fn $f(self, rhs: Element) -> Element {
                Element { m: self.m $op rhs.m }
            }
        }
        impl $tr<&Element> for Element {
            type Output = Element;
            fn $f(self, rhs: &Element) -> Element {
                Element { m: self.m $op &rhs.m }
            }
        }
    };
}

forward_binop!(Add, add, +);
forward_binop!(Sub, sub, -);
forward_binop!(Mul, mul, *);

impl AddAssign<&Element> for Element {
    fn add_assign(&mut self, rhs: &Element) {
        self.m += &rhs.m;
    }
}

impl Neg for &Element {
    type Output = Element;
    fn neg(self) -> Element {
        Element { m: -&self.m }
    }
}

/// `⟨x, y⟩ = τ(y* x)`.
pub fn trace_inner_product(x: &Element, y: &Element) -> Result<C64> {
    x.inner(y)
}

pub fn two_norm(x: &Element) -> f64 {
    x.two_norm()
}

pub fn op_norm(x: &Element) -> f64 {
    x.op_norm()
}

/// Seeded draw of a random element.
pub fn random_element(algebra: TracialAlgebra, seed: u64, kind: ElementKind) -> Element {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Element::random(algebra.dim(), &mut rng, kind)
}

/// A linear map of `M_n` into itself.
pub trait SuperOperator {
    fn dim(&self) -> usize;

    fn apply(&self, x: &Element) -> Element;

    /// Dense `n² × n²` representation in the matrix-unit basis.
    fn matrix(&self) -> DMatrix<C64> {
        superop_matrix(self.dim(), |x| self.apply(x))
    }
}

/// Builds the dense representation of a linear map given as a closure.
pub fn superop_matrix(n: usize, f: impl Fn(&Element) -> Element) -> DMatrix<C64> {
    let n2 = n * n;
    let mut out = DMatrix::zeros(n2, n2);
    for col in 0..n2 {
        let image = f(&Element::unit(n, col % n, col / n));
        out.column_mut(col).copy_from_slice(image.vec());
    }
    out
}

/// A superoperator backed by a closure.
pub struct LinearMap<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&Element) -> Element> LinearMap<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&Element) -> Element> SuperOperator for LinearMap<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &Element) -> Element {
        (self.f)(x)
    }
}

/// A superoperator stored as its dense matrix.
#[derive(Clone, Debug)]
pub struct DenseSuperOperator {
    dim: usize,
    m: DMatrix<C64>,
}

impl DenseSuperOperator {
    pub fn new(dim: usize, m: DMatrix<C64>) -> Result<Self> {
        let n2 = dim * dim;
        if m.nrows() != n2 || m.ncols() != n2 {
            return Err(Error::DimensionMismatch {
                expected: n2,
                found: m.nrows().max(m.ncols()),
            });
        }
        Ok(Self { dim, m })
    }

    pub fn from_op(op: &dyn SuperOperator) -> Self {
        Self {
            dim: op.dim(),
            m: op.matrix(),
        }
    }

    pub fn as_matrix(&self) -> &DMatrix<C64> {
        &self.m
    }
}

impl SuperOperator for DenseSuperOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &Element) -> Element {
        let v = nalgebra::DVector::from_column_slice(x.vec());
        let w = &self.m * v;
        Element::from_vec(self.dim, w.as_slice()).expect("dimension checked at construction")
    }

    fn matrix(&self) -> DMatrix<C64> {
        self.m.clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormMethod {
    /// Largest singular value of the dense representation.
    Exact,
    /// Power iteration on `F* F`.
    PowerIteration {
        max_iterations: usize,
        tolerance: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub method: NormMethod,
    pub iterations: usize,
}

/// `sup { ‖F(a)‖₂ : ‖a‖₂ = 1 }`.
pub fn superop_2to2_norm(op: &dyn SuperOperator, method: NormMethod) -> Result<NormEstimate> {
    let m = op.matrix();
    match method {
        NormMethod::Exact => Ok(NormEstimate {
            value: spectral_norm(&m),
            method,
            iterations: 0,
        }),
        NormMethod::PowerIteration {
            max_iterations,
            tolerance,
        } => {
            let gram = m.adjoint() * &m;
            let n2 = gram.nrows();
            // fixed, non-symmetric start so runs are reproducible
            let mut v = nalgebra::DVector::from_fn(n2, |i, _| {
                C64::new(1.0 + 0.1 * i as f64, 0.05 * (i % 3) as f64)
            });
            v /= C64::new(v.norm(), 0.0);
            let mut lambda = 0.0;
            let mut residual = f64::INFINITY;
            for it in 1..=max_iterations {
                let w = &gram * &v;
                let nw = w.norm();
                if nw == 0.0 {
                    return Ok(NormEstimate {
                        value: 0.0,
                        method,
                        iterations: it,
                    });
                }
                let next = nw;
                residual = (next - lambda).abs() / next.max(f64::MIN_POSITIVE);
                lambda = next;
                v = w / C64::new(nw, 0.0);
                if residual < tolerance {
                    return Ok(NormEstimate {
                        value: lambda.sqrt(),
                        method,
                        iterations: it,
                    });
                }
            }
            Err(Error::PowerIteration {
                iterations: max_iterations,
                residual,
            })
        }
    }
}

pub(crate) fn spectral_norm(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}
