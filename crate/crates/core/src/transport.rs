//! Solvers for the transport equation `α̇(t) = H_t(α(t))`, `α(s) = a`.
//!
//! Two independent backends produce the propagator `G_{t,s}`:
//!
//! * successive approximations `S_{n+1}(t) = a + ∫_s^t H_u(S_n(u)) du`,
//!   run on sub-intervals short enough that the iteration contracts with
//!   factor at most `k₀`, then glued end to end;
//! * classical fourth-order Runge–Kutta, used as the fast default and as the
//!   cross-check for the iterative construction.
//!
//! States are stored column-major in the matrix-unit basis, so a single solve
//! can carry many initial conditions (or the whole basis, yielding the dense
//! matrix of `G_{t,s}`).

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::algebra::{DenseSuperOperator, Element};
use crate::error::{Error, Result};
use crate::expectation::{estimate_hypothesis_constant, ExpectationPath};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardConfig {
    /// Target contraction factor `k₀ ∈ (0, 1)`.
    pub contraction_target: f64,
    /// Iteration budget per sub-interval.
    pub max_iterations: usize,
    /// Stop once the sup-over-nodes increment (2-norm) falls below this,
    /// relative to `max(1, ‖a‖₂)`.
    pub tolerance: f64,
    /// Quadrature cells per sub-interval.
    pub nodes_per_subinterval: usize,
    /// Grid used on the full path interval to estimate the constant `C_J`
    /// that sizes the sub-intervals; shorter solves use a proportional share.
    pub constant_grid: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            contraction_target: 0.5,
            max_iterations: 200,
            tolerance: 1e-12,
            nodes_per_subinterval: 16,
            constant_grid: 64,
        }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<()> {
        let k0 = self.contraction_target;
        if !(k0 > 0.0 && k0 < 1.0) {
            return Err(Error::Config(format!(
                "contraction_target must lie in (0, 1), got {k0}"
            )));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::Config("Picard tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if self.nodes_per_subinterval < 3 {
            return Err(Error::Config(
                "nodes_per_subinterval must be at least 3".into(),
            ));
        }
        if self.constant_grid < 2 {
            return Err(Error::Config("constant_grid must be at least 2".into()));
        }
        Ok(())
    }
}

/// Cumulative integration weights on a fixed grid.
///
/// Cell `[t_k, t_{k+1}]` is integrated exactly against the interpolating
/// polynomial through (up to) four neighbouring nodes, via two-point
/// Gauss–Legendre; the rule is fourth order on smooth integrands.
struct CumulativeRule {
    /// For each cell: first node of the stencil and its weights.
    cells: Vec<(usize, Vec<f64>)>,
}

impl CumulativeRule {
    fn new(times: &[f64]) -> Self {
        let m = times.len();
        let width = m.min(4);
        let g = 1.0 / 3f64.sqrt();
        let cells = (0..m.saturating_sub(1))
            .map(|k| {
                let start = k.saturating_sub(1).min(m - width);
                let stencil = &times[start..start + width];
                let (a, b) = (times[k], times[k + 1]);
                let half = 0.5 * (b - a);
                let mid = 0.5 * (a + b);
                let gauss = [mid - g * half, mid + g * half];
                let weights = (0..width)
                    .map(|j| gauss.iter().map(|&x| lagrange(stencil, j, x)).sum::<f64>() * half)
                    .collect();
                (start, weights)
            })
            .collect();
        Self { cells }
    }

    /// Running integrals `I_k = ∫_{t_0}^{t_k} f`, `I_0 = 0`.
    fn integrate(&self, values: &[DMatrix<C64>]) -> Vec<DMatrix<C64>> {
        let zero = values[0].map(|_| C64::new(0.0, 0.0));
        let mut out = Vec::with_capacity(values.len());
        out.push(zero);
        for (start, weights) in &self.cells {
            let mut acc = out.last().unwrap().clone();
            for (j, w) in weights.iter().enumerate() {
                acc += &values[start + j] * C64::new(*w, 0.0);
            }
            out.push(acc);
        }
        out
    }
}

fn lagrange(nodes: &[f64], j: usize, x: f64) -> f64 {
    nodes
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != j)
        .map(|(_, &xi)| (x - xi) / (nodes[j] - xi))
        .product()
}

/// Largest 2-norm among the columns (each column an element).
fn state_norm(state: &DMatrix<C64>, n: usize) -> f64 {
    state.column_iter().map(|c| c.norm()).fold(0.0, f64::max) / (n as f64).sqrt()
}

fn elements_to_state(elements: &[Element], n: usize) -> Result<DMatrix<C64>> {
    let mut state = DMatrix::zeros(n * n, elements.len());
    for (j, x) in elements.iter().enumerate() {
        if x.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: x.dim(),
            });
        }
        state.column_mut(j).copy_from_slice(x.vec());
    }
    Ok(state)
}

fn state_to_elements(state: &DMatrix<C64>, n: usize) -> Vec<Element> {
    state
        .column_iter()
        .map(|c| Element::from_vec(n, c.as_slice()).expect("state columns hold n² entries"))
        .collect()
}

/// Iterates `S₀ … S_{n_max}` of the successive approximations on a grid.
#[derive(Clone, Debug)]
pub struct PicardSequence {
    pub times: Vec<f64>,
    /// `iterates[n][k] = S_n(times[k])`.
    pub iterates: Vec<Vec<Element>>,
}

impl PicardSequence {
    /// `sup_k ‖S_{n+1}(t_k) − S_n(t_k)‖₂` for each available `n`.
    pub fn increments(&self) -> Vec<f64> {
        self.iterates
            .windows(2)
            .map(|w| {
                w[0].iter()
                    .zip(&w[1])
                    .map(|(a, b)| a.dist(b))
                    .fold(0.0, f64::max)
            })
            .collect()
    }
}

/// Runs `n_max` Picard steps from `(s0, a)` on `grid`, which must start at
/// `s0` and be strictly increasing.
pub fn picard_sequence(
    ep: &ExpectationPath,
    s0: f64,
    a: &Element,
    grid: &[f64],
    n_max: usize,
) -> Result<PicardSequence> {
    ep.check(a)?;
    if grid.first() != Some(&s0) {
        return Err(Error::invalid("grid must start at the initial time"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("grid must be strictly increasing"));
    }
    for &t in grid {
        ep.path().check_time(t)?;
    }
    let n = ep.dim();
    let init = elements_to_state(std::slice::from_ref(a), n)?;
    let fields = field_matrices(ep, grid)?;
    let rule = CumulativeRule::new(grid);
    let mut current: Vec<DMatrix<C64>> = vec![init.clone(); grid.len()];
    let mut iterates = vec![current
        .iter()
        .map(|s| state_to_elements(s, n).remove(0))
        .collect()];
    for _ in 0..n_max {
        current = picard_step(&fields, &rule, &init, &current);
        iterates.push(
            current
                .iter()
                .map(|s| state_to_elements(s, n).remove(0))
                .collect(),
        );
    }
    Ok(PicardSequence {
        times: grid.to_vec(),
        iterates,
    })
}

fn field_matrices(ep: &ExpectationPath, times: &[f64]) -> Result<Vec<DMatrix<C64>>> {
    times.iter().map(|&t| Ok(ep.frame(t)?.h_matrix())).collect()
}

fn picard_step(
    fields: &[DMatrix<C64>],
    rule: &CumulativeRule,
    init: &DMatrix<C64>,
    current: &[DMatrix<C64>],
) -> Vec<DMatrix<C64>> {
    let values: Vec<DMatrix<C64>> = fields.iter().zip(current).map(|(h, s)| h * s).collect();
    rule.integrate(&values)
        .into_iter()
        .map(|i| init + i)
        .collect()
}

/// Diagnostics for one glued sub-interval.
#[derive(Clone, Debug, PartialEq)]
pub struct SubintervalReport {
    pub start: f64,
    pub end: f64,
    pub iterations: usize,
    /// `sup‖S_{n+1} − S_n‖₂` for `n = 0, 1, …`.
    pub increments: Vec<f64>,
}

impl SubintervalReport {
    /// Ratios of consecutive increments; entry `n − 1` compares `S_{n+1} − S_n`
    /// with `S_n − S_{n−1}`.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.increments
            .windows(2)
            .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct PicardReport {
    /// Empirical `C_J` over the solve interval.
    pub constant: f64,
    /// Sub-interval length bound `k₀² / C_J`.
    pub max_length: f64,
    pub subintervals: Vec<SubintervalReport>,
}

/// Picard solution for a block of initial conditions, glued across sub-intervals.
pub fn picard_propagate(
    ep: &ExpectationPath,
    s: f64,
    t: f64,
    init: &DMatrix<C64>,
    config: &PicardConfig,
) -> Result<(DMatrix<C64>, PicardReport)> {
    config.validate()?;
    ep.path().check_time(s)?;
    ep.path().check_time(t)?;
    let n = ep.dim();
    if init.nrows() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            found: init.nrows(),
        });
    }
    if s == t {
        return Ok((
            init.clone(),
            PicardReport {
                constant: 0.0,
                max_length: f64::INFINITY,
                subintervals: vec![],
            },
        ));
    }
    let (lo, hi) = (s.min(t), s.max(t));
    let (i0, i1) = ep.interval();
    let share = (hi - lo) / (i1 - i0);
    let grid = ((config.constant_grid as f64 * share).ceil() as usize)
        .clamp(3, config.constant_grid.max(3));
    let constant = estimate_hypothesis_constant(ep, (lo, hi), 1, grid, 0)
        .map_err(|e| Error::Config(format!("empirical C_J unavailable: {e}")))?
        .empirical;
    let k0 = config.contraction_target;
    let max_length = if constant > 0.0 {
        k0 * k0 / constant
    } else {
        f64::INFINITY
    };
    let pieces = ((hi - lo) / max_length).ceil().max(1.0) as usize;
    let width = (t - s) / pieces as f64;

    let mut state = init.clone();
    let mut subintervals = Vec::with_capacity(pieces);
    for p in 0..pieces {
        let a = s + p as f64 * width;
        let b = if p + 1 == pieces { t } else { a + width };
        let (next, report) = picard_subinterval(ep, a, b, &state, config)?;
        state = next;
        subintervals.push(report);
    }
    Ok((
        state,
        PicardReport {
            constant,
            max_length,
            subintervals,
        },
    ))
}

fn picard_subinterval(
    ep: &ExpectationPath,
    a: f64,
    b: f64,
    init: &DMatrix<C64>,
    config: &PicardConfig,
) -> Result<(DMatrix<C64>, SubintervalReport)> {
    let n = ep.dim();
    let m = config.nodes_per_subinterval;
    let times: Vec<f64> = (0..=m)
        .map(|k| {
            if k == m {
                b
            } else {
                a + (b - a) * k as f64 / m as f64
            }
        })
        .collect();
    let fields = field_matrices(ep, &times)?;
    let rule = CumulativeRule::new(&times);
    let threshold = config.tolerance * state_norm(init, n).max(1.0);

    let mut current = vec![init.clone(); times.len()];
    let mut increments = Vec::new();
    for it in 1..=config.max_iterations {
        let next = picard_step(&fields, &rule, init, &current);
        let inc = next
            .iter()
            .zip(&current)
            .map(|(x, y)| state_norm(&(x - y), n))
            .fold(0.0, f64::max);
        increments.push(inc);
        current = next;
        if inc <= threshold {
            return Ok((
                current.pop().unwrap(),
                SubintervalReport {
                    start: a,
                    end: b,
                    iterations: it,
                    increments,
                },
            ));
        }
    }
    let ratio = match increments.as_slice() {
        [.., x, y] if *x > 0.0 => y / x,
        _ => f64::NAN,
    };
    Err(Error::Convergence {
        iterations: config.max_iterations,
        increment: *increments.last().unwrap_or(&f64::NAN),
        ratio,
    })
}

/// `α_s(t)` by the glued successive approximations.
pub fn picard_solve(
    ep: &ExpectationPath,
    s: f64,
    a: &Element,
    t: f64,
    config: &PicardConfig,
) -> Result<Element> {
    ep.check(a)?;
    let n = ep.dim();
    let init = elements_to_state(std::slice::from_ref(a), n)?;
    let (state, _) = picard_propagate(ep, s, t, &init, config)?;
    Ok(state_to_elements(&state, n).remove(0))
}

/// Classical RK4 for a block of initial conditions.
pub fn reference_propagate(
    ep: &ExpectationPath,
    s: f64,
    t: f64,
    init: &DMatrix<C64>,
    step: f64,
) -> Result<DMatrix<C64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid(format!(
            "RK4 step must be positive, got {step}"
        )));
    }
    ep.path().check_time(s)?;
    ep.path().check_time(t)?;
    let n = ep.dim();
    if init.nrows() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            found: init.nrows(),
        });
    }
    if s == t {
        return Ok(init.clone());
    }
    let steps = ((t - s).abs() / step).ceil().max(1.0) as usize;
    let h = (t - s) / steps as f64;
    let field = |u: f64, y: &DMatrix<C64>| -> Result<DMatrix<C64>> {
        let f = ep.frame(u)?;
        let mut out = DMatrix::zeros(y.nrows(), y.ncols());
        for (j, col) in y.column_iter().enumerate() {
            let x = Element::from_vec(n, col.as_slice())?;
            out.column_mut(j)
                .copy_from_slice(f.commutator_field(&x).vec());
        }
        Ok(out)
    };
    let c = |v: f64| C64::new(v, 0.0);
    let mut y = init.clone();
    for k in 0..steps {
        let u = s + k as f64 * h;
        let end = if k + 1 == steps { t } else { u + h };
        let k1 = field(u, &y)?;
        let k2 = field(u + 0.5 * h, &(&y + &k1 * c(0.5 * h)))?;
        let k3 = field(u + 0.5 * h, &(&y + &k2 * c(0.5 * h)))?;
        let k4 = field(end, &(&y + &k3 * c(h)))?;
        y += (k1 + (k2 + k3) * c(2.0) + k4) * c(h / 6.0);
    }
    Ok(y)
}

/// `α_s(t)` by RK4 with the given maximal step.
pub fn reference_solve(
    ep: &ExpectationPath,
    s: f64,
    a: &Element,
    t: f64,
    step: f64,
) -> Result<Element> {
    ep.check(a)?;
    let n = ep.dim();
    let init = elements_to_state(std::slice::from_ref(a), n)?;
    let state = reference_propagate(ep, s, t, &init, step)?;
    Ok(state_to_elements(&state, n).remove(0))
}

/// Default RK4 step.
pub const DEFAULT_REFERENCE_STEP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "backend")]
pub enum Backend {
    Picard(PicardConfig),
    Reference { step: f64 },
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Reference {
            step: DEFAULT_REFERENCE_STEP,
        }
    }
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Picard(_) => "picard",
            Backend::Reference { .. } => "reference",
        }
    }
}

/// The two-parameter family `G_{t,s}` of transport propagators.
#[derive(Clone)]
pub struct Propagator {
    ep: ExpectationPath,
    backend: Backend,
}

impl Propagator {
    pub fn new(ep: ExpectationPath, backend: Backend) -> Self {
        Self { ep, backend }
    }

    pub fn expectation_path(&self) -> &ExpectationPath {
        &self.ep
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    fn propagate(&self, t: f64, s: f64, init: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        match &self.backend {
            Backend::Picard(cfg) => Ok(picard_propagate(&self.ep, s, t, init, cfg)?.0),
            Backend::Reference { step } => reference_propagate(&self.ep, s, t, init, *step),
        }
    }

    /// `G_{t,s}(a)`.
    pub fn apply(&self, t: f64, s: f64, a: &Element) -> Result<Element> {
        Ok(self.apply_many(t, s, std::slice::from_ref(a))?.remove(0))
    }

    /// `G_{t,s}` applied to several elements in one solve.
    pub fn apply_many(&self, t: f64, s: f64, xs: &[Element]) -> Result<Vec<Element>> {
        let n = self.ep.dim();
        if xs.is_empty() {
            return Ok(vec![]);
        }
        let init = elements_to_state(xs, n)?;
        let out = self.propagate(t, s, &init)?;
        Ok(state_to_elements(&out, n))
    }

    /// `G_t = G_{t,0}`.
    pub fn g(&self, t: f64, a: &Element) -> Result<Element> {
        self.apply(t, 0.0, a)
    }

    /// `G_t⁻¹ = G_{0,t}`.
    pub fn g_inverse(&self, t: f64, a: &Element) -> Result<Element> {
        self.apply(0.0, t, a)
    }

    /// Dense matrix of `G_{t,s}`, obtained by propagating the matrix-unit basis.
    pub fn matrix(&self, t: f64, s: f64) -> Result<DenseSuperOperator> {
        let n = self.ep.dim();
        let init = DMatrix::identity(n * n, n * n);
        DenseSuperOperator::new(n, self.propagate(t, s, &init)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::ElementKind;
    use crate::projection::{make_rotation_path, Generator, ProjectionPath, ProjectionSystem};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn k_m2() -> Element {
        Element::from_real_rows(&[&[0.0, -1.0], &[1.0, 0.0]]).unwrap()
    }

    fn rotation(ranks: &[usize], k: Element) -> ExpectationPath {
        ExpectationPath::new(
            make_rotation_path(
                ProjectionSystem::from_ranks(ranks).unwrap(),
                Generator::constant(k),
                (-0.5, 1.5),
                1e-3,
            )
            .unwrap(),
        )
    }

    fn random_anti_hermitian(rng: &mut ChaCha8Rng, n: usize) -> Element {
        let g = Element::random(n, rng, ElementKind::General);
        (&g - &g.adjoint()).scale(0.5)
    }

    fn constant_path() -> ExpectationPath {
        ExpectationPath::new(
            ProjectionPath::constant(ProjectionSystem::from_ranks(&[1, 2]).unwrap(), (0.0, 1.0))
                .unwrap(),
        )
    }

    #[test]
    fn cumulative_rule_is_exact_for_cubics() {
        let times: Vec<f64> = vec![0.0, 0.1, 0.25, 0.3, 0.55, 0.7, 1.0];
        let rule = CumulativeRule::new(&times);
        let f = |x: f64| 1.0 - 2.0 * x + 3.0 * x * x - 4.0 * x * x * x;
        let antideriv = |x: f64| x - x * x + x.powi(3) - x.powi(4);
        let values: Vec<DMatrix<C64>> = times
            .iter()
            .map(|&x| DMatrix::from_element(1, 1, C64::new(f(x), 0.0)))
            .collect();
        for (k, v) in rule.integrate(&values).iter().enumerate() {
            assert!((v[(0, 0)].re - antideriv(times[k])).abs() < 1e-14);
        }
    }

    #[test]
    fn cumulative_rule_fourth_order() {
        let err = |m: usize| {
            let times: Vec<f64> = (0..=m).map(|k| k as f64 / m as f64).collect();
            let rule = CumulativeRule::new(&times);
            let values: Vec<DMatrix<C64>> = times
                .iter()
                .map(|&x| DMatrix::from_element(1, 1, C64::new(x.exp(), 0.0)))
                .collect();
            let out = rule.integrate(&values);
            (out[m][(0, 0)].re - (1f64.exp() - 1.0)).abs()
        };
        let ratio = err(40) / err(80);
        assert!((12.0..20.0).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn config_validation() {
        let mut cfg = PicardConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.contraction_target = 1.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg = PicardConfig {
            nodes_per_subinterval: 2,
            ..PicardConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn picard_sequence_constant_path_is_stationary() {
        let ep = constant_path();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Element::random(3, &mut rng, ElementKind::General);
        let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let seq = picard_sequence(&ep, 0.0, &a, &grid, 4).unwrap();
        assert_eq!(seq.iterates.len(), 5);
        for it in &seq.iterates {
            for x in it {
                assert_eq!(x, &a);
            }
        }
        let only = picard_sequence(&ep, 0.0, &a, &grid, 0).unwrap();
        assert_eq!(only.iterates.len(), 1);
    }

    #[test]
    fn first_picard_iterate_matches_direct_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ep = rotation(&[1, 2], random_anti_hermitian(&mut rng, 3));
        let a = Element::random(3, &mut rng, ElementKind::General);
        let grid: Vec<f64> = (0..=20).map(|k| 0.2 + 0.4 * k as f64 / 20.0).collect();
        let seq = picard_sequence(&ep, 0.2, &a, &grid, 1).unwrap();
        // independent oracle: composite Simpson with 2000 panels
        let panels = 2000;
        let (lo, hi) = (0.2, 0.6);
        let h = (hi - lo) / panels as f64;
        let mut integral = Element::zeros(3);
        for k in 0..=panels {
            let w = if k == 0 || k == panels {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            integral += &ep
                .commutator_field(lo + k as f64 * h, &a)
                .unwrap()
                .scale(w * h / 3.0);
        }
        let expected = &a + &integral;
        let got = seq.iterates[1].last().unwrap();
        assert!(got.dist(&expected) < 1e-8, "{}", got.dist(&expected));
    }

    #[test]
    fn picard_sequence_rejects_bad_grids() {
        let ep = constant_path();
        let a = Element::identity(3);
        assert!(picard_sequence(&ep, 0.0, &a, &[0.1, 0.2], 2).is_err());
        assert!(picard_sequence(&ep, 0.0, &a, &[0.0, 0.2, 0.1], 2).is_err());
        assert!(picard_sequence(&ep, 0.0, &a, &[0.0, 2.0], 2).is_err());
    }

    #[test]
    fn identity_is_transported_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ep = rotation(&[1, 2], random_anti_hermitian(&mut rng, 3));
        let one = Element::identity(3);
        let cfg = PicardConfig::default();
        assert!(picard_solve(&ep, 0.0, &one, 1.0, &cfg).unwrap().dist(&one) < 1e-12);
        assert!(
            reference_solve(&ep, 0.0, &one, 1.0, 1e-2)
                .unwrap()
                .dist(&one)
                < 1e-12
        );
    }

    #[test]
    fn picard_agrees_with_rk4_on_m2() {
        let ep = rotation(&[1, 1], k_m2());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Element::random(2, &mut rng, ElementKind::General);
        let p = picard_solve(&ep, 0.0, &a, 1.0, &PicardConfig::default()).unwrap();
        let r = reference_solve(&ep, 0.0, &a, 1.0, 1e-3).unwrap();
        assert!(p.dist(&r) < 1e-8, "{}", p.dist(&r));
        assert!((p.two_norm() - a.two_norm()).abs() < 1e-8);
    }

    #[test]
    fn picard_handles_backward_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ep = rotation(&[1, 2], random_anti_hermitian(&mut rng, 3));
        let a = Element::random(3, &mut rng, ElementKind::General);
        let cfg = PicardConfig::default();
        let fwd = picard_solve(&ep, -0.25, &a, 0.75, &cfg).unwrap();
        let back = picard_solve(&ep, 0.75, &fwd, -0.25, &cfg).unwrap();
        assert!(back.dist(&a) < 1e-8);
    }

    #[test]
    fn picard_reports_exhausted_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ep = rotation(&[1, 2], random_anti_hermitian(&mut rng, 3));
        let a = Element::random(3, &mut rng, ElementKind::General);
        let cfg = PicardConfig {
            max_iterations: 2,
            ..PicardConfig::default()
        };
        assert!(matches!(
            picard_solve(&ep, 0.0, &a, 1.0, &cfg),
            Err(Error::Convergence { iterations: 2, .. })
        ));
    }

    #[test]
    fn rk4_zero_field_is_exact_and_reversible() {
        let ep = constant_path();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = Element::random(3, &mut rng, ElementKind::General);
        assert_eq!(reference_solve(&ep, 0.0, &a, 1.0, 1e-2).unwrap(), a);
        assert!(reference_solve(&ep, 0.0, &a, 1.0, 0.0).is_err());

        let ep = rotation(&[1, 2], random_anti_hermitian(&mut rng, 3));
        let fwd = reference_solve(&ep, 0.1, &a, 0.9, 1e-3).unwrap();
        let back = reference_solve(&ep, 0.9, &fwd, 0.1, 1e-3).unwrap();
        assert!(back.dist(&a) < 1e-8);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let ep = rotation(&[1, 1], k_m2());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = Element::random(2, &mut rng, ElementKind::General);
        let reference = reference_solve(&ep, 0.0, &a, 1.0, 1e-4).unwrap();
        let e1 = reference_solve(&ep, 0.0, &a, 1.0, 1e-2)
            .unwrap()
            .dist(&reference);
        let e2 = reference_solve(&ep, 0.0, &a, 1.0, 5e-3)
            .unwrap()
            .dist(&reference);
        let ratio = e1 / e2;
        assert!((12.0..20.0).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn propagator_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ep = rotation(&[1, 2], random_anti_hermitian(&mut rng, 3));
        let p = Propagator::new(ep, Backend::default());
        let a = Element::random(3, &mut rng, ElementKind::General);
        assert_eq!(p.apply(0.4, 0.4, &a).unwrap(), a);
        let (r, s, t) = (0.1, 0.45, 0.9);
        let two_step = p.apply(t, s, &p.apply(s, r, &a).unwrap()).unwrap();
        assert!(two_step.dist(&p.apply(t, r, &a).unwrap()) < 1e-8);
        let ga = p.g(t, &a).unwrap();
        assert!(p.g_inverse(t, &ga).unwrap().dist(&a) < 1e-8);
        assert!(p.g(t, &a.adjoint()).unwrap().dist(&ga.adjoint()) < 1e-10);
        assert!(
            p.g(t, &Element::identity(3))
                .unwrap()
                .dist(&Element::identity(3))
                < 1e-12
        );
    }

    #[test]
    fn dense_matrix_matches_columnwise_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let ep = rotation(&[1, 1], random_anti_hermitian(&mut rng, 2));
        let p = Propagator::new(ep, Backend::Picard(PicardConfig::default()));
        let a = Element::random(2, &mut rng, ElementKind::General);
        let m = p.matrix(0.7, 0.0).unwrap();
        use crate::algebra::SuperOperator;
        assert!(m.apply(&a).dist(&p.g(0.7, &a).unwrap()) < 1e-12);
    }
}
