//! The unitary implementation of a projection path.
//!
//! `Δ_t = Σᵢ pᵢ(t) ṗᵢ(t)` is anti-Hermitian, and the solution of
//! `u̇_t = −Δ_t u_t`, `u₀ = 1`, conjugates the base system onto the path:
//! `u_t pᵢ(0) u_t* = pᵢ(t)`. The inner automorphism `Ω_t = Ad(u_t)` then
//! intertwines `E₀` and `E_t`, and is compared here with the transport
//! propagator `G_t`.

use crate::algebra::Element;
use crate::error::{Error, Result};
use crate::expectation::ExpectationPath;
use crate::projection::ProjectionPath;
use crate::stepper::magnus4_step;
use crate::transport::Propagator;

/// `Δ_t = Σᵢ pᵢ(t) ṗᵢ(t)`.
pub fn delta(path: &ProjectionPath, t: f64) -> Result<Element> {
    let (sys, d) = path.jet(t)?;
    let mut out = Element::zeros(path.dim());
    for (p, dp) in sys.projections().iter().zip(&d.dots) {
        out += &(p * dp);
    }
    Ok(out)
}

/// Unitaries `u_t` on a time grid.
#[derive(Clone)]
pub struct UnitaryPath {
    path: ProjectionPath,
    step: f64,
    times: Vec<f64>,
    unitaries: Vec<Element>,
    /// `max ‖u_t pᵢ(0) u_t* − pᵢ(t)‖₂` over the grid.
    pub intertwining_residual: f64,
    /// `max ‖u_t* u_t − 1‖₂` over the grid.
    pub unitarity_residual: f64,
}

fn minus_delta(path: &ProjectionPath) -> impl Fn(f64) -> Element + '_ {
    move |t| -&delta(path, t).expect("stepper samples stay inside the path interval")
}

/// Integrates `u̇ = −Δ_t u` from 0 to every grid time with steps of at most
/// `step`, then certifies `u_t pᵢ(0) u_t* = pᵢ(t)` to within `tol`.
pub fn solve_unitary(
    path: &ProjectionPath,
    grid: &[f64],
    step: f64,
    tol: f64,
) -> Result<UnitaryPath> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid("unitary step must be positive"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("grid must be strictly increasing"));
    }
    if !grid.contains(&0.0) {
        return Err(Error::invalid("grid must contain t = 0"));
    }
    for &t in grid {
        path.check_time(t)?;
    }
    let n = path.dim();
    let gen = minus_delta(path);
    let zero = grid.iter().position(|&t| t == 0.0).unwrap();
    let mut unitaries = vec![Element::identity(n); grid.len()];

    // march outward from t = 0 in both directions
    for range in [
        (zero + 1..grid.len()).collect::<Vec<_>>(),
        (0..zero).rev().collect::<Vec<_>>(),
    ] {
        let mut prev = zero;
        for k in range {
            let (t0, t1) = (grid[prev], grid[k]);
            let steps = ((t1 - t0).abs() / step).ceil().max(1.0) as usize;
            let h = (t1 - t0) / steps as f64;
            let mut u = unitaries[prev].clone();
            for j in 0..steps {
                u = magnus4_step(&gen, t0 + j as f64 * h, h, &u);
            }
            unitaries[k] = u;
            prev = k;
        }
    }

    let base = path.evaluate(0.0)?;
    let one = Element::identity(n);
    let mut intertwining_residual: f64 = 0.0;
    let mut worst = (0, 0.0);
    let mut unitarity_residual: f64 = 0.0;
    for (u, &t) in unitaries.iter().zip(grid) {
        unitarity_residual = unitarity_residual.max((&u.adjoint() * u).dist(&one));
        let moved = base.conjugate(u);
        let actual = path.evaluate(t)?;
        for (i, (a, b)) in moved
            .projections()
            .iter()
            .zip(actual.projections())
            .enumerate()
        {
            let r = a.dist(b);
            if r > intertwining_residual {
                intertwining_residual = r;
                worst = (i, t);
            }
        }
    }
    if intertwining_residual > tol {
        return Err(Error::Numerical(format!(
            "u_t p_i(0) u_t* differs from p_i(t) by {intertwining_residual:.3e} \
             (projection {}, t = {})",
            worst.0, worst.1
        )));
    }
    Ok(UnitaryPath {
        path: path.clone(),
        step,
        times: grid.to_vec(),
        unitaries,
        intertwining_residual,
        unitarity_residual,
    })
}

impl UnitaryPath {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn unitaries(&self) -> &[Element] {
        &self.unitaries
    }

    /// `u_t`; off-grid times take one Magnus step from the nearest grid node,
    /// which adds that step's local error.
    pub fn unitary(&self, t: f64) -> Result<Element> {
        self.path.check_time(t)?;
        let k = nearest(&self.times, t);
        if self.times[k] == t {
            return Ok(self.unitaries[k].clone());
        }
        let gen = minus_delta(&self.path);
        let t0 = self.times[k];
        let steps = ((t - t0).abs() / self.step).ceil().max(1.0) as usize;
        let h = (t - t0) / steps as f64;
        let mut u = self.unitaries[k].clone();
        for j in 0..steps {
            u = magnus4_step(&gen, t0 + j as f64 * h, h, &u);
        }
        Ok(u)
    }

    /// `Ω_t(x) = u_t x u_t*`.
    pub fn omega(&self, t: f64, x: &Element) -> Result<Element> {
        let u = self.unitary(t)?;
        u.check_same(x)?;
        Ok(&(&u * x) * &u.adjoint())
    }

    /// `K_J = max ‖u̇_t‖_∞ = max ‖Δ_t u_t‖_∞` over the grid.
    pub fn derivative_bound(&self) -> Result<f64> {
        let mut best: f64 = 0.0;
        for (u, &t) in self.unitaries.iter().zip(&self.times) {
            best = best.max((&delta(&self.path, t)? * u).op_norm());
        }
        Ok(best)
    }
}

fn nearest(times: &[f64], t: f64) -> usize {
    let mut best = 0;
    for (k, &s) in times.iter().enumerate() {
        if (s - t).abs() < (times[best] - t).abs() {
            best = k;
        }
    }
    best
}

/// Discrepancies between `Ω_t` and `G_t` at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct OmegaComparison {
    pub t: f64,
    /// `max ‖Ω_t(x) − G_t(x)‖₂` over `x ∈ B₀` (samples pinched by `E₀`).
    pub on_range: f64,
    /// Same over the raw samples.
    pub global: f64,
    pub samples: usize,
}

pub fn compare_with_transport(
    up: &UnitaryPath,
    propagator: &Propagator,
    t: f64,
    samples: &[Element],
) -> Result<OmegaComparison> {
    if samples.is_empty() {
        return Err(Error::invalid("comparison needs at least one sample"));
    }
    let ep: &ExpectationPath = propagator.expectation_path();
    let e0 = ep.frame(0.0)?;
    let pinched: Vec<Element> = samples.iter().map(|x| e0.expectation(x)).collect();
    let mut all = pinched.clone();
    all.extend(samples.iter().cloned());
    let transported = propagator.apply_many(t, 0.0, &all)?;
    let u = up.unitary(t)?;
    let ua = u.adjoint();
    let gaps: Vec<f64> = all
        .iter()
        .zip(&transported)
        .map(|(x, g)| (&(&u * x) * &ua).dist(g))
        .collect();
    let (on_range, global) = gaps.split_at(pinched.len());
    Ok(OmegaComparison {
        t,
        on_range: on_range.iter().cloned().fold(0.0, f64::max),
        global: global.iter().cloned().fold(0.0, f64::max),
        samples: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::ElementKind;
    use crate::projection::{
        linspace, make_rotation_path, square_summable_constant, Generator, ProjectionSystem,
    };
    use crate::transport::Backend;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_anti_hermitian(rng: &mut ChaCha8Rng, n: usize) -> Element {
        let g = Element::random(n, rng, ElementKind::General);
        (&g - &g.adjoint()).scale(0.5)
    }

    fn rotation(ranks: &[usize], k: Element) -> ProjectionPath {
        make_rotation_path(
            ProjectionSystem::from_ranks(ranks).unwrap(),
            Generator::constant(k),
            (0.0, 1.0),
            1e-3,
        )
        .unwrap()
    }

    fn k_m2() -> Element {
        Element::from_real_rows(&[&[0.0, -1.0], &[1.0, 0.0]]).unwrap()
    }

    #[test]
    fn delta_examples() {
        let constant =
            ProjectionPath::constant(ProjectionSystem::from_ranks(&[1, 1]).unwrap(), (0.0, 1.0))
                .unwrap();
        assert_eq!(delta(&constant, 0.5).unwrap().two_norm(), 0.0);

        let path = rotation(&[1, 1], k_m2());
        for &t in &[0.0, 0.3, 0.8] {
            let d = delta(&path, t).unwrap();
            assert!((&d + &d.adjoint()).two_norm() < 1e-10);
        }
        // at t = 0: Δ₀ = Σ pᵢ[K, pᵢ]
        let k = k_m2();
        let base = ProjectionSystem::from_ranks(&[1, 1]).unwrap();
        let mut direct = Element::zeros(2);
        for p in base.projections() {
            direct += &(p * &k.commutator(p));
        }
        let d0 = delta(&path, 0.0).unwrap();
        assert!(d0.dist(&direct) < 1e-15);
        assert!(d0.op_norm() <= 2.0 * k.op_norm() + 1e-12);
    }

    #[test]
    fn constant_path_has_trivial_unitaries() {
        let constant =
            ProjectionPath::constant(ProjectionSystem::from_ranks(&[1, 2]).unwrap(), (0.0, 1.0))
                .unwrap();
        let up = solve_unitary(&constant, &linspace(0.0, 1.0, 11), 1e-3, 1e-8).unwrap();
        for u in up.unitaries() {
            assert_eq!(u, &Element::identity(3));
        }
    }

    #[test]
    fn unitaries_implement_the_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let path = rotation(&[1, 1, 2], random_anti_hermitian(&mut rng, 4));
        let up = solve_unitary(&path, &linspace(0.0, 1.0, 101), 1e-3, 1e-8).unwrap();
        assert!(up.intertwining_residual < 1e-8);
        assert!(up.unitarity_residual < 1e-9);
    }

    #[test]
    fn solve_unitary_validates_grid() {
        let path = rotation(&[1, 1], k_m2());
        assert!(solve_unitary(&path, &[0.1, 0.5], 1e-3, 1e-8).is_err());
        assert!(solve_unitary(&path, &[0.0, 0.5, 0.4], 1e-3, 1e-8).is_err());
        assert!(solve_unitary(&path, &[0.0, 2.0], 1e-3, 1e-8).is_err());
    }

    #[test]
    fn certificate_failure_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let path = rotation(&[1, 2], random_anti_hermitian(&mut rng, 3));
        // one giant step leaves an O(1) intertwining error
        let err = solve_unitary(&path, &[0.0, 1.0], 10.0, 1e-14);
        assert!(matches!(err, Err(Error::Numerical(_))));
    }

    #[test]
    fn square_summable_bound_via_unitary_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let path = rotation(&[1, 2], random_anti_hermitian(&mut rng, 3));
        let up = solve_unitary(&path, &linspace(0.0, 1.0, 51), 1e-3, 1e-8).unwrap();
        let k_j = up.derivative_bound().unwrap();
        let d = square_summable_constant(&path, (0.0, 1.0), 51).unwrap();
        assert!(d.value <= 4.0 * k_j * k_j + 1e-12);
    }

    #[test]
    fn omega_intertwines_and_is_multiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let path = rotation(&[1, 2], random_anti_hermitian(&mut rng, 3));
        let ep = ExpectationPath::new(path.clone());
        let up = solve_unitary(&path, &linspace(0.0, 1.0, 11), 1e-3, 1e-8).unwrap();
        let one = Element::identity(3);
        for &t in &[0.3, 0.7, 0.45] {
            assert!(up.omega(t, &one).unwrap().dist(&one) < 1e-12);
            let x = Element::random(3, &mut rng, ElementKind::General);
            let y = Element::random(3, &mut rng, ElementKind::General);
            let u = up.unitary(t).unwrap();
            let inv = (&(&u.adjoint() * &x) * &u).clone();
            let lhs = up.omega(t, &ep.expectation(0.0, &inv).unwrap()).unwrap();
            assert!(lhs.dist(&ep.expectation(t, &x).unwrap()) < 1e-8);
            let xy = up.omega(t, &(&x * &y)).unwrap();
            let prod = &up.omega(t, &x).unwrap() * &up.omega(t, &y).unwrap();
            assert!(xy.dist(&prod) < 1e-12);
        }
    }

    #[test]
    fn omega_versus_transport() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<Element> = (0..5)
            .map(|_| Element::random(3, &mut rng, ElementKind::General))
            .collect();

        let path = rotation(&[1, 2], random_anti_hermitian(&mut rng, 3));
        let up = solve_unitary(&path, &linspace(0.0, 1.0, 11), 1e-3, 1e-8).unwrap();
        let g = Propagator::new(ExpectationPath::new(path), Backend::default());
        let two = compare_with_transport(&up, &g, 1.0, &samples).unwrap();
        assert!(two.on_range < 1e-7 && two.global < 1e-7, "{two:?}");

        let path = rotation(&[1, 1, 1], random_anti_hermitian(&mut rng, 3));
        let up = solve_unitary(&path, &linspace(0.0, 1.0, 11), 1e-3, 1e-8).unwrap();
        let g = Propagator::new(ExpectationPath::new(path), Backend::default());
        let three = compare_with_transport(&up, &g, 1.0, &samples).unwrap();
        assert!(three.on_range < 1e-7, "{three:?}");
        assert!(three.global > 0.0);
    }
}
