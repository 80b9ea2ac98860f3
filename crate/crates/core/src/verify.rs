//! Residual checks for the identities satisfied by the transport propagators.
//!
//! Every check returns a [`ResidualReport`]; a report passes iff its residual
//! is at most its threshold. Reports without a threshold are informational.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::algebra::{spectral_norm, Element, ElementKind};
use crate::error::Result;
use crate::expectation::{estimate_hypothesis_constant, verify_codiagonal, ExpectationPath};
use crate::projection::linspace;
use crate::scenario::{Scenario, Setup, Stream};
use crate::transport::{picard_propagate, reference_solve, Backend, PicardConfig, Propagator};
use crate::unitary::{compare_with_transport, solve_unitary};

/// Pass/fail thresholds. The identities are exact; thresholds budget
/// floating-point and discretization error separately.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Pointwise algebraic identities.
    pub algebraic: f64,
    /// Codiagonal identity and `E dE E = 0`.
    pub codiagonal: f64,
    /// Propagator laws: isometry, identity, cocycle, inverse, unitarity of `G_t`.
    pub propagator: f64,
    /// Quantities carried through an integrator.
    pub integrated: f64,
    /// `u_t pᵢ(0) u_t* = pᵢ(t)`.
    pub path_intertwining: f64,
    /// `u_t* u_t = 1`.
    pub unitarity: f64,
    /// Finite-difference witnesses.
    pub finite_difference: f64,
    /// Allowed relative excess of a measured contraction ratio over `k₀`.
    pub contraction_slack: f64,
    /// Relative change of the Lipschitz-in-`s` slope between the two finest steps.
    pub slope_stability: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            algebraic: 1e-10,
            codiagonal: 1e-9,
            propagator: 1e-8,
            integrated: 1e-7,
            path_intertwining: 1e-8,
            unitarity: 1e-9,
            finite_difference: 1e-6,
            contraction_slack: 0.1,
            slope_stability: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualReport {
    pub name: String,
    pub residual: f64,
    /// `None` marks an informational report.
    pub threshold: Option<f64>,
    pub pass: bool,
    pub context: Vec<(String, String)>,
}

impl ResidualReport {
    pub fn new(name: &str, residual: f64, threshold: Option<f64>) -> Self {
        let pass = match threshold {
            Some(th) => residual <= th,
            None => true,
        };
        Self {
            name: name.to_string(),
            residual,
            threshold,
            pass,
            context: vec![],
        }
    }

    pub fn thresholded(name: &str, residual: f64, threshold: f64) -> Self {
        Self::new(name, residual, Some(threshold))
    }

    pub fn info(name: &str, value: f64) -> Self {
        Self::new(name, value, None)
    }

    /// A check that could not run; carries the error instead of a residual.
    pub fn failed(name: &str, err: &crate::Error) -> Self {
        let mut r = Self::new(name, f64::INFINITY, Some(0.0));
        r.pass = false;
        r.context.push(("error".into(), err.to_string()));
        r
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.context.push((key.to_string(), value.to_string()));
        self
    }

    pub fn status(&self) -> &'static str {
        match (self.threshold, self.pass) {
            (None, _) => "info",
            (Some(_), true) => "pass",
            (Some(_), false) => "fail",
        }
    }

    /// `name status residual threshold`, floats with 17 significant digits.
    pub fn line(&self) -> String {
        let th = match self.threshold {
            Some(t) => format!("{t:.16e}"),
            None => "-".to_string(),
        };
        let mut s = format!(
            "{} {} {:.16e} {}",
            self.name,
            self.status(),
            self.residual,
            th
        );
        if !self.context.is_empty() {
            s.push_str(" #");
            for (k, v) in &self.context {
                let _ = write!(s, " {k}={v}");
            }
        }
        s
    }
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

/// `max ‖G_t E₀ G_t⁻¹(x) − E_t(x)‖₂` over the samples.
pub fn check_intertwining(
    p: &Propagator,
    ep: &ExpectationPath,
    t: f64,
    samples: &[Element],
    threshold: f64,
) -> Result<ResidualReport> {
    let back = p.apply_many(0.0, t, samples)?;
    let e0 = ep.frame(0.0)?;
    let pinched: Vec<Element> = back.iter().map(|x| e0.expectation(x)).collect();
    let forward = p.apply_many(t, 0.0, &pinched)?;
    let et = ep.frame(t)?;
    let residual = max_of(
        samples
            .iter()
            .zip(&forward)
            .map(|(x, g)| g.dist(&et.expectation(x))),
    );
    Ok(
        ResidualReport::thresholded("intertwining", residual, threshold)
            .with("t", t)
            .with("samples", samples.len()),
    )
}

/// Multiplicativity of `G_t` on `B₀` and the range inclusion `G_t(B₀) ⊆ B_t`.
/// `pairs` must lie in `B₀`.
pub fn check_multiplicativity(
    p: &Propagator,
    t: f64,
    pairs: &[(Element, Element)],
    threshold: f64,
) -> Result<[ResidualReport; 2]> {
    let ep = p.expectation_path();
    let mut batch = Vec::with_capacity(3 * pairs.len());
    for (a, b) in pairs {
        batch.push(a.clone());
        batch.push(b.clone());
        batch.push(a * b);
    }
    let out = p.apply_many(t, 0.0, &batch)?;
    let et = ep.frame(t)?;
    let mut mult: f64 = 0.0;
    let mut range: f64 = 0.0;
    for chunk in out.chunks(3) {
        let (ga, gb, gab) = (&chunk[0], &chunk[1], &chunk[2]);
        mult = mult.max(gab.dist(&(ga * gb)));
        for g in chunk {
            range = range.max(et.expectation(g).dist(g));
        }
    }
    Ok([
        ResidualReport::thresholded("multiplicativity", mult, threshold)
            .with("t", t)
            .with("pairs", pairs.len()),
        ResidualReport::thresholded("range_b0_to_bt", range, threshold)
            .with("t", t)
            .with("pairs", pairs.len()),
    ])
}

/// Solution values `α(t_k)` along `grid` (starting at `grid[0] = s`).
fn march(p: &Propagator, grid: &[f64], a: &Element) -> Result<Vec<Element>> {
    let mut out = vec![a.clone()];
    for w in grid.windows(2) {
        let next = p.apply(w[1], w[0], out.last().unwrap())?;
        out.push(next);
    }
    Ok(out)
}

/// Central-difference step for the finite-difference witnesses.
const FD_STEP: f64 = 1e-4;

/// Central differences of `t ↦ f(t, G_{t,t₀}(x))` at `t₀` for a batch of `x`,
/// shrinking the step near the interval ends.
fn fd_derivative(
    p: &Propagator,
    t: f64,
    xs: &[Element],
    f: impl Fn(f64, &Element) -> Result<Element>,
) -> Result<Vec<Element>> {
    let (lo, hi) = p.expectation_path().interval();
    let h = FD_STEP.min(t - lo).min(hi - t);
    let apply_f =
        |u: f64, ys: &[Element]| -> Result<Vec<Element>> { ys.iter().map(|y| f(u, y)).collect() };
    if h <= 0.0 {
        // one-sided second-order difference at an endpoint
        let h = if t - lo <= 0.0 { FD_STEP } else { -FD_STEP };
        let f0 = apply_f(t, xs)?;
        let f1 = apply_f(t + h, &p.apply_many(t + h, t, xs)?)?;
        let f2 = apply_f(t + 2.0 * h, &p.apply_many(t + 2.0 * h, t, xs)?)?;
        return Ok(f0
            .iter()
            .zip(&f1)
            .zip(&f2)
            .map(|((a, b), c)| ((b - a).scale(4.0) - (c - a)).scale(0.5 / h))
            .collect());
    }
    let plus = apply_f(t + h, &p.apply_many(t + h, t, xs)?)?;
    let minus = apply_f(t - h, &p.apply_many(t - h, t, xs)?)?;
    Ok(plus
        .iter()
        .zip(&minus)
        .map(|(a, b)| (a - b).scale(0.5 / h))
        .collect())
}

/// `β = E(α)` solves the transport equation whenever `α` does; solutions
/// starting in `B_s` (resp. `ker E_s`) stay in `B_t` (resp. `ker E_t`).
pub fn check_projected_solution(
    p: &Propagator,
    ep: &ExpectationPath,
    grid: &[f64],
    a: &Element,
    thresholds: &Thresholds,
) -> Result<Vec<ResidualReport>> {
    let alpha = march(p, grid, a)?;
    let mut identity: f64 = 0.0;
    let mut fd: f64 = 0.0;
    let mut membership: f64 = 0.0;
    let mut kernel: f64 = 0.0;
    for (x, &t) in alpha.iter().zip(grid) {
        let f = ep.frame(t)?;
        let beta = f.expectation(x);
        let h_beta = f.commutator_field(&beta);
        // β̇ = dE(α) + E(α̇) with α̇ = H(α)
        let beta_dot = f.d_expectation(x) + f.expectation(&f.commutator_field(x));
        identity = identity.max(beta_dot.dist(&h_beta));
        let witness = fd_derivative(p, t, std::slice::from_ref(x), |u, y| ep.expectation(u, y))?;
        fd = fd.max(witness[0].dist(&h_beta));
        membership = membership.max(beta.dist(x));
        kernel = kernel.max(beta.two_norm());
    }
    let s = grid[0];
    let scale = a.two_norm().max(1.0);
    let es_a = ep.expectation(s, a)?;
    let mut reports = vec![
        ResidualReport::thresholded("projected_solution", identity, thresholds.algebraic * scale)
            .with("grid", grid.len()),
        ResidualReport::thresholded(
            "projected_solution_fd",
            fd,
            thresholds.finite_difference * scale,
        )
        .with("grid", grid.len())
        .with("h", FD_STEP),
    ];
    if es_a.dist(a) <= 1e-12 * scale {
        reports.push(
            ResidualReport::thresholded("range_invariance", membership, thresholds.integrated)
                .with("grid", grid.len()),
        );
    }
    if es_a.two_norm() <= 1e-12 * scale {
        reports.push(
            ResidualReport::thresholded("kernel_invariance", kernel, thresholds.integrated)
                .with("grid", grid.len()),
        );
    }
    Ok(reports)
}

/// For `b ∈ B_s` and `E_s(z) = 0`: `E_t(β̇) = 0` and `ż ∈ B_t` along the grid.
pub fn check_derivative_orthogonality(
    p: &Propagator,
    ep: &ExpectationPath,
    grid: &[f64],
    b: &Element,
    z: &Element,
    thresholds: &Thresholds,
) -> Result<Vec<ResidualReport>> {
    let betas = march(p, grid, b)?;
    let zs = march(p, grid, z)?;
    let mut range: f64 = 0.0;
    let mut kernel: f64 = 0.0;
    let mut fd: f64 = 0.0;
    let mut inner: f64 = 0.0;
    for ((beta, zt), &t) in betas.iter().zip(&zs).zip(grid) {
        let f = ep.frame(t)?;
        let beta_dot = f.commutator_field(beta);
        let z_dot = f.commutator_field(zt);
        range = range.max(f.expectation(&beta_dot).two_norm());
        kernel = kernel.max(f.expectation(&z_dot).dist(&z_dot));
        let id = |_: f64, y: &Element| Ok(y.clone());
        let witness = fd_derivative(p, t, &[beta.clone(), zt.clone()], id)?;
        fd = fd
            .max(witness[0].dist(&beta_dot))
            .max(witness[1].dist(&z_dot));
        inner = inner.max(beta_dot.inner_unchecked(&z_dot).norm());
    }
    let scale = b.two_norm().max(z.two_norm()).max(1.0);
    Ok(vec![
        ResidualReport::thresholded(
            "derivative_orthogonality_range",
            range,
            thresholds.integrated,
        )
        .with("grid", grid.len()),
        ResidualReport::thresholded(
            "derivative_orthogonality_kernel",
            kernel,
            thresholds.integrated,
        )
        .with("grid", grid.len()),
        ResidualReport::thresholded(
            "derivative_orthogonality_fd",
            fd,
            thresholds.finite_difference * scale,
        )
        .with("h", FD_STEP),
        ResidualReport::info("derivative_inner_product", inner),
    ])
}

/// Names of the checks run by [`run_full_suite`], in order.
pub const CHECK_NAMES: &[&str] = &[
    "codiagonal",
    "codiagonal_corner",
    "symmetry_identity",
    "transport_antisymmetry",
    "derivative_adjoint",
    "expectation_projection",
    "hypothesis_certificate",
    "picard_contraction",
    "picard_vs_reference",
    "isometry",
    "identity",
    "cocycle",
    "inverse",
    "unitary_superoperator",
    "lipschitz_in_s",
    "weak_c1",
    "unital",
    "star_preserving",
    "intertwining",
    "multiplicativity",
    "range_b0_to_bt",
    "projected_solution",
    "projected_solution_fd",
    "range_invariance",
    "kernel_invariance",
    "derivative_orthogonality_range",
    "derivative_orthogonality_kernel",
    "derivative_orthogonality_fd",
    "derivative_inner_product",
    "unitary_intertwining",
    "unitarity",
    "omega_vs_g_range",
    "omega_vs_g_global",
];

/// Runs every check for a scenario. Failures of individual checks are
/// recorded in the returned list; only an invalid scenario is an error.
pub fn run_full_suite(scenario: &Scenario) -> Result<Vec<ResidualReport>> {
    let setup = scenario.build()?;
    let mut suite = Suite {
        scenario,
        setup: &setup,
        reports: vec![],
    };
    suite.run();
    Ok(suite.reports)
}

struct Suite<'a> {
    scenario: &'a Scenario,
    setup: &'a Setup,
    reports: Vec<ResidualReport>,
}

impl Suite<'_> {
    fn record(&mut self, names: &[&str], result: Result<Vec<ResidualReport>>) {
        match result {
            Ok(r) => self.reports.extend(r),
            Err(e) => self
                .reports
                .extend(names.iter().map(|n| ResidualReport::failed(n, &e))),
        }
    }

    fn run(&mut self) {
        self.record(
            &["codiagonal", "codiagonal_corner"],
            self.pointwise_codiagonal(),
        );
        self.record(
            &[
                "symmetry_identity",
                "transport_antisymmetry",
                "derivative_adjoint",
                "expectation_projection",
            ],
            self.pointwise_identities(),
        );
        self.record(&["hypothesis_certificate"], self.hypothesis());
        self.record(
            &["picard_contraction", "picard_vs_reference"],
            self.picard(),
        );
        self.record(
            &[
                "isometry",
                "identity",
                "cocycle",
                "inverse",
                "unitary_superoperator",
            ],
            self.propagator_laws(),
        );
        self.record(&["lipschitz_in_s"], self.lipschitz());
        self.record(
            &["weak_c1", "unital", "star_preserving"],
            self.basic_properties(),
        );
        self.record(&["intertwining"], self.intertwining());
        self.record(
            &["multiplicativity", "range_b0_to_bt"],
            self.multiplicativity(),
        );
        self.record(
            &[
                "projected_solution",
                "projected_solution_fd",
                "range_invariance",
                "kernel_invariance",
            ],
            self.projected(),
        );
        self.record(
            &[
                "derivative_orthogonality_range",
                "derivative_orthogonality_kernel",
                "derivative_orthogonality_fd",
                "derivative_inner_product",
            ],
            self.orthogonality(),
        );
        self.record(&["unitary_intertwining", "unitarity"], self.unitary());
        self.record(&["omega_vs_g_range", "omega_vs_g_global"], self.omega());
    }

    fn th(&self) -> &Thresholds {
        &self.scenario.thresholds
    }

    fn n(&self) -> usize {
        self.setup.ep.dim()
    }

    fn samples(&self, count: usize, offset: u64) -> Vec<Element> {
        let mut rng = self.scenario.rng(Stream::Suite, offset);
        (0..count)
            .map(|_| Element::random(self.n(), &mut rng, ElementKind::General))
            .collect()
    }

    /// Sample times spread over the interval, deterministic in the seed.
    fn times(&self, count: usize, offset: u64) -> Vec<f64> {
        use rand::Rng;
        let (lo, hi) = self.setup.ep.interval();
        let mut rng = self.scenario.rng(Stream::Suite, offset);
        (0..count).map(|_| rng.gen_range(lo..=hi)).collect()
    }

    fn pointwise_codiagonal(&self) -> Result<Vec<ResidualReport>> {
        let count = self.scenario.samples.pointwise;
        let xs = self.samples(count, 1);
        let ts = self.times(count, 2);
        let mut codiag: f64 = 0.0;
        let mut corner: f64 = 0.0;
        for (x, &t) in xs.iter().zip(&ts) {
            let r = verify_codiagonal(&self.setup.ep, t, x)?;
            codiag = codiag.max(r.codiagonal / x.two_norm());
            corner = corner.max(r.corner / x.two_norm());
        }
        Ok(vec![
            ResidualReport::thresholded("codiagonal", codiag, self.th().codiagonal)
                .with("samples", count),
            ResidualReport::thresholded("codiagonal_corner", corner, self.th().codiagonal)
                .with("samples", count),
        ])
    }

    fn pointwise_identities(&self) -> Result<Vec<ResidualReport>> {
        let count = self.scenario.samples.pointwise;
        let xs = self.samples(count, 3);
        let ys = self.samples(count, 4);
        let ts = self.times(count, 5);
        let (mut sym, mut anti, mut adj, mut proj) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for ((x, y), &t) in xs.iter().zip(&ys).zip(&ts) {
            let f = self.setup.ep.frame(t)?;
            let (xn, yn) = (x.two_norm(), y.two_norm());
            let hx = f.commutator_field(x);
            sym = sym.max((hx.two_norm() - f.d_expectation(x).two_norm()).abs() / xn);
            let lhs = hx.inner_unchecked(y);
            let rhs = x.inner_unchecked(&f.commutator_field(y));
            anti = anti.max((lhs + rhs).norm() / (xn * yn));
            adj = adj.max(
                f.d_expectation(&x.adjoint())
                    .dist(&f.d_expectation(x).adjoint())
                    / xn,
            );
            let e = f.expectation_matrix();
            let idem = spectral_norm(&(&e * &e - &e));
            let herm = spectral_norm(&(e.adjoint() - &e));
            proj = proj.max(idem.max(herm));
        }
        let th = self.th().algebraic;
        Ok(vec![
            ResidualReport::thresholded("symmetry_identity", sym, th).with("samples", count),
            ResidualReport::thresholded("transport_antisymmetry", anti, th).with("samples", count),
            ResidualReport::thresholded("derivative_adjoint", adj, th).with("samples", count),
            ResidualReport::thresholded("expectation_projection", proj, th).with("samples", count),
        ])
    }

    fn hypothesis(&self) -> Result<Vec<ResidualReport>> {
        let s = self.scenario;
        let j = self.setup.ep.interval();
        let seed = s.stream_seed(Stream::Samples);
        let est = match estimate_hypothesis_constant(
            &self.setup.ep,
            j,
            s.samples.count,
            s.samples.constant_grid,
            seed,
        ) {
            Ok(e) => e,
            Err(crate::Error::Numerical(msg)) => {
                return Ok(vec![ResidualReport::thresholded(
                    "hypothesis_certificate",
                    f64::INFINITY,
                    0.0,
                )
                .with("error", msg)])
            }
            Err(e) => return Err(e),
        };
        Ok(vec![ResidualReport::thresholded(
            "hypothesis_certificate",
            (est.empirical - est.bound).max(0.0),
            est.tolerance(),
        )
        .with("empirical", format!("{:.16e}", est.empirical))
        .with("bound", format!("{:.16e}", est.bound))
        .with("d_j", format!("{:.16e}", est.de_norm))])
    }

    fn picard_config(&self) -> PicardConfig {
        match self.scenario.backend() {
            Backend::Picard(cfg) => cfg,
            Backend::Reference { .. } => self.scenario.solver.picard,
        }
    }

    fn picard(&self) -> Result<Vec<ResidualReport>> {
        let cfg = self.picard_config();
        let (_, hi) = self.setup.ep.interval();
        let xs = self.samples(self.scenario.samples.solves, 6);
        let n = self.n();
        let mut init = nalgebra::DMatrix::zeros(n * n, xs.len());
        for (j, x) in xs.iter().enumerate() {
            init.column_mut(j).copy_from_slice(x.vec());
        }
        let (state, report) = picard_propagate(&self.setup.ep, 0.0, hi, &init, &cfg)?;
        let mut ratio: f64 = 0.0;
        for sub in &report.subintervals {
            // increments[n] = sup‖S_{n+1} − S_n‖; ratios n = 1..6
            for r in sub.contraction_ratios().into_iter().take(6) {
                ratio = ratio.max(r);
            }
        }
        let mut gap: f64 = 0.0;
        let step = self.scenario.solver.step;
        for (j, x) in xs.iter().enumerate() {
            let p = Element::from_vec(n, state.column(j).as_slice())?;
            let r = reference_solve(&self.setup.ep, 0.0, x, hi, step)?;
            gap = gap.max(p.dist(&r));
        }
        Ok(vec![
            ResidualReport::thresholded(
                "picard_contraction",
                ratio,
                cfg.contraction_target * (1.0 + self.th().contraction_slack),
            )
            .with("subintervals", report.subintervals.len())
            .with("c_j", format!("{:.16e}", report.constant)),
            ResidualReport::thresholded("picard_vs_reference", gap, self.th().integrated)
                .with("t", hi)
                .with("samples", xs.len()),
        ])
    }

    fn propagator_laws(&self) -> Result<Vec<ResidualReport>> {
        let p = &self.setup.propagator;
        let (lo, hi) = self.setup.ep.interval();
        let xs = self.samples(self.scenario.samples.solves, 7);
        let th = self.th().propagator;
        let mut iso: f64 = 0.0;
        let mut ident: f64 = 0.0;
        let mut cocycle: f64 = 0.0;
        let mut inverse: f64 = 0.0;
        let (r, s, t) = (lo, lo + 0.4 * (hi - lo), hi);
        for &tt in &self.scenario.samples.times {
            let g = p.apply_many(tt, 0.0, &xs)?;
            let back = p.apply_many(0.0, tt, &g)?;
            for ((x, gx), bx) in xs.iter().zip(&g).zip(&back) {
                iso = iso.max((gx.two_norm() - x.two_norm()).abs());
                inverse = inverse.max(bx.dist(x));
            }
            for (x, y) in xs.iter().zip(p.apply_many(tt, tt, &xs)?) {
                ident = ident.max(x.dist(&y));
            }
        }
        let direct = p.apply_many(t, r, &xs)?;
        let two = p.apply_many(t, s, &p.apply_many(s, r, &xs)?)?;
        for (a, b) in direct.iter().zip(&two) {
            cocycle = cocycle.max(a.dist(b));
        }
        let m = p.matrix(hi, 0.0)?.as_matrix().clone();
        let n2 = m.nrows();
        let unitary = spectral_norm(&(m.adjoint() * &m - nalgebra::DMatrix::identity(n2, n2)));
        Ok(vec![
            ResidualReport::thresholded("isometry", iso, th).with("samples", xs.len()),
            ResidualReport::thresholded("identity", ident, th),
            ResidualReport::thresholded("cocycle", cocycle, th)
                .with("r", r)
                .with("s", s)
                .with("t", t),
            ResidualReport::thresholded("inverse", inverse, th),
            ResidualReport::thresholded("unitary_superoperator", unitary, th).with("t", hi),
        ])
    }

    fn lipschitz(&self) -> Result<Vec<ResidualReport>> {
        let p = &self.setup.propagator;
        let (lo, hi) = self.setup.ep.interval();
        let s = 0.5 * (lo + hi);
        let a = self.samples(1, 8).remove(0);
        let base = p.apply(hi, s, &a)?;
        let mut slopes = vec![];
        for h in [1e-2, 1e-3, 1e-4] {
            slopes.push(p.apply(hi, s + h, &a)?.dist(&base) / h);
        }
        let limit = self.setup.ep.commutator_field(s, &a)?.two_norm();
        let (fine, finer) = (slopes[1], slopes[2]);
        let residual = if finer > 0.0 {
            (fine - finer).abs() / finer
        } else {
            fine
        };
        Ok(vec![ResidualReport::thresholded(
            "lipschitz_in_s",
            residual,
            self.th().slope_stability,
        )
        .with(
            "slopes",
            format!("{:.6e}/{:.6e}/{:.6e}", slopes[0], slopes[1], slopes[2]),
        )
        .with("limit", format!("{limit:.6e}"))])
    }

    fn basic_properties(&self) -> Result<Vec<ResidualReport>> {
        let p = &self.setup.propagator;
        let xs = self.samples(self.scenario.samples.solves, 9);
        let n = self.n();
        let one = Element::identity(n);
        let mut weak: f64 = 0.0;
        let mut unital: f64 = 0.0;
        let mut star: f64 = 0.0;
        for &t in &self.scenario.samples.times {
            let mut batch = xs.clone();
            batch.extend(xs.iter().map(Element::adjoint));
            batch.push(one.clone());
            let g = p.apply_many(t, 0.0, &batch)?;
            unital = unital.max(g.last().unwrap().dist(&one));
            for (k, x) in xs.iter().enumerate() {
                star = star.max(g[xs.len() + k].dist(&g[k].adjoint()) / x.two_norm());
            }
            let f = self.setup.ep.frame(t)?;
            let gs = &g[..xs.len()];
            let fd = fd_derivative(p, t, gs, |_, y| Ok(y.clone()))?;
            for (d, gx) in fd.iter().zip(gs) {
                weak = weak.max(d.dist(&f.commutator_field(gx)));
            }
        }
        let scale = max_of(xs.iter().map(Element::two_norm)).max(1.0);
        Ok(vec![
            ResidualReport::thresholded("weak_c1", weak, self.th().finite_difference * scale)
                .with("h", FD_STEP),
            ResidualReport::thresholded("unital", unital, self.th().propagator),
            ResidualReport::thresholded("star_preserving", star, self.th().algebraic),
        ])
    }

    fn intertwining(&self) -> Result<Vec<ResidualReport>> {
        let xs = self.samples(self.scenario.samples.count, 10);
        let mut worst: Option<ResidualReport> = None;
        for &t in &self.scenario.samples.times {
            let r = check_intertwining(
                &self.setup.propagator,
                &self.setup.ep,
                t,
                &xs,
                self.th().integrated,
            )?;
            if worst.as_ref().is_none_or(|w| r.residual > w.residual) {
                worst = Some(r);
            }
        }
        Ok(worst.into_iter().collect())
    }

    fn multiplicativity(&self) -> Result<Vec<ResidualReport>> {
        let count = self.scenario.samples.count;
        let e0 = self.setup.ep.frame(0.0)?;
        let pairs: Vec<(Element, Element)> = self
            .samples(count, 11)
            .into_iter()
            .zip(self.samples(count, 12))
            .map(|(a, b)| (e0.expectation(&a), e0.expectation(&b)))
            .collect();
        let mut out: Vec<ResidualReport> = vec![];
        for &t in &self.scenario.samples.times {
            let rs =
                check_multiplicativity(&self.setup.propagator, t, &pairs, self.th().integrated)?;
            for r in rs {
                match out.iter_mut().find(|o| o.name == r.name) {
                    Some(o) if o.residual >= r.residual => {}
                    Some(o) => *o = r,
                    None => out.push(r),
                }
            }
        }
        Ok(out)
    }

    fn suite_grid(&self) -> Vec<f64> {
        let (_, hi) = self.setup.ep.interval();
        linspace(0.0, hi, self.scenario.samples.suite_grid)
    }

    fn projected(&self) -> Result<Vec<ResidualReport>> {
        let grid = self.suite_grid();
        let e0 = self.setup.ep.frame(0.0)?;
        let a = self.samples(1, 13).remove(0);
        let in_range = e0.expectation(&a);
        let in_kernel = &a - &in_range;
        let mut out: Vec<ResidualReport> = vec![];
        for x in [&a, &in_range, &in_kernel] {
            for r in check_projected_solution(
                &self.setup.propagator,
                &self.setup.ep,
                &grid,
                x,
                self.th(),
            )? {
                match out.iter_mut().find(|o| o.name == r.name) {
                    Some(o) if o.residual >= r.residual => {}
                    Some(o) => *o = r,
                    None => out.push(r),
                }
            }
        }
        Ok(out)
    }

    fn orthogonality(&self) -> Result<Vec<ResidualReport>> {
        let grid = self.suite_grid();
        let e0 = self.setup.ep.frame(0.0)?;
        let a = self.samples(1, 14).remove(0);
        let b = e0.expectation(&a);
        let z = &a - &b;
        check_derivative_orthogonality(
            &self.setup.propagator,
            &self.setup.ep,
            &grid,
            &b,
            &z,
            self.th(),
        )
    }

    fn unitary_grid(&self) -> Vec<f64> {
        let (lo, hi) = self.setup.ep.interval();
        let step = self.scenario.path.step;
        let mut grid: Vec<f64> = vec![];
        let below = (-lo / step).round() as i64;
        let above = (hi / step).round() as i64;
        for k in -below..=above {
            grid.push((k as f64 * step).clamp(lo, hi));
        }
        grid.dedup();
        grid
    }

    fn unitary(&self) -> Result<Vec<ResidualReport>> {
        let grid = self.unitary_grid();
        let path = self.setup.ep.path();
        let up = solve_unitary(path, &grid, self.scenario.path.step, f64::INFINITY)?;
        Ok(vec![
            ResidualReport::thresholded(
                "unitary_intertwining",
                up.intertwining_residual,
                self.th().path_intertwining,
            )
            .with("grid", grid.len()),
            ResidualReport::thresholded("unitarity", up.unitarity_residual, self.th().unitarity)
                .with("grid", grid.len()),
        ])
    }

    fn omega(&self) -> Result<Vec<ResidualReport>> {
        let path = self.setup.ep.path();
        let mut grid: Vec<f64> = self.scenario.samples.times.clone();
        grid.push(0.0);
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let up = solve_unitary(path, &grid, self.scenario.path.step, f64::INFINITY)?;
        let xs = self.samples(self.scenario.samples.solves, 15);
        let (mut on_range, mut global) = (0.0f64, 0.0f64);
        for &t in &self.scenario.samples.times {
            let c = compare_with_transport(&up, &self.setup.propagator, t, &xs)?;
            on_range = on_range.max(c.on_range);
            global = global.max(c.global);
        }
        let th = self.th().integrated;
        let global_report = if path.len() <= 2 {
            ResidualReport::thresholded("omega_vs_g_global", global, th)
        } else {
            ResidualReport::info("omega_vs_g_global", global)
        };
        Ok(vec![
            ResidualReport::thresholded("omega_vs_g_range", on_range, th),
            global_report.with("projections", path.len()),
        ])
    }
}
