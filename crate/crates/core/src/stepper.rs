//! Norm-preserving stepper for `u̇ = A(t)·u` with anti-Hermitian `A`.
//!
//! Fourth-order Magnus: two Gauss–Legendre samples of the generator and one
//! commutator correction. The exponent stays anti-Hermitian, so every step
//! multiplies by an exactly unitary factor (up to the exponential's rounding).

use crate::algebra::Element;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Matrix exponential of an algebra element.
pub fn expm(x: &Element) -> Element {
    Element::from_matrix(x.matrix().exp()).expect("exponential of a square matrix is square")
}

/// One Magnus step of size `h` (either sign) from `(t, u)`.
pub fn magnus4_step(generator: &dyn Fn(f64) -> Element, t: f64, h: f64, u: &Element) -> Element {
    if h == 0.0 {
        return u.clone();
    }
    let a1 = generator(t + (0.5 - SQRT3 / 6.0) * h);
    let a2 = generator(t + (0.5 + SQRT3 / 6.0) * h);
    let omega = (&a1 + &a2).scale(0.5 * h) + a2.commutator(&a1).scale(SQRT3 / 12.0 * h * h);
    &expm(&omega) * u
}

/// Integrates from `t0` to `t1` using steps of at most `max_step`.
pub fn integrate_unitary(
    generator: &dyn Fn(f64) -> Element,
    t0: f64,
    t1: f64,
    max_step: f64,
    u0: &Element,
) -> Element {
    let span = t1 - t0;
    if span == 0.0 {
        return u0.clone();
    }
    let steps = (span.abs() / max_step).ceil().max(1.0) as usize;
    let h = span / steps as f64;
    let mut u = u0.clone();
    for k in 0..steps {
        u = magnus4_step(generator, t0 + k as f64 * h, h, &u);
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::ElementKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn anti_hermitian(seed: u64, n: usize) -> Element {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Element::random(n, &mut rng, ElementKind::General);
        (&g - &g.adjoint()).scale(0.5)
    }

    #[test]
    fn constant_generator_matches_exponential() {
        let k = anti_hermitian(1, 3);
        let kk = k.clone();
        let gen = move |_t: f64| kk.clone();
        let u = integrate_unitary(&gen, 0.0, 1.3, 1e-2, &Element::identity(3));
        assert!(u.dist(&expm(&k.scale(1.3))) < 1e-12);
    }

    #[test]
    fn fourth_order_for_time_dependent_generator() {
        let k0 = anti_hermitian(2, 3);
        let k1 = anti_hermitian(3, 3);
        let gen = move |t: f64| &k0 + &k1.scale(t * t);
        let one = Element::identity(3);
        let reference = integrate_unitary(&gen, 0.0, 1.0, 1e-3, &one);
        let e1 = integrate_unitary(&gen, 0.0, 1.0, 0.1, &one).dist(&reference);
        let e2 = integrate_unitary(&gen, 0.0, 1.0, 0.05, &one).dist(&reference);
        let ratio = e1 / e2;
        assert!((12.0..20.0).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn stays_unitary() {
        let k0 = anti_hermitian(4, 4);
        let k1 = anti_hermitian(5, 4);
        let gen = move |t: f64| &k0 + &k1.scale(t.sin());
        let one = Element::identity(4);
        let u = integrate_unitary(&gen, 0.0, 1.0, 1e-3, &one);
        assert!((&u.adjoint() * &u).dist(&one) < 1e-12);
    }

    #[test]
    fn backward_integration_inverts_forward() {
        let k0 = anti_hermitian(6, 3);
        let k1 = anti_hermitian(7, 3);
        let gen = move |t: f64| &k0 + &k1.scale(t);
        let one = Element::identity(3);
        let u = integrate_unitary(&gen, 0.2, 0.9, 1e-2, &one);
        let back = integrate_unitary(&gen, 0.9, 0.2, 1e-2, &u);
        assert!(back.dist(&one) < 1e-12);
    }
}
