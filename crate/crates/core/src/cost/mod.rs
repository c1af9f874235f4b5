//! Radial strictly convex costs `h(z) = p_h(|z|)`, their gradients and conjugate gradients,
//! mollification, semiconcavity constants, and the radial convex functions `H` that enter
//! the inequality integrand.
//!
//! Everything reduces to one-dimensional radial profiles: `∇h(z) = p_h'(|z|) z/|z|`, and
//! `∇h*` inverts `p_h'` along the ray through `w`.

pub mod quadrature;

use crate::error::{Error, Result};
use crate::scalar::{ordered_sum, Scalar};
use crate::vector::{norm, scale, Point};

/// Bisection steps used to invert the radial derivative.
pub const BISECTION_STEPS: usize = 80;

#[derive(Debug, Clone, PartialEq)]
pub enum Profile<T> {
    /// `r^p / p`, `p > 1`.
    Power { p: T },
    Tabulated(Tabulated<T>),
    Mollified(Box<Mollified<T>>),
}

/// A profile given by samples. The derivative is the piecewise-linear interpolant through
/// `(0, 0)` and the secant slopes placed at the interval midpoints, and the value is its exact
/// integral. Quadratic samples are therefore reproduced exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated<T> {
    base_value: T,
    knots: Vec<(T, T)>,
    cumulative: Vec<T>,
}

impl<T: Scalar> Tabulated<T> {
    pub fn new(radii: &[T], values: &[T]) -> Result<Self> {
        if radii.len() != values.len() || radii.len() < 2 {
            return Err(Error::param("radii", "need matching radii/values with at least two samples"));
        }
        if radii[0] != T::zero() {
            return Err(Error::param("radii", "first radius must be 0"));
        }
        let mut knots = vec![(T::zero(), T::zero())];
        for k in 0..radii.len() - 1 {
            let dr = radii[k + 1] - radii[k];
            if !(dr > T::zero()) {
                return Err(Error::param("radii", "radii must be strictly increasing"));
            }
            let slope = (values[k + 1] - values[k]) / dr;
            let mid = (radii[k] + radii[k + 1]) * T::lit(0.5);
            let prev = knots[knots.len() - 1].1;
            if !(slope > prev) {
                return Err(Error::param(
                    "values",
                    "secant slopes must be positive and strictly increasing (strict convexity)",
                ));
            }
            knots.push((mid, slope));
        }
        let mut cumulative = vec![T::zero()];
        for w in knots.windows(2) {
            let seg = (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * T::lit(0.5);
            cumulative.push(cumulative[cumulative.len() - 1] + seg);
        }
        Ok(Tabulated { base_value: values[0], knots, cumulative })
    }

    fn segment(&self, r: T) -> usize {
        // last segment extends to infinity
        let n = self.knots.len();
        let mut k = 0;
        while k + 2 < n && r > self.knots[k + 1].0 {
            k += 1;
        }
        k
    }

    fn deriv(&self, r: T) -> T {
        let k = self.segment(r);
        let (r0, s0) = self.knots[k];
        let (r1, s1) = self.knots[k + 1];
        s0 + (s1 - s0) * (r - r0) / (r1 - r0)
    }

    fn value(&self, r: T) -> T {
        let k = self.segment(r);
        let (r0, s0) = self.knots[k];
        let s = self.deriv(r);
        self.base_value + self.cumulative[k] + (r - r0) * (s0 + s) * T::lit(0.5)
    }
}

/// The radial profile of `η_ε * h` discretized by a fixed symmetric quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Mollified<T> {
    base: RadialCost<T>,
    epsilon: T,
    order: usize,
    dim: usize,
    rule: Vec<(Point<T>, T)>,
}

impl<T: Scalar> Mollified<T> {
    pub fn base(&self) -> &RadialCost<T> {
        &self.base
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    fn value(&self, r: T) -> T {
        ordered_sum(self.rule.iter().map(|&(u, w)| {
            let d = [r - u[0], -u[1]];
            w * self.base.profile_value(norm(d))
        }))
    }

    fn deriv(&self, r: T) -> T {
        ordered_sum(self.rule.iter().map(|&(u, w)| {
            let d = [r - u[0], -u[1]];
            let len = norm(d);
            if len == T::zero() {
                T::zero()
            } else {
                w * self.base.profile_deriv(len) * d[0] / len
            }
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialCost<T> {
    profile: Profile<T>,
    radius: T,
}

impl<T: Scalar> RadialCost<T> {
    /// `h(z) = |z|^p / p` on the ball of radius `radius`.
    pub fn power(p: T, radius: T) -> Result<Self> {
        if !(p > T::one()) || !p.is_finite() {
            return Err(Error::param("p", format!("power exponent must exceed 1, got {p}")));
        }
        Self::with_profile(Profile::Power { p }, radius)
    }

    pub fn tabulated(radii: &[T], values: &[T], radius: T) -> Result<Self> {
        Self::with_profile(Profile::Tabulated(Tabulated::new(radii, values)?), radius)
    }

    fn with_profile(profile: Profile<T>, radius: T) -> Result<Self> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::param("radius", "domain radius must be positive and finite"));
        }
        Ok(RadialCost { profile, radius })
    }

    pub fn profile(&self) -> &Profile<T> {
        &self.profile
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn with_radius(&self, radius: T) -> Result<Self> {
        Self::with_profile(self.profile.clone(), radius)
    }

    /// Exponent of the power family, looking through mollification.
    pub fn power_exponent(&self) -> Option<T> {
        match &self.profile {
            Profile::Power { p } => Some(*p),
            Profile::Mollified(m) => m.base.power_exponent(),
            Profile::Tabulated(_) => None,
        }
    }

    pub fn describe(&self) -> String {
        match &self.profile {
            Profile::Power { p } => format!("power(p={p})"),
            Profile::Tabulated(t) => format!("tabulated({} knots)", t.knots.len()),
            Profile::Mollified(m) => format!("mollified({}, eps={}, order={})", m.base.describe(), m.epsilon, m.order),
        }
    }

    /// `p_h(r)`; evaluable for any `r ≥ 0`, also beyond the domain radius.
    pub fn profile_value(&self, r: T) -> T {
        match &self.profile {
            Profile::Power { p } => r.powf(*p) / *p,
            Profile::Tabulated(t) => t.value(r),
            Profile::Mollified(m) => m.value(r),
        }
    }

    /// `p_h'(r)`.
    pub fn profile_deriv(&self, r: T) -> T {
        match &self.profile {
            Profile::Power { p } => {
                if r == T::zero() {
                    T::zero()
                } else {
                    r.powf(*p - T::one())
                }
            }
            Profile::Tabulated(t) => t.deriv(r),
            Profile::Mollified(m) => m.deriv(r),
        }
    }

    /// `h(z)`.
    pub fn value(&self, z: Point<T>) -> T {
        self.profile_value(norm(z))
    }

    /// Largest gradient norm attained on the closed ball of radius `R`.
    pub fn max_gradient(&self) -> T {
        self.profile_deriv(self.radius)
    }

    pub fn grad_h(&self, z: Point<T>) -> Result<Point<T>> {
        let r = norm(z);
        if r > self.radius * (T::one() + T::lit(1e-12)) {
            return Err(Error::Domain { norm: r.to_f64_lossy(), radius: self.radius.to_f64_lossy() });
        }
        if r == T::zero() {
            return Ok([T::zero(); 2]);
        }
        Ok(scale(z, self.profile_deriv(r) / r))
    }

    /// `∇h*(w) = (∇h)^{-1}(w)`: bisection for the radius `r` with `p_h'(r) = |w|`, returned
    /// along the direction of `w`.
    pub fn grad_h_star(&self, w: Point<T>) -> Result<Point<T>> {
        let target = norm(w);
        if target == T::zero() {
            return Ok([T::zero(); 2]);
        }
        let max = self.max_gradient();
        if target > max * (T::one() + T::lit(1e-12)) {
            return Err(Error::Range { norm: target.to_f64_lossy(), max: max.to_f64_lossy() });
        }
        let (mut lo, mut hi) = (T::zero(), self.radius);
        for _ in 0..BISECTION_STEPS {
            let mid = (lo + hi) * T::lit(0.5);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.profile_deriv(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // pick the bracket end whose derivative is closer to the target
        let r = if (self.profile_deriv(lo) - target).abs() <= (self.profile_deriv(hi) - target).abs() {
            lo
        } else {
            hi
        };
        Ok(scale(w, r / target))
    }

    /// `η_ε * h` for the normalized bump mollifier supported in `B(ε)` of `R^dim`.
    pub fn mollify(&self, epsilon: T, quadrature_order: usize, dim: usize) -> Result<Self> {
        if !(epsilon > T::zero()) || epsilon >= self.radius / T::lit(4.0) {
            return Err(Error::param("epsilon", format!("need 0 < epsilon < R/4 = {}", self.radius / T::lit(4.0))));
        }
        if quadrature_order < 2 {
            return Err(Error::param("quadrature_order", "need at least 2 nodes"));
        }
        if dim != 1 && dim != 2 {
            return Err(Error::param("dim", "mollification is available in dimensions 1 and 2"));
        }
        let rule = quadrature::mollifier_rule(epsilon, quadrature_order, dim);
        let m = Mollified { base: self.clone(), epsilon, order: quadrature_order, dim, rule };
        Self::with_profile(Profile::Mollified(Box::new(m)), self.radius)
    }

    /// Checks that `p_h'` is strictly increasing at `samples + 1` equispaced radii of `[0, R]`.
    pub fn is_strictly_convex(&self, samples: usize) -> bool {
        let step = self.radius / T::from_count(samples.max(1));
        let mut prev = self.profile_deriv(T::zero());
        for k in 1..=samples.max(1) {
            let cur = self.profile_deriv(step * T::from_count(k));
            if !(cur > prev) {
                return false;
            }
            prev = cur;
        }
        true
    }

    /// Largest eigenvalue of `D²h` on `B(R)`, estimated from `max(p_h'', p_h'/r)` at sampled
    /// radii, with a 10% margin.
    pub fn semiconcavity_constant(&self, radius: T, samples: usize) -> Result<SemiconcavityBound<T>> {
        if !(radius > T::zero()) || samples == 0 {
            return Err(Error::param("samples", "need a positive radius and at least one sample"));
        }
        let delta = radius * T::lit(1e-4);
        let mut worst = T::zero();
        for k in 1..=samples {
            let r = radius * T::from_count(k) / T::from_count(samples);
            let second = (self.profile_value(r + delta) - T::lit(2.0) * self.profile_value(r)
                + self.profile_value(r - delta))
                / (delta * delta);
            let tangential = self.profile_deriv(r) / r;
            if !second.is_finite() || !tangential.is_finite() {
                return Err(Error::Numerical(format!("non-finite second difference at r = {r}")));
            }
            worst = worst.max(second).max(tangential);
        }
        Ok(SemiconcavityBound { constant: worst * T::lit(1.1), radius })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemiconcavityBound<T> {
    pub constant: T,
    pub radius: T,
}

/// Radial convex `H(z) = scale · |z|^q / q` with the convention `∇H(z) = 0` for `|z| ≤ δ₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HFunction<T> {
    exponent: T,
    scale: T,
    threshold: T,
}

impl<T: Scalar> HFunction<T> {
    pub fn power(q: T, threshold: T) -> Result<Self> {
        if !(q >= T::one()) || !q.is_finite() {
            return Err(Error::param("q", format!("H exponent must be at least 1, got {q}")));
        }
        if !(threshold >= T::zero()) {
            return Err(Error::param("threshold", "zero threshold must be nonnegative"));
        }
        Ok(HFunction { exponent: q, scale: T::one(), threshold })
    }

    /// The default `δ₀ = 1e-9 · diameter`.
    pub fn default_threshold(diameter: T) -> T {
        T::lit(1e-9) * diameter
    }

    pub fn scaled(&self, factor: T) -> Result<Self> {
        if !(factor > T::zero()) {
            return Err(Error::param("scale", "H scale must be positive"));
        }
        Ok(HFunction { scale: self.scale * factor, ..*self })
    }

    pub fn exponent(&self) -> T {
        self.exponent
    }

    pub fn threshold(&self) -> T {
        self.threshold
    }

    pub fn describe(&self) -> String {
        if self.scale == T::one() {
            format!("power(q={})", self.exponent)
        } else {
            format!("{}*power(q={})", self.scale, self.exponent)
        }
    }

    pub fn profile_deriv(&self, r: T) -> T {
        self.scale * r.powf(self.exponent - T::one())
    }

    pub fn grad(&self, z: Point<T>) -> Point<T> {
        let r = norm(z);
        if r <= self.threshold || r == T::zero() {
            return [T::zero(); 2];
        }
        scale(z, self.profile_deriv(r) / r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn power(p: f64) -> RadialCost<f64> {
        RadialCost::power(p, 2.0).unwrap()
    }

    #[test]
    fn quadratic_gradient_is_identity() {
        let g = power(2.0).grad_h([0.3, 0.4]).unwrap();
        assert_abs_diff_eq!(g[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.4, epsilon = 1e-15);
        assert_eq!(power(1.5).grad_h([0.0, 0.0]).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn cubic_gradient_and_inverse() {
        assert_abs_diff_eq!(power(3.0).grad_h([2.0, 0.0]).unwrap()[0], 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(power(3.0).grad_h_star([4.0, 0.0]).unwrap()[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(power(3.0).grad_h_star([-4.0, 0.0]).unwrap()[0], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn quadratic_is_self_conjugate() {
        let w = [0.7, -1.1];
        let z = power(2.0).grad_h_star(w).unwrap();
        assert_abs_diff_eq!(z[0], w[0], epsilon = 1e-14);
        assert_abs_diff_eq!(z[1], w[1], epsilon = 1e-14);
        assert_eq!(power(2.0).grad_h_star([0.0, 0.0]).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn domain_and_range_errors() {
        assert!(matches!(power(2.0).grad_h([2.5, 0.0]), Err(Error::Domain { .. })));
        assert!(matches!(power(2.0).grad_h_star([2.5, 0.0]), Err(Error::Range { .. })));
        assert!(RadialCost::power(1.0, 1.0).is_err());
        assert!(RadialCost::power(0.5, 1.0).is_err());
    }

    #[test]
    fn grad_h_star_matches_analytic_inverse() {
        for p in [1.5, 2.0, 3.0, 4.0] {
            let c = power(p);
            for k in 1..50 {
                let w = c.max_gradient() * k as f64 / 50.0;
                let r = c.grad_h_star([w, 0.0]).unwrap()[0];
                let exact = w.powf(1.0 / (p - 1.0));
                assert!((r - exact).abs() <= 1e-8 * exact.max(1.0), "p={p} w={w}");
            }
        }
    }

    #[test]
    fn tabulated_quadratic_is_exact() {
        let radii: Vec<f64> = (0..=20).map(|k| k as f64 * 0.1).collect();
        let values: Vec<f64> = radii.iter().map(|r| 0.5 * r * r).collect();
        let c = RadialCost::tabulated(&radii, &values, 2.0).unwrap();
        for r in [0.0, 0.05, 0.33, 1.0, 1.97, 2.3] {
            assert_abs_diff_eq!(c.profile_deriv(r), r, epsilon = 1e-12);
            assert_abs_diff_eq!(c.profile_value(r), 0.5 * r * r, epsilon = 1e-12);
        }
        assert!(c.is_strictly_convex(100));
        // concave samples are rejected
        assert!(RadialCost::tabulated(&[0.0, 1.0, 2.0], &[0.0, 1.0, 1.5], 2.0).is_err());
    }

    #[test]
    fn mollified_quadratic_keeps_its_gradient() {
        for dim in [1, 2] {
            let m = power(2.0).mollify(0.2, 32, dim).unwrap();
            let worst = (0..=200)
                .map(|k| {
                    let r = 2.0 * k as f64 / 200.0;
                    (m.profile_deriv(r) - r).abs()
                })
                .fold(0.0, f64::max);
            assert!(worst <= 1e-8, "dim {dim}: {worst}");
        }
    }

    #[test]
    fn mollification_converges_monotonically_for_p_three_halves() {
        let base = power(1.5);
        let sup = |eps: f64| {
            let m = base.mollify(eps, 48, 1).unwrap();
            (0..=400)
                .map(|k| {
                    let r = 2.0 * k as f64 / 400.0;
                    (m.profile_deriv(r) - base.profile_deriv(r)).abs()
                })
                .fold(0.0, f64::max)
        };
        let seq: Vec<f64> = [0.2, 0.1, 0.05, 0.025].iter().map(|&e| sup(e)).collect();
        assert!(seq.windows(2).all(|w| w[1] < w[0]), "{seq:?}");
        let m = base.mollify(0.1, 48, 1).unwrap();
        assert!(m.is_strictly_convex(1000));
        assert!(base.mollify(0.1, 16, 2).unwrap().is_strictly_convex(200));
    }

    #[test]
    fn mollify_rejects_bad_parameters() {
        assert!(power(2.0).mollify(0.0, 16, 1).is_err());
        assert!(power(2.0).mollify(0.5, 16, 1).is_err());
        assert!(power(2.0).mollify(0.1, 16, 3).is_err());
    }

    #[test]
    fn semiconcavity_constants() {
        let q = power(2.0).semiconcavity_constant(2.0, 200).unwrap();
        assert!((q.constant - 1.1).abs() < 1e-6, "{}", q.constant);
        let c4 = RadialCost::<f64>::power(4.0, 1.0).unwrap().semiconcavity_constant(1.0, 100).unwrap();
        assert!((c4.constant - 3.3).abs() < 1e-3, "{}", c4.constant);
        let m = power(1.5).mollify(0.1, 32, 1).unwrap().semiconcavity_constant(2.0, 100).unwrap();
        assert!(m.constant >= 0.0 && m.constant.is_finite());
    }

    #[test]
    fn h_function_convention_and_values() {
        let h = HFunction::power(2.0, 1e-9).unwrap();
        assert_eq!(h.grad([0.0, 0.0]), [0.0, 0.0]);
        assert_eq!(h.grad([1.0, 2.0]), [1.0, 2.0]);
        let h4 = HFunction::power(4.0, 1e-9).unwrap();
        assert_abs_diff_eq!(h4.grad([2.0, 0.0])[0], 8.0, epsilon = 1e-12);
        assert_eq!(h4.grad([5e-10, 0.0]), [0.0, 0.0]);
        let doubled = h4.scaled(2.0).unwrap();
        assert_abs_diff_eq!(doubled.grad([2.0, 0.0])[0], 16.0, epsilon = 1e-12);
    }

    #[test]
    fn single_precision_costs() {
        let c = RadialCost::<f32>::power(3.0, 2.0).unwrap();
        let z = c.grad_h_star([4.0, 0.0]).unwrap();
        assert!((z[0] - 2.0).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn conjugate_round_trip(p in 1.2f64..5.0, x in -1.2f64..1.2, y in -1.2f64..1.2) {
            let c = power(p);
            let z = [x, y];
            let back = c.grad_h_star(c.grad_h(z).unwrap()).unwrap();
            let err = (back[0] - x).hypot(back[1] - y);
            prop_assert!(err <= 1e-8 * x.hypot(y).max(1e-300) + 1e-300);
        }

        #[test]
        fn gradients_are_radially_monotone(p in 1.2f64..5.0, q in 1.0f64..5.0, x in -0.7f64..0.7, y in -0.7f64..0.7) {
            let c = power(p);
            let h = HFunction::power(q, 1e-9).unwrap();
            let z = [x, y];
            let gh = c.grad_h(z).unwrap();
            let gs = c.grad_h_star(z).unwrap();
            let g_big = h.grad(z);
            prop_assert!(gh[0] * x + gh[1] * y >= 0.0);
            prop_assert!(g_big[0] * x + g_big[1] * y >= 0.0);
            // ∇H and ∇h* are parallel with a nonnegative ratio
            let cross = g_big[0] * gs[1] - g_big[1] * gs[0];
            prop_assert!(cross.abs() <= 1e-9 * (1.0 + g_big[0].hypot(g_big[1]) * gs[0].hypot(gs[1])));
            prop_assert!(g_big[0] * gs[0] + g_big[1] * gs[1] >= 0.0);
        }

        #[test]
        fn round_trip_from_the_dual_side(p in 1.2f64..5.0, t in 0.0f64..1.0, angle in 0.0f64..6.28) {
            let c = power(p);
            let m = c.max_gradient() * t;
            let w = [m * angle.cos(), m * angle.sin()];
            let back = c.grad_h(c.grad_h_star(w).unwrap()).unwrap();
            prop_assert!((back[0] - w[0]).hypot(back[1] - w[1]) <= 1e-10 * (1.0 + m));
        }
    }
}
