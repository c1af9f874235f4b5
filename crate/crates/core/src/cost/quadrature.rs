//! Symmetric quadrature rules for integrating against the radial bump mollifier.

use crate::scalar::Scalar;
use crate::vector::Point;

/// Gauss-Legendre nodes and weights on `[-1, 1]`. Nodes are mirrored so the rule is exactly
/// symmetric in floating point, which makes odd moments vanish to rounding.
pub fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    assert!(order >= 1, "quadrature order must be positive");
    let n = order;
    let mut half = Vec::with_capacity(n.div_ceil(2));
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        half.push((z, w));
    }
    let mut rule = Vec::with_capacity(n);
    for (i, &(z, w)) in half.iter().enumerate() {
        if n % 2 == 1 && i == n / 2 {
            rule.push((0.0, w));
        } else {
            rule.push((-z, w));
            rule.push((z, w));
        }
    }
    rule.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    rule
}

/// Unnormalized bump `exp(-1/(1-s²))` on `|s| < 1`.
pub fn bump(s: f64) -> f64 {
    let t = 1.0 - s * s;
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// Offsets `u` (with `|u| < eps`) and weights summing to one that discretize `η_ε(u) du` in
/// dimension `dim`. 1D uses a Gauss rule on `[-eps, eps]`; 2D uses Gauss in the radius and an
/// equispaced angular rule with antipodal pairs.
pub fn mollifier_rule<T: Scalar>(eps: T, order: usize, dim: usize) -> Vec<(Point<T>, T)> {
    let e = eps.to_f64_lossy();
    let gl = gauss_legendre(order);
    let mut raw: Vec<([f64; 2], f64)> = Vec::new();
    if dim == 1 {
        for &(z, w) in &gl {
            raw.push(([e * z, 0.0], e * w * bump(z)));
        }
    } else {
        let angles = 2 * order;
        let half = angles / 2;
        let mut dirs = Vec::with_capacity(angles);
        for m in 0..half {
            let th = std::f64::consts::TAU * m as f64 / angles as f64;
            dirs.push([th.cos(), th.sin()]);
        }
        for m in 0..half {
            let d = dirs[m];
            dirs.push([-d[0], -d[1]]);
        }
        let dtheta = std::f64::consts::TAU / angles as f64;
        for &(z, w) in &gl {
            let s = 0.5 * (z + 1.0);
            let rho = e * s;
            let radial = 0.5 * e * w * rho * bump(s);
            for d in &dirs {
                raw.push(([rho * d[0], rho * d[1]], radial * dtheta));
            }
        }
    }
    let total: f64 = raw.iter().map(|r| r.1).sum();
    raw.into_iter()
        .filter(|r| r.1 > 0.0)
        .map(|(u, w)| ([T::lit(u[0]), T::lit(u[1])], T::lit(w / total)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_integrates_polynomials() {
        for order in [1usize, 2, 5, 8, 33] {
            let rule = gauss_legendre(order);
            assert_eq!(rule.len(), order);
            let total: f64 = rule.iter().map(|r| r.1).sum();
            assert!((total - 2.0).abs() < 1e-13);
            // exact up to degree 2n-1
            let deg = 2 * order - 2;
            let m: f64 = rule.iter().map(|&(z, w)| w * z.powi(deg as i32)).sum();
            assert!((m - 2.0 / (deg as f64 + 1.0)).abs() < 1e-12, "order {order}");
        }
    }

    #[test]
    fn rules_are_symmetric() {
        let rule = gauss_legendre(16);
        for k in 0..8 {
            assert_eq!(rule[k].0, -rule[15 - k].0);
            assert_eq!(rule[k].1, rule[15 - k].1);
        }
        for dim in [1, 2] {
            let m = mollifier_rule(0.1f64, 12, dim);
            let first: f64 = m.iter().map(|(u, w)| u[0] * w).sum();
            let total: f64 = m.iter().map(|(_, w)| *w).sum();
            assert!(first.abs() < 1e-17);
            assert!((total - 1.0).abs() < 1e-14);
            assert!(m.iter().all(|(u, _)| u[0].hypot(u[1]) < 0.1));
        }
    }
}
