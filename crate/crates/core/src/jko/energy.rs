//! Internal energies `∫ f(ϱ)` and the nonlinearities of the limit equation.

use crate::error::{Error, Result};
use crate::scalar::{ordered_sum, Scalar};

/// Floor applied inside `s log s`.
pub const ENTROPY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Energy<T> {
    /// `f(s) = s log s`.
    Entropy,
    /// `f(s) = s^m / (m − 1)`, `m > 1`.
    Power { m: T },
}

impl<T: Scalar> Energy<T> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Energy::Entropy => Ok(()),
            Energy::Power { m } if m > T::one() && m.is_finite() => Ok(()),
            Energy::Power { m } => Err(Error::param("m", format!("power energy needs m > 1, got {m}"))),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Energy::Entropy => "entropy".into(),
            Energy::Power { m } => format!("power(m={m})"),
        }
    }

    pub fn value(&self, s: T) -> T {
        match *self {
            Energy::Entropy => s * s.max(T::lit(ENTROPY_FLOOR)).ln(),
            Energy::Power { m } => s.max(T::zero()).powf(m) / (m - T::one()),
        }
    }

    pub fn derivative(&self, s: T) -> T {
        match *self {
            Energy::Entropy => s.max(T::lit(ENTROPY_FLOOR)).ln() + T::one(),
            Energy::Power { m } => m / (m - T::one()) * s.max(T::zero()).powf(m - T::one()),
        }
    }

    /// `Σ f(ϱ_i) · cellVolume`.
    pub fn integral(&self, density: &[T], cell_volume: T) -> T {
        ordered_sum(density.iter().map(|&s| self.value(s))) * cell_volume
    }

    /// `g` with `g'(s) = s^{p−1} f''(s)` and `g(0) = 0`: `s^{p−1}/(p−1)` for the entropy,
    /// `m/(m+p−2) · s^{m+p−2}` for the power energy.
    pub fn diffusion_potential(&self, s: T, p: T) -> T {
        let s = s.max(T::zero());
        match *self {
            Energy::Entropy => s.powf(p - T::one()) / (p - T::one()),
            Energy::Power { m } => m / (m + p - T::lit(2.0)) * s.powf(m + p - T::lit(2.0)),
        }
    }

    /// `g'(s) = s^{p−1} f''(s)`.
    pub fn diffusion_slope(&self, s: T, p: T) -> T {
        let s = s.max(T::lit(ENTROPY_FLOOR));
        match *self {
            Energy::Entropy => s.powf(p - T::lit(2.0)),
            Energy::Power { m } => m * s.powf(m + p - T::lit(3.0)),
        }
    }

    /// Log of the mass `x` minimizing `vol·f(x/vol) + ε (x log(x/z) − x)`, i.e. the root of
    /// `f'(x/vol) + ε log(x/z) = 0`.
    pub fn log_prox(&self, log_z: T, cell_volume: T, eps: T) -> T {
        match *self {
            Energy::Entropy => (eps * log_z + cell_volume.ln() - T::one()) / (eps + T::one()),
            Energy::Power { m } => {
                // with v = u − ln vol, k = m − 1: solve v + c e^{kv} = L, L = log z − ln vol
                let k = m - T::one();
                let c = m / (k * eps);
                let shift = cell_volume.ln();
                let target = log_z - shift;
                if !target.is_finite() {
                    return log_z;
                }
                let residual = |v: T| v + c * (k * v).exp() - target;
                let slope = |v: T| T::one() + c * k * (k * v).exp();
                let mut hi = target.min(((target.abs() + T::one()) / c).ln() / k);
                let mut width = T::one();
                while residual(hi) < T::zero() {
                    hi = hi + width;
                    width = width * T::lit(2.0);
                }
                let mut lo = hi - T::one();
                width = T::one();
                while residual(lo) > T::zero() {
                    lo = lo - width;
                    width = width * T::lit(2.0);
                }
                let mut v = hi;
                for _ in 0..200 {
                    let r = residual(v);
                    if r.abs() <= T::epsilon() * (T::one() + target.abs()) {
                        break;
                    }
                    if r > T::zero() {
                        hi = v;
                    } else {
                        lo = v;
                    }
                    let newton = v - r / slope(v);
                    v = if newton > lo && newton < hi { newton } else { (lo + hi) * T::lit(0.5) };
                    if (hi - lo) <= T::epsilon() * T::lit(8.0) * (T::one() + v.abs()) {
                        break;
                    }
                }
                v + shift
            }
        }
    }
}
