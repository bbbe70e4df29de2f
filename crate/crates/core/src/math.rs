// Elementary functions. The platform implementations are used when std is
// linked; otherwise the pure-Rust libm port.

#[cfg(any(feature = "std", test))]
mod imp {
    #[inline]
    pub fn exp(x: f64) -> f64 {
        x.exp()
    }
    #[inline]
    pub fn ln(x: f64) -> f64 {
        x.ln()
    }
    #[inline]
    pub fn sqrt(x: f64) -> f64 {
        x.sqrt()
    }
    #[inline]
    pub fn sin(x: f64) -> f64 {
        x.sin()
    }
    #[inline]
    pub fn cos(x: f64) -> f64 {
        x.cos()
    }
    #[inline]
    pub fn atan2(y: f64, x: f64) -> f64 {
        y.atan2(x)
    }
    #[inline]
    pub fn powi(x: f64, n: i32) -> f64 {
        x.powi(n)
    }
}

#[cfg(not(any(feature = "std", test)))]
mod imp {
    #[inline]
    pub fn exp(x: f64) -> f64 {
        libm::exp(x)
    }
    #[inline]
    pub fn ln(x: f64) -> f64 {
        libm::log(x)
    }
    #[inline]
    pub fn sqrt(x: f64) -> f64 {
        libm::sqrt(x)
    }
    #[inline]
    pub fn sin(x: f64) -> f64 {
        libm::sin(x)
    }
    #[inline]
    pub fn cos(x: f64) -> f64 {
        libm::cos(x)
    }
    #[inline]
    pub fn atan2(y: f64, x: f64) -> f64 {
        libm::atan2(y, x)
    }
    #[inline]
    pub fn powi(x: f64, n: i32) -> f64 {
        let mut acc = 1.0;
        for _ in 0..n.unsigned_abs() {
            acc *= x;
        }
        if n < 0 {
            1.0 / acc
        } else {
            acc
        }
    }
}

pub(crate) use imp::*;

pub(crate) const TAU: f64 = core::f64::consts::TAU;

/// Reduces an angle to `[0, 2π)`.
#[inline]
pub(crate) fn wrap_tau(x: f64) -> f64 {
    let r = x - TAU * libm::floor(x / TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Reduces an angle to `(-π, π]`.
#[inline]
pub(crate) fn wrap_pi(x: f64) -> f64 {
    let r = wrap_tau(x);
    if r > core::f64::consts::PI {
        r - TAU
    } else {
        r
    }
}
