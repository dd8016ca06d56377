//! Float math shim: `std` intrinsics when available, `libm` otherwise.
//!
//! `erf` and `sincos` always come from `libm` since `std` does not provide
//! them.

#![allow(dead_code)]

pub(crate) use libm::{erf, sincos};

#[cfg(feature = "std")]
mod imp {
    pub fn sqrt(x: f64) -> f64 {
        x.sqrt()
    }
    pub fn exp(x: f64) -> f64 {
        x.exp()
    }
    pub fn ln(x: f64) -> f64 {
        x.ln()
    }
    pub fn powf(x: f64, y: f64) -> f64 {
        x.powf(y)
    }
    pub fn abs(x: f64) -> f64 {
        x.abs()
    }
    pub fn round(x: f64) -> f64 {
        x.round()
    }
    pub fn floor(x: f64) -> f64 {
        x.floor()
    }
    pub fn cos(x: f64) -> f64 {
        x.cos()
    }
    pub fn expm1(x: f64) -> f64 {
        x.exp_m1()
    }
}

#[cfg(not(feature = "std"))]
mod imp {
    pub use libm::{cos, exp, expm1, fabs as abs, floor, log as ln, pow as powf, round, sqrt};
}

pub(crate) use imp::*;

/// Integer power by binary exponentiation; exact multiplication chain,
/// identical under `std` and `no_std`.
pub(crate) fn powi(x: f64, n: i32) -> f64 {
    if n < 0 {
        return 1.0 / powi(x, -n);
    }
    let mut base = x;
    let mut k = n as u32;
    let mut acc = 1.0;
    while k > 0 {
        if k & 1 == 1 {
            acc *= base;
        }
        base *= base;
        k >>= 1;
    }
    acc
}
