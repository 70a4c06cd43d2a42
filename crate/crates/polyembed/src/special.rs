//! Integer-order Bessel and Hankel functions.
//!
//! Thin validating wrappers over the FDLIBM ports in `libm`, which evaluate
//! `J_n` by forward recurrence for `x > n` and by normalized backward (Miller)
//! recurrence otherwise, and `Y_n` by upward recurrence from `Y₀`, `Y₁`.
//! Orders are capped well above anything the T-matrix truncation rule needs
//! at desk-scale wavenumbers.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest supported order.
pub const MAX_ORDER: u32 = 200;

fn check(n: u32, x: f64) -> Result<()> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!(
            "cylinder function argument must be positive, got {x}"
        )));
    }
    if n > MAX_ORDER {
        return Err(Error::OrderTooLarge {
            order: n as usize,
            max: MAX_ORDER as usize,
        });
    }
    Ok(())
}

/// Bessel function of the first kind `J_n(x)`, `x > 0`.
pub fn bessel_j(n: u32, x: f64) -> Result<f64> {
    check(n, x)?;
    Ok(libm::jn(n as i32, x))
}

/// Bessel function of the second kind `Y_n(x)`, `x > 0`.
pub fn bessel_y(n: u32, x: f64) -> Result<f64> {
    check(n, x)?;
    Ok(libm::yn(n as i32, x))
}

/// Hankel function of the first kind `H_n⁽¹⁾(x) = J_n(x) + i Y_n(x)`.
pub fn hankel1(n: u32, x: f64) -> Result<Complex64> {
    check(n, x)?;
    Ok(Complex64::new(libm::jn(n as i32, x), libm::yn(n as i32, x)))
}
