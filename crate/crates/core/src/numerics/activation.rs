/// `ln(1 + eˣ)` without overflow for large |x|.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Above this, `tanh(softplus(x))` rounds to 1 in double precision.
const MISH_LINEAR_ABOVE: f64 = 20.0;

/// Mish: `x · tanh(softplus(x))`.
///
/// Uses `tanh(ln(1 + n)) = ω / (ω + 2)` with `n = eˣ`, `ω = n(n + 2)`,
/// which needs a single exponential.
#[inline]
pub fn mish(x: f64) -> f64 {
    if x > MISH_LINEAR_ABOVE {
        return x;
    }
    let n = x.exp();
    let w = n * (n + 2.0);
    x * w / (w + 2.0)
}

/// d/dx mish(x) = tanh(sp) + x · sech²(sp) · σ(x), which in terms of
/// `n = eˣ` and `δ = n(n + 2) + 2` is `ω/δ + 4x·n(n + 1)/δ²`.
#[inline]
pub fn mish_grad(x: f64) -> f64 {
    if x > MISH_LINEAR_ABOVE {
        return 1.0;
    }
    let n = x.exp();
    let w = n * (n + 2.0);
    let d = w + 2.0;
    w / d + 4.0 * x * n * (n + 1.0) / (d * d)
}
