//! Surrogate derivative of the spike nonlinearity and its smooth relaxation.

/// Triangular surrogate `slope · max(0, 1 - |y - θ| / width)`.
#[inline]
pub fn surrogate_grad(y: f64, theta: f64, slope: f64, width: f64) -> f64 {
    slope * (1.0 - (y - theta).abs() / width).max(0.0)
}

/// Antiderivative of `surrogate_grad / slope`, zero far below threshold and
/// saturating at `width` far above. Continuously differentiable.
#[inline]
pub fn relaxed_spike(y: f64, theta: f64, width: f64) -> f64 {
    let u = y - theta;
    if u <= -width {
        0.0
    } else if u <= 0.0 {
        (u + width).powi(2) / (2.0 * width)
    } else if u < width {
        width / 2.0 + u - u * u / (2.0 * width)
    } else {
        width
    }
}
