//! Low-dimensional similarity kernel `φ(d) = 1 / (1 + a·d^(2b))` and the
//! gradients of its cross-entropy terms.
//!
//! For a pair with offset `diff = y_i − y_j` and `d² = |diff|²`:
//! the attractive loss is `−ln φ = ln(1 + a·d^(2b))` and the repulsive loss
//! is `−ln(1 − φ) = ln(1 + a·d^(2b)) − ln(a·d^(2b))`. Gradients are taken
//! with respect to `y_i`.

/// Gradient components are clipped to `[−CLIP, CLIP]` during optimization.
pub const CLIP: f64 = 4.0;

pub fn kernel(d2: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + a * libm::pow(d2, b))
}

pub fn attractive_loss(d2: f64, a: f64, b: f64) -> f64 {
    libm::log1p(a * libm::pow(d2, b))
}

pub fn repulsive_loss(d2: f64, a: f64, b: f64) -> f64 {
    let u = a * libm::pow(d2, b);
    libm::log1p(u) - libm::log(u)
}

fn norm2(diff: [f64; 2]) -> f64 {
    diff[0] * diff[0] + diff[1] * diff[1]
}

/// `∂/∂y_i ln(1 + a·d^(2b))`; zero at coincident points.
pub fn attractive_gradient(diff: [f64; 2], a: f64, b: f64) -> [f64; 2] {
    let d2 = norm2(diff);
    if d2 <= 0.0 {
        return [0.0, 0.0];
    }
    let coeff = 2.0 * a * b * libm::pow(d2, b - 1.0) / (1.0 + a * libm::pow(d2, b));
    [coeff * diff[0], coeff * diff[1]]
}

/// `∂/∂y_i [ln(1 + a·d^(2b)) − ln(a·d^(2b))]`; zero at coincident points.
pub fn repulsive_gradient(diff: [f64; 2], a: f64, b: f64) -> [f64; 2] {
    let d2 = norm2(diff);
    if d2 <= 0.0 {
        return [0.0, 0.0];
    }
    let coeff = -2.0 * b / (d2 * (1.0 + a * libm::pow(d2, b)));
    [coeff * diff[0], coeff * diff[1]]
}

pub fn clip(v: f64) -> f64 {
    v.clamp(-CLIP, CLIP)
}
