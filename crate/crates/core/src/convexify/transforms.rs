//! Scalar bounds used to build the convex surrogates.

use crate::geometry::{distance_sq, Point2};

/// Quadratic-transform lower bound `2α√f − α²g` of `f / g`.
///
/// Tight at `α = √f / g`.
pub fn quad_transform_lb(f: f64, g: f64, alpha: f64) -> f64 {
    2.0 * alpha * f.sqrt() - alpha * alpha * g
}

/// `h(θ) = θ + ln(1 − θ)`.
pub fn h(theta: f64) -> f64 {
    theta + (-theta).ln_1p()
}

/// Upper bound `(1 − θ)/(2ρ√g − ρ²f) − h(θ)` of `ln(1 + f/g)`.
///
/// Returns `None` when the inner denominator is not positive; the bound is
/// then undefined and the caller has to re-expand.
pub fn inv_quad_transform_ub(f: f64, g: f64, theta: f64, rho: f64) -> Option<f64> {
    let den = 2.0 * rho * g.sqrt() - rho * rho * f;
    (den > 0.0).then(|| (1.0 - theta) / den - h(theta))
}

/// Multipliers `(θ, ρ)` at which [`inv_quad_transform_ub`] is tight.
pub fn inv_quad_optimal(f: f64, g: f64) -> (f64, f64) {
    (f / (f + g), g.sqrt() / f)
}

/// Concave lower bound of `d⁻²(q, g)` expanded at `q_prev`.
pub fn taylor_inv_sq_lb(q: Point2, g: Point2, altitude: f64, q_prev: Point2) -> f64 {
    let d0 = distance_sq(q_prev, g, altitude);
    2.0 / d0 - distance_sq(q, g, altitude) / (d0 * d0)
}

/// Affine lower bound of `d²(q, g)` expanded at `q_prev`.
pub fn taylor_sq_lb(q: Point2, g: Point2, altitude: f64, q_prev: Point2) -> f64 {
    2.0 * (q_prev - g).dot(q - q_prev) + distance_sq(q_prev, g, altitude)
}

/// Concave lower bound of `d⁻⁴(q, t)` expanded at `q_prev`.
pub fn taylor_inv_quart_lb(q: Point2, t: Point2, altitude: f64, q_prev: Point2) -> f64 {
    let d0 = distance_sq(q_prev, t, altitude);
    3.0 / (d0 * d0) - 2.0 * distance_sq(q, t, altitude) / (d0 * d0 * d0)
}
