//! Planar positions and UAV-to-ground distances.

use serde::{Deserialize, Serialize};

/// Horizontal coordinate in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn scale(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;

    fn add(self, other: Point2) -> Point2 {
        Point2::new(self.x + other.x, self.y + other.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;

    fn sub(self, other: Point2) -> Point2 {
        Point2::new(self.x - other.x, self.y - other.y)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

/// Squared distances are floored here so that overflying a ground node never
/// divides by zero.
pub const MIN_DISTANCE_SQ: f64 = 1.0;

/// Squared UAV-to-ground distance `H² + ‖q − g‖²`, floored at 1 m².
pub fn distance_sq(q: Point2, g: Point2, altitude: f64) -> f64 {
    (altitude * altitude + (q - g).norm_sq()).max(MIN_DISTANCE_SQ)
}

/// UAV-to-ground distance `√(H² + ‖q − g‖²)`.
pub fn distance(q: Point2, g: Point2, altitude: f64) -> f64 {
    distance_sq(q, g, altitude).sqrt()
}
