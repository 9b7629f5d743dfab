//! Periodic-square geometry and random-direction mobility.

use std::f64::consts::PI;

use rand::Rng;

use crate::config::Metric;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Direction of motion in radians, always within [-π, π].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Heading(f64);

impl Heading {
    pub fn new(theta: f64) -> Option<Self> {
        (-PI..=PI).contains(&theta).then_some(Self(theta))
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self(rng.gen_range(-PI..=PI))
    }

    pub fn theta(self) -> f64 {
        self.0
    }
}

/// Reduce `x` into `[0, side)`.
#[inline]
pub fn wrap(x: f64, side: f64) -> f64 {
    let r = x.rem_euclid(side);
    // rem_euclid rounds tiny negatives up to exactly `side`.
    if r >= side {
        0.0
    } else {
        r
    }
}

#[inline]
fn min_image(d: f64, side: f64) -> f64 {
    let d = d.abs();
    if side - d < d {
        side - d
    } else {
        d
    }
}

/// Squared distance between two reduced positions under `metric`.
#[inline]
pub fn distance_sq(a: Position, b: Position, side: f64, metric: Metric) -> f64 {
    let (dx, dy) = match metric {
        Metric::Torus => (min_image(a.x - b.x, side), min_image(a.y - b.y, side)),
        Metric::Euclidean => (a.x - b.x, a.y - b.y),
    };
    dx * dx + dy * dy
}

/// Minimum-image distance on the periodic square of side `side`.
pub fn torus_distance(a: Position, b: Position, side: f64) -> f64 {
    distance_sq(a, b, side, Metric::Torus).sqrt()
}

pub fn distance(a: Position, b: Position, side: f64, metric: Metric) -> f64 {
    distance_sq(a, b, side, metric).sqrt()
}

/// Move `pos` a distance `speed` along `heading`, wrapping periodically.
#[inline]
pub fn advance(pos: Position, heading: Heading, speed: f64, side: f64) -> Position {
    let (sin, cos) = heading.0.sin_cos();
    Position {
        x: wrap(pos.x + speed * cos, side),
        y: wrap(pos.y + speed * sin, side),
    }
}

/// `n` independent uniform positions on `[0, side)²`.
pub fn init_positions<R: Rng + ?Sized>(n: usize, side: f64, rng: &mut R) -> Vec<Position> {
    (0..n)
        .map(|_| Position {
            x: rng.gen_range(0.0..side),
            y: rng.gen_range(0.0..side),
        })
        .collect()
}

/// One mobility step: every agent, in index order, draws a fresh heading
/// uniformly on [-π, π] and moves `speed` along it.
pub fn step_mobility<R: Rng + ?Sized>(
    positions: &mut [Position],
    headings: &mut [Heading],
    speed: f64,
    side: f64,
    rng: &mut R,
) {
    debug_assert_eq!(positions.len(), headings.len());
    for (pos, heading) in positions.iter_mut().zip(headings.iter_mut()) {
        *heading = Heading::random(rng);
        *pos = advance(*pos, *heading, speed, side);
    }
}
