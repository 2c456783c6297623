use std::f64::consts::{PI, TAU};

/// Wraps an angle into `(-π, π]`.
pub fn wrap(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Unwraps `measured` (any branch) onto the branch closest to `reference`.
pub fn unwrap_near(measured: f64, reference: f64) -> f64 {
    reference + wrap(measured - reference)
}
