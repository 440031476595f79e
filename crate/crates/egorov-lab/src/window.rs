//! C∞ plateau windows: exactly 1 inside radius r1, exactly 0 outside r2,
//! smooth in between. Used to compactify model Hamiltonians and observables
//! so that flows cannot reach the box boundary and closed-form dynamics
//! holds exactly on the plateau.

/// f(s) = e^{−1/s} for s > 0, else 0 (the standard C∞ cutoff germ).
pub fn cutoff_germ(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

/// Radial plateau window w(r): w ≡ 1 for r ≤ r1, w ≡ 0 for r ≥ r2.
pub fn plateau(r: f64, r1: f64, r2: f64) -> f64 {
    assert!(r1 < r2);
    let a = cutoff_germ(r2 - r);
    let b = cutoff_germ(r - r1);
    if a == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// Plateau window in the phase-space radius √(x²+ξ²).
pub fn plateau_xy(x: f64, xi: f64, r1: f64, r2: f64) -> f64 {
    plateau((x * x + xi * xi).sqrt(), r1, r2)
}
