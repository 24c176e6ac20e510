//! Smooth compactly supported cutoff profiles shared by the frequency
//! decompositions and the data generators. Everything is built from the
//! standard C-infinity glue h(t) = exp(-1/t).

/// h(t) = exp(-1/t) for t > 0, else 0.
pub fn glue(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Monotone step: 0 for u <= 0, 1 for u >= 1, smooth in between.
pub fn smooth_step(u: f64) -> f64 {
    let a = glue(u);
    let b = glue(1.0 - u);
    if a == 0.0 {
        0.0
    } else if b == 0.0 {
        1.0
    } else {
        a / (a + b)
    }
}

/// Radial transition eta: 1 for r <= 1, 0 for r >= 2.
/// eta(r) = h(2-r) / (h(2-r) + h(r-1)).
pub fn transition(r: f64) -> f64 {
    let a = glue(2.0 - r);
    let b = glue(r - 1.0);
    if a == 0.0 {
        0.0
    } else if b == 0.0 {
        1.0
    } else {
        a / (a + b)
    }
}

/// Smooth plateau bump supported exactly on [a, b], identically 1 on the
/// middle half, with transition ramps of width (b-a)/4 on both sides.
pub fn plateau_bump(r: f64, a: f64, b: f64) -> f64 {
    debug_assert!(b > a);
    let w = 0.25 * (b - a);
    smooth_step((r - a) / w) * smooth_step((b - r) / w)
}

/// Even C-infinity bump supported on (-1, 1), value exp(-1) at 0.
pub fn mollifier(u: f64) -> f64 {
    let s = 1.0 - u * u;
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut t = theta % two_pi;
    if t > std::f64::consts::PI {
        t -= two_pi;
    } else if t <= -std::f64::consts::PI {
        t += two_pi;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_plateaus() {
        assert_eq!(transition(0.0), 1.0);
        assert_eq!(transition(1.0), 1.0);
        assert_eq!(transition(2.0), 0.0);
        assert_eq!(transition(5.0), 0.0);
        let mid = transition(1.5);
        assert!(mid > 0.0 && mid < 1.0);
        // Monotone decreasing on [1, 2].
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = transition(1.0 + i as f64 / 100.0);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn plateau_bump_support_is_exact() {
        assert_eq!(plateau_bump(0.49, 0.5, 1.0), 0.0);
        assert_eq!(plateau_bump(1.0, 0.5, 1.0), 0.0);
        assert_eq!(plateau_bump(0.75, 0.5, 1.0), 1.0);
        assert!(plateau_bump(0.55, 0.5, 1.0) > 0.0);
    }

    #[test]
    fn angle_wrapping() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!(wrap_angle(-0.1) + 0.1 < 1e-15);
    }
}
