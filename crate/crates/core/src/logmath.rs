//! Log-domain arithmetic.
//!
//! Every magnitude in this crate is carried as a natural logarithm so that
//! values such as `exp(2^40)` stay representable.

/// `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log(sum exp(x_i))`, summed in descending order of magnitude so the
/// result does not depend on the input order.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = values
        .iter()
        .copied()
        .filter(|v| *v > f64::NEG_INFINITY)
        .collect();
    if sorted.is_empty() {
        return f64::NEG_INFINITY;
    }
    sorted.sort_by(|a, b| b.total_cmp(a));
    let max = sorted[0];
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = sorted.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `log(1 - exp(x))` for `x <= 0`.
#[inline]
pub fn log1m_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `log r` for a radius in `[0, 1)`, exact at `r = 0`.
#[inline]
pub fn log_radius(r: f64) -> f64 {
    if r == 0.0 {
        f64::NEG_INFINITY
    } else {
        r.ln()
    }
}

/// `log(1 - r)` given `s = log r`, accurate as `r -> 1`.
#[inline]
pub fn log_one_minus_radius(s: f64) -> f64 {
    log1m_exp(s)
}

/// Radius `1 - 2^(-j)` together with its log, computed without cancellation.
#[inline]
pub fn dyadic_radius(j: u32) -> (f64, f64) {
    if j == 0 {
        return (0.0, f64::NEG_INFINITY);
    }
    let eps = (-(j as f64)).exp2();
    (1.0 - eps, (-eps).ln_1p())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_exp_matches_direct_sum() {
        let v = log_add_exp(1.0f64.ln(), 3.0f64.ln());
        assert!((v - 4.0f64.ln()).abs() < 1e-15);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 2.0), 2.0);
    }

    #[test]
    fn sum_exp_survives_huge_magnitudes() {
        let big = 1.0e12;
        let v = log_sum_exp(&[big, big]);
        assert!((v - big - std::f64::consts::LN_2).abs() < 1e-3);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn sum_exp_is_order_independent() {
        let a = log_sum_exp(&[0.3, -7.0, 2.5, 1.0]);
        let b = log_sum_exp(&[1.0, 2.5, 0.3, -7.0]);
        assert_eq!(a, b);
    }

    #[test]
    fn log1m_exp_near_zero() {
        let eps = 2f64.powi(-40);
        let s = (-eps).ln_1p();
        assert!((log1m_exp(s) - eps.ln()).abs() < 1e-9);
    }

    #[test]
    fn dyadic_endpoints() {
        assert_eq!(dyadic_radius(0), (0.0, f64::NEG_INFINITY));
        let (r, s) = dyadic_radius(1);
        assert_eq!(r, 0.5);
        assert!((s - 0.5f64.ln()).abs() < 1e-16);
    }
}
