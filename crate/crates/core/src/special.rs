//! Bessel functions of the first kind for integer order.

/// J_n(x) for integer order `n` by direct power series.
///
/// Accurate to about 1e-15 absolute for |x| ≤ π and |n| ≤ 32, the range used by
/// the sideband matrices. Negative orders use J_{-n}(x) = (-1)^n J_n(x).
pub fn bessel_j(n: i32, x: f64) -> f64 {
    let m = n.unsigned_abs() as i32;
    let sign = if n < 0 && m % 2 == 1 { -1.0 } else { 1.0 };
    sign * bessel_j_nonneg(m, x)
}

fn bessel_j_nonneg(n: i32, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let half = 0.5 * x;
    // (x/2)^n / n!
    let mut lead = 1.0;
    for j in 1..=n {
        lead *= half / j as f64;
    }
    let q = -half * half;
    let mut term = lead;
    let mut sum = lead;
    let mut k = 1;
    loop {
        term *= q / (k as f64 * (k + n) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs().max(1e-300) || k > 200 {
            break;
        }
        k += 1;
    }
    sum
}
