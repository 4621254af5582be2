//! Modified Bessel functions of the second kind.

use std::f64::consts::PI;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `K_1(x)` for `x > 0`.
///
/// Power series with logarithmic term for `x <= 2`, Steed's continued
/// fraction (CF2) beyond.
pub fn bessel_k1(x: f64) -> f64 {
    assert!(x > 0.0, "K_1 needs a positive argument, got {x}");
    if x <= 2.0 {
        k1_series(x)
    } else {
        k01_continued_fraction(x).1
    }
}

/// `K_0(x)` for `x > 0`.
pub fn bessel_k0(x: f64) -> f64 {
    assert!(x > 0.0, "K_0 needs a positive argument, got {x}");
    if x <= 2.0 {
        k0_series(x)
    } else {
        k01_continued_fraction(x).0
    }
}

fn k0_series(x: f64) -> f64 {
    // K_0 = -(ln(x/2) + gamma) I_0 + sum_{k>=1} H_k (x^2/4)^k / (k!)^2
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut i0 = 1.0;
    let mut tail = 0.0;
    let mut harmonic = 0.0;
    for k in 1..60 {
        let kf = k as f64;
        term *= q / (kf * kf);
        harmonic += 1.0 / kf;
        i0 += term;
        tail += harmonic * term;
        if term < 1e-18 * i0 {
            break;
        }
    }
    -((0.5 * x).ln() + EULER_GAMMA) * i0 + tail
}

fn k1_series(x: f64) -> f64 {
    // K_1 = 1/x + ln(x/2) I_1 - (x/4) sum_k (psi(k+1) + psi(k+2)) (x^2/4)^k / (k! (k+1)!)
    let q = 0.25 * x * x;
    let mut term = 1.0; // (x^2/4)^k / (k! (k+1)!)
    let mut psi1 = -EULER_GAMMA; // psi(k+1)
    let mut psi2 = 1.0 - EULER_GAMMA; // psi(k+2)
    let mut i1_sum = term;
    let mut psi_sum = (psi1 + psi2) * term;
    for k in 1..60 {
        let kf = k as f64;
        term *= q / (kf * (kf + 1.0));
        psi1 += 1.0 / kf;
        psi2 += 1.0 / (kf + 1.0);
        i1_sum += term;
        psi_sum += (psi1 + psi2) * term;
        if term < 1e-18 * i1_sum {
            break;
        }
    }
    let i1 = 0.5 * x * i1_sum;
    1.0 / x + (0.5 * x).ln() * i1 - 0.25 * x * psi_sum
}

/// `(K_0(x), K_1(x))` for `x >= 2` via Steed's method.
fn k01_continued_fraction(x: f64) -> (f64, f64) {
    let a1 = 0.25;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..10_000 {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < 1e-17 {
            break;
        }
    }
    h *= a1;
    let k0 = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    (k0, k1)
}

/// `K_nu(x)` for arbitrary order from `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt`,
/// trapezoidal rule on a truncated range. Slow; meant for non-default `nu`.
pub fn bessel_k_quadrature(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "K_nu needs a positive argument, got {x}");
    let nu = nu.abs();
    // integrand ~ exp(-x e^t / 2 + nu t); cut where the exponent is 50 below its peak
    let peak_t = if nu > 0.0 { (2.0 * nu / x).max(1.0).ln() } else { 0.0 };
    let log_f = |t: f64| -x * t.cosh() + nu * t;
    let peak = log_f(peak_t);
    let mut t_max = peak_t + 1.0;
    while log_f(t_max) > peak - 50.0 {
        t_max += 0.5;
    }
    let step = 1.0 / 64.0;
    let n = (t_max / step).ceil() as usize;
    let f = |t: f64| (-x * t.cosh()).exp() * (nu * t).cosh();
    let mut sum = 0.5 * f(0.0);
    for k in 1..=n {
        sum += f(k as f64 * step);
    }
    sum * step
}
