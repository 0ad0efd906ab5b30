//! Modified Bessel functions of the second kind for integer and
//! half-integer order.

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `K_nu(x)` for `x > 0` and `nu` an integer or half-integer.
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidInput(format!("bessel_k needs x > 0, got {x}")));
    }
    let nu = nu.abs();
    let twice = 2.0 * nu;
    if (twice - twice.round()).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "bessel_k supports integer and half-integer orders, got {nu}"
        )));
    }
    let n2 = twice.round() as usize;
    if n2 % 2 == 1 {
        return Ok(k_half_integer(n2 / 2, x));
    }
    let n = n2 / 2;
    let (k0, k1) = if x <= 2.0 {
        (k_series(0, x), k_series(1, x))
    } else {
        k_cf2(x)
    };
    Ok(recur_up(k0, k1, 0.0, n, x))
}

/// `K_{mu + n}` from `K_mu` and `K_{mu+1}` by upward recurrence.
fn recur_up(k0: f64, k1: f64, mu: f64, n: usize, x: f64) -> f64 {
    if n == 0 {
        return k0;
    }
    let (mut a, mut b) = (k0, k1);
    for j in 1..n {
        let c = 2.0 * (mu + j as f64) / x * b + a;
        a = b;
        b = c;
    }
    b
}

/// Closed form `K_{n+1/2}(x) = sqrt(pi / 2x) e^-x sum_k (n+k)! / (k! (n-k)!) (2x)^-k`.
fn k_half_integer(n: usize, x: f64) -> f64 {
    let mut sum = 0.0;
    let mut coef = 1.0; // (n+k)! / (k! (n-k)!) at k = 0
    let mut pow = 1.0;
    for k in 0..=n {
        if k > 0 {
            coef *= ((n + k) * (n - k + 1)) as f64 / k as f64;
            pow /= 2.0 * x;
        }
        sum += coef * pow;
    }
    (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() * sum
}

/// Series for integer order, accurate for small `x`.
fn k_series(n: usize, x: f64) -> f64 {
    let y = 0.25 * x * x;
    let half = 0.5 * x;
    // finite part
    let mut fin = 0.0;
    if n > 0 {
        let mut fact_nk1: f64 = (1..n).map(|j| j as f64).product(); // (n-1)!
        let mut kfact = 1.0;
        let mut p = 1.0;
        for k in 0..n {
            if k > 0 {
                kfact *= k as f64;
                fact_nk1 /= (n - k) as f64;
                p *= -y;
            }
            fin += fact_nk1 / kfact * p;
        }
        fin *= 0.5 * half.powi(-(n as i32));
    }
    // I_n(x) and the digamma series
    let mut psi_a = -EULER_GAMMA; // psi(k + 1)
    let mut psi_b = -EULER_GAMMA + (1..=n).map(|j| 1.0 / j as f64).sum::<f64>(); // psi(n + k + 1)
    let mut term = half.powi(n as i32) / (1..=n).map(|j| j as f64).product::<f64>();
    let mut i_n = 0.0;
    let mut ser = 0.0;
    for k in 0..200 {
        if k > 0 {
            term *= y / (k as f64 * (n + k) as f64);
            psi_a += 1.0 / k as f64;
            psi_b += 1.0 / (n + k) as f64;
        }
        i_n += term;
        ser += (psi_a + psi_b) * term;
        if term < 1e-17 * i_n.abs() {
            break;
        }
    }
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    fin - sign * half.ln() * i_n + sign * 0.5 * ser
}

/// Steed's continued fraction for `(K_0, K_1)`, valid for `x >= 2`.
fn k_cf2(x: f64) -> (f64, f64) {
    let mu = 0.0f64;
    let a1 = 0.25 - mu * mu;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let (mut q1, mut q2) = (0.0, 1.0);
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..10_000 {
        a -= 2.0 * (i - 1) as f64;
        c = -a * c / i as f64;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < 1e-16 {
            break;
        }
    }
    let h = a1 * h;
    let k0 = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k1 = k0 * (mu + x + 0.5 - h) / x;
    (k0, k1)
}
