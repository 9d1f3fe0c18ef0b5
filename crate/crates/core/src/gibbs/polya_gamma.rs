//! Exact draws from the Pólya-Gamma law `PG(1, c)` by Devroye's alternating
//! series method: propose from a mixture of a truncated inverse Gaussian on
//! `(0, t]` and an exponential tail on `(t, inf)`, then accept or reject by
//! bracketing the density between consecutive partial sums.

use std::f64::consts::{FRAC_2_PI, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

/// Switch point between the two series representations.
const TRUNC: f64 = 0.64;

/// `log Phi(x)` for the standard normal CDF, accurate in the far left tail.
fn log_normal_cdf(x: f64) -> f64 {
    if x > -20.0 {
        (0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)).ln()
    } else {
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
    }
}

/// n-th coefficient of the series for the density of `J*(1, 0)`.
fn series_coef(n: usize, x: f64) -> f64 {
    let m = n as f64 + 0.5;
    if x <= TRUNC {
        PI * m * (FRAC_2_PI / x).powf(1.5) * (-2.0 * m * m / x).exp()
    } else {
        PI * m * (-0.5 * m * m * PI * PI * x).exp()
    }
}

/// Probability of proposing from the exponential tail for tilt `z`.
fn tail_mass(z: f64) -> f64 {
    let t = TRUNC;
    let fz = 0.125 * PI * PI + 0.5 * z * z;
    let b = (1.0 / t).sqrt() * (t * z - 1.0);
    let a = -(1.0 / t).sqrt() * (t * z + 1.0);
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + log_normal_cdf(b);
    let xa = x0 + z + log_normal_cdf(a);
    let hi = xa.max(xb);
    let log_q_over_p = (4.0 / PI).ln() + hi + ((xa - hi).exp() + (xb - hi).exp()).ln();
    1.0 / (1.0 + log_q_over_p.exp())
}

/// Inverse Gaussian with mean `1 / z` and shape 1, truncated to `(0, TRUNC]`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let t = TRUNC;
    let mu = 1.0 / z;
    if mu > t {
        loop {
            let x = loop {
                let e1: f64 = Exp1.sample(rng);
                let e2: f64 = Exp1.sample(rng);
                if e1 * e1 <= 2.0 * e2 / t {
                    break t / ((1.0 + t * e1) * (1.0 + t * e1));
                }
            };
            let u: f64 = rng.random();
            if u <= (-0.5 * z * z * x).exp() {
                return x;
            }
        }
    } else {
        loop {
            let n: f64 = StandardNormal.sample(rng);
            let y = n * n;
            let mut x = mu + 0.5 * mu * mu * y - 0.5 * mu * (4.0 * mu * y + (mu * y) * (mu * y)).sqrt();
            let u: f64 = rng.random();
            if u > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x <= t {
                return x;
            }
        }
    }
}

/// One draw from `PG(1, c)`.
pub fn sample_pg1<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    // PG(1, c) = J*(1, c / 2) / 4.
    let z = 0.5 * c.abs();
    let fz = 0.125 * PI * PI + 0.5 * z * z;
    let p_tail = tail_mass(z);
    loop {
        let u: f64 = rng.random();
        let x = if u < p_tail {
            let e: f64 = Exp1.sample(rng);
            TRUNC + e / fz
        } else {
            truncated_inverse_gaussian(z, rng)
        };
        let mut s = series_coef(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coef(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += series_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// `E[PG(1, c)] = tanh(c / 2) / (2 c)`, with limit `1 / 4` at zero.
pub fn pg1_mean(c: f64) -> f64 {
    if c.abs() < 1e-6 {
        0.25 - c * c / 48.0
    } else {
        (0.5 * c).tanh() / (2.0 * c)
    }
}

/// `Var[PG(1, c)] = (sinh c - c) / (4 c^3 cosh^2(c / 2))`, with limit `1 / 24` at zero.
pub fn pg1_variance(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-3 {
        1.0 / 24.0 - c * c / 60.0
    } else if c > 50.0 {
        // sinh c / cosh^2(c/2) -> 2 for large c.
        (2.0 - 4.0 * c * (-c).exp()) / (4.0 * c * c * c)
    } else {
        (c.sinh() - c) / (4.0 * c.powi(3) * (0.5 * c).cosh().powi(2))
    }
}
