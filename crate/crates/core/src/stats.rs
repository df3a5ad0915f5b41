//! Closed-form collision and detection statistics.
//!
//! Collision counts use the Poisson approximation of the generalized
//! birthday problem: with `N` draws over `S` values and `λ = N/S`, the
//! expected number of values drawn exactly `k` times is `S·λ^k/k!·e^{-λ}`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("prediction accuracy 1 gives unbounded attempts")]
    Unbounded,
    #[error("{0}")]
    Domain(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollisionModel {
    pub n: f64,
    pub s: f64,
}

impl CollisionModel {
    pub fn new(n: f64, s: f64) -> Result<Self, StatsError> {
        if !(n >= 0.0) || !(s >= 1.0) {
            return Err(StatsError::Domain(format!("need N >= 0 and S >= 1, got N={n}, S={s}")));
        }
        Ok(Self { n, s })
    }

    /// Draws of `width`-digit pseudonyms.
    pub fn for_width(n: u64, width: u8) -> Self {
        Self {
            n: n as f64,
            s: 10f64.powi(i32::from(width)),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.n / self.s
    }
}

/// `ln(n!)`, exact summation below 1024 and a Stirling series above.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 1024 {
        return (2..=n).map(|i| (i as f64).ln()).sum();
    }
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

pub fn expected_collisions(model: &CollisionModel, k: u32) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    let lambda = model.lambda();
    if lambda == 0.0 {
        return 0.0;
    }
    (model.s.ln() + f64::from(k) * lambda.ln() - ln_factorial(u64::from(k)) - lambda).exp()
}

/// Poisson: the variance of the double-collision count equals its mean.
pub fn collision_stddev(model: &CollisionModel) -> f64 {
    expected_collisions(model, 2).sqrt()
}

pub fn collision_budget(model: &CollisionModel, z: f64) -> u64 {
    assert!(z >= 0.0, "z must be non-negative");
    (z * collision_stddev(model)).floor() as u64
}

pub const DEFAULT_BUDGET_Z: f64 = 2.83;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StealCapacity {
    pub attempts: f64,
    pub expected_steals: f64,
}

/// Each failed prediction costs one visible collision, so a budget of `B`
/// failures buys `B/(1-p)` attempts on average.
pub fn steal_capacity(budget: u64, p: f64) -> Result<StealCapacity, StatsError> {
    if p == 1.0 {
        return Err(StatsError::Unbounded);
    }
    if !(0.0..1.0).contains(&p) {
        return Err(StatsError::Domain(format!("p must lie in [0, 1), got {p}")));
    }
    let attempts = budget as f64 / (1.0 - p);
    Ok(StealCapacity {
        attempts,
        expected_steals: p * attempts,
    })
}

/// Chance that one verifier outside the safe pool had their vote altered
/// when `M - K` of the `A - K` unknown actionable votes are changed blindly.
pub fn catch_probability(m: u64, k: u64, a: u64) -> Result<f64, StatsError> {
    if k > m || k >= a || m > a {
        return Err(StatsError::Domain(format!("need K <= M <= A and K < A, got M={m}, K={k}, A={a}")));
    }
    Ok((m - k) as f64 / (a - k) as f64)
}

/// `P(X >= threshold)` for `X ~ Binomial(v, p)`.
///
/// Probabilities are built outward from the mode in log space, so the
/// result stays accurate for `v` in the millions; the shorter tail is
/// summed directly and the other side taken as its complement.
pub fn detection_probability(v: u64, p: f64, threshold: u64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "p must lie in [0, 1]");
    if threshold == 0 {
        return 1.0;
    }
    if threshold > v || p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return 1.0;
    }
    let mode = (((v + 1) as f64 * p).floor() as u64).min(v);
    let ln_mode = ln_choose(v, mode) + mode as f64 * p.ln() + (v - mode) as f64 * (1.0 - p).ln();
    let odds = p / (1.0 - p);
    let upper_side = threshold > mode;
    let mut sum = 0.0;
    if upper_side {
        // Σ_{k >= threshold}, walking up from the mode.
        let mut w = 1.0;
        for k in mode..v {
            if k >= threshold {
                sum += w;
            }
            w *= (v - k) as f64 / (k + 1) as f64 * odds;
            if k >= threshold && w < sum * 1e-18 {
                return sum * ln_mode.exp();
            }
        }
        sum += w;
        sum * ln_mode.exp()
    } else {
        // Σ_{k < threshold}, walking down from the mode.
        let mut w = 1.0;
        let mut k = mode;
        loop {
            if k < threshold {
                sum += w;
                if w < sum * 1e-18 {
                    break;
                }
            }
            if k == 0 {
                break;
            }
            w *= k as f64 / (v - k + 1) as f64 / odds;
            k -= 1;
        }
        1.0 - sum * ln_mode.exp()
    }
}

/// Expected machine-part collisions under voter-injected entropy.
pub fn expected_semi_collisions(n: f64, machine_space: f64, k: u32) -> f64 {
    expected_collisions(&CollisionModel { n, s: machine_space }, k)
}

pub fn poisson_pmf(k: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (k as f64 * mean.ln() - mean - ln_factorial(k)).exp()
}

/// Smallest `q` with `P(X <= q) >= level` for `X ~ Poisson(mean)`.
pub fn poisson_quantile(mean: f64, level: f64) -> u64 {
    let mut cdf = 0.0;
    let mut k = 0;
    loop {
        cdf += poisson_pmf(k, mean);
        if cdf >= level {
            return k;
        }
        k += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollisionBand {
    pub mean: f64,
    pub sigma: f64,
    pub normal_low: f64,
    pub normal_high: f64,
    /// Exact Poisson quantiles at the same two-sided coverage as `mean ± zσ`.
    pub poisson_low: u64,
    pub poisson_high: u64,
}

pub fn collision_band(model: &CollisionModel, z: f64) -> CollisionBand {
    let mean = expected_collisions(model, 2);
    let sigma = mean.sqrt();
    let tail = 0.5 * erfc(z / std::f64::consts::SQRT_2);
    CollisionBand {
        mean,
        sigma,
        normal_low: mean - z * sigma,
        normal_high: mean + z * sigma,
        poisson_low: poisson_quantile(mean, tail),
        poisson_high: poisson_quantile(mean, 1.0 - tail),
    }
}

/// Complementary error function (Numerical Recipes `erfcc`, |error| < 1.2e-7).
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t
        * (-z * z - 1.265_512_23
            + t * (1.000_023_68
                + t * (0.374_091_96
                    + t * (0.096_784_18
                        + t * (-0.186_288_06
                            + t * (0.278_868_07
                                + t * (-1.135_203_98
                                    + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
            .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}
