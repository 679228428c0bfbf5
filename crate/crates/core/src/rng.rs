//! Deterministic, stream-splittable random sampling primitives.
//!
//! Every stochastic routine in this crate draws from an [`RngStream`] derived
//! from a (master seed, stream index) label. Streams with the same label
//! produce byte-identical sequences; streams with different labels are
//! independent for practical purposes. Replications and methods each own a
//! stream, which makes the whole workbench output a pure function of the
//! master seed and the configuration, regardless of scheduling.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, Cholesky};

/// splitmix64 finalizer; one bijective mixing step.
fn mix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn expand_key(root: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_mut(8).enumerate() {
        chunk.copy_from_slice(&mix64(root.wrapping_add(1 + i as u64)).to_le_bytes());
    }
    key
}

/// A deterministic generator tied to a (seed, index) label.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha12Rng,
    root: u64,
    label: (u64, u64),
}

/// Derive the stream with the given label.
pub fn derive_stream(master_seed: u64, index: u64) -> RngStream {
    RngStream::derive(master_seed, index)
}

impl RngStream {
    pub fn derive(master_seed: u64, index: u64) -> Self {
        let root = mix64(mix64(master_seed ^ 0x6a09_e667_f3bc_c909) ^ index);
        RngStream {
            rng: ChaCha12Rng::from_seed(expand_key(root)),
            root,
            label: (master_seed, index),
        }
    }

    /// Derive a child stream from this stream's label (not from its consumed
    /// state), so siblings are reproducible independently of each other.
    pub fn substream(&self, tag: u64) -> RngStream {
        let root = mix64(self.root ^ mix64(tag ^ 0xa076_1d64_78bd_642f));
        RngStream {
            rng: ChaCha12Rng::from_seed(expand_key(root)),
            root,
            label: self.label,
        }
    }

    pub fn label(&self) -> (u64, u64) {
        self.label
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    /// Bernoulli draw as a 0/1 indicator.
    pub fn bernoulli(&mut self, p: f64) -> u8 {
        (self.uniform() < p) as u8
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn exp1(&mut self) -> f64 {
        Exp1.sample(&mut self.rng)
    }

    fn gamma(&mut self, shape: f64) -> f64 {
        // shape validated by callers
        Gamma::new(shape, 1.0).expect("valid gamma shape").sample(&mut self.rng)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// Draw a probability vector from a Dirichlet distribution via normalized
/// gamma variates.
pub fn sample_dirichlet(stream: &mut RngStream, alpha: &[f64]) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(Error::InvalidProbabilities("empty alpha".into()));
    }
    for &a in alpha {
        if !a.is_finite() || a <= 0.0 {
            return Err(Error::InvalidProbabilities(format!(
                "dirichlet concentration must be positive, got {a}"
            )));
        }
    }
    // With very small shapes a gamma draw can underflow to zero; an all-zero
    // vector cannot be normalized, so redraw (the event has negligible mass).
    for _ in 0..64 {
        let g: Vec<f64> = alpha.iter().map(|&a| stream.gamma(a)).collect();
        let sum: f64 = g.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            return Ok(g.into_iter().map(|v| v / sum).collect());
        }
    }
    Err(Error::NonFinite("dirichlet normalization".into()))
}

/// Draw an index with the given probabilities.
pub fn sample_categorical(stream: &mut RngStream, probs: &[f64]) -> Result<usize> {
    if probs.is_empty() {
        return Err(Error::InvalidProbabilities("empty probability vector".into()));
    }
    let mut sum = 0.0;
    for &p in probs {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidProbabilities(format!(
                "negative or non-finite probability {p}"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidProbabilities(format!(
            "not normalized: sums to {sum}"
        )));
    }
    let u = stream.uniform() * sum;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(last_positive)
}

/// Draw a Beta(a, b) variate via two gammas.
pub fn sample_beta(stream: &mut RngStream, a: f64, b: f64) -> Result<f64> {
    if a.is_nan() || b.is_nan() || a <= 0.0 || b <= 0.0 {
        return Err(Error::InvalidProbabilities(format!(
            "beta parameters must be positive, got ({a}, {b})"
        )));
    }
    for _ in 0..64 {
        let ga = stream.gamma(a);
        let gb = stream.gamma(b);
        if ga + gb > 0.0 {
            return Ok(ga / (ga + gb));
        }
    }
    Err(Error::NonFinite("beta normalization".into()))
}

// ---------------------------------------------------------------------------
// Polya-Gamma PG(1, z)
// ---------------------------------------------------------------------------

/// Truncation point splitting the proposal into an inverse-Gaussian body and
/// an exponential tail.
const PG_TRUNC: f64 = 0.64;

fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

fn log_normal_cdf(x: f64) -> f64 {
    if x > -10.0 {
        normal_cdf(x).ln()
    } else {
        // asymptotic expansion of the lower tail
        let x2 = x * x;
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * PI).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

/// Probability that the proposal draw comes from the exponential tail,
/// computed in log space to stay stable for large tilts.
fn pg_right_tail_mass(c: f64) -> f64 {
    let t = PG_TRUNC;
    let k = PI * PI / 8.0 + c * c / 2.0;
    let b = (1.0 / t).sqrt() * (t * c - 1.0);
    let a = -(1.0 / t).sqrt() * (t * c + 1.0);
    let x0 = k.ln() + k * t;
    let xb = x0 - c + log_normal_cdf(b);
    let xa = x0 + c + log_normal_cdf(a);
    let q_div_p = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_div_p)
}

/// Piecewise coefficients of the alternating series for the Jacobi-type
/// density underlying PG(1, z).
fn pg_series_coef(n: usize, x: f64) -> f64 {
    let np = n as f64 + 0.5;
    if x <= PG_TRUNC {
        PI * np * (2.0 / (PI * x)).powf(1.5) * (-2.0 * np * np / x).exp()
    } else {
        PI * np * (-np * np * PI * PI * x / 2.0).exp()
    }
}

/// Draw from an inverse-Gaussian IG(1/c, 1) restricted to (0, PG_TRUNC].
fn pg_truncated_inverse_gaussian(stream: &mut RngStream, c: f64) -> f64 {
    let t = PG_TRUNC;
    if c < 1.0 / t {
        // mean above the truncation point: sample the driftless first-passage
        // law restricted to (0, t] and accept against the drift factor
        loop {
            let (mut e1, mut e2): (f64, f64) = (stream.exp1(), stream.exp1());
            while e1 * e1 > 2.0 * e2 / t {
                e1 = stream.exp1();
                e2 = stream.exp1();
            }
            let x = t / ((1.0 + t * e1) * (1.0 + t * e1));
            if stream.uniform() <= (-0.5 * c * c * x).exp() {
                return x;
            }
        }
    } else {
        // mean below the truncation point: draw IG(mu, 1) until it lands
        let mu = 1.0 / c;
        loop {
            let y = {
                let v = stream.standard_normal();
                v * v
            };
            let mu_y = mu * y;
            let mut x = mu + 0.5 * mu * mu_y - 0.5 * mu * (4.0 * mu_y + mu_y * mu_y).sqrt();
            if stream.uniform() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x <= t {
                return x;
            }
        }
    }
}

/// Exact draw from the Polya-Gamma distribution PG(1, z).
///
/// Uses the alternating-series rejection sampler: a draw X from a tilted
/// Jacobi-type proposal (inverse-Gaussian body, exponential tail) is accepted
/// by running the partial sums of the series expansion of the target density,
/// and the PG variate is X/4.
pub fn sample_polya_gamma(stream: &mut RngStream, z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::NonFinite("polya-gamma tilt".into()));
    }
    let c = 0.5 * z.abs();
    let k = PI * PI / 8.0 + c * c / 2.0;
    let right_mass = pg_right_tail_mass(c);
    loop {
        let x = if stream.uniform() < right_mass {
            PG_TRUNC + stream.exp1() / k
        } else {
            pg_truncated_inverse_gaussian(stream, c)
        };
        let mut s = pg_series_coef(0, x);
        let y = stream.uniform() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= pg_series_coef(n, x);
                if y <= s {
                    return Ok(0.25 * x);
                }
            } else {
                s += pg_series_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// Mean of PG(1, z): tanh(z/2) / (2z), with the analytic limit 1/4 at z = 0.
pub fn polya_gamma_mean(z: f64) -> f64 {
    if z.abs() < 1e-12 {
        0.25
    } else {
        (0.5 * z).tanh() / (2.0 * z)
    }
}

/// Draw from a multivariate normal with the given mean and covariance.
pub fn sample_mvnormal(stream: &mut RngStream, mean: &[f64], covariance: &[f64]) -> Result<Vec<f64>> {
    let n = mean.len();
    if covariance.len() != n * n {
        return Err(Error::InvalidConfig(format!(
            "covariance has {} entries, expected {}",
            covariance.len(),
            n * n
        )));
    }
    if !is_symmetric(covariance, n) {
        return Err(Error::NotPositiveDefinite);
    }
    let chol = Cholesky::factor(covariance, n)?;
    let z: Vec<f64> = (0..n).map(|_| stream.standard_normal()).collect();
    let lz = chol.l_mul(&z);
    Ok(mean.iter().zip(lz).map(|(m, v)| m + v).collect())
}
