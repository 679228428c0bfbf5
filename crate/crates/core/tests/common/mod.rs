//! Shared test-support code: independent oracles and dataset generators used
//! by multiple integration-test targets.

#![allow(dead_code)]

use covimpute::infer::{fit_logistic, AnalysisModel};
use covimpute::rng::derive_stream;
use covimpute::types::{validate_dataset, CompletedDataset, ObservedProbs, Unit};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gauss-Jordan solve with partial pivoting; written independently of the
/// library's Cholesky path.
pub fn gauss_solve(mut a: Vec<f64>, mut b: Vec<f64>, k: usize) -> Vec<f64> {
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| {
                a[i * k + col]
                    .abs()
                    .partial_cmp(&a[j * k + col].abs())
                    .unwrap()
            })
            .unwrap();
        if pivot != col {
            for j in 0..k {
                a.swap(col * k + j, pivot * k + j);
            }
            b.swap(col, pivot);
        }
        let d = a[col * k + col];
        for j in 0..k {
            a[col * k + j] /= d;
        }
        b[col] /= d;
        for i in 0..k {
            if i != col {
                let f = a[i * k + col];
                for j in 0..k {
                    a[i * k + j] -= f * a[col * k + j];
                }
                b[i] -= f * b[col];
            }
        }
    }
    b
}

/// Long-run damped Newton oracle for the logistic MLE: own gradient/Hessian
/// code, step halving on log-likelihood decrease, tolerance 1e-12.
pub fn newton_oracle(rows: &[[f64; 5]], y: &[f64], k: usize) -> Vec<f64> {
    let mut beta = vec![0.0; k];
    let loglik = |b: &[f64]| -> f64 {
        rows.iter()
            .zip(y)
            .map(|(r, &yi)| {
                let eta: f64 = (0..k).map(|j| r[j] * b[j]).sum();
                yi * eta - (1.0 + eta.exp()).ln()
            })
            .sum()
    };
    for _ in 0..500 {
        let mut grad = vec![0.0; k];
        let mut hess = vec![0.0; k * k];
        for (r, &yi) in rows.iter().zip(y) {
            let eta: f64 = (0..k).map(|j| r[j] * beta[j]).sum();
            let p = sigmoid(eta);
            for a in 0..k {
                grad[a] += r[a] * (yi - p);
                for c in 0..k {
                    hess[a * k + c] += p * (1.0 - p) * r[a] * r[c];
                }
            }
        }
        let gmax = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax < 1e-12 {
            break;
        }
        let step = gauss_solve(hess, grad, k);
        let base = loglik(&beta);
        let mut scale = 1.0;
        loop {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            if loglik(&cand) >= base - 1e-12 || scale < 1e-8 {
                beta = cand;
                break;
            }
            scale *= 0.5;
        }
    }
    beta
}

/// Random completed dataset with a full-rank design (resampled until the
/// interaction-model fit succeeds).
pub fn random_dataset(seed: u64, n: usize) -> CompletedDataset {
    let mut s = derive_stream(seed, 0);
    loop {
        let mut units = Vec::with_capacity(n);
        let b: Vec<f64> = (0..5).map(|_| s.uniform() * 2.0 - 1.0).collect();
        for _ in 0..n {
            let t = s.bernoulli(0.5);
            let p1 = 0.3 + 0.4 * s.uniform();
            let x1 = s.bernoulli(p1);
            let p2 = 0.3 + 0.4 * s.uniform();
            let x2 = s.bernoulli(p2);
            let eta = b[0]
                + b[1] * x1 as f64
                + b[2] * x2 as f64
                + b[3] * t as f64
                + b[4] * (t * x2) as f64;
            let y = s.bernoulli(sigmoid(eta));
            units.push(Unit::new(t, y, Some(x1), Some(x2)));
        }
        let data =
            CompletedDataset::from_fully_observed(&validate_dataset(units).unwrap()).unwrap();
        if fit_logistic(&data, AnalysisModel::WithInteraction).is_ok() {
            return data;
        }
    }
}

/// Brute-force identification oracle for the conditional-independence
/// restriction: enumerate the pattern log-factors from their definitions and
/// exponentiate their sums over all 16 cells. A second, independent copy of
/// the construction used to cross-check the library's builder.
pub fn icin_log_factor_oracle(theta: &ObservedProbs) -> [f64; 16] {
    let f00 = |x1: u8, x2: u8| theta.complete(x1, x2).ln();
    let f01 = |x1: u8| {
        let margin: f64 = (0..2u8).map(|x2| theta.complete(x1, x2)).sum();
        theta.x1_only(x1).ln() - margin.ln()
    };
    let f10 = |x2: u8| {
        let margin: f64 = (0..2u8).map(|x1| theta.complete(x1, x2)).sum();
        theta.x2_only(x2).ln() - margin.ln()
    };
    let mut normalizer = 0.0;
    for x1 in 0..2u8 {
        for x2 in 0..2u8 {
            normalizer += (f00(x1, x2) + f01(x1) + f10(x2)).exp();
        }
    }
    let f11 = theta.both_missing().ln() - normalizer.ln();

    let mut cells = [0.0; 16];
    for x1 in 0..2u8 {
        for x2 in 0..2u8 {
            for d1 in 0..2u8 {
                for d2 in 0..2u8 {
                    let mut log_p = f00(x1, x2);
                    if d2 == 1 {
                        log_p += f01(x1);
                    }
                    if d1 == 1 {
                        log_p += f10(x2);
                    }
                    if d1 == 1 && d2 == 1 {
                        log_p += f11;
                    }
                    cells[((x1 as usize) << 3) | ((x2 as usize) << 2) | ((d1 as usize) << 1)
                        | d2 as usize] = log_p.exp();
                }
            }
        }
    }
    cells
}
