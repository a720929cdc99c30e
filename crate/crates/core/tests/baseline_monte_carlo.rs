//! Simulation oracle for the β-divergence baseline variance.

use fsep_core::asymptotics::{baseline_variance, BaselineKind};
use fsep_core::numerics::{QuadratureConfig, RngSeed};
use rand::RngExt;
use rayon::prelude::*;

const BETA: f64 = 0.5;

/// `Σ ψ_β(x_i, θ)` with the centering constant in closed form.
fn estimating_sum(xs: &[f64], theta: f64) -> f64 {
    let centering = -theta.powf(-(1.0 + BETA)) * BETA / (1.0 + BETA).powi(2);
    xs.iter()
        .map(|&x| ((-x / theta).exp() / theta).powf(BETA) * (x - theta) / (theta * theta) - centering)
        .sum()
}

fn solve(xs: &[f64]) -> f64 {
    // The root is bracketed well inside (0.2, 5) for unit-mean data of this size.
    let (mut lo, mut hi) = (0.2, 5.0);
    let (mut f_lo, f_hi) = (estimating_sum(xs, lo), estimating_sum(xs, hi));
    assert!(f_lo * f_hi < 0.0, "root not bracketed");
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let f_mid = estimating_sum(xs, mid);
        if f_mid * f_lo > 0.0 {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn beta_baseline_matches_simulation() {
    let (n, reps) = (10_000, 1000);
    let estimates: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngSeed(31).derive(r).rng();
            let xs: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            solve(&xs)
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / reps as f64;
    let var = estimates.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0);
    let predicted = baseline_variance(BaselineKind::BetaDiv, BETA, 1.0, &QuadratureConfig::default()).unwrap();
    let empirical = n as f64 * var;
    assert!((empirical / predicted - 1.0).abs() < 0.10, "empirical {empirical}, predicted {predicted}");
}
