//! Fixed-seed validator batteries behind `edac check math`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{diversity_bound_check, expected_min_approx, variance_spectrum};

/// One validator outcome: `measured` is compared against `tolerance`.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        CheckResult {
            name: name.into(),
            measured,
            tolerance,
            passed: measured <= tolerance,
        }
    }
}

pub const VARIANCE_IDENTITY_TOL: f64 = 1e-10;
pub const SPHERE_TOL: f64 = 3e-3;
pub const EXPECTED_MIN_TOL: f64 = 0.06;

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Random unit-vector families, half of them clustered around a common
/// direction so that `‖q̄‖` covers the whole of `[0, 1]`.
pub fn unit_families(count: usize, seed: u64) -> Vec<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let n = rng.random_range(2..=50);
            let dim = rng.random_range(1..=8);
            if k % 2 == 0 {
                (0..n).map(|_| random_unit(&mut rng, dim)).collect()
            } else {
                let centre = random_unit(&mut rng, dim);
                let spread: f64 = rng.random_range(0.01..1.0);
                (0..n)
                    .map(|_| {
                        let d = random_unit(&mut rng, dim);
                        let v: Vec<f64> =
                            centre.iter().zip(&d).map(|(c, x)| c + spread * x).collect();
                        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                        v.into_iter().map(|x| x / norm).collect()
                    })
                    .collect()
            }
        })
        .collect()
}

/// Worst `|tr Var − (1 − ‖q̄‖²)|` over `count` unit families.
pub fn variance_identity_battery(count: usize, seed: u64) -> CheckResult {
    let worst = unit_families(count, seed)
        .iter()
        .map(|f| {
            let s = variance_spectrum(f).expect("well-formed family");
            (s.total_variance - (1.0 - s.mean_norm * s.mean_norm)).abs()
        })
        .fold(0.0, f64::max);
    CheckResult::at_most(
        format!("variance identity: total variance = 1 - |mean|^2 ({count} families)"),
        worst,
        VARIANCE_IDENTITY_TOL,
    )
}

/// Largest `lhs − bound` over locally linear ensembles plus the orthogonal
/// pair; passes when no instance exceeds its bound.
pub fn diversity_bound_battery(count: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9090);
    let worst = unit_families(count, seed)
        .iter()
        .map(|f| {
            let k = rng.random_range(0.1..3.0);
            let v = rng.random_range(-5.0..5.0);
            let p = diversity_bound_check(f, k, v).expect("well-formed family");
            p.lhs - p.bound
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let pair = diversity_bound_check(&[vec![1.0, 0.0], vec![0.0, 1.0]], 1.0, 0.0).expect("pair");
    vec![
        CheckResult::at_most(
            format!("diversity bound: max lhs - bound ({count} ensembles)"),
            worst,
            1e-12,
        ),
        CheckResult::at_most(
            "diversity bound, orthogonal pair: |lambda_min| + |lhs| + |bound - 0.25|",
            pair.lambda_min.abs() + pair.lhs.abs() + (pair.bound - 0.25).abs(),
            1e-12,
        ),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct SphereCov {
    pub max_cov_deviation: f64,
    pub mean_norm: f64,
}

/// Monte-Carlo covariance of `U(S^{n−1})` (normalized Gaussians) against `I/n`.
pub fn sphere_cov_check(n: usize, samples: usize, seed: u64) -> SphereCov {
    assert!(n >= 2 && samples >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![0.0; n];
    let mut outer = vec![0.0; n * n];
    for _ in 0..samples {
        let x = random_unit(&mut rng, n);
        for i in 0..n {
            sum[i] += x[i];
            for j in 0..=i {
                outer[i * n + j] += x[i] * x[j];
            }
        }
    }
    let m = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / m).collect();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..=i {
            let cov = outer[i * n + j] / m - mean[i] * mean[j];
            let target = if i == j { 1.0 / n as f64 } else { 0.0 };
            worst = worst.max((cov - target).abs());
        }
    }
    SphereCov {
        max_cov_deviation: worst,
        mean_norm: mean.iter().map(|x| x * x).sum::<f64>().sqrt(),
    }
}

pub fn sphere_battery(samples: usize, seed: u64) -> Vec<CheckResult> {
    [2, 3, 8]
        .into_iter()
        .flat_map(|n| {
            let c = sphere_cov_check(n, samples, seed.wrapping_add(n as u64));
            [
                CheckResult::at_most(
                    format!("sphere covariance n={n}"),
                    c.max_cov_deviation,
                    SPHERE_TOL,
                ),
                CheckResult::at_most(format!("sphere mean norm n={n}"), c.mean_norm, SPHERE_TOL),
            ]
        })
        .collect()
}

/// Monte-Carlo `E[min of n standard normals]`.
pub fn mc_expected_min(n: usize, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..draws {
        let mut lo = f64::INFINITY;
        for _ in 0..n {
            lo = lo.min(rng.sample::<f64, _>(StandardNormal));
        }
        total += lo;
    }
    total / draws as f64
}

pub fn expected_min_battery(draws: usize, seed: u64) -> Vec<CheckResult> {
    let mut out: Vec<CheckResult> = [2usize, 5, 10, 50]
        .into_iter()
        .map(|n| {
            let mc = mc_expected_min(n, draws, seed.wrapping_add(n as u64));
            let approx = expected_min_approx(0.0, 1.0, n);
            CheckResult::at_most(
                format!("expected min vs Monte Carlo N={n} (|approx - MC| / sigma)"),
                (approx - mc).abs(),
                EXPECTED_MIN_TOL,
            )
        })
        .collect();
    out.push(CheckResult::at_most(
        "expected min N=1 returns m exactly",
        (expected_min_approx(1.75, 3.0, 1) - 1.75).abs(),
        0.0,
    ));
    out
}

/// Every battery at acceptance scale: 100 variance-identity families, 100 diversity-bound
/// ensembles, 10⁶ sphere samples per n, 10⁶ draws per N.
pub fn math_suite(seed: u64) -> Vec<CheckResult> {
    let mut out = vec![variance_identity_battery(100, seed)];
    out.extend(diversity_bound_battery(100, seed + 1));
    out.extend(sphere_battery(1_000_000, seed + 2));
    out.extend(expected_min_battery(1_000_000, seed + 3));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families_cover_the_requested_ranges() {
        let f = unit_families(100, 1);
        assert!(f
            .iter()
            .all(|g| (2..=50).contains(&g.len()) && (1..=8).contains(&g[0].len())));
        for g in &f {
            for v in g {
                assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn small_batteries_pass() {
        assert!(variance_identity_battery(100, 2).passed);
        assert!(diversity_bound_battery(100, 3).iter().all(|c| c.passed));
        let c = sphere_cov_check(3, 200_000, 4);
        assert!(c.max_cov_deviation < 6e-3 && c.mean_norm < 6e-3);
    }

    #[test]
    fn expected_min_of_two_is_minus_one_over_root_pi() {
        let mc = mc_expected_min(2, 400_000, 5);
        assert!(
            (mc + 1.0 / std::f64::consts::PI.sqrt()).abs() < 5e-3,
            "{mc}"
        );
        // the approximation is off by ≈ 0.036σ at N = 2
        let gap = (expected_min_approx(0.0, 1.0, 2) - mc).abs();
        assert!(gap > 0.02 && gap < EXPECTED_MIN_TOL);
    }
}
