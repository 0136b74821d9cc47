//! Standard normal quantile and the expected-minimum approximation built on it.

// Coefficients are quoted digit for digit from the published algorithm.
#![allow(clippy::excessive_precision)]

use std::f64::consts::PI;

// Wichura (1988), algorithm AS 241 "PPND16": rational approximations on
// |p - 0.5| ≤ 0.425 (central) and two tail regions in r = sqrt(-ln min(p, 1-p)).
const A: [f64; 8] = [
    3.387_132_872_796_366_6,
    1.331_416_678_917_843_8e2,
    1.971_590_950_306_551_3e3,
    1.373_169_376_550_946_1e4,
    4.592_195_393_154_987e4,
    6.726_577_092_700_87e4,
    3.343_057_558_358_813e4,
    2.509_080_928_730_122_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091e1,
    6.871_870_074_920_579e2,
    5.394_196_021_424_751e3,
    2.121_379_430_158_659_7e4,
    3.930_789_580_009_271e4,
    2.872_908_573_572_194_3e4,
    5.226_495_278_852_854_5e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_545,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    2.417_807_251_774_506e-1,
    2.272_384_498_926_918_4e-2,
    7.745_450_142_783_414e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_8,
    1.676_384_830_183_803_8,
    6.897_673_349_851e-1,
    1.481_039_764_274_800_8e-1,
    1.519_866_656_361_645_7e-2,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_8e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    2.965_605_718_285_048_7e-1,
    2.653_218_952_657_612_4e-2,
    1.242_660_947_388_078_4e-3,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879e-1,
    1.369_298_809_227_358e-1,
    1.487_536_129_085_061_5e-2,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_7e-15,
];

fn ratio(num: &[f64; 8], den: &[f64; 8], x: f64) -> f64 {
    let horner = |c: &[f64; 8]| c.iter().rev().fold(0.0, |acc, &k| acc * x + k);
    horner(num) / horner(den)
}

/// Φ⁻¹(p) for p in (0, 1); ±∞ at the endpoints, NaN outside.
pub fn norm_quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        return q * ratio(&A, &B, 0.180625 - q * q);
    }
    let r = (-(p.min(1.0 - p)).ln()).sqrt();
    let x = if r <= 5.0 {
        ratio(&C, &D, r - 1.6)
    } else {
        ratio(&E, &F, r - 5.0)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// `m − Φ⁻¹((N − π/8)/(N − π/4 + 1))·σ`, the approximate expected minimum of
/// `N` draws from `N(m, σ²)`. Returns `m` exactly for `N = 1`.
pub fn expected_min_approx(m: f64, sigma: f64, n: usize) -> f64 {
    assert!(n >= 1 && sigma >= 0.0, "need N ≥ 1 and σ ≥ 0");
    let nf = n as f64;
    let p = (nf - PI / 8.0) / (nf - PI / 4.0 + 1.0);
    m - norm_quantile(p) * sigma
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Φ⁻¹ by bisection on the lower tail Φ(x) = erfc(−x/√2)/2, using the
    /// upper tail for p > 1/2 so that neither side loses digits near 1.
    fn bisection_quantile(p: f64) -> f64 {
        if p > 0.5 {
            return -bisection_quantile_tail(1.0 - p);
        }
        bisection_quantile_tail(p)
    }

    fn bisection_quantile_tail(p: f64) -> f64 {
        let cdf = |x: f64| 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2);
        let (mut lo, mut hi) = (-40.0f64, 40.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn matches_bisection_oracle_over_the_range() {
        let mut ps: Vec<f64> = (1..1000).map(|i| i as f64 / 1000.0).collect();
        for k in 3..=10 {
            let t = 10f64.powi(-k);
            ps.extend([t, 2.5 * t, 1.0 - t, 1.0 - 2.5 * t]);
        }
        ps.extend([1e-10 + 1e-16, 0.075, 0.925, 0.5]);
        for p in ps {
            let err = (norm_quantile(p) - bisection_quantile(p)).abs();
            assert!(err <= 1e-8, "p = {p}: err {err}");
        }
    }

    #[test]
    fn symmetry_and_endpoints() {
        assert_eq!(norm_quantile(0.5), 0.0);
        // dyadic p keeps 1 − p exact
        for p in [2f64.powi(-24), 2f64.powi(-7), 0.25, 0.375] {
            assert!((norm_quantile(p) + norm_quantile(1.0 - p)).abs() < 1e-12);
        }
        assert_eq!(norm_quantile(0.0), f64::NEG_INFINITY);
        assert_eq!(norm_quantile(1.0), f64::INFINITY);
        assert!(norm_quantile(1.5).is_nan());
        assert!((norm_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
    }

    #[test]
    fn expected_min_examples() {
        assert_eq!(expected_min_approx(3.25, 2.0, 1), 3.25);
        let n2 = expected_min_approx(0.0, 1.0, 2);
        assert!((n2 + 0.600).abs() < 5e-4, "{n2}");
        // Φ⁻¹ at the plotting position (2 − π/8)/(3 − π/4)
        let p = (2.0 - PI / 8.0) / (3.0 - PI / 4.0);
        assert!((p - 0.725774).abs() < 1e-6);
        assert!((n2 + bisection_quantile(p)).abs() < 1e-8);
        // location-scale equivariance
        let v = expected_min_approx(1.5, 0.5, 10);
        assert!((v - (1.5 + 0.5 * expected_min_approx(0.0, 1.0, 10))).abs() < 1e-14);
        assert!(expected_min_approx(0.0, 1.0, 50) < expected_min_approx(0.0, 1.0, 10));
    }
}
