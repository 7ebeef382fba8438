//! Normal-law helpers, adaptive Gauss–Kronrod quadrature, Owen's T and the
//! bivariate normal cdf.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal cdf, accurate in both tails.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal quantile; `±inf` at the endpoints.
///
/// Acklam's rational approximation followed by one Halley step.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p == 0.5 {
        return 0.0;
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let tail = |q: f64| {
        let r = (-2.0 * q.ln()).sqrt();
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    };
    let x = if p < 0.024_25 {
        tail(p)
    } else if p > 1.0 - 0.024_25 {
        -tail(1.0 - p)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    // Work with the smaller tail so the residual keeps its relative accuracy.
    let e = if x <= 0.0 {
        norm_cdf(x) - p
    } else {
        (1.0 - p) - norm_cdf(-x)
    };
    let u = e / norm_pdf(x);
    x - u / (1.0 + 0.5 * x * u)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Panel error accepted regardless of `tol`, relative to the panel value.
const REL_FLOOR: f64 = 1e-13;
const MAX_PANELS: usize = 20_000;

/// One G7/K15 panel: (Kronrod estimate, |Kronrod - Gauss|).
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let pair = f(c - x) + f(c + x);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive G7/K15 quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Panels are bisected until each meets its share of the tolerance, its
/// relative error drops to rounding level, or the panel budget runs out.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if a > b {
        return -integrate(f, b, a, tol);
    }
    let width = b - a;
    let mut total = 0.0;
    let mut stack = vec![(a, b)];
    let mut panels = 0usize;
    while let Some((lo, hi)) = stack.pop() {
        let (value, err) = gk15(&f, lo, hi);
        panels += 1;
        let share = tol * (hi - lo) / width;
        if err <= share.max(REL_FLOOR * value.abs()).max(1e-300) || panels >= MAX_PANELS {
            total += value;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi));
            stack.push((lo, mid));
        }
    }
    total
}

/// Owen's T function `T(h, a) = (2π)^{-1} ∫_0^a exp(-h²(1+x²)/2)/(1+x²) dx`.
pub fn owens_t(h: f64, a: f64) -> f64 {
    if a == 0.0 || !h.is_finite() {
        return 0.0;
    }
    if a < 0.0 {
        return -owens_t(h, -a);
    }
    let hh = 0.5 * h * h;
    let integrand = |x: f64| {
        let q = 1.0 + x * x;
        (-hh * q).exp() / q
    };
    integrate(integrand, 0.0, a, 1e-13) / (2.0 * PI)
}

/// Bivariate standard normal cdf `P(X <= x, Y <= y)` with correlation `rho`.
pub fn bvn_cdf(x: f64, y: f64, rho: f64) -> f64 {
    bvn_upper(-x, -y, rho)
}

/// `P(X > h, Y > k)` by the Drezner–Wesolowsky / Genz Gauss–Legendre scheme.
fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY { 1.0 } else { norm_cdf(-k) };
    }
    if k == f64::NEG_INFINITY {
        return norm_cdf(-h);
    }
    if r == 0.0 {
        return norm_cdf(-h) * norm_cdf(-k);
    }
    let (w, x): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&GL6_W, &GL6_X)
    } else if r.abs() < 0.75 {
        (&GL12_W, &GL12_X)
    } else {
        (&GL20_W, &GL20_X)
    };
    let tp = 2.0 * PI;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = 0.5 * (h * h + k * k);
        let asr = 0.5 * r.asin();
        for (&wi, &xi) in w.iter().zip(x) {
            for node in [1.0 - xi, 1.0 + xi] {
                let sn = (asr * node).sin();
                bvn += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        return (bvn * asr / tp + norm_cdf(-h) * norm_cdf(-k)).clamp(0.0, 1.0);
    }
    let mut k = k;
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if r.abs() < 1.0 {
        let as_ = (1.0 - r) * (1.0 + r);
        let mut a = as_.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 80.0;
        let asr = -0.5 * (bs / as_ + hk);
        if asr > -100.0 {
            bvn = a * asr.exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_);
        }
        if hk > -100.0 {
            let b = bs.sqrt();
            let sp = tp.sqrt() * norm_cdf(-b / a);
            bvn -= (-0.5 * hk).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
        }
        a *= 0.5;
        let mut sum = 0.0;
        for (&wi, &xi) in w.iter().zip(x) {
            for node in [1.0 - xi, 1.0 + xi] {
                let xs = (a * node) * (a * node);
                let asr = -0.5 * (bs / xs + hk);
                if asr > -100.0 {
                    let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                    let rs = (1.0 - xs).sqrt();
                    let ep = (-0.5 * hk * xs / ((1.0 + rs) * (1.0 + rs))).exp() / rs;
                    sum += wi * asr.exp() * (sp - ep);
                }
            }
        }
        bvn = (a * sum - bvn) / tp;
    }
    if r > 0.0 {
        bvn += norm_cdf(-h.max(k));
    } else if h >= k {
        bvn = -bvn;
    } else {
        let l = if h < 0.0 {
            norm_cdf(k) - norm_cdf(h)
        } else {
            norm_cdf(-h) - norm_cdf(-k)
        };
        bvn = l - bvn;
    }
    bvn.clamp(0.0, 1.0)
}

const GL6_W: [f64; 3] = [
    0.171_324_492_379_170_5,
    0.360_761_573_048_138_4,
    0.467_913_934_572_690_4,
];
const GL6_X: [f64; 3] = [0.932_469_514_203_152_2, 0.661_209_386_466_264_7, 0.238_619_186_083_197];
const GL12_W: [f64; 6] = [
    0.047_175_336_386_511_77,
    0.106_939_325_995_318_3,
    0.160_078_328_543_346_4,
    0.203_167_426_723_065_9,
    0.233_492_536_538_354_7,
    0.249_147_045_813_402_9,
];
const GL12_X: [f64; 6] = [
    0.981_560_634_246_719_1,
    0.904_117_256_370_475,
    0.769_902_674_194_305,
    0.587_317_954_286_617_1,
    0.367_831_498_998_180_2,
    0.125_233_408_511_469_2,
];
const GL20_W: [f64; 10] = [
    0.017_614_007_139_152_12,
    0.040_601_429_800_386_94,
    0.062_672_048_334_109_06,
    0.083_276_741_576_704_75,
    0.101_930_119_817_240_4,
    0.118_194_531_961_518_4,
    0.131_688_638_449_176_6,
    0.142_096_109_318_382_1,
    0.149_172_986_472_603_7,
    0.152_753_387_130_725_9,
];
const GL20_X: [f64; 10] = [
    0.993_128_599_185_094_9,
    0.963_971_927_277_913_8,
    0.912_234_428_251_326,
    0.839_116_971_822_218_8,
    0.746_331_906_460_150_8,
    0.636_053_680_726_515,
    0.510_867_001_950_827_1,
    0.373_706_088_715_419_6,
    0.227_785_851_141_645_1,
    0.076_526_521_133_497_33,
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_round_trip() {
        for &p in &[1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-9] {
            let x = norm_quantile(p);
            assert!((norm_cdf(x) - p).abs() < 1e-14 + 1e-12 * p, "p = {p}");
        }
        assert_eq!(norm_quantile(0.5), 0.0);
        assert!((norm_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-15);
    }

    #[test]
    fn quadrature_of_known_integrals() {
        assert!((integrate(|x| x.sin(), 0.0, PI, 1e-12) - 2.0).abs() < 1e-12);
        assert!((integrate(|x| 1.0 / (1.0 + x * x), 0.0, 50.0, 1e-12) - 50f64.atan()).abs() < 1e-12);
        // sqrt has an endpoint singularity in its derivative.
        assert!((integrate(|x| x.sqrt(), 0.0, 1.0, 1e-11) - 2.0 / 3.0).abs() < 1e-10);
        assert_eq!(integrate(|x| x, 1.0, 1.0, 1e-12), 0.0);
    }

    #[test]
    fn owens_t_closed_forms() {
        // T(0, a) = atan(a) / (2π)
        for &a in &[0.1, 0.5, 1.0, 3.0, 20.0] {
            assert!((owens_t(0.0, a) - a.atan() / (2.0 * PI)).abs() < 1e-12);
        }
        // T(h, 1) = Φ(h)(1 - Φ(h)) / 2
        for &h in &[-2.0, -0.3, 0.7, 1.5, 4.0] {
            let p = norm_cdf(h);
            assert!((owens_t(h, 1.0) - 0.5 * p * (1.0 - p)).abs() < 1e-12, "h = {h}");
        }
        assert_eq!(owens_t(1.0, -0.5), -owens_t(1.0, 0.5));
    }

    /// Φ2(x, y; ρ) = ∫_{-∞}^{x} φ(s) Φ((y - ρ s)/√(1-ρ²)) ds, by quadrature.
    fn bvn_by_quadrature(x: f64, y: f64, rho: f64) -> f64 {
        let s = (1.0 - rho * rho).sqrt();
        integrate(|t| norm_pdf(t) * norm_cdf((y - rho * t) / s), -40.0, x, 1e-13)
    }

    #[test]
    fn bvn_matches_quadrature() {
        for &rho in &[-0.95, -0.8, -0.5, -0.1, 0.2, 0.6, 0.9, 0.99] {
            for &(x, y) in &[
                (0.0, 0.0),
                (-1.3, 0.4),
                (0.8, 2.1),
                (-2.5, -2.2),
                (1.7, -0.6),
                (3.0, 3.5),
            ] {
                let got = bvn_cdf(x, y, rho);
                let want = bvn_by_quadrature(x, y, rho);
                assert!((got - want).abs() < 1e-10, "rho={rho} x={x} y={y}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn bvn_at_origin() {
        for &rho in &[-0.9f64, -0.3, 0.0, 0.5, 0.95] {
            let want = 0.25 + rho.asin() / (2.0 * PI);
            assert!((bvn_cdf(0.0, 0.0, rho) - want).abs() < 1e-13);
        }
    }
}
