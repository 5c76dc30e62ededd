//! Spearman and Pearson correlation tests with two-sided p-values.
//!
//! Pearson p-values come from the t-distribution via the regularized
//! incomplete beta function (continued-fraction evaluation). Spearman uses
//! average ranks for ties, then Pearson on ranks; its p-value is an exact
//! permutation enumeration for n <= 8 and the t-approximation otherwise.
//! Perfectly monotone data (|coefficient| = 1) reports p = 0 in both modes.

use crate::error::{Error, Result};

/// Significance threshold used for drift verdicts.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Largest n for which the Spearman p-value enumerates all n! rank orders.
pub const EXACT_PERMUTATION_MAX_N: usize = 8;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Spearman,
    Pearson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PMethod {
    /// Two-sided p from t = r sqrt((n-2)/(1-r^2)) with n-2 degrees of freedom.
    TApprox,
    /// Fraction of all n! rank permutations with |rho| >= |rho observed|.
    ExactPermutation,
}

impl PMethod {
    pub fn label(&self) -> &'static str {
        match self {
            PMethod::TApprox => "t-approx",
            PMethod::ExactPermutation => "exact-permutation",
        }
    }
}

/// Outcome of one correlation test.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationResult {
    pub method: Method,
    pub coefficient: f64,
    pub p_value: f64,
    pub n: usize,
    pub p_method: PMethod,
}

impl CorrelationResult {
    pub fn significant(&self) -> bool {
        self.p_value < SIGNIFICANCE_LEVEL
    }
}

/// Both correlation tests over a per-layer (drift_norm, mean_cosine) series.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftCorrelation {
    pub spearman: CorrelationResult,
    pub pearson: CorrelationResult,
}

/// Verdict styled after the significance threshold: layers whose anisotropy
/// correlates with drift norm at p < 0.05 are "drift-explained".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftVerdict {
    DriftExplained,
    NotSignificant,
}

impl DriftVerdict {
    pub fn from_p(p: f64) -> Self {
        if p < SIGNIFICANCE_LEVEL {
            DriftVerdict::DriftExplained
        } else {
            DriftVerdict::NotSignificant
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            DriftVerdict::DriftExplained => "drift-explained",
            DriftVerdict::NotSignificant => "not significantly affected",
        }
    }
}

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

/// Log gamma via the Lanczos approximation (g = 7, 9 terms).
fn ln_gamma(z: f64) -> f64 {
    const COEF: [f64; 8] = [
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if z < 0.5 {
        // reflection formula
        let pi = std::f64::consts::PI;
        return (pi / (pi * z).sin()).ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut x = 0.999_999_999_999_809_93;
    for (i, c) in COEF.iter().enumerate() {
        x += c / (z + i as f64 + 1.0);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 3e-16;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
fn betai(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let bt = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        bt * betacf(a, b, x) / a
    } else {
        1.0 - bt * betacf(b, a, 1.0 - x) / b
    }
}

/// Two-sided p-value of the correlation t statistic with `n - 2` degrees of
/// freedom: P(|T| >= t) = I_{df/(df+t^2)}(df/2, 1/2).
fn t_two_sided_p(r: f64, n: usize) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t2 = r * r * df / (1.0 - r * r);
    betai(df / 2.0, 0.5, df / (df + t2)).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// Pearson
// ---------------------------------------------------------------------------

fn check_lengths(xs: &[f64], ys: &[f64]) -> Result<usize> {
    if xs.len() != ys.len() {
        return Err(Error::ShapeMismatch {
            op: "correlation",
            left: (1, xs.len()),
            right: (1, ys.len()),
        });
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData {
            what: "correlation: samples",
            needed: 3,
            got: xs.len(),
        });
    }
    Ok(xs.len())
}

/// Sample Pearson correlation with a two-sided t-test p-value.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<CorrelationResult> {
    let n = check_lengths(xs, ys)?;
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateSeries("zero variance in correlation input"));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    Ok(CorrelationResult {
        method: Method::Pearson,
        coefficient: r,
        p_value: t_two_sided_p(r, n),
        n,
        p_method: PMethod::TApprox,
    })
}

// ---------------------------------------------------------------------------
// Spearman
// ---------------------------------------------------------------------------

/// Average (mid) ranks, 1-based; ties share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share rank mean of (i+1)..=(j+1)
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// Visit all permutations of `items` (Heap's algorithm).
fn for_each_permutation<T: Copy>(items: &mut [T], visit: &mut impl FnMut(&[T])) {
    fn heap<T: Copy>(k: usize, items: &mut [T], visit: &mut impl FnMut(&[T])) {
        if k <= 1 {
            visit(items);
            return;
        }
        for i in 0..k {
            heap(k - 1, items, visit);
            if k % 2 == 0 {
                items.swap(i, k - 1);
            } else {
                items.swap(0, k - 1);
            }
        }
    }
    heap(items.len(), items, visit);
}

/// Exact two-sided permutation p-value for Spearman's rho.
///
/// Doubled centered ranks `2r - (n+1)` are integers even with mid-ranks, and
/// the rank sets (hence the denominator of rho) are permutation-invariant,
/// so `|rho_perm| >= |rho_obs|` reduces to an exact integer comparison of
/// squared covariances.
fn exact_permutation_p(rx: &[f64], ry: &[f64]) -> f64 {
    let n = rx.len();
    let center = (n + 1) as i64;
    let cx: Vec<i64> = rx.iter().map(|r| (2.0 * r) as i64 - center).collect();
    let mut cy: Vec<i64> = ry.iter().map(|r| (2.0 * r) as i64 - center).collect();
    let a_obs: i64 = cx.iter().zip(&cy).map(|(x, y)| x * y).sum();
    let threshold = a_obs * a_obs;
    let mut hits: u64 = 0;
    let mut total: u64 = 0;
    for_each_permutation(&mut cy, &mut |perm| {
        let a: i64 = cx.iter().zip(perm).map(|(x, y)| x * y).sum();
        if a * a >= threshold {
            hits += 1;
        }
        total += 1;
    });
    hits as f64 / total as f64
}

/// Spearman rank correlation: average-rank transform, Pearson on ranks, and
/// an exact permutation p-value when `n <= 8` (t-approximation otherwise).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<CorrelationResult> {
    let n = check_lengths(xs, ys)?;
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let all_tied = |r: &[f64]| r.windows(2).all(|w| w[0] == w[1]);
    if all_tied(&rx) || all_tied(&ry) {
        return Err(Error::DegenerateSeries("all ranks tied"));
    }
    let rho = pearson_on_ranks(&rx, &ry);
    let (p_value, p_method) = if rho.abs() >= 1.0 {
        // perfectly monotone data
        let m = if n <= EXACT_PERMUTATION_MAX_N {
            PMethod::ExactPermutation
        } else {
            PMethod::TApprox
        };
        (0.0, m)
    } else if n <= EXACT_PERMUTATION_MAX_N {
        (exact_permutation_p(&rx, &ry), PMethod::ExactPermutation)
    } else {
        (t_two_sided_p(rho, n), PMethod::TApprox)
    };
    Ok(CorrelationResult {
        method: Method::Spearman,
        coefficient: rho,
        p_value,
        n,
        p_method,
    })
}

fn pearson_on_ranks(rx: &[f64], ry: &[f64]) -> f64 {
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in rx.iter().zip(ry) {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

// ---------------------------------------------------------------------------
// Drift correlation
// ---------------------------------------------------------------------------

/// Run both tests on a per-layer (drift_norm, mean_cosine) series.
pub fn drift_correlation(layer_report: &[(f64, f64)]) -> Result<DriftCorrelation> {
    if layer_report.len() < 3 {
        return Err(Error::InsufficientData {
            what: "drift_correlation: layers",
            needed: 3,
            got: layer_report.len(),
        });
    }
    let drifts: Vec<f64> = layer_report.iter().map(|p| p.0).collect();
    let cosines: Vec<f64> = layer_report.iter().map(|p| p.1).collect();
    Ok(DriftCorrelation {
        spearman: spearman(&drifts, &cosines)?,
        pearson: pearson(&drifts, &cosines)?,
    })
}

// ===========================================================================
// Tests
// ===========================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian_vector, RngStream};

    // Independent oracle: two-sided t p-value by Simpson quadrature of the
    // t density, with the normalization B(1/2, df/2) itself computed by
    // quadrature (2 * integral of (1-u^2)^(df/2-1) du over [0,1]).
    fn t_p_quadrature(r: f64, n: usize) -> f64 {
        if r.abs() >= 1.0 {
            return 0.0;
        }
        let df = (n - 2) as f64;
        let t = r.abs() * (df / (1.0 - r * r)).sqrt();
        let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64, steps: usize| -> f64 {
            let h = (b - a) / steps as f64;
            let mut acc = f(a) + f(b);
            for i in 1..steps {
                let x = a + i as f64 * h;
                acc += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            acc * h / 3.0
        };
        // B(1/2, df/2) = 2 * integral of cos^(df-1) over [0, pi/2]
        // (substituting t = sin^2 keeps the integrand smooth at both ends)
        let beta = 2.0
            * simpson(
                &|theta: f64| theta.cos().powf(df - 1.0),
                0.0,
                std::f64::consts::FRAC_PI_2,
                40_000,
            );
        let norm = 1.0 / (df.sqrt() * beta);
        let pdf = move |x: f64| norm * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
        let body = simpson(&pdf, 0.0, t, 40_000);
        (1.0 - 2.0 * body).clamp(0.0, 1.0)
    }

    #[test]
    fn pearson_perfect_linearity() {
        let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(r.coefficient, 1.0);
        assert_eq!(r.p_value, 0.0);
        let r = pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert_eq!(r.coefficient, -1.0);
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn pearson_matches_quadrature_oracle() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [2.0, 1.0, 4.0, 3.0, 5.0];
        let res = pearson(&xs, &ys).unwrap();
        // direct formula oracle
        let n = 5.0;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
        let r_direct = sxy / (sxx * syy).sqrt();
        assert!((res.coefficient - r_direct).abs() < 1e-12);
        let p_oracle = t_p_quadrature(r_direct, 5);
        assert!(
            (res.p_value - p_oracle).abs() < 1e-8,
            "p {} vs quadrature {}",
            res.p_value,
            p_oracle
        );
    }

    #[test]
    fn pearson_p_matches_quadrature_across_df() {
        for (n, r) in [(4, 0.3), (6, -0.7), (10, 0.5), (25, 0.2), (12, -0.95)] {
            let p_cf = t_two_sided_p(r, n);
            let p_quad = t_p_quadrature(r, n);
            assert!(
                (p_cf - p_quad).abs() < 1e-8,
                "n={n} r={r}: {p_cf} vs {p_quad}"
            );
        }
    }

    #[test]
    fn pearson_rejects_zero_variance() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::DegenerateSeries(_))
        ));
    }

    #[test]
    fn pearson_affine_invariance() {
        let mut rng = RngStream::new(2);
        let xs = gaussian_vector(&mut rng, 12);
        let ys = gaussian_vector(&mut rng, 12);
        let base = pearson(&xs, &ys).unwrap();
        let xs2: Vec<f64> = xs.iter().map(|x| 3.5 * x + 11.0).collect();
        let ys2: Vec<f64> = ys.iter().map(|y| 0.25 * y - 4.0).collect();
        let tr = pearson(&xs2, &ys2).unwrap();
        assert!((base.coefficient - tr.coefficient).abs() < 1e-12);
        assert!((base.p_value - tr.p_value).abs() < 1e-12);
    }

    #[test]
    fn correlation_is_symmetric() {
        let mut rng = RngStream::new(3);
        let xs = gaussian_vector(&mut rng, 7);
        let ys = gaussian_vector(&mut rng, 7);
        let a = pearson(&xs, &ys).unwrap();
        let b = pearson(&ys, &xs).unwrap();
        assert_eq!(a.coefficient, b.coefficient);
        assert_eq!(a.p_value, b.p_value);
        let a = spearman(&xs, &ys).unwrap();
        let b = spearman(&ys, &xs).unwrap();
        assert_eq!(a.coefficient, b.coefficient);
        assert_eq!(a.p_value, b.p_value);
    }

    #[test]
    fn spearman_monotone_is_perfect() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [1.0, 4.0, 9.0, 16.0, 25.0];
        let r = spearman(&xs, &ys).unwrap();
        assert_eq!(r.coefficient, 1.0);
        assert_eq!(r.p_value, 0.0);
        assert_eq!(r.p_method, PMethod::ExactPermutation);
    }

    #[test]
    fn spearman_rank_difference_formula_case() {
        // sum d^2 = 2 -> rho = 1 - 6*2/120 = 0.9
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [1.0, 2.0, 3.0, 5.0, 4.0];
        let r = spearman(&xs, &ys).unwrap();
        assert!((r.coefficient - 0.9).abs() < 1e-15);
    }

    #[test]
    fn spearman_exact_p_matches_brute_force_oracle() {
        // Independent oracle route: for untied data rho = 1 - 6S/M, so
        // |rho_perm| >= |rho_obs| is the integer comparison
        // |M - 6 S_perm| >= |M - 6 S_obs|.
        let mut rng = RngStream::new(5);
        for n in [4usize, 5, 6, 7] {
            for _ in 0..5 {
                let xs = gaussian_vector(&mut rng, n);
                let ys = gaussian_vector(&mut rng, n);
                let res = spearman(&xs, &ys).unwrap();
                if res.coefficient.abs() >= 1.0 {
                    continue; // monotone short-circuit tested elsewhere
                }
                let rx: Vec<i64> = average_ranks(&xs).iter().map(|r| *r as i64).collect();
                let ry: Vec<i64> = average_ranks(&ys).iter().map(|r| *r as i64).collect();
                let m = (n * (n * n - 1)) as i64;
                let s_obs: i64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
                let obs_stat = (m - 6 * s_obs).abs();
                let mut hits = 0u64;
                let mut total = 0u64;
                let mut perm: Vec<i64> = ry.clone();
                super::for_each_permutation(&mut perm, &mut |p| {
                    let s: i64 = rx.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
                    if (m - 6 * s).abs() >= obs_stat {
                        hits += 1;
                    }
                    total += 1;
                });
                let p_oracle = hits as f64 / total as f64;
                assert_eq!(
                    res.p_value, p_oracle,
                    "exact p mismatch at n={n}: {} vs {}",
                    res.p_value, p_oracle
                );
            }
        }
    }

    #[test]
    fn spearman_monotone_transform_invariance() {
        let mut rng = RngStream::new(8);
        let xs = gaussian_vector(&mut rng, 7);
        let ys = gaussian_vector(&mut rng, 7);
        let base = spearman(&xs, &ys).unwrap();
        let xs2: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        let ys2: Vec<f64> = ys.iter().map(|y| y * y * y + 2.0 * y).collect(); // strictly increasing
        let tr = spearman(&xs2, &ys2).unwrap();
        assert_eq!(base.coefficient, tr.coefficient);
        assert_eq!(base.p_value, tr.p_value);
    }

    #[test]
    fn spearman_rejects_all_tied() {
        assert!(matches!(
            spearman(&[2.0, 2.0, 2.0, 2.0], &[1.0, 2.0, 3.0, 4.0]),
            Err(Error::DegenerateSeries(_))
        ));
    }

    #[test]
    fn spearman_handles_ties_with_mid_ranks() {
        let ranks = average_ranks(&[10.0, 20.0, 20.0, 30.0]);
        assert_eq!(ranks, vec![1.0, 2.5, 2.5, 4.0]);
        // tied data still yields a valid result
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(r.coefficient > 0.9);
    }

    #[test]
    fn t_approx_close_to_exact_for_n_6_to_8() {
        // At n >= 6 the t-approximation stays within 0.05 of the exact
        // permutation p (at n = 4 and 5 the worst-case gaps are 0.15 and
        // 0.077, so the agreement property only starts at n = 6).
        let mut rng = RngStream::new(13);
        for n in [6usize, 7, 8] {
            for _ in 0..8 {
                let xs = gaussian_vector(&mut rng, n);
                let ys = gaussian_vector(&mut rng, n);
                let res = spearman(&xs, &ys).unwrap();
                if res.coefficient.abs() >= 1.0 {
                    continue;
                }
                let approx = t_two_sided_p(res.coefficient, n);
                assert!(
                    (res.p_value - approx).abs() <= 0.05,
                    "n={n}: exact {} vs t {}",
                    res.p_value,
                    approx
                );
            }
        }
    }

    #[test]
    fn p_values_roughly_uniform_under_null() {
        // i.i.d. series, n=12, 1000 trials: between 4% and 6.5% below 0.05
        let mut rng = RngStream::new(12345);
        let mut below = 0;
        let trials = 1000;
        for _ in 0..trials {
            let xs = gaussian_vector(&mut rng, 12);
            let ys = gaussian_vector(&mut rng, 12);
            let r = spearman(&xs, &ys).unwrap();
            if r.p_value < 0.05 {
                below += 1;
            }
        }
        let frac = below as f64 / trials as f64;
        assert!(
            (0.04..=0.065).contains(&frac),
            "null rejection rate {frac}"
        );
    }

    #[test]
    fn drift_correlation_monotone_and_degenerate() {
        let layers: Vec<(f64, f64)> = (1..=6).map(|i| (i as f64, 0.1 * i as f64)).collect();
        let dc = drift_correlation(&layers).unwrap();
        assert_eq!(dc.spearman.coefficient, 1.0);
        assert_eq!(dc.spearman.p_value, 0.0);
        assert_eq!(DriftVerdict::from_p(dc.spearman.p_value), DriftVerdict::DriftExplained);

        let constant: Vec<(f64, f64)> = (1..=6).map(|i| (i as f64, 0.5)).collect();
        assert!(matches!(
            drift_correlation(&constant),
            Err(Error::DegenerateSeries(_))
        ));

        assert!(matches!(
            drift_correlation(&layers[..2]),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn ln_gamma_reference_values() {
        // Gamma(5) = 24, Gamma(0.5) = sqrt(pi)
        assert!((ln_gamma(5.0) - 24.0f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }
}
