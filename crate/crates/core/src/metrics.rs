//! Evaluation statistics: logrank test, Greenwood variance, exp-log-log
//! confidence bands, median survival, survival at fractions of the horizon,
//! calibrated median difference and bootstrap CIs of Monte-Carlo means.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::noise::NoiseSource;
use crate::survival::{count_events, km_estimate, CountMatrix, KmCurve, SurvivalDataset, TimeGrid};

/// Slack on the `S <= 0.5` comparison so products that should equal 0.5 count.
const HALF_TOL: f64 = 1e-12;

/// Horizon fractions at which survival is reported.
pub const REPORT_FRACTIONS: [f64; 3] = [0.25, 0.5, 0.75];

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile: Acklam's rational approximation (relative error
/// about 1e-9) followed by one Halley step against [`normal_cdf`].
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    const P_LOW: f64 = 0.02425;

    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - P_LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogrankResult {
    pub z: f64,
    /// Two-sided.
    pub p_value: f64,
}

/// Two-sample logrank test on the pooled distinct event times.
///
/// Times where the pooled risk set is at most one, or without events, are skipped.
pub fn logrank(a: &SurvivalDataset, b: &SurvivalDataset) -> Result<LogrankResult> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("logrank needs two nonempty datasets"));
    }
    // (time, group, event), sorted by time
    let mut rows: Vec<(f64, usize, bool)> = a
        .iter()
        .map(|r| (r.time, 0, r.event))
        .chain(b.iter().map(|r| (r.time, 1, r.event)))
        .collect();
    rows.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut at_risk = [a.len() as f64, b.len() as f64];
    let (mut num, mut var) = (0.0, 0.0);
    let mut i = 0;
    while i < rows.len() {
        let t = rows[i].0;
        let mut events = [0.0; 2];
        let mut leaving = [0.0; 2];
        while i < rows.len() && rows[i].0 == t {
            let (_, g, e) = rows[i];
            leaving[g] += 1.0;
            if e {
                events[g] += 1.0;
            }
            i += 1;
        }
        let r = at_risk[0] + at_risk[1];
        let d = events[0] + events[1];
        if r > 1.0 && d > 0.0 {
            num += events[0] - at_risk[0] * d / r;
            var += at_risk[0] * at_risk[1] * d * (r - d) / (r * r * (r - 1.0));
        }
        at_risk[0] -= leaving[0];
        at_risk[1] -= leaving[1];
    }
    if var <= 0.0 {
        return Ok(LogrankResult { z: 0.0, p_value: 1.0 });
    }
    let z = num / var.sqrt();
    let p_value = (2.0 * normal_cdf(-z.abs())).min(1.0);
    Ok(LogrankResult { z, p_value })
}

/// Greenwood variance `S(t)² Σ_{t' <= t} d/(r(r-d))` per grid point.
///
/// `None` from the first bin where `d > 0` and `r <= d` onwards.
pub fn greenwood_variance(counts: &CountMatrix, s: &KmCurve) -> Result<Vec<Option<f64>>> {
    counts.grid().check_same(s.grid())?;
    let mut acc = Some(0.0);
    Ok(counts
        .risk_sets()
        .into_iter()
        .zip(counts.events())
        .zip(s.values())
        .map(|((r, &d), &sv)| {
            if d > 0.0 {
                acc = match acc {
                    Some(a) if r > d => Some(a + d / (r * (r - d))),
                    _ => None,
                };
            }
            acc.map(|a| sv * sv * a)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBand {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub alpha: f64,
}

/// Exp-log-log band `S^{exp(±z σ / (S ln S))}` with `σ = √v`.
///
/// Pinned to `S` where `S` is 0 or 1 or the variance is undefined.
pub fn ci_loglog(s: &KmCurve, v: &[Option<f64>], alpha: f64) -> Result<ConfidenceBand> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if v.len() != s.values().len() {
        return Err(invalid("variance and curve lengths differ"));
    }
    let z = normal_quantile(1.0 - alpha / 2.0);
    let (lower, upper) = s
        .values()
        .iter()
        .zip(v)
        .map(|(&sv, var)| match var {
            Some(var) if sv > 0.0 && sv < 1.0 => {
                let w = z * var.sqrt() / (sv * sv.ln());
                (sv.powf((-w).exp()), sv.powf(w.exp()))
            }
            _ => (sv, sv),
        })
        .unzip();
    Ok(ConfidenceBand { lower, upper, alpha })
}

fn first_at_or_below_half(values: &[f64], grid: &TimeGrid) -> Option<f64> {
    values
        .iter()
        .position(|&v| v <= 0.5 + HALF_TOL)
        .map(|j| grid.point(j))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianSummary {
    pub median: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// First grid time with `S <= 0.5`. With a band, the CI runs from the first time
/// the lower band reaches 0.5 to the first time the upper band does.
pub fn median_survival(s: &KmCurve, band: Option<&ConfidenceBand>) -> MedianSummary {
    let grid = s.grid();
    MedianSummary {
        median: first_at_or_below_half(s.values(), grid),
        lower: band.and_then(|b| first_at_or_below_half(&b.lower, grid)),
        upper: band.and_then(|b| first_at_or_below_half(&b.upper, grid)),
    }
}

/// Grid index used for `survival_at(s, fraction)`.
pub fn fraction_index(grid: &TimeGrid, fraction: f64) -> usize {
    grid.floor_index(fraction * grid.t_max())
}

/// Step-function value at `fraction · t_max`.
pub fn survival_at(s: &KmCurve, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(invalid(format!("fraction must lie in (0, 1), got {fraction}")));
    }
    Ok(s.values()[fraction_index(s.grid(), fraction)])
}

/// Calibrated median difference `|m - ref| / ref`.
pub fn cmd(median: f64, median_ref: f64) -> Result<f64> {
    if !(median_ref > 0.0) {
        return Err(invalid(format!("reference median must be positive, got {median_ref}")));
    }
    Ok((median - median_ref).abs() / median_ref)
}

/// Median of the product-limit estimate over the raw distinct times.
pub fn raw_median(ds: &SurvivalDataset) -> Option<f64> {
    let sorted = ds.sorted();
    let recs = sorted.records();
    let mut at_risk = recs.len() as f64;
    let mut s = 1.0;
    let mut i = 0;
    while i < recs.len() {
        let t = recs[i].time;
        let (mut d, mut leaving) = (0.0, 0.0);
        while i < recs.len() && recs[i].time == t {
            leaving += 1.0;
            if recs[i].event {
                d += 1.0;
            }
            i += 1;
        }
        if d > 0.0 {
            s *= (at_risk - d) / at_risk;
            if s <= 0.5 + HALF_TOL {
                return Some(t);
            }
        }
        at_risk -= leaving;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub fraction: f64,
    pub time: f64,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Summary statistics of one estimated curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Logrank p-value against the reference dataset, if one was given.
    pub p_value: Option<f64>,
    pub median: MedianSummary,
    pub survival: Vec<SurvivalPoint>,
}

impl MetricReport {
    pub fn survival_value(&self, fraction: f64) -> Option<f64> {
        self.survival
            .iter()
            .find(|p| (p.fraction - fraction).abs() < 1e-12)
            .map(|p| p.value)
    }
}

/// KM curve, Greenwood band and all report statistics for a gridded dataset.
pub fn evaluate(
    ds: &SurvivalDataset,
    grid: &TimeGrid,
    reference: Option<&SurvivalDataset>,
    alpha: f64,
) -> Result<(KmCurve, ConfidenceBand, MetricReport)> {
    let counts = count_events(ds, grid)?;
    let s = km_estimate(&counts);
    let band = ci_loglog(&s, &greenwood_variance(&counts, &s)?, alpha)?;
    let p_value = match reference {
        Some(r) if !ds.is_empty() => Some(logrank(ds, r)?.p_value),
        _ => None,
    };
    let median = median_survival(&s, Some(&band));
    let survival = REPORT_FRACTIONS
        .iter()
        .map(|&f| {
            let j = fraction_index(grid, f);
            SurvivalPoint {
                fraction: f,
                time: grid.point(j),
                value: s.values()[j],
                lower: band.lower[j],
                upper: band.upper[j],
            }
        })
        .collect();
    let report = MetricReport {
        p_value,
        median,
        survival,
    };
    Ok((s, band, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCI {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub resamples: usize,
}

/// Default number of bootstrap resamples.
pub const BOOTSTRAP_RESAMPLES: usize = 10_000;

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap CI for the mean of `samples`.
pub fn bootstrap_mean_ci(
    samples: &[f64],
    resamples: usize,
    alpha: f64,
    rng: &mut impl NoiseSource,
) -> Result<BootstrapCI> {
    if samples.is_empty() {
        return Err(invalid("bootstrap needs at least one sample"));
    }
    if resamples == 0 {
        return Err(invalid("bootstrap needs at least one resample"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let n = samples.len();
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    // Averages are taken relative to the first sample and clamped to the sample
    // range, so identical samples give exactly that value back.
    let shift = samples[0];
    let average = |sum_dev: f64| (shift + sum_dev / n as f64).clamp(lo, hi);
    let mean = average(samples.iter().map(|x| x - shift).sum());
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| average((0..n).map(|_| samples[rng.index(n)] - shift).sum()))
        .collect();
    means.sort_by(f64::total_cmp);
    let lower = quantile_sorted(&means, alpha / 2.0).min(mean);
    let upper = quantile_sorted(&means, 1.0 - alpha / 2.0).max(mean);
    Ok(BootstrapCI {
        mean,
        lower,
        upper,
        resamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::SeededNoise;
    use crate::survival::tests::{toy_dataset, toy_grid};
    use crate::survival::{build_grid, SurvivalRecord};
    use proptest::prelude::*;

    /// erfc by its Taylor series for erf; fine for |x| < 3.
    fn erfc_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            term *= -x * x / n as f64;
            sum += term / (2 * n + 1) as f64;
        }
        1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum
    }

    fn toy() -> (CountMatrix, KmCurve) {
        let m = count_events(&toy_dataset(), &toy_grid()).unwrap();
        let s = km_estimate(&m);
        (m, s)
    }

    #[test]
    fn quantile_reference() {
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((normal_quantile(0.5)).abs() < 1e-15);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-15);
        for x in [-2.5, -0.5, -0.1, 0.3, 0.7071067811865476, 1.9] {
            let oracle = 0.5 * erfc_series(-x / 2f64.sqrt());
            assert!((normal_cdf(x) - oracle).abs() < 1e-14, "x={x}");
        }
    }

    proptest! {
        #[test]
        fn quantile_inverts_cdf(p in 1e-10f64..(1.0 - 1e-10)) {
            let x = normal_quantile(p);
            prop_assert!((normal_cdf(x) - p).abs() <= 1e-12 * p.min(1.0 - p).max(1e-3));
        }
    }

    #[test]
    fn logrank_identical() {
        let a = toy_dataset();
        let r = logrank(&a, &a).unwrap();
        assert_eq!(r.z, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn logrank_small_instance() {
        let a = SurvivalDataset::from_pairs([(1.0, true), (2.0, true)]).unwrap();
        let b = SurvivalDataset::from_pairs([(1.0, true), (3.0, true)]).unwrap();
        // t=1: r=(2,2), d=(1,1): O-E = 1 - 1, V = 2·2·2·2/(16·3) = 1/3
        // t=2: r=(1,1), d=(1,0): O-E = 1 - 1/2, V = 1·1·1·1/(4·1) = 1/4
        // t=3: pooled risk set 1, skipped
        let z = 0.5 / (1.0f64 / 3.0 + 0.25).sqrt();
        let p = erfc_series(z / 2f64.sqrt());
        let r = logrank(&a, &b).unwrap();
        assert!((r.z - z).abs() < 1e-10, "{} vs {z}", r.z);
        assert!((r.p_value - p).abs() < 1e-10, "{} vs {p}", r.p_value);
        let swapped = logrank(&b, &a).unwrap();
        assert!((swapped.z + r.z).abs() < 1e-15);
        assert_eq!(swapped.p_value, r.p_value);
    }

    #[test]
    fn logrank_rejects_empty() {
        assert!(logrank(&SurvivalDataset::default(), &toy_dataset()).is_err());
    }

    #[test]
    fn logrank_no_events_gives_unit_p() {
        let a = SurvivalDataset::from_pairs([(1.0, false), (2.0, false)]).unwrap();
        let b = SurvivalDataset::from_pairs([(3.0, false)]).unwrap();
        assert_eq!(logrank(&a, &b).unwrap().p_value, 1.0);
    }

    #[test]
    fn greenwood_toy() {
        let (m, s) = toy();
        let v = greenwood_variance(&m, &s).unwrap();
        assert_eq!(v[0], Some(0.0));
        assert!((v[1].unwrap() - 0.032).abs() < 1e-15);
        // t=2: S=0.6, Σ = 1/20 + 1/12
        assert!((v[2].unwrap() - 0.36 * (0.05 + 1.0 / 12.0)).abs() < 1e-15);
        // t=4: r=2, d=1 → term 1/2
        assert!((v[4].unwrap() - 0.09 * (0.05 + 1.0 / 12.0 + 0.5)).abs() < 1e-15);
        for w in v[..5].windows(2) {
            assert!(w[1].unwrap() + 1e-15 >= w[0].unwrap());
        }
    }

    #[test]
    fn greenwood_undefined_after_exhaustion() {
        let ds = SurvivalDataset::from_pairs([(1.0, true), (2.0, true)]).unwrap();
        let g = toy_grid();
        let m = count_events(&ds, &g).unwrap();
        let v = greenwood_variance(&m, &km_estimate(&m)).unwrap();
        assert!(v[1].is_some());
        assert!(v[2..].iter().all(Option::is_none));
    }

    #[test]
    fn band_toy() {
        let (m, s) = toy();
        let v = greenwood_variance(&m, &s).unwrap();
        let band = ci_loglog(&s, &v, 0.05).unwrap();
        assert_eq!((band.lower[0], band.upper[0]), (1.0, 1.0));
        // direct evaluation at S = 0.8, v = 0.032
        let z = 1.959_963_984_540_054;
        let w = z * 0.032f64.sqrt() / (0.8 * 0.8f64.ln());
        let lo = 0.8f64.powf((-w).exp());
        let hi = 0.8f64.powf(w.exp());
        assert!((band.lower[1] - lo).abs() < 1e-9);
        assert!((band.upper[1] - hi).abs() < 1e-9);
        assert!(lo < 0.8 && 0.8 < hi);
        for ((l, u), sv) in band.lower.iter().zip(&band.upper).zip(s.values()) {
            assert!(l <= sv && sv <= u);
            assert!((0.0..=1.0).contains(l) && (0.0..=1.0).contains(u));
        }
    }

    #[test]
    fn median_toy() {
        let (m, s) = toy();
        assert_eq!(median_survival(&s, None).median, Some(4.0));
        let band = ci_loglog(&s, &greenwood_variance(&m, &s).unwrap(), 0.05).unwrap();
        let med = median_survival(&s, Some(&band));
        assert!(med.lower.unwrap() <= 4.0);
        assert!(med.upper.map_or(true, |u| u >= 4.0));

        let flat = KmCurve::new(toy_grid(), vec![1.0; 6]).unwrap();
        assert_eq!(median_survival(&flat, None).median, None);
    }

    #[test]
    fn survival_at_toy() {
        let (_, s) = toy();
        assert!((survival_at(&s, 0.4).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(survival_at(&s, 1e-9).unwrap(), 1.0);
        assert!(survival_at(&s, 0.0).is_err());
        assert!(survival_at(&s, 1.0).is_err());
    }

    #[test]
    fn cmd_values() {
        assert_eq!(cmd(24.0, 24.0).unwrap(), 0.0);
        assert!((cmd(26.0, 24.0).unwrap() - 0.083).abs() < 5e-4);
        assert_eq!(cmd(22.0, 24.0).unwrap(), cmd(26.0, 24.0).unwrap());
        assert!(cmd(1.0, 0.0).is_err());
    }

    #[test]
    fn raw_median_matches_grid_median_on_grid_data() {
        assert_eq!(raw_median(&toy_dataset()), Some(4.0));
        let ds = SurvivalDataset::from_pairs([(0.3, true), (0.7, true), (1.1, false)]).unwrap();
        assert_eq!(raw_median(&ds), Some(0.7));
    }

    #[test]
    fn evaluate_toy() {
        let (s, _, rep) = evaluate(&toy_dataset(), &toy_grid(), Some(&toy_dataset()), 0.05).unwrap();
        for (a, b) in s.values().iter().zip([1.0, 0.8, 0.6, 0.6, 0.3, 0.3]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(rep.p_value, Some(1.0));
        assert_eq!(rep.median.median, Some(4.0));
        for (f, v) in [(0.25, 0.8), (0.5, 0.6), (0.75, 0.6)] {
            assert!((rep.survival_value(f).unwrap() - v).abs() < 1e-15);
        }
    }

    #[test]
    fn bootstrap_degenerate() {
        let ci = bootstrap_mean_ci(&[2.5; 40], 1000, 0.05, &mut SeededNoise::new(0)).unwrap();
        assert_eq!((ci.mean, ci.lower, ci.upper), (2.5, 2.5, 2.5));
        let ci = bootstrap_mean_ci(&[0.7; 40], 1000, 0.05, &mut SeededNoise::new(0)).unwrap();
        assert_eq!((ci.mean, ci.lower, ci.upper), (0.7, 0.7, 0.7));
        let one = bootstrap_mean_ci(&[7.0], 10, 0.05, &mut SeededNoise::new(0)).unwrap();
        assert_eq!((one.lower, one.upper), (7.0, 7.0));
        assert!(bootstrap_mean_ci(&[], 10, 0.05, &mut SeededNoise::new(0)).is_err());
    }

    #[test]
    fn bootstrap_binary_width() {
        let samples: Vec<f64> = (0..1000).map(|i| (i % 2) as f64).collect();
        let ci = bootstrap_mean_ci(&samples, BOOTSTRAP_RESAMPLES, 0.05, &mut SeededNoise::new(1)).unwrap();
        assert!(ci.lower < 0.5 && 0.5 < ci.upper);
        let normal_width = 2.0 * 1.96 * 0.5 / 1000f64.sqrt();
        let width = ci.upper - ci.lower;
        assert!((width / normal_width - 1.0).abs() < 0.2, "width {width}");
    }

    #[test]
    fn bootstrap_narrows_with_more_samples() {
        let mut narrower = 0;
        for rep in 0..20 {
            let mut rng = SeededNoise::new(100 + rep);
            let draw = |n: usize, rng: &mut SeededNoise| -> Vec<f64> { (0..n).map(|_| rng.uniform()).collect() };
            let small = draw(100, &mut rng);
            let large = draw(400, &mut rng);
            let a = bootstrap_mean_ci(&small, 2000, 0.05, &mut rng).unwrap();
            let b = bootstrap_mean_ci(&large, 2000, 0.05, &mut rng).unwrap();
            if b.upper - b.lower < a.upper - a.lower {
                narrower += 1;
            }
        }
        assert_eq!(narrower, 20);
    }

    fn arb_dataset() -> impl Strategy<Value = SurvivalDataset> {
        prop::collection::vec((1u32..=10, any::<bool>()), 1..40).prop_map(|v| {
            v.into_iter()
                .map(|(t, e)| SurvivalRecord::new(t as f64, e))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn logrank_self_is_one(a in arb_dataset()) {
            prop_assert_eq!(logrank(&a, &a).unwrap().p_value, 1.0);
        }

        #[test]
        fn logrank_antisymmetric(a in arb_dataset(), b in arb_dataset()) {
            let x = logrank(&a, &b).unwrap();
            let y = logrank(&b, &a).unwrap();
            prop_assert!((x.z + y.z).abs() < 1e-9);
            prop_assert!((x.p_value - y.p_value).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&x.p_value));
        }

        #[test]
        fn band_contains_curve(a in arb_dataset()) {
            let g = build_grid(10.0, 1.0).unwrap();
            let m = count_events(&a, &g).unwrap();
            let s = km_estimate(&m);
            let band = ci_loglog(&s, &greenwood_variance(&m, &s).unwrap(), 0.05).unwrap();
            for ((l, u), sv) in band.lower.iter().zip(&band.upper).zip(s.values()) {
                prop_assert!(*l <= sv + 1e-15 && sv <= &(u + 1e-15));
            }
        }

        #[test]
        fn survival_at_monotone(a in arb_dataset(), f1 in 0.01f64..0.99, f2 in 0.01f64..0.99) {
            let g = build_grid(10.0, 1.0).unwrap();
            let s = km_estimate(&count_events(&a, &g).unwrap());
            let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
            prop_assert!(survival_at(&s, hi).unwrap() <= survival_at(&s, lo).unwrap());
        }

        #[test]
        fn bootstrap_within_range(v in prop::collection::vec(-5.0f64..5.0, 1..50), seed in any::<u64>()) {
            let ci = bootstrap_mean_ci(&v, 200, 0.05, &mut SeededNoise::new(seed)).unwrap();
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= ci.lower && ci.lower <= ci.mean && ci.mean <= ci.upper && ci.upper <= hi);
        }
    }
}
