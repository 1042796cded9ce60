//! The statistical instruments used by the experiments and acceptance checks.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

use crate::error::{MottError, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub experiment: String,
    pub params: serde_json::Value,
    pub seeds: Vec<u64>,
    pub excluded: usize,
}

/// Finite values plus where they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl Sample {
    pub fn new(values: Vec<f64>, provenance: Provenance) -> Result<Self> {
        check_finite(&values)?;
        Ok(Self { values, provenance })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut s = String::from("value\n");
        for v in &self.values {
            s.push_str(&format!("{v:e}\n"));
        }
        std::fs::write(path, s)?;
        Ok(())
    }
}

fn check_finite(v: &[f64]) -> Result<()> {
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(MottError::domain(format!("sample contains non-finite value {x}")));
    }
    Ok(())
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance.
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// (max - min) / mean.
pub fn relative_spread(v: &[f64]) -> f64 {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo) / mean(v).abs()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(v: &[f64]) -> Result<Self> {
        check_finite(v)?;
        Ok(Self { sorted: sorted(v) })
    }

    /// Fraction of values <= x.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&y| y <= x) as f64 / self.sorted.len() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }
}

/// Kolmogorov survival function Q(x) = 2 sum_{j>=1} (-1)^{j-1} e^{-2 j^2 x^2}.
pub fn kolmogorov_q(x: f64) -> f64 {
    if x < 0.18 {
        return 1.0;
    }
    let mut s = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * x * x).exp();
        s += if j % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub effective_size: f64,
}

fn ks_p(d: f64, ne: f64) -> f64 {
    let s = ne.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.len() < 25 || b.len() < 25 {
        return Err(MottError::param(format!("KS needs at least 25 values per sample, got {} and {}", a.len(), b.len())));
    }
    check_finite(a)?;
    check_finite(b)?;
    let (sa, sb) = (sorted(a), sorted(b));
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    Ok(KsResult {
        statistic: d,
        p_value: ks_p(d, ne),
        effective_size: ne,
    })
}

pub fn ks_one_sample(a: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if a.len() < 25 {
        return Err(MottError::param("KS needs at least 25 values"));
    }
    check_finite(a)?;
    let s = sorted(a);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (k, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - k as f64 / n).max((k + 1) as f64 / n - f);
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p(d, n),
        effective_size: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HillEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub k: usize,
    pub threshold: f64,
    /// (k, estimate) along a range of tail sizes, for the diagnostic plot.
    pub curve: Vec<(usize, f64)>,
    /// Estimate at k/4 differs from the one at k by more than sampling noise.
    pub nonlinear: bool,
}

fn hill_at(desc: &[f64], k: usize) -> f64 {
    let lk = desc[k].ln();
    let g = desc[..k].iter().map(|x| x.ln() - lk).sum::<f64>() / k as f64;
    1.0 / g
}

/// Hill estimate of the tail index from the top fraction of the sample.
pub fn hill_tail_index(v: &[f64], top_fraction: f64) -> Result<HillEstimate> {
    check_finite(v)?;
    let k = (top_fraction * v.len() as f64).floor() as usize;
    if k < 50 || k >= v.len() {
        return Err(MottError::param(format!("Hill needs at least 50 tail values and a threshold inside the sample, got k = {k}")));
    }
    let mut desc = v.to_vec();
    desc.sort_by(|a, b| b.total_cmp(a));
    if !(desc[k] > 0.0) {
        return Err(MottError::domain("nonpositive value inside the Hill tail window"));
    }
    let est = hill_at(&desc, k);
    let mut curve = Vec::new();
    let mut j = 12.max(k / 16);
    while j <= (4 * k).min(desc.len() - 1) {
        if desc[j] > 0.0 {
            curve.push((j, hill_at(&desc, j)));
        }
        j *= 2;
    }
    let quarter = hill_at(&desc, (k / 4).max(1));
    let nonlinear = (quarter - est).abs() > 4.0 * 3f64.sqrt() * est / (k as f64).sqrt();
    Ok(HillEstimate {
        estimate: est,
        stderr: est / (k as f64).sqrt(),
        k,
        threshold: desc[k],
        curve,
        nonlinear,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub sizes: Vec<f64>,
    pub variances: Vec<f64>,
}

/// Least-squares slope of log variance against log size.
pub fn variance_scaling_fit(groups: &[(f64, &[f64])]) -> Result<ScalingFit> {
    let vars: Vec<f64> = groups
        .iter()
        .map(|(_, s)| if s.len() < 2 { f64::NAN } else { variance(s) })
        .collect();
    fit_power(&groups.iter().map(|g| g.0).collect::<Vec<_>>(), &vars)
}

/// Same fit with the variances already computed.
pub fn fit_power(sizes: &[f64], variances: &[f64]) -> Result<ScalingFit> {
    if sizes.len() < 3 || sizes.len() != variances.len() {
        return Err(MottError::param("scaling fit needs at least 3 sizes"));
    }
    if variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) || sizes.iter().any(|n| !(*n > 0.0)) {
        return Err(MottError::domain("degenerate variance or size in scaling fit"));
    }
    let x: Vec<f64> = sizes.iter().map(|n| n.ln()).collect();
    let y: Vec<f64> = variances.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&x), mean(&y));
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(MottError::domain("all sizes are equal"));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let dof = (x.len() as f64 - 2.0).max(1.0);
    Ok(ScalingFit {
        slope,
        intercept,
        slope_stderr: (resid / dof / sxx).sqrt(),
        sizes: sizes.to_vec(),
        variances: variances.to_vec(),
    })
}

/// Interval p +- z sqrt(p(1-p)/n) for an empirical proportion.
pub fn binomial_band(p: f64, trials: usize, z: f64) -> (f64, f64) {
    let s = z * (p * (1.0 - p) / trials as f64).sqrt();
    (p - s, p + s)
}

/// Interval mu +- z sqrt(mu/m) for the mean of m Poisson(mu) counts.
pub fn poisson_band(mu: f64, m: usize, z: f64) -> (f64, f64) {
    let s = z * (mu / m as f64).sqrt();
    (mu - s, mu + s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness of fit of integer counts to Poisson(mu), merging sparse
/// bins until each expects at least 5 observations.
pub fn poisson_chi_square(counts: &[u64], mu: f64) -> Result<ChiSquareResult> {
    if counts.len() < 25 || !(mu > 0.0) {
        return Err(MottError::param("chi-square test needs at least 25 counts and a positive mean"));
    }
    let m = counts.len() as f64;
    let pois = Poisson::new(mu).map_err(|e| MottError::param(format!("{e}")))?;
    let max = *counts.iter().max().unwrap();
    let mut hist = vec![0u64; max as usize + 1];
    for &c in counts {
        hist[c as usize] += 1;
    }
    // bins [lo, hi] with the last one open to the right
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    let mut k: u64 = 0;
    let mut cum = 0.0;
    loop {
        let p = pois.pmf(k);
        cum += p;
        obs += hist.get(k as usize).copied().unwrap_or(0) as f64;
        exp += m * p;
        k += 1;
        if exp >= 5.0 {
            bins.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
        if m * (1.0 - cum) < 5.0 || (k > max && m * (1.0 - cum) < 5.0) {
            break;
        }
    }
    let rest_obs = obs + counts.iter().filter(|&&c| c >= k).count() as f64;
    let rest_exp = exp + m * (1.0 - cum).max(0.0);
    match bins.last_mut() {
        Some(last) if rest_exp < 5.0 => {
            last.0 += rest_obs;
            last.1 += rest_exp;
        }
        _ => bins.push((rest_obs, rest_exp)),
    }
    if bins.len() < 2 {
        return Err(MottError::domain("too few populated bins for a chi-square test"));
    }
    let stat: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len() - 1;
    let chi = ChiSquared::new(dof as f64).map_err(|e| MottError::param(format!("{e}")))?;
    Ok(ChiSquareResult {
        statistic: stat,
        dof,
        p_value: 1.0 - chi.cdf(stat),
    })
}
