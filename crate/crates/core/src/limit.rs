//! The scaling limit: two-sided stable subordinators, their exponential tilt,
//! and the time-changed Brownian motion simulated as a birth-death chain in
//! resistance coordinates.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{MottError, Result};
use crate::graph::BandedGraph;
use crate::rng::{purpose, RngStream, StreamRng};
use crate::walk::WeightedChain;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub location: f64,
    pub size: f64,
}

/// Jumps above a threshold plus a deterministic drift standing in for the
/// jumps below it. With `theta > 0` every contribution at location v carries
/// the factor e^{-theta v}; jump sizes are stored already scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubordinatorPath {
    #[serde(rename = "K")]
    pub k: f64,
    pub jumps: Vec<Jump>,
    pub threshold: f64,
    pub drift: f64,
    pub theta: f64,
    pub tilted: bool,
    pub tail_index: f64,
    pub intensity: f64,
}

fn check_tail(tail: f64) -> Result<()> {
    if !(tail > 0.0 && tail < 1.0) {
        return Err(MottError::param(format!("tail index must lie in (0,1), got {tail}")));
    }
    Ok(())
}

/// Mean of the jumps below eps per unit length: C a eps^{1-a} / (1-a).
pub fn small_jump_drift(tail: f64, c: f64, eps: f64) -> f64 {
    c * tail * eps.powf(1.0 - tail) / (1.0 - tail)
}

/// Variance of the jumps below eps per unit length: C a eps^{2-a} / (2-a).
pub fn small_jump_variance(tail: f64, c: f64, eps: f64) -> f64 {
    c * tail * eps.powf(2.0 - tail) / (2.0 - tail)
}

/// Threshold at which the fluctuation of the omitted jumps over a length
/// `len` is `tol` times the natural scale (len C)^{1/a} of S over that length.
pub fn epsilon_for_fluctuation(tail: f64, c: f64, len: f64, tol: f64) -> f64 {
    let scale = (len * c).powf(1.0 / tail);
    let target = (tol * scale).powi(2) / len;
    (target * (2.0 - tail) / (c * tail)).powf(1.0 / (2.0 - tail))
}

/// Default threshold for a two-sided path on [-K, K].
pub fn default_epsilon(tail: f64, c: f64, k: f64) -> f64 {
    epsilon_for_fluctuation(tail, c, 2.0 * k, 1e-3)
}

pub fn sample_subordinator(tail: f64, c: f64, k: f64, eps: f64, stream: RngStream) -> Result<SubordinatorPath> {
    sample_subordinator_with(tail, c, k, eps, &mut stream.rng())
}

pub fn sample_subordinator_with(tail: f64, c: f64, k: f64, eps: f64, rng: &mut StreamRng) -> Result<SubordinatorPath> {
    check_tail(tail)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(MottError::param("intensity C must be positive"));
    }
    if !(eps > 0.0) || !(k > 0.0) {
        return Err(MottError::param("threshold and window must be positive"));
    }
    let mean = 2.0 * k * c * eps.powf(-tail);
    let count = if mean > 0.0 {
        Poisson::new(mean)
            .map_err(|e| MottError::param(format!("poisson mean {mean}: {e}")))?
            .sample(rng) as usize
    } else {
        0
    };
    let mut jumps: Vec<Jump> = (0..count)
        .map(|_| {
            let loc = -k + 2.0 * k * rng.random::<f64>();
            let v: f64 = rng.sample(Open01);
            Jump {
                location: loc,
                size: eps * v.powf(-1.0 / tail),
            }
        })
        .collect();
    jumps.sort_by(|a, b| a.location.total_cmp(&b.location));
    Ok(SubordinatorPath {
        k,
        jumps,
        threshold: eps,
        drift: small_jump_drift(tail, c, eps),
        theta: 0.0,
        tilted: false,
        tail_index: tail,
        intensity: c,
    })
}

impl SubordinatorPath {
    /// drift * integral_a^b e^{-theta v} dv.
    pub fn drift_integral(&self, a: f64, b: f64) -> f64 {
        if self.theta == 0.0 {
            self.drift * (b - a)
        } else {
            self.drift * ((-self.theta * a).exp() - (-self.theta * b).exp()) / self.theta
        }
    }

    /// Increment S(b) - S(a) for a <= b: drift plus jumps with a < v <= b.
    pub fn increment(&self, a: f64, b: f64) -> f64 {
        let lo = self.jumps.partition_point(|j| j.location <= a);
        let hi = self.jumps.partition_point(|j| j.location <= b);
        self.drift_integral(a, b) + self.jumps[lo..hi].iter().map(|j| j.size).sum::<f64>()
    }

    /// Right-continuous S with S(0) = 0.
    pub fn value(&self, u: f64) -> f64 {
        if u >= 0.0 {
            self.increment(0.0, u)
        } else {
            -self.increment(u, 0.0)
        }
    }

    /// Jumps-only part of S(b) - S(a).
    pub fn jump_sum(&self, a: f64, b: f64) -> f64 {
        self.increment(a, b) - self.drift_integral(a, b)
    }

    /// Number of jumps of size >= x.
    pub fn count_at_least(&self, x: f64) -> usize {
        self.jumps.iter().filter(|j| j.size >= x).count()
    }

    /// The same path on the smaller window [-k, k].
    pub fn restrict(&self, k: f64) -> Result<Self> {
        if !(k > 0.0 && k <= self.k) {
            return Err(MottError::param("restriction window must lie inside the path window"));
        }
        let mut out = self.clone();
        out.k = k;
        out.jumps.retain(|j| j.location >= -k && j.location <= k);
        Ok(out)
    }
}

/// Scale every contribution at v by e^{-2 lambda v / rho}.
pub fn tilt_path(path: &SubordinatorPath, lambda: f64, rho: f64) -> Result<SubordinatorPath> {
    if path.tilted {
        return Err(MottError::Provenance("path is already tilted".into()));
    }
    if !(lambda >= 0.0) || !(rho > 0.0) {
        return Err(MottError::param("tilt needs lambda >= 0 and rho > 0"));
    }
    if lambda == 0.0 {
        return Ok(path.clone());
    }
    let theta = 2.0 * lambda / rho;
    let mut out = path.clone();
    for j in &mut out.jumps {
        j.size *= (-theta * j.location).exp();
    }
    out.theta = theta;
    out.tilted = true;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Limit chain

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitProvenance {
    pub tail_index: f64,
    pub intensity: f64,
    pub threshold: f64,
    pub theta: f64,
    pub lambda: f64,
    pub rho: f64,
    pub mass_const: f64,
    /// Trap mode: (kappa, E[c^kappa]).
    pub trap: Option<(f64, f64)>,
}

/// Birth-death chain on the grid u_k = -K + k delta: conductance 1 / (S(u_{k+1}) - S(u_k))
/// between neighbours and the speed measure of each site's cell as mass.
#[derive(Debug, Clone)]
pub struct LimitChain {
    pub grid: Vec<f64>,
    pub increments: Vec<f64>,
    pub masses: Vec<f64>,
    pub delta: f64,
    pub provenance: LimitProvenance,
    chain: WeightedChain,
}

fn tilt_integral(a: f64, b: f64, phi: f64) -> f64 {
    // integral_a^b e^{phi u} du
    if phi == 0.0 {
        b - a
    } else {
        ((phi * b).exp() - (phi * a).exp()) / phi
    }
}

pub fn build_limit_chain(
    path: &SubordinatorPath,
    lambda: f64,
    rho: f64,
    mass_const: f64,
    delta: f64,
    trap: Option<(&SubordinatorPath, f64)>,
) -> Result<LimitChain> {
    if !(mass_const > 0.0) {
        return Err(MottError::param("mass constant must be positive"));
    }
    let k = path.k;
    let cells = (2.0 * k / delta).round() as usize;
    if cells < 2 || ((cells as f64) * delta - 2.0 * k).abs() > 1e-9 * k.max(1.0) {
        return Err(MottError::param(format!("delta {delta} must divide 2K = {} into at least 2 cells", 2.0 * k)));
    }
    if let Some((tp, _)) = trap {
        if (tp.k - k).abs() > 1e-12 {
            return Err(MottError::param("trap subordinator must live on the same window"));
        }
    }
    let grid: Vec<f64> = (0..=cells).map(|i| -k + i as f64 * delta).collect();

    let mut increments = vec![0.0; cells];
    for (c, inc) in increments.iter_mut().enumerate() {
        *inc = path.drift_integral(grid[c], grid[c + 1]);
    }
    for j in &path.jumps {
        let c = (((j.location + k) / delta).ceil() as isize - 1).clamp(0, cells as isize - 1) as usize;
        increments[c] += j.size;
    }
    for (c, &inc) in increments.iter().enumerate() {
        if !(inc > 0.0 && inc.is_finite()) {
            return Err(MottError::Grid {
                message: format!("cell {c} has increment {inc}"),
                suggested_delta: 2.0 * delta,
            });
        }
    }

    let phi = 2.0 * lambda / rho;
    let cell_of = |i: usize| -> (f64, f64) {
        let lo = if i == 0 { grid[0] } else { grid[i] - 0.5 * delta };
        let hi = if i == cells { grid[cells] } else { grid[i] + 0.5 * delta };
        (lo, hi)
    };
    let masses: Vec<f64> = match trap {
        None => (0..=cells)
            .map(|i| {
                let (lo, hi) = cell_of(i);
                mass_const * tilt_integral(lo, hi, phi)
            })
            .collect(),
        Some((tp, trap_const)) => {
            if tp.tilted {
                return Err(MottError::Provenance("trap subordinator must be untilted".into()));
            }
            let mut m: Vec<f64> = (0..=cells)
                .map(|i| {
                    let (lo, hi) = cell_of(i);
                    tp.drift * tilt_integral(lo, hi, phi)
                })
                .collect();
            for j in &tp.jumps {
                let i = (((j.location + k) / delta + 0.5).floor() as isize).clamp(0, cells as isize) as usize;
                m[i] += j.size * (phi * j.location).exp();
            }
            m.iter().map(|x| trap_const * x).collect()
        }
    };
    if let Some((c, &m)) = masses.iter().enumerate().find(|(_, m)| !(**m > 0.0 && m.is_finite())) {
        return Err(MottError::Grid {
            message: format!("site {c} has mass {m}"),
            suggested_delta: 2.0 * delta,
        });
    }

    let edges: Vec<(usize, usize, f64)> = increments.iter().enumerate().map(|(c, &d)| (c, c + 1, 1.0 / d)).collect();
    let graph = BandedGraph::from_edges(cells + 1, &edges)?;
    let chain = WeightedChain::new(graph, masses.clone(), grid.clone(), (cells / 2) as i64)?;
    Ok(LimitChain {
        grid,
        increments,
        masses,
        delta,
        provenance: LimitProvenance {
            tail_index: path.tail_index,
            intensity: path.intensity,
            threshold: path.threshold,
            theta: path.theta,
            lambda,
            rho,
            mass_const,
            trap: trap.map(|(tp, c)| (tp.tail_index, c)),
        },
        chain,
    })
}

impl LimitChain {
    pub fn chain(&self) -> &WeightedChain {
        &self.chain
    }

    /// Site whose grid point is u = 0 (or the nearest one).
    pub fn origin(&self) -> usize {
        let k = self.grid[self.grid.len() - 1];
        ((k / self.delta).round() as usize).min(self.grid.len() - 1)
    }
}

/// Z at each requested time for one run started at u = 0. None when the run
/// reached the window edge by the last time.
pub fn z_run(chain: &LimitChain, t_values: &[f64], rng: &mut StreamRng) -> Option<Vec<f64>> {
    let wc = chain.chain();
    let last = wc.sites() - 1;
    let mut watch = vec![false; wc.sites()];
    watch[0] = true;
    watch[last] = true;
    let mut s = chain.origin();
    let mut now = 0.0;
    let mut out = Vec::with_capacity(t_values.len());
    let mut touched = false;
    for &t in t_values {
        let adv = wc.advance_until(s, (t - now).max(0.0), rng, Some(&watch));
        touched |= adv.touched;
        s = adv.site;
        now = now.max(t);
        out.push(chain.grid[s]);
    }
    (!touched).then_some(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZSamples {
    pub t_values: Vec<f64>,
    /// samples[m] holds Z_{t_m} for every accepted replicate.
    pub samples: Vec<Vec<f64>>,
    pub excluded: usize,
    pub replicates: usize,
}

impl ZSamples {
    fn collect(t_values: &[f64], runs: Vec<Option<Vec<f64>>>) -> Self {
        let mut samples = vec![Vec::new(); t_values.len()];
        let mut excluded = 0;
        let replicates = runs.len();
        for r in runs {
            match r {
                Some(v) => {
                    for (m, x) in v.into_iter().enumerate() {
                        samples[m].push(x);
                    }
                }
                None => excluded += 1,
            }
        }
        Self {
            t_values: t_values.to_vec(),
            samples,
            excluded,
            replicates,
        }
    }
}

fn check_times(t_values: &[f64], replicates: usize) -> Result<()> {
    if replicates < 100 {
        return Err(MottError::param("simulate_z needs at least 100 replicates"));
    }
    if t_values.iter().any(|t| !(*t >= 0.0)) || t_values.windows(2).any(|w| w[1] < w[0]) {
        return Err(MottError::param("times must be nonnegative and nondecreasing"));
    }
    Ok(())
}

/// Quenched samples: every replicate runs on the same chain.
pub fn simulate_z(chain: &LimitChain, t_values: &[f64], replicates: usize, stream: RngStream) -> Result<ZSamples> {
    check_times(t_values, replicates)?;
    let runs = (0..replicates as u64)
        .into_par_iter()
        .map(|r| z_run(chain, t_values, &mut stream.replicate(r).rng()))
        .collect();
    Ok(ZSamples::collect(t_values, runs))
}

/// Everything needed to draw a fresh limit chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitSpec {
    pub rho: f64,
    pub lambda: f64,
    /// Intensity C_beta of the resistance subordinator.
    pub c_beta: f64,
    /// E c^{beta,0}(omega_0).
    pub mass_const: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub delta: f64,
    pub epsilon: Option<f64>,
    /// Trap mode: kappa and E[c^kappa].
    pub trap: Option<(f64, f64)>,
}

impl LimitSpec {
    pub fn build(&self, stream: RngStream) -> Result<LimitChain> {
        let eps = self.epsilon.unwrap_or_else(|| default_epsilon(self.rho, self.c_beta, self.k));
        let raw = sample_subordinator(self.rho, self.c_beta, self.k, eps, stream.child(purpose::SUBORDINATOR))?;
        let s = tilt_path(&raw, self.lambda, self.rho)?;
        match self.trap {
            None => build_limit_chain(&s, self.lambda, self.rho, self.mass_const, self.delta, None),
            Some((kappa, trap_const)) => {
                let teps = default_epsilon(kappa, 1.0, self.k);
                let tp = sample_subordinator(kappa, 1.0, self.k, teps, stream.child(purpose::TRAP_SUBORDINATOR))?;
                build_limit_chain(&s, self.lambda, self.rho, self.mass_const, self.delta, Some((&tp, trap_const)))
            }
        }
    }
}

/// Annealed samples: a fresh subordinator (and trap subordinator) per replicate.
pub fn annealed_z(spec: &LimitSpec, t_values: &[f64], replicates: usize, stream: RngStream) -> Result<ZSamples> {
    check_times(t_values, replicates)?;
    let runs = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let rs = stream.replicate(r);
            let chain = spec.build(rs)?;
            Ok(z_run(&chain, t_values, &mut rs.child(purpose::LIMIT_WALK).rng()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ZSamples::collect(t_values, runs))
}

// ---------------------------------------------------------------------------
// One-sided marginals

/// S(1) for a one-sided subordinator with tail C x^{-a}, by jump simulation.
pub fn stable_marginal_samples(tail: f64, c: f64, count: usize, stream: RngStream) -> Result<Vec<f64>> {
    check_tail(tail)?;
    if count < 100 {
        return Err(MottError::param("stable_marginal_samples needs at least 100 samples"));
    }
    if !(c > 0.0) {
        return Err(MottError::param("intensity C must be positive"));
    }
    let eps = epsilon_for_fluctuation(tail, c, 1.0, 1e-2);
    let drift = small_jump_drift(tail, c, eps);
    let pois = Poisson::new(c * eps.powf(-tail)).map_err(|e| MottError::param(format!("{e}")))?;
    Ok((0..count as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream.replicate(r).rng();
            let m = pois.sample(&mut rng) as usize;
            let mut s = drift;
            for _ in 0..m {
                let v: f64 = rng.sample(Open01);
                s += eps * v.powf(-1.0 / tail);
            }
            s
        })
        .collect())
}

/// Exact draws of the same law, E exp(-s S) = exp(-C Gamma(1-a) s^a), by the
/// Kanter representation.
pub fn stable_exact_samples(tail: f64, c: f64, count: usize, stream: RngStream) -> Result<Vec<f64>> {
    check_tail(tail)?;
    let scale = (c * gamma(1.0 - tail)).powf(1.0 / tail);
    let a = tail;
    Ok((0..count as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream.replicate(r).rng();
            let u: f64 = PI * rng.sample::<f64, _>(Open01);
            let w: f64 = rng.sample(Exp1);
            let y = (a * u).sin() / u.sin().powf(1.0 / a) * (((1.0 - a) * u).sin() / w).powf((1.0 - a) / a);
            scale * y
        })
        .collect())
}
