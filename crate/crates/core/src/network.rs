//! Conductances of the hopping network and the truncated, boundary-collapsed
//! network on labels -Kn..=Kn.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{Environment, ModelParams};
use crate::error::{MottError, Result};
use crate::graph::BandedGraph;
use crate::env::generate_environment;
use crate::resistance::Estimate;
use crate::rng::RngStream;
use rayon::prelude::*;

/// How the bias enters the conductances: `lambda / n` or `lambda` itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasScale {
    Scaled(u64),
    Unscaled,
}

impl BiasScale {
    pub fn effective_lambda(self, lambda: f64) -> f64 {
        match self {
            BiasScale::Scaled(n) => lambda / n as f64,
            BiasScale::Unscaled => lambda,
        }
    }
}

#[inline]
fn pair_conductance(env: &Environment, i: i64, j: i64, lam: f64) -> f64 {
    let (wi, wj) = (env.omega(i), env.omega(j));
    let beta = env.params().beta;
    let u = if beta > 0.0 { beta * env.interaction(i, j) } else { 0.0 };
    (-(wi - wj).abs() - u + lam * (wi + wj)).exp()
}

/// c(omega_i, omega_j) = exp(-|omega_i - omega_j| - beta U(E_i, E_j) + lambda'(omega_i + omega_j)).
pub fn conductance(env: &Environment, i: i64, j: i64, bias: BiasScale) -> Result<f64> {
    if i == j {
        return Err(MottError::domain("conductance needs two distinct sites"));
    }
    if !env.contains(i) || !env.contains(j) {
        return Err(MottError::domain(format!(
            "sites ({i}, {j}) outside the environment window of half-width {}",
            env.half_width()
        )));
    }
    if let BiasScale::Scaled(0) = bias {
        return Err(MottError::domain("bias scale must be positive"));
    }
    Ok(pair_conductance(env, i, j, bias.effective_lambda(env.params().lambda)))
}

/// 1 / c^{0,0}(omega_i, omega_{i+1}) = exp(omega_{i+1} - omega_i).
pub fn nearest_neighbor_resistance_00(env: &Environment, i: i64) -> f64 {
    env.gap(i).exp()
}

/// The default index cutoff max(60, ceil((8/rho) ln n)).
pub fn default_cutoff(rho: f64, n: usize) -> usize {
    let d = ((8.0 / rho) * (n.max(1) as f64).ln()).ceil() as usize;
    d.max(60)
}

/// Sites needed beyond the collapsed boundary for the boundary sums to be
/// accurate to well below double precision relative to the leading terms.
pub fn boundary_margin(rho: f64) -> usize {
    (40.0 * rho).ceil() as usize + 32
}

#[derive(Debug, Clone)]
pub struct TruncatedNetwork {
    env: Arc<Environment>,
    k: usize,
    n: usize,
    cutoff: usize,
    bias: BiasScale,
    lambda_eff: f64,
    graph: BandedGraph,
    dropped_mass_bound: f64,
    window_truncation_estimate: f64,
}

/// Invariant mass of the labels in (floor(an), floor(bn)], plus -Kn when a = -K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub a: f64,
    pub b: f64,
    pub first_index: i64,
    pub last_index: i64,
    pub raw: f64,
    pub normalized: f64,
}

pub fn build_truncated_network(
    env: Arc<Environment>,
    k: usize,
    n: usize,
    cutoff: usize,
) -> Result<TruncatedNetwork> {
    build_truncated_network_with_bias(env, k, n, cutoff, BiasScale::Scaled(n as u64))
}

pub fn build_truncated_network_with_bias(
    env: Arc<Environment>,
    k: usize,
    n: usize,
    cutoff: usize,
    bias: BiasScale,
) -> Result<TruncatedNetwork> {
    if k == 0 || n == 0 {
        return Err(MottError::param("K and n must be positive"));
    }
    if cutoff == 0 {
        return Err(MottError::param("cutoff must be >= 1"));
    }
    if let BiasScale::Scaled(0) = bias {
        return Err(MottError::param("bias scale must be positive"));
    }
    let params = *env.params();
    let lam = bias.effective_lambda(params.lambda);
    if lam >= 1.0 {
        return Err(MottError::param(format!(
            "effective bias {lam} must be < 1 for the boundary sums to converge"
        )));
    }
    let m = k * n;
    let required = m + boundary_margin(params.rho);
    if env.half_width() < required {
        return Err(MottError::window(
            format!(
                "environment half-width {} too small for K*n = {m} plus boundary margin",
                env.half_width()
            ),
            required,
        ));
    }

    let big_n = env.half_width() as i64;
    let mi = m as i64;
    let nodes = 2 * m + 1;
    let bw = cutoff.min(2 * m);
    let mut graph = BandedGraph::new(nodes, bw);

    let a_right = 1.0 - lam;
    let a_left = 1.0 + lam;
    let sums = SuffixSums::new(&env, a_right, a_left);

    // Interior pairs.
    for i in (-mi + 1)..mi {
        let s = (i + mi) as usize;
        for d in 1..=bw {
            let j = i + d as i64;
            if j >= mi {
                break;
            }
            graph.set(s, s + d, pair_conductance(&env, i, j, lam));
        }
    }

    // Interior node to the right cluster {Kn, Kn+1, ...}.
    for i in (-mi + 1)..mi {
        if (mi - i) as usize > bw {
            continue;
        }
        let c = right_cluster_sum(&env, i, mi, big_n, lam, &sums);
        graph.set((i + mi) as usize, nodes - 1, c);
    }
    // Interior node to the left cluster {..., -Kn}.
    for i in (-mi + 1)..mi {
        if (i + mi) as usize > bw {
            continue;
        }
        let c = left_cluster_sum(&env, i, -mi, -big_n, lam, &sums);
        graph.set(0, (i + mi) as usize, c);
    }
    // Cluster to cluster.
    if 2 * m <= bw {
        let mut total = 0.0;
        for kl in (-big_n..=-mi).rev() {
            let head = right_cluster_sum(&env, kl, mi, big_n, lam, &sums);
            total += head;
            // Remaining left sites are further away still; stop once they cannot matter.
            let rest = (2.0 * lam * env.omega(kl)).exp()
                * (-a_right * (env.omega(mi) - env.omega(kl))).exp()
                * sums.right(mi)
                * sums.left(kl);
            if rest < 1e-17 * total {
                break;
            }
        }
        graph.set(0, nodes - 1, total);
    }

    // Bound on everything the cutoff removed: every pair (p, q) of window
    // sites with q - p > bw.
    let mut dropped = 0.0;
    for p in -big_n..big_n {
        let q0 = p + bw as i64 + 1;
        if q0 > big_n {
            break;
        }
        dropped += (2.0 * lam * env.omega(p) - a_right * (env.omega(q0) - env.omega(p))).exp()
            * sums.right(q0);
    }

    // Sites beyond the window, estimated from the observed mean gap.
    let mut beyond = 0.0;
    let wn = env.omega(big_n);
    let wmn = env.omega(-big_n);
    for p in -big_n..=big_n {
        let wp = env.omega(p);
        beyond += (2.0 * lam * wp - a_right * (wn - wp)).exp() * sums.beyond_right;
        beyond += (2.0 * lam * wp - a_left * (wp - wmn)).exp() * sums.beyond_left;
    }

    Ok(TruncatedNetwork {
        env,
        k,
        n,
        cutoff,
        bias,
        lambda_eff: lam,
        graph,
        dropped_mass_bound: dropped,
        window_truncation_estimate: beyond,
    })
}

/// Suffix sums T_m = sum_{q >= m} e^{-a (omega_q - omega_m)} and the mirrored
/// left version, each closed off with a geometric estimate for the sites
/// beyond the window.
struct SuffixSums {
    offset: i64,
    right: Vec<f64>,
    left: Vec<f64>,
    beyond_right: f64,
    beyond_left: f64,
}

impl SuffixSums {
    fn new(env: &Environment, a_right: f64, a_left: f64) -> Self {
        let n = env.half_width() as i64;
        let len = (2 * n + 1) as usize;
        let mean_gap = (env.omega(n) - env.omega(-n)) / (2 * n) as f64;
        let rate = 1.0 / mean_gap;
        // E e^{-a G} for G ~ Exp(rate) is rate / (rate + a); summing the
        // powers gives the expected contribution of the unseen sites.
        let gr = rate / (rate + a_right);
        let gl = rate / (rate + a_left);
        let beyond_right = gr / (1.0 - gr);
        let beyond_left = gl / (1.0 - gl);
        let mut right = vec![0.0; len];
        right[len - 1] = 1.0 + beyond_right;
        for s in (0..len - 1).rev() {
            let i = s as i64 - n;
            right[s] = 1.0 + (-a_right * env.gap(i)).exp() * right[s + 1];
        }
        let mut left = vec![0.0; len];
        left[0] = 1.0 + beyond_left;
        for s in 1..len {
            let i = s as i64 - n;
            left[s] = 1.0 + (-a_left * env.gap(i - 1)).exp() * left[s - 1];
        }
        Self {
            offset: n,
            right,
            left,
            beyond_right,
            beyond_left,
        }
    }

    #[inline]
    fn right(&self, m: i64) -> f64 {
        self.right[(m + self.offset) as usize]
    }

    #[inline]
    fn left(&self, m: i64) -> f64 {
        self.left[(m + self.offset) as usize]
    }
}

/// sum_{k = from..=last} c(i, k) for i < from.
fn right_cluster_sum(env: &Environment, i: i64, from: i64, last: i64, lam: f64, sums: &SuffixSums) -> f64 {
    let a = 1.0 - lam;
    let wi = env.omega(i);
    let scale = (2.0 * lam * wi).exp();
    let mut total = 0.0;
    for k in from..=last {
        total += pair_conductance(env, i, k, lam);
        if k < last {
            let rest = scale * (-a * (env.omega(k + 1) - wi)).exp() * sums.right(k + 1);
            if rest < 1e-17 * total {
                break;
            }
        }
    }
    total
}

/// sum_{k = first..=to} c(k, i) for i > to.
fn left_cluster_sum(env: &Environment, i: i64, to: i64, first: i64, lam: f64, sums: &SuffixSums) -> f64 {
    let a = 1.0 + lam;
    let wi = env.omega(i);
    let scale = (2.0 * lam * wi).exp();
    let mut total = 0.0;
    let mut k = to;
    while k >= first {
        total += pair_conductance(env, k, i, lam);
        if k > first {
            let rest = scale * (-a * (wi - env.omega(k - 1))).exp() * sums.left(k - 1);
            if rest < 1e-17 * total {
                break;
            }
        }
        k -= 1;
    }
    total
}

impl TruncatedNetwork {
    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn env_arc(&self) -> &Arc<Environment> {
        &self.env
    }

    pub fn params(&self) -> &ModelParams {
        self.env.params()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Kn, the largest label.
    pub fn half_width(&self) -> i64 {
        (self.k * self.n) as i64
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn bias(&self) -> BiasScale {
        self.bias
    }

    pub fn lambda_eff(&self) -> f64 {
        self.lambda_eff
    }

    pub fn graph(&self) -> &BandedGraph {
        &self.graph
    }

    /// Upper bound on the total conductance removed by the cutoff.
    pub fn dropped_mass_bound(&self) -> f64 {
        self.dropped_mass_bound
    }

    /// Estimated conductance from sites beyond the environment window.
    pub fn window_truncation_estimate(&self) -> f64 {
        self.window_truncation_estimate
    }

    pub fn contains(&self, i: i64) -> bool {
        i.abs() <= self.half_width()
    }

    /// Graph node of label `i`.
    pub fn slot(&self, i: i64) -> Result<usize> {
        if !self.contains(i) {
            return Err(MottError::domain(format!(
                "label {i} outside [-{m}, {m}]",
                m = self.half_width()
            )));
        }
        Ok((i + self.half_width()) as usize)
    }

    pub fn label(&self, slot: usize) -> i64 {
        slot as i64 - self.half_width()
    }

    pub fn conductance(&self, i: i64, j: i64) -> Result<f64> {
        if i == j {
            return Err(MottError::domain("conductance needs two distinct labels"));
        }
        Ok(self.graph.get(self.slot(i)?, self.slot(j)?))
    }

    /// c(omega-bar_i) = sum_j c(omega-bar_i, omega-bar_j).
    pub fn invariant_mass(&self, i: i64) -> Result<f64> {
        Ok(self.graph.row_sum(self.slot(i)?))
    }

    /// All invariant masses in slot order.
    pub fn masses(&self) -> Vec<f64> {
        self.graph.row_sums()
    }

    pub fn measure_interval(&self, a: f64, b: f64) -> Result<MeasureReport> {
        if !(a < b) {
            return Err(MottError::domain(format!("need a < b, got [{a}, {b}]")));
        }
        let kf = self.k as f64;
        if a < -kf || b > kf {
            return Err(MottError::domain(format!("[{a}, {b}] not inside [-{kf}, {kf}]")));
        }
        let nf = self.n as f64;
        let lo = (a * nf).floor() as i64;
        let hi = (b * nf).floor() as i64;
        let first = if lo == -self.half_width() { lo } else { lo + 1 };
        let mut raw = 0.0;
        for i in first..=hi {
            raw += self.graph.row_sum(self.slot(i)?);
        }
        Ok(MeasureReport {
            a,
            b,
            first_index: first,
            last_index: hi,
            raw,
            normalized: raw / nf,
        })
    }

    /// Edges as (label, label, conductance).
    pub fn labelled_edges(&self) -> impl Iterator<Item = (i64, i64, f64)> + '_ {
        let m = self.half_width();
        self.graph
            .edges()
            .map(move |(a, b, c)| (a as i64 - m, b as i64 - m, c))
    }

    pub fn header(&self) -> NetworkHeader {
        NetworkHeader {
            version: 1,
            k: self.k,
            n: self.n,
            cutoff: self.cutoff,
            bias: self.bias,
            lambda_eff: self.lambda_eff,
            dropped_mass_bound: self.dropped_mass_bound,
            window_truncation_estimate: self.window_truncation_estimate,
            params: *self.params(),
            seed: self.env.stream().seed,
            stream_id: self.env.stream().stream_id,
        }
    }

    /// Writes `<stem>.csv` (i, j, conductance) and `<stem>.json`.
    pub fn export(&self, dir: &Path, stem: &str) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}.csv")))?);
        writeln!(w, "i,j,conductance")?;
        for (i, j, c) in self.labelled_edges() {
            writeln!(w, "{i},{j},{c:.16e}")?;
        }
        w.flush()?;
        std::fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&self.header())?,
        )?;
        Ok(())
    }

    /// Identifies the network for provenance checks on derived statistics.
    pub fn fingerprint(&self) -> NetworkFingerprint {
        NetworkFingerprint {
            seed: self.env.stream().seed,
            stream_id: self.env.stream().stream_id,
            k: self.k,
            n: self.n,
            cutoff: self.cutoff,
            total_conductance_bits: self.graph.total_conductance().to_bits(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub struct NetworkHeader {
    pub version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub n: usize,
    pub cutoff: usize,
    pub bias: BiasScale,
    pub lambda_eff: f64,
    pub dropped_mass_bound: f64,
    pub window_truncation_estimate: f64,
    pub params: ModelParams,
    pub seed: u64,
    pub stream_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkFingerprint {
    pub seed: u64,
    pub stream_id: u64,
    pub k: usize,
    pub n: usize,
    pub cutoff: usize,
    pub total_conductance_bits: u64,
}

/// Monte Carlo estimate of E[c^{beta,0}(omega_0)^power], the total
/// unbiased conductance at the origin, over fresh environments.
pub fn mass_moment(params: &ModelParams, power: f64, samples: usize, stream: RngStream) -> Result<Estimate> {
    if samples < 2 {
        return Err(MottError::param("mass_moment needs at least 2 samples"));
    }
    let mut p = *params;
    p.lambda = 0.0;
    p.kappa = None;
    p.validate()?;
    let half = 4 * boundary_margin(p.rho);
    let vals = (0..samples as u64)
        .into_par_iter()
        .map(|s| {
            let env = generate_environment(&p, half, stream.replicate(s))?;
            let mut c = 0.0;
            for j in (-(half as i64)..=half as i64).filter(|&j| j != 0) {
                c += pair_conductance(&env, 0, j, 0.0);
            }
            Ok(c.powf(power))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Estimate::from_values(&vals))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env_for(params: ModelParams, k: usize, n: usize, seed: u64) -> Arc<Environment> {
        let big = k * n + boundary_margin(params.rho);
        Arc::new(generate_environment(&params, big, RngStream::new(seed, 0)).unwrap())
    }

    #[test]
    fn log_two_gap_gives_one_half() {
        let p = ModelParams::new(1.0);
        let omega = vec![-1.0, 0.0, std::f64::consts::LN_2];
        let e = Environment::from_parts(p, RngStream::new(0, 0), omega, vec![0.5; 3], vec![1.0; 3]).unwrap();
        let c = conductance(&e, 0, 1, BiasScale::Unscaled).unwrap();
        assert!((c - 0.5).abs() < 1e-15);
        assert!(conductance(&e, 1, 1, BiasScale::Unscaled).is_err());
        assert!(conductance(&e, 0, 2, BiasScale::Unscaled).is_err());
    }

    #[test]
    fn interior_matches_direct_formula_without_cutoff() {
        let p = ModelParams::new(0.7).with_beta(1.0).with_lambda(2.0);
        let (k, n) = (1, 20);
        let e = env_for(p, k, n, 5);
        let net = build_truncated_network(e.clone(), k, n, 2 * k * n).unwrap();
        for i in -19..20i64 {
            for j in -19..20i64 {
                if i != j {
                    let direct = conductance(&e, i, j, BiasScale::Scaled(n as u64)).unwrap();
                    assert_eq!(net.conductance(i, j).unwrap(), direct);
                }
            }
        }
    }

    #[test]
    fn collapsed_boundary_matches_brute_force_sum() {
        let p = ModelParams::new(1.3).with_beta(0.5).with_lambda(1.0);
        let (k, n) = (1, 10);
        let e = env_for(p, k, n, 8);
        let net = build_truncated_network(e.clone(), k, n, 2 * k * n).unwrap();
        let bn = e.half_width() as i64;
        let b = BiasScale::Scaled(n as u64);
        for i in -9..10i64 {
            let right: f64 = (10..=bn).map(|q| conductance(&e, i, q, b).unwrap()).sum();
            let left: f64 = (-bn..=-10).map(|q| conductance(&e, q, i, b).unwrap()).sum();
            assert!((net.conductance(i, 10).unwrap() - right).abs() <= 1e-14 * right);
            assert!((net.conductance(-10, i).unwrap() - left).abs() <= 1e-14 * left);
        }
        let mut both = 0.0;
        for q in -bn..=-10 {
            for r in 10..=bn {
                both += conductance(&e, q, r, b).unwrap();
            }
        }
        let got = net.conductance(-10, 10).unwrap();
        assert!((got - both).abs() <= 1e-13 * both);
    }

    #[test]
    fn dropped_mass_is_bounded() {
        let p = ModelParams::new(0.7);
        let (k, n) = (2, 100);
        for seed in 0..10 {
            let e = env_for(p, k, n, seed);
            let full = build_truncated_network(e.clone(), k, n, 2 * k * n).unwrap();
            let cut = build_truncated_network(e, k, n, 20).unwrap();
            let dropped = full.graph().total_conductance() - cut.graph().total_conductance();
            assert!(dropped >= -1e-12);
            assert!(dropped <= cut.dropped_mass_bound() * (1.0 + 1e-12), "{dropped} > {}", cut.dropped_mass_bound());
        }
    }

    #[test]
    fn window_precondition_reports_required_size() {
        let p = ModelParams::new(1.0);
        let e = Arc::new(generate_environment(&p, 50, RngStream::new(1, 1)).unwrap());
        match build_truncated_network(e, 1, 50, 60) {
            Err(MottError::Precondition { required_half_width: Some(r), .. }) => {
                assert_eq!(r, 50 + boundary_margin(1.0))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn measure_is_additive() {
        let p = ModelParams::new(0.7).with_lambda(1.0);
        let (k, n) = (2, 50);
        let net = build_truncated_network(env_for(p, k, n, 3), k, n, 60).unwrap();
        let ab = net.measure_interval(-2.0, 0.3).unwrap().raw;
        let bc = net.measure_interval(0.3, 2.0).unwrap().raw;
        let ac = net.measure_interval(-2.0, 2.0).unwrap().raw;
        assert!((ab + bc - ac).abs() <= 1e-12 * ac);
        let all: f64 = net.masses().iter().sum();
        assert!((ac - all).abs() <= 1e-12 * all);
        assert!(net.measure_interval(1.0, 1.0).is_err());
    }

    #[test]
    fn scaled_bias_rejects_large_lambda() {
        let p = ModelParams::new(1.0).with_lambda(5.0);
        let e = env_for(p, 1, 4, 0);
        assert!(build_truncated_network(e, 1, 4, 8).is_err());
    }
}
