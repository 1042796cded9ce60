//! Effective resistance on the truncated network and the big-edge
//! approximations that bracket it.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{generate_environment, Environment, ModelParams};
use crate::error::{MottError, Result};
use crate::graph::BandedGraph;
use crate::network::{boundary_margin, BiasScale, TruncatedNetwork};
use crate::rng::RngStream;
use crate::solver::GroundedLaplacian;
use crate::walk::{CommuteStats, WeightedChain};

/// Solution of the unit-potential Dirichlet problem between two node sets.
#[derive(Debug, Clone)]
pub struct ResistanceSolution {
    pub resistance: f64,
    /// Current leaving B (equal to the Dirichlet energy of `potential`).
    pub current: f64,
    /// Minimising potential: 0 on A, 1 on B, harmonic elsewhere.
    pub potential: Vec<f64>,
}

/// R(A, B) on a graph, with A and B given as node indices.
pub fn effective_resistance_graph(graph: &BandedGraph, a: &[usize], b: &[usize]) -> Result<ResistanceSolution> {
    if a.is_empty() || b.is_empty() {
        return Err(MottError::domain("both node sets must be nonempty"));
    }
    let nodes = graph.nodes();
    let mut side = vec![0u8; nodes];
    for &s in a {
        if s >= nodes {
            return Err(MottError::domain(format!("node {s} out of range")));
        }
        side[s] = 1;
    }
    for &s in b {
        if s >= nodes {
            return Err(MottError::domain(format!("node {s} out of range")));
        }
        if side[s] == 1 {
            return Err(MottError::domain(format!("node {s} lies in both sets")));
        }
        side[s] = 2;
    }
    let grounded: Vec<bool> = side.iter().map(|&x| x != 0).collect();
    // Current injected into each free node by the unit potential on B.
    let mut inject = vec![0.0; nodes];
    for (s, t, c) in graph.edges() {
        match (side[s], side[t]) {
            (0, 2) => inject[s] += c,
            (2, 0) => inject[t] += c,
            _ => {}
        }
    }
    // A free component with no path to either set makes the system singular;
    // that is reported as disconnected.
    let mut potential = if grounded.iter().all(|g| *g) {
        vec![0.0; nodes]
    } else {
        GroundedLaplacian::new(graph, &grounded)?.solve(&inject)
    };
    for s in 0..nodes {
        match side[s] {
            1 => potential[s] = 0.0,
            2 => potential[s] = 1.0,
            _ => {}
        }
    }
    // Current flowing out of A.
    let mut current = 0.0;
    for (s, t, c) in graph.edges() {
        if (side[s] == 1) != (side[t] == 1) {
            let other = if side[s] == 1 { t } else { s };
            current += c * potential[other];
        }
    }
    if !(current > 0.0) {
        return Err(MottError::Disconnected);
    }
    Ok(ResistanceSolution {
        resistance: 1.0 / current,
        current,
        potential,
    })
}

/// R(A, B) on the truncated network, A and B given as labels in -Kn..=Kn.
pub fn effective_resistance(net: &TruncatedNetwork, a: &[i64], b: &[i64]) -> Result<ResistanceSolution> {
    let sa = a.iter().map(|&i| net.slot(i)).collect::<Result<Vec<_>>>()?;
    let sb = b.iter().map(|&i| net.slot(i)).collect::<Result<Vec<_>>>()?;
    effective_resistance_graph(net.graph(), &sa, &sb)
}

/// Point-to-point resistances from one factorisation grounded at a single node.
pub struct PointResistance<'a> {
    net: &'a TruncatedNetwork,
    factor: GroundedLaplacian,
    ground: usize,
}

impl<'a> PointResistance<'a> {
    /// Ground at label `ground`.
    pub fn new(net: &'a TruncatedNetwork, ground: i64) -> Result<Self> {
        let g = net.slot(ground)?;
        Ok(Self {
            net,
            factor: GroundedLaplacian::with_ground(net.graph(), g)?,
            ground: g,
        })
    }

    /// Column of the grounded Green function for label `i`: the potential
    /// when unit current enters at `i` and leaves at the ground.
    pub fn green_column(&self, i: i64) -> Result<Vec<f64>> {
        let s = self.net.slot(i)?;
        let mut cur = vec![0.0; self.factor.nodes()];
        if s != self.ground {
            cur[s] = 1.0;
        }
        Ok(self.factor.solve(&cur))
    }

    /// R(omega-bar_ground, omega-bar_i).
    pub fn from_ground(&self, i: i64) -> Result<f64> {
        let s = self.net.slot(i)?;
        Ok(self.green_column(i)?[s])
    }

    pub fn between(&self, i: i64, j: i64) -> Result<f64> {
        let (si, sj) = (self.net.slot(i)?, self.net.slot(j)?);
        Ok(self.factor.pair_resistance(si, sj))
    }

    /// All pairwise resistances among `labels`, from one Green column per label.
    pub fn matrix(&self, labels: &[i64]) -> Result<Vec<Vec<f64>>> {
        let slots = labels.iter().map(|&i| self.net.slot(i)).collect::<Result<Vec<_>>>()?;
        let cols = labels
            .par_iter()
            .map(|&i| self.green_column(i))
            .collect::<Result<Vec<_>>>()?;
        let m = labels.len();
        let mut out = vec![vec![0.0; m]; m];
        for p in 0..m {
            for q in 0..m {
                if p != q {
                    let r = cols[p][slots[p]] + cols[q][slots[q]] - 2.0 * cols[p][slots[q]];
                    out[p][q] = r.max(0.0);
                }
            }
        }
        Ok(out)
    }
}

/// Rescaled resistance from the origin, u -> n^{-1/rho} sign(u) R(0, floor(un)).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResistanceProfile {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub rho: f64,
    pub grid_step: f64,
    pub u: Vec<f64>,
    pub index: Vec<i64>,
    pub values: Vec<f64>,
    pub monotone: bool,
    /// Largest drop between consecutive grid values (0 when monotone).
    pub max_decrease: f64,
}

fn grid_labels(k: usize, n: usize, step: f64) -> (Vec<f64>, Vec<i64>) {
    let kf = k as f64;
    let count = ((2.0 * kf) / step + 1e-9).floor() as usize + 1;
    let mut us = Vec::with_capacity(count);
    let mut idx = Vec::with_capacity(count);
    let m = (k * n) as i64;
    for c in 0..count {
        let u = -kf + c as f64 * step;
        let i = ((u * n as f64) + 1e-9).floor() as i64;
        us.push(u);
        idx.push(i.clamp(-m, m));
    }
    (us, idx)
}

pub fn resistance_profile(net: &TruncatedNetwork, grid_step: f64) -> Result<ResistanceProfile> {
    let n = net.n();
    if !(grid_step > 0.0) || grid_step * (n as f64) < 1.0 - 1e-12 {
        return Err(MottError::param("grid step must satisfy delta * n >= 1"));
    }
    let (u, index) = grid_labels(net.k(), n, grid_step);
    let pr = PointResistance::new(net, 0)?;
    let scale = (n as f64).powf(-1.0 / net.params().rho);
    let values = index
        .par_iter()
        .map(|&i| {
            if i == 0 {
                Ok(0.0)
            } else {
                Ok(scale * (i.signum() as f64) * pr.from_ground(i)?)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut max_decrease: f64 = 0.0;
    for w in values.windows(2) {
        max_decrease = max_decrease.max(w[0] - w[1]);
    }
    Ok(ResistanceProfile {
        n,
        k: net.k(),
        rho: net.params().rho,
        grid_step,
        u,
        index,
        values,
        monotone: max_decrease <= 0.0,
        max_decrease,
    })
}

/// sup over grid labels i <= j of n^{-1/rho} |R(i,j) - (sgn(j)R(0,j) - sgn(i)R(0,i))|.
pub fn profile_distortion(net: &TruncatedNetwork, grid_step: f64) -> Result<f64> {
    let n = net.n();
    if !(grid_step > 0.0) || grid_step * (n as f64) < 1.0 - 1e-12 {
        return Err(MottError::param("grid step must satisfy delta * n >= 1"));
    }
    let (_, mut labels) = grid_labels(net.k(), n, grid_step);
    labels.dedup();
    if !labels.contains(&0) {
        labels.push(0);
        labels.sort_unstable();
    }
    let pr = PointResistance::new(net, 0)?;
    let r = pr.matrix(&labels)?;
    let z = labels.iter().position(|&l| l == 0).unwrap();
    let scale = (n as f64).powf(-1.0 / net.params().rho);
    let mut worst: f64 = 0.0;
    for p in 0..labels.len() {
        for q in p..labels.len() {
            let sp = labels[p].signum() as f64;
            let sq = labels[q].signum() as f64;
            let d = r[p][q] - (sq * r[z][q] - sp * r[z][p]);
            worst = worst.max(d.abs());
        }
    }
    Ok(worst * scale)
}

impl ResistanceProfile {
    /// Writes `<stem>.csv` (u, index, value) and `<stem>.json`.
    pub fn export(&self, dir: &Path, stem: &str, sidecar: &serde_json::Value) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}.csv")))?);
        writeln!(w, "u,index,value")?;
        for ((u, i), v) in self.u.iter().zip(&self.index).zip(&self.values) {
            writeln!(w, "{u},{i},{v:.16e}")?;
        }
        w.flush()?;
        let doc = serde_json::json!({
            "n": self.n, "K": self.k, "rho": self.rho, "grid_step": self.grid_step,
            "monotone": self.monotone, "max_decrease": self.max_decrease,
            "provenance": sidecar,
        });
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Correction terms

/// A chi value from a finite sum, with the bracket implied by the omitted terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiValue {
    /// Inverse of the finite sum (an upper bound on the exact value).
    pub value: f64,
    /// Inverse of the finite sum plus the bound on the omitted terms.
    pub lower: f64,
    /// Bound on the omitted part of the sum (beyond-window part estimated).
    pub tail_bound: f64,
    pub left_radius: usize,
    pub right_radius: usize,
}

#[inline]
fn chi_term(env: &Environment, i: i64, j: i64, k: i64, lam: f64, beta: f64) -> f64 {
    let left = env.omega(i) - env.omega(j);
    let right = env.omega(k) - env.omega(i + 1);
    let u = if beta > 0.0 { beta * env.interaction(j, k) } else { 0.0 };
    (-(1.0 + lam) * left - (1.0 - lam) * right - u).exp()
}

/// sum_{m=0..=r} e^{-a d_m} for the one-sided distances from the edge.
fn one_sided(env: &Environment, i: i64, a: f64, radius: usize, leftward: bool) -> f64 {
    let mut s = 0.0;
    for m in 0..=radius as i64 {
        let d = if leftward {
            env.omega(i) - env.omega(i - m)
        } else {
            env.omega(i + 1 + m) - env.omega(i + 1)
        };
        s += (-a * d).exp();
    }
    s
}

fn expected_geometric_tail(env: &Environment, a: f64) -> f64 {
    let n = env.half_width() as i64;
    let rate = (2 * n) as f64 / (env.omega(n) - env.omega(-n));
    let g = rate / (rate + a);
    g / (1.0 - g)
}

/// chi summed over j in [i - r, i], k in [i + 1, i + 1 + r].
pub fn chi_radius(env: &Environment, i: i64, lam: f64, radius: usize) -> Result<ChiValue> {
    let r = radius as i64;
    if !env.contains(i - r) || !env.contains(i + 1 + r) {
        return Err(MottError::window(
            format!("chi at {i} with radius {radius} leaves the environment window"),
            (i.unsigned_abs() as usize) + radius + 1,
        ));
    }
    chi_with_radii(env, i, lam, radius, radius)
}

fn chi_with_radii(env: &Environment, i: i64, lam: f64, rl: usize, rr: usize) -> Result<ChiValue> {
    if !(0.0..1.0).contains(&lam) {
        return Err(MottError::param("effective bias must lie in [0, 1)"));
    }
    let beta = env.params().beta;
    let mut sum = 0.0;
    for jm in 0..=rl as i64 {
        for km in 0..=rr as i64 {
            sum += chi_term(env, i, i - jm, i + 1 + km, lam, beta);
        }
    }
    // Omitted terms are bounded by dropping e^{-beta U} and factorising.
    let nn = env.half_width() as i64;
    let al = one_sided(env, i, 1.0 + lam, rl, true);
    let ar = one_sided(env, i, 1.0 - lam, rr, false);
    let al_full = one_sided(env, i, 1.0 + lam, (i + nn) as usize, true)
        + (-(1.0 + lam) * (env.omega(i) - env.omega(-nn))).exp() * expected_geometric_tail(env, 1.0 + lam);
    let ar_full = one_sided(env, i, 1.0 - lam, (nn - i - 1) as usize, false)
        + (-(1.0 - lam) * (env.omega(nn) - env.omega(i + 1))).exp() * expected_geometric_tail(env, 1.0 - lam);
    let tail = (al_full * ar_full - al * ar).max(0.0);
    Ok(ChiValue {
        value: 1.0 / sum,
        lower: 1.0 / (sum + tail),
        tail_bound: tail,
        left_radius: rl,
        right_radius: rr,
    })
}

/// chi^{beta, lambda'}(i), summed until the remaining terms are below double
/// precision (or the window ends, in which case the tail bound says so).
pub fn chi(env: &Environment, i: i64, bias: BiasScale) -> Result<ChiValue> {
    let lam = bias.effective_lambda(env.params().lambda);
    chi_lambda(env, i, lam)
}

pub fn chi_lambda(env: &Environment, i: i64, lam: f64) -> Result<ChiValue> {
    if !env.contains(i) || !env.contains(i + 1) {
        return Err(MottError::domain(format!("edge ({i}, {}) outside window", i + 1)));
    }
    const NEGLIGIBLE: f64 = 40.0;
    let nn = env.half_width() as i64;
    let mut rl = 0usize;
    while i - (rl as i64) > -nn && (1.0 + lam) * (env.omega(i) - env.omega(i - rl as i64)) < NEGLIGIBLE {
        rl += 1;
    }
    let mut rr = 0usize;
    while i + 1 + (rr as i64) < nn && (1.0 - lam) * (env.omega(i + 1 + rr as i64) - env.omega(i + 1)) < NEGLIGIBLE {
        rr += 1;
    }
    chi_with_radii(env, i, lam, rl, rr)
}

pub fn a_n(a_coeff: f64, n: usize) -> usize {
    (a_coeff * (n as f64).ln()).floor().max(0.0) as usize
}

pub fn b_n(n: usize) -> usize {
    (n as f64).powf(0.25).floor() as usize
}

/// Default a in a_n = floor(a ln n).
pub fn default_a_coeff(rho: f64) -> f64 {
    0.2 / rho
}

/// chi-bar_n(i) with the n^{-1/(8 rho)} regulariser, at bias lambda / n.
pub fn chi_upper(env: &Environment, i: i64, n: usize, a_n: usize) -> Result<f64> {
    let a = a_n as i64;
    if !env.contains(i - a) || !env.contains(i + 1 + a) {
        return Err(MottError::window(
            format!("chi_upper at {i} needs sites {}..={}", i - a, i + 1 + a),
            (i.unsigned_abs() as usize) + a_n + 1,
        ));
    }
    let p = env.params();
    let lam = p.lambda / n as f64;
    let reg = (n as f64).powf(-1.0 / (8.0 * p.rho));
    let mut sum = 0.0;
    for j in 0..=a {
        for k in 0..=a {
            let u = if p.beta > 0.0 { p.beta * env.interaction(i - j, i + 1 + k) } else { 0.0 };
            let e = ((1.0 + lam) * (env.omega(i) - env.omega(i - j))
                + (1.0 - lam) * (env.omega(i + 1 + k) - env.omega(i + 1))
                + u)
                .exp();
            sum += 1.0 / (reg + e);
        }
    }
    Ok(1.0 / sum)
}

/// chi-underline_n(i): the chi sum restricted to k - j <= span, at bias lambda / n.
pub fn chi_lower(env: &Environment, i: i64, n: usize, span: usize) -> Result<f64> {
    chi_lower_lambda(env, i, env.params().lambda / n as f64, span)
}

pub fn chi_lower_lambda(env: &Environment, i: i64, lam: f64, span: usize) -> Result<f64> {
    if span == 0 {
        return Err(MottError::param("span must be >= 1"));
    }
    let s = span as i64;
    if !env.contains(i + 1 - s) || !env.contains(i + s) {
        return Err(MottError::window(
            format!("chi_lower at {i} needs sites {}..={}", i + 1 - s, i + s),
            (i.unsigned_abs() as usize) + span + 1,
        ));
    }
    let beta = env.params().beta;
    let mut sum = 0.0;
    for j in (i + 1 - s)..=i {
        for k in (i + 1)..=(j + s) {
            sum += chi_term(env, i, j, k, lam, beta);
        }
    }
    Ok(1.0 / sum)
}

// ---------------------------------------------------------------------------
// Big edges, events and the two-sided bounds

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigEdge {
    pub index: i64,
    /// r^{0, lambda/n}(omega_k, omega_{k+1}).
    pub r0: f64,
    pub chi_upper: f64,
    pub chi_lower: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApproxBundle {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub a_coeff: f64,
    pub a_n: usize,
    pub b_n: usize,
    pub big_edges: Vec<BigEdge>,
    pub event_upper: bool,
    pub event_lower: bool,
    /// E_n over the edges of the (cutoff) network.
    pub long_edge_mass: f64,
    /// E_n plus the network's dropped-mass bound: a bound for the uncut network.
    pub long_edge_mass_bound: f64,
    lambda_eff: f64,
}

/// Gap threshold equivalent to r^{0,0} >= n^{3/(4 rho)}.
pub fn big_edge_gap(rho: f64, n: usize) -> f64 {
    3.0 * (n as f64).ln() / (4.0 * rho)
}

pub fn approx_bundle(net: &TruncatedNetwork, a_coeff: f64) -> Result<ApproxBundle> {
    if !(a_coeff > 0.0) {
        return Err(MottError::param("a must be positive"));
    }
    let env = net.env();
    let (k, n) = (net.k(), net.n());
    let m = net.half_width();
    let an = a_n(a_coeff, n);
    let bn = b_n(n).max(1);
    let need = (m as usize) + an.max(bn) + 1;
    if env.half_width() < need {
        return Err(MottError::window("window too small for the correction radii", need));
    }
    let rho = env.params().rho;
    let lam = net.lambda_eff();
    let threshold = big_edge_gap(rho, n);
    let mut big = Vec::new();
    for i in -m..m {
        if env.gap(i) >= threshold {
            big.push(BigEdge {
                index: i,
                r0: (env.gap(i) - lam * (env.omega(i) + env.omega(i + 1))).exp(),
                chi_upper: chi_upper(env, i, n, an)?,
                chi_lower: chi_lower(env, i, n, bn)?,
            });
        }
    }
    let idx: Vec<i64> = big.iter().map(|b| b.index).collect();
    let (a, b) = (an as i64, bn as i64);
    let clear = |r: i64| idx.iter().all(|&i| i > -m + r && i < m - r - 1);
    let separated = |r: i64| idx.windows(2).all(|w| w[1] - w[0] > 2 * r);
    let half_log = (n as f64).ln() / (2.0 * rho);
    let flanks = idx.iter().all(|&i| {
        env.omega(i) - env.omega(i - a) <= half_log && env.omega(i + 1 + a) - env.omega(i + 1) <= half_log
    });
    let event_upper = clear(a) && separated(a) && flanks;
    let event_lower = clear(b) && separated(b);

    let long: f64 = net
        .labelled_edges()
        .filter(|(i, j, _)| (j - i) as usize > bn)
        .map(|(_, _, c)| c)
        .sum();

    Ok(ApproxBundle {
        n,
        k,
        a_coeff,
        a_n: an,
        b_n: bn,
        big_edges: big,
        event_upper,
        event_lower,
        long_edge_mass: long,
        long_edge_mass_bound: long + net.dropped_mass_bound(),
        lambda_eff: lam,
    })
}

/// Lower-bound resistance sum, or the empty-sum case where its inverse is
/// infinite and the bound on R degenerates to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerSum {
    Finite(f64),
    Empty,
}

impl LowerSum {
    /// (R_lower^{-1} + e)^{-1}.
    pub fn resistance_bound(self, e: f64) -> f64 {
        match self {
            LowerSum::Finite(r) => 1.0 / (1.0 / r + e),
            LowerSum::Empty => 0.0,
        }
    }
}

fn check_order(bundle: &ApproxBundle, i: i64, j: i64) -> Result<i64> {
    let m = (bundle.k * bundle.n) as i64;
    if i > j || i < -m || j > m {
        return Err(MottError::domain(format!("need -{m} <= i <= j <= {m}, got ({i}, {j})")));
    }
    Ok(m)
}

/// R-bar_n(i, j).
pub fn r_upper(bundle: &ApproxBundle, env: &Environment, i: i64, j: i64) -> Result<f64> {
    let m = check_order(bundle, i, j)?;
    let a = bundle.a_n as i64;
    let lam = bundle.lambda_eff;
    let beta = env.params().beta;
    let lo = (i - a).max(-m);
    let hi = (j + a).min(m - 1);
    let mut total = 0.0;
    let mut bi = bundle.big_edges.iter().peekable();
    for kk in lo..=hi {
        while bi.peek().is_some_and(|b| b.index < kk) {
            bi.next();
        }
        let is_big = bi.peek().is_some_and(|b| b.index == kk);
        if is_big {
            if kk >= i && kk < j {
                let b = bi.peek().unwrap();
                total += b.r0 * b.chi_upper;
            }
        } else {
            let u = if beta > 0.0 { beta * env.interaction(kk, kk + 1) } else { 0.0 };
            total += (env.gap(kk) + u - lam * (env.omega(kk) + env.omega(kk + 1))).exp();
        }
    }
    Ok(total)
}

/// R-underline_n(i, j).
pub fn r_lower(bundle: &ApproxBundle, i: i64, j: i64) -> Result<LowerSum> {
    check_order(bundle, i, j)?;
    let s: Vec<f64> = bundle
        .big_edges
        .iter()
        .filter(|b| b.index >= i && b.index < j)
        .map(|b| b.r0 * b.chi_lower)
        .collect();
    if s.is_empty() {
        Ok(LowerSum::Empty)
    } else {
        Ok(LowerSum::Finite(s.iter().sum()))
    }
}

impl ApproxBundle {
    /// Writes `<stem>.csv` (index, r0, chi_upper, chi_lower) and `<stem>.json`.
    pub fn export(&self, dir: &Path, stem: &str, sidecar: &serde_json::Value) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}.csv")))?);
        writeln!(w, "index,r0,chi_upper,chi_lower")?;
        for b in &self.big_edges {
            writeln!(w, "{},{:.16e},{:.16e},{:.16e}", b.index, b.r0, b.chi_upper, b.chi_lower)?;
        }
        w.flush()?;
        let doc = serde_json::json!({
            "n": self.n, "K": self.k, "a": self.a_coeff, "a_n": self.a_n, "b_n": self.b_n,
            "event_upper": self.event_upper, "event_lower": self.event_lower,
            "E_n": self.long_edge_mass, "E_n_bound": self.long_edge_mass_bound,
            "big_edge_count": self.big_edges.len(),
            "provenance": sidecar,
        });
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Sandwich check

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub pairs: usize,
    pub upper_violations: usize,
    pub lower_violations: usize,
    /// max over pairs of R / R-bar.
    pub worst_upper_ratio: f64,
    /// max over pairs of lower bound / R.
    pub worst_lower_ratio: f64,
}

/// Labels used for the sandwich comparison: a coarse grid plus the sites
/// around every big edge.
pub fn sandwich_labels(net: &TruncatedNetwork, bundle: &ApproxBundle) -> Vec<i64> {
    let m = net.half_width();
    let step = (net.n() as i64 / 4).max(1);
    let mut labels: Vec<i64> = (-m..=m).step_by(step as usize).collect();
    labels.push(m);
    let a = bundle.a_n as i64;
    for b in &bundle.big_edges {
        for l in [b.index - a, b.index, b.index + 1, b.index + 1 + a] {
            if l.abs() <= m {
                labels.push(l);
            }
        }
    }
    labels.sort_unstable();
    labels.dedup();
    labels
}

/// Compares exact resistances with R-bar and (R-underline^{-1} + E_n)^{-1}
/// on all label pairs; `rel_tol` is the relative slack allowed.
pub fn sandwich_check(net: &TruncatedNetwork, bundle: &ApproxBundle, labels: &[i64], rel_tol: f64) -> Result<SandwichReport> {
    let pr = PointResistance::new(net, -net.half_width())?;
    let r = pr.matrix(labels)?;
    let env = net.env();
    let mut rep = SandwichReport {
        pairs: 0,
        upper_violations: 0,
        lower_violations: 0,
        worst_upper_ratio: 0.0,
        worst_lower_ratio: 0.0,
    };
    for p in 0..labels.len() {
        for q in (p + 1)..labels.len() {
            let (i, j) = (labels[p], labels[q]);
            let exact = r[p][q];
            let up = r_upper(bundle, env, i, j)?;
            let low = r_lower(bundle, i, j)?.resistance_bound(bundle.long_edge_mass);
            rep.pairs += 1;
            if exact > up * (1.0 + rel_tol) {
                rep.upper_violations += 1;
            }
            if low > exact * (1.0 + rel_tol) {
                rep.lower_violations += 1;
            }
            rep.worst_upper_ratio = rep.worst_upper_ratio.max(exact / up);
            if exact > 0.0 {
                rep.worst_lower_ratio = rep.worst_lower_ratio.max(low / exact);
            }
        }
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// C_beta

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_values(values: &[f64]) -> Self {
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0).max(1.0);
        Self {
            estimate: mean,
            stderr: (var / m).sqrt(),
            samples: values.len(),
        }
    }
}

/// chi^{beta,0}(0) for each of `samples` fresh environments.
pub fn chi_samples(params: &ModelParams, samples: usize, stream: RngStream) -> Result<Vec<f64>> {
    let mut p = *params;
    p.lambda = 0.0;
    p.kappa = None;
    p.validate()?;
    let half = boundary_margin(p.rho).max(8);
    (0..samples as u64)
        .into_par_iter()
        .map(|s| {
            let env = generate_environment(&p, half, stream.replicate(s))?;
            Ok(chi_lambda(&env, 0, 0.0)?.value)
        })
        .collect()
}

/// C_beta = E[chi^{beta,0}(0)^rho] by Monte Carlo over fresh environments.
pub fn estimate_c_beta(params: &ModelParams, samples: usize, stream: RngStream) -> Result<Estimate> {
    if samples < 1000 {
        return Err(MottError::param("estimate_c_beta needs at least 1000 samples"));
    }
    let rho = params.rho;
    let vals: Vec<f64> = chi_samples(params, samples, stream)?
        .into_iter()
        .map(|c| c.powf(rho))
        .collect();
    Ok(Estimate::from_values(&vals))
}

// ---------------------------------------------------------------------------
// Commute times

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommuteReport {
    pub observed_mean: f64,
    pub stderr: f64,
    /// Total mass of the chain times R(a, b).
    pub expected: f64,
    pub total_mass: f64,
    pub resistance: f64,
    /// (observed - expected) / stderr.
    pub z_score: f64,
}

/// Compares mean round-trip times with mass times resistance. The statistics
/// must come from `chain`, and `chain` from `net`.
pub fn commute_time_check(net: &TruncatedNetwork, chain: &WeightedChain, stats: &CommuteStats) -> Result<CommuteReport> {
    if stats.chain_id != chain.id() {
        return Err(MottError::Provenance("commute statistics come from a different chain".into()));
    }
    if chain.source() != Some(net.fingerprint()) || stats.source != Some(net.fingerprint()) {
        return Err(MottError::Provenance("chain was not built from this network".into()));
    }
    if stats.samples.len() < 2 {
        return Err(MottError::param("need at least two commute samples"));
    }
    let (la, lb) = (chain.label(stats.a), chain.label(stats.b));
    let resistance = effective_resistance(net, &[la], &[lb])?.resistance;
    let total_mass: f64 = chain.masses().iter().sum();
    let est = Estimate::from_values(&stats.samples);
    let expected = total_mass * resistance;
    Ok(CommuteReport {
        observed_mean: est.estimate,
        stderr: est.stderr,
        expected,
        total_mass,
        resistance,
        z_score: (est.estimate - expected) / est.stderr,
    })
}
