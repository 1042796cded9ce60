//! Continuous-time reversible Markov chains on conductance graphs and the
//! walks built from the hopping network.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{generate_environment, ModelParams};
use crate::error::{MottError, Result};
use crate::graph::BandedGraph;
use crate::network::{boundary_margin, build_truncated_network, default_cutoff, NetworkFingerprint, TruncatedNetwork};
use crate::rng::{purpose, RngStream, StreamRng};

/// How holding times are scaled at each site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speed {
    /// Unit-mean holding times: m_i = sum_j c(i,j).
    Constant,
    /// Jump rates c(i,j) e^{-2 lambda' omega_i}: m_i = e^{2 lambda' omega_i}.
    Variable,
    /// Holding mean tau_i: m_i = tau_i sum_j c(i,j).
    Trap,
}

/// A reversible CTMC: from site i jump to j with probability c(i,j)/sum_k c(i,k)
/// after an exponential holding time of mean m_i / sum_k c(i,k).
#[derive(Debug, Clone)]
pub struct WeightedChain {
    graph: BandedGraph,
    masses: Vec<f64>,
    coords: Vec<f64>,
    offset: i64,
    start_of: Vec<usize>,
    neighbor: Vec<u32>,
    cumulative: Vec<f64>,
    mean_hold: Vec<f64>,
    source: Option<NetworkFingerprint>,
    speed: Speed,
}

impl WeightedChain {
    /// Site `s` carries label `s - offset` and coordinate `coords[s]`.
    pub fn new(graph: BandedGraph, masses: Vec<f64>, coords: Vec<f64>, offset: i64) -> Result<Self> {
        let nodes = graph.nodes();
        if masses.len() != nodes || coords.len() != nodes {
            return Err(MottError::param("masses and coordinates must have one entry per site"));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(MottError::param("masses must be positive and finite"));
        }
        let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); nodes];
        for (a, b, c) in graph.edges() {
            adj[a].push((b as u32, c));
            adj[b].push((a as u32, c));
        }
        let mut start_of = Vec::with_capacity(nodes + 1);
        let mut neighbor = Vec::new();
        let mut cumulative = Vec::new();
        let mut mean_hold = Vec::with_capacity(nodes);
        start_of.push(0);
        for (s, list) in adj.iter_mut().enumerate() {
            if list.is_empty() && nodes > 1 {
                return Err(MottError::param(format!("site {s} has no positive conductance")));
            }
            // Largest conductances first so the linear scan usually stops early.
            list.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
            let total: f64 = list.iter().map(|e| e.1).sum();
            let mut acc = 0.0;
            for (k, &(j, c)) in list.iter().enumerate() {
                acc += c;
                neighbor.push(j);
                cumulative.push(if k + 1 == list.len() { 1.0 } else { acc / total });
            }
            start_of.push(neighbor.len());
            mean_hold.push(if total > 0.0 { masses[s] / total } else { f64::INFINITY });
        }
        Ok(Self {
            graph,
            masses,
            coords,
            offset,
            start_of,
            neighbor,
            cumulative,
            mean_hold,
            source: None,
            speed: Speed::Constant,
        })
    }

    pub fn sites(&self) -> usize {
        self.masses.len()
    }

    pub fn graph(&self) -> &BandedGraph {
        &self.graph
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn label(&self, s: usize) -> i64 {
        s as i64 - self.offset
    }

    pub fn site(&self, label: i64) -> Result<usize> {
        let s = label + self.offset;
        if s < 0 || s as usize >= self.sites() {
            return Err(MottError::domain(format!("label {label} outside the chain")));
        }
        Ok(s as usize)
    }

    pub fn mean_holding(&self, s: usize) -> f64 {
        self.mean_hold[s]
    }

    /// (neighbour, probability) pairs for jumps out of `s`.
    pub fn jump_distribution(&self, s: usize) -> Vec<(usize, f64)> {
        let lo = self.start_of[s];
        let hi = self.start_of[s + 1];
        let mut prev = 0.0;
        (lo..hi)
            .map(|k| {
                let p = self.cumulative[k] - prev;
                prev = self.cumulative[k];
                (self.neighbor[k] as usize, p)
            })
            .collect()
    }

    pub fn source(&self) -> Option<NetworkFingerprint> {
        self.source
    }

    pub fn speed(&self) -> Speed {
        self.speed
    }

    /// Identifies this chain for provenance checks.
    pub fn id(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.sites().hash(&mut h);
        self.offset.hash(&mut h);
        self.graph.total_conductance().to_bits().hash(&mut h);
        self.masses.iter().sum::<f64>().to_bits().hash(&mut h);
        self.source.hash(&mut h);
        self.speed.hash(&mut h);
        h.finish()
    }

    #[inline]
    fn step(&self, s: usize, rng: &mut StreamRng) -> (f64, usize) {
        let e: f64 = rng.sample(Exp1);
        let u: f64 = rng.random();
        let lo = self.start_of[s];
        let hi = self.start_of[s + 1];
        let mut k = lo;
        while k + 1 < hi && u >= self.cumulative[k] {
            k += 1;
        }
        (e * self.mean_hold[s], self.neighbor[k] as usize)
    }

    /// Site occupied at time `t`, without recording the path. `watch` marks
    /// sites whose visit is reported (the walk keeps going).
    pub fn advance_until(&self, start: usize, t: f64, rng: &mut StreamRng, watch: Option<&[bool]>) -> Advance {
        let mut s = start;
        let mut now = 0.0;
        let mut touched = watch.is_some_and(|w| w[s]);
        let mut jumps = 0u64;
        loop {
            let (hold, next) = self.step(s, rng);
            now += hold;
            if now > t {
                return Advance { site: s, jumps, touched };
            }
            s = next;
            jumps += 1;
            if let Some(w) = watch {
                touched |= w[s];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Advance {
    pub site: usize,
    pub jumps: u64,
    pub touched: bool,
}

pub fn chain_from_network(net: &TruncatedNetwork, speed: Speed) -> Result<WeightedChain> {
    let env = net.env();
    let m = net.half_width();
    let coords: Vec<f64> = (-m..=m).map(|i| env.omega(i)).collect();
    let row = net.masses();
    let masses = match speed {
        Speed::Constant => row,
        Speed::Variable => coords.iter().map(|w| (2.0 * net.lambda_eff() * w).exp()).collect(),
        Speed::Trap => {
            if !env.has_holding_times() {
                return Err(MottError::param("trap walk needs an environment with kappa set"));
            }
            (-m..=m).zip(row).map(|(i, r)| env.tau(i) * r).collect()
        }
    };
    let mut chain = WeightedChain::new(net.graph().clone(), masses, coords, m)?;
    chain.source = Some(net.fingerprint());
    chain.speed = speed;
    Ok(chain)
}

// ---------------------------------------------------------------------------
// Recorded trajectories

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    TimeBudget,
    HittingSet,
    StepBudget,
}

/// Stopping rule: whichever of the set conditions happens first.
#[derive(Debug, Clone, Default)]
pub struct StopSpec {
    pub time: Option<f64>,
    pub hitting: Option<Vec<usize>>,
    pub max_steps: Option<u64>,
}

impl StopSpec {
    pub fn time(t: f64) -> Self {
        Self { time: Some(t), ..Self::default() }
    }

    pub fn hitting(sites: Vec<usize>) -> Self {
        Self { hitting: Some(sites), ..Self::default() }
    }

    pub fn steps(m: u64) -> Self {
        Self { max_steps: Some(m), ..Self::default() }
    }

    pub fn with_max_steps(mut self, m: u64) -> Self {
        self.max_steps = Some(m);
        self
    }
}

/// Jump times and visited sites. `times[0] = 0` is the start; the chain sits
/// at `index[k]` on `[times[k], times[k+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub index: Vec<i64>,
    pub position: Vec<f64>,
    /// Time at which simulation stopped (>= last jump time).
    pub end_time: f64,
    pub terminal: Terminal,
}

pub fn simulate(chain: &WeightedChain, start: usize, stop: &StopSpec, stream: RngStream) -> Result<Trajectory> {
    simulate_with(chain, start, stop, &mut stream.rng())
}

pub fn simulate_with(chain: &WeightedChain, start: usize, stop: &StopSpec, rng: &mut StreamRng) -> Result<Trajectory> {
    if start >= chain.sites() {
        return Err(MottError::domain(format!("start site {start} outside chain")));
    }
    if stop.time.is_none() && stop.hitting.is_none() && stop.max_steps.is_none() {
        return Err(MottError::param("stop spec needs a time, hitting set or step budget"));
    }
    let mut target = vec![false; chain.sites()];
    if let Some(h) = &stop.hitting {
        for &s in h {
            if s >= chain.sites() {
                return Err(MottError::domain(format!("hitting site {s} outside chain")));
            }
            target[s] = true;
        }
    }
    let t_max = stop.time.unwrap_or(f64::INFINITY);
    let steps = stop.max_steps.unwrap_or(u64::MAX);
    let mut traj = Trajectory {
        times: vec![0.0],
        index: vec![chain.label(start)],
        position: vec![chain.coords[start]],
        end_time: 0.0,
        terminal: Terminal::HittingSet,
    };
    if target[start] {
        return Ok(traj);
    }
    let mut s = start;
    let mut now = 0.0;
    let mut taken = 0u64;
    loop {
        if taken >= steps {
            traj.end_time = now;
            traj.terminal = Terminal::StepBudget;
            return Ok(traj);
        }
        let (hold, next) = chain.step(s, rng);
        if now + hold > t_max {
            traj.end_time = t_max;
            traj.terminal = Terminal::TimeBudget;
            return Ok(traj);
        }
        now += hold;
        s = next;
        taken += 1;
        traj.times.push(now);
        traj.index.push(chain.label(s));
        traj.position.push(chain.coords[s]);
        if target[s] {
            traj.end_time = now;
            traj.terminal = Terminal::HittingSet;
            return Ok(traj);
        }
    }
}

impl Trajectory {
    fn slot_at(&self, t: f64) -> usize {
        // Last k with times[k] <= t.
        self.times.partition_point(|&x| x <= t).saturating_sub(1)
    }

    pub fn index_at(&self, t: f64) -> i64 {
        self.index[self.slot_at(t)]
    }

    pub fn position_at(&self, t: f64) -> f64 {
        self.position[self.slot_at(t)]
    }

    /// First time the index satisfies `hit`.
    pub fn first_time(&self, hit: impl Fn(i64) -> bool) -> Option<f64> {
        self.index.iter().position(|&i| hit(i)).map(|k| self.times[k])
    }

    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "t,index,position")?;
        for k in 0..self.times.len() {
            writeln!(w, "{:.16e},{},{:.16e}", self.times[k], self.index[k], self.position[k])?;
        }
        w.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Exit times

/// Exit times sigma_n = inf{t : |X_t| >= n} for several levels from one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitTimes {
    pub levels: Vec<i64>,
    /// None when the step budget ran out first.
    pub times: Vec<Option<f64>>,
    pub steps: u64,
}

pub fn exit_times(chain: &WeightedChain, start_label: i64, levels: &[i64], max_steps: u64, rng: &mut StreamRng) -> Result<ExitTimes> {
    let mut lv: Vec<i64> = levels.to_vec();
    lv.sort_unstable();
    if lv.first().is_some_and(|&l| l < 1) {
        return Err(MottError::param("exit levels must be >= 1"));
    }
    let top = *lv.last().ok_or_else(|| MottError::param("need at least one level"))?;
    let lo = chain.label(0);
    let hi = chain.label(chain.sites() - 1);
    if -top < lo || top > hi {
        return Err(MottError::precondition(format!(
            "chain covers labels {lo}..={hi}, level {top} needs more"
        )));
    }
    let mut s = chain.site(start_label)?;
    let mut now = 0.0;
    let mut out = vec![None; lv.len()];
    let mut next = 0;
    let mut steps = 0u64;
    let mut far = start_label.abs();
    while next < lv.len() && far >= lv[next] {
        out[next] = Some(0.0);
        next += 1;
    }
    while next < lv.len() && steps < max_steps {
        let (hold, to) = chain.step(s, rng);
        now += hold;
        s = to;
        steps += 1;
        far = far.max(chain.label(s).abs());
        while next < lv.len() && far >= lv[next] {
            out[next] = Some(now);
            next += 1;
        }
    }
    // Map back to the caller's level order.
    let times = levels
        .iter()
        .map(|l| out[lv.iter().position(|x| x == l).unwrap()])
        .collect();
    Ok(ExitTimes {
        levels: levels.to_vec(),
        times,
        steps,
    })
}

/// sigma_n for a single level.
pub fn hitting_time_sigma(chain: &WeightedChain, start_label: i64, n_target: i64, max_steps: u64, stream: RngStream) -> Result<Option<f64>> {
    Ok(exit_times(chain, start_label, &[n_target], max_steps, &mut stream.rng())?.times[0])
}

// ---------------------------------------------------------------------------
// Commute times

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommuteStats {
    pub chain_id: u64,
    pub source: Option<NetworkFingerprint>,
    pub a: usize,
    pub b: usize,
    /// Durations of complete round trips a -> b -> a.
    pub samples: Vec<f64>,
}

pub fn commute_times(chain: &WeightedChain, a: usize, b: usize, runs: usize, stream: RngStream) -> Result<CommuteStats> {
    if a == b || a >= chain.sites() || b >= chain.sites() {
        return Err(MottError::domain("commute times need two distinct sites of the chain"));
    }
    let samples = (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream.replicate(r).rng();
            let mut total = 0.0;
            for (from, to) in [(a, b), (b, a)] {
                let mut s = from;
                while s != to {
                    let (hold, next) = chain.step(s, &mut rng);
                    total += hold;
                    s = next;
                }
            }
            total
        })
        .collect();
    Ok(CommuteStats {
        chain_id: chain.id(),
        source: chain.source(),
        a,
        b,
        samples,
    })
}

// ---------------------------------------------------------------------------
// Annealed marginals

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginalConfig {
    pub params: ModelParams,
    pub n: usize,
    /// Window half-width in units of n.
    #[serde(rename = "K")]
    pub k: usize,
    /// Rescaled time.
    pub t: f64,
    pub replicates: usize,
    pub speed: Speed,
    pub cutoff: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginalSamples {
    pub config: MarginalConfig,
    /// Real time n^{1+1/rho} t (or n^{1/kappa+1/rho} t for the trap walk).
    pub time: f64,
    /// index / n for the accepted replicates, in replicate order.
    pub index_scaled: Vec<f64>,
    /// omega / n for the accepted replicates.
    pub physical_scaled: Vec<f64>,
    /// Replicates whose path touched the collapsed boundary.
    pub excluded: Vec<u64>,
    pub mean_jumps: f64,
}

impl MarginalSamples {
    pub fn exclusion_rate(&self) -> f64 {
        self.excluded.len() as f64 / self.config.replicates as f64
    }

    /// One-column CSV plus a JSON sidecar.
    pub fn export(&self, dir: &Path, stem: &str) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}.csv")))?);
        writeln!(w, "index_scaled")?;
        for x in &self.index_scaled {
            writeln!(w, "{x:.16e}")?;
        }
        w.flush()?;
        let doc = serde_json::json!({
            "config": self.config, "time": self.time,
            "accepted": self.index_scaled.len(), "excluded": self.excluded.len(),
            "excluded_replicates": self.excluded, "mean_jumps": self.mean_jumps,
        });
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }
}

pub fn time_scale(params: &ModelParams, n: usize, speed: Speed) -> f64 {
    let nf = n as f64;
    match speed {
        Speed::Trap => nf.powf(1.0 / params.kappa.unwrap_or(1.0) + 1.0 / params.rho),
        _ => nf.powf(1.0 + 1.0 / params.rho),
    }
}

/// Annealed samples of n^{-1} X at rescaled time t, one fresh environment per
/// replicate. Replicates that reach the collapsed boundary are excluded.
pub fn marginal_samples(cfg: &MarginalConfig) -> Result<MarginalSamples> {
    if cfg.replicates < 100 {
        return Err(MottError::param("marginal_samples needs at least 100 replicates"));
    }
    if !(cfg.t >= 0.0) {
        return Err(MottError::param("time must be >= 0"));
    }
    if cfg.speed == Speed::Trap && cfg.params.kappa.is_none() {
        return Err(MottError::param("trap walk needs kappa"));
    }
    cfg.params.validate()?;
    let time = time_scale(&cfg.params, cfg.n, cfg.speed) * cfg.t;
    let root = RngStream::new(cfg.seed, 0);
    let cutoff = cfg.cutoff.unwrap_or_else(|| default_cutoff(cfg.params.rho, cfg.n));
    let half = cfg.k * cfg.n + boundary_margin(cfg.params.rho);
    let runs: Vec<(u64, Option<(f64, f64)>, u64)> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let rs = root.replicate(r);
            let env = Arc::new(generate_environment(&cfg.params, half, rs.child(purpose::ENVIRONMENT))?);
            let net = build_truncated_network(env, cfg.k, cfg.n, cutoff)?;
            let chain = chain_from_network(&net, cfg.speed)?;
            let mut watch = vec![false; chain.sites()];
            watch[0] = true;
            watch[chain.sites() - 1] = true;
            let start = chain.site(0)?;
            let adv = chain.advance_until(start, time, &mut rs.child(purpose::WALK).rng(), Some(&watch));
            let sample = (!adv.touched).then(|| {
                let label = chain.label(adv.site);
                (label as f64 / cfg.n as f64, chain.coords()[adv.site] / cfg.n as f64)
            });
            Ok((r, sample, adv.jumps))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = MarginalSamples {
        config: cfg.clone(),
        time,
        index_scaled: Vec::new(),
        physical_scaled: Vec::new(),
        excluded: Vec::new(),
        mean_jumps: runs.iter().map(|x| x.2 as f64).sum::<f64>() / runs.len() as f64,
    };
    for (r, s, _) in runs {
        match s {
            Some((i, p)) => {
                out.index_scaled.push(i);
                out.physical_scaled.push(p);
            }
            None => out.excluded.push(r),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Environment;

    fn path(n: usize) -> WeightedChain {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
        let g = BandedGraph::from_edges(n, &edges).unwrap();
        let masses = g.row_sums();
        WeightedChain::new(g, masses, (0..n).map(|i| i as f64).collect(), 0).unwrap()
    }

    #[test]
    fn constant_speed_path_has_unit_holding() {
        let c = path(5);
        for s in 0..5 {
            assert!((c.mean_holding(s) - 1.0).abs() < 1e-15);
        }
        let d = c.jump_distribution(2);
        assert_eq!(d.len(), 2);
        assert!(d.iter().all(|(_, p)| (p - 0.5).abs() < 1e-15));
    }

    #[test]
    fn trajectory_is_consistent() {
        let c = path(7);
        let t = simulate(&c, 3, &StopSpec::time(50.0), RngStream::new(1, 1)).unwrap();
        assert_eq!(t.terminal, Terminal::TimeBudget);
        assert!(t.times.windows(2).all(|w| w[1] > w[0]));
        assert!(t.index.windows(2).all(|w| w[0] != w[1]));
        for k in 0..t.index.len() {
            assert_eq!(t.position[k], c.coords()[t.index[k] as usize]);
        }
        assert_eq!(t.index_at(0.0), 3);
    }

    #[test]
    fn step_budget_is_reported() {
        let c = path(4);
        let t = simulate(&c, 0, &StopSpec::steps(5), RngStream::new(2, 2)).unwrap();
        assert_eq!(t.terminal, Terminal::StepBudget);
        assert_eq!(t.times.len(), 6);
        let h = simulate(&c, 0, &StopSpec::hitting(vec![3]), RngStream::new(2, 3)).unwrap();
        assert_eq!(h.terminal, Terminal::HittingSet);
        assert_eq!(*h.index.last().unwrap(), 3);
    }

    #[test]
    fn trap_needs_tau_and_reduces_to_constant() {
        let p = ModelParams::new(1.0);
        let env = Arc::new(generate_environment(&p, 10 + boundary_margin(1.0), RngStream::new(0, 0)).unwrap());
        let net = build_truncated_network(env.clone(), 1, 10, 20).unwrap();
        assert!(chain_from_network(&net, Speed::Trap).is_err());
        let v = chain_from_network(&net, Speed::Variable).unwrap();
        assert!(v.masses().iter().all(|&m| m == 1.0));
        // All tau equal to 1: trap chain equals the constant-speed chain.
        let e = &*env;
        let ones = Environment::from_parts(
            p.with_kappa(0.5),
            e.stream(),
            e.omega_slice().to_vec(),
            e.energy_slice().to_vec(),
            vec![1.0; e.omega_slice().len()],
        )
        .unwrap();
        let net1 = build_truncated_network(Arc::new(ones), 1, 10, 20).unwrap();
        let trap = chain_from_network(&net1, Speed::Trap).unwrap();
        let cons = chain_from_network(&net, Speed::Constant).unwrap();
        assert_eq!(trap.masses(), cons.masses());
    }

    #[test]
    fn exit_times_are_nested() {
        let c = {
            let edges: Vec<_> = (0..40).map(|i| (i, i + 1, 1.0)).collect();
            let g = BandedGraph::from_edges(41, &edges).unwrap();
            let m = g.row_sums();
            WeightedChain::new(g, m, vec![0.0; 41], 20).unwrap()
        };
        let mut rng = RngStream::new(3, 3).rng();
        let e = exit_times(&c, 0, &[10, 2, 5, 20], 10_000_000, &mut rng).unwrap();
        let t: Vec<f64> = e.times.iter().map(|x| x.unwrap()).collect();
        assert!(t[1] <= t[2] && t[2] <= t[0] && t[0] <= t[3]);
    }
}
