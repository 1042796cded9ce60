//! Experiment configuration and the commands behind the `mott` binary.
//!
//! Precedence for every setting: built-in default, then the JSON config
//! file, then command-line overrides.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::env::{generate_environment, Environment, ModelParams};
use crate::error::{MottError, Result};
use crate::limit::{annealed_z, LimitSpec};
use crate::network::{boundary_margin, build_truncated_network, default_cutoff, mass_moment, TruncatedNetwork};
use crate::plot::{read_columns, Figure, Style};
use crate::resistance::{
    approx_bundle, default_a_coeff, estimate_c_beta, resistance_profile, sandwich_check, sandwich_labels, PointResistance,
};
use crate::rng::{purpose, RngStream};
use crate::stats::{fit_power, ks_two_sample, mean, relative_spread, variance};
use crate::walk::{chain_from_network, exit_times, marginal_samples, simulate, time_scale, MarginalConfig, Speed, StopSpec};

pub const CONFIG_VERSION: u32 = 1;

/// One size or a list of sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sizes {
    One(usize),
    Many(Vec<usize>),
}

impl Sizes {
    pub fn list(&self) -> Vec<usize> {
        match self {
            Sizes::One(n) => vec![*n],
            Sizes::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Largest acceptable two-sample KS statistic.
    pub ks: Option<f64>,
    /// Largest acceptable relative error against an oracle value.
    pub relative_error: Option<f64>,
    /// Largest acceptable relative spread across sizes.
    pub spread: Option<f64>,
    /// Largest acceptable number of sandwich violations.
    pub violations: Option<usize>,
    /// Largest acceptable boundary-exclusion rate.
    pub exclusion: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub experiment: String,
    pub params: ModelParams,
    pub n: Sizes,
    #[serde(rename = "K", default = "one")]
    pub k: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Rescaled times for walk experiments.
    #[serde(default = "default_times")]
    pub t: Vec<f64>,
    #[serde(default = "default_speed")]
    pub speed: Speed,
    #[serde(default)]
    pub cutoff: Option<usize>,
    /// Grid spacing of the limit chain.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Grid spacing (in units of n) of resistance profiles.
    #[serde(default)]
    pub grid_step: Option<f64>,
    /// Coefficient a in a_n = floor(a log n).
    #[serde(default)]
    pub a_coeff: Option<f64>,
    /// Draws for the C_beta and mass-moment estimates.
    #[serde(default = "default_oracle_samples")]
    pub oracle_samples: usize,
    /// Intervals (a, b] in units of n for the invariant-measure table.
    #[serde(default = "default_intervals")]
    pub intervals: Vec<(f64, f64)>,
    /// Environment file used instead of a generated one (quenched runs).
    #[serde(default)]
    pub env_file: Option<PathBuf>,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
}

fn default_version() -> u32 {
    CONFIG_VERSION
}
fn one() -> usize {
    1
}
fn default_replicates() -> usize {
    100
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_times() -> Vec<f64> {
    vec![1.0]
}
fn default_speed() -> Speed {
    Speed::Constant
}
fn default_delta() -> f64 {
    0.01
}
fn default_oracle_samples() -> usize {
    100_000
}
fn default_intervals() -> Vec<(f64, f64)> {
    vec![(0.0, 1.0)]
}
fn default_max_steps() -> u64 {
    1_000_000_000
}

impl ExperimentConfig {
    pub fn new(params: ModelParams, n: usize) -> Self {
        Self {
            version: CONFIG_VERSION,
            experiment: String::new(),
            params,
            n: Sizes::One(n),
            k: 1,
            replicates: default_replicates(),
            seed: 0,
            output: default_output(),
            thresholds: Thresholds::default(),
            t: default_times(),
            speed: Speed::Constant,
            cutoff: None,
            delta: default_delta(),
            grid_step: None,
            a_coeff: None,
            oracle_samples: default_oracle_samples(),
            intervals: default_intervals(),
            env_file: None,
            max_steps: default_max_steps(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s).map_err(|e| MottError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| MottError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(MottError::Config(format!("unsupported config version {}", self.version)));
        }
        self.params.validate().map_err(|e| MottError::Config(e.to_string()))?;
        let ns = self.n.list();
        if ns.is_empty() || ns.contains(&0) {
            return Err(MottError::Config("n must be a positive size or a nonempty list of them".into()));
        }
        if self.k == 0 || self.replicates == 0 {
            return Err(MottError::Config("K and replicates must be positive".into()));
        }
        if self.t.iter().any(|t| !(*t >= 0.0)) {
            return Err(MottError::Config("times must be nonnegative".into()));
        }
        if !(self.delta > 0.0) {
            return Err(MottError::Config("delta must be positive".into()));
        }
        if self.intervals.iter().any(|(a, b)| !(a < b)) {
            return Err(MottError::Config("intervals need a < b".into()));
        }
        Ok(())
    }

    fn first_n(&self) -> usize {
        self.n.list()[0]
    }

    fn half_width(&self, n: usize) -> usize {
        self.k * n + boundary_margin(self.params.rho)
    }

    fn cutoff_for(&self, n: usize) -> usize {
        self.cutoff.unwrap_or_else(|| default_cutoff(self.params.rho, n))
    }

    fn env_stream(&self, r: u64) -> RngStream {
        RngStream::new(self.seed, r).child(purpose::ENVIRONMENT)
    }

    fn network(&self, n: usize, r: u64) -> Result<TruncatedNetwork> {
        let env = generate_environment(&self.params, self.half_width(n), self.env_stream(r))?;
        build_truncated_network(Arc::new(env), self.k, n, self.cutoff_for(n))
    }
}

/// Writes output files together with a provenance sidecar `<name>.prov.json`.
pub struct Output {
    dir: PathBuf,
    provenance: Value,
    files: Vec<String>,
}

impl Output {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Result<Self> {
        std::fs::create_dir_all(&cfg.output)?;
        Ok(Self {
            dir: cfg.output.clone(),
            provenance: json!({
                "tool": "mott",
                "version": env!("CARGO_PKG_VERSION"),
                "command": command,
                "config": cfg,
            }),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn provenance(&self) -> &Value {
        &self.provenance
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), contents)?;
        std::fs::write(
            self.dir.join(format!("{name}.prov.json")),
            serde_json::to_string_pretty(&self.provenance)?,
        )?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, v: &Value) -> Result<()> {
        self.write(name, &serde_json::to_string_pretty(v)?)
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }
}

/// A command's report and the thresholds it breached.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub report: Value,
    pub breaches: Vec<String>,
    pub files: Vec<String>,
}

fn finish(mut out: Output, name: &str, report: Value, breaches: Vec<String>) -> Result<Outcome> {
    let mut doc = report.clone();
    doc["breaches"] = json!(breaches);
    out.write_json(name, &doc)?;
    Ok(Outcome {
        report,
        breaches,
        files: out.files,
    })
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

// ---------------------------------------------------------------------------

pub fn cmd_gen_env(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let mut out = Output::new("gen-env", cfg)?;
    let n = cfg.first_n();
    let half = cfg.half_width(n);
    let envs: Vec<Environment> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| generate_environment(&cfg.params, half, cfg.env_stream(r)))
        .collect::<Result<_>>()?;
    let mut listing = Vec::new();
    for (r, env) in envs.iter().enumerate() {
        let name = format!("env_{r:04}.json");
        out.write(&name, &env.to_json()?)?;
        listing.push(json!({"file": name, "seed": env.seed(), "stream_id": env.stream().stream_id}));
    }
    finish(out, "gen_env.json", json!({"half_width": half, "environments": listing}), vec![])
}

pub fn cmd_resistance(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let mut out = Output::new("resistance", cfg)?;
    let rho = cfg.params.rho;
    let a_coeff = cfg.a_coeff.unwrap_or_else(|| default_a_coeff(rho));
    let mut table = Vec::new();
    let mut total_violations = 0usize;
    for n in cfg.n.list() {
        let step = cfg.grid_step.unwrap_or(0.01).max(1.0 / n as f64);
        let rows = (0..cfg.replicates as u64)
            .into_par_iter()
            .map(|r| {
                let net = cfg.network(n, r)?;
                let profile = resistance_profile(&net, step)?;
                let bundle = approx_bundle(&net, a_coeff)?;
                let on_events = bundle.event_upper && bundle.event_lower;
                let sandwich = if on_events {
                    Some(sandwich_check(&net, &bundle, &sandwich_labels(&net, &bundle), 1e-9)?)
                } else {
                    None
                };
                Ok((r, profile, bundle, sandwich))
            })
            .collect::<Result<Vec<_>>>()?;
        for (r, profile, bundle, sandwich) in rows {
            if r == 0 {
                out.write(
                    &format!("profile_n{n}.csv"),
                    &csv(
                        "u,index,value",
                        profile.u.iter().zip(&profile.index).zip(&profile.values).map(|((u, i), v)| format!("{u},{i},{v:.16e}")),
                    ),
                )?;
                out.write(
                    &format!("big_edges_n{n}.csv"),
                    &csv(
                        "index,r0,chi_upper,chi_lower",
                        bundle
                            .big_edges
                            .iter()
                            .map(|b| format!("{},{:.16e},{:.16e},{:.16e}", b.index, b.r0, b.chi_upper, b.chi_lower)),
                    ),
                )?;
            }
            let v = sandwich.map(|s| s.upper_violations + s.lower_violations).unwrap_or(0);
            total_violations += v;
            table.push(json!({
                "n": n, "replicate": r, "monotone": profile.monotone, "max_decrease": profile.max_decrease,
                "event_upper": bundle.event_upper, "event_lower": bundle.event_lower,
                "big_edges": bundle.big_edges.len(), "E_n": bundle.long_edge_mass,
                "sandwich": sandwich, "violations": v,
            }));
        }
    }
    let freq = |key: &str| table.iter().filter(|r| r[key] == json!(true)).count() as f64 / table.len() as f64;
    let report = json!({
        "a_coeff": a_coeff,
        "event_upper_frequency": freq("event_upper"),
        "event_lower_frequency": freq("event_lower"),
        "monotone_frequency": freq("monotone"),
        "violations": total_violations,
        "rows": table,
    });
    let mut breaches = vec![];
    if total_violations > cfg.thresholds.violations.unwrap_or(0) {
        breaches.push(format!("{total_violations} sandwich violations"));
    }
    finish(out, "resistance.json", report, breaches)
}

/// C_beta and the mass constants used to match the limit chain to the walk.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LimitConstants {
    pub c_beta: f64,
    pub c_beta_stderr: f64,
    pub mass_const: f64,
    pub trap_const: Option<f64>,
}

pub fn limit_constants(cfg: &ExperimentConfig) -> Result<LimitConstants> {
    let oracle = RngStream::new(cfg.seed, 0).child(purpose::ORACLE);
    let c = estimate_c_beta(&cfg.params, cfg.oracle_samples, oracle.child(1))?;
    let m = mass_moment(&cfg.params, 1.0, cfg.oracle_samples, oracle.child(2))?;
    let trap_const = match (cfg.speed, cfg.params.kappa) {
        (Speed::Trap, Some(kappa)) => Some(mass_moment(&cfg.params, kappa, cfg.oracle_samples, oracle.child(3))?.estimate),
        (Speed::Trap, None) => return Err(MottError::Config("trap speed needs kappa".into())),
        _ => None,
    };
    Ok(LimitConstants {
        c_beta: c.estimate,
        c_beta_stderr: c.stderr,
        mass_const: m.estimate,
        trap_const,
    })
}

pub fn cmd_converge(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    if cfg.speed == Speed::Variable {
        return Err(MottError::Config("converge compares the constant-speed or trap walk".into()));
    }
    let mut out = Output::new("converge", cfg)?;
    let n = cfg.first_n();
    let consts = limit_constants(cfg)?;
    let spec = LimitSpec {
        rho: cfg.params.rho,
        lambda: cfg.params.lambda,
        c_beta: consts.c_beta,
        mass_const: consts.mass_const,
        k: cfg.k as f64,
        delta: cfg.delta,
        epsilon: None,
        trap: consts.trap_const.map(|c| (cfg.params.kappa.unwrap_or(1.0), c)),
    };
    let z = annealed_z(&spec, &cfg.t, cfg.replicates, RngStream::new(cfg.seed, 1).child(purpose::LIMIT_WALK))?;
    let mut rows = Vec::new();
    let mut breaches = Vec::new();
    for (m, &t) in cfg.t.iter().enumerate() {
        let walk = marginal_samples(&MarginalConfig {
            params: cfg.params,
            n,
            k: cfg.k,
            t,
            replicates: cfg.replicates,
            speed: cfg.speed,
            cutoff: cfg.cutoff,
            seed: cfg.seed.wrapping_add(m as u64),
        })?;
        let zs = &z.samples[m];
        let ks = ks_two_sample(&walk.index_scaled, zs)?;
        out.write(&format!("walk_t{m}.csv"), &csv("index_scaled", walk.index_scaled.iter().map(|x| format!("{x:.16e}"))))?;
        out.write(&format!("limit_t{m}.csv"), &csv("z", zs.iter().map(|x| format!("{x:.16e}"))))?;
        if let Some(max) = cfg.thresholds.ks {
            if ks.statistic > max {
                breaches.push(format!("t = {t}: KS {:.4} > {max}", ks.statistic));
            }
        }
        if let Some(max) = cfg.thresholds.exclusion {
            if walk.exclusion_rate() > max {
                breaches.push(format!("t = {t}: exclusion {:.4} > {max}", walk.exclusion_rate()));
            }
        }
        rows.push(json!({
            "t": t, "time": walk.time, "ks": ks,
            "walk_mean": mean(&walk.index_scaled), "walk_variance": variance(&walk.index_scaled),
            "limit_mean": mean(zs), "limit_variance": variance(zs),
            "walk_exclusion": walk.exclusion_rate(), "limit_excluded": z.excluded,
            "mean_jumps": walk.mean_jumps,
        }));
    }
    finish(out, "converge.json", json!({"constants": consts, "rows": rows}), breaches)
}

/// E c * integral_a^b e^{2 lambda r / rho} dr.
pub fn measure_oracle(mass_const: f64, lambda: f64, rho: f64, a: f64, b: f64) -> f64 {
    let phi = 2.0 * lambda / rho;
    if phi == 0.0 {
        mass_const * (b - a)
    } else {
        mass_const * ((phi * b).exp() - (phi * a).exp()) / phi
    }
}

pub fn cmd_measure(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let mut out = Output::new("measure", cfg)?;
    let consts = mass_moment(
        &cfg.params,
        1.0,
        cfg.oracle_samples,
        RngStream::new(cfg.seed, 0).child(purpose::ORACLE).child(2),
    )?;
    let (rho, lambda) = (cfg.params.rho, cfg.params.lambda);
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for n in cfg.n.list() {
        let per = (0..cfg.replicates as u64)
            .into_par_iter()
            .map(|r| {
                let net = cfg.network(n, r)?;
                cfg.intervals.iter().map(|&(a, b)| net.measure_interval(a, b)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        for (j, &(a, b)) in cfg.intervals.iter().enumerate() {
            let vals: Vec<f64> = per.iter().map(|v| v[j].normalized).collect();
            let m = mean(&vals);
            let oracle = measure_oracle(consts.estimate, lambda, rho, a, b);
            let rel = (m - oracle).abs() / oracle;
            worst = worst.max(rel);
            rows.push(json!({"n": n, "a": a, "b": b, "normalized_mean": m, "oracle": oracle, "relative_error": rel}));
        }
    }
    out.write(
        "measure.csv",
        &csv(
            "n,a,b,normalized_mean,oracle,relative_error",
            rows.iter().map(|r| format!("{},{},{},{},{},{}", r["n"], r["a"], r["b"], r["normalized_mean"], r["oracle"], r["relative_error"])),
        ),
    )?;
    let mut breaches = vec![];
    if let Some(max) = cfg.thresholds.relative_error {
        if worst > max {
            breaches.push(format!("relative error {worst:.4} > {max}"));
        }
    }
    finish(out, "measure.json", json!({"mass_const": consts, "rows": rows}), breaches)
}

pub fn cmd_homog(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    if cfg.params.rho <= 1.0 {
        return Err(MottError::precondition("homogenisation needs rho > 1"));
    }
    let mut out = Output::new("homog", cfg)?;
    let mut ns = cfg.n.list();
    ns.sort_unstable();
    let big = *ns.last().unwrap();
    let per_env = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let net = cfg.network(big, r)?;
            let pr = PointResistance::new(&net, 0)?;
            ns.iter().map(|&m| Ok(pr.from_ground(m as i64)? / m as f64)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = (0..ns.len()).map(|j| mean(&per_env.iter().map(|v| v[j]).collect::<Vec<_>>())).collect();
    let spread = relative_spread(&ratios);

    let rho = cfg.params.rho;
    let mut vars = Vec::new();
    for &n in &ns {
        let walk = marginal_samples(&MarginalConfig {
            params: cfg.params,
            n,
            k: cfg.k,
            t: (n as f64).powf(1.0 - 1.0 / rho),
            replicates: cfg.replicates.max(100),
            speed: Speed::Constant,
            cutoff: cfg.cutoff,
            seed: cfg.seed.wrapping_add(n as u64),
        })?;
        vars.push(variance(&walk.index_scaled));
    }
    let fit = if ns.len() >= 3 { Some(fit_power(&ns.iter().map(|&n| n as f64).collect::<Vec<_>>(), &vars)?) } else { None };
    out.write(
        "homog.csv",
        &csv(
            "n,resistance_over_n,variance",
            ns.iter().zip(&ratios).zip(&vars).map(|((n, r), v)| format!("{n},{r},{v}")),
        ),
    )?;
    let mut breaches = vec![];
    if let Some(max) = cfg.thresholds.spread {
        if spread > max {
            breaches.push(format!("R/n spread {spread:.4} > {max}"));
        }
        if let Some(f) = &fit {
            let change = (f.slope * (big as f64 / ns[0] as f64).ln()).exp();
            if (change - 1.0).abs() > 2.0 * max {
                breaches.push(format!("variance change {change:.4} across sizes"));
            }
        }
    }
    let report = json!({
        "sizes": ns, "resistance_over_n": ratios, "R_inf_estimate": ratios.last(), "spread": spread,
        "variances": vars, "fit": fit,
    });
    finish(out, "homog.json", report, breaches)
}

pub fn cmd_quenched(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let mut out = Output::new("quenched", cfg)?;
    let mut ns = cfg.n.list();
    ns.sort_unstable();
    let big = *ns.last().unwrap();
    let env = match &cfg.env_file {
        Some(p) => Environment::load(p)?,
        None => generate_environment(&cfg.params, cfg.half_width(big), cfg.env_stream(0))?,
    };
    let net = build_truncated_network(Arc::new(env), cfg.k, big, cfg.cutoff_for(big))?;
    let chain = chain_from_network(&net, cfg.speed)?;
    let levels: Vec<i64> = ns.iter().map(|&n| n as i64).collect();
    let runs = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| exit_times(&chain, 0, &levels, cfg.max_steps, &mut RngStream::new(cfg.seed, r).child(purpose::WALK).rng()))
        .collect::<Result<Vec<_>>>()?;
    let rho = net.params().rho;
    let mut rows = Vec::new();
    let mut monotone = true;
    for run in &runs {
        let done: Vec<f64> = run.times.iter().flatten().copied().collect();
        monotone &= done.windows(2).all(|w| w[0] <= w[1]);
    }
    for (j, &n) in ns.iter().enumerate() {
        let mut s: Vec<f64> = runs
            .iter()
            .filter_map(|r| r.times[j])
            .map(|t| t / (n as f64).powf(1.0 + 1.0 / rho))
            .collect();
        s.sort_by(f64::total_cmp);
        let median = if s.is_empty() { f64::NAN } else { s[s.len() / 2] };
        rows.push(json!({"n": n, "finished": s.len(), "median_scaled_sigma": median}));
    }
    out.write(
        "quenched.csv",
        &csv("n,finished,median_scaled_sigma", rows.iter().map(|r| format!("{},{},{}", r["n"], r["finished"], r["median_scaled_sigma"]))),
    )?;
    finish(
        out,
        "quenched.json",
        json!({"network": net.header(), "pathwise_monotone": monotone, "rows": rows}),
        vec![],
    )
}

/// Simulates one trajectory on replicate 0 and draws it in physical and in
/// resistance coordinates.
pub fn cmd_plot_trajectory(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let mut out = Output::new("plot", cfg)?;
    let n = cfg.first_n();
    let net = cfg.network(n, 0)?;
    let chain = chain_from_network(&net, cfg.speed)?;
    let t = time_scale(&cfg.params, n, cfg.speed) * cfg.t.last().copied().unwrap_or(1.0);
    let traj = simulate(&chain, chain.site(0)?, &StopSpec::time(t).with_max_steps(cfg.max_steps), RngStream::new(cfg.seed, 0).child(purpose::WALK))?;
    let lo = *traj.index.iter().min().unwrap();
    let hi = *traj.index.iter().max().unwrap();
    let pr = PointResistance::new(&net, 0)?;
    let labels: Vec<i64> = (lo..=hi).collect();
    let rcoord: Vec<f64> = labels
        .iter()
        .map(|&i| Ok(if i == 0 { 0.0 } else { i.signum() as f64 * pr.from_ground(i)? }))
        .collect::<Result<_>>()?;
    let rc = |i: i64| rcoord[(i - lo) as usize];
    let env = net.env();
    out.write(
        "trajectory.csv",
        &csv(
            "time,index,position,resistance_coord",
            traj.times.iter().zip(&traj.index).map(|(t, &i)| format!("{t:.16e},{i},{:.16e},{:.16e}", env.omega(i), rc(i))),
        ),
    )?;
    let mut phys = Figure::new("walk in physical space", "omega", "time");
    phys.add("X", traj.times.iter().zip(&traj.index).map(|(t, &i)| (env.omega(i), *t)).collect(), Style::Line);
    phys.vlines = labels.iter().map(|&i| env.omega(i)).collect();
    out.write("trajectory_physical.svg", &phys.render()?)?;
    let mut res = Figure::new("walk in resistance space", "sign(i) R(omega_0, omega_i)", "time");
    res.add("X", traj.times.iter().zip(&traj.index).map(|(t, &i)| (rc(i), *t)).collect(), Style::Line);
    res.vlines = rcoord.clone();
    out.write("trajectory_resistance.svg", &res.render()?)?;
    finish(out, "plot.json", json!({"jumps": traj.times.len() - 1, "end_time": traj.end_time, "labels": [lo, hi]}), vec![])
}

/// Line or scatter plot of two columns of a CSV file.
pub fn plot_csv(data: &Path, x: &str, y: &str, scatter: bool, out: &Path) -> Result<()> {
    let pts = read_columns(data, x, y)?;
    let mut f = Figure::new(&data.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(), x, y);
    f.add(y, pts, if scatter { Style::Scatter } else { Style::Line });
    f.save(out)
}

/// Exit code for a failed command: 2 for configuration problems, 3 for
/// failed preconditions and everything else the library reports.
pub fn exit_code(e: &MottError) -> i32 {
    match e {
        MottError::Config(_) | MottError::Parameter(_) | MottError::Json(_) | MottError::Io(_) => 2,
        _ => 3,
    }
}
