//! Random environments: Palm-conditioned site positions, energy marks and
//! holding-time means.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Open01};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{MottError, Result};
use crate::rng::RngStream;

const FORMAT_VERSION: u32 = 1;

const TAG_GAPS: u64 = 0x4741_5053;
const TAG_ENERGY: u64 = 0x454e_5247;
const TAG_TAU: u64 = 0x5441_5553;

/// Law of the energy marks E_i.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnergyLaw {
    Uniform { low: f64, high: f64 },
    Constant { value: f64 },
}

impl Default for EnergyLaw {
    fn default() -> Self {
        EnergyLaw::Uniform { low: 0.0, high: 1.0 }
    }
}

/// The symmetric energy interaction U, always clamped into [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interaction {
    /// U(a,b) = |a - b|.
    #[default]
    AbsDiff,
    /// U(a,b) = (|a| + |b| + |a - b|) / 2, the classical Mott energy.
    Mott,
    /// U = 0.
    Zero,
}

/// Law of the i.i.d. gaps between consecutive sites. Both have mean 1/rho.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GapLaw {
    Exponential,
    Gamma { shape: f64 },
}

impl Default for GapLaw {
    fn default() -> Self {
        GapLaw::Exponential
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub rho: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub energy_law: EnergyLaw,
    #[serde(default)]
    pub interaction: Interaction,
    #[serde(default)]
    pub gap_law: GapLaw,
}

impl ModelParams {
    /// Poisson sites of intensity `rho`, no energy penalty, no bias, unit holding means.
    pub fn new(rho: f64) -> Self {
        Self {
            rho,
            beta: 0.0,
            lambda: 0.0,
            kappa: None,
            energy_law: EnergyLaw::default(),
            interaction: Interaction::default(),
            gap_law: GapLaw::default(),
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = Some(kappa);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(MottError::param(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(MottError::param(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(MottError::param(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if let Some(k) = self.kappa {
            if !(k > 0.0 && k < 1.0) {
                return Err(MottError::param(format!("kappa must lie in (0,1), got {k}")));
            }
        }
        match self.energy_law {
            EnergyLaw::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low <= high) {
                    return Err(MottError::param("uniform energy law needs finite low <= high"));
                }
            }
            EnergyLaw::Constant { value } => {
                if !value.is_finite() {
                    return Err(MottError::param("constant energy must be finite"));
                }
            }
        }
        if let GapLaw::Gamma { shape } = self.gap_law {
            if !(shape > 0.0 && shape.is_finite()) {
                return Err(MottError::param("gamma gap shape must be positive"));
            }
        }
        Ok(())
    }
}

/// U(e1, e2) for the configured interaction.
pub fn interaction_value(params: &ModelParams, e1: f64, e2: f64) -> f64 {
    let u = match params.interaction {
        Interaction::AbsDiff => (e1 - e2).abs(),
        Interaction::Mott => 0.5 * (e1.abs() + e2.abs() + (e1 - e2).abs()),
        Interaction::Zero => 0.0,
    };
    u.clamp(0.0, 1.0)
}

/// One realisation of the medium on the index window [-N, N].
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    params: ModelParams,
    half_width: usize,
    stream: RngStream,
    omega: Vec<f64>,
    energy: Vec<f64>,
    tau: Vec<f64>,
}

pub fn generate_environment(params: &ModelParams, n: usize, stream: RngStream) -> Result<Environment> {
    params.validate()?;
    if n == 0 {
        return Err(MottError::param("environment half-width N must be >= 1"));
    }
    let len = 2 * n + 1;

    let mut rng = stream.child(TAG_GAPS).rng();
    let mut gaps = Vec::with_capacity(2 * n);
    match params.gap_law {
        GapLaw::Exponential => {
            for _ in 0..2 * n {
                let u: f64 = rng.sample(Open01);
                gaps.push(-u.ln() / params.rho);
            }
        }
        GapLaw::Gamma { shape } => {
            let g = Gamma::new(shape, 1.0 / (shape * params.rho))
                .map_err(|e| MottError::param(format!("gamma gap law: {e}")))?;
            while gaps.len() < 2 * n {
                let x = g.sample(&mut rng);
                if x > 0.0 {
                    gaps.push(x);
                }
            }
        }
    }
    // gaps[0..n] lie to the right of the origin, gaps[n..2n] to the left.
    let mut omega = vec![0.0; len];
    for k in 1..=n {
        omega[n + k] = omega[n + k - 1] + gaps[k - 1];
        omega[n - k] = omega[n - k + 1] - gaps[n + k - 1];
    }

    let mut rng = stream.child(TAG_ENERGY).rng();
    let energy = match params.energy_law {
        EnergyLaw::Uniform { low, high } => (0..len)
            .map(|_| low + (high - low) * rng.random::<f64>())
            .collect(),
        EnergyLaw::Constant { value } => vec![value; len],
    };

    let tau = match params.kappa {
        Some(kappa) => {
            let mut rng = stream.child(TAG_TAU).rng();
            (0..len)
                .map(|_| {
                    let v: f64 = rng.sample(Open01);
                    v.powf(-1.0 / kappa)
                })
                .collect()
        }
        None => vec![1.0; len],
    };

    Ok(Environment {
        params: *params,
        half_width: n,
        stream,
        omega,
        energy,
        tau,
    })
}

impl Environment {
    /// Build from explicit arrays indexed -N..=N. Used for hand-made test media.
    pub fn from_parts(
        params: ModelParams,
        stream: RngStream,
        omega: Vec<f64>,
        energy: Vec<f64>,
        tau: Vec<f64>,
    ) -> Result<Self> {
        params.validate()?;
        let len = omega.len();
        if len < 3 || len % 2 == 0 {
            return Err(MottError::param("site arrays must have odd length 2N+1 with N >= 1"));
        }
        if energy.len() != len || tau.len() != len {
            return Err(MottError::param("omega, energy and tau must have equal length"));
        }
        let half_width = len / 2;
        if omega[half_width] != 0.0 {
            return Err(MottError::param("omega[0] must be exactly 0"));
        }
        if omega.iter().any(|w| !w.is_finite()) || omega.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MottError::param("omega must be finite and strictly increasing"));
        }
        if energy.iter().any(|e| !e.is_finite()) {
            return Err(MottError::param("energies must be finite"));
        }
        if tau.iter().any(|t| !(t.is_finite() && *t >= 1.0)) {
            return Err(MottError::param("every tau must be finite and >= 1"));
        }
        Ok(Self {
            params,
            half_width,
            stream,
            omega,
            energy,
            tau,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// N: sites exist for indices -N..=N.
    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn stream(&self) -> RngStream {
        self.stream
    }

    pub fn seed(&self) -> u64 {
        self.stream.seed
    }

    pub fn contains(&self, i: i64) -> bool {
        i.unsigned_abs() as usize <= self.half_width
    }

    #[inline]
    fn slot(&self, i: i64) -> usize {
        debug_assert!(self.contains(i), "index {i} outside window");
        (i + self.half_width as i64) as usize
    }

    #[inline]
    pub fn omega(&self, i: i64) -> f64 {
        self.omega[self.slot(i)]
    }

    #[inline]
    pub fn energy(&self, i: i64) -> f64 {
        self.energy[self.slot(i)]
    }

    #[inline]
    pub fn tau(&self, i: i64) -> f64 {
        self.tau[self.slot(i)]
    }

    /// omega_{i+1} - omega_i.
    #[inline]
    pub fn gap(&self, i: i64) -> f64 {
        self.omega(i + 1) - self.omega(i)
    }

    #[inline]
    pub fn interaction(&self, i: i64, j: i64) -> f64 {
        interaction_value(&self.params, self.energy(i), self.energy(j))
    }

    /// Site positions in index order, slot 0 holding index -N.
    pub fn omega_slice(&self) -> &[f64] {
        &self.omega
    }

    pub fn energy_slice(&self) -> &[f64] {
        &self.energy
    }

    pub fn tau_slice(&self) -> &[f64] {
        &self.tau
    }

    pub fn has_holding_times(&self) -> bool {
        self.params.kappa.is_some()
    }

    /// Same sites and marks with different model parameters (beta, lambda, U).
    /// The holding times are kept only if the new parameters carry a kappa.
    pub fn with_params(&self, params: ModelParams) -> Result<Self> {
        params.validate()?;
        if params.rho != self.params.rho || params.gap_law != self.params.gap_law {
            return Err(MottError::param("re-parameterisation may not change the site law"));
        }
        let mut out = self.clone();
        if params.kappa.is_none() {
            out.tau = vec![1.0; out.tau.len()];
        } else if params.kappa != self.params.kappa {
            return Err(MottError::param("re-parameterisation may not change kappa"));
        }
        out.params = params;
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = EnvDocOut {
            version: FORMAT_VERSION,
            params: &self.params,
            n: self.half_width,
            seed: self.stream.seed,
            stream_id: self.stream.stream_id,
            omega: raw_floats(&self.omega)?,
            energy: raw_floats(&self.energy)?,
            tau: raw_floats(&self.tau)?,
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: EnvDocIn = serde_json::from_str(s)?;
        if doc.version != FORMAT_VERSION {
            return Err(MottError::Config(format!(
                "unsupported environment format version {}",
                doc.version
            )));
        }
        if doc.omega.len() != 2 * doc.n + 1 {
            return Err(MottError::Config("array length does not match N".into()));
        }
        Self::from_parts(
            doc.params,
            RngStream::new(doc.seed, doc.stream_id),
            doc.omega,
            doc.energy,
            doc.tau,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// JSON array with every float written to 17 significant digits.
pub(crate) fn raw_floats(xs: &[f64]) -> Result<Box<RawValue>> {
    let mut s = String::with_capacity(xs.len() * 24 + 2);
    s.push('[');
    for (k, x) in xs.iter().enumerate() {
        if k > 0 {
            s.push(',');
        }
        if !x.is_finite() {
            return Err(MottError::Numerical(format!("cannot serialise non-finite value {x}")));
        }
        s.push_str(&format!("{x:.16e}"));
    }
    s.push(']');
    Ok(RawValue::from_string(s)?)
}

#[derive(Serialize)]
struct EnvDocOut<'a> {
    version: u32,
    params: &'a ModelParams,
    #[serde(rename = "N")]
    n: usize,
    seed: u64,
    stream_id: u64,
    omega: Box<RawValue>,
    energy: Box<RawValue>,
    tau: Box<RawValue>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvDocIn {
    version: u32,
    params: ModelParams,
    #[serde(rename = "N")]
    n: usize,
    seed: u64,
    stream_id: u64,
    omega: Vec<f64>,
    energy: Vec<f64>,
    tau: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(params: ModelParams, n: usize, seed: u64) -> Environment {
        generate_environment(&params, n, RngStream::new(seed, 0)).unwrap()
    }

    #[test]
    fn origin_is_a_site_and_sites_increase() {
        let e = env(ModelParams::new(0.7), 1000, 3);
        assert_eq!(e.omega(0), 0.0);
        assert!(e.omega_slice().windows(2).all(|w| w[1] > w[0]));
        assert_eq!(e.omega_slice().len(), 2001);
    }

    #[test]
    fn mean_gap_is_inverse_rate() {
        let e = env(ModelParams::new(1.0), 500_000, 11);
        let n = e.half_width() as i64;
        let mean = (e.omega(n) - e.omega(-n)) / (2 * n) as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean gap {mean}");
    }

    #[test]
    fn gamma_gaps_keep_the_mean() {
        let mut p = ModelParams::new(2.0);
        p.gap_law = GapLaw::Gamma { shape: 3.0 };
        let e = env(p, 200_000, 5);
        let n = e.half_width() as i64;
        let mean = (e.omega(n) - e.omega(-n)) / (2 * n) as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean gap {mean}");
    }

    #[test]
    fn pareto_holding_times() {
        let e = env(ModelParams::new(1.0).with_kappa(0.5), 500_000, 9);
        let taus = e.tau_slice();
        assert!(taus.iter().all(|&t| t >= 1.0));
        let m = taus.len() as f64;
        let p_hat = taus.iter().filter(|&&t| t >= 4.0).count() as f64 / m;
        let sd = (0.5 * 0.5 / m).sqrt();
        assert!((p_hat - 0.5).abs() < 3.0 * sd, "P(tau>=4) = {p_hat}");
    }

    #[test]
    fn no_kappa_means_unit_holding() {
        let e = env(ModelParams::new(1.0), 10, 1);
        assert!(e.tau_slice().iter().all(|&t| t == 1.0));
    }

    #[test]
    fn default_interaction_values() {
        let p = ModelParams::new(1.0);
        assert_eq!(interaction_value(&p, 0.3, 0.3), 0.0);
        assert_eq!(interaction_value(&p, 0.0, 1.0), 1.0);
        assert_eq!(interaction_value(&p, 0.2, 0.9), interaction_value(&p, 0.9, 0.2));
        let mut q = p;
        q.interaction = Interaction::Mott;
        assert!((interaction_value(&q, 0.2, 0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn deterministic_and_stream_sensitive() {
        let p = ModelParams::new(0.7).with_kappa(0.6);
        let a = generate_environment(&p, 50, RngStream::new(1, 2)).unwrap();
        let b = generate_environment(&p, 50, RngStream::new(1, 2)).unwrap();
        let c = generate_environment(&p, 50, RngStream::new(1, 3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_ne!(a.omega_slice(), c.omega_slice());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let p = ModelParams::new(0.7).with_beta(1.0).with_kappa(0.3);
        let a = env(p, 200, 77);
        let b = Environment::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_parameters_are_rejected() {
        assert!(generate_environment(&ModelParams::new(0.0), 5, RngStream::new(0, 0)).is_err());
        assert!(generate_environment(&ModelParams::new(1.0), 0, RngStream::new(0, 0)).is_err());
        assert!(generate_environment(&ModelParams::new(1.0).with_kappa(1.0), 5, RngStream::new(0, 0)).is_err());
        assert!(generate_environment(&ModelParams::new(1.0).with_beta(-1.0), 5, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn reparameterising_keeps_sites() {
        let a = env(ModelParams::new(0.7), 30, 4);
        let b = a.with_params(ModelParams::new(0.7).with_beta(2.0)).unwrap();
        assert_eq!(a.omega_slice(), b.omega_slice());
        assert_eq!(b.params().beta, 2.0);
        assert!(a.with_params(ModelParams::new(0.8)).is_err());
    }
}
