//! Finite weighted chain ensembles and their empirical moments.
//!
//! An ensemble is the list `{(Sᵢ, wᵢ)}` of chains with number-fraction
//! weights summing to one. Three samplers are provided:
//!
//! * [`sample_grid`] (default): deterministic midpoint nodes on a uniform
//!   grid in `ln M`, weighted by `p(M)·M` (density over a log-uniform
//!   proposal). Converges to `p` and needs no seed.
//! * [`sample_iid`]: independent lognormal draws with uniform weights.
//! * [`sample_literal`]: draws from `p` *and* weights by the density,
//!   which tilts the realized law towards `p²`. Kept for bias studies only.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, PolysetError, Result};
use crate::mwd::{MomentSet, MwdSpec, Shape};

/// Default grid half-width in lognormal standard deviations.
pub const DEFAULT_SPAN_SIGMAS: f64 = 8.0;

/// One chain: degree of polymerization `x` and molar mass `m = x·m0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub x: u64,
    pub m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    Grid,
    Iid,
    Literal,
    PointMass,
}

impl std::str::FromStr for SamplingMode {
    type Err = PolysetError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(SamplingMode::Grid),
            "iid" => Ok(SamplingMode::Iid),
            "literal" => Ok(SamplingMode::Literal),
            "point-mass" => Ok(SamplingMode::PointMass),
            other => Err(domain(format!("unknown sampling mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub mode: SamplingMode,
    pub seed: Option<u64>,
    pub span_sigmas: Option<f64>,
    pub source: Option<MwdSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolySetEnsemble {
    chains: Vec<Chain>,
    weights: Vec<f64>,
    m0: f64,
    provenance: Provenance,
}

/// Rounds `m / m0` half away from zero, clamping to at least one repeat unit.
pub fn quantize_chain(m: f64, m0: f64) -> Result<Chain> {
    if !(m.is_finite() && m > 0.0 && m0.is_finite() && m0 > 0.0) {
        return Err(domain(format!("chain mass and monomer mass must be positive, got m={m}, m0={m0}")));
    }
    let x = (m / m0).round().max(1.0) as u64;
    Ok(Chain { x, m: x as f64 * m0 })
}

impl PolySetEnsemble {
    /// Builds an ensemble from raw (non-negative) weights, normalizing them.
    pub fn from_parts(chains: Vec<Chain>, weights: Vec<f64>, m0: f64, provenance: Provenance) -> Result<Self> {
        if chains.is_empty() {
            return Err(domain("ensemble must contain at least one chain"));
        }
        if chains.len() != weights.len() {
            return Err(domain(format!("{} chains but {} weights", chains.len(), weights.len())));
        }
        if !(m0.is_finite() && m0 > 0.0) {
            return Err(domain(format!("monomer mass must be positive, got {m0}")));
        }
        if let Some(c) = chains.iter().find(|c| c.x == 0 || c.m != c.x as f64 * m0) {
            return Err(domain(format!("chain {c:?} inconsistent with m0 = {m0}")));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(domain("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(domain("weights sum to zero"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(PolySetEnsemble { chains, weights, m0, provenance })
    }

    pub fn chains(&self) -> &[Chain] {
        &self.chains
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn m0(&self) -> f64 {
        self.m0
    }

    pub fn n(&self) -> usize {
        self.chains.len()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Chain, f64)> {
        self.chains.iter().zip(self.weights.iter().copied())
    }

    pub fn to_json(&self) -> Result<String> {
        let raw = RawEnsemble {
            m0: self.m0,
            mode: self.provenance.mode,
            seed: self.provenance.seed,
            chains: self.iter().map(|(c, w)| (c.x, w)).collect(),
        };
        Ok(serde_json::to_string(&raw)?)
    }

    /// Inverse of [`to_json`](Self::to_json); weights are re-normalized.
    pub fn from_json(s: &str) -> Result<Self> {
        let raw: RawEnsemble = serde_json::from_str(s)?;
        let chains = raw
            .chains
            .iter()
            .map(|&(x, _)| {
                if x == 0 {
                    Err(domain("degree of polymerization must be >= 1"))
                } else {
                    Ok(Chain { x, m: x as f64 * raw.m0 })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let weights = raw.chains.iter().map(|&(_, w)| w).collect();
        let provenance = Provenance { mode: raw.mode, seed: raw.seed, span_sigmas: None, source: None };
        Self::from_parts(chains, weights, raw.m0, provenance)
    }
}

#[derive(Serialize, Deserialize)]
struct RawEnsemble {
    m0: f64,
    mode: SamplingMode,
    seed: Option<u64>,
    chains: Vec<(u64, f64)>,
}

/// Single chain at the quantized point-mass location.
pub fn point_mass(spec: &MwdSpec) -> Result<PolySetEnsemble> {
    let chain = quantize_chain(spec.target_mn(), spec.m0())?;
    let provenance = Provenance { mode: SamplingMode::PointMass, seed: None, span_sigmas: None, source: Some(*spec) };
    PolySetEnsemble::from_parts(vec![chain], vec![1.0], spec.m0(), provenance)
}

/// Deterministic log-mass quadrature ensemble.
pub fn sample_grid(spec: &MwdSpec, n: usize, span_sigmas: f64) -> Result<PolySetEnsemble> {
    if n < 2 {
        return Err(domain(format!("grid ensemble needs n >= 2, got {n}")));
    }
    if !(span_sigmas.is_finite() && span_sigmas > 0.0) {
        return Err(domain(format!("span must be positive, got {span_sigmas}")));
    }
    if spec.is_point_mass() {
        return Err(domain("point-mass spec cannot be gridded; use the point-mass path"));
    }
    let (lo, hi) = spec.support(span_sigmas)?;
    let (u_lo, u_hi) = (lo.ln(), hi.ln());
    let du = (u_hi - u_lo) / n as f64;

    let mut ln_w = Vec::with_capacity(n);
    let mut chains = Vec::with_capacity(n);
    for i in 0..n {
        let u = u_lo + (i as f64 + 0.5) * du;
        let m = u.exp();
        // p(M)·M is the importance weight against the log-uniform proposal.
        ln_w.push(spec.ln_pdf_unchecked(m) + u);
        chains.push(quantize_chain(m, spec.m0())?);
    }
    let max = ln_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights = ln_w.iter().map(|l| (l - max).exp()).collect();
    let provenance =
        Provenance { mode: SamplingMode::Grid, seed: None, span_sigmas: Some(span_sigmas), source: Some(*spec) };
    PolySetEnsemble::from_parts(chains, weights, spec.m0(), provenance)
}

fn lognormal_draws(spec: &MwdSpec, n: usize, seed: u64) -> Result<(f64, f64, Vec<f64>)> {
    let Shape::Lognormal { mu, sigma } = spec.shape() else {
        return Err(PolysetError::Capability(format!(
            "random sampling is only implemented for the lognormal family, not {}",
            spec.family()
        )));
    };
    if n < 1 {
        return Err(domain("ensemble needs n >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (mu + sigma * z).exp()
        })
        .collect();
    Ok((mu, sigma, draws))
}

/// Independent lognormal draws with uniform weights `1/n`.
pub fn sample_iid(spec: &MwdSpec, n: usize, seed: u64) -> Result<PolySetEnsemble> {
    let (_, _, draws) = lognormal_draws(spec, n, seed)?;
    let chains = draws.iter().map(|&m| quantize_chain(m, spec.m0())).collect::<Result<Vec<_>>>()?;
    let provenance = Provenance { mode: SamplingMode::Iid, seed: Some(seed), span_sigmas: None, source: Some(*spec) };
    PolySetEnsemble::from_parts(chains, vec![1.0; n], spec.m0(), provenance)
}

/// Draws from the lognormal and weights each draw by its density.
///
/// The density is taken in log-mass coordinates (the normal density of
/// `ln M`, i.e. `p(M)·M`), the natural coordinate of the lognormal. The
/// weighted law is then lognormal with width `sigma/√2` around `mu`, so the
/// realized `Mn` tends to `exp(mu + sigma²/4)` instead of the target.
pub fn sample_literal(spec: &MwdSpec, n: usize, seed: u64) -> Result<PolySetEnsemble> {
    let (mu, sigma, draws) = lognormal_draws(spec, n, seed)?;
    let chains = draws.iter().map(|&m| quantize_chain(m, spec.m0())).collect::<Result<Vec<_>>>()?;
    let weights = if sigma == 0.0 {
        vec![1.0; n]
    } else {
        draws
            .iter()
            .map(|m| {
                let z = (m.ln() - mu) / sigma;
                (-0.5 * z * z).exp()
            })
            .collect()
    };
    let provenance =
        Provenance { mode: SamplingMode::Literal, seed: Some(seed), span_sigmas: None, source: Some(*spec) };
    PolySetEnsemble::from_parts(chains, weights, spec.m0(), provenance)
}

/// How to materialize an ensemble from a spec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub mode: SamplingMode,
    pub n: usize,
    pub span_sigmas: f64,
    pub seed: u64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan { mode: SamplingMode::Grid, n: 512, span_sigmas: DEFAULT_SPAN_SIGMAS, seed: 0 }
    }
}

/// Samples according to `plan`, routing point-mass specs to a single chain.
pub fn sample(spec: &MwdSpec, plan: &SamplingPlan) -> Result<PolySetEnsemble> {
    if spec.is_point_mass() || plan.mode == SamplingMode::PointMass {
        return point_mass(spec);
    }
    match plan.mode {
        SamplingMode::Grid => sample_grid(spec, plan.n, plan.span_sigmas),
        SamplingMode::Iid => sample_iid(spec, plan.n, plan.seed),
        SamplingMode::Literal => sample_literal(spec, plan.n, plan.seed),
        SamplingMode::PointMass => unreachable!(),
    }
}

/// Weighted molar-mass averages of the ensemble.
///
/// Terms are accumulated in ascending mass order on `(Mᵢ / M_max)^r`, which
/// makes the result independent of chain order and keeps the fourth power
/// well scaled.
pub fn empirical_moments(e: &PolySetEnsemble) -> Result<MomentSet> {
    moments_of(e.chains.iter().map(|c| c.m), e.weights.iter().copied())
}

pub(crate) fn moments_of(masses: impl Iterator<Item = f64>, weights: impl Iterator<Item = f64>) -> Result<MomentSet> {
    let mut pairs: Vec<(f64, f64)> = masses.zip(weights).collect();
    if pairs.is_empty() {
        return Err(domain("moments of an empty ensemble"));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let m_max = pairs.last().unwrap().0;
    let mut sums = [0.0f64; 5];
    for &(m, w) in &pairs {
        let s = m / m_max;
        let mut p = w;
        for slot in sums.iter_mut() {
            *slot += p;
            p *= s;
        }
    }
    if sums[4] == 0.0 {
        return Err(domain("ensemble has no weight"));
    }
    let ratio = |r: usize| m_max * (sums[r] / sums[r - 1]);
    let mn = ratio(1);
    let mw = ratio(2);
    Ok(MomentSet { mn, mw, mz: ratio(3), mz_plus_1: ratio(4), dispersity: mw / mn })
}
