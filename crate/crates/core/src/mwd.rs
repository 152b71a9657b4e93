//! Continuous molar-mass distributions fitted to a prescribed `(Mn, Đ)`.
//!
//! All densities are number-fraction densities over the molar mass `M`
//! (g/mol), so that `Mn = E[M]` and `Mw = E[M²] / E[M]`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, PolysetError, Result};
use crate::special::{bisect, ln_gamma_pos};

/// Default relative tolerance for the Weibull shape solve.
pub const WEIBULL_TOL: f64 = 1e-13;
/// Bracket for the Weibull shape parameter.
pub const WEIBULL_SHAPE_BRACKET: (f64, f64) = (0.05, 50.0);
/// Dispersities admitted by the Weibull fit.
pub const WEIBULL_DISPERSITY_RANGE: (f64, f64) = (1.05, 20.0);
/// Tail probability that bounds the sampled support of the gamma and
/// Weibull families.
pub const TAIL_PROBABILITY: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Lognormal,
    SchulzZimm,
    Weibull,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Lognormal, Family::SchulzZimm, Family::Weibull];

    pub fn name(self) -> &'static str {
        match self {
            Family::Lognormal => "lognormal",
            Family::SchulzZimm => "schulz-zimm",
            Family::Weibull => "weibull",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = PolysetError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lognormal" | "log-normal" | "ln" => Ok(Family::Lognormal),
            "schulz-zimm" | "schulzzimm" | "sz" | "gamma" => Ok(Family::SchulzZimm),
            "weibull" | "wb" => Ok(Family::Weibull),
            other => Err(domain(format!("unknown distribution family `{other}`"))),
        }
    }
}

/// Family parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// `ln M ~ Normal(mu, sigma²)`; `sigma = 0` is the point mass at `exp(mu)`.
    Lognormal { mu: f64, sigma: f64 },
    /// Gamma density with shape `k` and scale `theta` (g/mol).
    SchulzZimm { k: f64, theta: f64 },
    /// Weibull density with shape `a` and scale `lambda` (g/mol).
    Weibull { a: f64, lambda: f64 },
}

/// A moment-matched molar-mass distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct MwdSpec {
    shape: Shape,
    target_mn: f64,
    target_dispersity: f64,
    m0: f64,
}

/// The five classical averages of a molar-mass distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub mn: f64,
    pub mw: f64,
    pub mz: f64,
    pub mz_plus_1: f64,
    pub dispersity: f64,
}

impl MomentSet {
    pub fn point_mass(m: f64) -> Self {
        MomentSet { mn: m, mw: m, mz: m, mz_plus_1: m, dispersity: 1.0 }
    }

    /// Builds the set from `ln E[M^r]` for `r = 0..=4`.
    pub(crate) fn from_log_raw_moments(ln_raw: [f64; 5]) -> Self {
        let ratio = |r: usize| (ln_raw[r] - ln_raw[r - 1]).exp();
        let mn = ratio(1);
        let mw = ratio(2);
        MomentSet { mn, mw, mz: ratio(3), mz_plus_1: ratio(4), dispersity: mw / mn }
    }

    pub fn relative_errors(&self, reference: &MomentSet) -> [f64; 4] {
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        [
            rel(self.mn, reference.mn),
            rel(self.mw, reference.mw),
            rel(self.mz, reference.mz),
            rel(self.mz_plus_1, reference.mz_plus_1),
        ]
    }
}

fn check_targets(mn: f64, dispersity: f64, m0: f64) -> Result<()> {
    if !(mn.is_finite() && mn > 0.0) {
        return Err(domain(format!("Mn must be finite and positive, got {mn}")));
    }
    if !(dispersity.is_finite() && dispersity >= 1.0) {
        return Err(domain(format!("dispersity must be finite and >= 1, got {dispersity}")));
    }
    if !(m0.is_finite() && m0 > 0.0) {
        return Err(domain(format!("monomer mass must be finite and positive, got {m0}")));
    }
    Ok(())
}

/// Lognormal with `sigma² = ln Đ` and `mu = ln Mn - sigma²/2`.
///
/// `Đ = 1` yields the point mass at `Mn`.
pub fn fit_lognormal(mn: f64, dispersity: f64, m0: f64) -> Result<MwdSpec> {
    check_targets(mn, dispersity, m0)?;
    let var = dispersity.ln();
    Ok(MwdSpec {
        shape: Shape::Lognormal { mu: mn.ln() - 0.5 * var, sigma: var.sqrt() },
        target_mn: mn,
        target_dispersity: dispersity,
        m0,
    })
}

/// Schulz–Zimm (gamma) with `k = 1/(Đ - 1)` and `theta = Mn / k`.
pub fn fit_schulz_zimm(mn: f64, dispersity: f64, m0: f64) -> Result<MwdSpec> {
    check_targets(mn, dispersity, m0)?;
    if dispersity <= 1.0 {
        return Err(domain("Schulz-Zimm needs dispersity > 1; use the point-mass path for Đ = 1"));
    }
    let k = 1.0 / (dispersity - 1.0);
    Ok(MwdSpec {
        shape: Shape::SchulzZimm { k, theta: mn / k },
        target_mn: mn,
        target_dispersity: dispersity,
        m0,
    })
}

fn ln_weibull_dispersity(a: f64) -> f64 {
    ln_gamma_pos(1.0 + 2.0 / a) - 2.0 * ln_gamma_pos(1.0 + 1.0 / a)
}

/// Weibull whose shape solves `Γ(1+2/a) / Γ(1+1/a)² = Đ` by bisection.
pub fn fit_weibull(mn: f64, dispersity: f64, m0: f64, tol: f64) -> Result<MwdSpec> {
    check_targets(mn, dispersity, m0)?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(domain(format!("tolerance must be positive, got {tol}")));
    }
    let (d_lo, d_hi) = WEIBULL_DISPERSITY_RANGE;
    let (a_lo, a_hi) = WEIBULL_SHAPE_BRACKET;
    let fit_err = || {
        PolysetError::Fit(format!(
            "Weibull shape for dispersity {dispersity} not bracketed by a in [{a_lo}, {a_hi}] \
             (supported dispersity range [{d_lo}, {d_hi}])"
        ))
    };
    if !(d_lo..=d_hi).contains(&dispersity) {
        return Err(fit_err());
    }
    let target = dispersity.ln();
    let a = bisect(a_lo, a_hi, tol, |a| ln_weibull_dispersity(a) - target).ok_or_else(fit_err)?;
    let lambda = mn / ln_gamma_pos(1.0 + 1.0 / a).exp();
    Ok(MwdSpec {
        shape: Shape::Weibull { a, lambda },
        target_mn: mn,
        target_dispersity: dispersity,
        m0,
    })
}

/// Fits `family` with default settings. `Đ = 1` always gives a point mass.
pub fn fit(family: Family, mn: f64, dispersity: f64, m0: f64) -> Result<MwdSpec> {
    if dispersity == 1.0 {
        return fit_lognormal(mn, dispersity, m0);
    }
    match family {
        Family::Lognormal => fit_lognormal(mn, dispersity, m0),
        Family::SchulzZimm => fit_schulz_zimm(mn, dispersity, m0),
        Family::Weibull => fit_weibull(mn, dispersity, m0, WEIBULL_TOL),
    }
}

/// Natural log of the number density at `m`.
pub fn ln_pdf(spec: &MwdSpec, m: f64) -> Result<f64> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(domain(format!("density needs finite m > 0, got {m}")));
    }
    if spec.is_point_mass() {
        return Err(domain("point-mass spec has no density; use the point-mass path"));
    }
    Ok(spec.ln_pdf_unchecked(m))
}

/// Number density `p(m)` in mol/g.
pub fn pdf(spec: &MwdSpec, m: f64) -> Result<f64> {
    ln_pdf(spec, m).map(f64::exp)
}

/// Closed-form `(Mn, Mw, Đ, Mz, Mz+1)` of the parameterized family.
pub fn analytic_moments(spec: &MwdSpec) -> MomentSet {
    if spec.is_point_mass() {
        return MomentSet::point_mass(spec.point_mass_location());
    }
    let mut ln_raw = [0.0; 5];
    for (r, slot) in ln_raw.iter_mut().enumerate() {
        *slot = spec.ln_raw_moment(r as f64);
    }
    MomentSet::from_log_raw_moments(ln_raw)
}

impl MwdSpec {
    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn family(&self) -> Family {
        match self.shape {
            Shape::Lognormal { .. } => Family::Lognormal,
            Shape::SchulzZimm { .. } => Family::SchulzZimm,
            Shape::Weibull { .. } => Family::Weibull,
        }
    }

    pub fn target_mn(&self) -> f64 {
        self.target_mn
    }

    pub fn target_dispersity(&self) -> f64 {
        self.target_dispersity
    }

    pub fn m0(&self) -> f64 {
        self.m0
    }

    pub fn is_point_mass(&self) -> bool {
        matches!(self.shape, Shape::Lognormal { sigma, .. } if sigma == 0.0)
    }

    pub(crate) fn point_mass_location(&self) -> f64 {
        match self.shape {
            Shape::Lognormal { mu, .. } => mu.exp(),
            _ => self.target_mn,
        }
    }

    /// `ln E[M^r]`.
    pub(crate) fn ln_raw_moment(&self, r: f64) -> f64 {
        match self.shape {
            Shape::Lognormal { mu, sigma } => r * mu + 0.5 * r * r * sigma * sigma,
            Shape::SchulzZimm { k, theta } => {
                // Γ(k+r)/Γ(k) for integer r is a rising factorial.
                if r.fract() == 0.0 && r >= 0.0 {
                    let rising: f64 = (0..r as u32).map(|j| (k + j as f64).ln()).sum();
                    r * theta.ln() + rising
                } else {
                    r * theta.ln() + ln_gamma_pos(k + r) - ln_gamma_pos(k)
                }
            }
            Shape::Weibull { a, lambda } => r * lambda.ln() + ln_gamma_pos(1.0 + r / a),
        }
    }

    pub(crate) fn ln_pdf_unchecked(&self, m: f64) -> f64 {
        let ln_m = m.ln();
        match self.shape {
            Shape::Lognormal { mu, sigma } => {
                let z = (ln_m - mu) / sigma;
                -0.5 * z * z - ln_m - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            Shape::SchulzZimm { k, theta } => {
                (k - 1.0) * ln_m - m / theta - k * theta.ln() - ln_gamma_pos(k)
            }
            Shape::Weibull { a, lambda } => {
                let ln_t = ln_m - lambda.ln();
                a.ln() - lambda.ln() + (a - 1.0) * ln_t - (a * ln_t).exp()
            }
        }
    }

    /// Cumulative distribution function at `m`.
    pub fn cdf(&self, m: f64) -> f64 {
        if m <= 0.0 {
            return 0.0;
        }
        match self.shape {
            Shape::Lognormal { mu, sigma } => {
                if sigma == 0.0 {
                    return if m >= mu.exp() { 1.0 } else { 0.0 };
                }
                0.5 * statrs::function::erf::erfc(-(m.ln() - mu) / (sigma * std::f64::consts::SQRT_2))
            }
            Shape::SchulzZimm { k, theta } => statrs::function::gamma::gamma_lr(k, m / theta),
            Shape::Weibull { a, lambda } => -(-(m / lambda).powf(a)).exp_m1(),
        }
    }

    /// Quantile function for `p` in `(0, 1)`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(domain(format!("quantile level must lie in (0, 1), got {p}")));
        }
        match self.shape {
            Shape::Lognormal { mu, sigma } => {
                let z = -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p);
                Ok((mu + sigma * z).exp())
            }
            Shape::Weibull { a, lambda } => Ok(lambda * (-(-p).ln_1p()).powf(1.0 / a)),
            Shape::SchulzZimm { k, theta } => {
                // Bracket in log-mass, then bisect on the regularized gamma.
                let center = (k * theta).ln();
                let f = |u: f64| self.cdf(u.exp()) - p;
                let mut lo = center - 1.0;
                while f(lo) > 0.0 {
                    lo -= 2.0 * (center - lo).max(1.0);
                    if lo < -700.0 {
                        return Ok(lo.exp());
                    }
                }
                let mut hi = center + 1.0;
                while f(hi) < 0.0 {
                    hi += 1.0;
                }
                let u = bisect(lo, hi, 1e-13, f)
                    .ok_or_else(|| PolysetError::Fit(format!("gamma quantile at p = {p}")))?;
                Ok(u.exp())
            }
        }
    }

    /// Mass interval sampled by the grid ensemble.
    ///
    /// The lognormal is cut at `mu ± span_sigmas·sigma`; the gamma and
    /// Weibull families use their `TAIL_PROBABILITY` quantiles and ignore
    /// `span_sigmas`.
    pub fn support(&self, span_sigmas: f64) -> Result<(f64, f64)> {
        match self.shape {
            Shape::Lognormal { mu, sigma } => {
                Ok(((mu - span_sigmas * sigma).exp(), (mu + span_sigmas * sigma).exp()))
            }
            _ => Ok((self.quantile(TAIL_PROBABILITY)?, self.quantile(1.0 - TAIL_PROBABILITY)?)),
        }
    }

    fn validate(&self) -> Result<()> {
        check_targets(self.target_mn, self.target_dispersity, self.m0)?;
        let ok = match self.shape {
            Shape::Lognormal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma >= 0.0,
            Shape::SchulzZimm { k, theta } => k.is_finite() && theta.is_finite() && k > 0.0 && theta > 0.0,
            Shape::Weibull { a, lambda } => a.is_finite() && lambda.is_finite() && a > 0.0 && lambda > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(domain(format!("invalid {} parameters {:?}", self.family(), self.shape)))
        }
    }
}

/// Serialized form: `{family, params: {..}, target_mn, target_dispersity, m0}`.
#[derive(Serialize, Deserialize)]
struct RawSpec {
    family: Family,
    params: BTreeMap<String, f64>,
    target_mn: f64,
    target_dispersity: f64,
    m0: f64,
}

impl From<MwdSpec> for RawSpec {
    fn from(spec: MwdSpec) -> Self {
        let params = match spec.shape {
            Shape::Lognormal { mu, sigma } => [("mu", mu), ("sigma", sigma)],
            Shape::SchulzZimm { k, theta } => [("k", k), ("theta", theta)],
            Shape::Weibull { a, lambda } => [("a", a), ("lambda", lambda)],
        };
        RawSpec {
            family: spec.family(),
            params: params.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            target_mn: spec.target_mn,
            target_dispersity: spec.target_dispersity,
            m0: spec.m0,
        }
    }
}

impl TryFrom<RawSpec> for MwdSpec {
    type Error = PolysetError;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let get = |name: &str| {
            raw.params
                .get(name)
                .copied()
                .ok_or_else(|| domain(format!("{} spec is missing parameter `{name}`", raw.family)))
        };
        let shape = match raw.family {
            Family::Lognormal => Shape::Lognormal { mu: get("mu")?, sigma: get("sigma")? },
            Family::SchulzZimm => Shape::SchulzZimm { k: get("k")?, theta: get("theta")? },
            Family::Weibull => Shape::Weibull { a: get("a")?, lambda: get("lambda")? },
        };
        let spec = MwdSpec {
            shape,
            target_mn: raw.target_mn,
            target_dispersity: raw.target_dispersity,
            m0: raw.m0,
        };
        spec.validate()?;
        Ok(spec)
    }
}
