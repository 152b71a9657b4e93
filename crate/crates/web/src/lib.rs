//! Browser bindings for the demo page. Each export returns a JSON string.

use polyset::encode::{baseline_embed, polyset_embed, EncoderConfig, DEFAULT_MONOMER};
use polyset::ensemble::{empirical_moments, sample_grid};
use polyset::mwd::{analytic_moments, fit, pdf, Family, MomentSet};
use polyset::Result;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const M0: f64 = 100.0;
/// Plot window in log10(g/mol).
pub const LOG_M_RANGE: (f64, f64) = (2.5, 8.5);

#[derive(Debug, Serialize)]
pub struct FamilyCurve {
    pub family: Family,
    /// Weight fraction per unit log10 M.
    pub weight_density: Vec<f64>,
    pub moments: MomentSet,
}

#[derive(Debug, Serialize)]
pub struct Curves {
    pub log10_m: Vec<f64>,
    pub families: Vec<FamilyCurve>,
}

pub fn family_curves(mn: f64, dispersity: f64, points: usize) -> Result<Curves> {
    let points = points.max(2);
    let (lo, hi) = LOG_M_RANGE;
    let log10_m: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    let mut families = Vec::new();
    for family in Family::ALL {
        let spec = fit(family, mn, dispersity, M0)?;
        let weight_density = log10_m
            .iter()
            .map(|x| {
                let m = 10f64.powf(*x);
                pdf(&spec, m).map(|p| m * m * p * std::f64::consts::LN_10 / mn)
            })
            .collect::<Result<Vec<_>>>()?;
        families.push(FamilyCurve { family, weight_density, moments: analytic_moments(&spec) });
    }
    Ok(Curves { log10_m, families })
}

#[derive(Debug, Serialize)]
pub struct EnsembleSummary {
    pub family: Family,
    pub n: usize,
    pub analytic: MomentSet,
    pub empirical: MomentSet,
    /// Relative errors of Mn, Mw, Mz and Mz+1.
    pub relative_errors: [f64; 4],
    pub log10_m: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn ensemble_summary(family: &str, mn: f64, dispersity: f64, n: usize, span_sigmas: f64) -> Result<EnsembleSummary> {
    let family: Family = family.parse()?;
    let spec = fit(family, mn, dispersity, M0)?;
    let e = sample_grid(&spec, n, span_sigmas)?;
    let analytic = analytic_moments(&spec);
    let empirical = empirical_moments(&e)?;
    Ok(EnsembleSummary {
        family,
        n: e.n(),
        analytic,
        empirical,
        relative_errors: empirical.relative_errors(&analytic),
        log10_m: e.chains().iter().map(|c| c.m.log10()).collect(),
        weights: e.weights().to_vec(),
    })
}

#[derive(Debug, Serialize)]
pub struct EmbeddingProfile {
    pub centers: Vec<f64>,
    /// RBF block of the PolySet embedding, one curve per family.
    pub rbf: Vec<(Family, Vec<f64>)>,
    pub mean_log10_m: Vec<(Family, f64)>,
    /// Shared by every family at the same nominal (Mn, Đ).
    pub baseline: Vec<f64>,
}

pub fn embedding_profile(mn: f64, dispersity: f64, n: usize, span_sigmas: f64) -> Result<EmbeddingProfile> {
    let cfg = EncoderConfig::default();
    let off = cfg.rbf_offset();
    let mut rbf = Vec::new();
    let mut mean_log10_m = Vec::new();
    for family in Family::ALL {
        let e = sample_grid(&fit(family, mn, dispersity, M0)?, n, span_sigmas)?;
        let v = polyset_embed(&e, DEFAULT_MONOMER, &cfg)?.values;
        rbf.push((family, v[off..off + cfg.n_rbf].to_vec()));
        mean_log10_m.push((family, v[off + cfg.n_rbf]));
    }
    Ok(EmbeddingProfile {
        centers: (0..cfg.n_rbf).map(|k| cfg.center(k)).collect(),
        rbf,
        mean_log10_m,
        baseline: baseline_embed(DEFAULT_MONOMER, mn, dispersity, &cfg)?.values,
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = familyCurves)]
pub fn family_curves_js(mn: f64, dispersity: f64, points: usize) -> std::result::Result<String, JsError> {
    to_js(family_curves(mn, dispersity, points))
}

#[wasm_bindgen(js_name = ensembleSummary)]
pub fn ensemble_summary_js(family: &str, mn: f64, dispersity: f64, n: usize, span_sigmas: f64) -> std::result::Result<String, JsError> {
    to_js(ensemble_summary(family, mn, dispersity, n, span_sigmas))
}

#[wasm_bindgen(js_name = embeddingProfile)]
pub fn embedding_profile_js(mn: f64, dispersity: f64, n: usize, span_sigmas: f64) -> std::result::Result<String, JsError> {
    to_js(embedding_profile(mn, dispersity, n, span_sigmas))
}
