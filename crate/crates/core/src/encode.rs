//! Chain featurization and ensemble embeddings.
//!
//! For homopolymers a chain is fully described by its repeat unit and its
//! mass, so the per-chain encoder is a fixed map: one-hot monomer identity,
//! a bank of Gaussian radial basis functions over `log10 M`, and optionally
//! the raw `log10 M`. The PolySet embedding is the weight-averaged chain
//! feature vector; the baseline is the monomer one-hot plus nominal
//! `(log10 Mn, Đ)`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::ensemble::{Chain, PolySetEnsemble};
use crate::error::{domain, PolysetError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub n_rbf: usize,
    /// Lowest RBF center, log10(g/mol).
    pub center_lo: f64,
    /// Highest RBF center, log10(g/mol).
    pub center_hi: f64,
    /// Gaussian width in units of the center spacing.
    pub bandwidth: f64,
    pub monomer_vocab: Vec<String>,
    pub include_raw_logmass: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            n_rbf: 32,
            center_lo: 3.0,
            center_hi: 7.5,
            bandwidth: 1.0,
            monomer_vocab: vec![DEFAULT_MONOMER.to_string()],
            include_raw_logmass: true,
        }
    }
}

pub const DEFAULT_MONOMER: &str = "A";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    #[serde(alias = "poly-set")]
    PolySet,
    Baseline,
}

impl std::str::FromStr for EmbeddingKind {
    type Err = PolysetError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "polyset" | "poly-set" => Ok(EmbeddingKind::PolySet),
            "baseline" => Ok(EmbeddingKind::Baseline),
            other => Err(domain(format!("unknown representation `{other}`"))),
        }
    }
}

impl std::fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EmbeddingKind::PolySet => "polyset",
            EmbeddingKind::Baseline => "baseline",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub kind: EmbeddingKind,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rbf < 2 {
            return Err(domain(format!("n_rbf must be >= 2, got {}", self.n_rbf)));
        }
        if !(self.center_lo.is_finite() && self.center_hi.is_finite() && self.center_hi > self.center_lo) {
            return Err(domain("RBF centers need center_hi > center_lo"));
        }
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(domain("RBF bandwidth must be positive"));
        }
        if self.monomer_vocab.is_empty() {
            return Err(domain("monomer vocabulary is empty"));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.center_hi - self.center_lo) / (self.n_rbf - 1) as f64
    }

    /// Gaussian width `h` in log10 units.
    pub fn width(&self) -> f64 {
        self.bandwidth * self.spacing()
    }

    pub fn center(&self, k: usize) -> f64 {
        self.center_lo + k as f64 * self.spacing()
    }

    pub fn dim(&self, kind: EmbeddingKind) -> usize {
        let vocab = self.monomer_vocab.len();
        match kind {
            EmbeddingKind::PolySet => vocab + self.n_rbf + usize::from(self.include_raw_logmass),
            EmbeddingKind::Baseline => vocab + 2,
        }
    }

    fn monomer_index(&self, monomer: &str) -> Result<usize> {
        self.monomer_vocab
            .iter()
            .position(|m| m == monomer)
            .ok_or_else(|| PolysetError::Vocabulary(monomer.to_string()))
    }

    /// Index of the first RBF component within a PolySet embedding.
    pub fn rbf_offset(&self) -> usize {
        self.monomer_vocab.len()
    }
}

/// Feature vector `f(S)` of a single chain.
pub fn chain_features(chain: &Chain, monomer: &str, cfg: &EncoderConfig) -> Result<Vec<f64>> {
    let mut out = vec![0.0; cfg.dim(EmbeddingKind::PolySet)];
    write_chain_features(chain, cfg.monomer_index(monomer)?, cfg, &mut out);
    Ok(out)
}

fn write_chain_features(chain: &Chain, monomer: usize, cfg: &EncoderConfig, out: &mut [f64]) {
    let vocab = cfg.monomer_vocab.len();
    out[..vocab].fill(0.0);
    out[monomer] = 1.0;
    let x = chain.m.log10();
    let inv_two_h2 = 1.0 / (2.0 * cfg.width() * cfg.width());
    for k in 0..cfg.n_rbf {
        let d = x - cfg.center(k);
        out[vocab + k] = (-d * d * inv_two_h2).exp();
    }
    if cfg.include_raw_logmass {
        out[vocab + cfg.n_rbf] = x;
    }
}

/// `F_P = Σ wᵢ f(Sᵢ)`.
pub fn polyset_embed(e: &PolySetEnsemble, monomer: &str, cfg: &EncoderConfig) -> Result<Embedding> {
    cfg.validate()?;
    let monomer = cfg.monomer_index(monomer)?;
    let dim = cfg.dim(EmbeddingKind::PolySet);
    let mut values = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    for (chain, w) in e.iter() {
        write_chain_features(chain, monomer, cfg, &mut scratch);
        for (v, f) in values.iter_mut().zip(&scratch) {
            *v += w * f;
        }
    }
    Ok(Embedding { values, kind: EmbeddingKind::PolySet })
}

/// One-hot monomer followed by `[log10 Mn, Đ]`.
pub fn baseline_embed(monomer: &str, mn: f64, dispersity: f64, cfg: &EncoderConfig) -> Result<Embedding> {
    if !(mn.is_finite() && mn > 0.0) {
        return Err(domain(format!("Mn must be positive, got {mn}")));
    }
    if !(dispersity.is_finite() && dispersity >= 1.0) {
        return Err(domain(format!("dispersity must be >= 1, got {dispersity}")));
    }
    let idx = cfg.monomer_index(monomer)?;
    let mut values = vec![0.0; cfg.dim(EmbeddingKind::Baseline)];
    values[idx] = 1.0;
    let vocab = cfg.monomer_vocab.len();
    values[vocab] = mn.log10();
    values[vocab + 1] = dispersity;
    Ok(Embedding { values, kind: EmbeddingKind::Baseline })
}

/// Header line of a persisted embedding matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingFileHeader {
    pub schema: String,
    pub version: u64,
    pub kind: EmbeddingKind,
    pub dim: usize,
    pub rows: usize,
    pub config: EncoderConfig,
}

pub const EMBEDDING_SCHEMA: &str = "polyset-embeddings";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub id: u64,
    pub values: Vec<f64>,
}

/// Writes a JSON header line followed by one `{id, values}` line per row.
pub fn write_embeddings<W: Write>(
    mut out: W,
    cfg: &EncoderConfig,
    kind: EmbeddingKind,
    rows: &[EmbeddingRow],
) -> Result<()> {
    let dim = cfg.dim(kind);
    if let Some(r) = rows.iter().find(|r| r.values.len() != dim) {
        return Err(PolysetError::Shape(format!("row {} has dim {} (expected {dim})", r.id, r.values.len())));
    }
    let header = EmbeddingFileHeader {
        schema: EMBEDDING_SCHEMA.into(),
        version: 1,
        kind,
        dim,
        rows: rows.len(),
        config: cfg.clone(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_embeddings<R: BufRead>(input: R) -> Result<(EmbeddingFileHeader, Vec<EmbeddingRow>)> {
    let mut lines = input.lines();
    let first = lines.next().ok_or_else(|| PolysetError::Parse { line: 1, detail: "missing header".into() })??;
    let header: EmbeddingFileHeader =
        serde_json::from_str(&first).map_err(|e| PolysetError::Parse { line: 1, detail: e.to_string() })?;
    if header.schema != EMBEDDING_SCHEMA || header.version != 1 {
        return Err(PolysetError::Version { schema: header.schema, version: header.version });
    }
    let mut rows = Vec::with_capacity(header.rows);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: EmbeddingRow =
            serde_json::from_str(&line).map_err(|e| PolysetError::Parse { line: i + 2, detail: e.to_string() })?;
        if row.values.len() != header.dim {
            return Err(PolysetError::Parse { line: i + 2, detail: format!("expected {} values", header.dim) });
        }
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{quantize_chain, sample_grid, Provenance, SamplingMode, DEFAULT_SPAN_SIGMAS};
    use crate::mwd::{fit_lognormal, fit_schulz_zimm};
    use proptest::prelude::*;

    fn cfg() -> EncoderConfig {
        EncoderConfig::default()
    }

    fn ensemble(chains: Vec<Chain>, weights: Vec<f64>) -> PolySetEnsemble {
        let prov = Provenance { mode: SamplingMode::Grid, seed: None, span_sigmas: None, source: None };
        PolySetEnsemble::from_parts(chains, weights, 100.0, prov).unwrap()
    }

    #[test]
    fn rbf_at_center_and_one_width() {
        let cfg = EncoderConfig { center_lo: 3.0, center_hi: 6.0, n_rbf: 4, ..cfg() };
        let chain = Chain { x: 10_000, m: 1e4 };
        let f = chain_features(&chain, "A", &cfg).unwrap();
        assert_eq!(f.len(), 1 + 4 + 1);
        assert_eq!(f[0], 1.0);
        assert!((f[1 + 1] - 1.0).abs() < 1e-15);
        assert_eq!(f[5], 4.0);

        let h = cfg.width();
        let m = 10f64.powf(4.0 + h);
        let chain = Chain { x: m as u64, m };
        let f = chain_features(&chain, "A", &cfg).unwrap();
        assert!((f[2] - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn far_tail_is_negligible() {
        let c = cfg();
        let m = 10f64.powf(c.center_hi + 6.0 * c.width());
        let f = chain_features(&Chain { x: 1, m }, "A", &c).unwrap();
        assert!(f[1..1 + c.n_rbf].iter().all(|v| *v < 1.6e-8));
    }

    #[test]
    fn unknown_monomer() {
        let chain = quantize_chain(1e5, 100.0).unwrap();
        assert!(matches!(chain_features(&chain, "B", &cfg()), Err(PolysetError::Vocabulary(_))));
        assert!(matches!(baseline_embed("B", 1e5, 2.0, &cfg()), Err(PolysetError::Vocabulary(_))));
    }

    #[test]
    fn single_chain_and_identical_chains() {
        let c = quantize_chain(2e5, 100.0).unwrap();
        let f = chain_features(&c, "A", &cfg()).unwrap();
        assert_eq!(polyset_embed(&ensemble(vec![c], vec![1.0]), "A", &cfg()).unwrap().values, f);
        let e = polyset_embed(&ensemble(vec![c, c], vec![0.3, 0.7]), "A", &cfg()).unwrap();
        for (a, b) in e.values.iter().zip(&f) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn families_embed_differently() {
        let ln = sample_grid(&fit_lognormal(1e6, 3.0, 100.0).unwrap(), 512, DEFAULT_SPAN_SIGMAS).unwrap();
        let sz = sample_grid(&fit_schulz_zimm(1e6, 3.0, 100.0).unwrap(), 512, DEFAULT_SPAN_SIGMAS).unwrap();
        let a = polyset_embed(&ln, "A", &cfg()).unwrap();
        let b = polyset_embed(&sz, "A", &cfg()).unwrap();
        let dist: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(dist > 1e-3, "{dist}");
    }

    #[test]
    fn baseline_layout() {
        let e = baseline_embed("A", 1e5, 2.0, &cfg()).unwrap();
        assert_eq!(e.values, vec![1.0, 5.0, 2.0]);
        assert_eq!(e.kind, EmbeddingKind::Baseline);
        assert!(baseline_embed("A", 1e5, 1.0, &cfg()).is_ok());
        assert!(baseline_embed("A", 1e5, 0.5, &cfg()).is_err());

        let vocab = EncoderConfig { monomer_vocab: vec!["A".into(), "B".into()], ..cfg() };
        assert_eq!(baseline_embed("B", 1e4, 3.0, &vocab).unwrap().values, vec![0.0, 1.0, 4.0, 3.0]);
    }

    #[test]
    fn config_validation() {
        assert!(EncoderConfig { n_rbf: 1, ..cfg() }.validate().is_err());
        assert!(EncoderConfig { center_hi: 2.0, ..cfg() }.validate().is_err());
        assert!(EncoderConfig { bandwidth: 0.0, ..cfg() }.validate().is_err());
        assert!(cfg().validate().is_ok());
        assert_eq!(cfg().dim(EmbeddingKind::PolySet), 34);
        assert_eq!(cfg().dim(EmbeddingKind::Baseline), 3);
    }

    #[test]
    fn embedding_file_round_trip() {
        let rows = vec![
            EmbeddingRow { id: 0, values: vec![1.0, 5.0, 2.0] },
            EmbeddingRow { id: 7, values: vec![1.0, 4.25, 3.5] },
        ];
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &cfg(), EmbeddingKind::Baseline, &rows).unwrap();
        let (header, back) = read_embeddings(buf.as_slice()).unwrap();
        assert_eq!(header.dim, 3);
        assert_eq!(back, rows);

        let bad = vec![EmbeddingRow { id: 0, values: vec![1.0] }];
        assert!(write_embeddings(Vec::new(), &cfg(), EmbeddingKind::Baseline, &bad).is_err());
    }

    fn chains_strategy() -> impl Strategy<Value = (Vec<Chain>, Vec<f64>, Vec<f64>)> {
        (1usize..30).prop_flat_map(|n| {
            (
                prop::collection::vec(1u64..200_000, n),
                prop::collection::vec(0.01f64..1.0, n),
                prop::collection::vec(0.01f64..1.0, n),
            )
                .prop_map(|(xs, w1, w2)| {
                    let chains = xs.iter().map(|&x| Chain { x, m: x as f64 * 100.0 }).collect();
                    (chains, w1, w2)
                })
        })
    }

    proptest! {
        #[test]
        fn linear_in_weights((chains, w1, w2) in chains_strategy(), alpha in 0.0f64..1.0) {
            let e1 = ensemble(chains.clone(), w1.clone());
            let e2 = ensemble(chains.clone(), w2.clone());
            let mix: Vec<f64> = e1.weights().iter().zip(e2.weights()).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
            let em = ensemble(chains, mix);
            let f1 = polyset_embed(&e1, "A", &cfg()).unwrap();
            let f2 = polyset_embed(&e2, "A", &cfg()).unwrap();
            let fm = polyset_embed(&em, "A", &cfg()).unwrap();
            for i in 0..fm.dim() {
                let expected = alpha * f1.values[i] + (1.0 - alpha) * f2.values[i];
                prop_assert!((fm.values[i] - expected).abs() <= 1e-12);
            }
        }

        #[test]
        fn permutation_invariant((chains, w, _) in chains_strategy()) {
            let a = polyset_embed(&ensemble(chains.clone(), w.clone()), "A", &cfg()).unwrap();
            let b = polyset_embed(&ensemble(chains.into_iter().rev().collect(), w.into_iter().rev().collect()), "A", &cfg()).unwrap();
            prop_assert_eq!(a.dim(), b.dim());
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
