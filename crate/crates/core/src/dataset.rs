//! Synthetic corpus of homopolymers with deliberate iso-`(Mn, Đ)` groups.
//!
//! Each group draws one `(Mn, Đ)` pair (log-uniform `Mn`, uniform `Đ`) and
//! emits `variants_per_group` records that share it but differ in shape:
//! lognormal, Schulz–Zimm, Weibull and a lognormal whose grid is truncated
//! at a jittered span. Targets are computed from the realized ensemble.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encode::{baseline_embed, polyset_embed, Embedding, EmbeddingKind, EncoderConfig, DEFAULT_MONOMER};
use crate::ensemble::{empirical_moments, sample, PolySetEnsemble, SamplingMode, SamplingPlan, DEFAULT_SPAN_SIGMAS};
use crate::error::{domain, PolysetError, Result};
use crate::mwd::{fit, Family, MwdSpec};
use crate::seed;

pub const CORPUS_SCHEMA: &str = "polyset-corpus";
pub const CORPUS_VERSION: u64 = 1;

const GROUP_STREAM: u64 = 0x67_726f_7570; // "group"
const ISO_STREAM: u64 = 0x69_736f; // "iso"
const MAX_GROUP_ATTEMPTS: u64 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n_groups: usize,
    pub variants_per_group: usize,
    pub mn_range: [f64; 2],
    pub dispersity_range: [f64; 2],
    pub chains_per_ensemble: usize,
    pub m0: f64,
    pub monomer: String,
    pub master_seed: u64,
    pub sampling_mode: SamplingMode,
    /// Cycle distribution shapes within a group. When off, every variant
    /// is a full-span lognormal.
    pub family_cycling: bool,
    /// Span (in lognormal sigmas) of the truncated-lognormal variant.
    pub truncated_span_range: [f64; 2],
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_groups: 2500,
            variants_per_group: 4,
            mn_range: [1e4, 1e6],
            dispersity_range: [1.5, 4.0],
            chains_per_ensemble: 512,
            m0: 100.0,
            monomer: DEFAULT_MONOMER.to_string(),
            master_seed: 0,
            sampling_mode: SamplingMode::Grid,
            family_cycling: true,
            truncated_span_range: [4.0, 7.0],
        }
    }
}

impl DatasetConfig {
    pub fn total_records(&self) -> usize {
        self.n_groups * self.variants_per_group
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_groups == 0 || self.variants_per_group == 0 {
            return Err(domain("n_groups and variants_per_group must be positive"));
        }
        let [mn_lo, mn_hi] = self.mn_range;
        if !(mn_lo.is_finite() && mn_hi.is_finite() && mn_lo > 0.0 && mn_hi >= mn_lo) {
            return Err(domain(format!("invalid Mn range {:?}", self.mn_range)));
        }
        let [d_lo, d_hi] = self.dispersity_range;
        if !(d_lo.is_finite() && d_hi.is_finite() && d_lo > 1.0 && d_hi >= d_lo) {
            return Err(domain(format!("dispersity range must lie in (1, inf), got {:?}", self.dispersity_range)));
        }
        let [s_lo, s_hi] = self.truncated_span_range;
        if !(s_lo.is_finite() && s_hi.is_finite() && s_lo > 0.0 && s_hi >= s_lo) {
            return Err(domain(format!("invalid truncated span range {:?}", self.truncated_span_range)));
        }
        if self.chains_per_ensemble < 2 {
            return Err(domain("chains_per_ensemble must be >= 2"));
        }
        if !(self.m0.is_finite() && self.m0 > 0.0) {
            return Err(domain("m0 must be positive"));
        }
        if self.monomer.is_empty() {
            return Err(domain("monomer identifier is empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolymerRecord {
    pub id: u64,
    pub group_id: u64,
    pub variant: u32,
    pub family: Family,
    pub monomer: String,
    pub spec: MwdSpec,
    pub sampling: SamplingPlan,
    /// Realized number-average molar mass of the ensemble.
    pub mn: f64,
    /// Realized dispersity of the ensemble.
    pub dispersity: f64,
    pub target_log10_mz: f64,
    pub target_log10_mz1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_polyset: Option<Embedding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_baseline: Option<Embedding>,
}

impl PolymerRecord {
    /// Rebuilds the record's ensemble; sampling is deterministic.
    pub fn ensemble(&self) -> Result<PolySetEnsemble> {
        sample(&self.spec, &self.sampling)
    }

    /// Stored embeddings are reused when their dimension matches `cfg`;
    /// otherwise the embedding is recomputed.
    pub fn embedding(&self, kind: EmbeddingKind, cfg: &EncoderConfig) -> Result<Embedding> {
        let cached = match kind {
            EmbeddingKind::PolySet => &self.embedding_polyset,
            EmbeddingKind::Baseline => &self.embedding_baseline,
        };
        if let Some(e) = cached.as_ref().filter(|e| e.dim() == cfg.dim(kind)) {
            return Ok(e.clone());
        }
        match kind {
            EmbeddingKind::PolySet => polyset_embed(&self.ensemble()?, &self.monomer, cfg),
            // A database only knows the nominal (Mn, Đ) of the sample.
            EmbeddingKind::Baseline => {
                baseline_embed(&self.monomer, self.spec.target_mn(), self.spec.target_dispersity(), cfg)
            }
        }
    }

    pub fn materialize_embeddings(&mut self, cfg: &EncoderConfig) -> Result<()> {
        self.embedding_polyset = Some(self.embedding(EmbeddingKind::PolySet, cfg)?);
        self.embedding_baseline = Some(self.embedding(EmbeddingKind::Baseline, cfg)?);
        Ok(())
    }

    /// `log10` of the chosen target moment.
    pub fn target(&self, target: Target) -> f64 {
        match target {
            Target::Mz => self.target_log10_mz,
            Target::Mz1 => self.target_log10_mz1,
        }
    }
}

/// Regression target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Mz,
    Mz1,
}

impl std::str::FromStr for Target {
    type Err = PolysetError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mz" => Ok(Target::Mz),
            "mz1" | "mz+1" | "mz_plus_1" => Ok(Target::Mz1),
            other => Err(domain(format!("unknown target `{other}` (expected mz or mz1)"))),
        }
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Target::Mz => "mz",
            Target::Mz1 => "mz1",
        })
    }
}

/// Shape assigned to a variant slot.
fn variant_recipe(cfg: &DatasetConfig, variant: u32, rng: &mut ChaCha8Rng) -> (Family, f64) {
    if !cfg.family_cycling {
        return (Family::Lognormal, DEFAULT_SPAN_SIGMAS);
    }
    match variant % 4 {
        0 => (Family::Lognormal, DEFAULT_SPAN_SIGMAS),
        1 => (Family::SchulzZimm, DEFAULT_SPAN_SIGMAS),
        2 => (Family::Weibull, DEFAULT_SPAN_SIGMAS),
        _ => {
            let [lo, hi] = cfg.truncated_span_range;
            (Family::Lognormal, lo + (hi - lo) * rng.random::<f64>())
        }
    }
}

fn build_record(
    cfg: &DatasetConfig,
    id: u64,
    group_id: u64,
    variant: u32,
    mn: f64,
    dispersity: f64,
    record_seed: u64,
) -> Result<PolymerRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(record_seed);
    let (family, span_sigmas) = variant_recipe(cfg, variant, &mut rng);
    let spec = fit(family, mn, dispersity, cfg.m0)?;
    let mode = match (cfg.sampling_mode, family) {
        // Random draws exist only for the lognormal; the rest stay on the grid.
        (SamplingMode::Iid | SamplingMode::Literal, Family::SchulzZimm | Family::Weibull) => SamplingMode::Grid,
        (mode, _) => mode,
    };
    let sampling = SamplingPlan { mode, n: cfg.chains_per_ensemble, span_sigmas, seed: rng.random() };
    let ensemble = sample(&spec, &sampling)?;
    let moments = empirical_moments(&ensemble)?;
    Ok(PolymerRecord {
        id,
        group_id,
        variant,
        family,
        monomer: cfg.monomer.clone(),
        spec,
        sampling,
        mn: moments.mn,
        dispersity: moments.dispersity,
        target_log10_mz: moments.mz.log10(),
        target_log10_mz1: moments.mz_plus_1.log10(),
        embedding_polyset: None,
        embedding_baseline: None,
    })
}

fn generate_group(cfg: &DatasetConfig, group_id: u64) -> Result<Vec<PolymerRecord>> {
    let [mn_lo, mn_hi] = cfg.mn_range;
    let [d_lo, d_hi] = cfg.dispersity_range;
    let mut last_err = None;
    for attempt in 0..MAX_GROUP_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.master_seed, &[GROUP_STREAM, group_id, attempt]));
        let log_mn = mn_lo.log10() + (mn_hi.log10() - mn_lo.log10()) * rng.random::<f64>();
        let mn = 10f64.powf(log_mn);
        let dispersity = d_lo + (d_hi - d_lo) * rng.random::<f64>();

        let records: Result<Vec<_>> = (0..cfg.variants_per_group as u32)
            .map(|v| {
                let id = group_id * cfg.variants_per_group as u64 + v as u64;
                let record_seed = seed::derive(cfg.master_seed, &[group_id, v as u64, attempt]);
                build_record(cfg, id, group_id, v, mn, dispersity, record_seed)
            })
            .collect();
        match records {
            Ok(records) => return Ok(records),
            Err(e @ (PolysetError::Fit(_) | PolysetError::Domain(_))) => {
                log::warn!("group {group_id} attempt {attempt} (Mn={mn:.4e}, Đ={dispersity:.4}) skipped: {e}");
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or_else(|| domain("group generation failed")))
}

/// `n_records` records sharing one nominal (Mn, Đ), cycling the variant
/// recipe. Used for iso-(Mn, Đ) studies; all records belong to group 0.
pub fn iso_group(cfg: &DatasetConfig, mn: f64, dispersity: f64, n_records: usize) -> Result<Vec<PolymerRecord>> {
    cfg.validate()?;
    (0..n_records as u64)
        .map(|v| {
            let record_seed = seed::derive(cfg.master_seed, &[ISO_STREAM, v]);
            build_record(cfg, v, 0, v as u32, mn, dispersity, record_seed)
        })
        .collect()
}

/// Generates the whole corpus; output is a pure function of `cfg`.
pub fn generate_corpus(cfg: &DatasetConfig) -> Result<Vec<PolymerRecord>> {
    cfg.validate()?;
    let mut records = Vec::with_capacity(cfg.total_records());
    for g in 0..cfg.n_groups as u64 {
        records.extend(generate_group(cfg, g)?);
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusHeader {
    pub schema: String,
    pub version: u64,
    pub config: DatasetConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub config: Option<DatasetConfig>,
    pub records: Vec<PolymerRecord>,
}

/// JSON Lines: a schema header, then one record per line.
pub fn write_records_to<W: Write>(mut out: W, cfg: &DatasetConfig, records: &[PolymerRecord]) -> Result<()> {
    let header = CorpusHeader { schema: CORPUS_SCHEMA.into(), version: CORPUS_VERSION, config: cfg.clone() };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_records(records: &[PolymerRecord], cfg: &DatasetConfig, path: impl AsRef<Path>) -> Result<()> {
    write_records_to(BufWriter::new(File::create(path)?), cfg, records)
}

pub fn read_corpus_from<R: BufRead>(input: R) -> Result<Corpus> {
    let mut config = None;
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| PolysetError::Parse { line: line_no, detail: e.to_string() };
        if line_no == 1 {
            let value: serde_json::Value = serde_json::from_str(&line).map_err(parse_err)?;
            let schema = value.get("schema").and_then(|s| s.as_str()).unwrap_or_default().to_string();
            let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
            if schema != CORPUS_SCHEMA || version != CORPUS_VERSION {
                return Err(PolysetError::Version { schema, version });
            }
            let header: CorpusHeader = serde_json::from_value(value).map_err(parse_err)?;
            config = Some(header.config);
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(parse_err)?);
    }
    Ok(Corpus { config, records })
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    read_corpus_from(BufReader::new(File::open(path)?))
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<PolymerRecord>> {
    Ok(read_corpus(path)?.records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitUnit {
    /// Every variant of a group lands in the same split.
    #[default]
    Group,
    Record,
}

impl std::str::FromStr for SplitUnit {
    type Err = PolysetError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "group" => Ok(SplitUnit::Group),
            "record" => Ok(SplitUnit::Record),
            other => Err(domain(format!("unknown split unit `{other}` (expected group or record)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
    pub seed: u64,
    pub fractions: [f64; 3],
}

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.70, 0.15, 0.15];

/// Seeded train/validation/test partition of record ids.
pub fn split_records(
    records: &[PolymerRecord],
    fractions: [f64; 3],
    seed: u64,
    unit: SplitUnit,
) -> Result<SplitAssignment> {
    if fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(domain(format!("split fractions must be non-negative and sum to 1, got {fractions:?}")));
    }
    let key = |r: &PolymerRecord| match unit {
        SplitUnit::Group => r.group_id,
        SplitUnit::Record => r.id,
    };
    let mut units: Vec<u64> = records.iter().map(key).collect::<BTreeSet<_>>().into_iter().collect();
    let n = units.len();
    if n < 3 {
        return Err(PolysetError::DegenerateSplit(format!("need at least 3 {unit:?} units, got {n}")));
    }
    units.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let cut_a = (fractions[0] * n as f64).round() as usize;
    let cut_b = (((fractions[0] + fractions[1]) * n as f64).round() as usize).max(cut_a);
    let mut counts = [cut_a, cut_b - cut_a, n - cut_b];
    // Every split with a positive fraction gets at least one unit.
    for i in 0..3 {
        if fractions[i] > 0.0 && counts[i] == 0 {
            let donor = (0..3).max_by_key(|&j| counts[j]).unwrap();
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    let (cut_train, cut_val) = (counts[0], counts[0] + counts[1]);

    let mut which = BTreeMap::new();
    for (i, u) in units.iter().enumerate() {
        let bucket = if i < cut_train { 0 } else if i < cut_val { 1 } else { 2 };
        which.insert(*u, bucket);
    }
    let mut split = SplitAssignment { train: vec![], val: vec![], test: vec![], seed, fractions };
    for r in records {
        match which[&key(r)] {
            0 => split.train.push(r.id),
            1 => split.val.push(r.id),
            _ => split.test.push(r.id),
        }
    }
    Ok(split)
}

impl SplitAssignment {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}
