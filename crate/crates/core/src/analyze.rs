//! PCA of embedding sets, rank correlation and degeneracy diagnostics.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::{PolymerRecord, Target};
use crate::encode::{EmbeddingKind, EncoderConfig};
use crate::error::{domain, PolysetError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    /// Orthonormal principal axes, one per row.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalues of the sample covariance, descending.
    pub explained_variance: Vec<f64>,
    /// Trace of the sample covariance.
    pub total_variance: f64,
    /// Centered samples projected onto `components`.
    pub projections: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

impl PcaResult {
    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance.iter().map(|v| v / self.total_variance).collect()
    }
}

/// Principal components by eigendecomposition of the sample covariance.
///
/// Each component is signed so its largest-magnitude entry is positive.
pub fn pca(samples: &[Vec<f64>], n_components: usize) -> Result<PcaResult> {
    let n = samples.len();
    if n < 2 {
        return Err(domain(format!("pca needs at least 2 samples, got {n}")));
    }
    let d = samples[0].len();
    if samples.iter().any(|s| s.len() != d) {
        return Err(PolysetError::Shape("pca samples have differing lengths".into()));
    }
    if n_components == 0 || n_components > n.min(d) {
        return Err(domain(format!("n_components must lie in [1, {}], got {n_components}", n.min(d))));
    }
    let mean: Vec<f64> = (0..d).map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| samples[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n - 1) as f64;
    let total_variance = cov.trace();
    if !(total_variance > 0.0) {
        return Err(domain("pca input has zero variance"));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(n_components);
    let mut explained_variance = Vec::with_capacity(n_components);
    for &k in order.iter().take(n_components) {
        let mut axis: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let pivot = axis.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(axis);
        explained_variance.push(eig.eigenvalues[k].max(0.0));
    }
    let projections = (0..n)
        .map(|i| components.iter().map(|c| c.iter().enumerate().map(|(j, v)| v * centered[(i, j)]).sum()).collect())
        .collect();
    Ok(PcaResult { components, explained_variance, total_variance, projections, mean })
}

/// Ranks starting at 1; ties share their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(domain(format!("spearman needs equal lengths >= 3, got {} and {}", x.len(), y.len())));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(domain("spearman input contains NaN"));
    }
    pearson(&average_ranks(x), &average_ranks(y)).ok_or_else(|| domain("spearman undefined for constant input"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group_id: u64,
    /// Nominal (fitted) Mn and Đ shared by the group.
    pub mn: f64,
    pub dispersity: f64,
    pub count: usize,
    pub log10_mz1_min: f64,
    pub log10_mz1_max: f64,
    pub log10_mz1_std: f64,
    pub log10_mz_min: f64,
    pub log10_mz_max: f64,
    pub log10_mz_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub groups: Vec<GroupStats>,
    pub mean_within_group_std_mz1: f64,
    pub mean_within_group_std_mz: f64,
}

fn min_max_std(v: &[f64]) -> (f64, f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max, std)
}

/// Spread of the tail targets within each iso-(Mn, Đ) group. Standard
/// deviations are population (divide by count).
pub fn degeneracy_report(records: &[PolymerRecord]) -> DegeneracyReport {
    let mut groups: BTreeMap<u64, Vec<&PolymerRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.group_id).or_default().push(r);
    }
    let stats: Vec<GroupStats> = groups
        .into_iter()
        .map(|(group_id, rs)| {
            let mz1: Vec<f64> = rs.iter().map(|r| r.target(Target::Mz1)).collect();
            let mz: Vec<f64> = rs.iter().map(|r| r.target(Target::Mz)).collect();
            let (a, b, c) = min_max_std(&mz1);
            let (d, e, f) = min_max_std(&mz);
            GroupStats {
                group_id,
                mn: rs[0].spec.target_mn(),
                dispersity: rs[0].spec.target_dispersity(),
                count: rs.len(),
                log10_mz1_min: a,
                log10_mz1_max: b,
                log10_mz1_std: c,
                log10_mz_min: d,
                log10_mz_max: e,
                log10_mz_std: f,
            }
        })
        .collect();
    let mean_of = |f: fn(&GroupStats) -> f64| {
        if stats.is_empty() {
            0.0
        } else {
            stats.iter().map(f).sum::<f64>() / stats.len() as f64
        }
    };
    DegeneracyReport {
        mean_within_group_std_mz1: mean_of(|g| g.log10_mz1_std),
        mean_within_group_std_mz: mean_of(|g| g.log10_mz_std),
        groups: stats,
    }
}

pub const MIN_ISO_RECORDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldCheck {
    pub representation: EmbeddingKind,
    pub n_records: usize,
    /// `None` when the embeddings carry no variance.
    pub pca: Option<PcaResult>,
    pub spearman_pc1: Option<f64>,
    pub spearman_pc2: Option<f64>,
    /// max over the two leading components of |spearman(PC, log10 Mz+1)|.
    pub spearman_pc_vs_logmz1: Option<f64>,
    /// All embeddings identical.
    pub degenerate: bool,
    /// Fewer than two distinct (family, span) shapes in the subset.
    pub low_diversity: bool,
}

/// How well the two leading principal components of an iso-(Mn, Đ) subset
/// order its records by log10 Mz+1.
pub fn iso_subset_manifold_check(
    records: &[PolymerRecord],
    enc: &EncoderConfig,
    representation: EmbeddingKind,
) -> Result<ManifoldCheck> {
    if records.len() < MIN_ISO_RECORDS {
        return Err(domain(format!("iso subset needs at least {MIN_ISO_RECORDS} records, got {}", records.len())));
    }
    let shapes: BTreeSet<(String, u64)> =
        records.iter().map(|r| (r.family.to_string(), r.sampling.span_sigmas.to_bits())).collect();
    let low_diversity = shapes.len() < 2;
    let embeddings = records.iter().map(|r| r.embedding(representation, enc).map(|e| e.values)).collect::<Result<Vec<_>>>()?;
    let targets: Vec<f64> = records.iter().map(|r| r.target(Target::Mz1)).collect();

    let n_components = 2.min(embeddings[0].len());
    let pca = match pca(&embeddings, n_components) {
        Ok(p) => p,
        Err(PolysetError::Domain(msg)) if msg.contains("zero variance") => {
            return Ok(ManifoldCheck {
                representation,
                n_records: records.len(),
                pca: None,
                spearman_pc1: None,
                spearman_pc2: None,
                spearman_pc_vs_logmz1: None,
                degenerate: true,
                low_diversity,
            })
        }
        Err(e) => return Err(e),
    };
    let rho = |k: usize| {
        if k >= n_components {
            return None;
        }
        let coord: Vec<f64> = pca.projections.iter().map(|p| p[k]).collect();
        spearman(&coord, &targets).ok()
    };
    let (spearman_pc1, spearman_pc2) = (rho(0), rho(1));
    let best = [spearman_pc1, spearman_pc2].into_iter().flatten().map(f64::abs).reduce(f64::max);
    Ok(ManifoldCheck {
        representation,
        n_records: records.len(),
        pca: Some(pca),
        spearman_pc1,
        spearman_pc2,
        spearman_pc_vs_logmz1: best,
        degenerate: false,
        low_diversity,
    })
}
