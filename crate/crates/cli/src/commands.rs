use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use polyset::analyze::{degeneracy_report, iso_subset_manifold_check};
use polyset::dataset::{
    generate_corpus, iso_group, read_corpus, split_records, write_records, DatasetConfig, PolymerRecord,
    SplitAssignment, SplitUnit, DEFAULT_FRACTIONS,
};
use polyset::encode::{write_embeddings, EmbeddingRow, EncoderConfig};
use polyset::ensemble::{empirical_moments, sample, SamplingPlan};
use polyset::learn::{smape_terms, train_with_observer, Checkpoint, TrainConfig};
use polyset::mwd::{analytic_moments, fit, MomentSet};
use serde::{Deserialize, Serialize};

use crate::svg;
use crate::{Cli, Command, CorpusArg, EmbedArgs, EncoderArgs, GenArgs, MomentsArgs, PcaArgs, TrainArgs};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSettings {
    pub fractions: [f64; 3],
    pub seed: u64,
    pub unit: SplitUnit,
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings { fractions: DEFAULT_FRACTIONS, seed: 0, unit: SplitUnit::Group }
    }
}

/// Everything a run depends on besides its input files.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub split: SplitSettings,
}

#[derive(Serialize)]
struct Resolved<'a> {
    command: &'a Command,
    seed: Option<u64>,
    config_file: Option<&'a Path>,
    config: &'a RunConfig,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.dataset.master_seed = seed;
        cfg.train.seed = seed;
        cfg.split.seed = seed;
    }
    Ok(cfg)
}

fn apply_encoder(cfg: &mut EncoderConfig, args: &EncoderArgs) {
    if let Some(v) = args.n_rbf {
        cfg.n_rbf = v;
    }
    if let Some(v) = args.center_lo {
        cfg.center_lo = v;
    }
    if let Some(v) = args.center_hi {
        cfg.center_hi = v;
    }
    if let Some(v) = args.bandwidth {
        cfg.bandwidth = v;
    }
    if args.no_raw_logmass {
        cfg.include_raw_logmass = false;
    }
}

struct Out {
    dir: PathBuf,
}

impl Out {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Out { dir: dir.to_path_buf() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn text(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut body = serde_json::to_string_pretty(value)?;
        body.push('\n');
        self.text(name, &body)
    }

    fn csv<R: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<PathBuf> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(path)
    }
}

fn require_file(path: &Path) -> Result<()> {
    ensure!(path.is_file(), "input file {} does not exist", path.display());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = load_config(cli)?;
    match &cli.command {
        Command::GenDataset(a) => apply_gen(&mut cfg.dataset, a)?,
        Command::Embed(a) => apply_encoder(&mut cfg.encoder, &a.encoder),
        Command::TrainEval(a) => apply_train(&mut cfg, a),
        Command::Pca(a) => apply_encoder(&mut cfg.encoder, &a.encoder),
        Command::Moments(_) | Command::DegeneracyReport(_) => {}
    }
    match &cli.command {
        Command::Embed(EmbedArgs { corpus, .. })
        | Command::TrainEval(TrainArgs { corpus, .. })
        | Command::DegeneracyReport(CorpusArg { corpus }) => require_file(corpus)?,
        Command::Pca(PcaArgs { corpus: Some(corpus), .. }) => require_file(corpus)?,
        _ => {}
    }
    if let Command::TrainEval(TrainArgs { split: Some(split), .. }) = &cli.command {
        require_file(split)?;
    }

    let out = Out::new(&cli.out_dir)?;
    let name = match &cli.command {
        Command::GenDataset(_) => "gen-dataset",
        Command::Moments(_) => "moments",
        Command::Embed(_) => "embed",
        Command::TrainEval(_) => "train-eval",
        Command::Pca(_) => "pca",
        Command::DegeneracyReport(_) => "degeneracy-report",
    };
    let resolved = Resolved { command: &cli.command, seed: cli.seed, config_file: cli.config.as_deref(), config: &cfg };
    out.json(&format!("{name}.config.json"), &resolved)?;

    match &cli.command {
        Command::GenDataset(a) => gen_dataset(&cfg, a, &out),
        Command::Moments(a) => moments(&cfg, a, &out),
        Command::Embed(a) => embed(&cfg, a, &out),
        Command::TrainEval(a) => train_eval(&cfg, a, &out),
        Command::Pca(a) => pca(&cfg, a, &out),
        Command::DegeneracyReport(a) => degeneracy(a, &out),
    }
}

fn apply_gen(d: &mut DatasetConfig, a: &GenArgs) -> Result<()> {
    if let Some(v) = a.variants {
        d.variants_per_group = v;
    }
    if let Some(v) = a.groups {
        d.n_groups = v;
    }
    if let Some(n) = a.records {
        ensure!(
            d.variants_per_group > 0 && n % d.variants_per_group == 0 && n > 0,
            "--records {n} must be a positive multiple of the {} variants per group",
            d.variants_per_group
        );
        d.n_groups = n / d.variants_per_group;
    }
    if let Some(v) = a.chains {
        d.chains_per_ensemble = v;
    }
    if let Some(v) = a.mn_min {
        d.mn_range[0] = v;
    }
    if let Some(v) = a.mn_max {
        d.mn_range[1] = v;
    }
    if let Some(v) = a.disp_min {
        d.dispersity_range[0] = v;
    }
    if let Some(v) = a.disp_max {
        d.dispersity_range[1] = v;
    }
    if let Some(v) = a.m0 {
        d.m0 = v;
    }
    if let Some(v) = a.mode {
        d.sampling_mode = v;
    }
    if a.no_family_cycling {
        d.family_cycling = false;
    }
    d.validate()?;
    Ok(())
}

fn apply_train(cfg: &mut RunConfig, a: &TrainArgs) {
    apply_encoder(&mut cfg.encoder, &a.encoder);
    let t = &mut cfg.train;
    if let Some(v) = a.target {
        t.target = v;
    }
    if let Some(v) = a.epochs {
        t.max_epochs = v;
    }
    match a.patience {
        Some(v) => t.patience = v,
        // A short budget without an explicit patience just runs to the end.
        None if t.max_epochs > 0 && t.patience > t.max_epochs => t.patience = t.max_epochs,
        None => {}
    }
    if let Some(v) = a.lr {
        t.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = &a.hidden {
        t.hidden = v.clone();
    }
    if a.raw_embeddings {
        t.standardize_embeddings = false;
    }
    if let Some(v) = a.split_seed {
        cfg.split.seed = v;
    }
    if let Some(v) = a.split_unit {
        cfg.split.unit = v;
    }
}

#[derive(Serialize)]
struct HistRow {
    bin_lo: f64,
    bin_hi: f64,
    count: usize,
}

fn histogram(values: impl Iterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Vec<HistRow> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in values {
        if width > 0.0 {
            let k = ((v - lo) / width).floor();
            if k >= 0.0 {
                counts[(k as usize).min(bins - 1)] += 1;
            }
        } else {
            counts[0] += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistRow { bin_lo: lo + k as f64 * width, bin_hi: lo + (k + 1) as f64 * width, count })
        .collect()
}

#[derive(Serialize)]
struct CellRow {
    mn_bin: usize,
    dispersity_bin: usize,
    log10_mn_lo: f64,
    log10_mn_hi: f64,
    dispersity_lo: f64,
    dispersity_hi: f64,
    count: usize,
}

#[derive(Serialize)]
struct TailRow<'a> {
    id: u64,
    group_id: u64,
    family: &'a str,
    span_sigmas: f64,
    log10_mn: f64,
    dispersity: f64,
    log10_mz: f64,
    log10_mz1: f64,
}

#[derive(Serialize)]
struct Coverage {
    records: usize,
    groups: usize,
    coverage_bins: [usize; 2],
    empty_cells: usize,
    min_cell_count: usize,
}

const COVERAGE_BINS: usize = 10;

fn gen_dataset(cfg: &RunConfig, a: &GenArgs, out: &Out) -> Result<()> {
    let d = &cfg.dataset;
    let mut records = generate_corpus(d)?;
    if a.embed {
        for r in &mut records {
            r.materialize_embeddings(&cfg.encoder)?;
        }
    }
    let corpus_path = a.corpus.clone().unwrap_or_else(|| out.path("corpus.jsonl"));
    write_records(&records, d, &corpus_path)?;

    let (lmn_lo, lmn_hi) = (d.mn_range[0].log10(), d.mn_range[1].log10());
    let [d_lo, d_hi] = d.dispersity_range;
    out.csv("mn_histogram.csv", histogram(records.iter().map(|r| r.mn.log10()), lmn_lo, lmn_hi, 20))?;
    out.csv("dispersity_histogram.csv", histogram(records.iter().map(|r| r.dispersity), d_lo, d_hi, 20))?;

    // Coverage of the nominal (Mn, Đ) rectangle, one point per group.
    let bins = COVERAGE_BINS;
    let mut cells = vec![0usize; bins * bins];
    let groups: Vec<&PolymerRecord> = records.iter().filter(|r| r.variant == 0).collect();
    let index = |v: f64, lo: f64, hi: f64| {
        if hi > lo {
            (((v - lo) / (hi - lo) * bins as f64).floor().max(0.0) as usize).min(bins - 1)
        } else {
            0
        }
    };
    for r in &groups {
        let i = index(r.spec.target_mn().log10(), lmn_lo, lmn_hi);
        let j = index(r.spec.target_dispersity(), d_lo, d_hi);
        cells[i * bins + j] += 1;
    }
    let cell_rows = (0..bins * bins).map(|c| {
        let (i, j) = (c / bins, c % bins);
        let (wm, wd) = ((lmn_hi - lmn_lo) / bins as f64, (d_hi - d_lo) / bins as f64);
        CellRow {
            mn_bin: i,
            dispersity_bin: j,
            log10_mn_lo: lmn_lo + i as f64 * wm,
            log10_mn_hi: lmn_lo + (i + 1) as f64 * wm,
            dispersity_lo: d_lo + j as f64 * wd,
            dispersity_hi: d_lo + (j + 1) as f64 * wd,
            count: cells[c],
        }
    });
    out.csv("mn_dispersity_bins.csv", cell_rows)?;

    let names: Vec<String> = records.iter().map(|r| r.family.to_string()).collect();
    out.csv(
        "tail_moment_scatter.csv",
        records.iter().zip(&names).map(|(r, family)| TailRow {
            id: r.id,
            group_id: r.group_id,
            family,
            span_sigmas: r.sampling.span_sigmas,
            log10_mn: r.mn.log10(),
            dispersity: r.dispersity,
            log10_mz: r.target_log10_mz,
            log10_mz1: r.target_log10_mz1,
        }),
    )?;
    let pts: Vec<(f64, f64)> = records.iter().map(|r| (r.mn.log10(), r.target_log10_mz1)).collect();
    let disp: Vec<f64> = records.iter().map(|r| r.dispersity).collect();
    out.text("mz1_vs_mn.svg", &svg::scatter("Tail moment vs Mn (shade: dispersity)", "log10 Mn", "log10 Mz+1", &pts, Some(&disp)))?;
    let cov_pts: Vec<(f64, f64)> = groups.iter().map(|r| (r.spec.target_mn().log10(), r.spec.target_dispersity())).collect();
    out.text("mn_dispersity_coverage.svg", &svg::scatter("Nominal (Mn, dispersity) per group", "log10 Mn", "dispersity", &cov_pts, None))?;

    let coverage = Coverage {
        records: records.len(),
        groups: groups.len(),
        coverage_bins: [bins, bins],
        empty_cells: cells.iter().filter(|c| **c == 0).count(),
        min_cell_count: cells.iter().copied().min().unwrap_or(0),
    };
    out.json("coverage.json", &coverage)?;
    println!("wrote {} records ({} groups) to {}", coverage.records, coverage.groups, corpus_path.display());
    println!("coverage: {} of {} (Mn, Đ) cells empty", coverage.empty_cells, bins * bins);
    Ok(())
}

#[derive(Serialize)]
struct MomentsReport {
    family: String,
    spec: polyset::mwd::MwdSpec,
    sampling: SamplingPlan,
    analytic: MomentSet,
    empirical: MomentSet,
    /// |empirical - analytic| / analytic for Mn, Mw, Mz, Mz+1.
    relative_error: [f64; 4],
}

fn moments(cfg: &RunConfig, a: &MomentsArgs, out: &Out) -> Result<()> {
    let spec = fit(a.family, a.mn, a.disp, a.m0)?;
    let plan = SamplingPlan { mode: a.mode, n: a.chains, span_sigmas: a.span, seed: cfg.dataset.master_seed };
    let analytic = analytic_moments(&spec);
    let empirical = empirical_moments(&sample(&spec, &plan)?)?;
    let report = MomentsReport {
        family: a.family.to_string(),
        relative_error: empirical.relative_errors(&analytic),
        spec,
        sampling: plan,
        analytic,
        empirical,
    };
    println!("{:<10} {:>14} {:>14} {:>10}", "moment", "analytic", "ensemble", "rel.err");
    let rows = [
        ("Mn", analytic.mn, empirical.mn),
        ("Mw", analytic.mw, empirical.mw),
        ("Mz", analytic.mz, empirical.mz),
        ("Mz+1", analytic.mz_plus_1, empirical.mz_plus_1),
        ("Đ", analytic.dispersity, empirical.dispersity),
    ];
    for (label, x, y) in rows {
        println!("{label:<10} {x:>14.6e} {y:>14.6e} {:>10.3e}", ((y - x) / x).abs());
    }
    out.json("moments.json", &report)?;
    Ok(())
}

fn embed(cfg: &RunConfig, a: &EmbedArgs, out: &Out) -> Result<()> {
    cfg.encoder.validate()?;
    let corpus = read_corpus(&a.corpus)?;
    let rows = corpus
        .records
        .iter()
        .map(|r| Ok(EmbeddingRow { id: r.id, values: r.embedding(a.representation, &cfg.encoder)?.values }))
        .collect::<Result<Vec<_>>>()?;
    let name = format!("embeddings_{}.jsonl", a.representation);
    let path = out.path(&name);
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("writing {}", path.display()))?);
    write_embeddings(&mut w, &cfg.encoder, a.representation, &rows)?;
    w.flush()?;
    println!("wrote {} {} embeddings (dim {}) to {}", rows.len(), a.representation, cfg.encoder.dim(a.representation), path.display());
    Ok(())
}

#[derive(Serialize)]
struct CurveRow {
    epoch: usize,
    train_mse: f64,
    val_mse: f64,
}

#[derive(Serialize)]
struct ParityRow {
    id: u64,
    true_log10: f64,
    predicted_log10: f64,
}

#[derive(Serialize)]
struct SmapeRow {
    id: u64,
    smape_percent: f64,
}

fn write_curves(out: &Out, prefix: &str, curve: &[CurveRow]) -> Result<()> {
    out.csv(&format!("{prefix}_learning_curve.csv"), curve)?;
    let series = [
        svg::Series { label: "train", points: curve.iter().map(|c| (c.epoch as f64, c.train_mse.log10())).collect() },
        svg::Series { label: "validation", points: curve.iter().map(|c| (c.epoch as f64, c.val_mse.log10())).collect() },
    ];
    out.text(
        &format!("{prefix}_learning_curve.svg"),
        &svg::lines(&format!("Learning curve ({prefix})"), "epoch", "log10 MSE (standardized)", &series),
    )?;
    Ok(())
}

fn train_eval(cfg: &RunConfig, a: &TrainArgs, out: &Out) -> Result<()> {
    let corpus = read_corpus(&a.corpus)?;
    let split = match &a.split {
        Some(path) => SplitAssignment::read(path)?,
        None => {
            let s = split_records(&corpus.records, cfg.split.fractions, cfg.split.seed, cfg.split.unit)?;
            s.write(out.path("split.json"))?;
            s
        }
    };
    let prefix = format!("{}_{}", a.representation, cfg.train.target);
    let mut curve = Vec::new();
    let result = train_with_observer(&corpus.records, a.representation, &split, &cfg.encoder, &cfg.train, |epoch, t, v| {
        curve.push(CurveRow { epoch, train_mse: t, val_mse: v })
    });
    write_curves(out, &prefix, &curve)?;
    let outcome = result.context("training failed; partial learning curve written")?;

    let preds = &outcome.test_predictions;
    out.csv(
        &format!("{prefix}_parity.csv"),
        preds.iter().map(|p| ParityRow { id: p.id, true_log10: p.y_true, predicted_log10: p.y_pred }),
    )?;
    let pts: Vec<(f64, f64)> = preds.iter().map(|p| (p.y_true, p.y_pred)).collect();
    let label = match cfg.train.target {
        polyset::dataset::Target::Mz => "log10 Mz",
        polyset::dataset::Target::Mz1 => "log10 Mz+1",
    };
    out.text(&format!("{prefix}_parity.svg"), &svg::parity(&format!("Test parity ({prefix})"), label, &pts))?;
    let lin = |f: fn(&polyset::learn::Prediction) -> f64| preds.iter().map(|p| 10f64.powf(f(p))).collect::<Vec<_>>();
    let terms = smape_terms(&lin(|p| p.y_true), &lin(|p| p.y_pred))?;
    out.csv(
        &format!("{prefix}_smape_distribution.csv"),
        preds.iter().zip(&terms).map(|(p, s)| SmapeRow { id: p.id, smape_percent: *s }),
    )?;
    out.json(&format!("{prefix}_metrics.json"), &outcome.report)?;
    out.json(&format!("{prefix}_checkpoint.json"), &Checkpoint::new(&outcome, &cfg.encoder, &cfg.train))?;

    let r = &outcome.report;
    println!(
        "{} -> {}: test R² {:.4}, SMAPE {:.2}% (log-scale {:.3}%), best epoch {:?} of {}, {:.1}s",
        a.representation,
        cfg.train.target,
        r.test.r2,
        r.test.smape,
        r.test.smape_log,
        r.best_epoch,
        r.val_loss.len(),
        r.wall_clock_secs
    );
    Ok(())
}

fn select_subset(cfg: &RunConfig, a: &PcaArgs) -> Result<Vec<PolymerRecord>> {
    let Some(path) = &a.corpus else {
        let (Some(mn), Some(disp)) = (a.mn, a.disp) else {
            bail!("without --corpus, both --mn and --disp are required");
        };
        return Ok(iso_group(&cfg.dataset, mn, disp, a.records)?);
    };
    let corpus = read_corpus(path)?;
    let close = |x: f64, y: f64| (x - y).abs() <= a.tol * y.abs();
    let subset: Vec<PolymerRecord> = match (a.group, a.mn, a.disp) {
        (Some(g), None, None) => corpus.records.into_iter().filter(|r| r.group_id == g).collect(),
        (None, Some(mn), Some(disp)) => corpus
            .records
            .into_iter()
            .filter(|r| close(r.spec.target_mn(), mn) && close(r.spec.target_dispersity(), disp))
            .collect(),
        (None, None, None) => bail!("no subset selector: pass --group or --mn with --disp"),
        _ => bail!("use either --group or --mn with --disp"),
    };
    ensure!(!subset.is_empty(), "selector matched no records in {}", path.display());
    Ok(subset)
}

#[derive(Serialize)]
struct ProjectionRow {
    id: u64,
    family: String,
    span_sigmas: f64,
    pc1: f64,
    pc2: f64,
    log10_mz1: f64,
}

fn pca(cfg: &RunConfig, a: &PcaArgs, out: &Out) -> Result<()> {
    let subset = select_subset(cfg, a)?;
    let check = iso_subset_manifold_check(&subset, &cfg.encoder, a.representation)?;
    let name = format!("pca_{}", a.representation);
    out.json(&format!("{name}_summary.json"), &check)?;
    if check.degenerate {
        println!(
            "degenerate embeddings: all {} {} embeddings are identical, nothing to project",
            check.n_records, a.representation
        );
        return Ok(());
    }
    let p = check.pca.as_ref().expect("non-degenerate check carries a PCA");
    let rows: Vec<ProjectionRow> = subset
        .iter()
        .zip(&p.projections)
        .map(|(r, x)| ProjectionRow {
            id: r.id,
            family: r.family.to_string(),
            span_sigmas: r.sampling.span_sigmas,
            pc1: x[0],
            pc2: x.get(1).copied().unwrap_or(0.0),
            log10_mz1: r.target_log10_mz1,
        })
        .collect();
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.pc1, r.pc2)).collect();
    let color: Vec<f64> = rows.iter().map(|r| r.log10_mz1).collect();
    out.csv(&format!("{name}_projections.csv"), &rows)?;
    out.text(&format!("{name}.svg"), &svg::scatter("Iso-(Mn, dispersity) embeddings (shade: log10 Mz+1)", "PC1", "PC2", &pts, Some(&color)))?;
    if check.low_diversity {
        println!("note: subset has a single distribution shape (low diversity)");
    }
    println!(
        "{} records, explained variance ratio {:?}, max |spearman(PC, log10 Mz+1)| = {}",
        check.n_records,
        p.explained_variance_ratio().iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
        check.spearman_pc_vs_logmz1.map_or("undefined".to_string(), |v| format!("{v:.4}"))
    );
    Ok(())
}

fn degeneracy(a: &CorpusArg, out: &Out) -> Result<()> {
    let corpus = read_corpus(&a.corpus)?;
    let report = degeneracy_report(&corpus.records);
    out.csv("degeneracy_groups.csv", &report.groups)?;
    #[derive(Serialize)]
    struct Summary {
        groups: usize,
        records: usize,
        mean_within_group_std_log10_mz1: f64,
        mean_within_group_std_log10_mz: f64,
    }
    out.json(
        "degeneracy_summary.json",
        &Summary {
            groups: report.groups.len(),
            records: corpus.records.len(),
            mean_within_group_std_log10_mz1: report.mean_within_group_std_mz1,
            mean_within_group_std_log10_mz: report.mean_within_group_std_mz,
        },
    )?;
    println!(
        "{} groups; mean within-group std of log10 Mz+1 = {:.4}, of log10 Mz = {:.4}",
        report.groups.len(),
        report.mean_within_group_std_mz1,
        report.mean_within_group_std_mz
    );
    Ok(())
}
