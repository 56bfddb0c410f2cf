//! Config-driven runs: paired FLAT/HC comparisons, α ablations, the
//! breakdown table, and transition-matrix export.

mod config;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{DatasetSpec, ExperimentConfig, HierarchySource, NoiseKind, NoiseSpec, TrainOverrides};

use crate::datagen::{generate_synthetic, load_mnist, LabeledDataset};
use crate::error::{Error, Result};
use crate::evaluation::{aggregate_runs, mean_stderr, window_accuracy, ComparisonReport, WindowSummary};
use crate::hierarchy::{builtin_hierarchy, learn_hierarchy, Builtin, Hierarchy};
use crate::noise::breakdown::{breakdown_experiment, BreakdownProblem, BreakdownRow};
use crate::noise::{
    corrupt_labels, default_proxy_config, proxy_confusion, transition_from_confusion, uniform_noise,
    write_transition_csv, NoiseModel,
};
use crate::numkernel::Matrix;
use crate::trainer::{train, RunRecord, TrainConfig};

/// Default epoch count for ablation cells.
pub const ABLATION_EPOCHS: usize = 30;

/// Dataset, hierarchy and (when needed) proxy confusion matrix shared by every cell.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub dataset: LabeledDataset,
    pub hierarchy: Hierarchy,
    pub proxy_confusion: Option<Matrix<f64>>,
}

fn proxy_config(cfg: &ExperimentConfig) -> TrainConfig {
    TrainConfig {
        epochs: cfg.noise.proxy_epochs,
        seed: cfg.noise.proxy_seed,
        ..default_proxy_config()
    }
}

/// Loads or generates the data and resolves the hierarchy.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let (dataset, planted) = match &cfg.dataset {
        DatasetSpec::Synthetic(spec) => {
            let (ds, h) = generate_synthetic(spec)?;
            (ds, Some(h))
        }
        DatasetSpec::Mnist {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => (load_mnist(train_images, train_labels, test_images, test_labels)?, None),
    };
    let needs_proxy = cfg.noise.kind == NoiseKind::ClassDependent
        || matches!(cfg.hierarchy, HierarchySource::Learned { .. });
    let confusion = if needs_proxy {
        Some(proxy_confusion(&dataset, &proxy_config(cfg))?)
    } else {
        None
    };
    let hierarchy = match &cfg.hierarchy {
        HierarchySource::Dataset => planted.ok_or_else(|| {
            Error::config("hierarchy.source", "the dataset carries no planted hierarchy")
        })?,
        HierarchySource::Builtin { name } => {
            let which: Builtin = name
                .parse()
                .map_err(|e: Error| Error::config("hierarchy.name", e.to_string()))?;
            builtin_hierarchy(which)?
        }
        HierarchySource::Learned { num_coarse } => learn_hierarchy(
            confusion.as_ref().expect("proxy confusion computed above"),
            *num_coarse,
        )?,
        HierarchySource::File { path } => Hierarchy::load(path)?,
    };
    if hierarchy.num_fine() != dataset.num_classes() {
        return Err(Error::config(
            "hierarchy",
            format!(
                "maps {} fine classes but the dataset has {}",
                hierarchy.num_fine(),
                dataset.num_classes()
            ),
        ));
    }
    Ok(Prepared {
        dataset,
        hierarchy,
        proxy_confusion: confusion,
    })
}

/// Noise model for one ratio, or `None` when the labels stay clean.
pub fn noise_model_for(cfg: &ExperimentConfig, prepared: &Prepared, ratio: f64) -> Result<Option<NoiseModel>> {
    if ratio == 0.0 {
        return Ok(None);
    }
    let k = prepared.dataset.num_classes();
    match cfg.noise.kind {
        NoiseKind::None => Ok(None),
        NoiseKind::Uniform => uniform_noise(k, ratio).map(Some),
        NoiseKind::ClassDependent => transition_from_confusion(
            prepared.proxy_confusion.as_ref().expect("proxy confusion computed in prepare"),
            ratio,
        )
        .map(Some),
    }
}

fn noisy_copy(ds: &LabeledDataset, model: Option<&NoiseModel>, seed: u64) -> Result<LabeledDataset> {
    match model {
        Some(m) => corrupt_labels(ds, m, seed),
        None => Ok(ds.clone()),
    }
}

fn with_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot build a {threads}-thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run_config(cfg: &ExperimentConfig, prepared: &Prepared, alpha: f64, seed: u64, epochs: Option<usize>) -> TrainConfig {
    let mut t = cfg.train.apply(TrainConfig::default());
    if let Some(e) = epochs {
        t.epochs = e;
    }
    t.alpha = alpha;
    t.seed = seed;
    t.hierarchy = Some(prepared.hierarchy.clone());
    t
}

/// Paired-run bookkeeping for one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairInfo {
    pub seed: u64,
    pub label_fingerprint: String,
    pub init_fingerprint: String,
    pub train_flip_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub name: String,
    pub noise: String,
    pub ratio: f64,
    pub hc_alpha: f64,
    pub epochs: usize,
    pub hierarchy: Hierarchy,
    pub windows: Vec<WindowSummary>,
    pub pairs: Vec<PairInfo>,
}

#[derive(Clone, Debug)]
pub struct CompareOutcome {
    pub report: ComparisonReport,
    pub summary: CompareSummary,
    pub flat: Vec<RunRecord>,
    pub hc: Vec<RunRecord>,
    pub dir: PathBuf,
}

fn compare_alphas(cfg: &ExperimentConfig) -> Result<f64> {
    match cfg.alphas.as_slice() {
        [a, b] if *a == 1.0 && *b < 1.0 => Ok(*b),
        [a, b] if *b == 1.0 && *a < 1.0 => Ok(*a),
        _ => Err(Error::config(
            "alphas",
            "compare needs exactly two weights: 1.0 (FLAT) and one HC weight below 1",
        )),
    }
}

/// Trains FLAT (`α = 1`) and HC on the same corrupted labels and initial
/// weights for every seed, then aggregates and writes the artifacts.
pub fn run_compare(cfg: &ExperimentConfig) -> Result<CompareOutcome> {
    cfg.validate()?;
    let hc_alpha = compare_alphas(cfg)?;
    let ratio = match cfg.noise.ratio_list().as_slice() {
        [r] => *r,
        _ => return Err(Error::config("noise.ratios", "compare takes a single noise.ratio")),
    };
    let prepared = prepare(cfg)?;
    let noise = noise_model_for(cfg, &prepared, ratio)?;

    let pairs = with_pool(cfg.threads, || {
        cfg.seeds
            .par_iter()
            .map(|&seed| -> Result<(RunRecord, RunRecord, f64)> {
                let ds = noisy_copy(&prepared.dataset, noise.as_ref(), seed)?;
                let (flat, hc) = rayon::join(
                    || train::<f64>(&ds, &run_config(cfg, &prepared, 1.0, seed, None)),
                    || train::<f64>(&ds, &run_config(cfg, &prepared, hc_alpha, seed, None)),
                );
                Ok((flat?, hc?, ds.train_flip_rate()))
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let mut flat = Vec::with_capacity(pairs.len());
    let mut hc = Vec::with_capacity(pairs.len());
    let mut infos = Vec::with_capacity(pairs.len());
    for (f, h, flip) in pairs {
        if f.label_fingerprint != h.label_fingerprint || f.init_fingerprint != h.init_fingerprint {
            return Err(Error::invalid(format!(
                "seed {}: FLAT and HC runs saw different labels or initial weights",
                f.seed
            )));
        }
        infos.push(PairInfo {
            seed: f.seed,
            label_fingerprint: f.label_fingerprint.clone(),
            init_fingerprint: f.init_fingerprint.clone(),
            train_flip_rate: flip,
        });
        flat.push(f);
        hc.push(h);
    }
    let report = if flat.len() >= 2 {
        aggregate_runs(&flat, &hc, &cfg.windows)?
    } else {
        // A single pair still gets a table; stderr is zero by definition.
        let twice = |v: &[RunRecord]| vec![v[0].clone(), v[0].clone()];
        aggregate_runs(&twice(&flat), &twice(&hc), &cfg.windows)?
    };
    let summary = CompareSummary {
        name: cfg.name.clone(),
        noise: cfg.noise.kind.as_str().into(),
        ratio,
        hc_alpha,
        epochs: flat[0].num_epochs(),
        hierarchy: prepared.hierarchy.clone(),
        windows: report.windows.clone(),
        pairs: infos,
    };

    let dir = cfg.experiment_dir();
    let runs = dir.join("runs");
    let bitmaps = dir.join("bitmaps");
    create_dir(&runs)?;
    create_dir(&bitmaps)?;
    for (method, records) in [("flat", &flat), ("hc", &hc)] {
        for r in records {
            let stem = format!("{method}_seed{}", r.seed);
            r.write_csv(&runs.join(format!("{stem}.csv")))?;
            r.write_config_json(&runs.join(format!("{stem}.json")))?;
            r.write_bitmaps(&bitmaps.join(format!("{stem}.txt")))?;
        }
    }
    report.write_csv(&dir.join("comparison.csv"))?;
    write_json(&dir.join("summary.json"), &summary)?;
    if let Some(m) = &noise {
        write_transition_csv(m, &dir.join("transition.csv"))?;
    }
    Ok(CompareOutcome {
        report,
        summary,
        flat,
        hc,
        dir,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedAccuracy {
    pub seed: u64,
    pub accuracy: f64,
}

/// Early-window accuracy of one (ratio, α) cell across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub ratio: f64,
    pub alpha: f64,
    pub seeds: Vec<SeedAccuracy>,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub window: [usize; 2],
    pub epochs: usize,
    pub cells: Vec<AblationCell>,
}

impl AblationReport {
    pub fn cell(&self, ratio: f64, alpha: f64) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.ratio == ratio && c.alpha == alpha)
    }

    /// `ratio,alpha,window_lo,window_hi,mean,stderr,n_seeds`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["ratio", "alpha", "window_lo", "window_hi", "mean", "stderr", "n_seeds"])?;
        for c in &self.cells {
            w.write_record([
                c.ratio.to_string(),
                c.alpha.to_string(),
                self.window[0].to_string(),
                self.window[1].to_string(),
                c.mean.to_string(),
                c.stderr.to_string(),
                c.seeds.len().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// `ratio,alpha,seed,accuracy`.
    pub fn write_seed_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["ratio", "alpha", "seed", "accuracy"])?;
        for c in &self.cells {
            for s in &c.seeds {
                w.write_record([
                    c.ratio.to_string(),
                    c.alpha.to_string(),
                    s.seed.to_string(),
                    s.accuracy.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Grid over noise ratio × α × seed. Cells default to [`ABLATION_EPOCHS`]
/// epochs unless `train.epochs` is set; labels are corrupted once per
/// (ratio, seed) and shared across α.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<AblationReport> {
    cfg.validate()?;
    let epochs = cfg.train.epochs.unwrap_or(ABLATION_EPOCHS);
    let (lo, hi) = cfg.windows.early;
    if hi > epochs {
        return Err(Error::config(
            "windows.early",
            format!("window ends at epoch {hi} but cells run {epochs} epochs"),
        ));
    }
    let prepared = prepare(cfg)?;
    let ratios = cfg.noise.ratio_list();
    let models = ratios
        .iter()
        .map(|&r| noise_model_for(cfg, &prepared, r))
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize, u64)> = (0..ratios.len())
        .flat_map(|ri| (0..cfg.alphas.len()).flat_map(move |ai| cfg.seeds.iter().map(move |&s| (ri, ai, s))))
        .collect();
    let records = with_pool(cfg.threads, || {
        let corrupted = ratios
            .par_iter()
            .enumerate()
            .map(|(ri, _)| {
                cfg.seeds
                    .par_iter()
                    .map(|&s| noisy_copy(&prepared.dataset, models[ri].as_ref(), s))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        jobs.par_iter()
            .map(|&(ri, ai, seed)| {
                let si = cfg.seeds.iter().position(|&s| s == seed).expect("seed from the grid");
                train::<f64>(
                    &corrupted[ri][si],
                    &run_config(cfg, &prepared, cfg.alphas[ai], seed, Some(epochs)),
                )
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let dir = cfg.experiment_dir();
    let runs = dir.join("runs");
    create_dir(&runs)?;
    let mut cells = Vec::new();
    for (cell_jobs, chunk) in jobs.chunks(cfg.seeds.len()).zip(records.chunks(cfg.seeds.len())) {
        let (ratio, alpha) = (ratios[cell_jobs[0].0], cfg.alphas[cell_jobs[0].1]);
        let mut seeds = Vec::with_capacity(chunk.len());
        for r in chunk {
            r.write_csv(&runs.join(format!("p{ratio}_a{alpha}_seed{}.csv", r.seed)))?;
            seeds.push(SeedAccuracy {
                seed: r.seed,
                accuracy: window_accuracy(r, lo, hi)?,
            });
        }
        let s = mean_stderr(&seeds.iter().map(|s| s.accuracy).collect::<Vec<_>>());
        cells.push(AblationCell {
            ratio,
            alpha,
            seeds,
            mean: s.mean,
            stderr: s.stderr,
        });
    }
    let report = AblationReport {
        window: [lo, hi],
        epochs,
        cells,
    };
    report.write_csv(&dir.join("ablation.csv"))?;
    report.write_seed_csv(&dir.join("ablation_seeds.csv"))?;
    write_json(&dir.join("summary.json"), &report)?;
    Ok(report)
}

/// Writes `breakdown.csv` into `dir` and returns the rows.
pub fn run_breakdown(p_grid: &[f64], problem: &BreakdownProblem, dir: &Path) -> Result<Vec<BreakdownRow>> {
    let rows = breakdown_experiment(p_grid, problem)?;
    create_dir(dir)?;
    let path = dir.join("breakdown.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "p",
        "excess_clean",
        "excess_noisy",
        "residual",
        "residual_exact",
        "threshold",
        "direction",
        "clean_risk",
        "noisy_risk",
    ])?;
    for r in &rows {
        w.write_record([
            r.p.to_string(),
            r.excess_clean.to_string(),
            r.excess_noisy.to_string(),
            r.residual.to_string(),
            r.residual_exact.to_string(),
            r.threshold.to_string(),
            r.direction.as_str().to_string(),
            r.clean_risk.to_string(),
            r.noisy_risk.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

/// Writes the uniform `K×K` transition matrix at ratio `p`.
pub fn export_uniform_noise(k: usize, p: f64, path: &Path) -> Result<NoiseModel> {
    let m = uniform_noise(k, p)?;
    write_transition_csv(&m, path)?;
    Ok(m)
}

/// Writes the transition matrix a config would use at ratio `p`.
pub fn export_config_noise(cfg: &ExperimentConfig, p: f64, path: &Path) -> Result<NoiseModel> {
    cfg.validate()?;
    let prepared = prepare(cfg)?;
    let k = prepared.dataset.num_classes();
    let m = match noise_model_for(cfg, &prepared, p)? {
        Some(m) => m,
        None => uniform_noise(k, 0.0)?,
    };
    write_transition_csv(&m, path)?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::read_transition_csv;

    fn tiny(dir: &Path, extra: &str) -> ExperimentConfig {
        let text = format!(
            r#"
name = "t"
out_dir = "{}"
seeds = [1, 2]
{extra}
[dataset]
kind = "synthetic"
n_train = 240
n_test = 80
dim = 8

[train]
epochs = 3
hidden = [8]
learning_rate = 0.003

[windows]
early = [1, 2]
final_len = 1
"#,
            dir.display()
        );
        ExperimentConfig::from_toml_str(&text).unwrap()
    }

    fn listing(dir: &Path) -> Vec<String> {
        let mut v: Vec<String> = fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        v.sort();
        v
    }

    #[test]
    fn compare_writes_the_artifact_tree() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny(tmp.path(), "");
        cfg.noise = NoiseSpec {
            kind: NoiseKind::Uniform,
            ratio: Some(0.3),
            ..NoiseSpec::default()
        };
        let out = run_compare(&cfg).unwrap();
        let runs = listing(&out.dir.join("runs"));
        assert_eq!(runs.iter().filter(|f| f.ends_with(".csv")).count(), 4);
        assert_eq!(listing(&out.dir.join("bitmaps")).len(), 4);
        assert!(out.dir.join("comparison.csv").exists());
        assert!(out.dir.join("summary.json").exists());
        let t = read_transition_csv(&out.dir.join("transition.csv")).unwrap();
        assert!((t.ratio() - 0.3).abs() < 1e-12);
        for p in &out.summary.pairs {
            assert!(p.train_flip_rate > 0.15);
        }
    }

    #[test]
    fn compare_is_reproducible() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = tiny(tmp.path(), "");
        let a = run_compare(&cfg).unwrap();
        let bytes = |n: &str| fs::read(a.dir.join(n)).unwrap();
        let (c1, s1) = (bytes("comparison.csv"), bytes("summary.json"));
        let b = run_compare(&cfg).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(c1, bytes("comparison.csv"));
        assert_eq!(s1, bytes("summary.json"));
    }

    #[test]
    fn compare_rejects_bad_alpha_pairs() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = tiny(tmp.path(), "alphas = [0.5, 0.25]");
        assert!(matches!(run_compare(&cfg), Err(Error::Config { ref field, .. }) if field == "alphas"));
    }

    #[test]
    fn ablation_grid_shape() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny(tmp.path(), "alphas = [0.25, 1.0]");
        cfg.noise = NoiseSpec {
            kind: NoiseKind::Uniform,
            ratios: Some(vec![0.0, 0.4]),
            ..NoiseSpec::default()
        };
        let rep = run_ablation(&cfg).unwrap();
        assert_eq!(rep.cells.len(), 4);
        assert_eq!(rep.epochs, 3);
        let c = rep.cell(0.4, 0.25).unwrap();
        assert_eq!(c.seeds.iter().map(|s| s.seed).collect::<Vec<_>>(), vec![1, 2]);
        let dir = cfg.experiment_dir();
        assert_eq!(listing(&dir.join("runs")).len(), 8);
        let table = fs::read_to_string(dir.join("ablation.csv")).unwrap();
        assert_eq!(table.lines().count(), 5);
    }

    #[test]
    fn ablation_window_must_fit() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny(tmp.path(), "");
        cfg.windows.early = (2, 9);
        assert!(matches!(run_ablation(&cfg), Err(Error::Config { ref field, .. }) if field == "windows.early"));
    }

    #[test]
    fn builtin_hierarchy_size_is_checked() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny(tmp.path(), "");
        cfg.hierarchy = HierarchySource::Builtin { name: "mnist".into() };
        assert!(matches!(prepare(&cfg), Err(Error::Config { ref field, .. }) if field == "hierarchy"));
    }

    #[test]
    fn breakdown_csv_columns() {
        let tmp = tempfile::tempdir().unwrap();
        let pb = BreakdownProblem {
            fit: crate::noise::breakdown::FitMethod::Population,
            ..BreakdownProblem::default()
        };
        let rows = run_breakdown(&[0.0, 0.3], &pb, tmp.path()).unwrap();
        assert_eq!(rows.len(), 2);
        let text = fs::read_to_string(tmp.path().join("breakdown.csv")).unwrap();
        assert!(text.starts_with("p,excess_clean,excess_noisy,residual,"));
        assert!(rows[0].residual.abs() < 1e-9);
    }
}
