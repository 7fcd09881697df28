//! End-to-end runs: generate or load, label, balance, split, train, evaluate.
//!
//! Outputs in the report directory:
//! `report.txt` (summary), `node_metrics.tsv`, `extension_f1.tsv`,
//! `train_curve.tsv`, `model.ckpt` and `timings.tsv`. Everything except
//! `timings.tsv` is a pure function of the configuration.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::aba::Limits;
use crate::datagen::{
    balance_corpus, generate_batch, label_corpus, split_corpus, AcceptanceRates, BalanceTargets, Corpus, GenParams,
    Instance, LabelReport, Split, SplitConfig,
};
use crate::kv::{KvError, KvMap};
use crate::metrics::{best_threshold, extension_f1, MetricsSummary, NodeMetrics};
use crate::nn::{save_checkpoint, train, ModelConfig, Sample, TrainReport};
use crate::reconstruct::{reconstruct_extension, DegreePredictor, GnnPredictor, OraclePredictor, Predictor};

use super::{bucket_label, read_corpus, size_bucket, write_corpus, SIZE_BUCKETS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    Gnn,
    Oracle,
    Degree,
}

impl FromStr for PredictorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gnn" => Ok(PredictorKind::Gnn),
            "oracle" => Ok(PredictorKind::Oracle),
            "degree" => Ok(PredictorKind::Degree),
            other => Err(format!("unknown predictor {other:?}")),
        }
    }
}

impl std::fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PredictorKind::Gnn => "gnn",
            PredictorKind::Oracle => "oracle",
            PredictorKind::Degree => "degree",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Existing corpus directory; `None` generates one.
    pub corpus: Option<PathBuf>,
    pub count: usize,
    pub min_atoms: usize,
    pub max_atoms: usize,
    pub assumption_ratio: f64,
    pub max_rules_per_head: usize,
    pub max_body_len: usize,
    pub label_budget_ms: u64,
    /// 0 lifts the cap.
    pub max_assumptions: usize,
    pub balance: bool,
    pub target_overall: f64,
    pub target_solvable: f64,
    pub tolerance: f64,
    pub test_fraction: f64,
    pub validation_fraction: f64,
    /// Stratify splits by size bucket rather than treating the corpus as one group.
    pub stratify_by_size: bool,
    pub predictor: PredictorKind,
    pub reconstruct: bool,
    pub save_corpus: bool,
    pub model: ModelConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            corpus: None,
            count: 200,
            min_atoms: 6,
            max_atoms: 40,
            assumption_ratio: 0.3,
            max_rules_per_head: 2,
            max_body_len: 3,
            label_budget_ms: 5000,
            max_assumptions: 25,
            balance: false,
            target_overall: 0.325,
            target_solvable: 0.534,
            tolerance: 0.02,
            test_fraction: 0.25,
            validation_fraction: 0.2,
            stratify_by_size: true,
            predictor: PredictorKind::Gnn,
            reconstruct: true,
            save_corpus: false,
            model: ModelConfig::default(),
        }
    }
}

pub const EXPERIMENT_KEYS: &[&str] = &[
    "seed",
    "corpus",
    "count",
    "min_atoms",
    "max_atoms",
    "assumption_ratio",
    "max_rules_per_head",
    "max_body_len",
    "label_budget_ms",
    "max_assumptions",
    "balance",
    "target_overall",
    "target_solvable",
    "tolerance",
    "test_fraction",
    "validation_fraction",
    "stratify_by_size",
    "predictor",
    "reconstruct",
    "save_corpus",
];

const MODEL_PREFIX: &str = "model.";

impl ExperimentConfig {
    /// Experiment keys as listed in [`EXPERIMENT_KEYS`]; model keys carry a
    /// `model.` prefix. The model seed defaults to the experiment seed.
    pub fn from_kv(kv: &KvMap) -> Result<ExperimentConfig, KvError> {
        let mut model_kv = KvMap::default();
        for key in kv.keys() {
            match key.strip_prefix(MODEL_PREFIX) {
                Some(k) => model_kv.set(k, kv.get_str(key).expect("listed key")),
                None if EXPERIMENT_KEYS.contains(&key) => {}
                None => return Err(KvError::UnknownKey(key.to_string())),
            }
        }
        model_kv.check_keys(crate::nn::MODEL_KEYS)?;
        let d = ExperimentConfig::default();
        let seed = kv.get_or("seed", d.seed)?;
        let mut model = ModelConfig::from_kv(&model_kv)?;
        if model_kv.get_str("seed").is_none() {
            model.seed = seed;
        }
        let predictor = kv.get_str("predictor").unwrap_or("gnn");
        Ok(ExperimentConfig {
            seed,
            corpus: kv.get_str("corpus").filter(|c| *c != "generate").map(PathBuf::from),
            count: kv.get_or("count", d.count)?,
            min_atoms: kv.get_or("min_atoms", d.min_atoms)?,
            max_atoms: kv.get_or("max_atoms", d.max_atoms)?,
            assumption_ratio: kv.get_or("assumption_ratio", d.assumption_ratio)?,
            max_rules_per_head: kv.get_or("max_rules_per_head", d.max_rules_per_head)?,
            max_body_len: kv.get_or("max_body_len", d.max_body_len)?,
            label_budget_ms: kv.get_or("label_budget_ms", d.label_budget_ms)?,
            max_assumptions: kv.get_or("max_assumptions", d.max_assumptions)?,
            balance: kv.get_or("balance", d.balance)?,
            target_overall: kv.get_or("target_overall", d.target_overall)?,
            target_solvable: kv.get_or("target_solvable", d.target_solvable)?,
            tolerance: kv.get_or("tolerance", d.tolerance)?,
            test_fraction: kv.get_or("test_fraction", d.test_fraction)?,
            validation_fraction: kv.get_or("validation_fraction", d.validation_fraction)?,
            stratify_by_size: kv.get_or("stratify_by_size", d.stratify_by_size)?,
            predictor: predictor.parse().map_err(|_| KvError::BadValue {
                key: "predictor".into(),
                value: predictor.into(),
            })?,
            reconstruct: kv.get_or("reconstruct", d.reconstruct)?,
            save_corpus: kv.get_or("save_corpus", d.save_corpus)?,
            model,
        })
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::default();
        kv.set("seed", self.seed);
        kv.set(
            "corpus",
            self.corpus
                .as_ref()
                .map_or("generate".to_string(), |p| p.display().to_string()),
        );
        kv.set("count", self.count);
        kv.set("min_atoms", self.min_atoms);
        kv.set("max_atoms", self.max_atoms);
        kv.set("assumption_ratio", format!("{:?}", self.assumption_ratio));
        kv.set("max_rules_per_head", self.max_rules_per_head);
        kv.set("max_body_len", self.max_body_len);
        kv.set("label_budget_ms", self.label_budget_ms);
        kv.set("max_assumptions", self.max_assumptions);
        kv.set("balance", self.balance);
        kv.set("target_overall", format!("{:?}", self.target_overall));
        kv.set("target_solvable", format!("{:?}", self.target_solvable));
        kv.set("tolerance", format!("{:?}", self.tolerance));
        kv.set("test_fraction", format!("{:?}", self.test_fraction));
        kv.set("validation_fraction", format!("{:?}", self.validation_fraction));
        kv.set("stratify_by_size", self.stratify_by_size);
        kv.set("predictor", self.predictor);
        kv.set("reconstruct", self.reconstruct);
        kv.set("save_corpus", self.save_corpus);
        let model = self.model.to_kv();
        for key in model.keys() {
            kv.set(&format!("{MODEL_PREFIX}{key}"), model.get_str(key).expect("listed key"));
        }
        kv
    }

    pub fn limits(&self) -> Limits {
        Limits {
            max_assumptions: (self.max_assumptions > 0).then_some(self.max_assumptions),
            budget: Some(Duration::from_millis(self.label_budget_ms)),
            ..Limits::default()
        }
    }
}

#[derive(Debug, Error)]
#[error("phase {phase}: {message}")]
pub struct ExperimentError {
    pub phase: &'static str,
    pub message: String,
}

impl ExperimentError {
    fn new(phase: &'static str, e: impl std::fmt::Display) -> Self {
        ExperimentError {
            phase,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketScore {
    pub label: String,
    pub count: usize,
    pub mean_f1: f64,
    /// Reconstructions that are stable extensions, among instances that have one.
    pub stable: usize,
    pub solvable: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub label: Option<LabelReport>,
    pub rates: AcceptanceRates,
    pub split_sizes: [usize; 3],
    pub train: Option<TrainReport>,
    /// `(predictor, threshold, metrics on the test split)`.
    pub node: Vec<(String, f64, MetricsSummary)>,
    pub buckets: Vec<BucketScore>,
    pub timings: Vec<(String, f64)>,
}

impl ExperimentReport {
    pub fn node_metrics(&self, predictor: &str) -> Option<&MetricsSummary> {
        self.node.iter().find(|(n, _, _)| n == predictor).map(|(_, _, m)| m)
    }
}

/// Per-instance confusion counts of `score >= tau`.
pub fn evaluate_predictor<P: Predictor + ?Sized>(
    predictor: &P,
    instances: &[&Instance],
    tau: f64,
) -> Result<Vec<NodeMetrics>, String> {
    instances
        .par_iter()
        .map(|inst| {
            let scores = predictor.scores(&inst.abaf).map_err(|e| e.to_string())?;
            let mut m = NodeMetrics::default();
            for (s, y) in scores.iter().zip(inst.labels()) {
                m.record(*s >= tau, y);
            }
            Ok(m)
        })
        .collect()
}

fn all_scores<P: Predictor + ?Sized>(predictor: &P, instances: &[&Instance]) -> Result<Vec<Vec<f64>>, String> {
    instances
        .par_iter()
        .map(|inst| predictor.scores(&inst.abaf).map_err(|e| e.to_string()))
        .collect()
}

fn tuned_threshold<P: Predictor + ?Sized>(predictor: &P, validation: &[&Instance]) -> Result<f64, String> {
    let scores = all_scores(predictor, validation)?;
    let labels: Vec<Vec<bool>> = validation.iter().map(|i| i.labels()).collect();
    Ok(best_threshold(scores.iter().zip(&labels).map(|(s, l)| (&s[..], &l[..]))).0)
}

/// Predicts the majority training label for every assumption.
struct Constant(f64);

impl Predictor for Constant {
    fn scores(&self, abaf: &crate::aba::Abaf) -> Result<Vec<f64>, crate::reconstruct::PredictorError> {
        Ok(vec![self.0; abaf.assumptions().len()])
    }
}

fn samples(instances: &[&Instance]) -> Result<Vec<Sample<f64>>, String> {
    instances
        .iter()
        .map(|i| Sample::new(&i.abaf, i.labels()).map_err(|e| e.to_string()))
        .collect()
}

struct Run<'a> {
    out: &'a Path,
    sections: String,
    timings: Vec<(String, f64)>,
}

impl Run<'_> {
    fn phase<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T, String>) -> Result<T, ExperimentError> {
        let start = Instant::now();
        let result = f();
        self.timings.push((name.to_string(), start.elapsed().as_secs_f64()));
        result.map_err(|message| {
            let err = ExperimentError { phase: name, message };
            let _ = self.write_report(Some(&err));
            err
        })
    }

    fn write_report(&self, failure: Option<&ExperimentError>) -> std::io::Result<()> {
        let status = match failure {
            None => "status = complete\n".to_string(),
            Some(e) => format!(
                "status = partial\nfailed_phase = {}\nerror = {}\n",
                e.phase,
                e.message.replace('\n', " ")
            ),
        };
        fs::write(
            self.out.join("report.txt"),
            format!("# experiment report\n{status}{}", self.sections),
        )?;
        let mut t = String::from("phase\tseconds\n");
        for (p, s) in &self.timings {
            let _ = writeln!(t, "{p}\t{s:.6}");
        }
        fs::write(self.out.join("timings.tsv"), t)
    }
}

fn metrics_rows(name: &str, tau: f64, m: &MetricsSummary, out: &mut String) {
    let mi = &m.micro;
    let _ = writeln!(
        out,
        "{name}\tmicro\t{tau:.2}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{}",
        mi.precision(),
        mi.recall(),
        mi.f1(),
        mi.accuracy(),
        mi.tp,
        mi.fp,
        mi.tn,
        mi.fn_
    );
    let ma = &m.macro_;
    let _ = writeln!(
        out,
        "{name}\tmacro\t{tau:.2}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t\t\t\t",
        ma.precision, ma.recall, ma.f1, ma.accuracy
    );
}

fn obtain_corpus(
    cfg: &ExperimentConfig,
    run: &mut Run<'_>,
    report: &mut ExperimentReport,
) -> Result<Corpus, ExperimentError> {
    if let Some(path) = &cfg.corpus {
        let corpus = run.phase("load", || read_corpus(path).map_err(|e| e.to_string()))?;
        let _ = writeln!(
            run.sections,
            "[corpus]\nsource = {}\ninstances = {}",
            path.display(),
            corpus.len()
        );
        return Ok(corpus);
    }
    let base = GenParams {
        n_atoms: cfg.min_atoms,
        assumption_ratio: cfg.assumption_ratio,
        max_rules_per_head: cfg.max_rules_per_head,
        max_body_len: cfg.max_body_len,
        seed: cfg.seed,
    };
    let pool = run.phase("generate", || {
        if cfg.min_atoms > cfg.max_atoms {
            return Err("min_atoms exceeds max_atoms".into());
        }
        generate_batch(&base, (cfg.min_atoms, cfg.max_atoms), cfg.count).map_err(|e| e.to_string())
    })?;
    let limits = cfg.limits();
    let (corpus, label) = run.phase("label", || Ok(label_corpus(pool, &limits)))?;
    let _ = writeln!(
        run.sections,
        "[corpus]\nsource = generated\ngenerated = {}\nlabelled = {}\ntimed_out = {}\nover_cap = {}",
        label.total,
        label.labelled,
        label.timed_out.len(),
        label.rejected.len()
    );
    report.label = Some(label);
    let corpus = if cfg.balance {
        let targets = BalanceTargets {
            overall: cfg.target_overall,
            solvable: cfg.target_solvable,
            tolerance: cfg.tolerance,
        };
        let c = run.phase("balance", || {
            balance_corpus(corpus, targets, cfg.seed).map_err(|e| e.to_string())
        })?;
        let _ = writeln!(run.sections, "balanced = {}", c.len());
        c
    } else {
        corpus
    };
    run.phase("split", || {
        let buckets: Vec<usize> = corpus
            .instances
            .iter()
            .map(|i| size_bucket(i.abaf.num_atoms()).unwrap_or(SIZE_BUCKETS.len()))
            .collect();
        let (strata, num) = if cfg.stratify_by_size {
            let present: BTreeSet<usize> = buckets.iter().copied().collect();
            let rank: Vec<usize> = buckets.iter().map(|b| present.range(..b).count()).collect();
            (rank, present.len())
        } else {
            (vec![0; corpus.len()], usize::from(!corpus.is_empty()))
        };
        let split = SplitConfig {
            test_fraction: cfg.test_fraction,
            validation_fraction: cfg.validation_fraction,
            seed: cfg.seed,
        };
        split_corpus(corpus, &strata, num, split).map_err(|e| e.to_string())
    })
}

/// Runs every phase and writes the report files into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentReport, ExperimentError> {
    fs::create_dir_all(out).map_err(|e| ExperimentError::new("setup", e))?;
    let mut run = Run {
        out,
        sections: String::new(),
        timings: Vec::new(),
    };
    let _ = write!(run.sections, "[config]\n{}", cfg.to_kv().render());
    let mut report = ExperimentReport::default();
    let corpus = obtain_corpus(cfg, &mut run, &mut report)?;
    if cfg.save_corpus && cfg.corpus.is_none() {
        let dir = out.join("corpus");
        run.phase("write", || write_corpus(&dir, &corpus).map_err(|e| e.to_string()))?;
    }
    report.rates = corpus.rates();
    let by = |s: Split| -> Vec<&Instance> { corpus.split(s).collect() };
    let (tr, va, te) = (by(Split::Train), by(Split::Validation), by(Split::Test));
    report.split_sizes = [tr.len(), va.len(), te.len()];
    let _ = writeln!(
        run.sections,
        "overall_rate = {:.6}\nsolvable_rate = {:.6}\ntrain = {}\nvalidation = {}\ntest = {}",
        report.rates.overall,
        report.rates.solvable,
        tr.len(),
        va.len(),
        te.len()
    );

    let model = if cfg.predictor == PredictorKind::Gnn {
        let (model, tr_report) = run.phase("train", || {
            let (ts, vs) = (samples(&tr)?, samples(&va)?);
            train::<f64>(&ts, &vs, cfg.model.clone()).map_err(|e| e.to_string())
        })?;
        let _ = writeln!(
            run.sections,
            "[training]\nepochs_run = {}\nbest_epoch = {}\nbest_validation_loss = {:.9}\nthreshold = {:.2}\npositive_weight = {:.6}",
            tr_report.epochs.len(),
            tr_report.best_epoch,
            tr_report.best_validation_loss(),
            tr_report.threshold,
            tr_report.class_weights.positive
        );
        let mut curve = String::from("epoch\ttrain_loss\tvalidation_loss\n");
        for e in &tr_report.epochs {
            let _ = writeln!(curve, "{}\t{:.9}\t{:.9}", e.epoch, e.train_loss, e.validation_loss);
        }
        run.phase("write", || {
            fs::write(out.join("train_curve.tsv"), curve).map_err(|e| e.to_string())?;
            save_checkpoint(&model, &out.join("model.ckpt")).map_err(|e| e.to_string())
        })?;
        report.train = Some(tr_report);
        Some(model)
    } else {
        None
    };

    let node = run.phase("evaluate", || {
        if te.is_empty() {
            return Err("empty test split".into());
        }
        let mut rows = Vec::new();
        let mut push = |name: &str, tau: f64, m: Vec<NodeMetrics>| {
            rows.push((name.to_string(), tau, MetricsSummary::from_instances(&m)))
        };
        if let Some(model) = &model {
            push(
                "gnn",
                model.config.threshold,
                evaluate_predictor(&GnnPredictor::new(model), &te, model.config.threshold)?,
            );
        }
        if cfg.predictor == PredictorKind::Oracle {
            push(
                "oracle",
                0.5,
                evaluate_predictor(&OraclePredictor::default(), &te, 0.5)?,
            );
        }
        let degree_tau = if va.is_empty() {
            0.5
        } else {
            tuned_threshold(&DegreePredictor, &va)?
        };
        push(
            "degree",
            degree_tau,
            evaluate_predictor(&DegreePredictor, &te, degree_tau)?,
        );
        let (mut pos, mut total) = (0usize, 0usize);
        for i in &tr {
            pos += i.accepted();
            total += i.abaf.assumptions().len();
        }
        let majority = if 2 * pos > total { 1.0 } else { 0.0 };
        push("majority", 0.5, evaluate_predictor(&Constant(majority), &te, 0.5)?);
        Ok(rows)
    })?;
    let mut node_tsv = String::from("predictor\tscope\tthreshold\tprecision\trecall\tf1\taccuracy\ttp\tfp\ttn\tfn\n");
    let _ = writeln!(run.sections, "[node_metrics]");
    for (name, tau, m) in &node {
        metrics_rows(name, *tau, m, &mut node_tsv);
        let _ = writeln!(
            run.sections,
            "{name}.micro_f1 = {:.6}\n{name}.macro_f1 = {:.6}\n{name}.accuracy = {:.6}",
            m.micro.f1(),
            m.macro_.f1,
            m.micro.accuracy()
        );
    }
    report.node = node;

    if cfg.reconstruct {
        let buckets = run.phase("reconstruct", || {
            let predictor: Box<dyn Predictor> = match (&model, cfg.predictor) {
                (Some(m), _) => Box::new(GnnPredictor::new(m)),
                (None, PredictorKind::Oracle) => Box::new(OraclePredictor::default()),
                (None, _) => Box::new(DegreePredictor),
            };
            let scored: Vec<(usize, f64, bool, bool)> = te
                .par_iter()
                .map(|inst| {
                    let (set, _) = reconstruct_extension(&inst.abaf, predictor.as_ref()).map_err(|e| e.to_string())?;
                    let pred: BTreeSet<usize> = set.iter().collect();
                    let gold: Vec<BTreeSet<usize>> =
                        inst.result.extensions.iter().map(|e| e.iter().collect()).collect();
                    let solvable = !gold.is_empty();
                    let stable = solvable && inst.abaf.is_stable(&set);
                    let bucket = size_bucket(inst.abaf.num_atoms()).unwrap_or(SIZE_BUCKETS.len());
                    Ok((bucket, extension_f1(&pred, &gold), solvable, stable))
                })
                .collect::<Result<_, String>>()?;
            let mut rows = Vec::new();
            for b in 0..=SIZE_BUCKETS.len() {
                let items: Vec<_> = scored.iter().filter(|x| x.0 == b).collect();
                if items.is_empty() {
                    continue;
                }
                rows.push(BucketScore {
                    label: if b < SIZE_BUCKETS.len() {
                        bucket_label(b)
                    } else {
                        ">1000".into()
                    },
                    count: items.len(),
                    mean_f1: items.iter().map(|x| x.1).sum::<f64>() / items.len() as f64,
                    stable: items.iter().filter(|x| x.3).count(),
                    solvable: items.iter().filter(|x| x.2).count(),
                });
            }
            Ok(rows)
        })?;
        let mut tsv = String::from("bucket\tinstances\tmean_extension_f1\tsolvable\tstable_reconstructions\n");
        let _ =
            writeln!(
            run.sections,
            "[extension_f1]\npredictor = {}\nempty_gold = an empty prediction scores 1 when no stable extension exists",
            if model.is_some() { "gnn".to_string() } else { cfg.predictor.to_string() }
        );
        for b in &buckets {
            let _ = writeln!(
                tsv,
                "{}\t{}\t{:.6}\t{}\t{}",
                b.label, b.count, b.mean_f1, b.solvable, b.stable
            );
            let _ = writeln!(run.sections, "bucket {} = {:.6} over {}", b.label, b.mean_f1, b.count);
        }
        run.phase("write", || {
            fs::write(out.join("extension_f1.tsv"), tsv).map_err(|e| e.to_string())
        })?;
        report.buckets = buckets;
    }

    run.phase("write", || {
        fs::write(out.join("node_metrics.tsv"), node_tsv).map_err(|e| e.to_string())
    })?;
    report.timings = run.timings.clone();
    run.write_report(None).map_err(|e| ExperimentError::new("write", e))?;
    Ok(report)
}
