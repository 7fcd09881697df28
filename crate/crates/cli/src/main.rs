use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use abagnn::aba::{stable_extensions, Abaf, Limits, Strategy};
use abagnn::datagen::{generate_batch, label_corpus, split_corpus, GenParams, Split, SplitConfig, Unlabelled};
use abagnn::depgraph::build_dependency_graph;
use abagnn::harness::{
    parse_iccma_aba, read_corpus, run_experiment, serialize_iccma_aba, size_bucket, write_corpus, ExperimentConfig,
};
use abagnn::kv::KvMap;
use abagnn::metrics::MetricsSummary;
use abagnn::nn::{load_checkpoint, save_checkpoint, train, ModelConfig, Sample, MODEL_KEYS};
use abagnn::reconstruct::{reconstruct_extension, DegreePredictor, GnnPredictor, OraclePredictor, Predictor};
use abagnn::GnnModel;

#[derive(Parser)]
#[command(
    name = "abagnn",
    version,
    about = "Stable semantics, graph network prediction and extension reconstruction for ABA frameworks"
)]
struct Cli {
    /// Seed used by every random step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Per-instance budget for exact enumeration, in milliseconds.
    #[arg(long, global = true, default_value_t = 5000)]
    budget: u64,
    /// Worker threads (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output file or directory; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PredictorArg {
    Gnn,
    Oracle,
    Degree,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate stable extensions of an ICCMA file.
    Solve {
        file: PathBuf,
        /// Test every subset instead of searching with propagation.
        #[arg(long)]
        exhaustive: bool,
        /// Lift the assumption cap.
        #[arg(long)]
        uncapped: bool,
    },
    /// Label every `.aba` file of a directory and write a split corpus to `--out`.
    Label {
        dir: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0.2)]
        validation_fraction: f64,
    },
    /// Generate random frameworks as ICCMA files into `--out`.
    Gen {
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 10)]
        min_atoms: usize,
        #[arg(long, default_value_t = 40)]
        max_atoms: usize,
        #[arg(long, default_value_t = 0.3)]
        ratio: f64,
        #[arg(long, default_value_t = 2)]
        rules: usize,
        #[arg(long, default_value_t = 3)]
        body: usize,
    },
    /// Print the dependency graph edge list.
    Graph { file: PathBuf },
    /// Train on a corpus directory; writes a checkpoint to `--out`.
    Train {
        corpus: PathBuf,
        /// Model configuration in `key = value` form.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Node metrics of a checkpoint on the test split of a corpus.
    Eval { corpus: PathBuf, model: PathBuf },
    /// Acceptance scores and labels per assumption.
    Predict { model: PathBuf, file: PathBuf },
    /// Reconstruct a stable extension and print the trace.
    Reconstruct {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "degree")]
        predictor: PredictorArg,
        /// Checkpoint, required by the gnn predictor.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run an experiment described by a `key = value` configuration; `--out` names the report directory.
    Experiment { config: PathBuf },
}

fn read_abaf(path: &Path) -> Result<Abaf> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_iccma_aba(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn require_out(out: &Option<PathBuf>) -> Result<&Path> {
    out.as_deref().context("this command needs --out")
}

fn names(abaf: &Abaf, set: &abagnn::AssumptionSet) -> String {
    abaf.names_of(set).join(" ")
}

fn load_model(path: &Path) -> Result<GnnModel> {
    load_checkpoint(path).with_context(|| format!("loading {}", path.display()))
}

fn metrics_text(name: &str, m: &MetricsSummary) -> String {
    let mi = &m.micro;
    format!(
        "{name}\tmicro\tprecision={:.6}\trecall={:.6}\tf1={:.6}\taccuracy={:.6}\n{name}\tmacro\tprecision={:.6}\trecall={:.6}\tf1={:.6}\taccuracy={:.6}\n",
        mi.precision(),
        mi.recall(),
        mi.f1(),
        mi.accuracy(),
        m.macro_.precision,
        m.macro_.recall,
        m.macro_.f1,
        m.macro_.accuracy
    )
}

fn samples(corpus: &abagnn::datagen::Corpus, split: Split) -> Result<Vec<Sample<f64>>> {
    corpus
        .split(split)
        .map(|i| Sample::new(&i.abaf, i.labels()).map_err(Into::into))
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    let budget = Duration::from_millis(cli.budget);
    match cli.command {
        Command::Solve {
            file,
            exhaustive,
            uncapped,
        } => {
            let abaf = read_abaf(&file)?;
            let mut limits = Limits::default().with_budget(Some(budget));
            if uncapped {
                limits = limits.uncapped();
            }
            if exhaustive {
                limits = limits.with_strategy(Strategy::Exhaustive);
            }
            let result = stable_extensions(&abaf, &limits)?;
            let mut text = format!("status {:?}\n", result.status).to_lowercase();
            for e in &result.extensions {
                let _ = writeln!(text, "extension {}", names(&abaf, e));
            }
            let _ = writeln!(text, "credulous {}", names(&abaf, &result.credulous));
            emit(&cli.out, &text)
        }
        Command::Gen {
            count,
            min_atoms,
            max_atoms,
            ratio,
            rules,
            body,
        } => {
            let out = require_out(&cli.out)?;
            let base = GenParams {
                n_atoms: min_atoms,
                assumption_ratio: ratio,
                max_rules_per_head: rules,
                max_body_len: body,
                seed: cli.seed,
            };
            fs::create_dir_all(out)?;
            for u in generate_batch(&base, (min_atoms, max_atoms), count)? {
                fs::write(out.join(format!("{}.aba", u.name)), serialize_iccma_aba(&u.abaf))?;
            }
            Ok(())
        }
        Command::Label {
            dir,
            test_fraction,
            validation_fraction,
        } => {
            let out = require_out(&cli.out)?;
            let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            files.retain(|p| p.extension().is_some_and(|x| x == "aba"));
            files.sort();
            let pool = files
                .iter()
                .map(|p| {
                    Ok(Unlabelled {
                        name: p.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                        abaf: read_abaf(p)?,
                        params: None,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let (corpus, report) = label_corpus(pool, &Limits::default().with_budget(Some(budget)));
            let strata: Vec<usize> = corpus
                .instances
                .iter()
                .map(|i| size_bucket(i.abaf.num_atoms()).unwrap_or(6))
                .collect();
            let present: std::collections::BTreeSet<usize> = strata.iter().copied().collect();
            let ranked: Vec<usize> = strata.iter().map(|s| present.range(..s).count()).collect();
            let config = SplitConfig {
                test_fraction,
                validation_fraction,
                seed: cli.seed,
            };
            let corpus = split_corpus(corpus, &ranked, present.len(), config)?;
            write_corpus(out, &corpus)?;
            println!(
                "labelled {} of {}; timed out {}; over cap {}",
                report.labelled,
                report.total,
                report.timed_out.len(),
                report.rejected.len()
            );
            Ok(())
        }
        Command::Graph { file } => emit(&cli.out, &build_dependency_graph(&read_abaf(&file)?).to_edge_list()),
        Command::Train { corpus, config } => {
            let out = require_out(&cli.out)?;
            let kv = match config {
                Some(p) => KvMap::parse(&fs::read_to_string(&p)?)?,
                None => KvMap::default(),
            };
            kv.check_keys(MODEL_KEYS)?;
            let mut cfg = ModelConfig::from_kv(&kv)?;
            if kv.get_str("seed").is_none() {
                cfg.seed = cli.seed;
            }
            let corpus = read_corpus(&corpus)?;
            let (model, report) = train::<f64>(
                &samples(&corpus, Split::Train)?,
                &samples(&corpus, Split::Validation)?,
                cfg,
            )?;
            save_checkpoint(&model, out)?;
            println!(
                "epochs {} best {} validation_loss {:.6} threshold {:.2} validation_f1 {:.6}",
                report.epochs.len(),
                report.best_epoch,
                report.best_validation_loss(),
                report.threshold,
                report.validation.f1()
            );
            Ok(())
        }
        Command::Eval { corpus, model } => {
            let corpus = read_corpus(&corpus)?;
            let model = load_model(&model)?;
            let test: Vec<_> = corpus.split(Split::Test).collect();
            if test.is_empty() {
                bail!("the corpus has no test split");
            }
            let tau = model.config.threshold;
            let m = abagnn::harness::evaluate_predictor(&GnnPredictor::new(&model), &test, tau)
                .map_err(anyhow::Error::msg)?;
            emit(&cli.out, &metrics_text("gnn", &MetricsSummary::from_instances(&m)))
        }
        Command::Predict { model, file } => {
            let model = load_model(&model)?;
            let abaf = read_abaf(&file)?;
            let p = model.predict(&abaf)?;
            let mut text = String::new();
            for ((a, s), l) in p.assumptions.iter().zip(&p.scores).zip(&p.labels) {
                let _ = writeln!(text, "{}\t{:.6}\t{}", abaf.atom(*a).name, s, u8::from(*l));
            }
            emit(&cli.out, &text)
        }
        Command::Reconstruct { file, predictor, model } => {
            let abaf = read_abaf(&file)?;
            let loaded;
            let p: Box<dyn Predictor> = match predictor {
                PredictorArg::Degree => Box::new(DegreePredictor),
                PredictorArg::Oracle => Box::new(OraclePredictor {
                    limits: Limits::unbounded().with_budget(Some(budget)),
                }),
                PredictorArg::Gnn => {
                    loaded = load_model(model.as_deref().context("--model is required for the gnn predictor")?)?;
                    Box::new(GnnPredictor::new(&loaded))
                }
            };
            let (set, trace) = reconstruct_extension(&abaf, p.as_ref())?;
            let text = format!("extension {}\n{}", names(&abaf, &set), trace.to_log(&abaf));
            emit(&cli.out, &text)
        }
        Command::Experiment { config } => {
            let out = require_out(&cli.out)?;
            let mut kv = KvMap::parse(&fs::read_to_string(&config)?)?;
            if kv.get_str("seed").is_none() {
                kv.set("seed", cli.seed);
            }
            if kv.get_str("label_budget_ms").is_none() {
                kv.set("label_budget_ms", cli.budget);
            }
            let cfg = ExperimentConfig::from_kv(&kv)?;
            let report = run_experiment(&cfg, out)?;
            for (name, _, m) in &report.node {
                print!("{}", metrics_text(name, m));
            }
            for b in &report.buckets {
                println!("bucket {}\t{}\t{:.6}", b.label, b.count, b.mean_f1);
            }
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .expect("thread pool is configured once");
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
