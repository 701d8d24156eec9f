mod failure;
mod settings;

use acqsim::corpus::{
    export_long_csv, generate_synthetic, ingest, profile, read_schema, read_texts, Corpus,
    IngestFormat, IngestOptions, SyntheticSpec,
};
use acqsim::predictor::{
    featurize_corpus, import_predictions, train_vtl, Mode, PredictionSet, TrainingData,
};
use acqsim::scenarios::{
    estimate_cost, run_scenario, self_supervised, sha256_file, simulate_acquisition,
    write_metrics_csv, write_outputs, AcquisitionPlan, FoldPlan, ImportedLearner, InputDigest,
    Learner, LinearLearner, RunManifest, ScenarioKind, ScenarioReport,
};
use acqsim::vtl::{binarize_at, compute_fractions, write_vtl_csv, Threshold};
use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use failure::{Class, Failure};
use settings::{Overrides, Resolved};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "acqsim",
    version,
    about = "Annotation budget simulator for subjective multi-task text labelling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus (or generate a synthetic one) and write it in canonical form.
    Ingest(IngestArgs),
    /// Print corpus statistics as JSON.
    Profile(CorpusArgs),
    /// Write per-cell fractions and VTL bits as CSV.
    Vtl(VtlArgs),
    /// Train a VTL predictor on a whole corpus.
    Train(RunArgs),
    /// Run one experimental scenario.
    Scenario(ScenarioArgs),
    /// Route candidate cells with a model trained on a seed corpus.
    Simulate(SimulateArgs),
    /// Price a prediction set against full annotation.
    Cost(CostArgs),
    /// Re-export the result files of a finished run.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct CorpusArgs {
    /// Annotation file (long CSV, long JSONL or wide CSV).
    #[arg(long)]
    annotations: PathBuf,
    /// Texts file with `text_id,content`.
    #[arg(long)]
    texts: PathBuf,
    /// JSON list of task schemas.
    #[arg(long)]
    schema: PathBuf,
    /// long_csv, long_jsonl or wide_csv; guessed from the extension when absent.
    #[arg(long)]
    format: Option<IngestFormat>,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long, required_unless_present = "synthetic")]
    annotations: Option<PathBuf>,
    #[arg(long, required_unless_present = "synthetic")]
    texts: Option<PathBuf>,
    #[arg(long, required_unless_present = "synthetic")]
    schema: Option<PathBuf>,
    #[arg(long)]
    format: Option<IngestFormat>,
    /// Generate a synthetic corpus instead of reading files.
    #[arg(long, conflicts_with_all = ["annotations", "texts", "schema"])]
    synthetic: bool,
    /// Synthetic corpus spec (JSON); defaults apply to missing fields.
    #[arg(long, requires = "synthetic")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VtlArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value_t = 0.25)]
    threshold: f64,
    /// Output directory; CSV goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Settings shared by every command that trains or runs a scenario.
#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_parser = ["single", "multi"])]
    mode: Option<String>,
}

#[derive(Args)]
struct ScenarioArgs {
    /// plain_cv, self_supervised, incremental, threshold_sweep, single_vs_multi or diversity_grid.
    #[arg(long)]
    name: Option<ScenarioKind>,
    /// External predictions (`text_id,task,bit[,score]`) used instead of the built-in model.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Candidate annotations holding the ground truth used for scoring.
    #[arg(long)]
    candidate_annotations: PathBuf,
    #[arg(long)]
    candidate_texts: PathBuf,
    /// External predictions for the candidate texts.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    price: Option<f64>,
}

#[derive(Args)]
struct CostArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    texts: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Candidate annotations; their average per text is used when
    /// `--annotators-per-text` is absent.
    #[arg(long, required_unless_present = "annotators_per_text")]
    annotations: Option<PathBuf>,
    #[arg(long)]
    annotators_per_text: Option<f64>,
    #[arg(long, default_value_t = 0.012)]
    price: f64,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory of a finished run (holding `report.json`).
    run_dir: PathBuf,
    /// Re-export every result file here; without it `metrics.csv` goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ACQSIM_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ");
            let f = match e.kind() {
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    Failure::new(Class::Usage, "MissingSubcommand", "a subcommand is required")
                }
                kind => Failure::new(Class::Usage, format!("{kind:?}"), first),
            };
            eprintln!("{}", f.line());
            std::process::exit(Class::Usage.exit_code());
        }
    };
    if let Err(e) = dispatch(cli.command) {
        if broken_pipe(&e) {
            return;
        }
        let f = failure::classify(&e);
        eprintln!("{}", f.line());
        std::process::exit(f.class.exit_code());
    }
}

/// A closed stdout (e.g. piped into `head`) is not a failure.
fn broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Profile(a) => cmd_profile(a),
        Command::Vtl(a) => cmd_vtl(a),
        Command::Train(a) => cmd_train(a),
        Command::Scenario(a) => cmd_scenario(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Cost(a) => cmd_cost(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn load_corpus(
    annotations: &Path,
    texts: &Path,
    schema: &Path,
    format: Option<IngestFormat>,
) -> Result<Corpus, Failure> {
    let tasks = read_schema(schema)?;
    let format = format.unwrap_or_else(|| IngestFormat::from_path(annotations));
    let corpus = ingest(
        annotations,
        texts,
        format,
        &tasks,
        &IngestOptions::default(),
    )?;
    log::info!(
        "loaded {} texts, {} tasks, {} annotation records",
        corpus.n_texts(),
        corpus.n_tasks(),
        corpus.annotations().len()
    );
    Ok(corpus)
}

impl CorpusArgs {
    fn load(&self) -> Result<Corpus, Failure> {
        load_corpus(&self.annotations, &self.texts, &self.schema, self.format)
    }

    fn digests(&self) -> Result<Vec<InputDigest>> {
        digests(&[
            ("annotations", &self.annotations),
            ("texts", &self.texts),
            ("schema", &self.schema),
        ])
    }
}

fn digests(inputs: &[(&str, &Path)]) -> Result<Vec<InputDigest>> {
    inputs
        .iter()
        .map(|(role, path)| {
            Ok(InputDigest {
                role: role.to_string(),
                path: path.to_path_buf(),
                sha256: sha256_file(path).with_context(|| format!("hashing {}", path.display()))?,
            })
        })
        .collect()
}

fn parse_mode(mode: &Option<String>) -> Option<Mode> {
    mode.as_deref()
        .map(|m| m.parse().expect("clap restricts the values"))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

/// A run directory with its manifest. The manifest is written when the run
/// starts and rewritten with the finish time at the end.
struct RunDir {
    dir: PathBuf,
    manifest: RunManifest,
}

impl RunDir {
    fn open(
        dir: &Path,
        resolved: Option<&Resolved>,
        seed: u64,
        inputs: Vec<InputDigest>,
    ) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let bytes: &[u8] = resolved.map(|r| r.bytes.as_slice()).unwrap_or(b"");
        let mut manifest = RunManifest::start(std::env::args().collect(), bytes, seed, dir);
        manifest.inputs = inputs;
        if let Some(r) = resolved {
            fs::write(dir.join("config.json"), &r.bytes)?;
            for (k, v) in &r.sources {
                manifest.setting_sources.insert(k.clone(), v.clone());
            }
        }
        let run = RunDir {
            dir: dir.to_path_buf(),
            manifest,
        };
        run.write_manifest()?;
        Ok(run)
    }

    fn write_manifest(&self) -> Result<()> {
        write_json(&self.dir.join("manifest.json"), &self.manifest)
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.finish();
        self.write_manifest()
    }
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Failure::config("InvalidJobs", "--jobs must be at least 1").into()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            Ok(pool.install(f))
        }
    }
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let seed = a.seed.unwrap_or(0);
    let (corpus, inputs) = if a.synthetic {
        let spec: SyntheticSpec = match &a.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| {
                    Failure::config("ConfigUnreadable", format!("{}: {e}", p.display()))
                })?;
                serde_json::from_str(&text).map_err(|e| Failure::config("InvalidConfig", e))?
            }
            None => SyntheticSpec::default(),
        };
        let inputs = match &a.config {
            Some(p) => digests(&[("synthetic_spec", p)])?,
            None => Vec::new(),
        };
        (
            generate_synthetic(&spec, seed).map_err(Failure::from)?,
            inputs,
        )
    } else {
        let (ann, texts, schema) = (
            a.annotations.expect("clap requires it"),
            a.texts.expect("clap requires it"),
            a.schema.expect("clap requires it"),
        );
        let corpus = load_corpus(&ann, &texts, &schema, a.format)?;
        let inputs = digests(&[
            ("annotations", &ann),
            ("texts", &texts),
            ("schema", &schema),
        ])?;
        (corpus, inputs)
    };
    let run = RunDir::open(&a.out, None, seed, inputs)?;
    export_long_csv(
        &corpus,
        fs::File::create(a.out.join("annotations.csv"))?,
        fs::File::create(a.out.join("texts.csv"))?,
    )
    .map_err(|e| anyhow::anyhow!("writing corpus: {e}"))?;
    write_json(&a.out.join("schema.json"), &corpus.tasks())?;
    run.finish()
}

fn cmd_profile(a: CorpusArgs) -> Result<()> {
    let corpus = a.load()?;
    print_json(&profile(&corpus).map_err(Failure::from)?)
}

fn cmd_vtl(a: VtlArgs) -> Result<()> {
    let threshold = Threshold::new(a.threshold).map_err(Failure::from)?;
    let corpus = a.corpus.load()?;
    let matrix = compute_fractions(&corpus);
    if matrix.n_undefined() > 0 {
        log::warn!(
            "{} cells have no annotations and are left undefined",
            matrix.n_undefined()
        );
    }
    let labels = binarize_at(&matrix, threshold);
    match &a.out {
        Some(dir) => {
            let run = RunDir::open(dir, None, 0, a.corpus.digests()?)?;
            write_vtl_csv(&matrix, &labels, fs::File::create(dir.join("vtl.csv"))?)?;
            run.finish()
        }
        None => {
            let mut buf = Vec::new();
            write_vtl_csv(&matrix, &labels, &mut buf)?;
            Ok(std::io::stdout().lock().write_all(&buf)?)
        }
    }
}

impl RunArgs {
    fn resolve(&self, extra: Overrides) -> Result<Resolved, Failure> {
        let flags = Overrides {
            seed: self.seed,
            threshold: self.threshold,
            mode: parse_mode(&self.mode),
            ..extra
        };
        settings::resolve(self.config.as_deref(), &flags)
    }

    fn digests(&self) -> Result<Vec<InputDigest>> {
        let mut inputs = self.corpus.digests()?;
        if let Some(c) = &self.config {
            inputs.extend(digests(&[("config", c)])?);
        }
        Ok(inputs)
    }
}

fn cmd_train(a: RunArgs) -> Result<()> {
    let resolved = a.resolve(Overrides::default())?;
    let config = &resolved.config;
    let threshold = Threshold::new(config.threshold).map_err(Failure::from)?;
    let corpus = a.corpus.load()?;
    let run = RunDir::open(&a.out, Some(&resolved), config.seed, a.digests()?)?;

    let matrix = compute_fractions(&corpus);
    let labels = binarize_at(&matrix, threshold);
    let eligible: Vec<bool> = (0..corpus.n_texts())
        .map(|d| labels.row(d).iter().any(|b| b.is_some()))
        .collect();
    // Fold 0 is held out for early stopping; everything else trains.
    let (train, validation): (Vec<usize>, Vec<usize>) =
        match FoldPlan::new(&eligible, config.n_folds, config.split_seed()) {
            Some(plan) => {
                let validation = plan.members(0);
                let train = (0..corpus.n_texts())
                    .filter(|&d| eligible[d] && !validation.contains(&d))
                    .collect();
                (train, validation)
            }
            None => (
                (0..corpus.n_texts()).filter(|&d| eligible[d]).collect(),
                Vec::new(),
            ),
        };
    let features = featurize_corpus(&corpus);
    let data = TrainingData {
        corpus: &corpus,
        features: &features,
        labels: &labels,
        train: &train,
        validation: &validation,
    };
    let model = with_jobs(a.jobs, || {
        train_vtl(&data, config.mode, &config.train, config.train_seed(0))
    })?
    .map_err(Failure::from)?;
    let mut w = std::io::BufWriter::new(fs::File::create(a.out.join("model.json"))?);
    model
        .save_json(&mut w)
        .map_err(|e| anyhow::anyhow!("writing model: {e}"))?;
    w.flush()?;
    run.finish()
}

fn imported(
    path: &Path,
    texts: &[acqsim::corpus::TextDoc],
    corpus: &Corpus,
) -> Result<PredictionSet, Failure> {
    let ids: Vec<_> = texts.iter().map(|t| t.text_id.clone()).collect();
    Ok(import_predictions(path, &ids, &corpus.task_ids())?)
}

fn cmd_scenario(a: ScenarioArgs) -> Result<()> {
    let extra = Overrides {
        scenario: a.name,
        ..Default::default()
    };
    let resolved = a.run.resolve(extra)?;
    let config = &resolved.config;
    if config.scenario == ScenarioKind::Simulate {
        return Err(Failure::new(
            Class::Usage,
            "UseSimulate",
            "run the simulate subcommand for acquisition simulation",
        )
        .into());
    }
    let corpus = a.run.corpus.load()?;
    let mut inputs = a.run.digests()?;
    let external = match &a.predictions {
        Some(p) => {
            inputs.extend(digests(&[("predictions", p)])?);
            Some(ImportedLearner {
                predictions: imported(p, corpus.texts(), &corpus)?,
            })
        }
        None => None,
    };
    let run = RunDir::open(&a.run.out, Some(&resolved), config.seed, inputs)?;
    let report = with_jobs(a.run.jobs, || -> Result<ScenarioReport, Failure> {
        match (&external, config.scenario) {
            // External predictions replace stage 1 only; stage 2 retrains on them.
            (Some(ext), ScenarioKind::SelfSupervised) => {
                let linear = LinearLearner {
                    mode: config.mode,
                    config: config.train.clone(),
                };
                Ok(self_supervised(&corpus, config, ext, &linear)?)
            }
            (ext, _) => Ok(run_scenario(
                &corpus,
                config,
                ext.as_ref().map(|e| e as &dyn Learner),
            )?),
        }
    })??;
    write_outputs(&report, &a.run.out)?;
    run.finish()
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let extra = Overrides {
        scenario: Some(ScenarioKind::Simulate),
        price: a.price,
        ..Default::default()
    };
    let resolved = a.run.resolve(extra)?;
    let config = &resolved.config;
    let seed_corpus = a.run.corpus.load()?;
    let candidates = load_corpus(
        &a.candidate_annotations,
        &a.candidate_texts,
        &a.run.corpus.schema,
        a.run.corpus.format,
    )?;
    let mut inputs = a.run.digests()?;
    inputs.extend(digests(&[
        ("candidate_annotations", &a.candidate_annotations),
        ("candidate_texts", &a.candidate_texts),
    ])?);
    let external = match &a.predictions {
        Some(p) => {
            inputs.extend(digests(&[("predictions", p)])?);
            Some(ImportedLearner {
                predictions: imported(p, candidates.texts(), &candidates)?,
            })
        }
        None => None,
    };
    let run = RunDir::open(&a.run.out, Some(&resolved), config.seed, inputs)?;
    let linear = LinearLearner {
        mode: config.mode,
        config: config.train.clone(),
    };
    let learner: &dyn Learner = match &external {
        Some(e) => e,
        None => &linear,
    };
    let outcome = with_jobs(a.run.jobs, || {
        simulate_acquisition(&seed_corpus, &candidates, config, learner)
    })?
    .map_err(Failure::from)?;
    let n_undefined = compute_fractions(&candidates).n_undefined();
    let report = ScenarioReport::from_simulation(outcome, config.seed, n_undefined);
    write_outputs(&report, &a.run.out)?;
    run.finish()
}

fn cmd_cost(a: CostArgs) -> Result<()> {
    let tasks = read_schema(&a.schema).map_err(Failure::from)?;
    let texts = read_texts(&a.texts).map_err(Failure::from)?;
    let text_ids: Vec<_> = texts.iter().map(|t| t.text_id.clone()).collect();
    let task_ids: Vec<_> = tasks.iter().map(|t| t.task_id.clone()).collect();
    let pred = import_predictions(&a.predictions, &text_ids, &task_ids).map_err(Failure::from)?;
    let annotators_per_text = match (a.annotators_per_text, &a.annotations) {
        (Some(v), _) => v,
        (None, Some(ann)) => {
            let corpus = load_corpus(ann, &a.texts, &a.schema, None)?;
            profile(&corpus)
                .map_err(Failure::from)?
                .avg_annotations_per_text
        }
        (None, None) => unreachable!("clap requires one of them"),
    };
    let plan = AcquisitionPlan::from_predictions(&pred);
    let cost = estimate_cost(&plan, a.price, annotators_per_text).map_err(Failure::from)?;
    print_json(&cost)
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let path = a.run_dir.join("report.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| Failure::data("ReportUnreadable", format!("{}: {e}", path.display())))?;
    let report: ScenarioReport =
        serde_json::from_str(&text).map_err(|e| Failure::data("MalformedReport", e))?;
    match &a.out {
        Some(dir) => {
            write_outputs(&report, dir).with_context(|| format!("writing {}", dir.display()))
        }
        None => {
            let mut buf = Vec::new();
            write_metrics_csv(&report, &mut buf)?;
            Ok(std::io::stdout().lock().write_all(&buf)?)
        }
    }
}
