//! `labelgcn` command-line front end.
//!
//! Every subcommand is a pure function of its input files, flags and seed.
//! Failures print a single `error[<kind>]: <message>` line to stderr and
//! exit nonzero.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::data::{
    generate_synthetic_with_vocab, load_dataset, save_dataset, Dataset, Role, SynthConfig,
};
use crate::error::fsx;
use crate::graph::{
    build_knowledge_graph, cooccurrence_from_indices, load_groups, random_graph,
    DifferentialGroups, LabelGraph, LabelVocabulary, PropagationBasis,
    DEFAULT_COOCCURRENCE_THRESHOLD,
};
use crate::metrics::{evaluate_scores, MetricsReport, Scorer};
use crate::model::{
    init_model, load_embeddings, train, train_linear_baseline, Checkpoint, GcnConfig, GcnModel,
    GcnScorer, LinearBaseline, LrSchedule, TrainConfig,
};
use crate::proximity::{
    extract_clusters, proximity_delta, proximity_matrix_labeled, save_matrix_tsv,
};
use crate::{data::label_matrix, model::gcn_forward, Error, Result};

#[derive(Debug, Parser)]
#[command(name = "labelgcn", version, about = "Label co-occurrence GCN toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic train/test datasets with planted label groups.
    Synth(SynthArgs),
    /// Build a label graph file.
    BuildGraph(BuildGraphArgs),
    /// Train the GCN head or the linear baseline.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Export GCN-0 / GCN-2 node proximity, their delta and clusters.
    Proximity(ProximityArgs),
    /// Train the baseline and the GCN head on the same data and report both.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Source {
    Cooccurrence,
    Knowledge,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Gcn,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Basis {
    Power,
    Chebyshev,
}

impl From<Basis> for PropagationBasis {
    fn from(b: Basis) -> Self {
        match b {
            Basis::Power => PropagationBasis::Power,
            Basis::Chebyshev => PropagationBasis::Chebyshev,
        }
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Vocabulary file; without it labels are named label_000, label_001, ...
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Number of labels when no vocabulary is given.
    #[arg(long, default_value_t = 40)]
    num_labels: usize,
    #[arg(long, default_value_t = 8)]
    n_clusters: usize,
    #[arg(long, default_value_t = 5000)]
    n_train: usize,
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    #[arg(long, default_value_t = 32)]
    d_feat: usize,
    /// Standard deviation of the feature noise.
    #[arg(long, default_value_t = 2.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct BuildGraphArgs {
    #[arg(long, value_enum)]
    source: Source,
    #[arg(long)]
    vocab: PathBuf,
    /// Training dataset (cooccurrence).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Edge threshold (cooccurrence).
    #[arg(long, default_value_t = DEFAULT_COOCCURRENCE_THRESHOLD)]
    t: f64,
    /// First annotator's groups, `FILE` or `FILE#ANNOTATOR` (knowledge).
    #[arg(long)]
    groups_a: Option<String>,
    /// Second annotator's groups, `FILE` or `FILE#ANNOTATOR` (knowledge).
    #[arg(long)]
    groups_b: Option<String>,
    /// Edge probability (random).
    #[arg(long)]
    density: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output graph file.
    #[arg(long)]
    graph: PathBuf,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Label embedding width (GCN-0).
    #[arg(long, default_value_t = 700)]
    d0: usize,
    /// Hidden width (GCN-1).
    #[arg(long, default_value_t = 1024)]
    d1: usize,
    /// Propagation order of the first layer.
    #[arg(long, default_value_t = 1)]
    k1: usize,
    /// Propagation order of the second layer.
    #[arg(long, default_value_t = 2)]
    k2: usize,
    #[arg(long, value_enum, default_value_t = Basis::Power)]
    basis: Basis,
    /// Leaky rectifier slope.
    #[arg(long, default_value_t = 0.2)]
    slope: f64,
    /// Disable the trainable feature adapter.
    #[arg(long)]
    no_adapter: bool,
    /// Initial label embeddings, C rows of d0 tab-separated values.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OptimArgs {
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 0.0003)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    /// Step decay factor; used together with --lr-step.
    #[arg(long, requires = "lr_step")]
    lr_decay: Option<f64>,
    /// Decay the learning rate every this many epochs.
    #[arg(long, requires = "lr_decay")]
    lr_step: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl OptimArgs {
    fn train_config(&self) -> TrainConfig {
        let lr_schedule = match (self.lr_decay, self.lr_step) {
            (Some(factor), Some(every)) => LrSchedule::Step { factor, every },
            _ => LrSchedule::Constant,
        };
        TrainConfig {
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            weight_decay: self.weight_decay,
            lr_schedule,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Label graph (required for the GCN head).
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModelKind::Gcn)]
    model: ModelKind,
    #[command(flatten)]
    model_args: ModelArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// Output checkpoint; the history goes next to it as `<stem>.history.json`.
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Label graph (required for GCN checkpoints).
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Score threshold for the Hamming loss.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Report one more top-n accuracy besides top-1/3/5.
    #[arg(long)]
    top_n: Option<usize>,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct ProximityArgs {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    /// Proximity at or above which two labels are joined into one cluster.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    vocab: PathBuf,
    /// Training dataset.
    #[arg(long)]
    dataset: PathBuf,
    /// Evaluation dataset.
    #[arg(long)]
    test_dataset: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    model_args: ModelArgs,
    #[command(flatten)]
    optim: OptimArgs,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long)]
    top_n: Option<usize>,
    #[arg(long)]
    report: PathBuf,
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return 2;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", e.kind());
            1
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::BuildGraph(a) => build_graph(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Proximity(a) => proximity(a),
        Command::Compare(a) => compare(a),
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fsx::write(path, text)?;
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let vocab = match &a.vocab {
        Some(p) => LabelVocabulary::load(p)?,
        None => LabelVocabulary::synthetic(a.num_labels)?,
    };
    let cfg = SynthConfig {
        num_labels: vocab.len(),
        n_clusters: a.n_clusters,
        feature_dim: a.d_feat,
        n_train: a.n_train,
        n_test: a.n_test,
        noise: a.noise,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let out = generate_synthetic_with_vocab(&cfg, &vocab)?;
    fsx::create_dir_all(&a.out_dir)?;
    vocab.save(a.out_dir.join("vocab.txt"))?;
    save_dataset(&out.train, a.out_dir.join("train.jsonl"))?;
    save_dataset(&out.test, a.out_dir.join("test.jsonl"))?;
    fsx::write(
        a.out_dir.join("true_groups.tsv"),
        out.true_groups.to_file_string(&vocab),
    )?;
    write_json(
        &a.out_dir.join("synth_config.json"),
        &serde_json::to_value(&cfg)?,
    )?;
    Ok(())
}

/// `FILE` or `FILE#ANNOTATOR`. Without an annotator, `position` picks the
/// annotator in sorted id order (falling back to the first one).
fn resolve_groups(arg: &str, position: usize) -> Result<DifferentialGroups> {
    let (path, annotator) = match arg.rsplit_once('#') {
        Some((p, id)) => (p, Some(id)),
        None => (arg, None),
    };
    let mut all = load_groups(path)?;
    match annotator {
        Some(id) => all
            .remove(id)
            .ok_or_else(|| Error::InvalidParameter(format!("no annotator `{id}` in {path}"))),
        None => {
            let key = all
                .keys()
                .nth(position)
                .or_else(|| all.keys().next())
                .cloned()
                .expect("groups file has an annotator");
            Ok(all.remove(&key).expect("key exists"))
        }
    }
}

fn build_graph(a: BuildGraphArgs) -> Result<()> {
    let vocab = LabelVocabulary::load(&a.vocab)?;
    let missing = |flag: &str| Error::InvalidParameter(format!("--source requires {flag}"));
    let graph = match a.source {
        Source::Cooccurrence => {
            let path = a.dataset.as_ref().ok_or_else(|| missing("--dataset"))?;
            let dataset = load_dataset(path, &vocab)?;
            cooccurrence_from_indices(&dataset.label_sets(), vocab.len(), a.t)?
        }
        Source::Knowledge => {
            let ga = a.groups_a.as_deref().ok_or_else(|| missing("--groups-a"))?;
            let gb = a.groups_b.as_deref().unwrap_or(ga);
            let ga = resolve_groups(ga, 0)?;
            let gb = resolve_groups(gb, 1)?;
            ga.validate(&vocab)?;
            gb.validate(&vocab)?;
            build_knowledge_graph(&ga, &gb, &vocab)?
        }
        Source::Random => {
            let density = a.density.ok_or_else(|| missing("--density"))?;
            random_graph(vocab.len(), density, a.seed)?
        }
    };
    graph.save(&a.graph)
}

fn gcn_config(m: &ModelArgs, d_feat: usize) -> GcnConfig {
    GcnConfig {
        d0: m.d0,
        d1: m.d1,
        d_feat,
        orders: (m.k1, m.k2),
        slope: m.slope,
        use_feature_adapter: !m.no_adapter,
        basis: m.basis.into(),
    }
}

fn load_graph_for(path: Option<&PathBuf>, vocab: &LabelVocabulary) -> Result<LabelGraph> {
    let path =
        path.ok_or_else(|| Error::InvalidParameter("the GCN head requires --graph".into()))?;
    let graph = LabelGraph::load(path)?;
    if graph.size() != vocab.len() {
        return Err(Error::shape("graph size", &[vocab.len()], &[graph.size()]));
    }
    Ok(graph)
}

fn fit_gcn(
    m: &ModelArgs,
    tc: &TrainConfig,
    dataset: &Dataset,
    graph: &LabelGraph,
) -> Result<(GcnModel, crate::model::TrainHistory)> {
    let config = gcn_config(m, dataset.feature_dim());
    let embeddings = match &m.embeddings {
        Some(p) => Some(load_embeddings(p, dataset.num_labels(), config.d0)?),
        None => None,
    };
    let model = init_model(&config, dataset.num_labels(), tc.seed, embeddings)?;
    let (p1, p2) = model.propagation(graph)?;
    train(dataset, &p1, &p2, model, tc)
}

fn history_path(checkpoint: &Path) -> PathBuf {
    let stem = checkpoint
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".into());
    checkpoint.with_file_name(format!("{stem}.history.json"))
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let vocab = LabelVocabulary::load(&a.vocab)?;
    let dataset = load_dataset(&a.dataset, &vocab)?;
    let tc = a.optim.train_config();
    let fingerprint = vocab.fingerprint();
    let (checkpoint, history, model_config) = match a.model {
        ModelKind::Gcn => {
            let graph = load_graph_for(a.graph.as_ref(), &vocab)?;
            let (model, history) = fit_gcn(&a.model_args, &tc, &dataset, &graph)?;
            let config = serde_json::to_value(&model.config)?;
            let ckpt = Checkpoint::Gcn {
                vocab_fingerprint: fingerprint,
                train_config: Some(tc.clone()),
                model,
            };
            (ckpt, history, config)
        }
        ModelKind::Linear => {
            let (model, history) = train_linear_baseline(&dataset, &tc)?;
            let ckpt = Checkpoint::Linear {
                vocab_fingerprint: fingerprint,
                train_config: Some(tc.clone()),
                model,
            };
            (ckpt, history, serde_json::Value::Null)
        }
    };
    checkpoint.save(&a.checkpoint)?;
    let record = json!({
        "run": {
            "subcommand": "train",
            "model": format!("{:?}", a.model).to_lowercase(),
            "dataset": file_name(&a.dataset),
            "graph": a.graph.as_deref().map(file_name),
            "train_config": tc,
            "model_config": model_config,
        },
        "history": history,
    });
    write_json(&history_path(&a.checkpoint), &record)
}

#[allow(clippy::large_enum_variant)]
enum LoadedScorer {
    Gcn {
        model: GcnModel,
        p1: crate::graph::PropagationMatrix,
        p2: crate::graph::PropagationMatrix,
    },
    Linear(LinearBaseline),
}

impl Scorer for LoadedScorer {
    fn scores(&self, features: &ndarray::Array2<f64>) -> Result<ndarray::Array2<f64>> {
        match self {
            LoadedScorer::Gcn { model, p1, p2 } => GcnScorer { model, p1, p2 }.scores(features),
            LoadedScorer::Linear(m) => m.scores(features),
        }
    }
}

fn load_scorer(
    checkpoint: &Path,
    graph: Option<&PathBuf>,
    vocab: &LabelVocabulary,
) -> Result<LoadedScorer> {
    let ckpt = Checkpoint::load(checkpoint)?;
    ckpt.check_vocab(vocab)?;
    Ok(match ckpt {
        Checkpoint::Gcn { model, .. } => {
            let graph = load_graph_for(graph, vocab)?;
            let (p1, p2) = model.propagation(&graph)?;
            LoadedScorer::Gcn { model, p1, p2 }
        }
        Checkpoint::Linear { model, .. } => LoadedScorer::Linear(model),
    })
}

fn report_for(
    scorer: &dyn Scorer,
    dataset: &Dataset,
    threshold: f64,
    top_n: Option<usize>,
) -> Result<MetricsReport> {
    let scores = scorer.scores(&dataset.feature_matrix())?;
    evaluate_scores(&scores, &label_matrix(dataset), threshold, top_n)
}

fn eval(a: EvalArgs) -> Result<()> {
    let vocab = LabelVocabulary::load(&a.vocab)?;
    let dataset = load_dataset(&a.dataset, &vocab)?.with_role(Role::Test);
    let scorer = load_scorer(&a.checkpoint, a.graph.as_ref(), &vocab)?;
    let mut report = report_for(&scorer, &dataset, a.threshold, a.top_n)?;
    report.run = Some(json!({
        "subcommand": "eval",
        "dataset": file_name(&a.dataset),
        "checkpoint": file_name(&a.checkpoint),
        "graph": a.graph.as_deref().map(file_name),
        "threshold": a.threshold,
        "top_n": a.top_n,
    }));
    report.save(&a.report)
}

fn proximity(a: ProximityArgs) -> Result<()> {
    let vocab = LabelVocabulary::load(&a.vocab)?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    ckpt.check_vocab(&vocab)?;
    let Checkpoint::Gcn { model, .. } = ckpt else {
        return Err(Error::InvalidParameter(
            "proximity needs a GCN checkpoint".into(),
        ));
    };
    let graph = load_graph_for(Some(&a.graph), &vocab)?;
    let (p1, p2) = model.propagation(&graph)?;
    let (classifier, _) = gcn_forward(&model, &p1, &p2)?;
    let before = proximity_matrix_labeled(&model.embeddings, &vocab)?;
    let after = proximity_matrix_labeled(&classifier, &vocab)?;
    let delta = proximity_delta(&before, &after)?;

    fsx::create_dir_all(&a.out_dir)?;
    save_matrix_tsv(
        before.matrix(),
        &vocab,
        a.out_dir.join("gcn0_proximity.tsv"),
    )?;
    save_matrix_tsv(after.matrix(), &vocab, a.out_dir.join("gcn2_proximity.tsv"))?;
    save_matrix_tsv(&delta, &vocab, a.out_dir.join("proximity_delta.tsv"))?;
    let c0 = extract_clusters(&before, a.threshold);
    let c2 = extract_clusters(&after, a.threshold);
    fsx::write(
        a.out_dir.join("gcn0_clusters.tsv"),
        c0.to_file_string(&vocab),
    )?;
    fsx::write(
        a.out_dir.join("gcn2_clusters.tsv"),
        c2.to_file_string(&vocab),
    )?;
    write_json(
        &a.out_dir.join("proximity_run.json"),
        &json!({
            "subcommand": "proximity",
            "checkpoint": file_name(&a.checkpoint),
            "graph": file_name(&a.graph),
            "threshold": a.threshold,
            "gcn0_clusters": c0.clusters().len(),
            "gcn2_clusters": c2.clusters().len(),
        }),
    )
}

fn compare(a: CompareArgs) -> Result<()> {
    let vocab = LabelVocabulary::load(&a.vocab)?;
    let train_set = load_dataset(&a.dataset, &vocab)?;
    let test_set = load_dataset(&a.test_dataset, &vocab)?.with_role(Role::Test);
    let graph = load_graph_for(Some(&a.graph), &vocab)?;
    let tc = a.optim.train_config();

    let (baseline, _) = train_linear_baseline(&train_set, &tc)?;
    let (model, _) = fit_gcn(&a.model_args, &tc, &train_set, &graph)?;
    let (p1, p2) = model.propagation(&graph)?;
    let gcn = GcnScorer {
        model: &model,
        p1: &p1,
        p2: &p2,
    };
    let base_report = report_for(&baseline, &test_set, a.threshold, a.top_n)?;
    let gcn_report = report_for(&gcn, &test_set, a.threshold, a.top_n)?;

    println!(
        "{:<10} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "method", "top1", "top3", "top5", "mAP", "hamming", "ranking", "one_err"
    );
    for (name, r) in [("baseline", &base_report), ("gcn", &gcn_report)] {
        println!(
            "{name:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            r.top1_acc, r.top3_acc, r.top5_acc, r.map, r.hamming_loss, r.ranking_loss, r.one_error
        );
    }
    write_json(
        &a.report,
        &json!({
            "run": {
                "subcommand": "compare",
                "dataset": file_name(&a.dataset),
                "test_dataset": file_name(&a.test_dataset),
                "graph": file_name(&a.graph),
                "graph_source": graph.source().to_string(),
                "train_config": tc,
                "model_config": model.config,
                "threshold": a.threshold,
            },
            "baseline": base_report,
            "gcn": gcn_report,
        }),
    )
}
