//! The `kgd` command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detector::{
    complete_from_inference, compress_from_mask, evaluate, fit_from_inference, report_from_inference, Convention,
    Evaluation, NoiseReport, DEFAULT_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::graph::io::{read_labels_tsv, write_labels_tsv, write_triples_tsv, write_types_tsv};
use crate::graph::{
    compute_ltt, corrupt_type_labels, generate_synthetic_kg, inject_type_noise, load_graph, random_patterns,
    relation_type_distribution, KnowledgeGraph, NoiseLabelSet, RelationId, Triple,
};
use crate::masker::{mask_csv, GumbelVariant};
use crate::model::RaeModel;
use crate::reconstructor::scores_csv;
use crate::trainer::{metrics_csv, train_with, TrainConfig, TrainingManifest};

/// Seeds used when none are configured.
pub const DEFAULT_SEEDS: [u64; 5] = [41504, 42, 0, 1, 2];
/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "KGD_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "kgd",
    version,
    about = "Detect type-inconsistent triples in knowledge graphs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Counts, %LTT and per-relation type distributions.
    Stats(StatsArgs),
    /// Generate a synthetic typed graph with planted noise.
    Synth(SynthArgs),
    /// Add type-inconsistent triples to a graph.
    Inject(InjectArgs),
    /// Reassign a fraction of entity types at random.
    CorruptTypes(CorruptArgs),
    /// Train one model per seed.
    Train(TrainArgs),
    /// Flag noisy triples with a trained model.
    Detect(DetectArgs),
    /// Score candidate triples and keep unobserved ones above the threshold.
    Complete(CompleteArgs),
    /// Emit observed triples whose mask value reaches the threshold.
    Compress(CompressArgs),
    /// Per-signature fit scores.
    FitReport(FitArgs),
    /// Precision, recall and TNR of a noise report against labels.
    Evaluate(EvaluateArgs),
    /// Train and detect over a grid of one setting.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GraphArgs {
    /// Triples TSV (`head<TAB>relation<TAB>tail`).
    #[arg(long)]
    pub triples: PathBuf,
    /// Entity types TSV (`entity<TAB>type`).
    #[arg(long)]
    pub types: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Directory for `stats.json` and type-distribution CSVs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub entities: usize,
    #[arg(long = "types", default_value_t = 8)]
    pub n_types: usize,
    #[arg(long, default_value_t = 6)]
    pub relations: usize,
    #[arg(long = "triples", default_value_t = 10_000)]
    pub n_triples: usize,
    /// Legal (head type, tail type) pairs per relation.
    #[arg(long, default_value_t = 3)]
    pub patterns: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct InjectArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long)]
    pub rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CorruptArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long)]
    pub fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output types TSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    AdditiveNoise,
    Standard,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum ConventionArg {
    LowScoreIsNoise,
    HighScoreIsNoise,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::LowScoreIsNoise => Convention::LowScoreIsNoise,
            ConventionArg::HighScoreIsNoise => Convention::HighScoreIsNoise,
        }
    }
}

/// Flags that override the JSON configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// Experiment configuration JSON (or a run manifest).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub triples: Option<PathBuf>,
    #[arg(long)]
    pub types: Option<PathBuf>,
    /// Noise labels TSV; enables precision/recall in results.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub variant: Option<VariantArg>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub num_blocks: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub mcp_alpha: Option<f64>,
    #[arg(long)]
    pub mcp_lambda: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub convention: Option<ConventionArg>,
    /// Write a checkpoint every N epochs (0 disables).
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub graph: GraphArgs,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value = "low-score-is-noise")]
    pub convention: ConventionArg,
    /// Directory for `report.json` and `noisy.tsv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the mask dump CSV here.
    #[arg(long)]
    pub mask_csv: Option<PathBuf>,
    /// Also write reconstruction scores of all observed triples here.
    #[arg(long)]
    pub scores_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompleteArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Candidate triples TSV.
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Output CSV of accepted candidates.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Output triples TSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// `report.json` written by `detect`.
    #[arg(long)]
    pub report: PathBuf,
    /// Noise labels TSV.
    #[arg(long)]
    pub labels: PathBuf,
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Write the metrics JSON here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Gamma,
    Threshold,
    Depth,
    Corruption,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::Gamma => "gamma",
            SweepParam::Threshold => "threshold",
            SweepParam::Depth => "depth",
            SweepParam::Corruption => "corruption",
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated grid values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
}

/// Everything a `train` or `sweep` run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub triples: Option<PathBuf>,
    pub types: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub train: TrainConfig,
    pub threshold: f64,
    pub convention: Convention,
    /// Fraction of entity types to corrupt before training.
    pub corruption: f64,
    /// Rate used by `synth`/`inject` when driven from this config.
    pub noise_rate: f64,
    pub seeds: Vec<u64>,
    pub checkpoint_every: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            triples: None,
            types: None,
            labels: None,
            out_dir: None,
            train: TrainConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            convention: Convention::LowScoreIsNoise,
            corruption: 0.0,
            noise_rate: 0.05,
            seeds: DEFAULT_SEEDS.to_vec(),
            checkpoint_every: 0,
        }
    }
}

impl ExperimentConfig {
    /// Reads a config file; a run manifest contributes its config snapshot.
    pub fn from_file(path: &Path) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).map_err(Error::at(path))?)?;
        let cfg = match value.get("config") {
            Some(inner) if value.get("input_hash").is_some() => inner.clone(),
            _ => value,
        };
        Ok(serde_json::from_value(cfg)?)
    }

    pub fn resolve(args: &ExperimentArgs) -> Result<Self> {
        let mut c = match &args.config {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value.clone() {
                    $field = v;
                }
            };
        }
        if args.triples.is_some() {
            c.triples = args.triples.clone();
        }
        if args.types.is_some() {
            c.types = args.types.clone();
        }
        if args.labels.is_some() {
            c.labels = args.labels.clone();
        }
        if args.out.is_some() {
            c.out_dir = args.out.clone();
        }
        set!(c.seeds, args.seeds);
        let t = &mut c.train;
        set!(t.epochs, args.epochs);
        set!(t.batch_size, args.batch_size);
        set!(t.gamma, args.gamma);
        set!(t.model.gumbel.temperature, args.tau);
        set!(t.learning_rate, args.learning_rate);
        set!(t.weight_decay, args.weight_decay);
        set!(t.negatives, args.negatives);
        set!(t.model.rgcn.layers, args.layers);
        set!(t.model.rgcn.hidden_dim, args.hidden_dim);
        set!(t.model.rgcn.num_blocks, args.num_blocks);
        set!(t.model.rgcn.dropout, args.dropout);
        set!(t.mcp_alpha, args.mcp_alpha);
        set!(t.mcp_lambda, args.mcp_lambda);
        if let Some(v) = args.variant {
            t.model.gumbel.variant = match v {
                VariantArg::AdditiveNoise => GumbelVariant::AdditiveNoise,
                VariantArg::Standard => GumbelVariant::Standard,
            };
        }
        set!(c.threshold, args.threshold);
        if let Some(conv) = args.convention {
            c.convention = conv.into();
        }
        set!(c.checkpoint_every, args.checkpoint_every);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        for (what, p) in [("triples", &self.triples), ("types", &self.types)] {
            match p {
                None => return Err(Error::InvalidArgument(format!("no {what} file configured"))),
                Some(p) if !p.is_file() => {
                    return Err(Error::InvalidArgument(format!("{what} file {} not found", p.display())))
                }
                _ => {}
            }
        }
        if let Some(l) = &self.labels {
            if !l.is_file() {
                return Err(Error::InvalidArgument(format!("labels file {} not found", l.display())));
            }
        }
        if self.out_dir.is_none() {
            return Err(Error::InvalidArgument("no output directory configured".into()));
        }
        self.train.validate()
    }

    fn paths(&self) -> (&Path, &Path, &Path) {
        // validate() guarantees these are present
        (
            self.triples.as_deref().expect("validated"),
            self.types.as_deref().expect("validated"),
            self.out_dir.as_deref().expect("validated"),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub final_total_loss: f64,
    pub flagged: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<Evaluation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    /// SHA-256 over the git-style blob encodings of the triples and types files.
    pub input_hash: String,
    pub results: Vec<SeedResult>,
    pub wall_clock_seconds: f64,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of `blob <len>\0<bytes>` for each file in order.
pub fn input_hash(paths: &[&Path]) -> Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        let bytes = fs::read(p).map_err(Error::at(p))?;
        h.update(format!("blob {}\0", bytes.len()).as_bytes());
        h.update(&bytes);
    }
    Ok(hex(&h.finalize()))
}

/// Worker count from `KGD_THREADS` (default 1).
pub fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::InvalidArgument(format!(
                "{THREADS_ENV}={v} is not a positive integer"
            ))),
        },
    }
}

/// Runs `job` over `items` on up to `threads` workers; results keep item order.
pub fn parallel_map<T, R, F>(items: &[T], threads: usize, job: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(&job).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads.min(items.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = job(&items[i]);
                slots.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

fn load(graph: &GraphArgs) -> Result<KnowledgeGraph> {
    let (kg, report) = load_graph(&graph.triples, &graph.types)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(kg)
}

fn load_with_model(args: &ModelArgs) -> Result<(KnowledgeGraph, RaeModel)> {
    let kg = load(&args.graph)?.augment_reverse()?;
    let model = RaeModel::load(&args.model)?;
    model.vocab.check(&kg)?;
    Ok((kg, model))
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(Error::at(parent))?;
    }
    fs::write(path, body).map_err(Error::at(path))?;
    Ok(())
}

fn file_stem_for(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect::<String>()
        .trim_matches('_')
        .to_string()
}

fn read_candidates(kg: &KnowledgeGraph, path: &Path) -> Result<Vec<Triple>> {
    let text = fs::read_to_string(path).map_err(Error::at(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let parse = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        if f.len() != 3 {
            return Err(parse(format!("expected 3 tab-separated fields, found {}", f.len())));
        }
        let t = kg
            .lookup(f[0], f[1], f[2])
            .ok_or_else(|| parse("candidate uses an unknown entity or relation".into()))?;
        out.push(t);
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct Stats {
    entities: usize,
    relations: usize,
    types: usize,
    triples: usize,
    duplicates: usize,
    untyped_entities: usize,
    ltt_percent: f64,
}

fn cmd_stats(a: &StatsArgs) -> Result<()> {
    let (kg, report) = load_graph(&a.graph.triples, &a.graph.types)?;
    let stats = Stats {
        entities: kg.num_entities(),
        relations: kg.num_relations(),
        types: kg.num_types(),
        triples: kg.num_triples(),
        duplicates: report.duplicates,
        untyped_entities: report.untyped.len(),
        ltt_percent: 100.0 * compute_ltt(&kg),
    };
    let json = serde_json::to_string_pretty(&stats)? + "\n";
    print!("{json}");
    if let Some(dir) = &a.out {
        write(&dir.join("stats.json"), &json)?;
        let names = kg.types().names();
        for r in 0..kg.num_relations() {
            let m = relation_type_distribution(&kg, RelationId(r));
            let stem = format!("{r:03}_{}", file_stem_for(kg.relations().name(r)));
            write(
                &dir.join("type_distribution").join(format!("{stem}.csv")),
                m.to_csv(names),
            )?;
        }
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let patterns = random_patterns(a.n_types, a.relations, a.patterns, a.seed)?;
    let clean = generate_synthetic_kg(a.n_types, a.relations, a.entities, &patterns, a.n_triples, a.seed)?;
    let (noisy, labels) = inject_type_noise(&clean, a.noise_rate, a.seed.wrapping_add(1))?;
    fs::create_dir_all(&a.out).map_err(Error::at(&a.out))?;
    write_triples_tsv(&noisy, &a.out.join("triples.tsv"))?;
    write_types_tsv(&noisy, &a.out.join("types.tsv"))?;
    let order: Vec<Triple> = labels.iter().copied().collect();
    write_labels_tsv(&noisy, &order, &a.out.join("labels.tsv"))?;
    println!(
        "wrote {} triples ({} planted noise) over {} entities to {}",
        noisy.num_triples(),
        labels.len(),
        noisy.num_entities(),
        a.out.display()
    );
    Ok(())
}

fn cmd_inject(a: &InjectArgs) -> Result<()> {
    let kg = load(&a.graph)?;
    let (noisy, labels) = inject_type_noise(&kg, a.rate, a.seed)?;
    fs::create_dir_all(&a.out).map_err(Error::at(&a.out))?;
    write_triples_tsv(&noisy, &a.out.join("triples.tsv"))?;
    write_types_tsv(&noisy, &a.out.join("types.tsv"))?;
    let order: Vec<Triple> = labels.iter().copied().collect();
    write_labels_tsv(&noisy, &order, &a.out.join("labels.tsv"))?;
    println!("injected {} triples", labels.len());
    Ok(())
}

fn cmd_corrupt(a: &CorruptArgs) -> Result<()> {
    let kg = load(&a.graph)?;
    let corrupted = corrupt_type_labels(&kg, a.fraction, a.seed)?;
    let changed = kg
        .type_map()
        .iter()
        .zip(corrupted.type_map())
        .filter(|(x, y)| x != y)
        .count();
    write_types_tsv(&corrupted, &a.out)?;
    println!("reassigned {changed} entity types");
    Ok(())
}

/// Graph prepared for one run: forward graph (possibly type-corrupted),
/// its augmented form, and labels in forward ids.
struct Prepared {
    augmented: KnowledgeGraph,
    labels: Option<NoiseLabelSet>,
}

fn prepare(cfg: &ExperimentConfig, corruption: f64, corruption_seed: u64) -> Result<Prepared> {
    let (triples, types, _) = cfg.paths();
    let (mut kg, report) = load_graph(triples, types)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if corruption > 0.0 {
        kg = corrupt_type_labels(&kg, corruption, corruption_seed)?;
    }
    let labels = cfg.labels.as_deref().map(|p| read_labels_tsv(&kg, p)).transpose()?;
    Ok(Prepared {
        augmented: kg.augment_reverse()?,
        labels,
    })
}

fn train_seed(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    train: &TrainConfig,
    seed: u64,
    dir: Option<&Path>,
) -> Result<(SeedResult, NoiseReport)> {
    let tc = TrainConfig { seed, ..*train };
    if let Some(d) = dir {
        fs::create_dir_all(d).map_err(Error::at(d))?;
    }
    let every = cfg.checkpoint_every;
    let outcome = train_with(&prep.augmented, &tc, |epoch, model, _| {
        if let (Some(d), true) = (dir, every > 0 && (epoch + 1) % every.max(1) == 0) {
            model.save(&d.join(format!("epoch-{:04}.kgd", epoch + 1)))?;
        }
        Ok(())
    })?;
    let report = report_from_inference(
        &prep.augmented,
        &outcome.model.infer(&prep.augmented)?,
        cfg.threshold,
        cfg.convention,
    );
    if let Some(d) = dir {
        outcome.model.save(&d.join("model.kgd"))?;
        write(&d.join("metrics.csv"), metrics_csv(&outcome.history))?;
        let manifest = TrainingManifest {
            config: tc,
            seed,
            epoch: outcome.history.len(),
            history: outcome.history.clone(),
        };
        write(
            &d.join("training.json"),
            serde_json::to_string_pretty(&manifest)? + "\n",
        )?;
    }
    let result = SeedResult {
        seed,
        final_total_loss: outcome.history.last().map_or(f64::NAN, |r| r.total),
        flagged: report.flagged,
        evaluation: prep.labels.as_ref().map(|l| evaluate(&report, l)),
    };
    Ok((result, report))
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = ExperimentConfig::resolve(&a.experiment)?;
    let (triples, types, out) = cfg.paths();
    let prep = prepare(&cfg, cfg.corruption, 0)?;
    fs::create_dir_all(out).map_err(Error::at(out))?;
    let threads = thread_count()?;
    let results = parallel_map(&cfg.seeds, threads, |&seed| {
        let dir = out.join(format!("seed-{seed}"));
        let (result, _) = train_seed(&cfg, &prep, &cfg.train, seed, Some(&dir))?;
        println!("seed {seed}: flagged {}", result.flagged);
        Ok(result)
    })?;
    let manifest = RunManifest {
        input_hash: input_hash(&[triples, types])?,
        config: cfg.clone(),
        results,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    write(
        &out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(())
}

fn cmd_detect(a: &DetectArgs) -> Result<()> {
    let (kg, model) = load_with_model(&a.model)?;
    let inf = model.infer(&kg)?;
    let report = report_from_inference(&kg, &inf, a.threshold, a.convention.into());
    fs::create_dir_all(&a.out).map_err(Error::at(&a.out))?;
    write(&a.out.join("report.json"), report.to_json()?)?;
    write(&a.out.join("noisy.tsv"), report.flagged_tsv())?;
    if let Some(p) = &a.mask_csv {
        write(p, mask_csv(&kg, &inf.mask))?;
    }
    if let Some(p) = &a.scores_csv {
        let scores: Vec<f64> = kg.triples().iter().map(|t| inf.score(t)).collect();
        write(p, scores_csv(&kg, kg.triples(), &scores))?;
    }
    println!("flagged {}", report.flagged);
    Ok(())
}

fn cmd_complete(a: &CompleteArgs) -> Result<()> {
    let (kg, model) = load_with_model(&a.model)?;
    let candidates = read_candidates(&kg, &a.candidates)?;
    let inf = model.infer(&kg)?;
    let accepted = complete_from_inference(&kg, &inf, &candidates, a.threshold);
    let (triples, scores): (Vec<Triple>, Vec<f64>) = accepted.into_iter().unzip();
    write(&a.out, scores_csv(&kg, &triples, &scores))?;
    println!("accepted {} of {} candidates", triples.len(), candidates.len());
    Ok(())
}

fn cmd_compress(a: &CompressArgs) -> Result<()> {
    let (kg, model) = load_with_model(&a.model)?;
    let inf = model.infer(&kg)?;
    let kept = compress_from_mask(&kg, &inf.mask.discretized, a.threshold);
    let mut out = String::new();
    for t in &kept {
        let (h, r, tl) = kg.triple_names(t);
        out.push_str(&format!("{h}\t{r}\t{tl}\n"));
    }
    write(&a.out, out)?;
    println!("kept {} of {} triples", kept.len(), kg.num_triples());
    Ok(())
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let (kg, model) = load_with_model(&a.model)?;
    let report = fit_from_inference(&kg, &model.infer(&kg)?, a.seed)?;
    write(&a.out, report.to_csv())?;
    println!("{} triple types", report.entries.len());
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let report: NoiseReport = serde_json::from_str(&fs::read_to_string(&a.report).map_err(Error::at(&a.report))?)?;
    let kg = load(&a.graph)?;
    let labels = read_labels_tsv(&kg, &a.labels)?;
    // match by names so reports stay valid across id renumbering
    let named = |t: &Triple| {
        let (h, r, tl) = kg.triple_names(t);
        (h.to_string(), r.to_string(), tl.to_string())
    };
    let label_names: std::collections::HashSet<_> = labels.iter().map(named).collect();
    let mut relabeled = NoiseLabelSet::new();
    for v in &report.triples {
        if label_names.contains(&(v.head.clone(), v.relation.clone(), v.tail.clone())) {
            relabeled.insert(v.triple);
        }
    }
    let e = evaluate(&report, &relabeled);
    let json = serde_json::to_string_pretty(&e)? + "\n";
    print!("{json}");
    if let Some(p) = &a.out {
        write(p, json)?;
    }
    Ok(())
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub flagged: Vec<usize>,
    pub evaluations: Vec<Evaluation>,
}

pub fn sweep_csv(param: SweepParam, rows: &[SweepRow]) -> String {
    let mut out = format!(
        "{},flagged_mean,flagged_std,flagged,precision_mean,recall_mean,tnr_mean\n",
        param.name()
    );
    for r in rows {
        let f: Vec<f64> = r.flagged.iter().map(|&x| x as f64).collect();
        let (m, s) = mean_std(&f);
        let avg = |g: fn(&Evaluation) -> f64| {
            if r.evaluations.is_empty() {
                String::new()
            } else {
                format!("{:.4}", mean_std(&r.evaluations.iter().map(g).collect::<Vec<_>>()).0)
            }
        };
        out.push_str(&format!(
            "{},{:.4},{:.4},{:.2} ± {:.2},{},{},{}\n",
            r.value,
            m,
            s,
            m,
            s,
            avg(|e| e.precision),
            avg(|e| e.recall),
            avg(|e| e.true_negative_rate)
        ));
    }
    out
}

pub fn run_sweep(cfg: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>> {
    let threads = thread_count()?;
    let base = prepare(cfg, cfg.corruption, 0)?;
    let per_seed = |prep: &Prepared, train: &TrainConfig, threshold: f64| {
        let c = ExperimentConfig {
            threshold,
            ..cfg.clone()
        };
        parallel_map(&cfg.seeds, threads, |&seed| {
            Ok(train_seed(&c, prep, train, seed, None)?.1)
        })
    };
    let row = |value: f64, reports: Vec<NoiseReport>, labels: &Option<NoiseLabelSet>| SweepRow {
        value,
        flagged: reports.iter().map(|r| r.flagged).collect(),
        evaluations: labels
            .as_ref()
            .map(|l| reports.iter().map(|r| evaluate(r, l)).collect())
            .unwrap_or_default(),
    };
    let mut rows = Vec::with_capacity(values.len());
    match param {
        SweepParam::Threshold => {
            let reports = per_seed(&base, &cfg.train, cfg.threshold)?;
            for &v in values {
                let re = reports.iter().map(|r| r.rethreshold(v)).collect();
                rows.push(row(v, re, &base.labels));
            }
        }
        SweepParam::Gamma | SweepParam::Depth => {
            for &v in values {
                let mut t = cfg.train;
                if param == SweepParam::Gamma {
                    t.gamma = v;
                } else {
                    if v < 1.0 || v.fract() != 0.0 {
                        return Err(Error::InvalidArgument(format!("depth {v} is not a positive integer")));
                    }
                    t.model.rgcn.layers = v as usize;
                }
                t.validate()?;
                rows.push(row(v, per_seed(&base, &t, cfg.threshold)?, &base.labels));
            }
        }
        SweepParam::Corruption => {
            for &v in values {
                let prep = prepare(cfg, v, 0)?;
                rows.push(row(v, per_seed(&prep, &cfg.train, cfg.threshold)?, &prep.labels));
            }
        }
    }
    Ok(rows)
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let cfg = ExperimentConfig::resolve(&a.experiment)?;
    let (_, _, out) = cfg.paths();
    let rows = run_sweep(&cfg, a.param, &a.values)?;
    let csv = sweep_csv(a.param, &rows);
    write(&out.join(format!("sweep_{}.csv", a.param.name())), &csv)?;
    print!("{csv}");
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Stats(a) => cmd_stats(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Inject(a) => cmd_inject(a),
        Command::CorruptTypes(a) => cmd_corrupt(a),
        Command::Train(a) => cmd_train(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Complete(a) => cmd_complete(a),
        Command::Compress(a) => cmd_compress(a),
        Command::FitReport(a) => cmd_fit(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

/// Parses `std::env::args` and runs; errors go to stderr with exit code 1.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
