//! Command-line entry points. Logs go to stderr; machine outputs go only to
//! files and are byte-identical for identical inputs, config and seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::design::{self, pairs_from_structure, DesignOptions, SamplingOptions, SecondaryStructure};
use crate::fitness::{self, RankedCandidate};
use crate::model::{Checkpoint, DecoderKind, Model, ModelConfig};
use crate::rna_io::{
    self, base_index, cluster_structures, group_ensembles, load_corpus, make_multi_state_split, make_single_state_split,
    validate_manifest, write_fasta, Ensemble, FastaRecord, SplitManifest, SplitOptions, TM_THRESHOLD,
};
use crate::seeds::{derive_seed, DESIGN, SIMULATION};
use crate::training::{eval_graph, TrainConfig, Trainer};
use crate::{Error, Result};

/// Directory for parsed-corpus caches.
pub const CACHE_ENV: &str = "RNA_INVFOLD_CACHE";

/// Label attached to every self-consistency number.
pub const STRUCTURE_ORACLE: &str = "nussinov-max-pairing";

#[derive(Parser, Debug)]
#[command(name = "rna-invfold", version, about = "Geometric RNA inverse folding over conformational ensembles")]
pub struct Cli {
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Log verbosity on stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Cluster a PDB corpus and write a train/val/test manifest.
    Split(SplitArgs),
    /// Train one model per seed.
    Train(TrainArgs),
    /// Sample designs for a backbone ensemble.
    Design(DesignArgs),
    /// Score a checkpoint on one split of a manifest.
    Eval(EvalArgs),
    /// Rank a mutant landscape by perplexity and compare with random baselines.
    Rank(RankArgs),
    /// Write the featurized multigraph of a backbone ensemble as JSON.
    Featurize(FeaturizeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitKindArg {
    SingleState,
    MultiState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SubsetArg {
    Train,
    Val,
    Test,
}

/// JSON run configuration; command-line flags take precedence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub n_samples: usize,
    pub temperature: f64,
    pub seeds: Vec<u64>,
    pub split: SplitOptions,
    pub n_sims: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            n_samples: 16,
            temperature: 0.1,
            seeds: vec![0],
            split: SplitOptions::default(),
            n_sims: 10_000,
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => Ok(serde_json::from_str(&read_text(p)?)?),
        None => Ok(RunConfig::default()),
    }
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    /// Directory of `.pdb` files.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitKindArg::SingleState)]
    pub kind: SplitKindArg,
    /// Manifest to write.
    #[arg(long)]
    pub out: PathBuf,
    /// File of ensemble ids (one per line) whose clusters form the test set.
    #[arg(long)]
    pub test_ids: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub val_size: Option<usize>,
    #[arg(long)]
    pub test_size: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// Output directory; each seed writes to `seed_<n>/`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Repeat to train several seeds.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub max_states: Option<usize>,
    #[arg(long)]
    pub decoder: Option<String>,
    /// Use the small model dimensions.
    #[arg(long)]
    pub small: bool,
    /// Continue from a `last.ckpt`.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DesignArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Backbone PDB files; chains sharing a sequence form one ensemble.
    #[arg(long = "pdb", required = true)]
    pub pdbs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_states: Option<usize>,
    /// Lines `POS`, `POS BASE` or `START-END` (1-based); bare positions keep the native base.
    #[arg(long)]
    pub fixed: Option<PathBuf>,
    /// Ground-truth dot-bracket overriding the geometric pairing heuristic.
    #[arg(long)]
    pub dot_bracket: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Metrics CSV to write; a JSON summary is written alongside.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SubsetArg::Test)]
    pub subset: SubsetArg,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_states: Option<usize>,
}

#[derive(Args, Debug)]
pub struct RankArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Wild-type backbone.
    #[arg(long = "pdb", required = true)]
    pub pdbs: Vec<PathBuf>,
    /// CSV with header `sequence,fitness`.
    #[arg(long)]
    pub landscape: PathBuf,
    /// Comma-separated design budgets.
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
    pub budgets: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_sims: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Wild-type fitness when the landscape does not list the wild type.
    #[arg(long)]
    pub wild_type_fitness: Option<f64>,
    /// Condition on the first wild-type state only instead of all states.
    #[arg(long)]
    pub single_state: bool,
}

#[derive(Args, Debug)]
pub struct FeaturizeArgs {
    #[arg(long = "pdb", required = true)]
    pub pdbs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub max_states: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn with_path(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn read_text(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    fs::read_to_string(path).map_err(|e| with_path(path, e))
}

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).map(PathBuf::from)
}

fn read_corpus(dir: &Path) -> Result<Vec<Ensemble>> {
    let cache = cache_dir();
    let structures = load_corpus(dir, cache.as_deref())?;
    log::info!("read {} chains from {}", structures.len(), dir.display());
    Ok(group_ensembles(structures))
}

fn read_ensembles(pdbs: &[PathBuf]) -> Result<Vec<Ensemble>> {
    let mut structures = Vec::new();
    for p in pdbs {
        let text = read_text(p)?;
        let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or("input");
        structures.extend(rna_io::parse_pdb(&text, name)?);
    }
    let ensembles = group_ensembles(structures);
    if ensembles.is_empty() {
        return Err(Error::NoRnaResidues(format!("{pdbs:?}")));
    }
    Ok(ensembles)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn load_model(path: &Path) -> Result<Model> {
    fs::metadata(path).map_err(|e| with_path(path, e))?;
    Checkpoint::load(path)?.into_model()
}

pub fn cmd_split(args: &SplitArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    let opts = &mut cfg.split;
    if let Some(s) = args.seed {
        opts.seed = s;
    }
    if let Some(v) = args.val_size {
        opts.val_size = v;
    }
    if let Some(t) = args.test_size {
        opts.test_size = t;
    }
    let ensembles = read_corpus(&args.corpus)?;
    let clusters = cluster_structures(&ensembles, TM_THRESHOLD);
    let manifest = match args.kind {
        SplitKindArg::SingleState => {
            let ids: Vec<String> = match &args.test_ids {
                Some(p) => read_text(p)?
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#'))
                    .map(String::from)
                    .collect(),
                None => return Err(Error::InvalidArgument("single-state split needs --test-ids".into())),
            };
            make_single_state_split(&ensembles, &clusters, &ids, opts)?
        }
        SplitKindArg::MultiState => make_multi_state_split(&ensembles, &clusters, opts)?,
    };
    if let Err(problems) = validate_manifest(&manifest, &ensembles, opts) {
        for p in &problems {
            log::error!("{p}");
        }
        return Err(Error::InvalidArgument(format!("manifest failed validation: {}", problems.join("; "))));
    }
    log::info!(
        "split: {} train, {} val, {} test",
        manifest.train.len(),
        manifest.val.len(),
        manifest.test.len()
    );
    write_json(&args.out, &manifest)
}

fn subset<'a>(manifest: &'a SplitManifest, which: SubsetArg) -> &'a [String] {
    match which {
        SubsetArg::Train => &manifest.train,
        SubsetArg::Val => &manifest.val,
        SubsetArg::Test => &manifest.test,
    }
}

fn pick(ensembles: &[Ensemble], ids: &[String]) -> Result<Vec<Ensemble>> {
    let by_id: BTreeMap<&str, &Ensemble> = ensembles.iter().map(|e| (e.id.as_str(), e)).collect();
    ids.iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|e| (*e).clone())
                .ok_or_else(|| Error::InvalidArgument(format!("manifest id {id} not in corpus")))
        })
        .collect()
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let mut train_cfg = cfg.train.clone();
    if args.small {
        train_cfg.model = ModelConfig::small();
    }
    if let Some(lr) = args.lr {
        train_cfg.lr = lr;
    }
    if let Some(m) = args.max_epochs {
        train_cfg.max_epochs = m;
    }
    if args.max_steps.is_some() {
        train_cfg.max_steps = args.max_steps;
    }
    if let Some(m) = args.max_states {
        train_cfg.max_states = m;
    }
    if let Some(d) = &args.decoder {
        train_cfg.model.decoder = d.parse::<DecoderKind>()?;
    }
    let manifest: SplitManifest = serde_json::from_str(&read_text(&args.split)?)?;
    let ensembles = read_corpus(&args.corpus)?;
    let train = pick(&ensembles, &manifest.train)?;
    let val = pick(&ensembles, &manifest.val)?;
    if let Some(resume) = &args.resume {
        let mut trainer = Trainer::resume(Checkpoint::load(resume)?, args.max_epochs)?;
        let dir = args.out.join(format!("seed_{}", trainer.config.seed));
        fs::create_dir_all(&dir)?;
        trainer.fit(&train, &val, Some(&dir))?;
        return Ok(());
    }
    let seeds = if args.seeds.is_empty() { cfg.seeds.clone() } else { args.seeds.clone() };
    for seed in seeds {
        let dir = args.out.join(format!("seed_{seed}"));
        fs::create_dir_all(&dir)?;
        let mut run_cfg = train_cfg.clone();
        run_cfg.seed = seed;
        write_json(&dir.join("config.json"), &run_cfg)?;
        let mut trainer = Trainer::new(run_cfg)?;
        let history = trainer.fit(&train, &val, Some(&dir))?;
        log::info!(
            "seed {seed}: best epoch {:?} val recovery {:?}",
            history.best_epoch,
            history.best_val_recovery
        );
    }
    Ok(())
}

/// Parses a fixed-positions file into per-residue pinned bases.
pub fn parse_fixed(text: &str, native: &str) -> Result<Vec<Option<usize>>> {
    let native: Vec<char> = native.chars().collect();
    let n = native.len();
    let mut fixed = vec![None; n];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |why: &str| Error::MalformedRecord {
            line: lineno + 1,
            reason: why.to_string(),
        };
        let mut parts = line.split_whitespace();
        let pos = parts.next().ok_or_else(|| bad("empty"))?;
        let (start, end) = match pos.split_once('-') {
            Some((a, b)) => (a.parse::<usize>(), b.parse::<usize>()),
            None => (pos.parse::<usize>(), pos.parse::<usize>()),
        };
        let (start, end) = (start.map_err(|_| bad("bad position"))?, end.map_err(|_| bad("bad position"))?);
        if start == 0 || end < start || end > n {
            return Err(bad(&format!("positions {start}-{end} outside 1-{n}")));
        }
        let base = match parts.next() {
            Some(b) => {
                let c = b.chars().next().ok_or_else(|| bad("empty base"))?;
                Some(base_index(c).ok_or_else(|| bad(&format!("unknown base {b}")))?)
            }
            None => None,
        };
        for p in start..=end {
            let b = match base {
                Some(b) => b,
                None => base_index(native[p - 1]).ok_or_else(|| bad("native base is not A/C/G/U"))?,
            };
            fixed[p - 1] = Some(b);
        }
    }
    Ok(fixed)
}

/// Ground-truth structures per selected state, re-indexed onto graph nodes.
fn truths_for(ensemble: &Ensemble, states: &[usize], residues: &[usize], dot_bracket: Option<&SecondaryStructure>) -> Vec<SecondaryStructure> {
    match dot_bracket {
        Some(db) => vec![db.restrict(residues)],
        None => states
            .iter()
            .map(|&s| pairs_from_structure(&ensemble.states[s]).restrict(residues))
            .collect(),
    }
}

pub fn cmd_design(args: &DesignArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let model = load_model(&args.checkpoint)?;
    let n_samples = args.n_samples.unwrap_or(cfg.n_samples);
    let temperature = args.temperature.unwrap_or(cfg.temperature);
    let seed = args.seed.unwrap_or(cfg.seeds.first().copied().unwrap_or(0));
    let max_states = args.max_states.unwrap_or(cfg.train.max_states);
    let dot_bracket = match &args.dot_bracket {
        Some(p) => Some(SecondaryStructure::from_dot_bracket(read_text(p)?.lines().next().unwrap_or(""))?),
        None => None,
    };
    fs::create_dir_all(&args.out)?;
    let mut fasta = Vec::new();
    let mut rows = Vec::new();
    for (e_idx, ensemble) in read_ensembles(&args.pdbs)?.iter().enumerate() {
        let (mg, native) = eval_graph(ensemble, max_states, &model.config)?;
        let residues = mg.residues();
        let states = crate::training::select_states::<rand_chacha::ChaCha8Rng>(ensemble, max_states, None);
        if let Some(db) = &dot_bracket {
            if db.n != ensemble.len() {
                return Err(Error::LengthMismatch {
                    expected: ensemble.len(),
                    found: db.n,
                });
            }
        }
        let truths = truths_for(ensemble, &states, &residues, dot_bracket.as_ref());
        let fixed_full = match &args.fixed {
            Some(p) => parse_fixed(&read_text(p)?, &ensemble.sequence)?,
            None => vec![None; ensemble.len()],
        };
        let sampling = SamplingOptions {
            temperature,
            fixed: residues.iter().map(|&r| fixed_full[r]).collect(),
            logit_bias: Vec::new(),
        };
        let opts = DesignOptions {
            n_samples,
            sampling,
            seed: derive_seed(derive_seed(seed, DESIGN), e_idx as u64),
        };
        let results = design::design(&model, &mg, Some(&native), &truths, &opts)?;
        let native_ppl = design::perplexity(&model, &mg, &native)?;
        let full: Vec<char> = ensemble.sequence.chars().collect();
        for (s, r) in results.iter().enumerate() {
            let mut seq = full.clone();
            for (a, c) in residues.iter().zip(r.sequence.chars()) {
                seq[*a] = c;
            }
            fasta.push(FastaRecord {
                header: format!("{}_design{}", ensemble.id, s),
                sequence: seq.into_iter().collect(),
            });
            rows.push(json!({
                "id": ensemble.id,
                "sample": s,
                "sequence": r.sequence,
                "perplexity": r.perplexity,
                "recovery": r.recovery,
                "mcc": r.mcc,
            }));
        }
        log::info!("{}: {} designs, native perplexity {native_ppl:.3}", ensemble.id, results.len());
        rows.push(json!({
            "id": ensemble.id,
            "native_perplexity": native_ppl,
            "designed_residues": residues,
            "states": states.iter().map(|&s| ensemble.states[s].id.clone()).collect::<Vec<_>>(),
        }));
    }
    fs::write(args.out.join("designs.fasta"), write_fasta(&fasta))?;
    write_json(
        &args.out.join("designs.json"),
        &json!({
            "temperature": temperature,
            "n_samples": n_samples,
            "seed": seed,
            "structure_oracle": STRUCTURE_ORACLE,
            "records": rows,
        }),
    )
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let model = load_model(&args.checkpoint)?;
    let n_samples = args.n_samples.unwrap_or(cfg.n_samples);
    let temperature = args.temperature.unwrap_or(cfg.temperature);
    let seed = args.seed.unwrap_or(cfg.seeds.first().copied().unwrap_or(0));
    let max_states = args.max_states.unwrap_or(cfg.train.max_states);
    let manifest: SplitManifest = serde_json::from_str(&read_text(&args.split)?)?;
    let ensembles = pick(&read_corpus(&args.corpus)?, subset(&manifest, args.subset))?;
    let mut records = Vec::new();
    for (i, e) in ensembles.iter().enumerate() {
        let (mg, native) = eval_graph(e, max_states, &model.config)?;
        let states = crate::training::select_states::<rand_chacha::ChaCha8Rng>(e, max_states, None);
        let truths = truths_for(e, &states, &mg.residues(), None);
        let opts = DesignOptions {
            n_samples,
            sampling: SamplingOptions::with_temperature(temperature),
            seed: derive_seed(derive_seed(seed, DESIGN), i as u64),
        };
        records.push(design::evaluate(&model, &e.id, &mg, &native, &truths, &opts)?);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "n", "states", "recovery", "perplexity", "sample_perplexity", "mcc"])?;
    for r in &records {
        w.write_record([
            r.id.clone(),
            r.n.to_string(),
            r.states.to_string(),
            r.recovery.to_string(),
            r.perplexity.to_string(),
            r.sample_perplexity.to_string(),
            r.mcc.map_or(String::new(), |m| m.to_string()),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&args.out, bytes)?;
    let mean = |xs: Vec<f64>| if xs.is_empty() { None } else { Some(xs.iter().sum::<f64>() / xs.len() as f64) };
    let summary = json!({
        "subset": format!("{:?}", args.subset).to_lowercase(),
        "count": records.len(),
        "recovery": mean(records.iter().map(|r| r.recovery).collect()),
        "perplexity": mean(records.iter().map(|r| r.perplexity).collect()),
        "sample_perplexity": mean(records.iter().map(|r| r.sample_perplexity).collect()),
        "mcc": mean(records.iter().filter_map(|r| r.mcc).collect()),
        "structure_oracle": STRUCTURE_ORACLE,
        "n_samples": n_samples,
        "temperature": temperature,
    });
    log::info!("eval summary {summary}");
    write_json(&args.out.with_extension("json"), &summary)
}

pub fn cmd_rank(args: &RankArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let model = load_model(&args.checkpoint)?;
    let n_sims = args.n_sims.unwrap_or(cfg.n_sims);
    let seed = args.seed.unwrap_or(cfg.seeds.first().copied().unwrap_or(0));
    let ensemble = read_ensembles(&args.pdbs)?.remove(0);
    let max_states = if args.single_state { 1 } else { ensemble.num_states() };
    let (mg, _) = eval_graph(&ensemble, max_states, &model.config)?;
    let records = fitness::read_landscape(&args.landscape, &ensemble.sequence)?;
    let wt_fitness = match records.iter().find(|r| r.mutation_order == 0) {
        Some(r) => r.fitness,
        None => args.wild_type_fitness.ok_or_else(|| {
            Error::InvalidArgument("landscape lacks the wild type; pass --wild-type-fitness".into())
        })?,
    };
    let records: Vec<_> = records.into_iter().filter(|r| r.mutation_order > 0).collect();
    let candidates: Vec<String> = records.iter().map(|r| r.sequence.clone()).collect();
    let ranked: Vec<RankedCandidate> = fitness::rank_by_perplexity(&model, &mg, &candidates)?;
    let reports = fitness::evaluate_strategies(&records, wt_fitness, &ranked, &args.budgets, n_sims, derive_seed(seed, SIMULATION))?;
    fs::create_dir_all(&args.out)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rank", "sequence", "perplexity"])?;
    for (i, c) in ranked.iter().enumerate() {
        w.write_record([(i + 1).to_string(), c.sequence.clone(), c.perplexity.to_string()])?;
    }
    fs::write(
        args.out.join("ranking.csv"),
        w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?,
    )?;
    fs::write(args.out.join("reports.csv"), fitness::reports_to_csv(&reports)?)?;
    write_json(
        &args.out.join("reports.json"),
        &json!({
            "wild_type_fitness": wt_fitness,
            "states": mg.k,
            "n_sims": n_sims,
            "reports": reports,
        }),
    )
}

pub fn cmd_featurize(args: &FeaturizeArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let max_states = args.max_states.unwrap_or(usize::MAX);
    let mut out = Vec::new();
    for ensemble in read_ensembles(&args.pdbs)? {
        let (mg, _) = eval_graph(&ensemble, max_states, &cfg.train.model)?;
        let mut v = mg.to_json();
        v["id"] = json!(ensemble.id);
        v["sequence"] = json!(ensemble.sequence);
        out.push(v);
    }
    write_json(&args.out, &out)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Split(a) => cmd_split(a),
        Command::Train(a) => cmd_train(a),
        Command::Design(a) => cmd_design(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Featurize(a) => cmd_featurize(a),
    }
}

/// Parses arguments, runs the subcommand and maps errors to exit codes:
/// 0 success, 1 internal error, 2 invalid input.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.max(1)).build_global() {
        log::warn!("thread pool already configured: {e}");
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
