//! `brm`: corpus generation, prior learning, channel tuning, benchmarking
//! and single-episode traces for the relational-memory navigation agent.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use brm_core::agent::{run_episode_traced, AgentConfig, AgentMode, Termination};
use brm_core::concepts::ConceptVocabulary;
use brm_core::eval::{
    build_eval_suite, build_records, generate_houses, grid_search_obs, learn_prior_driver, run_benchmark, with_jobs, BenchmarkEnv, EvalSuite,
};
use brm_core::graph::{RelationGraph, DEFAULT_PSI_OBS_0, DEFAULT_PSI_OBS_1};
use brm_core::houseworld::{CorpusManifest, CorpusSplit, House, HouseRecord};
use brm_core::locomotion::{LocomotionKind, LocomotionSpec};
use brm_core::ConceptId;
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use thiserror::Error;

use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

fn data_err<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Data(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "brm", version, about = "Relational-memory navigation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Run-config JSON file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; wins over the config file and BRM_OUT_DIR.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Global seed; wins over the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Clone, Args)]
struct AgentOverrides {
    /// Comma-separated agent modes.
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<AgentMode>>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Steps between graph updates and re-planning.
    #[arg(long)]
    replan: Option<usize>,
    /// `environment` or `self`.
    #[arg(long, value_parser = parse_termination)]
    termination: Option<Termination>,
    /// `scripted`, `oracle` or `random`.
    #[arg(long, value_parser = parse_locomotion)]
    locomotion: Option<LocomotionKind>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the train/valid/test houses and their manifest.
    GenCorpus {
        #[command(flatten)]
        common: Common,
        /// Overwrite an existing corpus.
        #[arg(long)]
        force: bool,
    },
    /// Fit edge priors on the training houses and write the graph file.
    LearnPrior {
        #[command(flatten)]
        common: Common,
    },
    /// Grid-search the observation channel on the validation houses.
    Tune {
        #[command(flatten)]
        common: Common,
    },
    /// Run the benchmark suite on the test houses.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        agent: AgentOverrides,
        /// Report sub-directory name under `<out>/eval`.
        #[arg(long)]
        tag: Option<String>,
    },
    /// Dump one suite episode as JSON lines.
    Trace {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        agent: AgentOverrides,
        /// Suite index of the episode.
        #[arg(long, conflicts_with = "episode_seed")]
        index: Option<usize>,
        /// Episode seed as listed in the episode CSV.
        #[arg(long)]
        episode_seed: Option<u64>,
        /// Write here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn parse_termination(s: &str) -> Result<Termination, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown termination `{s}`"))
}

fn parse_locomotion(s: &str) -> Result<LocomotionKind, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown locomotion `{s}`"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::load(common.config.as_deref())?;
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if common.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    Ok(config)
}

fn apply_overrides(config: &mut RunConfig, o: &AgentOverrides) {
    if let Some(modes) = &o.modes {
        config.agent.modes = modes.clone();
    }
    if let Some(h) = o.horizon {
        config.agent.horizon = h;
    }
    if let Some(n) = o.replan {
        config.agent.replan_period = n;
    }
    if let Some(t) = o.termination {
        config.agent.termination = t;
    }
    if let Some(kind) = o.locomotion {
        config.locomotion = match kind {
            LocomotionKind::Oracle => LocomotionSpec { kind, ..LocomotionSpec::oracle() },
            _ => LocomotionSpec { kind, ..config.locomotion },
        };
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenCorpus { common, force } => {
            let config = load_config(&common)?;
            config.validate()?;
            gen_corpus(&config, force, common.jobs)
        }
        Command::LearnPrior { common } => {
            let config = load_config(&common)?;
            config.validate()?;
            learn_prior(&config, common.jobs)
        }
        Command::Tune { common } => {
            let config = load_config(&common)?;
            config.validate()?;
            tune(&config, common.jobs)
        }
        Command::Eval { common, agent, tag } => {
            let mut config = load_config(&common)?;
            apply_overrides(&mut config, &agent);
            config.validate()?;
            eval(&config, tag, common.jobs)
        }
        Command::Trace { common, agent, index, episode_seed, output } => {
            let mut config = load_config(&common)?;
            apply_overrides(&mut config, &agent);
            config.validate()?;
            let pick = match (index, episode_seed) {
                (Some(i), None) => EpisodePick::Index(i),
                (None, Some(s)) => EpisodePick::Seed(s),
                _ => return Err(CliError::Usage("trace needs exactly one of --index or --episode-seed".into())),
            };
            trace(&config, pick, output.as_deref(), common.jobs)
        }
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(data_err(&format!("creating {}", parent.display())))?;
    }
    fs::write(path, contents).map_err(data_err(&format!("writing {}", path.display())))
}

fn jobs<R: Send>(n: usize, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    with_jobs(n, f).map_err(|e| CliError::Data(e.to_string()))
}

fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

fn house_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join("houses").join(CorpusManifest::house_file_name(seed))
}

fn gen_corpus(config: &RunConfig, force: bool, n_jobs: usize) -> Result<(), CliError> {
    let dir = config.corpus_dir();
    let occupied = fs::read_dir(&dir).map(|mut d| d.next().is_some()).unwrap_or(false);
    if occupied && !force {
        return Err(CliError::Data(format!("{} is not empty; pass --force to overwrite", dir.display())));
    }
    if occupied {
        let houses = dir.join("houses");
        if houses.exists() {
            fs::remove_dir_all(&houses).map_err(data_err(&format!("clearing {}", houses.display())))?;
        }
    }
    let c = &config.corpus;
    let manifest = CorpusManifest::new(config.seed, c.house.clone(), c.train, c.valid, c.test);
    let seeds: Vec<u64> = [CorpusSplit::Train, CorpusSplit::Valid, CorpusSplit::Test]
        .iter()
        .flat_map(|&s| manifest.seeds(s).iter().copied())
        .collect();
    let houses = jobs(n_jobs, || generate_houses(&seeds, &manifest.params))?.map_err(data_err("generating houses"))?;
    for (seed, house) in &houses {
        write_file(&house_path(&dir, *seed), house.to_json().as_bytes())?;
    }
    write_file(&manifest_path(&dir), manifest.to_json().as_bytes())?;
    info!(
        "wrote {} train, {} valid and {} test houses to {}",
        manifest.train.len(),
        manifest.valid.len(),
        manifest.test.len(),
        dir.display()
    );
    Ok(())
}

fn read_manifest(config: &RunConfig) -> Result<CorpusManifest, CliError> {
    let path = manifest_path(&config.corpus_dir());
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Data(format!("reading corpus manifest {}: {e}; run gen-corpus first", path.display())))?;
    serde_json::from_str(&text).map_err(data_err(&format!("parsing {}", path.display())))
}

fn read_houses(config: &RunConfig, manifest: &CorpusManifest, split: CorpusSplit) -> Result<Vec<(u64, House)>, CliError> {
    let dir = config.corpus_dir();
    let houses: Vec<(u64, House)> = manifest
        .seeds(split)
        .iter()
        .map(|&seed| {
            let path = house_path(&dir, seed);
            let text = fs::read_to_string(&path).map_err(data_err(&format!("reading {}", path.display())))?;
            let house = House::from_json(&text).map_err(data_err(&format!("parsing {}", path.display())))?;
            Ok((seed, house))
        })
        .collect::<Result<_, CliError>>()?;
    if houses.is_empty() {
        return Err(CliError::Data(format!("the {split:?} split is empty").to_lowercase()));
    }
    Ok(houses)
}

fn load_records(config: &RunConfig, manifest: &CorpusManifest, split: CorpusSplit, n_jobs: usize) -> Result<Vec<HouseRecord>, CliError> {
    let houses = read_houses(config, manifest, split)?;
    let k = manifest.params.vocabulary.len();
    let (budget, trials) = (config.corpus.budget, config.corpus.trials);
    jobs(n_jobs, || build_records(houses, k, budget, trials))
}

fn read_graph(config: &RunConfig) -> Result<RelationGraph, CliError> {
    let path = config.graph_path();
    let bytes = fs::read(&path)
        .map_err(|e| CliError::Data(format!("reading graph {}: {e}; run learn-prior first", path.display())))?;
    RelationGraph::from_bytes(&bytes).map_err(data_err(&format!("parsing {}", path.display())))
}

fn learn_prior(config: &RunConfig, n_jobs: usize) -> Result<(), CliError> {
    let manifest = read_manifest(config)?;
    let houses = read_houses(config, &manifest, CorpusSplit::Train)?;
    let vocab = manifest.params.vocabulary.clone();
    let refs: Vec<(u64, &House)> = houses.iter().map(|(s, h)| (*s, h)).collect();
    let prior = jobs(n_jobs, || {
        learn_prior_driver(&refs, vocab.len(), config.corpus.budget, config.corpus.trials, config.prior_clamp)
    })?
    .map_err(data_err("learning prior"))?;
    let graph =
        RelationGraph::new(vocab.clone(), &prior, DEFAULT_PSI_OBS_0, DEFAULT_PSI_OBS_1).map_err(data_err("building graph"))?;
    log_relations(&vocab, |i, j| prior.get(i, j));
    let path = config.graph_path();
    write_file(&path, &graph.to_bytes())?;
    info!("learned prior from {} houses; wrote {}", houses.len(), path.display());
    Ok(())
}

/// Strongest and weakest three relations of every named concept.
fn log_relations(vocab: &ConceptVocabulary, value: impl Fn(usize, usize) -> f64) {
    let k = vocab.len();
    for i in 0..k {
        let mut row: Vec<(f64, usize)> = (0..k).filter(|&j| j != i).map(|j| (value(i, j), j)).collect();
        row.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let fmt = |items: &[(f64, usize)]| {
            items.iter().map(|(p, j)| format!("{} {p:.2}", vocab.name(ConceptId(*j)))).collect::<Vec<_>>().join(", ")
        };
        let n = row.len().min(3);
        info!("{}: top [{}] bottom [{}]", vocab.name(ConceptId(i)), fmt(&row[..n]), fmt(&row[row.len() - n..]));
    }
}

fn tune(config: &RunConfig, n_jobs: usize) -> Result<(), CliError> {
    let graph = read_graph(config)?;
    let manifest = read_manifest(config)?;
    let houses = load_records(config, &manifest, CorpusSplit::Valid, n_jobs)?;
    let k = graph.vocabulary().len();
    let suite = jobs(n_jobs, || build_eval_suite(&houses, k, &config.suite_params(1)))?.map_err(data_err("building suite"))?;
    let agent = AgentConfig::new(AgentMode::Brm, config.tune.replan_period, config.tune.horizon, Termination::Environment)
        .map_err(data_err("tune agent"))?;
    let env = BenchmarkEnv {
        houses: &houses,
        graph: &graph,
        locomotion: &config.locomotion,
        detector: &config.detector,
        corpus_id: "valid",
    };
    let result = jobs(n_jobs, || grid_search_obs(&suite, &config.tune.grid, &agent, &env))?.map_err(data_err("grid search"))?;
    for p in &result.table {
        info!(
            "psi_obs_0 {:<6} psi_obs_1 {:<5} success {:.3} spl {:.3}",
            p.psi_obs_0, p.psi_obs_1, p.success_rate, p.spl
        );
    }
    let (fp, fnr) = result.best;
    info!("selected psi_obs_0 {fp} psi_obs_1 {fnr}");
    let tuned = graph.with_obs(fp, fnr).map_err(data_err("applying tuned channel"))?;
    write_file(&config.graph_path(), &tuned.to_bytes())?;
    let mut table = serde_json::to_string_pretty(&result).expect("tune result serializes");
    table.push('\n');
    write_file(&config.output_dir.join("tune.json"), table.as_bytes())?;
    Ok(())
}

fn locomotion_name(kind: LocomotionKind) -> &'static str {
    match kind {
        LocomotionKind::Random => "random",
        LocomotionKind::Scripted => "scripted",
        LocomotionKind::Oracle => "oracle",
    }
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Environment => "environment",
        Termination::SelfStop => "self",
    }
}

struct Prepared {
    graph: RelationGraph,
    houses: Vec<HouseRecord>,
    suite: EvalSuite,
}

fn prepare_test(config: &RunConfig, n_jobs: usize) -> Result<Prepared, CliError> {
    let graph = read_graph(config)?;
    let manifest = read_manifest(config)?;
    if manifest.params.vocabulary != *graph.vocabulary() {
        return Err(CliError::Data("graph vocabulary does not match the corpus".into()));
    }
    let houses = load_records(config, &manifest, CorpusSplit::Test, n_jobs)?;
    let k = graph.vocabulary().len();
    let suite = jobs(n_jobs, || build_eval_suite(&houses, k, &config.suite_params(0)))?.map_err(data_err("building suite"))?;
    for (bucket, reached) in &suite.shortfalls {
        warn!("plan-distance bucket {bucket} holds only {reached} episodes");
    }
    Ok(Prepared { graph, houses, suite })
}

fn eval(config: &RunConfig, tag: Option<String>, n_jobs: usize) -> Result<(), CliError> {
    if config.agent.modes.is_empty() {
        return Err(CliError::Usage("no agent modes selected".into()));
    }
    let Prepared { graph, houses, suite } = prepare_test(config, n_jobs)?;
    let agents = config.agent.modes.iter().map(|&m| config.agent_config(m)).collect::<Result<Vec<_>, _>>()?;
    let env = BenchmarkEnv {
        houses: &houses,
        graph: &graph,
        locomotion: &config.locomotion,
        detector: &config.detector,
        corpus_id: "test",
    };
    let runs = jobs(n_jobs, || run_benchmark(&suite, &agents, &env))?.map_err(data_err("benchmark"))?;

    let tag = tag.unwrap_or_else(|| {
        format!(
            "h{}-n{}-{}-{}",
            config.agent.horizon,
            config.agent.replan_period,
            termination_name(config.agent.termination),
            locomotion_name(config.locomotion.kind)
        )
    });
    let dir = config.output_dir.join("eval").join(tag);
    let reports: Vec<_> = runs.iter().map(|r| &r.report).collect();
    let mut json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    json.push('\n');
    write_file(&dir.join("report.json"), json.as_bytes())?;

    let mut csv = csv::Writer::from_writer(Vec::new());
    for row in runs.iter().flat_map(|r| &r.rows) {
        csv.serialize(row).map_err(data_err("writing csv"))?;
    }
    let bytes = csv.into_inner().map_err(|e| CliError::Data(format!("writing csv: {e}")))?;
    write_file(&dir.join("episodes.csv"), &bytes)?;

    let mut suite_json = serde_json::to_string(&suite).expect("suite serializes");
    suite_json.push('\n');
    write_file(&dir.join("suite.json"), suite_json.as_bytes())?;

    let mut out = std::io::stdout().lock();
    for r in &runs {
        let o = &r.report.overall;
        let _ = writeln!(out, "{:<18} success {:>5.1}%  spl {:>5.1}\u{2030}  n {}", r.agent.mode.as_str(), 100.0 * o.success_rate, 1000.0 * o.spl, o.n);
    }
    info!("wrote {}", dir.display());
    Ok(())
}

enum EpisodePick {
    Index(usize),
    Seed(u64),
}

fn trace(config: &RunConfig, pick: EpisodePick, output: Option<&Path>, n_jobs: usize) -> Result<(), CliError> {
    let Prepared { graph, houses, suite } = prepare_test(config, n_jobs)?;
    let episode = match pick {
        EpisodePick::Index(i) => suite.episodes.get(i),
        EpisodePick::Seed(s) => suite.episodes.iter().find(|e| e.config.rng_seed == s),
    }
    .ok_or_else(|| CliError::Data("no such episode in the suite".into()))?;
    let record = houses
        .iter()
        .find(|r| r.seed == episode.config.house_seed)
        .expect("suite episodes come from the loaded houses");
    let mode = config.agent.modes.first().copied().unwrap_or(AgentMode::Brm);
    let agent = config.agent_config(mode)?;
    let mut lines = Vec::new();
    let mut sink = |event| {
        lines.push(serde_json::to_string(&event).expect("trace events serialize"));
    };
    run_episode_traced(record, &episode.config, &agent, &graph, &config.locomotion, &config.detector, &mut sink)
        .map_err(data_err("running episode"))?;
    let mut text = lines.join("\n");
    text.push('\n');
    match output {
        Some(path) => write_file(path, text.as_bytes()),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(data_err("writing trace")),
    }
}
