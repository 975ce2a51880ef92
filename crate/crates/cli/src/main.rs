mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_traits::ToPrimitive;
use serde_json::json;
use stochlog::bench::{self, BenchSpec};
use stochlog::circuit::{Leaf, LogProb, Prob};
use stochlog::learning::{evaluate, leaf_values, train, write_dataset, ForwardCache, LearnError, Metric, TrainConfig};
use stochlog::models::{token_name, FeatureTable, ModelConfig, ModelError, ModelSpec, ParamStore};
use stochlog::program::{translate, Program};
use stochlog::resolution::{
    derive, describe_leaf, parse_sequence, AnswerNode, DepthLimits, DerivationForest, DeriveConfig, DeriveError, Goal, Strategy,
};
use stochlog::synth;
use stochlog::terms::Term;

use manifest::Run;

/// A failed command: message plus process exit code.
pub struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    pub fn usage(error: anyhow::Error) -> Failure {
        Failure { code: 1, error }
    }

    pub fn proof(error: anyhow::Error) -> Failure {
        Failure { code: 2, error }
    }

    pub fn numeric(error: anyhow::Error) -> Failure {
        Failure { code: 3, error }
    }

    fn derive(e: DeriveError) -> Failure {
        match e {
            DeriveError::Syntax(_) | DeriveError::NotCallable(_) | DeriveError::UnknownNonterminal(_) => Failure::usage(e.into()),
            DeriveError::Circuit(_) => Failure::numeric(e.into()),
            _ => Failure::proof(e.into()),
        }
    }

    fn model(e: ModelError) -> Failure {
        match e {
            ModelError::NonFinite(_) => Failure::numeric(e.into()),
            _ => Failure::usage(e.into()),
        }
    }

    fn learn(e: LearnError) -> Failure {
        match e {
            LearnError::Dataset { .. } | LearnError::Config(_) | LearnError::MissingGold { .. } => Failure::usage(e.into()),
            LearnError::Model(m) => Failure::model(m),
            LearnError::Derive { index, source } => {
                let f = Failure::derive(source);
                Failure {
                    code: f.code,
                    error: f.error.context(format!("instance {index}")),
                }
            }
            LearnError::Truncated { .. } | LearnError::NonFinite { .. } | LearnError::Circuit(_) => Failure::numeric(e.into()),
        }
    }
}

type Outcome = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "stochlog", version, about = "Stochastic definite clause grammars with neural rules")]
struct Cli {
    /// Worker threads for data-parallel work.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Overrides every seed of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the definite clauses a grammar translates into.
    Translate(GrammarArgs),
    /// Probability that a goal derives a sequence.
    Prob(QueryArgs),
    /// Most probable derivation of a goal over a sequence.
    Mpd(QueryArgs),
    /// Train on a run manifest; writes a checkpoint and a history.
    Train(TrainArgs),
    /// Accuracy of a checkpoint on a manifest's evaluation set.
    Eval(EvalArgs),
    /// Answers, circuit nodes and wall time of SLD and SLG by length.
    Bench(BenchArgs),
    /// Write a synthetic dataset and a manifest to train on it.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct GrammarArgs {
    /// Grammar file.
    #[arg(long)]
    grammar: PathBuf,
    /// Accept fixed-weight groups that do not sum to 1.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct LimitArgs {
    /// `sld` (depth-first) or `slg` (tabled).
    #[arg(long, value_parser = parse_strategy, default_value = "slg")]
    strategy: Strategy,
    /// Rule applications per derivation; default 10 times the length plus 50.
    #[arg(long)]
    max_depth: Option<usize>,
    /// Per-query node or table-derivation budget.
    #[arg(long)]
    max_nodes: Option<usize>,
    /// Treat a `{...}` goal with several answers as an error.
    #[arg(long)]
    strict_goals: bool,
}

impl LimitArgs {
    fn config(&self) -> DeriveConfig {
        DeriveConfig {
            limits: DepthLimits {
                max_depth: self.max_depth,
                max_nodes: self.max_nodes,
            },
            strict_goals: self.strict_goals,
        }
    }
}

#[derive(Args)]
struct QueryArgs {
    /// Grammar file; defaults to the manifest's.
    #[arg(long)]
    grammar: Option<PathBuf>,
    /// Accept fixed-weight groups that do not sum to 1.
    #[arg(long)]
    lenient: bool,
    /// Goal such as `e(X)`; unbound variables give one answer per binding.
    #[arg(long)]
    goal: String,
    /// A list such as `[2,+,0]`; `tok:`/`vec:` tokens may be written bare.
    #[arg(long)]
    sequence: String,
    #[command(flatten)]
    limits: LimitArgs,
    /// Parameter checkpoint.
    #[arg(long)]
    params: Option<PathBuf>,
    /// JSON model configuration.
    #[arg(long)]
    models: Option<PathBuf>,
    /// CSV feature matrix.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Run manifest supplying grammar, models, features and vocabulary.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Write the derivation circuit as DOT.
    #[arg(long)]
    emit_dot: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Run manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// Start from this checkpoint instead of fresh parameters.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Run manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// Defaults to the checkpoint in the manifest's output directory.
    #[arg(long)]
    params: Option<PathBuf>,
    /// `answer` or `parse`; defaults to the manifest's metric.
    #[arg(long, value_parser = parse_metric)]
    metric: Option<Metric>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    grammar: GrammarArgs,
    /// Goal such as `expression(N)`.
    #[arg(long)]
    goal: String,
    /// `1-7`, `1-7/2` (every second length) or `1,3,5`.
    #[arg(long, default_value = "1-7")]
    lengths: String,
    /// Comma-separated strategies to time.
    #[arg(long, default_value = "sld,slg")]
    strategies: String,
    /// Token classes cycled along the generated sequence.
    #[arg(long, default_value = "n,o")]
    pattern: String,
    /// Timed runs per length and strategy; the median is reported.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Rule applications per derivation; default 10 times the length plus 50.
    #[arg(long)]
    max_depth: Option<usize>,
    /// Per-sequence node or table-derivation budget.
    #[arg(long)]
    max_nodes: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Addition,
    Parentheses,
    Anbncn,
}

#[derive(Args)]
struct GenerateArgs {
    /// Synthetic task to generate.
    #[arg(long, value_enum)]
    task: Task,
    /// Grammar the manifest points at.
    #[arg(long)]
    grammar: PathBuf,
    /// Directory for the data files and `manifest.json`.
    #[arg(long)]
    out: PathBuf,
    /// Training examples.
    #[arg(long, default_value_t = 200)]
    train: usize,
    /// Evaluation examples.
    #[arg(long, default_value_t = 200)]
    test: usize,
    /// Longest generated sequence.
    #[arg(long, default_value_t = 10)]
    max_len: usize,
    /// Epochs written into the manifest.
    #[arg(long, default_value_t = 10)]
    epochs: usize,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse()
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    stochlog::par::set_threads(cli.threads.max(1));
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Translate(a) => cmd_translate(cli, a),
        Command::Prob(a) => cmd_prob(cli, a),
        Command::Mpd(a) => cmd_mpd(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Eval(a) => cmd_eval(cli, a),
        Command::Bench(a) => cmd_bench(cli, a),
        Command::Generate(a) => cmd_generate(cli, a),
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json values serialize"));
}

fn write_file(path: &Path, text: &str) -> Outcome {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))
            .map_err(Failure::usage)?;
    }
    fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::usage)
}

fn cmd_translate(cli: &Cli, a: &GrammarArgs) -> Outcome {
    let program = manifest::load_program(&a.grammar, a.lenient)?;
    let clauses: Vec<String> = translate(&program).iter().map(|c| c.to_string()).collect();
    if cli.json {
        print_json(&json!({ "clauses": clauses }));
    } else {
        for c in clauses {
            println!("{c}");
        }
    }
    Ok(())
}

/// Quotes bare `tok:`/`vec:` tokens so they read as single atoms.
fn quote_prefixed(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 8);
    let mut rest = text;
    while let Some(pos) = ["tok:", "vec:"].iter().filter_map(|p| rest.find(p)).min() {
        let boundary = rest[..pos].chars().next_back().is_none_or(|c| !(c.is_alphanumeric() || c == '_' || c == '\''));
        let end = pos + 4 + rest[pos + 4..].find(|c: char| !(c.is_alphanumeric() || c == '_')).unwrap_or(rest.len() - pos - 4);
        out.push_str(&rest[..pos]);
        if boundary {
            out.push('\'');
            out.push_str(&rest[pos..end]);
            out.push('\'');
        } else {
            out.push_str(&rest[pos..end]);
        }
        rest = &rest[end..];
    }
    out.push_str(rest);
    out
}

fn parse_tokens(text: &str) -> Result<Vec<Term>, Failure> {
    parse_sequence(&quote_prefixed(text)).map_err(|e| Failure::usage(anyhow!("sequence {text}: {e}")))
}

struct Session {
    program: Program,
    params: ParamStore,
    features: FeatureTable,
}

fn session(cli: &Cli, a: &QueryArgs, sequence: &[Term]) -> Result<Session, Failure> {
    let run = a.manifest.as_deref().map(|m| Run::load(m, cli.seed)).transpose()?;
    let program = match (&a.grammar, &run) {
        (Some(g), _) => manifest::load_program(g, a.lenient)?,
        (None, Some(r)) => r.program.clone(),
        (None, None) => return Err(Failure::usage(anyhow!("--grammar or --manifest is required"))),
    };
    let features = match (&a.features, &run) {
        (Some(f), _) => manifest::load_features(Some(f))?,
        (None, Some(r)) => r.features.clone(),
        (None, None) => FeatureTable::empty(),
    };
    let mut models = match (&a.models, &run) {
        (Some(m), _) => manifest::load_models(m)?,
        (None, Some(r)) => r.models.clone(),
        (None, None) => ModelConfig::default(),
    };
    if cli.seed.is_some() {
        models.seed = cli.seed;
    }
    let tokens = match &run {
        Some(r) => r.vocabulary(),
        None => {
            let mut t: Vec<String> = sequence.iter().map(token_name).collect();
            t.sort();
            t.dedup();
            t
        }
    };
    let mut params = manifest::build_params(&program, &models, &features, &tokens)?;
    let checkpoint = a.params.clone().or_else(|| {
        run.as_ref()
            .map(Run::checkpoint_path)
            .filter(|p| p.exists())
    });
    if let Some(p) = checkpoint {
        manifest::load_checkpoint(&mut params, &p)?;
    }
    Ok(Session { program, params, features })
}

struct Scored {
    forest: DerivationForest,
    probs: Vec<f64>,
}

fn score(cli: &Cli, a: &QueryArgs) -> Result<(Session, Goal, Vec<Term>, Scored), Failure> {
    let sequence = parse_tokens(&a.sequence)?;
    let s = session(cli, a, &sequence)?;
    let goal = Goal::parse(&s.program, &a.goal).map_err(Failure::derive)?;
    let forest = derive(&s.program, &goal, &sequence, a.limits.strategy, &a.limits.config()).map_err(Failure::derive)?;
    if forest.truncated {
        log::warn!("derivation hit the depth or size limit; the probability is a lower bound");
    }
    let mut cache = ForwardCache::new();
    cache
        .fill_circuit(&s.params, &s.features, &forest.circuit)
        .map_err(Failure::model)?;
    let probs = leaf_values(&s.program, &forest.circuit, &s.params, &cache).map_err(Failure::model)?;
    if let Some(path) = &a.emit_dot {
        let dot = forest
            .circuit
            .to_dot(forest.root, &|leaf| describe_leaf(&s.program, &forest.circuit, leaf));
        write_file(path, &dot)?;
    }
    Ok((s, goal, sequence, Scored { forest, probs }))
}

/// Exact value when every leaf has a fixed rational weight.
fn exact_value(program: &Program, forest: &DerivationForest) -> Option<num_rational::BigRational> {
    let env: Option<Vec<_>> = forest
        .circuit
        .leaves()
        .iter()
        .map(|leaf| match *leaf {
            Leaf::Rule(id) => program.exact_probability(id),
            Leaf::Marker(_) => Some(num_rational::BigRational::from_integer(1.into())),
            Leaf::Neural { .. } => None,
        })
        .collect();
    forest.circuit.value_exact(forest.root, &env?).ok()
}

fn cmd_prob(cli: &Cli, a: &QueryArgs) -> Outcome {
    let (s, _, _, scored) = score(cli, a)?;
    let Scored { forest, probs } = scored;
    let exact = exact_value(&s.program, &forest);
    let float = forest.circuit.value::<Prob>(forest.root, &probs).map_err(|e| Failure::numeric(e.into()))?;
    let p = exact.as_ref().and_then(ToPrimitive::to_f64).unwrap_or(float);
    let log_p = forest
        .circuit
        .value::<LogProb>(forest.root, &probs)
        .map_err(|e| Failure::numeric(e.into()))?;
    if !p.is_finite() || log_p.is_nan() {
        return Err(Failure::numeric(anyhow!("probability is not finite")));
    }
    let answers = forest.answer_values(&probs).map_err(Failure::derive)?;
    if cli.json {
        let answers: Vec<_> = forest
            .answers
            .iter()
            .zip(&answers)
            .map(|(ans, v)| json!({ "answer": ans.goal.to_string(), "probability": v }))
            .collect();
        print_json(&json!({
            "goal": a.goal,
            "strategy": a.limits.strategy.to_string(),
            "probability": p,
            "log_probability": log_p,
            "exact": exact.as_ref().map(|e| e.to_string()),
            "answers": answers,
            "nodes": forest.node_count(),
            "truncated": forest.truncated,
        }));
    } else {
        println!("probability: {p}");
        println!("log_probability: {log_p}");
        if let Some(e) = &exact {
            println!("exact: {e}");
        }
        for (ans, v) in forest.answers.iter().zip(&answers) {
            println!("answer: {} {v}", ans.goal);
        }
    }
    Ok(())
}

fn cmd_mpd(cli: &Cli, a: &QueryArgs) -> Outcome {
    let (s, _, _, scored) = score(cli, a)?;
    let Scored { forest, probs } = scored;
    let best = forest
        .circuit
        .most_probable_derivation(forest.root, &probs)
        .map_err(|e| Failure::numeric(e.into()))?;
    if forest.answers.is_empty() || best.value <= 0.0 {
        return Err(Failure::proof(anyhow!("{} has no derivation of {}", a.goal, a.sequence)));
    }
    let chosen = forest.answers.iter().find(|ans| match ans.node {
        AnswerNode::Marker(n) => best.trace.iter().any(|&l| forest.circuit.node_of_leaf(l) == Some(n)),
        AnswerNode::Node(n) => n == forest.root || best.choices.get(&forest.root) == Some(&n),
    });
    let steps: Vec<String> = best
        .trace
        .iter()
        .filter_map(|&l| match forest.circuit.leaf(l) {
            Leaf::Marker(_) => None,
            leaf => Some(describe_leaf(&s.program, &forest.circuit, leaf)),
        })
        .collect();
    let answer = chosen.map(|c| c.goal.to_string());
    if cli.json {
        print_json(&json!({
            "goal": a.goal,
            "strategy": a.limits.strategy.to_string(),
            "probability": best.value,
            "answer": answer,
            "trace": steps,
        }));
    } else {
        println!("probability: {}", best.value);
        if let Some(ans) = answer {
            println!("answer: {ans}");
        }
        println!("trace:");
        for step in steps {
            println!("  {step}");
        }
    }
    Ok(())
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Outcome {
    let run = Run::load(&a.manifest, cli.seed)?;
    if run.train.is_empty() {
        return Err(Failure::usage(anyhow!("manifest {} names no training set", a.manifest.display())));
    }
    let mut params = run.params()?;
    if let Some(p) = &a.params {
        manifest::load_checkpoint(&mut params, p)?;
    }
    let eval = (!run.eval.is_empty()).then_some(run.eval.as_slice());
    let history = train(&run.program, &mut params, &run.features, &run.train, eval, &run.config).map_err(Failure::learn)?;
    write_file(&run.checkpoint_path(), &params.to_checkpoint())?;
    write_file(&run.history_path(), &history.to_csv())?;
    let last = history.epochs.last();
    if cli.json {
        print_json(&json!({
            "epochs": history.epochs.len(),
            "loss": last.map(|r| r.loss),
            "metric": last.and_then(|r| r.metric),
            "checkpoint": run.checkpoint_path(),
            "history": run.history_path(),
        }));
    } else {
        for r in &history.epochs {
            match r.metric {
                Some(m) => println!("epoch {} loss {:.6} metric {m:.4}", r.epoch, r.loss),
                None => println!("epoch {} loss {:.6}", r.epoch, r.loss),
            }
        }
        println!("checkpoint: {}", run.checkpoint_path().display());
    }
    Ok(())
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> Outcome {
    let run = Run::load(&a.manifest, cli.seed)?;
    let mut params = run.params()?;
    let checkpoint = a.params.clone().unwrap_or_else(|| run.checkpoint_path());
    manifest::load_checkpoint(&mut params, &checkpoint)?;
    let metric = a.metric.or(run.config.metric).unwrap_or(Metric::AnswerAccuracy);
    let data = if run.eval.is_empty() { &run.train } else { &run.eval };
    let accuracy = evaluate(&run.program, &params, &run.features, data, metric, &run.config).map_err(Failure::learn)?;
    let name = match metric {
        Metric::AnswerAccuracy => "answer_accuracy",
        Metric::ParseAccuracy => "parse_accuracy",
    };
    if cli.json {
        print_json(&json!({ "metric": name, "value": accuracy, "instances": data.len() }));
    } else {
        println!("{name}: {accuracy}");
        println!("instances: {}", data.len());
    }
    Ok(())
}

fn parse_lengths(text: &str) -> Result<Vec<usize>, Failure> {
    let bad = || Failure::usage(anyhow!("lengths {text:?}: expected a range like 1-7 or 1-7/2, or a list like 1,3,5"));
    if let Some((lo, rest)) = text.split_once('-') {
        let (hi, step) = rest.split_once('/').unwrap_or((rest, "1"));
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        let step: usize = step.trim().parse().map_err(|_| bad())?;
        return if lo <= hi && step > 0 { Ok((lo..=hi).step_by(step).collect()) } else { Err(bad()) };
    }
    text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

fn cmd_bench(cli: &Cli, a: &BenchArgs) -> Outcome {
    let program = manifest::load_program(&a.grammar.grammar, a.grammar.lenient)?;
    let goal = Goal::parse(&program, &a.goal).map_err(Failure::derive)?;
    let strategies = a
        .strategies
        .split(',')
        .map(|s| s.trim().parse::<Strategy>().map_err(|e| Failure::usage(anyhow!(e))))
        .collect::<Result<Vec<_>, _>>()?;
    let pattern: Vec<String> = a.pattern.split(',').map(|s| s.trim().to_owned()).filter(|s| !s.is_empty()).collect();
    if pattern.is_empty() {
        return Err(Failure::usage(anyhow!("empty token pattern")));
    }
    let spec = BenchSpec {
        lengths: parse_lengths(&a.lengths)?,
        strategies,
        pattern,
        repeats: a.repeats.max(1),
    };
    let config = DeriveConfig {
        limits: DepthLimits {
            max_depth: a.max_depth,
            max_nodes: a.max_nodes,
        },
        strict_goals: false,
    };
    let rows = bench::run(&program, &goal, &spec, &config).map_err(Failure::derive)?;
    if cli.json {
        print_json(&serde_json::to_value(&rows).map_err(|e| Failure::numeric(e.into()))?);
    } else {
        print!("{}", bench::to_csv(&rows));
    }
    for r in rows.iter().filter(|r| r.truncated) {
        log::warn!("length {} under {} was truncated", r.length, r.strategy);
    }
    Ok(())
}

fn cmd_generate(cli: &Cli, a: &GenerateArgs) -> Outcome {
    let seed = cli.seed.unwrap_or(stochlog::models::DEFAULT_SEED);
    let (data, models, metric) = match a.task {
        Task::Addition => (
            synth::addition(a.train, a.test, seed),
            vec![("number", ModelSpec::Dense { hidden: 32, input_dim: None })],
            Metric::AnswerAccuracy,
        ),
        Task::Parentheses => (
            synth::parentheses(a.train, a.test, (a.max_len / 2).max(1), seed),
            vec![
                ("bracket_nn", ModelSpec::Dense { hidden: 16, input_dim: None }),
                ("s_nn", ModelSpec::Softmax { vocab: Vec::new() }),
            ],
            Metric::ParseAccuracy,
        ),
        Task::Anbncn => (
            synth::anbncn(a.train, a.test, 3, a.max_len.max(3), seed),
            vec![("mnist", ModelSpec::Dense { hidden: 16, input_dim: None })],
            Metric::AnswerAccuracy,
        ),
    };
    let grammar = fs::canonicalize(&a.grammar)
        .with_context(|| format!("grammar {}", a.grammar.display()))
        .map_err(Failure::usage)?;
    let config = TrainConfig {
        learning_rate: 0.01,
        batch_size: 8,
        epochs: a.epochs,
        seed,
        eval_every: a.epochs,
        metric: Some(metric),
        ..TrainConfig::default()
    };
    let manifest = manifest::RunManifest {
        grammar,
        train: Some("train.jsonl".into()),
        eval: Some("test.jsonl".into()),
        features: Some("features.csv".into()),
        models: manifest::ModelsField::Inline(ModelConfig {
            seed: Some(seed),
            models: models.into_iter().map(|(n, s)| (n.to_owned(), s)).collect(),
        }),
        config,
        seed: Some(seed),
        output: "run".into(),
        lenient: false,
    };
    let labels: String = data.labels.iter().map(|(t, l)| format!("{t},{}\n", token_name(l))).collect();
    write_file(&a.out.join("train.jsonl"), &write_dataset(&data.train))?;
    write_file(&a.out.join("test.jsonl"), &write_dataset(&data.test))?;
    write_file(&a.out.join("features.csv"), &data.features.to_csv())?;
    write_file(&a.out.join("labels.csv"), &labels)?;
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::numeric(e.into()))?;
    write_file(&a.out.join("manifest.json"), &(text + "\n"))?;
    if cli.json {
        print_json(&json!({ "manifest": a.out.join("manifest.json"), "train": data.train.len(), "test": data.test.len() }));
    } else {
        println!("manifest: {}", a.out.join("manifest.json").display());
    }
    Ok(())
}
