//! Datasets of `(goal, sequence, target)` triples and gradient training of
//! rule weights and neural models against them.

mod gradient;
mod valuation;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitError, Leaf, Prob};
use crate::models::{FeatureTable, ModelError, ParamStore, DEFAULT_SEED};
use crate::program::Program;
use crate::resolution::{derive, DepthLimits, DeriveConfig, DeriveError, DerivationForest, Goal, Strategy};
use crate::terms::{is_variant, parse_term, Symbol, Term, Var};

pub use gradient::{accumulate, Gradient};
pub use valuation::{leaf_values, ForwardCache};

/// Probabilities below this are clamped inside logarithms.
pub const MIN_PROBABILITY: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnError {
    #[error("instance {index}: {source}")]
    Derive { index: usize, source: DeriveError },
    #[error("instance {index}: derivation hit the depth or size limit")]
    Truncated { index: usize },
    #[error("instance {index}: loss is {loss}")]
    NonFinite { index: usize, loss: f64 },
    #[error("instance {index} has no gold trace")]
    MissingGold { index: usize },
    #[error("dataset line {line}: {message}")]
    Dataset { line: usize, message: String },
    #[error("training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

/// A training triple: the goal, the sequence it should derive and the
/// target probability.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryInstance {
    pub goal: Term,
    pub sequence: Vec<Term>,
    pub target: f64,
    /// Goal with the answer left open, for answer accuracy. Defaults to
    /// `goal` with its first argument replaced by a variable.
    pub query: Option<Term>,
    /// Expected outputs of the input-consuming neural calls of the best
    /// derivation, in order.
    pub gold: Option<Vec<Term>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    goal: String,
    sequence: Vec<serde_json::Value>,
    #[serde(default = "one")]
    target: f64,
    #[serde(default)]
    query: Option<String>,
    #[serde(default)]
    gold: Option<Vec<serde_json::Value>>,
}

fn one() -> f64 {
    1.0
}

/// A sequence element: integers become numbers, any other text an atom
/// (`tok:3`, `vec:17` and `+` alike).
pub fn token_term(text: &str) -> Term {
    match text.parse::<i64>() {
        Ok(n) => Term::int(n),
        Err(_) => Term::atom(text),
    }
}

fn json_token(value: &serde_json::Value) -> Result<Term, String> {
    match value {
        serde_json::Value::String(s) => Ok(token_term(s)),
        serde_json::Value::Number(n) => n.as_i64().map(Term::int).ok_or_else(|| format!("token {n} is not an integer")),
        other => Err(format!("token {other} is neither a string nor an integer")),
    }
}

impl QueryInstance {
    pub fn new(goal: Term, sequence: Vec<Term>, target: f64) -> QueryInstance {
        QueryInstance {
            goal,
            sequence,
            target,
            query: None,
            gold: None,
        }
    }

    pub fn from_json(line: &str) -> Result<QueryInstance, String> {
        let raw: RawInstance = serde_json::from_str(line).map_err(|e| e.to_string())?;
        if !(0.0..=1.0).contains(&raw.target) {
            return Err(format!("target {} is outside [0, 1]", raw.target));
        }
        let goal = parse_term(&raw.goal).map_err(|e| e.to_string())?;
        let sequence = raw.sequence.iter().map(json_token).collect::<Result<_, _>>()?;
        let query = raw.query.map(|q| parse_term(&q)).transpose().map_err(|e| e.to_string())?;
        let gold = raw.gold.map(|g| g.iter().map(json_token).collect::<Result<Vec<_>, _>>()).transpose()?;
        Ok(QueryInstance {
            goal,
            sequence,
            target: raw.target,
            query,
            gold,
        })
    }

    pub fn to_json(&self) -> String {
        let token = |t: &Term| match t {
            Term::Num(_) => serde_json::Value::from(t.to_string().parse::<i64>().unwrap_or_default()),
            _ => serde_json::Value::from(crate::models::token_name(t)),
        };
        let mut obj = serde_json::Map::new();
        obj.insert("goal".into(), self.goal.to_string().into());
        obj.insert("sequence".into(), self.sequence.iter().map(token).collect::<Vec<_>>().into());
        obj.insert("target".into(), self.target.into());
        if let Some(q) = &self.query {
            obj.insert("query".into(), q.to_string().into());
        }
        if let Some(g) = &self.gold {
            obj.insert("gold".into(), g.iter().map(token).collect::<Vec<_>>().into());
        }
        serde_json::Value::Object(obj).to_string()
    }

    /// The goal with its answer left open.
    pub fn open_query(&self) -> Term {
        if let Some(q) = &self.query {
            return q.clone();
        }
        match &self.goal {
            Term::Compound(_) => {
                let (name, _) = self.goal.functor_arity().unwrap();
                let mut args = self.goal.args().to_vec();
                args[0] = Term::Var(Var::new("Answer"));
                Term::compound(name, args)
            }
            other => other.clone(),
        }
    }
}

/// One instance per non-blank line; `#` starts a comment line.
pub fn read_dataset(text: &str) -> Result<Vec<QueryInstance>, LearnError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| QueryInstance::from_json(l).map_err(|message| LearnError::Dataset { line: i + 1, message }))
        .collect()
}

pub fn write_dataset(data: &[QueryInstance]) -> String {
    data.iter().map(|q| q.to_json() + "\n").collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// `−t · ln P`.
    #[default]
    Nll,
    /// `(P − t)²`.
    SquaredError,
    /// `−t ln P − (1 − t) ln(1 − P)`.
    CrossEntropy,
}

impl Loss {
    pub fn value(self, p: f64, t: f64) -> f64 {
        let ln = |x: f64| x.max(MIN_PROBABILITY).ln();
        match self {
            Loss::Nll => -t * ln(p),
            Loss::SquaredError => (p - t) * (p - t),
            Loss::CrossEntropy => -t * ln(p) - (1.0 - t) * ln(1.0 - p),
        }
    }

    /// `∂L/∂P`, zero where a clamp is active.
    pub fn derivative(self, p: f64, t: f64) -> f64 {
        let inv = |x: f64| if x >= MIN_PROBABILITY { 1.0 / x } else { 0.0 };
        match self {
            Loss::Nll => -t * inv(p),
            Loss::SquaredError => 2.0 * (p - t),
            Loss::CrossEntropy => -t * inv(p) + (1.0 - t) * inv(1.0 - p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// The most probable answer to the open query is the instance's goal.
    AnswerAccuracy,
    /// The best derivation's neural outputs equal the gold trace.
    ParseAccuracy,
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Metric, String> {
        match s {
            "answer" | "answer_accuracy" => Ok(Metric::AnswerAccuracy),
            "parse" | "parse_accuracy" => Ok(Metric::ParseAccuracy),
            other => Err(format!("unknown metric {other}; expected answer or parse")),
        }
    }
}

/// Adam with the usual defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// One descent step on `grad`; moments live in `params`.
    pub fn step(&self, params: &mut ParamStore, grad: &Gradient) {
        let sizes = params.block_sizes();
        if params.moments.len() != sizes.len() {
            params.moments = sizes.iter().map(|&n| (vec![0.0; n], vec![0.0; n])).collect();
        }
        params.step += 1;
        let t = params.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let mut moments = std::mem::take(&mut params.moments);
        for ((block, (m, v)), g) in params.blocks_mut().into_iter().zip(moments.iter_mut()).zip(&grad.blocks) {
            for i in 0..block.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                block[i] -= self.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + self.epsilon);
            }
        }
        params.moments = moments;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: Loss,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub max_depth: Option<usize>,
    pub max_nodes: Option<usize>,
    /// Evaluate every this many epochs; 0 never.
    pub eval_every: usize,
    pub metric: Option<Metric>,
    pub strategy: Strategy,
    pub strict_goals: bool,
    /// Train on truncated forests instead of failing.
    pub allow_truncated: bool,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            loss: Loss::Nll,
            learning_rate: 0.01,
            batch_size: 1,
            epochs: 10,
            seed: DEFAULT_SEED,
            max_depth: None,
            max_nodes: None,
            eval_every: 0,
            metric: None,
            strategy: Strategy::Slg,
            strict_goals: false,
            allow_truncated: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LearnError::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(LearnError::Config("batch size must be at least 1".into()));
        }
        if self.eval_every > 0 && self.metric.is_none() {
            return Err(LearnError::Config("eval_every needs a metric".into()));
        }
        Ok(())
    }

    pub fn derive_config(&self) -> DeriveConfig {
        DeriveConfig {
            limits: DepthLimits {
                max_depth: self.max_depth,
                max_nodes: self.max_nodes,
            },
            strict_goals: self.strict_goals,
        }
    }
}

/// Builds the forest of each instance's goal over its sequence, in parallel.
pub fn compile(program: &Program, data: &[QueryInstance], cfg: &TrainConfig) -> Result<Vec<DerivationForest>, LearnError> {
    let derive_cfg = cfg.derive_config();
    crate::par::try_map(data, |index, q| {
        let wrap = |source| LearnError::Derive { index, source };
        let goal = Goal::from_term(program, q.goal.clone()).map_err(wrap)?;
        let forest = derive(program, &goal, &q.sequence, cfg.strategy, &derive_cfg).map_err(wrap)?;
        if forest.truncated && !cfg.allow_truncated {
            return Err(LearnError::Truncated { index });
        }
        Ok(forest)
    })
}

/// `P(derives(goal, sequence))` under the current parameters.
pub fn forest_probability(
    program: &Program,
    params: &ParamStore,
    cache: &ForwardCache,
    forest: &DerivationForest,
) -> Result<f64, LearnError> {
    let probs = leaf_values(program, &forest.circuit, params, cache)?;
    Ok(forest.circuit.value::<Prob>(forest.root, &probs)?)
}

pub fn query_probability(
    program: &Program,
    params: &ParamStore,
    features: &FeatureTable,
    instance: &QueryInstance,
    cfg: &TrainConfig,
) -> Result<f64, LearnError> {
    let forest = compile(program, std::slice::from_ref(instance), cfg)?.pop().unwrap();
    let mut cache = ForwardCache::new();
    cache.fill_circuit(params, features, &forest.circuit)?;
    forest_probability(program, params, &cache, &forest)
}

/// Loss of one instance and its gradient over all parameters.
pub fn instance_gradient(
    program: &Program,
    params: &ParamStore,
    features: &FeatureTable,
    cache: &ForwardCache,
    forest: &DerivationForest,
    target: f64,
    loss: Loss,
) -> Result<(f64, f64, Gradient), LearnError> {
    let probs = leaf_values(program, &forest.circuit, params, cache)?;
    let mut grad = Gradient::zeros(params);
    let (p, adjoints) = if loss == Loss::Nll {
        let (log_p, dlog) = forest.circuit.log_leaf_gradients(forest.root, &probs)?;
        let p = log_p.exp();
        let scale = if p >= MIN_PROBABILITY { -target } else { 0.0 };
        (p, dlog.into_iter().map(|g| g * scale).collect::<Vec<_>>())
    } else {
        let (p, dp) = forest.circuit.leaf_gradients(forest.root, &probs)?;
        let scale = loss.derivative(p, target);
        (p, dp.into_iter().map(|g| g * scale).collect())
    };
    accumulate(program, &forest.circuit, params, cache, features, &adjoints, &mut grad)?;
    Ok((loss.value(p, target), p, grad))
}

/// Mean loss over `data` and the summed gradient.
pub fn dataset_gradient(
    program: &Program,
    params: &ParamStore,
    features: &FeatureTable,
    forests: &[DerivationForest],
    data: &[QueryInstance],
    loss: Loss,
) -> Result<(f64, Gradient), LearnError> {
    let mut cache = ForwardCache::new();
    cache.fill(params, features, forests.iter().flat_map(|f| f.circuit.calls()))?;
    let mut total = 0.0;
    let mut grad = Gradient::zeros(params);
    for (f, q) in forests.iter().zip(data) {
        let (l, _, g) = instance_gradient(program, params, features, &cache, f, q.target, loss)?;
        total += l;
        grad.add(&g);
    }
    Ok((total / data.len().max(1) as f64, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,metric\n");
        for r in &self.epochs {
            let metric = r.metric.map(|m| m.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", r.epoch, r.loss, metric));
        }
        out
    }
}

/// Mini-batch descent on the summed batch loss. Forests are built once;
/// each step re-runs the neural calls of its batch.
pub fn train(
    program: &Program,
    params: &mut ParamStore,
    features: &FeatureTable,
    data: &[QueryInstance],
    eval_data: Option<&[QueryInstance]>,
    cfg: &TrainConfig,
) -> Result<History, LearnError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(LearnError::Config("no training instances".into()));
    }
    let mut history = History::default();
    if cfg.epochs == 0 {
        return Ok(history);
    }
    for name in program.neural_models() {
        params.models.get(name)?;
    }
    let forests = compile(program, data, cfg)?;
    let adam = Adam::new(cfg.learning_rate);
    // Epochs are numbered from the restored step count, and each epoch's
    // order depends only on the seed and its number, so a resumed run
    // replays an uninterrupted one.
    let batches = data.len().div_ceil(cfg.batch_size) as u64;
    if !params.step.is_multiple_of(batches) {
        log::warn!("resuming mid-epoch: step {} is not a multiple of {batches} batches", params.step);
    }
    let first = (params.step / batches) as usize;
    let mut cache = ForwardCache::new();
    for epoch in first + 1..=first + cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut epoch_rng(cfg.seed, epoch));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            cache.fill(params, features, batch.iter().flat_map(|&i| forests[i].circuit.calls()))?;
            let parts = crate::par::try_map(batch, |_, &i| {
                instance_gradient(program, params, features, &cache, &forests[i], data[i].target, cfg.loss).map(|r| (i, r))
            })?;
            let mut grad = Gradient::zeros(params);
            for (i, (loss, p, g)) in parts {
                if !loss.is_finite() {
                    return Err(LearnError::NonFinite { index: i, loss });
                }
                if p < MIN_PROBABILITY && cfg.loss != Loss::SquaredError {
                    log::warn!("instance {i} has probability {p:e}; its loss is clamped");
                }
                epoch_loss += loss;
                grad.add(&g);
            }
            adam.step(params, &grad);
        }
        let metric = match (cfg.metric, cfg.eval_every) {
            (Some(metric), every) if every > 0 && epoch % every == 0 => {
                Some(evaluate(program, params, features, eval_data.unwrap_or(data), metric, cfg)?)
            }
            _ => None,
        };
        history.epochs.push(EpochRecord {
            epoch,
            loss: epoch_loss / data.len() as f64,
            metric,
        });
    }
    Ok(history)
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// Outputs of the input-consuming neural calls along a derivation trace.
pub fn neural_outputs(program: &Program, forest: &DerivationForest, trace: &[crate::circuit::LeafId]) -> Vec<Term> {
    let decls: Vec<_> = program.rules.iter().filter_map(|r| r.neural()).collect();
    trace
        .iter()
        .filter_map(|&l| match forest.circuit.leaf(l) {
            Leaf::Neural { call, output } => {
                let call = forest.circuit.call(call);
                if call.inputs.is_empty() {
                    return None;
                }
                let decl = decls.iter().find(|d| d.model == call.model)?;
                let mut tuple = program.output_tuple(decl, output as usize);
                Some(if tuple.len() == 1 { tuple.pop().unwrap() } else { Term::list(tuple) })
            }
            _ => None,
        })
        .collect()
}

/// Mean of `metric` over `data`.
pub fn evaluate(
    program: &Program,
    params: &ParamStore,
    features: &FeatureTable,
    data: &[QueryInstance],
    metric: Metric,
    cfg: &TrainConfig,
) -> Result<f64, LearnError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let derive_cfg = cfg.derive_config();
    let hits = crate::par::try_map(data, |index, q| -> Result<bool, LearnError> {
        let wrap = |source| LearnError::Derive { index, source };
        let goal_term = match metric {
            Metric::AnswerAccuracy => q.open_query(),
            Metric::ParseAccuracy => q.goal.clone(),
        };
        let goal = Goal::from_term(program, goal_term).map_err(wrap)?;
        let forest = derive(program, &goal, &q.sequence, cfg.strategy, &derive_cfg).map_err(wrap)?;
        let mut cache = ForwardCache::new();
        cache.fill_circuit(params, features, &forest.circuit)?;
        let probs = leaf_values(program, &forest.circuit, params, &cache)?;
        match metric {
            Metric::AnswerAccuracy => {
                let values = forest.answer_values(&probs).map_err(wrap)?;
                let best = values
                    .iter()
                    .enumerate()
                    .fold(None::<(usize, f64)>, |acc, (i, &v)| match acc {
                        Some((_, b)) if b >= v => acc,
                        _ => Some((i, v)),
                    });
                Ok(best.is_some_and(|(i, v)| v > 0.0 && is_variant(&forest.answers[i].goal, &q.goal)))
            }
            Metric::ParseAccuracy => {
                let gold = q.gold.as_ref().ok_or(LearnError::MissingGold { index })?;
                if forest.root == crate::circuit::NodeId::ZERO {
                    return Ok(false);
                }
                let best = forest.circuit.most_probable_derivation(forest.root, &probs)?;
                Ok(neural_outputs(program, &forest, &best.trace) == *gold)
            }
        }
    })?;
    Ok(hits.iter().filter(|h| **h).count() as f64 / data.len() as f64)
}

/// Most probable output tuple of `model` on `inputs`, read off the model
/// directly rather than through a derivation.
pub fn classify(program: &Program, params: &ParamStore, features: &FeatureTable, model: Symbol, inputs: &[Term]) -> Result<Vec<Term>, LearnError> {
    let decl = program
        .rules
        .iter()
        .filter_map(|r| r.neural())
        .find(|d| d.model == model)
        .ok_or_else(|| ModelError::UnknownModel(model.to_string()))?;
    let p = params.models.get(model)?.forward(inputs, features)?;
    let best = p
        .iter()
        .enumerate()
        .fold(0, |best, (i, x)| if *x > p[best] { i } else { best });
    Ok(program.output_tuple(decl, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{FixedTable, ModelRegistry, SoftmaxTable};
    use crate::program::parse_program;
    use crate::terms::Symbol;
    use std::collections::BTreeMap;

    const DIGIT_SUMS: &str = "
0.5 :: e(N) --> n(N).
0.5 :: e(N) --> e(N1), [+], n(N2), {N is N1 + N2}.
0.1 :: n(0) --> [0].  0.1 :: n(1) --> [1].  0.1 :: n(2) --> [2].  0.1 :: n(3) --> [3].
0.1 :: n(4) --> [4].  0.1 :: n(5) --> [5].  0.1 :: n(6) --> [6].  0.1 :: n(7) --> [7].
0.1 :: n(8) --> [8].  0.1 :: n(9) --> [9].
";

    fn instance(goal: &str, seq: &[&str], target: f64) -> QueryInstance {
        QueryInstance::new(parse_term(goal).unwrap(), seq.iter().map(|s| token_term(s)).collect(), target)
    }

    #[test]
    fn query_probabilities() {
        let p = parse_program(DIGIT_SUMS).unwrap();
        let s = ParamStore::new(&p, ModelRegistry::new());
        let cfg = TrainConfig::default();
        let f = FeatureTable::empty();
        let v = |g, seq: &[&str]| query_probability(&p, &s, &f, &instance(g, seq, 1.0), &cfg).unwrap();
        assert!((v("e(2)", &["2"]) - 0.05).abs() < 1e-15);
        assert!((v("e(2)", &["2", "+", "0"]) - 0.0025).abs() < 1e-15);
        assert_eq!(v("e(5)", &["2"]), 0.0);
    }

    #[test]
    fn dataset_round_trip() {
        let text = r#"{"goal": "addition(8)", "sequence": ["tok:3", "+", "tok:5"], "target": 1.0}
# comment

{"goal": "s(1)", "sequence": [1, "b"], "gold": ["a", 2], "query": "s(X)"}
"#;
        let data = read_dataset(text).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data[0].sequence[0], Term::atom("tok:3"));
        assert_eq!(data[1].sequence[0], Term::int(1));
        assert_eq!(data[1].gold.as_ref().unwrap()[1], Term::int(2));
        assert_eq!(read_dataset(&write_dataset(&data)).unwrap(), data);
        assert_eq!(data[0].open_query().to_string(), "addition(Answer)");
        let err = read_dataset("{\"goal\": \"a\", \"sequence\": [], \"target\": 2}").unwrap_err();
        assert!(matches!(err, LearnError::Dataset { line: 1, .. }));
    }

    #[test]
    fn losses_and_derivatives() {
        for loss in [Loss::Nll, Loss::SquaredError, Loss::CrossEntropy] {
            for (p, t) in [(0.3, 1.0), (0.6, 0.2), (0.9, 0.9)] {
                let h = 1e-7;
                let numeric = (loss.value(p + h, t) - loss.value(p - h, t)) / (2.0 * h);
                assert!((numeric - loss.derivative(p, t)).abs() < 1e-6, "{loss:?}");
            }
        }
        assert!((Loss::Nll.value(0.0, 1.0) - 30.0 * 10f64.ln()).abs() < 1e-9);
        assert_eq!(Loss::Nll.derivative(0.0, 1.0), 0.0);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let p = parse_program("t(_) :: a --> [x].\nt(_) :: a --> [y].").unwrap();
        let mut s = ParamStore::new(&p, ModelRegistry::new());
        let before = s.groups[0].logits.clone();
        let grad = Gradient {
            blocks: vec![vec![1.0, -2.0]],
        };
        Adam::new(0.1).step(&mut s, &grad);
        assert!((s.groups[0].logits[0] - (before[0] - 0.1)).abs() < 1e-9);
        assert!((s.groups[0].logits[1] - (before[1] + 0.1)).abs() < 1e-9);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn zero_epochs_leave_parameters() {
        let p = parse_program("t(_) :: a --> [x].\nt(_) :: a --> [y].").unwrap();
        let mut s = ParamStore::new(&p, ModelRegistry::new());
        let before = s.to_checkpoint();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let h = train(&p, &mut s, &FeatureTable::empty(), &[instance("a", &["x"], 1.0)], None, &cfg).unwrap();
        assert!(h.epochs.is_empty());
        assert_eq!(s.to_checkpoint(), before);
    }

    #[test]
    fn rule_weights_learn_frequencies() {
        let p = parse_program("t(_) :: a --> [x].\nt(_) :: a --> [y].").unwrap();
        let mut s = ParamStore::new(&p, ModelRegistry::new());
        let mut data = vec![instance("a", &["x"], 1.0); 3];
        data.push(instance("a", &["y"], 1.0));
        let cfg = TrainConfig {
            epochs: 300,
            batch_size: 4,
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        let h = train(&p, &mut s, &FeatureTable::empty(), &data, None, &cfg).unwrap();
        let probs = s.groups[0].probabilities();
        assert!((probs[0] - 0.75).abs() < 1e-3, "{probs:?}");
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(h.epochs.last().unwrap().loss < h.epochs[0].loss);
    }

    #[test]
    fn resumed_training_replays_an_uninterrupted_run() {
        let p = parse_program("t(_) :: a --> [x].\nt(_) :: a --> [y].\nt(_) :: a --> [z].").unwrap();
        let data: Vec<_> = ["x", "y", "x", "z", "x"].iter().map(|t| instance("a", &[t], 1.0)).collect();
        let cfg = |epochs| TrainConfig {
            epochs,
            batch_size: 2,
            learning_rate: 0.1,
            seed: 9,
            ..TrainConfig::default()
        };
        let mut whole = ParamStore::new(&p, ModelRegistry::new());
        let h = train(&p, &mut whole, &FeatureTable::empty(), &data, None, &cfg(4)).unwrap();
        let mut first = ParamStore::new(&p, ModelRegistry::new());
        train(&p, &mut first, &FeatureTable::empty(), &data, None, &cfg(2)).unwrap();
        let mut resumed = ParamStore::new(&p, ModelRegistry::new());
        resumed.load_checkpoint(&first.to_checkpoint()).unwrap();
        let tail = train(&p, &mut resumed, &FeatureTable::empty(), &data, None, &cfg(2)).unwrap();
        assert_eq!(resumed.to_checkpoint(), whole.to_checkpoint());
        assert_eq!(tail.epochs.iter().map(|r| r.epoch).collect::<Vec<_>>(), [3, 4]);
        assert_eq!(tail.epochs[1].loss, h.epochs[3].loss);
    }

    #[test]
    fn stationary_at_the_target() {
        let p = parse_program("digit(D) :- member(D, [0, 1]).\nnn(m, [X], [D], [digit]) :: a(D) --> [X].").unwrap();
        let mut reg = ModelRegistry::new();
        let rows = BTreeMap::from([("img".to_owned(), vec![0.3, 0.7])]);
        reg.register(Symbol::intern("m"), Box::new(FixedTable::new("m", 2, rows, None).unwrap()));
        let s = ParamStore::new(&p, reg);
        let data = [instance("a(1)", &["img"], 0.7)];
        let cfg = TrainConfig::default();
        let forests = compile(&p, &data, &cfg).unwrap();
        let (loss, grad) = dataset_gradient(&p, &s, &FeatureTable::empty(), &forests, &data, Loss::SquaredError).unwrap();
        assert!(loss < 1e-24);
        assert!(grad.norm() < 1e-8);
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let p = parse_program(
            "digit(D) :- member(D, [0, 1, 2]).
             t(_) :: e(N) --> n(N).
             t(_) :: e(N) --> e(N1), [+], n(N2), {N is N1 + N2}.
             nn(m, [X], [D], [digit]) :: n(D) --> [X].",
        )
        .unwrap();
        let mut reg = ModelRegistry::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let keys = vec!["a".to_owned(), "b".to_owned()];
        reg.register(Symbol::intern("m"), Box::new(SoftmaxTable::new(3, keys, &mut rng)));
        let mut s = ParamStore::new(&p, reg);
        for block in s.blocks_mut() {
            for (i, x) in block.iter_mut().enumerate() {
                *x += 0.3 * ((i as f64) * 1.7).sin();
            }
        }
        let data = [instance("e(2)", &["a", "+", "b"], 1.0), instance("e(1)", &["b"], 1.0), instance("e(3)", &["a", "+", "a", "+", "b"], 0.6)];
        let f = FeatureTable::empty();
        for loss in [Loss::Nll, Loss::SquaredError, Loss::CrossEntropy] {
            let cfg = TrainConfig::default();
            let forests = compile(&p, &data, &cfg).unwrap();
            let (_, grad) = dataset_gradient(&p, &s, &f, &forests, &data, loss).unwrap();
            let analytic = grad.flat();
            let sizes = s.block_sizes();
            let mut k = 0;
            for (b, &n) in sizes.iter().enumerate() {
                for i in 0..n {
                    let h = 1e-5;
                    let orig = s.blocks()[b][i];
                    s.blocks_mut()[b][i] = orig + h;
                    let up = dataset_gradient(&p, &s, &f, &forests, &data, loss).unwrap().0;
                    s.blocks_mut()[b][i] = orig - h;
                    let down = dataset_gradient(&p, &s, &f, &forests, &data, loss).unwrap().0;
                    s.blocks_mut()[b][i] = orig;
                    let numeric = (up - down) / (2.0 * h) * data.len() as f64;
                    let scale = numeric.abs().max(analytic[k].abs());
                    assert!((numeric - analytic[k]).abs() <= 1e-4 * scale + 1e-9, "{loss:?} block {b} param {i}: {numeric} vs {}", analytic[k]);
                    k += 1;
                }
            }
        }
    }

    #[test]
    fn stale_cache_is_detected() {
        let p = parse_program("t(_) :: a --> [x].\nt(_) :: a --> [y].").unwrap();
        let mut s = ParamStore::new(&p, ModelRegistry::new());
        let cache = {
            let mut c = ForwardCache::new();
            c.fill(&s, &FeatureTable::empty(), std::iter::empty()).unwrap();
            c
        };
        s.blocks_mut();
        let call = crate::circuit::NeuralCall {
            model: Symbol::intern("m"),
            inputs: vec![],
        };
        assert_eq!(cache.get(&s, &call), Err(ModelError::StaleCache));
    }
}
