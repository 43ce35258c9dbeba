use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ontology::{fnv1a64, DialogState, Ontology};
use crate::corpus::{acts_to_tokens, ActWordMap, Dialog, Vocab};
use crate::encoder::{
    combine_turn, encode_timestep, GruParams, GruVars, Pooling, TurnCombinerParams,
};
use crate::error::{Error, Result};
use crate::numerics::gradcheck::grad_check_with_tape;
use crate::numerics::{
    seeded_rng, sigmoid, softmax, Fault, GradCheckReport, ParamKind, ParamStore, Tape, Tensor, Var,
};

/// Layer sizes and pooling of a tracker network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub dense_units: usize,
    pub gru_units: usize,
    pub combine_dim: usize,
    pub pooling: Pooling,
}

impl Default for ModelConfig {
    /// Small dimensions suited to the synthetic corpus.
    fn default() -> Self {
        Self {
            embedding_dim: 32,
            dense_units: 64,
            gru_units: 32,
            combine_dim: 16,
            pooling: Pooling::WEIGHTED,
        }
    }
}

impl ModelConfig {
    /// Full-size dimensions: 300-d embeddings, 300 dense units, 100 GRU
    /// units and a 50-d turn vector.
    pub fn full_size() -> Self {
        Self {
            embedding_dim: 300,
            dense_units: 300,
            gru_units: 100,
            combine_dim: 50,
            pooling: Pooling::WEIGHTED,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [
            self.embedding_dim,
            self.dense_units,
            self.gru_units,
            self.combine_dim,
        ]
        .contains(&0)
        {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// An output head: a softmax over one goal slot's labels, or the block of
/// independent sigmoid outputs for all requestable slots.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Goal(String),
    Requests,
}

impl Head {
    pub fn name(&self) -> &str {
        match self {
            Head::Goal(slot) => slot,
            Head::Requests => "requests",
        }
    }
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Every head of `ontology`: goal slots in order, then requests.
pub fn all_heads(ontology: &Ontology) -> Vec<Head> {
    let mut heads: Vec<Head> = ontology
        .goal_slots()
        .map(|s| Head::Goal(s.to_string()))
        .collect();
    if !ontology.requestable_slots().is_empty() {
        heads.push(Head::Requests);
    }
    heads
}

/// One single-head group per goal slot plus one for requests; each group is
/// trained as its own model.
pub fn head_groups(ontology: &Ontology) -> Vec<Vec<Head>> {
    all_heads(ontology).into_iter().map(|h| vec![h]).collect()
}

pub fn group_name(heads: &[Head]) -> String {
    heads.iter().map(Head::name).collect::<Vec<_>>().join("+")
}

/// Which rendering of the user utterance feeds the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum UserView {
    /// The manual transcript as a degenerate network.
    Transcript,
    /// The confusion network as stored.
    Cnet,
    /// The top hypothesis sequence of the network, `!null` skipped.
    OneBest,
}

impl UserView {
    pub fn as_str(self) -> &'static str {
        match self {
            UserView::Transcript => "transcript",
            UserView::Cnet => "cnet",
            UserView::OneBest => "one-best",
        }
    }
}

/// A dialog reduced to vocabulary indices: system act tokens and scored
/// user timesteps per turn.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedDialog {
    pub turns: Vec<EncodedTurn>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedTurn {
    pub system: Vec<usize>,
    pub user: Vec<Vec<(usize, f64)>>,
}

pub fn encode_dialog(
    dialog: &Dialog,
    view: UserView,
    vocab: &Vocab,
    map: &ActWordMap,
) -> EncodedDialog {
    let certain = |words: &[String]| words.iter().map(|w| vec![(vocab.index(w), 1.0)]).collect();
    let turns = dialog
        .turns
        .iter()
        .map(|t| EncodedTurn {
            system: acts_to_tokens(&t.system_acts, map)
                .iter()
                .map(|w| vocab.index(w))
                .collect(),
            user: match view {
                UserView::Transcript => certain(&t.transcript),
                UserView::OneBest => certain(&t.cnet.one_best()),
                UserView::Cnet => t
                    .cnet
                    .timesteps()
                    .iter()
                    .map(|s| {
                        s.hypotheses()
                            .iter()
                            .map(|h| (vocab.index(h.token()), h.probability()))
                            .collect()
                    })
                    .collect(),
            },
        })
        .collect();
    EncodedDialog { turns }
}

/// Head outputs after one turn and the decisions drawn from them.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TurnPrediction {
    /// Distribution over each goal slot's output space.
    pub goals: BTreeMap<String, Vec<f64>>,
    /// Probability that each requestable slot is requested.
    pub requests: BTreeMap<String, f64>,
    pub state: DialogState,
}

pub const REQUEST_THRESHOLD: f64 = 0.5;

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl TurnPrediction {
    /// Argmax goal labels (earliest label on ties) and requests with
    /// probability above one half.
    pub fn from_probabilities(
        goals: BTreeMap<String, Vec<f64>>,
        requests: BTreeMap<String, f64>,
        ontology: &Ontology,
    ) -> Result<Self> {
        let mut state = DialogState::default();
        for (slot, probs) in &goals {
            if ontology.output_size(slot) != Some(probs.len()) {
                return Err(Error::structural(format!(
                    "{} probabilities for goal slot {slot}",
                    probs.len()
                )));
            }
            let label = ontology
                .label_at(slot, argmax(probs))
                .expect("index within output space");
            state.goals.insert(slot.clone(), label.to_string());
        }
        state.requests = requests
            .iter()
            .filter(|(_, &p)| p > REQUEST_THRESHOLD)
            .map(|(r, _)| r.clone())
            .collect();
        Ok(Self {
            goals,
            requests,
            state: state.normalized(),
        })
    }

    /// Joins predictions of models with disjoint heads.
    pub fn merge(parts: &[TurnPrediction], ontology: &Ontology) -> Result<Self> {
        let mut goals = BTreeMap::new();
        let mut requests = BTreeMap::new();
        for p in parts {
            for (k, v) in &p.goals {
                if goals.insert(k.clone(), v.clone()).is_some() {
                    return Err(Error::structural(format!("goal slot {k} predicted twice")));
                }
            }
            for (k, v) in &p.requests {
                if requests.insert(k.clone(), *v).is_some() {
                    return Err(Error::structural(format!("request {k} predicted twice")));
                }
            }
        }
        Self::from_probabilities(goals, requests, ontology)
    }
}

pub(crate) struct DropoutCtx<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

enum Target {
    Class(usize),
    Binary(Vec<f64>),
}

// Store layout.
const EMBEDDING: usize = 0;
const DENSE_W: usize = 1;
const DENSE_B: usize = 2;
const GRU: usize = 3;
const COMBINE_WS: usize = 12;
const COMBINE_WU: usize = 13;
const COMBINE_B: usize = 14;
const HEADS: usize = 15;

/// Embedding → dense ReLU → confusion-network GRU over the whole dialog →
/// turn combiner → output heads.
#[derive(Clone, Debug, PartialEq)]
pub struct DstModel {
    config: ModelConfig,
    vocab: Vocab,
    ontology: Ontology,
    heads: Vec<Head>,
    params: ParamStore,
}

fn head_size(ontology: &Ontology, head: &Head) -> Result<usize> {
    match head {
        Head::Goal(slot) => ontology
            .output_size(slot)
            .ok_or_else(|| Error::Config(format!("head for unknown goal slot {slot}"))),
        Head::Requests => Ok(ontology.requestable_slots().len()),
    }
}

impl DstModel {
    /// Randomly initialised model: Glorot-uniform matrices and embeddings,
    /// zero biases. The stream depends on the head set, so groups trained
    /// with one seed start from different points.
    pub fn new(
        config: ModelConfig,
        vocab: Vocab,
        ontology: Ontology,
        heads: Vec<Head>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if heads.is_empty() {
            return Err(Error::Config("model needs at least one head".into()));
        }
        let mut rng = seeded_rng(seed, init_stream(&heads));
        let (e, d, g, c) = (
            config.embedding_dim,
            config.dense_units,
            config.gru_units,
            config.combine_dim,
        );
        let mut params = ParamStore::new();
        params.push(
            "embedding",
            ParamKind::Embedding,
            Tensor::glorot_uniform(vocab.len(), e, &mut rng),
        );
        params.push(
            "dense.w",
            ParamKind::Weight,
            Tensor::glorot_uniform(d, e, &mut rng),
        );
        params.push("dense.b", ParamKind::Bias, Tensor::zeros(&[d]));
        GruParams::random(d, g, &mut rng).push_into(&mut params, "gru");
        let comb = TurnCombinerParams::random(g, c, &mut rng);
        params.push("combine.w_s", ParamKind::Weight, comb.w_s);
        params.push("combine.w_u", ParamKind::Weight, comb.w_u);
        params.push("combine.b", ParamKind::Bias, comb.b);
        for head in &heads {
            let n = head_size(&ontology, head)?;
            params.push(
                format!("head.{head}.w"),
                ParamKind::Weight,
                Tensor::glorot_uniform(n, c, &mut rng),
            );
            params.push(
                format!("head.{head}.b"),
                ParamKind::Bias,
                Tensor::zeros(&[n]),
            );
        }
        Self::from_parts(config, vocab, ontology, heads, params)
    }

    /// Assembles a model from stored parameters, checking names, kinds,
    /// shapes and finiteness.
    pub fn from_parts(
        config: ModelConfig,
        vocab: Vocab,
        ontology: Ontology,
        heads: Vec<Head>,
        params: ParamStore,
    ) -> Result<Self> {
        config.validate()?;
        let expected = expected_layout(&config, vocab.len(), &ontology, &heads)?;
        if params.len() != expected.len() {
            return Err(Error::structural(format!(
                "model has {} parameter tensors, expected {}",
                params.len(),
                expected.len()
            )));
        }
        for (p, (name, kind, shape)) in params.iter().zip(&expected) {
            if &p.name != name || p.kind != *kind || p.value.shape() != shape.as_slice() {
                return Err(Error::structural(format!(
                    "parameter {} ({}, {:?}) does not match expected {name} ({}, {shape:?})",
                    p.name,
                    p.kind.as_str(),
                    p.value.shape(),
                    kind.as_str()
                )));
            }
            if !p.value.is_finite() {
                return Err(Error::structural(format!(
                    "parameter {} is not finite",
                    p.name
                )));
            }
        }
        Ok(Self {
            config,
            vocab,
            ontology,
            heads,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    pub fn heads(&self) -> &[Head] {
        &self.heads
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Replaces the embedding table; the shape must match.
    pub fn set_embeddings(&mut self, table: &Tensor) -> Result<()> {
        let current = &mut self.params.get_mut(EMBEDDING).value;
        if current.shape() != table.shape() {
            return Err(Error::structural(format!(
                "embedding table {:?} does not match model shape {:?}",
                table.shape(),
                current.shape()
            )));
        }
        if !table.is_finite() {
            return Err(Error::structural("embedding table is not finite"));
        }
        *current = table.clone();
        Ok(())
    }

    pub fn group_name(&self) -> String {
        group_name(&self.heads)
    }

    pub fn gru_params(&self) -> GruParams {
        GruParams::from_store(&self.params, GRU).expect("layout checked at construction")
    }

    /// Same configuration, heads, vocabulary and ontology, so outputs can
    /// be averaged.
    pub fn same_architecture(&self, other: &DstModel) -> bool {
        self.config == other.config
            && self.heads == other.heads
            && self.vocab == other.vocab
            && self.ontology == other.ontology
    }

    pub fn encode(&self, dialog: &Dialog, view: UserView, map: &ActWordMap) -> EncodedDialog {
        encode_dialog(dialog, view, &self.vocab, map)
    }

    /// GRU inputs `relu(W_d · embedding(token) + b_d)` for each token,
    /// without dropout. Unknown tokens use the unknown-word row.
    pub fn embed_and_project(&self, tokens: &[&str]) -> Vec<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let mut cache = HashMap::new();
        tokens
            .iter()
            .map(|t| {
                let x = project(&mut tape, &vars, self.vocab.index(t), &mut cache, &mut None)
                    .expect("no dropout, no failure");
                tape.value(x).to_vec()
            })
            .collect()
    }

    /// Per-turn logits of every head, built on `tape` from parameter leaves
    /// `vars` (store order).
    pub(crate) fn forward_tape(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        dialog: &EncodedDialog,
        mut dropout: Option<DropoutCtx<'_>>,
    ) -> Result<Vec<Vec<Var>>> {
        if dialog.turns.is_empty() {
            return Err(Error::structural("dialog has no turns"));
        }
        let gru = GruVars::from_slice(
            &vars[GRU..GRU + 9],
            self.config.dense_units,
            self.config.gru_units,
        );
        let mut cache = HashMap::new();
        let mut h = tape.constant(&vec![0.0; self.config.gru_units]);
        let mut out = Vec::with_capacity(dialog.turns.len());
        for turn in &dialog.turns {
            for &tok in &turn.system {
                let x = project(tape, vars, tok, &mut cache, &mut dropout)?;
                h = encode_timestep(tape, &[(x, 1.0)], h, &gru, Pooling::AVERAGE)?;
            }
            let s = h;
            for step in &turn.user {
                let hyps = step
                    .iter()
                    .map(|&(tok, p)| Ok((project(tape, vars, tok, &mut cache, &mut dropout)?, p)))
                    .collect::<Result<Vec<_>>>()?;
                h = encode_timestep(tape, &hyps, h, &gru, self.config.pooling)?;
            }
            let c = combine_turn(
                tape,
                s,
                h,
                vars[COMBINE_WS],
                vars[COMBINE_WU],
                vars[COMBINE_B],
            )?;
            let logits = (0..self.heads.len())
                .map(|k| {
                    let l = tape.matvec(vars[HEADS + 2 * k], c);
                    tape.add(l, vars[HEADS + 2 * k + 1])
                })
                .collect();
            out.push(logits);
        }
        Ok(out)
    }

    pub fn predict_encoded(&self, dialog: &EncodedDialog) -> Result<Vec<TurnPrediction>> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let logits = self.forward_tape(&mut tape, &vars, dialog, None)?;
        logits
            .iter()
            .map(|turn| {
                let mut goals = BTreeMap::new();
                let mut requests = BTreeMap::new();
                for (head, &l) in self.heads.iter().zip(turn) {
                    let values = tape.value(l);
                    match head {
                        Head::Goal(slot) => {
                            goals.insert(slot.clone(), softmax(values));
                        }
                        Head::Requests => {
                            for (r, &x) in self.ontology.requestable_slots().iter().zip(values) {
                                requests.insert(r.clone(), sigmoid(x));
                            }
                        }
                    }
                }
                TurnPrediction::from_probabilities(goals, requests, &self.ontology)
            })
            .collect()
    }

    /// One prediction per turn, made after the user utterance.
    pub fn forward_dialog(
        &self,
        dialog: &Dialog,
        view: UserView,
        map: &ActWordMap,
    ) -> Result<Vec<TurnPrediction>> {
        self.predict_encoded(&self.encode(dialog, view, map))
    }

    fn targets(&self, gold: &[DialogState]) -> Result<Vec<Vec<Target>>> {
        gold.iter()
            .map(|state| {
                self.heads
                    .iter()
                    .map(|head| match head {
                        Head::Goal(slot) => {
                            let label = state.goal(slot);
                            self.ontology
                                .label_index(slot, label)
                                .map(Target::Class)
                                .ok_or_else(|| {
                                    Error::data(
                                        "gold state",
                                        format!("{label:?} is not a label of slot {slot}"),
                                    )
                                })
                        }
                        Head::Requests => Ok(Target::Binary(
                            self.ontology
                                .requestable_slots()
                                .iter()
                                .map(|r| if state.requests.contains(r) { 1.0 } else { 0.0 })
                                .collect(),
                        )),
                    })
                    .collect()
            })
            .collect()
    }

    /// Summed cross-entropy of every head over every turn, without the L2
    /// term.
    pub(crate) fn data_loss_tape(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        dialog: &EncodedDialog,
        gold: &[DialogState],
        dropout: Option<DropoutCtx<'_>>,
    ) -> Result<Var> {
        if gold.len() != dialog.turns.len() {
            return Err(Error::structural(format!(
                "{} gold states for {} turns",
                gold.len(),
                dialog.turns.len()
            )));
        }
        let targets = self.targets(gold)?;
        let logits = self.forward_tape(tape, vars, dialog, dropout)?;
        let mut terms = Vec::new();
        for (turn, targets) in logits.iter().zip(&targets) {
            for (&l, target) in turn.iter().zip(targets) {
                terms.push(match target {
                    Target::Class(gold) => {
                        let p = tape.softmax(l);
                        tape.cross_entropy(p, *gold)?
                    }
                    Target::Binary(t) => tape.bce_with_logits(l, t),
                });
            }
        }
        Ok(tape.sum(&terms))
    }

    /// Parameter leaves subject to L2, in store order.
    pub(crate) fn weight_vars(&self, vars: &[Var]) -> Vec<Var> {
        self.params
            .iter()
            .zip(vars)
            .filter(|(p, _)| p.kind == ParamKind::Weight)
            .map(|(_, &v)| v)
            .collect()
    }

    /// Cross-entropy over goal heads plus binary cross-entropy over request
    /// outputs, summed over turns, plus `lambda · Σ‖W‖²`.
    pub fn dialog_loss(
        &self,
        dialog: &EncodedDialog,
        gold: &[DialogState],
        lambda: f64,
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let data = self.data_loss_tape(&mut tape, &vars, dialog, gold, None)?;
        let weights = self.weight_vars(&vars);
        let l2 = tape.l2_penalty(&weights, lambda);
        let total = tape.add(data, l2);
        Ok(tape.scalar(total))
    }

    /// Finite-difference check of the full loss gradient, dropout included
    /// with a mask that is redrawn identically on every evaluation.
    pub fn grad_check(
        &self,
        dialog: &EncodedDialog,
        gold: &[DialogState],
        lambda: f64,
        dropout: f64,
        step: f64,
    ) -> Result<GradCheckReport> {
        self.grad_check_with_fault(dialog, gold, lambda, dropout, step, None)
    }

    /// As [`DstModel::grad_check`], optionally with a deliberately broken
    /// backward rule so the checker can be shown to fail.
    pub fn grad_check_with_fault(
        &self,
        dialog: &EncodedDialog,
        gold: &[DialogState],
        lambda: f64,
        dropout: f64,
        step: f64,
        fault: Option<Fault>,
    ) -> Result<GradCheckReport> {
        grad_check_with_tape(
            || Tape::with_fault(fault),
            |tape, vars| self.loss_for_check(tape, vars, dialog, gold, lambda, dropout),
            &self.params,
            step,
        )
    }

    pub(crate) fn loss_for_check(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        dialog: &EncodedDialog,
        gold: &[DialogState],
        lambda: f64,
        dropout: f64,
    ) -> Result<Var> {
        let mut rng = seeded_rng(0, 0);
        let ctx = (dropout > 0.0).then_some(DropoutCtx {
            rate: dropout,
            rng: &mut rng,
        });
        let data = self.data_loss_tape(tape, vars, dialog, gold, ctx)?;
        let weights = self.weight_vars(vars);
        let l2 = tape.l2_penalty(&weights, lambda);
        Ok(tape.add(data, l2))
    }
}

pub(crate) fn init_stream(heads: &[Head]) -> u64 {
    fnv1a64(group_name(heads).as_bytes())
}

pub(crate) fn expected_layout(
    config: &ModelConfig,
    vocab_len: usize,
    ontology: &Ontology,
    heads: &[Head],
) -> Result<Vec<(String, ParamKind, Vec<usize>)>> {
    let (e, d, g, c) = (
        config.embedding_dim,
        config.dense_units,
        config.gru_units,
        config.combine_dim,
    );
    let mut out = vec![
        (
            "embedding".to_string(),
            ParamKind::Embedding,
            vec![vocab_len, e],
        ),
        ("dense.w".into(), ParamKind::Weight, vec![d, e]),
        ("dense.b".into(), ParamKind::Bias, vec![d]),
    ];
    for name in crate::encoder::GRU_PARAM_NAMES {
        let (kind, shape) = match name.as_bytes()[0] {
            b'w' => (ParamKind::Weight, vec![g, d]),
            b'u' => (ParamKind::Weight, vec![g, g]),
            _ => (ParamKind::Bias, vec![g]),
        };
        out.push((format!("gru.{name}"), kind, shape));
    }
    out.push(("combine.w_s".into(), ParamKind::Weight, vec![c, g]));
    out.push(("combine.w_u".into(), ParamKind::Weight, vec![c, g]));
    out.push(("combine.b".into(), ParamKind::Bias, vec![c]));
    let mut seen = std::collections::BTreeSet::new();
    for head in heads {
        if !seen.insert(head) {
            return Err(Error::Config(format!("head {head} listed twice")));
        }
        let n = head_size(ontology, head)?;
        if n == 0 {
            return Err(Error::Config(format!("head {head} has no outputs")));
        }
        out.push((format!("head.{head}.w"), ParamKind::Weight, vec![n, c]));
        out.push((format!("head.{head}.b"), ParamKind::Bias, vec![n]));
    }
    Ok(out)
}

fn project(
    tape: &mut Tape,
    vars: &[Var],
    token: usize,
    cache: &mut HashMap<usize, Var>,
    dropout: &mut Option<DropoutCtx<'_>>,
) -> Result<Var> {
    if dropout.is_none() {
        if let Some(&x) = cache.get(&token) {
            return Ok(x);
        }
    }
    let e = tape.row(vars[EMBEDDING], token);
    let pre = tape.matvec(vars[DENSE_W], e);
    let pre = tape.add(pre, vars[DENSE_B]);
    let x = tape.relu(pre);
    match dropout {
        Some(ctx) => tape.dropout(x, ctx.rate, &mut *ctx.rng, true),
        None => {
            cache.insert(token, x);
            Ok(x)
        }
    }
}
