use std::collections::BTreeMap;

use log::debug;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{
    group_name, head_groups, init_stream, DropoutCtx, DstModel, EncodedDialog, ModelConfig,
    UserView,
};
use super::ontology::{DialogState, Ontology};
use super::tracker::Tracker;
use crate::corpus::{ActWordMap, Dialog, Vocab};
use crate::error::{Error, Result};
use crate::numerics::{seeded_rng, AdamConfig, AdamState, ParamKind, Tape, Tensor};

/// Optimisation settings for one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_dialogs: usize,
    pub adam: AdamConfig,
    pub l2: f64,
    pub dropout: f64,
    /// Each training dialog contributes one instance per view.
    pub views: Vec<UserView>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_dialogs: 10,
            adam: AdamConfig::default(),
            l2: 0.001,
            dropout: 0.5,
            views: vec![UserView::Transcript, UserView::Cnet],
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_dialogs == 0 {
            return Err(Error::Config(
                "batch size must be at least one dialog".into(),
            ));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!(
                "l2 weight {} must be finite and >= 0",
                self.l2
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.views.is_empty() {
            return Err(Error::Config("no training views".into()));
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0)
            || !(0.0..1.0).contains(&a.beta1)
            || !(0.0..1.0).contains(&a.beta2)
            || !(a.epsilon > 0.0)
        {
            return Err(Error::Config(format!("invalid Adam settings {a:?}")));
        }
        Ok(())
    }
}

/// Epoch counts per head group; goal groups not listed use `default_goal`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochSchedule {
    pub per_group: BTreeMap<String, usize>,
    pub default_goal: usize,
}

impl Default for EpochSchedule {
    /// 100 epochs for food, 50 for area and price range, 20 for requests.
    fn default() -> Self {
        let per_group = [
            ("food", 100),
            ("area", 50),
            ("pricerange", 50),
            ("requests", 20),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            per_group,
            default_goal: 50,
        }
    }
}

impl EpochSchedule {
    pub fn uniform(epochs: usize) -> Self {
        let mut s = Self::default();
        s.per_group.values_mut().for_each(|v| *v = epochs);
        s.default_goal = epochs;
        s
    }

    pub fn epochs_for(&self, group: &str) -> usize {
        self.per_group
            .get(group)
            .copied()
            .unwrap_or(self.default_goal)
    }
}

/// Mean objective of one epoch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub head_group: String,
    pub seed: u64,
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: DstModel,
    pub losses: Vec<LossRecord>,
}

/// Mini-batch Adam training. Per batch, gradients of the summed per-turn
/// losses are averaged over the batch's instances and the L2 gradient is
/// added once. The same seed always produces the same model.
pub fn train(
    mut model: DstModel,
    dialogs: &[Dialog],
    config: &TrainConfig,
    map: &ActWordMap,
) -> Result<TrainOutcome> {
    config.validate()?;
    if dialogs.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    let instances: Vec<(Vec<EncodedDialog>, Vec<DialogState>)> = dialogs
        .iter()
        .map(|d| {
            (
                config
                    .views
                    .iter()
                    .map(|&v| model.encode(d, v, map))
                    .collect(),
                d.gold(),
            )
        })
        .collect();

    let group = model.group_name();
    let stream = init_stream(model.heads());
    let mut order_rng = seeded_rng(config.seed, stream.wrapping_add(1));
    let mut dropout_rng = seeded_rng(config.seed, stream.wrapping_add(2));
    let mut adam = AdamState::new(model.params(), config.adam);
    let mut order: Vec<usize> = (0..dialogs.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_total = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(config.batch_dialogs).enumerate() {
            let mut grads = model.params().zeros_like();
            let mut data_total = 0.0;
            let mut count = 0usize;
            for &i in chunk {
                let (views, gold) = &instances[i];
                for enc in views {
                    let mut tape = Tape::new();
                    let vars = model.params().bind(&mut tape);
                    let ctx = (config.dropout > 0.0).then_some(DropoutCtx {
                        rate: config.dropout,
                        rng: &mut dropout_rng,
                    });
                    let loss = model.data_loss_tape(&mut tape, &vars, enc, gold, ctx)?;
                    let value = tape.scalar(loss);
                    if !value.is_finite() {
                        return Err(Error::Training(format!(
                            "{group}: loss is {value} at epoch {epoch}, batch {}",
                            b + 1
                        )));
                    }
                    tape.backward(loss);
                    for (g, &v) in grads.iter_mut().zip(&vars) {
                        for (acc, x) in g.data_mut().iter_mut().zip(tape.grad(v)) {
                            *acc += x;
                        }
                    }
                    data_total += value;
                    count += 1;
                }
            }
            let scale = 1.0 / count as f64;
            let mut l2 = 0.0;
            for (g, p) in grads.iter_mut().zip(model.params().iter()) {
                let is_weight = p.kind == ParamKind::Weight;
                for (acc, &w) in g.data_mut().iter_mut().zip(p.value.data()) {
                    *acc *= scale;
                    if is_weight {
                        *acc += 2.0 * config.l2 * w;
                    }
                }
                if is_weight {
                    l2 += config.l2 * p.value.sum_squares();
                }
            }
            adam.step(model.params_mut(), &grads).map_err(|e| match e {
                Error::Training(msg) => {
                    Error::Training(format!("{group}: epoch {epoch}, batch {}: {msg}", b + 1))
                }
                other => other,
            })?;
            epoch_total += data_total * scale + l2;
            batches += 1;
        }
        let loss = epoch_total / batches as f64;
        debug!("{group} seed {} epoch {epoch}: loss {loss:.6}", config.seed);
        losses.push(LossRecord {
            epoch,
            head_group: group.clone(),
            seed: config.seed,
            loss,
        });
    }
    Ok(TrainOutcome { model, losses })
}

/// Trains one model per head group of the ontology, each for its own
/// number of epochs, and joins them into a tracker. Groups train in
/// parallel on the current rayon pool. `embeddings`, when given, replaces
/// the random initial embedding table of every group.
#[allow(clippy::too_many_arguments)]
pub fn train_tracker(
    dialogs: &[Dialog],
    ontology: &Ontology,
    vocab: &Vocab,
    model_config: &ModelConfig,
    schedule: &EpochSchedule,
    config: &TrainConfig,
    map: &ActWordMap,
    embeddings: Option<&Tensor>,
) -> Result<(Tracker, Vec<LossRecord>)> {
    let outcomes = head_groups(ontology)
        .into_par_iter()
        .map(|heads| {
            let epochs = schedule.epochs_for(&group_name(&heads));
            let mut model = DstModel::new(
                model_config.clone(),
                vocab.clone(),
                ontology.clone(),
                heads,
                config.seed,
            )?;
            if let Some(table) = embeddings {
                model.set_embeddings(table)?;
            }
            train(
                model,
                dialogs,
                &TrainConfig {
                    epochs,
                    ..config.clone()
                },
                map,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut losses = Vec::new();
    let mut models = Vec::new();
    for o in outcomes {
        losses.extend(o.losses);
        models.push(o.model);
    }
    Ok((Tracker::new(models)?, losses))
}
