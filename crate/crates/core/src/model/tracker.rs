use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::network::{DstModel, Head, TurnPrediction, UserView};
use super::ontology::{DialogState, Ontology};
use crate::corpus::{ActWordMap, Dialog};
use crate::error::{Error, Result};

/// Head-group models over one ontology whose heads together cover it.
#[derive(Clone, Debug, PartialEq)]
pub struct Tracker {
    models: Vec<DstModel>,
}

impl Tracker {
    pub fn new(models: Vec<DstModel>) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::structural("tracker needs at least one model"))?;
        let ontology = first.ontology();
        let mut seen = std::collections::BTreeSet::new();
        for m in &models {
            if m.ontology() != ontology {
                return Err(Error::structural("tracker models disagree on the ontology"));
            }
            for h in m.heads() {
                if !seen.insert(h.clone()) {
                    return Err(Error::structural(format!("head {h} appears in two models")));
                }
            }
        }
        Ok(Self { models })
    }

    pub fn models(&self) -> &[DstModel] {
        &self.models
    }

    pub fn ontology(&self) -> &Ontology {
        self.models[0].ontology()
    }

    pub fn heads(&self) -> Vec<Head> {
        self.models
            .iter()
            .flat_map(|m| m.heads().iter().cloned())
            .collect()
    }

    pub fn predict(
        &self,
        dialog: &Dialog,
        view: UserView,
        map: &ActWordMap,
    ) -> Result<Vec<TurnPrediction>> {
        let per_model = self
            .models
            .iter()
            .map(|m| m.forward_dialog(dialog, view, map))
            .collect::<Result<Vec<_>>>()?;
        merge_turns(&per_model, self.ontology())
    }
}

fn merge_turns(
    per_model: &[Vec<TurnPrediction>],
    ontology: &Ontology,
) -> Result<Vec<TurnPrediction>> {
    let turns = per_model[0].len();
    (0..turns)
        .map(|t| {
            let parts: Vec<TurnPrediction> = per_model.iter().map(|p| p[t].clone()).collect();
            TurnPrediction::merge(&parts, ontology)
        })
        .collect()
}

/// Element-wise mean of per-head probabilities across several models'
/// predictions for the same dialog, then fresh decisions.
pub fn average_predictions(
    runs: &[Vec<TurnPrediction>],
    ontology: &Ontology,
) -> Result<Vec<TurnPrediction>> {
    let first = runs
        .first()
        .ok_or_else(|| Error::structural("nothing to average"))?;
    if runs.iter().any(|r| r.len() != first.len()) {
        return Err(Error::structural("predictions cover different turn counts"));
    }
    let n = runs.len() as f64;
    (0..first.len())
        .map(|t| {
            let mut goals: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            let mut requests: BTreeMap<String, f64> = BTreeMap::new();
            for run in runs {
                let p = &run[t];
                if p.goals.keys().ne(first[t].goals.keys())
                    || p.requests.keys().ne(first[t].requests.keys())
                {
                    return Err(Error::structural("predictions cover different heads"));
                }
                for (slot, probs) in &p.goals {
                    let acc = goals
                        .entry(slot.clone())
                        .or_insert_with(|| vec![0.0; probs.len()]);
                    if acc.len() != probs.len() {
                        return Err(Error::structural(format!(
                            "goal slot {slot} differs in size"
                        )));
                    }
                    acc.iter_mut().zip(probs).for_each(|(a, x)| *a += x);
                }
                for (r, x) in &p.requests {
                    *requests.entry(r.clone()).or_default() += x;
                }
            }
            goals.values_mut().flatten().for_each(|v| *v /= n);
            requests.values_mut().for_each(|v| *v /= n);
            TurnPrediction::from_probabilities(goals, requests, ontology)
        })
        .collect()
}

/// Mean of the head outputs of architecturally identical models.
pub fn ensemble_predict(
    models: &[DstModel],
    dialog: &Dialog,
    view: UserView,
    map: &ActWordMap,
) -> Result<Vec<TurnPrediction>> {
    let first = models
        .first()
        .ok_or_else(|| Error::structural("empty ensemble"))?;
    if let Some(m) = models.iter().find(|m| !first.same_architecture(m)) {
        return Err(Error::structural(format!(
            "ensemble members differ in architecture ({} vs {})",
            first.group_name(),
            m.group_name()
        )));
    }
    let runs = models
        .iter()
        .map(|m| m.forward_dialog(dialog, view, map))
        .collect::<Result<Vec<_>>>()?;
    average_predictions(&runs, first.ontology())
}

/// Ensemble over trackers trained with different seeds: group by group
/// averaging, then merged.
pub fn ensemble_tracker_predict(
    trackers: &[Tracker],
    dialog: &Dialog,
    view: UserView,
    map: &ActWordMap,
) -> Result<Vec<TurnPrediction>> {
    let first = trackers
        .first()
        .ok_or_else(|| Error::structural("empty ensemble"))?;
    if trackers
        .iter()
        .any(|t| t.models.len() != first.models.len())
    {
        return Err(Error::structural(
            "ensemble trackers have different head groups",
        ));
    }
    let per_group = (0..first.models.len())
        .map(|g| {
            let members: Vec<DstModel> = trackers.iter().map(|t| t.models[g].clone()).collect();
            ensemble_predict(&members, dialog, view, map)
        })
        .collect::<Result<Vec<_>>>()?;
    merge_turns(&per_group, first.ontology())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JointAccuracy {
    pub joint_goals: f64,
    pub joint_requests: f64,
    pub turns: usize,
}

/// Percentage of turns whose goal labels all match, and of turns whose
/// requested-slot set matches exactly.
pub fn joint_accuracy(
    pred: &[DialogState],
    gold: &[DialogState],
    ontology: &Ontology,
) -> Result<JointAccuracy> {
    if pred.len() != gold.len() {
        return Err(Error::structural(format!(
            "{} predicted states for {} gold states",
            pred.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::structural("accuracy over zero turns"));
    }
    let (mut goals_ok, mut requests_ok) = (0usize, 0usize);
    for (p, g) in pred.iter().zip(gold) {
        goals_ok += usize::from(ontology.goal_slots().all(|s| p.goal(s) == g.goal(s)));
        requests_ok += usize::from(p.requests == g.requests);
    }
    let pct = |k: usize| 100.0 * k as f64 / gold.len() as f64;
    Ok(JointAccuracy {
        joint_goals: pct(goals_ok),
        joint_requests: pct(requests_ok),
        turns: gold.len(),
    })
}

/// Runs `predict` over every dialog (in parallel) and scores the result.
pub fn evaluate<F>(dialogs: &[Dialog], ontology: &Ontology, predict: F) -> Result<JointAccuracy>
where
    F: Fn(&Dialog) -> Result<Vec<TurnPrediction>> + Sync,
{
    let per_dialog = dialogs
        .par_iter()
        .map(|d| {
            let preds = predict(d)?;
            if preds.len() != d.turns.len() {
                return Err(Error::structural(format!(
                    "dialog {}: prediction count differs",
                    d.id
                )));
            }
            Ok(preds.into_iter().map(|p| p.state).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let pred: Vec<DialogState> = per_dialog.into_iter().flatten().collect();
    let gold: Vec<DialogState> = dialogs.iter().flat_map(|d| d.gold()).collect();
    joint_accuracy(&pred, &gold, ontology)
}
