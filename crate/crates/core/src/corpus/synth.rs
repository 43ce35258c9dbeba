use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{tokenize, Dialog, DialogActTriple, Turn};
use crate::cnet::{ConfusionNetwork, Hypothesis, Timestep, NULL_TOKEN};
use crate::error::{Error, Result};
use crate::model::{DialogState, Ontology, DONTCARE_LABEL};
use crate::numerics::seeded_rng;

/// Restaurant-style dialog generator with a simple ASR noise model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub dialogs: usize,
    pub turns: usize,
    pub seed: u64,
    /// Chance that a word's timestep is topped by a distractor while the
    /// true word stays at lower confidence.
    pub p_swap: f64,
    /// Chance that the true word stays on top but gains distractors.
    pub p_confuse: f64,
    /// Chance of an interjection timestep before a word.
    pub p_interj: f64,
    /// Chance that a noisy timestep loses the true word entirely.
    pub p_drop: f64,
    /// Number of distinct distractor words.
    pub distractor_pool: usize,
    pub id_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dialogs: 20,
            turns: 4,
            seed: 1,
            p_swap: 0.3,
            p_confuse: 0.3,
            p_interj: 0.1,
            p_drop: 0.0,
            distractor_pool: 40,
            id_prefix: "synth".into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_swap", self.p_swap),
            ("p_confuse", self.p_confuse),
            ("p_interj", self.p_interj),
            ("p_drop", self.p_drop),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if self.p_swap + self.p_confuse > 1.0 {
            return Err(Error::Config("p_swap + p_confuse exceeds 1".into()));
        }
        if self.dialogs == 0 || self.turns == 0 {
            return Err(Error::Config(
                "synthetic corpus needs at least one dialog and one turn".into(),
            ));
        }
        if self.distractor_pool < 2 {
            return Err(Error::Config(
                "distractor pool needs at least two words".into(),
            ));
        }
        Ok(())
    }
}

const INTERJECTIONS: [&str; 4] = ["uh", "um", "ah", "oh"];
const VENUES: [&str; 4] = ["golden curry", "lucky star", "river bar", "yippee noodle"];

fn inform_phrase(slot: &str, value: &str, rng: &mut ChaCha8Rng) -> String {
    let dontcare = value == DONTCARE_LABEL;
    let templates: &[&str] = match (slot, dontcare) {
        ("food", false) => &[
            "{v} food",
            "i want {v} food",
            "serving {v} food",
            "a {v} restaurant",
        ],
        ("food", true) => &["any kind of food", "i dont care about the food"],
        ("area", false) => &["in the {v}", "{v} part of town", "the {v} area"],
        ("area", true) => &["any area", "i dont care about the area"],
        ("pricerange", false) => &["{v} price range", "a {v} restaurant", "something {v}"],
        ("pricerange", true) => &["any price range", "i dont care about the price"],
        (_, false) => &["{v} {s}"],
        (_, true) => &["any {s}"],
    };
    templates
        .choose(rng)
        .expect("templates are non-empty")
        .replace("{v}", value)
        .replace("{s}", slot)
}

fn request_phrase(slot: &str) -> String {
    match slot {
        "phone" => "what is the phone number".into(),
        "signature" => "what is their signature dish".into(),
        other => format!("what is the {other}"),
    }
}

/// Every word the templates can emit for `ontology`.
fn template_words(ontology: &Ontology) -> BTreeSet<String> {
    let mut text = String::from(
        "any kind of food i dont care about the area price range want serving a restaurant in part town \
         something what is their signature dish phone number and thank you goodbye yes hello",
    );
    for slot in ontology.goal_slots() {
        text += &format!(" {slot}");
        for v in ontology.values(slot).unwrap() {
            text += &format!(" {v}");
        }
    }
    for r in ontology.requestable_slots() {
        text += &format!(" {r}");
    }
    text.extend(INTERJECTIONS.iter().map(|w| format!(" {w}")));
    tokenize(&text).into_iter().collect()
}

/// Pseudo-words shaped consonant-vowel-consonant-vowel-consonant that do not
/// collide with any template word.
fn distractor_words(count: usize, taken: &BTreeSet<String>) -> Vec<String> {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    let mut out = Vec::with_capacity(count);
    let combos = C.len().pow(3) * V.len().pow(2);
    let mut i = 0usize;
    while out.len() < count && i < combos {
        // 7919 is coprime to the number of combinations, so this visits each once.
        let mut n = (i * 7919) % combos;
        let mut word = String::new();
        for pos in 0..5 {
            let set = if pos % 2 == 0 { C } else { V };
            word.push(set[n % set.len()] as char);
            n /= set.len();
        }
        if !taken.contains(&word) {
            out.push(word);
        }
        i += 1;
    }
    out
}

fn hypotheses(entries: Vec<(String, f64)>) -> Result<Vec<Hypothesis>> {
    let mut entries = entries;
    entries.sort_by(|a, b| b.1.total_cmp(&a.1));
    entries
        .into_iter()
        .map(|(w, p)| Hypothesis::new(w, p.ln()))
        .collect()
}

struct Noise<'a> {
    config: &'a SynthConfig,
    pool: &'a [String],
}

impl Noise<'_> {
    fn distractors(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        self.pool.choose_multiple(rng, n).cloned().collect()
    }

    fn corrupt(&self, words: &[String], rng: &mut ChaCha8Rng) -> Result<ConfusionNetwork> {
        let cfg = self.config;
        let mut steps: Vec<Vec<Hypothesis>> = Vec::new();
        for word in words {
            if rng.gen::<f64>() < cfg.p_interj {
                let p = rng.gen_range(0.4..0.8);
                let interj = INTERJECTIONS.choose(rng).unwrap().to_string();
                steps.push(hypotheses(vec![(interj, p), (NULL_TOKEN.into(), 1.0 - p)])?);
            }
            let u: f64 = rng.gen();
            let mut entries: Vec<(String, f64)> = if u < cfg.p_swap {
                let p_top = rng.gen_range(0.5..0.75);
                let p_true = (1.0 - p_top) * rng.gen_range(0.5..0.95);
                let mut e = vec![
                    (self.distractors(1, rng).remove(0), p_top),
                    (word.clone(), p_true),
                ];
                let rest = 1.0 - p_top - p_true;
                if rest >= 0.01 {
                    e.push((NULL_TOKEN.into(), rest));
                }
                e
            } else if u < cfg.p_swap + cfg.p_confuse {
                let p_true = rng.gen_range(0.55..0.9);
                let n = rng.gen_range(1..=2);
                let share = (1.0 - p_true) * rng.gen_range(0.5..1.0) / n as f64;
                let mut e = vec![(word.clone(), p_true)];
                e.extend(self.distractors(n, rng).into_iter().map(|d| (d, share)));
                e
            } else {
                vec![(word.clone(), 1.0)]
            };
            if entries.len() > 1 && cfg.p_drop > 0.0 && rng.gen::<f64>() < cfg.p_drop {
                entries.retain(|(w, _)| w != word);
            }
            steps.push(hypotheses(entries)?);
        }
        let timesteps = steps
            .into_iter()
            .enumerate()
            .map(|(i, h)| Timestep::new(i as f64, (i + 1) as f64, h))
            .collect::<Result<Vec<_>>>()?;
        ConfusionNetwork::new(timesteps)
    }
}

fn act(name: &str, slot: Option<&str>, value: Option<&str>) -> DialogActTriple {
    DialogActTriple::new(name, slot.map(Into::into), value.map(Into::into))
        .expect("generator acts are valid")
}

fn generate_dialog(
    id: String,
    config: &SynthConfig,
    ontology: &Ontology,
    noise: &Noise,
    rng: &mut ChaCha8Rng,
) -> Result<Dialog> {
    // Goal: most slots get a value, some dontcare, some never mentioned.
    let mut pending: Vec<(String, String)> = Vec::new();
    for slot in ontology.goal_slots() {
        let r: f64 = rng.gen();
        if r < 0.8 {
            let v = ontology.values(slot).unwrap().choose(rng).unwrap().clone();
            pending.push((slot.to_string(), v));
        } else if r < 0.9 {
            pending.push((slot.to_string(), DONTCARE_LABEL.to_string()));
        }
    }
    pending.shuffle(rng);
    let mut asks: Vec<String> = ontology.requestable_slots().to_vec();
    asks.shuffle(rng);
    asks.truncate(rng.gen_range(1..=2));

    let mut goals = std::collections::BTreeMap::new();
    let mut turns = Vec::with_capacity(config.turns);
    for t in 0..config.turns {
        let mut requests = BTreeSet::new();
        let mut phrases = Vec::new();
        let system_acts;
        if t == 0 || !pending.is_empty() {
            system_acts = if t == 0 {
                vec![act("welcomemsg", None, None)]
            } else {
                vec![act("request", Some(&pending[0].0), None)]
            };
            let n = if pending.len() > 1 && rng.gen::<f64>() < 0.4 {
                2
            } else {
                1
            };
            for (slot, value) in pending.drain(..n.min(pending.len())) {
                phrases.push(inform_phrase(&slot, &value, rng));
                goals.insert(slot, value);
            }
            if phrases.is_empty() {
                phrases.push("hello".into());
            }
        } else if !asks.is_empty() {
            let venue = VENUES.choose(rng).unwrap();
            system_acts = vec![act("offer", Some("name"), Some(venue))];
            let n = if asks.len() > 1 && rng.gen::<f64>() < 0.5 {
                2
            } else {
                1
            };
            for slot in asks.drain(..n) {
                phrases.push(request_phrase(&slot));
                requests.insert(slot);
            }
        } else {
            system_acts = vec![act("reqmore", None, None)];
            phrases.push("thank you goodbye".into());
        }
        let transcript = tokenize(&phrases.join(" and "));
        let cnet = noise.corrupt(&transcript, rng)?;
        turns.push(Turn {
            system_acts,
            transcript,
            cnet,
            state: DialogState {
                goals: goals.clone(),
                requests,
            },
        });
    }
    Dialog::new(id, turns)
}

/// Generates `config.dialogs` dialogs over the synthetic ontology. The same
/// config always yields the same corpus.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Vec<Dialog>> {
    config.validate()?;
    let ontology = Ontology::synthetic();
    let pool = distractor_words(config.distractor_pool, &template_words(&ontology));
    let noise = Noise {
        config,
        pool: &pool,
    };
    let mut rng = seeded_rng(config.seed, 0);
    (0..config.dialogs)
        .map(|i| {
            let id = format!("{}-{:05}", config.id_prefix, i + 1);
            generate_dialog(id, config, &ontology, &noise, &mut rng)
        })
        .collect()
}
