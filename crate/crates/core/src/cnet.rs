//! Word confusion networks: data types, the plain-text log format,
//! hypothesis pruning and transcript coverage statistics.
//!
//! A confusion network is an ordered list of timesteps. Each timestep holds
//! the competing word hypotheses for one time interval together with their
//! natural-log posterior scores. The special token [`NULL_TOKEN`] stands for
//! "no word in this interval" and is kept as an ordinary token.
//!
//! The text format has one timestep per line:
//!
//! ```text
//! 27 0.91875 0.984375 !null (-0.005078796) and (-5.305283) ok (-9.687913)
//! ```
//!
//! Lines starting with `#` are comments. Files holding several utterances
//! separate them with blank lines.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};

pub const NULL_TOKEN: &str = "!null";

/// Interjections removed before encoding unless configured otherwise.
pub const DEFAULT_INTERJECTIONS: [&str; 10] = [
    "uh", "ah", "oh", "um", "er", "eh", "hmm", "huh", "mm", "mmhmm",
];

/// Probability threshold used for the pruned-cnet setting.
pub const DEFAULT_PRUNE_THRESHOLD: f64 = 0.001;

/// Slack allowed when checking that consecutive timesteps do not overlap.
const TIME_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    token: String,
    log_score: f64,
}

impl Hypothesis {
    /// Positive scores are clamped to zero.
    pub fn new(token: impl AsRef<str>, log_score: f64) -> Result<Self> {
        let token = token.as_ref();
        if token.is_empty() || token.chars().any(char::is_whitespace) {
            return Err(Error::structural(format!(
                "invalid hypothesis token {token:?}"
            )));
        }
        if !log_score.is_finite() {
            return Err(Error::structural(format!(
                "non-finite score {log_score} for {token:?}"
            )));
        }
        Ok(Self {
            token: token.to_lowercase(),
            log_score: log_score.min(0.0),
        })
    }

    pub fn token(&self) -> &str {
        &self.token
    }

    pub fn log_score(&self) -> f64 {
        self.log_score
    }

    /// Confidence score in probability space.
    pub fn probability(&self) -> f64 {
        self.log_score.exp()
    }

    pub fn is_null(&self) -> bool {
        self.token == NULL_TOKEN
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Timestep {
    start: f64,
    end: f64,
    hypotheses: Vec<Hypothesis>,
}

impl Timestep {
    pub fn new(start: f64, end: f64, hypotheses: Vec<Hypothesis>) -> Result<Self> {
        if !(start < end) {
            return Err(Error::structural(format!(
                "timestep start {start} is not before end {end}"
            )));
        }
        if hypotheses.is_empty() {
            return Err(Error::structural("timestep without hypotheses"));
        }
        let mut seen = BTreeSet::new();
        for h in &hypotheses {
            if !seen.insert(h.token.as_str()) {
                return Err(Error::structural(format!(
                    "duplicate token {:?} in timestep",
                    h.token
                )));
            }
        }
        Ok(Self {
            start,
            end,
            hypotheses,
        })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    /// Highest-scoring hypothesis; the earliest one wins ties.
    pub fn top(&self) -> &Hypothesis {
        self.hypotheses
            .iter()
            .reduce(|best, h| {
                if h.log_score > best.log_score {
                    h
                } else {
                    best
                }
            })
            .expect("timesteps are never empty")
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfusionNetwork {
    timesteps: Vec<Timestep>,
}

impl ConfusionNetwork {
    pub fn new(timesteps: Vec<Timestep>) -> Result<Self> {
        for (i, pair) in timesteps.windows(2).enumerate() {
            if pair[0].end > pair[1].start + TIME_SLACK {
                return Err(Error::structural(format!(
                    "timestep {} ends at {} after timestep {} starts at {}",
                    i + 1,
                    pair[0].end,
                    i + 2,
                    pair[1].start
                )));
            }
        }
        Ok(Self { timesteps })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn timesteps(&self) -> &[Timestep] {
        &self.timesteps
    }

    pub fn len(&self) -> usize {
        self.timesteps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timesteps.is_empty()
    }

    pub fn hypothesis_count(&self) -> usize {
        self.timesteps.iter().map(Timestep::len).sum()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.timesteps
            .iter()
            .flat_map(|t| t.hypotheses.iter().map(|h| h.token.as_str()))
    }

    pub fn contains_token(&self, token: &str) -> bool {
        self.tokens().any(|t| t == token)
    }

    /// Top hypothesis of every timestep, skipping `!null`.
    pub fn one_best(&self) -> Vec<String> {
        self.timesteps
            .iter()
            .map(Timestep::top)
            .filter(|h| !h.is_null())
            .map(|h| h.token.clone())
            .collect()
    }
}

impl fmt::Display for ConfusionNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.timesteps.iter().enumerate() {
            write!(f, "{} {} {}", i + 1, t.start, t.end)?;
            for h in &t.hypotheses {
                write!(f, " {} ({})", h.token, h.log_score)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Non-fatal irregularities met while parsing.
#[derive(Clone, Debug, PartialEq)]
pub enum ParseWarning {
    ClampedScore {
        line: usize,
        token: String,
        score: f64,
    },
    DuplicateToken {
        line: usize,
        token: String,
    },
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseWarning::ClampedScore { line, token, score } => {
                write!(
                    f,
                    "line {line}: positive score {score} for {token:?} clamped to 0"
                )
            }
            ParseWarning::DuplicateToken { line, token } => {
                write!(f, "line {line}: duplicate token {token:?} merged")
            }
        }
    }
}

/// Parses one utterance. Warnings are logged.
pub fn parse_cnet(text: &str) -> Result<ConfusionNetwork> {
    let (cnet, warnings) = parse_cnet_with_warnings(text)?;
    for w in warnings {
        warn!("{w}");
    }
    Ok(cnet)
}

pub fn parse_cnet_with_warnings(text: &str) -> Result<(ConfusionNetwork, Vec<ParseWarning>)> {
    let lines: Vec<(usize, &str)> = text.lines().enumerate().map(|(i, l)| (i + 1, l)).collect();
    let (cnet, warnings) = parse_lines(&lines)?;
    if cnet.is_empty() {
        return Err(Error::structural("confusion network text has no timesteps"));
    }
    Ok((cnet, warnings))
}

/// Parses blank-line separated utterance blocks. A block made only of
/// comment lines is an empty confusion network.
pub fn parse_cnet_blocks(text: &str) -> Result<Vec<ConfusionNetwork>> {
    let mut blocks = Vec::new();
    let mut current: Vec<(usize, &str)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                blocks.push(std::mem::take(&mut current));
            }
        } else {
            current.push((i + 1, line));
        }
    }
    if !current.is_empty() {
        blocks.push(current);
    }
    blocks
        .iter()
        .map(|block| {
            let (cnet, warnings) = parse_lines(block)?;
            for w in warnings {
                warn!("{w}");
            }
            Ok(cnet)
        })
        .collect()
}

fn parse_lines(lines: &[(usize, &str)]) -> Result<(ConfusionNetwork, Vec<ParseWarning>)> {
    let mut warnings = Vec::new();
    let mut timesteps = Vec::new();
    let mut last_index = 0usize;

    for &(line_no, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: line_no, msg };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 5 || !(fields.len() - 3).is_multiple_of(2) {
            return Err(parse_err(
                "expected `<idx> <start> <end>` followed by `<token> (<score>)` pairs".into(),
            ));
        }
        let index: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(format!("bad timestep index {:?}", fields[0])))?;
        let start: f64 = parse_float(fields[1])
            .ok_or_else(|| parse_err(format!("bad start time {:?}", fields[1])))?;
        let end: f64 = parse_float(fields[2])
            .ok_or_else(|| parse_err(format!("bad end time {:?}", fields[2])))?;

        let expected_first = timesteps.is_empty();
        if (expected_first && index != 1) || (!expected_first && index <= last_index) {
            return Err(Error::structural(format!(
                "line {line_no}: timestep index {index} breaks the increasing sequence starting at 1"
            )));
        }
        last_index = index;

        let mut hyps: Vec<Hypothesis> = Vec::with_capacity((fields.len() - 3) / 2);
        for pair in fields[3..].chunks_exact(2) {
            let token = pair[0].to_lowercase();
            let score = pair[1]
                .strip_prefix('(')
                .and_then(|s| s.strip_suffix(')'))
                .and_then(parse_float)
                .ok_or_else(|| parse_err(format!("bad score {:?} for token {token:?}", pair[1])))?;
            if score > 0.0 {
                warnings.push(ParseWarning::ClampedScore {
                    line: line_no,
                    token: token.clone(),
                    score,
                });
            }
            let hyp = Hypothesis::new(&token, score).map_err(|e| parse_err(e.to_string()))?;
            if let Some(existing) = hyps.iter_mut().find(|h| h.token == hyp.token) {
                warnings.push(ParseWarning::DuplicateToken {
                    line: line_no,
                    token: token.clone(),
                });
                existing.log_score = existing.log_score.max(hyp.log_score);
            } else {
                hyps.push(hyp);
            }
        }
        let step = Timestep::new(start, end, hyps)
            .map_err(|e| Error::structural(format!("line {line_no}: {e}")))?;
        if let Some(prev) = timesteps.last() {
            let prev: &Timestep = prev;
            if prev.end > step.start + TIME_SLACK {
                return Err(Error::structural(format!(
                    "line {line_no}: timestep starts at {} before the previous one ends at {}",
                    step.start, prev.end
                )));
            }
        }
        timesteps.push(step);
    }
    Ok((ConfusionNetwork { timesteps }, warnings))
}

fn parse_float(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn serialize_cnet(cnet: &ConfusionNetwork) -> String {
    cnet.to_string()
}

/// Inverse of [`parse_cnet_blocks`]. Empty networks become a `# empty`
/// comment block.
pub fn serialize_cnet_blocks(cnets: &[ConfusionNetwork]) -> String {
    let mut out = String::new();
    for (i, cnet) in cnets.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        if cnet.is_empty() {
            out.push_str("# empty\n");
        } else {
            out.push_str(&cnet.to_string());
        }
    }
    out
}

/// Drops interjections and hypotheses whose probability is below
/// `threshold`.
///
/// A timestep disappears when nothing survives, or when pruning removed
/// something and only `!null` is left. Scores are not renormalised.
pub fn prune_cnet(
    cnet: &ConfusionNetwork,
    interjections: &BTreeSet<String>,
    threshold: f64,
) -> Result<ConfusionNetwork> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::Config(format!(
            "prune threshold {threshold} outside [0, 1)"
        )));
    }
    let timesteps = cnet
        .timesteps
        .iter()
        .filter_map(|t| {
            let kept: Vec<Hypothesis> = t
                .hypotheses
                .iter()
                .filter(|h| !interjections.contains(&h.token) && h.probability() >= threshold)
                .cloned()
                .collect();
            let dropped = kept.len() < t.hypotheses.len();
            let only_null = kept.iter().all(Hypothesis::is_null);
            if kept.is_empty() || (dropped && only_null) {
                None
            } else {
                Some(Timestep {
                    start: t.start,
                    end: t.end,
                    hypotheses: kept,
                })
            }
        })
        .collect();
    Ok(ConfusionNetwork { timesteps })
}

/// Rescales every timestep so its probabilities sum to one.
pub fn renormalize_scores(cnet: &ConfusionNetwork) -> ConfusionNetwork {
    let timesteps = cnet
        .timesteps
        .iter()
        .map(|t| {
            let total: f64 = t.hypotheses.iter().map(Hypothesis::probability).sum();
            let log_total = total.ln();
            let hypotheses = t
                .hypotheses
                .iter()
                .map(|h| Hypothesis {
                    token: h.token.clone(),
                    log_score: (h.log_score - log_total).min(0.0),
                })
                .collect();
            Timestep {
                start: t.start,
                end: t.end,
                hypotheses,
            }
        })
        .collect();
    ConfusionNetwork { timesteps }
}

pub fn default_interjections() -> BTreeSet<String> {
    DEFAULT_INTERJECTIONS
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// One token per line; blank lines and `#` comments are ignored.
pub fn parse_interjections(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn load_interjections(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_interjections(&text))
}

/// One timestep per token with a single certain hypothesis.
pub fn degenerate_cnet<S: AsRef<str>>(tokens: &[S]) -> Result<ConfusionNetwork> {
    if tokens.is_empty() {
        return Err(Error::structural(
            "cannot build a confusion network from no tokens",
        ));
    }
    let timesteps = tokens
        .iter()
        .enumerate()
        .map(|(i, tok)| {
            let hyp = Hypothesis::new(tok, 0.0)?;
            Timestep::new(i as f64, (i + 1) as f64, vec![hyp])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConfusionNetwork { timesteps })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageReport {
    pub all_words_pct: f64,
    /// Absent when no transcript token belongs to the slot-value vocabulary.
    pub slot_value_words_pct: Option<f64>,
    pub utterance_count: usize,
    pub avg_timesteps: f64,
    pub avg_hypotheses_per_timestep: f64,
}

/// Share of transcript tokens found among the hypotheses of the paired
/// confusion network, counted over tokens rather than types.
pub fn coverage_stats(
    pairs: &[(Vec<String>, ConfusionNetwork)],
    slot_value_vocab: &BTreeSet<String>,
) -> Result<CoverageReport> {
    if pairs.is_empty() {
        return Err(Error::structural("coverage over an empty corpus"));
    }
    let (mut total, mut covered) = (0usize, 0usize);
    let (mut slot_total, mut slot_covered) = (0usize, 0usize);
    for (transcript, cnet) in pairs {
        let present: BTreeSet<&str> = cnet.tokens().collect();
        for word in transcript {
            let word = word.to_lowercase();
            let hit = present.contains(word.as_str());
            total += 1;
            covered += usize::from(hit);
            if slot_value_vocab.contains(&word) {
                slot_total += 1;
                slot_covered += usize::from(hit);
            }
        }
    }
    let cnets: Vec<&ConfusionNetwork> = pairs.iter().map(|(_, c)| c).collect();
    let (avg_timesteps, avg_k) = size_summary(&cnets);
    let pct = |num: usize, den: usize| 100.0 * num as f64 / den as f64;
    Ok(CoverageReport {
        all_words_pct: if total == 0 { 0.0 } else { pct(covered, total) },
        slot_value_words_pct: (slot_total > 0).then(|| pct(slot_covered, slot_total)),
        utterance_count: pairs.len(),
        avg_timesteps,
        avg_hypotheses_per_timestep: avg_k,
    })
}

/// Mean timestep count per network and mean hypotheses per timestep
/// (pooled over all timesteps).
pub fn cnet_size_summary(cnets: &[ConfusionNetwork]) -> Result<(f64, f64)> {
    if cnets.is_empty() {
        return Err(Error::structural("size summary over no confusion networks"));
    }
    let refs: Vec<&ConfusionNetwork> = cnets.iter().collect();
    Ok(size_summary(&refs))
}

fn size_summary(cnets: &[&ConfusionNetwork]) -> (f64, f64) {
    let steps: usize = cnets.iter().map(|c| c.len()).sum();
    let hyps: usize = cnets.iter().map(|c| c.hypothesis_count()).sum();
    let avg_steps = steps as f64 / cnets.len() as f64;
    let avg_k = if steps == 0 {
        0.0
    } else {
        hyps as f64 / steps as f64
    };
    (avg_steps, avg_k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DEV_SESSION: &str = include_str!("../tests/fixtures/dev_session.cnet");
    const LINE_27: &str = "27 0.91875 0.984375 !null (-0.005078796) and (-5.305283) ok (-9.687913) can (-10.20153) is (-13.44094) uh (-17.34175) where (-23.62194)";

    fn set(words: &[&str]) -> BTreeSet<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    fn tokens(t: &Timestep) -> Vec<&str> {
        t.hypotheses().iter().map(Hypothesis::token).collect()
    }

    #[test]
    fn parses_line_27() {
        let text = LINE_27.replacen("27", "1", 1);
        let cnet = parse_cnet(&text).unwrap();
        let t = &cnet.timesteps()[0];
        assert_eq!((t.start(), t.end(), t.len()), (0.91875, 0.984375, 7));
        assert_eq!(t.hypotheses()[0].token(), "!null");
        assert_eq!(t.hypotheses()[0].log_score(), -0.005078796);
    }

    #[test]
    fn certainty_case() {
        let cnet = parse_cnet("1 0.0 0.5 hello (0.0)").unwrap();
        assert_eq!(cnet.len(), 1);
        let h = &cnet.timesteps()[0].hypotheses()[0];
        assert_eq!(
            (h.token(), h.log_score(), h.probability()),
            ("hello", 0.0, 1.0)
        );
    }

    #[test]
    fn fixture_has_forty_timesteps() {
        let cnet = parse_cnet(DEV_SESSION).unwrap();
        assert_eq!(cnet.len(), 40);
        assert_eq!(cnet.one_best(), vec!["i", "don't", "care"]);
    }

    #[test]
    fn fixture_round_trips() {
        let cnet = parse_cnet(DEV_SESSION).unwrap();
        let reparsed = parse_cnet(&serialize_cnet(&cnet)).unwrap();
        assert_eq!(cnet, reparsed);
        // canonical text survives modulo whitespace
        let canonical: Vec<String> = DEV_SESSION
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
            .collect();
        let written: Vec<String> = serialize_cnet(&cnet).lines().map(str::to_string).collect();
        assert_eq!(canonical, written);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = parse_cnet("1 0.0 0.5 a (-1)\n2 0.5 0.7 b -1").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
        let err = parse_cnet("# header\n1 0.0 zero a (-1)").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_cnet("1 0.0 0.5 a (-1) b").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(parse_cnet(""), Err(Error::Structural(_))));
        assert!(matches!(
            parse_cnet("# only a comment\n"),
            Err(Error::Structural(_))
        ));
        assert!(matches!(
            parse_cnet("1 0.0 0.5 a (-1)\n1 0.5 0.7 b (-1)"),
            Err(Error::Structural(_))
        ));
        assert!(matches!(
            parse_cnet("1 0.0 0.5 a (-1)\n2 0.4 0.7 b (-1)"),
            Err(Error::Structural(_))
        ));
        assert!(matches!(
            parse_cnet("2 0.0 0.5 a (-1)"),
            Err(Error::Structural(_))
        ));
        assert!(matches!(
            parse_cnet("1 0.5 0.5 a (-1)"),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn positive_scores_clamp_and_duplicates_merge() {
        let (cnet, warnings) =
            parse_cnet_with_warnings("1 0 1 A (0.5) b (-2) a (-0.1) b (-1)").unwrap();
        let t = &cnet.timesteps()[0];
        assert_eq!(tokens(t), vec!["a", "b"]);
        assert_eq!(t.hypotheses()[0].log_score(), 0.0);
        assert_eq!(t.hypotheses()[1].log_score(), -1.0);
        assert_eq!(warnings.len(), 3);
    }

    #[test]
    fn blocks_parse_with_empty_marker() {
        let text = "1 0 1 a (-0.1)\n\n# empty\n\n1 0 1 b (0)\n2 1 2 c (0)\n";
        let blocks = parse_cnet_blocks(text).unwrap();
        assert_eq!(
            blocks.iter().map(|c| c.len()).collect::<Vec<_>>(),
            vec![1, 0, 2]
        );
        assert_eq!(
            parse_cnet_blocks(&serialize_cnet_blocks(&blocks)).unwrap(),
            blocks
        );
    }

    #[test]
    fn prune_line_27_at_threshold() {
        let cnet = parse_cnet(&LINE_27.replacen("27", "1", 1)).unwrap();
        let pruned = prune_cnet(&cnet, &BTreeSet::new(), 0.001).unwrap();
        assert_eq!(tokens(&pruned.timesteps()[0]), vec!["!null", "and"]);
    }

    #[test]
    fn prune_line_1_interjections() {
        let first = DEV_SESSION.lines().find(|l| l.starts_with("1 ")).unwrap();
        let cnet = parse_cnet(first).unwrap();
        let pruned = prune_cnet(&cnet, &set(&["uh", "ah", "oh", "um"]), 0.0).unwrap();
        assert_eq!(tokens(&pruned.timesteps()[0]), vec!["!null", "i", "a"]);
    }

    #[test]
    fn zero_threshold_without_interjections_is_noop() {
        let cnet = parse_cnet(DEV_SESSION).unwrap();
        assert_eq!(prune_cnet(&cnet, &BTreeSet::new(), 0.0).unwrap(), cnet);
        let lone_null = parse_cnet("1 0 1 !null (-0.1)").unwrap();
        assert_eq!(
            prune_cnet(&lone_null, &BTreeSet::new(), 0.0).unwrap(),
            lone_null
        );
    }

    #[test]
    fn null_only_survivor_removes_timestep() {
        let cnet =
            parse_cnet("1 0 1 !null (-0.0001) uh (-3)\n2 1 2 !null (-0.1) thai (-1)").unwrap();
        let pruned = prune_cnet(&cnet, &default_interjections(), 0.001).unwrap();
        assert_eq!(pruned.len(), 1);
        assert_eq!(pruned.timesteps()[0].start(), 1.0);
    }

    #[test]
    fn prune_rejects_bad_threshold() {
        let cnet = parse_cnet("1 0 1 a (0)").unwrap();
        assert!(prune_cnet(&cnet, &BTreeSet::new(), 1.0).is_err());
        assert!(prune_cnet(&cnet, &BTreeSet::new(), -0.1).is_err());
    }

    #[test]
    fn renormalize_sums_to_one() {
        let cnet = parse_cnet("1 0 1 a (-1) b (-2)").unwrap();
        let r = renormalize_scores(&cnet);
        let total: f64 = r.timesteps()[0]
            .hypotheses()
            .iter()
            .map(Hypothesis::probability)
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_construction() {
        let c = degenerate_cnet(&["thai", "food"]).unwrap();
        assert_eq!(c.len(), 2);
        for t in c.timesteps() {
            assert_eq!(t.len(), 1);
            assert_eq!(t.hypotheses()[0].probability(), 1.0);
        }
        let a = degenerate_cnet(&["a"]).unwrap();
        assert_eq!(
            a.timesteps()[0].hypotheses()[0],
            Hypothesis::new("a", 0.0).unwrap()
        );
        assert!(degenerate_cnet::<&str>(&[]).is_err());
    }

    #[test]
    fn coverage_examples() {
        let cnet = parse_cnet("1 0 1 cheap (-0.1) expensive (-2)\n2 1 2 good (0)").unwrap();
        let words = vec!["cheap".to_string(), "food".to_string()];
        let report = coverage_stats(&[(words.clone(), cnet.clone())], &set(&["cheap"])).unwrap();
        assert_eq!(report.all_words_pct, 50.0);
        assert_eq!(report.slot_value_words_pct, Some(100.0));
        assert_eq!(report.avg_timesteps, 2.0);
        assert_eq!(report.avg_hypotheses_per_timestep, 1.5);

        let full = degenerate_cnet(&words).unwrap();
        let report = coverage_stats(&[(words, full)], &BTreeSet::new()).unwrap();
        assert_eq!(report.all_words_pct, 100.0);
        assert_eq!(report.slot_value_words_pct, None);

        assert!(coverage_stats(&[], &BTreeSet::new()).is_err());
    }

    #[test]
    fn size_summary_examples() {
        let three = degenerate_cnet(&["a", "b", "c"]).unwrap();
        let five = degenerate_cnet(&["a", "b", "c", "d", "e"]).unwrap();
        assert_eq!(cnet_size_summary(&[three, five]).unwrap().0, 4.0);
        let k2 = parse_cnet("1 0 1 a (-1) b (-1)\n2 1 2 c (-1) d (-2)").unwrap();
        assert_eq!(cnet_size_summary(&[k2]).unwrap().1, 2.0);
        assert!(cnet_size_summary(&[]).is_err());
    }

    #[test]
    fn fixture_size_summary_recount() {
        let cnet = parse_cnet(DEV_SESSION).unwrap();
        // independent recount straight from the text
        let hyps: usize = DEV_SESSION
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .map(|l| l.matches('(').count())
            .sum();
        let (steps, k) = cnet_size_summary(&[cnet]).unwrap();
        assert_eq!(steps, 40.0);
        assert_eq!(k, hyps as f64 / 40.0);
    }

    #[test]
    fn interjection_file_format() {
        let set = parse_interjections("# fillers\nuh\n\n UM \n");
        assert_eq!(set, ["uh", "um"].iter().map(|s| s.to_string()).collect());
    }

    fn arb_cnet() -> impl Strategy<Value = ConfusionNetwork> {
        let words = prop::sample::select(vec!["!null", "a", "b", "c", "uh", "thai", "food", "um"]);
        let step = prop::collection::btree_map(words, -12.0f64..0.0, 1..6);
        prop::collection::vec(step, 0..8).prop_map(|steps| {
            let timesteps = steps
                .into_iter()
                .enumerate()
                .map(|(i, hyps)| {
                    let hyps = hyps
                        .into_iter()
                        .map(|(w, s)| Hypothesis::new(w, s).unwrap())
                        .collect();
                    Timestep::new(i as f64, i as f64 + 1.0, hyps).unwrap()
                })
                .collect();
            ConfusionNetwork::new(timesteps).unwrap()
        })
    }

    proptest! {
        #[test]
        fn pruning_is_idempotent(cnet in arb_cnet(), theta in 0.0f64..0.5) {
            let inter = default_interjections();
            let once = prune_cnet(&cnet, &inter, theta).unwrap();
            let twice = prune_cnet(&once, &inter, theta).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn pruning_is_monotone(cnet in arb_cnet(), lo in 0.0f64..0.5, delta in 0.0f64..0.49) {
            let inter = default_interjections();
            let low = prune_cnet(&cnet, &inter, lo).unwrap();
            let high = prune_cnet(&cnet, &inter, lo + delta).unwrap();
            let kept = |c: &ConfusionNetwork| -> BTreeSet<(u64, String)> {
                c.timesteps().iter().flat_map(|t| {
                    t.hypotheses().iter().map(move |h| (t.start().to_bits(), h.token().to_string()))
                }).collect()
            };
            prop_assert!(kept(&high).is_subset(&kept(&low)));
        }

        #[test]
        fn serialize_parse_identity(cnet in arb_cnet()) {
            let blocks = vec![cnet];
            prop_assert_eq!(parse_cnet_blocks(&serialize_cnet_blocks(&blocks)).unwrap(), blocks);
        }

        #[test]
        fn one_best_coverage_never_exceeds_full(cnet in arb_cnet(), picks in prop::collection::vec(0usize..8, 1..6)) {
            let vocab = ["a", "b", "c", "thai", "food", "x", "y", "z"];
            let transcript: Vec<String> = picks.iter().map(|&i| vocab[i].to_string()).collect();
            let best = cnet.one_best();
            let best_cnet = if best.is_empty() { ConfusionNetwork::empty() } else { degenerate_cnet(&best).unwrap() };
            let none = BTreeSet::new();
            let full = coverage_stats(&[(transcript.clone(), cnet)], &none).unwrap();
            let one = coverage_stats(&[(transcript, best_cnet)], &none).unwrap();
            prop_assert!(one.all_words_pct <= full.all_words_pct);
        }
    }
}
