//! Replaced-token corruption: argmin replacement selection and disjoint rounds.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::skipgram::ContextModel;
use crate::corpus::{PAD_TOKEN, UNK_TOKEN};
use crate::error::{Error, Result};

/// Floor applied to `P_s(w | c)` before taking logs.
pub const MIN_CONTEXT_PROB: f64 = 1e-9;

/// Default cap on the number of argmin candidates (most frequent first).
pub const DEFAULT_CANDIDATE_LIMIT: usize = 10_000;

/// Tokens at `i - n ..= i + n`, cut at the title boundaries. Includes `tokens[i]`.
pub fn context_window<S: AsRef<str>>(tokens: &[S], i: usize, radius: usize) -> Vec<&str> {
    let lo = i.saturating_sub(radius);
    let hi = (i + radius).min(tokens.len().saturating_sub(1));
    tokens[lo..=hi].iter().map(|t| t.as_ref()).collect()
}

/// `sum_c -ln max(P_s(w | c), 1e-9)` over the window tokens known to the
/// model. A candidate unknown to the model scores the floor for every context.
pub fn replacement_score<M: ContextModel + ?Sized>(model: &M, candidate: &str, window: &[&str]) -> f64 {
    let floor = -MIN_CONTEXT_PROB.ln();
    let w = model.id_of(candidate);
    window
        .iter()
        .filter_map(|c| model.id_of(c))
        .map(|c| match w {
            Some(w) => -model.log_probs(c)[w].max(MIN_CONTEXT_PROB.ln()),
            None => floor,
        })
        .sum()
}

/// Picks replacements, memoizing `-ln P_s(. | c)` per context token.
pub struct Replacer<'m, M: ContextModel + ?Sized> {
    model: &'m M,
    candidate_limit: Option<usize>,
    cache: HashMap<usize, Vec<f64>>,
    cache_capacity: usize,
}

impl<'m, M: ContextModel + ?Sized> Replacer<'m, M> {
    /// `candidate_limit = None` scans all of `V'`.
    pub fn new(model: &'m M, candidate_limit: Option<usize>) -> Self {
        let v = model.vocab_len().max(1);
        Replacer {
            model,
            candidate_limit,
            cache: HashMap::new(),
            // roughly 256 MB of cached rows
            cache_capacity: (32_000_000 / v).max(1),
        }
    }

    fn neg_log_probs(&mut self, context: usize) -> &[f64] {
        if !self.cache.contains_key(&context) && self.cache.len() >= self.cache_capacity {
            self.cache.clear();
        }
        let model = self.model;
        self.cache.entry(context).or_insert_with(|| {
            let floor = MIN_CONTEXT_PROB.ln();
            model.log_probs(context).into_iter().map(|l| -l.max(floor)).collect()
        })
    }

    /// `argmin_{w in V'} score(w)` where `V'` drops every window token and the
    /// special tokens. Ties go to the lowest (most frequent) id.
    pub fn select(&mut self, tokens: &[impl AsRef<str>], position: usize) -> Result<String> {
        if position >= tokens.len() {
            return Err(Error::Shape(format!("position {position} in a title of {} tokens", tokens.len())));
        }
        let window = context_window(tokens, position, self.model.window());
        let context: Vec<usize> = window.iter().filter_map(|c| self.model.id_of(c)).collect();
        let excluded: Vec<usize> = context.clone();
        let v = self.model.vocab_len();
        let limit = self.candidate_limit.unwrap_or(usize::MAX);
        let candidates: Vec<usize> = (0..v)
            .filter(|w| !excluded.contains(w))
            .filter(|&w| {
                let t = self.model.token(w);
                t != PAD_TOKEN && t != UNK_TOKEN && !window.contains(&t)
            })
            .take(limit)
            .collect();
        if candidates.is_empty() {
            return Err(Error::NoCandidate { position });
        }
        let mut scores = vec![0.0; candidates.len()];
        for &c in &context {
            let row = self.neg_log_probs(c);
            for (s, &w) in scores.iter_mut().zip(&candidates) {
                *s += row[w];
            }
        }
        let mut best = 0;
        for (k, &s) in scores.iter().enumerate() {
            if s < scores[best] {
                best = k;
            }
        }
        Ok(self.model.token(candidates[best]).to_owned())
    }
}

/// One-off replacement for `tokens[position]`.
pub fn select_replacement<M: ContextModel + ?Sized>(
    model: &M,
    tokens: &[impl AsRef<str>],
    position: usize,
    candidate_limit: Option<usize>,
) -> Result<String> {
    Replacer::new(model, candidate_limit).select(tokens, position)
}

/// Number of rounds needed so that rounds of about `f * L` positions cover a title.
pub fn round_count(f: f64) -> Result<usize> {
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::Config(format!("corruption fraction {f} is outside (0, 1]")));
    }
    Ok((1.0 / f - 1e-9).ceil().max(1.0) as usize)
}

/// Disjoint corruption rounds for one title, with their replacement tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionPlan {
    pub tokens: Vec<String>,
    /// Sorted positions per round; rounds are disjoint and cover `0..L`.
    pub rounds: Vec<Vec<usize>>,
    /// `(position, replacement)` per round, filled by [`CorruptionPlan::fill`].
    pub replacements: Vec<Vec<(usize, String)>>,
}

/// Shuffles the positions and deals them into `ceil(1/f)` near-equal rounds,
/// the first `L mod R` rounds taking one extra. Empty rounds are dropped.
pub fn plan_corruption(tokens: &[impl AsRef<str>], f: f64, seed: u64) -> Result<CorruptionPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    plan_with_rng(tokens, f, &mut rng)
}

fn plan_with_rng(tokens: &[impl AsRef<str>], f: f64, rng: &mut ChaCha8Rng) -> Result<CorruptionPlan> {
    if tokens.is_empty() {
        return Err(Error::EmptyTitle);
    }
    let rounds_wanted = round_count(f)?;
    let len = tokens.len();
    let mut positions: Vec<usize> = (0..len).collect();
    positions.shuffle(rng);
    let mut rounds = Vec::with_capacity(rounds_wanted);
    let mut start = 0;
    for r in 0..rounds_wanted {
        let size = len / rounds_wanted + usize::from(r < len % rounds_wanted);
        if size == 0 {
            break;
        }
        let mut round = positions[start..start + size].to_vec();
        round.sort_unstable();
        rounds.push(round);
        start += size;
    }
    Ok(CorruptionPlan {
        tokens: tokens.iter().map(|t| t.as_ref().to_owned()).collect(),
        rounds,
        replacements: Vec::new(),
    })
}

impl CorruptionPlan {
    pub fn fill<M: ContextModel + ?Sized>(&mut self, replacer: &mut Replacer<'_, M>) -> Result<()> {
        self.replacements = self
            .rounds
            .iter()
            .map(|round| {
                round
                    .iter()
                    .map(|&i| Ok((i, replacer.select(&self.tokens, i)?)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        Ok(())
    }

    /// The clean copy followed by one corrupted copy per round.
    pub fn examples(&self) -> Vec<PretrainExample> {
        let mut out = vec![PretrainExample {
            tokens: self.tokens.clone(),
            labels: vec![0; self.tokens.len()],
        }];
        for round in &self.replacements {
            let mut tokens = self.tokens.clone();
            let mut labels = vec![0; tokens.len()];
            for (i, w) in round {
                tokens[*i] = w.clone();
                labels[*i] = 1;
            }
            out.push(PretrainExample { tokens, labels });
        }
        out
    }
}

/// A pre-training sequence; label 1 marks a replaced token.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PretrainExample {
    pub tokens: Vec<String>,
    pub labels: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionConfig {
    /// Fraction of a title replaced per round.
    pub fraction: f64,
    /// Titles are cut to this many tokens before corruption.
    pub max_len: usize,
    pub candidate_limit: Option<usize>,
    pub seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            fraction: 0.25,
            max_len: 35,
            candidate_limit: Some(DEFAULT_CANDIDATE_LIMIT),
            seed: 0,
        }
    }
}

/// Clean plus corrupted copies of every title. Each title gets its own rng
/// stream derived from the seed, so output does not depend on scheduling.
pub fn build_pretraining_corpus<M, T>(titles: &[T], model: &M, config: &CorruptionConfig) -> Result<Vec<PretrainExample>>
where
    M: ContextModel + ?Sized,
    T: AsRef<[String]>,
{
    round_count(config.fraction)?;
    let mut replacer = Replacer::new(model, config.candidate_limit);
    let mut out = Vec::new();
    for (k, title) in titles.iter().enumerate() {
        let title = title.as_ref();
        if title.is_empty() {
            continue;
        }
        let kept = &title[..title.len().min(config.max_len)];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(k as u64);
        let mut plan = plan_with_rng(kept, config.fraction, &mut rng)?;
        plan.fill(&mut replacer)?;
        out.extend(plan.examples());
    }
    if out.is_empty() {
        return Err(Error::EmptyCorpus("no non-empty titles to corrupt".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Explicit `P(w | c)` table over a handful of tokens.
    struct TableModel {
        words: Vec<String>,
        probs: Vec<Vec<f64>>,
        radius: usize,
    }

    impl ContextModel for TableModel {
        fn vocab_len(&self) -> usize {
            self.words.len()
        }
        fn window(&self) -> usize {
            self.radius
        }
        fn id_of(&self, token: &str) -> Option<usize> {
            self.words.iter().position(|w| w == token)
        }
        fn token(&self, id: usize) -> &str {
            &self.words[id]
        }
        fn log_probs(&self, context: usize) -> Vec<f64> {
            self.probs[context].iter().map(|p| p.ln()).collect()
        }
    }

    fn five_words() -> TableModel {
        // rows: context c, columns: P(w | c)
        TableModel {
            words: ["a", "b", "c", "d", "e"].map(String::from).to_vec(),
            probs: vec![
                vec![0.10, 0.20, 0.30, 0.25, 0.15],
                vec![0.05, 0.05, 0.40, 0.10, 0.40],
                vec![0.30, 0.30, 0.10, 0.20, 0.10],
                vec![0.20, 0.20, 0.20, 0.20, 0.20],
                vec![0.50, 0.10, 0.10, 0.10, 0.20],
            ],
            radius: 1,
        }
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn argmin_matches_exhaustive_scan_on_hand_table() {
        let m = five_words();
        // window of position 1 in "a b c" is {a, b, c}; V' = {d, e}
        // score(d) = -ln .25 - ln .10 - ln .20 = 5.298
        // score(e) = -ln .15 - ln .40 - ln .10 = 5.116
        assert_eq!(select_replacement(&m, &toks("a b c"), 1, None).unwrap(), "e");
        // window of position 0 in "b e a" is {b, e}; V' = {a, c, d}
        // a: -ln .05 - ln .50 = 3.689; c: -ln .40 - ln .10 = 3.219; d: -ln .10 - ln .10 = 4.605
        assert_eq!(select_replacement(&m, &toks("b e a"), 0, None).unwrap(), "c");
    }

    #[test]
    fn ties_go_to_the_lowest_id() {
        let m = five_words();
        // context "d" alone is uniform, every candidate ties
        assert_eq!(select_replacement(&m, &toks("d"), 0, None).unwrap(), "a");
    }

    #[test]
    fn no_candidates_is_an_error() {
        let m = TableModel {
            words: toks("a b"),
            probs: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            radius: 1,
        };
        assert!(matches!(
            select_replacement(&m, &toks("a b"), 0, None),
            Err(Error::NoCandidate { position: 0 })
        ));
    }

    #[test]
    fn candidate_limit_keeps_the_most_frequent() {
        let m = five_words();
        // V' = {d, e}; a limit of one leaves only d
        assert_eq!(select_replacement(&m, &toks("b c a"), 1, Some(1)).unwrap(), "d");
        let mut words = toks("a b c");
        words[1] = "zzz".into();
        // unknown window tokens are skipped as context but still excluded
        assert_eq!(select_replacement(&m, &words, 1, Some(1)).unwrap(), "b");
    }

    #[test]
    fn boundary_windows_use_available_offsets() {
        let t = toks("w0 w1 w2 w3 w4");
        assert_eq!(context_window(&t, 0, 2), ["w0", "w1", "w2"]);
        assert_eq!(context_window(&t, 4, 2), ["w2", "w3", "w4"]);
        assert_eq!(context_window(&t, 2, 2).len(), 5);
    }

    #[test]
    fn score_is_finite_with_zero_probabilities() {
        let mut m = five_words();
        m.probs[0][4] = 0.0;
        let s = replacement_score(&m, "e", &["a"]);
        assert!((s - 9.0 * std::f64::consts::LN_10).abs() < 1e-9);
        assert!(replacement_score(&m, "unseen", &["a", "b"]).is_finite());
    }

    #[test]
    fn round_partition_arithmetic() {
        let plan = plan_corruption(&toks("a b c d e f g h i j"), 0.25, 7).unwrap();
        let sizes: Vec<usize> = plan.rounds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 3, 2, 2]);
        let plan = plan_corruption(&toks("a b"), 0.25, 7).unwrap();
        assert_eq!(plan.rounds.len(), 2);
        assert!(plan.rounds.iter().all(|r| r.len() == 1));
        assert_eq!(round_count(0.1).unwrap(), 10);
        assert_eq!(round_count(1.0).unwrap(), 1);
        assert_eq!(round_count(0.3).unwrap(), 4);
        assert!(round_count(0.0).is_err());
        assert!(round_count(1.5).is_err());
    }

    #[test]
    fn corpus_has_clean_copy_and_labels_match_rounds() {
        let m = five_words();
        let titles = vec![toks("a b c d e"), toks("e d")];
        let config = CorruptionConfig { candidate_limit: None, ..Default::default() };
        let out = build_pretraining_corpus(&titles, &m, &config).unwrap();
        // 1 + 4 for the five-token title, 1 + 2 for the two-token title
        assert_eq!(out.len(), 8);
        assert_eq!(out[0].tokens, titles[0]);
        assert!(out[0].labels.iter().all(|&l| l == 0));
        let mut covered = vec![0; 5];
        for ex in &out[1..5] {
            for (i, &l) in ex.labels.iter().enumerate() {
                covered[i] += l;
                if l == 1 {
                    assert_ne!(ex.tokens[i], titles[0][i]);
                } else {
                    assert_eq!(ex.tokens[i], titles[0][i]);
                }
            }
        }
        assert_eq!(covered, vec![1; 5]);
        assert_eq!(out, build_pretraining_corpus(&titles, &m, &config).unwrap());
    }

    #[test]
    fn titles_are_truncated_before_corruption() {
        let m = five_words();
        let config = CorruptionConfig { max_len: 3, candidate_limit: None, ..Default::default() };
        let out = build_pretraining_corpus(&[toks("a b c d e")], &m, &config).unwrap();
        assert!(out.iter().all(|ex| ex.tokens.len() == 3));
        assert_eq!(out.len(), 4);
    }

    proptest! {
        #[test]
        fn rounds_are_a_disjoint_cover(len in 1usize..60, f in 0.05f64..=1.0, seed in any::<u64>()) {
            let tokens: Vec<String> = (0..len).map(|i| i.to_string()).collect();
            let plan = plan_corruption(&tokens, f, seed).unwrap();
            let mut all: Vec<usize> = plan.rounds.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..len).collect::<Vec<_>>());
            let r = round_count(f).unwrap();
            prop_assert_eq!(plan.rounds.len(), r.min(len));
            let max = plan.rounds.iter().map(Vec::len).max().unwrap();
            let min = plan.rounds.iter().map(Vec::len).min().unwrap();
            prop_assert!(max - min <= 1);
        }

        #[test]
        fn replacement_never_comes_from_the_window(seed in 0u64..1000, pos in 0usize..4) {
            let m = five_words();
            let words = ["a", "b", "c", "d", "e"];
            let tokens: Vec<String> = (0..4).map(|k| words[((seed >> (3 * k)) % 5) as usize].to_owned()).collect();
            match select_replacement(&m, &tokens, pos, None) {
                Ok(w) => prop_assert!(!context_window(&tokens, pos, 1).contains(&w.as_str())),
                Err(e) => prop_assert!(matches!(e, Error::NoCandidate { .. }), "unexpected error"),
            }
        }
    }
}
