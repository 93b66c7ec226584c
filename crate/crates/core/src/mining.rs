//! Corpus frequency analysis and rare-entity candidate selection.
//!
//! Text is tokenized by splitting on whitespace and punctuation and lowercasing;
//! hyphens and apostrophes inside a word are kept, so `Erdheim-Chester` is one
//! token. Lexicon entries may span several tokens and match contiguous token
//! sequences. Frequencies are per token: `count / total_tokens`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{RarityJudge, Verdict};
use crate::num::decimal_serde;

#[derive(Debug, Error)]
pub enum MiningError {
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("corpus statistics are empty (no tokens ingested)")]
    EmptyCorpus,
    #[error("rarity threshold must lie strictly between 0 and 1")]
    InvalidThreshold,
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = MiningError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RarityConfig {
    #[serde(with = "decimal_serde")]
    pub tau_rare: Ratio<i64>,
}

impl Default for RarityConfig {
    fn default() -> Self {
        Self {
            tau_rare: Ratio::new(1, 1_000_000),
        }
    }
}

impl RarityConfig {
    pub fn validate(&self) -> Result<()> {
        let zero = Ratio::from_integer(0);
        let one = Ratio::from_integer(1);
        if self.tau_rare > zero && self.tau_rare < one {
            Ok(())
        } else {
            Err(MiningError::InvalidThreshold)
        }
    }

    pub fn tau_f64(&self) -> f64 {
        crate::num::ratio_to_f64(&self.tau_rare)
    }
}

/// Lowercased tokens of `text`.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '\''))
        .map(|t| t.trim_matches(|c| c == '-' || c == '\''))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Entity names indexed by their first token.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    names: Vec<String>,
    by_first: HashMap<String, Vec<(Vec<String>, usize)>>,
}

impl Lexicon {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut lexicon = Lexicon::default();
        let mut seen: HashMap<Vec<String>, usize> = HashMap::new();
        for raw in names {
            let name = raw.as_ref().trim();
            let tokens: Vec<String> = tokenize(name).collect();
            if tokens.is_empty() || seen.contains_key(&tokens) {
                continue;
            }
            let idx = lexicon.names.len();
            lexicon.names.push(name.to_string());
            seen.insert(tokens.clone(), idx);
            lexicon
                .by_first
                .entry(tokens[0].clone())
                .or_default()
                .push((tokens, idx));
        }
        lexicon
    }

    /// Newline-separated names; blank lines are ignored.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| MiningError::Input {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(Self::new(text.lines().filter(|l| !l.trim().is_empty())))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Lexicon indices of every occurrence in a token stream (overlaps included).
    fn matches<'a>(&'a self, tokens: &'a [String]) -> impl Iterator<Item = usize> + 'a {
        tokens.iter().enumerate().flat_map(move |(start, tok)| {
            self.by_first
                .get(tok)
                .into_iter()
                .flatten()
                .filter(move |(seq, _)| tokens[start..].starts_with(seq))
                .map(|(_, idx)| *idx)
        })
    }

    /// Lexicon names that occur in `text`, in lexicon order without repeats.
    pub fn find_in(&self, text: &str) -> Vec<&str> {
        let tokens: Vec<String> = tokenize(text).collect();
        let mut hit = vec![false; self.names.len()];
        for idx in self.matches(&tokens) {
            hit[idx] = true;
        }
        hit.iter()
            .enumerate()
            .filter(|(_, h)| **h)
            .map(|(i, _)| self.names[i].as_str())
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total_tokens: u64,
    pub entity_counts: BTreeMap<String, u64>,
    #[serde(default)]
    pub skipped_documents: u64,
}

impl CorpusStats {
    /// Zero counts for every lexicon entry.
    pub fn empty(lexicon: &Lexicon) -> Self {
        Self {
            total_tokens: 0,
            entity_counts: lexicon.names().iter().map(|n| (n.clone(), 0)).collect(),
            skipped_documents: 0,
        }
    }

    pub fn ingest(&mut self, lexicon: &Lexicon, document: &str) {
        let tokens: Vec<String> = tokenize(document).collect();
        self.total_tokens += tokens.len() as u64;
        for idx in lexicon.matches(&tokens) {
            *self
                .entity_counts
                .entry(lexicon.names[idx].clone())
                .or_insert(0) += 1;
        }
    }

    /// Combines partial counts; associative and commutative.
    pub fn merge(mut self, other: &CorpusStats) -> CorpusStats {
        self.total_tokens += other.total_tokens;
        self.skipped_documents += other.skipped_documents;
        for (name, count) in &other.entity_counts {
            *self.entity_counts.entry(name.clone()).or_insert(0) += count;
        }
        self
    }

    /// Exact `count / total_tokens`; `None` for unknown names or an empty corpus.
    pub fn frequency(&self, name: &str) -> Option<Ratio<u64>> {
        let count = *self.entity_counts.get(name)?;
        (self.total_tokens > 0).then(|| Ratio::new(count, self.total_tokens))
    }

    /// Header record followed by one record per entity.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Header {
            total_tokens: u64,
            skipped_documents: u64,
        }
        #[derive(Serialize)]
        struct Row<'a> {
            name: &'a str,
            count: u64,
            frequency: f64,
        }
        serde_json::to_writer(
            &mut out,
            &Header {
                total_tokens: self.total_tokens,
                skipped_documents: self.skipped_documents,
            },
        )?;
        out.write_all(b"\n")?;
        for (name, &count) in &self.entity_counts {
            let frequency = if self.total_tokens == 0 {
                0.0
            } else {
                count as f64 / self.total_tokens as f64
            };
            serde_json::to_writer(&mut out, &Row { name, count, frequency })?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Counts lexicon occurrences over a stream of documents.
///
/// Documents that fail to load are skipped and counted in `skipped_documents`.
pub fn count_entity_frequencies<I, E>(corpus: I, lexicon: &Lexicon) -> Result<CorpusStats>
where
    I: IntoIterator<Item = std::result::Result<String, E>>,
    E: std::fmt::Display,
{
    if lexicon.is_empty() {
        return Err(MiningError::EmptyLexicon);
    }
    let mut stats = CorpusStats::empty(lexicon);
    for document in corpus {
        match document {
            Ok(text) => stats.ingest(lexicon, &text),
            Err(err) => {
                stats.skipped_documents += 1;
                tracing::warn!(error = %err, "skipping unreadable document");
            }
        }
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RareEntity {
    pub name: String,
    pub count: u64,
    #[serde(serialize_with = "ratio_as_f64")]
    pub frequency: Ratio<u64>,
}

fn ratio_as_f64<S: serde::Serializer>(r: &Ratio<u64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(*r.numer() as f64 / *r.denom() as f64)
}

/// Entities whose frequency is strictly below `tau_rare`, ascending by frequency
/// with ties broken by name.
pub fn select_rare_entities(stats: &CorpusStats, config: &RarityConfig) -> Result<Vec<RareEntity>> {
    config.validate()?;
    if stats.total_tokens == 0 {
        return Err(MiningError::EmptyCorpus);
    }
    let tau_num = *config.tau_rare.numer() as u128;
    let tau_den = *config.tau_rare.denom() as u128;
    let total = stats.total_tokens as u128;
    let mut rare: Vec<RareEntity> = stats
        .entity_counts
        .iter()
        .filter(|(_, &count)| (count as u128) * tau_den < tau_num * total)
        .map(|(name, &count)| RareEntity {
            name: name.clone(),
            count,
            frequency: Ratio::new(count, stats.total_tokens),
        })
        .collect();
    rare.sort_by(|a, b| a.frequency.cmp(&b.frequency).then_with(|| a.name.cmp(&b.name)));
    Ok(rare)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Judgment {
    Keep,
    Drop,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditEntry {
    pub name: String,
    pub judgment: Judgment,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FilterReport {
    pub kept: Vec<String>,
    pub audit: Vec<AuditEntry>,
}

/// Keeps the candidates the judge labels KEEP, in input order. A failed judgment
/// marks the candidate UNDECIDED and excludes it.
pub fn filter_candidates<S: AsRef<str>>(candidates: &[S], judge: &dyn RarityJudge) -> FilterReport {
    let mut report = FilterReport::default();
    for candidate in candidates {
        let name = candidate.as_ref();
        let (judgment, error) = match judge.judge(name) {
            Ok(Verdict::Keep) => (Judgment::Keep, None),
            Ok(Verdict::Drop) => (Judgment::Drop, None),
            Err(err) => {
                tracing::warn!(candidate = name, error = %err, "rarity judgment failed");
                (Judgment::Undecided, Some(err.to_string()))
            }
        };
        if judgment == Judgment::Keep {
            report.kept.push(name.to_string());
        }
        report.audit.push(AuditEntry {
            name: name.to_string(),
            judgment,
            error,
        });
    }
    report
}

/// Documents from a directory of text files (sorted by file name) or from a
/// line-delimited JSON file of `{"id", "text"}` records.
pub fn read_corpus(path: &Path) -> Result<Vec<std::result::Result<String, String>>> {
    let meta = fs::metadata(path).map_err(|e| MiningError::Input {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    if meta.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        Ok(files
            .into_iter()
            .map(|p| fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display())))
            .collect())
    } else {
        #[derive(Deserialize)]
        struct Record {
            #[allow(dead_code)]
            id: serde_json::Value,
            text: String,
        }
        let reader = BufReader::new(fs::File::open(path)?);
        let mut docs = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            docs.push(
                serde_json::from_str::<Record>(&line)
                    .map(|r| r.text)
                    .map_err(|e| format!("line {}: {e}", idx + 1)),
            );
        }
        Ok(docs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::{ClientError, MockScript, ScriptEntry, ScriptedJudge};
    use proptest::prelude::*;

    fn ok(docs: &[&str]) -> Vec<std::result::Result<String, String>> {
        docs.iter().map(|d| Ok(d.to_string())).collect()
    }

    #[test]
    fn tokenizer_keeps_inner_hyphens() {
        let toks: Vec<_> = tokenize("Erdheim-Chester disease, (ECD) -- rare!").collect();
        assert_eq!(toks, ["erdheim-chester", "disease", "ecd", "rare"]);
    }

    #[test]
    fn single_occurrence_in_ten_tokens() {
        let lex = Lexicon::new(["erdheim-chester", "absent thing"]);
        let stats = count_entity_frequencies(
            ok(&["one two three erdheim-chester five six seven eight nine ten"]),
            &lex,
        )
        .unwrap();
        assert_eq!(stats.total_tokens, 10);
        assert_eq!(stats.entity_counts["erdheim-chester"], 1);
        assert_eq!(stats.frequency("erdheim-chester"), Some(Ratio::new(1, 10)));
        assert_eq!(stats.entity_counts["absent thing"], 0);
    }

    #[test]
    fn two_documents_hand_count() {
        let lex = Lexicon::new(["Castleman disease"]);
        let stats = count_entity_frequencies(
            ok(&["a castleman disease b c d", "CASTLEMAN Disease x y"]),
            &lex,
        )
        .unwrap();
        assert_eq!(stats.total_tokens, 10);
        assert_eq!(stats.entity_counts["Castleman disease"], 2);
    }

    #[test]
    fn unreadable_documents_are_skipped() {
        let lex = Lexicon::new(["x"]);
        let docs = vec![Ok("x y".to_string()), Err("broken".to_string()), Ok("x".to_string())];
        let stats = count_entity_frequencies(docs, &lex).unwrap();
        assert_eq!(stats.skipped_documents, 1);
        assert_eq!(stats.entity_counts["x"], 2);
        assert!(matches!(
            count_entity_frequencies(ok(&["x"]), &Lexicon::new(Vec::<String>::new())),
            Err(MiningError::EmptyLexicon)
        ));
    }

    fn stats_with(total: u64, counts: &[(&str, u64)]) -> CorpusStats {
        CorpusStats {
            total_tokens: total,
            entity_counts: counts.iter().map(|(n, c)| (n.to_string(), *c)).collect(),
            skipped_documents: 0,
        }
    }

    #[test]
    fn threshold_is_strict() {
        let cfg = RarityConfig::default();
        // 5e-7 is below, exactly 1e-6 is not
        let stats = stats_with(10_000_000, &[("below", 5), ("exact", 10), ("above", 11)]);
        let rare = select_rare_entities(&stats, &cfg).unwrap();
        let names: Vec<_> = rare.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["below"]);
        assert_eq!(rare[0].frequency, Ratio::new(5, 10_000_000));
    }

    #[test]
    fn rare_sorted_by_frequency_then_name() {
        let cfg = RarityConfig {
            tau_rare: Ratio::new(1, 2),
        };
        let stats = stats_with(100, &[("b", 3), ("a", 3), ("c", 1), ("d", 70)]);
        let names: Vec<_> = select_rare_entities(&stats, &cfg)
            .unwrap()
            .into_iter()
            .map(|r| r.name)
            .collect();
        assert_eq!(names, ["c", "a", "b"]);
    }

    #[test]
    fn empty_stats_rejected() {
        let stats = stats_with(0, &[("a", 0)]);
        assert!(matches!(
            select_rare_entities(&stats, &RarityConfig::default()),
            Err(MiningError::EmptyCorpus)
        ));
    }

    #[test]
    fn filter_keeps_scripted_subset_in_order() {
        let script = MockScript::from_entries(vec![
            ScriptEntry::response("teh", "DROP"),
            ScriptEntry::response("common cold", "DROP"),
            ScriptEntry::error("flaky", "timeout"),
            ScriptEntry::response("*", "KEEP"),
        ]);
        let judge = ScriptedJudge::new(script.player().unwrap());
        let names = ["alpha", "teh", "flaky", "common cold", "omega"];
        let report = filter_candidates(&names, &judge);
        assert_eq!(report.kept, ["alpha", "omega"]);
        assert_eq!(report.audit.len(), 5);
        assert_eq!(report.audit[2].judgment, Judgment::Undecided);
        assert!(report.audit[2].error.is_some());
    }

    #[test]
    fn keep_all_is_identity() {
        struct Always;
        impl RarityJudge for Always {
            fn judge(&self, _: &str) -> std::result::Result<Verdict, ClientError> {
                Ok(Verdict::Keep)
            }
        }
        let names = vec!["x".to_string(), "y".to_string()];
        assert_eq!(filter_candidates(&names, &Always).kept, names);
    }

    #[test]
    fn stats_jsonl_has_header() {
        let stats = stats_with(4, &[("a", 1)]);
        let mut buf = Vec::new();
        stats.write_jsonl(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"total_tokens\":4,\"skipped_documents\":0}\n{\"name\":\"a\",\"count\":1,\"frequency\":0.25}\n"
        );
    }

    fn arb_stats() -> impl Strategy<Value = CorpusStats> {
        (1u64..10_000, proptest::collection::btree_map("[a-e]{1,3}", 0u64..50, 0..8)).prop_map(
            |(total, counts)| CorpusStats {
                total_tokens: total + counts.values().sum::<u64>(),
                entity_counts: counts,
                skipped_documents: 0,
            },
        )
    }

    proptest! {
        #[test]
        fn merge_is_associative_and_commutative(a in arb_stats(), b in arb_stats(), c in arb_stats()) {
            prop_assert_eq!(a.clone().merge(&b), b.clone().merge(&a));
            prop_assert_eq!(a.clone().merge(&b).merge(&c), a.clone().merge(&b.clone().merge(&c)));
        }

        #[test]
        fn rare_selection_is_monotone_in_tau(stats in arb_stats(), t1 in 1i64..999, t2 in 1i64..999) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let small = select_rare_entities(&stats, &RarityConfig { tau_rare: Ratio::new(lo, 1000) }).unwrap();
            let large = select_rare_entities(&stats, &RarityConfig { tau_rare: Ratio::new(hi, 1000) }).unwrap();
            for r in &small {
                prop_assert!(large.iter().any(|x| x.name == r.name));
                prop_assert!(stats.entity_counts.contains_key(&r.name));
            }
        }

        #[test]
        fn frequencies_bounded(docs in proptest::collection::vec("[a-c ]{0,30}", 1..6)) {
            let lex = Lexicon::new(["a", "b", "a b", "c c"]);
            let stats = count_entity_frequencies(docs.into_iter().map(Ok::<_, String>), &lex).unwrap();
            if stats.total_tokens > 0 {
                let sum: Ratio<u64> = lex.names().iter().map(|n| stats.frequency(n).unwrap()).sum();
                prop_assert!(sum <= Ratio::from_integer(lex.len() as u64));
                for n in lex.names() {
                    prop_assert!(stats.frequency(n).unwrap() <= Ratio::from_integer(1));
                }
            }
        }
    }
}
