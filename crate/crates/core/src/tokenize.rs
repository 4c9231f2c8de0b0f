//! Word- and character-level tokenization of event records.
//!
//! Both schemes share one vocabulary type with reserved `<pad>` and
//! `<oov>` entries. Word vocabularies are built once from a designated
//! build window with a frequency cutoff; sub-cutoff tokens fold into
//! `<oov>` so its probability is trainable. The character alphabet is
//! fixed printable ASCII (codes 32..=126), which can represent any log
//! entry regardless of logging source.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::EventRecord;

pub const PAD_TOKEN: &str = "<pad>";
pub const OOV_TOKEN: &str = "<oov>";

/// Number of modeled fields per event (time excluded, principals split).
pub const WORD_FIELDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenMode {
    Word,
    Char,
}

impl TokenMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenMode::Word => "word",
            TokenMode::Char => "char",
        }
    }
}

impl std::str::FromStr for TokenMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(TokenMode::Word),
            "char" => Ok(TokenMode::Char),
            other => Err(Error::Config(format!("unknown tokenization {other:?}"))),
        }
    }
}

/// A tokenized log line: `ids.len()` is the sequence length K.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Token <-> id table shared over all log fields.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    mode: TokenMode,
    delimiter: char,
    min_count: u32,
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    counts: Vec<u64>,
    pub pad_id: u32,
    pub oov_id: u32,
}

impl fmt::Display for Vocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} vocabulary, {} entries", self.mode.as_str(), self.size())
    }
}

impl Vocabulary {
    /// Vocabulary size C; all emitted ids are < C.
    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn mode(&self) -> TokenMode {
        self.mode
    }

    pub fn delimiter(&self) -> char {
        self.delimiter
    }

    pub fn min_count(&self) -> u32 {
        self.min_count
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(|s| s.as_str())
    }

    /// Id of a token, falling back to `<oov>` for unseen ones.
    pub fn id_of(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(self.oov_id)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    /// Build a word vocabulary from an event stream.
    ///
    /// Tokens with corpus frequency below `min_count` are excluded and
    /// their counts fold into `<oov>`. Id assignment is deterministic:
    /// descending frequency, ties broken lexicographically.
    pub fn build_word<'a, I>(events: I, min_count: u32) -> Result<Self>
    where
        I: IntoIterator<Item = &'a EventRecord>,
    {
        if min_count < 1 {
            return Err(Error::Config("min_count must be >= 1".into()));
        }
        let mut freq: HashMap<String, u64> = HashMap::new();
        let mut any = false;
        for ev in events {
            any = true;
            for f in ev.fields() {
                *freq.entry(f.to_string()).or_insert(0) += 1;
            }
        }
        if !any {
            return Err(Error::EmptyInput("no events to build vocabulary from".into()));
        }
        let mut kept: Vec<(String, u64)> = Vec::new();
        let mut oov_count = 0u64;
        for (tok, n) in freq {
            if n >= min_count as u64 {
                kept.push((tok, n));
            } else {
                oov_count += n;
            }
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut vocab = Vocabulary {
            mode: TokenMode::Word,
            delimiter: ',',
            min_count,
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
            counts: Vec::new(),
            pad_id: 0,
            oov_id: 1,
        };
        vocab.push(PAD_TOKEN.to_string(), 0);
        vocab.push(OOV_TOKEN.to_string(), oov_count);
        for (tok, n) in kept {
            vocab.push(tok, n);
        }
        Ok(vocab)
    }

    /// The fixed character vocabulary: printable ASCII plus specials.
    pub fn char_vocab() -> Self {
        let mut vocab = Vocabulary {
            mode: TokenMode::Char,
            delimiter: ',',
            min_count: 1,
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
            counts: Vec::new(),
            pad_id: 0,
            oov_id: 1,
        };
        vocab.push(PAD_TOKEN.to_string(), 0);
        vocab.push(OOV_TOKEN.to_string(), 0);
        for code in 32u8..=126 {
            vocab.push((code as char).to_string(), 0);
        }
        vocab
    }

    fn push(&mut self, token: String, count: u64) {
        let id = self.id_to_token.len() as u32;
        self.token_to_id.insert(token.clone(), id);
        self.id_to_token.push(token);
        self.counts.push(count);
    }

    /// Word tokenization: exactly [`WORD_FIELDS`] ids in fixed field
    /// order; the time field never participates.
    pub fn tokenize_word(&self, ev: &EventRecord) -> TokenSequence {
        debug_assert_eq!(self.mode, TokenMode::Word);
        TokenSequence {
            ids: ev.fields().iter().map(|f| self.id_of(f)).collect(),
        }
    }

    /// Character tokenization: the ten fields joined by the delimiter,
    /// one id per character. Non-printable bytes map to `<oov>`.
    pub fn tokenize_char(&self, ev: &EventRecord) -> TokenSequence {
        debug_assert_eq!(self.mode, TokenMode::Char);
        let rendered = ev.fields().join(&self.delimiter.to_string());
        TokenSequence {
            ids: rendered.chars().map(|c| self.char_id(c)).collect(),
        }
    }

    fn char_id(&self, c: char) -> u32 {
        let code = c as u32;
        if (32..=126).contains(&code) {
            2 + (code - 32)
        } else {
            self.oov_id
        }
    }

    pub fn tokenize(&self, ev: &EventRecord) -> TokenSequence {
        match self.mode {
            TokenMode::Word => self.tokenize_word(ev),
            TokenMode::Char => self.tokenize_char(ev),
        }
    }

    /// Serialize as a text file: a header row naming mode, delimiter and
    /// min_count, then one `token<TAB>id<TAB>count` row per entry.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(
            w,
            "#mode={}\tdelimiter={}\tmin_count={}",
            self.mode.as_str(),
            self.delimiter,
            self.min_count
        )?;
        for (id, tok) in self.id_to_token.iter().enumerate() {
            writeln!(w, "{}\t{}\t{}", tok, id, self.counts[id])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::EmptyInput(format!("vocabulary file {}", path.display())))??;
        let mut mode = None;
        let mut delimiter = ',';
        let mut min_count = 1u32;
        for part in header.trim_start_matches('#').split('\t') {
            match part.split_once('=') {
                Some(("mode", v)) => mode = Some(v.parse::<TokenMode>()?),
                Some(("delimiter", v)) => {
                    delimiter = v.chars().next().unwrap_or(',');
                }
                Some(("min_count", v)) => {
                    min_count = v
                        .parse()
                        .map_err(|_| Error::Config(format!("bad min_count {v:?}")))?;
                }
                _ => return Err(Error::Config(format!("bad vocabulary header field {part:?}"))),
            }
        }
        let mode = mode.ok_or_else(|| Error::Config("vocabulary header missing mode".into()))?;
        let mut vocab = Vocabulary {
            mode,
            delimiter,
            min_count,
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
            counts: Vec::new(),
            pad_id: 0,
            oov_id: 1,
        };
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut it = line.split('\t');
            let (tok, id, count) = (it.next(), it.next(), it.next());
            let (tok, id, count) = match (tok, id, count) {
                (Some(t), Some(i), Some(c)) => (t, i, c),
                _ => {
                    return Err(Error::Parse {
                        line: (i + 2) as u64,
                        reason: "expected token<TAB>id<TAB>count".into(),
                    })
                }
            };
            let id: u32 = id.parse().map_err(|_| Error::Parse {
                line: (i + 2) as u64,
                reason: format!("bad id {id:?}"),
            })?;
            let count: u64 = count.parse().map_err(|_| Error::Parse {
                line: (i + 2) as u64,
                reason: format!("bad count {count:?}"),
            })?;
            if id as usize != vocab.id_to_token.len() {
                return Err(Error::Parse {
                    line: (i + 2) as u64,
                    reason: format!("ids must be dense and ascending, got {id}"),
                });
            }
            vocab.push(tok.to_string(), count);
        }
        if vocab.size() < 2
            || vocab.id_to_token[0] != PAD_TOKEN
            || vocab.id_to_token[1] != OOV_TOKEN
        {
            return Err(Error::Config(
                "vocabulary must start with <pad> and <oov> entries".into(),
            ));
        }
        Ok(vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_auth_line;

    fn ev(line: &str) -> EventRecord {
        parse_auth_line(line, 1).unwrap()
    }

    fn corpus() -> Vec<EventRecord> {
        // "a"-ish tokens appear 5 times, "b"-ish once
        let mut v = Vec::new();
        for t in 0..5 {
            v.push(ev(&format!(
                "{t},U1@DOM1,U1@DOM1,C1,C2,Kerberos,Network,LogOn,Success"
            )));
        }
        v.push(ev("9,U9@DOM9,U9@DOM9,C9,C8,NTLM,Batch,LogOff,Success"));
        v
    }

    #[test]
    fn min_count_cutoff_folds_into_oov() {
        let c = corpus();
        let vocab = Vocabulary::build_word(c.iter(), 2).unwrap();
        assert!(vocab.contains("U1"));
        assert!(!vocab.contains("U9"));
        assert_eq!(vocab.id_of("U9"), vocab.oov_id);
        // dropped token counts fold into <oov>
        assert!(vocab.counts[vocab.oov_id as usize] > 0);
    }

    #[test]
    fn min_count_one_keeps_everything() {
        let c = corpus();
        let vocab = Vocabulary::build_word(c.iter(), 1).unwrap();
        for e in &c {
            for f in e.fields() {
                assert!(vocab.contains(f), "missing {f}");
            }
        }
    }

    #[test]
    fn empty_stream_is_error() {
        assert!(Vocabulary::build_word(std::iter::empty(), 1).is_err());
    }

    #[test]
    fn deterministic_id_assignment() {
        let c = corpus();
        let a = Vocabulary::build_word(c.iter(), 1).unwrap();
        let b = Vocabulary::build_word(c.iter(), 1).unwrap();
        assert_eq!(a.id_to_token, b.id_to_token);
        // descending frequency, ties lexicographic
        for w in a.counts[2..].windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn word_tokenize_is_ten_ids_time_excluded() {
        let c = corpus();
        let vocab = Vocabulary::build_word(c.iter(), 1).unwrap();
        let seq = vocab.tokenize_word(&c[0]);
        assert_eq!(seq.len(), WORD_FIELDS);
        assert!(seq.ids.iter().all(|&id| (id as usize) < vocab.size()));
        assert!(seq.ids.iter().all(|&id| id != vocab.oov_id && id != vocab.pad_id));
        // same record at a different time tokenizes identically
        let later = ev("99999,U1@DOM1,U1@DOM1,C1,C2,Kerberos,Network,LogOn,Success");
        assert_eq!(vocab.tokenize_word(&later), seq);
    }

    #[test]
    fn unseen_token_maps_to_oov_position() {
        let c = corpus();
        let vocab = Vocabulary::build_word(c.iter(), 1).unwrap();
        let novel = ev("3,U1@DOM1,U1@DOM1,C9999,C2,Kerberos,Network,LogOn,Success");
        let seq = vocab.tokenize_word(&novel);
        assert_eq!(seq.ids[4], vocab.oov_id);
        assert_ne!(seq.ids[5], vocab.oov_id);
    }

    #[test]
    fn char_tokenize_small_example() {
        let vocab = Vocabulary::char_vocab();
        // fields ["ab","c"] joined by ',' -> 'a','b',',','c'
        let ids: Vec<u32> = "ab,c".chars().map(|c| vocab.char_id(c)).collect();
        assert_eq!(ids.len(), 4);
        assert_eq!(vocab.token(ids[0]), Some("a"));
        assert_eq!(vocab.token(ids[1]), Some("b"));
        assert_eq!(vocab.token(ids[2]), Some(","));
        assert_eq!(vocab.token(ids[3]), Some("c"));
    }

    #[test]
    fn char_length_matches_rendered_line_minus_time_prefix() {
        let vocab = Vocabulary::char_vocab();
        let out = crate::ingest::synth::generate_synthetic(
            &crate::ingest::synth::SynthConfig {
                users: 5,
                pcs: 10,
                days: 1,
                events_per_user_day: 20,
                red_events: 0,
                red_start_day: 0,
                domains: 2,
            },
            5,
        )
        .unwrap();
        for ev in out.events.iter().take(100) {
            let seq = vocab.tokenize_char(ev);
            let line = ev.to_line();
            let prefix = format!("{},", ev.time);
            assert_eq!(seq.len(), line.len() - prefix.len());
        }
    }

    #[test]
    fn non_printable_maps_to_oov() {
        let vocab = Vocabulary::char_vocab();
        assert_eq!(vocab.char_id('\u{7}'), vocab.oov_id);
        assert_eq!(vocab.char_id('é'), vocab.oov_id);
        assert_ne!(vocab.char_id(' '), vocab.oov_id);
        assert_ne!(vocab.char_id('~'), vocab.oov_id);
    }

    #[test]
    fn char_vocab_size_is_printable_ascii_plus_specials() {
        let vocab = Vocabulary::char_vocab();
        assert_eq!(vocab.size(), 2 + 95);
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let c = corpus();
        for vocab in [
            Vocabulary::build_word(c.iter(), 2).unwrap(),
            Vocabulary::char_vocab(),
        ] {
            let path = dir.path().join("vocab.tsv");
            vocab.save(&path).unwrap();
            let loaded = Vocabulary::load(&path).unwrap();
            assert_eq!(loaded.id_to_token, vocab.id_to_token);
            assert_eq!(loaded.counts, vocab.counts);
            assert_eq!(loaded.mode(), vocab.mode());
            assert_eq!(loaded.min_count(), vocab.min_count());
        }
    }
}
