//! Protagonist attribute tokens.
//!
//! Two sources feed the scorers: verbs and adjectives attached to protagonist
//! mentions in a dependency parse (CoNLL-U), and short phrases produced by an
//! external commonsense-inference model (JSONL). Neither model runs here.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Corpus, Story};
use crate::pov::Protagonist;
use crate::{Diagnostic, Error, Result};

pub mod stopwords {
    use std::collections::HashSet;
    use std::sync::OnceLock;

    /// The bundled 127-word English list.
    pub const LIST: &str = include_str!("../data/stopwords_en.txt");

    fn set() -> &'static HashSet<&'static str> {
        static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
        SET.get_or_init(|| {
            LIST.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .collect()
        })
    }

    pub fn is_stopword(word: &str) -> bool {
        set().contains(word)
    }

    pub fn len() -> usize {
        set().len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeSource {
    Dependency,
    Inference,
}

impl AttributeSource {
    pub const ALL: [AttributeSource; 2] = [AttributeSource::Dependency, AttributeSource::Inference];

    pub fn as_str(self) -> &'static str {
        match self {
            AttributeSource::Dependency => "dependency",
            AttributeSource::Inference => "inference",
        }
    }
}

impl fmt::Display for AttributeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttributeSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dependency" => Ok(AttributeSource::Dependency),
            "inference" => Ok(AttributeSource::Inference),
            other => Err(Error::Config(format!("unknown attribute source `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeToken {
    pub surface: String,
    pub source: AttributeSource,
    pub weight: u32,
}

/// Multiset of attribute tokens for one story and one source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSet {
    pub story_id: String,
    pub source: AttributeSource,
    tokens: BTreeMap<String, u32>,
}

impl AttributeSet {
    pub fn new(story_id: impl Into<String>, source: AttributeSource) -> Self {
        Self {
            story_id: story_id.into(),
            source,
            tokens: BTreeMap::new(),
        }
    }

    /// Add `weight` occurrences of `surface`, lowercased. Empty or
    /// whitespace-containing surfaces are ignored.
    pub fn add(&mut self, surface: &str, weight: u32) {
        let surface = surface.trim().to_lowercase();
        if surface.is_empty() || surface.contains(char::is_whitespace) || weight == 0 {
            return;
        }
        *self.tokens.entry(surface).or_default() += weight;
    }

    pub fn with_tokens<'a>(
        story_id: impl Into<String>,
        source: AttributeSource,
        tokens: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        let mut set = Self::new(story_id, source);
        for token in tokens {
            set.add(token, 1);
        }
        set
    }

    pub fn merge(&mut self, other: &AttributeSet) {
        for (surface, &weight) in &other.tokens {
            *self.tokens.entry(surface.clone()).or_default() += weight;
        }
    }

    /// `(surface, weight)` pairs in lexical order.
    pub fn weighted(&self) -> impl Iterator<Item = (&str, u32)> + '_ {
        self.tokens.iter().map(|(s, &w)| (s.as_str(), w))
    }

    pub fn tokens(&self) -> Vec<AttributeToken> {
        self.weighted()
            .map(|(surface, weight)| AttributeToken {
                surface: surface.to_string(),
                source: self.source,
                weight,
            })
            .collect()
    }

    pub fn weight(&self, surface: &str) -> u32 {
        self.tokens.get(surface).copied().unwrap_or(0)
    }

    pub fn types(&self) -> impl Iterator<Item = &str> + '_ {
        self.tokens.keys().map(String::as_str)
    }

    pub fn total_weight(&self) -> u64 {
        self.tokens.values().map(|&w| u64::from(w)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// Same types, every weight set to 1.
    pub fn types_only(&self) -> Self {
        Self {
            story_id: self.story_id.clone(),
            source: self.source,
            tokens: self.tokens.keys().map(|k| (k.clone(), 1)).collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Dependency annotations

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedToken {
    pub form: String,
    pub lemma: String,
    pub upos: String,
    /// 1-based index of the head within the sentence; 0 for the root.
    pub head: usize,
    pub deprel: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSentence {
    /// Offset of the sentence's first token in the story token stream.
    pub token_start: usize,
    pub tokens: Vec<ParsedToken>,
}

impl ParsedSentence {
    pub fn token_end(&self) -> usize {
        self.token_start + self.tokens.len()
    }
}

#[derive(Debug, Clone, Default)]
pub struct DependencyAnnotations {
    pub by_story: HashMap<String, Vec<ParsedSentence>>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Read CoNLL-U sentences keyed by a `# story_id = ...` comment.
///
/// The story id carries over to following sentences until changed. A
/// `# token_start = N` comment pins the sentence offset in the story token
/// stream; without it sentences are laid end to end. Multiword-token ranges
/// and empty nodes are ignored.
pub fn load_conllu(path: &Path) -> Result<DependencyAnnotations> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = DependencyAnnotations::default();
    let mut story_id: Option<String> = None;
    let mut token_start: Option<usize> = None;
    let mut tokens: Vec<ParsedToken> = Vec::new();
    let mut sentence_line = 0usize;
    let mut broken = false;

    let flush = |out: &mut DependencyAnnotations,
                     story_id: &Option<String>,
                     token_start: &mut Option<usize>,
                     tokens: &mut Vec<ParsedToken>,
                     broken: &mut bool,
                     line: usize| {
        if tokens.is_empty() {
            *broken = false;
            return;
        }
        let sentence_tokens = std::mem::take(tokens);
        if std::mem::take(broken) {
            *token_start = None;
            return;
        }
        let Some(id) = story_id else {
            out.diagnostics
                .push(Diagnostic::new(line, "sentence without a story_id comment"));
            *token_start = None;
            return;
        };
        let sentences = out.by_story.entry(id.clone()).or_default();
        let start = token_start
            .take()
            .unwrap_or_else(|| sentences.last().map_or(0, ParsedSentence::token_end));
        sentences.push(ParsedSentence {
            token_start: start,
            tokens: sentence_tokens,
        });
    };

    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line_no = index + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end();
        if line.is_empty() {
            flush(&mut out, &story_id, &mut token_start, &mut tokens, &mut broken, sentence_line);
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                match key.trim() {
                    "story_id" => story_id = Some(value.trim().to_string()),
                    "token_start" => match value.trim().parse() {
                        Ok(n) => token_start = Some(n),
                        Err(_) => out
                            .diagnostics
                            .push(Diagnostic::new(line_no, "token_start is not an integer")),
                    },
                    _ => {}
                }
            }
            continue;
        }
        if tokens.is_empty() {
            sentence_line = line_no;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            out.diagnostics.push(Diagnostic::new(
                line_no,
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
            broken = true;
            continue;
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let parsed = cols[0]
            .parse::<usize>()
            .ok()
            .filter(|&id| id == tokens.len() + 1)
            .and_then(|_| cols[6].parse::<usize>().ok());
        let Some(head) = parsed else {
            out.diagnostics
                .push(Diagnostic::new(line_no, "bad token id or head"));
            broken = true;
            continue;
        };
        tokens.push(ParsedToken {
            form: cols[1].to_string(),
            lemma: cols[2].to_string(),
            upos: cols[3].to_string(),
            head,
            deprel: cols[7].to_string(),
        });
    }
    flush(&mut out, &story_id, &mut token_start, &mut tokens, &mut broken, sentence_line);
    Ok(out)
}

/// Which string of a parsed token becomes the attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeForm {
    #[default]
    Lemma,
    Surface,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DependencyOptions {
    pub form: AttributeForm,
    /// Also take verbs whose object is a protagonist mention.
    pub object_verbs: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtractionReport {
    /// Sentences whose tokens do not line up with the story tokens.
    pub skipped_sentences: usize,
    /// Protagonist mentions in token ranges no parsed sentence covers.
    pub unparsed_mentions: usize,
}

const COPULAS: [&str; 3] = ["be", "seem", "become"];

fn relation(deprel: &str) -> &str {
    deprel.split(':').next().unwrap_or(deprel)
}

fn is_subject(deprel: &str) -> bool {
    matches!(relation(deprel), "nsubj" | "nsubjpass")
}

fn is_object(deprel: &str) -> bool {
    matches!(relation(deprel), "obj" | "dobj" | "iobj")
}

/// Verbs and adjectives attached to protagonist mentions.
///
/// Collected relations: verbs whose subject is a mention (and whose object
/// is, with `object_verbs`); adjectival modifiers of a mention; predicate
/// adjectives of a copula whose subject is a mention, in either the UD shape
/// (`nsubj` → ADJ with `cop`) or the `acomp` shape. Copular verbs themselves
/// are never attributes.
pub fn extract_dependency_attributes(
    story: &Story,
    protagonist: &Protagonist,
    sentences: &[ParsedSentence],
    options: DependencyOptions,
) -> (AttributeSet, ExtractionReport) {
    let mut set = AttributeSet::new(&story.id, AttributeSource::Dependency);
    let mut report = ExtractionReport::default();
    let mentions = &protagonist.cluster.mentions;
    let mut covered = vec![false; mentions.len()];

    for sentence in sentences {
        let aligned = sentence.token_end() <= story.tokens.len()
            && sentence
                .tokens
                .iter()
                .zip(&story.tokens[sentence.token_start..])
                .all(|(p, s)| p.form == *s);
        if !aligned {
            log::warn!(
                "story {}: sentence at token {} does not match the story text; skipped",
                story.id,
                sentence.token_start
            );
            report.skipped_sentences += 1;
            continue;
        }
        for (k, mention) in mentions.iter().enumerate() {
            if mention.start >= sentence.token_start && mention.end <= sentence.token_end() {
                covered[k] = true;
                let local = (mention.start - sentence.token_start)..(mention.end - sentence.token_start);
                collect_for_mention(sentence, local, options, &mut set);
            }
        }
    }
    report.unparsed_mentions = covered.iter().filter(|c| !**c).count();
    (set, report)
}

fn collect_for_mention(
    sentence: &ParsedSentence,
    span: std::ops::Range<usize>,
    options: DependencyOptions,
    set: &mut AttributeSet,
) {
    let tokens = &sentence.tokens;
    // Mention head: the span token whose head lies outside the span.
    let Some(m) = span
        .clone()
        .find(|&i| {
            let head = tokens[i].head;
            head == 0 || !span.contains(&(head - 1))
        })
    else {
        return;
    };
    let text = |i: usize| match options.form {
        AttributeForm::Lemma => tokens[i].lemma.as_str(),
        AttributeForm::Surface => tokens[i].form.as_str(),
    };
    let is_copula = |i: usize| COPULAS.contains(&tokens[i].lemma.to_lowercase().as_str());
    let children = |i: usize| {
        tokens
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.head == i + 1)
            .map(|(j, _)| j)
    };

    let deprel = tokens[m].deprel.as_str();
    if tokens[m].head > 0 {
        let h = tokens[m].head - 1;
        let head = &tokens[h];
        let subject = is_subject(deprel);
        if (subject || (options.object_verbs && is_object(deprel)))
            && head.upos == "VERB"
            && !is_copula(h)
        {
            set.add(text(h), 1);
        }
        if subject {
            if head.upos == "ADJ" {
                set.add(text(h), 1);
            }
            if is_copula(h) {
                for c in children(h) {
                    if tokens[c].upos == "ADJ"
                        && matches!(relation(&tokens[c].deprel), "acomp" | "xcomp" | "attr")
                    {
                        set.add(text(c), 1);
                    }
                }
            }
        }
    }
    for c in children(m) {
        if tokens[c].upos == "ADJ" && relation(&tokens[c].deprel) == "amod" {
            set.add(text(c), 1);
        }
    }
}

// ---------------------------------------------------------------------------
// Inference phrases

/// Content words of a phrase: lowercased, punctuation and stop words removed.
pub fn phrase_content_words(phrase: &str) -> Vec<String> {
    tokenize(&phrase.to_lowercase())
        .into_iter()
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .filter(|t| !stopwords::is_stopword(t))
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct InferenceAttributes {
    pub by_story: HashMap<String, AttributeSet>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Deserialize)]
struct InferenceRecord {
    story_id: String,
    phrases: Vec<String>,
}

/// Read `{"story_id", "phrases": [...]}` lines. Records for unknown stories
/// are skipped with a warning; empty phrases are dropped. Several records for
/// one story accumulate.
pub fn load_inference_attributes(path: &Path, corpus: &Corpus) -> Result<InferenceAttributes> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = InferenceAttributes::default();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line_no = index + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: InferenceRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                out.diagnostics
                    .push(Diagnostic::new(line_no, format!("malformed record: {e}")));
                continue;
            }
        };
        if corpus.story(&record.story_id).is_none() {
            log::warn!("{}:{line_no}: unknown story {}", path.display(), record.story_id);
            out.diagnostics.push(Diagnostic::new(
                line_no,
                format!("unknown story_id {}", record.story_id),
            ));
            continue;
        }
        let set = out
            .by_story
            .entry(record.story_id.clone())
            .or_insert_with(|| AttributeSet::new(&record.story_id, AttributeSource::Inference));
        for phrase in &record.phrases {
            if phrase.trim().is_empty() {
                out.diagnostics
                    .push(Diagnostic::new(line_no, "empty phrase skipped"));
                continue;
            }
            for word in phrase_content_words(phrase) {
                set.add(&word, 1);
            }
        }
    }
    Ok(out)
}

/// Every type in `set`, for no-invention checks.
pub fn surfaces(set: &AttributeSet) -> HashSet<String> {
    set.types().map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::WriterGroup;
    use crate::pov::{EntityCluster, Mention, MentionKind, PronounTable};
    use std::io::Write;

    #[test]
    fn stopword_list_has_127_entries() {
        assert_eq!(stopwords::len(), 127);
        assert!(stopwords::is_stopword("very"));
        assert!(!stopwords::is_stopword("happy"));
    }

    #[test]
    fn phrases_decompose_into_content_words() {
        assert_eq!(phrase_content_words("very happy"), ["happy"]);
        assert_eq!(phrase_content_words("Wants to go home."), ["wants", "go", "home"]);
        assert!(phrase_content_words("to be").is_empty());
    }

    #[test]
    fn attribute_set_multiset_semantics() {
        let mut set = AttributeSet::with_tokens("s", AttributeSource::Inference, ["Smart", "smart", "kind"]);
        assert_eq!(set.weight("smart"), 2);
        assert_eq!(set.total_weight(), 3);
        set.add("two words", 1);
        set.add("", 1);
        assert_eq!(set.len(), 2);
        assert_eq!(set.types_only().total_weight(), 2);
    }

    fn protagonist(spans: &[(usize, &str)]) -> Protagonist {
        let cluster = EntityCluster {
            id: "c".into(),
            mentions: spans
                .iter()
                .map(|&(i, t)| Mention {
                    start: i,
                    end: i + 1,
                    text: t.into(),
                    kind: MentionKind::Named,
                })
                .collect(),
        };
        Protagonist::new(cluster, &PronounTable::default())
    }

    fn conll(rows: &[(&str, &str, &str, usize, &str)]) -> ParsedSentence {
        ParsedSentence {
            token_start: 0,
            tokens: rows
                .iter()
                .map(|&(form, lemma, upos, head, deprel)| ParsedToken {
                    form: form.into(),
                    lemma: lemma.into(),
                    upos: upos.into(),
                    head,
                    deprel: deprel.into(),
                })
                .collect(),
        }
    }

    #[test]
    fn copula_excluded_predicate_adjective_kept() {
        let story = Story::new("s", "p", WriterGroup::Human, "Anna was tired .");
        let p = protagonist(&[(0, "Anna")]);
        let ud = conll(&[
            ("Anna", "Anna", "PROPN", 3, "nsubj"),
            ("was", "be", "AUX", 3, "cop"),
            ("tired", "tired", "ADJ", 0, "root"),
            (".", ".", "PUNCT", 3, "punct"),
        ]);
        let (set, report) = extract_dependency_attributes(&story, &p, &[ud], Default::default());
        assert_eq!(set.types().collect::<Vec<_>>(), ["tired"]);
        assert_eq!(report, ExtractionReport::default());

        let acomp = conll(&[
            ("Anna", "Anna", "PROPN", 2, "nsubj"),
            ("was", "be", "AUX", 0, "ROOT"),
            ("tired", "tired", "ADJ", 2, "acomp"),
            (".", ".", "PUNCT", 2, "punct"),
        ]);
        let (set, _) = extract_dependency_attributes(&story, &p, &[acomp], Default::default());
        assert_eq!(set.types().collect::<Vec<_>>(), ["tired"]);
    }

    #[test]
    fn subject_verbs_modifiers_and_optional_objects() {
        let story = Story::new("s", "p", WriterGroup::Human, "Nobody saw brave Tom , who ran .");
        let rows = [
            ("Nobody", "nobody", "PRON", 2, "nsubj"),
            ("saw", "see", "VERB", 0, "root"),
            ("brave", "brave", "ADJ", 4, "amod"),
            ("Tom", "Tom", "PROPN", 2, "obj"),
            (",", ",", "PUNCT", 4, "punct"),
            ("who", "who", "PRON", 7, "nsubj"),
            ("ran", "run", "VERB", 4, "acl:relcl"),
            (".", ".", "PUNCT", 2, "punct"),
        ];
        let p = protagonist(&[(3, "Tom"), (5, "who")]);
        let (set, _) =
            extract_dependency_attributes(&story, &p, &[conll(&rows)], Default::default());
        assert_eq!(set.types().collect::<Vec<_>>(), ["brave", "run"]);

        let options = DependencyOptions {
            form: AttributeForm::Surface,
            object_verbs: true,
        };
        let (set, _) = extract_dependency_attributes(&story, &p, &[conll(&rows)], options);
        assert_eq!(set.types().collect::<Vec<_>>(), ["brave", "ran", "saw"]);
    }

    #[test]
    fn misaligned_or_missing_sentences_are_counted() {
        let story = Story::new("s", "p", WriterGroup::Human, "Anna ran . Anna fell .");
        let p = protagonist(&[(0, "Anna"), (3, "Anna")]);
        let wrong = conll(&[("Bob", "Bob", "PROPN", 2, "nsubj"), ("ran", "run", "VERB", 0, "root")]);
        let (set, report) = extract_dependency_attributes(&story, &p, &[wrong], Default::default());
        assert!(set.is_empty());
        assert_eq!(report.skipped_sentences, 1);
        assert_eq!(report.unparsed_mentions, 2);
    }

    #[test]
    fn protagonist_absent_from_parses_gives_empty_set() {
        let story = Story::new("s", "p", WriterGroup::Human, "Rain fell .");
        let p = protagonist(&[]);
        let s = conll(&[
            ("Rain", "rain", "NOUN", 2, "nsubj"),
            ("fell", "fall", "VERB", 0, "root"),
            (".", ".", "PUNCT", 2, "punct"),
        ]);
        let (set, _) = extract_dependency_attributes(&story, &p, &[s], Default::default());
        assert!(set.is_empty());
    }

    #[test]
    fn conllu_reader_offsets_and_errors() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        write!(
            file,
            "# story_id = a\n1\tHe\the\tPRON\t_\t_\t2\tnsubj\t_\t_\n2\tran\trun\tVERB\t_\t_\t0\troot\t_\t_\n\n\
             1\tHe\the\tPRON\t_\t_\t2\tnsubj\t_\t_\n2-3\tdidn't\t_\t_\t_\t_\t_\t_\t_\t_\n2\tfell\tfall\tVERB\t_\t_\t0\troot\t_\t_\n\n\
             # story_id = b\n# token_start = 7\n1\tShe\tshe\tPRON\t_\t_\t0\troot\t_\t_\n\n\
             1\tbroken\tline\n"
        )
        .unwrap();
        let ann = load_conllu(file.path()).unwrap();
        let a = &ann.by_story["a"];
        assert_eq!(a.len(), 2);
        assert_eq!(a[1].token_start, 2);
        assert_eq!(ann.by_story["b"][0].token_start, 7);
        assert_eq!(ann.diagnostics.len(), 1);
    }
}
