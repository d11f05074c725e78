//! Prompt/story corpus: JSONL loading, tokenization and descriptive statistics.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::pov::PovLabel;
use crate::{Diagnostic, Error, Result};

/// Line-break marker used by the WritingPrompts dumps.
pub const NEWLINE_MARKER: &str = "<newline>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WriterGroup {
    Human,
    Machine,
}

impl WriterGroup {
    pub const ALL: [WriterGroup; 2] = [WriterGroup::Human, WriterGroup::Machine];

    pub fn as_str(self) -> &'static str {
        match self {
            WriterGroup::Human => "human",
            WriterGroup::Machine => "machine",
        }
    }
}

impl fmt::Display for WriterGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WriterGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "human" => Ok(WriterGroup::Human),
            "machine" => Ok(WriterGroup::Machine),
            other => Err(Error::Config(format!("unknown writer group `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub id: String,
    pub text: String,
    pub pov_label: Option<PovLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Story {
    pub id: String,
    pub prompt_id: String,
    pub writer: WriterGroup,
    pub text: String,
    pub tokens: Vec<String>,
}

impl Story {
    pub fn new(
        id: impl Into<String>,
        prompt_id: impl Into<String>,
        writer: WriterGroup,
        text: impl Into<String>,
    ) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Self {
            id: id.into(),
            prompt_id: prompt_id.into(),
            writer,
            text,
            tokens,
        }
    }
}

/// Split `text` into tokens.
///
/// Whitespace separates tokens; leading and trailing punctuation is split off
/// the word it is attached to, runs of one repeated character (`...`, ` `` `)
/// staying together. Case is preserved. The `<newline>` marker is always its
/// own token, and apostrophe clitics (`'s`, `'ve`, `n't`) stay whole.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut rest = chunk;
        while let Some(pos) = rest.find(NEWLINE_MARKER) {
            split_word(&rest[..pos], &mut tokens);
            tokens.push(NEWLINE_MARKER.to_string());
            rest = &rest[pos + NEWLINE_MARKER.len()..];
        }
        split_word(rest, &mut tokens);
    }
    tokens
}

const CLITICS: [&str; 7] = ["s", "m", "d", "t", "ll", "re", "ve"];

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

fn split_word(word: &str, out: &mut Vec<String>) {
    if word.is_empty() {
        return;
    }
    if let Some(clitic) = word.strip_prefix('\'') {
        if CLITICS.contains(&clitic.to_lowercase().as_str()) {
            out.push(word.to_string());
            return;
        }
    }

    let chars: Vec<(usize, char)> = word.char_indices().collect();
    let mut start = 0;
    while start < chars.len() && is_punct(chars[start].1) {
        start += 1;
    }
    let mut end = chars.len();
    while end > start && is_punct(chars[end - 1].1) {
        end -= 1;
    }

    let byte_at = |i: usize| chars.get(i).map_or(word.len(), |&(b, _)| b);
    push_punct_runs(&word[..byte_at(start)], out);
    if start < end {
        out.push(word[byte_at(start)..byte_at(end)].to_string());
    }
    push_punct_runs(&word[byte_at(end)..], out);
}

fn push_punct_runs(punct: &str, out: &mut Vec<String>) {
    let mut run = String::new();
    for c in punct.chars() {
        if run.chars().next().is_some_and(|r| r != c) {
            out.push(std::mem::take(&mut run));
        }
        run.push(c);
    }
    if !run.is_empty() {
        out.push(run);
    }
}

/// How malformed records are treated while loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Report the line and skip it.
    #[default]
    Lenient,
    /// Fail on the first malformed line.
    Strict,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Record {
    Prompt {
        id: Value,
        text: String,
    },
    Story {
        id: Value,
        prompt_id: Value,
        #[serde(default)]
        writer: Option<WriterGroup>,
        text: String,
    },
}

fn id_string(value: &Value) -> Option<String> {
    match value {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// An immutable, linked collection of prompts and stories.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    prompts: Vec<Prompt>,
    stories: Vec<Story>,
    prompt_index: HashMap<String, usize>,
    story_index: HashMap<String, usize>,
}

impl Corpus {
    pub fn prompts(&self) -> &[Prompt] {
        &self.prompts
    }

    pub fn stories(&self) -> &[Story] {
        &self.stories
    }

    pub fn prompt(&self, id: &str) -> Option<&Prompt> {
        self.prompt_index.get(id).map(|&i| &self.prompts[i])
    }

    pub fn story(&self, id: &str) -> Option<&Story> {
        self.story_index.get(id).map(|&i| &self.stories[i])
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty() && self.stories.is_empty()
    }

    /// Stories grouped by parent prompt, in corpus order.
    pub fn stories_by_prompt(&self) -> BTreeMap<&str, Vec<&Story>> {
        let mut map: BTreeMap<&str, Vec<&Story>> = BTreeMap::new();
        for story in &self.stories {
            map.entry(story.prompt_id.as_str()).or_default().push(story);
        }
        map
    }

    pub fn set_prompt_label(&mut self, prompt_id: &str, label: PovLabel) -> bool {
        match self.prompt_index.get(prompt_id) {
            Some(&i) => {
                self.prompts[i].pov_label = Some(label);
                true
            }
            None => false,
        }
    }

    /// Write the corpus as JSONL records: all prompts first, then all stories.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for prompt in &self.prompts {
            let record = serde_json::json!({"kind": "prompt", "id": prompt.id, "text": prompt.text});
            writeln!(out, "{record}").map_err(|e| Error::io("<corpus output>", e))?;
        }
        for story in &self.stories {
            let record = serde_json::json!({
                "kind": "story",
                "id": story.id,
                "prompt_id": story.prompt_id,
                "writer": story.writer,
                "text": story.text,
            });
            writeln!(out, "{record}").map_err(|e| Error::io("<corpus output>", e))?;
        }
        Ok(())
    }
}

#[derive(Debug)]
struct PendingStory {
    story: Story,
    path: PathBuf,
    line: usize,
}

/// Accumulates records from one or more JSONL files, then links them.
#[derive(Debug, Default)]
pub struct CorpusBuilder {
    prompts: Vec<Prompt>,
    prompt_index: HashMap<String, usize>,
    stories: Vec<PendingStory>,
    story_ids: HashMap<String, (PathBuf, usize)>,
    diagnostics: Vec<(PathBuf, Diagnostic)>,
}

impl CorpusBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Problems reported (and skipped) in lenient mode.
    pub fn diagnostics(&self) -> &[(PathBuf, Diagnostic)] {
        &self.diagnostics
    }

    pub fn add_prompt(&mut self, id: impl Into<String>, text: impl Into<String>) -> Result<()> {
        let (id, text) = (id.into(), text.into());
        self.insert_prompt(id, text).map_err(Error::Config)
    }

    pub fn add_story(&mut self, story: Story) -> Result<()> {
        if self.story_ids.contains_key(&story.id) {
            return Err(Error::Config(format!("duplicate story id {}", story.id)));
        }
        self.story_ids
            .insert(story.id.clone(), (PathBuf::new(), 0));
        self.stories.push(PendingStory {
            story,
            path: PathBuf::new(),
            line: 0,
        });
        Ok(())
    }

    fn insert_prompt(&mut self, id: String, text: String) -> std::result::Result<(), String> {
        if text.trim().is_empty() {
            return Err(format!("prompt {id} has empty text"));
        }
        if let Some(&i) = self.prompt_index.get(&id) {
            // The same prompt may legitimately appear in both the human and
            // the machine file.
            if self.prompts[i].text == text {
                return Ok(());
            }
            return Err(format!("prompt id {id} redefined with different text"));
        }
        self.prompt_index.insert(id.clone(), self.prompts.len());
        self.prompts.push(Prompt {
            id,
            text,
            pov_label: None,
        });
        Ok(())
    }

    /// Read one corpus JSONL file. `default_writer` applies to story records
    /// that carry no `writer` field.
    pub fn add_file(
        &mut self,
        path: &Path,
        default_writer: Option<WriterGroup>,
        mode: ParseMode,
    ) -> Result<()> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        for (index, line) in BufReader::new(file).lines().enumerate() {
            let line_no = index + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            if let Err(message) = self.add_line(&line, path, line_no, default_writer) {
                match mode {
                    ParseMode::Strict => return Err(Error::parse(path, line_no, message)),
                    ParseMode::Lenient => {
                        log::warn!("{}:{line_no}: {message}", path.display());
                        self.diagnostics
                            .push((path.to_path_buf(), Diagnostic::new(line_no, message)));
                    }
                }
            }
        }
        Ok(())
    }

    fn add_line(
        &mut self,
        line: &str,
        path: &Path,
        line_no: usize,
        default_writer: Option<WriterGroup>,
    ) -> std::result::Result<(), String> {
        let record: Record =
            serde_json::from_str(line).map_err(|e| format!("malformed record: {e}"))?;
        match record {
            Record::Prompt { id, text } => {
                let id = id_string(&id).ok_or("prompt id must be a string or number")?;
                self.insert_prompt(id, text)
            }
            Record::Story {
                id,
                prompt_id,
                writer,
                text,
            } => {
                let id = id_string(&id).ok_or("story id must be a string or number")?;
                let prompt_id =
                    id_string(&prompt_id).ok_or("prompt_id must be a string or number")?;
                let writer = writer
                    .or(default_writer)
                    .ok_or_else(|| format!("story {id} has no writer group"))?;
                if let Some((first_path, first_line)) = self.story_ids.get(&id) {
                    return Err(format!(
                        "duplicate story id {id} (first seen at {}:{first_line})",
                        first_path.display()
                    ));
                }
                self.story_ids
                    .insert(id.clone(), (path.to_path_buf(), line_no));
                self.stories.push(PendingStory {
                    story: Story::new(id, prompt_id, writer, text),
                    path: path.to_path_buf(),
                    line: line_no,
                });
                Ok(())
            }
        }
    }

    /// Resolve story→prompt links. A dangling `prompt_id` is always fatal.
    pub fn build(self) -> Result<Corpus> {
        let mut story_index = HashMap::with_capacity(self.stories.len());
        let mut stories = Vec::with_capacity(self.stories.len());
        for pending in self.stories {
            if !self.prompt_index.contains_key(&pending.story.prompt_id) {
                let err = Error::DanglingPrompt {
                    line: pending.line,
                    story_id: pending.story.id.clone(),
                    prompt_id: pending.story.prompt_id.clone(),
                };
                return Err(if pending.path.as_os_str().is_empty() {
                    err
                } else {
                    Error::parse(&pending.path, pending.line, err.to_string())
                });
            }
            story_index.insert(pending.story.id.clone(), stories.len());
            stories.push(pending.story);
        }
        Ok(Corpus {
            prompts: self.prompts,
            stories,
            prompt_index: self.prompt_index,
            story_index,
        })
    }
}

/// Load a single corpus file.
pub fn load_corpus(
    path: &Path,
    default_writer: Option<WriterGroup>,
    mode: ParseMode,
) -> Result<(Corpus, Vec<Diagnostic>)> {
    let mut builder = CorpusBuilder::new();
    builder.add_file(path, default_writer, mode)?;
    let diagnostics = builder.diagnostics.iter().map(|(_, d)| d.clone()).collect();
    Ok((builder.build()?, diagnostics))
}

/// Convert line-aligned WritingPrompts `.wp_source` / `.wp_target` files.
///
/// Identical source lines become one prompt. Prompt ids are `p` plus the
/// zero-padded first-occurrence index; story ids are `s` plus the line number.
pub fn convert_writing_prompts(
    source: &Path,
    target: &Path,
    writer: WriterGroup,
) -> Result<Corpus> {
    let read_lines = |path: &Path| -> Result<Vec<String>> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        BufReader::new(file)
            .lines()
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| Error::io(path, e))
    };
    let sources = read_lines(source)?;
    let targets = read_lines(target)?;
    if sources.len() != targets.len() {
        return Err(Error::parse(
            target,
            targets.len().min(sources.len()) + 1,
            format!(
                "source has {} lines but target has {}",
                sources.len(),
                targets.len()
            ),
        ));
    }

    let mut builder = CorpusBuilder::new();
    let mut ids_by_text: HashMap<String, String> = HashMap::new();
    for (index, (prompt_text, story_text)) in sources.iter().zip(&targets).enumerate() {
        let prompt_text = prompt_text.trim();
        if prompt_text.is_empty() {
            return Err(Error::parse(source, index + 1, "empty prompt line"));
        }
        let next = ids_by_text.len();
        let prompt_id = ids_by_text
            .entry(prompt_text.to_string())
            .or_insert_with(|| format!("p{next:06}"))
            .clone();
        builder.add_prompt(prompt_id.clone(), prompt_text)?;
        builder.add_story(Story::new(
            format!("s{:06}", index + 1),
            prompt_id,
            writer,
            story_text.trim(),
        ))?;
    }
    builder.build()
}

/// Descriptive statistics for one writer group.
///
/// `n_prompts` counts prompts with at least one story from the group, so
/// `stories_per_prompt_mean == n_stories / n_prompts`. Standard deviations are
/// population (divide by N).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_prompts: usize,
    pub n_stories: usize,
    pub stories_per_prompt_mean: f64,
    pub stories_per_prompt_std: f64,
    pub tokens_per_story_mean: f64,
}

pub fn corpus_stats(corpus: &Corpus) -> BTreeMap<WriterGroup, CorpusStats> {
    let mut out = BTreeMap::new();
    for group in WriterGroup::ALL {
        let mut per_prompt: HashMap<&str, usize> = HashMap::new();
        let mut tokens = 0usize;
        let mut n_stories = 0usize;
        for story in corpus.stories.iter().filter(|s| s.writer == group) {
            *per_prompt.entry(story.prompt_id.as_str()).or_default() += 1;
            tokens += story.tokens.len();
            n_stories += 1;
        }
        let counts: Vec<f64> = per_prompt.values().map(|&c| c as f64).collect();
        let (mean, std) = mean_std(&counts);
        out.insert(
            group,
            CorpusStats {
                n_prompts: counts.len(),
                n_stories,
                stories_per_prompt_mean: mean,
                stories_per_prompt_std: std,
                tokens_per_story_mean: if n_stories == 0 {
                    0.0
                } else {
                    tokens as f64 / n_stories as f64
                },
            },
        );
    }
    out
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
