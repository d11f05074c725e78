use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Artifact {
    Corpus,
    CorpusStats,
    Pov,
    PromptPov,
    PovDistribution,
    Protagonists,
    Attributes,
    Scores,
    GroupStats,
    GroupTests,
    PromptDiffs,
    PromptSummary,
    PromptHist,
}

impl Artifact {
    pub fn file_name(self) -> &'static str {
        match self {
            Artifact::Corpus => "corpus.jsonl",
            Artifact::CorpusStats => "corpus_stats.json",
            Artifact::Pov => "pov.csv",
            Artifact::PromptPov => "prompt_pov.csv",
            Artifact::PovDistribution => "pov_distribution.csv",
            Artifact::Protagonists => "protagonists.jsonl",
            Artifact::Attributes => "attributes.jsonl",
            Artifact::Scores => "scores.csv",
            Artifact::GroupStats => "group_stats.csv",
            Artifact::GroupTests => "group_tests.csv",
            Artifact::PromptDiffs => "prompt_diffs.csv",
            Artifact::PromptSummary => "prompt_summary.json",
            Artifact::PromptHist => "prompt_hist.csv",
        }
    }

    /// The subcommand that writes this artifact.
    pub fn producer(self) -> &'static str {
        match self {
            Artifact::Corpus => "ingest",
            Artifact::CorpusStats => "stats",
            Artifact::Pov | Artifact::PromptPov | Artifact::PovDistribution | Artifact::Protagonists => "pov",
            Artifact::Attributes => "attrs",
            Artifact::Scores => "score",
            Artifact::GroupStats | Artifact::GroupTests => "analyze-groups",
            Artifact::PromptDiffs | Artifact::PromptSummary | Artifact::PromptHist => "analyze-prompts",
        }
    }
}

pub struct Workdir {
    root: PathBuf,
}

impl Workdir {
    pub fn new(root: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&root)
            .map_err(|e| CliError(format!("cannot create work directory {}: {e}", root.display())))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, artifact: Artifact) -> PathBuf {
        self.root.join(artifact.file_name())
    }

    /// Path of an upstream artifact, or an error naming the stage to run.
    pub fn require(&self, artifact: Artifact) -> Result<PathBuf, CliError> {
        let path = self.path(artifact);
        if path.is_file() {
            Ok(path)
        } else {
            Err(CliError(format!(
                "missing {}: run `storylens {}` first",
                path.display(),
                artifact.producer()
            )))
        }
    }

    /// Write through a temporary file so an interrupted stage never leaves a
    /// truncated artifact behind.
    pub fn write(
        &self,
        artifact: Artifact,
        fill: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    ) -> Result<PathBuf, CliError> {
        let path = self.path(artifact);
        write_atomic(&path, fill)?;
        Ok(path)
    }

    pub fn write_json(&self, artifact: Artifact, value: &impl Serialize) -> Result<PathBuf, CliError> {
        self.write(artifact, |out| {
            serde_json::to_writer_pretty(&mut *out, value)?;
            writeln!(out)?;
            Ok(())
        })
    }

    /// Timestamps and run details live here, never in the artifact.
    pub fn write_meta(&self, artifact: Artifact, seed: u64, details: serde_json::Value) -> Result<(), CliError> {
        let path = self.root.join(format!("{}.meta.json", artifact.file_name()));
        let meta = json!({
            "schema_version": SCHEMA_VERSION,
            "artifact": artifact.file_name(),
            "stage": artifact.producer(),
            "created": chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            "seed": seed,
            "details": details,
        });
        write_atomic(&path, |out| {
            serde_json::to_writer_pretty(&mut *out, &meta)?;
            writeln!(out)?;
            Ok(())
        })
    }
}

pub fn write_atomic(
    path: &Path,
    fill: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let file = File::create(&tmp).map_err(|e| CliError(format!("cannot write {}: {e}", tmp.display())))?;
    let mut out = BufWriter::new(file);
    fill(&mut out)?;
    out.flush()?;
    drop(out);
    fs::rename(&tmp, path).map_err(|e| CliError(format!("cannot write {}: {e}", path.display())))
}
