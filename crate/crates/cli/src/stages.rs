use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use storylens::analysis::{
    group_aggregate, group_tests, pov_distribution, prompt_level_diff, significance_test,
    summarize_diffs, Comparison, DiffOptions, ValueKind,
};
use storylens::attributes::{
    extract_dependency_attributes, load_conllu, load_inference_attributes, AttributeForm,
    AttributeSet, AttributeSource, DependencyOptions,
};
use storylens::corpus::{
    convert_writing_prompts, corpus_stats, load_corpus, Corpus, CorpusBuilder, ParseMode,
    WriterGroup,
};
use storylens::embeddings::{load_embeddings, EmbeddingFormat, EmbeddingStore};
use storylens::evaluation::{evaluate_scorer, EvalReport, EvalSettings};
use storylens::lexicons::{
    load_scored_lexicon, load_term_list, BipolarCategoryLexicon, CategoryLexicon, Dimension,
};
use storylens::pov::{
    classify_prompt_pov, classify_story, load_clusters, resolve_clusters_heuristic,
    EntityCluster, PovLabel, PronounTable, Protagonist,
};
use storylens::scoring::{
    default_plan, full_plan, read_score_csv, score_all, write_score_csv, zscore,
    DimensionScorer, LexiconSet, Method, ScoreRow,
};
use storylens::{seed, Scalar};
use storylens_genclient::{collect_stories, GenerationConfig};

use crate::artifacts::{Artifact, Workdir, SCHEMA_VERSION};
use crate::config::Config;
use crate::{AnalyzeArgs, AnalyzePromptsArgs, CliError, ConvertArgs, EvaluateArgs, GenerateArgs, IngestArgs, ScoreArgs};

type Result<T = ()> = std::result::Result<T, CliError>;

fn load_workdir_corpus(workdir: &Workdir) -> Result<Corpus> {
    let path = workdir.require(Artifact::Corpus)?;
    Ok(load_corpus(&path, None, ParseMode::Strict)?.0)
}

fn report_diagnostics(source: &Path, diagnostics: &[storylens::Diagnostic]) {
    for d in diagnostics.iter().take(20) {
        eprintln!("warning: {}:{d}", source.display());
    }
    if diagnostics.len() > 20 {
        eprintln!("warning: {}: {} more", source.display(), diagnostics.len() - 20);
    }
}

pub fn convert(args: &ConvertArgs) -> Result {
    let writer: WriterGroup = args.writer.parse()?;
    let corpus = convert_writing_prompts(&args.source, &args.target, writer)?;
    crate::artifacts::write_atomic(&args.output, |out| Ok(corpus.write_jsonl(out)?))?;
    println!(
        "converted {} prompts and {} stories into {}",
        corpus.prompts().len(),
        corpus.stories().len(),
        args.output.display()
    );
    Ok(())
}

pub fn ingest(config: &Config, workdir: &Workdir, args: &IngestArgs) -> Result {
    let mut inputs: Vec<(std::path::PathBuf, Option<WriterGroup>)> = config
        .corpus
        .inputs
        .iter()
        .map(|i| (i.path.clone(), i.writer))
        .collect();
    for input in &args.inputs {
        let (path, writer) = match input.rsplit_once(':') {
            Some((p, w)) if w.parse::<WriterGroup>().is_ok() => (p, Some(w.parse()?)),
            _ => (input.as_str(), None),
        };
        inputs.push((path.into(), writer));
    }
    if inputs.is_empty() {
        return Err(CliError("no corpus inputs: set [corpus] inputs or pass --input".into()));
    }
    let mode = if args.strict || config.corpus.strict {
        ParseMode::Strict
    } else {
        ParseMode::Lenient
    };
    let mut builder = CorpusBuilder::new();
    for (path, writer) in &inputs {
        builder.add_file(path, *writer, mode)?;
    }
    let skipped = builder.diagnostics().len();
    for (path, d) in builder.diagnostics().iter().take(20) {
        eprintln!("warning: {}:{d}", path.display());
    }
    let corpus = builder.build()?;
    if corpus.is_empty() {
        return Err(CliError("corpus is empty after ingestion".into()));
    }
    workdir.write(Artifact::Corpus, |out| Ok(corpus.write_jsonl(out)?))?;
    workdir.write_meta(
        Artifact::Corpus,
        config.seed,
        json!({
            "inputs": inputs.iter().map(|(p, _)| p.display().to_string()).collect::<Vec<_>>(),
            "skipped_lines": skipped,
        }),
    )?;
    println!(
        "ingested {} prompts and {} stories ({skipped} lines skipped)",
        corpus.prompts().len(),
        corpus.stories().len()
    );
    Ok(())
}

pub fn stats(config: &Config, workdir: &Workdir) -> Result {
    let corpus = load_workdir_corpus(workdir)?;
    let stats = corpus_stats(&corpus);
    let value = json!({"schema_version": SCHEMA_VERSION, "groups": stats});
    workdir.write_json(Artifact::CorpusStats, &value)?;
    workdir.write_meta(Artifact::CorpusStats, config.seed, json!({}))?;
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

pub fn generate(config: &Config, workdir: &Workdir, args: &GenerateArgs) -> Result {
    let corpus = load_workdir_corpus(workdir)?;
    let g = &config.generate;
    let gen = GenerationConfig {
        roles: g.roles.parse()?,
        user_template: g.user_template.clone(),
        temperature: g.temperature,
        n_per_prompt: args.n_per_prompt.unwrap_or(g.n_per_prompt),
        model_name: args.model.clone().unwrap_or_else(|| g.model.clone()),
        endpoint_url: args.endpoint.clone().unwrap_or_else(|| g.endpoint.clone()),
        api_key_env: g.api_key_env.clone(),
        max_attempts: g.max_attempts,
        concurrency: args.concurrency.unwrap_or(g.concurrency),
        initial_backoff: Duration::from_secs(1),
        max_backoff: Duration::from_secs(60),
        timeout: Duration::from_secs(120),
    };
    let output = match &args.output {
        Some(p) => p.clone(),
        None => workdir.root().join(&g.output),
    };
    let report = collect_stories(&corpus, &gen, &output)?;
    println!(
        "planned {}, already present {}, new stories {}, malformed {}, failed {} ({} requests, {} backoffs) -> {}",
        report.planned,
        report.already_present,
        report.stories,
        report.malformed,
        report.failed,
        report.requests,
        report.backoffs,
        output.display()
    );
    if report.failed + report.malformed > 0 {
        return Err(CliError(format!(
            "{} requests did not produce a story; rerun to retry them",
            report.failed + report.malformed
        )));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ProtagonistRecord {
    story_id: String,
    pov: PovLabel,
    cluster: EntityCluster,
}

pub fn pov(config: &Config, workdir: &Workdir) -> Result {
    let corpus = load_workdir_corpus(workdir)?;
    let table = PronounTable::default();
    let annotations = match &config.pov.clusters {
        Some(path) => {
            let a = load_clusters(path, &corpus)?;
            report_diagnostics(path, &a.diagnostics);
            if !a.unannotated.is_empty() {
                eprintln!(
                    "warning: {} stories have no cluster record; using the rule-based resolver for them",
                    a.unannotated.len()
                );
            }
            Some(a)
        }
        None => None,
    };

    let mut rows = Vec::with_capacity(corpus.stories().len());
    for story in corpus.stories() {
        let annotated = annotations.as_ref().and_then(|a| a.by_story.get(&story.id));
        let (resolver, clusters) = match annotated {
            Some(c) => ("annotated", c.clone()),
            None => ("heuristic", resolve_clusters_heuristic(&story.tokens, &table)),
        };
        let (protagonist, label) = classify_story(&clusters, &table);
        rows.push((story, resolver, protagonist, label));
    }

    workdir.write(Artifact::Pov, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "story_id", "prompt_id", "writer", "pov", "resolver", "protagonist", "mentions",
            "first_person", "second_person", "third_male", "third_female", "unlisted",
        ])?;
        for (story, resolver, protagonist, label) in &rows {
            let counts = protagonist.as_ref().map(|p| p.pronoun_counts).unwrap_or_default();
            let cluster = protagonist.as_ref().map_or("", |p| p.cluster.id.as_str());
            let mentions = protagonist.as_ref().map_or(0, |p| p.cluster.mentions.len());
            w.write_record([
                story.id.as_str(),
                story.prompt_id.as_str(),
                story.writer.as_str(),
                label.as_str(),
                resolver,
                cluster,
                &mentions.to_string(),
                &counts.first_person.to_string(),
                &counts.second_person.to_string(),
                &counts.third_male.to_string(),
                &counts.third_female.to_string(),
                &counts.unlisted.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;

    workdir.write(Artifact::Protagonists, |out| {
        for (story, _, protagonist, label) in &rows {
            if let Some(p) = protagonist {
                let record = ProtagonistRecord {
                    story_id: story.id.clone(),
                    pov: *label,
                    cluster: p.cluster.clone(),
                };
                serde_json::to_writer(&mut *out, &record)?;
                writeln!(out)?;
            }
        }
        Ok(())
    })?;

    workdir.write(Artifact::PromptPov, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["prompt_id", "pov"])?;
        for prompt in corpus.prompts() {
            w.write_record([prompt.id.as_str(), classify_prompt_pov(&prompt.text, &table).as_str()])?;
        }
        w.flush()?;
        Ok(())
    })?;

    let shares = pov_distribution(rows.iter().map(|(s, _, _, l)| (s.writer, *l)));
    workdir.write(Artifact::PovDistribution, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["writer", "pov", "count", "fraction"])?;
        for s in &shares {
            w.write_record([s.writer.as_str(), s.label.as_str(), &s.count.to_string(), &s.fraction.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let heuristic = rows.iter().filter(|r| r.1 == "heuristic").count();
    workdir.write_meta(
        Artifact::Pov,
        config.seed,
        json!({"clusters": config.pov.clusters, "heuristic_stories": heuristic}),
    )?;
    for s in &shares {
        println!("{:<8} {:<6} {:>6} {:.3}", s.writer.as_str(), s.label.as_str(), s.count, s.fraction);
    }
    Ok(())
}

fn read_protagonists(path: &Path, table: &PronounTable) -> Result<HashMap<String, Protagonist>> {
    let file = File::open(path)?;
    let mut out = HashMap::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ProtagonistRecord = serde_json::from_str(&line)?;
        out.insert(record.story_id, Protagonist::new(record.cluster, table));
    }
    Ok(out)
}

pub fn attrs(config: &Config, workdir: &Workdir) -> Result {
    let corpus = load_workdir_corpus(workdir)?;
    let table = PronounTable::default();
    let protagonists = read_protagonists(&workdir.require(Artifact::Protagonists)?, &table)?;
    let a = &config.attributes;
    if a.conllu.is_none() && a.inference.is_none() {
        return Err(CliError(
            "no attribute source: set [attributes] conllu and/or inference".into(),
        ));
    }
    let form = match a.form.as_str() {
        "lemma" => AttributeForm::Lemma,
        "surface" => AttributeForm::Surface,
        other => return Err(CliError(format!("unknown attribute form `{other}` (lemma or surface)"))),
    };
    let finish = |set: AttributeSet| if a.type_level { set.types_only() } else { set };

    let mut sets: Vec<AttributeSet> = Vec::new();
    let mut summary = serde_json::Map::new();
    if let Some(path) = &a.conllu {
        let parses = load_conllu(path)?;
        report_diagnostics(path, &parses.diagnostics);
        let options = DependencyOptions {
            form,
            object_verbs: a.object_verbs,
        };
        let (mut unparsed, mut skipped) = (0usize, 0usize);
        for story in corpus.stories() {
            let set = match (protagonists.get(&story.id), parses.by_story.get(&story.id)) {
                (Some(p), Some(sentences)) => {
                    let (set, report) = extract_dependency_attributes(story, p, sentences, options);
                    skipped += report.skipped_sentences;
                    unparsed += report.unparsed_mentions;
                    set
                }
                _ => AttributeSet::new(&story.id, AttributeSource::Dependency),
            };
            sets.push(finish(set));
        }
        summary.insert("dependency_skipped_sentences".into(), skipped.into());
        summary.insert("dependency_unparsed_mentions".into(), unparsed.into());
    }
    if let Some(path) = &a.inference {
        let mut inferred = load_inference_attributes(path, &corpus)?;
        report_diagnostics(path, &inferred.diagnostics);
        for story in corpus.stories() {
            let set = inferred
                .by_story
                .remove(&story.id)
                .unwrap_or_else(|| AttributeSet::new(&story.id, AttributeSource::Inference));
            sets.push(finish(set));
        }
    }
    let order: HashMap<&str, usize> = corpus.stories().iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    sets.sort_by_key(|s| (order[s.story_id.as_str()], s.source));
    let empty = sets.iter().filter(|s| s.is_empty()).count();

    workdir.write(Artifact::Attributes, |out| {
        for set in &sets {
            serde_json::to_writer(&mut *out, set)?;
            writeln!(out)?;
        }
        Ok(())
    })?;
    summary.insert("sets".into(), sets.len().into());
    summary.insert("empty_sets".into(), empty.into());
    workdir.write_meta(Artifact::Attributes, config.seed, summary.into())?;
    println!("wrote {} attribute sets ({empty} empty)", sets.len());
    Ok(())
}

fn read_attributes(path: &Path) -> Result<Vec<AttributeSet>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

fn read_pov_labels(path: &Path) -> Result<HashMap<String, PovLabel>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError(format!("{}: no `{name}` column", path.display())))
    };
    let (id, pov) = (col("story_id")?, col("pov")?);
    let mut out = HashMap::new();
    for record in reader.records() {
        let record = record?;
        out.insert(record[id].to_string(), record[pov].parse()?);
    }
    Ok(out)
}

fn load_lexicons<T: Scalar>(config: &Config) -> Result<LexiconSet<T>> {
    let l = &config.lexicons;
    let mut set = LexiconSet::default();
    if let Some(path) = &l.vad {
        let loaded = load_scored_lexicon::<T>(path)?;
        report_diagnostics(path, &loaded.diagnostics);
        if loaded.dropped_multiword > 0 {
            log::info!("{}: {} multi-word entries dropped", path.display(), loaded.dropped_multiword);
        }
        set.vad = Some(loaded.value);
    }
    let lists = |paths: &[std::path::PathBuf]| -> Result<Vec<_>> {
        paths.iter().map(|p| Ok(load_term_list(p)?.value)).collect()
    };
    if !l.appearance.is_empty() {
        set.appearance = Some(CategoryLexicon::from_lists(Dimension::Appearance, &lists(&l.appearance)?)?);
    }
    if !l.intellect.is_empty() {
        set.intellect = Some(CategoryLexicon::from_lists(Dimension::Intellect, &lists(&l.intellect)?)?);
    }
    match (&l.power_low, &l.power_high) {
        (Some(low), Some(high)) => {
            let (low, high) = (load_term_list(low)?.value, load_term_list(high)?.value);
            set.power = Some(BipolarCategoryLexicon::new(low.terms, high.terms)?);
        }
        (None, None) => {}
        _ => return Err(CliError("power needs both power_low and power_high".into())),
    }
    Ok(set)
}

fn load_store<T: Scalar>(config: &Config, vocabulary: &HashSet<String>) -> Result<Option<EmbeddingStore<T>>> {
    let Some(path) = &config.embeddings.path else {
        return Ok(None);
    };
    let format: EmbeddingFormat = config.embeddings.format.parse()?;
    let loaded = load_embeddings::<T>(path, format, Some(vocabulary))?;
    report_diagnostics(path, &loaded.diagnostics);
    Ok(Some(loaded.value))
}

pub fn score(config: &Config, workdir: &Workdir, args: &ScoreArgs) -> Result {
    match config.embeddings.precision.as_str() {
        "f64" => score_with::<f64>(config, workdir, args),
        "f32" => score_with::<f32>(config, workdir, args),
        other => Err(CliError(format!("unknown precision `{other}` (f32 or f64)"))),
    }
}

fn score_with<T: Scalar>(config: &Config, workdir: &Workdir, args: &ScoreArgs) -> Result {
    let corpus = load_workdir_corpus(workdir)?;
    let labels = read_pov_labels(&workdir.require(Artifact::Pov)?)?;
    let sets = read_attributes(&workdir.require(Artifact::Attributes)?)?;
    let lexicons = load_lexicons::<T>(config)?;

    let plan = match args.plan.as_deref().unwrap_or(&config.scoring.plan) {
        "default" => default_plan(),
        "full" => full_plan(),
        other => return Err(CliError(format!("unknown scoring plan `{other}` (default or full)"))),
    };
    let mut vocabulary: HashSet<String> = lexicons.vocabulary().into_iter().collect();
    vocabulary.extend(sets.iter().flat_map(|s| s.types().map(str::to_string)));
    let store = if plan.iter().any(|(_, m)| m.needs_embeddings()) {
        load_store::<T>(config, &vocabulary)?
    } else {
        None
    };

    let mut scorers = Vec::new();
    let mut skipped = Vec::new();
    for (dimension, method) in plan {
        if !lexicons.has(dimension) || (method.needs_embeddings() && store.is_none()) {
            skipped.push(format!("{dimension}/{method}"));
            continue;
        }
        scorers.push(DimensionScorer::build(
            dimension,
            method,
            &lexicons,
            store.as_ref(),
            (config.scoring.low_percentile, config.scoring.high_percentile),
        )?);
    }
    if !skipped.is_empty() {
        eprintln!("warning: skipped (lexicon or embeddings not configured): {}", skipped.join(", "));
    }
    if scorers.is_empty() {
        return Err(CliError("nothing to score: configure lexicons (and embeddings)".into()));
    }

    let scores = score_all(&sets, &scorers, store.as_ref());
    let mut rows = Vec::with_capacity(scores.len());
    for score in scores {
        let story = corpus
            .story(&score.story_id)
            .ok_or_else(|| CliError(format!("attributes name unknown story {}", score.story_id)))?;
        let pov = *labels.get(&story.id).ok_or_else(|| {
            CliError(format!("story {} has no PoV label: rerun `storylens pov`", story.id))
        })?;
        rows.push(ScoreRow {
            prompt_id: story.prompt_id.clone(),
            writer: story.writer,
            pov,
            score,
        });
    }
    let warnings = zscore(&mut rows);
    for w in &warnings {
        eprintln!("warning: {}/{}/{}: {}; z left empty", w.dimension, w.method, w.source, w.reason);
    }
    workdir.write(Artifact::Scores, |out| Ok(write_score_csv(&rows, out)?))?;
    let absent = rows.iter().filter(|r| r.score.raw.is_none()).count();
    workdir.write_meta(
        Artifact::Scores,
        config.seed,
        json!({
            "scorers": scorers.iter().map(|s| format!("{}/{}", s.dimension, s.method)).collect::<Vec<_>>(),
            "skipped": skipped,
            "absent_scores": absent,
            "vocabulary_loaded": store.as_ref().map(|s| s.len()),
        }),
    )?;
    println!("wrote {} score rows ({absent} without a scoreable token)", rows.len());
    Ok(())
}

#[derive(Serialize)]
struct EvalFile<'a> {
    schema_version: u32,
    #[serde(flatten)]
    report: &'a EvalReport,
}

pub fn evaluate(config: &Config, workdir: &Workdir, args: &EvaluateArgs) -> Result {
    match config.embeddings.precision.as_str() {
        "f64" => evaluate_with::<f64>(config, workdir, args),
        "f32" => evaluate_with::<f32>(config, workdir, args),
        other => Err(CliError(format!("unknown precision `{other}` (f32 or f64)"))),
    }
}

fn evaluate_with<T: Scalar>(config: &Config, workdir: &Workdir, args: &EvaluateArgs) -> Result {
    let dimensions: Vec<Dimension> = match args.dimension.as_str() {
        "all" => Dimension::VAD.to_vec(),
        d => {
            let d: Dimension = d.parse()?;
            if !Dimension::VAD.contains(&d) {
                return Err(CliError(format!("{d} has no scored lexicon to evaluate against")));
            }
            vec![d]
        }
    };
    let methods: Vec<Method> = match args.method.as_str() {
        "all" => vec![Method::EmbSim, Method::AxisEmb],
        m => vec![m.parse()?],
    };
    let vad_path = config
        .lexicons
        .vad
        .as_ref()
        .ok_or_else(|| CliError("evaluate needs [lexicons] vad".into()))?;
    let vad = load_scored_lexicon::<T>(vad_path)?.value;
    let vocabulary: HashSet<String> = vad.valence.terms().map(str::to_string).collect();
    let store = load_store::<T>(config, &vocabulary)?
        .ok_or_else(|| CliError("evaluate needs [embeddings] path".into()))?;
    let settings = EvalSettings {
        train_ratio: args.train_ratio.unwrap_or(config.evaluate.train_ratio),
        low_pct: config.scoring.low_percentile,
        high_pct: config.scoring.high_percentile,
        seed: seed::derive(config.seed, "evaluate"),
    };
    for dimension in dimensions {
        let lexicon = vad.get(dimension).expect("VAD dimension");
        for &method in &methods {
            let evaluation = evaluate_scorer(lexicon, method, &store, settings)?;
            let file = EvalFile {
                schema_version: SCHEMA_VERSION,
                report: &evaluation.report,
            };
            let path = workdir.root().join(format!("eval_{dimension}_{method}.json"));
            crate::artifacts::write_atomic(&path, |out| {
                serde_json::to_writer_pretty(&mut *out, &file)?;
                writeln!(out)?;
                Ok(())
            })?;
            println!("{}", serde_json::to_string(&file)?);
        }
    }
    Ok(())
}

fn value_kind(arg: &Option<String>, config: &Config) -> Result<ValueKind> {
    Ok(arg.as_deref().unwrap_or(&config.analysis.value).parse()?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn analyze_groups(config: &Config, workdir: &Workdir, args: &AnalyzeArgs) -> Result {
    let value = value_kind(&args.value, config)?;
    let rows: Vec<ScoreRow<f64>> = read_score_csv(File::open(workdir.require(Artifact::Scores)?)?)?;
    let stats = group_aggregate(&rows, value);
    workdir.write(Artifact::GroupStats, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["writer", "pov", "dimension", "method", "source", "value", "mean", "std", "n"])?;
        for s in &stats {
            w.write_record([
                s.writer.as_str(),
                s.pov.as_str(),
                s.dimension.as_str(),
                s.method.as_str(),
                s.source.as_str(),
                value.as_str(),
                &s.mean.to_string(),
                &s.std.to_string(),
                &s.n.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let tests = group_tests(&rows, value);
    workdir.write(Artifact::GroupTests, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "pov", "dimension", "method", "source", "value", "n_human", "n_machine", "mean_human",
            "mean_machine", "direction_human_vs_machine", "welch_t", "welch_p", "mwu_u", "mwu_p",
        ])?;
        for t in &tests {
            let s = &t.test;
            w.write_record([
                t.pov.as_str(),
                t.dimension.as_str(),
                t.method.as_str(),
                t.source.as_str(),
                value.as_str(),
                &s.n_a.to_string(),
                &s.n_b.to_string(),
                &s.mean_a.to_string(),
                &s.mean_b.to_string(),
                s.direction.as_str(),
                &fmt_opt(s.welch_t),
                &fmt_opt(s.welch_p),
                &s.mwu_u.to_string(),
                &s.mwu_p.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    workdir.write_meta(Artifact::GroupStats, config.seed, json!({"value": value.as_str(), "tests": tests.len()}))?;
    println!("wrote {} group cells and {} human-vs-machine tests", stats.len(), tests.len());
    Ok(())
}

pub fn analyze_prompts(config: &Config, workdir: &Workdir, args: &AnalyzePromptsArgs) -> Result {
    let a = &config.analysis;
    let options = DiffOptions {
        k: args.k.unwrap_or(a.k),
        runs: args.runs.unwrap_or(a.runs),
        seed: seed::derive(config.seed, "analyze-prompts"),
        value: value_kind(&args.value, config)?,
    };
    let bins = args.bins.unwrap_or(a.bins);
    let rows: Vec<ScoreRow<f64>> = read_score_csv(File::open(workdir.require(Artifact::Scores)?)?)?;

    let mut diffs = Vec::new();
    let mut skipped = Vec::new();
    for comparison in [Comparison::HumanVsMachine, Comparison::HumanControl] {
        let outcome = prompt_level_diff(&rows, comparison, &options)?;
        for ((d, m, s), n) in outcome.skipped {
            let need = match comparison {
                Comparison::HumanVsMachine => format!("{} scored stories per side", options.k),
                Comparison::HumanControl => format!("{} scored human stories", 2 * options.k),
            };
            eprintln!("warning: {comparison}: {n} prompts skipped for {d}/{m}/{s} (need {need})");
            skipped.push(json!({"comparison": comparison, "dimension": d, "method": m, "source": s, "prompts": n}));
        }
        diffs.extend(outcome.diffs);
    }
    if diffs.is_empty() {
        return Err(CliError(format!(
            "no prompt has {} present scores on both sides; nothing to compare",
            options.k
        )));
    }

    workdir.write(Artifact::PromptDiffs, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "comparison", "side_a", "side_b", "prompt_id", "dimension", "method", "source", "value",
            "diff_a_minus_b", "n_a", "n_b",
        ])?;
        for d in &diffs {
            let (side_a, side_b) = match d.comparison {
                Comparison::HumanVsMachine => ("human", "machine"),
                Comparison::HumanControl => ("human_split_1", "human_split_2"),
            };
            w.write_record([
                d.comparison.as_str(),
                side_a,
                side_b,
                d.prompt_id.as_str(),
                d.dimension.as_str(),
                d.method.as_str(),
                d.source.as_str(),
                options.value.as_str(),
                &d.diff.to_string(),
                &d.n_a.to_string(),
                &d.n_b.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;

    let summaries = summarize_diffs(&diffs, bins)?;
    workdir.write(Artifact::PromptHist, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["comparison", "dimension", "method", "source", "bin", "lo", "hi", "count"])?;
        for s in &summaries {
            for (i, ((lo, hi), count)) in s.histogram.edges().zip(&s.histogram.counts).enumerate() {
                w.write_record([
                    s.comparison.as_str(),
                    s.dimension.as_str(),
                    s.method.as_str(),
                    s.source.as_str(),
                    &i.to_string(),
                    &lo.to_string(),
                    &hi.to_string(),
                    &count.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;

    // Is the human-vs-machine gap larger than the human-vs-human one?
    let mut by_key: BTreeMap<(Dimension, Method, AttributeSource), [Vec<f64>; 2]> = BTreeMap::new();
    for d in &diffs {
        let side = usize::from(d.comparison == Comparison::HumanControl);
        by_key.entry((d.dimension, d.method, d.source)).or_default()[side].push(d.diff.abs());
    }
    let gap_tests: Vec<_> = by_key
        .into_iter()
        .filter_map(|((d, m, s), [main, control])| {
            let test = significance_test(&main, &control).ok()?;
            Some(json!({"dimension": d, "method": m, "source": s, "abs_diff": test}))
        })
        .collect();

    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "sign_convention": "human minus machine; control is human split 1 minus human split 2",
        "k": options.k,
        "runs": options.runs,
        "seed": options.seed,
        "value": options.value.as_str(),
        "skipped": skipped,
        "summaries": summaries,
        "gap_vs_control": gap_tests,
    });
    workdir.write_json(Artifact::PromptSummary, &summary)?;
    workdir.write_meta(Artifact::PromptDiffs, config.seed, json!({"diffs": diffs.len()}))?;
    for s in &summaries {
        println!(
            "{:<17} {:<10} {:<8} {:<10} n={:<5} mean={:+.4} median={:+.4} std={:.4}",
            s.comparison.as_str(),
            s.dimension.as_str(),
            s.method.as_str(),
            s.source.as_str(),
            s.n,
            s.mean,
            s.median,
            s.std
        );
    }
    Ok(())
}
