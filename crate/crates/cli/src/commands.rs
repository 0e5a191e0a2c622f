use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use profdenoise::dataset::{
    kcore_filter, load_interactions, load_titles, read_split, stratified_sample, temporal_split, write_split,
    DatasetStats, InteractionFormat, SplitDataset, SPLIT_FILES,
};
use profdenoise::denoise::{
    run_campaign, CampaignConfig, ContextOptions, DenoiseError, RandomDenoiser, SemanticDenoiser, TopPopDenoiser,
    UpperBoundOnValDenoiser,
};
use profdenoise::eval::{
    breakdown_by_profile_length, breakdown_by_rating, build_report, evaluate_campaign, original_records, RankRecord,
    Subset, ORIGINAL,
};
use profdenoise::llm::{HttpChatClient, LlmDenoiser, PromptSpec, PromptVariant};
use profdenoise::multivae::{load_checkpoint, save_checkpoint, train, ModelParams};
use profdenoise::synth::{
    generate, mock_denoiser, noise_precision, read_labels, window_noise_rate, write_synth, MockBackend, MockMode,
    Script, INTERACTIONS_FILE, LABELS_FILE, TITLES_FILE,
};
use profdenoise::{DenoiseOutcome, Denoiser, Scorer};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{Config, DataSource, DenoiserKind, Stage};
use crate::error::CliError;
use crate::manifest::Manifest;

pub const SYNTH_DIR: &str = "synth";
pub const SPLIT_DIR: &str = "split";
pub const CHECKPOINT: &str = "model/checkpoint.json";
pub const RECORDS: &str = "eval/records.jsonl";

pub fn outcomes_path(id: &str) -> String {
    format!("denoise/{id}.outcomes.jsonl")
}

pub struct Run {
    pub cfg: Config,
    pub dir: PathBuf,
    pub force: bool,
    pub manifest: Manifest,
}

impl Run {
    pub fn new(cfg: Config, dir: PathBuf, force: bool) -> Result<Run, CliError> {
        let manifest = Manifest::load(&dir)?;
        Ok(Run {
            cfg,
            dir,
            force,
            manifest,
        })
    }

    fn need(&self, stage: Stage) -> Result<(), CliError> {
        let hash = self.cfg.stage_hash(&stage);
        self.manifest.require(&self.dir, &stage, &hash, self.force)
    }

    fn finish(&mut self, stage: Stage, outputs: &[String]) -> Result<(), CliError> {
        let hash = self.cfg.stage_hash(&stage);
        self.manifest.record(&self.dir, &stage, hash, outputs)?;
        self.manifest.save(&self.dir)?;
        log::info!("{} done: {} artifact(s) in {}", stage.key(), outputs.len(), self.dir.display());
        Ok(())
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn split(&self) -> Result<SplitDataset> {
        Ok(read_split(&self.path(SPLIT_DIR))?)
    }

    fn model(&self) -> Result<ModelParams> {
        Ok(load_checkpoint(&self.path(CHECKPOINT))?.params)
    }
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for r in rows {
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = std::io::BufReader::new(fs::File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut out = Vec::new();
    for (n, line) in f.lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), n + 1))?);
        }
    }
    Ok(out)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn synth(run: &mut Run) -> Result<(), CliError> {
    let data = generate(&run.cfg.synth).map_err(CliError::config)?;
    write_synth(&run.path(SYNTH_DIR), &data)?;
    println!(
        "synthetic data: {} interactions, {} noise labels",
        data.interactions.len(),
        data.labels.noise_count()
    );
    let outputs = [INTERACTIONS_FILE, TITLES_FILE, LABELS_FILE].map(|f| format!("{SYNTH_DIR}/{f}"));
    run.finish(Stage::Synth, &outputs)
}

pub fn prepare(run: &mut Run) -> Result<(), CliError> {
    let data = &run.cfg.data;
    let (interactions, titles, format) = match data.source {
        DataSource::Synth => {
            run.need(Stage::Synth)?;
            let dir = run.path(SYNTH_DIR);
            (dir.join(INTERACTIONS_FILE), Some(dir.join(TITLES_FILE)), InteractionFormat::Csv)
        }
        DataSource::File => {
            let path = data.interactions.clone().expect("validated");
            if !path.exists() {
                return Err(CliError::dependency(format!("interaction file {} does not exist", path.display())));
            }
            (path, data.titles.clone(), data.format)
        }
    };
    let mut log = load_interactions(&interactions, format)?;
    let titles = titles.map(|p| load_titles(&p, format)).transpose()?;
    let raw = DatasetStats::compute(&log, titles.as_ref());
    if let Some(k) = data.kcore {
        log = kcore_filter(&log, k.user_min, k.item_min)?;
    }
    let filtered = DatasetStats::compute(&log, titles.as_ref());
    let split = temporal_split(&log, titles.as_ref())?;
    write_split(&run.path(SPLIT_DIR), &split)?;
    let stats = serde_json::json!({ "raw": raw, "filtered": filtered, "window_len": split.window_len });
    fs::write(run.path("split/stats.json"), serde_json::to_string_pretty(&stats)? + "\n")?;
    println!(
        "split: {} users, {} items, prompt window {}",
        split.n_users(),
        split.n_items(),
        split.window_len
    );
    let mut outputs: Vec<String> = SPLIT_FILES.iter().map(|f| format!("{SPLIT_DIR}/{f}")).collect();
    outputs.push("split/stats.json".into());
    run.finish(Stage::Prepare, &outputs)
}

pub fn train_cmd(run: &mut Run) -> Result<(), CliError> {
    run.need(Stage::Prepare)?;
    let split = run.split()?;
    let params = train(&split.train_rows(), split.n_items(), &run.cfg.train)?;
    save_checkpoint(&run.path(CHECKPOINT), &run.cfg.train, &params)?;
    println!("trained MultiVAE on {} users x {} items", split.n_users(), split.n_items());
    run.finish(Stage::Train, &[CHECKPOINT.to_string()])
}

enum Built {
    Plain(Box<dyn Denoiser>),
    Llm(LlmDenoiser),
}

impl Built {
    fn denoiser(&self) -> &dyn Denoiser {
        match self {
            Built::Plain(d) => d.as_ref(),
            Built::Llm(d) => d,
        }
    }
}

fn build_denoiser(
    cfg: &Config,
    id: &str,
    split: &Arc<SplitDataset>,
    model: &Arc<ModelParams>,
) -> Result<(Built, usize), CliError> {
    let dc = cfg.denoiser(id).map_err(CliError::config)?;
    let k = dc.k.unwrap_or(cfg.denoise.k);
    let domain = cfg.data.domain_label.as_str();
    let built = match &dc.kind {
        DenoiserKind::Random => Built::Plain(Box::new(RandomDenoiser::new(id))),
        DenoiserKind::TopPop => Built::Plain(Box::new(TopPopDenoiser::new(id, split.popularity()))),
        DenoiserKind::Semantic => Built::Plain(Box::new(SemanticDenoiser::new(id, model.item_embeddings()))),
        DenoiserKind::UpperBound => Built::Plain(Box::new(UpperBoundOnValDenoiser::new(id, model.clone()))),
        DenoiserKind::Mock { mode, variant, script } => {
            let backend = if *mode == MockMode::Scripted {
                let path = script.as_ref().expect("validated");
                let script = Script::read_jsonl(path)
                    .with_context(|| format!("reading script {}", path.display()))
                    .map_err(CliError::config)?;
                MockBackend::scripted(script, split.clone())
            } else {
                let scorer: Arc<dyn Scorer> = model.clone();
                MockBackend::new(*mode, k, cfg.denoise.seed, split.clone(), Some(scorer)).map_err(CliError::config)?
            };
            Built::Llm(mock_denoiser(id, backend, variant.unwrap_or(PromptVariant::ZeroShot), domain))
        }
        DenoiserKind::Llm {
            model: name,
            variant,
            base_url,
            api_key,
            retry,
            params,
        } => {
            let base = base_url
                .clone()
                .or_else(|| std::env::var("OPENAI_BASE_URL").ok())
                .unwrap_or_else(|| "https://api.openai.com".into());
            let key = api_key.clone().or_else(|| std::env::var("OPENAI_API_KEY").ok());
            let client = HttpChatClient::new(base, key, retry.clone());
            let spec = PromptSpec::new(variant.unwrap_or(PromptVariant::ZeroShot), k, domain);
            Built::Llm(LlmDenoiser::new(id, spec, name.clone(), Box::new(client)).with_overrides(params.clone()))
        }
    };
    Ok((built, k))
}

fn campaign_users(cfg: &Config, split: &SplitDataset) -> Result<Vec<usize>, CliError> {
    match cfg.denoise.sample {
        Some(n) => stratified_sample(split, n, cfg.denoise.seed).map_err(CliError::config),
        None => Ok((0..split.n_users()).collect()),
    }
}

pub fn denoise(run: &mut Run, only: Option<&str>) -> Result<(), CliError> {
    run.need(Stage::Prepare)?;
    run.need(Stage::Train)?;
    let ids: Vec<String> = match only {
        Some(id) => vec![id.to_string()],
        None => run.cfg.denoisers.keys().cloned().collect(),
    };
    if ids.is_empty() {
        return Err(CliError::config(anyhow::anyhow!("no denoisers configured")));
    }
    let split = Arc::new(run.split()?);
    let model = Arc::new(run.model()?);
    let users = campaign_users(&run.cfg, &split)?;
    for id in ids {
        let (built, k) = build_denoiser(&run.cfg, &id, &split, &model)?;
        let d = &run.cfg.denoise;
        let config = CampaignConfig {
            k,
            runs: d.runs,
            seed: d.seed,
            max_in_flight: d.max_in_flight,
            context: ContextOptions {
                model_name: d.model_name.clone(),
                top_recs: d.top_recs,
            },
        };
        let campaign = match run_campaign(&*split, &*model, built.denoiser(), &users, &config) {
            Ok(c) => c,
            Err(e @ (DenoiseError::Denoiser { .. } | DenoiseError::InvalidK { .. } | DenoiseError::MissingTitle { .. })) => {
                return Err(CliError::config(e))
            }
            Err(e) => return Err(e.into()),
        };

        let log_rel = outcomes_path(&id);
        write_jsonl(&run.path(&log_rel), &campaign.outcomes)?;
        let timing = serde_json::json!({
            "users": users.len(),
            "runs": campaign.runs,
            "total_ms": campaign.wall_ms.iter().sum::<f64>(),
            "wall_ms": campaign.wall_ms,
        });
        fs::write(run.path(&format!("denoise/{id}.timing.json")), timing.to_string() + "\n")?;
        if let Built::Llm(llm) = &built {
            write_jsonl(&run.path(&format!("denoise/{id}.transcripts.jsonl")), llm.take_transcripts())?;
        }

        let completed: BTreeSet<usize> = campaign
            .outcomes
            .iter()
            .filter(|o| o.proposal.source.transport_error.is_none())
            .map(|o| o.user)
            .collect();
        let accepted = campaign.outcomes.iter().filter(|o| o.accepted).count();
        println!(
            "{id}: {} outcomes, {accepted} accepted, {} of {} users completed",
            campaign.outcomes.len(),
            completed.len(),
            users.len()
        );
        if completed.is_empty() {
            return Err(CliError::transport(format!(
                "{id}: every request failed after retries; no user completed"
            )));
        }
        if completed.len() < users.len() {
            log::warn!("{id}: {} user(s) had only transport failures", users.len() - completed.len());
        }
        run.finish(Stage::Denoise(id.clone()), &[log_rel])?;
    }
    Ok(())
}

pub fn evaluate(run: &mut Run, only: Option<&str>) -> Result<(), CliError> {
    run.need(Stage::Prepare)?;
    run.need(Stage::Train)?;
    let mut ids = run.manifest.denoise_ids();
    if let Some(id) = only {
        ids.retain(|i| i == id);
    }
    ids.retain(|id| {
        let keep = run.cfg.denoisers.contains_key(id);
        if !keep {
            log::warn!("skipping outcome log of `{id}`, which is no longer configured");
        }
        keep
    });
    if ids.is_empty() {
        return Err(CliError::dependency("no denoise outcome logs to evaluate; run `denoise` first".into()));
    }
    for id in &ids {
        run.need(Stage::Denoise(id.clone()))?;
    }
    let split = run.split()?;
    let model = run.model()?;

    let mut records = Vec::new();
    let mut users: Option<Vec<usize>> = None;
    let mut methods = Vec::new();
    for id in &ids {
        let outcomes: Vec<DenoiseOutcome> = read_jsonl(&run.path(&outcomes_path(id)))?;
        let these: Vec<usize> = outcomes.iter().map(|o| o.user).collect::<BTreeSet<_>>().into_iter().collect();
        match &users {
            None => users = Some(these),
            Some(u) if *u != these => {
                return Err(CliError::config(anyhow::anyhow!(
                    "`{id}` covers a different user set than `{}`; rerun denoise with one configuration",
                    ids[0]
                )))
            }
            Some(_) => {}
        }
        methods.push(evaluate_campaign(id, &outcomes, &model, &split)?);
    }
    records.extend(original_records(&split, &model, users.as_deref().unwrap_or_default())?);
    records.extend(methods.into_iter().flatten());
    write_jsonl(&run.path(RECORDS), &records)?;
    println!("evaluated {} method(s) over {} users", ids.len(), users.map_or(0, |u| u.len()));
    run.finish(Stage::Evaluate, &[RECORDS.to_string()])
}

#[derive(Serialize)]
struct PrecisionRow {
    method: String,
    removed: usize,
    noisy_removed: usize,
    precision: Option<f64>,
    recall: Option<f64>,
    window_noise_rate: f64,
}

pub fn report(run: &mut Run) -> Result<(), CliError> {
    run.need(Stage::Prepare)?;
    run.need(Stage::Evaluate)?;
    let split = run.split()?;
    let records: Vec<RankRecord> = read_jsonl(&run.path(RECORDS))?;
    let mut by_method: BTreeMap<String, Vec<RankRecord>> = BTreeMap::new();
    for r in records {
        by_method.entry(r.method.clone()).or_default().push(r);
    }
    let Some(original) = by_method.remove(ORIGINAL) else {
        return Err(anyhow::anyhow!("{RECORDS} has no `{ORIGINAL}` records").into());
    };
    let methods: Vec<(String, Vec<RankRecord>)> = by_method.into_iter().collect();
    let report = build_report(&original, &methods, &run.cfg.eval.cutoffs)?;

    fs::create_dir_all(run.path("report"))?;
    let mut outputs = Vec::new();
    let mut emit = |rel: &str, text: String| -> Result<()> {
        fs::write(run.dir.join(rel), text)?;
        outputs.push(rel.to_string());
        Ok(())
    };
    emit("report/metrics.csv", report.to_csv())?;
    emit("report/all_users.md", report.to_markdown(Subset::All))?;
    emit("report/denoised_users.md", report.to_markdown(Subset::Denoised))?;

    let mut ratings = csv::Writer::from_path(run.path("report/rating_breakdown.csv"))?;
    ratings.write_record(["method", "rating", "removed_items", "users", "positive_pct", "negative_pct", "net_pct"])?;
    let mut lengths = csv::Writer::from_path(run.path("report/length_breakdown.csv"))?;
    lengths.write_record([
        "method",
        "min_len",
        "max_len",
        "users",
        "denoised_users",
        "relative_change_pct",
        "improved",
        "unchanged",
        "worsened",
    ])?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for (m, recs) in &methods {
        let b = breakdown_by_rating(recs, &original, &split);
        if let Some(notice) = b.notice {
            log::warn!("{m}: {notice}");
        }
        for r in b.rows {
            ratings.write_record([
                m.clone(),
                opt(r.rating.map(|x| x.to_string())),
                r.removed_items.to_string(),
                r.users.to_string(),
                format!("{:.4}", r.positive_pct),
                format!("{:.4}", r.negative_pct),
                format!("{:.4}", r.net_pct),
            ])?;
        }
        for r in breakdown_by_profile_length(recs, &original, &split) {
            lengths.write_record([
                m.clone(),
                r.lo.to_string(),
                r.hi.to_string(),
                r.users.to_string(),
                r.denoised_users.to_string(),
                opt(r.relative_change.map(|x| format!("{x:.4}"))),
                r.improved.to_string(),
                r.unchanged.to_string(),
                r.worsened.to_string(),
            ])?;
        }
    }
    ratings.flush()?;
    lengths.flush()?;
    outputs.push("report/rating_breakdown.csv".into());
    outputs.push("report/length_breakdown.csv".into());

    let labels_path = run.path(&format!("{SYNTH_DIR}/{LABELS_FILE}"));
    if run.cfg.data.source == DataSource::Synth && labels_path.exists() {
        let labels = read_labels(&labels_path)?;
        let users: Vec<usize> = original.iter().map(|r| r.user).collect();
        let base = window_noise_rate(&split, &labels, &users);
        let mut rows = Vec::new();
        for (m, _) in &methods {
            let outcomes: Vec<DenoiseOutcome> = read_jsonl(&run.path(&outcomes_path(m)))?;
            let p = noise_precision(&outcomes, &labels, &split);
            rows.push(PrecisionRow {
                method: m.clone(),
                removed: p.removed,
                noisy_removed: p.noisy_removed,
                precision: p.precision,
                recall: p.recall,
                window_noise_rate: base,
            });
        }
        write_csv(&run.path("report/noise_precision.csv"), &rows)?;
        outputs.push("report/noise_precision.csv".into());
    }

    print!("{}", report.to_markdown(Subset::All));
    run.finish(Stage::Report, &outputs)
}
