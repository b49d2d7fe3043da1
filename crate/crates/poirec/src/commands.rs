use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use poirec_core::counterfactual::{CatalogScorer, Scorer};
use poirec_core::eval::{evaluate, rank_candidates, validation_recall, MetricsReport};
use poirec_core::gradcheck::{gradcheck, tiny_instance, GradcheckReport};
use poirec_core::interactions::{parse_checkins, serialize_checkins, split_dataset, DatasetSplit, InteractionSet, SplitRatios};
use poirec_core::model::{ModelDims, ModelParams};
use poirec_core::propagation::{forward, FinalEmbeddings, PropagationGraphs};
use poirec_core::synthgen::{functional_ndcg, generate_city, parse_ground_truth, serialize_ground_truth, GroundTruth, Tally};
use poirec_core::training::{fit, EpochRecord, FitOutcome, RecallValidator, TrainObserver};
use poirec_core::ukg::{parse_triplets, serialize_triplets, EntityClass, UrbanKG};

use crate::checkpoint::{self, Checkpoint, GraphMode};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::report::{epoch_line, gradcheck_lines, MetricsRecord};
use crate::{read_text, write_text};

pub const VALIDATION_K: usize = 20;

#[derive(Clone, Debug)]
pub struct Dataset {
    pub kg: UrbanKG,
    pub interactions: InteractionSet,
    pub truth: Option<GroundTruth>,
}

/// Reads KG, check-ins and (when present) ground truth. The POI count is
/// the larger of the two files' counts.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let kg_path = cfg.kg_path();
    let mut kg = parse_triplets(&read_text(&kg_path)?).map_err(|source| CliError::Kg { path: kg_path, source })?;
    let ck_path = cfg.checkins_path();
    let interactions =
        parse_checkins(&read_text(&ck_path)?).map_err(|source| CliError::Checkins { path: ck_path, source })?;
    let n_pois = kg.population(EntityClass::Poi).max(interactions.n_pois());
    kg.widen_population(EntityClass::Poi, n_pois);
    let interactions = interactions.with_n_pois(n_pois);

    let truth_path = cfg.truth_path();
    let truth = if cfg.truth.is_some() || truth_path.exists() {
        let truth = parse_ground_truth(&read_text(&truth_path)?).ok_or(CliError::GroundTruth(truth_path.clone()))?;
        if truth.poi_func.rows() != n_pois || truth.user_taste.rows() != interactions.n_users() {
            return Err(CliError::GroundTruth(truth_path));
        }
        Some(truth)
    } else {
        None
    };
    Ok(Dataset { kg, interactions, truth })
}

/// Split, propagation graphs and model shape for one run.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub split: DatasetSplit,
    pub graphs: PropagationGraphs,
    pub mode: GraphMode,
    pub dims: ModelDims,
}

pub fn prepare(cfg: &RunConfig, data: &Dataset, mode: GraphMode) -> Result<Prepared> {
    let split = split_dataset(&data.interactions, SplitRatios::default(), cfg.seed)
        .map_err(|source| CliError::Checkins { path: cfg.checkins_path(), source })?;
    let graphs = match mode {
        GraphMode::Split => PropagationGraphs::split(&data.kg, split.train.clone()),
        GraphMode::Unsplit => PropagationGraphs::unsplit(&data.kg, split.train.clone()),
    };
    let dims = graphs.dims(cfg.dim, cfg.n_intents, cfg.n_layers);
    dims.validate()?;
    Ok(Prepared { split, graphs, mode, dims })
}

pub fn mode_of(cfg: &RunConfig) -> GraphMode {
    if cfg.no_disentangle {
        GraphMode::Unsplit
    } else {
        GraphMode::Split
    }
}

fn write_echo(cfg: &RunConfig, command: &str) -> Result<PathBuf> {
    let path = cfg.out_dir.join(format!("{command}.config"));
    write_text(&path, &cfg.echo())?;
    Ok(path)
}

#[derive(Clone, Debug)]
pub struct GenOutput {
    pub kg: PathBuf,
    pub checkins: PathBuf,
    pub truth: PathBuf,
    pub echo: PathBuf,
    pub tally: Tally,
}

pub fn cmd_gen(cfg: &RunConfig) -> Result<GenOutput> {
    let city = generate_city(&cfg.city_config())?;
    let (kg, checkins, truth) = (cfg.kg_path(), cfg.checkins_path(), cfg.truth_path());
    write_text(&kg, &serialize_triplets(&city.kg))?;
    write_text(&checkins, &serialize_checkins(&city.interactions))?;
    write_text(&truth, &serialize_ground_truth(&city.truth))?;
    let echo = write_echo(cfg, "gen")?;
    Ok(GenOutput { kg, checkins, truth, echo, tally: city.tally })
}

/// Streams epoch records to a JSON-lines file.
struct LogObserver {
    validator: RecallValidator,
    start: Instant,
    out: Option<BufWriter<File>>,
    path: PathBuf,
    failed: Option<std::io::Error>,
}

impl LogObserver {
    fn new(path: &Path, scorer: Scorer) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
        }
        let file = File::create(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        Ok(LogObserver {
            validator: RecallValidator { scorer, k: VALIDATION_K },
            start: Instant::now(),
            out: Some(BufWriter::new(file)),
            path: path.to_path_buf(),
            failed: None,
        })
    }

    fn finish(mut self) -> Result<()> {
        if let Some(mut w) = self.out.take() {
            if let Err(e) = w.flush() {
                self.failed.get_or_insert(e);
            }
        }
        match self.failed {
            Some(source) => Err(CliError::Io { path: self.path, source }),
            None => Ok(()),
        }
    }
}

impl TrainObserver for LogObserver {
    fn validation_metric(&mut self, params: &ModelParams, graphs: &PropagationGraphs, split: &DatasetSplit) -> f64 {
        self.validator.validation_metric(params, graphs, split)
    }

    fn on_epoch(&mut self, record: &EpochRecord) {
        if let Some(w) = self.out.as_mut() {
            if let Err(e) = writeln!(w, "{}", epoch_line(record)).and_then(|_| w.flush()) {
                self.failed.get_or_insert(e);
                self.out = None;
            }
        }
    }

    fn elapsed_secs(&mut self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

/// Trains on a prepared run, logging epochs to `log`.
pub fn train_prepared(cfg: &RunConfig, prepared: &Prepared, log: &Path, scorer: Scorer) -> Result<FitOutcome> {
    cfg.validate()?;
    let mut observer = LogObserver::new(log, scorer)?;
    let outcome = fit(&prepared.split, &prepared.graphs, prepared.dims, &cfg.hp, cfg.seed, &mut observer)?;
    observer.finish()?;
    Ok(outcome)
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub outcome: FitOutcome,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub echo: PathBuf,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let prepared = prepare(cfg, &data, mode_of(cfg))?;
    let log = cfg.out_dir.join("train_log.jsonl");
    let outcome = train_prepared(cfg, &prepared, &log, cfg.effective_scorer())?;
    let path = cfg.checkpoint_path();
    checkpoint::save(&Checkpoint { mode: prepared.mode, params: outcome.params.clone() }, &path)?;
    let echo = write_echo(cfg, "train")?;
    Ok(TrainOutput { outcome, checkpoint: path, log, echo })
}

/// Ranked candidate lists (train and validation positives removed) for
/// every user.
pub fn ranked_lists(finals: &FinalEmbeddings, split: &DatasetSplit, scorer: Scorer) -> Vec<Vec<u32>> {
    let cs = CatalogScorer::new(finals);
    (0..split.n_users())
        .map(|u| rank_candidates(&cs.scores(u, scorer), &[split.train.user_items(u), split.val.user_items(u)]))
        .collect()
}

pub fn metrics_record(
    cfg: &RunConfig,
    variant: &str,
    finals: &FinalEmbeddings,
    split: &DatasetSplit,
    scorer: Scorer,
    truth: Option<&GroundTruth>,
) -> MetricsRecord {
    let report: MetricsReport = evaluate(finals, split, scorer, cfg.seed);
    let functional_ndcg20 = truth.map(|t| functional_ndcg(&ranked_lists(finals, split, scorer), t, 20));
    MetricsRecord {
        variant: variant.to_string(),
        config_hash: cfg.hash(),
        report,
        functional_ndcg20,
        val_recall20: validation_recall(finals, split, scorer, VALIDATION_K),
    }
}

#[derive(Clone, Debug)]
pub struct EvalOutput {
    pub record: MetricsRecord,
    pub path: PathBuf,
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalOutput> {
    let data = load_dataset(cfg)?;
    let ck_path = cfg.checkpoint_path();
    let ckpt = checkpoint::from_text(&read_text(&ck_path)?, &ck_path)?;
    let prepared = prepare(cfg, &data, ckpt.mode)?;
    ckpt.params.check_dims(&prepared.dims)?;
    let finals = forward(&ckpt.params, &prepared.graphs);
    let scorer = cfg.effective_scorer();
    let record = metrics_record(cfg, ckpt.mode.name(), &finals, &prepared.split, scorer, data.truth.as_ref());
    let path = cfg.out_dir.join(format!("metrics_{}.jsonl", scorer.name()));
    write_text(&path, &format!("{}\n", record.line()))?;
    write_echo(cfg, "eval")?;
    Ok(EvalOutput { record, path })
}

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub variant: &'static str,
    pub mode: GraphMode,
    pub geo_triplets: usize,
    pub func_triplets: usize,
    pub kg_triplets: usize,
    pub best_epoch: usize,
    pub record: MetricsRecord,
}

#[derive(Clone, Debug)]
pub struct AblationOutput {
    pub rows: Vec<AblationRow>,
    pub table: String,
    pub path: PathBuf,
}

/// Full model, the same model ranked by total effect, and a model whose
/// two channels both propagate over the unsplit graph.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<AblationOutput> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let kg_triplets = data.kg.triplets().len();
    let mut rows = Vec::with_capacity(3);
    for mode in [GraphMode::Split, GraphMode::Unsplit] {
        let prepared = prepare(cfg, &data, mode)?;
        let log = cfg.out_dir.join(format!("ablate_{}_log.jsonl", mode.name()));
        let outcome = train_prepared(cfg, &prepared, &log, Scorer::Tie)?;
        let finals = forward(&outcome.params, &prepared.graphs);
        let (geo, func) = (prepared.graphs.geo.n_triplets, prepared.graphs.func.n_triplets);
        if mode == GraphMode::Unsplit {
            assert!(geo == kg_triplets && func == kg_triplets, "unsplit channels must see the whole graph");
        }
        let variants: &[(&'static str, Scorer)] = match mode {
            GraphMode::Split => &[("full", Scorer::Tie), ("te_only", Scorer::Te)],
            GraphMode::Unsplit => &[("no_disentangle", Scorer::Tie)],
        };
        for &(variant, scorer) in variants {
            let record = metrics_record(cfg, variant, &finals, &prepared.split, scorer, data.truth.as_ref());
            rows.push(AblationRow {
                variant,
                mode,
                geo_triplets: geo,
                func_triplets: func,
                kg_triplets,
                best_epoch: outcome.best_epoch,
                record,
            });
        }
    }
    let mut jsonl = String::new();
    for row in &rows {
        let mut v = row.record.to_json();
        let m = v.as_object_mut().expect("record is an object");
        m.insert("graphs".into(), row.mode.name().into());
        m.insert("geo_triplets".into(), row.geo_triplets.into());
        m.insert("func_triplets".into(), row.func_triplets.into());
        m.insert("kg_triplets".into(), row.kg_triplets.into());
        m.insert("best_epoch".into(), row.best_epoch.into());
        jsonl.push_str(&v.to_string());
        jsonl.push('\n');
    }
    let path = cfg.out_dir.join("ablation.jsonl");
    write_text(&path, &jsonl)?;
    let table = ablation_table(&rows);
    write_text(&cfg.out_dir.join("ablation.txt"), &table)?;
    write_echo(cfg, "ablate")?;
    Ok(AblationOutput { rows, table, path })
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<15} {:<6} {:<8} {:>8} {:>8} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>10}",
        "variant", "scorer", "graphs", "geo_kg", "func_kg", "recall@20", "recall@40", "recall@60", "ndcg@20", "ndcg@40",
        "ndcg@60", "f_ndcg@20"
    );
    for row in rows {
        let r = &row.record.report;
        let f = row.record.functional_ndcg20.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:<15} {:<6} {:<8} {:>8} {:>8} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>10}",
            row.variant,
            r.scorer,
            row.mode.name(),
            row.geo_triplets,
            row.func_triplets,
            r.recall[&20],
            r.recall[&40],
            r.recall[&60],
            r.ndcg[&20],
            r.ndcg[&40],
            r.ndcg[&60],
            f
        );
    }
    out
}

#[derive(Clone, Debug)]
pub struct GradcheckOutput {
    pub report: GradcheckReport,
    pub text: String,
    pub path: PathBuf,
}

/// Finite-difference check on the built-in tiny instance. A failed check
/// is a report outcome, not an error.
pub fn cmd_gradcheck(cfg: &RunConfig, corrupt: Option<&str>) -> Result<GradcheckOutput> {
    let inst = tiny_instance(cfg.seed);
    let report = gradcheck(&inst, cfg.gradcheck_step, cfg.gradcheck_tolerance, corrupt)?;
    let text = gradcheck_lines(&report);
    let path = cfg.out_dir.join("gradcheck.jsonl");
    write_text(&path, &text)?;
    write_echo(cfg, "gradcheck")?;
    Ok(GradcheckOutput { report, text, path })
}
