use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{files, RunConfig};
use crate::dataset::{build_dataset, load_dataset, save_dataset, Dataset, RgbImage, NUM_CLASSES};
use crate::ensemble::{average_scores, members, search_best_ensemble, ScoreTable};
use crate::eval::{self, binarize_all, binary_metrics, classify, confusion_matrix, pr_curve, OperatingPoints, Task};
use crate::fsio::write_atomic;
use crate::hyperopt::{
    cross_validate, quasi_random_search, trial_log_csv, AxisKind, CvData, CvSummary, Scale, SearchSpace, SearchSummary,
    TrialResult,
};
use crate::nn::{NetworkSpec, NetworkState};
use crate::optim::{lr_range_test, RangeTest};
use crate::raterstats::{compare_report, report_csv, simulate_experts, RatingMatrix};
use crate::rng::{self, tag};
use crate::training::{score_images, NetworkObjective, TrainConfig};
use crate::Error;

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> crate::Result<()> {
    write_atomic(path, bytes.as_ref()).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> crate::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write(path, text)
}

fn require(path: &Path, step: &'static str) -> crate::Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingInput {
            path: path.to_path_buf(),
            step,
        })
    }
}

fn read_json<T: DeserializeOwned>(path: &Path, step: &'static str) -> crate::Result<T> {
    require(path, step)?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn open(path: &Path, step: &'static str) -> crate::Result<std::io::BufReader<std::fs::File>> {
    require(path, step)?;
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufReader::new(f))
}

fn load(cfg: &RunConfig) -> crate::Result<Dataset> {
    require(&cfg.out_dir.join(files::MANIFEST), "generate")?;
    let ds = load_dataset(&cfg.out_dir)?;
    if ds.k_folds != cfg.dataset.split.k_folds {
        return Err(Error::Config(format!(
            "manifest has {} folds, config asks for {}",
            ds.k_folds, cfg.dataset.split.k_folds
        )));
    }
    Ok(ds)
}

fn read_scores(path: &Path) -> crate::Result<ScoreTable> {
    Ok(ScoreTable::read_csv(open(path, "train")?)?)
}

fn labels_for(ds: &Dataset, ids: &[String]) -> crate::Result<Vec<u8>> {
    let by_id: HashMap<&str, u8> = ds.records.iter().map(|r| (r.image_id.as_str(), r.slof)).collect();
    ids.iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::Config(format!("scored image {id} is not in the manifest")))
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Render the dataset and write `manifest.csv` plus `images/`.
pub fn cmd_generate(cfg: &RunConfig) -> crate::Result<Dataset> {
    cfg.validate()?;
    let ds = build_dataset(&cfg.dataset.spec(cfg.seed), &cfg.dataset.split)?;
    for w in &ds.warnings {
        log::warn!("{w}");
    }
    save_dataset(&cfg.out_dir, &ds)?;
    log::info!("generated {} images in {}", ds.records.len(), cfg.out_dir.display());
    Ok(ds)
}

#[derive(Clone, Debug)]
pub struct TuneOutcome {
    pub range: RangeTest,
    /// The searched space, after the range test set the `lr` bounds.
    pub space: SearchSpace,
    pub trials: Vec<TrialResult>,
}

/// Learning-rate range test followed by the quasi-random search.
pub fn tune(cfg: &RunConfig, data: &CvData<'_>) -> crate::Result<TuneOutcome> {
    let rt = &cfg.search.range_test;
    let state = NetworkState::init(cfg.network.clone(), rng::derive_seed(cfg.seed, &[tag::RANGE_TEST]))?;
    let mut objective = NetworkObjective::new(state, &data.images, &data.labels, &cfg.train, cfg.seed)?;
    let init = objective.initial_params();
    let range = lr_range_test(
        &mut objective,
        &init,
        cfg.train.optimizer,
        rt.lr_min,
        rt.lr_max,
        rt.iters,
    )?;
    let mut space = cfg.search.space.clone();
    if rt.set_lr_axis {
        let s = range.suggested_lr;
        for axis in space.axes.iter_mut().filter(|a| a.name == "lr") {
            axis.kind = AxisKind::Continuous {
                scale: Scale::Log10,
                low: s / 10.0,
                high: s * 10.0,
            };
        }
        log::info!(
            "range test suggests lr {s}; searching lr in [{}, {}]",
            s / 10.0,
            s * 10.0
        );
    }
    let trials = quasi_random_search(
        &space,
        &cfg.train,
        &cfg.network,
        cfg.search.budget,
        cfg.epochs.short,
        data,
        rng::derive_seed(cfg.seed, &[tag::SEARCH]),
    )?;
    Ok(TuneOutcome { range, space, trials })
}

/// Writes `lr_range.csv`, `trials.csv` and `search_summary.json`.
pub fn cmd_tune(cfg: &RunConfig) -> crate::Result<SearchSummary> {
    cfg.validate()?;
    let ds = load(cfg)?;
    let data = CvData::from_dataset(&ds)?;
    let outcome = tune(cfg, &data)?;
    let summary = SearchSummary::new(&outcome.space, &outcome.trials, cfg.epochs.short, cfg.seed);
    write(&cfg.out_dir.join(files::LR_RANGE), outcome.range.to_csv())?;
    write(
        &cfg.out_dir.join(files::TRIALS),
        trial_log_csv(&outcome.space, &outcome.trials),
    )?;
    write_json(&cfg.out_dir.join(files::SEARCH_SUMMARY), &summary)?;
    if let Some(best) = outcome.trials.first() {
        log::info!("best trial {} with mean fold mAP {}", best.trial, best.cv.map_mean);
    }
    Ok(summary)
}

/// A trained ensemble member as recorded in `models.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub id: String,
    pub rank: usize,
    pub trial: usize,
    pub widths: Vec<usize>,
    pub seed_offset: u64,
    pub config: TrainConfig,
    pub cv: CvSummary,
}

impl ModelRecord {
    fn spec(&self, input_size: usize) -> NetworkSpec {
        NetworkSpec::with_widths(input_size, &self.widths)
    }
}

fn checkpoint_path(cfg: &RunConfig, model: &str, fold: usize) -> PathBuf {
    cfg.out_dir
        .join(files::CHECKPOINTS)
        .join(format!("{model}_fold{fold}.ckpt"))
}

/// Full-epoch cross-validation of every configured member. Writes one
/// checkpoint per model and fold, `models.json` and `oof_scores.csv`.
pub fn cmd_train(cfg: &RunConfig) -> crate::Result<Vec<ModelRecord>> {
    cfg.validate()?;
    let ds = load(cfg)?;
    let data = CvData::from_dataset(&ds)?;
    let summary: SearchSummary = read_json(&cfg.out_dir.join(files::SEARCH_SUMMARY), "tune")?;
    let mut records = Vec::new();
    let mut tables = Vec::new();
    for (i, m) in cfg.members.iter().enumerate() {
        let ranked = summary.ranked.get(m.rank - 1).ok_or_else(|| {
            Error::Config(format!(
                "member rank {} but the search kept {} trials",
                m.rank,
                summary.ranked.len()
            ))
        })?;
        let widths = m.widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join("-");
        let id = format!("m{}_rank{}_w{}_s{}", i + 1, m.rank, widths, m.seed_offset);
        let spec = NetworkSpec::with_widths(cfg.network.input_size, &m.widths);
        let seed = rng::derive_seed(cfg.seed, &[tag::MODEL, m.seed_offset]);
        let out = cross_validate(&ranked.config, &spec, &data, cfg.epochs.full, seed, &id)?;
        let table = out.table.ok_or_else(|| Error::Diverged(id.clone()))?;
        for (fold, state) in out.states.iter().enumerate() {
            write(&checkpoint_path(cfg, &id, fold), state.to_checkpoint())?;
        }
        log::info!("{id}: pooled mAP {}", out.summary.map_pooled);
        tables.push(table);
        records.push(ModelRecord {
            id,
            rank: m.rank,
            trial: ranked.trial,
            widths: m.widths.clone(),
            seed_offset: m.seed_offset,
            config: ranked.config.clone(),
            cv: out.summary,
        });
    }
    let merged = ScoreTable::merge(&tables)?;
    let mut buf = Vec::new();
    merged.write_csv(&mut buf)?;
    write(&cfg.out_dir.join(files::OOF_SCORES), buf)?;
    write_json(&cfg.out_dir.join(files::MODELS), &records)?;
    Ok(records)
}

/// The selected subset as written to `ensemble.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleChoice {
    pub bitmask: u32,
    pub models: Vec<String>,
    pub map_pooled: f64,
    pub map_mean: Option<f64>,
    pub map_std: Option<f64>,
}

/// Exhaustive subset search over the out-of-fold scores.
pub fn cmd_ensemble(cfg: &RunConfig) -> crate::Result<EnsembleChoice> {
    cfg.validate()?;
    let ds = load(cfg)?;
    let table = read_scores(&cfg.out_dir.join(files::OOF_SCORES))?;
    let slof = labels_for(&ds, table.images())?;
    let search = search_best_ensemble(&table, &slof)?;
    write(&cfg.out_dir.join(files::ENSEMBLE_REPORT), search.to_csv())?;
    let choice = EnsembleChoice {
        bitmask: search.best.bitmask,
        models: search.best_models(&table).into_iter().map(String::from).collect(),
        map_pooled: search.best.map_pooled,
        map_mean: search.best.map_mean,
        map_std: search.best.map_std,
    };
    write_json(&cfg.out_dir.join(files::ENSEMBLE), &choice)?;
    log::info!("best ensemble {:?}: pooled mAP {}", choice.models, choice.map_pooled);
    Ok(choice)
}

fn ensemble_oof(cfg: &RunConfig, ds: &Dataset) -> crate::Result<(Vec<f64>, Vec<u8>)> {
    let choice: EnsembleChoice = read_json(&cfg.out_dir.join(files::ENSEMBLE), "ensemble")?;
    let table = read_scores(&cfg.out_dir.join(files::OOF_SCORES))?;
    let slof = labels_for(ds, table.images())?;
    Ok((average_scores(&table, &members(choice.bitmask))?, slof))
}

/// PR curves and operating points from the pooled validation scores of the
/// chosen ensemble.
pub fn cmd_threshold(cfg: &RunConfig) -> crate::Result<Vec<OperatingPoints>> {
    cfg.validate()?;
    let ds = load(cfg)?;
    let (scores, slof) = ensemble_oof(cfg, &ds)?;
    for (task, name) in [(Task::AnyFouling, files::PR_ANY), (Task::HeavyFouling, files::PR_HEAVY)] {
        let curve = pr_curve(&scores, &binarize_all(&slof, task)?)?;
        write(&cfg.out_dir.join(name), curve.to_csv())?;
    }
    let points = cfg
        .recall_targets
        .iter()
        .map(|&t| OperatingPoints::select(&scores, &slof, t))
        .collect::<Result<Vec<_>, _>>()?;
    write_json(&cfg.out_dir.join(files::OPERATING_POINTS), &points)?;
    write(
        &cfg.out_dir.join(files::THRESHOLD_REPORT),
        metrics_csv(&points, &scores, &slof)?,
    )?;
    Ok(points)
}

/// `recall_target,task,threshold,precision,recall`, three rows per task for
/// the default targets.
fn metrics_csv(points: &[OperatingPoints], scores: &[f64], slof: &[u8]) -> crate::Result<String> {
    let mut out = String::from("recall_target,task,threshold,precision,recall\n");
    for task in Task::ALL {
        let positives = binarize_all(slof, task)?;
        for p in points {
            let t = p.threshold(task);
            let (precision, recall) = binary_metrics(scores, &positives, t);
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                p.recall_target,
                task.name(),
                t,
                opt(precision),
                opt(recall)
            ));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub n_test: usize,
    pub map_any: Option<f64>,
    pub map_heavy: Option<f64>,
    pub map_mean: Option<f64>,
}

/// Score the test split with the chosen ensemble: each member averages its
/// fold checkpoints, then members are averaged.
pub fn ensemble_test_scores(cfg: &RunConfig, images: &[&RgbImage]) -> crate::Result<Vec<f64>> {
    let choice: EnsembleChoice = read_json(&cfg.out_dir.join(files::ENSEMBLE), "ensemble")?;
    let records: Vec<ModelRecord> = read_json(&cfg.out_dir.join(files::MODELS), "train")?;
    let mut total = vec![0.0; images.len()];
    for id in &choice.models {
        let rec = records
            .iter()
            .find(|r| &r.id == id)
            .ok_or_else(|| Error::Config(format!("ensemble model {id} missing from {}", files::MODELS)))?;
        let spec = rec.spec(cfg.network.input_size);
        let mut member = vec![0.0; images.len()];
        for fold in 0..cfg.dataset.split.k_folds {
            let path = checkpoint_path(cfg, id, fold);
            require(&path, "train")?;
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let state = NetworkState::from_checkpoint(spec.clone(), &bytes)?;
            for (m, s) in member.iter_mut().zip(score_images(&state, images)?) {
                *m += s;
            }
        }
        for (t, m) in total.iter_mut().zip(member) {
            *t += m / cfg.dataset.split.k_folds as f64;
        }
    }
    Ok(total.into_iter().map(|t| t / choice.models.len() as f64).collect())
}

/// Test-set metrics at each operating point, confusion matrices, and the
/// simulated expert panel with the classifier's labels.
pub fn cmd_evaluate(cfg: &RunConfig) -> crate::Result<TestSummary> {
    cfg.validate()?;
    let ds = load(cfg)?;
    let points: Vec<OperatingPoints> = read_json(&cfg.out_dir.join(files::OPERATING_POINTS), "threshold")?;
    let test: Vec<_> = ds.test_indices().into_iter().map(|i| &ds.records[i]).collect();
    let images: Vec<&RgbImage> = test.iter().map(|r| &r.pixels).collect();
    let slof: Vec<u8> = test.iter().map(|r| r.slof).collect();
    let scores = ensemble_test_scores(cfg, &images)?;

    let mut csv = String::from("image_id,slof,score\n");
    for ((r, l), s) in test.iter().zip(&slof).zip(&scores) {
        csv.push_str(&format!("{},{l},{s}\n", r.image_id));
    }
    write(&cfg.out_dir.join(files::TEST_SCORES), csv)?;
    write(
        &cfg.out_dir.join(files::TEST_METRICS),
        metrics_csv(&points, &scores, &slof)?,
    )?;

    let ap = |task| -> crate::Result<Option<f64>> {
        match eval::average_precision(&scores, &binarize_all(&slof, task)?) {
            Ok(v) => Ok(Some(v)),
            Err(eval::EvalError::Undefined { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        }
    };
    let (map_any, map_heavy) = (ap(Task::AnyFouling)?, ap(Task::HeavyFouling)?);
    let summary = TestSummary {
        n_test: test.len(),
        map_any,
        map_heavy,
        map_mean: map_any.zip(map_heavy).map(|(a, h)| 0.5 * (a + h)),
    };
    write_json(&cfg.out_dir.join(files::TEST_SUMMARY), &summary)?;

    for p in &points {
        let predicted: Vec<u8> = scores.iter().map(|&s| classify(s, p)).collect();
        let m = confusion_matrix(&slof, &predicted, NUM_CLASSES)?;
        let mut csv = String::from("truth,pred_0,pred_1,pred_2\n");
        for (t, row) in m.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            csv.push_str(&format!("{t},{}\n", cells.join(",")));
        }
        write(&cfg.out_dir.join(format!("confusion_{}.csv", p.recall_target)), csv)?;
    }

    simulate_panel(cfg, &test, &scores, &points)?;
    Ok(summary)
}

/// Experts `expert1..=n` form the group; one more simulated expert and the
/// classifier are the compared methods.
fn simulate_panel(
    cfg: &RunConfig,
    test: &[&crate::dataset::ImageRecord],
    scores: &[f64],
    points: &[OperatingPoints],
) -> crate::Result<()> {
    let rc = &cfg.raters;
    let point = points
        .iter()
        .find(|p| p.recall_target == rc.recall_target)
        .ok_or_else(|| Error::Config(format!("no operating point at recall {}", rc.recall_target)))?;
    let mut chosen: Vec<usize> = (0..test.len()).collect();
    chosen.shuffle(&mut rng::stream(cfg.seed, &[tag::RATERS]));
    chosen.truncate(rc.n_images);
    chosen.sort_unstable();
    let ids: Vec<String> = chosen.iter().map(|&i| test[i].image_id.clone()).collect();
    let coverage: Vec<f64> = chosen.iter().map(|&i| test[i].coverage).collect();
    let names: Vec<String> = (1..=rc.n_experts + 1).map(|e| format!("expert{e}")).collect();
    let panel = simulate_experts(&ids, &coverage, &names, &rc.expert_model, cfg.seed)?;
    let held_out = names.last().expect("at least one expert").clone();
    let group = panel.without_raters(&[&held_out])?;
    let mut buf = Vec::new();
    group.write_csv(&mut buf)?;
    write(&cfg.out_dir.join(files::EXPERT_RATINGS), buf)?;

    let expert = panel.rater_labels(&held_out).expect("held-out expert exists");
    let mut csv = String::from("image_id,method,slof\n");
    for (&i, id) in chosen.iter().zip(&ids) {
        csv.push_str(&format!("{id},classifier,{}\n", classify(scores[i], point)));
    }
    for id in &ids {
        csv.push_str(&format!("{id},expert,{}\n", expert[id]));
    }
    write(&cfg.out_dir.join(files::METHOD_LABELS), csv)
}

#[derive(Deserialize)]
struct MethodRow {
    image_id: String,
    method: String,
    slof: u8,
}

fn read_methods(path: &Path) -> crate::Result<Vec<(String, BTreeMap<String, u8>)>> {
    let mut rd = csv::Reader::from_reader(open(path, "evaluate")?);
    let mut out: Vec<(String, BTreeMap<String, u8>)> = Vec::new();
    for row in rd.deserialize::<MethodRow>() {
        let row = row.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let slot = match out.iter().position(|(m, _)| *m == row.method) {
            Some(i) => i,
            None => {
                out.push((row.method.clone(), BTreeMap::new()));
                out.len() - 1
            }
        };
        if out[slot].1.insert(row.image_id.clone(), row.slof).is_some() {
            return Err(Error::Config(format!(
                "{}: method {} labels image {} twice",
                path.display(),
                row.method,
                row.image_id
            )));
        }
    }
    Ok(out)
}

/// Agreement report of each method against the expert group.
pub fn cmd_compare_raters(cfg: &RunConfig) -> crate::Result<String> {
    cfg.validate()?;
    let rc = &cfg.raters;
    let ratings = rc
        .ratings_csv
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join(files::EXPERT_RATINGS));
    let methods = rc
        .methods_csv
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join(files::METHOD_LABELS));
    let matrix = RatingMatrix::read_csv(open(&ratings, "evaluate")?)?;
    let methods = read_methods(&methods)?;
    let rows = compare_report(&matrix, &methods, rc.margin, rc.confidence)?;
    let csv = report_csv(&rows);
    write(&cfg.out_dir.join(files::RATER_REPORT), &csv)?;
    Ok(csv)
}

/// generate, tune, train, ensemble, threshold, evaluate, compare-raters.
pub fn run_all(cfg: &RunConfig) -> crate::Result<()> {
    cmd_generate(cfg)?;
    cmd_tune(cfg)?;
    cmd_train(cfg)?;
    cmd_ensemble(cfg)?;
    cmd_threshold(cfg)?;
    cmd_evaluate(cfg)?;
    cmd_compare_raters(cfg)?;
    Ok(())
}
