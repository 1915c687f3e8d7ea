use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{apply, AxisValue, SearchError, SearchSpace, Sobol};
use crate::dataset::{Dataset, RgbImage};
use crate::ensemble::{per_fold_map, ScoreTable};
use crate::eval::{self, mean_std};
use crate::nn::{NetworkSpec, NetworkState};
use crate::rng;
use crate::training::{score_images, train_model, TrainConfig};

/// Training images with their pre-assigned folds.
#[derive(Clone, Debug)]
pub struct CvData<'a> {
    pub ids: Vec<String>,
    pub images: Vec<&'a RgbImage>,
    pub labels: Vec<u8>,
    pub folds: Vec<usize>,
    pub k: usize,
}

impl<'a> CvData<'a> {
    /// The training split of a dataset.
    pub fn from_dataset(ds: &'a Dataset) -> Result<Self, SearchError> {
        let recs: Vec<_> = ds.train_indices().into_iter().map(|i| &ds.records[i]).collect();
        let folds = recs
            .iter()
            .map(|r| {
                r.fold
                    .ok_or_else(|| SearchError::Data(format!("{} has no fold", r.image_id)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let data = Self {
            ids: recs.iter().map(|r| r.image_id.clone()).collect(),
            images: recs.iter().map(|r| &r.pixels).collect(),
            labels: recs.iter().map(|r| r.slof).collect(),
            folds,
            k: ds.k_folds,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let n = self.ids.len();
        if self.images.len() != n || self.labels.len() != n || self.folds.len() != n {
            return Err(SearchError::Data("column lengths differ".into()));
        }
        if self.k < 2 {
            return Err(SearchError::Data(format!("k = {}", self.k)));
        }
        for f in 0..self.k {
            let held_out = self.folds.iter().filter(|&&x| x == f).count();
            if held_out == 0 || held_out == n {
                return Err(SearchError::Data(format!("fold {f} holds {held_out} of {n} images")));
            }
        }
        if let Some(f) = self.folds.iter().find(|&&f| f >= self.k) {
            return Err(SearchError::Data(format!("fold {f} outside 0..{}", self.k)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Cross-validated score of one training config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    /// mAP of each held-out fold; `None` where a task has no positives or
    /// no negatives in that fold, or the run failed.
    pub fold_maps: Vec<Option<f64>>,
    /// Mean over the defined folds; `-inf` for a failed run.
    pub map_mean: f64,
    pub map_std: Option<f64>,
    /// mAP of the pooled out-of-fold scores; `-inf` for a failed run.
    pub map_pooled: f64,
    pub epochs: usize,
    pub failed: bool,
}

impl CvSummary {
    fn failed(k: usize, epochs: usize) -> Self {
        Self {
            fold_maps: vec![None; k],
            map_mean: f64::NEG_INFINITY,
            map_std: None,
            map_pooled: f64::NEG_INFINITY,
            epochs,
            failed: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CvOutcome {
    pub summary: CvSummary,
    /// Out-of-fold scores under `model_id`; `None` if any fold diverged.
    pub table: Option<ScoreTable>,
    /// One trained network per fold, in fold order.
    pub states: Vec<NetworkState>,
}

/// Train one model per fold and score only its held-out fold. Fold `f` uses
/// the seed stream `(seed, f)`.
pub fn cross_validate(
    config: &TrainConfig,
    spec: &NetworkSpec,
    data: &CvData<'_>,
    epochs: usize,
    seed: u64,
    model_id: &str,
) -> crate::Result<CvOutcome> {
    data.validate()?;
    let mut oof = vec![f64::NAN; data.len()];
    let mut states = Vec::with_capacity(data.k);
    for fold in 0..data.k {
        let (train, held): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| data.folds[i] != fold);
        let imgs: Vec<&RgbImage> = train.iter().map(|&i| data.images[i]).collect();
        let labels: Vec<u8> = train.iter().map(|&i| data.labels[i]).collect();
        let outcome = train_model(
            spec,
            config,
            &imgs,
            &labels,
            epochs,
            rng::derive_seed(seed, &[fold as u64]),
        )?;
        let Ok(outcome) = outcome else {
            log::warn!("{model_id}: fold {fold} diverged");
            return Ok(CvOutcome {
                summary: CvSummary::failed(data.k, epochs),
                table: None,
                states: Vec::new(),
            });
        };
        let held_imgs: Vec<&RgbImage> = held.iter().map(|&i| data.images[i]).collect();
        let scores = score_images(&outcome.state, &held_imgs)?;
        if scores.iter().any(|s| !s.is_finite()) {
            return Ok(CvOutcome {
                summary: CvSummary::failed(data.k, epochs),
                table: None,
                states: Vec::new(),
            });
        }
        for (&i, s) in held.iter().zip(scores) {
            oof[i] = s;
        }
        states.push(outcome.state);
    }
    let folds: Vec<Option<usize>> = data.folds.iter().map(|&f| Some(f)).collect();
    let fold_maps = per_fold_map(&oof, &data.labels, &folds)?;
    let defined: Vec<f64> = fold_maps.iter().flatten().copied().collect();
    let map_pooled = eval::mean_average_precision(&oof, &data.labels)?.mean;
    let (map_mean, map_std) = if defined.is_empty() {
        (map_pooled, None)
    } else {
        let (m, s) = mean_std(&defined);
        (m, Some(s))
    };
    let mut table = ScoreTable::new(data.ids.clone(), folds)?;
    table.add_model(model_id, oof)?;
    Ok(CvOutcome {
        summary: CvSummary {
            fold_maps,
            map_mean,
            map_std,
            map_pooled,
            epochs,
            failed: false,
        },
        table: Some(table),
        states,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    /// 1-based trial number; equals the Sobol index.
    pub trial: usize,
    pub sobol_index: u32,
    pub values: Vec<(String, AxisValue)>,
    pub config: TrainConfig,
    pub cv: CvSummary,
}

/// Evaluate the configs at Sobol indices `1..=budget` and rank them by mean
/// fold mAP, best first; ties keep trial order. Every trial uses the same
/// seed so that trials differ only in their config.
pub fn quasi_random_search(
    space: &SearchSpace,
    base: &TrainConfig,
    spec: &NetworkSpec,
    budget: usize,
    short_epochs: usize,
    data: &CvData<'_>,
    seed: u64,
) -> crate::Result<Vec<TrialResult>> {
    space.validate()?;
    if budget == 0 {
        return Err(SearchError::EmptyBudget.into());
    }
    data.validate()?;
    let sobol = Sobol::new(space.dim())?;
    let mut trials: Vec<TrialResult> = (1..=budget)
        .into_par_iter()
        .map(|trial| {
            let index = trial as u32;
            let values = space.scale_point(&sobol.point(index))?;
            let config = apply(base, &values)?;
            let cv = match config.validate() {
                Ok(()) => cross_validate(&config, spec, data, short_epochs, seed, &format!("trial{trial}"))?.summary,
                Err(e) => {
                    log::warn!("trial {trial}: {e}");
                    CvSummary::failed(data.k, short_epochs)
                }
            };
            Ok(TrialResult {
                trial,
                sobol_index: index,
                values,
                config,
                cv,
            })
        })
        .collect::<crate::Result<_>>()?;
    trials.sort_by(|a, b| b.cv.map_mean.total_cmp(&a.cv.map_mean).then(a.trial.cmp(&b.trial)));
    Ok(trials)
}

/// `trial,sobol_index,<axis columns>,fold,map`, one row per trial and fold,
/// in trial order. Undefined fold scores are empty; failed trials log `-inf`.
pub fn trial_log_csv(space: &SearchSpace, trials: &[TrialResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["trial".to_string(), "sobol_index".into()];
    header.extend(space.axes.iter().map(|a| a.name.clone()));
    header.extend(["fold".into(), "map".into()]);
    w.write_record(&header).expect("in-memory write");
    let mut ordered: Vec<&TrialResult> = trials.iter().collect();
    ordered.sort_by_key(|t| t.trial);
    for t in ordered {
        for (fold, m) in t.cv.fold_maps.iter().enumerate() {
            let mut row = vec![t.trial.to_string(), t.sobol_index.to_string()];
            row.extend(t.values.iter().map(|(_, v)| v.to_string()));
            row.push(fold.to_string());
            row.push(match (t.cv.failed, m) {
                (true, _) => "-inf".into(),
                (false, Some(v)) => v.to_string(),
                (false, None) => String::new(),
            });
            w.write_record(&row).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Ranked search results as written to the summary JSON. Scores of failed
/// trials serialize as `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub space: SearchSpace,
    pub budget: usize,
    pub short_epochs: usize,
    pub seed: u64,
    pub ranked: Vec<RankedTrial>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedTrial {
    pub rank: usize,
    pub trial: usize,
    pub sobol_index: u32,
    pub values: std::collections::BTreeMap<String, AxisValue>,
    pub config: TrainConfig,
    pub fold_maps: Vec<Option<f64>>,
    pub map_mean: Option<f64>,
    pub map_std: Option<f64>,
    pub map_pooled: Option<f64>,
    pub failed: bool,
}

impl SearchSummary {
    pub fn new(space: &SearchSpace, trials: &[TrialResult], short_epochs: usize, seed: u64) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        Self {
            space: space.clone(),
            budget: trials.len(),
            short_epochs,
            seed,
            ranked: trials
                .iter()
                .enumerate()
                .map(|(rank, t)| RankedTrial {
                    rank: rank + 1,
                    trial: t.trial,
                    sobol_index: t.sobol_index,
                    values: t.values.iter().cloned().collect(),
                    config: t.config.clone(),
                    fold_maps: t.cv.fold_maps.clone(),
                    map_mean: finite(t.cv.map_mean),
                    map_std: t.cv.map_std,
                    map_pooled: finite(t.cv.map_pooled),
                    failed: t.cv.failed,
                })
                .collect(),
        }
    }
}
