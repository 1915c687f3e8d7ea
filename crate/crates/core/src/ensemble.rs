//! Raw-score ensembles: averaging and exhaustive subset search.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{self, EvalError};

/// Largest model pool the exhaustive search accepts.
pub const MAX_MODELS: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("model {model} has no score for image {image}")]
    MissingCell { model: String, image: String },
    #[error("empty model subset")]
    EmptySubset,
    #[error("subset refers to model {0} outside the table")]
    UnknownModel(usize),
    #[error("need 1 <= min_size <= n_models <= {MAX_MODELS}, got min_size {min_size}, n_models {n_models}")]
    BadSubsetRange { n_models: usize, min_size: usize },
    #[error("duplicate row for image {image}, model {model}")]
    DuplicateRow { image: String, model: String },
    #[error("image {image} has inconsistent folds")]
    FoldConflict { image: String },
    #[error("{0}")]
    Shape(String),
    #[error("score table: {0}")]
    Format(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub image_id: String,
    pub model_id: String,
    pub fold: Option<usize>,
    pub raw_score: f64,
}

/// Raw scores, dense over `models x images`. Missing cells are NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    images: Vec<String>,
    folds: Vec<Option<usize>>,
    models: Vec<String>,
    scores: Vec<Vec<f64>>,
}

impl ScoreTable {
    pub fn new(images: Vec<String>, folds: Vec<Option<usize>>) -> Result<Self, EnsembleError> {
        if images.len() != folds.len() {
            return Err(EnsembleError::Shape("one fold entry per image required".into()));
        }
        Ok(Self {
            images,
            folds,
            models: Vec::new(),
            scores: Vec::new(),
        })
    }

    pub fn add_model(&mut self, model_id: impl Into<String>, scores: Vec<f64>) -> Result<(), EnsembleError> {
        let model_id = model_id.into();
        if scores.len() != self.images.len() {
            return Err(EnsembleError::Shape(format!(
                "model {model_id}: {} scores for {} images",
                scores.len(),
                self.images.len()
            )));
        }
        if self.models.contains(&model_id) {
            return Err(EnsembleError::DuplicateRow {
                image: self.images.first().cloned().unwrap_or_default(),
                model: model_id,
            });
        }
        self.models.push(model_id);
        self.scores.push(scores);
        Ok(())
    }

    pub fn images(&self) -> &[String] {
        &self.images
    }

    pub fn folds(&self) -> &[Option<usize>] {
        &self.folds
    }

    pub fn models(&self) -> &[String] {
        &self.models
    }

    pub fn model_scores(&self, model: usize) -> &[f64] {
        &self.scores[model]
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    /// Build from long-format rows. Image order follows first appearance.
    pub fn from_rows(rows: &[ScoreRow]) -> Result<Self, EnsembleError> {
        let mut image_index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut images = Vec::new();
        let mut folds = Vec::new();
        let mut model_index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut models = Vec::new();
        for r in rows {
            match image_index.get(r.image_id.as_str()) {
                Some(&i) => {
                    if folds[i] != r.fold {
                        return Err(EnsembleError::FoldConflict {
                            image: r.image_id.clone(),
                        });
                    }
                }
                None => {
                    image_index.insert(&r.image_id, images.len());
                    images.push(r.image_id.clone());
                    folds.push(r.fold);
                }
            }
            if !model_index.contains_key(r.model_id.as_str()) {
                model_index.insert(&r.model_id, models.len());
                models.push(r.model_id.clone());
            }
        }
        let mut scores = vec![vec![f64::NAN; images.len()]; models.len()];
        for r in rows {
            let (m, i) = (model_index[r.model_id.as_str()], image_index[r.image_id.as_str()]);
            if !scores[m][i].is_nan() {
                return Err(EnsembleError::DuplicateRow {
                    image: r.image_id.clone(),
                    model: r.model_id.clone(),
                });
            }
            scores[m][i] = r.raw_score;
        }
        Ok(Self {
            images,
            folds,
            models,
            scores,
        })
    }

    pub fn rows(&self) -> Vec<ScoreRow> {
        let mut rows = Vec::new();
        for (m, model) in self.models.iter().enumerate() {
            for (i, image) in self.images.iter().enumerate() {
                if !self.scores[m][i].is_nan() {
                    rows.push(ScoreRow {
                        image_id: image.clone(),
                        model_id: model.clone(),
                        fold: self.folds[i],
                        raw_score: self.scores[m][i],
                    });
                }
            }
        }
        rows
    }

    /// Combine tables over the same images (e.g. one per trained model).
    pub fn merge(tables: &[ScoreTable]) -> Result<Self, EnsembleError> {
        let rows: Vec<ScoreRow> = tables.iter().flat_map(|t| t.rows()).collect();
        Self::from_rows(&rows)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EnsembleError> {
        let mut wr = csv::Writer::from_writer(w);
        for row in self.rows() {
            wr.serialize(row).map_err(|e| EnsembleError::Format(e.to_string()))?;
        }
        wr.flush().map_err(|e| EnsembleError::Format(e.to_string()))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, EnsembleError> {
        let mut rd = csv::Reader::from_reader(r);
        let rows: Vec<ScoreRow> = rd
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(|e| EnsembleError::Format(e.to_string()))?;
        Self::from_rows(&rows)
    }
}

/// Models of a subset bitmask, ascending.
pub fn members(mask: u32) -> Vec<usize> {
    (0..32).filter(|b| mask & (1 << b) != 0).collect()
}

/// Arithmetic mean of the subset's raw scores, per image.
pub fn average_scores(table: &ScoreTable, subset: &[usize]) -> Result<Vec<f64>, EnsembleError> {
    if subset.is_empty() {
        return Err(EnsembleError::EmptySubset);
    }
    if let Some(&m) = subset.iter().find(|&&m| m >= table.n_models()) {
        return Err(EnsembleError::UnknownModel(m));
    }
    let mut out = vec![0.0; table.images.len()];
    for &m in subset {
        for (i, (acc, &s)) in out.iter_mut().zip(&table.scores[m]).enumerate() {
            if s.is_nan() {
                return Err(EnsembleError::MissingCell {
                    model: table.models[m].clone(),
                    image: table.images[i].clone(),
                });
            }
            *acc += s;
        }
    }
    let k = subset.len() as f64;
    out.iter_mut().for_each(|v| *v /= k);
    Ok(out)
}

/// Every subset of at least `min_size` models, as bitmasks in ascending order.
pub fn enumerate_subsets(n_models: usize, min_size: usize) -> Result<Vec<u32>, EnsembleError> {
    if !(1 <= min_size && min_size <= n_models && n_models <= MAX_MODELS) {
        return Err(EnsembleError::BadSubsetRange { n_models, min_size });
    }
    Ok((1u32..(1u32 << n_models))
        .filter(|m| m.count_ones() as usize >= min_size)
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub bitmask: u32,
    pub size: usize,
    /// mAP of the pooled out-of-fold scores; the selection criterion.
    pub map_pooled: f64,
    /// Mean and sample std of per-fold mAP over folds where both tasks are defined.
    pub map_mean: Option<f64>,
    pub map_std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSearch {
    pub best: SubsetReport,
    pub report: Vec<SubsetReport>,
}

impl EnsembleSearch {
    pub fn best_models<'a>(&self, table: &'a ScoreTable) -> Vec<&'a str> {
        members(self.best.bitmask)
            .into_iter()
            .map(|m| table.models[m].as_str())
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("bitmask,size,map_pooled,map_mean,map_std\n");
        for r in &self.report {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.bitmask,
                r.size,
                r.map_pooled,
                opt(r.map_mean),
                opt(r.map_std)
            ));
        }
        out
    }
}

/// Per-fold mAP list for pooled scores; `None` where a task is undefined.
pub fn per_fold_map(scores: &[f64], slof: &[u8], folds: &[Option<usize>]) -> Result<Vec<Option<f64>>, EvalError> {
    let ids: std::collections::BTreeSet<usize> = folds.iter().flatten().copied().collect();
    ids.into_iter()
        .map(|f| {
            let (s, l): (Vec<f64>, Vec<u8>) = scores
                .iter()
                .zip(slof)
                .zip(folds)
                .filter(|(_, fo)| **fo == Some(f))
                .map(|((s, l), _)| (*s, *l))
                .unzip();
            match eval::mean_average_precision(&s, &l) {
                Ok(m) => Ok(Some(m.mean)),
                Err(EvalError::Undefined { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

pub fn evaluate_subset(table: &ScoreTable, slof: &[u8], mask: u32) -> Result<SubsetReport, EnsembleError> {
    let combined = average_scores(table, &members(mask))?;
    let pooled = eval::mean_average_precision(&combined, slof)?;
    let per_fold: Vec<f64> = per_fold_map(&combined, slof, &table.folds)?
        .into_iter()
        .flatten()
        .collect();
    let (map_mean, map_std) = if per_fold.is_empty() {
        (None, None)
    } else {
        let (m, s) = eval::mean_std(&per_fold);
        (Some(m), Some(s))
    };
    Ok(SubsetReport {
        bitmask: mask,
        size: mask.count_ones() as usize,
        map_pooled: pooled.mean,
        map_mean,
        map_std,
    })
}

/// Evaluate every non-empty subset and pick the best pooled mAP; ties go to
/// the smaller subset, then the lower bitmask.
pub fn search_best_ensemble(table: &ScoreTable, slof: &[u8]) -> Result<EnsembleSearch, EnsembleError> {
    if slof.len() != table.images.len() {
        return Err(EnsembleError::Shape(format!(
            "{} labels for {} images",
            slof.len(),
            table.images.len()
        )));
    }
    let subsets = enumerate_subsets(table.n_models(), 1)?;
    let report: Vec<SubsetReport> = subsets
        .par_iter()
        .map(|&mask| evaluate_subset(table, slof, mask))
        .collect::<Result<_, _>>()?;
    let best = report
        .iter()
        .min_by(|a, b| {
            b.map_pooled
                .total_cmp(&a.map_pooled)
                .then(a.size.cmp(&b.size))
                .then(a.bitmask.cmp(&b.bitmask))
        })
        .cloned()
        .expect("at least one subset");
    Ok(EnsembleSearch { best, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(models: &[Vec<f64>]) -> ScoreTable {
        let n = models[0].len();
        let mut t = ScoreTable::new(
            (0..n).map(|i| format!("i{i}")).collect(),
            (0..n).map(|i| Some(i % 2)).collect(),
        )
        .unwrap();
        for (m, s) in models.iter().enumerate() {
            t.add_model(format!("m{m}"), s.clone()).unwrap();
        }
        t
    }

    #[test]
    fn singleton_average_is_identity() {
        let t = table(&[vec![0.1, 2.0, -3.0]]);
        assert_eq!(average_scores(&t, &[0]).unwrap(), vec![0.1, 2.0, -3.0]);
    }

    #[test]
    fn opposite_models_cancel() {
        let s = vec![0.5, -1.25, 3.0];
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let t = table(&[s, neg]);
        assert!(average_scores(&t, &[0, 1]).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(average_scores(&t, &[]), Err(EnsembleError::EmptySubset));
        assert_eq!(average_scores(&t, &[2]), Err(EnsembleError::UnknownModel(2)));
    }

    #[test]
    fn subset_counts() {
        assert_eq!(enumerate_subsets(3, 1).unwrap().len(), 7);
        assert_eq!(enumerate_subsets(9, 1).unwrap().len(), 511);
        assert_eq!(enumerate_subsets(4, 2).unwrap().len(), 11);
        assert_eq!(enumerate_subsets(3, 1).unwrap(), vec![1, 2, 3, 4, 5, 6, 7]);
        assert!(enumerate_subsets(3, 4).is_err());
        assert!(enumerate_subsets(21, 1).is_err());
    }

    #[test]
    fn missing_cell_is_reported() {
        let rows = vec![
            ScoreRow {
                image_id: "a".into(),
                model_id: "x".into(),
                fold: Some(0),
                raw_score: 1.0,
            },
            ScoreRow {
                image_id: "b".into(),
                model_id: "x".into(),
                fold: Some(1),
                raw_score: 2.0,
            },
            ScoreRow {
                image_id: "a".into(),
                model_id: "y".into(),
                fold: Some(0),
                raw_score: 3.0,
            },
        ];
        let t = ScoreTable::from_rows(&rows).unwrap();
        assert_eq!(average_scores(&t, &[0]).unwrap(), vec![1.0, 2.0]);
        assert!(matches!(
            average_scores(&t, &[0, 1]),
            Err(EnsembleError::MissingCell { .. })
        ));
    }

    #[test]
    fn rows_with_conflicting_folds_are_rejected() {
        let rows = vec![
            ScoreRow {
                image_id: "a".into(),
                model_id: "x".into(),
                fold: Some(0),
                raw_score: 1.0,
            },
            ScoreRow {
                image_id: "a".into(),
                model_id: "y".into(),
                fold: Some(1),
                raw_score: 3.0,
            },
        ];
        assert!(ScoreTable::from_rows(&rows).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let t = table(&[vec![0.1, 0.2], vec![1.0 / 3.0, -2.0]]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"image_id,model_id,fold,raw_score\n"));
        assert_eq!(ScoreTable::read_csv(&buf[..]).unwrap(), t);
    }

    #[test]
    fn single_model_search_picks_it() {
        let t = table(&[vec![0.0, 1.0, 2.0, 0.1, 1.1, 1.9]]);
        let s = search_best_ensemble(&t, &[0, 1, 2, 0, 1, 2]).unwrap();
        assert_eq!(s.best.bitmask, 1);
        assert_eq!(s.report.len(), 1);
        assert_eq!(s.best.map_pooled, 1.0);
    }

    #[test]
    fn ties_prefer_smaller_subsets() {
        // Both models rank perfectly, so every subset scores 1.
        let t = table(&[vec![0.0, 1.0, 2.0, 0.1], vec![0.0, 2.0, 4.0, 0.2]]);
        let s = search_best_ensemble(&t, &[0, 1, 2, 0]).unwrap();
        assert_eq!(s.best.bitmask, 1);
        assert!(s
            .to_csv()
            .starts_with("bitmask,size,map_pooled,map_mean,map_std\n1,1,1,"));
    }
}
