//! Agreement between expert raters and between a labelling method and the
//! expert group.

mod report;
mod simulate;
mod stats;

pub use report::{compare_report, report_csv, ReportRow, REPORT_HEADER};
pub use simulate::{simulate_experts, ExpertModel};
pub use stats::{
    clopper_pearson, fisher_exact_two_sided, tost_equivalence, tost_noninferiority, ContingencyTable2x2, FISHER_REL_TOL,
};

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::NUM_CLASSES;
use crate::eval::{binarize, Task};

#[derive(Debug, Error)]
pub enum RaterError {
    #[error("no rating for image {image} by rater {rater}")]
    MissingCell { image: String, rater: String },
    #[error("image {image} rated twice by rater {rater}")]
    DuplicateCell { image: String, rater: String },
    #[error("no method label for image {0}")]
    MissingMethodLabel(String),
    #[error("label {0} outside 0..=2")]
    InvalidLabel(u8),
    #[error("need at least {need} raters, got {got}")]
    TooFewRaters { need: usize, got: usize },
    #[error("empty pair set")]
    EmptyPairs,
    #[error("{0}")]
    Invalid(String),
    #[error("ratings CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// One line of the ratings CSV `image_id,rater_id,slof`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRow {
    pub image_id: String,
    pub rater_id: String,
    pub slof: u8,
}

/// Fully populated `label[rater][image]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RatingMatrix {
    raters: Vec<String>,
    images: Vec<String>,
    labels: Vec<Vec<u8>>,
}

impl RatingMatrix {
    pub fn new(raters: Vec<String>, images: Vec<String>, labels: Vec<Vec<u8>>) -> Result<Self, RaterError> {
        if labels.len() != raters.len() || labels.iter().any(|row| row.len() != images.len()) {
            return Err(RaterError::Invalid(format!(
                "label matrix does not match {} raters x {} images",
                raters.len(),
                images.len()
            )));
        }
        if let Some(&bad) = labels.iter().flatten().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(RaterError::InvalidLabel(bad));
        }
        Ok(Self { raters, images, labels })
    }

    /// Raters and images keep their order of first appearance.
    pub fn from_rows(rows: &[RatingRow]) -> Result<Self, RaterError> {
        let mut raters: Vec<String> = Vec::new();
        let mut images: Vec<String> = Vec::new();
        let mut cells: HashMap<(&str, &str), u8> = HashMap::new();
        for row in rows {
            if !raters.contains(&row.rater_id) {
                raters.push(row.rater_id.clone());
            }
            if !images.contains(&row.image_id) {
                images.push(row.image_id.clone());
            }
            if cells.insert((&row.rater_id, &row.image_id), row.slof).is_some() {
                return Err(RaterError::DuplicateCell {
                    image: row.image_id.clone(),
                    rater: row.rater_id.clone(),
                });
            }
        }
        let mut labels = Vec::with_capacity(raters.len());
        for r in &raters {
            let mut row = Vec::with_capacity(images.len());
            for i in &images {
                let l = cells
                    .get(&(r.as_str(), i.as_str()))
                    .ok_or_else(|| RaterError::MissingCell {
                        image: i.clone(),
                        rater: r.clone(),
                    })?;
                row.push(*l);
            }
            labels.push(row);
        }
        Self::new(raters, images, labels)
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    pub fn images(&self) -> &[String] {
        &self.images
    }

    pub fn label(&self, rater: usize, image: usize) -> u8 {
        self.labels[rater][image]
    }

    pub fn rows(&self) -> Vec<RatingRow> {
        let mut out = Vec::with_capacity(self.raters.len() * self.images.len());
        for (i, image) in self.images.iter().enumerate() {
            for (r, rater) in self.raters.iter().enumerate() {
                out.push(RatingRow {
                    image_id: image.clone(),
                    rater_id: rater.clone(),
                    slof: self.labels[r][i],
                });
            }
        }
        out
    }

    /// Drop the listed raters, e.g. to hold one expert out as a candidate.
    pub fn without_raters(&self, drop: &[&str]) -> Result<Self, RaterError> {
        let keep: Vec<usize> = (0..self.raters.len())
            .filter(|&r| !drop.contains(&self.raters[r].as_str()))
            .collect();
        Self::new(
            keep.iter().map(|&r| self.raters[r].clone()).collect(),
            self.images.clone(),
            keep.iter().map(|&r| self.labels[r].clone()).collect(),
        )
    }

    /// The labels of one rater keyed by image id.
    pub fn rater_labels(&self, rater: &str) -> Option<BTreeMap<String, u8>> {
        let r = self.raters.iter().position(|x| x == rater)?;
        Some(
            self.images
                .iter()
                .cloned()
                .zip(self.labels[r].iter().copied())
                .collect(),
        )
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), RaterError> {
        let mut w = csv::Writer::from_writer(w);
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, RaterError> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["image_id", "rater_id", "slof"] {
            return Err(RaterError::Invalid(format!(
                "ratings header {:?}, expected image_id,rater_id,slof",
                header.iter().collect::<Vec<_>>()
            )));
        }
        let rows: Vec<RatingRow> = rd.deserialize().collect::<Result<_, _>>()?;
        Self::from_rows(&rows)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairSource {
    GroupGroup,
    MethodGroup,
}

/// `(reference, candidate)` label pairs; the reference is treated as truth.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RaterPairSet {
    pub pairs: Vec<(u8, u8)>,
    pub source: PairSource,
}

impl RaterPairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Every ordered pair of distinct raters on every image: `R (R - 1) N` pairs.
pub fn build_group_pairs(m: &RatingMatrix) -> Result<RaterPairSet, RaterError> {
    let r = m.raters.len();
    if r < 2 {
        return Err(RaterError::TooFewRaters { need: 2, got: r });
    }
    let mut pairs = Vec::with_capacity(r * (r - 1) * m.images.len());
    for i in 0..r {
        for j in (0..r).filter(|&j| j != i) {
            for img in 0..m.images.len() {
                pairs.push((m.labels[i][img], m.labels[j][img]));
            }
        }
    }
    Ok(RaterPairSet {
        pairs,
        source: PairSource::GroupGroup,
    })
}

/// Each rater's label as reference against the method's label: `R N` pairs.
pub fn build_method_pairs(method: &BTreeMap<String, u8>, m: &RatingMatrix) -> Result<RaterPairSet, RaterError> {
    let mut method_row = Vec::with_capacity(m.images.len());
    for img in &m.images {
        let l = *method
            .get(img)
            .ok_or_else(|| RaterError::MissingMethodLabel(img.clone()))?;
        if l as usize >= NUM_CLASSES {
            return Err(RaterError::InvalidLabel(l));
        }
        method_row.push(l);
    }
    let mut pairs = Vec::with_capacity(m.raters.len() * m.images.len());
    for row in &m.labels {
        pairs.extend(row.iter().copied().zip(method_row.iter().copied()));
    }
    Ok(RaterPairSet {
        pairs,
        source: PairSource::MethodGroup,
    })
}

/// Binary confusion counts with the reference side as truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl BinaryCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `[[TP, FP], [FN, TN]]`.
    pub fn table(&self) -> ContingencyTable2x2 {
        ContingencyTable2x2::new(self.tp, self.fp, self.fn_, self.tn)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub agreement: f64,
    /// `None` when nothing was called positive.
    pub precision: Option<f64>,
    /// `None` when the reference has no positives.
    pub recall: Option<f64>,
    pub counts: BinaryCounts,
}

pub fn pair_stats(pairs: &RaterPairSet, task: Task) -> Result<PairStats, RaterError> {
    if pairs.is_empty() {
        return Err(RaterError::EmptyPairs);
    }
    let mut c = BinaryCounts::default();
    for &(r, k) in &pairs.pairs {
        let truth = binarize(r, task).map_err(|_| RaterError::InvalidLabel(r))?;
        let called = binarize(k, task).map_err(|_| RaterError::InvalidLabel(k))?;
        match (truth, called) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    Ok(PairStats {
        agreement: (c.tp + c.tn) as f64 / c.total() as f64,
        precision: ratio(c.tp, c.tp + c.fp),
        recall: ratio(c.tp, c.tp + c.fn_),
        counts: c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(labels: Vec<Vec<u8>>) -> RatingMatrix {
        let raters = (0..labels.len()).map(|r| format!("E{r}")).collect();
        let images = (0..labels[0].len()).map(|i| format!("img{i}")).collect();
        RatingMatrix::new(raters, images, labels).unwrap()
    }

    #[test]
    fn two_raters_one_image() {
        let m = matrix(vec![vec![0], vec![2]]);
        let p = build_group_pairs(&m).unwrap();
        assert_eq!(p.pairs, vec![(0, 2), (2, 0)]);
        assert!(build_group_pairs(&matrix(vec![vec![1]])).is_err());
    }

    #[test]
    fn pair_counts_for_three_raters_and_120_images() {
        let labels = (0..3)
            .map(|r| (0..120).map(|i| ((i + r) % 3) as u8).collect())
            .collect();
        let m = matrix(labels);
        assert_eq!(build_group_pairs(&m).unwrap().len(), 720);
        let method: BTreeMap<String, u8> = m.images().iter().map(|i| (i.clone(), 1)).collect();
        assert_eq!(build_method_pairs(&method, &m).unwrap().len(), 360);
    }

    #[test]
    fn identical_raters_agree_fully() {
        let m = matrix(vec![vec![0, 1, 2, 2]; 3]);
        let s = pair_stats(&build_group_pairs(&m).unwrap(), Task::HeavyFouling).unwrap();
        assert_eq!((s.agreement, s.precision, s.recall), (1.0, Some(1.0), Some(1.0)));
    }

    #[test]
    fn hand_tally() {
        let pairs = RaterPairSet {
            pairs: vec![
                (0, 0),
                (0, 1),
                (1, 1),
                (2, 1),
                (2, 0),
                (1, 0),
                (0, 0),
                (2, 2),
                (1, 2),
                (0, 2),
            ],
            source: PairSource::MethodGroup,
        };
        let s = pair_stats(&pairs, Task::AnyFouling).unwrap();
        assert_eq!(
            s.counts,
            BinaryCounts {
                tp: 4,
                fp: 2,
                fn_: 2,
                tn: 2
            }
        );
        assert_eq!(s.agreement, 0.6);
        assert_eq!(s.precision, Some(4.0 / 6.0));
        let s = pair_stats(&pairs, Task::HeavyFouling).unwrap();
        assert_eq!(
            s.counts,
            BinaryCounts {
                tp: 1,
                fp: 2,
                fn_: 2,
                tn: 5
            }
        );
        let empty = RaterPairSet {
            pairs: vec![],
            source: PairSource::GroupGroup,
        };
        assert!(pair_stats(&empty, Task::AnyFouling).is_err());
        let no_pos = RaterPairSet {
            pairs: vec![(0, 0), (0, 1)],
            source: PairSource::GroupGroup,
        };
        assert_eq!(pair_stats(&no_pos, Task::AnyFouling).unwrap().recall, None);
    }

    #[test]
    fn csv_round_trip_and_missing_cell() {
        let m = matrix(vec![vec![0, 1], vec![2, 1]]);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(RatingMatrix::read_csv(buf.as_slice()).unwrap(), m);
        let text = "image_id,rater_id,slof\na,E0,0\na,E1,1\nb,E0,2\n";
        let err = RatingMatrix::read_csv(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("image b") && err.contains("rater E1"), "{err}");
    }
}
