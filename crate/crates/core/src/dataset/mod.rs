//! Labelled hull imagery: synthetic generation, manifests, splits and folds.
//!
//! Labels follow the three-class simplified level-of-fouling scale:
//!
//! | SLoF | meaning                                   |
//! |------|-------------------------------------------|
//! | 0    | no fouling organisms (slime may be present) |
//! | 1    | patchy fouling, up to 15% of the surface  |
//! | 2    | heavy fouling, more than 15%              |

mod augment;
mod image;
mod manifest;
mod split;
mod synth;

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use augment::{
    augment, crop_resize, flip_horizontal, jitter_color, rotate_quarter_turns, AugmentPolicy, COLOR_JITTER,
    MIN_CROP_AREA,
};
pub use image::RgbImage;
pub use manifest::{load_dataset, read_manifest, save_dataset, write_manifest, ManifestRow, MANIFEST_FILE};
pub use split::{kfold_assign, kfold_assign_grouped, stratified_split, vessel_split, FoldAssignment, Split};
pub use synth::{generate_synthetic_image, render, HullStyle, SyntheticImage};

use crate::rng::{self, tag};

pub const NUM_CLASSES: usize = 3;
/// Upper coverage bound of SLoF 1.
pub const PATCHY_LIMIT: f64 = 0.15;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{0}")]
    Invalid(String),
    #[error("coverage {0} outside [0, 1]")]
    CoverageOutOfRange(f64),
    #[error("label {0} is not a SLoF class")]
    InvalidLabel(u8),
    #[error("image: {0}")]
    Image(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DatasetError {
    pub fn is_validation(&self) -> bool {
        !matches!(self, DatasetError::Io { .. })
    }
}

/// Map an exact coverage fraction to its SLoF class.
pub fn label_from_coverage(coverage: f64) -> Result<u8, DatasetError> {
    if !(0.0..=1.0).contains(&coverage) {
        return Err(DatasetError::CoverageOutOfRange(coverage));
    }
    Ok(if coverage == 0.0 {
        0
    } else if coverage <= PATCHY_LIMIT {
        1
    } else {
        2
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    pub vessel_id: String,
    pub pixels: RgbImage,
    pub coverage: f64,
    pub slof: u8,
    pub split: Split,
    /// Present iff `split == Train`.
    pub fold: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_images: usize,
    pub image_size: usize,
    pub class_mix: [f64; NUM_CLASSES],
    pub n_vessels: usize,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_images: 1200,
            image_size: 32,
            class_mix: [0.76, 0.17, 0.07],
            n_vessels: 24,
            seed: 2021,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.n_images == 0 || self.n_vessels == 0 {
            return Err(DatasetError::Invalid("n_images and n_vessels must be positive".into()));
        }
        if self.image_size < 16 {
            return Err(DatasetError::Invalid(format!(
                "image size {} is below 16",
                self.image_size
            )));
        }
        let sum: f64 = self.class_mix.iter().sum();
        if self.class_mix.iter().any(|&m| m < 0.0 || !m.is_finite()) || (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::Invalid(format!(
                "class mix {:?} must be nonnegative and sum to 1",
                self.class_mix
            )));
        }
        Ok(())
    }

    /// Per-class image counts, by largest remainder.
    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let exact = self.class_mix.map(|m| m * self.n_images as f64);
        let mut counts = exact.map(|e| e.floor() as usize);
        let mut short = self.n_images - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..NUM_CLASSES).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for c in order {
            if short == 0 {
                break;
            }
            counts[c] += 1;
            short -= 1;
        }
        counts
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitParams {
    pub test_fraction: f64,
    pub k_folds: usize,
    /// Hold out whole vessels (test split and folds) instead of single images.
    #[serde(default)]
    pub group_by_vessel: bool,
}

impl Default for SplitParams {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            k_folds: 5,
            group_by_vessel: false,
        }
    }
}

/// Coverage ranges drawn for each class. The gaps around the 0 and 15%
/// boundaries keep the synthetic task learnable at 32x32.
pub const CLASS_COVERAGE: [(f64, f64); NUM_CLASSES] = [(0.0, 0.0), (0.03, 0.12), (0.2, 0.7)];

/// An in-memory labelled dataset with split and fold assignments.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub records: Vec<ImageRecord>,
    pub k_folds: usize,
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn train_indices(&self) -> Vec<usize> {
        self.indices(Split::Train)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        self.indices(Split::Test)
    }

    fn indices(&self, split: Split) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn class_counts(&self, split: Option<Split>) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for r in &self.records {
            if split.is_none_or(|s| r.split == s) {
                counts[r.slof as usize] += 1;
            }
        }
        counts
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        validate_records(&self.records)
    }
}

pub fn validate_records(records: &[ImageRecord]) -> Result<(), DatasetError> {
    let mut seen = std::collections::HashSet::new();
    for r in records {
        if !seen.insert(r.image_id.as_str()) {
            return Err(DatasetError::Manifest(format!("duplicate image id {}", r.image_id)));
        }
        if label_from_coverage(r.coverage)? != r.slof {
            return Err(DatasetError::Manifest(format!(
                "{}: label {} disagrees with coverage {}",
                r.image_id, r.slof, r.coverage
            )));
        }
        if (r.split == Split::Train) != r.fold.is_some() {
            return Err(DatasetError::Manifest(format!(
                "{}: fold must be present exactly for training images",
                r.image_id
            )));
        }
    }
    Ok(())
}

/// Generate `spec.n_images` frames with exactly the planned class counts,
/// then assign the test split and cross-validation folds.
pub fn build_dataset(spec: &DatasetSpec, split: &SplitParams) -> Result<Dataset, DatasetError> {
    spec.validate()?;
    let counts = spec.class_counts();
    let mut plan: Vec<u8> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(c as u8, n))
        .collect();
    plan.shuffle(&mut rng::stream(spec.seed, &[tag::PLAN]));

    let hulls: Vec<HullStyle> = (0..spec.n_vessels)
        .map(|v| HullStyle::from_seed(rng::derive_seed(spec.seed, &[tag::IMAGE, 0x5E55E1, v as u64])))
        .collect();

    let records: Vec<ImageRecord> = plan
        .iter()
        .enumerate()
        .map(|(i, &class)| {
            let mut r = rng::stream(spec.seed, &[tag::PLAN, i as u64]);
            let vessel = r.random_range(0..spec.n_vessels);
            let (lo, hi) = CLASS_COVERAGE[class as usize];
            for attempt in 0u64.. {
                let target = if hi > lo { r.random_range(lo..=hi) } else { lo };
                let seed = rng::derive_seed(spec.seed, &[tag::IMAGE, i as u64, attempt]);
                let img = render(seed, target, spec.image_size, hulls[vessel])?;
                if label_from_coverage(img.coverage)? == class {
                    return Ok(ImageRecord {
                        image_id: format!("img{i:05}"),
                        vessel_id: format!("V{vessel:02}"),
                        pixels: img.pixels,
                        coverage: img.coverage,
                        slof: class,
                        split: Split::Train,
                        fold: None,
                    });
                }
            }
            unreachable!()
        })
        .collect::<Result<_, DatasetError>>()?;

    assign(records, split, spec.seed)
}

/// Assign test split and folds to freshly generated records.
pub fn assign(mut records: Vec<ImageRecord>, params: &SplitParams, seed: u64) -> Result<Dataset, DatasetError> {
    let labels: Vec<u8> = records.iter().map(|r| r.slof).collect();
    let vessels: Vec<&str> = records.iter().map(|r| r.vessel_id.as_str()).collect();
    let splits = if params.group_by_vessel {
        vessel_split(&vessels, params.test_fraction, seed)?
    } else {
        stratified_split(&labels, params.test_fraction, seed)?
    };
    let train: Vec<usize> = (0..records.len()).filter(|&i| splits[i] == Split::Train).collect();
    let folds = if params.group_by_vessel {
        let v: Vec<&str> = train.iter().map(|&i| vessels[i]).collect();
        kfold_assign_grouped(&v, params.k_folds, seed)?
    } else {
        let l: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
        kfold_assign(&l, params.k_folds, seed)?
    };
    for (r, s) in records.iter_mut().zip(&splits) {
        r.split = *s;
        r.fold = None;
    }
    for (&i, &f) in train.iter().zip(&folds.folds) {
        records[i].fold = Some(f);
    }
    let ds = Dataset {
        records,
        k_folds: params.k_folds,
        warnings: folds.warnings,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_one_boundaries() {
        assert_eq!(label_from_coverage(0.0).unwrap(), 0);
        assert_eq!(label_from_coverage(0.15).unwrap(), 1);
        assert_eq!(label_from_coverage(0.16).unwrap(), 2);
        assert_eq!(label_from_coverage(1.0).unwrap(), 2);
        assert_eq!(label_from_coverage(1e-9).unwrap(), 1);
        assert!(label_from_coverage(-0.01).is_err());
        assert!(label_from_coverage(1.01).is_err());
        assert!(label_from_coverage(f64::NAN).is_err());
    }

    #[test]
    fn class_counts_largest_remainder() {
        let spec = DatasetSpec {
            n_images: 1000,
            ..Default::default()
        };
        assert_eq!(spec.class_counts(), [760, 170, 70]);
        let spec = DatasetSpec {
            n_images: 10,
            class_mix: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            ..Default::default()
        };
        assert_eq!(spec.class_counts().iter().sum::<usize>(), 10);
    }

    #[test]
    fn class_mix_must_sum_to_one() {
        let spec = DatasetSpec {
            class_mix: [0.5, 0.3, 0.1],
            ..Default::default()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn built_dataset_honours_invariants() {
        let spec = DatasetSpec {
            n_images: 150,
            seed: 4,
            ..Default::default()
        };
        let ds = build_dataset(&spec, &SplitParams::default()).unwrap();
        assert_eq!(ds.records.len(), 150);
        assert_eq!(ds.class_counts(None), spec.class_counts());
        for r in &ds.records {
            assert_eq!(label_from_coverage(r.coverage).unwrap(), r.slof);
            assert_eq!(r.pixels.width(), 32);
        }
        let again = build_dataset(&spec, &SplitParams::default()).unwrap();
        assert_eq!(ds.records, again.records);
    }
}
