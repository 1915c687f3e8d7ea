//! Manifest CSV (`image_id,vessel_id,path,coverage,slof,split,fold`) and the
//! on-disk dataset layout: `<dir>/manifest.csv` plus `<dir>/images/*.ppm`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{label_from_coverage, validate_records, Dataset, DatasetError, ImageRecord, RgbImage, Split};
use crate::fsio;

pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub image_id: String,
    pub vessel_id: String,
    pub path: String,
    pub coverage: f64,
    pub slof: u8,
    pub split: Split,
    pub fold: Option<usize>,
}

impl ManifestRow {
    pub fn for_record(r: &ImageRecord) -> Self {
        Self {
            image_id: r.image_id.clone(),
            vessel_id: r.vessel_id.clone(),
            path: format!("images/{}.ppm", r.image_id),
            coverage: r.coverage,
            slof: r.slof,
            split: r.split,
            fold: r.fold,
        }
    }
}

fn csv_err(e: csv::Error) -> DatasetError {
    DatasetError::Manifest(e.to_string())
}

pub fn write_manifest<W: Write>(w: W, rows: &[ManifestRow]) -> Result<(), DatasetError> {
    let mut wr = csv::Writer::from_writer(w);
    for row in rows {
        wr.serialize(row).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| DatasetError::Manifest(e.to_string()))
}

/// Parse a manifest and check the per-row invariants that do not need pixels.
pub fn read_manifest<R: Read>(r: R) -> Result<Vec<ManifestRow>, DatasetError> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers().map_err(csv_err)?.clone();
    let expected = ["image_id", "vessel_id", "path", "coverage", "slof", "split", "fold"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(DatasetError::Manifest(format!(
            "unexpected header {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut rows = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (line, row) in rd.deserialize::<ManifestRow>().enumerate() {
        let row = row.map_err(csv_err)?;
        if label_from_coverage(row.coverage)? != row.slof {
            return Err(DatasetError::Manifest(format!(
                "row {}: label {} disagrees with coverage {}",
                line + 2,
                row.slof,
                row.coverage
            )));
        }
        if (row.split == Split::Train) != row.fold.is_some() {
            return Err(DatasetError::Manifest(format!(
                "row {}: fold must be present exactly for training images",
                line + 2
            )));
        }
        if !seen.insert(row.image_id.clone()) {
            return Err(DatasetError::Manifest(format!("duplicate image id {}", row.image_id)));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn save_dataset(dir: &Path, ds: &Dataset) -> Result<(), DatasetError> {
    validate_records(&ds.records)?;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DatasetError::Io { path, source }
    };
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(io(&images))?;
    let rows: Vec<ManifestRow> = ds.records.iter().map(ManifestRow::for_record).collect();
    for (rec, row) in ds.records.iter().zip(&rows) {
        let mut buf = Vec::new();
        rec.pixels.write_ppm(&mut buf).expect("in-memory write");
        let path = dir.join(&row.path);
        fsio::write_atomic(&path, &buf).map_err(io(&path))?;
    }
    let mut buf = Vec::new();
    write_manifest(&mut buf, &rows)?;
    let path = dir.join(MANIFEST_FILE);
    fsio::write_atomic(&path, &buf).map_err(io(&path))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let path = dir.join(MANIFEST_FILE);
    let file = std::fs::File::open(&path).map_err(|source| DatasetError::Io {
        path: path.clone(),
        source,
    })?;
    let rows = read_manifest(std::io::BufReader::new(file))?;
    let mut records = Vec::with_capacity(rows.len());
    for row in rows {
        let p = dir.join(&row.path);
        let f = std::fs::File::open(&p).map_err(|source| DatasetError::Io {
            path: p.clone(),
            source,
        })?;
        let pixels = RgbImage::read_ppm(std::io::BufReader::new(f))?;
        records.push(ImageRecord {
            image_id: row.image_id,
            vessel_id: row.vessel_id,
            pixels,
            coverage: row.coverage,
            slof: row.slof,
            split: row.split,
            fold: row.fold,
        });
    }
    validate_records(&records)?;
    let k_folds = records.iter().filter_map(|r| r.fold).max().map_or(0, |m| m + 1);
    Ok(Dataset {
        records,
        k_folds,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, coverage: f64, slof: u8, split: Split, fold: Option<usize>) -> ManifestRow {
        ManifestRow {
            image_id: id.into(),
            vessel_id: "V01".into(),
            path: format!("images/{id}.ppm"),
            coverage,
            slof,
            split,
            fold,
        }
    }

    #[test]
    fn header_and_blank_fold() {
        let rows = vec![
            row("a", 0.0, 0, Split::Train, Some(3)),
            row("b", 0.25, 2, Split::Test, None),
        ];
        let mut buf = Vec::new();
        write_manifest(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("image_id,vessel_id,path,coverage,slof,split,fold\n"));
        assert!(text.contains("b,V01,images/b.ppm,0.25,2,test,\n"));
        assert_eq!(read_manifest(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn inconsistent_rows_are_rejected() {
        for bad in [
            row("a", 0.3, 1, Split::Train, Some(0)),
            row("a", 0.0, 0, Split::Test, Some(0)),
            row("a", 0.0, 0, Split::Train, None),
        ] {
            let mut buf = Vec::new();
            write_manifest(&mut buf, &[bad]).unwrap();
            assert!(read_manifest(&buf[..]).is_err());
        }
        let mut buf = Vec::new();
        let r = row("a", 0.0, 0, Split::Test, None);
        write_manifest(&mut buf, &[r.clone(), r]).unwrap();
        assert!(read_manifest(&buf[..]).is_err());
    }

    #[test]
    fn coverage_round_trips_exactly() {
        let rows = vec![
            row("a", 0.1123046875, 1, Split::Test, None),
            row("b", 1.0 / 3.0, 2, Split::Test, None),
        ];
        let mut buf = Vec::new();
        write_manifest(&mut buf, &rows).unwrap();
        let back = read_manifest(&buf[..]).unwrap();
        assert_eq!(back[1].coverage.to_bits(), (1.0f64 / 3.0).to_bits());
    }
}
