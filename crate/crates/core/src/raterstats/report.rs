use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    build_group_pairs, build_method_pairs, clopper_pearson, fisher_exact_two_sided, pair_stats, tost_noninferiority,
    ContingencyTable2x2, PairStats, RaterError, RatingMatrix,
};
use crate::eval::Task;

pub const GROUP_LABEL: &str = "expert-group";

/// One row of the agreement table. P-value cells are `None` on the group
/// baseline; rate cells are `None` when their denominator is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label_set: String,
    pub task: Task,
    pub pairs: usize,
    pub stats: PairStats,
    pub agreement_ci: (f64, f64),
    pub tost_p: Option<f64>,
    pub recall_ci: Option<(f64, f64)>,
    pub recall_fisher_p: Option<f64>,
    pub precision_ci: Option<(f64, f64)>,
    pub precision_fisher_p: Option<f64>,
}

fn ci(successes: u64, n: u64, confidence: f64) -> Result<Option<(f64, f64)>, RaterError> {
    if n == 0 {
        return Ok(None);
    }
    clopper_pearson(successes, n, confidence).map(Some)
}

fn row(label: &str, task: Task, pairs: usize, stats: PairStats, confidence: f64) -> Result<ReportRow, RaterError> {
    let c = stats.counts;
    Ok(ReportRow {
        label_set: label.to_string(),
        task,
        pairs,
        stats,
        agreement_ci: clopper_pearson(c.tp + c.tn, c.total(), confidence)?,
        tost_p: None,
        recall_ci: ci(c.tp, c.tp + c.fn_, confidence)?,
        recall_fisher_p: None,
        precision_ci: ci(c.tp, c.tp + c.fp, confidence)?,
        precision_fisher_p: None,
    })
}

/// Group baseline plus one row per method for each task. Fisher tables put
/// the group in the first row: `[TP, FN]` for recall, `[TP, FP]` for
/// precision. TOST compares each method's agreement with the group's.
pub fn compare_report(
    matrix: &RatingMatrix,
    methods: &[(String, BTreeMap<String, u8>)],
    margin: f64,
    confidence: f64,
) -> Result<Vec<ReportRow>, RaterError> {
    let group = build_group_pairs(matrix)?;
    let method_pairs = methods
        .iter()
        .map(|(name, labels)| Ok((name, build_method_pairs(labels, matrix)?)))
        .collect::<Result<Vec<_>, RaterError>>()?;
    let mut out = Vec::new();
    for task in Task::ALL {
        let g = pair_stats(&group, task)?;
        out.push(row(GROUP_LABEL, task, group.len(), g, confidence)?);
        for (name, pairs) in &method_pairs {
            let s = pair_stats(pairs, task)?;
            let mut r = row(name, task, pairs.len(), s, confidence)?;
            let (gc, mc) = (g.counts, s.counts);
            r.tost_p = Some(tost_noninferiority(
                g.agreement,
                group.len() as u64,
                s.agreement,
                pairs.len() as u64,
                margin,
            )?);
            r.recall_fisher_p = Some(fisher_exact_two_sided(&ContingencyTable2x2::new(
                gc.tp, gc.fn_, mc.tp, mc.fn_,
            )));
            r.precision_fisher_p = Some(fisher_exact_two_sided(&ContingencyTable2x2::new(
                gc.tp, gc.fp, mc.tp, mc.fp,
            )));
            out.push(r);
        }
    }
    Ok(out)
}

pub const REPORT_HEADER: [&str; 15] = [
    "label_set",
    "task",
    "pairs",
    "agreement",
    "agreement_low",
    "agreement_high",
    "tost_p",
    "recall",
    "recall_low",
    "recall_high",
    "recall_fisher_p",
    "precision",
    "precision_low",
    "precision_high",
    "precision_fisher_p",
];

/// Undefined rates print as `NA`; p-values that do not apply are empty.
pub fn report_csv(rows: &[ReportRow]) -> String {
    let num = |v: f64| v.to_string();
    let rate = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), num);
    let p = |v: Option<f64>| v.map_or_else(String::new, num);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER).expect("in-memory write");
    for r in rows {
        let rci = r.recall_ci.unzip();
        let pci = r.precision_ci.unzip();
        w.write_record([
            r.label_set.clone(),
            r.task.name().to_string(),
            r.pairs.to_string(),
            num(r.stats.agreement),
            num(r.agreement_ci.0),
            num(r.agreement_ci.1),
            p(r.tost_p),
            rate(r.stats.recall),
            rate(rci.0),
            rate(rci.1),
            p(r.recall_fisher_p),
            rate(r.stats.precision),
            rate(pci.0),
            rate(pci.1),
            p(r.precision_fisher_p),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}
