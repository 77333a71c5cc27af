use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::report::{sig6, Report};
use crate::error::{Error, Result};

/// One accuracy figure, either measured or quoted from elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub dataset: String,
    pub method: String,
    pub accuracy: f64,
}

/// Rank of each method on each dataset (1 = most accurate, ties share the
/// mean rank) and the average over datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub methods: Vec<String>,
    pub datasets: Vec<String>,
    /// `ranks[dataset][method]`.
    pub ranks: Vec<Vec<f64>>,
    pub average: Vec<f64>,
}

/// Reads `dataset,method,accuracy` rows from CSV with a header.
pub fn read_rank_rows<R: Read>(source: R) -> Result<Vec<RankRow>> {
    csv::Reader::from_reader(source)
        .deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Parse {
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Every dataset must report every method exactly once.
pub fn average_ranks(rows: &[RankRow]) -> Result<RankTable> {
    let mut table: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    let mut methods: Vec<String> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
        if table
            .entry(&r.dataset)
            .or_default()
            .insert(&r.method, r.accuracy)
            .is_some()
        {
            return Err(Error::Schema(format!(
                "duplicate entry for {} / {}",
                r.dataset, r.method
            )));
        }
    }
    if table.is_empty() {
        return Err(Error::Empty);
    }
    let mut ranks = Vec::new();
    for (dataset, accs) in &table {
        let scores: Vec<f64> = methods
            .iter()
            .map(|m| {
                accs.get(m.as_str())
                    .copied()
                    .ok_or_else(|| Error::Schema(format!("{dataset} has no entry for {m}")))
            })
            .collect::<Result<_>>()?;
        ranks.push(
            scores
                .iter()
                .map(|&s| {
                    let better = scores.iter().filter(|&&o| o > s).count() as f64;
                    let tied = scores.iter().filter(|&&o| o == s).count() as f64;
                    better + (tied + 1.0) / 2.0
                })
                .collect::<Vec<f64>>(),
        );
    }
    let d = ranks.len() as f64;
    let average = (0..methods.len())
        .map(|m| ranks.iter().map(|r| r[m]).sum::<f64>() / d)
        .collect();
    Ok(RankTable {
        methods,
        datasets: table.keys().map(|s| s.to_string()).collect(),
        ranks,
        average,
    })
}

impl Report for RankTable {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["dataset", "method", "rank"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        for (d, row) in self.datasets.iter().zip(&self.ranks) {
            for (m, r) in self.methods.iter().zip(row) {
                out.push(vec![d.clone(), m.clone(), sig6(*r)]);
            }
        }
        for (m, r) in self.methods.iter().zip(&self.average) {
            out.push(vec!["average".into(), m.clone(), sig6(*r)]);
        }
        out
    }
}
