//! Flat per-paper analysis table used by the regressions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{CitationNetwork, CorpusFilter, FilterAudit, PaperId};
use crate::error::{Error, Result};
use crate::metrics::{DisruptionRecord, NormalizationTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRow {
    pub id: PaperId,
    pub year: i32,
    pub journal_id: Option<u32>,
    pub team_size: Option<u32>,
    /// Reference-list length r_p.
    #[serde(rename = "r")]
    pub refs: u32,
    /// Citations within the window, c_{p,cw}.
    #[serde(rename = "c")]
    pub citations: u32,
    pub cd: f64,
    pub normcd: Option<f64>,
    pub group_label: Option<u8>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PaperTable {
    pub rows: Vec<PaperRow>,
}

impl PaperTable {
    /// One row per disruption record, with metadata taken from the network.
    pub fn from_records(net: &CitationNetwork, records: &[DisruptionRecord], normcd: Option<&[Option<f64>]>) -> Self {
        let rows = records
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let node = net.paper(rec.id);
                PaperRow {
                    id: rec.id,
                    year: rec.year,
                    journal_id: node.journal_id,
                    team_size: node.team_size,
                    refs: net.out_degree(rec.id) as u32,
                    citations: rec.c_cw,
                    cd: rec.cd,
                    normcd: normcd.and_then(|z| z[i]),
                    group_label: node.group_label,
                }
            })
            .collect();
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Fills `normcd` from journal-year cells built over this table.
    pub fn normalize(&mut self) -> Result<NormalizationTable> {
        let keyed = self
            .rows
            .iter()
            .map(|r| {
                r.journal_id
                    .map(|j| (j, r.year, r.cd))
                    .ok_or(Error::MissingJournal { id: r.id })
            })
            .collect::<Result<Vec<_>>>()?;
        let table = NormalizationTable::build(keyed.iter().copied());
        for (row, &(j, t, cd)) in self.rows.iter_mut().zip(&keyed) {
            row.normcd = table.normalize(j, t, cd);
        }
        Ok(table)
    }

    /// Keeps rows satisfying `filter`; the NormCD bound applies only when
    /// `use_normcd` is set.
    pub fn filtered(&self, filter: &CorpusFilter, use_normcd: bool) -> Result<(Self, FilterAudit)> {
        filter.validate()?;
        let mut audit = FilterAudit::default();
        let mut rows = Vec::new();
        for row in &self.rows {
            let k = row.team_size.ok_or(Error::MissingMetadata {
                id: row.id,
                field: "team_size",
            })?;
            let verdict = filter.judge(row.refs, k, row.citations, use_normcd.then_some(row.normcd));
            audit.charge(verdict);
            if verdict.is_none() {
                rows.push(row.clone());
            }
        }
        Ok((Self { rows }, audit))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<PaperRow>, _>>()?;
        Ok(Self { rows })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = crate::corpus::csv_writer(path.as_ref())?;
        if self.rows.is_empty() {
            w.write_record([
                "id",
                "year",
                "journal_id",
                "team_size",
                "r",
                "c",
                "cd",
                "normcd",
                "group_label",
            ])?;
        }
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}
