//! Windowed disruption index computation.
//!
//! For a focal paper `p` published in year `t_p` and a citation window `cw`,
//! only papers published in `t_p < t <= t_p + cw` count as citers. They fall
//! into three disjoint sets:
//!
//! * `i`: cite `p` but none of its references,
//! * `j`: cite `p` and at least one of its references,
//! * `k`: cite at least one reference of `p` but not `p`.
//!
//! `CD = (N_i - N_j) / (N_i + N_j + N_k)`, `CD_nok = (N_i - N_j) / (N_i + N_j)`
//! and `R_k = N_k / (N_i + N_j)`, so `CD = CD_nok / (1 + R_k)`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CitationNetwork, PaperId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisruptionRecord {
    pub id: PaperId,
    pub year: i32,
    pub cw: u32,
    pub n_i: u64,
    pub n_j: u64,
    pub n_k: u64,
    pub cd: f64,
    pub cd_nok: f64,
    pub r_k: f64,
    /// Citations received within the window, `N_i + N_j`.
    pub c_cw: u32,
}

impl DisruptionRecord {
    /// `None` when the paper is uncited in the window.
    pub fn from_counts(id: PaperId, year: i32, cw: u32, n_i: u64, n_j: u64, n_k: u64) -> Option<Self> {
        let cited = n_i + n_j;
        if cited == 0 {
            return None;
        }
        let diff = n_i as f64 - n_j as f64;
        Some(Self {
            id,
            year,
            cw,
            n_i,
            n_j,
            n_k,
            cd: diff / (cited + n_k) as f64,
            cd_nok: diff / cited as f64,
            r_k: n_k as f64 / cited as f64,
            c_cw: cited as u32,
        })
    }

    /// Numerator and denominator of CD in exact integer arithmetic.
    pub fn cd_ratio(&self) -> (i64, u64) {
        (self.n_i as i64 - self.n_j as i64, self.n_i + self.n_j + self.n_k)
    }
}

/// Per-worker marker array. Each focal paper gets three fresh stamp values,
/// so the array never needs clearing.
struct Marks {
    stamp: Vec<u64>,
    generation: u64,
}

impl Marks {
    fn new(n: usize) -> Self {
        Self {
            stamp: vec![0; n],
            generation: 0,
        }
    }
}

fn count_subsets(net: &CitationNetwork, p: PaperId, cw: u32, marks: &mut Marks) -> (u64, u64, u64) {
    let t_p = net.year(p);
    let until = t_p.saturating_add(cw as i32);
    let citers = net.citers_between(p, t_p, until);
    if citers.is_empty() {
        return (0, 0, 0);
    }
    marks.generation += 1;
    let base = marks.generation * 3;
    let (citer, in_j, in_k) = (base, base + 1, base + 2);
    for &c in citers {
        marks.stamp[c as usize] = citer;
    }
    let (mut n_j, mut n_k) = (0u64, 0u64);
    for &r in net.references(p) {
        for &c in net.citers_between(r, t_p, until) {
            let s = &mut marks.stamp[c as usize];
            if *s == citer {
                *s = in_j;
                n_j += 1;
            } else if *s != in_j && *s != in_k {
                *s = in_k;
                n_k += 1;
            }
        }
    }
    (citers.len() as u64 - n_j, n_j, n_k)
}

/// Disruption record of one paper, `None` if it is uncited within `cw`.
pub fn compute_cd(net: &CitationNetwork, p: PaperId, cw: u32) -> Option<DisruptionRecord> {
    let mut marks = Marks::new(net.num_papers());
    let (n_i, n_j, n_k) = count_subsets(net, p, cw, &mut marks);
    DisruptionRecord::from_counts(p, net.year(p), cw, n_i, n_j, n_k)
}

/// Records for every paper cited within the window, in id order.
pub fn compute_cd_all(net: &CitationNetwork, cw: u32) -> Vec<DisruptionRecord> {
    let n = net.num_papers();
    (0..n as PaperId)
        .into_par_iter()
        .map_init(
            || Marks::new(n),
            |marks, p| {
                let (n_i, n_j, n_k) = count_subsets(net, p, cw, marks);
                DisruptionRecord::from_counts(p, net.year(p), cw, n_i, n_j, n_k)
            },
        )
        .flatten()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YearPoint {
    pub year: i32,
    pub mean: f64,
    /// Papers with a defined value in this year.
    pub count: usize,
}

fn mean_by_year(records: &[DisruptionRecord], value: impl Fn(&DisruptionRecord) -> f64) -> Vec<YearPoint> {
    let mut acc: BTreeMap<i32, (f64, usize)> = BTreeMap::new();
    for rec in records {
        let e = acc.entry(rec.year).or_default();
        e.0 += value(rec);
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(year, (sum, count))| YearPoint {
            year,
            mean: sum / count as f64,
            count,
        })
        .collect()
}

/// Mean CD per publication year; years without records are omitted.
pub fn mean_cd_by_year(records: &[DisruptionRecord]) -> Vec<YearPoint> {
    mean_by_year(records, |r| r.cd)
}

pub fn mean_rk_by_year(records: &[DisruptionRecord]) -> Vec<YearPoint> {
    mean_by_year(records, |r| r.r_k)
}

pub fn mean_cd_nok_by_year(records: &[DisruptionRecord]) -> Vec<YearPoint> {
    mean_by_year(records, |r| r.cd_nok)
}

/// Mean N_j share `N_j / (N_i + N_j)`, the triadic-closure rate among citers.
pub fn mean_closure_share(records: &[DisruptionRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(|r| r.n_j as f64 / r.c_cw as f64).sum::<f64>() / records.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub mean: f64,
    /// Sample (n - 1) standard deviation; 0 for single-paper cells.
    pub sd: f64,
    pub count: usize,
}

/// Journal-year location and scale of CD.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTable {
    pub cells: BTreeMap<(u32, i32), CellStats>,
}

impl NormalizationTable {
    pub const SD_KIND: &'static str = "sample";

    pub fn build(values: impl IntoIterator<Item = (u32, i32, f64)>) -> Self {
        let mut grouped: BTreeMap<(u32, i32), Vec<f64>> = BTreeMap::new();
        for (j, t, cd) in values {
            grouped.entry((j, t)).or_default().push(cd);
        }
        let cells = grouped
            .into_iter()
            .map(|(key, xs)| {
                let n = xs.len();
                let mean = xs.iter().sum::<f64>() / n as f64;
                let sd = if n > 1 {
                    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
                } else {
                    0.0
                };
                (key, CellStats { mean, sd, count: n })
            })
            .collect();
        Self { cells }
    }

    /// `(cd - mean) / sd`, or `None` for degenerate or unknown cells.
    pub fn normalize(&self, journal: u32, year: i32, cd: f64) -> Option<f64> {
        let cell = self.cells.get(&(journal, year))?;
        (cell.count >= 2 && cell.sd > 0.0).then(|| (cd - cell.mean) / cell.sd)
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut w = crate::corpus::csv_writer(path.as_ref())?;
        w.write_record(["journal_id", "year", "mean_cd", "sd_cd", "count", "sd_kind"])?;
        for (&(j, t), c) in &self.cells {
            w.write_record([
                j.to_string(),
                t.to_string(),
                c.mean.to_string(),
                c.sd.to_string(),
                c.count.to_string(),
                Self::SD_KIND.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NormalizedCd {
    /// Aligned with the input records.
    pub normcd: Vec<Option<f64>>,
    pub table: NormalizationTable,
}

/// Journal-year normalization of CD over the given records.
pub fn normalize_cd(records: &[DisruptionRecord], net: &CitationNetwork) -> Result<NormalizedCd> {
    let keyed = records
        .iter()
        .map(|r| {
            net.paper(r.id)
                .journal_id
                .map(|j| (j, r.year, r.cd))
                .ok_or(Error::MissingJournal { id: r.id })
        })
        .collect::<Result<Vec<_>>>()?;
    let table = NormalizationTable::build(keyed.iter().copied());
    let normcd = keyed.iter().map(|&(j, t, cd)| table.normalize(j, t, cd)).collect();
    Ok(NormalizedCd { normcd, table })
}

pub const RECORDS_HEADER: [&str; 9] = ["id", "year", "Ni", "Nj", "Nk", "CD", "CDnok", "Rk", "c_cw"];

/// Writes `records.csv`; with `normcd` an extra `normcd` column is appended
/// (empty when undefined).
pub fn write_records(
    path: impl AsRef<std::path::Path>,
    records: &[DisruptionRecord],
    normcd: Option<&[Option<f64>]>,
) -> Result<()> {
    let mut w = crate::corpus::csv_writer(path.as_ref())?;
    let mut header: Vec<&str> = RECORDS_HEADER.to_vec();
    if normcd.is_some() {
        header.push("normcd");
    }
    w.write_record(&header)?;
    for (i, r) in records.iter().enumerate() {
        let mut row = vec![
            r.id.to_string(),
            r.year.to_string(),
            r.n_i.to_string(),
            r.n_j.to_string(),
            r.n_k.to_string(),
            r.cd.to_string(),
            r.cd_nok.to_string(),
            r.r_k.to_string(),
            r.c_cw.to_string(),
        ];
        if let Some(z) = normcd {
            row.push(z[i].map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PaperNode;

    /// Builds a focal paper (id 1, year 2) citing one reference (id 0, year 1),
    /// with `ni` i-type, `nj` j-type and `nk` k-type citers in year 3.
    fn focal_graph(ni: u32, nj: u32, nk: u32) -> CitationNetwork {
        let mut nodes = vec![PaperNode::new(0, 1), PaperNode::new(1, 2)];
        let mut edges = vec![(1, 0)];
        let mut next = 2;
        for (count, cites_p, cites_ref) in [(ni, true, false), (nj, true, true), (nk, false, true)] {
            for _ in 0..count {
                nodes.push(PaperNode::new(next, 3));
                if cites_p {
                    edges.push((next, 1));
                }
                if cites_ref {
                    edges.push((next, 0));
                }
                next += 1;
            }
        }
        CitationNetwork::from_edges(nodes, &edges).unwrap()
    }

    #[test]
    fn schematic_values() {
        let a = compute_cd(&focal_graph(10, 1, 2), 1, 5).unwrap();
        assert_eq!((a.n_i, a.n_j, a.n_k), (10, 1, 2));
        assert!((a.cd - 9.0 / 13.0).abs() < 1e-15);
        assert_eq!((a.cd * 100.0).round() / 100.0, 0.69);

        let b = compute_cd(&focal_graph(10, 1, 9), 1, 5).unwrap();
        assert_eq!(b.cd, 0.45);
        assert_eq!(a.cd_nok, b.cd_nok);
    }

    #[test]
    fn reference_less_paper_is_maximally_disruptive() {
        let net = CitationNetwork::from_edges(vec![PaperNode::new(0, 1), PaperNode::new(1, 2)], &[(1, 0)]).unwrap();
        let rec = compute_cd(&net, 0, 5).unwrap();
        assert_eq!((rec.n_i, rec.n_j, rec.n_k), (1, 0, 0));
        assert_eq!(rec.cd, 1.0);
        assert!(compute_cd(&net, 1, 5).is_none());
    }

    #[test]
    fn window_excludes_late_citers() {
        let net = CitationNetwork::from_edges(
            vec![PaperNode::new(0, 1), PaperNode::new(1, 3), PaperNode::new(2, 9)],
            &[(1, 0), (2, 0)],
        )
        .unwrap();
        assert_eq!(compute_cd(&net, 0, 5).unwrap().c_cw, 1);
        assert_eq!(compute_cd(&net, 0, 8).unwrap().c_cw, 2);
        assert!(compute_cd(&net, 0, 1).is_none());
    }

    #[test]
    fn empty_network() {
        assert!(compute_cd_all(&CitationNetwork::empty(), 5).is_empty());
    }

    #[test]
    fn yearly_means() {
        let mk = |id, year, ni, nk| DisruptionRecord::from_counts(id, year, 5, ni, 0, nk).unwrap();
        // CD = 1/(1+nk): nk=1 -> 0.5 ; R_k = nk
        let recs = vec![mk(0, 3, 1, 1), mk(1, 4, 1, 1), mk(2, 4, 1, 3)];
        let cd = mean_cd_by_year(&recs);
        assert_eq!(
            cd[0],
            YearPoint {
                year: 3,
                mean: 0.5,
                count: 1
            }
        );
        let rk = mean_rk_by_year(&recs);
        assert_eq!(rk[1].mean, 2.0);
        assert_eq!(rk[1].count, 2);
        let flat = mean_rk_by_year(&[mk(0, 1, 1, 0), mk(1, 2, 2, 0)]);
        assert!(flat.iter().all(|p| p.mean == 0.0));
    }

    #[test]
    fn two_paper_mean() {
        // 0.2 = (3-2)/5, 0.4 = (2-0)/5
        let recs = vec![
            DisruptionRecord::from_counts(0, 7, 5, 3, 2, 0).unwrap(),
            DisruptionRecord::from_counts(1, 7, 5, 2, 0, 3).unwrap(),
        ];
        assert!((mean_cd_by_year(&recs)[0].mean - 0.3).abs() < 1e-15);
    }

    #[test]
    fn normalization_cells() {
        let table = NormalizationTable::build([(1, 2000, 0.1), (1, 2000, 0.2), (1, 2000, 0.3)]);
        assert!((table.normalize(1, 2000, 0.3).unwrap() - 1.0).abs() < 1e-12);
        assert!(table.normalize(1, 2000, table.cells[&(1, 2000)].mean).unwrap().abs() < 1e-12);
        let flat = NormalizationTable::build([(2, 2000, 0.4), (2, 2000, 0.4)]);
        assert_eq!(flat.normalize(2, 2000, 0.4), None);
        let single = NormalizationTable::build([(3, 2000, 0.4)]);
        assert_eq!(single.normalize(3, 2000, 0.4), None);
        assert_eq!(single.normalize(9, 2000, 0.4), None);
    }

    #[test]
    fn normalization_requires_journal() {
        let net = focal_graph(2, 0, 0);
        let recs = compute_cd_all(&net, 5);
        assert!(matches!(normalize_cd(&recs, &net), Err(Error::MissingJournal { .. })));
    }
}
