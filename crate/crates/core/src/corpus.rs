//! Citation-graph data model, CSV ingestion/emission and sample-selection filters.
//!
//! A [`CitationNetwork`] stores both directions of every reference edge in
//! compressed sparse row form: `references(p)` is the reference list of `p`
//! and `citers(p)` the papers citing `p`. Paper ids are dense and ordered by
//! publication year, so the citers of a paper published within a year range
//! form one contiguous slice of its (sorted) citer list.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::DisruptionRecord;

pub type PaperId = u32;

pub const NODES_HEADER: [&str; 5] = ["id", "year", "journal_id", "team_size", "group_label"];
pub const EDGES_HEADER: [&str; 2] = ["citing_id", "cited_id"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperNode {
    pub id: PaperId,
    pub year: i32,
    pub journal_id: Option<u32>,
    pub team_size: Option<u32>,
    pub group_label: Option<u8>,
}

impl PaperNode {
    pub fn new(id: PaperId, year: i32) -> Self {
        Self {
            id,
            year,
            journal_id: None,
            team_size: None,
            group_label: None,
        }
    }
}

/// Immutable directed acyclic citation graph with dual adjacency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CitationNetwork {
    nodes: Vec<PaperNode>,
    out_offsets: Vec<usize>,
    out_targets: Vec<PaperId>,
    in_offsets: Vec<usize>,
    in_sources: Vec<PaperId>,
}

impl CitationNetwork {
    pub fn empty() -> Self {
        Self {
            nodes: Vec::new(),
            out_offsets: vec![0],
            out_targets: Vec::new(),
            in_offsets: vec![0],
            in_sources: Vec::new(),
        }
    }

    /// Builds a validated network from nodes and `(citing, cited)` pairs.
    ///
    /// Edge errors carry the 1-based position of the offending pair.
    pub fn from_edges(nodes: Vec<PaperNode>, edges: &[(PaperId, PaperId)]) -> Result<Self> {
        validate_nodes(&nodes)?;
        let n = nodes.len();
        let mut seen = HashSet::with_capacity(edges.len());
        for (pos, &(s, t)) in edges.iter().enumerate() {
            let line = pos as u64 + 1;
            for id in [s, t] {
                if id as usize >= n {
                    return Err(Error::UnknownId { line, id: id as u64 });
                }
            }
            if nodes[t as usize].year >= nodes[s as usize].year {
                return Err(Error::YearOrderViolation {
                    line,
                    citing: s as u64,
                    cited: t as u64,
                });
            }
            if !seen.insert(edge_key(s, t)) {
                return Err(Error::DuplicateEdge {
                    line,
                    citing: s as u64,
                    cited: t as u64,
                });
            }
        }
        Ok(Self::assemble(nodes, edges))
    }

    /// Builds from per-paper reference lists already known to satisfy the
    /// graph invariants (generator and rewiring output).
    pub(crate) fn from_reference_lists(
        nodes: Vec<PaperNode>,
        out_offsets: Vec<usize>,
        mut out_targets: Vec<PaperId>,
    ) -> Self {
        debug_assert_eq!(out_offsets.len(), nodes.len() + 1);
        for p in 0..nodes.len() {
            out_targets[out_offsets[p]..out_offsets[p + 1]].sort_unstable();
        }
        let (in_offsets, in_sources) = transpose(nodes.len(), &out_offsets, &out_targets);
        let net = Self {
            nodes,
            out_offsets,
            out_targets,
            in_offsets,
            in_sources,
        };
        debug_assert!(net.check_invariants().is_ok());
        net
    }

    fn assemble(nodes: Vec<PaperNode>, edges: &[(PaperId, PaperId)]) -> Self {
        let n = nodes.len();
        let mut out_offsets = vec![0usize; n + 1];
        for &(s, _) in edges {
            out_offsets[s as usize + 1] += 1;
        }
        for i in 0..n {
            out_offsets[i + 1] += out_offsets[i];
        }
        let mut cursor = out_offsets.clone();
        let mut out_targets = vec![0; edges.len()];
        for &(s, t) in edges {
            out_targets[cursor[s as usize]] = t;
            cursor[s as usize] += 1;
        }
        Self::from_reference_lists(nodes, out_offsets, out_targets)
    }

    pub fn num_papers(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.out_targets.len()
    }

    pub fn papers(&self) -> &[PaperNode] {
        &self.nodes
    }

    pub fn paper(&self, id: PaperId) -> &PaperNode {
        &self.nodes[id as usize]
    }

    #[inline]
    pub fn year(&self, id: PaperId) -> i32 {
        self.nodes[id as usize].year
    }

    /// Reference list of `id`, sorted by id.
    #[inline]
    pub fn references(&self, id: PaperId) -> &[PaperId] {
        let i = id as usize;
        &self.out_targets[self.out_offsets[i]..self.out_offsets[i + 1]]
    }

    /// Papers citing `id`, sorted by id (and therefore by year).
    #[inline]
    pub fn citers(&self, id: PaperId) -> &[PaperId] {
        let i = id as usize;
        &self.in_sources[self.in_offsets[i]..self.in_offsets[i + 1]]
    }

    /// Citers of `id` published in `after < year <= until`.
    #[inline]
    pub fn citers_between(&self, id: PaperId, after: i32, until: i32) -> &[PaperId] {
        let all = self.citers(id);
        let lo = all.partition_point(|&q| self.year(q) <= after);
        let hi = lo + all[lo..].partition_point(|&q| self.year(q) <= until);
        &all[lo..hi]
    }

    pub fn out_degree(&self, id: PaperId) -> usize {
        self.references(id).len()
    }

    pub fn in_degree(&self, id: PaperId) -> usize {
        self.citers(id).len()
    }

    /// All edges as `(citing, cited)` in citing-major order.
    pub fn edges(&self) -> impl Iterator<Item = (PaperId, PaperId)> + '_ {
        (0..self.nodes.len() as PaperId).flat_map(move |s| self.references(s).iter().map(move |&t| (s, t)))
    }

    pub fn year_range(&self) -> Option<(i32, i32)> {
        Some((self.nodes.first()?.year, self.nodes.last()?.year))
    }

    /// Returns a copy with replaced node metadata (same ids and years).
    pub fn with_nodes(&self, nodes: Vec<PaperNode>) -> Result<Self> {
        if nodes.len() != self.nodes.len() || nodes.iter().zip(&self.nodes).any(|(a, b)| a.year != b.year) {
            return Err(Error::InvalidNetwork(
                "replacement nodes must keep ids and years".into(),
            ));
        }
        validate_nodes(&nodes)?;
        Ok(Self { nodes, ..self.clone() })
    }

    /// Full invariant check: node ordering, temporal edge ordering, no
    /// duplicates and transpose consistency of the two adjacencies.
    pub fn check_invariants(&self) -> Result<()> {
        validate_nodes(&self.nodes)?;
        for s in 0..self.nodes.len() as PaperId {
            let refs = self.references(s);
            if refs.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidNetwork(format!(
                    "reference list of {s} unsorted or duplicated"
                )));
            }
            if let Some(&t) = refs.iter().find(|&&t| self.year(t) >= self.year(s)) {
                return Err(Error::InvalidNetwork(format!(
                    "{s} cites {t} which is not strictly earlier"
                )));
            }
        }
        let (in_offsets, in_sources) = transpose(self.nodes.len(), &self.out_offsets, &self.out_targets);
        if in_offsets != self.in_offsets || in_sources != self.in_sources {
            return Err(Error::InvalidNetwork("adjacencies are not transposes".into()));
        }
        Ok(())
    }
}

#[inline]
fn edge_key(s: PaperId, t: PaperId) -> u64 {
    ((s as u64) << 32) | t as u64
}

fn validate_nodes(nodes: &[PaperNode]) -> Result<()> {
    for (i, node) in nodes.iter().enumerate() {
        if node.id as usize != i {
            return Err(Error::InvalidNetwork(format!(
                "node at position {i} has id {}",
                node.id
            )));
        }
        if i > 0 && nodes[i - 1].year > node.year {
            return Err(Error::InvalidNetwork(format!("node {i} is out of year order")));
        }
        if node.team_size == Some(0) {
            return Err(Error::InvalidNetwork(format!("node {i} has team size 0")));
        }
    }
    Ok(())
}

/// Counting-sort transpose; sources come out sorted per target.
fn transpose(n: usize, out_offsets: &[usize], out_targets: &[PaperId]) -> (Vec<usize>, Vec<PaperId>) {
    let mut in_offsets = vec![0usize; n + 1];
    for &t in out_targets {
        in_offsets[t as usize + 1] += 1;
    }
    for i in 0..n {
        in_offsets[i + 1] += in_offsets[i];
    }
    let mut cursor = in_offsets.clone();
    let mut in_sources = vec![0; out_targets.len()];
    for s in 0..n {
        for &t in &out_targets[out_offsets[s]..out_offsets[s + 1]] {
            in_sources[cursor[t as usize]] = s as PaperId;
            cursor[t as usize] += 1;
        }
    }
    (in_offsets, in_sources)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Abort on the first year-order violation or duplicate edge instead of
    /// dropping the row.
    pub strict: bool,
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub network: CitationNetwork,
    /// Original id of every dense id; `None` when input ids were already
    /// dense and year-ordered.
    pub id_map: Option<Vec<u64>>,
    pub dropped_year_order: usize,
    pub dropped_duplicates: usize,
}

/// Strict load: any violation is an error.
pub fn load_corpus(nodes_path: impl AsRef<Path>, edges_path: impl AsRef<Path>) -> Result<CitationNetwork> {
    Ok(load_corpus_with(nodes_path, edges_path, LoadOptions { strict: true })?.network)
}

pub fn load_corpus_with(
    nodes_path: impl AsRef<Path>,
    edges_path: impl AsRef<Path>,
    opts: LoadOptions,
) -> Result<LoadedCorpus> {
    let nodes_path = nodes_path.as_ref();
    let edges_path = edges_path.as_ref();
    let nodes_name = nodes_path.display().to_string();
    let edges_name = edges_path.display().to_string();

    let mut raw: Vec<(u64, PaperNode)> = Vec::new();
    let mut rdr = open_csv(nodes_path, &NODES_HEADER)?;
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::MalformedRow {
            file: nodes_name.clone(),
            line,
            message,
        };
        if record.len() != NODES_HEADER.len() {
            return Err(bad(format!("expected 5 columns, found {}", record.len())));
        }
        let id: u64 = parse_required(&record[0], "id").map_err(bad)?;
        let year: i32 = parse_required(&record[1], "year").map_err(bad)?;
        let journal_id: Option<u32> = parse_optional(&record[2], "journal_id").map_err(bad)?;
        let team_size: Option<u32> = parse_optional(&record[3], "team_size").map_err(bad)?;
        if team_size == Some(0) {
            return Err(bad("team_size must be at least 1".into()));
        }
        let group_label: Option<u8> = parse_optional(&record[4], "group_label").map_err(bad)?;
        raw.push((
            id,
            PaperNode {
                id: 0,
                year,
                journal_id,
                team_size,
                group_label,
            },
        ));
    }

    let already_dense = raw
        .iter()
        .enumerate()
        .all(|(i, (id, node))| *id == i as u64 && (i == 0 || raw[i - 1].1.year <= node.year));
    if !already_dense {
        raw.sort_by_key(|(id, node)| (node.year, *id));
    }
    let mut dense: HashMap<u64, PaperId> = HashMap::with_capacity(raw.len());
    for (i, (orig, _)) in raw.iter().enumerate() {
        if dense.insert(*orig, i as PaperId).is_some() {
            return Err(Error::MalformedRow {
                file: nodes_name.clone(),
                line: 0,
                message: format!("duplicate paper id {orig}"),
            });
        }
    }
    let id_map = (!already_dense).then(|| raw.iter().map(|(orig, _)| *orig).collect());
    let nodes: Vec<PaperNode> = raw
        .into_iter()
        .enumerate()
        .map(|(i, (_, mut node))| {
            node.id = i as PaperId;
            node
        })
        .collect();

    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    let mut dropped_year_order = 0;
    let mut dropped_duplicates = 0;
    let mut rdr = open_csv(edges_path, &EDGES_HEADER)?;
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::MalformedRow {
            file: edges_name.clone(),
            line,
            message,
        };
        if record.len() != EDGES_HEADER.len() {
            return Err(bad(format!("expected 2 columns, found {}", record.len())));
        }
        let citing: u64 = parse_required(&record[0], "citing_id").map_err(bad)?;
        let cited: u64 = parse_required(&record[1], "cited_id").map_err(bad)?;
        let s = *dense.get(&citing).ok_or(Error::UnknownId { line, id: citing })?;
        let t = *dense.get(&cited).ok_or(Error::UnknownId { line, id: cited })?;
        if nodes[t as usize].year >= nodes[s as usize].year {
            if opts.strict {
                return Err(Error::YearOrderViolation { line, citing, cited });
            }
            dropped_year_order += 1;
            continue;
        }
        if !seen.insert(edge_key(s, t)) {
            if opts.strict {
                return Err(Error::DuplicateEdge { line, citing, cited });
            }
            dropped_duplicates += 1;
            continue;
        }
        edges.push((s, t));
    }
    if dropped_year_order + dropped_duplicates > 0 {
        log::warn!("dropped {dropped_year_order} year-order violations and {dropped_duplicates} duplicate edges");
    }
    validate_nodes(&nodes)?;
    Ok(LoadedCorpus {
        network: CitationNetwork::assemble(nodes, &edges),
        id_map,
        dropped_year_order,
        dropped_duplicates,
    })
}

fn open_csv(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let found = rdr.headers()?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::MalformedRow {
            file: path.display().to_string(),
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    Ok(rdr)
}

fn parse_required<T: std::str::FromStr>(field: &str, name: &str) -> std::result::Result<T, String> {
    field
        .trim()
        .parse()
        .map_err(|_| format!("bad integer `{field}` in column {name}"))
}

fn parse_optional<T: std::str::FromStr>(field: &str, name: &str) -> std::result::Result<Option<T>, String> {
    if field.trim().is_empty() {
        Ok(None)
    } else {
        parse_required(field, name).map(Some)
    }
}

fn opt_to_string<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(File::create(path)?)))
}

/// Writes `nodes.csv`/`edges.csv`; edges are emitted in citing-major,
/// cited-ascending order so output is byte-stable.
pub fn write_corpus(net: &CitationNetwork, nodes_path: impl AsRef<Path>, edges_path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv_writer(nodes_path.as_ref())?;
    w.write_record(NODES_HEADER)?;
    for node in net.papers() {
        w.write_record([
            node.id.to_string(),
            node.year.to_string(),
            opt_to_string(node.journal_id),
            opt_to_string(node.team_size),
            opt_to_string(node.group_label),
        ])?;
    }
    w.flush()?;

    let mut w = csv_writer(edges_path.as_ref())?;
    w.write_record(EDGES_HEADER)?;
    for (s, t) in net.edges() {
        w.write_record([s.to_string(), t.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_id_map(path: impl AsRef<Path>, id_map: &[u64]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "dense_id,original_id")?;
    for (i, orig) in id_map.iter().enumerate() {
        writeln!(out, "{i},{orig}")?;
    }
    out.flush()?;
    Ok(())
}

/// Inclusive sample-selection bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusFilter {
    pub r_min: u32,
    pub r_max: u32,
    pub k_min: u32,
    pub k_max: u32,
    pub c_min: u32,
    pub c_max: u32,
    pub normcd_abs_max: f64,
}

impl Default for CorpusFilter {
    /// Thresholds used for the large-sample regressions:
    /// 10 ≤ r ≤ 200, 1 ≤ k ≤ 25, 1 ≤ c ≤ 1000, |NormCD| ≤ 5.
    fn default() -> Self {
        Self {
            r_min: 10,
            r_max: 200,
            k_min: 1,
            k_max: 25,
            c_min: 1,
            c_max: 1000,
            normcd_abs_max: 5.0,
        }
    }
}

/// Which criterion excluded a paper. Papers failing several criteria are
/// charged to the first one in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exclusion {
    References,
    TeamSize,
    Citations,
    NormCd,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FilterAudit {
    pub total: usize,
    pub retained: usize,
    pub excluded_references: usize,
    pub excluded_team_size: usize,
    pub excluded_citations: usize,
    pub excluded_normcd: usize,
}

impl FilterAudit {
    pub fn excluded(&self) -> usize {
        self.excluded_references + self.excluded_team_size + self.excluded_citations + self.excluded_normcd
    }

    pub(crate) fn charge(&mut self, verdict: Option<Exclusion>) {
        self.total += 1;
        match verdict {
            None => self.retained += 1,
            Some(Exclusion::References) => self.excluded_references += 1,
            Some(Exclusion::TeamSize) => self.excluded_team_size += 1,
            Some(Exclusion::Citations) => self.excluded_citations += 1,
            Some(Exclusion::NormCd) => self.excluded_normcd += 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub retained: Vec<PaperId>,
    pub audit: FilterAudit,
}

impl CorpusFilter {
    pub fn validate(&self) -> Result<()> {
        if self.r_min > self.r_max || self.k_min > self.k_max || self.c_min > self.c_max {
            return Err(Error::InvalidConfig("filter minimum exceeds maximum".into()));
        }
        if self.normcd_abs_max.is_nan() || self.normcd_abs_max <= 0.0 {
            return Err(Error::InvalidConfig("normcd_abs_max must be positive".into()));
        }
        Ok(())
    }

    /// Applies every bound to one paper. `normcd` is `None` when the NormCD
    /// criterion is not in use and `Some(None)` when it is in use but the
    /// paper has no defined NormCD, which excludes it.
    pub fn judge(&self, refs: u32, team_size: u32, citations: u32, normcd: Option<Option<f64>>) -> Option<Exclusion> {
        if refs < self.r_min || refs > self.r_max {
            Some(Exclusion::References)
        } else if team_size < self.k_min || team_size > self.k_max {
            Some(Exclusion::TeamSize)
        } else if citations < self.c_min || citations > self.c_max {
            Some(Exclusion::Citations)
        } else {
            match normcd {
                Some(Some(z)) if z.abs() <= self.normcd_abs_max => None,
                Some(_) => Some(Exclusion::NormCd),
                None => None,
            }
        }
    }
}

/// Selects papers satisfying all bounds. `normcd`, when supplied, is indexed
/// by paper id. Papers without a disruption record have zero windowed
/// citations.
pub fn filter_corpus(
    net: &CitationNetwork,
    records: &[DisruptionRecord],
    normcd: Option<&[Option<f64>]>,
    filter: &CorpusFilter,
) -> Result<FilterOutcome> {
    filter.validate()?;
    let mut citations = vec![0u32; net.num_papers()];
    for rec in records {
        citations[rec.id as usize] = rec.c_cw;
    }
    let mut audit = FilterAudit::default();
    let mut retained = Vec::new();
    for node in net.papers() {
        let k = node.team_size.ok_or(Error::MissingMetadata {
            id: node.id,
            field: "team_size",
        })?;
        let z = normcd.map(|v| v.get(node.id as usize).copied().flatten());
        let verdict = filter.judge(net.out_degree(node.id) as u32, k, citations[node.id as usize], z);
        audit.charge(verdict);
        if verdict.is_none() {
            retained.push(node.id);
        }
    }
    Ok(FilterOutcome { retained, audit })
}
