//! Chronological bundle/utility datasets: CSV loading, replay through the
//! recursive estimator, centrality reports and trajectory export.
//!
//! Input contract: header `order,items,utility`, `items` a `;`-separated list
//! of identifiers, `.` as decimal point, LF line endings.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::LearnError;
use crate::estimator::{batch_ols, init_ridge, recursive_update, History, PrecisionState, DEFAULT_RIDGE};
use crate::interactions::{reduce_collinearity, CollinearityReduction};
use crate::linalg::{Matrix, RowSpan};
use crate::scalar::Scalar;
use crate::simulator::Trajectory;
use crate::spectral::{centrality_ranking, decompose, partition_by_correlation, CentralityEntry, CorrelationPartition};

pub const CSV_HEADER: [&str; 3] = ["order", "items", "utility"];
pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}, column {column}: {reason}")]
    ParseError { line: u64, column: usize, reason: String },
    #[error("line {line}: item {item:?} listed twice")]
    DuplicateItemInRecord { line: u64, item: String },
    #[error("design reaches rank {rank} of {dim} after {records} records")]
    NeverFullRank {
        rank: usize,
        dim: usize,
        records: usize,
        entities: Vec<String>,
    },
    #[error("cannot write output: {0}")]
    SinkWriteFailure(#[source] std::io::Error),
    #[error("cannot read input: {0}")]
    Read(#[source] std::io::Error),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub timestamp_order: i64,
    pub item_ids: Vec<String>,
    pub utility: f64,
    /// Line of the source file the record came from.
    pub line: u64,
}

fn parse_err(line: u64, column: usize, reason: impl Into<String>) -> CorpusError {
    CorpusError::ParseError {
        line,
        column,
        reason: reason.into(),
    }
}

/// Reads a corpus and returns its records sorted by `order` (stable).
pub fn load_corpus<R: Read>(mut source: R) -> Result<Vec<CorpusRecord>, CorpusError> {
    let mut text = String::new();
    source.read_to_string(&mut text).map_err(|e| {
        if e.kind() == std::io::ErrorKind::InvalidData {
            parse_err(0, 0, "input is not UTF-8")
        } else {
            CorpusError::Read(e)
        }
    })?;
    if let Some(pos) = text.find('\r') {
        let line = text[..pos].matches('\n').count() as u64 + 1;
        return Err(parse_err(line, 0, "carriage return; lines must end in LF"));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| parse_err(1, 0, e.to_string()))?
        .clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(parse_err(1, 1, format!("header must be {}", CSV_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, 0, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let order: i64 = rec[0]
            .parse()
            .map_err(|_| parse_err(line, 1, format!("order {:?} is not an integer", &rec[0])))?;
        let mut items = Vec::new();
        let mut seen = HashSet::new();
        for item in rec[1].split(';') {
            if item.is_empty() {
                return Err(parse_err(line, 2, "empty item identifier"));
            }
            if !seen.insert(item) {
                return Err(CorpusError::DuplicateItemInRecord {
                    line,
                    item: item.to_string(),
                });
            }
            items.push(item.to_string());
        }
        let utility: f64 = rec[2]
            .parse()
            .ok()
            .filter(|u: &f64| u.is_finite())
            .ok_or_else(|| parse_err(line, 3, format!("utility {:?} is not a finite number", &rec[2])))?;
        out.push(CorpusRecord {
            timestamp_order: order,
            item_ids: items,
            utility,
            line,
        });
    }
    out.sort_by_key(|r| r.timestamp_order);
    Ok(out)
}

/// Keeps entities with at least `min_before` appearances in records ordered
/// before `at` and at least `min_after` from `at` on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFilter {
    pub at: i64,
    pub min_before: usize,
    pub min_after: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayOptions {
    pub min_appearances: usize,
    /// Add a dummy for every pair of kept entities that appear together.
    pub interactions: bool,
    pub split: Option<SplitFilter>,
    /// Intercept subtracted from every utility.
    pub baseline: f64,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        ReplayOptions {
            min_appearances: 1,
            interactions: false,
            split: None,
            baseline: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayStep<T> {
    pub t: usize,
    pub order: i64,
    pub surprise: T,
    /// Estimate over the reduced columns after this record.
    pub estimate: Vec<T>,
    pub kappa: T,
    pub lambda_min: T,
    /// False before the design reaches full rank; such estimates come from
    /// the ridge prior and are not identified.
    pub identified: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Centralities<T> {
    /// Reduced columns ranked by popularity-direction entry.
    pub ranking: Vec<CentralityEntry<T>>,
    pub partition: CorrelationPartition,
    pub kappa: T,
}

#[derive(Clone, Debug)]
pub struct ReplayReport<T> {
    /// Kept entity to its column in the unreduced design.
    pub entity_index: BTreeMap<String, usize>,
    /// Labels of the unreduced design columns (entities, then pairs `a*b`).
    pub original_labels: Vec<String>,
    /// Labels of the reduced columns; composites join members with `+`.
    pub column_labels: Vec<String>,
    pub full_rank_time: Option<usize>,
    pub steps: Vec<ReplayStep<T>>,
    pub centralities: Centralities<T>,
    pub reductions: CollinearityReduction<T>,
    /// Reduced design, one row per kept record.
    pub design: Matrix<T>,
    pub utilities: Vec<T>,
    pub final_state: PrecisionState<T>,
}

impl<T: Scalar> ReplayReport<T> {
    pub fn dim(&self) -> usize {
        self.column_labels.len()
    }

    /// Identified `(t, estimate)` pairs for one reduced column.
    pub fn coefficient_path(&self, column: usize) -> Vec<(usize, T)> {
        self.steps
            .iter()
            .filter(|s| s.identified)
            .map(|s| (s.t, s.estimate[column]))
            .collect()
    }

    pub fn column_of(&self, label: &str) -> Option<usize> {
        self.column_labels.iter().position(|l| l == label)
    }

    /// Reduced column carrying the given entity, if it survived reduction.
    pub fn entity_column(&self, entity: &str) -> Option<usize> {
        let orig = *self.entity_index.get(entity)?;
        self.reductions
            .map
            .iter()
            .position(|terms| terms.iter().any(|&(o, _)| o == orig))
    }
}

/// Entities kept by the filters, in order of first appearance.
pub fn filtered_entities(records: &[CorpusRecord], opts: &ReplayOptions) -> Vec<String> {
    let mut order: Vec<&str> = Vec::new();
    let mut counts: HashMap<&str, (usize, usize, usize)> = HashMap::new();
    for r in records {
        for id in &r.item_ids {
            let c = counts.entry(id.as_str()).or_insert_with(|| {
                order.push(id.as_str());
                (0, 0, 0)
            });
            c.0 += 1;
            if let Some(s) = opts.split {
                if r.timestamp_order < s.at {
                    c.1 += 1;
                } else {
                    c.2 += 1;
                }
            }
        }
    }
    order
        .into_iter()
        .filter(|id| {
            let c = counts[id];
            c.0 >= opts.min_appearances
                && opts
                    .split
                    .is_none_or(|s| c.1 >= s.min_before && c.2 >= s.min_after)
        })
        .map(str::to_string)
        .collect()
}

/// Replays with default options apart from the two main knobs.
pub fn replay<T: Scalar>(
    records: &[CorpusRecord],
    min_appearances: usize,
    interactions: bool,
) -> Result<ReplayReport<T>, CorpusError> {
    replay_with(
        records,
        &ReplayOptions {
            min_appearances,
            interactions,
            ..ReplayOptions::default()
        },
    )
}

/// Builds the dummy design, reduces collinear columns, and feeds the
/// records to the recursive estimator one at a time. The estimator starts
/// from a ridge prior and is reset to exact least squares on the prefix as
/// soon as the design reaches full rank.
pub fn replay_with<T: Scalar>(
    records: &[CorpusRecord],
    opts: &ReplayOptions,
) -> Result<ReplayReport<T>, CorpusError> {
    if opts.min_appearances == 0 {
        return Err(LearnError::InvalidArgument("min_appearances must be at least 1".into()).into());
    }
    let entities = filtered_entities(records, opts);
    let entity_index: BTreeMap<String, usize> =
        entities.iter().enumerate().map(|(k, e)| (e.clone(), k)).collect();

    let mut rows_idx: Vec<Vec<usize>> = Vec::new();
    let mut kept_records: Vec<&CorpusRecord> = Vec::new();
    for r in records {
        let mut cols: Vec<usize> = r.item_ids.iter().filter_map(|id| entity_index.get(id).copied()).collect();
        if cols.is_empty() {
            continue;
        }
        cols.sort_unstable();
        rows_idx.push(cols);
        kept_records.push(r);
    }

    let m = entities.len();
    let mut labels = entities.clone();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    if opts.interactions {
        let mut seen = HashSet::new();
        for cols in &rows_idx {
            for (a, &i) in cols.iter().enumerate() {
                for &j in &cols[a + 1..] {
                    seen.insert((i, j));
                }
            }
        }
        pairs = seen.into_iter().collect();
        pairs.sort_unstable();
        labels.extend(pairs.iter().map(|&(i, j)| format!("{}*{}", entities[i], entities[j])));
    }

    let never = |rank: usize, dim: usize| CorpusError::NeverFullRank {
        rank,
        dim,
        records: kept_records.len(),
        entities: entities.clone(),
    };
    if m == 0 {
        return Err(never(0, 0));
    }

    let raw = Matrix::from_fn(rows_idx.len(), labels.len(), |r, c| {
        let cols = &rows_idx[r];
        let hit = if c < m {
            cols.binary_search(&c).is_ok()
        } else {
            let (i, j) = pairs[c - m];
            cols.binary_search(&i).is_ok() && cols.binary_search(&j).is_ok()
        };
        if hit {
            T::one()
        } else {
            T::zero()
        }
    });
    let (design, reductions) = reduce_collinearity(&raw);
    let column_labels: Vec<String> = reductions
        .map
        .iter()
        .map(|terms| {
            terms
                .iter()
                .map(|&(o, _)| labels[o].as_str())
                .collect::<Vec<_>>()
                .join("+")
        })
        .collect();
    let k = design.cols();
    if k == 0 {
        return Err(never(0, 0));
    }

    let baseline = T::lit(opts.baseline);
    let utilities: Vec<T> = kept_records.iter().map(|r| T::lit(r.utility)).collect();
    let mut state = init_ridge(k, T::lit(DEFAULT_RIDGE), vec![T::zero(); k])?.with_baseline(baseline);
    let mut span = RowSpan::new(k, T::rank_tol());
    let mut full_rank_time = None;
    let mut steps = Vec::with_capacity(design.rows());
    for t in 0..design.rows() {
        let row = design.row(t);
        let res = recursive_update(&state, row, utilities[t])?;
        state = res.new_state;
        span.push(row);
        if full_rank_time.is_none() && span.is_full() {
            let prefix = History::from_parts(
                (0..=t).map(|r| design.row(r).to_vec()).collect(),
                utilities[..=t].to_vec(),
                baseline,
            )?;
            match batch_ols(&prefix) {
                Ok(exact) => {
                    state = exact;
                    full_rank_time = Some(t + 1);
                }
                Err(LearnError::RankDeficient { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
        let (kappa, lambda_min) = match decompose(state.info()) {
            Ok(s) => (s.kappa, s.lambda_min()),
            Err(_) => (T::nan(), T::nan()),
        };
        steps.push(ReplayStep {
            t: t + 1,
            order: kept_records[t].timestamp_order,
            surprise: res.surprise,
            estimate: state.estimate().to_vec(),
            kappa,
            lambda_min,
            identified: full_rank_time.is_some(),
        });
    }
    if full_rank_time.is_none() {
        return Err(never(span.rank(), k));
    }
    let summary = decompose(state.info())?;
    let centralities = Centralities {
        ranking: centrality_ranking(&summary),
        partition: partition_by_correlation(&summary),
        kappa: summary.kappa,
    };
    Ok(ReplayReport {
        entity_index,
        original_labels: labels,
        column_labels,
        full_rank_time,
        steps,
        centralities,
        reductions,
        design,
        utilities,
        final_state: state,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub t: usize,
    pub surprise: f64,
    pub mse: f64,
    pub kappa: f64,
    pub lambda_min: f64,
    pub beta: Vec<f64>,
}

/// Flat per-step view shared by simulated trajectories and corpus replays.
/// Values with no meaning for the source (e.g. MSE of a replay) are NaN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTable {
    pub dim: usize,
    pub rows: Vec<TableRow>,
}

impl TrajectoryTable {
    pub fn columns(&self) -> Vec<String> {
        let mut c: Vec<String> = ["t", "surprise", "mse", "kappa", "lambda_min"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        c.extend((1..=self.dim).map(|k| format!("beta_{k}")));
        c
    }
}

impl<T: Scalar> From<&Trajectory<T>> for TrajectoryTable {
    fn from(traj: &Trajectory<T>) -> Self {
        TrajectoryTable {
            dim: traj.dim(),
            rows: traj
                .steps
                .iter()
                .map(|s| TableRow {
                    t: s.t,
                    surprise: s.surprise.to_f64_lossy(),
                    mse: s.mse.to_f64_lossy(),
                    kappa: s.kappa.to_f64_lossy(),
                    lambda_min: s.lambda_min.to_f64_lossy(),
                    beta: s.estimate.iter().map(|v| v.to_f64_lossy()).collect(),
                })
                .collect(),
        }
    }
}

impl<T: Scalar> From<&ReplayReport<T>> for TrajectoryTable {
    fn from(rep: &ReplayReport<T>) -> Self {
        TrajectoryTable {
            dim: rep.dim(),
            rows: rep
                .steps
                .iter()
                .map(|s| TableRow {
                    t: s.t,
                    surprise: s.surprise.to_f64_lossy(),
                    mse: f64::NAN,
                    kappa: s.kappa.to_f64_lossy(),
                    lambda_min: s.lambda_min.to_f64_lossy(),
                    beta: s.estimate.iter().map(|v| v.to_f64_lossy()).collect(),
                })
                .collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonDoc {
    schema_version: String,
    dim: usize,
    columns: Vec<String>,
    rows: Vec<JsonRow>,
}

#[derive(Serialize, Deserialize)]
struct JsonRow {
    t: usize,
    surprise: Option<f64>,
    mse: Option<f64>,
    kappa: Option<f64>,
    lambda_min: Option<f64>,
    beta: Vec<Option<f64>>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Writes the table as CSV (header plus one row per step) or as a
/// schema-versioned JSON document where non-finite values become `null`.
pub fn export_trajectory<W: Write>(
    table: &TrajectoryTable,
    sink: W,
    format: ExportFormat,
) -> Result<(), CorpusError> {
    let to_sink = |e: std::io::Error| CorpusError::SinkWriteFailure(e);
    match format {
        ExportFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(sink);
            let wrap = |e: csv::Error| match e.into_kind() {
                csv::ErrorKind::Io(io) => to_sink(io),
                other => to_sink(std::io::Error::other(format!("{other:?}"))),
            };
            w.write_record(table.columns()).map_err(wrap)?;
            for r in &table.rows {
                let mut rec = vec![
                    r.t.to_string(),
                    r.surprise.to_string(),
                    r.mse.to_string(),
                    r.kappa.to_string(),
                    r.lambda_min.to_string(),
                ];
                rec.extend(r.beta.iter().map(f64::to_string));
                w.write_record(&rec).map_err(wrap)?;
            }
            w.flush().map_err(to_sink)
        }
        ExportFormat::Json => {
            let doc = JsonDoc {
                schema_version: SCHEMA_VERSION.to_string(),
                dim: table.dim,
                columns: table.columns(),
                rows: table
                    .rows
                    .iter()
                    .map(|r| JsonRow {
                        t: r.t,
                        surprise: finite(r.surprise),
                        mse: finite(r.mse),
                        kappa: finite(r.kappa),
                        lambda_min: finite(r.lambda_min),
                        beta: r.beta.iter().map(|&v| finite(v)).collect(),
                    })
                    .collect(),
            };
            let mut sink = sink;
            serde_json::to_writer_pretty(&mut sink, &doc)
                .map_err(|e| to_sink(std::io::Error::other(e)))?;
            sink.write_all(b"\n").map_err(to_sink)?;
            sink.flush().map_err(to_sink)
        }
    }
}

/// Reads a table written by [`export_trajectory`] in CSV form.
pub fn load_trajectory_csv<R: Read>(source: R) -> Result<TrajectoryTable, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header = rdr.headers().map_err(|e| parse_err(1, 0, e.to_string()))?.clone();
    let fixed = ["t", "surprise", "mse", "kappa", "lambda_min"];
    if header.len() < fixed.len() || header.iter().take(5).ne(fixed) {
        return Err(parse_err(1, 1, "not a trajectory table"));
    }
    let dim = header.len() - fixed.len();
    for (k, name) in header.iter().skip(5).enumerate() {
        if name != format!("beta_{}", k + 1) {
            return Err(parse_err(1, k + 6, format!("unexpected column {name:?}")));
        }
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), 0, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |c: usize| -> Result<f64, CorpusError> {
            rec[c]
                .parse()
                .map_err(|_| parse_err(line, c + 1, format!("{:?} is not a number", &rec[c])))
        };
        let t = rec[0]
            .parse()
            .map_err(|_| parse_err(line, 1, format!("{:?} is not a step index", &rec[0])))?;
        rows.push(TableRow {
            t,
            surprise: num(1)?,
            mse: num(2)?,
            kappa: num(3)?,
            lambda_min: num(4)?,
            beta: (5..5 + dim).map(num).collect::<Result<_, _>>()?,
        });
    }
    Ok(TrajectoryTable { dim, rows })
}

/// Reads a JSON table; `null` comes back as NaN.
pub fn load_trajectory_json<R: Read>(source: R) -> Result<TrajectoryTable, CorpusError> {
    let doc: JsonDoc = serde_json::from_reader(source).map_err(|e| parse_err(e.line() as u64, e.column(), e.to_string()))?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(parse_err(0, 0, format!("unsupported schema_version {:?}", doc.schema_version)));
    }
    let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
    let rows = doc
        .rows
        .into_iter()
        .map(|r| {
            if r.beta.len() != doc.dim {
                return Err(parse_err(0, 0, format!("row {} has {} estimates, expected {}", r.t, r.beta.len(), doc.dim)));
            }
            Ok(TableRow {
                t: r.t,
                surprise: nan(r.surprise),
                mse: nan(r.mse),
                kappa: nan(r.kappa),
                lambda_min: nan(r.lambda_min),
                beta: r.beta.into_iter().map(nan).collect(),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(TrajectoryTable { dim: doc.dim, rows })
}
