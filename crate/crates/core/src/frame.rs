//! Survey frames: response-to-scalar mappings, CSV ingestion, and splitting
//! a fully observed frame into a labeled set and an unlabeled frame.
//!
//! Frames are immutable after load and safe to share across threads.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Deterministic mapping from a raw response token to a real value.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarMap {
    /// Parse the token itself as a decimal number.
    NumericPassthrough,
    /// Look the token up in a fixed table (ordinal multiple-choice coding).
    OrdinalTable(BTreeMap<String, f64>),
}

impl ScalarMap {
    /// Build an ordinal table, validating that all values are finite.
    pub fn ordinal<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut table = BTreeMap::new();
        for (token, value) in entries {
            let token = token.into();
            if !value.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "ordinal map value for {token:?} is not finite"
                )));
            }
            if table.insert(token.clone(), value).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "ordinal map declares token {token:?} twice"
                )));
            }
        }
        if table.is_empty() {
            return Err(Error::InvalidConfig("ordinal map is empty".into()));
        }
        Ok(ScalarMap::OrdinalTable(table))
    }

    /// Load an ordinal map from a TOML file of `token = value` pairs.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (token, value) in table {
            let value = match value {
                toml::Value::Integer(i) => i as f64,
                toml::Value::Float(f) => f,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "ordinal map entry {token:?} must be numeric, got {other}"
                    )))
                }
            };
            entries.push((token, value));
        }
        Self::ordinal(entries)
    }

    /// Map a raw token to its scalar value.
    pub fn apply(&self, raw: &str) -> Result<f64> {
        match self {
            ScalarMap::NumericPassthrough => {
                raw.trim().parse::<f64>().map_err(|_| Error::ParseFailure {
                    token: raw.to_string(),
                })
            }
            ScalarMap::OrdinalTable(table) => {
                table.get(raw.trim()).copied().ok_or(Error::UnknownToken {
                    token: raw.to_string(),
                })
            }
        }
    }
}

/// A covariate cell: numeric if it parses as a number, categorical otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum AttrValue {
    Num(f64),
    Cat(String),
}

impl AttrValue {
    pub fn from_cell(cell: &str) -> AttrValue {
        match cell.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => AttrValue::Num(v),
            _ => AttrValue::Cat(cell.trim().to_string()),
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            AttrValue::Num(v) => Some(*v),
            AttrValue::Cat(_) => None,
        }
    }

    fn render(&self) -> String {
        match self {
            AttrValue::Num(v) => format!("{v}"),
            AttrValue::Cat(s) => s.clone(),
        }
    }
}

/// One labeled respondent: human response `y` paired with prediction `yhat`.
#[derive(Debug, Clone)]
pub struct LabeledRecord {
    pub respondent_id: String,
    pub covariates: Vec<AttrValue>,
    pub groups: Vec<String>,
    pub y: f64,
    pub yhat: f64,
}

/// One unlabeled respondent: covariates and a prediction only.
#[derive(Debug, Clone)]
pub struct UnlabeledRecord {
    pub respondent_id: String,
    pub covariates: Vec<AttrValue>,
    pub groups: Vec<String>,
    pub yhat: f64,
}

/// The small human-labeled set H. Doubles as the full evaluation frame when
/// it covers an entire population.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub covariate_names: Vec<String>,
    pub group_names: Vec<String>,
    pub records: Vec<LabeledRecord>,
}

/// The large demographic-only frame U carrying model predictions.
#[derive(Debug, Clone)]
pub struct UnlabeledFrame {
    pub covariate_names: Vec<String>,
    pub group_names: Vec<String>,
    pub records: Vec<UnlabeledRecord>,
}

impl LabeledSet {
    /// Validates the frame invariants: at least two records (variance must be
    /// estimable), finite responses and predictions, unique respondent ids.
    pub fn new(
        covariate_names: Vec<String>,
        group_names: Vec<String>,
        records: Vec<LabeledRecord>,
    ) -> Result<Self> {
        if records.len() < 2 {
            return Err(Error::EmptyFrame(format!(
                "labeled set needs at least 2 records, got {}",
                records.len()
            )));
        }
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if !r.y.is_finite() || !r.yhat.is_finite() {
                return Err(Error::MalformedRow {
                    row: i,
                    reason: "non-finite response or prediction".into(),
                });
            }
            if !seen.insert(r.respondent_id.as_str()) {
                return Err(Error::MalformedRow {
                    row: i,
                    reason: format!("duplicate respondent_id {:?}", r.respondent_id),
                });
            }
            if r.covariates.len() != covariate_names.len() || r.groups.len() != group_names.len() {
                return Err(Error::MalformedRow {
                    row: i,
                    reason: "covariate or group arity differs from the frame header".into(),
                });
            }
        }
        Ok(LabeledSet {
            covariate_names,
            group_names,
            records,
        })
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.y).collect()
    }

    pub fn yhats(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.yhat).collect()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.respondent_id.as_str())
    }

    /// Numeric design matrix with a leading intercept column. Errors when a
    /// covariate is categorical; regressions work on numeric covariates.
    pub fn design_matrix(&self) -> Result<Vec<Vec<f64>>> {
        design_rows(&self.covariate_names, self.records.iter().map(|r| &r.covariates))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        header_line(&mut out, &self.covariate_names, &self.group_names, true);
        for r in &self.records {
            push_cells(&mut out, &r.respondent_id, &r.covariates, &r.groups);
            let _ = writeln!(out, ",{},{}", r.y, r.yhat);
        }
        std::fs::write(path, out).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

impl UnlabeledFrame {
    pub fn new(
        covariate_names: Vec<String>,
        group_names: Vec<String>,
        records: Vec<UnlabeledRecord>,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyFrame("unlabeled frame is empty".into()));
        }
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if !r.yhat.is_finite() {
                return Err(Error::MalformedRow {
                    row: i,
                    reason: "non-finite prediction".into(),
                });
            }
            if !seen.insert(r.respondent_id.as_str()) {
                return Err(Error::MalformedRow {
                    row: i,
                    reason: format!("duplicate respondent_id {:?}", r.respondent_id),
                });
            }
            if r.covariates.len() != covariate_names.len() || r.groups.len() != group_names.len() {
                return Err(Error::MalformedRow {
                    row: i,
                    reason: "covariate or group arity differs from the frame header".into(),
                });
            }
        }
        Ok(UnlabeledFrame {
            covariate_names,
            group_names,
            records,
        })
    }

    #[allow(non_snake_case)]
    pub fn N(&self) -> usize {
        self.records.len()
    }

    pub fn yhats(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.yhat).collect()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.respondent_id.as_str())
    }

    pub fn design_matrix(&self) -> Result<Vec<Vec<f64>>> {
        design_rows(&self.covariate_names, self.records.iter().map(|r| &r.covariates))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        header_line(&mut out, &self.covariate_names, &self.group_names, false);
        for r in &self.records {
            push_cells(&mut out, &r.respondent_id, &r.covariates, &r.groups);
            let _ = writeln!(out, ",{}", r.yhat);
        }
        std::fs::write(path, out).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn design_rows<'a, I>(names: &[String], rows: I) -> Result<Vec<Vec<f64>>>
where
    I: Iterator<Item = &'a Vec<AttrValue>>,
{
    rows.enumerate()
        .map(|(i, covs)| {
            let mut row = Vec::with_capacity(covs.len() + 1);
            row.push(1.0);
            for (name, v) in names.iter().zip(covs) {
                row.push(v.as_num().ok_or_else(|| Error::MalformedRow {
                    row: i,
                    reason: format!("covariate {name:?} is categorical; regression needs numeric covariates"),
                })?);
            }
            Ok(row)
        })
        .collect()
}

fn header_line(out: &mut String, covs: &[String], groups: &[String], labeled: bool) {
    out.push_str("respondent_id");
    for c in covs {
        let _ = write!(out, ",{c}");
    }
    for g in groups {
        let _ = write!(out, ",{g}");
    }
    if labeled {
        out.push_str(",response,prediction\n");
    } else {
        out.push_str(",prediction\n");
    }
}

fn push_cells(out: &mut String, id: &str, covs: &[AttrValue], groups: &[String]) {
    out.push_str(id);
    for c in covs {
        let _ = write!(out, ",{}", c.render());
    }
    for g in groups {
        let _ = write!(out, ",{g}");
    }
}

/// Column roles for CSV ingestion. `id_col` is optional: absent ids are
/// synthesized from the row index.
#[derive(Debug, Clone, Default)]
pub struct FrameSchema {
    pub id_col: Option<String>,
    pub covariate_cols: Vec<String>,
    pub group_cols: Vec<String>,
    pub response_col: Option<String>,
    pub prediction_col: String,
}

/// A loaded frame: labeled when the schema declares a response column,
/// unlabeled otherwise.
#[derive(Debug, Clone)]
pub enum Frame {
    Labeled(LabeledSet),
    Unlabeled(UnlabeledFrame),
}

impl Frame {
    pub fn into_labeled(self) -> Result<LabeledSet> {
        match self {
            Frame::Labeled(l) => Ok(l),
            Frame::Unlabeled(_) => Err(Error::InvalidInput(
                "expected a labeled frame (schema must declare a response column)".into(),
            )),
        }
    }

    pub fn into_unlabeled(self) -> Result<UnlabeledFrame> {
        match self {
            Frame::Unlabeled(u) => Ok(u),
            Frame::Labeled(_) => Err(Error::InvalidInput(
                "expected an unlabeled frame (schema must not declare a response column)".into(),
            )),
        }
    }
}

/// Load a CSV frame. The response and prediction columns pass through the
/// scalar map; both carry survey responses on the same scale. A declared but
/// empty response cell is a hard error: dropping it silently would bias n.
pub fn load_frame(path: &Path, schema: &FrameSchema, map: &ScalarMap) -> Result<Frame> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io {
                path: path.display().to_string(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => Error::InvalidInput(format!("{}: {e}", path.display())),
        })?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                column: name.to_string(),
                path: path.display().to_string(),
            })
    };

    let id_idx = schema.id_col.as_deref().map(col).transpose()?;
    let cov_idx: Vec<usize> = schema
        .covariate_cols
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;
    let group_idx: Vec<usize> = schema
        .group_cols
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;
    let response_idx = schema.response_col.as_deref().map(col).transpose()?;
    let prediction_idx = col(&schema.prediction_col)?;

    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        let cell = |idx: usize| -> Result<&str> {
            record.get(idx).ok_or_else(|| Error::MalformedRow {
                row,
                reason: format!("missing cell in column {idx}"),
            })
        };

        let respondent_id = match id_idx {
            Some(i) => cell(i)?.trim().to_string(),
            None => format!("row{row}"),
        };
        let covariates: Vec<AttrValue> = cov_idx
            .iter()
            .map(|&i| cell(i).map(AttrValue::from_cell))
            .collect::<Result<_>>()?;
        let groups: Vec<String> = group_idx
            .iter()
            .map(|&i| cell(i).map(|s| s.trim().to_string()))
            .collect::<Result<_>>()?;

        let yhat_raw = cell(prediction_idx)?;
        let yhat = map.apply(yhat_raw).map_err(|e| Error::MalformedRow {
            row,
            reason: format!("prediction column: {e}"),
        })?;

        match response_idx {
            Some(i) => {
                let raw = cell(i)?;
                if raw.trim().is_empty() {
                    return Err(Error::MalformedRow {
                        row,
                        reason: "missing response in a labeled file".into(),
                    });
                }
                let y = map.apply(raw).map_err(|e| Error::MalformedRow {
                    row,
                    reason: format!("response column: {e}"),
                })?;
                labeled.push(LabeledRecord {
                    respondent_id,
                    covariates,
                    groups,
                    y,
                    yhat,
                });
            }
            None => unlabeled.push(UnlabeledRecord {
                respondent_id,
                covariates,
                groups,
                yhat,
            }),
        }
    }

    if response_idx.is_some() {
        if labeled.is_empty() {
            return Err(Error::EmptyFrame(format!("{} has no data rows", path.display())));
        }
        Ok(Frame::Labeled(LabeledSet::new(
            schema.covariate_cols.clone(),
            schema.group_cols.clone(),
            labeled,
        )?))
    } else {
        if unlabeled.is_empty() {
            return Err(Error::EmptyFrame(format!("{} has no data rows", path.display())));
        }
        Ok(Frame::Unlabeled(UnlabeledFrame::new(
            schema.covariate_cols.clone(),
            schema.group_cols.clone(),
            unlabeled,
        )?))
    }
}

/// Partition a fully observed frame into a labeled set of size `n_human` and
/// an unlabeled frame holding the remainder. Sampling is uniform without
/// replacement and deterministic given the generator state.
pub fn split_frame<R: Rng>(
    full: &LabeledSet,
    n_human: usize,
    rng: &mut R,
) -> Result<(LabeledSet, UnlabeledFrame)> {
    let total = full.records.len();
    if n_human < 2 {
        return Err(Error::InvalidInput(format!(
            "n_human must be at least 2, got {n_human}"
        )));
    }
    if n_human >= total {
        return Err(Error::BudgetExceedsFrame {
            n_human,
            frame: total,
        });
    }

    let mut indices: Vec<usize> = (0..total).collect();
    let (sampled, _) = indices.partial_shuffle(rng, n_human);
    let mut chosen = sampled.to_vec();
    chosen.sort_unstable();

    let mut take = vec![false; total];
    for &i in &chosen {
        take[i] = true;
    }

    let mut labeled = Vec::with_capacity(n_human);
    let mut rest = Vec::with_capacity(total - n_human);
    for (i, r) in full.records.iter().enumerate() {
        if take[i] {
            labeled.push(r.clone());
        } else {
            rest.push(UnlabeledRecord {
                respondent_id: r.respondent_id.clone(),
                covariates: r.covariates.clone(),
                groups: r.groups.clone(),
                yhat: r.yhat,
            });
        }
    }

    Ok((
        LabeledSet::new(
            full.covariate_names.clone(),
            full.group_names.clone(),
            labeled,
        )?,
        UnlabeledFrame::new(
            full.covariate_names.clone(),
            full.group_names.clone(),
            rest,
        )?,
    ))
}
