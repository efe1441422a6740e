//! Panels: one data center's `T × A` observations with an explicit observation
//! mask, plus the attribute schema shared by a fleet of panels.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("attribute names must be non-empty")]
    EmptyName,
    #[error("duplicate attribute name `{0}`")]
    DuplicateAttribute(String),
    #[error("schema has {names} names but {other} roles/flags")]
    SchemaLength { names: usize, other: usize },
    #[error("schema must contain at least one attribute")]
    EmptySchema,
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("cut {cut} out of range for panel with {rows} rows")]
    CutOutOfRange { cut: usize, rows: usize },
    #[error("invalid row range [{t0}, {t1}) for panel with {rows} rows")]
    InvalidRange { t0: usize, t1: usize, rows: usize },
    #[error("values are {values_rows}x{values_cols} but mask/schema expect {rows}x{cols}")]
    DimensionMismatch { values_rows: usize, values_cols: usize, rows: usize, cols: usize },
    #[error("observed cell ({row}, {col}) is not finite")]
    NonFiniteObserved { row: usize, col: usize },
    #[error("panel must have at least one row")]
    EmptyPanel,
    #[error("panel `{0}` does not share the fleet schema")]
    SchemaMismatch(String),
    #[error("fleet must contain at least one panel")]
    EmptyFleet,
}

/// What an attribute measures. Only used for bookkeeping and for picking
/// the headline series (`TotalTraffic`) in evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    ServiceTraffic,
    MachineUsage,
    TotalTraffic,
    Other,
}

/// Attribute names, roles, and which attributes have known future values.
///
/// Attributes flagged `known_future` form the set whose horizon values are
/// supplied at forecast time; every other attribute is a forecast target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSchema {
    names: Vec<String>,
    roles: Vec<Role>,
    known_future: Vec<bool>,
}

impl AttributeSchema {
    pub fn new(names: Vec<String>, roles: Vec<Role>, known_future: Vec<bool>) -> Result<Self, DataError> {
        if names.is_empty() {
            return Err(DataError::EmptySchema);
        }
        if roles.len() != names.len() || known_future.len() != names.len() {
            return Err(DataError::SchemaLength {
                names: names.len(),
                other: roles.len().min(known_future.len()),
            });
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() {
                return Err(DataError::EmptyName);
            }
            if names[..i].contains(n) {
                return Err(DataError::DuplicateAttribute(n.clone()));
            }
        }
        Ok(Self { names, roles, known_future })
    }

    /// Schema where every attribute has role `Other` and none is known in advance.
    pub fn plain<S: AsRef<str>>(names: &[S]) -> Result<Self, DataError> {
        let names: Vec<String> = names.iter().map(|s| String::from(s.as_ref())).collect();
        let n = names.len();
        Self::new(names, vec![Role::Other; n], vec![false; n])
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn known_future(&self) -> &[bool] {
        &self.known_future
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Indices of attributes with known future values, in schema order.
    pub fn known_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.known_future[j]).collect()
    }

    /// Indices of forecast targets (attributes without known futures).
    pub fn target_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| !self.known_future[j]).collect()
    }

    pub fn indices_with_role(&self, role: Role) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.roles[j] == role).collect()
    }

    fn resolve(&self, attrs: &[&str]) -> Result<Vec<usize>, DataError> {
        attrs
            .iter()
            .map(|a| self.index_of(a).ok_or_else(|| DataError::UnknownAttribute(String::from(*a))))
            .collect()
    }
}

/// One data center's observations. Row `t` is the attribute vector at time `t`.
///
/// Unobserved cells keep whatever value they were built with (loaders use a
/// `0.0` sentinel); numeric code reads cells through [`Panel::get`], which
/// never yields an unobserved value. Equality ignores the values stored
/// under unobserved cells.
#[derive(Debug, Clone)]
pub struct Panel {
    id: String,
    schema: AttributeSchema,
    values: Matrix,
    observed: Vec<bool>,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.schema == other.schema
            && self.observed == other.observed
            && self.values.shape() == other.values.shape()
            && (0..self.rows()).all(|t| (0..self.cols()).all(|j| self.get(t, j) == other.get(t, j)))
    }
}

impl Panel {
    pub fn new(
        id: impl Into<String>,
        schema: AttributeSchema,
        values: Matrix,
        observed: Vec<bool>,
    ) -> Result<Self, DataError> {
        let (rows, cols) = values.shape();
        if rows == 0 {
            return Err(DataError::EmptyPanel);
        }
        if cols != schema.len() || observed.len() != rows * cols {
            return Err(DataError::DimensionMismatch {
                values_rows: rows,
                values_cols: cols,
                rows: observed.len() / schema.len().max(1),
                cols: schema.len(),
            });
        }
        for r in 0..rows {
            for c in 0..cols {
                if observed[r * cols + c] && !values[(r, c)].is_finite() {
                    return Err(DataError::NonFiniteObserved { row: r, col: c });
                }
            }
        }
        Ok(Self { id: id.into(), schema, values, observed })
    }

    /// Fully observed panel.
    pub fn from_values(id: impl Into<String>, schema: AttributeSchema, values: Matrix) -> Result<Self, DataError> {
        let n = values.rows() * values.cols();
        Self::new(id, schema, values, vec![true; n])
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    /// Number of time steps `T`.
    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    /// Number of attributes `A`.
    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    #[inline]
    pub fn is_observed(&self, t: usize, j: usize) -> bool {
        self.observed[t * self.cols() + j]
    }

    /// The value at `(t, j)` if it is observed.
    #[inline]
    pub fn get(&self, t: usize, j: usize) -> Option<f64> {
        if self.is_observed(t, j) {
            Some(self.values[(t, j)])
        } else {
            None
        }
    }

    /// Raw storage including sentinels at unobserved cells. Only for
    /// serialization; numeric code goes through [`Panel::get`].
    pub fn raw_values(&self) -> &Matrix {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.observed
    }

    pub fn is_fully_observed(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    /// Column `j` with `None` at unobserved rows.
    pub fn column(&self, j: usize) -> Vec<Option<f64>> {
        (0..self.rows()).map(|t| self.get(t, j)).collect()
    }

    /// Whether attribute `j` is observed on every row of `[t0, t1)`.
    pub fn column_observed_in(&self, j: usize, t0: usize, t1: usize) -> bool {
        (t0..t1).all(|t| self.is_observed(t, j))
    }

    /// Same cells, new id.
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Copy with `observed = false` for every `t < cut` and `j ∈ attrs`.
    pub fn mask_history(&self, attrs: &[&str], cut: usize) -> Result<Panel, DataError> {
        if cut >= self.rows() {
            return Err(DataError::CutOutOfRange { cut, rows: self.rows() });
        }
        let cols = self.schema.resolve(attrs)?;
        Ok(self.mask_history_indices(&cols, cut))
    }

    pub(crate) fn mask_history_indices(&self, cols: &[usize], cut: usize) -> Panel {
        let mut out = self.clone();
        let a = self.cols();
        for t in 0..cut.min(self.rows()) {
            for &j in cols {
                out.observed[t * a + j] = false;
            }
        }
        out
    }

    /// Rows `[t0, t1)`, mask preserved.
    pub fn slice(&self, t0: usize, t1: usize) -> Result<Panel, DataError> {
        if t0 >= t1 || t1 > self.rows() {
            return Err(DataError::InvalidRange { t0, t1, rows: self.rows() });
        }
        let a = self.cols();
        Ok(Panel {
            id: self.id.clone(),
            schema: self.schema.clone(),
            values: self.values.row_range(t0, t1),
            observed: self.observed[t0 * a..t1 * a].to_vec(),
        })
    }

    /// Copy where the listed cells are marked unobserved.
    pub(crate) fn hide<F: Fn(usize, usize) -> bool>(&self, hidden: F) -> Panel {
        let mut out = self.clone();
        let a = self.cols();
        for t in 0..self.rows() {
            for j in 0..a {
                if hidden(t, j) {
                    out.observed[t * a + j] = false;
                }
            }
        }
        out
    }

    /// Copy where every unobserved cell is replaced by `fill(j)` and marked observed.
    pub fn impute_with<F: Fn(usize) -> f64>(&self, fill: F) -> Panel {
        let mut out = self.clone();
        let a = self.cols();
        for t in 0..self.rows() {
            for j in 0..a {
                if !self.is_observed(t, j) {
                    out.values[(t, j)] = fill(j);
                    out.observed[t * a + j] = true;
                }
            }
        }
        out
    }

    /// Replaces one column by a constant, fully observed.
    pub fn with_constant_column(&self, j: usize, value: f64) -> Panel {
        let mut out = self.clone();
        let a = self.cols();
        for t in 0..self.rows() {
            out.values[(t, j)] = value;
            out.observed[t * a + j] = true;
        }
        out
    }

    /// Observed values as a dense matrix, or `None` if any cell is unobserved.
    pub fn dense(&self) -> Option<Matrix> {
        if self.is_fully_observed() {
            Some(self.values.clone())
        } else {
            None
        }
    }
}

/// Panels sharing one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    panels: Vec<Panel>,
}

impl Fleet {
    pub fn new(panels: Vec<Panel>) -> Result<Self, DataError> {
        let first = panels.first().ok_or(DataError::EmptyFleet)?;
        for p in &panels[1..] {
            if p.schema() != first.schema() {
                return Err(DataError::SchemaMismatch(String::from(p.id())));
            }
        }
        Ok(Self { panels })
    }

    pub fn schema(&self) -> &AttributeSchema {
        self.panels[0].schema()
    }

    pub fn panels(&self) -> &[Panel] {
        &self.panels
    }

    pub fn len(&self) -> usize {
        self.panels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panels.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Panel> {
        self.panels.iter().find(|p| p.id() == id)
    }

    pub fn into_panels(self) -> Vec<Panel> {
        self.panels
    }

    /// Copy with panel `index` replaced. Panics if `index` is out of range.
    pub fn with_panel(&self, index: usize, panel: Panel) -> Result<Fleet, DataError> {
        let mut panels = self.panels.clone();
        panels[index] = panel;
        Fleet::new(panels)
    }
}
