//! Panel storage, ingestion, and the lagged design matrices used by the
//! alternating least squares fit.
//!
//! Layout conventions: a panel is `T x m` with row `t` the period and column
//! `j` the series. A weight vector `a` of length `m (k1 + 1)` is stored
//! lag-major, `[a_0 | a_1 | ... | a_k1]`, where block `a_h` multiplies the
//! panel lagged `h` periods. The stacked design `C` has `k2 + 1` row blocks;
//! block `l` holds the lagged panel `[Z_s, Z_{s-1}, ..., Z_{s-k1}]` with
//! `s = k1 + k2 - l`.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{OdpcError, Result};

/// A balanced `T x m` panel of real observations.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    values: DMatrix<f64>,
    series_names: Vec<String>,
}

/// CSV ingestion options.
#[derive(Debug, Clone, Copy)]
pub struct CsvOptions {
    pub header: bool,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            header: true,
            delimiter: b',',
        }
    }
}

fn default_names(m: usize) -> Vec<String> {
    (1..=m).map(|j| format!("V{j}")).collect()
}

impl TimeSeriesPanel {
    /// Builds a panel, checking shape, finiteness and name uniqueness.
    /// When `series_names` is `None` the series are named `V1..Vm`.
    pub fn new(values: DMatrix<f64>, series_names: Option<Vec<String>>) -> Result<Self> {
        let (t, m) = values.shape();
        if m == 0 {
            return Err(OdpcError::invalid("panel must have at least one series"));
        }
        if t < 2 {
            return Err(OdpcError::InsufficientLength {
                required: 2,
                actual: t,
            });
        }
        for j in 0..m {
            for i in 0..t {
                if !values[(i, j)].is_finite() {
                    return Err(OdpcError::NonFinite { row: i + 1, col: j + 1 });
                }
            }
        }
        let names = series_names.unwrap_or_else(|| default_names(m));
        if names.len() != m {
            return Err(OdpcError::mismatch(
                format!("{m} series names"),
                format!("{} series names", names.len()),
            ));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(OdpcError::invalid(format!("duplicate series name '{name}'")));
            }
        }
        Ok(TimeSeriesPanel {
            values,
            series_names: names,
        })
    }

    /// Builds a panel from row-major data (one inner vector per period).
    pub fn from_rows(rows: &[Vec<f64>], series_names: Option<Vec<String>>) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(OdpcError::Ragged {
                    row: i + 1,
                    expected: m,
                    found: row.len(),
                });
            }
        }
        let values = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
        Self::new(values, series_names)
    }

    /// Number of periods `T`.
    pub fn periods(&self) -> usize {
        self.values.nrows()
    }

    /// Number of series `m`.
    pub fn series(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn series_names(&self) -> &[String] {
        &self.series_names
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    /// Rows `start..end` as a new panel with the same names.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.periods() {
            return Err(OdpcError::invalid(format!(
                "row range {start}..{end} outside panel of {} periods",
                self.periods()
            )));
        }
        Self::new(
            self.values.rows(start, end - start).into_owned(),
            Some(self.series_names.clone()),
        )
    }

    /// Same panel with every entry multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.values * c, Some(self.series_names.clone()))
    }

    pub fn from_csv_reader<R: Read>(reader: R, options: CsvOptions) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(options.header)
            .delimiter(options.delimiter)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let names = if options.header {
            let header = rdr.headers().map_err(|e| OdpcError::Parse {
                row: 0,
                col: 0,
                message: e.to_string(),
            })?;
            Some(header.iter().map(str::to_string).collect::<Vec<_>>())
        } else {
            None
        };
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut width = names.as_ref().map(Vec::len);
        for (i, record) in rdr.records().enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| OdpcError::Parse {
                row,
                col: 0,
                message: e.to_string(),
            })?;
            let expected = *width.get_or_insert(record.len());
            if record.len() != expected {
                return Err(OdpcError::Ragged {
                    row,
                    expected,
                    found: record.len(),
                });
            }
            let mut parsed = Vec::with_capacity(record.len());
            for (j, cell) in record.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| OdpcError::Parse {
                    row,
                    col: j + 1,
                    message: format!("cannot parse '{cell}' as a number"),
                })?;
                if !v.is_finite() {
                    return Err(OdpcError::NonFinite { row, col: j + 1 });
                }
                parsed.push(v);
            }
            rows.push(parsed);
        }
        Self::from_rows(&rows, names)
    }

    /// Reads a CSV file, one row per period, earliest period first.
    pub fn load_csv(path: impl AsRef<Path>, options: CsvOptions) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file), options)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct PanelJson {
    series_names: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl Serialize for TimeSeriesPanel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PanelJson {
            series_names: self.series_names.clone(),
            values: crate::model::matrix_rows(&self.values),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TimeSeriesPanel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = PanelJson::deserialize(d)?;
        TimeSeriesPanel::from_rows(&raw.values, Some(raw.series_names))
            .map_err(serde::de::Error::custom)
    }
}

/// Lagged matrices for one `(k1, k2)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedDesign {
    pub k1: usize,
    pub k2: usize,
    /// `Z_{k1+k2}`: the `(T - k1 - k2) x m` block being reconstructed.
    pub target: DMatrix<f64>,
    /// `(T - k1 - k2)(k2 + 1) x m(k1 + 1)` stacked lag matrix.
    pub c: DMatrix<f64>,
}

impl LaggedDesign {
    /// Effective sample size `T - (k1 + k2)`.
    pub fn effective_rows(&self) -> usize {
        self.target.nrows()
    }

    pub fn series(&self) -> usize {
        self.target.ncols()
    }

    /// Row block `l` of `C`, i.e. `Z_{k1+k2-l,0}`.
    pub fn block(&self, l: usize) -> nalgebra::DMatrixView<'_, f64> {
        let n = self.effective_rows();
        self.c.rows(l * n, n)
    }
}

/// Minimum number of periods for a `(k1, k2)` fit.
pub fn min_periods(k1: usize, k2: usize) -> usize {
    k1 + 2 * k2 + 2
}

pub(crate) fn design_from_values(z: &DMatrix<f64>, k1: usize, k2: usize) -> Result<LaggedDesign> {
    let (t, m) = z.shape();
    let required = min_periods(k1, k2);
    if t < required {
        return Err(OdpcError::InsufficientLength {
            required,
            actual: t,
        });
    }
    let n = t - k1 - k2;
    let target = z.rows(k1 + k2, n).into_owned();
    let p = m * (k1 + 1);
    let mut c = DMatrix::zeros(n * (k2 + 1), p);
    for l in 0..=k2 {
        let shift = k1 + k2 - l;
        for i in 0..=k1 {
            for j in 0..m {
                let col = i * m + j;
                for r in 0..n {
                    c[(l * n + r, col)] = z[(r + shift - i, j)];
                }
            }
        }
    }
    Ok(LaggedDesign { k1, k2, target, c })
}

/// Builds `Z_{k1+k2}` and the stacked matrix `C` for the given lags.
pub fn build_lagged_design(panel: &TimeSeriesPanel, k1: usize, k2: usize) -> Result<LaggedDesign> {
    design_from_values(panel.values(), k1, k2)
}

pub(crate) fn series_from_values(z: &DMatrix<f64>, a: &[f64], k1: usize) -> Result<Vec<f64>> {
    let (t, m) = z.shape();
    if a.len() != m * (k1 + 1) {
        return Err(OdpcError::mismatch(
            format!("weight vector of length {}", m * (k1 + 1)),
            format!("length {}", a.len()),
        ));
    }
    if t <= k1 {
        return Err(OdpcError::InsufficientLength {
            required: k1 + 1,
            actual: t,
        });
    }
    let mut f = vec![0.0; t - k1];
    for h in 0..=k1 {
        for j in 0..m {
            let w = a[h * m + j];
            if w == 0.0 {
                continue;
            }
            let col = z.column(j);
            for (r, fr) in f.iter_mut().enumerate() {
                *fr += w * col[r + k1 - h];
            }
        }
    }
    Ok(f)
}

/// Component values `f_t = sum_j sum_h a_{h,j} z_{t-h,j}` for periods
/// `k1 + 1..=T`; entry 0 corresponds to period `k1 + 1`.
pub fn component_series(panel: &TimeSeriesPanel, a: &[f64], k1: usize) -> Result<Vec<f64>> {
    series_from_values(panel.values(), a, k1)
}

/// `F = [1, g_{k1+k2}, ..., g_{k1}]` built from a component series of length
/// `T - k1`. Column `1 + h` holds the component lagged `h` periods relative to
/// the reconstructed period.
pub fn build_f_matrix(f: &[f64], k2: usize) -> Result<DMatrix<f64>> {
    if f.len() <= k2 {
        return Err(OdpcError::InsufficientLength {
            required: k2 + 1,
            actual: f.len(),
        });
    }
    let n = f.len() - k2;
    Ok(DMatrix::from_fn(n, k2 + 2, |r, c| {
        if c == 0 {
            1.0
        } else {
            f[r + k2 - (c - 1)]
        }
    }))
}
