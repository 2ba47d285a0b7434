//! Several components fitted one after another, each on the residuals of the
//! previous stages.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::component::{fit_values, FitOptions, ODPCComponent};
use crate::error::{OdpcError, Result};
use crate::panel::{min_periods, TimeSeriesPanel};

/// Lag pair `(k1, k2)` of one component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LagSpec {
    pub k1: usize,
    pub k2: usize,
}

impl LagSpec {
    pub fn new(k1: usize, k2: usize) -> Self {
        LagSpec { k1, k2 }
    }

    /// `k1 = k2 = k`.
    pub fn symmetric(k: usize) -> Self {
        LagSpec { k1: k, k2: k }
    }

    /// Periods consumed by this component's reconstruction.
    pub fn span(&self) -> usize {
        self.k1 + self.k2
    }
}

impl std::fmt::Display for LagSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.k1, self.k2)
    }
}

/// A fitted sequence of components together with the panel they were fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct ODPCModel {
    components: Vec<ODPCComponent>,
    series_names: Vec<String>,
    data: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    lag_specs: Vec<LagSpec>,
    components: Vec<ODPCComponent>,
    #[serde(rename = "T")]
    periods: usize,
    m: usize,
    series_names: Vec<String>,
}

impl ODPCModel {
    /// Empty model (no components) on a panel.
    pub fn empty(panel: &TimeSeriesPanel) -> Self {
        ODPCModel {
            components: Vec::new(),
            series_names: panel.series_names().to_vec(),
            data: panel.values().clone(),
        }
    }

    /// Assembles a model from already-fitted components. Each component's
    /// series must have the length implied by its stage offset.
    pub fn from_parts(panel: &TimeSeriesPanel, components: Vec<ODPCComponent>) -> Result<Self> {
        let mut model = Self::empty(panel);
        for c in components {
            model.check_component(&c)?;
            model.components.push(c);
        }
        Ok(model)
    }

    fn check_component(&self, c: &ODPCComponent) -> Result<()> {
        let m = self.series();
        if c.series() != m || c.b.ncols() != m || c.a.len() != m * (c.k1 + 1) || c.b.nrows() != c.k2 + 1 {
            return Err(OdpcError::mismatch(
                format!("component for {m} series with lags ({},{})", c.k1, c.k2),
                format!("a={}, alpha={}, B={}x{}", c.a.len(), c.alpha.len(), c.b.nrows(), c.b.ncols()),
            ));
        }
        let start = self.next_offset();
        let expected = self.periods().checked_sub(start + c.k1).unwrap_or(0);
        if c.f.len() != expected || expected <= c.k2 {
            return Err(OdpcError::mismatch(
                format!("component series of length {expected}"),
                c.f.len(),
            ));
        }
        Ok(())
    }

    pub fn components(&self) -> &[ODPCComponent] {
        &self.components
    }

    pub fn lag_specs(&self) -> Vec<LagSpec> {
        self.components.iter().map(|c| LagSpec::new(c.k1, c.k2)).collect()
    }

    pub fn periods(&self) -> usize {
        self.data.nrows()
    }

    pub fn series(&self) -> usize {
        self.data.ncols()
    }

    pub fn series_names(&self) -> &[String] {
        &self.series_names
    }

    /// Values of the panel the model is bound to.
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// 0-based row of the original panel where component `i`'s input starts.
    pub fn offset(&self, i: usize) -> usize {
        self.components[..i].iter().map(|c| c.k1 + c.k2).sum()
    }

    fn next_offset(&self) -> usize {
        self.offset(self.components.len())
    }

    /// 1-based first period that every component can reconstruct.
    pub fn reconstructable_from(&self) -> usize {
        self.next_offset() + 1
    }

    /// In-sample MSE of the full model: squared residuals summed over series
    /// and averaged over the reconstructed periods.
    pub fn mse(&self) -> f64 {
        self.components.last().map_or(0.0, |c| c.mse)
    }

    /// Sum of the per-component reconstructions over periods
    /// `reconstructable_from()..=T`.
    pub fn reconstruct(&self) -> Result<TimeSeriesPanel> {
        let start = self.next_offset();
        let n = self.periods() - start;
        let mut total = DMatrix::zeros(n, self.series());
        for (i, c) in self.components.iter().enumerate() {
            let recon = c.reconstruction()?;
            let first = self.offset(i) + c.k1 + c.k2;
            total += recon.rows(start - first, n);
        }
        TimeSeriesPanel::new(total, Some(self.series_names.clone()))
    }

    /// Panel minus reconstruction over the common periods.
    pub fn residuals(&self) -> Result<TimeSeriesPanel> {
        let start = self.next_offset();
        let n = self.periods() - start;
        let recon = self.reconstruct()?;
        TimeSeriesPanel::new(
            self.data.rows(start, n) - recon.values(),
            Some(self.series_names.clone()),
        )
    }

    fn residual_values(&self) -> Result<DMatrix<f64>> {
        if self.components.is_empty() {
            Ok(self.data.clone())
        } else {
            Ok(self.residuals()?.into_values())
        }
    }

    /// Fits one more component on the current residuals.
    pub fn push_component(&mut self, spec: LagSpec, options: &FitOptions) -> Result<&ODPCComponent> {
        let y = self.residual_values()?;
        let required = min_periods(spec.k1, spec.k2);
        if y.nrows() < required {
            return Err(OdpcError::InsufficientLength {
                required: self.next_offset() + required,
                actual: self.periods(),
            });
        }
        let c = fit_values(&y, spec.k1, spec.k2, options)?;
        self.components.push(c);
        Ok(self.components.last().expect("just pushed"))
    }

    /// Copy keeping only the first `q` components.
    pub fn truncated(&self, q: usize) -> Self {
        let mut out = self.clone();
        out.components.truncate(q);
        out
    }

    /// Same weights and loadings applied to another panel with the same
    /// series: every component series (and stage MSE) is recomputed.
    pub fn bind(&self, panel: &TimeSeriesPanel) -> Result<Self> {
        if panel.series() != self.series() {
            return Err(OdpcError::mismatch(
                format!("panel with {} series", self.series()),
                format!("{} series", panel.series()),
            ));
        }
        let mut out = ODPCModel::empty(panel);
        out.series_names = self.series_names.clone();
        for c in &self.components {
            let y = out.residual_values()?;
            let required = min_periods(c.k1, c.k2);
            if y.nrows() < required {
                return Err(OdpcError::InsufficientLength {
                    required: out.next_offset() + required,
                    actual: panel.periods(),
                });
            }
            out.components.push(c.with_data(&y)?);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            lag_specs: self.lag_specs(),
            components: self.components.clone(),
            periods: self.periods(),
            m: self.series(),
            series_names: self.series_names.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Reads a model file and binds it to `panel`.
    pub fn from_json(s: &str, panel: &TimeSeriesPanel) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        if file.components.len() != file.lag_specs.len() {
            return Err(OdpcError::invalid("lag_specs and components differ in length"));
        }
        for (spec, c) in file.lag_specs.iter().zip(&file.components) {
            if *spec != LagSpec::new(c.k1, c.k2) {
                return Err(OdpcError::invalid(format!(
                    "lag spec {spec} does not match component lags ({},{})",
                    c.k1, c.k2
                )));
            }
        }
        if file.m != panel.series() {
            return Err(OdpcError::mismatch(
                format!("panel with {} series", file.m),
                format!("{} series", panel.series()),
            ));
        }
        let template = ODPCModel {
            components: file.components,
            series_names: file.series_names,
            data: DMatrix::zeros(file.periods, file.m),
        };
        for c in &template.components {
            if c.a.len() != file.m * (c.k1 + 1) || c.alpha.len() != file.m || c.b.shape() != (c.k2 + 1, file.m) {
                return Err(OdpcError::invalid("component shapes do not match the series count"));
            }
        }
        let mut bound = template.bind(panel)?;
        // Keep the stored fit diagnostics; bind() recomputes mse on the new data.
        if panel.periods() == file.periods {
            for (b, t) in bound.components.iter_mut().zip(&template.components) {
                b.mse = t.mse;
            }
        }
        Ok(bound)
    }
}

/// Fits `lag_specs.len()` components sequentially on residuals.
pub fn fit_odpc(panel: &TimeSeriesPanel, lag_specs: &[LagSpec], options: &FitOptions) -> Result<ODPCModel> {
    if lag_specs.is_empty() {
        return Err(OdpcError::invalid("at least one lag specification is required"));
    }
    let mut model = ODPCModel::empty(panel);
    for spec in lag_specs {
        model.push_component(*spec, options)?;
    }
    Ok(model)
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Serde adapter writing a matrix as a list of rows.
pub(crate) mod rows_serde {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(super::matrix_rows(m))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }
}
