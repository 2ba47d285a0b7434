//! Static principal-component factor baseline: the leading `r` principal
//! components of the centered panel, each forecast by an AR-AIC model.

use nalgebra::{DMatrix, SVD};

use crate::error::{OdpcError, Result};
use crate::forecast::{feasible_order, fit_component_forecaster, ARForecaster};
use crate::panel::TimeSeriesPanel;

#[derive(Debug, Clone)]
pub struct StaticFactorModel {
    pub means: Vec<f64>,
    /// `m x r`, orthonormal columns.
    pub loadings: DMatrix<f64>,
    /// `T x r` factor scores.
    pub factors: DMatrix<f64>,
}

impl StaticFactorModel {
    /// Extracts `r` principal components; `r` may not exceed `min(T, m)`.
    /// Each loading column is signed so its largest-magnitude entry is
    /// positive.
    pub fn fit(panel: &TimeSeriesPanel, r: usize) -> Result<Self> {
        let (t, m) = (panel.periods(), panel.series());
        if r == 0 || r > t.min(m) {
            return Err(OdpcError::invalid(format!(
                "number of static factors must be in 1..={}, got {r}",
                t.min(m)
            )));
        }
        let mut centered = panel.values().clone();
        let means: Vec<f64> = centered
            .column_iter_mut()
            .map(|mut c| {
                let mean = c.mean();
                c.add_scalar_mut(-mean);
                mean
            })
            .collect();
        let svd = SVD::new(centered, true, true);
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let u = svd.u.as_ref().expect("u requested");
        let v_t = svd.v_t.as_ref().expect("v requested");
        let mut loadings = DMatrix::zeros(m, r);
        let mut factors = DMatrix::zeros(t, r);
        for (k, &idx) in order.iter().take(r).enumerate() {
            let s = svd.singular_values[idx];
            let v = v_t.row(idx);
            let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            for j in 0..m {
                loadings[(j, k)] = sign * v[j];
            }
            for i in 0..t {
                factors[(i, k)] = sign * s * u[(i, idx)];
            }
        }
        Ok(StaticFactorModel {
            means,
            loadings,
            factors,
        })
    }

    /// `h x m` forecasts `means + V f_hat` with AR-AIC factor forecasts.
    pub fn forecast(&self, h: usize, max_order: usize) -> Result<(DMatrix<f64>, Vec<ARForecaster>)> {
        if h == 0 {
            return Err(OdpcError::invalid("horizon must be at least 1"));
        }
        let t = self.factors.nrows();
        let r = self.factors.ncols();
        let mut fhat = DMatrix::zeros(h, r);
        let mut models = Vec::with_capacity(r);
        for k in 0..r {
            let f: Vec<f64> = self.factors.column(k).iter().copied().collect();
            let ar = fit_component_forecaster(&f, feasible_order(t, max_order))?;
            for (s, v) in ar.forecast(&f, h)?.into_iter().enumerate() {
                fhat[(s, k)] = v;
            }
            models.push(ar);
        }
        let mut out = fhat * self.loadings.transpose();
        for (j, mean) in self.means.iter().enumerate() {
            out.column_mut(j).add_scalar_mut(*mean);
        }
        Ok((out, models))
    }
}

/// `h`-step forecasts of every series from `r` static factors.
pub fn static_factor_forecast(
    panel: &TimeSeriesPanel,
    r: usize,
    h: usize,
    max_order: usize,
) -> Result<DMatrix<f64>> {
    StaticFactorModel::fit(panel, r)?.forecast(h, max_order).map(|(f, _)| f)
}

/// One-step forecasts with the default maximum AR order of 10.
pub fn sw_baseline_forecast(panel: &TimeSeriesPanel, r: usize, h: usize) -> Result<DMatrix<f64>> {
    static_factor_forecast(panel, r, h, 10)
}
