//! Univariate autoregressive forecasters for component series and the
//! mapping of component forecasts back to every series of the panel.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{OdpcError, Result};
use crate::linalg::lstsq;
use crate::model::ODPCModel;

/// An AR(p) model `y_t = c + phi_1 y_{t-1} + ... + phi_p y_{t-p} + e_t`
/// fitted by conditional least squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ARForecaster {
    pub order: usize,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Residual variance of the final fit.
    pub residual_variance: f64,
    /// AIC of the selected order on the common selection sample.
    pub aic: f64,
    /// Spectral radius of the companion matrix; `>= 1` flags a
    /// non-stationary fit (forecasts are still the formal recursion).
    pub spectral_radius: f64,
}

struct ArFit {
    coefficients: Vec<f64>,
    intercept: f64,
    rss: f64,
    n: usize,
}

/// Regresses `y_t` on `(1, y_{t-1}, ..., y_{t-p})` for `t` in `start..len`.
fn fit_ar(y: &[f64], p: usize, start: usize) -> ArFit {
    let n = y.len() - start;
    let x = DMatrix::from_fn(n, p + 1, |r, c| if c == 0 { 1.0 } else { y[start + r - c] });
    let target = DMatrix::from_fn(n, 1, |r, _| y[start + r]);
    let beta = lstsq(&x, &target).x;
    let rss = (target - &x * &beta).norm_squared();
    ArFit {
        coefficients: beta.iter().skip(1).copied().collect(),
        intercept: beta[0],
        rss,
        n,
    }
}

fn aic(rss: f64, n: usize, p: usize) -> f64 {
    let sigma2 = (rss / n as f64).max(f64::MIN_POSITIVE);
    n as f64 * sigma2.ln() + 2.0 * (p + 1) as f64
}

fn spectral_radius(coefficients: &[f64]) -> f64 {
    let p = coefficients.len();
    if p == 0 {
        return 0.0;
    }
    let companion = DMatrix::from_fn(p, p, |i, j| {
        if i == 0 {
            coefficients[j]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    companion
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

impl ARForecaster {
    /// Constant-mean forecaster.
    pub fn constant(mean: f64) -> Self {
        ARForecaster {
            order: 0,
            coefficients: Vec::new(),
            intercept: mean,
            residual_variance: 0.0,
            aic: f64::NEG_INFINITY,
            spectral_radius: 0.0,
        }
    }

    /// Builds a forecaster from known coefficients.
    pub fn from_coefficients(intercept: f64, coefficients: Vec<f64>) -> Self {
        ARForecaster {
            order: coefficients.len(),
            spectral_radius: spectral_radius(&coefficients),
            coefficients,
            intercept,
            residual_variance: f64::NAN,
            aic: f64::NAN,
        }
    }

    pub fn is_stationary(&self) -> bool {
        self.spectral_radius < 1.0
    }

    /// One-step fitted values `c + sum phi_i y_{t-i}` for `t = p..len`.
    pub fn fitted(&self, y: &[f64]) -> Vec<f64> {
        (self.order..y.len())
            .map(|t| {
                self.intercept
                    + self
                        .coefficients
                        .iter()
                        .enumerate()
                        .map(|(i, phi)| phi * y[t - 1 - i])
                        .sum::<f64>()
            })
            .collect()
    }

    /// Iterates the recursion `h` steps past the end of `history`.
    pub fn forecast(&self, history: &[f64], h: usize) -> Result<Vec<f64>> {
        if history.len() < self.order {
            return Err(OdpcError::InsufficientLength {
                required: self.order,
                actual: history.len(),
            });
        }
        let mut buf: Vec<f64> = history[history.len() - self.order..].to_vec();
        let mut out = Vec::with_capacity(h);
        for _ in 0..h {
            let next = self.intercept
                + self
                    .coefficients
                    .iter()
                    .enumerate()
                    .map(|(i, phi)| phi * buf[buf.len() - 1 - i])
                    .sum::<f64>();
            out.push(next);
            buf.push(next);
        }
        Ok(out)
    }
}

/// Fits AR(p) for `p = 0..=max_order` on a common sample and keeps the order
/// with the smallest AIC (smaller order on ties); the chosen order is then
/// refitted on all available observations.
pub fn fit_component_forecaster(f: &[f64], max_order: usize) -> Result<ARForecaster> {
    if f.len() <= max_order + 2 {
        return Err(OdpcError::InsufficientLength {
            required: max_order + 3,
            actual: f.len(),
        });
    }
    if f.iter().any(|x| !x.is_finite()) {
        return Err(OdpcError::invalid("component series has non-finite values"));
    }
    if f.iter().all(|&x| x == f[0]) {
        return Ok(ARForecaster::constant(f[0]));
    }
    let mut best: Option<(usize, f64)> = None;
    for p in 0..=max_order {
        let fit = fit_ar(f, p, max_order);
        let crit = aic(fit.rss, fit.n, p);
        if best.is_none_or(|(_, b)| crit < b) {
            best = Some((p, crit));
        }
    }
    let (order, crit) = best.expect("at least one candidate order");
    let fit = fit_ar(f, order, order);
    Ok(ARForecaster {
        order,
        spectral_radius: spectral_radius(&fit.coefficients),
        residual_variance: fit.rss / fit.n as f64,
        coefficients: fit.coefficients,
        intercept: fit.intercept,
        aic: crit,
    })
}

/// Largest AR order that can be fitted on a series of length `len`.
pub fn feasible_order(len: usize, max_order: usize) -> usize {
    max_order.min(len.saturating_sub(3))
}

/// Forecast path of one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentPath {
    pub forecaster: ARForecaster,
    /// Observed values `f_{T+1-k2}, ..., f_T` (empty when `k2 = 0`).
    pub observed: Vec<f64>,
    /// Forecasts `f_{T+1|T}, ..., f_{T+h|T}`.
    pub forecast: Vec<f64>,
}

/// `h`-step forecasts of every series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelForecast {
    pub horizon: usize,
    pub series_names: Vec<String>,
    /// `h x m`; row `s` is the forecast of period `T + s + 1`.
    #[serde(with = "crate::model::rows_serde")]
    pub values: DMatrix<f64>,
    pub component_paths: Vec<ComponentPath>,
}

/// Fits an AR-AIC forecaster to each component series and iterates it `h`
/// steps ahead. `max_order` is reduced where a component series is too short.
pub fn forecast_components(model: &ODPCModel, h: usize, max_order: usize) -> Result<Vec<ComponentPath>> {
    if h == 0 {
        return Err(OdpcError::invalid("horizon must be at least 1"));
    }
    model
        .components()
        .iter()
        .map(|c| {
            if c.f.len() < 3 {
                return Err(OdpcError::InsufficientLength {
                    required: 3,
                    actual: c.f.len(),
                });
            }
            let forecaster = fit_component_forecaster(&c.f, feasible_order(c.f.len(), max_order))?;
            let forecast = forecaster.forecast(&c.f, h)?;
            Ok(ComponentPath {
                forecaster,
                observed: c.f[c.f.len() - c.k2..].to_vec(),
                forecast,
            })
        })
        .collect()
}

/// Applies `z_{T+s|T,j} = sum_i (alpha^i_j + sum_v b^i_{v,j} f^i_{T+s-v|T})`
/// given future component values `forecasts[i] = (f^i_{T+1|T}, ..., f^i_{T+h|T})`.
/// Terms with `T + s - v <= T` use the observed component values.
pub fn combine_component_forecasts(model: &ODPCModel, forecasts: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let comps = model.components();
    if forecasts.len() != comps.len() {
        return Err(OdpcError::mismatch(
            format!("{} component paths", comps.len()),
            forecasts.len(),
        ));
    }
    let h = forecasts.first().map_or(0, Vec::len);
    if h == 0 || forecasts.iter().any(|p| p.len() != h) {
        return Err(OdpcError::invalid("component forecast paths must share a positive length"));
    }
    let m = model.series();
    let mut out = DMatrix::zeros(h, m);
    for (c, path) in comps.iter().zip(forecasts) {
        let len = c.f.len();
        for s in 1..=h {
            for j in 0..m {
                let mut v = c.alpha[j];
                for lag in 0..=c.k2 {
                    let value = if s > lag {
                        path[s - lag - 1]
                    } else {
                        c.f[len - 1 - (lag - s)]
                    };
                    v += c.b[(lag, j)] * value;
                }
                out[(s - 1, j)] += v;
            }
        }
    }
    Ok(out)
}

/// `h`-step forecasts of all series from AR-AIC forecasts of each component.
pub fn forecast_panel(model: &ODPCModel, h: usize, max_order: usize) -> Result<PanelForecast> {
    let paths = forecast_components(model, h, max_order)?;
    let future: Vec<Vec<f64>> = paths.iter().map(|p| p.forecast.clone()).collect();
    let values = combine_component_forecasts(model, &future)?;
    if values.iter().any(|x| !x.is_finite()) {
        return Err(OdpcError::DegeneratePanel("forecast produced non-finite values".into()));
    }
    Ok(PanelForecast {
        horizon: h,
        series_names: model.series_names().to_vec(),
        values,
        component_paths: paths,
    })
}
