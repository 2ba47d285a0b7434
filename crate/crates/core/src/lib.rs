//! One-sided dynamic principal components (ODPC) for multivariate time series.
//!
//! A one-sided dynamic component is a linear combination of the present and
//! past values of every series in a panel, chosen so that its own lags
//! reconstruct the panel with minimum mean squared error. Because only past
//! values enter the component, it can be extrapolated with any univariate
//! forecaster and mapped back to forecasts of every series.
//!
//! The crate is organised bottom-up:
//!
//! * [`panel`]: panel storage, CSV/JSON ingestion and the lagged design matrices.
//! * [`component`]: alternating least squares fit of a single component.
//! * [`model`]: several components fitted sequentially on residuals.
//! * [`forecast`]: autoregressive component forecasters and panel forecasts.
//! * [`selection`]: lag/component selection (cross-validation, BIC) and
//!   rolling-origin evaluation.
//! * [`simulate`]: factor-model and VARMA generators, the static principal
//!   component baseline and the Monte Carlo PMSE harness.
//!
//! ```
//! use odpc::{fit_odpc, forecast_panel, FitOptions, LagSpec, TimeSeriesPanel};
//!
//! let values: Vec<Vec<f64>> = (0..60)
//!     .map(|t| {
//!         let s = (t as f64 * 0.3).sin();
//!         vec![s, 2.0 * s + 0.1 * (t as f64 * 1.7).cos(), -s]
//!     })
//!     .collect();
//! let panel = TimeSeriesPanel::from_rows(&values, None).unwrap();
//! let model = fit_odpc(&panel, &[LagSpec::new(1, 1)], &FitOptions::default()).unwrap();
//! let fc = forecast_panel(&model, 2, 4).unwrap();
//! assert_eq!(fc.values.nrows(), 2);
//! ```

pub mod component;
mod error;
pub mod forecast;
pub(crate) mod linalg;
pub mod model;
pub mod panel;
pub mod selection;
pub mod simulate;

pub use component::{
    coordinate_descent_a, fit_component, initialize_component, reconstruction_mse, update_a,
    update_d, AUpdate, FitOptions, Init, ODPCComponent,
};
pub use error::{OdpcError, Result};
pub use forecast::{
    fit_component_forecaster, forecast_components, forecast_panel, ARForecaster, ComponentPath,
    PanelForecast,
};
pub use model::{fit_odpc, LagSpec, ODPCModel};
pub use panel::{build_f_matrix, build_lagged_design, component_series, LaggedDesign, TimeSeriesPanel};
