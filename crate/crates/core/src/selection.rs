//! Choosing lags and the number of components, and rolling-origin
//! out-of-sample evaluation of panel forecasters.
//!
//! Both stepwise searches restrict every component to `k1 = k2 = k` with
//! `k` in `0..=k_max`. Stage `q` fixes the components chosen so far and scores
//! each candidate `k` for component `q`; the search stops as soon as the best
//! score of a new stage is not strictly better than the previous stage's.
//!
//! The BIC of a candidate only penalizes the lags of the component being
//! added, so a new `k = 0` stage would always beat the previous one. Stages
//! are therefore compared with the penalties of all earlier components added
//! back in; the choice of `k` within a stage is unaffected.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::component::FitOptions;
use crate::error::{OdpcError, Result};
use crate::forecast::{feasible_order, fit_component_forecaster, forecast_panel};
use crate::model::{fit_odpc, LagSpec, ODPCModel};
use crate::panel::{min_periods, TimeSeriesPanel};
use crate::simulate::sw::static_factor_forecast;

/// `(T - 2 sum k^i) log(trace) + m (2k + 3) log(T - 2 sum k^i)`, where
/// `cumulative_lags = 2 sum k^i` over all components including the current one.
pub fn bic_for_stage(
    residual_trace: f64,
    periods: usize,
    cumulative_lags: usize,
    k: usize,
    m: usize,
) -> Result<f64> {
    if cumulative_lags >= periods {
        return Err(OdpcError::InsufficientLength {
            required: cumulative_lags + 1,
            actual: periods,
        });
    }
    if !(residual_trace > 0.0) {
        return Err(OdpcError::invalid(format!(
            "residual trace must be positive, got {residual_trace}"
        )));
    }
    let t_eff = (periods - cumulative_lags) as f64;
    Ok(t_eff * residual_trace.ln() + (m * (2 * k + 3)) as f64 * t_eff.ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOptions {
    pub fit: FitOptions,
    /// Maximum AR order of the component forecasters (cross-validation only).
    pub max_order: usize,
    /// Hard cap on the number of components.
    pub max_components: usize,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        SelectionOptions {
            fit: FitOptions::default(),
            max_order: 10,
            max_components: 10,
        }
    }
}

/// Score of one candidate `k` at one stage; `None` when the fit failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub stage: usize,
    pub k: usize,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub lag_specs: Vec<LagSpec>,
    pub table: Vec<CandidateScore>,
    /// Statistic compared between stages, for every stage evaluated
    /// (including the rejected one): the best CV error, or the best BIC plus
    /// the penalties of the earlier components.
    pub stage_best: Vec<f64>,
    /// 1-based stage at which the search stopped.
    pub stopped_at: usize,
    pub warnings: Vec<String>,
}

fn feasible_ks(capacity: usize, offset: usize, k_max: usize, stage: usize, warnings: &mut Vec<String>) -> Vec<usize> {
    let ks: Vec<usize> = (0..=k_max)
        .filter(|&k| offset + min_periods(k, k) <= capacity)
        .collect();
    if ks.len() < k_max + 1 {
        let msg = match ks.last() {
            Some(last) => format!("stage {stage}: k_max={k_max} exceeds sample capacity, candidates truncated to 0..={last}"),
            None => format!("stage {stage}: no feasible lag for the remaining sample"),
        };
        log::warn!("{msg}");
        warnings.push(msg);
    }
    ks
}

/// Relative margin below which two scores count as tied; ties go to the
/// smaller `k` and never justify another component.
const TIE: f64 = 1e-9;

fn improves(new: f64, old: f64) -> bool {
    new < old - TIE * old.abs()
}

fn argmin(scores: &[(usize, Option<f64>)]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for &(k, s) in scores {
        if let Some(s) = s {
            if best.is_none_or(|(_, b)| improves(s, b)) {
                best = Some((k, s));
            }
        }
    }
    best
}

fn stepwise<F, S>(
    k_max: usize,
    capacity: usize,
    max_components: usize,
    mut score_stage: F,
    stage_statistic: S,
) -> Result<SelectionResult>
where
    F: FnMut(&[LagSpec], &[usize]) -> Vec<(usize, Option<f64>)>,
    S: Fn(&[LagSpec], usize, f64) -> f64,
{
    let mut chosen: Vec<LagSpec> = Vec::new();
    let mut table = Vec::new();
    let mut stage_best = Vec::new();
    let mut warnings = Vec::new();
    let mut stopped_at = 0;
    for stage in 1..=max_components.max(1) {
        stopped_at = stage;
        let offset: usize = chosen.iter().map(LagSpec::span).sum();
        let ks = feasible_ks(capacity, offset, k_max, stage, &mut warnings);
        if ks.is_empty() {
            break;
        }
        let scores = score_stage(&chosen, &ks);
        table.extend(scores.iter().map(|&(k, score)| CandidateScore { stage, k, score }));
        let Some((k, best)) = argmin(&scores) else {
            warnings.push(format!("stage {stage}: every candidate failed to fit"));
            break;
        };
        let stat = stage_statistic(&chosen, k, best);
        stage_best.push(stat);
        if let Some(&prev) = stage_best.iter().rev().nth(1) {
            if !improves(stat, prev) {
                break;
            }
        }
        chosen.push(LagSpec::symmetric(k));
    }
    if chosen.is_empty() {
        return Err(OdpcError::InsufficientLength {
            required: min_periods(0, 0),
            actual: capacity,
        });
    }
    Ok(SelectionResult {
        lag_specs: chosen,
        table,
        stage_best,
        stopped_at,
        warnings,
    })
}

/// Mean squared `h`-step error over `n_folds` expanding-window origins; the
/// last origin forecasts the final period of the panel.
pub fn cross_validated_error(
    panel: &TimeSeriesPanel,
    lag_specs: &[LagSpec],
    h: usize,
    n_folds: usize,
    options: &SelectionOptions,
) -> Result<f64> {
    let t = panel.periods();
    if h == 0 || n_folds == 0 || t < h + n_folds + 1 {
        return Err(OdpcError::InsufficientLength {
            required: h + n_folds + 1,
            actual: t,
        });
    }
    let first = t - h - n_folds + 1;
    let m = panel.series();
    let mut total = 0.0;
    for fold in 0..n_folds {
        let origin = first + fold;
        let train = panel.slice_rows(0, origin)?;
        let model = fit_odpc(&train, lag_specs, &options.fit)?;
        let fc = forecast_panel(&model, h, options.max_order)?;
        let actual = panel.values().row(origin + h - 1);
        let err = (actual - fc.values.row(h - 1)).norm_squared() / m as f64;
        total += err;
    }
    Ok(total / n_folds as f64)
}

/// Stepwise search minimizing the rolling-origin cross-validated error.
pub fn select_lags_stepwise_cv(
    panel: &TimeSeriesPanel,
    k_max: usize,
    h: usize,
    n_folds: usize,
    options: &SelectionOptions,
) -> Result<SelectionResult> {
    let t = panel.periods();
    if h == 0 || n_folds == 0 || t < h + n_folds + 1 {
        return Err(OdpcError::InsufficientLength {
            required: h + n_folds + 1,
            actual: t,
        });
    }
    let capacity = t - h - n_folds + 1;
    stepwise(k_max, capacity, options.max_components, |chosen, ks| {
        ks.par_iter()
            .map(|&k| {
                let mut specs = chosen.to_vec();
                specs.push(LagSpec::symmetric(k));
                (k, cross_validated_error(panel, &specs, h, n_folds, options).ok())
            })
            .collect()
    }, |_, _, best| best)
}

/// Stepwise search minimizing [`bic_for_stage`].
pub fn select_lags_stepwise_bic(
    panel: &TimeSeriesPanel,
    k_max: usize,
    options: &SelectionOptions,
) -> Result<SelectionResult> {
    let t = panel.periods();
    let m = panel.series();
    let mut base = ODPCModel::empty(panel);
    let mut chosen_so_far = 0;
    stepwise(k_max, t, options.max_components, |chosen, ks| {
        // Extend the cached base model to the components chosen so far.
        while chosen_so_far < chosen.len() {
            if base.push_component(chosen[chosen_so_far], &options.fit).is_err() {
                return ks.iter().map(|&k| (k, None)).collect();
            }
            chosen_so_far += 1;
        }
        let cumulative: usize = chosen.iter().map(|s| s.k1).sum();
        ks.par_iter()
            .map(|&k| {
                let mut candidate = base.clone();
                let score = candidate
                    .push_component(LagSpec::symmetric(k), &options.fit)
                    .ok()
                    .and_then(|c| {
                        bic_for_stage(c.mse.max(f64::MIN_POSITIVE), t, 2 * (cumulative + k), k, m).ok()
                    });
                (k, score)
            })
            .collect()
    }, |chosen, k, best| {
        let lags: usize = chosen.iter().map(|s| s.k1).sum::<usize>() + k;
        let t_eff = (t - 2 * lags) as f64;
        best + chosen.iter().map(|s| (m * (2 * s.k1 + 3)) as f64 * t_eff.ln()).sum::<f64>()
    })
}

/// Panel forecasting method evaluated by [`rolling_origin_evaluate`].
pub trait PanelForecaster: Sync {
    fn name(&self) -> String;

    /// Forecasts the `h` periods following `train`. `origin` is the 0-based
    /// row, in the full evaluation panel, of the first forecast period.
    fn forecast(&self, train: &TimeSeriesPanel, origin: usize, h: usize) -> Result<DMatrix<f64>>;
}

/// Built-in forecasting methods.
#[derive(Debug, Clone, PartialEq)]
pub enum ForecastMethod {
    Odpc {
        lag_specs: Vec<LagSpec>,
        fit: FitOptions,
        max_order: usize,
    },
    /// Static principal-component factors with AR-AIC factor forecasts.
    StaticFactors { factors: usize, max_order: usize },
    /// AR-AIC forecast of each series on its own.
    UnivariateAr { max_order: usize },
}

impl PanelForecaster for ForecastMethod {
    fn name(&self) -> String {
        match self {
            ForecastMethod::Odpc { lag_specs, .. } => {
                let specs: Vec<String> = lag_specs.iter().map(LagSpec::to_string).collect();
                format!("ODPC{}", specs.join(""))
            }
            ForecastMethod::StaticFactors { factors, .. } => format!("SW({factors})"),
            ForecastMethod::UnivariateAr { .. } => "AR".to_string(),
        }
    }

    fn forecast(&self, train: &TimeSeriesPanel, _origin: usize, h: usize) -> Result<DMatrix<f64>> {
        match self {
            ForecastMethod::Odpc {
                lag_specs,
                fit,
                max_order,
            } => {
                let model = fit_odpc(train, lag_specs, fit)?;
                Ok(forecast_panel(&model, h, *max_order)?.values)
            }
            ForecastMethod::StaticFactors { factors, max_order } => {
                static_factor_forecast(train, *factors, h, *max_order)
            }
            ForecastMethod::UnivariateAr { max_order } => {
                let z = train.values();
                let mut out = DMatrix::zeros(h, z.ncols());
                for j in 0..z.ncols() {
                    let y: Vec<f64> = z.column(j).iter().copied().collect();
                    let ar = fit_component_forecaster(&y, feasible_order(y.len(), *max_order))?;
                    for (s, v) in ar.forecast(&y, h)?.into_iter().enumerate() {
                        out[(s, j)] = v;
                    }
                }
                Ok(out)
            }
        }
    }
}

/// How the `h`-step target is formed from the panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Sum of the `h` values after the origin (differenced-log level change).
    LevelSum,
    /// Value `h` periods after the origin.
    LastValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationConfig {
    /// Length of the trailing estimation window.
    pub window: usize,
    pub horizons: Vec<usize>,
    pub n_origins: usize,
    /// 0-based target series; empty means every series.
    pub targets: Vec<usize>,
    pub mode: TargetMode,
    /// AR order cap of the univariate baseline.
    pub baseline_max_order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub series: String,
    pub horizon: usize,
    /// `t` in `0..n_origins`; the estimation window ends at period `T - h - t`.
    pub origin: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub series: String,
    pub horizon: usize,
    pub rmse: f64,
    pub baseline_rmse: f64,
    pub relative_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method: String,
    pub window: usize,
    pub horizons: Vec<usize>,
    pub n_origins: usize,
    pub mode: TargetMode,
    pub errors: Vec<ErrorRecord>,
    pub summary: Vec<SeriesSummary>,
}

impl EvaluationReport {
    /// Long-format CSV: `method,series,horizon,origin,error`.
    pub fn errors_csv(&self) -> String {
        let mut out = String::from("method,series,horizon,origin,error\n");
        for e in &self.errors {
            out.push_str(&format!("{},{},{},{},{}\n", self.method, e.series, e.horizon, e.origin, e.error));
        }
        out
    }

    /// RMSE of `series` at `horizon` recomputed from the stored errors.
    pub fn rmse_from_errors(&self, series: &str, horizon: usize) -> Option<f64> {
        let errs: Vec<f64> = self
            .errors
            .iter()
            .filter(|e| e.series == series && e.horizon == horizon)
            .map(|e| e.error)
            .collect();
        (!errs.is_empty()).then(|| rmse(&errs))
    }
}

fn rmse(errors: &[f64]) -> f64 {
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

/// Errors `E[target][horizon][origin]` of one method.
fn origin_errors(
    panel: &TimeSeriesPanel,
    method: &dyn PanelForecaster,
    config: &EvaluationConfig,
    targets: &[usize],
) -> Result<Vec<Vec<Vec<f64>>>> {
    let t_total = panel.periods();
    let jobs: Vec<(usize, usize)> = config
        .horizons
        .iter()
        .enumerate()
        .flat_map(|(hi, _)| (0..config.n_origins).map(move |t| (hi, t)))
        .collect();
    let results: Vec<Result<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(hi, t)| {
            let h = config.horizons[hi];
            let end = t_total - h - t;
            let train = panel.slice_rows(end - config.window, end)?;
            let fc = method.forecast(&train, end, h)?;
            if fc.shape() != (h, panel.series()) {
                return Err(OdpcError::mismatch(
                    format!("{h}x{} forecast", panel.series()),
                    format!("{}x{}", fc.nrows(), fc.ncols()),
                ));
            }
            Ok(targets
                .iter()
                .map(|&j| match config.mode {
                    TargetMode::LevelSum => (0..h).map(|s| panel.values()[(end + s, j)] - fc[(s, j)]).sum(),
                    TargetMode::LastValue => panel.values()[(end + h - 1, j)] - fc[(h - 1, j)],
                })
                .collect())
        })
        .collect();
    let mut out = vec![vec![vec![0.0; config.n_origins]; config.horizons.len()]; targets.len()];
    for (&(hi, t), res) in jobs.iter().zip(results) {
        for (ti, e) in res?.into_iter().enumerate() {
            out[ti][hi][t] = e;
        }
    }
    Ok(out)
}

/// Refits `method` on a trailing window at each of `n_origins` origins and
/// accumulates the `h`-step errors for each target series; RMSEs are also
/// reported relative to a univariate AR-AIC baseline on the same windows.
pub fn rolling_origin_evaluate(
    panel: &TimeSeriesPanel,
    method: &dyn PanelForecaster,
    config: &EvaluationConfig,
) -> Result<EvaluationReport> {
    let max_h = config.horizons.iter().copied().max().unwrap_or(0);
    if config.horizons.is_empty() || config.horizons.contains(&0) {
        return Err(OdpcError::invalid("horizons must be non-empty and positive"));
    }
    if config.n_origins == 0 || config.window < 2 {
        return Err(OdpcError::invalid("need at least one origin and a window of 2 periods"));
    }
    let required = config.window + max_h + config.n_origins;
    if required > panel.periods() {
        return Err(OdpcError::InsufficientLength {
            required,
            actual: panel.periods(),
        });
    }
    let targets: Vec<usize> = if config.targets.is_empty() {
        (0..panel.series()).collect()
    } else {
        config.targets.clone()
    };
    if let Some(&bad) = targets.iter().find(|&&j| j >= panel.series()) {
        return Err(OdpcError::invalid(format!("target index {bad} out of range")));
    }
    let errors = origin_errors(panel, method, config, &targets)?;
    let baseline = ForecastMethod::UnivariateAr {
        max_order: config.baseline_max_order,
    };
    let base_errors = origin_errors(panel, &baseline, config, &targets)?;

    let names = panel.series_names();
    let mut records = Vec::new();
    let mut summary = Vec::new();
    for (ti, &j) in targets.iter().enumerate() {
        for (hi, &h) in config.horizons.iter().enumerate() {
            for (t, &e) in errors[ti][hi].iter().enumerate() {
                records.push(ErrorRecord {
                    series: names[j].clone(),
                    horizon: h,
                    origin: t,
                    error: e,
                });
            }
            let r = rmse(&errors[ti][hi]);
            let rb = rmse(&base_errors[ti][hi]);
            summary.push(SeriesSummary {
                series: names[j].clone(),
                horizon: h,
                rmse: r,
                baseline_rmse: rb,
                relative_rmse: r / rb,
            });
        }
    }
    Ok(EvaluationReport {
        method: method.name(),
        window: config.window,
        horizons: config.horizons.clone(),
        n_origins: config.n_origins,
        mode: config.mode,
        errors: records,
        summary,
    })
}
