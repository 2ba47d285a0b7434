//! Monte Carlo comparison of one-step prediction mean squared error (PMSE).
//!
//! For every replication the panel has `T + 1` periods; methods are fitted on
//! the first `T` and forecast period `T + 1`. The PMSE of a replication is the
//! mean over series of the squared error against the observed `z_{T+1}`. For
//! factor DGPs the error against the common part `chi_{T+1}` is reported too.

use std::fmt::{self, Write as _};

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{generate, DgpKind, DgpSpec, SimulatedPanel};
use super::sw::static_factor_forecast;
use crate::component::FitOptions;
use crate::error::{OdpcError, Result};
use crate::forecast::forecast_panel;
use crate::model::{fit_odpc, LagSpec};
use crate::panel::min_periods;

/// Two-sided 5% normal critical value.
pub const CRITICAL_Z: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodSpec {
    /// `components` stages with the same `(k1, k2)`.
    Odpc { components: usize, k1: usize, k2: usize },
    /// `factors` static principal components.
    Sw { factors: usize },
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodSpec::Odpc { components, k1, k2 } => write!(f, "ODPC({components},{k1},{k2})"),
            MethodSpec::Sw { factors } => write!(f, "SW({factors})"),
        }
    }
}

impl MethodSpec {
    fn validate(&self, periods: usize, series: usize) -> Result<()> {
        match *self {
            MethodSpec::Odpc { components, k1, k2 } => {
                if components == 0 {
                    return Err(OdpcError::invalid("ODPC needs at least one component"));
                }
                let required = (components - 1) * (k1 + k2) + min_periods(k1, k2);
                if periods < required {
                    return Err(OdpcError::InsufficientLength {
                        required,
                        actual: periods,
                    });
                }
            }
            MethodSpec::Sw { factors } => {
                if factors == 0 || factors > periods.min(series) {
                    return Err(OdpcError::invalid(format!(
                        "{self} needs 1 <= r <= min(T, m) = {}",
                        periods.min(series)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Method groups compared for a DGP.
pub fn default_method_groups(kind: DgpKind) -> Vec<Vec<MethodSpec>> {
    use MethodSpec::{Odpc, Sw};
    match kind {
        DgpKind::Dfm1 | DgpKind::Dfm1Ar => vec![vec![Odpc { components: 1, k1: 3, k2: 3 }, Sw { factors: 4 }]],
        DgpKind::Dfm2 | DgpKind::Dfm2Ar => vec![vec![Odpc { components: 1, k1: 2, k2: 2 }, Sw { factors: 3 }]],
        DgpKind::Varma => vec![
            vec![Odpc { components: 1, k1: 1, k2: 1 }, Sw { factors: 2 }],
            vec![Odpc { components: 2, k1: 1, k2: 1 }, Sw { factors: 6 }],
            vec![Odpc { components: 5, k1: 1, k2: 1 }, Sw { factors: 10 }],
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub dgps: Vec<DgpKind>,
    /// `(T, m)` cells.
    pub grid: Vec<(usize, usize)>,
    pub replications: usize,
    pub base_seed: u64,
    /// Worker threads; `0` lets rayon decide.
    pub threads: usize,
    /// Overrides [`default_method_groups`] for every DGP.
    pub method_groups: Option<Vec<Vec<MethodSpec>>>,
    pub fit: FitOptions,
    /// Maximum AR order for component and factor forecasts.
    pub max_order: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            dgps: vec![DgpKind::Dfm2],
            grid: vec![(100, 100)],
            replications: 500,
            base_seed: 1,
            threads: 0,
            method_groups: None,
            fit: FitOptions::default(),
            max_order: 10,
        }
    }
}

impl MonteCarloConfig {
    fn groups_for(&self, kind: DgpKind) -> Vec<Vec<MethodSpec>> {
        self.method_groups.clone().unwrap_or_else(|| default_method_groups(kind))
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(OdpcError::invalid("replications must be at least 1"));
        }
        if self.dgps.is_empty() || self.grid.is_empty() {
            return Err(OdpcError::invalid("need at least one dgp and one (T, m) cell"));
        }
        self.fit.validate()?;
        for &kind in &self.dgps {
            for &(t, m) in &self.grid {
                DgpSpec {
                    kind,
                    periods: t,
                    series: m,
                    seed: 0,
                }
                .validate()?;
                for group in self.groups_for(kind) {
                    if group.is_empty() {
                        return Err(OdpcError::invalid("empty method group"));
                    }
                    for method in group {
                        method.validate(t, m)?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of replication `r` in cell `(dgp, T, m)`; independent of thread count
/// and of the order in which cells are run.
pub fn derive_seed(base_seed: u64, kind: DgpKind, periods: usize, series: usize, replication: usize) -> u64 {
    [kind.index(), periods as u64, series as u64, replication as u64]
        .iter()
        .fold(splitmix(base_seed), |acc, &v| splitmix(acc ^ splitmix(v)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: MethodSpec,
    pub group: usize,
    pub mean_pmse: f64,
    /// Standard error of `mean_pmse` across replications.
    pub std_error: f64,
    /// Mean error against the common part (factor DGPs only).
    pub mean_common_pmse: Option<f64>,
    pub pmse: Vec<f64>,
    pub common_pmse: Vec<f64>,
}

/// Paired test of the best method against the runner-up within a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub group: usize,
    pub best: MethodSpec,
    pub runner_up: Option<MethodSpec>,
    /// Mean paired difference divided by its standard error (negative when
    /// the best method is better). `None` with a single method or zero spread.
    pub z_statistic: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub dgp: DgpKind,
    pub periods: usize,
    pub series: usize,
    pub methods: Vec<MethodResult>,
    pub comparisons: Vec<GroupComparison>,
}

impl CellReport {
    pub fn method(&self, spec: &MethodSpec) -> Option<&MethodResult> {
        self.methods.iter().find(|r| &r.method == spec)
    }

    fn is_best(&self, r: &MethodResult) -> Option<bool> {
        self.comparisons
            .iter()
            .find(|c| c.group == r.group)
            .map(|c| c.best == r.method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub replications: usize,
    pub base_seed: u64,
    pub cells: Vec<CellReport>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_error(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let mu = mean(xs);
    let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (var / xs.len() as f64).sqrt()
}

/// Paired z statistic of `a - b`.
pub fn paired_z(a: &[f64], b: &[f64]) -> Option<f64> {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let se = std_error(&d);
    (se.is_finite() && se > 0.0).then(|| mean(&d) / se)
}

fn forecast_method(sim: &SimulatedPanel, method: &MethodSpec, config: &MonteCarloConfig) -> Result<Vec<f64>> {
    let train = sim.estimation_panel()?;
    let values = match *method {
        MethodSpec::Odpc { components, k1, k2 } => {
            let specs = vec![LagSpec::new(k1, k2); components];
            let model = fit_odpc(&train, &specs, &config.fit)?;
            forecast_panel(&model, 1, config.max_order)?.values
        }
        MethodSpec::Sw { factors } => static_factor_forecast(&train, factors, 1, config.max_order)?,
    };
    Ok(values.row(0).iter().copied().collect())
}

fn mean_sq_error(forecast: &[f64], target: &[f64]) -> f64 {
    forecast.iter().zip(target).map(|(f, z)| (z - f).powi(2)).sum::<f64>() / target.len() as f64
}

/// Per-method `(pmse, common_pmse)` for one replication.
fn replicate(
    kind: DgpKind,
    periods: usize,
    series: usize,
    r: usize,
    methods: &[MethodSpec],
    config: &MonteCarloConfig,
) -> Result<Vec<(f64, Option<f64>)>> {
    let seed = derive_seed(config.base_seed, kind, periods, series, r);
    let sim = generate(DgpSpec {
        kind,
        periods,
        series,
        seed,
    })?;
    let target = sim.target_row();
    let common = sim.common_target_row();
    methods
        .iter()
        .map(|method| {
            let f = forecast_method(&sim, method, config)?;
            Ok((mean_sq_error(&f, &target), common.as_ref().map(|c| mean_sq_error(&f, c))))
        })
        .collect()
}

fn run_cell(kind: DgpKind, periods: usize, series: usize, config: &MonteCarloConfig) -> Result<CellReport> {
    let groups = config.groups_for(kind);
    let methods: Vec<(usize, MethodSpec)> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, ms)| ms.iter().map(move |m| (g, *m)))
        .collect();
    let specs: Vec<MethodSpec> = methods.iter().map(|(_, m)| *m).collect();
    let reps: Vec<Vec<(f64, Option<f64>)>> = (0..config.replications)
        .into_par_iter()
        .map(|r| replicate(kind, periods, series, r, &specs, config))
        .collect::<Result<_>>()?;
    let results: Vec<MethodResult> = methods
        .iter()
        .enumerate()
        .map(|(i, &(group, method))| {
            let pmse: Vec<f64> = reps.iter().map(|rep| rep[i].0).collect();
            let common_pmse: Vec<f64> = reps.iter().filter_map(|rep| rep[i].1).collect();
            MethodResult {
                method,
                group,
                mean_pmse: mean(&pmse),
                std_error: std_error(&pmse),
                mean_common_pmse: (!common_pmse.is_empty()).then(|| mean(&common_pmse)),
                pmse,
                common_pmse,
            }
        })
        .collect();
    let comparisons = (0..groups.len())
        .map(|g| {
            let mut members: Vec<&MethodResult> = results.iter().filter(|r| r.group == g).collect();
            members.sort_by(|a, b| a.mean_pmse.total_cmp(&b.mean_pmse));
            let best = members[0];
            let runner = members.get(1);
            let z = runner.and_then(|r| paired_z(&best.pmse, &r.pmse));
            GroupComparison {
                group: g,
                best: best.method,
                runner_up: runner.map(|r| r.method),
                z_statistic: z,
                significant: z.is_some_and(|z| z.abs() > CRITICAL_Z),
            }
        })
        .collect();
    debug!("finished {kind} T={periods} m={series}");
    Ok(CellReport {
        dgp: kind,
        periods,
        series,
        methods: results,
        comparisons,
    })
}

/// Runs every `(dgp, T, m)` cell. Results are identical for any thread count.
pub fn run_monte_carlo(config: &MonteCarloConfig) -> Result<MonteCarloReport> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| OdpcError::invalid(format!("cannot start thread pool: {e}")))?;
    let cells = pool.install(|| {
        let mut cells = Vec::new();
        for &kind in &config.dgps {
            for &(t, m) in &config.grid {
                cells.push(run_cell(kind, t, m, config)?);
            }
        }
        Ok::<_, OdpcError>(cells)
    })?;
    Ok(MonteCarloReport {
        replications: config.replications,
        base_seed: config.base_seed,
        cells,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v}"))
}

impl MonteCarloReport {
    /// One row per (cell, method).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "dgp,T,m,group,method,replications,mean_pmse,std_error,mean_common_pmse,best,z_statistic,significant\n",
        );
        for cell in &self.cells {
            for r in &cell.methods {
                let cmp = cell.comparisons.iter().find(|c| c.group == r.group);
                let best = cmp.is_some_and(|c| c.best == r.method);
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    cell.dgp,
                    cell.periods,
                    cell.series,
                    r.group + 1,
                    r.method,
                    r.pmse.len(),
                    r.mean_pmse,
                    r.std_error,
                    fmt_opt(r.mean_common_pmse),
                    best,
                    fmt_opt(cmp.and_then(|c| c.z_statistic)),
                    cmp.is_some_and(|c| c.significant),
                );
            }
        }
        out
    }

    /// Fixed-width table; the best method of each group is bracketed and an
    /// asterisk marks a significant difference from the runner-up.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let mut last: Option<DgpKind> = None;
        for cell in &self.cells {
            if last != Some(cell.dgp) {
                if last.is_some() {
                    out.push('\n');
                }
                let _ = write!(out, "{} ({} replications)\n{:>6} {:>6}", cell.dgp, self.replications, "T", "m");
                for r in &cell.methods {
                    let _ = write!(out, " {:>14}", r.method.to_string());
                }
                out.push('\n');
                last = Some(cell.dgp);
            }
            let _ = write!(out, "{:>6} {:>6}", cell.periods, cell.series);
            for r in &cell.methods {
                let cmp = cell.comparisons.iter().find(|c| c.group == r.group);
                let cellstr = match (cell.is_best(r), cmp) {
                    (Some(true), Some(c)) => {
                        format!("[{:.3}]{}", r.mean_pmse, if c.significant { "*" } else { "" })
                    }
                    _ => format!("{:.3}", r.mean_pmse),
                };
                let _ = write!(out, " {cellstr:>14}");
            }
            out.push('\n');
        }
        out
    }
}
