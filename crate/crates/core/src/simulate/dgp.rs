//! Data-generating processes: two dynamic factor models (MA and AR factor),
//! each with i.i.d. or AR(1) idiosyncratic noise, and a VAR(1) observed
//! through a lower-triangular mixing matrix.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{OdpcError, Result};
use crate::linalg::sample_variance;
use crate::panel::TimeSeriesPanel;

/// Periods simulated and discarded before the retained sample.
pub const BURN_IN: usize = 200;

const STREAM_PARAMS: u64 = 0;
const STREAM_FACTOR: u64 = 1;
const STREAM_NOISE: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DgpKind {
    /// MA(2) factor loaded with lags 0..=3, i.i.d. noise.
    #[serde(rename = "DFM1")]
    Dfm1,
    /// DFM1 with unit-variance AR(1) noise.
    #[serde(rename = "DFM1AR")]
    Dfm1Ar,
    /// AR(2) factor loaded with lags 0..=2, i.i.d. noise.
    #[serde(rename = "DFM2")]
    Dfm2,
    #[serde(rename = "DFM2AR")]
    Dfm2Ar,
    #[serde(rename = "VARMA")]
    Varma,
}

impl DgpKind {
    pub const ALL: [DgpKind; 5] = [DgpKind::Dfm1, DgpKind::Dfm1Ar, DgpKind::Dfm2, DgpKind::Dfm2Ar, DgpKind::Varma];

    pub fn name(&self) -> &'static str {
        match self {
            DgpKind::Dfm1 => "DFM1",
            DgpKind::Dfm1Ar => "DFM1AR",
            DgpKind::Dfm2 => "DFM2",
            DgpKind::Dfm2Ar => "DFM2AR",
            DgpKind::Varma => "VARMA",
        }
    }

    pub fn is_factor_model(&self) -> bool {
        !matches!(self, DgpKind::Varma)
    }

    /// Number of factor lags loaded on the series (0 for VARMA).
    pub fn factor_lags(&self) -> usize {
        match self {
            DgpKind::Dfm1 | DgpKind::Dfm1Ar => 3,
            DgpKind::Dfm2 | DgpKind::Dfm2Ar => 2,
            DgpKind::Varma => 0,
        }
    }

    pub(crate) fn index(&self) -> u64 {
        match self {
            DgpKind::Dfm1 => 1,
            DgpKind::Dfm1Ar => 2,
            DgpKind::Dfm2 => 3,
            DgpKind::Dfm2Ar => 4,
            DgpKind::Varma => 5,
        }
    }
}

impl fmt::Display for DgpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DgpKind {
    type Err = OdpcError;

    fn from_str(s: &str) -> Result<Self> {
        DgpKind::ALL
            .iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| {
                let valid: Vec<&str> = DgpKind::ALL.iter().map(DgpKind::name).collect();
                OdpcError::invalid(format!("unknown dgp '{s}', expected one of {}", valid.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    /// Estimation sample length `T`; `T + 1` periods are generated.
    pub periods: usize,
    pub series: usize,
    pub seed: u64,
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.periods < 10 || self.series < 2 {
            return Err(OdpcError::invalid(format!(
                "{} needs T >= 10 and m >= 2, got T={}, m={}",
                self.kind, self.periods, self.series
            )));
        }
        Ok(())
    }
}

/// Test hooks fixing otherwise random parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    /// `(theta1, theta2)` of the MA factor.
    pub theta: Option<(f64, f64)>,
    /// Diagonal of the VAR matrix.
    pub lambda: Option<Vec<f64>>,
}

/// Parameters drawn for one replication.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RealizedParams {
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    /// Scale applied to the common part (factor models) or to the whole
    /// panel (VARMA).
    pub scale: f64,
    pub idiosyncratic_ar: Option<Vec<f64>>,
    pub lambda: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    /// `T + 1` periods; the last row is the forecast target.
    pub panel: TimeSeriesPanel,
    /// Common part `chi` (factor models only).
    pub common: Option<DMatrix<f64>>,
    pub idiosyncratic: Option<DMatrix<f64>>,
    /// Factor series over the `T + 1` periods (factor models only).
    pub factor: Option<Vec<f64>>,
    /// Unscaled VAR state `x_t` (VARMA only); `z = scale * M x`.
    pub latent: Option<DMatrix<f64>>,
    pub spec: DgpSpec,
    pub params: RealizedParams,
}

impl SimulatedPanel {
    /// First `T` periods (the estimation sample).
    pub fn estimation_panel(&self) -> Result<TimeSeriesPanel> {
        self.panel.slice_rows(0, self.spec.periods)
    }

    /// Held-out period `T + 1`.
    pub fn target_row(&self) -> Vec<f64> {
        self.panel.values().row(self.spec.periods).iter().copied().collect()
    }

    /// Common part at `T + 1`, when defined.
    pub fn common_target_row(&self) -> Option<Vec<f64>> {
        self.common
            .as_ref()
            .map(|c| c.row(self.spec.periods).iter().copied().collect())
    }
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Mean over columns of the per-column sample variance.
pub fn mean_empirical_variance(x: &DMatrix<f64>) -> f64 {
    x.column_iter()
        .map(|c| sample_variance(c.iter().copied()))
        .sum::<f64>()
        / x.ncols() as f64
}

/// Idiosyncratic noise: i.i.d. N(0,1) or per-series unit-variance AR(1).
fn idiosyncratic(seed: u64, n: usize, m: usize, ar: Option<&[f64]>) -> DMatrix<f64> {
    let mut rng = rng_stream(seed, STREAM_NOISE);
    let mut u = DMatrix::zeros(n, m);
    match ar {
        None => {
            for j in 0..m {
                for t in 0..n {
                    u[(t, j)] = rng.sample(StandardNormal);
                }
            }
        }
        Some(rhos) => {
            for (j, &rho) in rhos.iter().enumerate() {
                let sd = (1.0 - rho * rho).sqrt();
                let e = normals(&mut rng, n + BURN_IN);
                let mut state = 0.0;
                for (i, eps) in e.into_iter().enumerate() {
                    state = rho * state + sd * eps;
                    if i >= BURN_IN {
                        u[(i - BURN_IN, j)] = state;
                    }
                }
            }
        }
    }
    u
}

/// Builds `chi_{t,j} = c (sin(2 pi j/m) f_t + cos(2 pi j/m) f_{t-1} + (j/m) f_{t-2} [+ f_{t-3}])`
/// with `c` calibrated to unit mean empirical variance. `f` includes the
/// `lags` leading values needed for the first period.
fn common_part(f: &[f64], n: usize, m: usize, lags: usize) -> (DMatrix<f64>, f64) {
    let mut chi = DMatrix::from_fn(n, m, |t, jj| {
        let j = (jj + 1) as f64;
        let w = 2.0 * PI * j / m as f64;
        let now = t + lags;
        let mut v = w.sin() * f[now] + w.cos() * f[now - 1] + (j / m as f64) * f[now - 2];
        if lags >= 3 {
            v += f[now - 3];
        }
        v
    });
    let c = 1.0 / mean_empirical_variance(&chi).sqrt();
    chi *= c;
    (chi, c)
}

fn factor_model(spec: DgpSpec, ar_idiosyncratic: bool, overrides: &Overrides) -> Result<SimulatedPanel> {
    spec.validate()?;
    let n = spec.periods + 1;
    let m = spec.series;
    let lags = spec.kind.factor_lags();
    let mut params_rng = rng_stream(spec.seed, STREAM_PARAMS);
    let mut params = RealizedParams::default();

    let mut factor_rng = rng_stream(spec.seed, STREAM_FACTOR);
    let total = BURN_IN + lags + n;
    let v = normals(&mut factor_rng, total + 2);
    let f_full: Vec<f64> = if lags == 3 {
        let (theta1, theta2) = match overrides.theta {
            Some(t) => t,
            None => {
                let theta2 = params_rng.random_range(-0.7..0.7);
                let theta1 = params_rng.random_range(0.0..(1.0 - f64::abs(theta2)));
                (theta1, theta2)
            }
        };
        params.theta1 = Some(theta1);
        params.theta2 = Some(theta2);
        (2..total + 2)
            .map(|t| v[t] + theta1 * v[t - 1] + theta2 * v[t - 2])
            .collect()
    } else {
        let mut f = Vec::with_capacity(total);
        let (mut f1, mut f2) = (0.0, 0.0);
        for &e in &v[2..] {
            let next = 1.4 * f1 - 0.45 * f2 + e;
            f2 = f1;
            f1 = next;
            f.push(next);
        }
        f
    };
    let f = &f_full[BURN_IN..];
    let (common, c) = common_part(f, n, m, lags);
    params.scale = c;

    let rhos: Option<Vec<f64>> = ar_idiosyncratic
        .then(|| (0..m).map(|_| params_rng.random_range(-0.9..0.9)).collect());
    let u = idiosyncratic(spec.seed, n, m, rhos.as_deref());
    params.idiosyncratic_ar = rhos;

    let panel = TimeSeriesPanel::new(&common + &u, None)?;
    Ok(SimulatedPanel {
        panel,
        common: Some(common),
        idiosyncratic: Some(u),
        factor: Some(f[lags..].to_vec()),
        latent: None,
        spec,
        params,
    })
}

/// MA(2) factor with four loaded lags.
pub fn gen_dfm1(periods: usize, series: usize, seed: u64, ar_idiosyncratic: bool) -> Result<SimulatedPanel> {
    gen_dfm1_with(periods, series, seed, ar_idiosyncratic, &Overrides::default())
}

pub fn gen_dfm1_with(
    periods: usize,
    series: usize,
    seed: u64,
    ar_idiosyncratic: bool,
    overrides: &Overrides,
) -> Result<SimulatedPanel> {
    let kind = if ar_idiosyncratic { DgpKind::Dfm1Ar } else { DgpKind::Dfm1 };
    factor_model(DgpSpec { kind, periods, series, seed }, ar_idiosyncratic, overrides)
}

/// AR(2) factor `f_t = 1.4 f_{t-1} - 0.45 f_{t-2} + v_t` with three loaded lags.
pub fn gen_dfm2(periods: usize, series: usize, seed: u64, ar_idiosyncratic: bool) -> Result<SimulatedPanel> {
    let kind = if ar_idiosyncratic { DgpKind::Dfm2Ar } else { DgpKind::Dfm2 };
    factor_model(DgpSpec { kind, periods, series, seed }, ar_idiosyncratic, &Overrides::default())
}

/// `x_t = Lambda x_{t-1} + u_t`, `z_t = M x_t` with `M` lower triangular of
/// ones, rescaled to unit mean empirical variance.
pub fn gen_varma(periods: usize, series: usize, seed: u64) -> Result<SimulatedPanel> {
    gen_varma_with(periods, series, seed, &Overrides::default())
}

pub fn gen_varma_with(periods: usize, series: usize, seed: u64, overrides: &Overrides) -> Result<SimulatedPanel> {
    let spec = DgpSpec {
        kind: DgpKind::Varma,
        periods,
        series,
        seed,
    };
    spec.validate()?;
    let n = periods + 1;
    let m = series;
    let lambda: Vec<f64> = match &overrides.lambda {
        Some(l) if l.len() == m => l.clone(),
        Some(l) => return Err(OdpcError::mismatch(format!("{m} VAR coefficients"), l.len())),
        None => {
            let mut rng = rng_stream(seed, STREAM_PARAMS);
            (0..m).map(|_| rng.random_range(-0.9..0.9)).collect()
        }
    };
    let mut rng = rng_stream(seed, STREAM_FACTOR);
    let mut x = DMatrix::zeros(n, m);
    let mut state = vec![0.0; m];
    for t in 0..(BURN_IN + n) {
        for (j, s) in state.iter_mut().enumerate() {
            *s = lambda[j] * *s + rng.sample::<f64, _>(StandardNormal);
        }
        if t >= BURN_IN {
            for j in 0..m {
                x[(t - BURN_IN, j)] = state[j];
            }
        }
    }
    let mut z = DMatrix::zeros(n, m);
    for t in 0..n {
        let mut acc = 0.0;
        for j in 0..m {
            acc += x[(t, j)];
            z[(t, j)] = acc;
        }
    }
    let scale = 1.0 / mean_empirical_variance(&z).sqrt();
    z *= scale;
    Ok(SimulatedPanel {
        panel: TimeSeriesPanel::new(z, None)?,
        common: None,
        idiosyncratic: None,
        factor: None,
        latent: Some(x),
        spec,
        params: RealizedParams {
            scale,
            lambda: Some(lambda),
            ..Default::default()
        },
    })
}

/// Generates the panel described by `spec`.
pub fn generate(spec: DgpSpec) -> Result<SimulatedPanel> {
    match spec.kind {
        DgpKind::Dfm1 => gen_dfm1(spec.periods, spec.series, spec.seed, false),
        DgpKind::Dfm1Ar => gen_dfm1(spec.periods, spec.series, spec.seed, true),
        DgpKind::Dfm2 => gen_dfm2(spec.periods, spec.series, spec.seed, false),
        DgpKind::Dfm2Ar => gen_dfm2(spec.periods, spec.series, spec.seed, true),
        DgpKind::Varma => gen_varma(spec.periods, spec.series, spec.seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_names() {
        assert_eq!("dfm2ar".parse::<DgpKind>().unwrap(), DgpKind::Dfm2Ar);
        let err = "DFM3".parse::<DgpKind>().unwrap_err().to_string();
        assert!(err.contains("DFM1, DFM1AR, DFM2, DFM2AR, VARMA"));
    }

    #[test]
    fn rejects_tiny_specs() {
        assert!(gen_dfm2(5, 10, 1, false).is_err());
        assert!(gen_varma(20, 1, 1).is_err());
    }
}
