#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use odpc::TimeSeriesPanel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| normal(rng))
}

/// Panel with an AR(1) common driver plus noise, so lags matter.
pub fn random_panel(seed: u64, t: usize, m: usize) -> TimeSeriesPanel {
    let mut r = rng(seed);
    let loadings: Vec<(f64, f64)> = (0..m).map(|_| (normal(&mut r), normal(&mut r))).collect();
    let mut g = 0.0;
    let mut rows = Vec::with_capacity(t);
    for _ in 0..t {
        let prev = g;
        g = 0.7 * g + normal(&mut r);
        rows.push(
            loadings
                .iter()
                .map(|(l0, l1)| l0 * g + l1 * prev + 0.5 * normal(&mut r) + 1.0)
                .collect::<Vec<_>>(),
        );
    }
    TimeSeriesPanel::from_rows(&rows, None).unwrap()
}

/// Noiseless panel `z_t = alpha + b0 f_t + b1 f_{t-1}` with `m = 3` and a
/// weight vector `a0` satisfying `a0'b0 = 1`, `a0'b1 = 0`, `a0'alpha = 0`, so
/// that `f_t = a0' z_t` exactly. Returns the panel, `[a0; 0]`, alpha and B.
pub struct Planted {
    pub panel: TimeSeriesPanel,
    /// `a0` alone: the unique weights for `k1 = 0`.
    pub a0: Vec<f64>,
    /// `[a0; 0]` for `k1 = 1`.
    pub a: Vec<f64>,
    pub alpha: Vec<f64>,
    pub b: DMatrix<f64>,
    pub f: Vec<f64>,
}

pub fn planted_component(seed: u64, t: usize) -> Planted {
    let mut r = rng(seed);
    let m = 3;
    let alpha = DVector::from_fn(m, |_, _| normal(&mut r));
    let b0 = DVector::from_fn(m, |_, _| normal(&mut r));
    let b1 = DVector::from_fn(m, |_, _| normal(&mut r));
    let system = DMatrix::from_rows(&[b0.transpose(), b1.transpose(), alpha.transpose()]);
    let a0 = system.lu().solve(&DVector::from_vec(vec![1.0, 0.0, 0.0])).unwrap();
    let f: Vec<f64> = (0..t).map(|_| normal(&mut r)).collect();
    let z = DMatrix::from_fn(t, m, |i, j| {
        let lag = if i > 0 { f[i - 1] } else { 0.0 };
        alpha[j] + b0[j] * f[i] + b1[j] * lag
    });
    let a0: Vec<f64> = a0.iter().copied().collect();
    let mut a = a0.clone();
    a.extend([0.0; 3]);
    let b = DMatrix::from_rows(&[b0.transpose(), b1.transpose()]);
    Planted {
        panel: TimeSeriesPanel::new(z, None).unwrap(),
        a0,
        a,
        alpha: alpha.iter().copied().collect(),
        b,
        f,
    }
}

/// Unit norm, largest-magnitude entry positive (lowest index on ties).
pub fn normalize_sign(a: &[f64]) -> Vec<f64> {
    let n = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut best = 0;
    for i in 1..a.len() {
        if a[i].abs() > a[best].abs() {
            best = i;
        }
    }
    let s = if a[best] < 0.0 { -1.0 } else { 1.0 };
    a.iter().map(|x| s * x / n).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Independent least squares through the normal equations.
pub fn normal_equations(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let xtx = x.transpose() * x;
    xtx.cholesky().expect("full rank").solve(&(x.transpose() * y))
}

/// `f_t = sum_h a_h' z_{t-h}` for `t = k1..T`, computed directly.
pub fn component_by_hand(z: &DMatrix<f64>, a: &[f64], k1: usize) -> Vec<f64> {
    let m = z.ncols();
    (k1..z.nrows())
        .map(|t| {
            (0..=k1)
                .map(|h| (0..m).map(|j| a[h * m + j] * z[(t - h, j)]).sum::<f64>())
                .sum()
        })
        .collect()
}

/// Profiled in-sample MSE of weights `a`: `D` solved by normal equations on
/// `[1, f_t, ..., f_{t-k2}]`, residual sum of squares over the last
/// `T - k1 - k2` periods divided by that count.
pub fn profiled_mse(z: &DMatrix<f64>, a: &[f64], k1: usize, k2: usize) -> f64 {
    let f = component_by_hand(z, a, k1);
    let n = z.nrows() - k1 - k2;
    let x = DMatrix::from_fn(n, k2 + 2, |r, c| if c == 0 { 1.0 } else { f[r + k2 - (c - 1)] });
    let y = z.rows(k1 + k2, n).into_owned();
    let xtx = x.transpose() * &x;
    let d = match xtx.clone().cholesky() {
        Some(ch) => ch.solve(&(x.transpose() * &y)),
        None => return f64::INFINITY,
    };
    (y - x * d).norm_squared() / n as f64
}

/// Residual sum of squares of the best rank-1 approximation of the centered
/// panel, divided by `T`.
pub fn rank1_svd_mse(z: &DMatrix<f64>) -> f64 {
    let mut c = z.clone();
    for mut col in c.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let total = c.norm_squared();
    let s = c.svd(false, false).singular_values;
    let smax = s.iter().copied().fold(0.0, f64::max);
    (total - smax * smax) / z.nrows() as f64
}

/// Dense random-restart search over the unit sphere with `D` profiled out.
pub fn global_search(z: &DMatrix<f64>, k1: usize, k2: usize, seed: u64) -> f64 {
    let p = z.ncols() * (k1 + 1);
    let obj = |a: &[f64]| {
        let n = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n < 1e-12 {
            return f64::INFINITY;
        }
        profiled_mse(z, a, k1, k2)
    };
    let mut r = rng(seed);
    let mut best = f64::INFINITY;
    for _ in 0..200 {
        let start: Vec<f64> = (0..p).map(|_| normal(&mut r)).collect();
        best = best.min(nelder_mead(&obj, start));
    }
    best
}

pub fn nelder_mead(obj: &dyn Fn(&[f64]) -> f64, start: Vec<f64>) -> f64 {
    let p = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.clone()];
    for i in 0..p {
        let mut v = start.clone();
        v[i] += 0.5;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| obj(v)).collect();
    for _ in 0..4000 {
        let mut order: Vec<usize> = (0..=p).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        if (values[p] - values[0]).abs() <= 1e-14 * values[0].abs().max(1e-300) {
            break;
        }
        let centroid: Vec<f64> = (0..p).map(|k| simplex[..p].iter().map(|v| v[k]).sum::<f64>() / p as f64).collect();
        let towards = |t: f64| -> Vec<f64> { (0..p).map(|k| centroid[k] + t * (simplex[p][k] - centroid[k])).collect() };
        let xr = towards(-1.0);
        let fr = obj(&xr);
        if fr < values[0] {
            let xe = towards(-2.0);
            let fe = obj(&xe);
            if fe < fr {
                simplex[p] = xe;
                values[p] = fe;
            } else {
                simplex[p] = xr;
                values[p] = fr;
            }
        } else if fr < values[p - 1] {
            simplex[p] = xr;
            values[p] = fr;
        } else {
            let xc = towards(0.5);
            let fc = obj(&xc);
            if fc < values[p] {
                simplex[p] = xc;
                values[p] = fc;
            } else {
                for i in 1..=p {
                    simplex[i] = (0..p).map(|k| simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k])).collect();
                    values[i] = obj(&simplex[i]);
                }
            }
        }
    }
    values.iter().copied().fold(f64::INFINITY, f64::min)
}


/// `z_t = sum_{h<=2} b_h g_{t-h} + sigma e_t` with an AR(1) driver `g`: a
/// single component with two lags.
pub fn planted_lag_panel(seed: u64, t: usize, m: usize, sigma: f64) -> TimeSeriesPanel {
    planted_lag_panel_ar(seed, t, m, sigma, 0.5)
}

pub fn planted_lag_panel_ar(seed: u64, t: usize, m: usize, sigma: f64, phi: f64) -> TimeSeriesPanel {
    let mut r = rng(seed);
    let b = normal_matrix(&mut r, 3, m);
    let mut g = vec![0.0; t + 52];
    for i in 1..g.len() {
        g[i] = phi * g[i - 1] + normal(&mut r);
    }
    let g = &g[50..];
    let z = DMatrix::from_fn(t, m, |i, j| {
        let common: f64 = (0..3).map(|h| b[(h, j)] * g[i + 2 - h]).sum();
        common + sigma * normal(&mut r)
    });
    TimeSeriesPanel::new(z, None).unwrap()
}
