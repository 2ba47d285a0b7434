//! Alternating least squares fit of a single one-sided dynamic component.
//!
//! Given lags `(k1, k2)`, the component is `f_t = a' x_t` with
//! `x_t = (z_t', ..., z_{t-k1}')'` and the reconstruction of series `j` is
//! `alpha_j + sum_h b_{h,j} f_{t-h}`. The fit alternates the two closed-form
//! least-squares updates: `D = [alpha'; B]` given `f`, then `a` given `D`.
//! The `a` update never forms the Kronecker product `B' (x) I`: the full
//! solve works on an equivalent `(k2 + 1) n x m (k1 + 1)` system obtained from
//! the eigendecomposition of `B B'`, and the coordinate-descent sweep works on
//! Gram blocks `C_l' C_l'` cached once per fit.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{OdpcError, Result};
use crate::linalg::{lstsq, LstsqSolution};
use crate::panel::{build_f_matrix, design_from_values, series_from_values, LaggedDesign, TimeSeriesPanel};

/// How the weight vector `a` is updated inside each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AUpdate {
    /// Full least squares up to [`FitOptions::auto_threshold`] weights,
    /// coordinate descent above.
    Auto,
    FullLeastSquares,
    CoordinateDescent,
}

/// Starting value of the component series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Last `T - k1` scores of the first ordinary principal component.
    OrdinaryPc,
    /// A user-supplied series of length `T - k1`.
    Supplied(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Relative MSE decrease at or below which iteration stops; in (0, 1).
    pub tolerance: f64,
    pub max_iterations: usize,
    pub a_update: AUpdate,
    /// Largest `m (k1 + 1)` for which [`AUpdate::Auto`] uses full least squares.
    pub auto_threshold: usize,
    pub init: Init,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tolerance: 1e-4,
            max_iterations: 500,
            a_update: AUpdate::Auto,
            auto_threshold: 200,
            init: Init::OrdinaryPc,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(OdpcError::invalid(format!(
                "tolerance must lie in (0, 1), got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(OdpcError::invalid("max_iterations must be at least 1"));
        }
        Ok(())
    }

    fn uses_coordinate_descent(&self, n_weights: usize) -> bool {
        match self.a_update {
            AUpdate::Auto => n_weights > self.auto_threshold,
            AUpdate::FullLeastSquares => false,
            AUpdate::CoordinateDescent => true,
        }
    }
}

/// One fitted component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ODPCComponent {
    pub k1: usize,
    pub k2: usize,
    /// Unit-norm weights, lag-major.
    pub a: Vec<f64>,
    pub alpha: Vec<f64>,
    /// `(k2 + 1) x m` reconstruction loadings; row `h` multiplies `f_{t-h}`.
    #[serde(rename = "B", with = "crate::model::rows_serde")]
    pub b: DMatrix<f64>,
    pub mse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Component series for the periods `k1 + 1..=T` of the data it was fitted on.
    #[serde(skip)]
    pub f: Vec<f64>,
    /// Objective after every iteration, followed by the value after the final
    /// `D` refit.
    #[serde(skip)]
    pub mse_history: Vec<f64>,
    /// Whether any least-squares step fell back to the pseudo-inverse.
    #[serde(skip)]
    pub rank_deficient: bool,
}

impl ODPCComponent {
    pub fn series(&self) -> usize {
        self.alpha.len()
    }

    /// `D = [alpha'; B]`.
    pub fn d(&self) -> DMatrix<f64> {
        stack_d(&self.alpha, &self.b)
    }

    /// Reconstruction `F D` over the last `len(f) - k2` periods of the fitted data.
    pub fn reconstruction(&self) -> Result<DMatrix<f64>> {
        Ok(build_f_matrix(&self.f, self.k2)? * self.d())
    }

    /// Same weights and loadings, component series recomputed on `z`.
    pub(crate) fn with_data(&self, z: &DMatrix<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.f = series_from_values(z, &self.a, self.k1)?;
        let recon = out.reconstruction()?;
        let n = recon.nrows();
        let target = z.rows(z.nrows() - n, n);
        out.mse = (target - recon).norm_squared() / n as f64;
        Ok(out)
    }
}

fn stack_d(alpha: &[f64], b: &DMatrix<f64>) -> DMatrix<f64> {
    let m = alpha.len();
    DMatrix::from_fn(b.nrows() + 1, m, |r, j| if r == 0 { alpha[j] } else { b[(r - 1, j)] })
}

fn split_d(d: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let alpha = d.row(0).iter().copied().collect();
    let b = d.rows(1, d.nrows() - 1).into_owned();
    (alpha, b)
}

fn check_shapes(design: &LaggedDesign, a: &[f64], alpha: &[f64], b: &DMatrix<f64>) -> Result<()> {
    let m = design.series();
    if a.len() != design.c.ncols() {
        return Err(OdpcError::mismatch(
            format!("a of length {}", design.c.ncols()),
            format!("length {}", a.len()),
        ));
    }
    if alpha.len() != m {
        return Err(OdpcError::mismatch(format!("alpha of length {m}"), alpha.len()));
    }
    if b.shape() != (design.k2 + 1, m) {
        return Err(OdpcError::mismatch(
            format!("B of shape {}x{m}", design.k2 + 1),
            format!("{}x{}", b.nrows(), b.ncols()),
        ));
    }
    Ok(())
}

fn mse_unchecked(design: &LaggedDesign, a: &[f64], alpha: &[f64], b: &DMatrix<f64>) -> f64 {
    let n = design.effective_rows();
    let m = design.series();
    let g = &design.c * DVector::from_column_slice(a);
    let mut total = 0.0;
    for j in 0..m {
        let target = design.target.column(j);
        for r in 0..n {
            let mut fit = alpha[j];
            for l in 0..=design.k2 {
                fit += b[(l, j)] * g[l * n + r];
            }
            let e = target[r] - fit;
            total += e * e;
        }
    }
    total / n as f64
}

/// In-sample reconstruction MSE, summed over series and averaged over the
/// `T - (k1 + k2)` reconstructed periods. `a` need not have unit norm.
pub fn reconstruction_mse(
    design: &LaggedDesign,
    a: &[f64],
    alpha: &[f64],
    b: &DMatrix<f64>,
) -> Result<f64> {
    check_shapes(design, a, alpha, b)?;
    Ok(mse_unchecked(design, a, alpha, b))
}

/// `D = F^+ Z_target`. The flag reports whether `F` was rank deficient.
pub fn update_d(f_matrix: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    if f_matrix.nrows() != target.nrows() {
        return Err(OdpcError::mismatch(
            format!("{} target rows", f_matrix.nrows()),
            target.nrows(),
        ));
    }
    let LstsqSolution { x, rank_deficient } = lstsq(f_matrix, target);
    Ok((x, rank_deficient))
}

/// Scales to unit norm and flips sign so the largest-magnitude entry is
/// positive (first index wins ties).
pub(crate) fn normalize_with_sign(a: &[f64]) -> Result<Vec<f64>> {
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(OdpcError::DegeneratePanel(
            "least-squares weights vanished".to_string(),
        ));
    }
    let mut pivot = 0;
    for (i, x) in a.iter().enumerate() {
        if x.abs() > a[pivot].abs() {
            pivot = i;
        }
    }
    let s = if a[pivot] < 0.0 { -1.0 / norm } else { 1.0 / norm };
    Ok(a.iter().map(|x| x * s).collect())
}

fn check_loadings(b: &DMatrix<f64>) -> Result<()> {
    if b.iter().all(|&x| x == 0.0) {
        return Err(OdpcError::DegenerateLoadings);
    }
    Ok(())
}

/// `W_l = (Z_target - 1 alpha') b_l` for every loading row `b_l`.
fn weighted_targets(design: &LaggedDesign, alpha: &[f64], b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = design.effective_rows();
    let mut centered = design.target.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-alpha[j]);
    }
    let mut w = DMatrix::zeros(n, design.k2 + 1);
    for l in 0..=design.k2 {
        let bl = b.row(l).transpose();
        w.set_column(l, &(&centered * bl));
    }
    w
}

/// Unnormalized least-squares `a` for fixed `D`, plus the rank flag.
///
/// With `offset`, a constant shift `c` of the component (`f_t + c`) is
/// estimated jointly and returned; it is equivalent to moving `alpha` along
/// `sum_h b_h`, which lets one step absorb the intercept/weight coupling that
/// otherwise makes the alternation zig-zag.
fn solve_a_raw(design: &LaggedDesign, alpha: &[f64], b: &DMatrix<f64>, offset: bool) -> Result<(Vec<f64>, f64, bool)> {
    check_loadings(b)?;
    let n = design.effective_rows();
    let p = design.c.ncols();
    let cols = p + usize::from(offset);
    let s = b * b.transpose();
    let eig = SymmetricEigen::new(s);
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > lmax * (design.k2 + 1) as f64 * f64::EPSILON)
        .collect();
    let w = weighted_targets(design, alpha, b);
    let mut x = DMatrix::zeros(n * keep.len(), cols);
    let mut y = DMatrix::zeros(n * keep.len(), 1);
    for (row_block, &i) in keep.iter().enumerate() {
        let lambda = eig.eigenvalues[i];
        let root = lambda.sqrt();
        let u = eig.eigenvectors.column(i);
        let mut xb = x.view_mut((row_block * n, 0), (n, p));
        for l in 0..=design.k2 {
            if u[l] != 0.0 {
                xb += design.block(l) * (root * u[l]);
            }
        }
        if offset {
            let shift: f64 = u.iter().map(|ul| root * ul).sum();
            x.view_mut((row_block * n, p), (n, 1)).fill(shift);
        }
        let mut yb = y.rows_mut(row_block * n, n);
        for l in 0..=design.k2 {
            yb += w.column(l) * (u[l] / root);
        }
    }
    let sol = lstsq(&x, &y);
    let a = sol.x.rows(0, p).iter().copied().collect();
    let c = if offset { sol.x[(p, 0)] } else { 0.0 };
    Ok((a, c, sol.rank_deficient))
}

/// Least-squares weights for fixed `D`, rescaled to unit norm with the
/// largest-entry-positive sign convention.
pub fn update_a(d: &DMatrix<f64>, design: &LaggedDesign) -> Result<Vec<f64>> {
    check_d(d, design)?;
    let (alpha, b) = split_d(d);
    let (raw, _, _) = solve_a_raw(design, &alpha, &b, false)?;
    normalize_with_sign(&raw)
}

fn check_d(d: &DMatrix<f64>, design: &LaggedDesign) -> Result<()> {
    if d.shape() != (design.k2 + 2, design.series()) {
        return Err(OdpcError::mismatch(
            format!("D of shape {}x{}", design.k2 + 2, design.series()),
            format!("{}x{}", d.nrows(), d.ncols()),
        ));
    }
    Ok(())
}

/// Cached `C_l' C_l'` blocks for the coordinate-descent update.
pub(crate) struct GramBlocks {
    k2: usize,
    n: usize,
    blocks: Vec<DMatrix<f64>>,
    /// Column sums `C_l' 1`.
    sums: Vec<DVector<f64>>,
}

impl GramBlocks {
    pub(crate) fn new(design: &LaggedDesign) -> Self {
        let k2 = design.k2;
        let mut blocks = Vec::with_capacity((k2 + 1) * (k2 + 2) / 2);
        for l in 0..=k2 {
            for l2 in l..=k2 {
                blocks.push(design.block(l).transpose() * design.block(l2));
            }
        }
        let sums = (0..=k2).map(|l| design.block(l).row_sum().transpose()).collect();
        GramBlocks {
            k2,
            n: design.effective_rows(),
            blocks,
            sums,
        }
    }

    /// `G = sum_{l,l'} (B B')_{l l'} C_l' C_l'`.
    fn gram(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let s = b * b.transpose();
        let p = self.blocks[0].nrows();
        let mut g = DMatrix::zeros(p, p);
        let mut blocks = self.blocks.iter();
        for l in 0..=self.k2 {
            for l2 in l..=self.k2 {
                let blk = blocks.next().expect("one block per pair");
                if l == l2 {
                    g += blk * s[(l, l)];
                } else {
                    g += blk * s[(l, l2)];
                    g += blk.transpose() * s[(l, l2)];
                }
            }
        }
        g
    }
}

/// `sum_l C_l' W_l`, the right-hand side of the normal equations in `a`.
fn normal_rhs(design: &LaggedDesign, alpha: &[f64], b: &DMatrix<f64>) -> DVector<f64> {
    let w = weighted_targets(design, alpha, b);
    let mut rhs = DVector::zeros(design.c.ncols());
    for l in 0..=design.k2 {
        rhs += design.block(l).transpose() * w.column(l);
    }
    rhs
}

/// One coordinate-descent sweep over all weights of the objective
/// `||vec(Z_target - 1 alpha') - (B' (x) I) C a||^2`, starting at `a`, and,
/// with `offset`, over a final shift coordinate started at zero (see
/// [`solve_a_raw`]). Returns the unnormalized weights and the shift.
pub(crate) fn cd_sweep(
    grams: &GramBlocks,
    design: &LaggedDesign,
    alpha: &[f64],
    b: &DMatrix<f64>,
    a: &[f64],
    offset: bool,
) -> Result<(Vec<f64>, f64)> {
    check_loadings(b)?;
    let p = a.len();
    let g_aa = grams.gram(b);
    let rhs_a = normal_rhs(design, alpha, b);
    let (g, rhs) = if offset {
        let s = b * b.transpose();
        let mut g = DMatrix::zeros(p + 1, p + 1);
        g.view_mut((0, 0), (p, p)).copy_from(&g_aa);
        let mut g_ac = DVector::zeros(p);
        for l in 0..=grams.k2 {
            g_ac.axpy(s.row(l).sum(), &grams.sums[l], 1.0);
        }
        g.view_mut((0, p), (p, 1)).copy_from(&g_ac);
        g.view_mut((p, 0), (1, p)).copy_from(&g_ac.transpose());
        g[(p, p)] = grams.n as f64 * s.sum();
        let w = weighted_targets(design, alpha, b);
        let mut rhs = DVector::zeros(p + 1);
        rhs.rows_mut(0, p).copy_from(&rhs_a);
        rhs[p] = w.sum();
        (g, rhs)
    } else {
        (g_aa, rhs_a)
    };
    let mut x = DVector::zeros(g.nrows());
    x.rows_mut(0, p).copy_from(&DVector::from_column_slice(a));
    let mut gx = &g * &x;
    for k in 0..x.len() {
        let gkk = g[(k, k)];
        if gkk <= 0.0 {
            continue;
        }
        let delta = (rhs[k] - gx[k]) / gkk;
        if delta != 0.0 {
            x[k] += delta;
            gx.axpy(delta, &g.column(k), 1.0);
        }
    }
    let c = if offset { x[p] } else { 0.0 };
    Ok((x.rows(0, p).iter().copied().collect(), c))
}

/// One full coordinate-descent sweep over the weights starting from
/// `a_current`, then rescaled to unit norm with the sign convention.
pub fn coordinate_descent_a(
    d: &DMatrix<f64>,
    design: &LaggedDesign,
    a_current: &[f64],
) -> Result<Vec<f64>> {
    check_d(d, design)?;
    if a_current.len() != design.c.ncols() {
        return Err(OdpcError::mismatch(design.c.ncols(), a_current.len()));
    }
    let (alpha, b) = split_d(d);
    let grams = GramBlocks::new(design);
    normalize_with_sign(&cd_sweep(&grams, design, &alpha, &b, a_current, false)?.0)
}

/// First ordinary principal component of the centered data: returns the
/// scores (length `T`) and the loading vector (length `m`).
fn first_pc(z: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let (t, m) = z.shape();
    let mut centered = z.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let scale = centered.amax();
    if !(scale > 0.0) {
        return Err(OdpcError::DegeneratePanel(
            "panel is constant: there is no deterministic linear relation to estimate".into(),
        ));
    }
    let svd = SVD::new(centered.clone(), true, true);
    let (idx, smax) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc });
    if !(smax > (t.max(m) as f64) * f64::EPSILON * scale) {
        return Err(OdpcError::DegeneratePanel("zero sample covariance".into()));
    }
    let u = svd.u.as_ref().expect("u requested").column(idx);
    let v = svd.v_t.as_ref().expect("v requested").row(idx);
    let mut scores: Vec<f64> = u.iter().map(|x| x * smax).collect();
    let mut loading: Vec<f64> = v.iter().copied().collect();
    let corr: f64 = scores.iter().zip(centered.column(0).iter()).map(|(s, x)| s * x).sum();
    let flip = if corr.abs() > f64::EPSILON * smax * centered.column(0).norm() {
        corr < 0.0
    } else {
        scores.first().copied().unwrap_or(0.0) < 0.0
    };
    if flip {
        scores.iter_mut().for_each(|x| *x = -*x);
        loading.iter_mut().for_each(|x| *x = -*x);
    }
    Ok((scores, loading))
}

/// Last `T - k1` scores of the first ordinary principal component of the
/// column-centered panel, signed to correlate positively with series 1.
pub fn initialize_component(panel: &TimeSeriesPanel, k1: usize) -> Result<Vec<f64>> {
    init_from_values(panel.values(), k1).map(|(f, _)| f)
}

fn init_from_values(z: &DMatrix<f64>, k1: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if z.nrows() <= k1 {
        return Err(OdpcError::InsufficientLength {
            required: k1 + 1,
            actual: z.nrows(),
        });
    }
    let (scores, loading) = first_pc(z)?;
    Ok((scores[k1..].to_vec(), loading))
}

/// Weights whose component best matches `f0` in least squares (with intercept).
fn weights_for_series(z: &DMatrix<f64>, f0: &[f64], k1: usize) -> Vec<f64> {
    let (t, m) = z.shape();
    let n = t - k1;
    let p = m * (k1 + 1);
    let x = DMatrix::from_fn(n, p + 1, |r, c| {
        if c == p {
            1.0
        } else {
            let (h, j) = (c / m, c % m);
            z[(r + k1 - h, j)]
        }
    });
    let y = DMatrix::from_column_slice(n, 1, f0);
    let sol = lstsq(&x, &y);
    sol.x.rows(0, p).iter().copied().collect()
}

/// Fits one component by alternating least squares.
pub fn fit_component(
    panel: &TimeSeriesPanel,
    k1: usize,
    k2: usize,
    options: &FitOptions,
) -> Result<ODPCComponent> {
    fit_values(panel.values(), k1, k2, options)
}

pub(crate) fn fit_values(
    z: &DMatrix<f64>,
    k1: usize,
    k2: usize,
    options: &FitOptions,
) -> Result<ODPCComponent> {
    options.validate()?;
    let design = design_from_values(z, k1, k2)?;
    let m = z.ncols();
    let p = m * (k1 + 1);
    let use_cd = options.uses_coordinate_descent(p);

    let (mut f, mut a_cur) = match &options.init {
        Init::OrdinaryPc => {
            let (f0, loading) = init_from_values(z, k1)?;
            let mut a0 = vec![0.0; p];
            a0[..m].copy_from_slice(&loading);
            (f0, a0)
        }
        Init::Supplied(f0) => {
            if f0.len() != z.nrows() - k1 {
                return Err(OdpcError::mismatch(
                    format!("initial series of length {}", z.nrows() - k1),
                    f0.len(),
                ));
            }
            if f0.iter().any(|x| !x.is_finite()) {
                return Err(OdpcError::invalid("initial series has non-finite entries"));
            }
            (f0.clone(), normalize_with_sign(&weights_for_series(z, f0, k1))?)
        }
    };
    let grams = use_cd.then(|| GramBlocks::new(&design));

    let mut history: Vec<f64> = Vec::new();
    let mut rank_deficient = false;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let f_matrix = build_f_matrix(&f, k2)?;
        let (d, rd) = update_d(&f_matrix, &design.target)?;
        rank_deficient |= rd;
        let (alpha, b) = split_d(&d);
        if b.iter().all(|&x| x == 0.0) {
            // The component carries no signal (e.g. a residual panel that is
            // already fitted exactly); the objective no longer depends on `a`.
            history.push(mse_unchecked(&design, &a_cur, &alpha, &b));
            converged = true;
            break;
        }
        let (a_raw, shift) = match &grams {
            Some(g) => cd_sweep(g, &design, &alpha, &b, &a_cur, true)?,
            None => {
                let (a, c, rd) = solve_a_raw(&design, &alpha, &b, true)?;
                rank_deficient |= rd;
                (a, c)
            }
        };
        let shifted: Vec<f64> = (0..m).map(|j| alpha[j] + shift * b.column(j).sum()).collect();
        let mse = mse_unchecked(&design, &a_raw, &shifted, &b);
        let prev = history.last().copied();
        history.push(mse);
        if prev.is_some_and(|p| mse > p) {
            // Rounding-level increase at the fixed point: keep the previous weights.
            converged = true;
            break;
        }
        a_cur = normalize_with_sign(&a_raw)?;
        f = series_from_values(z, &a_cur, k1)?;
        let stop = match prev {
            Some(p) => p <= 0.0 || (p - mse) / p <= options.tolerance,
            None => mse == 0.0,
        };
        if stop {
            converged = true;
            break;
        }
    }
    let f = series_from_values(z, &a_cur, k1)?;
    let (d, rd) = update_d(&build_f_matrix(&f, k2)?, &design.target)?;
    rank_deficient |= rd;
    let (alpha, b) = split_d(&d);
    let mse = mse_unchecked(&design, &a_cur, &alpha, &b);
    history.push(mse);
    Ok(ODPCComponent {
        k1,
        k2,
        a: a_cur,
        alpha,
        b,
        mse,
        iterations,
        converged,
        f,
        mse_history: history,
        rank_deficient,
    })
}
