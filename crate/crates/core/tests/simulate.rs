mod common;

use common::*;
use nalgebra::DMatrix;
use odpc::forecast::fit_component_forecaster;
use odpc::simulate::dgp::{gen_dfm1_with, gen_varma_with, mean_empirical_variance};
use odpc::simulate::{
    derive_seed, gen_dfm1, gen_dfm2, gen_varma, generate, run_monte_carlo, sw_baseline_forecast, DgpKind, DgpSpec,
    MethodSpec, MonteCarloConfig, Overrides, StaticFactorModel,
};
use odpc::{FitOptions, TimeSeriesPanel};

fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let cov: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

#[test]
fn common_part_has_unit_mean_variance() {
    for seed in 0..5 {
        for sim in [
            gen_dfm1(60, 12, seed, false).unwrap(),
            gen_dfm1(60, 12, seed, true).unwrap(),
            gen_dfm2(60, 12, seed, false).unwrap(),
            gen_dfm2(60, 12, seed, true).unwrap(),
        ] {
            let chi = sim.common.as_ref().unwrap();
            assert_eq!(chi.nrows(), 61);
            assert!((mean_empirical_variance(chi) - 1.0).abs() < 1e-10);
        }
        let varma = gen_varma(60, 12, seed).unwrap();
        assert!(varma.common.is_none());
        assert!((mean_empirical_variance(varma.panel.values()) - 1.0).abs() < 1e-10);
    }
}

#[test]
fn mean_empirical_variance_uses_sample_variance() {
    let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 0.0, 3.0, 6.0]);
    // Column variances 1 and 12.
    assert!((mean_empirical_variance(&x) - 6.5).abs() < 1e-12);
}

#[test]
fn panel_is_common_plus_idiosyncratic() {
    for kind in [DgpKind::Dfm1, DgpKind::Dfm1Ar, DgpKind::Dfm2, DgpKind::Dfm2Ar] {
        let sim = generate(DgpSpec { kind, periods: 40, series: 7, seed: 3 }).unwrap();
        let parts = sim.common.as_ref().unwrap() + sim.idiosyncratic.as_ref().unwrap();
        assert!((sim.panel.values() - parts).amax() <= 1e-14, "{kind}");
    }
}

#[test]
fn generators_are_deterministic() {
    for kind in DgpKind::ALL {
        let spec = DgpSpec { kind, periods: 30, series: 6, seed: 42 };
        let a = generate(spec).unwrap();
        let b = generate(spec).unwrap();
        assert_eq!(a.panel.values(), b.panel.values(), "{kind}");
        assert_eq!(a.params, b.params);
        let c = generate(DgpSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a.panel.values(), c.panel.values());
    }
}

#[test]
fn tiny_specs_are_rejected() {
    assert!(gen_dfm2(9, 5, 0, false).is_err());
    assert!(gen_varma(20, 1, 0).is_err());
}

#[test]
fn ma_coefficients_stay_in_range() {
    for seed in 0..300 {
        let p = gen_dfm1(10, 2, seed, false).unwrap().params;
        let (t1, t2) = (p.theta1.unwrap(), p.theta2.unwrap());
        assert!(t2.abs() < 0.7);
        assert!(t1 > 0.0 && t1 < 1.0 - t2.abs(), "theta1 {t1} theta2 {t2}");
    }
}

#[test]
fn idiosyncratic_ar_coefficients_stay_in_range() {
    for seed in 0..20 {
        let p = gen_dfm2(10, 30, seed, true).unwrap().params;
        assert!(p.idiosyncratic_ar.unwrap().iter().all(|c| c.abs() < 0.9));
    }
}

#[test]
fn white_noise_factor_has_no_autocorrelation() {
    let t = 4000;
    let overrides = Overrides { theta: Some((0.0, 0.0)), ..Overrides::default() };
    let sim = gen_dfm1_with(t, 3, 8, false, &overrides).unwrap();
    let rho = lag1_autocorrelation(sim.factor.as_ref().unwrap());
    assert!(rho.abs() < 3.0 / (t as f64).sqrt(), "rho {rho}");
}

#[test]
fn ar2_factor_autocorrelation_matches_yule_walker() {
    let sim = gen_dfm2(20_000, 2, 5, false).unwrap();
    let rho = lag1_autocorrelation(sim.factor.as_ref().unwrap());
    assert!((rho - 1.4 / 1.45).abs() < 0.01, "rho {rho}");
}

#[test]
fn varma_without_dynamics_is_serially_uncorrelated() {
    let (t, m) = (3000, 5);
    let overrides = Overrides { lambda: Some(vec![0.0; m]), ..Overrides::default() };
    let sim = gen_varma_with(t, m, 2, &overrides).unwrap();
    for j in 0..m {
        let col: Vec<f64> = sim.panel.values().column(j).iter().copied().collect();
        let rho = lag1_autocorrelation(&col);
        assert!(rho.abs() < 3.0 / (t as f64).sqrt(), "series {j}: rho {rho}");
    }
}

#[test]
fn varma_cumulates_latent_state() {
    let sim = gen_varma(50, 2, 1).unwrap();
    let x = sim.latent.as_ref().unwrap();
    let s = sim.params.scale;
    for t in 0..51 {
        assert!((sim.panel.values()[(t, 0)] - s * x[(t, 0)]).abs() < 1e-12);
        assert!((sim.panel.values()[(t, 1)] - s * (x[(t, 0)] + x[(t, 1)])).abs() < 1e-12);
    }
    assert!(sim.params.lambda.unwrap().iter().all(|l| l.abs() < 0.9));
}

#[test]
fn held_out_rows() {
    let sim = gen_dfm2(30, 4, 0, false).unwrap();
    assert_eq!(sim.estimation_panel().unwrap().periods(), 30);
    assert_eq!(sim.target_row(), sim.panel.values().row(30).iter().copied().collect::<Vec<_>>());
    assert_eq!(sim.common_target_row().unwrap().len(), 4);
}

#[test]
fn static_factor_forecast_tracks_planted_factor() {
    let (t, m, phi) = (2000, 10, 0.8);
    let mut r = rng(12);
    let lambda: Vec<f64> = (0..m).map(|_| normal(&mut r)).collect();
    let mut g = vec![0.0];
    for _ in 0..t + 100 {
        let last = *g.last().unwrap();
        g.push(phi * last + normal(&mut r));
    }
    let g = &g[g.len() - t..];
    let panel = TimeSeriesPanel::new(DMatrix::from_fn(t, m, |i, j| lambda[j] * g[i]), None).unwrap();
    let fc = sw_baseline_forecast(&panel, 1, 1).unwrap();
    // Best one-step forecast of the common part.
    let target: Vec<f64> = lambda.iter().map(|l| l * phi * g[t - 1]).collect();
    let err = (0..m).map(|j| (fc[(0, j)] - target[j]).powi(2)).sum::<f64>() / m as f64;
    assert!(err <= 0.05, "error {err}");
}

#[test]
fn saturated_static_factors() {
    let mut r = rng(9);
    let z = normal_matrix(&mut r, 6, 6);
    let panel = TimeSeriesPanel::new(z.clone(), None).unwrap();
    let sf = StaticFactorModel::fit(&panel, 6).unwrap();
    let mut recon = &sf.factors * sf.loadings.transpose();
    for (j, mean) in sf.means.iter().enumerate() {
        recon.column_mut(j).add_scalar_mut(*mean);
    }
    assert!((recon - &z).amax() < 1e-10);
    let (fc, models) = sf.forecast(2, 1).unwrap();
    let mut expected = DMatrix::zeros(2, 6);
    for k in 0..6 {
        let f: Vec<f64> = sf.factors.column(k).iter().copied().collect();
        let ar = fit_component_forecaster(&f, 1).unwrap();
        assert_eq!(ar, models[k]);
        let path = ar.forecast(&f, 2).unwrap();
        for s in 0..2 {
            for j in 0..6 {
                expected[(s, j)] += sf.loadings[(j, k)] * path[s];
            }
        }
    }
    for s in 0..2 {
        for j in 0..6 {
            expected[(s, j)] += sf.means[j];
        }
    }
    assert!((fc - expected).amax() < 1e-12);
    assert!(StaticFactorModel::fit(&panel, 7).is_err());
    assert!(StaticFactorModel::fit(&panel, 0).is_err());
}

#[test]
fn static_factor_forecast_is_deterministic() {
    let sim = gen_dfm2(80, 20, 4, false).unwrap();
    let panel = sim.estimation_panel().unwrap();
    assert_eq!(sw_baseline_forecast(&panel, 3, 2).unwrap(), sw_baseline_forecast(&panel, 3, 2).unwrap());
}

fn small_config(replications: usize, threads: usize) -> MonteCarloConfig {
    MonteCarloConfig {
        dgps: vec![DgpKind::Dfm2, DgpKind::Varma],
        grid: vec![(40, 8)],
        replications,
        base_seed: 7,
        threads,
        method_groups: Some(vec![vec![
            MethodSpec::Odpc { components: 1, k1: 1, k2: 1 },
            MethodSpec::Sw { factors: 2 },
        ]]),
        fit: FitOptions::default(),
        max_order: 4,
    }
}

#[test]
fn single_replication_report() {
    let report = run_monte_carlo(&small_config(1, 1)).unwrap();
    assert_eq!(report.cells.len(), 2);
    for cell in &report.cells {
        assert_eq!(cell.methods.len(), 2);
        for m in &cell.methods {
            assert_eq!(m.pmse.len(), 1);
            assert_eq!(m.mean_pmse, m.pmse[0]);
        }
        assert!(cell.comparisons[0].z_statistic.is_none());
    }
}

#[test]
fn mean_pmse_is_mean_of_replications() {
    let report = run_monte_carlo(&small_config(6, 1)).unwrap();
    for cell in &report.cells {
        for m in &cell.methods {
            let mean = m.pmse.iter().sum::<f64>() / m.pmse.len() as f64;
            assert!((m.mean_pmse - mean).abs() < 1e-12);
            assert!(m.pmse.iter().all(|p| p.is_finite() && *p >= 0.0));
        }
        let cmp = &cell.comparisons[0];
        let best = cell.method(&cmp.best).unwrap().mean_pmse;
        assert!(cell.methods.iter().all(|m| m.mean_pmse >= best));
        assert_eq!(cmp.significant, cmp.z_statistic.unwrap().abs() > odpc::simulate::monte_carlo::CRITICAL_Z);
    }
    assert!(report.cells[0].methods[0].mean_common_pmse.is_some());
    assert!(report.cells[1].methods[0].mean_common_pmse.is_none());
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let one = run_monte_carlo(&small_config(4, 1)).unwrap();
    let two = run_monte_carlo(&small_config(4, 2)).unwrap();
    assert_eq!(one.to_csv(), two.to_csv());
    assert_eq!(one.to_table(), two.to_table());
    assert_eq!(one.cells[0].methods[0].pmse, two.cells[0].methods[0].pmse);
    let again = run_monte_carlo(&small_config(4, 1)).unwrap();
    assert_eq!(one.to_csv(), again.to_csv());
}

#[test]
fn replication_seeds_are_distinct() {
    let mut seeds: Vec<u64> = (0..100).map(|r| derive_seed(1, DgpKind::Dfm2, 100, 100, r)).collect();
    seeds.push(derive_seed(1, DgpKind::Dfm1, 100, 100, 0));
    seeds.push(derive_seed(1, DgpKind::Dfm2, 100, 50, 0));
    seeds.push(derive_seed(2, DgpKind::Dfm2, 100, 100, 0));
    let n = seeds.len();
    seeds.sort_unstable();
    seeds.dedup();
    assert_eq!(seeds.len(), n);
}

#[test]
fn infeasible_configuration_is_rejected() {
    let mut config = small_config(1, 1);
    config.method_groups = Some(vec![vec![MethodSpec::Sw { factors: 9 }]]);
    assert!(run_monte_carlo(&config).is_err());
    config.method_groups = None;
    config.replications = 0;
    assert!(run_monte_carlo(&config).is_err());
}
