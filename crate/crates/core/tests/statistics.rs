mod common;

use common::*;
use ris_sim::analytics;
use ris_sim::channel::jakes_rho;
use ris_sim::config::NlosVariance;
use ris_sim::montecarlo::{run_empirical, McSettings};
use ris_sim::scenario::Scenario;

fn dense_grid() -> ris_sim::config::SystemConfig {
    // quarter-wavelength spacing gives strongly correlated neighbours
    let mut cfg = config(&[("m_h", "4"), ("m_v", "4")]);
    let q = cfg.lambda / 4.0;
    cfg.set("d_h", &format!("{q:?}")).unwrap();
    cfg.set("d_v", &format!("{q:?}")).unwrap();
    cfg
}

#[test]
fn correlated_grid_covariances() {
    let cfg = dense_grid();
    let g = ris_ue_covariance_gap(&cfg, 200_000, 31);
    let e = emi_covariance_gap(&cfg, 200_000, 32);
    assert!(g < 0.02, "RIS-UE covariance gap {g}");
    assert!(e < 0.02, "EMI covariance gap {e}");
}

#[test]
fn q_matches_training_emi_power_under_both_nlos_conventions() {
    for nlos in ["area", "unit"] {
        let cfg = config(&[("m_h", "4"), ("m_v", "4"), ("nlos_variance", nlos)]);
        let gap = q_consistency_gap(&cfg, 40_000, 33);
        assert!(gap.abs() < 0.03, "{nlos}: {gap}");
    }
}

#[test]
fn correlated_innovation_is_stationary() {
    let cfg = config(&[("m_h", "4"), ("m_v", "4"), ("fd_ts", "0.002")]);
    for n in [5, 60] {
        let (c, p) = ris_lag_statistics(&cfg, n, 40_000, 34);
        let expect = j0_reference(std::f64::consts::TAU * n as f64 * 0.002);
        assert!((c - expect).abs() < 0.01, "lag {n}: {c} vs {expect}");
        assert!((p - 1.0).abs() < 0.02, "lag {n}: power ratio {p}");
    }
}

#[test]
fn library_j0_matches_series() {
    for n in [0, 1, 10, 50, 100, 150] {
        for fd in [0.0005, 0.001, 0.002] {
            let x = std::f64::consts::TAU * n as f64 * fd;
            assert!((jakes_rho(n, fd) - j0_reference(x)).abs() < 1e-12);
        }
    }
}

#[test]
fn emi_power_at_ue_matches_i3() {
    let cfg = dense_grid();
    let sc = Scenario::new(cfg.clone()).unwrap();
    let i3 = analytics::breakdown(&sc, 0, 1).unwrap().i3;
    let sampled = emi_power_at_ue(&cfg, 300_000, 35);
    assert!((sampled - i3).abs() / i3 < 0.03, "{sampled} vs {i3}");
}

#[test]
fn shrinkage_regression_small_surface() {
    let cfg = config(&[("m_h", "4"), ("m_v", "4"), ("rho_db", "0")]);
    let sc = Scenario::new(cfg.clone()).unwrap();
    let (d, c) = regression_shrinkage(&cfg, 2, 20_000, 36);
    let s = &sc.stats[2];
    assert!((d.re - s.direct_shrinkage).abs() / s.direct_shrinkage < 0.02);
    assert!(d.im.abs() < 0.02 * s.direct_shrinkage);
    assert!((c.re - s.cascade_shrinkage).abs() / s.cascade_shrinkage < 0.02, "{c} vs {}", s.cascade_shrinkage);
}

#[test]
fn precoder_trace_oracle() {
    // E tr(Gbar Gbar^H) against sum_k N_t(rho0^2 vhat_d + M rho1^2 vhat_c)
    let cfg = config(&[("m_h", "4"), ("m_v", "4")]);
    let sc = Scenario::new(cfg.clone()).unwrap();
    let settings = McSettings {
        trials: 20_000,
        seed: 37,
        symbols: vec![1, 96],
        workers: None,
    };
    let terms = run_empirical(&sc, &settings).unwrap();
    for e in terms.iter().filter(|e| e.k == 0) {
        let z = analytics::zeta_sq_deterministic(&sc.stats, &sc.aging, e.n, cfg.n_t, sc.m(), cfg.p_t).unwrap();
        let expect = cfg.p_t / z;
        let gap = (e.mean_trace - expect) / expect;
        println!("n={} precoder trace relative gap {gap:+.4}", e.n);
        assert!(gap.abs() < 0.01, "n={} trace gap {gap}", e.n);
    }
}

#[test]
fn standard_errors_shrink_as_inverse_root_trials() {
    let cfg = config(&[("m_h", "2"), ("m_v", "2"), ("n_t", "4")]);
    let sc = Scenario::new(cfg).unwrap();
    let counts = [1_000usize, 10_000, 100_000];
    let mut logs: Vec<Vec<f64>> = vec![Vec::new(); 4];
    for &t in &counts {
        let s = McSettings {
            trials: t,
            seed: 38,
            symbols: vec![10],
            workers: None,
        };
        let e = &run_empirical(&sc, &s).unwrap()[0];
        for (i, term) in e.terms.iter().enumerate() {
            logs[i].push((term.std_err / term.value).ln());
        }
    }
    let x: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    for (i, y) in logs.iter().enumerate() {
        let s = slope(&x, y);
        assert!((s + 0.5).abs() <= 0.1, "I{i} slope {s}");
    }
}

#[test]
fn unit_nlos_convention_keeps_i3_and_i0() {
    let cfg = config(&[("m_h", "4"), ("m_v", "4"), ("nlos_variance", "unit")]);
    let sc = Scenario::new(cfg).unwrap();
    assert_eq!(sc.config.nlos_variance, NlosVariance::Unit);
    let s = McSettings {
        trials: 20_000,
        seed: 39,
        symbols: vec![1],
        workers: None,
    };
    for e in run_empirical(&sc, &s).unwrap() {
        let a = analytics::breakdown(&sc, e.k, e.n).unwrap();
        let i3 = (e.terms[3].value - a.i3) / a.i3;
        assert!(i3.abs() < 0.05, "k={} I3 gap {i3}", e.k);
        let i0 = (e.terms[0].value - a.i0) / a.i0;
        assert!(i0.abs() < 0.05, "k={} I0 gap {i0}", e.k);
    }
}
