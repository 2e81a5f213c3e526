use kinmhd::grid::{SpatialGrid, TORUS_VOLUME};
use kinmhd::harness::*;
use kinmhd::kinetic::{init_state, InitKind, KineticState};
use kinmhd::mhd::FluidState;
use kinmhd::velocity::VelocityBasis;
use kinmhd::Error;
use num_complex::Complex64;
use proptest::prelude::*;

fn small_config() -> SweepConfig {
    SweepConfig {
        eps_list: vec![0.4, 0.2],
        t_end: 0.1,
        modes_per_axis: 4,
        grid_modes: 8,
        n_samples: 4,
        ..SweepConfig::default()
    }
}

fn trajectory(g: &SpatialGrid, n: usize, t_end: f64) -> Vec<FluidState> {
    (0..=n)
        .map(|k| {
            let t = t_end * k as f64 / n as f64;
            let mut s = FluidState::from_fn(
                g,
                |x| [0.0, (1.0 - t) * x[0].sin(), 0.0],
                |x| 0.1 * x[0].cos() * (1.0 + t),
                |x| [0.0, 0.3 * t * x[0].cos(), 0.0],
            );
            s.t = t;
            s
        })
        .collect()
}

#[test]
fn zero_data_gives_zero_errors() {
    let cfg = SweepConfig { fluid: FluidProfile::Zero, ..small_config() };
    let report = run_sweep(&cfg).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert!(report.rows.iter().all(|r| r.values.iter().all(|&v| v == 0.0)));
}

#[test]
fn manufactured_kernel_state_has_zero_errors() {
    let g = SpatialGrid::new([16, 1, 1]).unwrap();
    let basis = VelocityBasis::for_products(4).unwrap();
    let mhd = trajectory(&g, 5, 0.5);
    let kin: Vec<KineticState> = mhd
        .iter()
        .map(|s| {
            let mut k = init_state(InitKind::WellPrepared, s, 0.1, &g, &basis).unwrap();
            k.t = s.t;
            k
        })
        .collect();
    let ctx = ErrorContext { grid: &g, basis: &basis, sigma: 1.0, order: 1, tau: 0.0 };
    let errs = compute_errors(&kin, &mhd, &ctx).unwrap();
    for name in ["err_u", "err_theta", "err_B", "err_f", "err_h", "err_n"] {
        let k = METRICS.iter().position(|m| *m == name).unwrap();
        assert!(errs[k] < 1e-15, "{name} = {}", errs[k]);
    }
}

#[test]
fn ohm_residual_of_a_uniform_defect() {
    let g = SpatialGrid::new([8, 1, 1]).unwrap();
    let basis = VelocityBasis::new(4, 4).unwrap();
    let eps = 0.25;
    let delta = 0.3;
    let t_end = 0.8;
    let mhd: Vec<FluidState> = (0..=4)
        .map(|k| FluidState { t: t_end * k as f64 / 4.0, ..FluidState::zeros(&g) })
        .collect();
    let kin: Vec<KineticState> = mhd
        .iter()
        .map(|m| {
            let mut k = KineticState::zeros(&g, &basis, eps);
            k.t = m.t;
            // j = delta e_1, E = u = B = 0
            k.h[1][0] = Complex64::new(eps * delta, 0.0);
            k
        })
        .collect();
    let ctx = ErrorContext { grid: &g, basis: &basis, sigma: 1.0, order: 1, tau: 0.0 };
    let errs = compute_errors(&kin, &mhd, &ctx).unwrap();
    let want = delta * (TORUS_VOLUME * t_end).sqrt();
    assert!((errs[6] - want).abs() < 1e-12 * want, "{} vs {want}", errs[6]);
}

#[test]
fn mismatched_sampling_is_rejected() {
    let g = SpatialGrid::new([8, 1, 1]).unwrap();
    let basis = VelocityBasis::new(4, 4).unwrap();
    let mhd = trajectory(&g, 3, 1.0);
    let kin = vec![KineticState::zeros(&g, &basis, 0.5); 3];
    let ctx = ErrorContext { grid: &g, basis: &basis, sigma: 1.0, order: 1, tau: 0.0 };
    assert!(matches!(compute_errors(&kin, &mhd, &ctx), Err(Error::SamplingMismatch(_))));
    let kin = vec![KineticState::zeros(&g, &basis, 0.5); 4];
    assert!(matches!(compute_errors(&kin, &mhd, &ctx), Err(Error::SamplingMismatch(_))));
}

#[test]
fn invalid_eps_ladders_are_rejected() {
    for eps_list in [vec![0.2, 0.4], vec![0.4, 0.4], vec![1.5], vec![]] {
        let cfg = SweepConfig { eps_list, ..small_config() };
        assert!(matches!(run_sweep(&cfg), Err(Error::InvalidInput(_))));
    }
}

fn two_row_report() -> ConvergenceReport {
    ConvergenceReport {
        rows: vec![
            ReportRow { eps: 0.4, values: vec![0.4, 0.3, 0.2, 0.1, 0.1, 0.1, 0.1, 0.1], energy_ratio: 1.0 },
            ReportRow { eps: 0.2, values: vec![0.1, 0.15, 0.1, 0.05, 0.05, 0.05, 0.05, 0.05], energy_ratio: 1.0 },
        ],
        coefficients: None,
    }
}

#[test]
fn order_of_quartered_error_is_two() {
    let r = two_row_report();
    assert!((r.orders("err_u")[0] - 2.0).abs() < 1e-14);
    assert!((r.orders("err_theta")[0] - 1.0).abs() < 1e-14);
}

#[test]
fn empty_report_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    emit_report(&ConvergenceReport::default(), 1, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(text, format!("{REPORT_HEADER}\n"));
    assert!(parse_report(&dir.path().join("report.csv")).unwrap().is_empty());
}

#[test]
fn report_round_trips_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = two_row_report();
    r.rows[1].values[3] = 0.1 / 3.0 + 1e-17;
    emit_report(&r, 1, dir.path()).unwrap();
    let rows = parse_report(&dir.path().join("report.csv")).unwrap();
    assert_eq!(rows.len(), 16);
    for row in &rows {
        let k = METRICS.iter().position(|m| *m == row.metric).unwrap();
        let src = r.rows.iter().find(|x| x.eps == row.eps).unwrap();
        assert_eq!(row.value.to_bits(), src.values[k].to_bits());
    }
    let u = rows.iter().find(|x| x.metric == "err_u" && x.eps == 0.2).unwrap();
    assert_eq!(u.order.unwrap().to_bits(), r.orders("err_u")[0].to_bits());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["metrics"]["err_u"]["strictly_decreasing"], true);
}

#[test]
fn sweep_is_deterministic() {
    let cfg = small_config();
    let a = run_sweep(&cfg).unwrap();
    let b = run_sweep(&cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.rows.iter().all(|r| r.values.iter().all(|v| v.is_finite() && *v >= 0.0)));
}

proptest! {
    #[test]
    fn orders_invariant_under_scaling(
        errs in proptest::collection::vec(1e-6f64..1.0, 4),
        scale in 1e-3f64..1e3,
    ) {
        let eps = [0.4, 0.2, 0.1, 0.05];
        let scaled: Vec<f64> = errs.iter().map(|e| e * scale).collect();
        let p = empirical_orders(&eps, &errs);
        let q = empirical_orders(&eps, &scaled);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
