mod common;

use num_complex::Complex64 as C64;

use common::small_config;
use spinpath::debpi::{Quadrature, Solver};
use spinpath::harness::{preset, run, Method, Overrides};

fn run_in_pool(threads: usize) -> Vec<C64> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let s = Solver::new(small_config(1.0, 6, 3, 1.0 / 24.0)).unwrap();
        let mut st = s.initial_state();
        for _ in 0..10 {
            s.strang_step(&mut st);
        }
        st.values
    })
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let one = run_in_pool(1);
    let three = run_in_pool(3);
    assert_eq!(one, three);
}

#[test]
fn initial_trace_is_exact_and_drift_shrinks_with_resolution() {
    // Moving the last flip to the other branch pairs every diagonal path
    // with one of opposite sign, so the start is exact under either rule.
    let drift = |n: usize, q: Quadrature| {
        let mut c = small_config(2.0, n, 4, 2.0 / n as f64);
        c.quadrature = q;
        let s = Solver::new(c).unwrap();
        let mut st = s.initial_state();
        let start = (s.assemble_density(&st).trace() - C64::new(1.0, 0.0)).norm();
        for _ in 0..20 {
            s.strang_step(&mut st);
        }
        (start, (s.assemble_density(&st).trace() - C64::new(1.0, 0.0)).norm())
    };
    for q in [Quadrature::Simplex, Quadrature::Rectangle] {
        let (s6, e6) = drift(6, q);
        let (s12, e12) = drift(12, q);
        assert!(s6 < 1e-14 && s12 < 1e-14, "{q:?}: {s6} {s12}");
        assert!(e12 < e6, "{q:?}: {e6} -> {e12}");
    }
}

#[test]
fn trace_stays_near_one() {
    let s = Solver::new(small_config(2.0, 8, 3, 0.125)).unwrap();
    for (_, rho) in s.run(40) {
        assert!((rho.trace() - C64::new(1.0, 0.0)).norm() < 5e-3);
    }
}

#[test]
fn free_spin_with_short_window() {
    let p = preset("bias-eps0").unwrap();
    let o = Overrides {
        xi: Some(0.0),
        delta: Some(1.0),
        memory_time: Some(0.5),
        grid_n: Some(8),
        dmax: Some(4),
        horizon: Some(3.0),
        ..Default::default()
    };
    let s = run(&p, Method::Debpi, &o).unwrap();
    assert_eq!(s.rows[0].t, 0.0);
    assert!((s.rows[1].t - 0.5).abs() < 1e-12);
    for r in &s.rows {
        assert!((r.sigma_z.re - (2.0 * r.t).cos()).abs() < 2e-2, "t = {}", r.t);
    }
}

#[test]
fn both_engines_agree_on_a_short_biased_run() {
    let p = preset("bias-eps1").unwrap();
    let o = Overrides {
        grid_n: Some(8),
        dmax: Some(4),
        horizon: Some(6.0),
        ..Default::default()
    };
    let a = run(&p, Method::Debpi, &o).unwrap();
    let b = run(&p, Method::Quapi, &o).unwrap();
    let r = spinpath::harness::compare(&a, &b).unwrap();
    // Coarse lattice and low flip order, so the tolerance is loose.
    assert!(r.max_abs_diff < 0.1, "{r:?}");
}
