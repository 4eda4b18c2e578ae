#![allow(dead_code)]

use num_complex::Complex64 as C64;

use spinpath::bath::{discretize, OhmicSpec};
use spinpath::debpi::{Quadrature, Solver, SolverConfig, SolverState, DEFAULT_MEMORY_BUDGET};
use spinpath::spinsys::{DensityMatrix, SystemParams};

pub fn small_config(t: f64, n: usize, dmax: usize, dt: f64) -> SolverConfig {
    SolverConfig {
        memory_time: t,
        grid_n: n,
        dmax,
        dt,
        system: SystemParams::new(0.05, 0.2).unwrap(),
        bath: discretize(&OhmicSpec::standard(0.2, 1.0)).unwrap(),
        beta: 25.0,
        rho0: DensityMatrix::pure_up(),
        quadrature: Quadrature::Simplex,
        memory_budget: DEFAULT_MEMORY_BUDGET,
    }
}

/// Least-squares slope of `log e` against `log x`.
pub fn fitted_order(xs: &[f64], es: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let le: Vec<f64> = es.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let me = le.iter().sum::<f64>() / k;
    let num: f64 = lx.iter().zip(&le).map(|(a, b)| (a - mx) * (b - me)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

/// Smooth manufactured bank profile; the exact transport solution moves every
/// flip position by `t`.
pub fn manufactured(pos: &[f64], bank: usize, t: f64) -> C64 {
    let mut phase = 0.3 * bank as f64;
    let mut amp = 1.0;
    for (k, &p) in pos.iter().enumerate() {
        let x = p + t;
        phase += (k as f64 + 1.0) * 0.7 * x;
        amp *= 1.0 + 0.25 * (1.3 * x).sin();
    }
    C64::from_polar(amp, phase)
}

fn positions(m: &[u16], h: f64) -> Vec<f64> {
    let mut acc = 0.0;
    m.iter()
        .map(|&v| {
            acc += v as f64 * h;
            acc
        })
        .collect()
}

/// Max error of the transport scheme against the manufactured solution
/// after evolving to `t_end` with a step of `cfl * h`.
pub fn advection_error(t: f64, n: usize, dmax: usize, cfl: f64, t_end: f64) -> f64 {
    let h = t / n as f64;
    let solver = Solver::new(small_config(t, n, dmax, cfl * h)).unwrap();
    let lay = solver.layout();
    let mut values = vec![C64::new(0.0, 0.0); lay.total()];
    let fill = |values: &mut Vec<C64>, time: f64| {
        for d in 0..=dmax {
            for bank in 0..lay.banks(d) {
                let off = lay.offset(d, bank >> d, bank & ((1 << d) - 1));
                for (i, m) in lay.grid(d).iter().enumerate() {
                    values[off + i] = if d == 0 {
                        C64::new(0.0, 0.0)
                    } else {
                        manufactured(&positions(m, h), bank, time)
                    };
                }
            }
        }
    };
    fill(&mut values, 0.0);
    let steps = (t_end / (cfl * h)).round() as usize;
    let tau = cfl * h;
    let face_points: Vec<Vec<Vec<f64>>> = (0..=dmax)
        .map(|d| {
            (0..lay.face_len(d))
                .map(|f| positions(&lay.face_point(d, f), h))
                .collect()
        })
        .collect();
    for s in 0..steps {
        let now = s as f64 * tau;
        solver.advect_with(&mut values, tau, |_, d, bank, f, predicted| {
            let at = if predicted { now + tau } else { now };
            manufactured(&face_points[d][f], bank, at)
        });
    }
    let mut exact = values.clone();
    fill(&mut exact, steps as f64 * tau);
    values
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
}

/// Densities at a fixed solver time for a given step size.
pub fn density_at(cfg: SolverConfig, t_end: f64) -> DensityMatrix {
    let steps = (t_end / cfg.dt).round() as usize;
    let solver = Solver::new(cfg).unwrap();
    let mut st: SolverState = solver.initial_state();
    for _ in 0..steps {
        solver.strang_step(&mut st);
    }
    solver.assemble_density(&st)
}

/// Successive-difference errors for a halving step sequence.
pub fn self_convergence(base: &SolverConfig, dts: &[f64], t_end: f64) -> Vec<f64> {
    let rhos: Vec<DensityMatrix> = dts
        .iter()
        .map(|&dt| {
            let mut c = base.clone();
            c.dt = dt;
            density_at(c, t_end)
        })
        .collect();
    rhos.windows(2).map(|w| w[0].max_abs_diff(&w[1])).collect()
}
