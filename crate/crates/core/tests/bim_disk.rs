use approx::assert_relative_eq;
use bicount::bim::{singular_value_sweep, NodeSpacing, SolverConfig, SpectrumSolver};
use bicount::fourier::resample;
use bicount::geometry::{BoundaryCurve, CurveSpec};
use spec_math::cephes64::jv;

/// Zeros of `J_m` below `x_max`, by scanning and bisection.
fn bessel_zeros(m: u32, x_max: f64) -> Vec<f64> {
    let f = |x: f64| jv(m as f64, x);
    let h = 0.01;
    let mut out = Vec::new();
    let mut x = 0.5;
    while x < x_max {
        let (a, b) = (x, x + h);
        if f(a) * f(b) < 0.0 {
            let (mut lo, mut hi) = (a, b);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if f(lo) * f(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        x = b;
    }
    out
}

fn disk_levels(k_max: f64) -> Vec<(f64, u32)> {
    let mut levels = Vec::new();
    for m in 0..40u32 {
        for z in bessel_zeros(m, k_max) {
            levels.push((z, m));
            if m > 0 {
                levels.push((z, m));
            }
        }
    }
    levels.sort_by(|a, b| a.0.total_cmp(&b.0));
    levels
}

#[test]
fn oracle_knows_first_zero() {
    assert_relative_eq!(bessel_zeros(0, 3.0)[0], 2.404_825_557_695_773, max_relative = 1e-13);
}

#[test]
fn disk_levels_below_eight() {
    let curve = BoundaryCurve::build(CurveSpec::Disk { radius: 1.0 }, 64).unwrap();
    let solver = SpectrumSolver::new(&curve, SolverConfig::default()).unwrap();
    let spectrum = solver.solve(8.0).unwrap();
    let oracle: Vec<(f64, u32)> = disk_levels(8.0);
    assert_eq!(spectrum.modes.len(), oracle.len());
    for (mode, (k, _)) in spectrum.modes.iter().zip(&oracle) {
        assert_relative_eq!(mode.k, *k, max_relative = 1e-8);
    }
    assert!(spectrum.weyl.passed);
    // ground state: boundary function is constant
    let u0 = &spectrum.modes[0].samples;
    let mean = u0.iter().sum::<f64>() / u0.len() as f64;
    assert!(mean > 0.0);
    assert!(u0.iter().all(|x| (x - mean).abs() < 1e-5));
}

#[test]
fn scaling_the_disk_scales_k() {
    let curve = BoundaryCurve::build(CurveSpec::Disk { radius: 2.0 }, 64).unwrap();
    let solver = SpectrumSolver::new(&curve, SolverConfig::default()).unwrap();
    let w = solver.solve_window(1.0, 1.5).unwrap();
    assert_eq!(w.modes.len(), 1);
    assert_relative_eq!(w.modes[0].k, 2.404_825_557_695_773 / 2.0, max_relative = 1e-8);
}

#[test]
fn sweep_resolves_doublet_and_gaps() {
    let curve = BoundaryCurve::build(CurveSpec::Disk { radius: 1.0 }, 64).unwrap();
    let sw = singular_value_sweep(&curve, 3.7, 3.95, 0.02, 48, NodeSpacing::Parameter).unwrap();
    assert_eq!(sw.minima.len(), 1);
    let s = &sw.samples[sw.minima[0]];
    // both partners of the m = 1 doublet are small together
    assert!(s.sigma2 < 10.0 * s.sigma + 1e-3);
    let empty = singular_value_sweep(&curve, 4.2, 4.9, 0.02, 48, NodeSpacing::Parameter).unwrap();
    assert!(empty.minima.is_empty());
    assert!(singular_value_sweep(&curve, 4.2, 4.9, 1.0, 48, NodeSpacing::Parameter).is_err());
}

#[test]
fn africa_levels_converge_with_resolution() {
    let curve = BoundaryCurve::build(CurveSpec::africa(), 128).unwrap();
    let coarse = SpectrumSolver::new(&curve, SolverConfig::default()).unwrap().solve_window(12.0, 12.6).unwrap();
    let fine_cfg = SolverConfig { points_per_wavelength: 12.0, ..Default::default() };
    let fine = SpectrumSolver::new(&curve, fine_cfg).unwrap().solve_window(12.0, 12.6).unwrap();
    assert!(!coarse.modes.is_empty());
    assert_eq!(coarse.modes.len(), fine.modes.len());
    for (a, b) in coarse.modes.iter().zip(&fine.modes) {
        assert_relative_eq!(a.k, b.k, max_relative = 1e-7);
        // same boundary function up to discretization error
        let b_on_a = resample(&b.samples, a.samples.len());
        let overlap: f64 = a.samples.iter().zip(&b_on_a).map(|(x, y)| x * y).sum::<f64>() * curve.perimeter()
            / a.samples.len() as f64;
        assert!(overlap > 0.999, "{overlap}");
    }
}
