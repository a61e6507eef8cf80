use delaystab_core::boundary::{self, BranchKind};
use delaystab_core::charfun;
use delaystab_core::distributions::DelayDistribution;
use num_complex::Complex64;

fn kernels() -> Vec<DelayDistribution> {
    vec![
        DelayDistribution::dirac(1.0).unwrap(),
        DelayDistribution::exponential(1.0).unwrap(),
        DelayDistribution::gamma(3, 1.0).unwrap(),
        DelayDistribution::uniform(0.5, 1.5).unwrap(),
        DelayDistribution::discrete([(0.0, 0.3), (2.0, 0.7)]).unwrap(),
        DelayDistribution::discrete([(0.5, 0.5), (1.0, 0.25), (3.0, 0.25)]).unwrap(),
    ]
}

#[test]
fn traced_points_are_imaginary_roots() {
    for d in kernels() {
        let trace = boundary::trace_boundary(&d, 60.0, 2000).unwrap();
        for p in trace.hopf_branches().flat_map(|b| &b.points) {
            let scaled = d.scale_to_mean(p.e).unwrap();
            let omega = p.u / p.e;
            let r = charfun::char_value(p.a, &scaled, Complex64::new(0.0, omega))
                .unwrap()
                .value
                .norm();
            assert!(r < 1e-8 * (1.0 + omega), "{d} at {p:?}: residual {r:e}");
        }
    }
}

#[test]
fn zero_root_line_is_a_root_at_the_origin() {
    for d in kernels() {
        let trace = boundary::trace_boundary(&d, 60.0, 500).unwrap();
        let line = trace
            .branches
            .iter()
            .find(|b| b.kind == BranchKind::ZeroRootLine)
            .expect("zero root line");
        for p in &line.points {
            let scaled = d.scale_to_mean(p.e).unwrap();
            let v = charfun::char_value(p.a, &scaled, Complex64::new(0.0, 0.0))
                .unwrap()
                .value;
            assert!(v.norm() < 1e-12);
        }
    }
}

#[test]
fn crossing_a_branch_changes_the_count_by_two() {
    for d in kernels() {
        let trace = boundary::trace_boundary(&d, 60.0, 2000).unwrap();
        let points: Vec<_> = trace
            .hopf_branches()
            .flat_map(|b| &b.points)
            .filter(|p| p.a.abs() < 0.95 && p.e > 0.05 && p.e < 50.0)
            .collect();
        assert!(!points.is_empty(), "{d}");
        let step = (points.len() / 40).max(1);
        let mut checked = 0;
        for p in points.iter().step_by(step) {
            let count =
                |e: f64| charfun::unstable_count(p.a, &d.scale_to_mean(e).unwrap()).unwrap();
            let below = count(p.e * (1.0 - 1e-4));
            let above = count(p.e * (1.0 + 1e-4));
            assert_eq!(below.abs_diff(above), 2, "{d} at {p:?}: {below} -> {above}");
            checked += 1;
        }
        assert!(checked >= 10, "{d}: only {checked} points");
    }
}

#[test]
fn chart_matches_boundary_along_a_column() {
    let d = DelayDistribution::gamma(2, 1.0).unwrap();
    let trace = boundary::trace_boundary(&d, 100.0, 4000).unwrap();
    let a = 0.05;
    let e_axis = boundary::linspace(0.05, 20.0, 400);
    let grid = boundary::chart(&d, &[a], &e_axis).unwrap();
    let first_unstable = (0..e_axis.len())
        .find(|&j| grid.cell(0, j).outcome.as_ref().unwrap().1 > 0)
        .expect("column crosses the boundary");
    let crossing = trace
        .hopf_branches()
        .flat_map(|b| b.points.windows(2))
        .filter(|w| (w[0].a - a) * (w[1].a - a) <= 0.0)
        .map(|w| w[0].e + (w[1].e - w[0].e) * (a - w[0].a) / (w[1].a - w[0].a))
        .fold(f64::INFINITY, f64::min);
    assert!(e_axis[first_unstable - 1] < crossing && crossing <= e_axis[first_unstable]);
}
