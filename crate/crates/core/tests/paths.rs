use stretchwalk_core::density::{ExponentModel, PerturbedDensity};
use stretchwalk_core::paths::{
    detect_segments, estimate_p_ak_with, Conditioning, PathSimulator, Trajectory,
};
use stretchwalk_core::seeds::stream_seed;

fn weibull() -> PerturbedDensity {
    PerturbedDensity::pure(ExponentModel::weibull(3.0).unwrap()).unwrap()
}

#[test]
fn conditioned_paths_have_mean_increment_near_a() {
    let m = weibull();
    let a = 2.0;
    let sim = PathSimulator::new(&m, a).unwrap();
    let mut total = 0.0;
    for r in 0..50 {
        let t = sim
            .simulate(500, Conditioning::EndValueAtLeast, stream_seed(3, r))
            .unwrap();
        assert!(t.end_value() >= 1000.0);
        total += t.end_value() / 500.0;
    }
    let mean = total / 50.0;
    assert!(mean >= a && mean < a * 1.01, "{mean}");
}

#[test]
fn fixed_sum_paths_end_exactly_at_level() {
    let m = weibull();
    let t = PathSimulator::new(&m, 1.5)
        .unwrap()
        .simulate(200, Conditioning::EndValueEquals, 4)
        .unwrap();
    assert!((t.end_value() - 300.0).abs() < 1e-9);
}

/// Median over paths of the largest k-window slope of unconditioned walks.
fn median_max_slope(m: &PerturbedDensity, n: usize, k: usize, paths: u64) -> f64 {
    let sim = PathSimulator::new(m, m.mean()).unwrap();
    let mut maxima: Vec<f64> = (0..paths)
        .map(|r| {
            let t = sim
                .simulate(n, Conditioning::Unconditioned, stream_seed(n as u64, r))
                .unwrap();
            detect_segments(&t, k, f64::INFINITY).unwrap().max_slope
        })
        .collect();
    maxima.sort_by(f64::total_cmp);
    maxima[maxima.len() / 2]
}

#[test]
fn window_maxima_grow_with_path_length() {
    // the largest fixed-length window mean creeps up as more windows are scanned
    let m = weibull();
    let meds: Vec<f64> = [500, 2000, 8000]
        .iter()
        .map(|&n| median_max_slope(&m, n, 10, 60))
        .collect();
    assert!(meds[0] <= meds[1] && meds[1] <= meds[2], "{meds:?}");
    assert!(meds[0] > m.mean());
}

#[test]
fn conditioning_lifts_window_slopes() {
    let m = weibull();
    let mean = m.mean();
    let cond = estimate_p_ak_with(
        &m,
        300,
        1.5 * mean,
        20,
        1.3 * mean,
        60,
        1,
        Conditioning::EndValueAtLeast,
    )
    .unwrap();
    let base = estimate_p_ak_with(
        &m,
        300,
        1.5 * mean,
        20,
        1.3 * mean,
        60,
        1,
        Conditioning::Unconditioned,
    )
    .unwrap();
    assert!(cond.p_hat > base.p_hat, "{} vs {}", cond.p_hat, base.p_hat);
}

#[test]
fn csv_export_has_fixed_columns() {
    let t = Trajectory::from_increments(vec![0.5, 1.25], Conditioning::Unconditioned);
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "j,increment,partial_sum");
    assert_eq!(lines[2], "2,1.2500000000000000e0,1.7500000000000000e0");
}
