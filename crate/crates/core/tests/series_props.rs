use odefit_core::series::{
    forward_difference, read_csv, three_point_derivative, DerivativeEstimate, TimeSeries,
};
use proptest::prelude::*;

fn grid_strategy(min: usize, max: usize) -> impl Strategy<Value = Vec<f64>> {
    (-5.0..5.0f64, prop::collection::vec(1e-3..1.0f64, min - 1..max)).prop_map(|(t0, gaps)| {
        let mut t = vec![t0];
        for g in gaps {
            let last = *t.last().unwrap();
            t.push(last + g);
        }
        t
    })
}

fn series(times: &[f64], f: impl Fn(f64) -> f64) -> TimeSeries {
    let values = times.iter().map(|&t| f(t)).collect();
    TimeSeries::new(times.to_vec(), values, vec!["x1".into()]).unwrap()
}

fn assert_rel(got: f64, want: f64, tol: f64) -> Result<(), TestCaseError> {
    let scale = want.abs().max(1.0);
    prop_assert!((got - want).abs() <= tol * scale, "got {got}, want {want}");
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn forward_difference_exact_on_affine(times in grid_strategy(2, 40), c0 in -10.0..10.0f64, c1 in -10.0..10.0f64) {
        let d = forward_difference(&series(&times, |t| c0 + c1 * t));
        prop_assert_eq!(d.len(), times.len() - 1);
        for i in 0..d.len() {
            assert_rel(d.row(i)[0], c1, 1e-10)?;
        }
    }

    #[test]
    fn three_point_exact_on_quadratics(
        times in grid_strategy(3, 40),
        c0 in -10.0..10.0f64, c1 in -10.0..10.0f64, c2 in -10.0..10.0f64,
    ) {
        let d = three_point_derivative(&series(&times, |t| c0 + c1 * t + c2 * t * t)).unwrap();
        prop_assert_eq!(d.len(), times.len() - 2);
        for i in 0..d.len() {
            let t = times[i];
            // cancellation grows with |x| / h, so scale the check by the data magnitude
            let mag = (c0.abs() + c1.abs() * 10.0 + c2.abs() * 100.0) / (times[i + 1] - times[i]).min(1.0);
            let want = c1 + 2.0 * c2 * t;
            prop_assert!((d.row(i)[0] - want).abs() <= 1e-10 * mag.max(want.abs()).max(1.0),
                "at {i}: got {}, want {want}", d.row(i)[0]);
        }
    }

    #[test]
    fn estimators_commute_with_affine_maps(
        times in grid_strategy(3, 30),
        alpha in -5.0..5.0f64, beta in -5.0..5.0f64,
        phase in 0.0..6.0f64,
    ) {
        let base = series(&times, |t| (t + phase).sin());
        let mapped = series(&times, |t| alpha * (t + phase).sin() + beta);
        let check = |a: &DerivativeEstimate, b: &DerivativeEstimate| -> Result<(), TestCaseError> {
            for i in 0..a.len() {
                let want = alpha * a.row(i)[0];
                prop_assert!((b.row(i)[0] - want).abs() <= 1e-8 * (1.0 + want.abs()) / (times[i + 1] - times[i]));
            }
            Ok(())
        };
        check(&forward_difference(&base), &forward_difference(&mapped))?;
        check(&three_point_derivative(&base).unwrap(), &three_point_derivative(&mapped).unwrap())?;
    }

    #[test]
    fn csv_round_trip(times in grid_strategy(2, 20), seed in 0u64..1000) {
        let values: Vec<f64> = (0..times.len() * 2).map(|i| ((i as u64 * 31 + seed) as f64).sin() * 1e3).collect();
        let s = TimeSeries::new(times, values, vec!["u".into(), "v".into()]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, &["note".into()]).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, s);
    }
}

#[test]
fn second_order_convergence_of_three_point() {
    // halving a uniform spacing cuts the error on sin by ~4x
    let err = |n: usize| {
        let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let d = three_point_derivative(&series(&times, f64::sin)).unwrap();
        (0..d.len())
            .map(|i| (d.row(i)[0] - times[i].cos()).abs())
            .fold(0.0, f64::max)
    };
    let ratio = err(51) / err(101);
    assert!((3.5..4.5).contains(&ratio), "{ratio}");
}
