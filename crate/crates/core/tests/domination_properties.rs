mod common;

use common::*;
use emerge_core::domination::dominate;
use emerge_core::grid::AxisSpec;
use emerge_core::merge::structural_upper_check;
use emerge_core::transport::worst_case_expectation;
use emerge_core::domination::extreme_e_laws;

fn nested_axes(theta: f64) -> Vec<AxisSpec> {
    let pts: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0]
        .into_iter()
        .filter(|&x| x <= theta)
        .collect();
    vec![AxisSpec::Points(pts); 2]
}

#[test]
fn lp_value_grows_with_theta() {
    let mut rng = rng(40);
    for _ in 0..5 {
        let ws: Vec<_> = (0..2).map(|_| random_weights(&mut rng, 2)).collect();
        let mut last = 0.0;
        for theta in [2.0, 4.0, 8.0] {
            let f = emerge_core::grid::grid_sample(
                |e| ws.iter().map(|w| w.merge(e).unwrap()).fold(f64::INFINITY, f64::min),
                theta,
                &nested_axes(theta),
            )
            .unwrap();
            let r = dominate(&f, 1e-3).unwrap();
            assert!(r.lp_value >= last - 1e-9, "theta {theta}: {} < {last}", r.lp_value);
            assert!(r.lp_value <= 1.0 + 1e-6);
            last = r.lp_value;
        }
    }
}

#[test]
fn valid_functions_have_no_adversarial_extreme_law_pair() {
    // Exhaustive over pairs of extreme e-laws: the transport value of a
    // valid F never exceeds 1.
    let mut rng = rng(41);
    let axes = vec![AxisSpec::Points(vec![0.0, 0.5, 1.0, 2.0, 4.0]); 2];
    let (f, _) = min_of_weighted(&mut rng, 2, 3, 4.0, &axes);
    assert!(structural_upper_check(&f).passed());
    let laws = extreme_e_laws(f.axis(0));
    for a in &laws {
        for b in &laws {
            let v = worst_case_expectation(&f, &[a.clone(), b.clone()]).unwrap().primal_value;
            assert!(v <= 1.0 + 1e-9);
        }
    }
}

#[test]
fn extracted_weights_dominate_random_valid_functions() {
    let mut rng = rng(42);
    let axes = vec![AxisSpec::Uniform(5); 2];
    for _ in 0..5 {
        let (f, _) = min_of_weighted(&mut rng, 2, 2, 4.0, &axes);
        let r = dominate(&f, 1e-3).unwrap();
        assert!(r.max_violation <= 1e-8);
        for flat in 0..f.len() {
            let x = f.node(&f.unravel(flat));
            assert!(f.values()[flat] <= 1.001 * r.lambda.merge(&x).unwrap() + 1e-8);
        }
    }
}
