mod common;

use affine_lab::params::StateDims;
use affine_lab::wasserstein::{
    ground_distance, optimal_assignment, wasserstein, EmpiricalMeasure, GroundMetric, COST_RESOLUTION,
};
use affine_lab::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn line(v: &[f64]) -> EmpiricalMeasure {
    EmpiricalMeasure::from_flat(1, v.to_vec()).unwrap()
}

fn dims(m: usize, n: usize) -> StateDims {
    StateDims::new(m, n).unwrap()
}

#[test]
fn one_dimensional_examples() {
    let m = GroundMetric::kappa(1.0, dims(1, 0)).unwrap();
    let r = wasserstein(&m, &line(&[0.0, 1.0]), &line(&[0.0, 2.0])).unwrap();
    assert!((r.value - 0.5).abs() < 1e-15);
    assert_eq!(r.resolution, COST_RESOLUTION);
    let p = line(&[3.0, 0.5, 2.0]);
    assert_eq!(wasserstein(&m, &p, &p).unwrap().value, 0.0);
    // sorted coupling is optimal on the line for unequal sizes too
    let r = wasserstein(&m, &line(&[0.0, 1.0, 2.0]), &line(&[0.0, 2.0])).unwrap();
    assert!((r.value - 1.0 / 3.0).abs() < 1e-12, "{}", r.value);
}

#[test]
fn point_masses_give_the_ground_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for log in [false, true] {
        let d = dims(1, 2);
        let m = if log { GroundMetric::log(d) } else { GroundMetric::kappa(0.5, d).unwrap() };
        let x = common::random_state(&mut rng, d);
        let y = common::random_state(&mut rng, d);
        let p = EmpiricalMeasure::from_points(&[x.clone()]).unwrap();
        let q = EmpiricalMeasure::from_points(&[y.clone()]).unwrap();
        let w = wasserstein(&m, &p, &q).unwrap().value;
        assert_eq!(w, ground_distance(&m, &x, &y));
    }
}

#[test]
fn replicated_samples_do_not_change_the_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let d = dims(2, 1);
    let m = GroundMetric::kappa(1.0, d).unwrap();
    let p = common::random_measure(&mut rng, d, 6, 2.0);
    let q = common::random_measure(&mut rng, d, 9, 2.0);
    let base = wasserstein(&m, &p, &q).unwrap().value;
    let p3 = EmpiricalMeasure::concat(&[&p, &p, &p]).unwrap();
    let q2 = EmpiricalMeasure::concat(&[&q, &q]).unwrap();
    let rep = wasserstein(&m, &p3, &q2).unwrap().value;
    assert!((base - rep).abs() < 1e-8, "{base} vs {rep}");
}

#[test]
fn assignment_plan_is_a_permutation_with_the_optimal_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = dims(1, 1);
    let m = GroundMetric::log(d);
    let p = common::random_measure(&mut rng, d, 30, 4.0);
    let q = common::random_measure(&mut rng, d, 30, 4.0);
    let (perm, res) = optimal_assignment(&m, &p, &q).unwrap();
    let mut seen = perm.clone();
    seen.sort_unstable();
    assert_eq!(seen, (0..30).collect::<Vec<_>>());
    let cost: f64 = perm.iter().enumerate().map(|(i, &j)| m.distance(p.point(i), q.point(j))).sum::<f64>() / 30.0;
    assert!((cost - res.value).abs() < 1e-12);
    assert!((wasserstein(&m, &p, &q).unwrap().value - res.value).abs() < 1e-8);
    assert!(optimal_assignment(&m, &p, &q.head(10)).is_err());
}

#[test]
fn input_errors() {
    let m = GroundMetric::kappa(1.0, dims(1, 0)).unwrap();
    let big = EmpiricalMeasure::from_flat(1, vec![0.0; 1001]).unwrap();
    assert!(matches!(wasserstein(&m, &big, &big), Err(Error::TooLarge(1001, 1001))));
    let empty = EmpiricalMeasure::from_flat(1, vec![]).unwrap();
    assert!(wasserstein(&m, &empty, &line(&[1.0])).is_err());
    let two = EmpiricalMeasure::from_flat(2, vec![0.0, 0.0]).unwrap();
    assert!(matches!(wasserstein(&m, &two, &two), Err(Error::Dimension(_))));
    assert!(GroundMetric::kappa(0.0, dims(1, 0)).is_err());
    assert!(GroundMetric::kappa(1.5, dims(1, 0)).is_err());
}

#[test]
fn huge_costs_coarsen_the_resolution() {
    let m = GroundMetric::kappa(1.0, dims(1, 0)).unwrap();
    let r = wasserstein(&m, &line(&[0.0, 1e7]), &line(&[1e7, 0.0])).unwrap();
    assert_eq!(r.value, 0.0);
    let r = wasserstein(&m, &line(&[0.0, 1e7]), &line(&[1.0, 2e7])).unwrap();
    assert!(r.resolution > COST_RESOLUTION);
    assert!((r.value - (1.0 + 1e7) / 2.0).abs() < 1e-6 * 1e7);
}
