use pendulum_core::cases::body_a;
use pendulum_core::dynamics::{
    continuous_rhs, energy, integrate, momentum_pi3, solve_relative_attitude, BodyParams, DiscreteState,
};
use pendulum_core::so3::{exp_so3, hat, Mat3, RotationMatrix, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tilted_start() -> DiscreteState {
    DiscreteState::new(exp_so3(&Vec3::new(0.6, -0.3, 0.2)), Vec3::new(0.2, -0.1, 0.3))
}

fn random_controls(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn energy_series(start: &DiscreteState, body: &BodyParams) -> Vec<f64> {
    let traj = integrate(start, &vec![Vec3::zeros(); 10_000], body, 0.01).unwrap();
    traj.states.iter().map(|s| energy(s, body)).collect()
}

fn fitted_slope(e: &[f64]) -> f64 {
    let n = e.len() as f64;
    let k_mean = (n - 1.0) / 2.0;
    let e_mean = e.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, ek) in e.iter().enumerate() {
        let dk = k as f64 - k_mean;
        sxy += dk * (ek - e_mean);
        sxx += dk * dk;
    }
    sxy / sxx
}

#[test]
fn energy_has_no_secular_drift() {
    let body = body_a();
    let start = DiscreteState::new(exp_so3(&Vec3::new(0.1, 0.05, 0.0)), Vec3::new(0.01, 0.0, 0.02));
    let e = energy_series(&start, &body);
    let slope = fitted_slope(&e);
    assert!(slope.abs() <= 1e-10, "slope {slope:e}");
}

#[test]
fn large_swing_energy_error_stays_bounded() {
    let body = body_a();
    let e = energy_series(&tilted_start(), &body);
    let spread = e.iter().map(|x| (x - e[0]).abs()).fold(0.0, f64::max);
    assert!(spread < 5e-2, "{spread:e}");
    // window means of the oscillating error do not trend
    let means: Vec<f64> = e.chunks_exact(1000).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
    let first = means[0];
    assert!(means.iter().all(|m| (m - first).abs() < 0.05 * spread), "{means:?}");
}

#[test]
fn controlled_run_preserves_group_and_momentum_map() {
    let body = body_a();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let controls = random_controls(&mut rng, 10_000);
    let start = tilted_start();
    let traj = integrate(&start, &controls, &body, 0.01).unwrap();
    let pi3 = momentum_pi3(&start);
    for s in &traj.states {
        assert!(s.r.orthogonality_defect() <= 1e-12);
        assert!((momentum_pi3(s) - pi3).abs() <= 1e-12 * (1.0 + pi3.abs()));
    }
}

#[test]
fn vertical_rotation_commutes_with_the_flow() {
    let body = body_a();
    let start = tilted_start();
    let theta = 1.1;
    let phi = RotationMatrix::about_vertical(theta);
    let rotated = DiscreteState::new(phi * start.r, start.pi);
    let a = integrate(&start, &vec![Vec3::zeros(); 500], &body, 0.01).unwrap();
    let b = integrate(&rotated, &vec![Vec3::zeros(); 500], &body, 0.01).unwrap();
    for (x, y) in a.states.iter().zip(&b.states) {
        assert!(((phi * x.r).matrix() - y.r.matrix()).norm() <= 1e-12);
        assert!((x.pi - y.pi).norm() <= 1e-12);
    }
}

#[test]
fn implicit_solve_takes_few_iterations() {
    let body = body_a();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = Vec::new();
    for _ in 0..2000 {
        let pi = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let rel = solve_relative_attitude(&pi, &body, 0.01).unwrap();
        assert!(rel.residual <= 1e-13 * (0.01 * pi.norm()).max(1.0));
        counts.push(rel.iterations);
    }
    counts.sort_unstable();
    assert!(*counts.last().unwrap() <= 5);
    assert!(counts[counts.len() / 2] <= 3);
}

fn rk4_reference(start: &DiscreteState, body: &BodyParams, t_end: f64, substeps: usize) -> (Mat3, Vec3) {
    let dt = t_end / substeps as f64;
    let f = |r: &Mat3, pi: &Vec3| {
        let omega = body.inertia_inv() * pi;
        let (_, pi_dot) = continuous_rhs(&DiscreteState::new(nearest_rotation(r), *pi), &Vec3::zeros(), body);
        (r * hat(&omega), pi_dot)
    };
    let (mut r, mut pi) = (*start.r.matrix(), start.pi);
    for _ in 0..substeps {
        let (k1r, k1p) = f(&r, &pi);
        let (k2r, k2p) = f(&(r + k1r * (dt / 2.0)), &(pi + k1p * (dt / 2.0)));
        let (k3r, k3p) = f(&(r + k2r * (dt / 2.0)), &(pi + k2p * (dt / 2.0)));
        let (k4r, k4p) = f(&(r + k3r * dt), &(pi + k3p * dt));
        r += (k1r + k2r * 2.0 + k3r * 2.0 + k4r) * (dt / 6.0);
        pi += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (dt / 6.0);
    }
    (r, pi)
}

fn nearest_rotation(m: &Mat3) -> RotationMatrix {
    let svd = m.svd(true, true);
    RotationMatrix::new(svd.u.unwrap() * svd.v_t.unwrap()).unwrap()
}

#[test]
fn converges_to_the_continuous_flow() {
    let body = body_a();
    let start = tilted_start();
    let (r_ref, pi_ref) = rk4_reference(&start, &body, 1.0, 4000);
    let err = |steps: usize| {
        let h = 1.0 / steps as f64;
        let traj = integrate(&start, &vec![Vec3::zeros(); steps], &body, h).unwrap();
        let last = traj.last();
        (last.r.matrix() - r_ref).norm() + (last.pi - pi_ref).norm()
    };
    let errors: Vec<f64> = [50, 100, 200, 400].into_iter().map(err).collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.0, "order {order} from {errors:?}");
        println!("measured order {order:.3}");
    }
}
