use photon_pinn::photonic_mesh::{effective_phases, sample_noise, NoiseConfig};
use photon_pinn::pinn::{residual_loss_of, sample_collocation, transformed_forward, FDConfig, PDEProblem, ScalarNet};
use photon_pinn::zo_trainer::sign_step;
use proptest::prelude::*;

struct Wave(f64);

impl ScalarNet for Wave {
    fn eval(&self, x: &[f64], t: f64) -> f64 {
        (self.0 * (x.iter().sum::<f64>() + t)).sin()
    }
}

proptest! {
    #[test]
    fn sign_step_moves_each_phase_by_at_most_alpha(
        phi in prop::collection::vec(0.0..std::f64::consts::TAU, 1..40),
        g in prop::collection::vec(-1.0..1.0f64, 40),
        alpha in 0.0..0.1f64,
    ) {
        let next = sign_step(&phi, &g[..phi.len()], alpha).unwrap();
        for (a, b) in phi.iter().zip(&next) {
            let d = (a - b).abs();
            let wrapped = d.min(std::f64::consts::TAU - d);
            prop_assert!(wrapped <= alpha + 1e-12);
            prop_assert!((0.0..std::f64::consts::TAU).contains(b));
        }
    }

    #[test]
    fn transform_is_exact_at_the_horizon(k in -5.0..5.0f64, x in prop::collection::vec(0.0..1.0f64, 1..8)) {
        let prob = PDEProblem::hjb_toy(x.len());
        let l1: f64 = x.iter().sum();
        prop_assert_eq!(transformed_forward(&Wave(k), &prob, &x, 1.0), l1);
    }

    #[test]
    fn residual_loss_ignores_batch_order(k in -3.0..3.0f64, seed in 0u64..1000) {
        let prob = PDEProblem::hjb_toy(3);
        let fd = FDConfig::default();
        let batch = sample_collocation(3, 16, &fd, seed);
        let mut reversed = batch.clone();
        reversed.points.reverse();
        let u = |x: &[f64], t: f64| transformed_forward(&Wave(k), &prob, x, t);
        let a = residual_loss_of(&u, &batch, &fd, &prob).unwrap();
        let b = residual_loss_of(&u, &reversed, &fd, &prob).unwrap();
        prop_assert!((a.0 - b.0).abs() <= 1e-12 * a.0.max(1.0));
        prop_assert_eq!(a.1, b.1);
    }

    #[test]
    fn effective_phases_stay_in_range(seed in 0u64..1000, phases in prop::collection::vec(-10.0..10.0f64, 2..30)) {
        let n = phases.len();
        let neighbors: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let model = sample_noise(n, &NoiseConfig::default(), &neighbors, seed).unwrap();
        for p in effective_phases(&phases, &model).unwrap() {
            prop_assert!((0.0..std::f64::consts::TAU).contains(&p));
        }
    }
}
