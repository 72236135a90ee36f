use diprl::agents::{
    critic_loss, grad, policy_loss, AlgoKind, CriticPair, Embedded, PolicyNetwork, SacConfig,
};
use diprl::data::{Source, Transition};
use diprl::env::{Action, Observation};
use diprl::nn::finite_diff_check;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Embedded<f64>> {
    (0..n)
        .map(|_| {
            let e: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ne: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let source = if rng.gen_bool(0.5) { Source::Demo } else { Source::Agent };
            Embedded {
                transition: Transition::new(
                    Observation::new(vec![0.0]),
                    Action::ALL[rng.gen_range(0..Action::COUNT)],
                    Observation::new(vec![0.0]),
                    rng.gen_bool(0.2),
                    0.0,
                    source,
                ),
                embedding: e.into(),
                next_embedding: ne.into(),
            }
        })
        .collect()
}

#[test]
fn critic_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = SacConfig::default();
    for _ in 0..5 {
        let critics = CriticPair::<f64>::new(4, 8, &mut rng);
        let policy = PolicyNetwork::<f64>::new(4, 8, &mut rng);
        let batch = random_batch(&mut rng, 6, 4);
        let refs: Vec<&Embedded<f64>> = batch.iter().collect();
        let rewards: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (g1, g2) = grad::critic(&critics, &refs, &rewards, &policy, &cfg).unwrap();
        let (q1, q2) = critics.online();
        let (t1, t2) = critics.targets();
        let e1 = finite_diff_check(
            q1,
            |p| {
                let c = CriticPair::from_heads(p.clone(), q2.clone(), t1.clone(), t2.clone()).unwrap();
                critic_loss(&c, &refs, &rewards, &policy, &cfg).unwrap()
            },
            &g1,
            1e-6,
        );
        let e2 = finite_diff_check(
            q2,
            |p| {
                let c = CriticPair::from_heads(q1.clone(), p.clone(), t1.clone(), t2.clone()).unwrap();
                critic_loss(&c, &refs, &rewards, &policy, &cfg).unwrap()
            },
            &g2,
            1e-6,
        );
        assert!(e1 <= 1e-4 && e2 <= 1e-4, "{e1} {e2}");
    }
}

#[test]
fn policy_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let critics = CriticPair::<f64>::new(4, 8, &mut rng);
        let policy = PolicyNetwork::<f64>::new(4, 8, &mut rng);
        let batch = random_batch(&mut rng, 6, 4);
        let refs: Vec<&Embedded<f64>> = batch.iter().collect();
        let g = grad::policy(&policy, &critics, &refs, 0.3).unwrap();
        let err = finite_diff_check(
            policy.params(),
            |p| policy_loss(&PolicyNetwork::from_params(p.clone()).unwrap(), &critics, &refs, 0.3).unwrap(),
            &g,
            1e-6,
        );
        assert!(err <= 1e-4, "{err}");
    }
    let _ = AlgoKind::Sqil;
}
