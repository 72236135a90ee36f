use std::sync::Arc;

use diprl::agents::{
    critic_loss, critic_update, label_batch_rewards, policy_update, AlgoKind, CriticPair, Embedded, PolicyNetwork,
    SacConfig, Workspace,
};
use diprl::data::{
    demo_count, hidden_reward_reads, sample_mixed_batch, DemoDataset, ReplayBuffer, SegmentSource, Source, Transition,
};
use diprl::env::{Action, Observation};
use diprl::harness::{read_csv, write_csv, ExperimentConfig, MetricsRow};
use diprl::nn::{Activation, Mlp};
use diprl::reward::preference_prob_from_returns;
use diprl::softmax;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DIM: usize = 4;

fn transition(tag: f64, action: Action, done: bool, source: Source) -> Transition {
    Transition::new(
        Observation::new(vec![tag]),
        action,
        Observation::new(vec![tag + 1.0]),
        done,
        tag,
        source,
    )
}

fn embedded(rng: &mut ChaCha8Rng, done: bool, source: Source) -> Embedded<f64> {
    use rand::Rng;
    let mut vec = || -> Arc<[f64]> { (0..DIM).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>().into() };
    let (embedding, next_embedding) = (vec(), vec());
    let action = Action::ALL[rng.gen_range(0..Action::COUNT)];
    Embedded {
        transition: transition(rng.gen_range(-1.0..1.0), action, done, source),
        embedding,
        next_embedding,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..10)) {
        let p = softmax(&logits);
        prop_assert_eq!(p.len(), logits.len());
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn preference_probability_is_antisymmetric_and_shift_invariant(
        a in -40.0f64..40.0,
        b in -40.0f64..40.0,
        shift in -40.0f64..40.0,
    ) {
        let p = preference_prob_from_returns(a, b);
        prop_assert!((p + preference_prob_from_returns(b, a) - 1.0).abs() < 1e-12);
        prop_assert!((p - preference_prob_from_returns(a + shift, b + shift)).abs() < 1e-9);
        prop_assert!(preference_prob_from_returns(a + 1.0, b) >= p);
    }

    #[test]
    fn sqil_labels_follow_the_source_tag_under_permutation(
        sources in prop::collection::vec(any::<bool>(), 1..40),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let items: Vec<Embedded<f64>> = sources
            .iter()
            .map(|&demo| embedded(&mut rng, false, if demo { Source::Demo } else { Source::Agent }))
            .collect();
        let mut batch: Vec<&Embedded<f64>> = items.iter().collect();
        let reads = hidden_reward_reads();
        let labels = label_batch_rewards(&batch, AlgoKind::Sqil, None).unwrap();
        for (e, &y) in batch.iter().zip(&labels) {
            prop_assert_eq!(y, if e.transition.source() == Source::Demo { 1.0 } else { 0.0 });
        }
        batch.shuffle(&mut rng);
        let shuffled = label_batch_rewards(&batch, AlgoKind::Sqil, None).unwrap();
        let mut a = labels.clone();
        let mut b = shuffled;
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
        prop_assert_eq!(hidden_reward_reads(), reads);
    }

    #[test]
    fn forward_is_pure(seed in any::<u64>(), input in prop::collection::vec(-2.0f64..2.0, DIM)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::<f64>::random(&[DIM, 6, 3], Activation::Relu, &mut rng);
        let before = net.clone();
        let first = net.forward(&input).unwrap();
        let second = net.forward(&input).unwrap();
        prop_assert!(first.iter().zip(&second).all(|(x, y)| x.to_bits() == y.to_bits()));
        prop_assert!(net.bits_eq(&before));
    }

    #[test]
    fn buffer_respects_capacity_and_episode_boundaries(
        capacity in 1usize..60,
        dones in prop::collection::vec(prop::bool::weighted(0.15), 1..200),
        k in 1usize..8,
        seed in any::<u64>(),
    ) {
        let mut buffer = ReplayBuffer::new(capacity);
        // Steps of one episode carry consecutive tags; episodes are 1000 apart.
        let mut episode = 0.0;
        let mut step = 0.0;
        for &done in &dones {
            buffer.push(transition(episode * 1000.0 + step, Action::Forward, done, Source::Agent)).unwrap();
            prop_assert!(buffer.len() <= capacity);
            step += 1.0;
            if done {
                episode += 1.0;
                step = 0.0;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if buffer.segment_starts(k).is_empty() {
            prop_assert!(buffer.sample_segment(k, &mut rng).is_err());
        } else {
            for _ in 0..10 {
                let seg = buffer.sample_segment(k, &mut rng).unwrap();
                prop_assert_eq!(seg.len(), k);
                prop_assert!(seg.steps[..k - 1].iter().all(|t| !t.done));
                for w in seg.steps.windows(2) {
                    prop_assert_eq!(w[1].obs[0], w[0].obs[0] + 1.0);
                }
            }
        }
    }

    #[test]
    fn mixed_batches_have_exact_source_counts(
        batch_size in 1usize..128,
        fraction in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let demos = DemoDataset::new(vec![(0..5)
            .map(|i| transition(i as f64, Action::Chop, i == 4, Source::Demo))
            .collect()])
        .unwrap();
        let mut buffer = ReplayBuffer::new(50);
        for i in 0..20 {
            buffer.push(transition(i as f64, Action::TurnLeft, i % 7 == 6, Source::Agent)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = sample_mixed_batch(&buffer, &demos, batch_size, fraction, &mut rng).unwrap();
        prop_assert_eq!(batch.len(), batch_size);
        let n_demo = batch.iter().filter(|t| t.source() == Source::Demo).count();
        prop_assert_eq!(n_demo, demo_count(batch_size, fraction));
        prop_assert_eq!(n_demo, (fraction * batch_size as f64).round() as usize);
    }

    #[test]
    fn config_text_round_trips(
        gamma in 0.5f64..0.999,
        alpha in 0.0f64..1.0,
        batch in 1u64..512,
        seed in any::<u32>(),
        algo in prop::sample::select(AlgoKind::ALL.to_vec()),
    ) {
        let mut cfg = ExperimentConfig::default();
        cfg.set("sac.gamma", &gamma.to_string()).unwrap();
        cfg.set("sac.alpha", &alpha.to_string()).unwrap();
        cfg.set("reward.batch_size", &batch.to_string()).unwrap();
        cfg.set("run.seed", &seed.to_string()).unwrap();
        cfg.set("run.algo", algo.name()).unwrap();
        prop_assert_eq!(cfg.sac.gamma, gamma);
        prop_assert_eq!(cfg.run.algo, algo);
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn metrics_csv_round_trips(rows in prop::collection::vec(
        (any::<u32>(), any::<u32>(), 0usize..5, 1usize..400, prop::sample::select(AlgoKind::ALL.to_vec()), any::<u64>()),
        0..30,
    )) {
        let rows: Vec<MetricsRow> = rows
            .into_iter()
            .map(|(step, ep, logs, len, algo, seed)| MetricsRow {
                env_step: step.into(),
                episode_index: ep.into(),
                episode_logs: logs,
                episode_length: len,
                algo: algo.to_string(),
                seed,
            })
            .collect();
        let mut bytes = Vec::new();
        write_csv(&rows, &mut bytes).unwrap();
        prop_assert_eq!(read_csv(bytes.as_slice()).unwrap(), rows);
    }

    #[test]
    fn updates_never_touch_target_critics(seed in any::<u64>(), n in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = SacConfig::default();
        let mut critics = CriticPair::<f64>::new(DIM, 8, &mut rng);
        let mut policy = PolicyNetwork::<f64>::new(DIM, 8, &mut rng);
        let items: Vec<_> = (0..n).map(|i| embedded(&mut rng, i % 3 == 0, Source::Agent)).collect();
        let batch: Vec<_> = items.iter().collect();
        let rewards = vec![0.5; n];
        let targets = critics.targets();
        let (t1, t2) = (targets.0.clone(), targets.1.clone());
        let mut ws = Workspace::new();
        critic_update(&mut critics, &batch, &rewards, &policy, &cfg, &mut ws).unwrap();
        let frozen = critics.clone();
        policy_update(&mut policy, &critics, &batch, &cfg, &mut ws).unwrap();
        prop_assert!(critics.targets().0.bits_eq(&t1) && critics.targets().1.bits_eq(&t2));
        prop_assert!(critics.online().0.bits_eq(frozen.online().0));
        prop_assert!(critics.online().1.bits_eq(frozen.online().1));
    }

    #[test]
    fn terminal_transitions_ignore_the_successor(seed in any::<u64>(), reward in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = SacConfig::default();
        let critics = CriticPair::<f64>::new(DIM, 8, &mut rng);
        let policy = PolicyNetwork::<f64>::new(DIM, 8, &mut rng);
        let mut e = embedded(&mut rng, true, Source::Agent);
        let loss = critic_loss(&critics, &[&e], &[reward], &policy, &cfg).unwrap();
        let a = e.transition.action.index();
        let (q1, q2) = critics.online();
        let expected = ((q1.forward(&e.embedding).unwrap()[a] - reward).powi(2)
            + (q2.forward(&e.embedding).unwrap()[a] - reward).powi(2))
            / 2.0;
        prop_assert!((loss - expected).abs() < 1e-12);
        e.next_embedding = vec![100.0; DIM].into();
        prop_assert_eq!(critic_loss(&critics, &[&e], &[reward], &policy, &cfg).unwrap(), loss);
    }
}
