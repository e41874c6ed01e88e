use std::collections::HashMap;

use airs_core::config::RunConfig;
use airs_core::nn::policy::{log_prob, PolicyConfig, Trunk};
use airs_core::nn::{ActorCritic, Graph, ParamStore, RecurrentState};
use airs_core::rl::necsa::{abstract_state, discretize, EpisodicTable};
use airs_core::rl::ppo::{
    clipped_surrogate, gae_advantages, normalize, ppo_loss, ppo_loss_graph, LossSample, PpoConfig, SequenceBatch,
    StepBatch,
};
use airs_core::rl::{evaluate, load_learner, necsa_revise, train, AgentKind, AgentSpec, Features};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `A_t = Σ_l (γλ)^l δ_{t+l}`, truncated at the first terminal step.
fn gae_double_sum(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let delta = |k: usize| {
        let next = if k + 1 < n { values[k + 1] } else { bootstrap };
        let live = if dones[k] { 0.0 } else { 1.0 };
        rewards[k] + gamma * live * next - values[k]
    };
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            for (k, &done) in dones.iter().enumerate().skip(t) {
                total += (gamma * lambda).powi((k - t) as i32) * delta(k);
                if done {
                    break;
                }
            }
            total
        })
        .collect()
}

#[test]
fn gae_matches_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..2000 {
        let n = 10;
        let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let dones: Vec<bool> = (0..n).map(|_| rng.random_bool(0.2)).collect();
        let bootstrap = rng.random_range(-2.0..2.0);
        let gamma = rng.random_range(0.5..1.0);
        let lambda = rng.random_range(0.0..=1.0);
        let (adv, ret) = gae_advantages(&rewards, &values, &dones, bootstrap, gamma, lambda).unwrap();
        let oracle = gae_double_sum(&rewards, &values, &dones, bootstrap, gamma, lambda);
        for t in 0..n {
            assert!((adv[t] - oracle[t]).abs() < 1e-10);
            assert!((ret[t] - adv[t] - values[t]).abs() < 1e-12);
        }
    }
}

#[test]
fn gae_rejects_mismatched_lengths() {
    assert!(gae_advantages(&[1.0, 2.0], &[0.0], &[false, false], 0.0, 0.9, 0.9).is_err());
}

#[test]
fn gae_with_unit_lambda_is_discounted_return_minus_value() {
    let rewards = [1.0, 2.0, 3.0];
    let values = [0.5, -0.5, 0.25];
    let (adv, _) = gae_advantages(&rewards, &values, &[false, false, true], 9.0, 0.9, 1.0).unwrap();
    let g0 = 1.0 + 0.9 * 2.0 + 0.81 * 3.0;
    assert!((adv[0] - (g0 - 0.5)).abs() < 1e-12);
}

#[test]
fn normalised_advantages_have_zero_mean_and_unit_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in [2, 17, 1024] {
        let mut xs: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..300.0)).collect();
        normalize(&mut xs);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 1e-10);
        assert!((var - 1.0).abs() < 1e-10);
    }
}

fn random_batch(rng: &mut ChaCha8Rng, rows: usize, steps: usize, obs_dim: usize, action_dim: usize, hidden: usize) -> SequenceBatch {
    SequenceBatch {
        steps: (0..steps)
            .map(|t| StepBatch {
                obs: Array2::from_shape_simple_fn((rows, obs_dim), || rng.random_range(0.0..1.0)),
                actions: Array2::from_shape_simple_fn((rows, action_dim), || rng.random_range(-1.5..1.5)),
                old_log_prob: Array2::from_shape_simple_fn((rows, 1), || rng.random_range(-4.0..0.0)),
                advantage: Array2::from_shape_simple_fn((rows, 1), || rng.random_range(-2.0..2.0)),
                value_target: Array2::from_shape_simple_fn((rows, 1), || rng.random_range(-1.0..1.0)),
                mask: Array2::from_shape_fn((rows, 1), |(r, _)| if r % 3 == 1 && t >= steps - 3 { 0.0 } else { 1.0 }),
            })
            .collect(),
        h0: Array2::from_shape_simple_fn((rows, hidden), || rng.random_range(-0.5..0.5)),
        c0: Array2::from_shape_simple_fn((rows, hidden), || rng.random_range(-0.5..0.5)),
    }
}

#[test]
fn loss_graph_matches_scalar_oracle() {
    let (obs_dim, action_dim, hidden) = (7, 3, 6);
    for trunk in [Trunk::Recurrent { rounds: 5 }, Trunk::Mlp] {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::default();
        let pcfg = PolicyConfig { obs_dim, action_dim, hidden, trunk, log_std_init: -0.3 };
        let net = ActorCritic::new(&mut store, pcfg, &mut rng);
        let batch = random_batch(&mut rng, 5, 6, obs_dim, action_dim, hidden);
        let cfg = PpoConfig { clip_epsilon: 0.2, entropy_weight: 0.03, ..PpoConfig::default() };

        let mut samples = Vec::new();
        for row in 0..5 {
            let mut state = if net.is_recurrent() {
                RecurrentState { h: batch.h0.row(row).to_vec(), c: batch.c0.row(row).to_vec() }
            } else {
                RecurrentState::default()
            };
            for step in &batch.steps {
                let obs = step.obs.row(row).to_vec();
                let out = net.act(&store, &obs, &state).unwrap();
                if step.mask[[row, 0]] > 0.0 {
                    let entropy: f64 = out
                        .log_std
                        .iter()
                        .map(|s| 0.5 * (1.0 + (2.0 * std::f64::consts::PI).ln()) + s)
                        .sum();
                    samples.push(LossSample {
                        new_log_prob: log_prob(&out.mean, &out.log_std, &step.actions.row(row).to_vec()),
                        old_log_prob: step.old_log_prob[[row, 0]],
                        advantage: step.advantage[[row, 0]],
                        value_target: step.value_target[[row, 0]],
                        value: out.value,
                        entropy,
                    });
                }
                state = out.next;
            }
        }
        assert_eq!(samples.len() as f64, batch.samples());
        let oracle = ppo_loss(&samples, &cfg);

        let mut g = Graph::new(&store);
        let loss = ppo_loss_graph(&mut g, &net, &batch, &cfg).unwrap();
        for (name, got, want) in [
            ("actor", g.scalar(loss.actor), oracle.actor),
            ("critic", g.scalar(loss.critic), oracle.critic),
            ("entropy", g.scalar(loss.entropy), oracle.entropy),
            ("total", g.scalar(loss.total), oracle.total),
        ] {
            assert!((got - want).abs() < 1e-12, "{name}: {got} vs {want}");
        }
    }
}

#[test]
fn clip_is_inactive_inside_the_trust_region() {
    for &ratio in &[0.9, 1.0, 1.05] {
        for &adv in &[-1.0, 2.0] {
            assert_eq!(clipped_surrogate(ratio, adv, 0.2), ratio * adv);
        }
    }
    assert_eq!(clipped_surrogate(2.0, 1.0, 0.2), 1.2);
    assert_eq!(clipped_surrogate(0.1, -1.0, 0.2), -0.8);
    assert_eq!(clipped_surrogate(2.0, -1.0, 0.2), -2.0);
}

proptest! {
    #[test]
    fn surrogate_is_bounded_by_the_clipped_ratio(ratio in 0.0f64..5.0, adv in -10.0f64..10.0, eps in 0.0f64..0.5) {
        let s = clipped_surrogate(ratio, adv, eps);
        prop_assert!(s <= ratio * adv + 1e-12);
        if adv >= 0.0 {
            prop_assert!(s <= (1.0 + eps) * adv + 1e-12);
        } else {
            prop_assert!(s <= (1.0 - eps) * adv + 1e-12);
        }
    }

    #[test]
    fn episodic_table_matches_stored_lists(
        records in prop::collection::vec((0i32..6, -100.0f64..100.0), 1..200),
        probe in 0i32..8,
    ) {
        let mut table = EpisodicTable::default();
        let mut lists: HashMap<i32, Vec<f64>> = HashMap::new();
        for &(k, ret) in &records {
            table.record(vec![k], ret);
            lists.entry(k).or_default().push(ret);
        }
        let means: HashMap<i32, f64> = lists.iter().map(|(k, v)| (*k, v.iter().sum::<f64>() / v.len() as f64)).collect();
        prop_assert_eq!(table.len(), lists.len());
        for (k, v) in &lists {
            let stats = table.get(&[*k]).unwrap();
            prop_assert_eq!(stats.visits as usize, v.len());
            prop_assert!((stats.mean_return - means[k]).abs() < 1e-9);
        }
        let lo = means.values().cloned().fold(f64::INFINITY, f64::min);
        let hi = means.values().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (tlo, thi) = table.range().unwrap();
        prop_assert!((tlo - lo).abs() < 1e-9 && (thi - hi).abs() < 1e-9);
        let score = table.score(&[probe]);
        match means.get(&probe) {
            Some(m) if hi - lo > 1e-9 => prop_assert!((score - (m - lo) / (hi - lo)).abs() < 1e-6),
            _ => prop_assert!((0.0..=1.0).contains(&score)),
        }
    }

    #[test]
    fn abstract_state_has_fixed_length_and_valid_cells(
        history in prop::collection::vec(prop::collection::vec(-0.5f64..1.5, 4), 0..6),
        bins in 1usize..10,
        order in 1usize..4,
    ) {
        let key = abstract_state(history.iter().map(|v| v.as_slice()), 4, bins, order);
        prop_assert_eq!(key.len(), 4 * order);
        let padded = order.saturating_sub(history.len()) * 4;
        prop_assert!(key[..padded].iter().all(|&c| c == -1));
        prop_assert!(key[padded..].iter().all(|&c| c >= 0 && c < bins as i32));
        if let Some(last) = history.last() {
            let cells = discretize(last, bins);
            prop_assert_eq!(&key[4 * (order - 1)..], cells.as_slice());
        }
    }

    #[test]
    fn zero_weight_revision_is_the_identity(r in -1e6f64..1e6, score in 0.0f64..1.0) {
        prop_assert_eq!(necsa_revise(r, score, 0.0).to_bits(), r.to_bits());
    }
}

#[test]
fn same_observations_share_a_key() {
    let a = [0.1, 0.55, 0.99, 1.0];
    let b = [0.15, 0.5, 0.81, 1.0];
    let key = |o: &[f64]| abstract_state([o], 4, 5, 1);
    assert_eq!(key(&a), key(&b));
    assert_ne!(key(&a), key(&[0.25, 0.5, 0.81, 1.0]));
}

fn short_config(episodes: usize) -> RunConfig {
    let mut cfg = RunConfig::toy();
    cfg.rl.ppo.episodes = episodes;
    cfg.rl.ppo.epochs = 2;
    cfg.rl.ppo.batch_size = 512;
    cfg.rl.seed = 4;
    cfg
}

#[test]
fn necsa_with_zero_weight_is_bit_identical_to_no_necsa() {
    let mut cfg = short_config(12);
    cfg.rl.ppo.necsa.weight = 0.0;
    let pairs = [
        (
            Features { necsa: true, phase_control: true, mogrifier: true },
            Features { necsa: false, phase_control: true, mogrifier: true },
        ),
        (
            AgentKind::PpoNecsa.features().unwrap(),
            AgentKind::PpoVanilla.features().unwrap(),
        ),
    ];
    for (with, without) in pairs {
        let a = train(&cfg, AgentSpec::Ppo(with), &mut ()).unwrap();
        let b = train(&cfg, AgentSpec::Ppo(without), &mut ()).unwrap();
        assert!(!a.updates.is_empty());
        assert_eq!(a.episodes, b.episodes);
        assert_eq!(a.updates, b.updates);
        let (la, lb) = (a.learner.unwrap(), b.learner.unwrap());
        for ((_, pa), (_, pb)) in la.store.iter().zip(lb.store.iter()) {
            assert_eq!(pa.value, pb.value);
        }
    }
}

#[test]
fn nonzero_necsa_weight_changes_learning() {
    let cfg = short_config(12);
    let features = AgentKind::Eppo.features().unwrap();
    let a = train(&cfg, AgentSpec::Ppo(features), &mut ()).unwrap();
    let b = train(&cfg, AgentSpec::Ppo(Features { necsa: false, ..features }), &mut ()).unwrap();
    assert_ne!(a.updates, b.updates);
    assert!(a.episodes.iter().zip(&b.episodes).any(|(x, y)| x.learning_return != y.learning_return));
}

#[test]
fn hover_agent_spends_hover_energy() {
    let cfg = short_config(1);
    let episodes = evaluate(&cfg, AgentSpec::Hover, None, 2, 7).unwrap();
    for ep in &episodes {
        assert_eq!(ep.slots.len(), cfg.env.horizon);
        for s in &ep.slots {
            assert!((s.breakdown.energy - 288.06).abs() < 1e-9);
        }
        let total = 288.06 * cfg.env.horizon as f64;
        assert!((ep.log.summary.cumulative_energy - total).abs() < 1e-6);
    }
}

#[test]
fn baselines_train_without_learners() {
    let cfg = short_config(3);
    for spec in [AgentSpec::Random, AgentSpec::Hover] {
        let out = train(&cfg, spec, &mut ()).unwrap();
        assert_eq!(out.episodes.len(), 3);
        assert!(out.learner.is_none() && out.updates.is_empty());
        for log in &out.episodes {
            assert!(log.summary.cumulative_energy > 0.0);
            assert!((0.0..=1.0 + 1e-12).contains(&log.summary.jain) || log.summary.jain.is_nan());
        }
    }
}

#[test]
fn learned_phase_agents_widen_the_action() {
    let cfg = short_config(1);
    let out = train(&cfg, AgentSpec::from(AgentKind::PpoVanilla), &mut ()).unwrap();
    let learner = out.learner.unwrap();
    assert_eq!(learner.net.config.action_dim, 3 + 16);
    let out = train(&cfg, AgentSpec::from(AgentKind::Eppo), &mut ()).unwrap();
    assert_eq!(out.learner.unwrap().net.config.action_dim, 3);
}

#[test]
fn agent_names_round_trip() {
    for kind in AgentKind::ALL {
        assert_eq!(kind.name().parse::<AgentKind>().unwrap(), kind);
    }
    assert!("ppo_turbo".parse::<AgentKind>().is_err());
}

#[test]
fn checkpoint_round_trip_preserves_policy() {
    let cfg = short_config(6);
    let spec = AgentSpec::from(AgentKind::Eppo);
    let learner = train(&cfg, spec, &mut ()).unwrap().learner.unwrap();
    let dir = tempfile::tempdir().unwrap();
    learner.save(dir.path()).unwrap();
    let loaded = load_learner(dir.path(), &cfg, spec).unwrap();
    for ((_, pa), (_, pb)) in learner.store.iter().zip(loaded.store.iter()) {
        assert_eq!(pa.name, pb.name);
        assert_eq!(pa.value, pb.value);
    }
    let a = evaluate(&cfg, spec, Some(&learner), 2, 11).unwrap();
    let b = evaluate(&cfg, spec, Some(&loaded), 2, 11).unwrap();
    assert_eq!(a, b);
}

#[test]
fn training_is_deterministic_for_a_seed() {
    let cfg = short_config(8);
    let spec = AgentSpec::from(AgentKind::Eppo);
    let a = train(&cfg, spec, &mut ()).unwrap();
    let b = train(&cfg, spec, &mut ()).unwrap();
    assert_eq!(a.episodes, b.episodes);
    assert_eq!(a.updates, b.updates);
}
