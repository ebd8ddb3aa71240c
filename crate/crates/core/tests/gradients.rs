//! Analytic gradients against central differences, `h = 1e-5`, relative
//! error at most 1e-4. Entries whose true size is below `FLOOR` are compared
//! against `FLOOR` instead: there the difference quotient is rounding noise.

mod common;

use common::{mlp_gradient_error, numeric_gradient, random_net, relative_error};
use pvctl::nn::Mlp;
use pvctl::ppo::{ppo_loss, Batch, LossWeights, PolicyMode, PolicySet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const FLOOR: f64 = 1e-8;

#[test]
fn mlp_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut checked = 0;
    for _ in 0..120 {
        let net = random_net(&mut rng);
        let (worst, n) = mlp_gradient_error(&net, &mut rng, H, FLOOR);
        assert!(worst <= TOL, "sizes {:?}: relative error {worst:e}", net.sizes());
        checked += n;
    }
    // The shapes used in training: per-bus actor and a 16-agent critic.
    for sizes in [[2usize, 4, 4, 2], [32, 64, 64, 1]] {
        for _ in 0..3 {
            let net = Mlp::orthogonal(&sizes, 2f64.sqrt(), 1.0, &mut rng).unwrap();
            let (worst, n) = mlp_gradient_error(&net, &mut rng, H, FLOOR);
            assert!(worst <= TOL, "sizes {sizes:?}: relative error {worst:e}");
            checked += n;
        }
    }
    assert!(checked > 10_000);
}

/// A batch whose ratios stay well inside the clip range, so the loss is
/// smooth within `h` of the evaluation point.
fn batch_for(policy: &PolicySet, rng: &mut ChaCha8Rng, size: usize) -> Batch {
    let dim = 2 * policy.num_agents();
    let mut b = Batch::default();
    for _ in 0..size {
        let obs: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mean = policy.mean(&obs).unwrap();
        let raw: Vec<f64> = mean.iter().map(|m| m + rng.random_range(-0.5..0.5)).collect();
        let lp: f64 = policy.log_probs(&mean, &raw).iter().sum();
        b.old_log_probs.push(lp + rng.random_range(-0.1..0.1));
        b.observations.push(obs);
        b.raw_actions.push(raw);
        b.advantages.push(rng.random_range(-2.0..2.0));
        b.returns.push(rng.random_range(-3.0..3.0));
    }
    b
}

#[test]
fn ppo_loss_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for case in 0..30 {
        let n = rng.random_range(1..=4);
        let (mode, hidden) = if case % 3 == 2 {
            (PolicyMode::Centralized, vec![8, 8])
        } else {
            (PolicyMode::Decentralized, vec![4, 4])
        };
        let mut policy = PolicySet::new(mode, n, &hidden, rng.random_range(-1.5..0.0), &mut rng).unwrap();
        for g in 0..policy.actors().len() {
            for p in policy.actor_mut(g).params_mut() {
                *p += rng.random_range(-0.3..0.3);
            }
        }
        let critic = Mlp::orthogonal(&[2 * n, 16, 16, 1], 2f64.sqrt(), 1.0, &mut rng).unwrap();
        let batch = batch_for(&policy, &mut rng, 8);
        let w = LossWeights {
            clip: 0.2,
            value_coef: 0.5,
            entropy_coef: rng.random_range(0.0..0.01),
        };
        let out = ppo_loss(&policy, &critic, &batch, &w).unwrap();
        assert_eq!(out.clip_fraction, 0.0);

        for g in 0..policy.actors().len() {
            let mut probe = policy.clone();
            let numeric = numeric_gradient(policy.actors()[g].params(), H, |p| {
                probe.actor_mut(g).params_mut().copy_from_slice(p);
                ppo_loss(&probe, &critic, &batch, &w).unwrap().loss
            });
            for (i, (a, num)) in out.actor_grads[g].iter().zip(&numeric).enumerate() {
                assert!(relative_error(*a, *num, FLOOR) <= TOL, "case {case} actor {g} param {i}: {a} vs {num}");
            }
        }

        let mut probe = policy.clone();
        let numeric = numeric_gradient(policy.log_std(), H, |ls| {
            probe.log_std_mut().copy_from_slice(ls);
            ppo_loss(&probe, &critic, &batch, &w).unwrap().loss
        });
        for (i, (a, num)) in out.log_std_grad.iter().zip(&numeric).enumerate() {
            assert!(relative_error(*a, *num, FLOOR) <= TOL, "case {case} log_std {i}: {a} vs {num}");
        }

        let mut probe = critic.clone();
        let numeric = numeric_gradient(critic.params(), H, |p| {
            probe.params_mut().copy_from_slice(p);
            ppo_loss(&policy, &probe, &batch, &w).unwrap().loss
        });
        for (i, (a, num)) in out.critic_grad.iter().zip(&numeric).enumerate() {
            assert!(relative_error(*a, *num, FLOOR) <= TOL, "case {case} critic {i}: {a} vs {num}");
        }
    }
}
