use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use ridematch::env::OBS_DIM;
use ridematch::policy::{d_entropy_d_logit, d_log_prob_d_logit, entropy, log_prob, PolicyParams};
use ridematch::ppo::{ppo_loss, Minibatch, PpoConfig};

fn random_net(rng: &mut ChaCha8Rng) -> PolicyParams {
    let depth = rng.random_range(1..=3);
    let mut sizes = vec![rng.random_range(1..=6)];
    for _ in 0..depth {
        sizes.push(rng.random_range(2..=8));
    }
    sizes.push(1);
    let base = PolicyParams::init_with(&sizes, rng.random()).unwrap();
    let noise = Normal::new(0.0, 0.3).unwrap();
    let data = base.as_slice().iter().map(|w| w + noise.sample(rng)).collect();
    PolicyParams::from_parts(sizes, data).unwrap()
}

fn scalar(params: &PolicyParams, x: &[f64], c_logit: f64, c_value: f64) -> f64 {
    let f = params.forward(x).unwrap();
    c_logit * f.logit + c_value * f.v
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

#[test]
fn backward_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let params = random_net(&mut rng);
        let x: Vec<f64> = (0..params.input_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (cl, cv) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let f = params.forward(&x).unwrap();
        let g = params.backward(&f.cache, cl, cv).unwrap();
        let mut probe = params.clone();
        for i in 0..params.len() {
            let w = params.as_slice()[i];
            probe.as_mut_slice()[i] = w + h;
            let up = scalar(&probe, &x, cl, cv);
            probe.as_mut_slice()[i] = w - h;
            let down = scalar(&probe, &x, cl, cv);
            probe.as_mut_slice()[i] = w;
            worst = worst.max(rel_err(g[i], (up - down) / (2.0 * h)));
        }
    }
    assert!(worst < 1e-4, "max relative error {worst:e}");
}

#[test]
fn log_prob_and_entropy_derivatives() {
    let h = 1e-6;
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    for &z in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
        let p = sig(z);
        for a in [0u8, 1] {
            let fd = (log_prob(sig(z + h), a) - log_prob(sig(z - h), a)) / (2.0 * h);
            assert!((fd - d_log_prob_d_logit(p, a)).abs() < 1e-8);
        }
        let fd = (entropy(sig(z + h)) - entropy(sig(z - h))) / (2.0 * h);
        assert!((fd - d_entropy_d_logit(p, z)).abs() < 1e-8);
    }
}

fn frozen_batch(params: &PolicyParams, rng: &mut ChaCha8Rng, n: usize) -> Minibatch {
    let mut mb = Minibatch::default();
    for _ in 0..n {
        let mut x = [0.0; OBS_DIM];
        x.iter_mut().for_each(|v| *v = rng.random_range(-1.5..1.5));
        let f = params.forward(&x).unwrap();
        let a = u8::from(rng.random_bool(0.5));
        // old policy is a perturbed copy, kept away from the clip edges
        let shift: f64 = if rng.random_bool(0.5) { 0.05 } else { 0.4 } * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        mb.obs.push(x);
        mb.actions.push(a);
        mb.old_log_probs.push(log_prob(f.p, a) + shift);
        mb.old_values.push(f.v + rng.random_range(-0.5..0.5));
        mb.advantages.push(rng.random_range(-2.0..2.0));
        mb.returns.push(f.v + rng.random_range(-1.0..1.0));
    }
    mb
}

#[test]
fn ppo_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sizes = [OBS_DIM, 8, 8, 1];
    let params = {
        let base = PolicyParams::init_with(&sizes, 3).unwrap();
        let noise = Normal::new(0.0, 0.2).unwrap();
        let data = base.as_slice().iter().map(|w| w + noise.sample(&mut rng)).collect();
        PolicyParams::from_parts(sizes.to_vec(), data).unwrap()
    };
    let mb = frozen_batch(&params, &mut rng, 32);
    for clip_vloss in [false, true] {
        let cfg = PpoConfig {
            clip_vloss,
            ent_coef: 0.05,
            ..PpoConfig::default()
        };
        let (_, _, g) = ppo_loss(&params, &mb, &cfg).unwrap();
        let h = 1e-6;
        let mut probe = params.clone();
        let mut worst: f64 = 0.0;
        for i in 0..params.len() {
            let w = params.as_slice()[i];
            probe.as_mut_slice()[i] = w + h;
            let up = ppo_loss(&probe, &mb, &cfg).unwrap().0;
            probe.as_mut_slice()[i] = w - h;
            let down = ppo_loss(&probe, &mb, &cfg).unwrap().0;
            probe.as_mut_slice()[i] = w;
            worst = worst.max(rel_err(g[i], (up - down) / (2.0 * h)));
        }
        assert!(worst < 1e-3, "clip_vloss={clip_vloss}: max relative error {worst:e}");
    }
}

#[test]
fn ratio_is_one_on_fresh_batch() {
    let params = PolicyParams::init(9);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mb = frozen_batch(&params, &mut rng, 16);
    for k in 0..mb.len() {
        let f = params.forward(&mb.obs[k]).unwrap();
        mb.old_log_probs[k] = log_prob(f.p, mb.actions[k]);
    }
    let (_, stats, _) = ppo_loss(&params, &mb, &PpoConfig::default()).unwrap();
    assert_eq!(stats.clip_fraction, 0.0);
    assert!(stats.approx_kl.abs() < 1e-15);
    // normalised advantages have mean zero, so the surrogate does too
    assert!(stats.policy_loss.abs() < 1e-12);
}
