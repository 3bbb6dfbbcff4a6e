use lmulm::blocks::{FfnParams, ImplicitAttentionParams};
use lmulm::data::{lag_copy, Example};
use lmulm::lmu::Backend;
use lmulm::model::{per_token_loss, Model, ModelConfig, Variant};
use lmulm::numerics::{max_relative_diff, Tensor};
use lmulm::training::{finite_diff_check, GradTape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(variant: Variant) -> Model<f64> {
    let cfg = ModelConfig::new(16, 11, 8, 1, 12, variant).unwrap();
    let cfg = ModelConfig {
        lmu: lmulm::lmu::LmuConfig::with_q_prime(16.0, 12, 4).unwrap(),
        ..cfg
    };
    Model::with_init_std(cfg, 7, 0.3).unwrap()
}

fn random_example(n: usize, vocab: usize, seed: u64) -> Example {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let window: Vec<usize> = (0..=n).map(|_| rng.gen_range(0..vocab)).collect();
    Example::from_window(&window)
}

#[test]
fn finite_differences_match_both_variants() {
    for variant in [Variant::Lmu, Variant::LmuGlobal] {
        let model = tiny(variant);
        let ex = random_example(16, 11, 3);
        let report = finite_diff_check(&model, &ex, 1e-5).unwrap();
        assert_eq!(report.rows.len(), 2 + 18 + 2);
        for (name, err) in &report.rows {
            assert!(*err <= 1e-4, "{variant} {name}: {err:e}");
        }
    }
}

#[test]
fn frozen_impulse_gets_no_gradient() {
    let model = tiny(Variant::Lmu);
    let ex = random_example(16, 11, 4);
    let mut tape = GradTape::new();
    let fw = model.forward_tape(&mut tape, &ex.tokens).unwrap();
    let loss = tape.cross_entropy(fw.logits, &ex.targets, &ex.mask).unwrap();
    let grads = tape.backward(loss).unwrap();
    assert!(!tape.needs_grad(fw.impulse));
    assert!(grads.get(fw.impulse).is_none());
    assert!(fw.params.iter().all(|&v| grads.get(v).is_some()));
}

#[test]
fn causal_end_to_end() {
    for variant in [Variant::Lmu, Variant::LmuGlobal] {
        let model = tiny(variant);
        let base = random_example(16, 11, 5).tokens;
        for t in [0, 5, 15] {
            let mut changed = base.clone();
            changed[t] = (changed[t] + 1) % 11;
            // the recurrent path is exactly causal
            let a = model.forward_with_backend(&base, Backend::StateSpace).unwrap();
            let b = model.forward_with_backend(&changed, Backend::StateSpace).unwrap();
            assert_eq!(a.shape(), &[16, 11]);
            for s in 0..t {
                assert_eq!(a.row(s), b.row(s), "{variant} position {s} saw token {t}");
            }
            assert_ne!(a.row(t), b.row(t));
            // the FFT path only up to transform roundoff
            let a = model.forward(&base).unwrap();
            let b = model.forward(&changed).unwrap();
            for s in 0..t {
                let diff = a.row(s).iter().zip(b.row(s)).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
                assert!(diff <= 1e-12, "{variant} position {s}: {diff:e}");
            }
        }
    }
}

#[test]
fn init_loss_is_uniform_baseline() {
    let cfg = ModelConfig::new(32, 257, 16, 2, 16, Variant::Lmu).unwrap();
    let model = Model::<f64>::new(cfg, 1).unwrap();
    let ex = random_example(32, 257, 9);
    let (mean, per) = per_token_loss(&model.forward(&ex.tokens).unwrap(), &ex.targets).unwrap();
    assert!((mean - 257f64.ln()).abs() <= 0.15, "{mean}");
    let avg = per.iter().sum::<f64>() / per.len() as f64;
    assert!((mean - avg).abs() <= 1e-12);
}

#[test]
fn per_token_loss_extremes() {
    let uniform = Tensor::<f64>::zeros(&[3, 5]);
    let (_, per) = per_token_loss(&uniform, &[0, 1, 4]).unwrap();
    assert!(per.iter().all(|v| (v - 5f64.ln()).abs() < 1e-12));
    let sharp = Tensor::from_fn(&[2, 5], |k| if k % 5 == k / 5 { 100.0 } else { 0.0 });
    let (mean, _) = per_token_loss(&sharp, &[0, 1]).unwrap();
    assert!(mean < 1e-30);
}

#[test]
fn block_parameter_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ffn = FfnParams::<f64>::init(&mut rng, 8, 32).param_count();
    let attn = ImplicitAttentionParams::<f64>::init(&mut rng, 40, 4).param_count();
    assert_eq!(ffn, 552);
    assert_eq!(attn, 484);
    assert_eq!(ffn + attn + ffn, 1588);

    let cfg = ModelConfig::new(64, 257, 8, 1, 40, Variant::Lmu).unwrap();
    let model = Model::<f32>::new(cfg, 0).unwrap();
    let (nonembed, total) = model.count_params();
    // three pre-norms plus the output norm, 2d each
    assert_eq!(nonembed, 1588 + 4 * 16);
    assert_eq!(total, nonembed + 257 * 8 + 64 * 8);
    let bigger = ModelConfig { vocab: 500, ..cfg };
    assert_eq!(Model::<f32>::new(bigger, 0).unwrap().count_params().0, nonembed);
}

#[test]
fn backends_agree_through_model() {
    let cfg = ModelConfig::new(32, 16, 8, 2, 8, Variant::LmuGlobal).unwrap();
    let model = Model::<f64>::with_init_std(cfg, 2, 0.2).unwrap();
    let tokens = random_example(32, 16, 1).tokens;
    let fft = model.forward_with_backend(&tokens, Backend::Fft).unwrap();
    let tape = model.forward(&tokens).unwrap();
    let ss = model.forward_with_backend(&tokens, Backend::StateSpace).unwrap();
    assert!(max_relative_diff(fft.data(), tape.data()) <= 1e-12);
    assert!(max_relative_diff(fft.data(), ss.data()) <= 1e-9);
}

#[test]
fn rejects_bad_tokens() {
    let model = tiny(Variant::Lmu);
    assert!(matches!(model.forward(&[11]), Err(lmulm::Error::Input(_))));
    assert!(matches!(model.forward(&[0; 17]), Err(lmulm::Error::Input(_))));
    let ex = &lag_copy(1, 16, 4, 11, 1, 0)[0];
    assert!(model.loss(ex).unwrap().is_finite());
}
