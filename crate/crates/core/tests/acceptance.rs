//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use lmulm::blocks::{causal_conv, reduce_impulse, ImplicitAttentionParams};
use lmulm::config::{load_corpus, split, CorpusSpec};
use lmulm::costmodel::{cost_report, predict, scaling_sweep, Component, Dims, SweepBackend};
use lmulm::data::{Dataset, Example};
use lmulm::lmu::{
    decode_window, dense_matvec_a, discretize_zoh, fast_matvec_a, impulse_response, run_fft_conv, run_rk,
    run_state_space, shifted_legendre, ContinuousSystem, LmuConfig, RkOrder,
};
use lmulm::model::{Model, ModelConfig, Variant};
use lmulm::numerics::{matmul, max_relative_diff, FftPlan, FlopCounter, Tensor};
use lmulm::powerlaw::{fit_power_law, reference_loss, Curve};
use lmulm::training::{evaluate_examples, finite_diff_check, GradTape, TrainConfig, Trainer};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn random_input(seed: u64, n: usize, d: usize) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[n, d], |_| rng.gen_range(-1.0..1.0))
}

fn legendre(theta: f64, q: usize) -> (ContinuousSystem, lmulm::lmu::DiscreteSystem) {
    let cont = ContinuousSystem::legendre(theta, q).unwrap();
    let disc = discretize_zoh(&cont).unwrap();
    (cont, disc)
}

fn backend_equivalence() -> Outcome {
    let start = Instant::now();
    let (_, sys) = legendre(64.0, 32);
    let x = random_input(1, 256, 4);
    let ss = run_state_space(&sys, &x).unwrap();
    let fft = run_fft_conv(&impulse_response(&sys, 256).unwrap(), &x).unwrap();
    let rel = max_relative_diff(fft.states.data(), ss.states.data());
    let took = start.elapsed();
    Outcome::new(
        rel <= 1e-10 && took < Duration::from_secs(5),
        format!("max rel {rel:.2e} (<= 1e-10), {:.3} s (< 5 s)", took.as_secs_f64()),
    )
}

fn rk_consistency() -> Outcome {
    let (cont, sys) = legendre(64.0, 16);
    let x = random_input(2, 256, 4);
    let ss = run_state_space(&sys, &x).unwrap();
    let rk = run_rk(&cont, &x, RkOrder::Four).unwrap();
    let rel = max_relative_diff(rk.states.data(), ss.states.data());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut matvec = 0.0f64;
    for q in [1, 2, 5, 16, 64] {
        let v: Vec<f64> = (0..q).map(|_| rng.gen_range(-1.0..1.0)).collect();
        matvec = matvec.max(max_relative_diff(&fast_matvec_a(&v, 64.0), &dense_matvec_a(&v, 64.0)));
    }
    Outcome::new(
        rel <= 1e-3 && matvec <= 1e-12,
        format!("rk4 vs zoh max rel {rel:.2e} (<= 1e-3); fast vs dense matvec {matvec:.2e} (<= 1e-12)"),
    )
}

fn reduced_order_equivalence() -> Outcome {
    let (n, d, q, qp) = (128, 8, 40, 4);
    let (_, sys) = legendre(n as f64, q);
    let h = impulse_response(&sys, n).unwrap();
    let x = random_input(4, n, d);
    let memory = run_fft_conv(&h, &x).unwrap();
    let params = ImplicitAttentionParams::<f64>::init(&mut ChaCha8Rng::seed_from_u64(5), q, qp);
    let mut worst = 0.0f64;
    for l in [&params.l1, &params.l2, &params.l3] {
        // Lᵢ·(X∗H), one q×d memory at a time
        let direct: Vec<f64> = (0..n)
            .flat_map(|t| matmul(l, &memory.at(t)).unwrap().into_data())
            .collect();
        // X∗(Lᵢ·H), never forming the memory
        let reduced = causal_conv(&x, &reduce_impulse(l, &h).unwrap()).unwrap();
        worst = worst.max(max_relative_diff(reduced.data(), &direct));
    }
    Outcome::new(worst <= 1e-10, format!("max rel {worst:.2e} over Q, K, V (<= 1e-10)"))
}

fn least_squares_legendre(samples: &[(f64, f64)], theta: f64, q: usize) -> Vec<f64> {
    let a = nalgebra::DMatrix::from_fn(samples.len(), q, |r, i| shifted_legendre(i, samples[r].0 / theta));
    let b = nalgebra::DVector::from_fn(samples.len(), |r, _| samples[r].1);
    a.svd(true, true).solve(&b, 1e-12).unwrap().iter().copied().collect()
}

fn legendre_projection() -> Outcome {
    let (theta, q, n) = (32usize, 8, 160);
    let (_, sys) = legendre(theta as f64, q);
    let m = run_state_space(&sys, &Tensor::full(&[n, 1], 1.0)).unwrap();
    let (mut worst_m0, mut worst_rest, mut first_bad) = (0.0f64, 0.0f64, None);
    // state index k holds time k + 1
    for k in theta - 1..n {
        let s = m.at(k);
        let dev0 = (s.data()[0] - 1.0).abs();
        let rest = s.data()[1..].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        worst_m0 = worst_m0.max(dev0);
        worst_rest = worst_rest.max(rest);
        if (dev0 > 0.05 || rest > 0.05) && first_bad.is_none() {
            first_bad = Some(k + 1);
        }
    }

    let (theta, q, n) = (64.0f64, 16usize, 512usize);
    let (_, sys) = legendre(theta, q);
    let signal = |t: f64| {
        (2.0 * std::f64::consts::PI * t / 97.0).sin()
            + 0.5 * (2.0 * std::f64::consts::PI * t / 61.0 + 0.3).cos()
            + 0.25 * (2.0 * std::f64::consts::PI * t / 173.0).sin()
    };
    let x = Tensor::from_fn(&[n, 1], |t| signal(t as f64));
    let mem = run_state_space(&sys, &x).unwrap();
    let w = theta as usize;
    let (mut err2, mut norm2) = (0.0, 0.0);
    for t in (2 * w..n).step_by(7) {
        let samples: Vec<(f64, f64)> = (0..=w).map(|k| (k as f64, signal((t - k) as f64))).collect();
        let proj = least_squares_legendre(&samples, theta, q);
        let state = mem.at(t);
        for &(delay, _) in &samples {
            let dec = decode_window(state.data(), delay, theta);
            let oracle: f64 = (0..q).map(|i| proj[i] * shifted_legendre(i, delay / theta)).sum();
            err2 += (dec - oracle).powi(2);
            norm2 += oracle.powi(2);
        }
    }
    let recon = (err2 / norm2).sqrt();
    let settled = first_bad.is_none();
    Outcome::new(
        settled && recon <= 0.05,
        format!(
            "t >= theta: max|m0-1| {worst_m0:.3} (<= 0.05), max|mi| {worst_rest:.3} (<= 0.05){}; reconstruction rel L2 {recon:.3} (<= 0.05)",
            first_bad.map_or(String::new(), |t| format!(", first violation at t={t}"))
        ),
    )
}

fn gradient_correctness() -> Outcome {
    let mut worst = 0.0f64;
    let mut frozen = true;
    for variant in [Variant::Lmu, Variant::LmuGlobal] {
        let cfg = ModelConfig {
            lmu: LmuConfig::with_q_prime(16.0, 12, 4).unwrap(),
            ..ModelConfig::new(16, 11, 8, 1, 12, variant).unwrap()
        };
        let model = Model::<f64>::with_init_std(cfg, 7, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let window: Vec<usize> = (0..=16).map(|_| rng.gen_range(0..11)).collect();
        let ex = Example::from_window(&window);
        let report = finite_diff_check(&model, &ex, 1e-5).unwrap();
        worst = worst.max(report.max());

        // Ā and B̄ never enter the tape; H enters as a constant
        let mut tape = GradTape::new();
        let fw = model.forward_tape(&mut tape, &ex.tokens).unwrap();
        let loss = tape.cross_entropy(fw.logits, &ex.targets, &ex.mask).unwrap();
        let grads = tape.backward(loss).unwrap();
        frozen &= !tape.needs_grad(fw.impulse) && grads.get(fw.impulse).is_none();
    }
    Outcome::new(
        worst <= 1e-4 && frozen,
        format!("max rel FD error {worst:.2e} over both variants (<= 1e-4); H untracked: {frozen}"),
    )
}

fn flop_accounting() -> Outcome {
    FlopCounter::enable();
    let plan = FftPlan::new(1024).unwrap();
    let mut data = vec![Complex64::new(1.0, 0.0); 1024];
    let ((), tally) = FlopCounter::measure(|| plan.forward(&mut data));
    let c1024 = tally.flops();

    let dims = |n, d, q, qp| Dims {
        n,
        d,
        d_prime: 4 * d,
        q,
        q_prime: qp,
        r: 4,
    };
    let ss_dims = dims(64, 3, 10, 1);
    let ss = cost_report(&ss_dims, &[Component::StateSpace], 0).unwrap().rows[0].measured;
    let ss_ok = ss == (2 * 3 * (10 * 10 + 10)) as f64;

    let l_fft_ok = (1..=300).all(|q| {
        [1, 4, 7].iter().all(|&d| predict(Component::FftConv, &dims(1024, d, q, 1)).unwrap() == (d * (61 * q + 55)) as f64)
    });

    let report = cost_report(&dims(128, 8, 40, 4), &Component::TABLE, 0).unwrap();
    let worst = report.rows.iter().map(|r| r.ratio()).fold(0.0f64, f64::max);
    let ratios: Vec<String> = report.rows.iter().map(|r| format!("{}={:.3}", r.component, r.ratio())).collect();
    FlopCounter::disable();
    Outcome::new(
        c1024 == 51200 && ss_ok && l_fft_ok && worst <= 1.1,
        format!(
            "C(1024)={c1024} (== 51200); ss {ss} (== 2d(q²+q)): {ss_ok}; L_FFT(1024) == d(61q+55) for q<=300: {l_fft_ok}; table ratios {} (<= 1.10)",
            ratios.join(" ")
        ),
    )
}

fn complexity_scaling() -> Outcome {
    let start = Instant::now();
    let ns = [256, 512, 1024, 2048, 4096, 8192];
    let report = scaling_sweep(&SweepBackend::ALL, &ns, 4, 32, 0).unwrap();
    let took = start.elapsed();
    let slope = |b| report.series(b).unwrap().slope;
    let (att, rec, par) = (
        slope(SweepBackend::FullAttention),
        slope(SweepBackend::Recurrent),
        slope(SweepBackend::Parallel),
    );
    let live: Vec<u64> = report.series(SweepBackend::Recurrent).unwrap().points.iter().map(|p| p.peak_live).collect();
    let constant = live.iter().all(|&v| v == live[0]);
    Outcome::new(
        (att - 2.0).abs() <= 0.05
            && (rec - 1.0).abs() <= 0.01
            && (1.0..=1.15).contains(&par)
            && constant
            && took < Duration::from_secs(120),
        format!(
            "slopes attention {att:.4} (2 ± 0.05), recurrent {rec:.4} (1 ± 0.01), parallel {par:.4} ([1, 1.15]); recurrent live {} constant: {constant}; {:.1} s (< 120 s)",
            live[0],
            took.as_secs_f64()
        ),
    )
}

fn toy_model() -> ModelConfig {
    ModelConfig::new(128, 257, 56, 2, 24, Variant::Lmu).unwrap()
}

fn toy_train(steps: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        batch: 8,
        steps,
        warmup: steps / 10,
        peak_lr: 3e-3,
        eval_every: steps,
        eval_examples: 32,
        seed,
        ..TrainConfig::default()
    }
}

fn corpus(spec: CorpusSpec, tokens: usize, seed: u64) -> Dataset {
    split(load_corpus(&spec, 128, tokens, seed).unwrap(), 0.1).unwrap()
}

fn train(data: &Dataset, cfg: TrainConfig) -> Trainer<f32> {
    let model = Model::<f32>::new(toy_model(), cfg.seed).unwrap();
    let mut trainer = Trainer::new(model, cfg).unwrap();
    trainer.run(data).unwrap();
    trainer
}

fn toy_training() -> Outcome {
    let params = Model::<f32>::new(toy_model(), 0).unwrap().count_params().0;
    let pattern = corpus(CorpusSpec::Pattern, 200_000, 0);
    let trained = train(&pattern, toy_train(500, 0));
    let (pattern_loss, _) = evaluate_examples(&trained.model, &pattern.val).unwrap();

    let random = corpus(CorpusSpec::Random, 200_000, 1);
    let trained = train(&random, toy_train(200, 1));
    let (random_loss, _) = evaluate_examples(&trained.model, &random.val).unwrap();
    let gap = (random_loss - 257f64.ln()).abs();

    let short = TrainConfig {
        eval_every: 5,
        ..toy_train(12, 2)
    };
    let one = train(&pattern, TrainConfig { threads: Some(1), ..short.clone() });
    let three = train(&pattern, TrainConfig { threads: Some(3), ..short });
    let identical = one.history == three.history && one.evals == three.evals;

    Outcome::new(
        pattern_loss <= 0.1 && gap <= 0.1 && identical,
        format!(
            "{params} params; pattern held-out {pattern_loss:.4} nats (<= 0.1); random {random_loss:.4} vs ln 257 {:.4} (gap <= 0.1); 1 vs 3 threads bitwise identical: {identical}",
            257f64.ln()
        ),
    )
}

fn context_utilization() -> Outcome {
    let data = corpus(CorpusSpec::Lag64, 128 * 400, 3);
    let trained = train(&data, toy_train(300, 3));
    let (_, per) = evaluate_examples(&trained.model, &data.val).unwrap();
    let mean = |r: std::ops::Range<usize>| per[r.clone()].iter().sum::<f64>() / r.len() as f64;
    let (early, late) = (mean(0..8), mean(64..128));
    Outcome::new(
        late < early,
        format!("positions 65-128 {late:.4} nats < positions 1-8 {early:.4} nats"),
    )
}

fn power_law_tooling() -> Outcome {
    let (n_c, alpha) = Curve::Lmu.constants();
    let points: Vec<(f64, f64)> =
        [5.5e4, 1e5, 2e5, 4e5, 7e5, 1e6].iter().map(|&n| (n, (n / n_c).powf(-alpha))).collect();
    let fit = fit_power_law(&points).unwrap();
    let (rn, ra) = ((fit.n_c / n_c - 1.0).abs(), (fit.alpha / alpha - 1.0).abs());
    let unit = Curve::ALL.iter().all(|&c| reference_loss(c, c.constants().0, None).unwrap() == 1.0);
    let lmu = reference_loss(Curve::Lmu, 1.95e14, None).unwrap();
    let lstm = reference_loss(Curve::Lstm, 7.45e14, None).unwrap();
    let constants_ok = Curve::Transformer.constants() == (6.5e13, 0.077)
        && Curve::Lstm.constants() == (7.45e14, 0.071)
        && Curve::Lmu.constants() == (1.95e14, 0.072)
        && Curve::LmuGlobal.constants() == (3.80e14, 0.069);
    Outcome::new(
        rn <= 1e-6 && ra <= 1e-6 && unit && lmu == 1.0 && lstm == 1.0 && constants_ok,
        format!(
            "fit rel error N_c {rn:.1e}, alpha {ra:.1e} (<= 1e-6); LMU(1.95e14)={lmu}, LSTM(7.45e14)={lstm}; all four curves unit at N_c: {unit}"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("backend equivalence", backend_equivalence),
        ("rk consistency", rk_consistency),
        ("reduced-order equivalence", reduced_order_equivalence),
        ("legendre projection", legendre_projection),
        ("gradient correctness", gradient_correctness),
        ("flop accounting", flop_accounting),
        ("complexity scaling", complexity_scaling),
        ("toy training", toy_training),
        ("context utilization", context_utilization),
        ("power-law tooling", power_law_tooling),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = check();
        failed += usize::from(!outcome.pass);
        println!(
            "{} {:>2} {name}: {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
