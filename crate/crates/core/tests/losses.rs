use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unitax::gradcheck::{finite_difference, random_sample, sign_structure_holds, GradcheckConfig};
use unitax::loss::{
    ba_loss, batch_loss, log_sum_exp, nll, nll_max, nll_plus, nll_plus_grad, softmax, AlphaMode,
    LossConfig, LossSample, LossVariant,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sample(rng: &mut ChaCha8Rng, range: f64) -> LossSample {
    let config = GradcheckConfig {
        logit_range: range,
        ..GradcheckConfig::default()
    };
    random_sample(rng, &config, 0.0)
}

#[test]
fn lse_matches_naive_sum_of_probabilities() {
    let mut r = rng(1);
    for _ in 0..1000 {
        let s = sample(&mut r, 30.0);
        let total: f64 = s.logits().iter().map(|x| x.exp()).sum();
        let labeled: f64 = s.label_set().iter().map(|&u| s.logits()[u].exp()).sum();
        let naive = -(labeled / total).ln();
        assert!(
            (nll_plus(&s) - naive).abs() < 1e-10,
            "{} vs {naive}",
            nll_plus(&s)
        );
    }
}

#[test]
fn uniform_examples() {
    let s = LossSample::labeled(vec![0.0; 4], vec![1, 3]).unwrap();
    assert!((nll_plus(&s) - 2f64.ln()).abs() < 1e-15);
    assert!((nll_max(&s).loss - 4f64.ln()).abs() < 1e-15);
    assert_eq!(softmax(&[0.0; 4]), vec![0.25; 4]);
    let shifted = softmax(&[1000.0, 1001.0, 1002.0]);
    let direct: Vec<f64> = [1f64, 2.0, 3.0]
        .iter()
        .map(|x| x.exp() / (1f64.exp() + 2f64.exp() + 3f64.exp()))
        .collect();
    for (a, b) in shifted.iter().zip(&direct) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn singleton_label_reduces_to_nll() {
    let mut r = rng(2);
    for _ in 0..200 {
        let dim = r.random_range(2..=8);
        let logits: Vec<f64> = (0..dim).map(|_| r.random_range(-5.0..5.0)).collect();
        let k = r.random_range(0..dim);
        let s = LossSample::labeled(logits, vec![k]).unwrap();
        assert!((nll_plus(&s) - nll(&s).unwrap()).abs() < 1e-12);
        assert_eq!(nll_max(&s).loss, nll_plus(&s));
        let mut expected = softmax(s.logits());
        expected[k] -= 1.0;
        for (a, b) in nll_plus_grad(&s).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}

#[test]
fn gradient_signs() {
    let mut r = rng(3);
    for _ in 0..1000 {
        let s = sample(&mut r, 6.0);
        assert!(sign_structure_holds(&s, &nll_plus_grad(&s)));
    }
}

#[test]
fn descent_widens_the_labeled_gap() {
    let mut r = rng(4);
    let config = GradcheckConfig::default();
    let mut checked = 0;
    while checked < 1000 {
        let s = random_sample(&mut r, &config, 1e-3);
        if s.label_set().len() < 2 {
            continue;
        }
        let mut labeled: Vec<usize> = s.label_set().to_vec();
        labeled.sort_by(|&a, &b| s.logits()[b].total_cmp(&s.logits()[a]));
        let (a, b) = (labeled[0], labeled[1]);
        let g = nll_plus_grad(&s);
        let step = 0.5;
        let before = s.logits()[a] - s.logits()[b];
        let after = (s.logits()[a] - step * g[a]) - (s.logits()[b] - step * g[b]);
        assert!(after > before, "{before} -> {after}");
        checked += 1;
    }
}

#[test]
fn dominant_labeled_logit_gives_the_nll_gradient() {
    let mut r = rng(5);
    for _ in 0..200 {
        let dim = r.random_range(3..=10);
        let mut logits: Vec<f64> = (0..dim).map(|_| r.random_range(-3.0..3.0)).collect();
        logits[0] = 25.0;
        let s = LossSample::labeled(logits, vec![0, 1, 2]).unwrap();
        let mut expected = softmax(s.logits());
        expected[0] -= 1.0;
        let diff = nll_plus_grad(&s)
            .iter()
            .zip(&expected)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-6, "{diff}");
    }
}

#[test]
fn loss_ordering() {
    let mut r = rng(6);
    for _ in 0..1000 {
        let s = sample(&mut r, 8.0);
        let plus = nll_plus(&s);
        let max = nll_max(&s).loss;
        assert!(plus >= 0.0);
        assert!(plus <= max + 1e-12);
        for &u in s.label_set() {
            let single = LossSample::labeled(s.logits().to_vec(), vec![u]).unwrap();
            assert!(max <= nll(&single).unwrap() + 1e-12);
        }
    }
}

#[test]
fn nll_max_gradient_away_from_ties() {
    let mut r = rng(7);
    let config = GradcheckConfig::default();
    for _ in 0..300 {
        let s = random_sample(&mut r, &config, 1e-2);
        let numeric = finite_difference(&s, 1e-5, |x| nll_max(x).loss);
        for (a, n) in nll_max(&s).grad.iter().zip(&numeric) {
            assert!((a - n).abs() < 1e-6);
        }
    }
}

#[test]
fn modulated_loss() {
    let mut r = rng(8);
    let modulated = LossConfig {
        gamma: 2.0,
        ..LossConfig::plain(LossVariant::NllPlus)
    };
    for _ in 0..300 {
        let s = sample(&mut r, 4.0);
        let plain = ba_loss(&s, &LossConfig::plain(LossVariant::NllPlus)).unwrap();
        assert_eq!(plain.loss, nll_plus(&s));
        let v = ba_loss(&s, &modulated).unwrap();
        let numeric = finite_difference(&s, 1e-5, |x| ba_loss(x, &modulated).unwrap().loss);
        for (a, n) in v.grad.iter().zip(&numeric) {
            assert!((a - n).abs() < 1e-6);
        }
        assert!(v.loss >= plain.loss);
    }
}

#[test]
fn frozen_modulation_drops_the_product_term() {
    let s = LossSample::labeled(vec![1.0, -0.5, 0.3, 2.0], vec![0, 1]).unwrap();
    let full = LossConfig {
        gamma: 1.5,
        ..LossConfig::plain(LossVariant::NllPlus)
    };
    let frozen = LossConfig {
        frozen_modulation: true,
        ..full
    };
    let a = ba_loss(&s, &full).unwrap();
    let b = ba_loss(&s, &frozen).unwrap();
    assert_eq!(a.loss, b.loss);
    let p_hat = (-nll_plus(&s)).exp();
    let ratio = 1.0 - 1.5 * p_hat * p_hat.ln();
    for (x, y) in a.grad.iter().zip(&b.grad) {
        assert!((x - y * ratio).abs() < 1e-14);
    }
}

#[test]
fn per_sample_alpha_scales_the_loss() {
    let s = LossSample::new(vec![0.2, 0.1, -0.4], vec![0], 3.0).unwrap();
    let config = LossConfig {
        alpha: AlphaMode::PerSample,
        ..LossConfig::plain(LossVariant::NllPlus)
    };
    assert!((ba_loss(&s, &config).unwrap().loss - 3.0 * nll_plus(&s)).abs() < 1e-15);
}

#[test]
fn batch_mean_matches_sequential_sum() {
    let mut r = rng(9);
    let config = LossConfig::default();
    let samples: Vec<LossSample> = (0..64).map(|_| sample(&mut r, 5.0)).collect();
    let batch = batch_loss(&samples, &config).unwrap();
    let mut total = 0.0;
    for (s, g) in samples.iter().zip(&batch.grads) {
        let v = ba_loss(s, &config).unwrap();
        total += v.loss;
        for (a, b) in g.iter().zip(&v.grad) {
            assert!((a - b / 64.0).abs() < 1e-15);
        }
    }
    assert!((batch.mean - total / 64.0).abs() < 1e-12);

    let one = batch_loss(&samples[..1], &config).unwrap();
    let twice = batch_loss(&[samples[0].clone(), samples[0].clone()], &config).unwrap();
    assert_eq!(one.mean, twice.mean);
    assert_eq!(one.mean, ba_loss(&samples[0], &config).unwrap().loss);
}
