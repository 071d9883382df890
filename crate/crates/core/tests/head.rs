mod common;

use conceptmine::head::{
    accuracy, elastic_net_penalty, objective, smooth_gradient, smooth_objective, train_head,
    train_head_with, HeadData, HeadTrainConfig, SparseHead,
};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Linearly separable CAV-like data: class `j` lights up concepts `2j` and
/// `2j+1`.
fn separable(n_per_class: usize, n_classes: usize, seed: u64) -> (Array2<f64>, Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_per_class * n_classes;
    let d_c = 2 * n_classes;
    let labels: Vec<usize> = (0..n).map(|i| i / n_per_class).collect();
    let z = Array2::from_shape_fn((n, d_c), |(i, k)| {
        if k / 2 == labels[i] {
            rng.random_range(0.7..1.0)
        } else {
            rng.random_range(0.0..0.3)
        }
    });
    let g = Array2::from_shape_fn((n, 2), |_| rng.random_range(-0.1..0.1));
    (z, g, labels)
}

fn data<'a>(z: &'a Array2<f64>, g: &'a Array2<f64>, labels: &'a [usize], l: usize) -> HeadData<'a> {
    HeadData {
        z: z.view(),
        g: g.view(),
        labels,
        n_classes: l,
    }
}

#[test]
fn unpenalized_fit_matches_independent_optimizer() {
    let (z, g, labels) = separable(10, 3, 0);
    let d = data(&z, &g, &labels, 3);
    let cfg = HeadTrainConfig {
        lambda: 0.0,
        epochs: 4000,
        lr: 10.0,
        ..Default::default()
    };
    let fit = train_head(&d, &cfg).unwrap();
    let ours = *fit.objectives.last().unwrap();
    let oracle = common::logistic_oracle(z.view(), g.view(), &labels, 3, 20000);
    assert_eq!(accuracy(z.view(), g.view(), &labels, &fit.head), 100.0);
    assert!((ours - oracle).abs() <= 1e-3, "ours {ours}, oracle {oracle}");
}

#[test]
fn objective_never_increases() {
    let (z, g, labels) = separable(15, 4, 1);
    let d = data(&z, &g, &labels, 4);
    for lambda in [0.0, 0.007, 0.1] {
        let cfg = HeadTrainConfig {
            lambda,
            lr: 5.0,
            epochs: 300,
            ..Default::default()
        };
        let fit = train_head(&d, &cfg).unwrap();
        assert_eq!(fit.objectives.len(), 301);
        for w in fit.objectives.windows(2) {
            assert!(w[1] <= w[0], "lambda {lambda}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn every_prox_step_respects_the_dead_zone() {
    let (z, g, labels) = separable(10, 3, 2);
    let d = data(&z, &g, &labels, 3);
    let cfg = HeadTrainConfig {
        lambda: 0.05,
        gamma: 0.7,
        epochs: 150,
        ..Default::default()
    };
    let mut steps = 0;
    train_head_with(&d, &cfg, None, &mut |s| {
        steps += 1;
        assert!((s.threshold - s.step * cfg.lambda * cfg.gamma).abs() <= 1e-15);
        for (&pre, &post) in s.pre.iter().zip(s.post.iter()) {
            if pre.abs() <= s.threshold {
                assert_eq!(post, 0.0);
            } else {
                assert_eq!(post, pre - pre.signum() * s.threshold);
                assert!(post.abs() > 0.0);
            }
        }
    })
    .unwrap();
    assert!(steps > 0);
}

#[test]
fn huge_lambda_kills_concept_weights() {
    let (z, g, labels) = separable(10, 3, 3);
    let d = data(&z, &g, &labels, 3);
    let cfg = HeadTrainConfig {
        lambda: 1e6,
        gamma: 1.0,
        ..Default::default()
    };
    let fit = train_head(&d, &cfg).unwrap();
    assert!(fit.head.w1.iter().map(|v| v.abs()).sum::<f64>() <= 1e-6);
}

#[test]
fn zero_fraction_grows_with_lambda() {
    let (z, g, labels) = separable(20, 4, 4);
    let d = data(&z, &g, &labels, 4);
    let zeros: Vec<f64> = [0.0, 0.01, 0.1, 1.0]
        .iter()
        .map(|&lambda| {
            let cfg = HeadTrainConfig {
                lambda,
                ..Default::default()
            };
            let w1 = train_head(&d, &cfg).unwrap().head.w1;
            w1.iter().filter(|v| **v == 0.0).count() as f64 / w1.len() as f64
        })
        .collect();
    for w in zeros.windows(2) {
        assert!(w[1] >= w[0], "{zeros:?}");
    }
    assert!(zeros[3] > zeros[0]);
}

#[test]
fn smooth_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (z, g, labels) = separable(5, 3, 5);
    let d = data(&z, &g, &labels, 3);
    let (lambda, gamma) = (0.3, 0.4);
    let mut head = SparseHead::zeros(6, 2, 3);
    head.w1.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    head.w2.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    head.b.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    let (gw1, gw2, gb) = smooth_gradient(&d, &head, lambda, gamma);

    let num_w1 = common::finite_difference(&head.w1, 1e-5, |w| {
        let mut h = head.clone();
        h.w1 = w.clone();
        smooth_objective(&d, &h, lambda, gamma)
    });
    let num_w2 = common::finite_difference(&head.w2, 1e-5, |w| {
        let mut h = head.clone();
        h.w2 = w.clone();
        smooth_objective(&d, &h, lambda, gamma)
    });
    let b2 = head.b.clone().insert_axis(ndarray::Axis(0));
    let num_b = common::finite_difference(&b2, 1e-5, |b| {
        let mut h = head.clone();
        h.b = b.row(0).to_owned();
        smooth_objective(&d, &h, lambda, gamma)
    });
    assert!(common::relative_error(&gw1, &num_w1) <= 1e-4);
    assert!(common::relative_error(&gw2, &num_w2) <= 1e-4);
    assert!(common::relative_error(&gb.insert_axis(ndarray::Axis(0)), &num_b) <= 1e-4);
}

#[test]
fn objective_matches_reference_evaluation() {
    let (z, g, labels) = separable(4, 3, 7);
    let d = data(&z, &g, &labels, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut head = SparseHead::zeros(6, 2, 3);
    head.w1.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    head.w2.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    head.b = Array1::from(vec![0.1, -0.2, 0.3]);

    let mut x = Array2::<f64>::ones((12, 9));
    x.slice_mut(ndarray::s![.., ..6]).assign(&z);
    x.slice_mut(ndarray::s![.., 6..8]).assign(&g);
    let mut theta = Array2::<f64>::zeros((9, 3));
    theta.slice_mut(ndarray::s![..6, ..]).assign(&head.w1);
    theta.slice_mut(ndarray::s![6..8, ..]).assign(&head.w2);
    theta.row_mut(8).assign(&head.b);
    let ce = common::cross_entropy_reference(&x, &labels, &theta);

    let (lambda, gamma) = (0.2, 0.5);
    let mut penalty = 0.0;
    for &w in head.w1.iter() {
        penalty += (1.0 - gamma) * 0.5 * w * w + gamma * w.abs();
    }
    let want = ce + lambda * penalty;
    assert!((objective(&d, &head, lambda, gamma) - want).abs() <= 1e-12);
    assert!((elastic_net_penalty(head.w1.view(), lambda, gamma) - lambda * penalty).abs() <= 1e-12);
}

#[test]
fn training_is_deterministic() {
    let (z, g, labels) = separable(10, 3, 9);
    let d = data(&z, &g, &labels, 3);
    let cfg = HeadTrainConfig::default();
    assert_eq!(train_head(&d, &cfg).unwrap(), train_head(&d, &cfg).unwrap());
}
