mod common;

use common::*;
use lingua_core::{LanguageId, TokenSeq};
use lingua_model::{Dropout, Error, Float, Graph, Model, Result, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Batch = Vec<(TokenSeq, TokenSeq)>;

fn batch(seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..3)
        .map(|_| {
            (
                random_seq(&mut rng, 20, 2, 7),
                random_seq(&mut rng, 20, 1, 6),
            )
        })
        .collect()
}

/// Mean negative log-likelihood per target token.
fn nll<T: Float>(m: &Model<T>, g: &mut Graph<'_, T>, data: &Batch, tgt: LanguageId) -> Result<Var> {
    let pairs: Vec<_> = data.iter().map(|(s, t)| (s, t)).collect();
    let scored = m.score_targets(g, &pairs, L0, tgt, &mut Dropout::off())?;
    let tokens: usize = scored.spans.iter().map(|s| s.1).sum();
    let total = g.sum(scored.per_token);
    Ok(g.scale(total, T::of(-1.0 / tokens as f64)))
}

fn loss_f64(m: &Model<f64>, data: &Batch) -> f64 {
    m.gradients(|m, g| nll(m, g, data, L1)).unwrap().0
}

/// Central differences in f64 with step `1e-4 * max(1, |theta|)`.
fn finite_difference(m: &Model<f64>, data: &Batch, param: usize, index: usize) -> f64 {
    let theta = m.params()[param].data[index];
    let h = 1e-4 * theta.abs().max(1.0);
    let mut plus = m.clone();
    plus.params_mut()[param].data[index] = theta + h;
    let mut minus = m.clone();
    minus.params_mut()[param].data[index] = theta - h;
    (loss_f64(&plus, data) - loss_f64(&minus, data)) / (2.0 * h)
}

fn coordinates(m: &Model<f64>, n: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = m.params().iter().map(|p| p.len()).collect();
    let total: usize = sizes.iter().sum();
    (0..n)
        .map(|_| {
            let mut flat = rng.gen_range(0..total);
            let mut p = 0;
            while flat >= sizes[p] {
                flat -= sizes[p];
                p += 1;
            }
            (p, flat)
        })
        .collect()
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[test]
fn analytic_gradients_match_finite_differences_f64() {
    let m: Model<f64> = tiny_model(21);
    let data = batch(22);
    let (_, grads) = m.gradients(|m, g| nll(m, g, &data, L1)).unwrap();
    let mut worst: f64 = 0.0;
    for (p, i) in coordinates(&m, 50, 23) {
        let fd = finite_difference(&m, &data, p, i);
        worst = worst.max(relative_error(grads.tensors[p].data[i], fd));
    }
    assert!(worst <= 1e-5, "worst relative error {worst}");
}

#[test]
fn analytic_gradients_match_finite_differences_f32() {
    let m32: Model<f32> = tiny_model(24);
    let m64: Model<f64> = m32.cast();
    let data = batch(25);
    let (_, grads) = m32.gradients(|m, g| nll(m, g, &data, L1)).unwrap();
    let mut worst: f64 = 0.0;
    for (p, i) in coordinates(&m64, 50, 26) {
        let fd = finite_difference(&m64, &data, p, i);
        worst = worst.max(relative_error(grads.tensors[p].data[i] as f64, fd));
    }
    assert!(worst <= 1e-3, "worst relative error {worst}");
}

#[test]
fn other_language_groups_get_exactly_zero_gradient() {
    let m: Model<f64> = tiny_model(27);
    let data = batch(28);
    let (_, grads) = m.gradients(|m, g| nll(m, g, &data, L2)).unwrap();
    let lang_table = m.layout().lang_emb;
    for (spec, g) in m.layout().specs.iter().zip(&grads.tensors) {
        match spec.language {
            Some(2) => assert!(g.data.iter().any(|&x| x != 0.0), "{}", spec.name),
            Some(_) => assert!(g.data.iter().all(|&x| x == 0.0), "{}", spec.name),
            None => {}
        }
    }
    let table = &grads.tensors[lang_table];
    assert!(table.row(0).iter().all(|&x| x == 0.0));
    assert!(table.row(1).iter().all(|&x| x == 0.0));
    assert!(table.row(2).iter().any(|&x| x != 0.0));
}

#[test]
fn gradient_of_sum_is_sum_of_position_gradients() {
    let m: Model<f64> = tiny_model(29);
    let data: Batch = batch(30).into_iter().take(1).collect();
    let pairs: Vec<_> = data.iter().map(|(s, t)| (s, t)).collect();
    let positions = data[0].1.len() + 1;
    let (_, total) = m
        .gradients(|m, g| {
            let s = m.score_targets(g, &pairs, L0, L1, &mut Dropout::off())?;
            Ok(g.sum(s.per_token))
        })
        .unwrap();
    let mut summed = lingua_model::Gradients::zeros_like(m.params());
    for pos in 0..positions {
        let (_, gp) = m
            .gradients(|m, g| {
                let s = m.score_targets(g, &pairs, L0, L1, &mut Dropout::off())?;
                let mut mask = lingua_model::Mat::zeros(positions, 1);
                mask.data[pos] = 1.0;
                let mask = g.constant(mask);
                let picked = g.matmul_t(mask, true, s.per_token, false);
                Ok(picked)
            })
            .unwrap();
        summed.add_assign(&gp);
    }
    for (a, b) in total.tensors.iter().zip(&summed.tensors) {
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }
}

#[test]
fn independent_parameter_has_zero_gradient() {
    let m: Model<f64> = tiny_model(31);
    let out_bias = m.layout().out_bias;
    let (_, grads) = m
        .gradients(|m, g| {
            let enc = m
                .encode_graph(g, &[&TokenSeq::new(vec![5, 6])], &mut Dropout::off())?
                .0;
            Ok(g.sum(enc))
        })
        .unwrap();
    assert!(grads.tensors[out_bias].data.iter().all(|&x| x == 0.0));
    assert!(grads.tensors[m.layout().lang_emb]
        .data
        .iter()
        .all(|&x| x == 0.0));
}

#[test]
fn non_finite_loss_is_an_error() {
    let m: Model<f64> = tiny_model(32);
    let err = m.gradients(|_, g| {
        let c = g.constant(lingua_model::Mat::filled(1, 1, f64::NAN));
        Ok(c)
    });
    assert!(matches!(err, Err(Error::NonFiniteLoss)));
}

#[test]
fn dropout_changes_training_pass_only() {
    let m: Model<f64> = tiny_model(33);
    let data = batch(34);
    let pairs: Vec<_> = data.iter().map(|(s, t)| (s, t)).collect();
    let eval = |m: &Model<f64>| {
        let mut g = Graph::new(m.params());
        let s = m
            .score_targets(&mut g, &pairs, L0, L1, &mut Dropout::off())
            .unwrap();
        g.value(s.per_token).clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = Graph::new(m.params());
    let s = m
        .score_targets(&mut g, &pairs, L0, L1, &mut Dropout::on(0.3, &mut rng))
        .unwrap();
    assert_ne!(g.value(s.per_token), &eval(&m));
    assert_eq!(eval(&m), eval(&m));
}
