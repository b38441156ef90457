//! Losses checked against explicit recomputation and central finite differences.

#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use nestemb_core::linalg::Matrix;
use nestemb_core::losses::{
    matryoshka_wrap, mnrl, mrl_e_loss, mrl_loss, softmax_ce, ClassifierStack, LabeledExample,
    LossWeights, TripletBatch,
};
use nestemb_core::DimensionLadder;
use rand::Rng;

/// -log softmax(logits)[y], computed the long way.
fn ce_oracle(logits: &[f64], y: usize) -> f64 {
    let denom: f64 = logits.iter().map(|l| l.exp()).sum();
    -(logits[y].exp() / denom).ln()
}

fn matvec_prefix(w: &Matrix, z: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; w.rows()];
    for r in 0..w.rows() {
        for j in 0..m {
            out[r] += w.get(r, j) * z[j];
        }
    }
    out
}

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, random_vec(rng, rows * cols))
}

#[test]
fn softmax_ce_gradient() {
    let mut rng = rng(11);
    for _ in 0..50 {
        let l = rng.random_range(2..10);
        let logits: Vec<f64> = random_vec(&mut rng, l).iter().map(|x| 3.0 * x).collect();
        let y = rng.random_range(0..l);
        let r = softmax_ce(&logits, y).unwrap();
        assert!((r.value - ce_oracle(&logits, y)).abs() < 1e-12);
        assert_gradient(
            &r.gradients,
            |x| softmax_ce(x, y).unwrap().value,
            &logits,
            "softmax_ce",
        );
    }
}

#[test]
fn mrl_single_dimension_reduces_to_ce() {
    let mut rng = rng(1);
    let (d, classes) = (8, 5);
    let ladder = DimensionLadder::new(vec![d]).unwrap();
    let weights = LossWeights::uniform(&ladder);
    for _ in 0..100 {
        let w = random_matrix(&mut rng, classes, d);
        let z = random_vec(&mut rng, d);
        let y = rng.random_range(0..classes);
        let stack = ClassifierStack::Independent(vec![w.clone()]);
        let ex = LabeledExample {
            embedding: z.clone(),
            label: y,
        };
        let got = mrl_loss(&ex, &stack, &weights, &ladder).unwrap().value;
        let want = softmax_ce(&matvec_prefix(&w, &z, d), y).unwrap().value;
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }
}

/// Flattens (z, W_8, W_4) so finite differences can probe every parameter.
fn mrl_two_level(
    params: &[f64],
    classes: usize,
    y: usize,
    ladder: &DimensionLadder,
    weights: &LossWeights,
) -> f64 {
    let (z, rest) = params.split_at(8);
    let (w8, w4) = rest.split_at(classes * 8);
    let stack = ClassifierStack::Independent(vec![
        Matrix::from_vec(classes, 8, w8.to_vec()),
        Matrix::from_vec(classes, 4, w4.to_vec()),
    ]);
    let ex = LabeledExample {
        embedding: z.to_vec(),
        label: y,
    };
    mrl_loss(&ex, &stack, weights, ladder).unwrap().value
}

#[test]
fn mrl_matches_explicit_oracle_and_gradients() {
    let mut rng = rng(2);
    let classes = 4;
    let ladder = DimensionLadder::new(vec![8, 4]).unwrap();
    for _ in 0..20 {
        let weights = LossWeights::new([
            (8, rng.random_range(0.1..2.0)),
            (4, rng.random_range(0.1..2.0)),
        ])
        .unwrap();
        let w8 = random_matrix(&mut rng, classes, 8);
        let w4 = random_matrix(&mut rng, classes, 4);
        let z = random_vec(&mut rng, 8);
        let y = rng.random_range(0..classes);

        let oracle = weights.get(8).unwrap() * ce_oracle(&matvec_prefix(&w8, &z, 8), y)
            + weights.get(4).unwrap() * ce_oracle(&matvec_prefix(&w4, &z, 4), y);
        let stack = ClassifierStack::Independent(vec![w8.clone(), w4.clone()]);
        let ex = LabeledExample {
            embedding: z.clone(),
            label: y,
        };
        let r = mrl_loss(&ex, &stack, &weights, &ladder).unwrap();
        assert!((r.value - oracle).abs() < 1e-10);

        let mut params = z.clone();
        params.extend_from_slice(w8.as_slice());
        params.extend_from_slice(w4.as_slice());
        let mut analytic = r.gradients.embedding.clone();
        for m in r.gradients.classifiers.matrices() {
            analytic.extend_from_slice(m.as_slice());
        }
        assert_gradient(
            &analytic,
            |p| mrl_two_level(p, classes, y, &ladder, &weights),
            &params,
            "mrl_loss",
        );
    }
}

#[test]
fn mrl_scales_linearly_in_weights() {
    let mut rng = rng(3);
    let ladder = DimensionLadder::new(vec![8, 4, 2]).unwrap();
    let stack = ClassifierStack::independent_random(&ladder, 3, &mut rng);
    let ex = LabeledExample {
        embedding: random_vec(&mut rng, 8),
        label: 2,
    };
    let w = LossWeights::new([(8, 0.5), (4, 1.5), (2, 0.25)]).unwrap();
    let doubled = LossWeights::new(w.iter().map(|(m, c)| (m, 2.0 * c))).unwrap();
    let a = mrl_loss(&ex, &stack, &w, &ladder).unwrap().value;
    let b = mrl_loss(&ex, &stack, &doubled, &ladder).unwrap().value;
    assert!((b - 2.0 * a).abs() <= 1e-12 * b.abs());
    assert!(a >= 0.0);
}

#[test]
fn mrl_e_single_dimension_equals_independent() {
    let mut rng = rng(4);
    let ladder = DimensionLadder::new(vec![6]).unwrap();
    let weights = LossWeights::uniform(&ladder);
    for _ in 0..20 {
        let w = random_matrix(&mut rng, 3, 6);
        let ex = LabeledExample {
            embedding: random_vec(&mut rng, 6),
            label: 1,
        };
        let tied = mrl_e_loss(&ex, &w, &weights, &ladder).unwrap();
        let indep = mrl_loss(
            &ex,
            &ClassifierStack::Independent(vec![w.clone()]),
            &weights,
            &ladder,
        )
        .unwrap();
        assert_eq!(tied.value, indep.value);
        assert_eq!(tied.gradients.embedding, indep.gradients.embedding);
        assert_eq!(
            tied.gradients.classifiers.matrices(),
            indep.gradients.classifiers.matrices()
        );
    }
}

#[test]
fn mrl_e_shared_column_gradients() {
    let mut rng = rng(5);
    let classes = 3;
    let ladder = DimensionLadder::new(vec![8, 4, 2]).unwrap();
    for _ in 0..20 {
        let weights =
            LossWeights::new(ladder.iter().map(|m| (m, rng.random_range(0.1..2.0)))).unwrap();
        let shared = random_matrix(&mut rng, classes, 8);
        let z = random_vec(&mut rng, 8);
        let y = rng.random_range(0..classes);
        let ex = LabeledExample {
            embedding: z.clone(),
            label: y,
        };
        let r = mrl_e_loss(&ex, &shared, &weights, &ladder).unwrap();
        assert_eq!(r.gradients.classifiers.matrices().len(), 1);

        let f = |p: &[f64]| {
            let (z, w) = p.split_at(8);
            let ex = LabeledExample {
                embedding: z.to_vec(),
                label: y,
            };
            mrl_e_loss(
                &ex,
                &Matrix::from_vec(classes, 8, w.to_vec()),
                &weights,
                &ladder,
            )
            .unwrap()
            .value
        };
        let mut params = z.clone();
        params.extend_from_slice(shared.as_slice());
        let mut analytic = r.gradients.embedding.clone();
        analytic.extend_from_slice(r.gradients.classifiers.matrices()[0].as_slice());
        assert_gradient(&analytic, f, &params, "mrl_e_loss");

        // Column 0 is shared by all three dimensions, column 7 only by the full one.
        let col = |c: usize| -> Vec<f64> {
            (0..classes)
                .map(|row| r.gradients.classifiers.matrices()[0].get(row, c))
                .collect()
        };
        let tied_only_full = mrl_e_loss(
            &ex,
            &shared,
            &LossWeights::new([(8, weights.get(8).unwrap()), (4, 0.0), (2, 0.0)]).unwrap(),
            &ladder,
        )
        .unwrap();
        let full_col7: Vec<f64> = (0..classes)
            .map(|r| tied_only_full.gradients.classifiers.matrices()[0].get(r, 7))
            .collect();
        assert_eq!(col(7), full_col7);
    }
}

/// 2 anchors, 4 candidates, scores and cross-entropy written out by hand.
#[test]
fn mnrl_matches_enumeration() {
    let a = [vec![1.0, 0.0, 0.5], vec![0.2, 1.0, -0.3]];
    let p = [vec![0.9, 0.1, 0.4], vec![0.0, 1.2, -0.1]];
    let n = [vec![-1.0, 0.3, 0.0], vec![0.5, -0.5, 1.0]];
    let scale = 20.0;
    let cos = |u: &[f64], v: &[f64]| {
        let d: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
        let nu: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nv: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        d / (nu * nv)
    };
    let candidates = [&p[0], &p[1], &n[0], &n[1]];
    let mut total = 0.0;
    for i in 0..2 {
        let scores: Vec<f64> = candidates.iter().map(|c| scale * cos(&a[i], c)).collect();
        total += ce_oracle(&scores, i);
    }
    let oracle = total / 2.0;

    let batch = TripletBatch::new(a.to_vec(), p.to_vec(), n.to_vec()).unwrap();
    let got = mnrl(&batch, scale).unwrap().value;
    assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
}

fn flatten(batch: &TripletBatch) -> Vec<f64> {
    batch
        .anchors
        .iter()
        .chain(&batch.positives)
        .chain(&batch.negatives)
        .flatten()
        .copied()
        .collect()
}

fn unflatten(flat: &[f64], b: usize, d: usize) -> TripletBatch {
    let rows: Vec<Vec<f64>> = flat.chunks(d).map(<[f64]>::to_vec).collect();
    TripletBatch::new(
        rows[..b].to_vec(),
        rows[b..2 * b].to_vec(),
        rows[2 * b..].to_vec(),
    )
    .unwrap()
}

fn random_batch(rng: &mut impl Rng, b: usize, d: usize) -> TripletBatch {
    let mut rows = || (0..b).map(|_| random_vec(rng, d)).collect::<Vec<_>>();
    TripletBatch::new(rows(), rows(), rows()).unwrap()
}

#[test]
fn mnrl_gradients() {
    let mut rng = rng(6);
    let (b, d) = (4, 8);
    for _ in 0..20 {
        let batch = random_batch(&mut rng, b, d);
        let r = mnrl(&batch, 20.0).unwrap();
        assert!(r.value >= 0.0 && r.value.is_finite());
        let analytic = flatten(&TripletBatch {
            anchors: r.gradients.anchors,
            positives: r.gradients.positives,
            negatives: r.gradients.negatives,
        });
        assert_gradient(
            &analytic,
            |x| mnrl(&unflatten(x, b, d), 20.0).unwrap().value,
            &flatten(&batch),
            "mnrl",
        );
    }
}

#[test]
fn wrap_single_dimension_is_mnrl() {
    let mut rng = rng(7);
    let batch = random_batch(&mut rng, 5, 6);
    let ladder = DimensionLadder::new(vec![6]).unwrap();
    let wrapped = matryoshka_wrap(&batch, &ladder, &LossWeights::uniform(&ladder), 20.0).unwrap();
    assert_eq!(wrapped, mnrl(&batch, 20.0).unwrap());
}

#[test]
fn wrap_is_weighted_sum_of_truncated_mnrl() {
    let mut rng = rng(8);
    let ladder = DimensionLadder::new(vec![8, 4]).unwrap();
    for _ in 0..10 {
        let batch = random_batch(&mut rng, 4, 8);
        let (c8, c4) = (rng.random_range(0.1..2.0), rng.random_range(0.1..2.0));
        let weights = LossWeights::new([(8, c8), (4, c4)]).unwrap();
        let got = matryoshka_wrap(&batch, &ladder, &weights, 20.0)
            .unwrap()
            .value;
        let want = c8 * mnrl(&batch, 20.0).unwrap().value
            + c4 * mnrl(&batch.truncated(4).unwrap(), 20.0).unwrap().value;
        assert!((got - want).abs() < 1e-10);
    }
}

#[test]
fn wrap_tail_coordinates_only_see_full_term() {
    let mut rng = rng(9);
    let ladder = DimensionLadder::new(vec![8, 4]).unwrap();
    let batch = random_batch(&mut rng, 3, 8);
    let both = matryoshka_wrap(&batch, &ladder, &LossWeights::uniform(&ladder), 20.0).unwrap();
    let full_only = mnrl(&batch, 20.0).unwrap();
    for i in 0..3 {
        for j in 4..8 {
            assert_eq!(
                both.gradients.anchors[i][j],
                full_only.gradients.anchors[i][j]
            );
            assert_eq!(
                both.gradients.negatives[i][j],
                full_only.gradients.negatives[i][j]
            );
        }
    }
}

#[test]
fn wrap_ignores_zero_weighted_dimension() {
    let mut rng = rng(10);
    let batch = random_batch(&mut rng, 4, 8);
    let base = DimensionLadder::new(vec![8]).unwrap();
    let extended = DimensionLadder::new(vec![8, 4]).unwrap();
    let a = matryoshka_wrap(&batch, &base, &LossWeights::uniform(&base), 20.0).unwrap();
    let b = matryoshka_wrap(
        &batch,
        &extended,
        &LossWeights::new([(8, 1.0), (4, 0.0)]).unwrap(),
        20.0,
    )
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn wrap_gradients() {
    let mut rng = rng(12);
    let ladder = DimensionLadder::new(vec![8, 4, 2]).unwrap();
    let (b, d) = (4, 8);
    for _ in 0..20 {
        let batch = random_batch(&mut rng, b, d);
        let weights =
            LossWeights::new(ladder.iter().map(|m| (m, rng.random_range(0.1..2.0)))).unwrap();
        let r = matryoshka_wrap(&batch, &ladder, &weights, 20.0).unwrap();
        let analytic = flatten(&TripletBatch {
            anchors: r.gradients.anchors,
            positives: r.gradients.positives,
            negatives: r.gradients.negatives,
        });
        assert_gradient(
            &analytic,
            |x| {
                matryoshka_wrap(&unflatten(x, b, d), &ladder, &weights, 20.0)
                    .unwrap()
                    .value
            },
            &flatten(&batch),
            "matryoshka_wrap",
        );
    }
}
