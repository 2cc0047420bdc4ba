use std::sync::Arc;

use rand::Rng;

use super::gradcheck::{max_relative_error, weighted_sum, DEFAULT_STEP};
use super::*;
use crate::rng;

const TOLERANCE: f64 = 1e-4;

fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut r = rng::stream(seed, "gradcheck");
    let data = (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

fn assert_grad<F>(name: &str, inputs: &[Tensor], build: F)
where
    F: Fn(&mut Tape, &[Var]) -> crate::Result<Var>,
{
    let err = max_relative_error(inputs, DEFAULT_STEP, build).unwrap();
    assert!(err < TOLERANCE, "{name}: relative error {err:e}");
}

#[test]
fn matmul_gradient() {
    let w = random(4, 3, 9);
    assert_grad("matmul", &[random(4, 5, 1), random(5, 3, 2)], |t, v| {
        let y = t.matmul(v[0], v[1])?;
        weighted_sum(t, y, &w)
    });
}

#[test]
fn elementwise_gradients() {
    let w = random(3, 4, 10);
    assert_grad("add", &[random(3, 4, 1), random(3, 4, 2)], |t, v| {
        let y = t.add(v[0], v[1])?;
        weighted_sum(t, y, &w)
    });
    assert_grad("add_row", &[random(3, 4, 3), random(1, 4, 4)], |t, v| {
        let y = t.add_row(v[0], v[1])?;
        weighted_sum(t, y, &w)
    });
    assert_grad("relu", &[random(3, 4, 5)], |t, v| {
        let y = t.relu(v[0])?;
        weighted_sum(t, y, &w)
    });
    assert_grad("leaky_relu", &[random(3, 4, 6)], |t, v| {
        let y = t.leaky_relu(v[0], 0.2)?;
        weighted_sum(t, y, &w)
    });
    assert_grad("scale_by", &[random(3, 4, 7), random(1, 1, 8)], |t, v| {
        let y = t.scale_by(v[0], v[1])?;
        weighted_sum(t, y, &w)
    });
    let mask = random(3, 4, 11);
    assert_grad("mul_const", &[random(3, 4, 12)], |t, v| {
        let y = t.mul_const(v[0], mask.clone())?;
        let y = t.scale(y, 0.7)?;
        weighted_sum(t, y, &w)
    });
    assert_grad("mean", &[random(3, 4, 13)], |t, v| {
        let y = t.mul_const(v[0], w.clone())?;
        t.mean(y)
    });
}

#[test]
fn concat_gradient() {
    let w = random(3, 5, 20);
    assert_grad("concat", &[random(3, 2, 21), random(3, 3, 22)], |t, v| {
        let y = t.concat_cols(&[v[0], v[1]])?;
        weighted_sum(t, y, &w)
    });
}

#[test]
fn softmax_and_cross_entropy_gradients() {
    let w = random(4, 3, 30);
    for temp in [1.0, 0.5, 20.0] {
        assert_grad("softmax", &[random(4, 3, 31)], |t, v| {
            let y = t.softmax(v[0], temp)?;
            weighted_sum(t, y, &w)
        });
    }
    assert_grad("cross_entropy", &[random(4, 3, 32).map(|x| 3.0 * x)], |t, v| {
        t.softmax_cross_entropy(v[0], &[0, 2, 1, 2])
    });
}

#[test]
fn cross_entropy_gradient_matches_eager_rule() {
    let logits = random(5, 4, 33);
    let labels = [3, 0, 1, 1, 2];
    let mut tape = Tape::new();
    let z = tape.input(logits.clone());
    let loss = tape.softmax_cross_entropy(z, &labels).unwrap();
    let grads = tape.backward(loss).unwrap();
    let eager = cross_entropy_loss(&softmax_with_temperature(&logits, 1.0).unwrap(), &labels).unwrap();
    assert!((eager.loss - tape.value(loss).data()[0]).abs() < 1e-12);
    for (a, b) in grads.get(z).unwrap().data().iter().zip(eager.logit_grad.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn ring_messages(n: usize) -> Arc<MessageList> {
    let mut msgs = Vec::new();
    for v in 0..n {
        for u in [v, (v + 1) % n, (v + n - 1) % n] {
            msgs.push(Message {
                dst: v,
                src: u,
                weight: 1.0 / (1 + u + v) as f64,
            });
        }
    }
    Arc::new(MessageList::new(n, n, msgs).unwrap())
}

#[test]
fn message_passing_gradients() {
    let msgs = ring_messages(4);
    let w = random(4, 3, 40);
    assert_grad("propagate", &[random(4, 3, 41)], |t, v| {
        let y = t.propagate(v[0], &msgs)?;
        weighted_sum(t, y, &w)
    });
    let e_w = random(msgs.len(), 1, 42);
    assert_grad("edge_scores", &[random(4, 1, 43), random(4, 1, 44)], |t, v| {
        let y = t.edge_scores(v[0], v[1], &msgs)?;
        weighted_sum(t, y, &e_w)
    });
    assert_grad("edge_softmax", &[random(msgs.len(), 1, 45)], |t, v| {
        let y = t.edge_softmax(v[0], &msgs)?;
        weighted_sum(t, y, &e_w)
    });
    assert_grad(
        "weighted_propagate",
        &[random(4, 3, 46), random(msgs.len(), 1, 47)],
        |t, v| {
            let y = t.weighted_propagate(v[0], v[1], &msgs)?;
            weighted_sum(t, y, &w)
        },
    );
}

#[test]
fn shared_nodes_accumulate() {
    let w = random(3, 3, 50);
    assert_grad("x·x", &[random(3, 3, 51)], |t, v| {
        let y = t.matmul(v[0], v[0])?;
        let y = t.add(y, v[0])?;
        weighted_sum(t, y, &w)
    });
}

#[test]
fn non_finite_is_an_error() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::scalar(f64::MAX));
    assert!(matches!(tape.scale(x, 10.0), Err(crate::Error::NonFinite(_))));
}

#[test]
fn matmul_matches_triple_loop() {
    let a = random(4, 5, 60);
    let b = random(5, 3, 61);
    let c = a.matmul(&b).unwrap();
    for i in 0..4 {
        for j in 0..3 {
            let mut s = 0.0;
            for k in 0..5 {
                s += a.get(i, k) * b.get(k, j);
            }
            assert!((c.get(i, j) - s).abs() < 1e-12);
        }
    }
}
