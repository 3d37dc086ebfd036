use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor {
    let n = dims.iter().product();
    Tensor::new(dims, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn sum_of_squares_gradient() {
    let x = Tensor::vector(vec![1.0, 2.0, 3.0]);
    let err = gradient_check(
        |g, x| {
            let s = g.square(x);
            Ok(g.sum_all(s))
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");

    let mut g = Graph::new();
    let v = g.input(x.clone(), true);
    let s = g.square(v);
    let loss = g.sum_all(s);
    let grad = g.backward(loss).unwrap().wrt(&g, v).unwrap();
    assert_eq!(grad.data(), &[2.0, 4.0, 6.0]);
}

#[test]
fn linear_map_mse_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs = random(&mut rng, &[5, 3]);
    let targets = random(&mut rng, &[5, 2]);
    let w = random(&mut rng, &[3, 2]);
    let err = gradient_check(
        |g, w| {
            let x = g.constant(inputs.clone());
            let y = g.constant(targets.clone());
            let p = g.matmul(x, w)?;
            let d = g.sub(p, y)?;
            let sq = g.square(d);
            Ok(g.mean_all(sq))
        },
        &w,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn eps_outside_range_is_rejected() {
    let x = Tensor::vector(vec![1.0]);
    let r = gradient_check(|g, x| Ok(g.sum_all(x)), &x, 1e-2);
    assert!(r.is_err());
}

#[test]
fn non_finite_objective_is_an_evaluation_error() {
    let x = Tensor::vector(vec![1.0]);
    let r = gradient_check(|g, x| Ok(g.scale(x, f64::INFINITY)), &x, 1e-5);
    assert!(matches!(r, Err(crate::Error::Evaluation(_))));
}

/// Reduces an arbitrary matrix output to a scalar with fixed random weights so
/// every output coordinate contributes a distinct gradient.
fn project(g: &mut Graph<'_>, v: Var, seed: u64) -> crate::Result<Var> {
    let dims = g.value(v).dims().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = g.constant(random(&mut rng, &dims));
    let p = g.mul(v, w)?;
    Ok(g.sum_all(p))
}

#[test]
fn every_op_passes_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let other = random(&mut rng, &[3, 4]);
    let right = random(&mut rng, &[4, 2]);
    let row = random(&mut rng, &[4]);
    let gain = random(&mut rng, &[4]);
    type Case = Box<dyn Fn(&mut Graph<'_>, Var) -> crate::Result<Var>>;
    let cases: Vec<(&str, Case)> = vec![
        (
            "matmul",
            Box::new({
                let r = right.clone();
                move |g, x| {
                    let b = g.constant(r.clone());
                    g.matmul(x, b)
                }
            }),
        ),
        (
            "matmul_rhs",
            Box::new({
                let o = other.clone();
                move |g, x| {
                    let a = g.constant(o.clone());
                    let xt = g.slice_rows(x, 0, 3)?;
                    g.matmul_nt(a, xt)
                }
            }),
        ),
        (
            "matmul_nt",
            Box::new({
                let o = other.clone();
                move |g, x| {
                    let b = g.constant(o.clone());
                    g.matmul_nt(x, b)
                }
            }),
        ),
        (
            "add",
            Box::new({
                let o = other.clone();
                move |g, x| {
                    let b = g.constant(o.clone());
                    g.add(x, b)
                }
            }),
        ),
        (
            "sub",
            Box::new({
                let o = other.clone();
                move |g, x| {
                    let b = g.constant(o.clone());
                    g.sub(b, x)
                }
            }),
        ),
        ("mul", Box::new(|g, x| g.mul(x, x))),
        (
            "add_row",
            Box::new({
                let r = row.clone();
                move |g, x| {
                    let b = g.constant(r.clone());
                    g.add_row(x, b)
                }
            }),
        ),
        ("scale", Box::new(|g, x| Ok(g.scale(x, -1.7)))),
        (
            "row_scale",
            Box::new(|g, x| g.row_scale(x, vec![0.5, -2.0, 0.0])),
        ),
        ("softmax", Box::new(|g, x| g.softmax_rows(x))),
        (
            "causal_softmax",
            Box::new(|g, x| {
                let s = g.slice_cols(x, 0, 3)?;
                g.causal_softmax_rows(s)
            }),
        ),
        (
            "layer_norm",
            Box::new({
                let gn = gain.clone();
                let r = row.clone();
                move |g, x| {
                    let a = g.constant(gn.clone());
                    let b = g.constant(r.clone());
                    g.layer_norm(x, a, b)
                }
            }),
        ),
        ("gelu", Box::new(|g, x| Ok(g.gelu(x)))),
        ("square", Box::new(|g, x| Ok(g.square(x)))),
        ("slice_cols", Box::new(|g, x| g.slice_cols(x, 1, 2))),
        (
            "concat_rows",
            Box::new(|g, x| {
                let a = g.slice_rows(x, 0, 1)?;
                g.concat_rows(&[x, a])
            }),
        ),
        (
            "concat_cols",
            Box::new(|g, x| {
                let a = g.slice_cols(x, 2, 2)?;
                g.concat_cols(&[a, x])
            }),
        ),
        (
            "gather_rows",
            Box::new(|g, x| g.gather_rows(x, vec![2, 0, 2, 1])),
        ),
        ("mean_all", Box::new(|g, x| Ok(g.mean_all(x)))),
    ];
    for (seed, (name, f)) in cases.into_iter().enumerate() {
        let x = random(&mut rng, &[3, 4]);
        let err = gradient_check(
            |g, x| {
                let y = f(g, x)?;
                project(g, y, seed as u64)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{name}: {err}");
    }
}

#[test]
fn layer_norm_gain_and_bias_gradients() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gain = store.add("gain", ParamKind::Norm, random(&mut rng, &[4]));
    let bias = store.add("bias", ParamKind::Norm, random(&mut rng, &[4]));
    let x = random(&mut rng, &[3, 4]);
    let err = gradient_check_params(
        &store,
        |g| {
            let xv = g.constant(x.clone());
            let a = g.param(gain);
            let b = g.param(bias);
            let y = g.layer_norm(xv, a, b)?;
            project(g, y, 9)
        },
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn backward_is_linear_in_the_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random(&mut rng, &[2, 3]);
    let grad_of = |use_a: bool, use_b: bool| {
        let mut g = Graph::new();
        let v = g.input(x.clone(), true);
        let s = g.square(v);
        let a = g.sum_all(s);
        let e = g.gelu(v);
        let b = g.mean_all(e);
        let loss = match (use_a, use_b) {
            (true, true) => g.add(a, b).unwrap(),
            (true, false) => a,
            _ => b,
        };
        g.backward(loss).unwrap().wrt(&g, v).unwrap()
    };
    let ga = grad_of(true, false);
    let gb = grad_of(false, true);
    let gab = grad_of(true, true);
    for i in 0..ga.len() {
        assert!((ga.data()[i] + gb.data()[i] - gab.data()[i]).abs() < 1e-12);
    }
}

#[test]
fn causal_softmax_masks_future_columns() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[3, 3]));
    let s = g.causal_softmax_rows(x).unwrap();
    let v = g.value(s);
    assert_eq!(v.row(0), &[1.0, 0.0, 0.0]);
    assert_eq!(v.row(1), &[0.5, 0.5, 0.0]);
    assert_eq!(g.softmax_outputs().count(), 1);
}

#[test]
fn l1_subgradient_and_norm() {
    let mut store = ParamStore::new();
    let w = store.add("w", ParamKind::Weight, Tensor::vector(vec![3.0, -2.0, 0.0]));
    store.add("b", ParamKind::Bias, Tensor::vector(vec![10.0]));
    assert_eq!(store.l1_norm(), 5.0);
    let mut grads = Gradients::zeros_like(&store);
    grads.add_l1(&store, 0.5);
    assert_eq!(grads.get(w), &[0.5, -0.5, 0.0]);
}

proptest! {
    #[test]
    fn softmax_rows_always_normalize(
        rows in proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 5), 1..6)
    ) {
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let s = Tensor::from_rows(&refs).softmax_rows().unwrap();
        for i in 0..rows.len() {
            let sum: f64 = s.row(i).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn random_small_inputs_pass_gradient_check(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[2, 3]);
        let w = random(&mut rng, &[3, 3]);
        let err = gradient_check(
            |g, x| {
                let wv = g.constant(w.clone());
                let h = g.matmul(x, wv)?;
                let a = g.gelu(h);
                let s = g.softmax_rows(a)?;
                project(g, s, seed)
            },
            &x,
            1e-5,
        ).unwrap();
        prop_assert!(err < 1e-4);
    }
}
