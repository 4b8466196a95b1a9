use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slufuse::numcore::*;
use slufuse::Result;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn triple_loop(a: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
    let (m, p) = a.dims2().unwrap();
    let (_, n) = b.dims2().unwrap();
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for t in 0..p {
                s += a.data()[i * p + t] * b.data()[t * n + j];
            }
            c[i * n + j] = s;
        }
    }
    c
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = rand_tensor(&mut rng, &[5, 7]);
    let b = rand_tensor(&mut rng, &[7, 3]);
    let c = matmul(&a, &b).unwrap();
    let oracle = triple_loop(&a, &b);
    let diff = c
        .data()
        .iter()
        .zip(&oracle)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-12, "max abs diff {diff}");
}

#[test]
fn matmul_is_associative_at_value_level() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let a = rand_tensor(&mut rng, &[4, 4]);
        let b = rand_tensor(&mut rng, &[4, 4]);
        let c = rand_tensor(&mut rng, &[4, 4]);
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        assert!(left.max_abs_diff(&right) < 1e-9);
    }
}

#[test]
fn softmax_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let v: Tensor<f64> = Tensor::from_fn(&[10], |_| rng.random_range(-5.0..5.0));
    let s = softmax(&v, 0).unwrap();
    let z: f64 = v.data().iter().map(|x| x.exp()).sum();
    for (p, x) in s.data().iter().zip(v.data()) {
        assert!((p - x.exp() / z).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(
        rows in 1usize..6,
        cols in 1usize..9,
        seed in any::<u64>(),
        spread in 0.1f64..500.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t: Tensor<f64> = Tensor::from_fn(&[rows, cols], |_| rng.random_range(-spread..spread));
        let s = softmax(&t, 1).unwrap();
        for row in s.data().chunks(cols) {
            let sum: f64 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
        let s32 = softmax(&t.cast::<f32>(), 1).unwrap();
        for row in s32.data().chunks(cols) {
            let sum: f32 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
        }
    }
}

type Build = fn(&mut Graph<'_, f64>) -> Result<NodeId>;

fn p(g: &mut Graph<'_, f64>, name: &str) -> NodeId {
    let id = g.store().id(name).unwrap();
    g.param(id)
}

/// Reduce an arbitrary tensor to a scalar through a fixed random weighting,
/// so every output element influences the loss differently.
fn weighted_sum(g: &mut Graph<'_, f64>, x: NodeId) -> Result<NodeId> {
    let w = p(g, "probe");
    let m = g.mul(x, w)?;
    Ok(g.sum_all(m))
}

fn check_primitive(build: Build, shapes: &[(&str, Vec<usize>)], out_shape: &[usize], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for (name, shape) in shapes {
        store.add(*name, rand_tensor(&mut rng, shape)).unwrap();
    }
    store
        .add("probe", rand_tensor(&mut rng, out_shape))
        .unwrap();
    let report = grad_check(build, &store, 1e-5, 1e-4).unwrap();
    assert!(report.pass, "seed {seed}: {report:?}");
}

#[test]
fn every_primitive_passes_gradient_check_over_random_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 0..20u64 {
        let m = rng.random_range(1..5);
        let k = rng.random_range(1..5);
        let n = rng.random_range(1..5);

        check_primitive(
            |g| {
                let (a, b) = (p(g, "a"), p(g, "b"));
                let c = g.matmul(a, b)?;
                weighted_sum(g, c)
            },
            &[("a", vec![m, k]), ("b", vec![k, n])],
            &[m, n],
            seed,
        );
        check_primitive(
            |g| {
                let (a, b) = (p(g, "a"), p(g, "b"));
                let c = g.linear(a, b)?;
                weighted_sum(g, c)
            },
            &[("a", vec![2, m, k]), ("b", vec![k, n])],
            &[2, m, n],
            seed,
        );
        for which in 0..4 {
            let build: Build = match which {
                0 => |g| {
                    let (a, b) = (p(g, "a"), p(g, "b"));
                    let c = g.add(a, b)?;
                    weighted_sum(g, c)
                },
                1 => |g| {
                    let (a, b) = (p(g, "a"), p(g, "b"));
                    let c = g.mul(a, b)?;
                    weighted_sum(g, c)
                },
                2 => |g| {
                    let (a, b) = (p(g, "a"), p(g, "b"));
                    let c = g.sub(a, b)?;
                    weighted_sum(g, c)
                },
                _ => |g| {
                    let (a, b) = (p(g, "a"), p(g, "b"));
                    let c = g.concat_last(&[a, b])?;
                    let w = p(g, "probe2");
                    let c = g.mul(c, w)?;
                    Ok(g.sum_all(c))
                },
            };
            if which == 3 {
                let mut rng2 = ChaCha8Rng::seed_from_u64(seed);
                let mut store = ParamStore::new();
                store.add("a", rand_tensor(&mut rng2, &[m, k])).unwrap();
                store.add("b", rand_tensor(&mut rng2, &[m, n])).unwrap();
                store
                    .add("probe2", rand_tensor(&mut rng2, &[m, k + n]))
                    .unwrap();
                let r = grad_check(build, &store, 1e-5, 1e-4).unwrap();
                assert!(r.pass, "{r:?}");
            } else {
                check_primitive(
                    build,
                    &[("a", vec![m, n]), ("b", vec![m, n])],
                    &[m, n],
                    seed,
                );
            }
        }
        let unary: [Build; 6] = [
            |g| {
                let a = p(g, "a");
                let c = g.tanh(a);
                weighted_sum(g, c)
            },
            |g| {
                let a = p(g, "a");
                let c = g.sigmoid(a);
                weighted_sum(g, c)
            },
            |g| {
                let a = p(g, "a");
                let c = g.relu(a);
                weighted_sum(g, c)
            },
            |g| {
                let a = p(g, "a");
                let c = g.scale(a, -2.5);
                weighted_sum(g, c)
            },
            |g| {
                let a = p(g, "a");
                let c = g.softmax(a);
                weighted_sum(g, c)
            },
            |g| {
                let a = p(g, "a");
                let shape = g.shape(a).to_vec();
                let r = g.reshape(a, &[shape.iter().product()])?;
                let r = g.reshape(r, &shape)?;
                weighted_sum(g, r)
            },
        ];
        for build in unary {
            check_primitive(build, &[("a", vec![m, n])], &[m, n], seed);
        }
        check_primitive(
            |g| {
                let (a, b) = (p(g, "a"), p(g, "b"));
                let c = g.add_bias(a, b)?;
                weighted_sum(g, c)
            },
            &[("a", vec![m, k, n]), ("b", vec![n])],
            &[m, k, n],
            seed,
        );
        check_primitive(
            |g| {
                let t = p(g, "a");
                let x = g.gather(t, &[0, 2, 2, 1], &[2, 2], None)?;
                weighted_sum(g, x)
            },
            &[("a", vec![3, n])],
            &[2, 2, n],
            seed,
        );
        check_primitive(
            |g| {
                let a = p(g, "a");
                let n_rows = g.value(a).outer_len();
                let targets: Vec<Option<usize>> = (0..n_rows)
                    .map(|r| if r % 3 == 1 { None } else { Some(r % 2) })
                    .collect();
                g.softmax_cross_entropy(a, &targets, 1.7)
            },
            &[("a", vec![m + 1, 2])],
            &[1],
            seed,
        );
    }
}

#[test]
fn matmul_chain_backward_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    for name in ["a", "b", "c"] {
        store.add(name, rand_tensor(&mut rng, &[3, 3])).unwrap();
    }
    let r = grad_check(
        |g| {
            let (a, b, c) = (p(g, "a"), p(g, "b"), p(g, "c"));
            let ab = g.matmul(a, b)?;
            let abc = g.matmul(ab, c)?;
            let t = g.tanh(abc);
            Ok(g.sum_all(t))
        },
        &store,
        1e-5,
        1e-6,
    )
    .unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn sigmoid_dense_softmax_ce_composite_passes() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store = ParamStore::new();
    store.add("x", rand_tensor(&mut rng, &[4, 5])).unwrap();
    store.add("w", rand_tensor(&mut rng, &[5, 3])).unwrap();
    store.add("b", rand_tensor(&mut rng, &[3])).unwrap();
    let r = grad_check(
        |g| {
            let (x, w, b) = (p(g, "x"), p(g, "w"), p(g, "b"));
            let s = g.sigmoid(x);
            let z = g.matmul(s, w)?;
            let z = g.add_bias(z, b)?;
            g.softmax_cross_entropy(z, &[Some(0), Some(2), Some(1), Some(2)], 4.0)
        },
        &store,
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(r.pass, "{r:?}");
}
