use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slufuse::fusion::*;
use slufuse::layers::Init;
use slufuse::numcore::*;
use slufuse::rng::{stream, Purpose};

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

struct Draw {
    m: usize,
    n: usize,
    k: usize,
    l: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Draw {
    fn random(rng: &mut ChaCha8Rng, m: usize, n: usize, k: usize, l: usize) -> Self {
        Draw {
            m,
            n,
            k,
            l,
            u: rand_vec(rng, l * m * k),
            v: rand_vec(rng, l * n * k),
            b: rand_vec(rng, l),
        }
    }

    fn store(&self) -> (ParamStore<f64>, MlbParams) {
        let mut s = ParamStore::new();
        let p = MlbParams {
            m: self.m,
            n: self.n,
            k: self.k,
            l: self.l,
            u: s.add(
                "u",
                Tensor::new(&[self.l, self.m, self.k], self.u.clone()).unwrap(),
            )
            .unwrap(),
            v: s.add(
                "v",
                Tensor::new(&[self.l, self.n, self.k], self.v.clone()).unwrap(),
            )
            .unwrap(),
            b: s.add("b", Tensor::new(&[self.l], self.b.clone()).unwrap())
                .unwrap(),
        };
        (s, p)
    }

    /// `W_i = U_i V_iᵀ`, m × n.
    fn w(&self, i: usize) -> DMatrix<f64> {
        let u = DMatrix::from_row_slice(
            self.m,
            self.k,
            &self.u[i * self.m * self.k..(i + 1) * self.m * self.k],
        );
        let v = DMatrix::from_row_slice(
            self.n,
            self.k,
            &self.v[i * self.n * self.k..(i + 1) * self.n * self.k],
        );
        u * v.transpose()
    }

    /// Explicit bilinear form `xᵀ W_i y + b_i`.
    fn explicit(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        (0..self.l)
            .map(|i| {
                let w = self.w(i);
                let mut s = self.b[i];
                for a in 0..self.m {
                    for c in 0..self.n {
                        s += x[a] * w[(a, c)] * y[c];
                    }
                }
                s
            })
            .collect()
    }

    fn fuse(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let (s, p) = self.store();
        let rows = x.len() / self.m;
        let mut g = Graph::new(&s);
        let xn = g.input(Tensor::new(&[rows, self.m], x.to_vec()).unwrap());
        let yn = g.input(Tensor::new(&[rows, self.n], y.to_vec()).unwrap());
        let f = mlb_fuse(&mut g, xn, yn, &p).unwrap();
        g.value(f).data().to_vec()
    }
}

fn random_dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize, usize) {
    let m = rng.random_range(2..=16);
    let n = rng.random_range(2..=16);
    let k = rng.random_range(1..m.min(n));
    let l = rng.random_range(1..=8);
    (m, n, k, l)
}

#[test]
fn low_rank_form_matches_explicit_bilinear_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let (m, n, k, l) = random_dims(&mut rng);
        let d = Draw::random(&mut rng, m, n, k, l);
        let x = rand_vec(&mut rng, m);
        let y = rand_vec(&mut rng, n);
        let got = d.fuse(&x, &y);
        for (a, e) in got.iter().zip(d.explicit(&x, &y)) {
            worst = worst.max((a - e).abs());
        }
    }
    assert!(worst < 1e-9, "max abs diff {worst}");
}

#[test]
fn factored_weights_have_bounded_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..100 {
        let (m, n, k, l) = random_dims(&mut rng);
        let d = Draw::random(&mut rng, m, n, k, l);
        for i in 0..l {
            let sv = d.w(i).singular_values();
            let rank = sv.iter().filter(|&&s| s > 1e-10).count();
            assert!(rank <= k, "rank {rank} > k {k}");
        }
    }
}

#[test]
fn parameter_counts() {
    let mut s = ParamStore::<f64>::new();
    let mut init = Init::new(&mut s, stream(1, Purpose::Init, 0));
    let p = MlbParams::new(&mut init, "mlb", 128, 128, 32, 128).unwrap();
    assert_eq!(p.parameter_count(), 128 * 256 * 32 + 128);
    assert_eq!(s.element_count(), p.parameter_count());
    assert_eq!(p.full_bilinear_count(), 128 * (128 * 128 + 1));
    assert!(p.parameter_count() < p.full_bilinear_count());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counts_and_equivalence_over_dims(m in 2usize..=16, n in 2usize..=16, kk in 0usize..15, l in 1usize..=8, seed in any::<u64>()) {
        let k = 1 + kk % (m.min(n) - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Draw::random(&mut rng, m, n, k, l);
        let (_, p) = d.store();
        prop_assert_eq!(p.parameter_count(), l * (m + n) * k + l);
        if k * (m + n) < m * n {
            prop_assert!(p.parameter_count() < p.full_bilinear_count());
        }
        let x = rand_vec(&mut rng, m);
        let y = rand_vec(&mut rng, n);
        for (a, e) in d.fuse(&x, &y).iter().zip(d.explicit(&x, &y)) {
            prop_assert!((a - e).abs() < 1e-9);
        }
    }

    #[test]
    fn fusion_is_bilinear(seed in any::<u64>(), alpha in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n, k, l) = random_dims(&mut rng);
        let d = Draw::random(&mut rng, m, n, k, l);
        let x1 = rand_vec(&mut rng, m);
        let x2 = rand_vec(&mut rng, m);
        let y = rand_vec(&mut rng, n);
        let scaled: Vec<f64> = x1.iter().map(|v| alpha * v).collect();
        let sum: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a + b).collect();
        let f1 = d.fuse(&x1, &y);
        let f2 = d.fuse(&x2, &y);
        let fs = d.fuse(&scaled, &y);
        let fa = d.fuse(&sum, &y);
        for i in 0..l {
            prop_assert!((fs[i] - (alpha * (f1[i] - d.b[i]) + d.b[i])).abs() < 1e-9);
            prop_assert!((fa[i] - (f1[i] + f2[i] - d.b[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn dense_add_commutes(a in prop::collection::vec(-10.0f64..10.0, 6), b in prop::collection::vec(-10.0f64..10.0, 6)) {
        let s = ParamStore::<f64>::new();
        let mut g = Graph::new(&s);
        let x = g.input(Tensor::new(&[1, 2, 3], a).unwrap());
        let y = g.input(Tensor::new(&[1, 2, 3], b).unwrap());
        let xy = dense_add(&mut g, x, y).unwrap();
        let yx = dense_add(&mut g, y, x).unwrap();
        prop_assert_eq!(g.value(xy), g.value(yx));
    }
}

#[test]
fn mlb_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let d = Draw::random(&mut rng, 4, 3, 2, 3);
    let (mut s, p) = d.store();
    let x = s
        .add(
            "x",
            Tensor::new(&[2, 3, 4], rand_vec(&mut rng, 24)).unwrap(),
        )
        .unwrap();
    let y = s
        .add(
            "y",
            Tensor::new(&[2, 3, 3], rand_vec(&mut rng, 18)).unwrap(),
        )
        .unwrap();
    let w = Tensor::new(&[2, 3, 3], rand_vec(&mut rng, 18)).unwrap();
    let r = grad_check(
        |g| {
            let (xn, yn) = (g.param(x), g.param(y));
            let f = mlb_fuse(g, xn, yn, &p)?;
            let wn = g.input(w.clone());
            let prod = g.mul(f, wn)?;
            Ok(g.sum_all(prod))
        },
        &s,
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(r.pass, "{:?}", r.per_param);
}

#[test]
fn dense_add_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let mut s = ParamStore::new();
    let x = s
        .add("x", Tensor::new(&[2, 3], rand_vec(&mut rng, 6)).unwrap())
        .unwrap();
    let y = s
        .add("y", Tensor::new(&[2, 3], rand_vec(&mut rng, 6)).unwrap())
        .unwrap();
    let r = grad_check(
        |g| {
            let (xn, yn) = (g.param(x), g.param(y));
            let z = dense_add(g, xn, yn)?;
            let t = g.tanh(z);
            Ok(g.sum_all(t))
        },
        &s,
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(r.pass);
}

#[test]
fn broadcast_gradient_sums_over_positions() {
    let mut s = ParamStore::new();
    let v = s
        .add(
            "v",
            Tensor::from_f64(&[2, 3], &[0.1, -0.2, 0.3, 0.4, 0.5, -0.6]).unwrap(),
        )
        .unwrap();
    let len = 5;
    let f = |g: &mut Graph<'_, f64>| {
        let vn = g.param(v);
        let b = broadcast_intent(g, vn, len)?;
        Ok(g.sum_all(b))
    };
    let r = grad_check(f, &s, 1e-5, 1e-4).unwrap();
    assert!(r.pass);
    let mut g = Graph::new(&s);
    let loss = f(&mut g).unwrap();
    let grads = g.backward(loss).unwrap();
    assert!(grads
        .get(v)
        .data()
        .iter()
        .all(|&d| (d - len as f64).abs() < 1e-12));
}
