//! Dense linear algebra with a reverse-mode differentiation tape.
//!
//! Forward values are computed eagerly as operations are recorded; a single
//! reverse sweep over the [`Tape`] yields gradients for any set of
//! differentiable leaves. Sparse operands (the propagation matrix) enter
//! only as constants.

mod dense;
mod tape;

pub use dense::DenseMatrix;
pub use tape::{kl_rows_value, Tape, Var, PROB_FLOOR};

/// Per-thread counts of model forward passes and backward sweeps, used to
/// audit the per-epoch cost of each training mode.
pub mod counters {
    use std::cell::Cell;

    thread_local! {
        static FORWARD: Cell<u64> = const { Cell::new(0) };
        static BACKWARD: Cell<u64> = const { Cell::new(0) };
    }

    #[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
    pub struct PassCounts {
        pub forward: u64,
        pub backward: u64,
    }

    impl std::ops::Sub for PassCounts {
        type Output = PassCounts;

        fn sub(self, rhs: PassCounts) -> PassCounts {
            PassCounts {
                forward: self.forward - rhs.forward,
                backward: self.backward - rhs.backward,
            }
        }
    }

    pub fn snapshot() -> PassCounts {
        PassCounts {
            forward: FORWARD.with(Cell::get),
            backward: BACKWARD.with(Cell::get),
        }
    }

    pub(crate) fn record_forward() {
        FORWARD.with(|c| c.set(c.get() + 1));
    }

    pub(crate) fn record_backward() {
        BACKWARD.with(|c| c.set(c.get() + 1));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DenseMatrix {
        DenseMatrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-scale..scale)).collect())
    }

    /// Central differences of `f` around `x`, one coordinate at a time.
    fn central_difference(x: &DenseMatrix, step: f64, f: impl Fn(&DenseMatrix) -> f64) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(x.n_rows(), x.n_cols());
        for k in 0..x.data().len() {
            let mut plus = x.clone();
            plus.data_mut()[k] += step;
            let mut minus = x.clone();
            minus.data_mut()[k] -= step;
            out.data_mut()[k] = (f(&plus) - f(&minus)) / (2.0 * step);
        }
        out
    }

    #[test]
    fn relu_sum_gradient_is_ones_for_positive_input() {
        let mut tape = Tape::new();
        let x = tape.leaf(DenseMatrix::from_rows(&[vec![0.5, 2.0], vec![3.0, 0.1]]), true);
        let r = tape.relu(x);
        let s = tape.sum(r);
        let g = tape.backward(s, &[x]).unwrap();
        assert_eq!(g[0], DenseMatrix::filled(2, 2, 1.0));
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(DenseMatrix::from_rows(&[vec![0.0, -1.0, 1.0]]), true);
        let r = tape.relu(x);
        let s = tape.sum(r);
        let g = tape.backward(s, &[x]).unwrap();
        assert_eq!(g[0].data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn frobenius_gradient_is_twice_input() {
        let mut tape = Tape::new();
        let value = DenseMatrix::from_rows(&[vec![1.0, -2.0], vec![0.25, 4.0]]);
        let x = tape.leaf(value.clone(), true);
        let f = tape.frobenius_norm_squared(x);
        assert_eq!(tape.scalar(f).unwrap(), 1.0 + 4.0 + 0.0625 + 16.0);
        let g = tape.backward(f, &[x]).unwrap();
        assert_eq!(g[0], value.scale(2.0));
    }

    #[test]
    fn cross_entropy_of_softmax_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let z = random_matrix(&mut rng, 5, 4, 2.0);
            let targets: Vec<(usize, usize)> = (0..5).map(|r| (r, rng.random_range(0..4))).collect();
            let loss = |z: &DenseMatrix| {
                let mut t = Tape::new();
                let v = t.constant(z.clone());
                let p = t.softmax_rows(v);
                let l = t.masked_cross_entropy(p, &targets).unwrap();
                t.scalar(l).unwrap()
            };
            let mut tape = Tape::new();
            let zv = tape.leaf(z.clone(), true);
            let p = tape.softmax_rows(zv);
            let l = tape.masked_cross_entropy(p, &targets).unwrap();
            let analytic = &tape.backward(l, &[zv]).unwrap()[0];
            let numeric = central_difference(&z, 1e-5, loss);
            for (a, n) in analytic.data().iter().zip(numeric.data()) {
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
                assert!(rel < 1e-4, "analytic {a} numeric {n}");
            }
        }
    }

    #[test]
    fn composite_chain_matches_finite_differences() {
        // sum(kl(softmax(S·relu(X W + b)), q)) through every recorded primitive.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = std::sync::Arc::new(
            crate::graph::SparseMatrix::from_triplets(
                3,
                3,
                [
                    (0, 0, 0.5),
                    (0, 1, 0.5),
                    (1, 0, 0.5),
                    (1, 1, 0.3),
                    (1, 2, 0.2),
                    (2, 2, 1.0),
                ],
            )
            .unwrap(),
        );
        let x0 = random_matrix(&mut rng, 3, 4, 1.0);
        let w = random_matrix(&mut rng, 4, 3, 1.0);
        let b = random_matrix(&mut rng, 1, 3, 0.5);
        let q = {
            let mut t = Tape::new();
            let v = t.constant(random_matrix(&mut rng, 2, 3, 1.0));
            let sm = t.softmax_rows(v);
            t.value(sm).clone()
        };
        let build = |t: &mut Tape, x: Var| {
            let wv = t.constant(w.clone());
            let bv = t.constant(b.clone());
            let h = t.matmul(x, wv).unwrap();
            let h = t.add_row_bias(h, bv).unwrap();
            let h = t.relu(h);
            let h = t.sparse_matmul(&s, h).unwrap();
            let h = t.scale(h, 1.5);
            let p = t.softmax_rows(h);
            let g = t.gather_rows(p, &[2, 0]).unwrap();
            let kl = t.kl_rows(g, q.clone()).unwrap();
            let m = t.mean(kl).unwrap();
            let fro = t.frobenius_norm_squared(x);
            let fro = t.scale(fro, 0.1);
            t.add(m, fro).unwrap()
        };
        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone(), true);
        let out = build(&mut tape, x);
        let analytic = tape.backward(out, &[x]).unwrap().remove(0);
        let numeric = central_difference(&x0, 1e-6, |xv| {
            let mut t = Tape::new();
            let x = t.constant(xv.clone());
            let o = build(&mut t, x);
            t.scalar(o).unwrap()
        });
        let err = analytic.zip_map(&numeric, |a, n| a - n).frobenius_norm_squared().sqrt();
        assert!(err / numeric.frobenius_norm_squared().sqrt() < 1e-6);
    }

    #[test]
    fn unreached_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let a = tape.leaf(DenseMatrix::filled(2, 3, 1.0), true);
        let b = tape.leaf(DenseMatrix::filled(1, 1, 2.0), true);
        let s = tape.sum(a);
        let g = tape.backward(s, &[a, b]).unwrap();
        assert_eq!(g[1], DenseMatrix::zeros(1, 1));
    }

    #[test]
    fn backward_usage_errors() {
        let mut tape = Tape::new();
        let a = tape.leaf(DenseMatrix::filled(2, 2, 1.0), true);
        let c = tape.constant(DenseMatrix::filled(2, 2, 1.0));
        let r = tape.relu(a);
        assert!(tape.backward(r, &[a]).is_err(), "non-scalar target");
        let s = tape.sum(r);
        assert!(tape.backward(s, &[c]).is_err(), "constant leaf");
        assert!(tape.backward(s, &[r]).is_err(), "interior node");
    }

    #[test]
    fn shape_mismatch_is_usage_error() {
        let mut tape = Tape::new();
        let a = tape.constant(DenseMatrix::zeros(2, 3));
        let b = tape.constant(DenseMatrix::zeros(2, 3));
        assert!(tape.matmul(a, b).is_err());
        assert!(tape.add_row_bias(a, b).is_err());
    }

    #[test]
    fn replay_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = random_matrix(&mut rng, 4, 3, 3.0);
        let run = || {
            let mut t = Tape::new();
            let v = t.leaf(z.clone(), true);
            let p = t.softmax_rows(v);
            let l = t.masked_cross_entropy(p, &[(0, 1), (3, 2)]).unwrap();
            (t.value(p).clone(), t.backward(l, &[v]).unwrap())
        };
        assert_eq!(run(), run());
    }

    fn softmax(z: &DenseMatrix) -> DenseMatrix {
        let mut t = Tape::new();
        let v = t.constant(z.clone());
        let p = t.softmax_rows(v);
        t.value(p).clone()
    }

    proptest! {
        #[test]
        fn softmax_rows_are_distributions(vals in prop::collection::vec(-30.0f64..30.0, 12)) {
            let p = softmax(&DenseMatrix::from_vec(3, 4, vals));
            for row in p.rows() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert!(row.iter().all(|&x| x > 0.0));
            }
        }

        #[test]
        fn kl_is_zero_on_diagonal_and_nonnegative(
            a in prop::collection::vec(-10.0f64..10.0, 8),
            b in prop::collection::vec(-10.0f64..10.0, 8),
        ) {
            let p = softmax(&DenseMatrix::from_vec(2, 4, a));
            let q = softmax(&DenseMatrix::from_vec(2, 4, b));
            prop_assert!(kl_rows_value(&p, &p).data().iter().all(|&v| v == 0.0));
            // Gibbs' inequality, up to summation rounding.
            prop_assert!(kl_rows_value(&p, &q).data().iter().all(|&v| v >= -1e-15));
        }
    }
}
