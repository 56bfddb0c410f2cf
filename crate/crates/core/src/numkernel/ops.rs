use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Matrix;

/// Lower clamp applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

fn check(op: &'static str, ok: bool, a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            op,
            left: a,
            right: b,
        })
    }
}

/// `a · b`.
pub fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    check("matmul", a.cols() == b.rows(), a.shape(), b.shape())?;
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = Matrix::zeros(n, m);
    let bd = b.data();
    for i in 0..n {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for (p, &aip) in arow.iter().enumerate().take(k) {
            if aip == T::zero() {
                continue;
            }
            let brow = &bd[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Ok(out)
}

/// `aᵀ · b` without materializing the transpose.
pub fn matmul_tn<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    check("matmul_tn", a.rows() == b.rows(), a.shape(), b.shape())?;
    let (k, m) = (a.cols(), b.cols());
    let mut out = Matrix::zeros(k, m);
    for r in 0..a.rows() {
        let arow = a.row(r);
        let brow = b.row(r);
        for (i, &ari) in arow.iter().enumerate() {
            if ari == T::zero() {
                continue;
            }
            let orow = out.row_mut(i);
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += ari * bv;
            }
        }
    }
    Ok(out)
}

/// `a · bᵀ` without materializing the transpose.
pub fn matmul_nt<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    check("matmul_nt", a.cols() == b.cols(), a.shape(), b.shape())?;
    let (n, m) = (a.rows(), b.rows());
    let mut out = Matrix::zeros(n, m);
    for i in 0..n {
        let arow = a.row(i);
        for j in 0..m {
            let brow = b.row(j);
            let mut acc = T::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

pub fn column_sums<T: Scalar>(m: &Matrix<T>) -> Vec<T> {
    let mut sums = vec![T::zero(); m.cols()];
    for row in m.row_iter() {
        for (s, &v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    sums
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows<T: Scalar>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean of `-ln(max(p, floor))` over rows, where `p` is the probability of the labeled class.
pub fn cross_entropy<T: Scalar>(probs: &Matrix<T>, onehot: &Matrix<T>) -> Result<T> {
    check(
        "cross_entropy",
        probs.shape() == onehot.shape(),
        probs.shape(),
        onehot.shape(),
    )?;
    let mut labels = Vec::with_capacity(onehot.rows());
    for (i, row) in onehot.row_iter().enumerate() {
        let ones: Vec<usize> = row
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != T::zero())
            .map(|(j, _)| j)
            .collect();
        match ones.as_slice() {
            [j] if row[*j] == T::one() => labels.push(*j),
            _ => {
                return Err(Error::invalid(format!(
                    "row {i} of the target matrix is not one-hot"
                )))
            }
        }
    }
    cross_entropy_labels(probs, &labels)
}

/// [`cross_entropy`] with targets given as class indices.
pub fn cross_entropy_labels<T: Scalar>(probs: &Matrix<T>, labels: &[usize]) -> Result<T> {
    if probs.rows() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "cross_entropy",
            left: probs.shape(),
            right: (labels.len(), 1),
        });
    }
    if labels.is_empty() {
        return Ok(T::zero());
    }
    let floor = T::lit(PROB_FLOOR);
    let mut total = T::zero();
    for (row, &y) in probs.row_iter().zip(labels) {
        if y >= probs.cols() {
            return Err(Error::LabelOutOfRange {
                label: y,
                num_classes: probs.cols(),
            });
        }
        total += -row[y].max(floor).ln();
    }
    Ok(total / T::lit(labels.len() as f64))
}

/// Index of the largest entry of each row; ties resolve to the lowest index.
pub fn argmax_rows<T: Scalar>(m: &Matrix<T>) -> Vec<usize> {
    m.row_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use approx::assert_abs_diff_eq;

    fn random(rows: usize, cols: usize, rng: &mut Rng) -> Matrix<f64> {
        let data = (0..rows * cols).map(|_| rng.normal()).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn naive(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    #[test]
    fn identity_times_matrix() {
        let i2 = Matrix::<f64>::identity(2);
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&i2, &m).unwrap(), m);
    }

    #[test]
    fn projector_keeps_first_row() {
        let p = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        let m = Matrix::from_rows(&[[5.0, 6.0], [7.0, 8.0]]).unwrap();
        let expect = Matrix::from_rows(&[[5.0, 6.0], [0.0, 0.0]]).unwrap();
        assert_eq!(matmul(&p, &m).unwrap(), expect);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = Rng::new(9);
        let a = random(3, 4, &mut rng);
        let b = random(4, 2, &mut rng);
        let got = matmul(&a, &b).unwrap();
        assert!(got.max_abs_diff(&naive(&a, &b)).unwrap() < 1e-12);
    }

    #[test]
    fn transposed_products_match_explicit_transpose() {
        let mut rng = Rng::new(10);
        let a = random(5, 3, &mut rng);
        let b = random(5, 4, &mut rng);
        let c = random(6, 3, &mut rng);
        let tn = matmul_tn(&a, &b).unwrap();
        assert!(tn.max_abs_diff(&naive(&a.transpose(), &b)).unwrap() < 1e-12);
        let nt = matmul_nt(&a, &c).unwrap();
        assert!(nt.max_abs_diff(&naive(&a, &c.transpose())).unwrap() < 1e-12);
    }

    #[test]
    fn matmul_shape_error_names_shapes() {
        let a = Matrix::<f64>::zeros(2, 3);
        let b = Matrix::<f64>::zeros(2, 3);
        let err = matmul(&a, &b).unwrap_err().to_string();
        assert!(err.contains("(2, 3)"), "{err}");
    }

    #[test]
    fn softmax_uniform_from_equal_logits() {
        let m = Matrix::<f64>::zeros(1, 4);
        let s = softmax_rows(&m);
        for &v in s.row(0) {
            assert_eq!(v, 0.25);
        }
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        let m = Matrix::from_rows(&[[1000.0f64, 0.0]]).unwrap();
        let s = softmax_rows(&m);
        assert_eq!(s[(0, 0)], 1.0);
        assert!(s[(0, 1)] >= 0.0 && s[(0, 1)] < 1e-300);
        assert!(s.is_finite());
    }

    #[test]
    fn softmax_matches_high_precision_values() {
        // exp-normalize of [1, 2, 3] evaluated at 40 significant digits.
        let expect = [
            0.090_030_573_170_380_457_998,
            0.244_728_471_054_797_652_473,
            0.665_240_955_774_821_889_529,
        ];
        let s = softmax_rows(&Matrix::from_rows(&[[1.0f64, 2.0, 3.0]]).unwrap());
        for (got, want) in s.row(0).iter().zip(expect) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn cross_entropy_cases() {
        let perfect = Matrix::from_rows(&[[1.0f64, 0.0, 0.0]]).unwrap();
        let onehot = Matrix::from_rows(&[[1.0f64, 0.0, 0.0]]).unwrap();
        assert!(cross_entropy(&perfect, &onehot).unwrap().abs() <= 1e-12);

        let uniform = Matrix::filled(1, 4, 0.25f64);
        let target = Matrix::from_rows(&[[0.0f64, 0.0, 1.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(
            cross_entropy(&uniform, &target).unwrap(),
            1.386_294_361_119_890_6,
            epsilon = 1e-15
        );
    }

    #[test]
    fn cross_entropy_is_mean_of_rows() {
        let probs = Matrix::from_rows(&[[0.7f64, 0.3], [0.2, 0.8]]).unwrap();
        let onehot = Matrix::from_rows(&[[1.0f64, 0.0], [1.0, 0.0]]).unwrap();
        let rows = [-(0.7f64).ln(), -(0.2f64).ln()];
        let expect = (rows[0] + rows[1]) / 2.0;
        assert_abs_diff_eq!(cross_entropy(&probs, &onehot).unwrap(), expect, epsilon = 1e-15);
    }

    #[test]
    fn cross_entropy_clamps_zero_probability() {
        let probs = Matrix::from_rows(&[[1.0f64, 0.0]]).unwrap();
        let ce = cross_entropy_labels(&probs, &[1]).unwrap();
        assert_abs_diff_eq!(ce, -(1e-12f64).ln(), epsilon = 1e-9);
    }

    #[test]
    fn cross_entropy_rejects_bad_targets() {
        let probs = Matrix::filled(1, 3, 1.0 / 3.0);
        let not_onehot = Matrix::from_rows(&[[1.0f64, 1.0, 0.0]]).unwrap();
        assert!(cross_entropy(&probs, &not_onehot).is_err());
        assert!(cross_entropy(&probs, &Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        let m = Matrix::from_rows(&[[0.5f64, 0.5], [0.1, 0.9]]).unwrap();
        assert_eq!(argmax_rows(&m), vec![0, 1]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_rows_are_distributions(
                vals in proptest::collection::vec(-50.0f64..50.0, 1..40),
                cols in 1usize..8,
            ) {
                let rows = vals.len() / cols;
                prop_assume!(rows > 0);
                let m = Matrix::from_vec(rows, cols, vals[..rows * cols].to_vec()).unwrap();
                let s = softmax_rows(&m);
                for row in s.row_iter() {
                    let sum: f64 = row.iter().sum();
                    prop_assert!((sum - 1.0).abs() < 1e-12);
                    prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
                }
            }

            #[test]
            fn cross_entropy_nonnegative(
                logits in proptest::collection::vec(-20.0f64..20.0, 6),
                label in 0usize..3,
            ) {
                let m = Matrix::from_vec(2, 3, logits).unwrap();
                let p = softmax_rows(&m);
                let ce = cross_entropy_labels(&p, &[label, (label + 1) % 3]).unwrap();
                prop_assert!(ce >= 0.0);
            }
        }
    }
}
