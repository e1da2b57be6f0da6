//! Nullspace computations: exact over the rationals, and floating-point via SVD.

use nalgebra::DMatrix as Matrix;
use num_traits::{One, Zero};

use crate::poly::Rational;

/// Incrementally maintained reduced row-echelon basis over the rationals.
#[derive(Clone, Debug)]
pub struct RationalEchelon {
    cols: usize,
    // (pivot column, row), rows kept fully reduced
    rows: Vec<(usize, Vec<Rational>)>,
}

impl RationalEchelon {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            rows: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Adds a row; returns true if it increased the rank.
    pub fn push(&mut self, mut row: Vec<Rational>) -> bool {
        assert_eq!(row.len(), self.cols);
        if self.rows.len() == self.cols {
            return false;
        }
        for (pivot, basis) in &self.rows {
            if !row[*pivot].is_zero() {
                let factor = row[*pivot].clone();
                for (a, b) in row.iter_mut().zip(basis) {
                    *a -= &factor * b;
                }
            }
        }
        let Some(pivot) = row.iter().position(|v| !v.is_zero()) else {
            return false;
        };
        let inv = Rational::one() / &row[pivot];
        row.iter_mut().for_each(|v| *v *= &inv);
        for (_, basis) in self.rows.iter_mut() {
            if !basis[pivot].is_zero() {
                let factor = basis[pivot].clone();
                for (a, b) in basis.iter_mut().zip(&row) {
                    *a -= &factor * b;
                }
            }
        }
        self.rows.push((pivot, row));
        true
    }

    /// Basis of `{v : row · v = 0 for every row}`, one vector per free column.
    pub fn nullspace(&self) -> Vec<Vec<Rational>> {
        let pivots: Vec<usize> = self.rows.iter().map(|(p, _)| *p).collect();
        (0..self.cols)
            .filter(|c| !pivots.contains(c))
            .map(|free| {
                let mut v = vec![Rational::zero(); self.cols];
                v[free] = Rational::one();
                for (p, row) in &self.rows {
                    v[*p] = -row[free].clone();
                }
                v
            })
            .collect()
    }
}

/// Right singular vectors whose singular value is below `rel_tol` times the
/// largest one, together with all singular values (descending).
pub fn float_nullspace(rows: &[Vec<f64>], cols: usize, rel_tol: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = rows.len().max(cols);
    let mut a = Matrix::<f64>::zeros(n, cols);
    for (r, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            a[(r, c)] = *v;
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let largest = values.first().copied().unwrap_or(0.0);
    let basis = order
        .iter()
        .filter(|&&i| svd.singular_values[i] <= rel_tol * largest)
        .map(|&i| v_t.row(i).iter().copied().collect())
        .collect();
    (basis, values)
}

pub fn determinant(entries: &[Vec<f64>]) -> f64 {
    let m = entries.len();
    Matrix::from_fn(m, m, |r, c| entries[r][c]).determinant()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64) -> Rational {
        Rational::from_integer(n.into())
    }

    #[test]
    fn exact_nullspace() {
        let mut e = RationalEchelon::new(3);
        assert!(e.push(vec![q(1), q(1), q(0)]));
        assert!(!e.push(vec![q(2), q(2), q(0)]));
        assert!(e.push(vec![q(0), q(1), q(-1)]));
        let ns = e.nullspace();
        assert_eq!(ns.len(), 1);
        // x + y = 0, y = z  ->  (-1, 1, 1)
        assert_eq!(ns[0], vec![q(-1), q(1), q(1)]);
    }

    #[test]
    fn float_nullspace_recovers_direction() {
        let rows = vec![vec![1.0, 1.0, 0.0], vec![0.0, 1.0, -1.0], vec![2.0, 2.0, 0.0]];
        let (basis, values) = float_nullspace(&rows, 3, 1e-10);
        assert_eq!(basis.len(), 1);
        assert_eq!(values.len(), 3);
        let v = &basis[0];
        let s = v[2];
        assert!((v[0] + s).abs() < 1e-12 && (v[1] - s).abs() < 1e-12);
    }

    #[test]
    fn wide_system_is_padded() {
        let (basis, _) = float_nullspace(&[vec![1.0, 0.0, 0.0]], 3, 1e-12);
        assert_eq!(basis.len(), 2);
    }

    #[test]
    fn det() {
        assert!((determinant(&[vec![0.5, 1.0], vec![1.0, 0.5]]) + 0.75).abs() < 1e-15);
    }
}
