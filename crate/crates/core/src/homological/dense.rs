//! Dense direct solve, used as a test oracle.

use num_complex::Complex64;

use super::{HomologicalError, ModeSystem};

pub const DENSE_LIMIT: usize = 5000;

/// Solves (A + G)x = rhs by Gaussian elimination with partial pivoting.
pub fn dense_oracle_solve(
    sys: &ModeSystem,
    rhs: &[Complex64],
) -> Result<Vec<Complex64>, HomologicalError> {
    let n = sys.len();
    if n > DENSE_LIMIT {
        return Err(HomologicalError::LatticeTooLarge(n));
    }
    let mut m = vec![Complex64::new(0.0, 0.0); n * n];
    for p in 0..n {
        m[p * n + p] += sys.diag[p];
        for (q, c) in &sys.rows[p] {
            m[p * n + q] += c;
        }
    }
    solve_dense(m, rhs.to_vec(), n)
}

pub(crate) fn solve_dense(
    mut m: Vec<Complex64>,
    mut b: Vec<Complex64>,
    n: usize,
) -> Result<Vec<Complex64>, HomologicalError> {
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i * n + col].norm().total_cmp(&m[j * n + col].norm()))
            .expect("non-empty");
        if m[piv * n + col].norm() == 0.0 {
            return Err(HomologicalError::Singular(col));
        }
        if piv != col {
            for j in 0..n {
                m.swap(col * n + j, piv * n + j);
            }
            b.swap(col, piv);
        }
        let d = m[col * n + col];
        for i in col + 1..n {
            let factor = m[i * n + col] / d;
            if factor == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in col..n {
                let v = m[col * n + j];
                m[i * n + j] -= factor * v;
            }
            let v = b[col];
            b[i] -= factor * v;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in i + 1..n {
            acc -= m[i * n + j] * x[j];
        }
        x[i] = acc / m[i * n + i];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn scalar_and_diagonal() {
        let x = solve_dense(vec![c(0.0, 2.0)], vec![c(1.0, 0.0)], 1).unwrap();
        assert_eq!(x[0], c(0.0, -0.5));
        let x = solve_dense(
            vec![c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(4.0, 0.0)],
            vec![c(1.0, 0.0), c(1.0, 0.0)],
            2,
        )
        .unwrap();
        assert_eq!(x, vec![c(0.5, 0.0), c(0.25, 0.0)]);
    }

    #[test]
    fn singular_detected() {
        assert!(matches!(
            solve_dense(vec![c(0.0, 0.0); 4], vec![c(1.0, 0.0); 2], 2),
            Err(HomologicalError::Singular(0))
        ));
    }

    #[test]
    fn random_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 40;
        let m: Vec<Complex64> = (0..n * n)
            .map(|i| {
                let base = if i % (n + 1) == 0 { 10.0 } else { 0.0 };
                c(base + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            })
            .collect();
        let b: Vec<Complex64> = (0..n)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let x = solve_dense(m.clone(), b.clone(), n).unwrap();
        let bn: f64 = b.iter().map(|z| z.norm()).sum();
        let mut res = 0.0;
        for i in 0..n {
            let mut acc = -b[i];
            for j in 0..n {
                acc += m[i * n + j] * x[j];
            }
            res += acc.norm();
        }
        assert!(res <= 1e-12 * bn, "{res}");
    }
}
