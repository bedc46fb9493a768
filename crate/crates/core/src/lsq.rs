//! Small complex least-squares solver on normal equations with a ridge
//! fallback for rank-deficient regressors.

use nalgebra::{DMatrix, DVector};

use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LsqSolution {
    pub coeffs: Vec<C64>,
    pub ridge: bool,
}

/// Ridge weight relative to the mean diagonal of the Gram matrix.
const RIDGE: f64 = 1e-8;

/// Minimizes `|| sum_i c_i col_i - target ||^2`.
pub(crate) fn fit(columns: &[&[C64]], target: &[C64]) -> LsqSolution {
    fit_many(columns, &[target]).pop().unwrap_or(LsqSolution { coeffs: Vec::new(), ridge: false })
}

/// Same regressors for several targets; the Gram matrix is formed once.
pub(crate) fn fit_many(columns: &[&[C64]], targets: &[&[C64]]) -> Vec<LsqSolution> {
    let gram = gram(columns);
    targets.iter().map(|t| solve_normal(gram.clone(), rhs(columns, t))).collect()
}

pub(crate) fn gram(columns: &[&[C64]]) -> DMatrix<C64> {
    let p = columns.len();
    let mut gram = DMatrix::<C64>::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v: C64 = columns[i].iter().zip(columns[j]).map(|(a, b)| a.conj() * b).sum();
            gram[(i, j)] = v;
            gram[(j, i)] = v.conj();
        }
    }
    gram
}

pub(crate) fn rhs(columns: &[&[C64]], target: &[C64]) -> DVector<C64> {
    DVector::from_iterator(columns.len(), columns.iter().map(|c| c.iter().zip(target).map(|(a, b)| a.conj() * b).sum::<C64>()))
}

pub(crate) fn solve_normal(gram: DMatrix<C64>, rhs: DVector<C64>) -> LsqSolution {
    let p = gram.nrows();
    if p == 0 {
        return LsqSolution { coeffs: Vec::new(), ridge: false };
    }
    let scale = (0..p).map(|i| gram[(i, i)].re).sum::<f64>() / p as f64;
    if scale > 0.0 {
        if let Some(ch) = gram.clone().cholesky() {
            let x = ch.solve(&rhs);
            if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return LsqSolution { coeffs: x.iter().copied().collect(), ridge: false };
            }
        }
    }
    let lambda = RIDGE * scale.max(f64::MIN_POSITIVE);
    let mut reg = gram;
    for i in 0..p {
        reg[(i, i)] += C64::new(lambda, 0.0);
    }
    let x = match reg.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => reg.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(p)),
    };
    LsqSolution { coeffs: x.iter().copied().collect(), ridge: true }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit_and_rank_deficiency() {
        let a: Vec<C64> = (0..50).map(|k| C64::new((k as f64).sin(), (k as f64 * 0.3).cos())).collect();
        let b: Vec<C64> = (0..50).map(|k| C64::new(1.0, k as f64 * 0.01)).collect();
        let t: Vec<C64> = a.iter().zip(&b).map(|(x, y)| x * C64::new(2.0, -1.0) + y * 0.5).collect();
        let s = fit(&[&a, &b], &t);
        assert!(!s.ridge);
        assert!((s.coeffs[0] - C64::new(2.0, -1.0)).norm() < 1e-10);
        assert!((s.coeffs[1] - C64::new(0.5, 0.0)).norm() < 1e-10);
        let s = fit(&[&a, &a], &a);
        assert!(s.coeffs.iter().all(|z| z.re.is_finite()));
        let z = vec![C64::new(0.0, 0.0); 50];
        let s = fit(&[&z], &a);
        assert!(s.ridge);
        assert_eq!(s.coeffs[0], C64::new(0.0, 0.0));
    }
}
