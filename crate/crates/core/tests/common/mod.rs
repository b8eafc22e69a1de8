#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};

/// Gauss-Hermite rule for the standard normal weight (Golub-Welsch).
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect()
}

/// `E[h(G)]`, `G ~ N(0, 1)`.
pub fn normal_expectation(h: impl Fn(f64) -> f64) -> f64 {
    gauss_hermite(60).into_iter().map(|(x, w)| w * h(x)).sum()
}

pub fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
