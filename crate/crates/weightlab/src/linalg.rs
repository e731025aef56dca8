//! Small symmetric-matrix helpers shared by the weight and reducing modules.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn sym_eigen(m: &DMatrix<f64>) -> SymEigen {
    let sym = (m + m.transpose()) * 0.5;
    let se = nalgebra::SymmetricEigen::new(sym);
    SymEigen {
        values: se.eigenvalues,
        vectors: se.eigenvectors,
    }
}

/// `U diag(g(λ)) U^T` from the eigendecomposition of a symmetric matrix.
pub fn sym_apply(m: &DMatrix<f64>, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let e = sym_eigen(m);
    sym_apply_eig(&e, g)
}

pub fn sym_apply_eig(e: &SymEigen, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = e.values.len();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        d[(i, i)] = g(e.values[i]);
    }
    let m = &e.vectors * d * e.vectors.transpose();
    (&m + m.transpose()) * 0.5
}

/// Fractional power `A^a` of an SPD matrix.
pub fn spd_power(m: &DMatrix<f64>, a: f64) -> Result<DMatrix<f64>> {
    let e = sym_eigen(m);
    spd_power_eig(&e, a)
}

pub fn spd_power_eig(e: &SymEigen, a: f64) -> Result<DMatrix<f64>> {
    if e.values.iter().any(|&l| l <= 0.0 || !l.is_finite()) {
        return Err(Error::InvalidWeight(format!(
            "matrix power needs strictly positive spectrum, got {:?}",
            e.values.as_slice()
        )));
    }
    Ok(sym_apply_eig(e, |l| l.powf(a)))
}

/// Spectral norm (largest singular value) via the eigenvalues of `M^T M`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    match m.nrows() {
        1 => m[(0, 0)].abs(),
        2 if m.ncols() == 2 => {
            // closed form for 2x2: largest eigenvalue of M^T M
            let g = m.transpose() * m;
            let tr = g[(0, 0)] + g[(1, 1)];
            let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
            let disc = (tr * tr * 0.25 - det).max(0.0);
            (tr * 0.5 + disc.sqrt()).max(0.0).sqrt()
        }
        _ => {
            let g = m.transpose() * m;
            let e = sym_eigen(&g);
            e.values.iter().fold(0.0f64, |a, &b| a.max(b)).max(0.0).sqrt()
        }
    }
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Project a symmetric matrix onto the SPD cone by flooring its spectrum.
pub fn spd_project(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    sym_apply(m, |l| l.max(floor))
}

/// Deterministic unit-direction grid: `count` angles on the half-circle for
/// n=2, a Fibonacci hemisphere for n=3 (antipodes are redundant for the
/// symmetric bodies in this crate).
pub fn direction_grid(n: usize, count: usize) -> Vec<DVector<f64>> {
    match n {
        1 => vec![DVector::from_element(1, 1.0)],
        2 => (0..count)
            .map(|k| {
                let theta = std::f64::consts::PI * k as f64 / count as f64;
                DVector::from_vec(vec![theta.cos(), theta.sin()])
            })
            .collect(),
        _ => {
            // Fibonacci points on the upper hemisphere, extended to n>3 by
            // zero-padding is not needed; the crate only uses n <= 3 grids.
            let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
            (0..count)
                .map(|k| {
                    let z = (k as f64 + 0.5) / count as f64; // (0,1]
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = 2.0 * std::f64::consts::PI * (k as f64 / golden).fract();
                    let mut v = DVector::zeros(n);
                    v[0] = r * phi.cos();
                    v[1] = r * phi.sin();
                    v[2] = z;
                    v
                })
                .collect()
        }
    }
}
