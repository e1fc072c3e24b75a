//! Small dense linear-algebra and finite-difference helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Default relative step for first derivatives.
pub const FD_STEP: f64 = 1e-5;

pub fn vec(v: &[f64]) -> Vector {
    DVector::from_column_slice(v)
}

/// `h * max(1, |a|)`.
pub fn scaled_step(h: f64, a: f64) -> f64 {
    h * a.abs().max(1.0)
}

/// The symplectic matrix `(0, -I; I, 0)` of size `2n`.
pub fn symplectic_j(n: usize) -> Matrix {
    let mut j = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = -1.0;
        j[(n + i, i)] = 1.0;
    }
    j
}

/// `max |MᵀJM − J|` for a `2n × 2n` matrix.
pub fn symplectic_residual(m: &Matrix) -> f64 {
    let n = m.nrows() / 2;
    let j = symplectic_j(n);
    (m.transpose() * &j * m - j).amax()
}

pub fn max_abs_diff(a: &Vector, b: &Vector) -> f64 {
    (a - b).amax()
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<F: Fn(&Vector) -> f64>(f: F, x: &Vector, h: f64) -> Vector {
    let mut g = Vector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let hi = scaled_step(h, x[i]);
        let xi = x[i];
        xp[i] = xi + hi;
        let fp = f(&xp);
        xp[i] = xi - hi;
        let fm = f(&xp);
        xp[i] = xi;
        g[i] = (fp - fm) / (2.0 * hi);
    }
    g
}

/// Central-difference Jacobian (rows = outputs) of a fallible vector map.
pub fn fd_jacobian<F>(f: F, x: &Vector, h: f64) -> Result<Matrix>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    let mut cols = Vec::with_capacity(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let hi = scaled_step(h, x[i]);
        let xi = x[i];
        xp[i] = xi + hi;
        let fp = f(&xp)?;
        xp[i] = xi - hi;
        let fm = f(&xp)?;
        xp[i] = xi;
        cols.push((fp - fm) / (2.0 * hi));
    }
    Ok(Matrix::from_columns(&cols))
}

/// Fourth-order (five-point) central-difference Jacobian.
pub fn fd_jacobian5<F>(f: F, x: &Vector, h: f64) -> Result<Matrix>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    let mut cols = Vec::with_capacity(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let hi = scaled_step(h, x[i]);
        let xi = x[i];
        let mut eval = |d: f64| -> Result<Vector> {
            xp[i] = xi + d;
            let r = f(&xp);
            xp[i] = xi;
            r
        };
        let f2 = eval(2.0 * hi)?;
        let f1 = eval(hi)?;
        let m1 = eval(-hi)?;
        let m2 = eval(-2.0 * hi)?;
        cols.push((-f2 + 8.0 * f1 - 8.0 * m1 + m2) / (12.0 * hi));
    }
    Ok(Matrix::from_columns(&cols))
}

/// Fourth-order central-difference gradient of a scalar function.
pub fn fd_gradient5<F: Fn(&Vector) -> f64>(f: F, x: &Vector, h: f64) -> Vector {
    let mut g = Vector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let hi = scaled_step(h, x[i]);
        let xi = x[i];
        let mut at = |d: f64| {
            xp[i] = xi + d;
            let v = f(&xp);
            xp[i] = xi;
            v
        };
        g[i] = (-at(2.0 * hi) + 8.0 * at(hi) - 8.0 * at(-hi) + at(-2.0 * hi)) / (12.0 * hi);
    }
    g
}

/// Solve `A x = b` by LU, reporting singular systems.
pub fn solve(a: &Matrix, b: &Vector) -> Result<Vector> {
    a.clone().lu().solve(b).ok_or(Error::SingularJacobian)
}

/// Symmetric part `(A + Aᵀ)/2`.
pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &Matrix) -> f64 {
    symmetrize(a).symmetric_eigenvalues().min()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j_is_symplectic() {
        let j = symplectic_j(3);
        assert_eq!(symplectic_residual(&j), 0.0);
        assert_eq!(symplectic_residual(&Matrix::identity(4, 4)), 0.0);
    }

    #[test]
    fn fd_gradient_of_quadratic() {
        let x = vec(&[1.0, -2.0]);
        let g = fd_gradient(|v| v[0] * v[0] + 3.0 * v[0] * v[1], &x, FD_STEP);
        assert!((g[0] - (2.0 - 6.0)).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn five_point_is_sharper() {
        let x = vec(&[0.3]);
        let f = |v: &Vector| Ok(vec(&[v[0].sin()]));
        let j2 = fd_jacobian(f, &x, 1e-3).unwrap()[(0, 0)];
        let j5 = fd_jacobian5(f, &x, 1e-3).unwrap()[(0, 0)];
        let exact = 0.3f64.cos();
        assert!((j5 - exact).abs() < (j2 - exact).abs());
        assert!((j5 - exact).abs() < 1e-12);
    }
}
