//! Hamiltonian models homogeneous of degree two in the covector.
//!
//! A model is anything implementing [`Hamiltonian`]. Only `value` is required;
//! gradients and the Hessian fall back to central differences with step
//! `1e-5·max(1, |arg|)`. The built-in families override them analytically
//! where that is cheap.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{fd_gradient, scaled_step, symmetrize, Matrix, Vector, FD_STEP};

/// A point `(x, ξ)` of the cotangent bundle.
#[derive(Clone, PartialEq)]
pub struct PhasePoint {
    pub x: Vector,
    pub xi: Vector,
}

impl fmt::Debug for PhasePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(x={:?}, xi={:?})",
            self.x.as_slice(),
            self.xi.as_slice()
        )
    }
}

impl PhasePoint {
    pub fn new(x: &[f64], xi: &[f64]) -> Self {
        PhasePoint {
            x: Vector::from_column_slice(x),
            xi: Vector::from_column_slice(xi),
        }
    }

    pub fn from_vectors(x: Vector, xi: Vector) -> Self {
        PhasePoint { x, xi }
    }

    /// Split a `2n` state `(x, ξ)`.
    pub fn from_state(s: &[f64], n: usize) -> Self {
        PhasePoint::new(&s[..n], &s[n..2 * n])
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn state(&self) -> Vector {
        let n = self.dim();
        let mut s = Vector::zeros(2 * n);
        s.rows_mut(0, n).copy_from(&self.x);
        s.rows_mut(n, n).copy_from(&self.xi);
        s
    }

    /// Checks `n ≥ 2`, matching lengths, finiteness and `ξ ≠ 0`.
    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.xi.len() {
            return Err(Error::DimensionMismatch {
                expected: self.x.len(),
                got: self.xi.len(),
            });
        }
        if self.x.len() < 2 {
            return Err(Error::InvalidPoint("dimension must be at least 2".into()));
        }
        if self.x.iter().chain(self.xi.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPoint("non-finite coordinate".into()));
        }
        if self.xi.amax() == 0.0 {
            return Err(Error::InvalidPoint("zero covector".into()));
        }
        Ok(())
    }

    /// `M_λ(x, ξ) = (x, λξ)`.
    pub fn dilate(&self, lambda: f64) -> Result<Self> {
        dilate(self, lambda)
    }

    /// Max-norm distance in phase space.
    pub fn dist(&self, other: &PhasePoint) -> f64 {
        (&self.x - &other.x).amax().max((&self.xi - &other.xi).amax())
    }
}

/// The fiber dilation `(x, ξ) ↦ (x, λξ)`, `λ > 0`.
pub fn dilate(p: &PhasePoint, lambda: f64) -> Result<PhasePoint> {
    if !(lambda > 0.0) {
        return Err(Error::NonPositiveLambda(lambda));
    }
    Ok(PhasePoint {
        x: p.x.clone(),
        xi: &p.xi * lambda,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Riemannian,
    PseudoRiemannian,
    Polynomial,
    FinslerDual,
    Custom,
}

/// Evaluator for `H(x, ξ)` and its derivatives.
pub trait Hamiltonian: Send + Sync {
    fn dim(&self) -> usize;
    fn kind(&self) -> ModelKind;
    fn value(&self, x: &Vector, xi: &Vector) -> f64;

    fn grad_x(&self, x: &Vector, xi: &Vector) -> Vector {
        fd_gradient(|y| self.value(y, xi), x, FD_STEP)
    }

    fn grad_xi(&self, x: &Vector, xi: &Vector) -> Vector {
        fd_gradient(|e| self.value(x, e), xi, FD_STEP)
    }

    /// Relative step used by the default Hessian.
    fn hessian_step(&self) -> f64 {
        FD_STEP
    }

    /// Full `2n × 2n` Hessian in the ordering `(x, ξ)`, symmetrized.
    fn hessian(&self, x: &Vector, xi: &Vector) -> Matrix {
        let n = self.dim();
        let h = self.hessian_step();
        let mut m = Matrix::zeros(2 * n, 2 * n);
        let grad = |x: &Vector, xi: &Vector| {
            let mut g = Vector::zeros(2 * n);
            g.rows_mut(0, n).copy_from(&self.grad_x(x, xi));
            g.rows_mut(n, n).copy_from(&self.grad_xi(x, xi));
            g
        };
        for k in 0..2 * n {
            let (mut xp, mut xip) = (x.clone(), xi.clone());
            let (mut xm, mut xim) = (x.clone(), xi.clone());
            let step;
            if k < n {
                step = scaled_step(h, x[k]);
                xp[k] += step;
                xm[k] -= step;
            } else {
                step = scaled_step(h, xi[k - n]);
                xip[k - n] += step;
                xim[k - n] -= step;
            }
            let col = (grad(&xp, &xip) - grad(&xm, &xim)) / (2.0 * step);
            m.set_column(k, &col);
        }
        symmetrize(&m)
    }

    fn name(&self) -> String {
        format!("{:?}", self.kind()).to_lowercase()
    }

    fn eval(&self, p: &PhasePoint) -> f64 {
        self.value(&p.x, &p.xi)
    }

    /// `X_H = (H_ξ, −H_x)`.
    fn vector_field(&self, p: &PhasePoint) -> (Vector, Vector) {
        (self.grad_xi(&p.x, &p.xi), -self.grad_x(&p.x, &p.xi))
    }
}

pub type Model = Arc<dyn Hamiltonian>;

macro_rules! forward_hamiltonian {
    ($($ty:ty),*) => {$(
        impl<T: Hamiltonian + ?Sized> Hamiltonian for $ty {
            fn dim(&self) -> usize { (**self).dim() }
            fn kind(&self) -> ModelKind { (**self).kind() }
            fn value(&self, x: &Vector, xi: &Vector) -> f64 { (**self).value(x, xi) }
            fn grad_x(&self, x: &Vector, xi: &Vector) -> Vector { (**self).grad_x(x, xi) }
            fn grad_xi(&self, x: &Vector, xi: &Vector) -> Vector { (**self).grad_xi(x, xi) }
            fn hessian_step(&self) -> f64 { (**self).hessian_step() }
            fn hessian(&self, x: &Vector, xi: &Vector) -> Matrix { (**self).hessian(x, xi) }
            fn name(&self) -> String { (**self).name() }
        }
    )*};
}

forward_hamiltonian!(&T, Arc<T>);

/// Scalar field on configuration space.
pub type ScalarField = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
/// Vector field on configuration space.
pub type VectorField = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
/// Matrix field on configuration space.
pub type MatrixField = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
/// Scalar function on phase space.
pub type PhaseScalar = Arc<dyn Fn(&Vector, &Vector) -> f64 + Send + Sync>;

/// `X_H` as a stand-alone evaluator.
#[derive(Clone)]
pub struct HamiltonVectorField {
    pub model: Model,
}

impl HamiltonVectorField {
    pub fn new(model: Model) -> Self {
        HamiltonVectorField { model }
    }

    /// `X_H` stacked as a `2n` vector.
    pub fn eval(&self, p: &PhasePoint) -> Vector {
        let (dx, dxi) = self.model.vector_field(p);
        PhasePoint::from_vectors(dx, dxi).state()
    }

    /// Linearization `A = −J·Hess H` of the field.
    pub fn linearization(&self, p: &PhasePoint) -> Matrix {
        -crate::linalg::symplectic_j(self.model.dim()) * self.model.hessian(&p.x, &p.xi)
    }
}

const TOL_SYM: f64 = 1e-12;
const TOL_DET: f64 = 1e-12;

/// `H = ½ ξᵀ G(x) ξ` for a cometric `G`.
#[derive(Clone)]
pub struct Metric {
    n: usize,
    kind: ModelKind,
    cometric: MatrixField,
    deriv: Option<Arc<dyn Fn(&Vector) -> Vec<Matrix> + Send + Sync>>,
    indefinite: bool,
}

fn check_symmetric(g: &Matrix) -> Result<()> {
    let asym = (g - g.transpose()).amax();
    if asym > TOL_SYM * g.amax().max(1.0) {
        return Err(Error::NonSymmetricMatrix(asym));
    }
    Ok(())
}

/// Riemannian model from a symmetric positive-definite cometric, checked at `probe`.
pub fn make_riemannian(n: usize, cometric: MatrixField, probe: &Vector) -> Result<Metric> {
    let g = cometric(probe);
    if g.nrows() != n || g.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: g.nrows(),
        });
    }
    check_symmetric(&g)?;
    if symmetrize(&g).cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(Metric {
        n,
        kind: ModelKind::Riemannian,
        cometric,
        deriv: None,
        indefinite: false,
    })
}

/// Pseudo-Riemannian model from a symmetric invertible cometric, checked at `probe`.
pub fn make_pseudo_riemannian(n: usize, cometric: MatrixField, probe: &Vector) -> Result<Metric> {
    let g = cometric(probe);
    if g.nrows() != n || g.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: g.nrows(),
        });
    }
    check_symmetric(&g)?;
    let det = g.determinant();
    if det.abs() < TOL_DET {
        return Err(Error::SingularMatrix(det));
    }
    let eig = symmetrize(&g).symmetric_eigenvalues();
    let indefinite = eig.min() < 0.0 && eig.max() > 0.0;
    Ok(Metric {
        n,
        kind: ModelKind::PseudoRiemannian,
        cometric,
        deriv: None,
        indefinite,
    })
}

impl Metric {
    /// Supply `∂G/∂x^k` for `k = 0..n` analytically.
    pub fn with_derivative(mut self, d: Arc<dyn Fn(&Vector) -> Vec<Matrix> + Send + Sync>) -> Self {
        self.deriv = Some(d);
        self
    }

    /// Whether the zero level set `H = 0` is non-empty away from `ξ = 0`.
    pub fn has_null_cone(&self) -> bool {
        self.indefinite
    }

    pub fn cometric(&self, x: &Vector) -> Matrix {
        (self.cometric)(x)
    }

    fn dg(&self, x: &Vector) -> Vec<Matrix> {
        if let Some(d) = &self.deriv {
            return d(x);
        }
        (0..self.n)
            .map(|k| {
                let h = scaled_step(FD_STEP, x[k]);
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                ((self.cometric)(&xp) - (self.cometric)(&xm)) / (2.0 * h)
            })
            .collect()
    }
}

impl Hamiltonian for Metric {
    fn dim(&self) -> usize {
        self.n
    }
    fn kind(&self) -> ModelKind {
        self.kind
    }
    fn value(&self, x: &Vector, xi: &Vector) -> f64 {
        0.5 * xi.dot(&((self.cometric)(x) * xi))
    }
    fn grad_xi(&self, x: &Vector, xi: &Vector) -> Vector {
        (self.cometric)(x) * xi
    }
    fn grad_x(&self, x: &Vector, xi: &Vector) -> Vector {
        let d = self.dg(x);
        Vector::from_iterator(self.n, d.iter().map(|dk| 0.5 * xi.dot(&(dk * xi))))
    }
    fn hessian(&self, x: &Vector, xi: &Vector) -> Matrix {
        let n = self.n;
        let mut m = Matrix::zeros(2 * n, 2 * n);
        let g = (self.cometric)(x);
        let d = self.dg(x);
        m.view_mut((n, n), (n, n)).copy_from(&symmetrize(&g));
        for (k, dk) in d.iter().enumerate() {
            let row = dk * xi;
            for j in 0..n {
                m[(k, n + j)] = row[j];
                m[(n + j, k)] = row[j];
            }
        }
        let h = if self.deriv.is_some() { FD_STEP } else { 1e-4 };
        for k in 0..n {
            let s = scaled_step(h, x[k]);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += s;
            xm[k] -= s;
            let col = (self.grad_x(&xp, xi) - self.grad_x(&xm, xi)) / (2.0 * s);
            for i in 0..n {
                m[(i, k)] = col[i];
            }
        }
        let xx = symmetrize(&m.view((0, 0), (n, n)).into_owned());
        m.view_mut((0, 0), (n, n)).copy_from(&xx);
        m
    }
    fn name(&self) -> String {
        match self.kind {
            ModelKind::PseudoRiemannian => "pseudo_riemannian".into(),
            _ => "riemannian".into(),
        }
    }
}

/// `H = ½ c(x)² |ξ|²`, a Riemannian model with wave speed `c`.
#[derive(Clone)]
pub struct Conformal {
    n: usize,
    c: ScalarField,
    grad_c: Option<VectorField>,
    hess_c: Option<MatrixField>,
    label: String,
}

impl Conformal {
    pub fn new(n: usize, c: ScalarField) -> Self {
        Conformal {
            n,
            c,
            grad_c: None,
            hess_c: None,
            label: "conformal".into(),
        }
    }

    pub fn with_derivatives(mut self, grad_c: VectorField, hess_c: MatrixField) -> Self {
        self.grad_c = Some(grad_c);
        self.hess_c = Some(hess_c);
        self
    }

    pub fn labeled(mut self, label: &str) -> Self {
        self.label = label.into();
        self
    }

    pub fn speed(&self, x: &Vector) -> f64 {
        (self.c)(x)
    }

    fn gc(&self, x: &Vector) -> Vector {
        match &self.grad_c {
            Some(g) => g(x),
            None => fd_gradient(|y| (self.c)(y), x, FD_STEP),
        }
    }

    fn hc(&self, x: &Vector) -> Matrix {
        match &self.hess_c {
            Some(h) => h(x),
            None => {
                let n = self.n;
                let mut m = Matrix::zeros(n, n);
                for k in 0..n {
                    let s = scaled_step(1e-4, x[k]);
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += s;
                    xm[k] -= s;
                    m.set_column(k, &((self.gc(&xp) - self.gc(&xm)) / (2.0 * s)));
                }
                symmetrize(&m)
            }
        }
    }
}

impl Hamiltonian for Conformal {
    fn dim(&self) -> usize {
        self.n
    }
    fn kind(&self) -> ModelKind {
        ModelKind::Riemannian
    }
    fn value(&self, x: &Vector, xi: &Vector) -> f64 {
        let c = (self.c)(x);
        0.5 * c * c * xi.norm_squared()
    }
    fn grad_xi(&self, x: &Vector, xi: &Vector) -> Vector {
        let c = (self.c)(x);
        xi * (c * c)
    }
    fn grad_x(&self, x: &Vector, xi: &Vector) -> Vector {
        let c = (self.c)(x);
        self.gc(x) * (c * xi.norm_squared())
    }
    fn hessian(&self, x: &Vector, xi: &Vector) -> Matrix {
        let n = self.n;
        let c = (self.c)(x);
        let gc = self.gc(x);
        let hc = self.hc(x);
        let q = xi.norm_squared();
        let mut m = Matrix::zeros(2 * n, 2 * n);
        let xx = (&gc * gc.transpose() + hc * c) * q;
        m.view_mut((0, 0), (n, n)).copy_from(&xx);
        let xxi = &gc * xi.transpose() * (2.0 * c);
        m.view_mut((0, n), (n, n)).copy_from(&xxi);
        m.view_mut((n, 0), (n, n)).copy_from(&xxi.transpose());
        m.view_mut((n, n), (n, n))
            .copy_from(&(Matrix::identity(n, n) * (c * c)));
        m
    }
    fn name(&self) -> String {
        self.label.clone()
    }
}

/// One term `c(x)·Π ξ_i^{e_i}` of a polynomial model.
#[derive(Clone)]
pub struct Monomial {
    pub exps: Vec<u32>,
    pub coeff: ScalarField,
    pub coeff_grad: Option<VectorField>,
}

impl Monomial {
    pub fn new(exps: Vec<u32>, coeff: ScalarField) -> Self {
        Monomial {
            exps,
            coeff,
            coeff_grad: None,
        }
    }

    pub fn constant(exps: Vec<u32>, c: f64) -> Self {
        let n = exps.len();
        Monomial {
            exps,
            coeff: Arc::new(move |_| c),
            coeff_grad: Some(Arc::new(move |_| Vector::zeros(n))),
        }
    }

    pub fn with_gradient(mut self, g: VectorField) -> Self {
        self.coeff_grad = Some(g);
        self
    }

    fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }

    fn mono(&self, xi: &Vector) -> f64 {
        self.exps
            .iter()
            .enumerate()
            .map(|(i, &e)| xi[i].powi(e as i32))
            .product()
    }

    fn mono_grad(&self, xi: &Vector) -> Vector {
        let n = self.exps.len();
        Vector::from_iterator(
            n,
            (0..n).map(|j| {
                if self.exps[j] == 0 {
                    return 0.0;
                }
                self.exps
                    .iter()
                    .enumerate()
                    .map(|(i, &e)| {
                        if i == j {
                            e as f64 * xi[i].powi(e as i32 - 1)
                        } else {
                            xi[i].powi(e as i32)
                        }
                    })
                    .product()
            }),
        )
    }

    fn cgrad(&self, x: &Vector) -> Vector {
        match &self.coeff_grad {
            Some(g) => g(x),
            None => fd_gradient(|y| (self.coeff)(y), x, FD_STEP),
        }
    }
}

/// Sum of degree-two monomials in `ξ` with `x`-dependent coefficients.
#[derive(Clone)]
pub struct Polynomial {
    n: usize,
    terms: Vec<Monomial>,
}

pub fn make_polynomial(n: usize, terms: Vec<Monomial>) -> Result<Polynomial> {
    for t in &terms {
        if t.exps.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: t.exps.len(),
            });
        }
        if t.degree() != 2 {
            return Err(Error::BadDegree(t.degree()));
        }
    }
    Ok(Polynomial { n, terms })
}

impl Hamiltonian for Polynomial {
    fn dim(&self) -> usize {
        self.n
    }
    fn kind(&self) -> ModelKind {
        ModelKind::Polynomial
    }
    fn value(&self, x: &Vector, xi: &Vector) -> f64 {
        self.terms.iter().map(|t| (t.coeff)(x) * t.mono(xi)).sum()
    }
    fn grad_xi(&self, x: &Vector, xi: &Vector) -> Vector {
        let mut g = Vector::zeros(self.n);
        for t in &self.terms {
            g += t.mono_grad(xi) * (t.coeff)(x);
        }
        g
    }
    fn grad_x(&self, x: &Vector, xi: &Vector) -> Vector {
        let mut g = Vector::zeros(self.n);
        for t in &self.terms {
            g += t.cgrad(x) * t.mono(xi);
        }
        g
    }
    fn hessian(&self, x: &Vector, xi: &Vector) -> Matrix {
        let n = self.n;
        let mut m = Matrix::zeros(2 * n, 2 * n);
        for t in &self.terms {
            let c = (t.coeff)(x);
            let cg = t.cgrad(x);
            let mg = t.mono_grad(xi);
            for a in 0..n {
                for b in 0..n {
                    let mut e = t.exps.clone();
                    let ea = e[a];
                    if ea == 0 {
                        continue;
                    }
                    e[a] -= 1;
                    let eb = e[b];
                    if eb == 0 {
                        continue;
                    }
                    e[b] -= 1;
                    let rest: f64 = e
                        .iter()
                        .enumerate()
                        .map(|(i, &k)| xi[i].powi(k as i32))
                        .product();
                    m[(n + a, n + b)] += c * ea as f64 * eb as f64 * rest;
                }
            }
            let xxi = &cg * mg.transpose();
            for a in 0..n {
                for b in 0..n {
                    m[(a, n + b)] += xxi[(a, b)];
                    m[(n + b, a)] += xxi[(a, b)];
                }
            }
        }
        for k in 0..n {
            let s = scaled_step(1e-4, x[k]);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += s;
            xm[k] -= s;
            let col = (self.grad_x(&xp, xi) - self.grad_x(&xm, xi)) / (2.0 * s);
            for i in 0..n {
                m[(i, k)] = col[i];
            }
        }
        let xx = symmetrize(&m.view((0, 0), (n, n)).into_owned());
        m.view_mut((0, 0), (n, n)).copy_from(&xx);
        m
    }
    fn name(&self) -> String {
        "polynomial".into()
    }
}

/// User-supplied evaluator; homogeneity is declared, not enforced.
#[derive(Clone)]
pub struct Custom {
    n: usize,
    label: String,
    kind: ModelKind,
    value: PhaseScalar,
}

impl Custom {
    pub fn new(n: usize, label: &str, value: PhaseScalar) -> Self {
        Custom {
            n,
            label: label.into(),
            kind: ModelKind::Custom,
            value,
        }
    }

    pub fn with_kind(mut self, kind: ModelKind) -> Self {
        self.kind = kind;
        self
    }
}

impl Hamiltonian for Custom {
    fn dim(&self) -> usize {
        self.n
    }
    fn kind(&self) -> ModelKind {
        self.kind
    }
    fn value(&self, x: &Vector, xi: &Vector) -> f64 {
        (self.value)(x, xi)
    }
    fn hessian_step(&self) -> f64 {
        2e-4
    }
    fn name(&self) -> String {
        self.label.clone()
    }
}

/// `μ(x, ξ)·H(x, ξ)` for a positive phase-space factor `μ`.
#[derive(Clone)]
pub struct Scaled<B = Model> {
    base: B,
    mu: PhaseScalar,
    constant: Option<f64>,
}

impl<B: Hamiltonian> Scaled<B> {
    pub fn new(base: B, mu: PhaseScalar) -> Self {
        Scaled {
            base,
            mu,
            constant: None,
        }
    }

    pub fn constant(base: B, c: f64) -> Self {
        Scaled {
            base,
            mu: Arc::new(move |_, _| c),
            constant: Some(c),
        }
    }

    pub fn factor(&self, x: &Vector, xi: &Vector) -> f64 {
        (self.mu)(x, xi)
    }
}

impl<B: Hamiltonian> Hamiltonian for Scaled<B> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn kind(&self) -> ModelKind {
        self.base.kind()
    }
    fn value(&self, x: &Vector, xi: &Vector) -> f64 {
        (self.mu)(x, xi) * self.base.value(x, xi)
    }
    fn grad_x(&self, x: &Vector, xi: &Vector) -> Vector {
        let m = (self.mu)(x, xi);
        let g = self.base.grad_x(x, xi) * m;
        if self.constant.is_some() {
            return g;
        }
        g + fd_gradient(|y| (self.mu)(y, xi), x, FD_STEP) * self.base.value(x, xi)
    }
    fn grad_xi(&self, x: &Vector, xi: &Vector) -> Vector {
        let m = (self.mu)(x, xi);
        let g = self.base.grad_xi(x, xi) * m;
        if self.constant.is_some() {
            return g;
        }
        g + fd_gradient(|e| (self.mu)(x, e), xi, FD_STEP) * self.base.value(x, xi)
    }
    fn hessian(&self, x: &Vector, xi: &Vector) -> Matrix {
        match self.constant {
            Some(c) => self.base.hessian(x, xi) * c,
            None => {
                let n = self.dim();
                let mut m = Matrix::zeros(2 * n, 2 * n);
                for k in 0..2 * n {
                    let (mut xp, mut xip, mut xm, mut xim) =
                        (x.clone(), xi.clone(), x.clone(), xi.clone());
                    let s;
                    if k < n {
                        s = scaled_step(1e-4, x[k]);
                        xp[k] += s;
                        xm[k] -= s;
                    } else {
                        s = scaled_step(1e-4, xi[k - n]);
                        xip[k - n] += s;
                        xim[k - n] -= s;
                    }
                    let gp = PhasePoint::from_vectors(self.grad_x(&xp, &xip), self.grad_xi(&xp, &xip));
                    let gm = PhasePoint::from_vectors(self.grad_x(&xm, &xim), self.grad_xi(&xm, &xim));
                    m.set_column(k, &((gp.state() - gm.state()) / (2.0 * s)));
                }
                symmetrize(&m)
            }
        }
    }
    fn name(&self) -> String {
        format!("scaled({})", self.base.name())
    }
}

/// Built-in model catalog.
pub mod builtin {
    use super::*;

    /// `½|ξ|²`.
    pub fn euclidean(n: usize) -> Metric {
        Metric {
            n,
            kind: ModelKind::Riemannian,
            cometric: Arc::new(move |_| Matrix::identity(n, n)),
            deriv: Some(Arc::new(move |_| vec![Matrix::zeros(n, n); n])),
            indefinite: false,
        }
    }

    /// `½c²|ξ|²` with constant speed `c`.
    pub fn constant_speed(n: usize, c: f64) -> Metric {
        Metric {
            n,
            kind: ModelKind::Riemannian,
            cometric: Arc::new(move |_| Matrix::identity(n, n) * (c * c)),
            deriv: Some(Arc::new(move |_| vec![Matrix::zeros(n, n); n])),
            indefinite: false,
        }
    }

    /// `½(−ξ_0² + ξ_1² + … )`, time first.
    pub fn minkowski(n: usize) -> Metric {
        let mut g = Matrix::identity(n, n);
        g[(0, 0)] = -1.0;
        Metric {
            n,
            kind: ModelKind::PseudoRiemannian,
            cometric: Arc::new(move |_| g.clone()),
            deriv: Some(Arc::new(move |_| vec![Matrix::zeros(n, n); n])),
            indefinite: true,
        }
    }

    /// Cometric `diag(−c(x)², 1, …, 1)`.
    pub fn lorentz_product(n: usize, c: ScalarField) -> Metric {
        let cc = c.clone();
        Metric {
            n,
            kind: ModelKind::PseudoRiemannian,
            cometric: Arc::new(move |x| {
                let mut g = Matrix::identity(n, n);
                let v = cc(x);
                g[(0, 0)] = -v * v;
                g
            }),
            deriv: None,
            indefinite: true,
        }
    }

    /// `c(x) = 1 + x¹` (first coordinate).
    pub fn conformal_linear(n: usize) -> Conformal {
        let mut e0 = Vector::zeros(n);
        e0[0] = 1.0;
        Conformal::new(n, Arc::new(|x: &Vector| 1.0 + x[0]))
            .with_derivatives(
                Arc::new(move |_| e0.clone()),
                Arc::new(move |_| Matrix::zeros(n, n)),
            )
            .labeled("conformal_linear")
    }

    /// Slow Gaussian lens `c(x) = 1 − a·exp(−|x|²)`.
    pub fn lens(n: usize, a: f64) -> Conformal {
        Conformal::new(n, Arc::new(move |x: &Vector| 1.0 - a * (-x.norm_squared()).exp()))
            .with_derivatives(
                Arc::new(move |x: &Vector| x * (2.0 * a * (-x.norm_squared()).exp())),
                Arc::new(move |x: &Vector| {
                    let e = 2.0 * a * (-x.norm_squared()).exp();
                    (Matrix::identity(x.len(), x.len()) - x * x.transpose() * 2.0) * e
                }),
            )
            .labeled("lens")
    }

    /// `½(ξ₁² + … + ξ_n²) + ε·x¹·ξ₁ξ₂`, a non-metric polynomial test model.
    pub fn skew_polynomial(n: usize, eps: f64) -> Polynomial {
        let mut terms = Vec::new();
        for i in 0..n {
            let mut e = vec![0; n];
            e[i] = 2;
            terms.push(Monomial::constant(e, 0.5));
        }
        let mut e = vec![0; n];
        e[0] = 1;
        e[1] = 1;
        let mut g0 = Vector::zeros(n);
        g0[0] = eps;
        terms.push(
            Monomial::new(e, Arc::new(move |x: &Vector| eps * x[0]))
                .with_gradient(Arc::new(move |_| g0.clone())),
        );
        make_polynomial(n, terms).expect("degree-two terms")
    }

    /// Names accepted by [`by_name`].
    pub const NAMES: &[&str] = &[
        "euclidean",
        "constant_speed",
        "minkowski",
        "conformal_linear",
        "lens",
        "skew_polynomial",
    ];

    /// Look up a built-in by name with default parameters.
    pub fn by_name(name: &str, n: usize) -> Option<Model> {
        Some(match name {
            "euclidean" => Arc::new(euclidean(n)),
            "constant_speed" => Arc::new(constant_speed(n, 2.0)),
            "minkowski" => Arc::new(minkowski(n)),
            "conformal_linear" => Arc::new(conformal_linear(n)),
            "lens" => Arc::new(lens(n, 0.4)),
            "skew_polynomial" => Arc::new(skew_polynomial(n, 0.1)),
            _ => return None,
        })
    }
}

/// Sampled validation of the model axioms.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ModelReport {
    pub homogeneity: f64,
    pub euler: f64,
    pub gradient_fd: f64,
    pub hessian_fd: f64,
}

/// `|H(x, λξ) − λ²H(x, ξ)| / max(1, λ²|H|)`.
pub fn homogeneity_residual(h: &dyn Hamiltonian, p: &PhasePoint, lambda: f64) -> f64 {
    let v = h.eval(p);
    let w = h.value(&p.x, &(&p.xi * lambda));
    (w - lambda * lambda * v).abs() / (lambda * lambda * v.abs()).max(1.0)
}

/// `|ξ·H_ξ − 2H| / max(1, |H|)`.
pub fn euler_residual(h: &dyn Hamiltonian, p: &PhasePoint) -> f64 {
    let v = h.eval(p);
    (p.xi.dot(&h.grad_xi(&p.x, &p.xi)) - 2.0 * v).abs() / v.abs().max(1.0)
}

/// Relative mismatch between model gradients/Hessian and central differences.
pub fn derivative_residuals(h: &dyn Hamiltonian, p: &PhasePoint) -> (f64, f64) {
    let gx = fd_gradient(|y| h.value(y, &p.xi), &p.x, FD_STEP);
    let gxi = fd_gradient(|e| h.value(&p.x, e), &p.xi, FD_STEP);
    let ax = h.grad_x(&p.x, &p.xi);
    let axi = h.grad_xi(&p.x, &p.xi);
    let scale = ax.amax().max(axi.amax()).max(1.0);
    let g = (gx - ax).amax().max((gxi - axi).amax()) / scale;

    let n = h.dim();
    let mut fdh = Matrix::zeros(2 * n, 2 * n);
    let z = p.state();
    for k in 0..2 * n {
        let s = scaled_step(FD_STEP, z[k]);
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[k] += s;
        zm[k] -= s;
        let pp = PhasePoint::from_state(zp.as_slice(), n);
        let pm = PhasePoint::from_state(zm.as_slice(), n);
        let gp = PhasePoint::from_vectors(h.grad_x(&pp.x, &pp.xi), h.grad_xi(&pp.x, &pp.xi)).state();
        let gm = PhasePoint::from_vectors(h.grad_x(&pm.x, &pm.xi), h.grad_xi(&pm.x, &pm.xi)).state();
        fdh.set_column(k, &((gp - gm) / (2.0 * s)));
    }
    let hs = h.hessian(&p.x, &p.xi);
    let hh = (symmetrize(&fdh) - &hs).amax() / hs.amax().max(1.0);
    (g, hh)
}

/// Worst-case residuals over `samples` and `lambdas`.
pub fn check_model(h: &dyn Hamiltonian, samples: &[PhasePoint], lambdas: &[f64]) -> ModelReport {
    let mut r = ModelReport::default();
    for p in samples {
        for &l in lambdas {
            r.homogeneity = r.homogeneity.max(homogeneity_residual(h, p, l));
        }
        r.euler = r.euler.max(euler_residual(h, p));
        let (g, hh) = derivative_residuals(h, p);
        r.gradient_fd = r.gradient_fd.max(g);
        r.hessian_fd = r.hessian_fd.max(hh);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::builtin::*;
    use super::*;
    use crate::linalg::vec;

    fn p(x: &[f64], xi: &[f64]) -> PhasePoint {
        PhasePoint::new(x, xi)
    }

    #[test]
    fn euclidean_value() {
        let h = euclidean(2);
        assert_eq!(h.eval(&p(&[0.0, 0.0], &[3.0, 4.0])), 12.5);
    }

    #[test]
    fn diagonal_cometric() {
        let g = Arc::new(|_: &Vector| Matrix::from_diagonal(&vec(&[4.0, 1.0])));
        let h = make_riemannian(2, g, &vec(&[0.0, 0.0])).unwrap();
        let q = p(&[0.0, 0.0], &[1.0, 0.0]);
        assert_eq!(h.eval(&q), 2.0);
        assert_eq!(h.grad_xi(&q.x, &q.xi), vec(&[4.0, 0.0]));
    }

    #[test]
    fn conformal_cometric_gradient_matches_oracle() {
        let g = Arc::new(|x: &Vector| Matrix::identity(2, 2) * (1.0 + x[0]).powi(2));
        let h = make_riemannian(2, g, &vec(&[0.0, 0.0])).unwrap();
        let x = vec(&[1.0, 0.0]);
        let xi = vec(&[1.0, 1.0]);
        assert!((h.value(&x, &xi) - 4.0).abs() < 1e-15);
        // independent oracle: H = (1+x1)^2, dH/dx1 = 2(1+x1)·|ξ|²/2·... = 4 at x1=1
        let step = 1e-5;
        let f = |a: f64| 0.5 * (1.0 + a).powi(2) * 2.0;
        let oracle = (f(1.0 + step) - f(1.0 - step)) / (2.0 * step);
        let g = h.grad_x(&x, &xi);
        assert!((g[0] - oracle).abs() < 1e-6);
        assert!(g[1].abs() < 1e-6);
    }

    #[test]
    fn riemannian_rejects_bad_matrices() {
        let asym = Arc::new(|_: &Vector| Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]));
        assert!(matches!(
            make_riemannian(2, asym, &vec(&[0.0, 0.0])),
            Err(Error::NonSymmetricMatrix(_))
        ));
        let indef = Arc::new(|_: &Vector| Matrix::from_diagonal(&vec(&[-1.0, 1.0])));
        assert!(matches!(
            make_riemannian(2, indef, &vec(&[0.0, 0.0])),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn pseudo_riemannian_examples() {
        let m = minkowski(2);
        assert_eq!(m.eval(&p(&[0.0, 0.0], &[1.0, 1.0])), 0.0);
        let m3 = minkowski(3);
        assert_eq!(m3.eval(&p(&[0.0; 3], &[1.0, 0.0, 0.0])), -0.5);
        let c = Arc::new(|x: &Vector| {
            let c = 1.0 + x[1] * x[1];
            Matrix::from_diagonal(&vec(&[-c * c, 1.0]))
        });
        let h = make_pseudo_riemannian(2, c, &vec(&[0.0, 1.0])).unwrap();
        assert!(h.has_null_cone());
        assert_eq!(h.eval(&p(&[0.0, 1.0], &[1.0, 2.0])), 0.0);
        let sing = Arc::new(|_: &Vector| Matrix::from_diagonal(&vec(&[0.0, 1.0])));
        assert!(matches!(
            make_pseudo_riemannian(2, sing, &vec(&[0.0, 0.0])),
            Err(Error::SingularMatrix(_))
        ));
    }

    #[test]
    fn polynomial_examples() {
        let h = make_polynomial(2, vec![Monomial::constant(vec![1, 1], 1.0)]).unwrap();
        assert_eq!(h.eval(&p(&[5.0, -1.0], &[2.0, 3.0])), 6.0);
        let s = skew_polynomial(2, 0.1);
        assert!((s.eval(&p(&[1.0, 0.0], &[1.0, 1.0])) - 1.1).abs() < 1e-15);
        let bad = make_polynomial(2, vec![Monomial::constant(vec![1, 2], 1.0)]);
        assert!(matches!(bad, Err(Error::BadDegree(3))));
    }

    #[test]
    fn dilate_examples() {
        let q = p(&[0.0, 0.0], &[1.0, 0.0]);
        assert_eq!(dilate(&q, 2.0).unwrap(), p(&[0.0, 0.0], &[2.0, 0.0]));
        assert_eq!(dilate(&q, 1.0).unwrap(), q);
        assert!(matches!(dilate(&q, 0.0), Err(Error::NonPositiveLambda(_))));
        let s = skew_polynomial(2, 0.1);
        let r = p(&[0.3, -0.7], &[1.2, 0.4]);
        let d = dilate(&r, 0.37).unwrap();
        assert!((s.eval(&d) - 0.1369 * s.eval(&r)).abs() < 1e-12);
    }

    #[test]
    fn analytic_hessians_match_fd() {
        let q = p(&[0.3, -0.2], &[0.7, 1.1]);
        let models: Vec<Model> = vec![
            Arc::new(lens(2, 0.4)),
            Arc::new(conformal_linear(2)),
            Arc::new(skew_polynomial(2, 0.1)),
            Arc::new(lorentz_product(2, Arc::new(|x: &Vector| 1.0 + 0.2 * x[1].sin()))),
        ];
        for m in models {
            let (g, hh) = derivative_residuals(m.as_ref(), &q);
            assert!(g < 1e-8, "{} grad {g}", m.name());
            assert!(hh < 1e-6, "{} hess {hh}", m.name());
        }
    }

    #[test]
    fn point_validation() {
        assert!(p(&[0.0, 0.0], &[0.0, 0.0]).validate().is_err());
        assert!(p(&[0.0], &[1.0]).validate().is_err());
        assert!(p(&[0.0, 0.0], &[0.0, 1e-300]).validate().is_ok());
    }

    #[test]
    fn scaled_constant() {
        let base: Model = Arc::new(euclidean(2));
        let s = Scaled::constant(base, 2.0);
        let q = p(&[0.1, 0.2], &[1.0, 1.0]);
        assert_eq!(s.eval(&q), 2.0);
        assert_eq!(s.grad_xi(&q.x, &q.xi), vec(&[2.0, 2.0]));
    }
}
