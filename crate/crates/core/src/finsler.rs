//! Finsler structures and their Hamiltonian duals.
//!
//! A [`FinslerModel`] supplies `F(x, v)`. The Legendre map `v ↦ ∂_v(½F²)`,
//! its inverse, the co-Finsler norm `F*` and the Hamiltonian `½(F*)²` are
//! built on top of it, together with the Euler–Lagrange geodesic flow, the
//! boundary maps `ℛ±` and the Finsler scattering relation.

use std::sync::Arc;

use serde::Serialize;

use crate::boundary::{restrict, solve_zeta, zeta_roots, Branch, BoundaryCovector, Domain, TOL_TRANSV};
use crate::canonical::{CanonicalMap, Transported};
use crate::error::{Error, Result};
use crate::flow::{flow_map, IntegratorConfig};
use crate::hamiltonians::{Hamiltonian, MatrixField, Model, ModelKind, PhasePoint, PhaseScalar, VectorField};
use crate::linalg::{fd_gradient5, fd_jacobian5, min_eigenvalue, solve, symmetrize, Matrix, Vector};
use crate::ode;
use crate::scattering::scatter;

const FD_H: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FinslerKind {
    Euclidean,
    Riemannian,
    Randers,
    Custom,
    FromHamiltonian,
}

/// A Finsler structure `F: TM∖0 → (0, ∞)`.
pub trait FinslerModel: Send + Sync {
    fn dim(&self) -> usize;
    fn kind(&self) -> FinslerKind;
    fn norm(&self, x: &Vector, v: &Vector) -> f64;

    fn name(&self) -> String {
        format!("{:?}", self.kind()).to_lowercase()
    }

    /// `ℒ_F(x, v) = F ∂_vF`.
    fn legendre(&self, x: &Vector, v: &Vector) -> Vector {
        fd_gradient5(|w| self.norm(x, w), v, FD_H) * self.norm(x, v)
    }

    /// `g_v = ½∂²_v F²`.
    fn fundamental_tensor(&self, x: &Vector, v: &Vector) -> Matrix {
        let j = fd_jacobian5(|w| Ok(self.legendre(x, w)), v, FD_H).expect("infallible");
        symmetrize(&j)
    }

    /// `∂_x(½F²)`.
    fn lagrangian_grad_x(&self, x: &Vector, v: &Vector) -> Vector {
        fd_gradient5(|y| 0.5 * self.norm(y, v).powi(2), x, FD_H)
    }
}

pub type Finsler = Arc<dyn FinslerModel>;

/// `F = |v|`.
#[derive(Clone, Debug)]
pub struct Euclid {
    pub n: usize,
}

impl FinslerModel for Euclid {
    fn dim(&self) -> usize {
        self.n
    }
    fn kind(&self) -> FinslerKind {
        FinslerKind::Euclidean
    }
    fn norm(&self, _x: &Vector, v: &Vector) -> f64 {
        v.norm()
    }
    fn legendre(&self, _x: &Vector, v: &Vector) -> Vector {
        v.clone()
    }
    fn fundamental_tensor(&self, _x: &Vector, _v: &Vector) -> Matrix {
        Matrix::identity(self.n, self.n)
    }
    fn lagrangian_grad_x(&self, _x: &Vector, _v: &Vector) -> Vector {
        Vector::zeros(self.n)
    }
}

/// `F = √(g(x)(v, v))`.
#[derive(Clone)]
pub struct Riemannian {
    n: usize,
    g: MatrixField,
}

impl Riemannian {
    /// Checks positive definiteness of `g` at the probe points.
    pub fn new(n: usize, g: MatrixField, probes: &[Vector]) -> Result<Self> {
        for x in probes {
            let m = g(x);
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: m.nrows(),
                });
            }
            let e = min_eigenvalue(&m);
            if !(e > 0.0) {
                return Err(Error::NotMinkowskiNorm(format!("metric has eigenvalue {e:.3e}")));
            }
        }
        Ok(Riemannian { n, g })
    }

    pub fn metric(&self, x: &Vector) -> Matrix {
        (self.g)(x)
    }
}

impl FinslerModel for Riemannian {
    fn dim(&self) -> usize {
        self.n
    }
    fn kind(&self) -> FinslerKind {
        FinslerKind::Riemannian
    }
    fn norm(&self, x: &Vector, v: &Vector) -> f64 {
        v.dot(&((self.g)(x) * v)).sqrt()
    }
    fn legendre(&self, x: &Vector, v: &Vector) -> Vector {
        (self.g)(x) * v
    }
    fn fundamental_tensor(&self, x: &Vector, _v: &Vector) -> Matrix {
        (self.g)(x)
    }
}

/// `F = √(vᵀA(x)v) + b(x)·v` with `|b|_{A⁻¹} < 1`.
#[derive(Clone)]
pub struct Randers {
    n: usize,
    a: MatrixField,
    b: VectorField,
}

impl Randers {
    /// Checks `A > 0` and `bᵀA⁻¹b < 1` at the probe points.
    pub fn new(n: usize, a: MatrixField, b: VectorField, probes: &[Vector]) -> Result<Self> {
        let r = Randers { n, a, b };
        for x in probes {
            let s = r.drift_norm(x)?;
            if !(s < 1.0) {
                return Err(Error::NotMinkowskiNorm(format!("|b|_a = {s:.6} at {:?}", x.as_slice())));
            }
        }
        Ok(r)
    }

    /// Constant `A = I` and `b`.
    pub fn constant(b: &[f64]) -> Result<Self> {
        let n = b.len();
        let bv = Vector::from_column_slice(b);
        Randers::new(
            n,
            Arc::new(move |_| Matrix::identity(n, n)),
            Arc::new(move |_| bv.clone()),
            &[Vector::zeros(n)],
        )
    }

    /// `√(bᵀA⁻¹b)` at `x`.
    pub fn drift_norm(&self, x: &Vector) -> Result<f64> {
        let a = (self.a)(x);
        let e = min_eigenvalue(&a);
        if !(e > 0.0) {
            return Err(Error::NotMinkowskiNorm(format!("a has eigenvalue {e:.3e}")));
        }
        let b = (self.b)(x);
        Ok(b.dot(&solve(&a, &b)?).sqrt())
    }

    pub fn metric(&self, x: &Vector) -> Matrix {
        (self.a)(x)
    }

    pub fn drift(&self, x: &Vector) -> Vector {
        (self.b)(x)
    }
}

impl FinslerModel for Randers {
    fn dim(&self) -> usize {
        self.n
    }
    fn kind(&self) -> FinslerKind {
        FinslerKind::Randers
    }
    fn norm(&self, x: &Vector, v: &Vector) -> f64 {
        v.dot(&((self.a)(x) * v)).sqrt() + (self.b)(x).dot(v)
    }
    fn legendre(&self, x: &Vector, v: &Vector) -> Vector {
        let av = (self.a)(x) * v;
        let alpha = v.dot(&av).sqrt();
        let b = (self.b)(x);
        let f = alpha + b.dot(v);
        (av / alpha + b) * f
    }
    fn fundamental_tensor(&self, x: &Vector, v: &Vector) -> Matrix {
        let a = (self.a)(x);
        let av = &a * v;
        let alpha = v.dot(&av).sqrt();
        let b = (self.b)(x);
        let f = alpha + b.dot(v);
        let dv = &av / alpha + &b;
        &dv * dv.transpose() + (a / alpha - &av * av.transpose() / alpha.powi(3)) * f
    }
}

/// `F(x, v)` from an expression-like closure.
#[derive(Clone)]
pub struct CustomFinsler {
    n: usize,
    label: String,
    f: PhaseScalar,
}

impl CustomFinsler {
    pub fn new(n: usize, label: &str, f: PhaseScalar) -> Self {
        CustomFinsler {
            n,
            label: label.to_string(),
            f,
        }
    }
}

impl FinslerModel for CustomFinsler {
    fn dim(&self) -> usize {
        self.n
    }
    fn kind(&self) -> FinslerKind {
        FinslerKind::Custom
    }
    fn norm(&self, x: &Vector, v: &Vector) -> f64 {
        (self.f)(x, v)
    }
    fn name(&self) -> String {
        self.label.clone()
    }
}

/// The Finsler structure of a fiberwise strictly convex Hamiltonian:
/// `ℒ_F(v)` solves `H_ξ(x, ξ) = v`, and `F(v) = √(ℒ_F(v)·v)`.
#[derive(Clone)]
pub struct FromHamiltonian {
    pub model: Model,
}

impl FromHamiltonian {
    pub fn new(model: Model) -> Self {
        FromHamiltonian { model }
    }

    fn xi_hessian(&self, x: &Vector, xi: &Vector) -> Matrix {
        let n = self.model.dim();
        self.model.hessian(x, xi).view((n, n), (n, n)).into_owned()
    }

    pub fn try_legendre(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        let n = self.model.dim();
        let scale = v.amax().max(1e-300);
        let mut xi = v.clone();
        let mut r = self.model.grad_xi(x, &xi) - v;
        for _ in 0..60 {
            if r.amax() <= 1e-14 * scale {
                return Ok(xi);
            }
            let step = solve(&self.xi_hessian(x, &xi), &r)?;
            let mut lam = 1.0;
            loop {
                let cand = &xi - &step * lam;
                let rc = self.model.grad_xi(x, &cand) - v;
                if rc.amax() < r.amax() || lam < 1e-6 {
                    xi = cand;
                    r = rc;
                    break;
                }
                lam *= 0.5;
            }
            if step.amax() * lam <= 1e-15 * xi.amax() {
                break;
            }
        }
        if r.amax() <= 1e-10 * scale {
            Ok(xi)
        } else {
            Err(Error::NewtonDiverged(format!(
                "inverse of H_xi in dimension {n}: residual {:.3e}",
                r.amax()
            )))
        }
    }
}

impl FinslerModel for FromHamiltonian {
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn kind(&self) -> FinslerKind {
        FinslerKind::FromHamiltonian
    }
    fn norm(&self, x: &Vector, v: &Vector) -> f64 {
        match self.try_legendre(x, v) {
            Ok(xi) => xi.dot(v).max(0.0).sqrt(),
            Err(_) => f64::NAN,
        }
    }
    fn legendre(&self, x: &Vector, v: &Vector) -> Vector {
        self.try_legendre(x, v)
            .unwrap_or_else(|_| Vector::from_element(v.len(), f64::NAN))
    }
    fn fundamental_tensor(&self, x: &Vector, v: &Vector) -> Matrix {
        match self.try_legendre(x, v) {
            Ok(xi) => self
                .xi_hessian(x, &xi)
                .try_inverse()
                .unwrap_or_else(|| Matrix::from_element(v.len(), v.len(), f64::NAN)),
            Err(_) => Matrix::from_element(v.len(), v.len(), f64::NAN),
        }
    }
    fn name(&self) -> String {
        format!("finsler({})", self.model.name())
    }
}

/// `ℒ_F(x, v)`.
pub fn legendre(fm: &dyn FinslerModel, x: &Vector, v: &Vector) -> Result<Vector> {
    if v.amax() == 0.0 {
        return Err(Error::InvalidPoint("zero vector".into()));
    }
    Ok(fm.legendre(x, v))
}

/// `ℒ_F⁻¹(x, ξ)` by damped Newton with Jacobian `g_v`.
pub fn legendre_inverse(fm: &dyn FinslerModel, x: &Vector, xi: &Vector, seed: Option<&Vector>) -> Result<Vector> {
    if xi.amax() == 0.0 {
        return Err(Error::InvalidPoint("zero covector".into()));
    }
    let scale = xi.amax();
    let mut v = seed.cloned().unwrap_or_else(|| xi.clone());
    let mut r = fm.legendre(x, &v) - xi;
    for _ in 0..80 {
        if r.amax() <= 1e-15 * scale {
            return Ok(v);
        }
        let step = solve(&fm.fundamental_tensor(x, &v), &r)?;
        let mut lam = 1.0;
        let mut accepted = false;
        while lam >= 1e-8 {
            let cand = &v - &step * lam;
            let ok = fm.norm(x, &cand);
            if ok.is_finite() && ok > 0.0 {
                let rc = fm.legendre(x, &cand) - xi;
                if rc.amax() < r.amax() {
                    v = cand;
                    r = rc;
                    accepted = true;
                    break;
                }
            }
            lam *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if r.amax() <= 1e-11 * scale {
        Ok(v)
    } else {
        Err(Error::NewtonDiverged(format!("legendre inverse residual {:.3e}", r.amax())))
    }
}

/// `F*(x, ξ) = ξ(v)/F(x, v)` with `v = ℒ_F⁻¹(ξ)`.
pub fn dual_norm(fm: &dyn FinslerModel, x: &Vector, xi: &Vector) -> Result<f64> {
    let v = legendre_inverse(fm, x, xi, None)?;
    Ok(xi.dot(&v) / fm.norm(x, &v))
}

/// `max {ξ(v) : F(x, v) = 1}` by direct maximization of `ξ(w)/F(x, w)` over
/// unit directions, independent of the Legendre map.
pub fn dual_norm_oracle(fm: &dyn FinslerModel, x: &Vector, xi: &Vector) -> f64 {
    let n = fm.dim();
    let g = |w: &Vector| xi.dot(w) / fm.norm(x, w);
    if n == 1 {
        return g(&Vector::from_element(1, 1.0)).max(g(&Vector::from_element(1, -1.0)));
    }
    if n == 2 {
        let at = |t: f64| g(&Vector::from_column_slice(&[t.cos(), t.sin()]));
        let m = 4096;
        let dt = std::f64::consts::TAU / m as f64;
        let k = (0..m)
            .max_by(|&a, &b| at(a as f64 * dt).total_cmp(&at(b as f64 * dt)))
            .unwrap_or(0);
        // golden section on the bracketing cell pair
        let (mut a, mut b) = ((k as f64 - 1.0) * dt, (k as f64 + 1.0) * dt);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let (mut fc, mut fd) = (at(c), at(d));
        for _ in 0..120 {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = at(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = at(d);
            }
        }
        return at(0.5 * (a + b)).max(fc).max(fd);
    }
    // projected gradient ascent on the unit sphere from the best of a sample
    let mut w = xi.normalize();
    let mut best = g(&w);
    let samples = crate::traveltime::unit_directions(n);
    for s in &samples {
        let val = g(s);
        if val > best {
            best = val;
            w = s.clone();
        }
    }
    let mut step = 0.1;
    for _ in 0..2000 {
        let grad = fd_gradient5(|y| g(y), &w, 1e-4);
        let tang = &grad - &w * w.dot(&grad);
        if tang.norm() < 1e-13 {
            break;
        }
        let cand = (&w + &tang * step).normalize();
        let val = g(&cand);
        if val > best {
            best = val;
            w = cand;
            step *= 1.5;
        } else {
            step *= 0.5;
            if step < 1e-14 {
                break;
            }
        }
    }
    best
}

/// `H = ½(F*)²` with `H_ξ = ℒ_F⁻¹(ξ)`.
#[derive(Clone)]
pub struct FinslerDual {
    pub finsler: Finsler,
}

impl FinslerDual {
    pub fn new(finsler: Finsler) -> Self {
        FinslerDual { finsler }
    }

    fn inverse(&self, x: &Vector, xi: &Vector) -> Option<Vector> {
        legendre_inverse(self.finsler.as_ref(), x, xi, None).ok()
    }
}

impl Hamiltonian for FinslerDual {
    fn dim(&self) -> usize {
        self.finsler.dim()
    }
    fn kind(&self) -> ModelKind {
        ModelKind::FinslerDual
    }
    fn value(&self, x: &Vector, xi: &Vector) -> f64 {
        if xi.amax() == 0.0 {
            return 0.0;
        }
        match self.inverse(x, xi) {
            Some(v) => 0.5 * xi.dot(&v),
            None => f64::NAN,
        }
    }
    fn grad_xi(&self, x: &Vector, xi: &Vector) -> Vector {
        if xi.amax() == 0.0 {
            return Vector::zeros(xi.len());
        }
        self.inverse(x, xi)
            .unwrap_or_else(|| Vector::from_element(xi.len(), f64::NAN))
    }
    fn grad_x(&self, x: &Vector, xi: &Vector) -> Vector {
        // −∂_x(½F²) at v = ℒ⁻¹ξ
        match self.inverse(x, xi) {
            Some(v) => -self.finsler.lagrangian_grad_x(x, &v),
            None => Vector::from_element(xi.len(), f64::NAN),
        }
    }
    fn hessian_step(&self) -> f64 {
        1e-4
    }
    fn name(&self) -> String {
        format!("dual({})", self.finsler.name())
    }
}

pub fn to_hamiltonian(fm: Finsler) -> FinslerDual {
    FinslerDual::new(fm)
}

/// Smallest eigenvalue of `g_v` and worst 1-homogeneity defect over samples.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MinkowskiReport {
    pub min_eigenvalue: f64,
    pub homogeneity: f64,
}

pub fn check_minkowski(fm: &dyn FinslerModel, samples: &[(Vector, Vector)]) -> Result<MinkowskiReport> {
    let mut rep = MinkowskiReport {
        min_eigenvalue: f64::INFINITY,
        homogeneity: 0.0,
    };
    for (x, v) in samples {
        let f = fm.norm(x, v);
        for lam in [0.5, 2.0, 3.0] {
            let d = (fm.norm(x, &(v * lam)) - lam * f).abs() / (lam * f);
            rep.homogeneity = rep.homogeneity.max(d);
        }
        rep.min_eigenvalue = rep.min_eigenvalue.min(min_eigenvalue(&fm.fundamental_tensor(x, v)));
    }
    if !(rep.min_eigenvalue > 0.0) {
        return Err(Error::NotMinkowskiNorm(format!("g_v eigenvalue {:.3e}", rep.min_eigenvalue)));
    }
    Ok(rep)
}

/// Euler–Lagrange equations of `L = ½F²` on `(x, v)`:
/// `ẋ = v`, `g_v v̇ = L_x − (∂_x L_v) v`.
pub fn euler_lagrange_rhs<'a>(fm: &'a dyn FinslerModel) -> impl Fn(f64, &[f64], &mut [f64]) -> Result<()> + 'a {
    let n = fm.dim();
    move |_t, y, dy| {
        let x = Vector::from_column_slice(&y[..n]);
        let v = Vector::from_column_slice(&y[n..]);
        let lx = fm.lagrangian_grad_x(&x, &v);
        let h = FD_H * x.amax().max(1.0) / v.norm().max(1e-300);
        let at = |d: f64| fm.legendre(&(&x + &v * d), &v);
        let mixed = (-at(2.0 * h) + at(h) * 8.0 - at(-h) * 8.0 + at(-2.0 * h)) / (12.0 * h);
        let acc = solve(&fm.fundamental_tensor(&x, &v), &(lx - mixed))?;
        dy[..n].copy_from_slice(v.as_slice());
        dy[n..].copy_from_slice(acc.as_slice());
        Ok(())
    }
}

/// `Φ_L^t(x, v)`.
pub fn geodesic_flow(fm: &dyn FinslerModel, x: &Vector, v: &Vector, t: f64, cfg: &IntegratorConfig) -> Result<(Vector, Vector)> {
    let n = fm.dim();
    let y0: Vec<f64> = x.iter().chain(v.iter()).copied().collect();
    if t == 0.0 {
        return Ok((x.clone(), v.clone()));
    }
    if t.abs() > cfg.max_time {
        return Err(Error::MaxTimeExceeded(cfg.max_time));
    }
    let mut last = y0.clone();
    ode::integrate(&euler_lagrange_rhs(fm), 0.0, &y0, t, &cfg.tolerances(), |s| {
        last.clone_from(&s.y1);
        Ok(ode::Control::Continue)
    })?;
    Ok((
        Vector::from_column_slice(&last[..n]),
        Vector::from_column_slice(&last[n..]),
    ))
}

/// `‖Φ_H^t(ℒ_F(x, v)) − ℒ_F(Φ_L^t(x, v))‖∞`.
pub fn conjugation_check(fm: Finsler, x: &Vector, v: &Vector, t: f64, cfg: &IntegratorConfig) -> Result<f64> {
    let h = FinslerDual::new(fm.clone());
    let p0 = PhasePoint::from_vectors(x.clone(), fm.legendre(x, v));
    let a = flow_map(&h, &p0, t, cfg)?;
    let (y, w) = geodesic_flow(fm.as_ref(), x, v, t, cfg)?;
    let b = PhasePoint::from_vectors(y.clone(), fm.legendre(&y, &w));
    Ok(a.dist(&b))
}

const UNIT_TOL: f64 = 1e-8;

/// `ℛ±(v) = ι*ℒ_F(v)` for a unit vector at a boundary point.
pub fn r_map(fm: &dyn FinslerModel, domain: &Domain, x: &Vector, v: &Vector) -> Result<BoundaryCovector> {
    let f = fm.norm(x, v);
    if (f - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidPoint(format!("F(x, v) = {f} is not 1")));
    }
    let g = domain.grad_rho(x);
    if g.dot(v).abs() <= TOL_TRANSV * g.norm() * v.norm() {
        return Err(Error::TangentialVector);
    }
    restrict(domain, &PhasePoint::from_vectors(x.clone(), fm.legendre(x, v)))
}

/// `ℛ±⁻¹`: the unit vector on the requested branch with `ι*ℒ_F(v) = ξ′`.
pub fn r_map_inverse(fm: Finsler, domain: &Domain, bc: &BoundaryCovector, branch: Branch) -> Result<(Vector, Vector)> {
    let h = FinslerDual::new(fm.clone());
    let p = solve_zeta(&h, domain, bc, 0.5, branch)?;
    let v = legendre_inverse(fm.as_ref(), &p.x, &p.xi, None)?;
    Ok((p.x, v))
}

/// Roots of `H(x, ξ′ + sν) = ½` on `[−radius, radius]` as `(s, ∂_sH)`.
pub fn r_branch_roots(fm: Finsler, domain: &Domain, bc: &BoundaryCovector, radius: f64) -> Result<Vec<(f64, f64)>> {
    let h = FinslerDual::new(fm);
    zeta_roots(&h, domain, bc, 0.5, radius, 400)
}

/// One Finsler scattering evaluation, by both routes.
#[derive(Clone, Debug, Serialize)]
pub struct FinslerScatter {
    pub exit_x: Vec<f64>,
    pub exit_v: Vec<f64>,
    pub ell: f64,
    /// Exit and travel time from the Euler–Lagrange integration.
    pub lagrangian_exit_x: Vec<f64>,
    pub lagrangian_exit_v: Vec<f64>,
    pub lagrangian_ell: f64,
    pub route_residual: f64,
}

/// First boundary hit of the Euler–Lagrange flow from `(x, v)`.
pub fn geodesic_exit(fm: &dyn FinslerModel, domain: &Domain, x: &Vector, v: &Vector, cfg: &IntegratorConfig) -> Result<(Vector, Vector, f64)> {
    let n = fm.dim();
    let y0: Vec<f64> = x.iter().chain(v.iter()).copied().collect();
    let hit = ode::integrate_to_event(
        &euler_lagrange_rhs(fm),
        0.0,
        &y0,
        cfg.max_time,
        &cfg.tolerances(),
        |y| domain.rho(&Vector::from_column_slice(&y[..n])),
        8,
    )?
    .ok_or(Error::Trapped)?;
    Ok((
        Vector::from_column_slice(&hit.y[..n]),
        Vector::from_column_slice(&hit.y[n..]),
        hit.t,
    ))
}

/// `ℛ₋⁻¹∘S∘ℛ₊` for a Hamiltonian with its own Legendre map.
fn hamiltonian_route(
    h: &dyn Hamiltonian,
    legendre_of: &dyn Fn(&Vector, &Vector) -> Result<Vector>,
    domain: &Domain,
    x: &Vector,
    v: &Vector,
    cfg: &IntegratorConfig,
) -> Result<(Vector, Vector, f64)> {
    let g = domain.grad_rho(x);
    if g.dot(v) <= TOL_TRANSV * g.norm() * v.norm() {
        return Err(Error::TangentialVector);
    }
    let bc = restrict(domain, &PhasePoint::from_vectors(x.clone(), legendre_of(x, v)?))?;
    let rec = scatter(h, domain, &bc, 0.5, Branch::Incoming, cfg)?;
    let out = solve_zeta(h, domain, &rec.exit_bc, 0.5, Branch::Outgoing)?;
    let w = h.grad_xi(&out.x, &out.xi);
    Ok((out.x, w, rec.ell))
}

/// `Ŝ^F` on a unit incoming `(x, v)`, computed by Euler–Lagrange integration
/// and by `ℛ₋⁻¹∘S∘ℛ₊` through the dual Hamiltonian.
pub fn finsler_scatter(fm: Finsler, domain: &Domain, x: &Vector, v: &Vector, cfg: &IntegratorConfig) -> Result<FinslerScatter> {
    let f = fm.norm(x, v);
    if (f - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidPoint(format!("F(x, v) = {f} is not 1")));
    }
    let h = FinslerDual::new(fm.clone());
    let fmr = fm.as_ref();
    let (y, w, ell) = hamiltonian_route(&h, &|x, v| Ok(fmr.legendre(x, v)), domain, x, v, cfg)?;
    let (ly, lw, lell) = geodesic_exit(fmr, domain, x, v, cfg)?;
    let res = (&y - &ly).amax().max((&w - &lw).amax()).max((ell - lell).abs());
    Ok(FinslerScatter {
        exit_x: y.iter().copied().collect(),
        exit_v: w.iter().copied().collect(),
        ell,
        lagrangian_exit_x: ly.iter().copied().collect(),
        lagrangian_exit_v: lw.iter().copied().collect(),
        lagrangian_ell: lell,
        route_residual: res,
    })
}

/// Comparison of `Ŝ^F` and `Ŝ^{F̃}` for `F̃` dual to `H∘κ⁻¹`.
#[derive(Clone, Debug, Serialize)]
pub struct DirectProblemReport {
    pub min_convexity: f64,
    pub worst_exit: f64,
    pub worst_ell: f64,
    pub rays: usize,
}

impl DirectProblemReport {
    pub fn worst(&self) -> f64 {
        self.worst_exit.max(self.worst_ell)
    }
}

/// Checks that `H̃ = H∘κ⁻¹` is fiberwise strictly convex at the probes, then
/// compares the Finsler scattering of `F` and `F̃` on unit incoming entries.
pub fn finsler_direct_problem(
    fm: Finsler,
    kappa: CanonicalMap,
    domain: &Domain,
    entries: &[(Vector, Vector)],
    probes: &[PhasePoint],
    cfg: &IntegratorConfig,
) -> Result<DirectProblemReport> {
    let h: Model = Arc::new(FinslerDual::new(fm.clone()));
    let ht: Model = Arc::new(Transported::new(h.clone(), kappa));
    let n = fm.dim();
    let mut min_conv = f64::INFINITY;
    for p in probes {
        let hess = ht.hessian(&p.x, &p.xi);
        let e = min_eigenvalue(&hess.view((n, n), (n, n)).into_owned());
        min_conv = min_conv.min(e);
    }
    if !(min_conv > 0.0) {
        return Err(Error::NotConvexOnImage(min_conv));
    }
    let ft = FromHamiltonian::new(ht.clone());
    let fmr = fm.as_ref();
    let mut rep = DirectProblemReport {
        min_convexity: min_conv,
        worst_exit: 0.0,
        worst_ell: 0.0,
        rays: entries.len(),
    };
    for (x, v) in entries {
        let (y, w, ell) = hamiltonian_route(h.as_ref(), &|x, v| Ok(fmr.legendre(x, v)), domain, x, v, cfg)?;
        let (yt, wt, ellt) = hamiltonian_route(ht.as_ref(), &|x, v| ft.try_legendre(x, v), domain, x, v, cfg)?;
        rep.worst_exit = rep.worst_exit.max((&y - &yt).amax()).max((&w - &wt).amax());
        rep.worst_ell = rep.worst_ell.max((ell - ellt).abs());
    }
    Ok(rep)
}

/// Named Finsler structures.
pub mod builtin {
    use super::*;

    pub const NAMES: &[&str] = &["euclid", "conformal", "randers_constant", "randers_swirl"];

    pub fn euclid(n: usize) -> Euclid {
        Euclid { n }
    }

    /// `g = c(x)⁻² I` with `c = 1 + 0.2 x₀`.
    pub fn conformal(n: usize) -> Riemannian {
        Riemannian::new(
            n,
            Arc::new(move |x: &Vector| Matrix::identity(n, n) / (1.0 + 0.2 * x[0]).powi(2)),
            &[Vector::zeros(n)],
        )
        .expect("positive definite")
    }

    /// `A = I`, `b = (0.3, 0, …)`.
    pub fn randers_constant(n: usize) -> Randers {
        let mut b = vec![0.0; n];
        b[0] = 0.3;
        Randers::constant(&b).expect("|b| < 1")
    }

    /// `A = I`, `b = 0.25(−x₁, x₀, 0, …)`; a Minkowski norm for `|x| < 4`.
    pub fn randers_swirl(n: usize) -> Randers {
        let probes: Vec<Vector> = [[0.0, 0.0], [1.0, 1.0], [-2.0, 2.0]]
            .iter()
            .map(|p| {
                let mut v = Vector::zeros(n);
                v[0] = p[0];
                v[1] = p[1];
                v
            })
            .collect();
        Randers::new(
            n,
            Arc::new(move |_| Matrix::identity(n, n)),
            Arc::new(move |x: &Vector| {
                let mut b = Vector::zeros(n);
                b[0] = -0.25 * x[1];
                b[1] = 0.25 * x[0];
                b
            }),
            &probes,
        )
        .expect("|b| < 1")
    }

    pub fn by_name(name: &str, n: usize) -> Option<Finsler> {
        if n < 2 {
            return None;
        }
        Some(match name {
            "euclid" => Arc::new(euclid(n)),
            "conformal" => Arc::new(conformal(n)),
            "randers_constant" => Arc::new(randers_constant(n)),
            "randers_swirl" => Arc::new(randers_swirl(n)),
            _ => return None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::builtin::*;
    use super::*;
    use crate::boundary::shapes::{disk, half_space};

    fn v(a: &[f64]) -> Vector {
        Vector::from_column_slice(a)
    }

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default().tight()
    }

    /// Closed-form dual of a constant Randers norm with `A = I`.
    fn randers_dual(b: &Vector, xi: &Vector) -> f64 {
        let l = 1.0 - b.norm_squared();
        ((l * xi.norm_squared() + b.dot(xi).powi(2)).sqrt() - b.dot(xi)) / l
    }

    #[test]
    fn euclid_is_identity() {
        let f = euclid(2);
        let x = v(&[0.1, 0.2]);
        assert_eq!(legendre(&f, &x, &v(&[0.6, 0.8])).unwrap(), v(&[0.6, 0.8]));
        assert!((dual_norm(&f, &x, &v(&[3.0, 4.0])).unwrap() - 5.0).abs() < 1e-14);
        assert!(legendre(&f, &x, &v(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn randers_legendre_value() {
        let f = randers_constant(2);
        let x = v(&[0.0, 0.0]);
        let xi = legendre(&f, &x, &v(&[1.0, 0.0])).unwrap();
        assert!((xi - v(&[1.69, 0.0])).amax() < 1e-14);
        let half_sq = |w: &Vector| 0.5 * f.norm(&x, w).powi(2);
        let fd = fd_gradient5(half_sq, &v(&[0.3, -0.7]), 1e-3);
        assert!((fd - f.legendre(&x, &v(&[0.3, -0.7]))).amax() < 1e-10);
        let g = f.fundamental_tensor(&x, &v(&[0.3, -0.7]));
        let gfd = symmetrize(&fd_jacobian5(|w| Ok(f.legendre(&x, w)), &v(&[0.3, -0.7]), 1e-3).unwrap());
        assert!((g - gfd).amax() < 1e-9);
    }

    #[test]
    fn randers_dual_matches_closed_form_and_oracle() {
        let f = randers_constant(2);
        let x = v(&[0.0, 0.0]);
        for xi in [v(&[1.0, 0.0]), v(&[-0.4, 0.9]), v(&[0.2, -1.5])] {
            let d = dual_norm(&f, &x, &xi).unwrap();
            assert!((d - randers_dual(&v(&[0.3, 0.0]), &xi)).abs() < 1e-12);
            assert!((d - dual_norm_oracle(&f, &x, &xi)).abs() < 1e-10);
        }
        assert!((dual_norm(&f, &x, &v(&[1.0, 0.0])).unwrap() - 0.7 / 0.91).abs() < 1e-14);
    }

    #[test]
    fn oracle_in_three_dimensions() {
        let f = randers_constant(3);
        let x = Vector::zeros(3);
        let xi = v(&[0.3, -0.5, 0.8]);
        let b = v(&[0.3, 0.0, 0.0]);
        assert!((dual_norm_oracle(&f, &x, &xi) - randers_dual(&b, &xi)).abs() < 1e-9);
    }

    #[test]
    fn rejects_large_drift() {
        assert!(matches!(Randers::constant(&[1.0, 0.0]), Err(Error::NotMinkowskiNorm(_))));
    }

    #[test]
    fn riemannian_dual_hamiltonian() {
        let f: Finsler = Arc::new(conformal(2));
        let h = FinslerDual::new(f);
        let x = v(&[0.5, 0.1]);
        let xi = v(&[0.3, 0.4]);
        let c: f64 = 1.1;
        assert!((h.value(&x, &xi) - 0.5 * c * c * 0.25).abs() < 1e-14);
        assert!((h.grad_xi(&x, &xi) - &xi * (c * c)).amax() < 1e-14);
        assert!((h.grad_x(&x, &xi)[0] - 0.2 * c * 0.25).abs() < 1e-9);
    }

    #[test]
    fn euclid_conjugation_is_exact() {
        let f: Finsler = Arc::new(euclid(2));
        let r = conjugation_check(f, &v(&[0.0, 0.0]), &v(&[0.6, 0.8]), 1.5, &cfg()).unwrap();
        assert!(r < 1e-10);
    }

    #[test]
    fn swirl_conjugation() {
        let f: Finsler = Arc::new(randers_swirl(2));
        let r = conjugation_check(f, &v(&[0.1, -0.2]), &v(&[0.5, 0.6]), 1.0, &cfg()).unwrap();
        assert!(r < 1e-7, "{r}");
    }

    #[test]
    fn r_map_half_plane() {
        let f: Finsler = Arc::new(euclid(2));
        let d = half_space(2);
        let bc = r_map(f.as_ref(), &d, &v(&[0.0, 0.0]), &v(&[0.6, 0.8])).unwrap();
        assert!((bc.xi_prime[0] - 0.6).abs() < 1e-15);
        let n = r_map(f.as_ref(), &d, &v(&[0.0, 0.0]), &v(&[0.0, 1.0])).unwrap();
        assert_eq!(n.xi_prime[0], 0.0);
        assert!(matches!(
            r_map(f.as_ref(), &d, &v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(Error::TangentialVector)
        ));
    }

    #[test]
    fn randers_r_map_roundtrip_and_branches() {
        let f: Finsler = Arc::new(randers_constant(2));
        let d = half_space(2);
        let x = v(&[0.2, 0.0]);
        let dir = v(&[0.5, 0.7]);
        let unit = &dir / f.norm(&x, &dir);
        let bc = r_map(f.as_ref(), &d, &x, &unit).unwrap();
        let (_, back) = r_map_inverse(f.clone(), &d, &bc, Branch::Incoming).unwrap();
        assert!((back - &unit).amax() < 1e-10);
        let roots = r_branch_roots(f, &d, &bc, 5.0).unwrap();
        assert_eq!(roots.len(), 2);
        assert!(roots[0].1 * roots[1].1 < 0.0);
    }

    #[test]
    fn disk_chord_both_routes() {
        let f: Finsler = Arc::new(euclid(2));
        let s = finsler_scatter(f, &disk(1.0), &v(&[-1.0, 0.0]), &v(&[1.0, 0.0]), &cfg()).unwrap();
        assert!((s.ell - 2.0).abs() < 1e-10);
        assert!((s.exit_x[0] - 1.0).abs() < 1e-10 && (s.exit_v[0] - 1.0).abs() < 1e-10);
        assert!(s.route_residual < 1e-9);
    }

    #[test]
    fn identity_direct_problem() {
        let f: Finsler = Arc::new(randers_constant(2));
        let d = disk(1.0);
        let x = v(&[-1.0, 0.0]);
        let dir = v(&[1.0, 0.3]);
        let unit = &dir / f.norm(&x, &dir);
        let p = PhasePoint::new(&[0.0, 0.0], &[1.0, 0.0]);
        let rep = finsler_direct_problem(f, CanonicalMap::identity(), &d, &[(x, unit)], &[p], &cfg()).unwrap();
        assert!(rep.worst() < 1e-9, "{rep:?}");
        assert!(rep.min_convexity > 0.0);
    }
}
