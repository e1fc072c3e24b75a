//! Canonical transformations between phase spaces: flow-out charts built
//! from boundary data, cotangent lifts, generating functions, the
//! zero-energy construction, and numerical validators for all of them.

use std::sync::Arc;

use serde::Serialize;

use crate::boundary::{
    hit_boundary, restrict_in_chart, solve_zeta, transversality, Branch, BoundaryCovector, Direction, Domain,
};
use crate::error::{Error, Result};
use crate::flow::{flow_map, IntegratorConfig};
use crate::hamiltonians::{Hamiltonian, MatrixField, Model, ModelKind, PhasePoint, PhaseScalar, VectorField};
use crate::linalg::{fd_gradient5, fd_jacobian5, scaled_step, solve, symplectic_j, symplectic_residual, Matrix, Vector};
use crate::scattering::{scatter, scatter_hat};
use crate::transforms::PhaseFunction;

pub type PhaseMap = Arc<dyn Fn(&PhasePoint) -> Result<PhasePoint> + Send + Sync>;

/// How a [`CanonicalMap`] was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Identity,
    PsiPair,
    GeneratingFunction,
    CotangentLift,
    ZeroEnergy,
}

/// A phase-space map with its inverse.
#[derive(Clone)]
pub struct CanonicalMap {
    forward: PhaseMap,
    inverse: PhaseMap,
    pub homogeneous: bool,
    pub provenance: Provenance,
}

/// Relative step for Jacobians of composed maps.
pub const MAP_FD_STEP: f64 = 2e-4;

impl CanonicalMap {
    pub fn new(forward: PhaseMap, inverse: PhaseMap, homogeneous: bool, provenance: Provenance) -> Self {
        CanonicalMap {
            forward,
            inverse,
            homogeneous,
            provenance,
        }
    }

    pub fn identity() -> Self {
        let id: PhaseMap = Arc::new(|p: &PhasePoint| Ok(p.clone()));
        CanonicalMap::new(id.clone(), id, true, Provenance::Identity)
    }

    pub fn apply(&self, p: &PhasePoint) -> Result<PhasePoint> {
        (self.forward)(p)
    }

    pub fn apply_inverse(&self, p: &PhasePoint) -> Result<PhasePoint> {
        (self.inverse)(p)
    }

    pub fn inverted(&self) -> CanonicalMap {
        CanonicalMap {
            forward: self.inverse.clone(),
            inverse: self.forward.clone(),
            homogeneous: self.homogeneous,
            provenance: self.provenance,
        }
    }

    /// Five-point finite-difference Jacobian in `(x, ξ)`.
    pub fn jacobian(&self, p: &PhasePoint, h: f64) -> Result<Matrix> {
        let n = p.dim();
        fd_jacobian5(
            |z| Ok(self.apply(&PhasePoint::from_state(z.as_slice(), n))?.state()),
            &p.state(),
            h,
        )
    }

    pub fn symplectic_residual(&self, p: &PhasePoint) -> Result<f64> {
        Ok(symplectic_residual(&self.jacobian(p, MAP_FD_STEP)?))
    }

    /// `‖κ(M_λ p) − M_λ κ(p)‖∞ / λ`.
    pub fn homogeneity_residual(&self, p: &PhasePoint, lambda: f64) -> Result<f64> {
        let a = self.apply(&p.dilate(lambda)?)?;
        let b = self.apply(p)?.dilate(lambda)?;
        Ok(a.dist(&b) / lambda)
    }

    /// `‖κ⁻¹(κ(p)) − p‖∞`.
    pub fn roundtrip_residual(&self, p: &PhasePoint) -> Result<f64> {
        Ok(self.apply_inverse(&self.apply(p)?)?.dist(p))
    }
}

/// `|H(p) − H̃(κ(p))| / max(1, |H(p)|)`.
pub fn pullback_residual(kappa: &CanonicalMap, h: &dyn Hamiltonian, ht: &dyn Hamiltonian, p: &PhasePoint) -> Result<f64> {
    let v = h.eval(p);
    Ok((v - ht.eval(&kappa.apply(p)?)).abs() / v.abs().max(1.0))
}

/// `‖κ(Φ^s p) − Φ̃^s(κ(p))‖∞`.
pub fn conjugation_residual(
    kappa: &CanonicalMap,
    h: &dyn Hamiltonian,
    ht: &dyn Hamiltonian,
    p: &PhasePoint,
    s: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let a = kappa.apply(&flow_map(h, p, s, cfg)?)?;
    let b = flow_map(ht, &kappa.apply(p)?, s, cfg)?;
    Ok(a.dist(&b))
}

/// `‖ι*κ(p) − ι*p‖∞` together with the base-point mismatch, for `p` on `∂M`.
pub fn boundary_residual(kappa: &CanonicalMap, domain: &Domain, chart: usize, p: &PhasePoint) -> Result<f64> {
    let q = kappa.apply(p)?;
    let a = restrict_in_chart(domain, chart, p)?;
    let b = restrict_in_chart(domain, chart, &q)?;
    Ok(a.dist(&b).max((&q.x - &p.x).amax()))
}

/// Per-point validation record.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct KappaReport {
    pub symplectic: f64,
    pub hamiltonian_pullback: f64,
    pub conjugation: f64,
    pub boundary: f64,
}

impl KappaReport {
    pub fn worst(reports: &[KappaReport]) -> KappaReport {
        reports.iter().fold(KappaReport::default(), |a, r| KappaReport {
            symplectic: a.symplectic.max(r.symplectic),
            hamiltonian_pullback: a.hamiltonian_pullback.max(r.hamiltonian_pullback),
            conjugation: a.conjugation.max(r.conjugation),
            boundary: a.boundary.max(r.boundary),
        })
    }
}

/// The flow-out chart `(u, s, ξ′, E) ↦ Φ^s(ζ(u, ξ′, E))`, or in its
/// homogeneous form `(u, t, ξ′, λ) ↦ Φ^{t/λ}(ζ(u, ξ′, λ²/2))`.
///
/// Coordinates are stored as one vector ordered positions-first:
/// `[u, s, ξ′, E]` (resp. `[u, t, ξ′, λ]`).
#[derive(Clone)]
pub struct PsiChart {
    pub model: Model,
    pub domain: Arc<Domain>,
    pub chart: usize,
    pub homogeneous: bool,
    pub cfg: IntegratorConfig,
}

pub fn build_psi(model: Model, domain: Arc<Domain>, chart: usize, cfg: &IntegratorConfig) -> Result<PsiChart> {
    domain.chart(chart)?;
    if domain.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: domain.dim(),
        });
    }
    Ok(PsiChart {
        model,
        domain,
        chart,
        homogeneous: false,
        cfg: cfg.clone(),
    })
}

impl PsiChart {
    pub fn homogeneous(mut self, on: bool) -> Self {
        self.homogeneous = on;
        self
    }

    fn split(&self, z: &Vector) -> (Vector, f64, Vector, f64) {
        let n = self.model.dim();
        (
            z.rows(0, n - 1).into_owned(),
            z[n - 1],
            z.rows(n, n - 1).into_owned(),
            z[2 * n - 1],
        )
    }

    fn join(&self, u: &Vector, s: f64, xi_p: &Vector, e: f64) -> Vector {
        let mut v: Vec<f64> = u.iter().copied().collect();
        v.push(s);
        v.extend(xi_p.iter().copied());
        v.push(e);
        Vector::from_vec(v)
    }

    pub fn map(&self, z: &Vector) -> Result<PhasePoint> {
        let (u, a, xi_p, b) = self.split(z);
        let (s, e) = if self.homogeneous {
            if !(b > 0.0) {
                return Err(Error::NonPositiveLambda(b));
            }
            (a / b, 0.5 * b * b)
        } else {
            (a, b)
        };
        let bc = BoundaryCovector {
            chart: self.chart,
            u,
            xi_prime: xi_p,
        };
        let p0 = solve_zeta(self.model.as_ref(), &self.domain, &bc, e, Branch::Incoming)?;
        if s == 0.0 {
            return Ok(p0);
        }
        flow_map(self.model.as_ref(), &p0, s, &self.cfg)
    }

    /// Entry point `Φ^{−ℓ₋}(p)` and `ℓ₋`.
    pub fn entry_of(&self, p: &PhasePoint) -> Result<(PhasePoint, f64)> {
        entry_of(self.model.as_ref(), &self.domain, p, &self.cfg)
    }

    pub fn inverse(&self, p: &PhasePoint) -> Result<Vector> {
        let (q, ell_minus) = self.entry_of(p)?;
        let bc = restrict_in_chart(&self.domain, self.chart, &q)
            .map_err(|e| Error::InverseChartFailure(format!("entry point not in chart: {e}")))?;
        let e = self.model.eval(p);
        if self.homogeneous {
            if !(e > 0.0) {
                return Err(Error::InverseChartFailure(format!("energy {e:.3e} not positive")));
            }
            let lam = (2.0 * e).sqrt();
            Ok(self.join(&bc.u, ell_minus * lam, &bc.xi_prime, lam))
        } else {
            Ok(self.join(&bc.u, ell_minus, &bc.xi_prime, e))
        }
    }

    pub fn jacobian(&self, z: &Vector) -> Result<Matrix> {
        fd_jacobian5(|w| Ok(self.map(w)?.state()), z, MAP_FD_STEP)
    }

    /// `‖(dΨ)ᵀJ dΨ − J‖∞` at `z`.
    pub fn symplectic_residual(&self, z: &Vector) -> Result<f64> {
        Ok(symplectic_residual(&self.jacobian(z)?))
    }
}

/// Backward flow to the boundary: `(Φ^{−ℓ₋}(p), ℓ₋)`. Points already on the
/// boundary with incoming covectors have `ℓ₋ = 0`.
pub fn entry_of(model: &dyn Hamiltonian, domain: &Domain, p: &PhasePoint, cfg: &IntegratorConfig) -> Result<(PhasePoint, f64)> {
    let r = domain.rho(&p.x);
    let lvl = 1e-10 * domain.grad_rho(&p.x).norm().max(1.0) * p.x.amax().max(1.0);
    if r.abs() <= lvl && transversality(model, domain, p) > 0.0 {
        return Ok((p.clone(), 0.0));
    }
    let hit = hit_boundary(model, domain, p, Direction::Backward, cfg).map_err(|e| match e {
        Error::NoHitWithinMaxTime => Error::Trapped,
        other => other,
    })?;
    Ok((hit.point, -hit.t))
}

/// The analytic Jacobian of the flow-out chart at `s = 0` for the half-space
/// `{x_n > 0}`, in the coordinates `(x′, s, ξ′, E) → (y′, yⁿ, η′, η_n)`.
pub fn psi_matrix(model: &dyn Hamiltonian, p: &PhasePoint) -> Matrix {
    let n = p.dim();
    let hx = model.grad_x(&p.x, &p.xi);
    let hxi = model.grad_xi(&p.x, &p.xi);
    let a = hxi[n - 1];
    let mut m = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n - 1 {
        m[(i, i)] = 1.0;
        m[(i, n - 1)] = hxi[i];
        m[(n + i, n - 1)] = -hx[i];
        m[(n + i, n + i)] = 1.0;
        m[(2 * n - 1, i)] = -hx[i] / a;
        m[(2 * n - 1, n + i)] = -hxi[i] / a;
    }
    m[(n - 1, n - 1)] = a;
    m[(2 * n - 1, n - 1)] = -hx[n - 1];
    m[(2 * n - 1, 2 * n - 1)] = 1.0 / a;
    m
}

/// `κ = Ψ̃∘Ψ⁻¹`.
pub fn kappa_from_pair(psi: &PsiChart, psi_tilde: &PsiChart) -> Result<CanonicalMap> {
    if psi.chart != psi_tilde.chart || psi.homogeneous != psi_tilde.homogeneous {
        return Err(Error::InverseChartFailure("charts use different coordinates".into()));
    }
    let (a, b) = (psi.clone(), psi_tilde.clone());
    let (c, d) = (psi.clone(), psi_tilde.clone());
    Ok(CanonicalMap::new(
        Arc::new(move |p| b.map(&a.inverse(p)?)),
        Arc::new(move |p| c.map(&d.inverse(p)?)),
        true,
        Provenance::PsiPair,
    ))
}

/// A base diffeomorphism `x ↦ ψ(x)` with optional analytic Jacobian.
#[derive(Clone)]
pub struct BaseMap {
    pub map: VectorField,
    pub jacobian: Option<MatrixField>,
}

impl BaseMap {
    pub fn new(map: VectorField) -> Self {
        BaseMap { map, jacobian: None }
    }

    pub fn with_jacobian(mut self, j: MatrixField) -> Self {
        self.jacobian = Some(j);
        self
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        (self.map)(x)
    }

    pub fn jac(&self, x: &Vector) -> Matrix {
        match &self.jacobian {
            Some(j) => j(x),
            None => fd_jacobian5(|y| Ok((self.map)(y)), x, 1e-3).expect("infallible"),
        }
    }

    /// `ψ⁻¹(y)` by Newton from `y`.
    pub fn invert(&self, y: &Vector) -> Result<Vector> {
        let mut x = y.clone();
        let scale = y.amax().max(1.0);
        for it in 0..60 {
            let r = self.apply(&x) - y;
            if r.amax() == 0.0 {
                return Ok(x);
            }
            let dx = solve(&self.jac(&x), &r)?;
            x -= &dx;
            if dx.amax() <= 1e-15 * scale && it > 0 {
                return Ok(x);
            }
        }
        let r = (self.apply(&x) - y).amax();
        if r <= 1e-12 * scale {
            Ok(x)
        } else {
            Err(Error::InverseChartFailure(format!("base map inverse residual {r:.3e}")))
        }
    }
}

/// `κ(x, ξ) = (ψ(x), Dψ(x)^{−T} ξ)`.
pub fn cotangent_lift(base: BaseMap) -> CanonicalMap {
    let b1 = base.clone();
    let b2 = base;
    CanonicalMap::new(
        Arc::new(move |p: &PhasePoint| {
            let j = b1.jac(&p.x);
            let eta = solve(&j.transpose(), &p.xi)?;
            Ok(PhasePoint::from_vectors(b1.apply(&p.x), eta))
        }),
        Arc::new(move |q: &PhasePoint| {
            let x = b2.invert(&q.x)?;
            let xi = b2.jac(&x).transpose() * &q.xi;
            Ok(PhasePoint::from_vectors(x, xi))
        }),
        true,
        Provenance::CotangentLift,
    )
}

/// `(φ_x, φ_η)` of a generating function.
pub type GradPair = Arc<dyn Fn(&Vector, &Vector) -> (Vector, Vector) + Send + Sync>;

/// A kind-III generating function `φ(x, η)`, homogeneous of degree one in `η`.
#[derive(Clone)]
pub struct GeneratingFunction {
    pub phi: PhaseScalar,
    pub grad: Option<GradPair>,
    /// Mixed Hessian `B_ij = ∂_{x_i}∂_{η_j}φ`.
    pub mixed: Option<MatrixPair>,
}

pub type MatrixPair = Arc<dyn Fn(&Vector, &Vector) -> Matrix + Send + Sync>;

impl GeneratingFunction {
    pub fn new(phi: PhaseScalar) -> Self {
        GeneratingFunction {
            phi,
            grad: None,
            mixed: None,
        }
    }

    pub fn with_gradient(mut self, g: GradPair) -> Self {
        self.grad = Some(g);
        self
    }

    pub fn with_mixed_hessian(mut self, m: MatrixPair) -> Self {
        self.mixed = Some(m);
        self
    }

    pub fn gradients(&self, x: &Vector, eta: &Vector) -> (Vector, Vector) {
        if let Some(g) = &self.grad {
            return g(x, eta);
        }
        (
            fd_gradient5(|y| (self.phi)(y, eta), x, 1e-3),
            fd_gradient5(|e| (self.phi)(x, e), eta, 1e-3),
        )
    }

    pub fn mixed_hessian(&self, x: &Vector, eta: &Vector) -> Matrix {
        if let Some(m) = &self.mixed {
            return m(x, eta);
        }
        let n = x.len();
        let mut b = Matrix::zeros(n, n);
        for j in 0..n {
            let h = scaled_step(1e-4, eta[j]);
            let mut ep = eta.clone();
            let mut em = eta.clone();
            ep[j] += h;
            em[j] -= h;
            let col = (self.gradients(x, &ep).0 - self.gradients(x, &em).0) / (2.0 * h);
            b.set_column(j, &col);
        }
        b
    }
}

fn newton<F, J>(mut z: Vector, target: &Vector, f: F, jac: J) -> Result<Vector>
where
    F: Fn(&Vector) -> Vector,
    J: Fn(&Vector) -> Matrix,
{
    let scale = target.amax().max(z.amax()).max(1.0);
    for it in 0..50 {
        let r = f(&z) - target;
        if r.amax() == 0.0 {
            return Ok(z);
        }
        let dz = solve(&jac(&z), &r).map_err(|_| Error::SingularMixedHessian)?;
        z -= &dz;
        if dz.amax() <= 1e-15 * scale && it > 0 {
            return Ok(z);
        }
    }
    let r = (f(&z) - target).amax();
    if r <= 1e-12 * scale {
        Ok(z)
    } else {
        Err(Error::NewtonDiverged(format!("generating-function solve residual {r:.3e}")))
    }
}

/// `κ(φ_η(x, η), η) = (x, φ_x(x, η))`.
pub fn kappa_from_generating(gf: GeneratingFunction) -> CanonicalMap {
    let g1 = gf.clone();
    let g2 = gf;
    CanonicalMap::new(
        Arc::new(move |p: &PhasePoint| {
            let eta = &p.xi;
            let x = newton(
                p.x.clone(),
                &p.x,
                |x| g1.gradients(x, eta).1,
                |x| g1.mixed_hessian(x, eta).transpose(),
            )?;
            let xi = g1.gradients(&x, eta).0;
            Ok(PhasePoint::from_vectors(x, xi))
        }),
        Arc::new(move |q: &PhasePoint| {
            let x = &q.x;
            let eta = newton(q.xi.clone(), &q.xi, |e| g2.gradients(x, e).0, |e| g2.mixed_hessian(x, e))?;
            let y = g2.gradients(x, &eta).1;
            Ok(PhasePoint::from_vectors(y, eta))
        }),
        true,
        Provenance::GeneratingFunction,
    )
}

/// `max(|x(η₁) − x(η₂)|, |ξ(η₁+η₂) − ξ(η₁) − ξ(η₂)|)` at a fixed base point:
/// zero for any cotangent lift.
pub fn lift_defect(kappa: &CanonicalMap, y: &Vector, eta1: &Vector, eta2: &Vector) -> Result<f64> {
    let a = kappa.apply(&PhasePoint::from_vectors(y.clone(), eta1.clone()))?;
    let b = kappa.apply(&PhasePoint::from_vectors(y.clone(), eta2.clone()))?;
    let c = kappa.apply(&PhasePoint::from_vectors(y.clone(), eta1 + eta2))?;
    Ok((&a.x - &b.x).amax().max((&c.xi - &a.xi - &b.xi).amax()))
}

/// `H∘κ⁻¹` with five-point finite-difference derivatives.
#[derive(Clone)]
pub struct Transported {
    pub base: Model,
    pub map: CanonicalMap,
}

impl Transported {
    pub fn new(base: Model, map: CanonicalMap) -> Self {
        Transported { base, map }
    }
}

const TRANSPORT_STEP: f64 = 1e-3;

impl Hamiltonian for Transported {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn kind(&self) -> ModelKind {
        self.base.kind()
    }
    fn value(&self, x: &Vector, xi: &Vector) -> f64 {
        match self.map.apply_inverse(&PhasePoint::from_vectors(x.clone(), xi.clone())) {
            Ok(p) => self.base.eval(&p),
            Err(_) => f64::NAN,
        }
    }
    fn grad_x(&self, x: &Vector, xi: &Vector) -> Vector {
        fd_gradient5(|y| self.value(y, xi), x, TRANSPORT_STEP)
    }
    fn grad_xi(&self, x: &Vector, xi: &Vector) -> Vector {
        fd_gradient5(|e| self.value(x, e), xi, TRANSPORT_STEP)
    }
    fn hessian_step(&self) -> f64 {
        1e-4
    }
    fn name(&self) -> String {
        format!("{}∘κ⁻¹", self.base.name())
    }
}

/// Worst exit-covector and travel-time mismatch between two models over a
/// set of entry data on the level `E`.
pub fn scattering_agreement(
    h: &dyn Hamiltonian,
    ht: &dyn Hamiltonian,
    domain: &Domain,
    entries: &[BoundaryCovector],
    energy: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for bc in entries {
        let a = scatter(h, domain, bc, energy, Branch::Incoming, cfg)?;
        let b = scatter(ht, domain, bc, energy, Branch::Incoming, cfg)?;
        let eb = restrict_in_chart(domain, a.exit_bc.chart, &b.exit)?;
        worst = worst.max(a.exit_bc.dist(&eb)).max((a.ell - b.ell).abs());
    }
    Ok(worst)
}

/// Zero-energy map `Γ₀ → Γ̃₀` and its conformal factor.
#[derive(Clone)]
pub struct ZeroEnergyKappa {
    pub map: CanonicalMap,
    pub mu: PhaseFunction,
    h: Model,
    ht: Model,
    domain: Arc<Domain>,
    chart: usize,
    cfg: IntegratorConfig,
}

struct ZeroCtx {
    h: Model,
    ht: Model,
    domain: Arc<Domain>,
    chart: usize,
    cfg: IntegratorConfig,
}

impl ZeroCtx {
    /// Entry of `p` under `a`, the matched entry under `b`, `ℓ₋` and
    /// `ℓ₊^a / ℓ₊^b`.
    fn matched(&self, a: &dyn Hamiltonian, b: &dyn Hamiltonian, p: &PhasePoint) -> Result<(PhasePoint, f64, f64)> {
        let (entry, ell_minus) = entry_of(a, &self.domain, p, &self.cfg)?;
        let bc = restrict_in_chart(&self.domain, self.chart, &entry)?;
        let entry_b = solve_zeta(b, &self.domain, &bc, 0.0, Branch::Incoming)?;
        let la = scatter_hat(a, &self.domain, &entry, &self.cfg)?.ell;
        let lb = scatter_hat(b, &self.domain, &entry_b, &self.cfg)?.ell;
        Ok((entry_b, ell_minus, la / lb))
    }

    fn forward(&self, p: &PhasePoint) -> Result<PhasePoint> {
        let (eb, ell_minus, mu) = self.matched(self.h.as_ref(), self.ht.as_ref(), p)?;
        if ell_minus == 0.0 {
            return Ok(eb);
        }
        flow_map(self.ht.as_ref(), &eb, ell_minus / mu, &self.cfg)
    }

    fn inverse(&self, q: &PhasePoint) -> Result<PhasePoint> {
        let (ea, ell_minus, mu_inv) = self.matched(self.ht.as_ref(), self.h.as_ref(), q)?;
        if ell_minus == 0.0 {
            return Ok(ea);
        }
        flow_map(self.h.as_ref(), &ea, ell_minus / mu_inv, &self.cfg)
    }

    fn mu(&self, p: &PhasePoint) -> Result<f64> {
        Ok(self.matched(self.h.as_ref(), self.ht.as_ref(), p)?.2)
    }
}

pub fn kappa_zero_energy(h: Model, ht: Model, domain: Arc<Domain>, chart: usize, cfg: &IntegratorConfig) -> Result<ZeroEnergyKappa> {
    domain.chart(chart)?;
    let ctx = Arc::new(ZeroCtx {
        h: h.clone(),
        ht: ht.clone(),
        domain: domain.clone(),
        chart,
        cfg: cfg.clone(),
    });
    let (c1, c2, c3) = (ctx.clone(), ctx.clone(), ctx);
    let map = CanonicalMap::new(
        Arc::new(move |p| c1.forward(p)),
        Arc::new(move |q| c2.inverse(q)),
        true,
        Provenance::ZeroEnergy,
    );
    let mu = PhaseFunction::new(
        "mu",
        0,
        Arc::new(move |x: &Vector, xi: &Vector| {
            c3.mu(&PhasePoint::from_vectors(x.clone(), xi.clone()))
                .unwrap_or(f64::NAN)
        }),
    );
    Ok(ZeroEnergyKappa {
        map,
        mu,
        h,
        ht,
        domain,
        chart,
        cfg: cfg.clone(),
    })
}

/// Orthonormal basis of `ker dH(p)`, the tangent space of the level set.
pub fn level_tangent_basis(h: &dyn Hamiltonian, p: &PhasePoint) -> Vec<Vector> {
    let n = p.dim();
    let mut g = Vector::zeros(2 * n);
    g.rows_mut(0, n).copy_from(&h.grad_x(&p.x, &p.xi));
    g.rows_mut(n, n).copy_from(&h.grad_xi(&p.x, &p.xi));
    let g = g.normalize();
    let mut basis: Vec<Vector> = Vec::new();
    for k in 0..2 * n {
        let mut v = Vector::zeros(2 * n);
        v[k] = 1.0;
        v -= &g * g.dot(&v);
        for b in &basis {
            v -= b * b.dot(&v);
        }
        if v.norm() > 1e-6 && basis.len() < 2 * n - 1 {
            basis.push(v.normalize());
        }
    }
    basis
}

/// Move `z` back onto `{H = c}` along `∇H`.
fn project_to_level(h: &dyn Hamiltonian, z: &Vector, c: f64) -> Vector {
    let n = z.len() / 2;
    let mut z = z.clone();
    for _ in 0..20 {
        let p = PhasePoint::from_state(z.as_slice(), n);
        let r = h.eval(&p) - c;
        let mut g = Vector::zeros(2 * n);
        g.rows_mut(0, n).copy_from(&h.grad_x(&p.x, &p.xi));
        g.rows_mut(n, n).copy_from(&h.grad_xi(&p.x, &p.xi));
        let gg = g.norm_squared();
        if r.abs() <= 1e-15 * p.xi.norm_squared().max(1.0) || gg == 0.0 {
            break;
        }
        z -= g * (r / gg);
    }
    z
}

impl ZeroEnergyKappa {
    pub fn apply(&self, p: &PhasePoint) -> Result<PhasePoint> {
        self.map.apply(p)
    }

    /// `max |σ̃(dκ vᵢ, dκ vⱼ) − σ(vᵢ, vⱼ)|` over a basis of `T_pΓ₀`, with
    /// derivatives along curves kept on the zero level.
    pub fn tangential_symplectic_residual(&self, p: &PhasePoint) -> Result<f64> {
        let n = p.dim();
        let z = p.state();
        let basis = level_tangent_basis(self.h.as_ref(), p);
        let hstep = MAP_FD_STEP * p.xi.amax().max(1.0);
        let mut images = Vec::new();
        for v in &basis {
            let at = |d: f64| -> Result<Vector> {
                let w = project_to_level(self.h.as_ref(), &(&z + v * d), 0.0);
                Ok(self.apply(&PhasePoint::from_state(w.as_slice(), n))?.state())
            };
            let d = (-at(2.0 * hstep)? + at(hstep)? * 8.0 - at(-hstep)? * 8.0 + at(-2.0 * hstep)?) / (12.0 * hstep);
            images.push(d);
        }
        let j = symplectic_j(n);
        let mut worst: f64 = 0.0;
        for a in 0..basis.len() {
            for b in (a + 1)..basis.len() {
                let s0 = basis[a].dot(&(&j * &basis[b]));
                let s1 = images[a].dot(&(&j * &images[b]));
                worst = worst.max((s1 - s0).abs());
            }
        }
        Ok(worst)
    }

    /// `‖κ(Φ̆^t p) − Φ̃^t κ(p)‖∞` where `Φ̆` is the flow of `μH`; on the zero
    /// level `Φ̆^t = Φ^{μt}` with `μ` constant along the ray.
    pub fn conjugation_residual(&self, p: &PhasePoint, t: f64) -> Result<f64> {
        let mu = self.mu.eval(p);
        let a = self.apply(&flow_map(self.h.as_ref(), p, mu * t, &self.cfg)?)?;
        let b = flow_map(self.ht.as_ref(), &self.apply(p)?, t, &self.cfg)?;
        Ok(a.dist(&b))
    }

    /// `|X_H μ|` by a central difference along the flow.
    pub fn mu_flow_invariance(&self, p: &PhasePoint, h: f64) -> Result<f64> {
        let a = self.mu.eval(&flow_map(self.h.as_ref(), p, h, &self.cfg)?);
        let b = self.mu.eval(&flow_map(self.h.as_ref(), p, -h, &self.cfg)?);
        Ok(((a - b) / (2.0 * h)).abs())
    }

    /// `|ℓ̆₊ − ℓ̃₊|` for an entry on `Γ₀|_U`, where `ℓ̆₊ = ℓ₊/μ`.
    pub fn travel_time_match(&self, entry: &PhasePoint) -> Result<f64> {
        let rec = scatter_hat(self.h.as_ref(), &self.domain, entry, &self.cfg)?;
        let bc = restrict_in_chart(&self.domain, self.chart, entry)?;
        let et = solve_zeta(self.ht.as_ref(), &self.domain, &bc, 0.0, Branch::Incoming)?;
        let lt = scatter_hat(self.ht.as_ref(), &self.domain, &et, &self.cfg)?.ell;
        let breve = rec.ell / self.mu.eval(entry);
        Ok((breve - lt).abs())
    }
}

/// Compactly supported planted gauges.
pub mod gauges {
    use super::*;

    /// `b(x) = exp(−1/(1 − |x−c|²/R²))` inside the ball, zero outside.
    #[derive(Clone, Debug)]
    pub struct Bump {
        pub center: Vector,
        pub radius: f64,
    }

    impl Bump {
        pub fn new(center: &[f64], radius: f64) -> Self {
            Bump {
                center: Vector::from_column_slice(center),
                radius,
            }
        }

        pub fn value(&self, x: &Vector) -> f64 {
            let s = (x - &self.center).norm_squared() / (self.radius * self.radius);
            if s >= 1.0 {
                0.0
            } else {
                (-1.0 / (1.0 - s)).exp()
            }
        }

        pub fn gradient(&self, x: &Vector) -> Vector {
            let d = x - &self.center;
            let r2 = self.radius * self.radius;
            let s = d.norm_squared() / r2;
            if s >= 1.0 {
                return Vector::zeros(x.len());
            }
            let b = (-1.0 / (1.0 - s)).exp();
            d * (-2.0 * b / (r2 * (1.0 - s).powi(2)))
        }
    }

    /// Cotangent lift of `ψ(x) = x + ε b(x) w`.
    pub fn bump_lift(bump: Bump, eps: f64, w: &[f64]) -> CanonicalMap {
        let w = Vector::from_column_slice(w);
        let (b1, w1) = (bump.clone(), w.clone());
        let base = BaseMap::new(Arc::new(move |x: &Vector| x + &w1 * (eps * b1.value(x))))
            .with_jacobian(Arc::new(move |x: &Vector| {
                Matrix::identity(x.len(), x.len()) + &w * bump.gradient(x).transpose() * eps
            }));
        cotangent_lift(base)
    }

    /// Kind-III map from `φ(x, η) = x·η + ε b(x)|η|`; not a cotangent lift.
    pub fn bump_generating(bump: Bump, eps: f64) -> CanonicalMap {
        let (b1, b2, b3) = (bump.clone(), bump.clone(), bump);
        let gf = GeneratingFunction::new(Arc::new(move |x: &Vector, e: &Vector| x.dot(e) + eps * b1.value(x) * e.norm()))
            .with_gradient(Arc::new(move |x: &Vector, e: &Vector| {
                let r = e.norm();
                (e + b2.gradient(x) * (eps * r), x + e * (eps * b2.value(x) / r))
            }))
            .with_mixed_hessian(Arc::new(move |x: &Vector, e: &Vector| {
                Matrix::identity(x.len(), x.len()) + b3.gradient(x) * (e / e.norm()).transpose() * eps
            }));
        kappa_from_generating(gf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::shapes::{disk, half_space};
    use crate::hamiltonians::builtin::{euclidean, lens, skew_polynomial};
    use crate::hamiltonians::Scaled;

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default().tight()
    }

    fn v(a: &[f64]) -> Vector {
        Vector::from_column_slice(a)
    }

    #[test]
    fn half_space_chart_is_straight_line() {
        let psi = build_psi(Arc::new(euclidean(2)), Arc::new(half_space(2)), 0, &cfg()).unwrap();
        let q = psi.map(&v(&[0.1, 0.5, 0.6, 0.5])).unwrap();
        assert!(q.dist(&PhasePoint::new(&[0.1 + 0.5 * 0.6, 0.5 * 0.8], &[0.6, 0.8])) < 1e-12);
        let z = psi.inverse(&q).unwrap();
        assert!((z - v(&[0.1, 0.5, 0.6, 0.5])).amax() < 1e-12);
        let b = psi.map(&v(&[0.1, 0.0, 0.6, 0.5])).unwrap();
        assert!(b.x[1] == 0.0 && (b.xi[1] - 0.8).abs() < 1e-14);
    }

    #[test]
    fn matrix_form_is_symplectic() {
        let h = skew_polynomial(2, 0.3);
        let psi = build_psi(Arc::new(h.clone()), Arc::new(half_space(2)), 0, &cfg()).unwrap();
        let z = v(&[0.2, 0.0, 0.3, 0.7]);
        let p = psi.map(&z).unwrap();
        let a = psi_matrix(&h, &p);
        assert!(symplectic_residual(&a) < 1e-13);
        let j = psi.jacobian(&z).unwrap();
        assert!((j - a).amax() < 1e-6);
        let z1 = v(&[0.2, 0.4, 0.3, 0.7]);
        assert!(psi.symplectic_residual(&z1).unwrap() < 1e-6);
        let hom = psi.clone().homogeneous(true);
        assert!(hom.symplectic_residual(&v(&[0.2, 0.4, 0.3, 1.1])).unwrap() < 1e-6);
    }

    #[test]
    fn identical_models_give_identity() {
        let m: Model = Arc::new(lens(2, 0.3));
        let d = Arc::new(disk(1.0));
        let psi = build_psi(m.clone(), d.clone(), 1, &cfg()).unwrap();
        let k = kappa_from_pair(&psi, &psi).unwrap();
        let p = PhasePoint::new(&[0.1, 0.2], &[0.7, 0.3]);
        assert!(k.apply(&p).unwrap().dist(&p) < 1e-9);
    }

    #[test]
    fn linear_lift() {
        let a = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        let (a1, a2) = (a.clone(), a.clone());
        let base = BaseMap::new(Arc::new(move |x: &Vector| &a1 * x)).with_jacobian(Arc::new(move |_| a2.clone()));
        let k = cotangent_lift(base);
        let p = PhasePoint::new(&[0.3, -0.2], &[1.0, 2.0]);
        let q = k.apply(&p).unwrap();
        assert!((&q.x - &a * &p.x).amax() < 1e-15);
        assert!((a.transpose() * &q.xi - &p.xi).amax() < 1e-14);
        assert!(symplectic_residual(&k.jacobian(&p, 1e-3).unwrap()) < 1e-10);
        assert!(k.roundtrip_residual(&p).unwrap() < 1e-14);
    }

    #[test]
    fn linear_generating_function_is_a_lift() {
        let a = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        let (a1, a2, a3) = (a.clone(), a.clone(), a.clone());
        let gf = GeneratingFunction::new(Arc::new(move |x: &Vector, e: &Vector| (&a1 * x).dot(e)))
            .with_gradient(Arc::new(move |x: &Vector, e: &Vector| (a2.transpose() * e, &a2 * x)))
            .with_mixed_hessian(Arc::new(move |_, _| a3.transpose()));
        let k = kappa_from_generating(gf);
        let p = PhasePoint::new(&[0.3, -0.2], &[1.0, 2.0]);
        let q = k.apply(&p).unwrap();
        let ainv = a.clone().try_inverse().unwrap();
        assert!((&q.x - &ainv * &p.x).amax() < 1e-14);
        assert!((&q.xi - a.transpose() * &p.xi).amax() < 1e-14);
        assert!(symplectic_residual(&k.jacobian(&p, 1e-3).unwrap()) < 1e-10);
        assert!(lift_defect(&k, &p.x, &v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap() < 1e-13);
    }

    #[test]
    fn conformal_constant_zero_energy() {
        use crate::boundary::shapes::slab;
        use crate::hamiltonians::builtin::minkowski;
        let h: Model = Arc::new(minkowski(2));
        let ht: Model = Arc::new(Scaled::constant(h.clone(), 2.0));
        let z = kappa_zero_energy(h, ht, Arc::new(slab(2, 1, 0.0, 1.0)), 0, &cfg()).unwrap();
        let p = PhasePoint::new(&[0.3, 0.4], &[-1.0, 1.0]);
        assert!((z.mu.eval(&p) - 2.0).abs() < 1e-8);
        assert!(z.apply(&p).unwrap().dist(&p) < 1e-9);
    }

    #[test]
    fn bump_gauges() {
        use gauges::*;
        let bump = Bump::new(&[0.0, 0.0], 0.6);
        let x = v(&[0.1, -0.2]);
        let fd = fd_gradient5(|y| bump.value(y), &x, 1e-4);
        assert!((fd - bump.gradient(&x)).amax() < 1e-9);
        assert_eq!(bump.value(&v(&[0.7, 0.0])), 0.0);

        let p = PhasePoint::new(&[0.1, -0.2], &[0.6, 0.8]);
        let lift = bump_lift(bump.clone(), 0.1, &[1.0, 0.5]);
        assert!(lift.symplectic_residual(&p).unwrap() < 1e-8);
        assert!(lift.roundtrip_residual(&p).unwrap() < 1e-13);
        assert!(lift.homogeneity_residual(&p, 2.0).unwrap() < 1e-13);
        assert!(lift_defect(&lift, &p.x, &v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap() < 1e-14);

        let g = bump_generating(bump, 0.1);
        assert!(g.symplectic_residual(&p).unwrap() < 1e-8);
        assert!(g.roundtrip_residual(&p).unwrap() < 1e-12);
        assert!(g.homogeneity_residual(&p, 2.0).unwrap() < 1e-12);
        assert!(lift_defect(&g, &p.x, &v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap() > 1e-3);
        let far = PhasePoint::new(&[0.9, 0.0], &[0.3, 0.1]);
        assert!(g.apply(&far).unwrap().dist(&far) == 0.0);
    }
}
