//! Domains `{ρ ≥ 0}` with explicit boundary charts.
//!
//! Covers boundary-hit detection along bicharacteristics, the transversality
//! pairing `⟨dρ, H_ξ⟩`, the pullback `ι*` to chart coordinates and the solve
//! for the normal covector component on a prescribed energy level.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::flow::{hamilton_rhs, initial_state, IntegratorConfig, Trajectory};
use crate::hamiltonians::{Hamiltonian, PhasePoint, ScalarField, VectorField};
use crate::linalg::{fd_gradient, fd_jacobian, solve, Matrix, Vector, FD_STEP};
use crate::ode;

/// Relative transversality threshold.
pub const TOL_TRANSV: f64 = 1e-8;

/// A parametrization `u ∈ R^{n−1} → x ∈ ∂M` with a local inverse.
pub trait BoundaryChart: Send + Sync {
    fn name(&self) -> String;
    fn dim_u(&self) -> usize;
    fn param(&self, u: &Vector) -> Vector;
    /// `n × (n−1)` matrix `dq`.
    fn jacobian(&self, u: &Vector) -> Matrix {
        fd_jacobian(|v| Ok(self.param(v)), u, FD_STEP).expect("infallible")
    }
    /// Chart coordinates of a boundary point, if covered.
    fn inverse(&self, x: &Vector) -> Option<Vector>;
    /// Preference score when several charts cover `x` (larger is better).
    fn quality(&self, x: &Vector) -> f64 {
        if self.inverse(x).is_some() {
            1.0
        } else {
            0.0
        }
    }
}

pub type Chart = Arc<dyn BoundaryChart>;

/// The domain `M = {ρ ≥ 0}`.
#[derive(Clone)]
pub struct Domain {
    pub name: String,
    n: usize,
    rho: ScalarField,
    grad_rho: Option<VectorField>,
    charts: Vec<Chart>,
}

/// Boundary data `(x, ξ′)` in chart coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryCovector {
    pub chart: usize,
    pub u: Vector,
    pub xi_prime: Vector,
}

impl BoundaryCovector {
    pub fn new(chart: usize, u: &[f64], xi_prime: &[f64]) -> Self {
        BoundaryCovector {
            chart,
            u: Vector::from_column_slice(u),
            xi_prime: Vector::from_column_slice(xi_prime),
        }
    }

    /// `(x, λξ′)`.
    pub fn scaled(&self, lambda: f64) -> Self {
        BoundaryCovector {
            chart: self.chart,
            u: self.u.clone(),
            xi_prime: &self.xi_prime * lambda,
        }
    }

    pub fn dist(&self, other: &BoundaryCovector) -> f64 {
        (&self.u - &other.u)
            .amax()
            .max((&self.xi_prime - &other.xi_prime).amax())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// Which root of the energy equation to take.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Branch {
    Incoming,
    Outgoing,
    /// Root nearest to this normal component.
    Seed(f64),
}

impl Domain {
    pub fn new(name: &str, n: usize, rho: ScalarField, grad_rho: Option<VectorField>, charts: Vec<Chart>) -> Self {
        Domain {
            name: name.into(),
            n,
            rho,
            grad_rho,
            charts,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rho(&self, x: &Vector) -> f64 {
        (self.rho)(x)
    }

    pub fn grad_rho(&self, x: &Vector) -> Vector {
        match &self.grad_rho {
            Some(g) => g(x),
            None => fd_gradient(|y| (self.rho)(y), x, FD_STEP),
        }
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn chart(&self, id: usize) -> Result<&Chart> {
        self.charts.get(id).ok_or(Error::UnknownChart(id))
    }

    /// Best chart covering the boundary point `x`, with its coordinates.
    pub fn locate(&self, x: &Vector) -> Result<(usize, Vector)> {
        let mut best: Option<(f64, usize, Vector)> = None;
        for (i, c) in self.charts.iter().enumerate() {
            if let Some(u) = c.inverse(x) {
                let q = c.quality(x);
                if best.as_ref().is_none_or(|b| q > b.0) {
                    best = Some((q, i, u));
                }
            }
        }
        best.map(|b| (b.1, b.2)).ok_or(Error::NoChartCovers)
    }

    /// Boundary point of chart coordinates.
    pub fn point(&self, chart: usize, u: &Vector) -> Result<Vector> {
        Ok(self.chart(chart)?.param(u))
    }

    /// Worst `|ρ(q(u))|` and smallest `‖dρ‖` over chart samples.
    pub fn validate_chart(&self, chart: usize, samples: &[Vector]) -> Result<(f64, f64)> {
        let c = self.chart(chart)?;
        let mut worst: f64 = 0.0;
        let mut min_grad = f64::INFINITY;
        for u in samples {
            let x = c.param(u);
            worst = worst.max(self.rho(&x).abs());
            min_grad = min_grad.min(self.grad_rho(&x).norm());
        }
        Ok((worst, min_grad))
    }
}

struct GraphChart {
    axis: usize,
    sign: f64,
    radius: f64,
    n: usize,
}

impl GraphChart {
    fn other(&self, i: usize) -> usize {
        if i < self.axis {
            i
        } else {
            i + 1
        }
    }
}

impl BoundaryChart for GraphChart {
    fn name(&self) -> String {
        format!("{}x{}", if self.sign > 0.0 { "+" } else { "-" }, self.axis + 1)
    }
    fn dim_u(&self) -> usize {
        self.n - 1
    }
    fn param(&self, u: &Vector) -> Vector {
        let mut x = Vector::zeros(self.n);
        for i in 0..self.n - 1 {
            x[self.other(i)] = u[i];
        }
        x[self.axis] = self.sign * (self.radius * self.radius - u.norm_squared()).max(0.0).sqrt();
        x
    }
    fn jacobian(&self, u: &Vector) -> Matrix {
        let mut j = Matrix::zeros(self.n, self.n - 1);
        let h = (self.radius * self.radius - u.norm_squared()).max(1e-300).sqrt();
        for i in 0..self.n - 1 {
            j[(self.other(i), i)] = 1.0;
            j[(self.axis, i)] = -self.sign * u[i] / h;
        }
        j
    }
    fn inverse(&self, x: &Vector) -> Option<Vector> {
        if x[self.axis] * self.sign <= 0.2 * self.radius {
            return None;
        }
        Some(Vector::from_iterator(
            self.n - 1,
            (0..self.n - 1).map(|i| x[self.other(i)]),
        ))
    }
    fn quality(&self, x: &Vector) -> f64 {
        x[self.axis] * self.sign
    }
}

struct AngleChart {
    radius: f64,
    center: f64,
}

impl BoundaryChart for AngleChart {
    fn name(&self) -> String {
        format!("theta@{:.4}", self.center)
    }
    fn dim_u(&self) -> usize {
        1
    }
    fn param(&self, u: &Vector) -> Vector {
        Vector::from_column_slice(&[self.radius * u[0].cos(), self.radius * u[0].sin()])
    }
    fn jacobian(&self, u: &Vector) -> Matrix {
        Matrix::from_column_slice(2, 1, &[-self.radius * u[0].sin(), self.radius * u[0].cos()])
    }
    fn inverse(&self, x: &Vector) -> Option<Vector> {
        let th = x[1].atan2(x[0]);
        let mut d = th - self.center;
        while d > PI {
            d -= 2.0 * PI;
        }
        while d <= -PI {
            d += 2.0 * PI;
        }
        if d.abs() > 0.75 * PI {
            return None;
        }
        Some(Vector::from_column_slice(&[self.center + d]))
    }
    fn quality(&self, x: &Vector) -> f64 {
        match self.inverse(x) {
            Some(u) => PI - (u[0] - self.center).abs(),
            None => 0.0,
        }
    }
}

struct FaceChart {
    n: usize,
    axis: usize,
    level: f64,
}

impl BoundaryChart for FaceChart {
    fn name(&self) -> String {
        format!("x{}={}", self.axis + 1, self.level)
    }
    fn dim_u(&self) -> usize {
        self.n - 1
    }
    fn param(&self, u: &Vector) -> Vector {
        let mut x = Vector::zeros(self.n);
        let mut k = 0;
        for i in 0..self.n {
            if i == self.axis {
                x[i] = self.level;
            } else {
                x[i] = u[k];
                k += 1;
            }
        }
        x
    }
    fn jacobian(&self, _u: &Vector) -> Matrix {
        let mut j = Matrix::zeros(self.n, self.n - 1);
        let mut k = 0;
        for i in 0..self.n {
            if i != self.axis {
                j[(i, k)] = 1.0;
                k += 1;
            }
        }
        j
    }
    fn inverse(&self, x: &Vector) -> Option<Vector> {
        if (x[self.axis] - self.level).abs() > 1e-6 * self.level.abs().max(1.0) {
            return None;
        }
        Some(Vector::from_iterator(
            self.n - 1,
            (0..self.n).filter(|&i| i != self.axis).map(|i| x[i]),
        ))
    }
}

/// Chart built from closures, with a Gauss–Newton inverse seeded at `u0`.
pub struct ClosureChart {
    pub label: String,
    pub n: usize,
    pub param: Arc<dyn Fn(&Vector) -> Vector + Send + Sync>,
    pub u0: Vector,
    pub tol: f64,
}

impl BoundaryChart for ClosureChart {
    fn name(&self) -> String {
        self.label.clone()
    }
    fn dim_u(&self) -> usize {
        self.n - 1
    }
    fn param(&self, u: &Vector) -> Vector {
        (self.param)(u)
    }
    fn inverse(&self, x: &Vector) -> Option<Vector> {
        let mut u = self.u0.clone();
        for _ in 0..60 {
            let r = (self.param)(&u) - x;
            if r.amax() < 1e-14 * x.amax().max(1.0) {
                break;
            }
            let j = self.jacobian(&u);
            let jtj = j.transpose() * &j;
            let du = solve(&jtj, &(j.transpose() * r)).ok()?;
            u -= du;
        }
        let res = ((self.param)(&u) - x).amax();
        (res < self.tol).then_some(u)
    }
}

/// Built-in domain shapes.
pub mod shapes {
    use super::*;

    /// `{x_n ≥ 0}` with the chart `u ↦ (u, 0)`.
    pub fn half_space(n: usize) -> Domain {
        let mut e = Vector::zeros(n);
        e[n - 1] = 1.0;
        Domain::new(
            "half_space",
            n,
            Arc::new(move |x: &Vector| x[n - 1]),
            Some(Arc::new(move |_| e.clone())),
            vec![Arc::new(FaceChart {
                n,
                axis: n - 1,
                level: 0.0,
            })],
        )
    }

    /// Disk `R² − |x|² ≥ 0` with angle charts centered at `0` and `π`.
    pub fn disk(radius: f64) -> Domain {
        Domain::new(
            "disk",
            2,
            Arc::new(move |x: &Vector| radius * radius - x.norm_squared()),
            Some(Arc::new(|x: &Vector| -2.0 * x)),
            vec![
                Arc::new(AngleChart { radius, center: 0.0 }),
                Arc::new(AngleChart { radius, center: PI }),
            ],
        )
    }

    /// Ball `R² − |x|² ≥ 0` in `n` dimensions with `2n` graph charts.
    pub fn ball(n: usize, radius: f64) -> Domain {
        let mut charts: Vec<Chart> = Vec::new();
        for axis in 0..n {
            for sign in [1.0, -1.0] {
                charts.push(Arc::new(GraphChart {
                    axis,
                    sign,
                    radius,
                    n,
                }));
            }
        }
        Domain::new(
            "ball",
            n,
            Arc::new(move |x: &Vector| radius * radius - x.norm_squared()),
            Some(Arc::new(|x: &Vector| -2.0 * x)),
            charts,
        )
    }

    /// `lo ≤ x_axis ≤ hi`; chart 0 is the lower face, chart 1 the upper one.
    pub fn slab(n: usize, axis: usize, lo: f64, hi: f64) -> Domain {
        Domain::new(
            "slab",
            n,
            Arc::new(move |x: &Vector| (x[axis] - lo) * (hi - x[axis])),
            Some(Arc::new(move |x: &Vector| {
                let mut g = Vector::zeros(n);
                g[axis] = hi + lo - 2.0 * x[axis];
                g
            })),
            vec![
                Arc::new(FaceChart { n, axis, level: lo }),
                Arc::new(FaceChart { n, axis, level: hi }),
            ],
        )
    }

    pub const NAMES: &[&str] = &["half_space", "disk", "ball", "slab"];
}

/// `⟨dρ(x), H_ξ(x, ξ)⟩`; positive means incoming.
pub fn transversality(model: &dyn Hamiltonian, domain: &Domain, p: &PhasePoint) -> f64 {
    domain.grad_rho(&p.x).dot(&model.grad_xi(&p.x, &p.xi))
}

fn transversal_enough(model: &dyn Hamiltonian, domain: &Domain, p: &PhasePoint) -> (f64, bool) {
    let g = domain.grad_rho(&p.x);
    let hxi = model.grad_xi(&p.x, &p.xi);
    let t = g.dot(&hxi);
    (t, t.abs() > TOL_TRANSV * g.norm() * hxi.norm())
}

fn tol_level(p: &PhasePoint, domain: &Domain) -> f64 {
    1e-10 * domain.grad_rho(&p.x).norm().max(1.0) * p.x.amax().max(1.0)
}

/// First boundary crossing along the flow.
#[derive(Clone, Debug)]
pub struct BoundaryHit {
    /// Signed flow parameter of the hit.
    pub t: f64,
    pub point: PhasePoint,
    pub trajectory: Trajectory,
}

/// Integrate from `p0` (inside, or on `∂M` moving inward for the chosen
/// direction) to the first point where `ρ = 0`.
pub fn hit_boundary(
    model: &dyn Hamiltonian,
    domain: &Domain,
    p0: &PhasePoint,
    direction: Direction,
    cfg: &IntegratorConfig,
) -> Result<BoundaryHit> {
    let n = model.dim();
    let r0 = domain.rho(&p0.x);
    let lvl = tol_level(p0, domain);
    if r0 < -lvl {
        return Err(Error::InvalidPoint("start point lies outside the domain".into()));
    }
    if r0.abs() <= lvl {
        let (t, ok) = transversal_enough(model, domain, p0);
        if !ok {
            return Err(Error::TangentialHit(t));
        }
        if t * direction.sign() < 0.0 {
            return Err(Error::InvalidPoint("start point on the boundary moves outward".into()));
        }
    }
    let id = cfg.with_jacobian.then(|| Matrix::identity(2 * n, 2 * n));
    let y0 = initial_state(p0, id.as_ref());
    let rhs = hamilton_rhs(model, cfg.with_jacobian);
    let t_end = direction.sign() * cfg.max_time;
    let hit = ode::integrate_to_event(
        &rhs,
        0.0,
        &y0,
        t_end,
        &cfg.tolerances(),
        |y| domain.rho(&Vector::from_column_slice(&y[..n])),
        8,
    )?
    .ok_or(Error::NoHitWithinMaxTime)?;
    let point = PhasePoint::from_state(&hit.y, n);
    let (tv, ok) = transversal_enough(model, domain, &point);
    if !ok {
        return Err(Error::TangentialHit(tv));
    }
    let trajectory = Trajectory::from_steps(n, 0.0, &y0, hit.steps, cfg.with_jacobian, model.eval(p0));
    Ok(BoundaryHit {
        t: hit.t,
        point,
        trajectory,
    })
}

/// First crossing of `ρ = 0` on an existing trajectory, from dense output.
pub fn first_crossing(domain: &Domain, tr: &Trajectory) -> Option<(f64, PhasePoint)> {
    let mut prev: Option<(f64, f64)> = None;
    for s in tr.steps() {
        for k in 0..=16 {
            let t = s.t0 + s.h * k as f64 / 16.0;
            let p = tr.point_at(t);
            let r = domain.rho(&p.x);
            if let Some((tp, rp)) = prev {
                if rp > 0.0 && r <= 0.0 {
                    let (mut a, mut b) = (tp, t);
                    for _ in 0..200 {
                        let m = 0.5 * (a + b);
                        if domain.rho(&tr.point_at(m).x) > 0.0 {
                            a = m;
                        } else {
                            b = m;
                        }
                    }
                    return Some((b, tr.point_at(b)));
                }
            }
            prev = Some((t, r));
        }
    }
    None
}

/// `ι*ξ` in the best covering chart.
pub fn restrict(domain: &Domain, p: &PhasePoint) -> Result<BoundaryCovector> {
    let (chart, _) = domain.locate(&p.x)?;
    restrict_in_chart(domain, chart, p)
}

/// `ι*ξ = dqᵀξ` in a given chart.
pub fn restrict_in_chart(domain: &Domain, chart: usize, p: &PhasePoint) -> Result<BoundaryCovector> {
    let c = domain.chart(chart)?;
    let u = c.inverse(&p.x).ok_or(Error::NoChartCovers)?;
    let dq = c.jacobian(&u);
    Ok(BoundaryCovector {
        chart,
        xi_prime: dq.transpose() * &p.xi,
        u,
    })
}

struct ZetaLine {
    x: Vector,
    lift: Vector,
    nu: Vector,
}

impl ZetaLine {
    fn new(domain: &Domain, bc: &BoundaryCovector) -> Result<Self> {
        let c = domain.chart(bc.chart)?;
        let x = c.param(&bc.u);
        let dq = c.jacobian(&bc.u);
        let g = dq.transpose() * &dq;
        let lift = &dq * solve(&g, &bc.xi_prime)?;
        let nu = domain.grad_rho(&x).normalize();
        Ok(ZetaLine { x, lift, nu })
    }

    fn xi(&self, s: f64) -> Vector {
        &self.lift + &self.nu * s
    }

    fn f(&self, model: &dyn Hamiltonian, e: f64, s: f64) -> f64 {
        model.value(&self.x, &self.xi(s)) - e
    }

    fn df(&self, model: &dyn Hamiltonian, s: f64) -> f64 {
        model.grad_xi(&self.x, &self.xi(s)).dot(&self.nu)
    }
}

fn slope_ok(slope: f64, branch: Branch) -> bool {
    match branch {
        Branch::Incoming => slope > 0.0,
        Branch::Outgoing => slope < 0.0,
        Branch::Seed(_) => true,
    }
}

/// All roots of `s ↦ H(x, ξ_lift + sν) − E` on `[−R, R]` found by a
/// bracketed scan, as `(s, ∂_s H)`.
pub fn zeta_roots(
    model: &dyn Hamiltonian,
    domain: &Domain,
    bc: &BoundaryCovector,
    energy: f64,
    radius: f64,
    samples: usize,
) -> Result<Vec<(f64, f64)>> {
    let line = ZetaLine::new(domain, bc)?;
    let f = |s: f64| line.f(model, energy, s);
    let mut out = Vec::new();
    let ds = 2.0 * radius / samples as f64;
    let mut sa = -radius;
    let mut fa = f(sa);
    for k in 1..=samples {
        let sb = -radius + ds * k as f64;
        let fb = f(sb);
        if fa == 0.0 {
            out.push((sa, line.df(model, sa)));
        } else if fa * fb < 0.0 {
            let (mut a, mut b, mut ga) = (sa, sb, fa);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let gm = f(m);
                if gm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if gm * ga > 0.0 {
                    a = m;
                    ga = gm;
                } else {
                    b = m;
                }
                if (b - a).abs() < 1e-15 * radius {
                    break;
                }
            }
            let r = 0.5 * (a + b);
            out.push((r, line.df(model, r)));
        }
        sa = sb;
        fa = fb;
    }
    Ok(out)
}

/// Reconstruct `ξ` from `(x, ξ′)` on the energy level `E`.
pub fn solve_zeta(
    model: &dyn Hamiltonian,
    domain: &Domain,
    bc: &BoundaryCovector,
    energy: f64,
    branch: Branch,
) -> Result<PhasePoint> {
    let line = ZetaLine::new(domain, bc)?;
    let f = |s: f64| line.f(model, energy, s);
    let scale = bc
        .xi_prime
        .amax()
        .max(line.lift.amax())
        .max((2.0 * energy.abs()).sqrt())
        .max(1e-3);
    let ftol = 1e-15 * energy.abs().max(model.value(&line.x, &line.xi(scale)).abs()).max(1e-300);

    let finish = |s: f64| -> Result<PhasePoint> {
        let xi = line.xi(s);
        let hxi = model.grad_xi(&line.x, &xi);
        let slope = hxi.dot(&line.nu);
        if slope.abs() <= TOL_TRANSV * hxi.norm() {
            return Err(Error::NoTransversalSolution);
        }
        Ok(PhasePoint::from_vectors(line.x.clone(), xi))
    };
    let newton = |mut s: f64| -> Option<f64> {
        for _ in 0..50 {
            let v = f(s);
            if v.abs() <= ftol {
                return Some(s);
            }
            let d = line.df(model, s);
            if d == 0.0 || !d.is_finite() {
                return None;
            }
            let mut step = v / d;
            // damp until |f| decreases
            let mut k = 0;
            while f(s - step).abs() > v.abs() && k < 30 {
                step *= 0.5;
                k += 1;
            }
            let sn = s - step;
            if (sn - s).abs() <= 4.0 * f64::EPSILON * s.abs().max(scale) {
                return Some(sn);
            }
            s = sn;
        }
        (f(s).abs() <= 1e-10 * energy.abs().max(scale * scale)).then_some(s)
    };

    // quadratic model through three samples gives an exact seed for metric models
    let (fm, f0, fp) = (f(-scale), f(0.0), f(scale));
    let a = (fp + fm - 2.0 * f0) / (2.0 * scale * scale);
    let b = (fp - fm) / (2.0 * scale);
    let disc = b * b - 4.0 * a * f0;
    let mut seeds: Vec<f64> = Vec::new();
    if a.abs() > 1e-14 * (b.abs() / scale + f0.abs() / (scale * scale)).max(1e-300) {
        if disc <= 1e-12 * (b * b + 4.0 * (a * f0).abs()) && disc > -1e-12 * (b * b + 4.0 * (a * f0).abs()) {
            return Err(Error::NoTransversalSolution);
        }
        if disc > 0.0 {
            let r = disc.sqrt();
            let q = -0.5 * (b + b.signum() * r);
            let mut roots = vec![q / a];
            if q != 0.0 {
                roots.push(f0 / q);
            }
            for s in roots {
                let slope = 2.0 * a * s + b;
                let keep = match branch {
                    Branch::Seed(_) => true,
                    _ => slope_ok(slope, branch),
                };
                if keep {
                    seeds.push(s);
                }
            }
        }
    } else if b != 0.0 {
        seeds.push(-f0 / b);
    }
    if let Branch::Seed(s0) = branch {
        seeds.sort_by(|p, q| (p - s0).abs().partial_cmp(&(q - s0).abs()).unwrap());
        seeds.insert(0, s0);
    }
    for s0 in seeds {
        if let Some(s) = newton(s0) {
            if slope_ok(line.df(model, s), branch) {
                return finish(s);
            }
        }
    }

    // bracketed scan fallback
    let mut radius = 8.0 * scale;
    for _ in 0..4 {
        let roots = zeta_roots(model, domain, bc, energy, radius, 400)?;
        let mut cands: Vec<(f64, f64)> = roots
            .into_iter()
            .filter(|(_, sl)| slope_ok(*sl, branch))
            .collect();
        let target = match branch {
            Branch::Seed(s0) => s0,
            Branch::Incoming => scale,
            Branch::Outgoing => -scale,
        };
        cands.sort_by(|p, q| {
            (p.0 - target)
                .abs()
                .partial_cmp(&(q.0 - target).abs())
                .unwrap()
        });
        if let Branch::Seed(_) = branch {
            if cands.len() >= 2 {
                let (d0, d1) = ((cands[0].0 - target).abs(), (cands[1].0 - target).abs());
                if (d1 - d0).abs() <= 1e-9 * d1.max(scale) {
                    return Err(Error::AmbiguousBranch);
                }
            }
        }
        if let Some(&(s, _)) = cands.first() {
            let s = newton(s).unwrap_or(s);
            return finish(s);
        }
        radius *= 4.0;
    }
    // no sign change: distinguish a tangential double root from no root at all
    let mut best = (f64::INFINITY, 0.0);
    let k = 2000;
    for i in 0..=k {
        let s = -radius + 2.0 * radius * i as f64 / k as f64;
        let v = f(s).abs();
        if v < best.0 {
            best = (v, s);
        }
    }
    if best.0 <= 1e-6 * energy.abs().max(scale * scale) {
        Err(Error::NoTransversalSolution)
    } else {
        Err(Error::NoRoot)
    }
}

#[cfg(test)]
mod tests {
    use super::shapes::*;
    use super::*;
    use crate::hamiltonians::builtin::{euclidean, lens};

    #[test]
    fn disk_diameter_hit() {
        let h = euclidean(2);
        let d = disk(1.0);
        let p = PhasePoint::new(&[-1.0, 0.0], &[1.0, 0.0]);
        let hit = hit_boundary(&h, &d, &p, Direction::Forward, &IntegratorConfig::default()).unwrap();
        assert!((hit.t - 2.0).abs() < 1e-12);
        assert!((hit.point.x[0] - 1.0).abs() < 1e-12);
        assert!(d.rho(&hit.point.x).abs() < 1e-12);
    }

    #[test]
    fn half_plane_hit() {
        let h = euclidean(2);
        let d = half_space(2);
        let p = PhasePoint::new(&[0.0, 1.0], &[0.0, -1.0]);
        let hit = hit_boundary(&h, &d, &p, Direction::Forward, &IntegratorConfig::default()).unwrap();
        assert!((hit.t - 1.0).abs() < 1e-12);
        assert!(hit.point.x.amax() < 1e-12);
    }

    #[test]
    fn backward_hit_is_negative() {
        let h = euclidean(2);
        let d = disk(1.0);
        let p = PhasePoint::new(&[0.0, 0.0], &[1.0, 0.0]);
        let hit = hit_boundary(&h, &d, &p, Direction::Backward, &IntegratorConfig::default()).unwrap();
        assert!((hit.t + 1.0).abs() < 1e-12);
        assert!((hit.point.x[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn trapped_ray_reports_no_hit() {
        let h = euclidean(2);
        let d = half_space(2);
        let p = PhasePoint::new(&[0.0, 1.0], &[1.0, 0.0]);
        let cfg = IntegratorConfig {
            max_time: 10.0,
            ..Default::default()
        };
        let r = hit_boundary(&h, &d, &p, Direction::Forward, &cfg);
        assert!(matches!(r, Err(Error::NoHitWithinMaxTime)));
    }

    #[test]
    fn transversality_examples() {
        let h = euclidean(2);
        let hp = half_space(2);
        let o = PhasePoint::new(&[0.0, 0.0], &[0.0, 1.0]);
        assert_eq!(transversality(&h, &hp, &o), 1.0);
        let g = PhasePoint::new(&[0.0, 0.0], &[1.0, 0.0]);
        assert_eq!(transversality(&h, &hp, &g), 0.0);
        let d = disk(1.0);
        let q = PhasePoint::new(&[1.0, 0.0], &[-1.0, 0.0]);
        assert_eq!(transversality(&h, &d, &q), 2.0);
    }

    #[test]
    fn restrict_examples() {
        let hp = half_space(2);
        let bc = restrict(&hp, &PhasePoint::new(&[0.0, 0.0], &[0.6, 0.8])).unwrap();
        assert!((bc.xi_prime[0] - 0.6).abs() < 1e-15);
        let bn = restrict(&hp, &PhasePoint::new(&[0.3, 0.0], &[0.0, 0.8])).unwrap();
        assert_eq!(bn.xi_prime[0], 0.0);
        let d = disk(1.0);
        let bd = restrict(&d, &PhasePoint::new(&[1.0, 0.0], &[0.3, 0.7])).unwrap();
        assert_eq!(bd.chart, 0);
        assert!(bd.u[0].abs() < 1e-15);
        assert!((bd.xi_prime[0] - 0.7).abs() < 1e-15);
        let bl = restrict(&d, &PhasePoint::new(&[-1.0, 0.0], &[1.0, 0.0])).unwrap();
        assert_eq!(bl.chart, 1);
    }

    #[test]
    fn zeta_examples() {
        let h = euclidean(2);
        let hp = half_space(2);
        let bc = BoundaryCovector::new(0, &[0.0], &[0.6]);
        let p = solve_zeta(&h, &hp, &bc, 0.5, Branch::Incoming).unwrap();
        assert!((p.xi[0] - 0.6).abs() < 1e-14 && (p.xi[1] - 0.8).abs() < 1e-14);
        let q = solve_zeta(&h, &hp, &bc, 0.5, Branch::Outgoing).unwrap();
        assert!((q.xi[1] + 0.8).abs() < 1e-14);
        let g = BoundaryCovector::new(0, &[0.0], &[1.0]);
        assert!(matches!(
            solve_zeta(&h, &hp, &g, 0.5, Branch::Incoming),
            Err(Error::NoTransversalSolution)
        ));
        let far = BoundaryCovector::new(0, &[0.0], &[2.0]);
        assert!(matches!(
            solve_zeta(&h, &hp, &far, 0.5, Branch::Incoming),
            Err(Error::NoRoot)
        ));
    }

    #[test]
    fn zeta_roundtrip_on_lens_disk() {
        let h = lens(2, 0.4);
        let d = disk(1.0);
        for k in 0..10 {
            let th = 0.3 + 0.5 * k as f64;
            let chart = if th.cos() > 0.0 { 0 } else { 1 };
            let u = if chart == 0 { th.sin().atan2(th.cos()) } else { th };
            let bc = BoundaryCovector::new(chart, &[u], &[-0.7 + 0.15 * k as f64]);
            let p = solve_zeta(&h, &d, &bc, 0.5, Branch::Incoming).unwrap();
            assert!((h.eval(&p) - 0.5).abs() < 1e-12);
            let back = restrict_in_chart(&d, chart, &p).unwrap();
            assert!((back.xi_prime[0] - bc.xi_prime[0]).abs() < 1e-12);
            assert!(transversality(&h, &d, &p) > 0.0);
        }
    }

    #[test]
    fn two_roots_on_the_circle_fiber() {
        let h = euclidean(2);
        let d = disk(1.0);
        let bc = BoundaryCovector::new(0, &[0.2], &[0.3]);
        let roots = zeta_roots(&h, &d, &bc, 0.5, 5.0, 200).unwrap();
        assert_eq!(roots.len(), 2);
        assert!(roots[0].1 * roots[1].1 < 0.0);
    }

    #[test]
    fn slab_and_ball_charts_lie_on_boundary() {
        let s = slab(3, 2, 0.0, 1.0);
        let (w, g) = s.validate_chart(1, &[Vector::from_column_slice(&[0.3, -0.2])]).unwrap();
        assert!(w < 1e-15 && g > 0.0);
        let b = ball(3, 1.0);
        for c in 0..6 {
            let (w, _) = b.validate_chart(c, &[Vector::from_column_slice(&[0.1, 0.2])]).unwrap();
            assert!(w < 1e-14);
        }
        let x = Vector::from_column_slice(&[0.0, 0.6, 0.8]);
        let (c, u) = b.locate(&x).unwrap();
        assert!((b.chart(c).unwrap().param(&u) - x).amax() < 1e-14);
    }
}
