//! Adaptive Dormand–Prince 5(4) integrator with dense output.
//!
//! The solver is generic over a right-hand side `f(t, y, dy)` and reports every
//! accepted step to an observer, which can stop the integration early. Each
//! [`Step`] carries the fourth-order continuous extension, so callers can
//! evaluate the solution anywhere inside it.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Error-control settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: f64::INFINITY,
            max_steps: 200_000,
        }
    }
}

/// One accepted step with its continuous extension.
#[derive(Clone, Debug)]
pub struct Step {
    pub t0: f64,
    pub h: f64,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    /// Derivative at `y0`.
    pub k0: Vec<f64>,
    /// Derivative at `y1` (first-same-as-last stage).
    pub k1: Vec<f64>,
    /// Scaled embedded error estimate (0 for forced steps).
    pub err: f64,
    cont: Vec<f64>,
}

impl Step {
    pub fn dim(&self) -> usize {
        self.y0.len()
    }

    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// Dense-output value at `t` (meaningful for `t` inside the step).
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = self.dim();
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let c = &self.cont;
        for i in 0..n {
            out[i] = c[i]
                + th * (c[n + i]
                    + th1 * (c[2 * n + i] + th * (c[3 * n + i] + th1 * c[4 * n + i])));
        }
    }

    /// Whether `t` lies in the closed step interval.
    pub fn contains(&self, t: f64) -> bool {
        let (a, b) = if self.h >= 0.0 {
            (self.t0, self.t1())
        } else {
            (self.t1(), self.t0)
        };
        t >= a && t <= b
    }
}

/// Observer verdict after each accepted step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

fn eval_rhs<F>(f: &F, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    f(t, y, dy)?;
    if dy.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::DerivativeEvaluationFailed(t))
    }
}

/// A single Dormand–Prince step of size `h` from `(t, y)` with `k0 = f(t, y)`.
/// Returns the step record and the embedded error estimate vector.
pub fn rk_step<F>(f: &F, t: f64, y: &[f64], k0: &[f64], h: f64) -> Result<(Step, Vec<f64>)>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len();
    let mut tmp = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let k1 = k0;

    for i in 0..n {
        tmp[i] = y[i] + h * A21 * k1[i];
    }
    eval_rhs(f, t + C2 * h, &tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    eval_rhs(f, t + C3 * h, &tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    eval_rhs(f, t + C4 * h, &tmp, &mut k4)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    eval_rhs(f, t + C5 * h, &tmp, &mut k5)?;
    for i in 0..n {
        tmp[i] = y[i]
            + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    eval_rhs(f, t + h, &tmp, &mut k6)?;
    let mut y1 = vec![0.0; n];
    for i in 0..n {
        y1[i] = y[i]
            + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
    }
    eval_rhs(f, t + h, &y1, &mut k7)?;

    let mut err = vec![0.0; n];
    let mut cont = vec![0.0; 5 * n];
    for i in 0..n {
        err[i] = h
            * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let ydiff = y1[i] - y[i];
        let bspl = h * k1[i] - ydiff;
        cont[i] = y[i];
        cont[n + i] = ydiff;
        cont[2 * n + i] = bspl;
        cont[3 * n + i] = ydiff - h * k7[i] - bspl;
        cont[4 * n + i] = h
            * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    Ok((
        Step {
            t0: t,
            h,
            y0: y.to_vec(),
            y1,
            k0: k1.to_vec(),
            k1: k7,
            err: 0.0,
            cont,
        },
        err,
    ))
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], tol: &Tolerances) -> f64 {
    let n = err.len() as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sk = tol.atol + tol.rtol * a.abs().max(b.abs());
            (e / sk).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

fn initial_step<F>(f: &F, t: f64, y: &[f64], k0: &[f64], dir: f64, tol: &Tolerances) -> Result<f64>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len();
    let sk: Vec<f64> = y.iter().map(|v| tol.atol + tol.rtol * v.abs()).collect();
    let dnf: f64 = k0.iter().zip(&sk).map(|(k, s)| (k / s).powi(2)).sum::<f64>() / n as f64;
    let dny: f64 = y.iter().zip(&sk).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64;
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(tol.max_step);
    let y1: Vec<f64> = y.iter().zip(k0).map(|(v, k)| v + dir * h * k).collect();
    let mut k1 = vec![0.0; n];
    eval_rhs(f, t + dir * h, &y1, &mut k1)?;
    let der2: f64 = k1
        .iter()
        .zip(k0)
        .zip(&sk)
        .map(|((a, b), s)| ((a - b) / s).powi(2))
        .sum::<f64>()
        .sqrt()
        / h;
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    Ok(dir * (100.0 * h).min(h1).min(tol.max_step))
}

/// Integrate from `t0` to `t1` (either direction). The observer sees every
/// accepted step in order and may stop early.
pub fn integrate<F, O>(
    f: &F,
    t0: f64,
    y0: &[f64],
    t1: f64,
    tol: &Tolerances,
    mut observer: O,
) -> Result<()>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
    O: FnMut(&Step) -> Result<Control>,
{
    if t1 == t0 {
        return Ok(());
    }
    let dir = (t1 - t0).signum();
    let n = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k0 = vec![0.0; n];
    eval_rhs(f, t, &y, &mut k0)?;
    let mut h = initial_step(f, t, &y, &k0, dir, tol)?;
    let beta = 0.04;
    let expo1 = 0.2 - beta * 0.75;
    let safe = 0.9;
    let (facc1, facc2) = (1.0 / 0.2, 1.0 / 10.0);
    let mut facold: f64 = 1e-4;
    let mut reject = false;
    let mut steps = 0usize;

    loop {
        if steps >= tol.max_steps {
            return Err(Error::StepSizeUnderflow(t));
        }
        steps += 1;
        if h.abs() > tol.max_step {
            h = dir * tol.max_step;
        }
        let last = (t + 1.01 * h - t1) * dir >= 0.0;
        if last {
            h = t1 - t;
        }
        if h.abs() <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow(t));
        }
        let (mut step, err) = rk_step(f, t, &y, &k0, h)?;
        let e = error_norm(&err, &step.y0, &step.y1, tol);
        step.err = e;
        let fac11 = e.powf(expo1);
        let fac = (fac11 / facold.powf(beta) / safe).clamp(facc2, facc1);
        let mut hnew = h / fac;
        if e <= 1.0 {
            facold = e.max(1e-4);
            if reject {
                hnew = dir * hnew.abs().min(h.abs());
            }
            reject = false;
            t = if last { t1 } else { step.t1() };
            y.clone_from(&step.y1);
            k0.clone_from(&step.k1);
            if observer(&step)? == Control::Stop || last {
                return Ok(());
            }
            h = hnew;
        } else {
            hnew = h / facc1.min(fac11 / safe);
            reject = true;
            h = hnew;
        }
    }
}

/// Result of [`integrate_to_event`].
#[derive(Clone, Debug)]
pub struct EventHit {
    pub t: f64,
    pub y: Vec<f64>,
    /// Accepted steps up to the event; the last one ends exactly at `t`.
    pub steps: Vec<Step>,
}

fn polish_root<F, G>(f: &F, step: &Step, g: &G, mut a: f64, mut b: f64) -> Result<Option<(f64, Step)>>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
    G: Fn(&[f64]) -> f64,
{
    let eval = |tau: f64| -> Result<(f64, Step)> {
        let (s, _) = rk_step(f, step.t0, &step.y0, &step.k0, tau - step.t0)?;
        Ok((g(&s.y1), s))
    };
    let (mut ga, _) = eval(a)?;
    let (mut gb, mut sb) = eval(b)?;
    if ga <= 0.0 {
        // fall back to the step start
        a = step.t0 + 1e-3 * (a - step.t0);
        ga = eval(a)?.0;
        if ga <= 0.0 {
            return Ok(None);
        }
    }
    if gb > 0.0 {
        // dense output and the single step disagree; try the step end
        b = step.t1();
        let r = eval(b)?;
        gb = r.0;
        sb = r.1;
        if gb > 0.0 {
            return Ok(None);
        }
    }
    let scale = ga.abs().max(gb.abs()).max(1e-300);
    let mut side = 0i32;
    for _ in 0..200 {
        if gb.abs() <= 1e-15 * scale.max(1.0) || (b - a).abs() <= 4.0 * f64::EPSILON * b.abs().max(1.0) {
            break;
        }
        let mut c = (a * gb - b * ga) / (gb - ga);
        if !c.is_finite() || (c - a) * (c - b) >= 0.0 {
            c = 0.5 * (a + b);
        }
        let (gc, sc) = eval(c)?;
        if gc > 0.0 {
            a = c;
            ga = gc;
            if side == 1 {
                gb *= 0.5;
            }
            side = 1;
        } else {
            b = c;
            gb = gc;
            sb = sc;
            if side == -1 {
                ga *= 0.5;
            }
            side = -1;
        }
    }
    Ok(Some((b, sb)))
}

/// Integrate until the scalar event `g(y)` first drops from positive to
/// non-positive, or until `t_end`. Crossings are bracketed on the dense output
/// (`substeps` samples per step) and then polished by re-stepping from the
/// start of the step that contains the crossing.
pub fn integrate_to_event<F, G>(
    f: &F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    tol: &Tolerances,
    g: G,
    substeps: usize,
) -> Result<Option<EventHit>>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
    G: Fn(&[f64]) -> f64,
{
    let mut steps: Vec<Step> = Vec::new();
    let mut armed = g(y0) > 0.0;
    let mut hit: Option<(f64, Step)> = None;
    let mut buf = vec![0.0; y0.len()];
    integrate(f, t0, y0, t_end, tol, |s| {
        let mut last_pos = s.t0;
        for k in 1..=substeps {
            let t = if k == substeps {
                s.t1()
            } else {
                s.t0 + s.h * k as f64 / substeps as f64
            };
            let v = if k == substeps {
                g(&s.y1)
            } else {
                s.eval_into(t, &mut buf);
                g(&buf)
            };
            if v > 0.0 {
                armed = true;
                last_pos = t;
            } else if armed {
                if let Some(r) = polish_root(f, s, &g, last_pos, t)? {
                    hit = Some(r);
                    return Ok(Control::Stop);
                }
                // spurious dense-output crossing: keep going
            }
        }
        steps.push(s.clone());
        Ok(Control::Continue)
    })?;
    Ok(hit.map(|(t, s)| {
        let y = s.y1.clone();
        steps.push(s);
        EventHit { t, y, steps }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harmonic(_t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        dy[0] = y[1];
        dy[1] = -y[0];
        Ok(())
    }

    #[test]
    fn harmonic_oscillator_endpoint() {
        let mut last = vec![];
        integrate(&harmonic, 0.0, &[1.0, 0.0], 3.0, &Tolerances::default(), |s| {
            last = s.y1.clone();
            Ok(Control::Continue)
        })
        .unwrap();
        assert!((last[0] - 3f64.cos()).abs() < 1e-9);
        assert!((last[1] + 3f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn backward_integration() {
        let mut last = vec![];
        integrate(&harmonic, 0.0, &[1.0, 0.0], -2.0, &Tolerances::default(), |s| {
            assert!(s.h < 0.0);
            last = s.y1.clone();
            Ok(Control::Continue)
        })
        .unwrap();
        assert!((last[0] - 2f64.cos()).abs() < 1e-9);
        assert!((last[1] - 2f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn dense_output_accuracy() {
        let mut worst: f64 = 0.0;
        integrate(&harmonic, 0.0, &[1.0, 0.0], 5.0, &Tolerances::default(), |s| {
            for k in 1..10 {
                let t = s.t0 + s.h * k as f64 / 10.0;
                let v = s.eval(t);
                worst = worst.max((v[0] - t.cos()).abs());
            }
            Ok(Control::Continue)
        })
        .unwrap();
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn dense_output_hits_endpoints() {
        integrate(&harmonic, 0.0, &[1.0, 0.0], 1.0, &Tolerances::default(), |s| {
            let a = s.eval(s.t0);
            let b = s.eval(s.t1());
            assert_eq!(a, s.y0);
            for i in 0..2 {
                assert!((b[i] - s.y1[i]).abs() < 1e-15);
            }
            Ok(Control::Continue)
        })
        .unwrap();
    }

    #[test]
    fn non_finite_rhs_is_reported() {
        let bad = |_t: f64, _y: &[f64], dy: &mut [f64]| -> Result<()> {
            dy[0] = f64::NAN;
            Ok(())
        };
        let r = integrate(&bad, 0.0, &[1.0], 1.0, &Tolerances::default(), |_| Ok(Control::Continue));
        assert!(matches!(r, Err(Error::DerivativeEvaluationFailed(_))));
    }
    #[test]
    fn event_on_harmonic_oscillator() {
        // y0 = cos t crosses zero at pi/2
        let hit = integrate_to_event(
            &harmonic,
            0.0,
            &[1.0, 0.0],
            10.0,
            &Tolerances::default(),
            |y| y[0],
            8,
        )
        .unwrap()
        .unwrap();
        assert!((hit.t - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
        assert!(hit.y[0].abs() < 1e-14);
        assert_eq!(hit.steps.last().unwrap().t1(), hit.t);
    }

    #[test]
    fn event_absent() {
        let r = integrate_to_event(
            &harmonic,
            0.0,
            &[1.0, 0.0],
            1.0,
            &Tolerances::default(),
            |y| y[0] + 2.0,
            8,
        )
        .unwrap();
        assert!(r.is_none());
    }
}
