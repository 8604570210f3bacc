//! Dormand–Prince 5(4) integrator with PI step control, continuous output
//! and a terminal event on a margin function.

use crate::error::GeometryError;

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: Option<f64>,
    pub max_step: f64,
    /// Relative to the integration span.
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-12,
            initial_step: None,
            max_step: f64::INFINITY,
            min_step: 1e-13,
            max_steps: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OdeStatus {
    Finished,
    /// The event function reached zero at the final time.
    Event,
    /// Step size fell below the minimum; carries the last right-hand-side error if any.
    StepCollapse(Option<GeometryError>),
    MaxSteps,
}

#[derive(Clone, Debug)]
struct Segment {
    t0: f64,
    h: f64,
    coeffs: [Vec<f64>; 5],
}

impl Segment {
    fn eval(&self, t: f64) -> Vec<f64> {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.coeffs;
        (0..r1.len())
            .map(|i| r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i]))))
            .collect()
    }
}

/// Accepted steps with a continuous fourth-order interpolant.
#[derive(Clone, Debug)]
pub struct OdeSolution {
    pub ts: Vec<f64>,
    pub ys: Vec<Vec<f64>>,
    pub status: OdeStatus,
    segments: Vec<Segment>,
}

impl OdeSolution {
    pub fn t_end(&self) -> f64 {
        *self.ts.last().unwrap_or(&0.0)
    }

    pub fn t_start(&self) -> f64 {
        self.ts[0]
    }

    pub fn last(&self) -> &[f64] {
        self.ys.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Interpolated state; `t` is clamped to the solved span.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let (lo, hi) = (self.t_start(), self.t_end());
        let t = t.clamp(lo.min(hi), lo.max(hi));
        if self.segments.is_empty() {
            return self.ys[0].clone();
        }
        let forward = hi >= lo;
        let idx = self
            .segments
            .partition_point(|s| if forward { s.t0 <= t } else { s.t0 >= t })
            .saturating_sub(1);
        self.segments[idx].eval(t)
    }
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], opts: &OdeOptions) -> f64 {
    let n = err.len() as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sk = opts.atol + opts.rtol * a.abs().max(b.abs());
            (e / sk).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end`.
///
/// A right-hand-side error rejects the step and shrinks it. When `event`
/// is given, integration stops at the first root of `event(t, y)` where it
/// passes from positive to non-positive, located on the interpolant.
pub fn integrate<F, G>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
    event: Option<G>,
) -> OdeSolution
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, GeometryError>,
    G: Fn(f64, &[f64]) -> f64,
{
    let span = t_end - t0;
    let dir = if span >= 0.0 { 1.0 } else { -1.0 };
    let mut sol = OdeSolution {
        ts: vec![t0],
        ys: vec![y0.to_vec()],
        status: OdeStatus::Finished,
        segments: Vec::new(),
    };
    if span == 0.0 {
        return sol;
    }
    let mut k1 = match f(t0, y0) {
        Ok(k) => k,
        Err(e) => {
            sol.status = OdeStatus::StepCollapse(Some(e));
            return sol;
        }
    };
    let n = y0.len();
    let h_min = opts.min_step * span.abs();
    let mut h = opts
        .initial_step
        .unwrap_or_else(|| {
            let yn = y0.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(1e-6);
            let fn_ = k1.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(1e-12);
            (0.01 * yn / fn_).min(0.01 * span.abs())
        })
        .min(opts.max_step)
        .max(h_min)
        * dir;
    let (beta, safe) = (0.04, 0.9);
    let expo = 0.2 - 0.75 * beta;
    let mut fac_old = 1e-4f64;
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut last_err: Option<GeometryError> = None;
    let mut rejected_last = false;
    let mut steps = 0;

    loop {
        if steps >= opts.max_steps {
            sol.status = OdeStatus::MaxSteps;
            return sol;
        }
        if (t + h - t_end) * dir > 0.0 {
            h = t_end - t;
        }
        if h.abs() < h_min && (t_end - t).abs() > h_min {
            sol.status = OdeStatus::StepCollapse(last_err);
            return sol;
        }
        steps += 1;

        let mut k: Vec<Vec<f64>> = vec![k1.clone()];
        let mut failed = None;
        for s in 1..7 {
            let ys: Vec<f64> = (0..n)
                .map(|i| y[i] + h * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>())
                .collect();
            match f(t + C[s] * h, &ys) {
                Ok(ks) if ks.iter().all(|c| c.is_finite()) => k.push(ks),
                Ok(_) => {
                    failed = Some(GeometryError::Input("non-finite right-hand side".into()));
                    break;
                }
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        if let Some(e) = failed {
            last_err = Some(e);
            h *= 0.25;
            rejected_last = true;
            continue;
        }
        let y1: Vec<f64> = (0..n)
            .map(|i| y[i] + h * (0..6).map(|j| A[6][j] * k[j][i]).sum::<f64>())
            .collect();
        let errv: Vec<f64> = (0..n)
            .map(|i| h * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>())
            .collect();
        let err = error_norm(&errv, &y, &y1, opts);
        if !err.is_finite() {
            h *= 0.25;
            rejected_last = true;
            continue;
        }
        let fac11 = err.max(1e-300).powf(expo);
        if err <= 1.0 {
            let ydiff: Vec<f64> = (0..n).map(|i| y1[i] - y[i]).collect();
            let bspl: Vec<f64> = (0..n).map(|i| h * k[0][i] - ydiff[i]).collect();
            let r4: Vec<f64> = (0..n).map(|i| ydiff[i] - h * k[6][i] - bspl[i]).collect();
            let r5: Vec<f64> = (0..n)
                .map(|i| h * (0..7).map(|j| D[j] * k[j][i]).sum::<f64>())
                .collect();
            let seg = Segment {
                t0: t,
                h,
                coeffs: [y.clone(), ydiff, bspl, r4, r5],
            };
            let t1 = t + h;
            if let Some(ev) = &event {
                if ev(t1, &y1) <= 0.0 && ev(t, &y) > 0.0 {
                    let (mut lo, mut hi) = (t, t1);
                    for _ in 0..100 {
                        let mid = 0.5 * (lo + hi);
                        if ev(mid, &seg.eval(mid)) > 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    let ye = seg.eval(lo);
                    sol.segments.push(seg);
                    sol.ts.push(lo);
                    sol.ys.push(ye);
                    sol.status = OdeStatus::Event;
                    return sol;
                }
            }
            sol.segments.push(seg);
            sol.ts.push(t1);
            sol.ys.push(y1.clone());
            t = t1;
            y = y1;
            k1 = k.swap_remove(6);
            if (t - t_end) * dir >= 0.0 {
                sol.status = OdeStatus::Finished;
                return sol;
            }
            let mut fac = fac11 / fac_old.powf(beta);
            fac = (fac / safe).clamp(0.1, 5.0);
            fac_old = err.max(1e-4);
            let mut hnew = h / fac;
            if rejected_last {
                hnew = if dir > 0.0 { hnew.min(h) } else { hnew.max(h) };
            }
            rejected_last = false;
            h = hnew.abs().min(opts.max_step) * dir;
        } else {
            h /= (fac11 / safe).min(5.0);
            rejected_last = true;
        }
    }
}
