//! Adaptive Dormand–Prince 5(4) integration with continuous output.
//!
//! The integrator is generic over the scalar type so the same stepper drives
//! vectorized density matrices (complex) and population vectors (real). The
//! right-hand side is autonomous: every generator in this crate is
//! time-independent.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::ops::{Add, AddAssign, ControlFlow, Mul, Sub};

use crate::error::{Error, Result};
use crate::operator::C64;

pub trait OdeScalar:
    Copy + Default + Debug + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + AddAssign
{
    fn magnitude(self) -> f64;
}

impl OdeScalar for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl OdeScalar for C64 {
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
    pub max_step: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions { rtol: 1e-9, atol: 1e-12, max_steps: 20_000_000, initial_step: None, max_step: None }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

// Butcher tableau; the nodes are not needed for an autonomous right-hand side
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
// fifth minus fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// An accepted step, with access to the interpolant over `[t_start, t_end]`.
pub struct Step<'a, T> {
    t0: f64,
    h: f64,
    y0: &'a [T],
    y1: &'a [T],
    k: &'a [Vec<T>; 7],
}

impl<T: OdeScalar> Step<'_, T> {
    pub fn t_start(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn state_start(&self) -> &[T] {
        self.y0
    }

    pub fn state_end(&self) -> &[T] {
        self.y1
    }

    /// Fourth-order dense output at `t` inside the step.
    pub fn interpolate(&self, t: f64, out: &mut [T]) {
        let h = self.h;
        let theta = ((t - self.t0) / h).clamp(0.0, 1.0);
        let theta1 = 1.0 - theta;
        let k = self.k;
        for i in 0..out.len() {
            let y0 = self.y0[i];
            let ydiff = self.y1[i] - y0;
            let bspl = k[0][i] * h - ydiff;
            let r4 = ydiff - k[6][i] * h - bspl;
            let r5 = (k[0][i] * D1 + k[2][i] * D3 + k[3][i] * D4 + k[4][i] * D5 + k[5][i] * D6 + k[6][i] * D7) * h;
            out[i] = y0 + (ydiff + (bspl + (r4 + r5 * theta1) * theta) * theta1) * theta;
        }
    }
}

fn combine<T: OdeScalar>(out: &mut [T], y: &[T], h: f64, terms: &[(f64, &[T])]) {
    for i in 0..out.len() {
        let mut acc = T::default();
        for &(w, k) in terms {
            acc += k[i] * w;
        }
        out[i] = y[i] + acc * h;
    }
}

fn scaled_max<T: OdeScalar>(v: &[T], y: &[T], opts: &IntegratorOptions) -> f64 {
    v.iter().zip(y).map(|(a, b)| a.magnitude() / (opts.atol + opts.rtol * b.magnitude())).fold(0.0, f64::max)
}

fn initial_step<T, F>(rhs: &mut F, y: &[T], f0: &[T], span: f64, opts: &IntegratorOptions, stats: &mut Stats) -> f64
where
    T: OdeScalar,
    F: FnMut(&[T], &mut [T]),
{
    let d0 = scaled_max(y, y, opts);
    let d1 = scaled_max(f0, y, opts);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let mut y1 = vec![T::default(); y.len()];
    combine(&mut y1, y, h0, &[(1.0, f0)]);
    let mut f1 = vec![T::default(); y.len()];
    rhs(&y1, &mut f1);
    stats.evaluations += 1;
    let diff: Vec<T> = f1.iter().zip(f0).map(|(&a, &b)| a - b).collect();
    let d2 = scaled_max(&diff, y, opts) / h0;
    let dmax = d1.max(d2);
    let h1 = if dmax <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { libm::pow(0.01 / dmax, 0.2) };
    (100.0 * h0).min(h1).min(span)
}

/// Integrates `dy/dt = rhs(y)` from `t0` to `t_end`.
///
/// `on_step` sees every accepted step and may stop the integration early by
/// returning `ControlFlow::Break`. Returns the final state, the time reached
/// and step statistics.
pub fn integrate<T, F, O>(
    mut rhs: F,
    y0: &[T],
    t0: f64,
    t_end: f64,
    opts: &IntegratorOptions,
    mut on_step: O,
) -> Result<(Vec<T>, f64, Stats)>
where
    T: OdeScalar,
    F: FnMut(&[T], &mut [T]),
    O: FnMut(&Step<'_, T>) -> Result<ControlFlow<()>>,
{
    let n = y0.len();
    let mut stats = Stats::default();
    let mut y = y0.to_vec();
    let mut y_new = vec![T::default(); n];
    let mut tmp = vec![T::default(); n];
    let mut k: [Vec<T>; 7] = core::array::from_fn(|_| vec![T::default(); n]);
    let mut t = t0;
    if t_end <= t0 {
        return Ok((y, t, stats));
    }
    rhs(&y, &mut k[0]);
    stats.evaluations += 1;
    let mut h = match opts.initial_step {
        Some(h) => h,
        None => initial_step(&mut rhs, &y, &k[0], t_end - t0, opts, &mut stats),
    };
    let mut last_rejected = false;

    while t_end - t > 1e-13 * t_end.abs().max(1.0) {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::StepBudget { steps: opts.max_steps, t });
        }
        if let Some(hmax) = opts.max_step {
            h = h.min(hmax);
        }
        h = h.min(t_end - t);
        if h <= 16.0 * f64::EPSILON * t.abs().max(1e-300) || h < 1e-300 {
            return Err(Error::StepUnderflow { t });
        }

        combine(&mut tmp, &y, h, &[(A21, &k[0])]);
        rhs(&tmp, &mut k[1]);
        combine(&mut tmp, &y, h, &[(A31, &k[0]), (A32, &k[1])]);
        rhs(&tmp, &mut k[2]);
        combine(&mut tmp, &y, h, &[(A41, &k[0]), (A42, &k[1]), (A43, &k[2])]);
        rhs(&tmp, &mut k[3]);
        combine(&mut tmp, &y, h, &[(A51, &k[0]), (A52, &k[1]), (A53, &k[2]), (A54, &k[3])]);
        rhs(&tmp, &mut k[4]);
        combine(&mut tmp, &y, h, &[(A61, &k[0]), (A62, &k[1]), (A63, &k[2]), (A64, &k[3]), (A65, &k[4])]);
        rhs(&tmp, &mut k[5]);
        combine(&mut y_new, &y, h, &[(A71, &k[0]), (A73, &k[2]), (A74, &k[3]), (A75, &k[4]), (A76, &k[5])]);
        rhs(&y_new, &mut k[6]);
        stats.evaluations += 6;

        let mut err: f64 = 0.0;
        for i in 0..n {
            let e = (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7) * h;
            let sc = opts.atol + opts.rtol * y[i].magnitude().max(y_new[i].magnitude());
            err = err.max(e.magnitude() / sc);
        }
        if !err.is_finite() {
            stats.rejected += 1;
            last_rejected = true;
            h *= 0.2;
            continue;
        }

        if err <= 1.0 {
            stats.accepted += 1;
            let step = Step { t0: t, h, y0: &y, y1: &y_new, k: &k };
            let flow = on_step(&step)?;
            t += h;
            core::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            if flow.is_break() {
                break;
            }
            let mut factor = if err == 0.0 { 5.0 } else { (0.9 * libm::pow(err, -0.2)).clamp(0.2, 5.0) };
            if last_rejected {
                factor = factor.min(1.0);
            }
            last_rejected = false;
            h *= factor;
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h *= (0.9 * libm::pow(err, -0.2)).max(0.2);
        }
    }
    Ok((y, t, stats))
}
