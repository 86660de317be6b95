//! Dormand-Prince 5(4) stepper with the 4th order continuous extension.
//!
//! The stepper advances one accepted step at a time and hands back the
//! dense-output polynomial of that step, so callers own event location,
//! sampling and any change of variables between steps.

use serde::{Deserialize, Serialize};

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

/// Step-size control parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub rtol: f64,
    pub atol: f64,
    pub min_step: f64,
    pub max_step: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-11,
            min_step: 1e-12,
            max_step: f64::INFINITY,
        }
    }
}

/// Continuous extension of one accepted step on `[x0, x0 + h]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseStep<const N: usize> {
    pub x0: f64,
    pub h: f64,
    rc: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn x1(&self) -> f64 {
        self.x0 + self.h
    }

    pub fn start(&self) -> [f64; N] {
        self.rc[0]
    }

    pub fn end(&self) -> [f64; N] {
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = self.rc[0][i] + self.rc[1][i];
        }
        out
    }

    /// Interpolated state at `x`; `x` is expected inside the step.
    pub fn eval(&self, x: f64) -> [f64; N] {
        let theta = (x - self.x0) / self.h;
        let theta1 = 1.0 - theta;
        let mut out = [0.0; N];
        for (i, o) in out.iter_mut().enumerate() {
            let rc = |k: usize| self.rc[k][i];
            *o = rc(0) + theta * (rc(1) + theta1 * (rc(2) + theta * (rc(3) + theta1 * rc(4))));
        }
        out
    }

    /// Integral of component `i` of the interpolant over `[a, b]` inside the
    /// step. Three-point Gauss-Legendre is exact for the quartic extension.
    pub fn integrate_component(&self, i: usize, a: f64, b: f64) -> f64 {
        let nodes = [-(0.6f64).sqrt(), 0.0, (0.6f64).sqrt()];
        let weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        nodes
            .iter()
            .zip(weights.iter())
            .map(|(t, w)| w * self.eval(mid + half * t)[i])
            .sum::<f64>()
            * half
    }
}

/// Explicit adaptive Dormand-Prince 5(4) integrator state.
#[derive(Debug, Clone)]
pub struct Stepper<const N: usize> {
    x: f64,
    y: [f64; N],
    k1: Option<[f64; N]>,
    h: f64,
    cfg: StepConfig,
    rejected_last: bool,
    pub evaluations: usize,
    pub accepted: usize,
    pub rejected: usize,
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (a, k) in terms {
            acc += a * k[i];
        }
        *o += h * acc;
    }
    out
}

impl<const N: usize> Stepper<N> {
    pub fn new(x: f64, y: [f64; N], cfg: StepConfig) -> Self {
        Self {
            x,
            y,
            k1: None,
            h: 0.0,
            cfg,
            rejected_last: false,
            evaluations: 0,
            accepted: 0,
            rejected: 0,
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> [f64; N] {
        self.y
    }

    /// Replace the current state, keeping the step-size history.
    pub fn reset(&mut self, x: f64, y: [f64; N]) {
        self.x = x;
        self.y = y;
        self.k1 = None;
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.cfg.atol + self.cfg.rtol * a.abs().max(b.abs())
    }

    fn initial_step<F>(&mut self, f: &F, k1: &[f64; N], dir_len: f64) -> f64
    where
        F: Fn(f64, &[f64; N]) -> [f64; N],
    {
        let mut dnf = 0.0;
        let mut dny = 0.0;
        for i in 0..N {
            let sk = self.scale(self.y[i], self.y[i]);
            if sk > 0.0 {
                dnf += (k1[i] / sk).powi(2);
                dny += (self.y[i] / sk).powi(2);
            }
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            (dny / dnf).sqrt() * 0.01
        };
        h = h.min(self.cfg.max_step).min(dir_len);
        let y1 = axpy(&self.y, h, &[(1.0, k1)]);
        let k2 = f(self.x + h, &y1);
        self.evaluations += 1;
        let mut der2 = 0.0;
        for i in 0..N {
            let sk = self.scale(self.y[i], self.y[i]);
            if sk > 0.0 {
                der2 += ((k2[i] - k1[i]) / sk).powi(2);
            }
        }
        let der2 = der2.sqrt() / h;
        let der12 = der2.max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 {
            (h * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(0.2)
        };
        (100.0 * h).min(h1).min(self.cfg.max_step).min(dir_len)
    }

    /// Advance one accepted step, never past `x_end`. On step-size underflow
    /// returns `Err(x)` with the position where the integration stalled.
    pub fn step<F>(&mut self, f: &F, x_end: f64) -> Result<DenseStep<N>, f64>
    where
        F: Fn(f64, &[f64; N]) -> [f64; N],
    {
        let remaining = x_end - self.x;
        if remaining <= 0.0 {
            return Err(self.x);
        }
        let k1 = match self.k1 {
            Some(k) => k,
            None => {
                self.evaluations += 1;
                f(self.x, &self.y)
            }
        };
        if self.h <= 0.0 {
            self.h = self.initial_step(f, &k1, remaining);
        }
        let mut h = self.h.min(self.cfg.max_step);
        loop {
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            if h < self.cfg.min_step && !last {
                return Err(self.x);
            }
            let x = self.x;
            let y = &self.y;
            let k2 = f(x + C2 * h, &axpy(y, h, &[(A21, &k1)]));
            let k3 = f(x + C3 * h, &axpy(y, h, &[(A31, &k1), (A32, &k2)]));
            let k4 = f(x + C4 * h, &axpy(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = f(
                x + C5 * h,
                &axpy(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            );
            let k6 = f(
                x + h,
                &axpy(y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            );
            let y1 = axpy(y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let k7 = f(x + h, &y1);
            self.evaluations += 6;

            let mut err = 0.0;
            let mut finite = true;
            for i in 0..N {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                finite &= y1[i].is_finite();
                let sk = self.scale(y[i], y1[i]);
                if sk > 0.0 {
                    err += (e / sk).powi(2);
                } else if e != 0.0 {
                    finite = false;
                }
            }
            let err = if finite { (err / N as f64).sqrt() } else { f64::INFINITY };

            if err <= 1.0 {
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                let fac = if self.rejected_last { fac.min(1.0) } else { fac };
                self.rejected_last = false;
                self.accepted += 1;

                let mut rc = [[0.0; N]; 5];
                for i in 0..N {
                    let ydiff = y1[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    rc[0][i] = y[i];
                    rc[1][i] = ydiff;
                    rc[2][i] = bspl;
                    rc[3][i] = ydiff - h * k7[i] - bspl;
                    rc[4][i] = h
                        * (D1 * k1[i]
                            + D3 * k3[i]
                            + D4 * k4[i]
                            + D5 * k5[i]
                            + D6 * k6[i]
                            + D7 * k7[i]);
                }
                let dense = DenseStep { x0: x, h, rc };
                self.x = if last { x_end } else { x + h };
                self.y = y1;
                self.k1 = Some(k7);
                if !last || h >= self.h {
                    self.h = (h * fac).min(self.cfg.max_step);
                }
                return Ok(dense);
            }
            self.rejected += 1;
            self.rejected_last = true;
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).max(0.2) } else { 0.2 };
            h *= fac;
            self.h = h;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run<const N: usize, F>(f: F, y0: [f64; N], x_end: f64, cfg: StepConfig) -> [f64; N]
    where
        F: Fn(f64, &[f64; N]) -> [f64; N],
    {
        let mut s = Stepper::new(0.0, y0, cfg);
        while s.x() < x_end {
            s.step(&f, x_end).unwrap();
        }
        s.y()
    }

    #[test]
    fn harmonic_oscillator_period() {
        let cfg = StepConfig { rtol: 1e-11, atol: 1e-13, ..Default::default() };
        let tau = 2.0 * std::f64::consts::PI;
        let y = run(|_, y: &[f64; 2]| [y[1], -y[0]], [1.0, 0.0], tau, cfg);
        assert!((y[0] - 1.0).abs() < 1e-9);
        assert!(y[1].abs() < 1e-9);
    }

    #[test]
    fn dense_output_matches_exponential() {
        let cfg = StepConfig { rtol: 1e-10, atol: 1e-12, ..Default::default() };
        let f = |_: f64, y: &[f64; 1]| [-0.7 * y[0]];
        let mut s = Stepper::new(0.0, [1.0], cfg);
        let mut worst: f64 = 0.0;
        while s.x() < 5.0 {
            let d = s.step(&f, 5.0).unwrap();
            for k in 0..=10 {
                let x = d.x0 + d.h * k as f64 / 10.0;
                worst = worst.max((d.eval(x)[0] - (-0.7 * x).exp()).abs());
            }
            let exact = ((-0.7 * d.x0).exp() - (-0.7 * d.x1()).exp()) / 0.7;
            assert!((d.integrate_component(0, d.x0, d.x1()) - exact).abs() < 1e-9);
        }
        assert!(worst < 1e-8, "dense error {worst}");
    }

    #[test]
    fn step_underflow_reported() {
        let cfg = StepConfig { min_step: 1e-3, ..Default::default() };
        // blows up at x = 1
        let f = |_: f64, y: &[f64; 1]| [y[0] * y[0]];
        let mut s = Stepper::new(0.0, [1.0], cfg);
        let mut failed = None;
        for _ in 0..100_000 {
            match s.step(&f, 2.0) {
                Ok(_) => {}
                Err(x) => {
                    failed = Some(x);
                    break;
                }
            }
        }
        let x = failed.expect("integration should stall");
        assert!(x < 1.0 && x > 0.9);
    }
}
