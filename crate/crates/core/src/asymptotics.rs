//! Leading-order small-speed approximation of the homogeneous front.
//!
//! For `c -> 0` the tumor profile in `y` is close to the Fisher-KPP front
//! `v0` cut off at the point where `v0' + c v0 = 0` and continued by pure
//! exponential decay; `u` is a fast variable slaved to `v0` through an
//! implicit relation. Mapped back to `xi`, the front becomes sharp at
//! `xi = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{FrontError, Result};
use crate::model::ModelParams;
use crate::ode::{DenseStep, StepConfig, Stepper};
use crate::profile::FrontProfile;
use crate::quad;
use crate::roots::{bisect, brent};

/// Fisher-KPP decay rate `lambda` with `lambda (lambda + c) = r`.
pub fn fkpp_lambda(r: f64, c: f64) -> f64 {
    0.5 * ((c * c + 4.0 * r).sqrt() - c)
}

fn check_weak_damping(params: &ModelParams) -> Result<()> {
    if params.strongly_damped() {
        return Err(FrontError::InvalidParams(format!(
            "needs c < 2 sqrt(r); got c = {}, r = {}",
            params.c(),
            params.r()
        )));
    }
    Ok(())
}

/// Closed-form approximation of `v0`:
/// `1 - c/(c+lambda) e^{lambda y}` for `y <= 0`, `lambda/(c+lambda) e^{-c y}` for `y >= 0`.
pub fn hat_v0(y: f64, params: &ModelParams) -> f64 {
    let c = params.c();
    let lambda = fkpp_lambda(params.r(), c);
    if y <= 0.0 {
        1.0 - c / (c + lambda) * (lambda * y).exp()
    } else {
        lambda / (c + lambda) * (-c * y).exp()
    }
}

/// Derivative of [`hat_v0`].
pub fn hat_v0_slope(y: f64, params: &ModelParams) -> f64 {
    let c = params.c();
    let lambda = fkpp_lambda(params.r(), c);
    if y <= 0.0 {
        -c * lambda / (c + lambda) * (lambda * y).exp()
    } else {
        -c * lambda / (c + lambda) * (-c * y).exp()
    }
}

/// Numerical `v0`: the Fisher-KPP front translated so that
/// `v0' + c v0 = 0` at `y = 0`, continued by `v0(0) e^{-c y}`.
#[derive(Debug, Clone)]
pub struct PiecewiseV0 {
    pub c: f64,
    pub lambda: f64,
    /// `v0(0)`
    pub v0_at_zero: f64,
    /// `v0'(0-)`
    pub slope_left: f64,
    /// Samples `(y, v0(y))` on the requested grid.
    pub samples: Vec<(f64, f64)>,
    /// Position of the matching point in the seed coordinate.
    shift: f64,
    seed_start: f64,
    steps: Vec<DenseStep<2>>,
}

impl PiecewiseV0 {
    pub fn eval(&self, y: f64) -> f64 {
        if y >= 0.0 {
            return self.v0_at_zero * (-self.c * y).exp();
        }
        let x = y + self.shift;
        if x <= self.seed_start {
            return 1.0 - (self.lambda * x).exp();
        }
        let i = self.steps.partition_point(|s| s.x1() < x).min(self.steps.len() - 1);
        1.0 - self.steps[i].eval(x)[0]
    }
}

/// `1 - phi` where the seeding starts.
const FKPP_SEED: f64 = 1e-10;

pub fn fkpp_v0(params: &ModelParams, grid: &[f64]) -> Result<PiecewiseV0> {
    check_weak_damping(params)?;
    let (r, c) = (params.r(), params.c());
    let lambda = fkpp_lambda(r, c);
    let y0 = FKPP_SEED.ln() / lambda;
    // state (1 - phi, phi')
    let f = |_: f64, s: &[f64; 2]| [-s[1], -c * s[1] - r * (1.0 - s[0]) * s[0]];
    let cfg = StepConfig {
        rtol: 1e-12,
        atol: 0.0,
        min_step: 1e-12,
        max_step: 0.5,
    };
    let mut stepper = Stepper::new(y0, [FKPP_SEED, -lambda * FKPP_SEED], cfg);
    let psi = |s: &[f64; 2]| s[1] + c * (1.0 - s[0]);
    let horizon = y0 + 1e4;
    let mut steps = Vec::new();
    let y1 = loop {
        let d = stepper
            .step(&f, horizon)
            .map_err(|y| FrontError::StepFailure { y })?;
        steps.push(d);
        if psi(&d.end()) <= 0.0 {
            break bisect(|y| psi(&d.eval(y)), d.x0, d.x1(), 1e-14, 200).unwrap_or(d.x1());
        }
        if stepper.x() >= horizon {
            return Err(FrontError::InvalidParams("v0' + c v0 never vanishes".into()));
        }
    };
    let at_match = steps.last().unwrap().eval(y1);
    let mut out = PiecewiseV0 {
        c,
        lambda,
        v0_at_zero: 1.0 - at_match[0],
        slope_left: at_match[1],
        samples: Vec::new(),
        shift: y1,
        seed_start: y0,
        steps,
    };
    out.samples = grid.iter().map(|&y| (y, out.eval(y))).collect();
    Ok(out)
}

/// Constants of the small-speed approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlowFrontApprox {
    /// `d v0_hat(0) - 1`
    pub b: f64,
    /// Calibration constant of the fast `u` relation.
    pub alpha_cal: f64,
    /// `(c/b) ln alpha_cal`, the `y`-translation equivalent to `alpha_cal`.
    pub shift: f64,
    /// `(c/b) ln((1 + b) alpha_cal / b)`
    pub kappa: f64,
    /// Zero of the coordinate map `Phi`; always negative.
    pub xi_star: f64,
    pub lambda: f64,
    pub params: ModelParams,
}

fn b_of(params: &ModelParams) -> Result<f64> {
    let b = params.d() * hat_v0(0.0, params) - 1.0;
    if !(b > 0.0) {
        return Err(FrontError::InvalidParams(format!(
            "d v0_hat(0) - 1 = {b} must be positive"
        )));
    }
    Ok(b)
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Solution of `u^{1+b} / ((1-u)^b (b+u)) = (1/b) e^{b(1+b) x / c}` as
/// `(u, 1 - u)`. The calibrated `u0(y)` is this at `x = y + shift`.
pub fn fast_profile(x: f64, b: f64, c: f64) -> (f64, f64) {
    let target = -b.ln() + b * (1.0 + b) * x / c;
    let g = |t: f64| {
        let ln_u = -softplus(-t);
        let ln_om = -softplus(t);
        let u = 1.0 / (1.0 + (-t).exp());
        (1.0 + b) * ln_u - b * ln_om - (b + u).ln() - target
    };
    let mut lo = -1.0;
    while g(lo) > 0.0 {
        lo *= 2.0;
    }
    let mut hi = 1.0;
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    let t = bisect(g, lo, hi, 1e-13, 400).unwrap_or(0.5 * (lo + hi));
    (1.0 / (1.0 + (-t).exp()), 1.0 / (1.0 + t.exp()))
}

/// `u0(y)` for the calibrated approximation.
pub fn solve_u0(y: f64, approx: &SlowFrontApprox) -> f64 {
    fast_profile(y + approx.shift, approx.b, approx.params.c()).0
}

/// Speed integral `r \int v0_hat (1 - v0_hat)(1 - u0(y + s)) dy`.
pub fn speed_integral(params: &ModelParams, b: f64, s: f64) -> f64 {
    let (r, c) = (params.r(), params.c());
    let lambda = fkpp_lambda(r, c);
    let f = |y: f64| {
        let v = hat_v0(y, params);
        v * (1.0 - v) * fast_profile(y + s, b, c).1
    };
    let mut y_left = 10.0 / lambda;
    while f(-y_left) / lambda > 1e-10 {
        y_left *= 2.0;
    }
    let mut y_right = 10.0 / c;
    while f(y_right) / c > 1e-10 {
        y_right *= 2.0;
    }
    let (left, _) = quad::integrate(f, -y_left, 0.0, 1e-14, 1e-12);
    let (right, _) = quad::integrate(f, 0.0, y_right, 1e-14, 1e-12);
    r * (left + right)
}

/// Fix the calibration constant from the speed relation
/// `r \int v0_hat (1 - v0_hat)(1 - u0) dy = c`.
pub fn calibrate_alpha(params: &ModelParams) -> Result<SlowFrontApprox> {
    check_weak_damping(params)?;
    let b = b_of(params)?;
    let c = params.c();
    let g = |s: f64| speed_integral(params, b, s) - c;
    let mut lo = -1.0;
    let mut hi = 1.0;
    let mut tries = 0;
    while g(lo) < 0.0 {
        lo *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(FrontError::CalibrationFailed(
                "speed integral stays below c for every shift".into(),
            ));
        }
    }
    while g(hi) > 0.0 {
        hi *= 2.0;
        tries += 1;
        if tries > 120 {
            return Err(FrontError::CalibrationFailed("speed integral does not fall below c".into()));
        }
    }
    let shift = brent(g, lo, hi, 1e-13, 200)
        .ok_or_else(|| FrontError::CalibrationFailed("no sign change in bracket".into()))?;
    Ok(with_shift(params, b, shift))
}

/// Approximation with a manually chosen calibration constant.
pub fn with_alpha(params: &ModelParams, alpha_cal: f64) -> Result<SlowFrontApprox> {
    check_weak_damping(params)?;
    if !(alpha_cal > 0.0) {
        return Err(FrontError::InvalidInput(format!("alpha must be positive, got {alpha_cal}")));
    }
    let b = b_of(params)?;
    Ok(with_shift(params, b, params.c() / b * alpha_cal.ln()))
}

fn with_shift(params: &ModelParams, b: f64, shift: f64) -> SlowFrontApprox {
    let c = params.c();
    let kappa = shift + c / b * ((1.0 + b) / b).ln();
    let mut approx = SlowFrontApprox {
        b,
        alpha_cal: (b * shift / c).exp(),
        shift,
        kappa,
        xi_star: 0.0,
        lambda: fkpp_lambda(params.r(), c),
        params: *params,
    };
    let mut lo = kappa.min(0.0) - 1.0;
    while approx.phi(lo) > 0.0 {
        lo *= 2.0;
    }
    let mut hi = -1e-300;
    while approx.phi(hi) < 0.0 {
        hi *= 0.5;
    }
    approx.xi_star = brent(|x| approx.phi(x), lo, hi, 1e-15, 300).unwrap_or(hi);
    approx
}

/// One point of the sharp profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpPoint {
    pub xi: f64,
    pub u0: f64,
    pub one_minus_u0: f64,
    pub v0: f64,
    /// Desingularized coordinate `Phi(xi)`.
    pub y: f64,
}

impl SlowFrontApprox {
    fn rate(&self) -> f64 {
        self.b / self.params.c()
    }

    /// `Phi(xi) = xi - (c/(1+b)) ln(1 - e^{b xi/c}) - kappa` for `xi < 0`.
    pub fn phi(&self, xi: f64) -> f64 {
        let c = self.params.c();
        xi - c / (1.0 + self.b) * (-(self.rate() * xi).exp_m1()).ln() - self.kappa
    }

    /// Point with `q = 1 - e^{b xi/c}` in `(0, 1)`; resolves the edge at
    /// `xi -> 0-` where `xi` itself underflows.
    pub fn point_from_gap(&self, q: f64) -> SharpPoint {
        let (b, c) = (self.b, self.params.c());
        self.assemble(c / b * (-q).ln_1p(), q)
    }

    pub fn point(&self, xi: f64) -> Result<SharpPoint> {
        if !(xi < 0.0) {
            return Err(FrontError::InvalidInput(format!("sharp profile needs xi < 0, got {xi}")));
        }
        Ok(self.assemble(xi, -(self.rate() * xi).exp_m1()))
    }

    fn assemble(&self, xi: f64, q: f64) -> SharpPoint {
        let (b, c) = (self.b, self.params.c());
        let y = xi - c / (1.0 + b) * q.ln() - self.kappa;
        SharpPoint {
            xi,
            u0: b * (1.0 - q) / (b + q),
            one_minus_u0: (1.0 + b) * q / (b + q),
            v0: hat_v0(y, &self.params),
            y,
        }
    }

    /// `xi` at which `U0 = 1/2`.
    pub fn xi_half(&self) -> f64 {
        let b = self.b;
        self.params.c() / b * ((1.0 + b) / (1.0 + 2.0 * b)).ln()
    }
}

/// `(U0, V0)` on a strictly negative grid.
pub fn sharp_profile(approx: &SlowFrontApprox, xi_grid: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let pts = xi_grid
        .iter()
        .map(|&x| approx.point(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(pts.iter().map(|p| (p.u0, p.v0)).unzip())
}

/// Default grid for the sharp profile: uniform where `U0` varies, plus a
/// geometric approach to the edge.
pub fn sharp_curve(approx: &SlowFrontApprox, n: usize) -> Vec<SharpPoint> {
    let c = approx.params.c();
    let left = approx.xi_star.min(approx.xi_half()) - 30.0 * c.max(1.0 / approx.lambda);
    let mut pts: Vec<SharpPoint> = (0..n)
        .map(|i| left * (1.0 - i as f64 / n as f64))
        .filter_map(|x| approx.point(x).ok())
        .collect();
    let q_edge = pts.last().map(|p| -(approx.rate() * p.xi).exp_m1()).unwrap_or(1.0);
    let mut q = q_edge;
    while q > 1e-280 {
        q *= 0.5;
        pts.push(approx.point_from_gap(q));
    }
    pts
}

/// Flatness of `phi0(V) = 1 - U0` at `V = 0`: `phi0 ~ beta_term * V^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flatness {
    /// `(1 + b) / c^2`
    pub m: f64,
    /// `beta` with `beta^b = b / ((b + 1) alpha^{1+b})`
    pub beta: f64,
    /// `(V0, 1 - U0)` sorted by `V0`.
    pub curve: Vec<(f64, f64)>,
}

pub fn phi0_flatness(approx: &SlowFrontApprox) -> Flatness {
    let b = approx.b;
    let c = approx.params.c();
    let ln_alpha = b * approx.shift / c;
    let ln_beta = (b.ln() - (1.0 + b).ln() - (1.0 + b) * ln_alpha) / b;
    let mut curve: Vec<(f64, f64)> = sharp_curve(approx, 2000)
        .iter()
        .map(|p| (p.v0, p.one_minus_u0))
        .collect();
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    curve.dedup_by(|a, b| a.0 == b.0);
    Flatness {
        m: (1.0 + b) / (c * c),
        beta: ln_beta.exp(),
        curve,
    }
}

/// Bounds on the minimal speed of `V_t = (D V^m V_x)_x + r V (1 - V)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimalSpeedBounds {
    pub lower: f64,
    pub upper: f64,
    /// Large-`m` estimate `sqrt(2 D r) / m`.
    pub large_m: f64,
}

pub fn scalar_minimal_speed_bounds(diffusivity: f64, r: f64, m: f64) -> Result<MinimalSpeedBounds> {
    if !(diffusivity > 0.0 && r > 0.0 && m >= 1.0) {
        return Err(FrontError::InvalidInput(format!(
            "need D > 0, r > 0, m >= 1; got D = {diffusivity}, r = {r}, m = {m}"
        )));
    }
    let k = 2.0 * diffusivity * r;
    Ok(MinimalSpeedBounds {
        lower: k / ((m + 1.0) * (m + 2.0)),
        upper: k / (m * (m + 1.0)),
        large_m: k.sqrt() / m,
    })
}

/// Distance between a computed front and the sharp profile after aligning
/// their `U = 1/2` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpComparison {
    /// `sup |V - V0|` where `1 - U0 >= layer`
    pub sup_v: f64,
    /// `sup |U - U0|` over the same window
    pub sup_u: f64,
    /// `sup |V - V0|` over all `xi < 0`, inner layer included
    pub sup_v_full: f64,
    pub layer: f64,
}

/// Compare outside the inner layer `1 - U0 < layer` at `xi -> 0-`, where both
/// profiles drop through a near-vertical wall and pointwise differences are
/// dominated by sub-grid misalignment. `layer = c` is the default window.
pub fn sharp_front_distance(approx: &SlowFrontApprox, front: &FrontProfile, layer: f64) -> SharpComparison {
    let offset = approx.xi_half();
    let mut out = SharpComparison {
        sup_v: 0.0,
        sup_u: 0.0,
        sup_v_full: 0.0,
        layer,
    };
    for p in sharp_curve(approx, 4000) {
        let (u, v) = front.interpolate(p.xi - offset);
        let dv = (v - p.v0).abs();
        out.sup_v_full = out.sup_v_full.max(dv);
        if p.one_minus_u0 >= layer {
            out.sup_v = out.sup_v.max(dv);
            out.sup_u = out.sup_u.max((u - p.u0).abs());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(d: f64, r: f64, c: f64) -> ModelParams {
        ModelParams::new(d, r, c).unwrap()
    }

    #[test]
    fn hat_v0_continuity_and_slopes() {
        let params = p(2.0, 1.0, 0.2);
        let lambda = fkpp_lambda(1.0, 0.2);
        assert_relative_eq!(lambda, 0.904988, epsilon = 1e-6);
        let left = 1.0 - 0.2 / (0.2 + lambda);
        let right = lambda / (0.2 + lambda);
        assert_relative_eq!(left, right, epsilon = 1e-15);
        assert_relative_eq!(hat_v0(0.0, &params), 0.8190025, epsilon = 1e-6);
        let h = 1e-7;
        let dl = (hat_v0(0.0, &params) - hat_v0(-h, &params)) / h;
        let dr = (hat_v0(h, &params) - hat_v0(0.0, &params)) / h;
        let expect = -0.2 * lambda / (0.2 + lambda);
        assert_relative_eq!(dl, expect, epsilon = 1e-6);
        assert_relative_eq!(dr, expect, epsilon = 1e-6);
    }

    #[test]
    fn fkpp_matching_identity() {
        let params = p(2.0, 1.0, 0.2);
        let grid: Vec<f64> = (-200..=200).map(|i| i as f64 * 0.1).collect();
        let v0 = fkpp_v0(&params, &grid).unwrap();
        assert!((v0.slope_left + 0.2 * v0.v0_at_zero).abs() < 1e-12);
        let lambda = fkpp_lambda(1.0, 0.2);
        assert!((v0.v0_at_zero - (1.0 - 0.2 / (0.2 + lambda))).abs() <= 2.0 * 0.04);
        assert!(v0.samples.windows(2).all(|w| w[1].1 < w[0].1));
    }

    #[test]
    fn fkpp_rejects_strong_damping() {
        assert!(fkpp_v0(&p(2.0, 1.0, 2.0), &[0.0]).is_err());
    }

    #[test]
    fn b_value_at_small_speed() {
        let approx = calibrate_alpha(&p(2.0, 1.0, 0.2)).unwrap();
        assert_relative_eq!(approx.b, 2.0 * 0.8190025 - 1.0, epsilon = 2e-6);
        assert!(approx.xi_star < 0.0);
        assert!(approx.kappa.is_finite());
        let resid = (speed_integral(&approx.params, approx.b, approx.shift) - 0.2).abs() / 0.2;
        assert!(resid <= 1e-8, "calibration residual {resid}");
    }

    #[test]
    fn fast_profile_limits_and_shift() {
        let params = p(2.0, 1.0, 0.2);
        let approx = with_alpha(&params, 1.0).unwrap();
        let (b, c) = (approx.b, 0.2);
        // left asymptote alpha e^{b y / c}
        let y = -6.0;
        let u = solve_u0(y, &approx);
        assert_relative_eq!(u, (b * y / c).exp(), max_relative = 1e-6);
        assert!(solve_u0(5.0, &approx) > 1.0 - 1e-12);
        let doubled = with_alpha(&params, 2.0).unwrap();
        for y in [-1.0, -0.3, 0.0, 0.4] {
            let a = solve_u0(y, &doubled);
            let bb = solve_u0(y + c / b * 2f64.ln(), &approx);
            assert_relative_eq!(a, bb, max_relative = 1e-11);
        }
    }

    #[test]
    fn sharp_profile_edges() {
        let approx = calibrate_alpha(&p(2.0, 1.0, 0.2)).unwrap();
        let (u, _) = sharp_profile(&approx, &[-1e-12, -50.0]).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-9);
        assert!(u[1] < 1e-12);
        assert!(sharp_profile(&approx, &[0.0]).is_err());
        let b = 0.638;
        let xi = 0.2 / b * 0.5f64.ln();
        let probe = SlowFrontApprox { b, ..approx };
        assert_relative_eq!(probe.point(xi).unwrap().u0, 0.2804, epsilon = 1e-4);
    }

    #[test]
    fn u0_matches_fast_relation_through_phi() {
        let approx = calibrate_alpha(&p(2.0, 1.0, 0.2)).unwrap();
        for xi in [-3.0, -1.0, -0.3, -0.05] {
            let pt = approx.point(xi).unwrap();
            assert_relative_eq!(solve_u0(pt.y, &approx), pt.u0, max_relative = 1e-9);
        }
    }

    #[test]
    fn flatness_exponent() {
        let approx = calibrate_alpha(&p(2.0, 1.0, 0.2)).unwrap();
        let fl = phi0_flatness(&approx);
        assert!((fl.m - 40.95).abs() < 0.01);
        assert!(fl.beta > 0.0);
    }

    #[test]
    fn u0_free_of_calibration_constant() {
        let params = p(2.0, 1.0, 0.2);
        let a = with_alpha(&params, 0.3).unwrap();
        let b = with_alpha(&params, 3.0).unwrap();
        let grid = [-2.0, -0.5, -0.1, -0.01];
        assert_eq!(sharp_profile(&a, &grid).unwrap().0, sharp_profile(&b, &grid).unwrap().0);
        assert!((a.xi_star - b.xi_star).abs() > 1e-3);
    }

    #[test]
    fn phi_slope_is_inverse_complement() {
        let approx = calibrate_alpha(&p(2.0, 1.0, 0.4)).unwrap();
        let h = 1e-6;
        for xi in [-2.0, -0.7, -0.2, -0.05] {
            let fd = (approx.phi(xi + h) - approx.phi(xi - h)) / (2.0 * h);
            let pt = approx.point(xi).unwrap();
            assert_relative_eq!(fd, 1.0 / pt.one_minus_u0, max_relative = 1e-4);
            assert!(fd > 0.0);
        }
    }

    #[test]
    fn minimal_speed_bounds() {
        let bd = scalar_minimal_speed_bounds(1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(bd.lower, 1.0 / 3.0);
        assert_relative_eq!(bd.upper, 1.0);
        assert!(scalar_minimal_speed_bounds(1.0, 1.0, 0.5).is_err());
    }
}
