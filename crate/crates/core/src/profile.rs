//! Physical front profile from a connecting trajectory, and its diagnostics.
//!
//! The comoving coordinate is recovered from `d xi / d y = 1 - u`, with the
//! part of the integral before the seeding point taken from the manifold
//! expansion.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::desing::Trajectory;
use crate::error::{FrontError, Result};
use crate::model::{compute_rates, ModelParams, Regime};

/// Largest `y` spacing of the reconstructed grid.
pub const MAX_GRID_DY: f64 = 0.05;
/// Left-tail fits use samples whose fitted quantity is below this.
pub const LEFT_BAND: f64 = 1e-4;
/// Tails must satisfy `V (1 - V)` below this at both ends for the speed
/// integral.
pub const TAIL_INTEGRAND_LIMIT: f64 = 5e-2;

/// Least-squares exponential rate over a window of samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub rate: f64,
    /// RMS residual of the log-linear fit.
    pub residual: f64,
    /// Abscissa range of the window.
    pub window: (f64, f64),
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub speed_residual: Option<f64>,
    /// Rate of `1 - U` at the right end (expected `-r/c`).
    pub tail_gamma_fit: Option<TailFit>,
    /// Rate of `1 - V` at the left end, per unit `y` (expected `lambda`).
    pub tail_lambda_fit: Option<TailFit>,
    /// Rate of `U - U_left` at the left end, per unit `y` (expected `mu`).
    pub tail_mu_fit: Option<TailFit>,
    /// Median of `V / (1 - U)` at the right end (expected `(r + 1)/d`).
    pub tail_ratio_fit: Option<f64>,
    pub center_manifold_residual: Option<f64>,
}

/// Front in the comoving coordinate `xi`, normalized so that `U` crosses
/// the midpoint of its range at `xi = 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontProfile {
    pub xi: Vec<f64>,
    /// Healthy-cell density `U(xi)`.
    pub u: Vec<f64>,
    /// Tumor density `V(xi)`.
    pub v: Vec<f64>,
    /// Desingularized coordinate of every sample.
    pub y: Vec<f64>,
    pub one_minus_u: Vec<f64>,
    pub one_minus_v: Vec<f64>,
    /// `U - U_left`
    pub u_offset: Vec<f64>,
    pub params: ModelParams,
    pub diagnostics: Diagnostics,
}

impl FrontProfile {
    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    /// Linear interpolation of `(U, V)` at `x`, clamped to the end values.
    pub fn interpolate(&self, x: f64) -> (f64, f64) {
        let n = self.xi.len();
        if x <= self.xi[0] {
            return (self.u[0], self.v[0]);
        }
        if x >= self.xi[n - 1] {
            return (self.u[n - 1], self.v[n - 1]);
        }
        let i = self.xi.partition_point(|&t| t <= x);
        let (x0, x1) = (self.xi[i - 1], self.xi[i]);
        let t = (x - x0) / (x1 - x0);
        (
            self.u[i - 1] + t * (self.u[i] - self.u[i - 1]),
            self.v[i - 1] + t * (self.v[i] - self.v[i - 1]),
        )
    }

    fn right_window(&self) -> Range<usize> {
        let n = self.len();
        let end = n.saturating_sub(2);
        (n - n / 4).min(end)..end
    }

    /// First samples with `q` in `(0, LEFT_BAND]`, skipping the first two.
    fn left_window(&self, q: &[f64]) -> Range<usize> {
        let start = 2.min(q.len());
        let mut end = start;
        while end < q.len() && q[end] > 0.0 && q[end] <= LEFT_BAND {
            end += 1;
        }
        start..end
    }
}

/// Manifold contribution `\int_{-inf}^{y_start} (u - u_left) dy`.
fn seed_tail(traj: &Trajectory) -> f64 {
    let params = &traj.params;
    let k = compute_rates(params);
    let y = traj.y_start;
    let Some(alpha) = traj.seed.alpha else {
        return traj.seed.u_offset() / k.mu;
    };
    let emu = (k.mu * y).exp();
    match params.regime() {
        Regime::Homogeneous => alpha * emu / k.mu,
        Regime::Heterogeneous if k.degenerate => {
            alpha * emu / k.mu - params.d() * emu * (y - 1.0 / k.mu)
        }
        Regime::Heterogeneous => {
            let coupling = params.d() * k.mu / (k.mu - k.lambda);
            alpha * emu / k.mu + coupling * ((k.lambda * y).exp() / k.lambda - emu / k.mu)
        }
    }
}

/// Map a connecting trajectory to `(xi, U, V)` and run the diagnostics that
/// apply. Diagnostics whose preconditions fail are left empty.
pub fn reconstruct(traj: &Trajectory, params: &ModelParams) -> Result<FrontProfile> {
    if traj.samples.iter().any(|s| !(s.one_minus_u > 0.0)) {
        return Err(FrontError::InvalidInput("trajectory reaches u >= 1; xi map not invertible".into()));
    }
    let lead = match params.regime() {
        Regime::Homogeneous => 1.0,
        Regime::Heterogeneous => params.d(),
    };
    let xi_start = lead * traj.y_start - seed_tail(traj);
    let dense = traj.refined_samples(MAX_GRID_DY);

    let mut prof = FrontProfile {
        xi: Vec::with_capacity(dense.len()),
        u: Vec::with_capacity(dense.len()),
        v: Vec::with_capacity(dense.len()),
        y: Vec::with_capacity(dense.len()),
        one_minus_u: Vec::with_capacity(dense.len()),
        one_minus_v: Vec::with_capacity(dense.len()),
        u_offset: Vec::with_capacity(dense.len()),
        params: *params,
        diagnostics: Diagnostics::default(),
    };
    for (s, acc) in &dense {
        let xi = xi_start + acc;
        if let Some(&prev) = prof.xi.last() {
            if !(xi > prev) {
                continue;
            }
        }
        prof.xi.push(xi);
        prof.u.push(s.state.u);
        prof.v.push(s.state.v);
        prof.y.push(s.y);
        prof.one_minus_u.push(s.one_minus_u);
        prof.one_minus_v.push(s.one_minus_v);
        prof.u_offset.push(s.u_offset);
    }

    let mid = 0.5 * (1.0 + params.u_left());
    let i = prof
        .u
        .iter()
        .position(|&u| u >= mid)
        .filter(|&i| i > 0)
        .ok_or_else(|| FrontError::InvalidInput("U never crosses the midpoint of its range".into()))?;
    let t = (mid - prof.u[i - 1]) / (prof.u[i] - prof.u[i - 1]);
    let shift = prof.xi[i - 1] + t * (prof.xi[i] - prof.xi[i - 1]);
    for x in &mut prof.xi {
        *x -= shift;
    }

    prof.diagnostics = Diagnostics {
        speed_residual: speed_residual(&prof).ok(),
        tail_gamma_fit: right_tail_fit(&prof).ok(),
        tail_lambda_fit: left_lambda_fit(&prof).ok(),
        tail_mu_fit: left_mu_fit(&prof).ok(),
        tail_ratio_fit: tail_ratio(&prof).ok(),
        center_manifold_residual: center_tail_check(traj, params).ok().map(|c| c.manifold_residual),
    };
    Ok(prof)
}

/// `|r \int V (1 - V) dxi - c| / c` by the trapezoid rule plus exponential
/// tail corrections at both ends.
pub fn speed_residual(profile: &FrontProfile) -> Result<f64> {
    let n = profile.len();
    if n < 2 {
        return Err(FrontError::TailsNotResolved("profile has fewer than two samples".into()));
    }
    let params = &profile.params;
    let g = |i: usize| profile.v[i] * profile.one_minus_v[i];
    if g(0) >= TAIL_INTEGRAND_LIMIT || g(n - 1) >= TAIL_INTEGRAND_LIMIT {
        return Err(FrontError::TailsNotResolved(format!(
            "V(1-V) = {:.3e} (left), {:.3e} (right)",
            g(0),
            g(n - 1)
        )));
    }
    let mut integral = 0.0;
    for i in 1..n {
        integral += 0.5 * (g(i - 1) + g(i)) * (profile.xi[i] - profile.xi[i - 1]);
    }
    let k = compute_rates(params);
    let left_rate = match params.regime() {
        Regime::Homogeneous => k.lambda,
        Regime::Heterogeneous => k.lambda / params.d(),
    };
    integral += g(0) / left_rate + g(n - 1) / k.gamma;
    let c = params.c();
    Ok((params.r() * integral - c).abs() / c)
}

/// Least-squares slope of `ln ys` against `xs` over `window`.
pub fn fit_tail_exponent(xs: &[f64], ys: &[f64], window: Range<usize>) -> Result<TailFit> {
    if window.end > xs.len() || window.end > ys.len() || window.len() < 10 {
        return Err(FrontError::TailsNotResolved(format!(
            "fit window {window:?} needs at least 10 points inside the data"
        )));
    }
    let xw = &xs[window.clone()];
    let yw = &ys[window.clone()];
    if let Some(bad) = yw.iter().find(|&&y| !(y > 0.0)) {
        return Err(FrontError::InvalidInput(format!("nonpositive sample {bad} in fit window")));
    }
    let n = xw.len() as f64;
    let ly: Vec<f64> = yw.iter().map(|y| y.ln()).collect();
    let mx = xw.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = xw.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xw.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(FrontError::InvalidInput("fit window has no spread in x".into()));
    }
    let rate = sxy / sxx;
    let rss: f64 = xw
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - my - rate * (x - mx)).powi(2))
        .sum();
    Ok(TailFit {
        rate,
        residual: (rss / n).sqrt(),
        window: (xw[0], xw[xw.len() - 1]),
        n: xw.len(),
    })
}

/// Rate of `1 - U` in `xi` over the right window.
pub fn right_tail_fit(profile: &FrontProfile) -> Result<TailFit> {
    fit_tail_exponent(&profile.xi, &profile.one_minus_u, profile.right_window())
}

fn left_scale(profile: &FrontProfile) -> f64 {
    match profile.params.regime() {
        Regime::Homogeneous => 1.0,
        Regime::Heterogeneous => profile.params.d(),
    }
}

/// Rate of `1 - V` over the left band, per unit `y` (`xi` rate times `d`
/// in the heterogeneous regime).
pub fn left_lambda_fit(profile: &FrontProfile) -> Result<TailFit> {
    let w = profile.left_window(&profile.one_minus_v);
    let mut fit = fit_tail_exponent(&profile.xi, &profile.one_minus_v, w)?;
    fit.rate *= left_scale(profile);
    Ok(fit)
}

/// Rate of `U - U_left` over the left band, per unit `y`.
pub fn left_mu_fit(profile: &FrontProfile) -> Result<TailFit> {
    let w = profile.left_window(&profile.u_offset);
    let mut fit = fit_tail_exponent(&profile.xi, &profile.u_offset, w)?;
    fit.rate *= left_scale(profile);
    Ok(fit)
}

/// Median of `V / (1 - U)` over the right window; tends to `(r + 1)/d`.
pub fn tail_ratio(profile: &FrontProfile) -> Result<f64> {
    let w = profile.right_window();
    if w.len() < 3 {
        return Err(FrontError::TailsNotResolved("right window too short".into()));
    }
    let mut ratios: Vec<f64> = w.map(|i| profile.v[i] / profile.one_minus_u[i]).collect();
    if ratios.iter().any(|q| !q.is_finite()) {
        return Err(FrontError::TailsNotResolved("1 - U vanished in the right window".into()));
    }
    ratios.sort_by(f64::total_cmp);
    let m = ratios.len();
    Ok(if m % 2 == 1 {
        ratios[m / 2]
    } else {
        0.5 * (ratios[m / 2 - 1] + ratios[m / 2])
    })
}

/// Pairs `(V, 1 - U)` sorted by `V`: the effective diffusion `phi` with
/// `1 - U = phi(V)` along the front.
pub fn effective_diffusion(profile: &FrontProfile) -> Vec<(f64, f64)> {
    let mut pairs: Vec<(f64, f64)> = profile
        .v
        .iter()
        .zip(&profile.one_minus_u)
        .map(|(&v, &p)| (v, p))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.dedup_by(|a, b| a.0 == b.0);
    pairs
}

/// Center-manifold tail at the end of a connecting trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterTailReport {
    pub y_end: f64,
    /// `(1 - u) y` at `y_end`
    pub complement_product: f64,
    /// `c / r`
    pub complement_expected: f64,
    /// `(v + w/c) y` at `y_end`
    pub lead_product: f64,
    /// `c (1 + r) / (d r)`
    pub lead_expected: f64,
    /// Worst relative residual of `w/c = -(r/c^2)(1 - u)(v + w/c)` over the
    /// last tenth of `[0, y_end]`.
    pub manifold_residual: f64,
    /// `y0` with `1 - u = c / (r (y_end - y0))`: the effective origin of the
    /// algebraic tail.
    pub complement_origin: f64,
}

impl CenterTailReport {
    pub fn complement_deviation(&self) -> f64 {
        (self.complement_product / self.complement_expected - 1.0).abs()
    }

    pub fn lead_deviation(&self) -> f64 {
        (self.lead_product / self.lead_expected - 1.0).abs()
    }

    /// Largest of the three relative deviations.
    pub fn worst(&self) -> f64 {
        self.complement_deviation()
            .max(self.lead_deviation())
            .max(self.manifold_residual)
    }
}

pub fn center_tail_check(traj: &Trajectory, params: &ModelParams) -> Result<CenterTailReport> {
    let c = params.c();
    let r = params.r();
    let y_end = traj.y_end;
    if y_end < 50.0 / c {
        return Err(FrontError::TailsNotResolved(format!(
            "y_end = {y_end} below 50/c = {}",
            50.0 / c
        )));
    }
    let last = traj.last();
    if !(last.one_minus_u > 0.0 && last.state.v > 0.0) {
        return Err(FrontError::TailsNotResolved("trajectory left the admissible region".into()));
    }
    let lead = |s: &crate::desing::Sample| s.state.v + s.state.w / c;
    let mut manifold: f64 = 0.0;
    for s in traj.samples.iter().filter(|s| s.y >= 0.9 * y_end) {
        let lhs = s.state.w / c;
        let rhs = -(r / (c * c)) * s.one_minus_u * lead(s);
        manifold = manifold.max(((lhs - rhs) / lhs).abs());
    }
    Ok(CenterTailReport {
        y_end,
        complement_product: last.one_minus_u * y_end,
        complement_expected: c / r,
        lead_product: lead(last) * y_end,
        lead_expected: c * (1.0 + r) / (params.d() * r),
        manifold_residual: manifold,
        complement_origin: y_end - c / (r * last.one_minus_u),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn synthetic(params: ModelParams, n: usize, f: impl Fn(f64) -> (f64, f64)) -> FrontProfile {
        let xi: Vec<f64> = (0..n).map(|i| -20.0 + 40.0 * i as f64 / (n - 1) as f64).collect();
        let (u, v): (Vec<f64>, Vec<f64>) = xi.iter().map(|&x| f(x)).unzip();
        FrontProfile {
            one_minus_u: u.iter().map(|u| 1.0 - u).collect(),
            one_minus_v: v.iter().map(|v| 1.0 - v).collect(),
            u_offset: u.iter().map(|u| u - params.u_left()).collect(),
            y: xi.clone(),
            xi,
            u,
            v,
            params,
            diagnostics: Diagnostics::default(),
        }
    }

    #[test]
    fn exact_exponential_rate() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.3).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * (-0.7 * x).exp()).collect();
        let fit = fit_tail_exponent(&xs, &ys, 0..50).unwrap();
        assert_relative_eq!(fit.rate, -0.7, epsilon = 1e-12);
        assert!(fit.residual < 1e-12);
        assert_eq!(fit.n, 50);
    }

    #[test]
    fn fit_rejects_bad_windows() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let mut ys = vec![1.0; 20];
        assert!(fit_tail_exponent(&xs, &ys, 0..5).is_err());
        ys[3] = 0.0;
        assert!(fit_tail_exponent(&xs, &ys, 0..20).is_err());
    }

    #[test]
    fn zero_tumor_gives_unit_residual() {
        let params = ModelParams::new(2.0, 1.0, 0.5).unwrap();
        let prof = synthetic(params, 100, |x| (0.5 + 0.1 * x.tanh(), 0.0));
        assert_relative_eq!(speed_residual(&prof).unwrap(), 1.0);
    }

    #[test]
    fn unresolved_tail_rejected() {
        let params = ModelParams::new(2.0, 1.0, 0.5).unwrap();
        let prof = synthetic(params, 100, |_| (0.5, 0.5));
        assert!(matches!(speed_residual(&prof), Err(FrontError::TailsNotResolved(_))));
    }

    #[test]
    fn synthetic_tail_ratio_exact() {
        let params = ModelParams::new(2.0, 5.0, 0.5).unwrap();
        let gamma = 10.0;
        let beta = 0.3;
        let prof = synthetic(params, 400, |x| {
            let e = beta * (-gamma * (x + 20.0) / 40.0).exp();
            (1.0 - e, 3.0 * e)
        });
        assert_relative_eq!(tail_ratio(&prof).unwrap(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn effective_diffusion_sorted_pairs() {
        let params = ModelParams::new(2.0, 1.0, 0.5).unwrap();
        let prof = synthetic(params, 200, |x| (0.5 + 0.5 * x.tanh(), 0.5 - 0.5 * (2.0 * x).tanh()));
        let phi = effective_diffusion(&prof);
        assert!(phi.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
    }
}
