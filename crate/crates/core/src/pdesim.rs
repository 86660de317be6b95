//! Explicit finite differences for
//! `U_t = U(1 - U - d V)`, `V_t = ((1 - U) V_x)_x + r V (1 - V)`
//! with zero-flux ends.

use serde::{Deserialize, Serialize};

use crate::error::{FrontError, Result};
use crate::model::ModelParams;

/// Ceiling on initial `U`; the problem degenerates at `U = 1`.
pub const U_CEILING: f64 = 1.0 - 1e-6;
/// Fraction of the domain at each end the front must stay out of.
pub const BOUNDARY_BUFFER: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub dx: f64,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, nx: usize) -> Result<Self> {
        if nx < 16 || !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(FrontError::InvalidInput(format!(
                "grid needs nx >= 16 and x_min < x_max; got [{x_min}, {x_max}], nx = {nx}"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            nx,
            dx: (x_max - x_min) / (nx - 1) as f64,
        })
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldPair {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
    /// Largest correction applied by clamping to `[0, 1]` so far.
    pub clamped: f64,
}

impl FieldPair {
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != v.len() {
            return Err(FrontError::InvalidInput("U and V lengths differ".into()));
        }
        if u.iter().chain(&v).any(|x| !(0.0..=1.0).contains(x)) {
            return Err(FrontError::InvalidInput("fields must lie in [0, 1]".into()));
        }
        Ok(Self { u, v, t: 0.0, clamped: 0.0 })
    }

    /// `\int V dx` by the trapezoid rule.
    pub fn mass_v(&self, grid: &Grid1D) -> f64 {
        let n = self.v.len();
        grid.dx * (self.v.iter().sum::<f64>() - 0.5 * (self.v[0] + self.v[n - 1]))
    }
}

/// Left state for the regime, `(1, 0)` from `x0` on.
pub fn heaviside_initial(grid: &Grid1D, params: &ModelParams, x0: f64) -> FieldPair {
    let left = params.u_left();
    let (u, v) = (0..grid.nx)
        .map(|i| {
            if grid.x(i) < x0 {
                (left.min(U_CEILING), 1.0)
            } else {
                (U_CEILING, 0.0)
            }
        })
        .unzip();
    FieldPair { u, v, t: 0.0, clamped: 0.0 }
}

/// Largest stable explicit step for the current fields.
pub fn cfl_bound(fields: &FieldPair, grid: &Grid1D, params: &ModelParams) -> f64 {
    let diff = fields.u.iter().map(|u| (1.0 - u).max(0.0)).fold(0.0, f64::max);
    let reaction = 0.1 / params.r().max(params.d()).max(1.0);
    if diff > 0.0 {
        (0.4 * grid.dx * grid.dx / (2.0 * diff)).min(reaction)
    } else {
        reaction
    }
}

fn clamp_unit(x: f64, worst: &mut f64) -> f64 {
    let y = x.clamp(0.0, 1.0);
    *worst = worst.max((y - x).abs());
    y
}

/// One explicit step, in place.
pub fn advance(fields: &mut FieldPair, dt: f64, grid: &Grid1D, params: &ModelParams, flux: &mut Vec<f64>) -> Result<()> {
    let bound = cfl_bound(fields, grid, params);
    if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
        return Err(FrontError::CflViolation { dt, bound });
    }
    let n = fields.u.len();
    let (d, r) = (params.d(), params.r());
    let dx = grid.dx;
    flux.clear();
    flux.extend((0..n - 1).map(|i| {
        let mob = (1.0 - 0.5 * (fields.u[i] + fields.u[i + 1])).max(0.0);
        mob * (fields.v[i + 1] - fields.v[i]) / dx
    }));
    let mut worst = fields.clamped;
    for i in 0..n {
        let (u, v) = (fields.u[i], fields.v[i]);
        let right = if i + 1 < n { flux[i] } else { 0.0 };
        let left = if i > 0 { flux[i - 1] } else { 0.0 };
        fields.u[i] = clamp_unit(u + dt * u * (1.0 - u - d * v), &mut worst);
        fields.v[i] = clamp_unit(v + dt * ((right - left) / dx + r * v * (1.0 - v)), &mut worst);
    }
    fields.clamped = worst;
    fields.t += dt;
    Ok(())
}

pub fn step(fields: &FieldPair, dt: f64, grid: &Grid1D, params: &ModelParams) -> Result<FieldPair> {
    let mut next = fields.clone();
    advance(&mut next, dt, grid, params, &mut Vec::new())?;
    Ok(next)
}

/// Linearly interpolated first crossing of `V = 1/2` from the left.
pub fn front_position(fields: &FieldPair, grid: &Grid1D) -> Option<f64> {
    let v = &fields.v;
    let i = v.iter().position(|&x| x < 0.5)?;
    if i == 0 {
        return None;
    }
    let (a, b) = (v[i - 1], v[i]);
    Some(grid.x(i - 1) + grid.dx * (a - 0.5) / (a - b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Fraction of the stability bound used as step.
    pub safety: f64,
    /// Time between front-position records.
    pub frame_dt: f64,
    /// Keep a field snapshot every this many records; 0 keeps none.
    pub snapshot_every: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            safety: 0.9,
            frame_dt: 0.5,
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdeRun {
    pub fields: FieldPair,
    pub measured_speed: f64,
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub frames: Vec<FieldPair>,
}

pub fn run(initial: &FieldPair, t_end: f64, grid: &Grid1D, params: &ModelParams) -> Result<PdeRun> {
    run_with(initial, t_end, grid, params, &RunOptions::default())
}

pub fn run_with(
    initial: &FieldPair,
    t_end: f64,
    grid: &Grid1D,
    params: &ModelParams,
    opts: &RunOptions,
) -> Result<PdeRun> {
    if !(t_end > 0.0) {
        return Err(FrontError::InvalidInput(format!("t_end must be positive, got {t_end}")));
    }
    if initial.u.len() != grid.nx || initial.v.len() != grid.nx {
        return Err(FrontError::InvalidInput("field length differs from grid".into()));
    }
    if !(opts.safety > 0.0 && opts.safety <= 1.0 && opts.frame_dt > 0.0) {
        return Err(FrontError::InvalidInput("safety must be in (0, 1] and frame_dt positive".into()));
    }
    let buffer = BOUNDARY_BUFFER * grid.length();
    let (lo, hi) = (grid.x_min + buffer, grid.x_max - buffer);
    let mut fields = initial.clone();
    let mut flux = Vec::with_capacity(grid.nx);
    let mut out = PdeRun {
        fields: initial.clone(),
        measured_speed: f64::NAN,
        times: Vec::new(),
        positions: Vec::new(),
        frames: Vec::new(),
    };
    let t0 = fields.t;
    let mut frame = 0usize;
    loop {
        let t_frame = t0 + (frame as f64 * opts.frame_dt).min(t_end);
        while fields.t < t_frame {
            let dt = (opts.safety * cfl_bound(&fields, grid, params)).min(t_frame - fields.t);
            advance(&mut fields, dt, grid, params, &mut flux)?;
            if t_frame - fields.t < 1e-12 * t_end {
                fields.t = t_frame;
            }
        }
        if let Some(x) = front_position(&fields, grid) {
            if x < lo || x > hi {
                return Err(FrontError::FrontHitBoundary { t: fields.t, position: x });
            }
            out.times.push(fields.t);
            out.positions.push(x);
        }
        let last = fields.t >= t0 + t_end;
        if opts.snapshot_every > 0 && (frame % opts.snapshot_every == 0 || last) {
            out.frames.push(fields.clone());
        }
        if last {
            break;
        }
        frame += 1;
    }
    let half = t0 + 0.5 * t_end;
    let pts: Vec<(f64, f64)> = out
        .times
        .iter()
        .zip(&out.positions)
        .filter(|(t, _)| **t >= half)
        .map(|(t, x)| (*t, *x))
        .collect();
    out.measured_speed = least_squares_slope(&pts);
    out.fields = fields;
    Ok(out)
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mx)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams::new(2.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn grid_spacing_and_guard() {
        let g = Grid1D::new(-100.0, 100.0, 2001).unwrap();
        assert!((g.dx - 0.1).abs() < 1e-15);
        assert!(Grid1D::new(0.0, 1.0, 8).is_err());
    }

    #[test]
    fn heaviside_states() {
        let g = Grid1D::new(-10.0, 10.0, 201).unwrap();
        let f = heaviside_initial(&g, &params(), 0.0);
        assert_eq!((f.u[0], f.v[0]), (0.0, 1.0));
        assert_eq!((f.u[200], f.v[200]), (U_CEILING, 0.0));
        assert_eq!(f.v[99], 1.0);
        assert_eq!(f.v[100], 0.0);
        let het = ModelParams::new(0.5, 1.0, 1.0).unwrap();
        let f = heaviside_initial(&g, &het, 0.0);
        assert_eq!((f.u[0], f.v[0]), (0.5, 1.0));
    }

    #[test]
    fn uniform_equilibrium_is_fixed() {
        let g = Grid1D::new(0.0, 10.0, 101).unwrap();
        let f = FieldPair::new(vec![1.0; 101], vec![0.0; 101]).unwrap();
        let next = step(&f, 1e-3, &g, &params()).unwrap();
        assert_eq!(next.u, f.u);
        assert_eq!(next.v, f.v);
        let near = FieldPair::new(vec![U_CEILING; 101], vec![0.0; 101]).unwrap();
        let out = run(&near, 1.0, &g, &params());
        // no V = 1/2 crossing, so no tracked front
        let out = out.unwrap();
        assert!(out.fields.u.iter().all(|u| (u - U_CEILING).abs() < 1e-5));
    }

    #[test]
    fn flux_conserves_mass() {
        let g = Grid1D::new(-10.0, 10.0, 201).unwrap();
        let p = params();
        let f = heaviside_initial(&g, &p, 0.0);
        let dt = 0.5 * cfl_bound(&f, &g, &p);
        let next = step(&f, dt, &g, &p).unwrap();
        let reaction: f64 = (0..g.nx)
            .map(|i| {
                let w = if i == 0 || i == g.nx - 1 { 0.5 } else { 1.0 };
                w * p.r() * f.v[i] * (1.0 - f.v[i])
            })
            .sum::<f64>()
            * g.dx;
        // flux telescopes; only the end weights of the trapezoid break exactness
        let dm = next.mass_v(&g) - f.mass_v(&g);
        assert!((dm - dt * reaction).abs() < 1e-3 * dt);
    }

    #[test]
    fn full_tumor_blocks_diffusion() {
        // U = 1 erodes where V > 0, so the block only shields what lies
        // beyond it until the front has eaten through
        let g = Grid1D::new(0.0, 20.0, 201).unwrap();
        let u: Vec<f64> = (0..201).map(|i| if (50..150).contains(&i) { 1.0 } else { 0.0 }).collect();
        let v: Vec<f64> = (0..201).map(|i| if i < 50 { 1.0 } else { 0.0 }).collect();
        let mut f = FieldPair::new(u, v).unwrap();
        let p = params();
        let mut flux = Vec::new();
        while f.t < 2.0 {
            let dt = 0.9 * cfl_bound(&f, &g, &p);
            advance(&mut f, dt, &g, &p, &mut flux).unwrap();
        }
        assert!(f.v[50] > 0.0);
        assert!(f.v[100..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cfl_violation_rejected() {
        let g = Grid1D::new(-10.0, 10.0, 201).unwrap();
        let p = params();
        let f = heaviside_initial(&g, &p, 0.0);
        let bound = cfl_bound(&f, &g, &p);
        assert!(matches!(step(&f, 2.0 * bound, &g, &p), Err(FrontError::CflViolation { .. })));
    }

    #[test]
    fn boundary_hit_reported() {
        let g = Grid1D::new(-10.0, 10.0, 201).unwrap();
        let p = ModelParams::new(2.0, 1.0, 1.0).unwrap();
        let f = heaviside_initial(&g, &p, 7.5);
        assert!(matches!(run(&f, 50.0, &g, &p), Err(FrontError::FrontHitBoundary { .. })));
    }

    #[test]
    fn slope_of_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 * i as f64 + 1.0)).collect();
        assert!((least_squares_slope(&pts) - 3.0).abs() < 1e-12);
    }
}
