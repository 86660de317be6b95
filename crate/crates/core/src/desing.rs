//! Desingularized traveling-wave system in the stretched coordinate `y`:
//!
//! ```text
//! c u' = -u (1 - u) (1 - u - d v)
//!   v' = w
//!   w' = -c w - r v (1 - u) (1 - v)
//! ```
//!
//! Seeding on the unstable manifold of the left state and event-aware
//! integration. Internally each of `u` and `v` is carried in a chart that
//! keeps its small deviation from the nearer end state, so that quantities
//! like `1 - v ~ 1e-8` at the seed or `1 - u ~ 1e-8` far down the tail keep
//! full relative precision.

use serde::{Deserialize, Serialize};

use crate::error::{FrontError, Result};
use crate::model::{compute_rates, ModelParams, Regime};
use crate::ode::{DenseStep, StepConfig, Stepper};
use crate::roots::bisect;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl State {
    pub fn new(u: f64, v: f64, w: f64) -> Self {
        Self { u, v, w }
    }
}

/// Vector field of the desingularized system; the result holds
/// `(du/dy, dv/dy, dw/dy)`.
pub fn rhs(state: &State, params: &ModelParams) -> State {
    let (d, r, c) = (params.d(), params.r(), params.c());
    let State { u, v, w } = *state;
    State {
        u: -u * (1.0 - u) * (1.0 - u - d * v) / c,
        v: w,
        w: -c * w - r * v * (1.0 - u) * (1.0 - v),
    }
}

/// Integration and event tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSet {
    pub rtol: f64,
    /// Absolute floor of the error weights. Every charted variable tends to
    /// zero at one end of the orbit, so the default leaves control relative.
    pub atol: f64,
    /// Width in `y` to which event locations are refined.
    pub event: f64,
    pub min_step: f64,
    /// Size of the leading correction term at the seeding point.
    pub eps_seed: f64,
}

impl Default for ToleranceSet {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 0.0,
            event: 1e-10,
            min_step: 1e-12,
            eps_seed: 1e-8,
        }
    }
}

impl ToleranceSet {
    fn step_config(&self) -> StepConfig {
        StepConfig {
            rtol: self.rtol,
            atol: self.atol,
            min_step: self.min_step,
            max_step: f64::INFINITY,
        }
    }
}

/// Why an integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TerminationEvent {
    /// `v` reached zero at the given `y`.
    VCrossedZero(f64),
    /// `u + d v - 1` became negative at the given `y`.
    UTurned(f64),
    /// `y_max` reached without event.
    BudgetExhausted,
    /// Step size underflow at the given `y`.
    StepFailure(f64),
}

impl TerminationEvent {
    pub fn is_event(&self) -> bool {
        matches!(self, Self::VCrossedZero(_) | Self::UTurned(_))
    }
}

/// Which events end an integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StopRule {
    /// Stop at whichever event comes first.
    #[default]
    FirstEvent,
    /// Stop only when `v` reaches zero; the first `UTurned` location is kept
    /// in [`Trajectory::u_turn`].
    VCrossingOnly,
}

/// Accurate point value of a trajectory: the state plus the deviations from
/// the end states computed from whichever chart was active.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub y: f64,
    pub state: State,
    /// `1 - u`
    pub one_minus_u: f64,
    /// `1 - v`
    pub one_minus_v: f64,
    /// `u - u_left`, with `u_left` the left-state value of `u`.
    pub u_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum UChart {
    Offset,
    Complement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VChart {
    Complement,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Charts {
    u: UChart,
    v: VChart,
}

const LEFT_CHARTS: Charts = Charts {
    u: UChart::Offset,
    v: VChart::Complement,
};

#[derive(Debug, Clone, Copy)]
struct Decoded {
    u: f64,
    om_u: f64,
    off_u: f64,
    v: f64,
    om_v: f64,
    w: f64,
}

#[derive(Debug, Clone, Copy)]
struct Kinetics {
    d: f64,
    r: f64,
    c: f64,
    u_left: f64,
    /// `1 - u_left - d`, exactly zero in the heterogeneous regime
    gap: f64,
}

impl Kinetics {
    fn new(p: &ModelParams) -> Self {
        let u_left = p.u_left();
        let gap = match p.regime() {
            Regime::Homogeneous => 1.0 - p.d(),
            Regime::Heterogeneous => 0.0,
        };
        Self {
            d: p.d(),
            r: p.r(),
            c: p.c(),
            u_left,
            gap,
        }
    }

    fn decode(&self, ch: Charts, y: &[f64; 3]) -> Decoded {
        let span = 1.0 - self.u_left;
        let (u, om_u, off_u) = match ch.u {
            UChart::Offset => (self.u_left + y[0], span - y[0], y[0]),
            UChart::Complement => (1.0 - y[0], y[0], span - y[0]),
        };
        let (v, om_v) = match ch.v {
            VChart::Complement => (1.0 - y[1], y[1]),
            VChart::Direct => (y[1], 1.0 - y[1]),
        };
        Decoded {
            u,
            om_u,
            off_u,
            v,
            om_v,
            w: y[2],
        }
    }

    fn encode(&self, ch: Charts, s: &Decoded) -> [f64; 3] {
        [
            match ch.u {
                UChart::Offset => s.off_u,
                UChart::Complement => s.om_u,
            },
            match ch.v {
                VChart::Complement => s.om_v,
                VChart::Direct => s.v,
            },
            s.w,
        ]
    }

    /// `1 - u - d v`, assembled to avoid cancellation near the end states.
    fn growth(&self, ch: Charts, y: &[f64; 3]) -> f64 {
        let d = self.d;
        match (ch.u, ch.v) {
            (UChart::Offset, VChart::Complement) => self.gap - y[0] + d * y[1],
            (UChart::Offset, VChart::Direct) => (1.0 - self.u_left) - y[0] - d * y[1],
            (UChart::Complement, VChart::Complement) => y[0] - d + d * y[1],
            (UChart::Complement, VChart::Direct) => y[0] - d * y[1],
        }
    }

    fn deriv(&self, ch: Charts, y: &[f64; 3]) -> [f64; 3] {
        let s = self.decode(ch, y);
        let du = -s.u * s.om_u * self.growth(ch, y) / self.c;
        let dw = -self.c * s.w - self.r * s.v * s.om_u * s.om_v;
        [
            match ch.u {
                UChart::Offset => du,
                UChart::Complement => -du,
            },
            match ch.v {
                VChart::Complement => -s.w,
                VChart::Direct => s.w,
            },
            dw,
        ]
    }

    /// Chart to use at a point, with hysteresis around the midpoints.
    fn choose(&self, ch: Charts, s: &Decoded) -> Charts {
        let frac = s.off_u / (1.0 - self.u_left);
        let u = match ch.u {
            UChart::Offset if frac > 0.6 => UChart::Complement,
            UChart::Complement if frac < 0.4 => UChart::Offset,
            keep => keep,
        };
        let v = match ch.v {
            VChart::Complement if s.v < 0.4 => VChart::Direct,
            VChart::Direct if s.v > 0.6 => VChart::Complement,
            keep => keep,
        };
        Charts { u, v }
    }

    fn sample(&self, y: f64, s: &Decoded) -> Sample {
        Sample {
            y,
            state: State::new(s.u, s.v, s.w),
            one_minus_u: s.om_u,
            one_minus_v: s.om_v,
            u_offset: s.off_u,
        }
    }
}

/// Starting point on the unstable manifold of the left state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub y_start: f64,
    pub state: State,
    /// Shooting parameter, if the seed came from the manifold expansion.
    pub alpha: Option<f64>,
    u_offset: f64,
    one_minus_v: f64,
}

impl Seed {
    /// Arbitrary starting state (no manifold information).
    pub fn from_state(y_start: f64, state: State, params: &ModelParams) -> Self {
        Self {
            y_start,
            state,
            alpha: None,
            u_offset: state.u - params.u_left(),
            one_minus_v: 1.0 - state.v,
        }
    }

    /// `u - u_left` at the seed, without rounding through `u`.
    pub fn u_offset(&self) -> f64 {
        self.u_offset
    }

    /// `1 - v` at the seed, without rounding through `v`.
    pub fn one_minus_v(&self) -> f64 {
        self.one_minus_v
    }
}

fn check_eps(eps_seed: f64) -> Result<()> {
    if !(eps_seed > 0.0 && eps_seed <= 1e-6) {
        return Err(FrontError::InvalidInput(format!(
            "eps_seed must lie in (0, 1e-6], got {eps_seed}"
        )));
    }
    Ok(())
}

fn manifold_seed(y: f64, alpha: f64, u_offset: f64, lambda: f64, params: &ModelParams) -> Seed {
    let om_v = (lambda * y).exp();
    Seed {
        y_start: y,
        state: State::new(params.u_left() + u_offset, 1.0 - om_v, -lambda * om_v),
        alpha: Some(alpha),
        u_offset,
        one_minus_v: om_v,
    }
}

/// Seed for `d > 1`: `u = alpha e^{mu y}`, `v = 1 - e^{lambda y}`,
/// `w = -lambda e^{lambda y}` at the first `y` where the larger of the two
/// correction terms reaches `eps_seed`.
pub fn seed_homogeneous(alpha: f64, params: &ModelParams, eps_seed: f64) -> Result<Seed> {
    if params.regime() != Regime::Homogeneous {
        return Err(FrontError::InvalidInput("homogeneous seeding needs d > 1".into()));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(FrontError::InvalidInput(format!("alpha must be positive, got {alpha}")));
    }
    check_eps(eps_seed)?;
    let k = compute_rates(params);
    let y = ((eps_seed / alpha).ln() / k.mu).min(eps_seed.ln() / k.lambda);
    Ok(manifold_seed(y, alpha, alpha * (k.mu * y).exp(), k.lambda, params))
}

/// `u - (1 - d)` along the heterogeneous unstable manifold.
pub fn heterogeneous_offset(alpha: f64, params: &ModelParams, y: f64) -> f64 {
    let k = compute_rates(params);
    let d = params.d();
    let emu = (k.mu * y).exp();
    if k.degenerate {
        (alpha - d * k.mu * y) * emu
    } else {
        let coupling = d * k.mu / (k.mu - k.lambda);
        alpha * emu + coupling * emu * ((k.lambda - k.mu) * y).exp_m1()
    }
}

/// Seed for `d < 1`, any real `alpha`, starting where the largest correction
/// term (in `u` or in `v`) first reaches `eps_seed`.
pub fn seed_heterogeneous(alpha: f64, params: &ModelParams, eps_seed: f64) -> Result<Seed> {
    if params.regime() != Regime::Heterogeneous {
        return Err(FrontError::InvalidInput("heterogeneous seeding needs d < 1".into()));
    }
    if !alpha.is_finite() {
        return Err(FrontError::InvalidInput(format!("alpha must be finite, got {alpha}")));
    }
    check_eps(eps_seed)?;
    let k = compute_rates(params);
    let d = params.d();
    let largest = |y: f64| -> f64 {
        let emu = (k.mu * y).exp();
        let u_terms = if k.degenerate {
            (alpha - d * k.mu * y).abs() * emu
        } else {
            let coupling = d * k.mu / (k.mu - k.lambda);
            (alpha.abs() * emu).max((coupling * emu * ((k.lambda - k.mu) * y).exp_m1()).abs())
        };
        u_terms.max((k.lambda * y).exp())
    };
    let gap = largest(0.0).max(1.0).ln();
    let mut lo = eps_seed.ln() / k.lambda.min(k.mu) - gap - 10.0;
    while largest(lo) >= eps_seed {
        lo *= 2.0;
    }
    let mut hi = lo;
    while largest(hi) < eps_seed {
        lo = hi;
        hi += 0.5;
    }
    let y = bisect(|y| largest(y) - eps_seed, lo, hi, 1e-13, 200).unwrap_or(lo);
    Ok(manifold_seed(y, alpha, heterogeneous_offset(alpha, params, y), k.lambda, params))
}

/// Regime-appropriate seed.
pub fn seed(alpha: f64, params: &ModelParams, eps_seed: f64) -> Result<Seed> {
    match params.regime() {
        Regime::Homogeneous => seed_homogeneous(alpha, params, eps_seed),
        Regime::Heterogeneous => seed_heterogeneous(alpha, params, eps_seed),
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    dense: DenseStep<3>,
    charts: Charts,
}

/// Sampled solution with its continuous extension.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub termination: TerminationEvent,
    pub y_start: f64,
    pub y_end: f64,
    /// First `UTurned` location when integrated under
    /// [`StopRule::VCrossingOnly`].
    pub u_turn: Option<f64>,
    pub seed: Seed,
    pub params: ModelParams,
    segments: Vec<Segment>,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least the seed sample")
    }

    fn segment_index(&self, y: f64) -> Option<usize> {
        if !(y >= self.y_start && y <= self.y_end) || self.segments.is_empty() {
            return None;
        }
        let i = self.segments.partition_point(|s| s.dense.x1() < y);
        Some(i.min(self.segments.len() - 1))
    }

    /// Dense-output value at any `y` in `[y_start, y_end]`.
    pub fn state_at(&self, y: f64) -> Option<Sample> {
        let kin = Kinetics::new(&self.params);
        if self.segments.is_empty() {
            return (y == self.y_start).then(|| self.samples[0]);
        }
        let seg = &self.segments[self.segment_index(y)?];
        Some(kin.sample(y, &kin.decode(seg.charts, &seg.dense.eval(y))))
    }

    /// Integration steps as `(y0, y1)` pairs, clipped to `y_end`.
    pub fn step_bounds(&self) -> Vec<(f64, f64)> {
        self.segments
            .iter()
            .filter(|s| s.dense.x0 < self.y_end)
            .map(|s| (s.dense.x0, s.dense.x1().min(self.y_end)))
            .collect()
    }

    /// Dense samples with `\int_{y_start}^{y} (1 - u) dy'` alongside: every
    /// integration step is split into pieces no longer than `max_dy`.
    pub fn refined_samples(&self, max_dy: f64) -> Vec<(Sample, f64)> {
        let kin = Kinetics::new(&self.params);
        let span = 1.0 - self.params.u_left();
        let mut out = vec![(self.samples[0], 0.0)];
        let mut acc = 0.0;
        for seg in &self.segments {
            let a = seg.dense.x0;
            let b = seg.dense.x1().min(self.y_end);
            if b <= a {
                break;
            }
            let n = ((b - a) / max_dy).ceil().max(1.0) as usize;
            let mut lo = a;
            for k in 1..=n {
                let hi = if k == n { b } else { a + (b - a) * k as f64 / n as f64 };
                let part = seg.dense.integrate_component(0, lo, hi);
                acc += match seg.charts.u {
                    UChart::Offset => span * (hi - lo) - part,
                    UChart::Complement => part,
                };
                let s = kin.sample(hi, &kin.decode(seg.charts, &seg.dense.eval(hi)));
                out.push((s, acc));
                lo = hi;
            }
        }
        out
    }

    /// `\int_a^b (1 - u) dy` on the continuous extension, for
    /// `y_start <= a <= b <= y_end`.
    pub fn integral_one_minus_u(&self, a: f64, b: f64) -> f64 {
        let span = 1.0 - self.params.u_left();
        let mut total = 0.0;
        for seg in &self.segments {
            let lo = seg.dense.x0.max(a);
            let hi = seg.dense.x1().min(b);
            if hi <= lo {
                continue;
            }
            let part = seg.dense.integrate_component(0, lo, hi);
            total += match seg.charts.u {
                UChart::Offset => span * (hi - lo) - part,
                UChart::Complement => part,
            };
        }
        total
    }
}

pub(crate) enum Progress {
    Stepped,
    Stopped(TerminationEvent),
}

/// Step-by-step integrator over the charted system.
pub(crate) struct Driver {
    kin: Kinetics,
    params: ModelParams,
    tol: ToleranceSet,
    rule: StopRule,
    charts: Charts,
    stepper: Stepper<3>,
    seed: Seed,
    armed: bool,
    u_turn: Option<f64>,
    pub record: bool,
    samples: Vec<Sample>,
    segments: Vec<Segment>,
    last: Sample,
}

/// `v` must drop this far below 1 before the turning event is watched.
const ARMING_DEPTH: f64 = 1e-6;
const EVENT_PROBES: usize = 4;

impl Driver {
    pub(crate) fn new(seed: &Seed, params: &ModelParams, tol: &ToleranceSet, rule: StopRule) -> Self {
        let kin = Kinetics::new(params);
        let s = seed.state;
        let start = Decoded {
            u: s.u,
            om_u: (1.0 - kin.u_left) - seed.u_offset,
            off_u: seed.u_offset,
            v: s.v,
            om_v: seed.one_minus_v,
            w: s.w,
        };
        let charts = kin.choose(LEFT_CHARTS, &start);
        let y0 = kin.encode(charts, &start);
        let first = kin.sample(seed.y_start, &start);
        Self {
            kin,
            params: *params,
            tol: *tol,
            rule,
            charts,
            stepper: Stepper::new(seed.y_start, y0, tol.step_config()),
            seed: *seed,
            armed: false,
            u_turn: None,
            record: true,
            samples: vec![first],
            segments: Vec::new(),
            last: first,
        }
    }

    pub(crate) fn current(&self) -> &Sample {
        &self.last
    }

    fn first_crossing<F>(&self, f: F, a: f64, b: f64) -> Option<f64>
    where
        F: Fn(f64) -> f64,
    {
        // f(a) is on the safe side; look for the first probe on the other side
        let mut lo = a;
        for k in 1..=EVENT_PROBES {
            let hi = a + (b - a) * k as f64 / EVENT_PROBES as f64;
            if f(hi) <= 0.0 {
                return bisect(&f, lo, hi, self.tol.event, 200);
            }
            lo = hi;
        }
        None
    }

    fn scan_events(&mut self, seg: &Segment) -> Option<TerminationEvent> {
        let kin = self.kin;
        let at = |y: f64| kin.decode(seg.charts, &seg.dense.eval(y));
        let (x0, x1) = (seg.dense.x0, seg.dense.x1());

        let v_hit = if at(x0).v > 0.0 {
            self.first_crossing(|y| at(y).v, x0, x1)
        } else {
            None
        };

        let mut turn = None;
        let mut from = x0;
        if !self.armed && at(x1).om_v > ARMING_DEPTH {
            from = if at(x0).om_v > ARMING_DEPTH {
                x0
            } else {
                bisect(|y| ARMING_DEPTH - at(y).om_v, x0, x1, self.tol.event, 200).unwrap_or(x1)
            };
            self.armed = true;
            if kin.growth(seg.charts, &seg.dense.eval(from)) > 0.0 {
                turn = Some(from);
            }
        }
        if self.armed && turn.is_none() {
            let g = |y: f64| -kin.growth(seg.charts, &seg.dense.eval(y));
            if g(from) > 0.0 {
                turn = self.first_crossing(g, from, x1);
            }
        }
        if self.u_turn.is_some() {
            turn = None;
        }

        match self.rule {
            StopRule::FirstEvent => match (v_hit, turn) {
                (Some(yv), Some(yu)) if yu <= yv => Some(TerminationEvent::UTurned(yu)),
                (Some(yv), _) => Some(TerminationEvent::VCrossedZero(yv)),
                (None, Some(yu)) => Some(TerminationEvent::UTurned(yu)),
                (None, None) => None,
            },
            StopRule::VCrossingOnly => {
                if let Some(yu) = turn {
                    self.u_turn = Some(yu);
                }
                v_hit.map(TerminationEvent::VCrossedZero)
            }
        }
    }

    /// One accepted step, never beyond `y_limit`.
    pub(crate) fn advance(&mut self, y_limit: f64) -> Progress {
        let kin = self.kin;
        let charts = self.charts;
        let dense = match self.stepper.step(&|_, y: &[f64; 3]| kin.deriv(charts, y), y_limit) {
            Ok(d) => d,
            Err(y) => return Progress::Stopped(TerminationEvent::StepFailure(y)),
        };
        let seg = Segment { dense, charts };
        let event = self.scan_events(&seg);
        let y_stop = match event {
            Some(TerminationEvent::VCrossedZero(y)) | Some(TerminationEvent::UTurned(y)) => y,
            _ => dense.x1(),
        };
        let s = kin.decode(charts, &dense.eval(y_stop));
        self.last = kin.sample(y_stop, &s);
        if self.record {
            self.segments.push(seg);
            self.samples.push(self.last);
        }
        if let Some(ev) = event {
            return Progress::Stopped(ev);
        }
        let end = kin.decode(charts, &self.stepper.y());
        let next = kin.choose(charts, &end);
        if next != charts {
            self.charts = next;
            self.stepper.reset(dense.x1(), kin.encode(next, &end));
        }
        Progress::Stepped
    }

    pub(crate) fn run(&mut self, y_max: f64) -> TerminationEvent {
        while self.last.y < y_max {
            if let Progress::Stopped(ev) = self.advance(y_max) {
                return ev;
            }
        }
        TerminationEvent::BudgetExhausted
    }

    pub(crate) fn into_trajectory(self, termination: TerminationEvent) -> Trajectory {
        let y_end = self.samples.last().map(|s| s.y).unwrap_or(self.seed.y_start);
        Trajectory {
            y_start: self.seed.y_start,
            y_end,
            samples: self.samples,
            termination,
            u_turn: self.u_turn,
            seed: self.seed,
            params: self.params,
            segments: self.segments,
        }
    }
}

fn check_span(seed: &Seed, y_max: f64) -> Result<()> {
    if !(y_max > seed.y_start) {
        return Err(FrontError::InvalidInput(format!(
            "y_max = {y_max} must exceed y_start = {}",
            seed.y_start
        )));
    }
    Ok(())
}

/// Integrate from `seed` up to `y_max`, stopping at the first event.
pub fn integrate(seed: &Seed, params: &ModelParams, y_max: f64, tol: &ToleranceSet) -> Result<Trajectory> {
    integrate_with(seed, params, y_max, tol, StopRule::FirstEvent)
}

pub fn integrate_with(
    seed: &Seed,
    params: &ModelParams,
    y_max: f64,
    tol: &ToleranceSet,
    rule: StopRule,
) -> Result<Trajectory> {
    check_span(seed, y_max)?;
    let mut driver = Driver::new(seed, params, tol, rule);
    match driver.run(y_max) {
        TerminationEvent::StepFailure(y) => Err(FrontError::StepFailure { y }),
        ev => Ok(driver.into_trajectory(ev)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p(d: f64, r: f64, c: f64) -> ModelParams {
        ModelParams::new(d, r, c).unwrap()
    }

    #[test]
    fn rhs_vanishes_at_end_states() {
        let params = p(2.0, 1.0, 0.7);
        for s in [State::new(0.0, 1.0, 0.0), State::new(1.0, 0.0, 0.0)] {
            let f = rhs(&s, &params);
            assert_eq!((f.u, f.v, f.w), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn rhs_hand_value() {
        let f = rhs(&State::new(0.5, 0.5, -0.1), &p(2.0, 1.0, 1.0));
        assert_relative_eq!(f.u, 0.125, epsilon = 1e-15);
        assert_relative_eq!(f.v, -0.1, epsilon = 1e-15);
        assert_relative_eq!(f.w, -0.025, epsilon = 1e-15);
    }

    #[test]
    fn charted_field_matches_plain_field() {
        for params in [p(2.0, 1.0, 0.5), p(0.5, 2.0, 1.0)] {
            let kin = Kinetics::new(&params);
            let st = State::new(params.u_left() + 0.3 * (1.0 - params.u_left()), 0.55, -0.2);
            let dec = Decoded {
                u: st.u,
                om_u: 1.0 - st.u,
                off_u: st.u - params.u_left(),
                v: st.v,
                om_v: 1.0 - st.v,
                w: st.w,
            };
            let plain = rhs(&st, &params);
            for u in [UChart::Offset, UChart::Complement] {
                for v in [VChart::Complement, VChart::Direct] {
                    let ch = Charts { u, v };
                    let f = kin.deriv(ch, &kin.encode(ch, &dec));
                    let du = if u == UChart::Offset { f[0] } else { -f[0] };
                    let dv = if v == VChart::Direct { f[1] } else { -f[1] };
                    assert_relative_eq!(du, plain.u, epsilon = 1e-14);
                    assert_relative_eq!(dv, plain.v, epsilon = 1e-14);
                    assert_relative_eq!(f[2], plain.w, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn homogeneous_seed_alpha_one() {
        let params = p(2.0, 1.0, 2.0);
        let s = seed_homogeneous(1.0, &params, 1e-8).unwrap();
        let k = compute_rates(&params);
        let expect = (1e-8f64.ln() / k.mu).min(1e-8f64.ln() / k.lambda);
        assert_relative_eq!(s.y_start, expect, epsilon = 1e-12);
        assert!(s.one_minus_v() > 0.0 && s.one_minus_v() <= 1e-8 * (1.0 + 1e-12));
        assert!(s.state.v >= 1.0 - 1e-8 && s.state.v < 1.0);
        assert_relative_eq!(s.state.w, -k.lambda * s.one_minus_v(), epsilon = 1e-24);
    }

    #[test]
    fn homogeneous_seed_alpha_ten_binding_term() {
        // the v-term is the larger one at the u-term cutoff, so it binds
        let params = p(2.0, 1.0, 2.0);
        let s = seed_homogeneous(10.0, &params, 1e-8).unwrap();
        let lambda = 2f64.sqrt() - 1.0;
        assert_relative_eq!(s.y_start, 1e-8f64.ln() / lambda, epsilon = 1e-10);
        assert!((s.y_start - (-44.47)).abs() < 0.01);
        assert!(s.u_offset() <= 1e-8);
        assert_relative_eq!(s.one_minus_v(), 1e-8, max_relative = 1e-12);
    }

    #[test]
    fn homogeneous_seed_rejects_bad_alpha() {
        let params = p(2.0, 1.0, 2.0);
        assert!(seed_homogeneous(0.0, &params, 1e-8).is_err());
        assert!(seed_homogeneous(-1.0, &params, 1e-8).is_err());
        assert!(seed_homogeneous(1.0, &p(0.5, 1.0, 1.0), 1e-8).is_err());
    }

    #[test]
    fn heterogeneous_seed_alpha_zero() {
        let params = p(0.5, 2.0, 1.0);
        let s = seed_heterogeneous(0.0, &params, 1e-8).unwrap();
        let lambda = (5f64.sqrt() - 1.0) / 2.0;
        let mu = 0.25;
        let y = s.y_start;
        let expect = 0.5 * mu / (mu - lambda) * ((lambda * y).exp() - (mu * y).exp());
        assert_relative_eq!(s.u_offset(), expect, max_relative = 1e-9);
        assert_relative_eq!(s.one_minus_v(), (lambda * y).exp(), max_relative = 1e-14);
        assert_relative_eq!(s.state.w, -lambda * (lambda * y).exp(), max_relative = 1e-14);
        let biggest = s.u_offset().abs().max(s.one_minus_v());
        assert_relative_eq!(biggest, 1e-8, max_relative = 1e-9);
    }

    #[test]
    fn heterogeneous_seed_degenerate_branch() {
        let params = p(0.5, 1.0, 0.5);
        assert!(compute_rates(&params).degenerate);
        for alpha in [-3.0, 0.0, 2.0] {
            let s = seed_heterogeneous(alpha, &params, 1e-8).unwrap();
            let y = s.y_start;
            let expect = (alpha - 0.25 * y) * (0.5 * y).exp();
            assert_relative_eq!(s.u_offset(), expect, max_relative = 1e-12);
            assert_relative_eq!(s.state.u, 0.5 + expect, epsilon = 1e-15);
        }
    }

    #[test]
    fn equilibrium_seed_stays_put() {
        let params = p(2.0, 1.0, 1.0);
        let seed = Seed::from_state(0.0, State::new(0.0, 1.0, 0.0), &params);
        let traj = integrate(&seed, &params, 50.0, &ToleranceSet::default()).unwrap();
        assert_eq!(traj.termination, TerminationEvent::BudgetExhausted);
        for s in &traj.samples {
            assert_eq!((s.state.u, s.state.v, s.state.w), (0.0, 1.0, 0.0));
        }
        assert_eq!(traj.y_end, 50.0);
    }

    #[test]
    fn weak_damping_small_alpha_crosses_zero() {
        let params = p(2.0, 1.0, 0.5);
        let tol = ToleranceSet::default();
        let s = seed_homogeneous(1e-4, &params, tol.eps_seed).unwrap();
        let traj = integrate_with(&s, &params, 200.0, &tol, StopRule::VCrossingOnly).unwrap();
        match traj.termination {
            TerminationEvent::VCrossedZero(y) => {
                assert!(traj.last().state.v.abs() < 1e-8);
                assert_eq!(traj.y_end, y);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn strong_damping_never_crosses_zero() {
        let params = p(2.0, 1.0, 2.5);
        let tol = ToleranceSet::default();
        for alpha in [1e-6, 1e-3, 1.0, 1e3, 1e6] {
            let s = seed_homogeneous(alpha, &params, tol.eps_seed).unwrap();
            let traj = integrate_with(&s, &params, 300.0, &tol, StopRule::VCrossingOnly).unwrap();
            assert!(!matches!(traj.termination, TerminationEvent::VCrossedZero(_)));
        }
    }

    #[test]
    fn event_ordering_turn_before_crossing() {
        let params = p(2.0, 1.0, 0.5);
        let tol = ToleranceSet::default();
        for alpha in [1e-6, 1e-3, 0.1, 1.0, 10.0] {
            let s = seed_homogeneous(alpha, &params, tol.eps_seed).unwrap();
            let traj = integrate_with(&s, &params, 400.0, &tol, StopRule::VCrossingOnly).unwrap();
            if let TerminationEvent::VCrossedZero(yv) = traj.termination {
                let yu = traj.u_turn.expect("turn must precede crossing");
                assert!(yu <= yv);
            }
        }
    }

    #[test]
    fn region_invariance_before_events() {
        let params = p(2.0, 1.0, 0.5);
        let tol = ToleranceSet::default();
        for alpha in [1e-3, 1.0, 30.0] {
            let s = seed_homogeneous(alpha, &params, tol.eps_seed).unwrap();
            let traj = integrate(&s, &params, 200.0, &tol).unwrap();
            for smp in &traj.samples[1..traj.samples.len() - 1] {
                let st = smp.state;
                assert!(st.u > -1e-12 && st.u < 1.0 + 1e-12);
                assert!(st.v > -1e-12 && st.v < 1.0 + 1e-12);
                assert!(st.w < 1e-12);
            }
        }
    }

    #[test]
    fn tolerance_halving_changes_little() {
        let params = p(2.0, 1.0, 1.0);
        let mut tol = ToleranceSet::default();
        let s = seed_homogeneous(2.0, &params, tol.eps_seed).unwrap();
        let a = integrate(&s, &params, 20.0, &tol).unwrap();
        tol.rtol *= 0.5;
        tol.atol *= 0.5;
        let b = integrate(&s, &params, 20.0, &tol).unwrap();
        match (a.termination, b.termination) {
            (TerminationEvent::UTurned(ya), TerminationEvent::UTurned(yb)) => assert!((ya - yb).abs() < 1e-6),
            (ta, tb) => assert_eq!(ta, tb),
        }
        let y = a.y_end.min(b.y_end);
        let (sa, sb) = (a.state_at(y).unwrap(), b.state_at(y).unwrap());
        assert!((sa.state.u - sb.state.u).abs() < 1e-7);
        assert!((sa.state.v - sb.state.v).abs() < 1e-7);
    }

    #[test]
    fn seeding_depth_consistency() {
        let params = p(2.0, 1.0, 1.0);
        let tol = ToleranceSet::default();
        let shallow = integrate(&seed_homogeneous(5.0, &params, 1e-8).unwrap(), &params, 10.0, &tol).unwrap();
        let deep = integrate(&seed_homogeneous(5.0, &params, 1e-9).unwrap(), &params, 10.0, &tol).unwrap();
        for y in [-5.0, 0.0, 5.0] {
            let (a, b) = (shallow.state_at(y).unwrap(), deep.state_at(y).unwrap());
            assert!((a.state.u - b.state.u).abs() < 10.0 * 1e-8);
            assert!((a.state.v - b.state.v).abs() < 10.0 * 1e-8);
        }
    }

    #[test]
    fn integral_of_complement_matches_samples() {
        let params = p(2.0, 1.0, 1.0);
        let tol = ToleranceSet::default();
        let s = seed_homogeneous(5.0, &params, tol.eps_seed).unwrap();
        let traj = integrate(&s, &params, 30.0, &tol).unwrap();
        assert_eq!(traj.termination, TerminationEvent::BudgetExhausted);
        let (a, b) = (-10.0, 10.0);
        let n = 20000;
        let h = (b - a) / n as f64;
        let mut trap = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            trap += w * traj.state_at(a + i as f64 * h).unwrap().one_minus_u;
        }
        assert_relative_eq!(traj.integral_one_minus_u(a, b), trap * h, max_relative = 1e-7);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn seeded_slope_identity(alpha in 1e-3f64..1e3, d in 1.1f64..6.0, r in 0.2f64..5.0, c in 0.1f64..4.0) {
            let params = p(d, r, c);
            let k = compute_rates(&params);
            let s = seed_homogeneous(alpha, &params, 1e-8).unwrap();
            prop_assert!((s.state.w + k.lambda * s.one_minus_v()).abs() <= 1e-22);
            prop_assert!(s.u_offset() <= 1e-8 * (1.0 + 1e-12));
            prop_assert!(s.one_minus_v() <= 1e-8 * (1.0 + 1e-12));
            prop_assert!((s.u_offset().max(s.one_minus_v()) / 1e-8 - 1.0).abs() < 1e-9);
        }
    }
}
