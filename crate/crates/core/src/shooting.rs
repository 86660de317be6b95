//! Shot classification and bisection on the shooting parameter.
//!
//! A shot is Low when `v` reaches zero or `u + d v - 1` turns negative, and
//! High once it has committed to `u -> 1` with `v` bounded away from the
//! connecting orbit. On the connecting orbit the ratio
//! `d (v + w/c) / (1 - u)` tends to `1 + r` from below; a High shot drives it
//! to infinity, so crossing `2 (1 + r)` with `1 - u` already small certifies
//! the shot. Near the critical parameter the decision can take a very long
//! horizon, so undecided shots continue past `y_max` (without recording)
//! up to [`HORIZON_CAP`].

use serde::{Deserialize, Serialize};

use crate::desing::{integrate, seed, Driver, Progress, Sample, StopRule, TerminationEvent, ToleranceSet, Trajectory};
use crate::error::{FrontError, Result};
use crate::model::{ModelParams, Regime};

/// `1 - u` must be this small before the High certificate is tested.
pub const HIGH_COMPLEMENT: f64 = 0.05;
/// Multiple of `1 + r` the tail ratio must exceed for a High certificate.
pub const HIGH_RATIO_FACTOR: f64 = 2.0;
/// Farthest `y` an undecided shot is followed.
pub const HORIZON_CAP: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShotClass {
    Low,
    High,
}

/// Classification with the raw termination and the last state reached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotOutcome {
    pub class: ShotClass,
    pub termination: TerminationEvent,
    pub final_sample: Sample,
}

#[derive(Debug, Clone)]
pub struct ShootingResult {
    pub alpha1: f64,
    /// `(alpha_low, alpha_high)`
    pub bracket: (f64, f64),
    /// Trajectory at `alpha_high` up to `y_max`.
    pub trajectory: Trajectory,
    pub n_shots: usize,
    pub regime: Regime,
    /// Every classified parameter, in the order tried.
    pub history: Vec<(f64, ShotClass)>,
}

impl ShootingResult {
    pub fn relative_width(&self) -> f64 {
        relative_width(self.bracket.0, self.bracket.1)
    }
}

fn relative_width(lo: f64, hi: f64) -> f64 {
    (hi - lo) / lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE)
}

/// `max(200, 50 / c)`
pub fn default_y_max(c: f64) -> f64 {
    200f64.max(50.0 / c)
}

fn certified_high(s: &Sample, params: &ModelParams) -> bool {
    let om_u = s.one_minus_u;
    if !(om_u <= HIGH_COMPLEMENT) {
        return false;
    }
    let lead = s.state.v + s.state.w / params.c();
    params.d() * lead >= HIGH_RATIO_FACTOR * (1.0 + params.r()) * om_u
}

pub fn classify_shot(alpha: f64, params: &ModelParams, y_max: f64, tol: &ToleranceSet) -> Result<ShotOutcome> {
    let start = seed(alpha, params, tol.eps_seed)?;
    if !(y_max > start.y_start) {
        return Err(FrontError::InvalidInput(format!("y_max = {y_max} below seeding point")));
    }
    let mut driver = Driver::new(&start, params, tol, StopRule::FirstEvent);
    driver.record = false;
    let horizon = HORIZON_CAP.max(y_max);
    loop {
        let s = *driver.current();
        if s.y >= horizon {
            return Err(FrontError::Inconclusive { alpha, y_max: horizon });
        }
        match driver.advance(horizon) {
            Progress::Stopped(TerminationEvent::StepFailure(y)) => return Err(FrontError::StepFailure { y }),
            Progress::Stopped(ev) => {
                return Ok(ShotOutcome {
                    class: ShotClass::Low,
                    termination: ev,
                    final_sample: *driver.current(),
                })
            }
            Progress::Stepped => {
                let s = driver.current();
                if certified_high(s, params) {
                    return Ok(ShotOutcome {
                        class: ShotClass::High,
                        termination: TerminationEvent::BudgetExhausted,
                        final_sample: *s,
                    });
                }
            }
        }
    }
}

const BISECTION_CAP: usize = 200;

pub fn find_alpha1(params: &ModelParams, alpha_tol: f64, y_max: f64) -> Result<ShootingResult> {
    find_alpha1_with(params, alpha_tol, y_max, &ToleranceSet::default())
}

pub fn find_alpha1_with(
    params: &ModelParams,
    alpha_tol: f64,
    y_max: f64,
    tol: &ToleranceSet,
) -> Result<ShootingResult> {
    if !(alpha_tol > 0.0) {
        return Err(FrontError::InvalidInput(format!("alpha_tol must be positive, got {alpha_tol}")));
    }
    let mut history = Vec::new();
    let mut shoot = |alpha: f64| -> Result<ShotClass> {
        let class = classify_shot(alpha, params, y_max, tol)?.class;
        history.push((alpha, class));
        Ok(class)
    };

    let (mut lo, mut hi) = match params.regime() {
        Regime::Homogeneous => {
            let ladder: Vec<f64> = (-20..=40).map(|k| 2f64.powi(k)).collect();
            expand(&ladder, 20, &mut shoot)?
        }
        Regime::Heterogeneous => {
            let mut ladder: Vec<f64> = (-20..=40).rev().map(|k| -(2f64.powi(k))).collect();
            ladder.push(0.0);
            ladder.extend((-20..=40).map(|k| 2f64.powi(k)));
            expand(&ladder, 61, &mut shoot)?
        }
    };

    let mut iterations = 0;
    while relative_width(lo, hi) > alpha_tol {
        if iterations == BISECTION_CAP {
            break;
        }
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match shoot(mid)? {
            ShotClass::Low => lo = mid,
            ShotClass::High => hi = mid,
        }
    }

    let trajectory = integrate(&seed(hi, params, tol.eps_seed)?, params, y_max, tol)?;
    Ok(ShootingResult {
        alpha1: hi,
        bracket: (lo, hi),
        trajectory,
        n_shots: history.len(),
        regime: params.regime(),
        history,
    })
}

/// Walk an increasing ladder from `ladder[start]` until adjacent entries
/// classify Low then High.
fn expand<F>(ladder: &[f64], start: usize, shoot: &mut F) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<ShotClass>,
{
    let mut i = start;
    match shoot(ladder[i])? {
        ShotClass::Low => loop {
            if i + 1 == ladder.len() {
                break;
            }
            i += 1;
            if shoot(ladder[i])? == ShotClass::High {
                return Ok((ladder[i - 1], ladder[i]));
            }
        },
        ShotClass::High => loop {
            if i == 0 {
                break;
            }
            i -= 1;
            if shoot(ladder[i])? == ShotClass::Low {
                return Ok((ladder[i], ladder[i + 1]));
            }
        },
    }
    Err(FrontError::BracketNotFound(format!(
        "no class change for alpha in [{}, {}]",
        ladder[0],
        ladder[ladder.len() - 1]
    )))
}

/// Connecting trajectory in the desingularized coordinate.
pub fn front_in_y(params: &ModelParams, alpha_tol: f64, y_max: f64) -> Result<Trajectory> {
    Ok(find_alpha1(params, alpha_tol, y_max)?.trajectory)
}

/// Leading-order bound `c (1 + r) / (d r y)` on `v` along the connecting
/// orbit at large `y`.
pub fn tail_v_scale(params: &ModelParams, y: f64) -> f64 {
    params.c() * (1.0 + params.r()) / (params.d() * params.r() * y)
}
