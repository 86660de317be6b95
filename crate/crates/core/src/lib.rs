//! Traveling invasion fronts of the reduced acid-mediated tumor growth model
//!
//! ```text
//! U_t = U (1 - U - d V)
//! V_t = (f(U) V_x)_x + r V (1 - V),   f(U) = 1 - U
//! ```
//!
//! computed by shooting on a desingularized first order system, mapped back
//! to the comoving coordinate, and compared with small-speed asymptotics and
//! a direct finite-difference simulation.

pub mod asymptotics;
pub mod desing;
pub mod error;
pub mod model;
pub mod ode;
pub mod pdesim;
pub mod profile;
pub mod quad;
pub mod roots;
pub mod shooting;

pub use asymptotics::{
    calibrate_alpha, fkpp_v0, hat_v0, phi0_flatness, scalar_minimal_speed_bounds,
    sharp_front_distance, sharp_profile, solve_u0, with_alpha, Flatness, MinimalSpeedBounds,
    PiecewiseV0, SharpComparison, SharpPoint, SlowFrontApprox,
};
pub use desing::{
    integrate, integrate_with, rhs, seed, seed_heterogeneous, seed_homogeneous, Sample, Seed,
    State, StopRule, TerminationEvent, ToleranceSet, Trajectory,
};
pub use error::{FrontError, Result};
pub use model::{
    classify_equilibria, compute_rates, EquilibriumKind, EquilibriumReport, ModelParams, Rates,
    Regime,
};
pub use shooting::{
    classify_shot, default_y_max, find_alpha1, find_alpha1_with, front_in_y, ShootingResult,
    ShotClass, ShotOutcome,
};
pub use pdesim::{
    cfl_bound, front_position, heaviside_initial, run as run_pde, run_with as run_pde_with, step as pde_step,
    FieldPair, Grid1D, PdeRun, RunOptions,
};
pub use profile::{
    center_tail_check, effective_diffusion, fit_tail_exponent, reconstruct, speed_residual,
    tail_ratio, CenterTailReport, Diagnostics, FrontProfile, TailFit,
};
