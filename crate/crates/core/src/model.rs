//! Model parameters, linearization rates and equilibrium classification.

use serde::{Deserialize, Serialize};

use crate::error::{FrontError, Result};

/// Which pair of uniform states the front connects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `d > 1`: front from the infected state `(0, 1)` to the healthy state `(1, 0)`.
    Homogeneous,
    /// `d < 1`: front from the coexistence state `(1 - d, 1)` to `(1, 0)`.
    Heterogeneous,
}

/// Competition coefficient `d`, tumor growth rate `r` and wave speed `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    d: f64,
    r: f64,
    c: f64,
    regime: Regime,
}

impl ModelParams {
    pub fn new(d: f64, r: f64, c: f64) -> Result<Self> {
        check_dr(d, r)?;
        if !(c.is_finite() && c > 0.0) {
            return Err(FrontError::InvalidParams(format!("c must be positive, got {c}")));
        }
        let regime = if d > 1.0 {
            Regime::Homogeneous
        } else {
            Regime::Heterogeneous
        };
        Ok(Self { d, r, c, regime })
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// Same `d`, `r` with another speed.
    pub fn with_speed(&self, c: f64) -> Result<Self> {
        Self::new(self.d, self.r, c)
    }

    /// Healthy-cell density of the invading state at `xi -> -inf`.
    pub fn u_left(&self) -> f64 {
        match self.regime {
            Regime::Homogeneous => 0.0,
            Regime::Heterogeneous => 1.0 - self.d,
        }
    }

    /// `c >= 2 sqrt(r)`: the Fisher-KPP front stays positive.
    pub fn strongly_damped(&self) -> bool {
        self.c * self.c >= 4.0 * self.r
    }
}

fn check_dr(d: f64, r: f64) -> Result<()> {
    if !(d.is_finite() && d > 0.0) {
        return Err(FrontError::InvalidParams(format!("d must be positive, got {d}")));
    }
    if d == 1.0 {
        return Err(FrontError::InvalidParams(
            "d = 1 is non-generic (only three uniform equilibria)".into(),
        ));
    }
    if !(r.is_finite() && r > 0.0) {
        return Err(FrontError::InvalidParams(format!("r must be positive, got {r}")));
    }
    Ok(())
}

/// Exponential rates of the linearization at both ends of the front.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    /// Decay rate of `1 - v` at `y -> -inf`.
    pub lambda: f64,
    /// Growth rate of `u - u_left` at `y -> -inf`.
    pub mu: f64,
    /// Exponential decay rate `r / c` of `1 - U` and `V` as `xi -> +inf`.
    pub gamma: f64,
    /// `min(lambda, mu)`.
    pub eta: f64,
    /// Stable eigenvalue at the left state.
    pub zeta: f64,
    /// `sqrt(c^2 + 4r)` (homogeneous) or `sqrt(c^2 + 4dr)` (heterogeneous).
    pub delta: f64,
    /// `lambda` and `mu` coincide to relative precision `1e-6`; seeding then
    /// uses the logarithmic branch.
    pub degenerate: bool,
}

/// Relative gap under which `lambda` and `mu` are treated as equal.
pub const DEGENERATE_RATE_GAP: f64 = 1e-6;

pub fn compute_rates(params: &ModelParams) -> Rates {
    let (d, r, c) = (params.d, params.r, params.c);
    let (delta, mu) = match params.regime {
        Regime::Homogeneous => ((c * c + 4.0 * r).sqrt(), (d - 1.0) / c),
        Regime::Heterogeneous => ((c * c + 4.0 * d * r).sqrt(), d * (1.0 - d) / c),
    };
    let lambda = 0.5 * (delta - c);
    let zeta = -0.5 * (c + delta);
    let degenerate = (lambda - mu).abs() < DEGENERATE_RATE_GAP * lambda.max(mu);
    Rates {
        lambda,
        mu,
        gamma: r / c,
        eta: lambda.min(mu),
        zeta,
        delta,
        degenerate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumKind {
    UnstableNode,
    Saddle,
    StableNode,
}

impl EquilibriumKind {
    fn from_eigenvalues(a: f64, b: f64) -> Self {
        match (a > 0.0, b > 0.0) {
            (true, true) => EquilibriumKind::UnstableNode,
            (false, false) => EquilibriumKind::StableNode,
            _ => EquilibriumKind::Saddle,
        }
    }
}

/// A uniform state of the kinetic system with its linear type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub point: (f64, f64),
    pub kind: EquilibriumKind,
    pub eigenvalues: (f64, f64),
}

/// Jacobian of the kinetics `(U(1 - U - dV), rV(1 - V))` at `(u, v)`.
pub fn kinetic_jacobian(d: f64, r: f64, u: f64, v: f64) -> [[f64; 2]; 2] {
    [[1.0 - 2.0 * u - d * v, -d * u], [0.0, r * (1.0 - 2.0 * v)]]
}

/// The four uniform equilibria `(0,0)`, `(1,0)`, `(0,1)`, `(1-d,1)`.
pub fn classify_equilibria(d: f64, r: f64) -> Result<Vec<EquilibriumReport>> {
    check_dr(d, r)?;
    let points = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0 - d, 1.0)];
    Ok(points
        .iter()
        .map(|&(u, v)| {
            // upper triangular: eigenvalues sit on the diagonal
            let a = kinetic_jacobian(d, r, u, v);
            let eig = (a[0][0], a[1][1]);
            EquilibriumReport {
                point: (u, v),
                kind: EquilibriumKind::from_eigenvalues(eig.0, eig.1),
                eigenvalues: eig,
            }
        })
        .collect())
}
