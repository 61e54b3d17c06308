//! Preset gallery: the anisotropic root process, the stochastic volatility model
//! and the CIR / OU baselines.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy::{Atom, JumpComponent, LevyMeasureSpec};
use crate::params::{AdmissibleParameters, StateDims};

pub const PRESET_NAMES: [&str; 4] = ["anisotropic-root", "stoch-vol", "cir", "ou"];

#[derive(Debug, Clone, Serialize)]
pub struct Preset {
    pub name: String,
    pub params: AdmissibleParameters,
    /// Default starting point for experiments.
    pub start: Vec<f64>,
    /// Known closed forms usable as oracles.
    pub notes: String,
    pub subcritical: bool,
}

fn finish(name: &str, params: AdmissibleParameters, start: Vec<f64>, notes: &str) -> Result<Preset> {
    let subcritical = params.subcriticality_margin() > 0.0;
    Ok(Preset {
        name: name.into(),
        params: params.validated()?,
        start,
        notes: notes.into(),
        subcritical,
    })
}

pub fn preset(name: &str) -> Result<Preset> {
    match name {
        "anisotropic-root" => anisotropic_root(RootImmigration::LogMoment),
        "stoch-vol" => stoch_vol(0.5),
        "cir" => cir(),
        "ou" => ou(),
        other => Err(Error::Config(format!(
            "unknown preset {other:?}; expected one of {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}

/// `dY = (1 − Y)dt + √Y dW`: `α = 1/2`, `b = 1`, `β = −1`.
pub fn cir() -> Result<Preset> {
    let dims = StateDims::new(1, 0)?;
    let mut p = AdmissibleParameters::zero(dims);
    p.alpha[0][(0, 0)] = 0.5;
    p.b[0] = 1.0;
    p.beta[(0, 0)] = -1.0;
    finish(
        "cir",
        p,
        vec![1.0],
        "ψ(t,u) = u e^{-t} / (1 − u(1 − e^{-t})/2); E Y_t = e^{-t}y + 1 − e^{-t}; \
         stationary law Gamma(shape 2, scale 1/2), transform (1 − u/2)^{-2}",
    )
}

/// Two-dimensional Gaussian OU with `a = I/2`, `b = (0, 1)`.
pub fn ou() -> Result<Preset> {
    let dims = StateDims::new(0, 2)?;
    let mut p = AdmissibleParameters::zero(dims);
    p.a = DMatrix::identity(2, 2) * 0.5;
    p.b = DVector::from_vec(vec![0.0, 1.0]);
    p.beta = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.5, -1.0]);
    finish(
        "ou",
        p,
        vec![1.0, -1.0],
        "Gaussian: mean e^{tβ}x + ∫e^{sβ}b ds, covariance ∫e^{sβ}(2a)e^{sβᵀ}ds; stationary mean −β⁻¹b",
    )
}

/// Immigration choices for the anisotropic root process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootImmigration {
    /// Stable-like tails with index 0.8 on both axes: only a log moment.
    LogMoment,
    /// Compound Poisson with finite mean.
    FiniteMean,
}

/// `μ_i = dξ_i/ξ_i^{1+γ_i} ⊗ δ_0` with `γ = (1.5, 1.7)`, `α = 0`.
pub fn anisotropic_root(nu: RootImmigration) -> Result<Preset> {
    anisotropic_root_with(1.5, 1.7, nu)
}

pub fn anisotropic_root_with(gamma1: f64, gamma2: f64, nu: RootImmigration) -> Result<Preset> {
    let dims = StateDims::new(2, 0)?;
    let mut p = AdmissibleParameters::zero(dims);
    p.b = DVector::from_vec(vec![0.5, 0.5]);
    p.beta = DMatrix::from_row_slice(2, 2, &[-1.0, 0.1, 0.1, -1.0]);
    p.mu = vec![
        LevyMeasureSpec::stable(0, gamma1, 1.0),
        LevyMeasureSpec::stable(1, gamma2, 1.0),
    ];
    p.nu = match nu {
        RootImmigration::LogMoment => LevyMeasureSpec::stable(0, 0.8, 0.1).plus(LevyMeasureSpec::stable(1, 0.8, 0.1)),
        RootImmigration::FiniteMean => LevyMeasureSpec::atoms(vec![(vec![0.5, 0.0], 0.5), (vec![0.0, 0.5], 0.5)]),
    };
    let notes = match nu {
        RootImmigration::LogMoment => "ν has infinite mean but a finite log moment; use the log metric",
        RootImmigration::FiniteMean => "ν finite mean; E X_t = e^{tβ}x + ∫e^{sβ}b̄ ds",
    };
    finish("anisotropic-root", p, vec![2.0, 0.5], notes)
}

/// `α_1 = [[1,ρ],[ρ,1]]`, `a = 0`, `β = diag(−1,−1)`, `b = (1, 0)`; ν is a
/// subordinator density on the variance axis plus symmetric atoms on the
/// second axis.
pub fn stoch_vol(rho: f64) -> Result<Preset> {
    let dims = StateDims::new(1, 1)?;
    let mut p = AdmissibleParameters::zero(dims);
    p.alpha[0] = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
    p.b = DVector::from_vec(vec![1.0, 0.0]);
    p.beta = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
    p.nu = LevyMeasureSpec::new(vec![
        JumpComponent::TabulatedDensity {
            axis: 0,
            knots: vec![0.0, 0.5, 2.0],
            density: vec![0.0, 0.8, 0.0],
        },
        JumpComponent::PointMasses {
            atoms: vec![
                Atom {
                    at: vec![0.0, 0.5],
                    weight: 0.5,
                },
                Atom {
                    at: vec![0.0, -0.5],
                    weight: 0.5,
                },
            ],
        },
    ]);
    finish(
        "stoch-vol",
        p,
        vec![1.0, 0.0],
        "all exponential moments of ν finite; transform via the Riccati system",
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_admissible() {
        for name in PRESET_NAMES {
            let p = preset(name).unwrap();
            assert!(p.params.validate().unwrap().is_admissible(), "{name}");
            assert!(p.subcritical, "{name}");
            assert!(p.params.dims.contains(&p.start));
        }
        assert!(anisotropic_root(RootImmigration::FiniteMean).is_ok());
        assert!(matches!(preset("heston"), Err(Error::Config(_))));
    }

    #[test]
    fn root_branching_measures_live_on_their_axes() {
        let p = preset("anisotropic-root").unwrap().params;
        for (i, mu) in p.mu.iter().enumerate() {
            let mean_off = mu.coordinate_moment(1 - i, 2);
            assert_eq!(mean_off, 0.0);
            assert!(mu.min_one_coordinate(i, 2) > 0.0);
        }
    }

    #[test]
    fn stoch_vol_has_no_free_diffusion() {
        let p = preset("stoch-vol").unwrap().params;
        assert!(p.a.iter().all(|v| *v == 0.0));
        assert_eq!(p.alpha[0][(0, 1)], 0.5);
    }
}
