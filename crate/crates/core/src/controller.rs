//! Feedback around the inverse maps.
//!
//! Three PI loops act on the alignment angles and the transconductance. In the
//! parallel arrangement the angle loops add corrections to `q` and `β` after the
//! inverse map; in the series arrangement they shift the references fed into
//! it. The power loop works on the relative error `(W* − W)/W*` and trims the
//! tank impedance computed from `W*`, which is where an inductance error shows
//! up as a near-constant offset.

use std::f64::consts::FRAC_PI_2;

use crate::inversion::{invert, linearized_inverse, ControlReferences, InversionError};
use crate::model::{alignment_angles, harmonic_coefficients, SwitchingParams, TankConfig};
use crate::power::{ControlSolution, ControlSolver, Corrections, PowerError};

/// Bound on the angle corrections.
pub const CORRECTION_LIMIT: f64 = 0.5;
const REFERENCE_MARGIN: f64 = 1e-6;
const FEASIBILITY_BISECTIONS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiConfig {
    pub kp: f64,
    pub ki: f64,
    pub output_min: f64,
    pub output_max: f64,
}

impl PiConfig {
    pub fn new(kp: f64, ki: f64, limit: f64) -> Self {
        Self {
            kp,
            ki,
            output_min: -limit,
            output_max: limit,
        }
    }

    pub fn disabled() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }
}

/// Discrete PI with conditional integration and a clamped integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct PiController {
    pub config: PiConfig,
    pub dt: f64,
    pub integrator: f64,
}

impl PiController {
    pub fn new(config: PiConfig, dt: f64) -> Self {
        assert!(dt > 0.0, "PI step must be positive");
        assert!(config.output_min <= config.output_max);
        Self {
            config,
            dt,
            integrator: 0.0,
        }
    }

    pub fn step(&mut self, error: f64) -> f64 {
        let PiConfig {
            kp,
            ki,
            output_min,
            output_max,
        } = self.config;
        let integrated = self.integrator + ki * error * self.dt;
        let raw = kp * error + integrated;
        let winding_up = (raw > output_max && error > 0.0) || (raw < output_min && error < 0.0);
        if !winding_up {
            self.integrator = integrated.clamp(output_min, output_max);
        }
        (kp * error + self.integrator).clamp(output_min, output_max)
    }

    pub fn reset(&mut self) {
        self.integrator = 0.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    pub sigma: PiConfig,
    pub delta: PiConfig,
    pub power: PiConfig,
}

impl ControllerGains {
    pub fn disabled() -> Self {
        Self {
            sigma: PiConfig::disabled(),
            delta: PiConfig::disabled(),
            power: PiConfig::disabled(),
        }
    }
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            sigma: PiConfig::new(0.2, 150.0, CORRECTION_LIMIT),
            delta: PiConfig::new(0.5, 400.0, CORRECTION_LIMIT),
            power: PiConfig::new(5.0, 2000.0, 20.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compensation {
    Series,
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurements {
    pub sigma: f64,
    pub delta: f64,
    pub w: f64,
}

#[derive(Debug)]
pub struct Controller {
    pub compensation: Compensation,
    solver: ControlSolver,
    pi_sigma: PiController,
    pi_delta: PiController,
    pi_power: PiController,
    last_s_add: Option<f64>,
}

impl Controller {
    pub fn new(
        compensation: Compensation,
        tank: TankConfig,
        gains: ControllerGains,
        dt: f64,
    ) -> Self {
        Self {
            compensation,
            solver: ControlSolver::new(tank),
            pi_sigma: PiController::new(gains.sigma, dt),
            pi_delta: PiController::new(gains.delta, dt),
            pi_power: PiController::new(gains.power, dt),
            last_s_add: None,
        }
    }

    pub fn parallel(tank: TankConfig, gains: ControllerGains, dt: f64) -> Self {
        Self::new(Compensation::Parallel, tank, gains, dt)
    }

    pub fn series(tank: TankConfig, gains: ControllerGains, dt: f64) -> Self {
        Self::new(Compensation::Series, tank, gains, dt)
    }

    pub fn integrators(&self) -> (f64, f64, f64) {
        (
            self.pi_sigma.integrator,
            self.pi_delta.integrator,
            self.pi_power.integrator,
        )
    }

    pub fn step(
        &mut self,
        refs: &ControlReferences,
        gain: f64,
        w_ref: f64,
        meas: &Measurements,
    ) -> Result<ControlSolution, PowerError> {
        let u_sigma = self.pi_sigma.step(refs.sigma - meas.sigma);
        let u_delta = self.pi_delta.step(refs.delta - meas.delta);
        let u_power = if w_ref > 0.0 {
            self.pi_power.step((w_ref - meas.w) / w_ref)
        } else {
            self.pi_power.reset();
            0.0
        };

        let sol = match self.compensation {
            Compensation::Parallel => self.solver.solve(
                refs,
                gain,
                w_ref,
                Corrections {
                    sigma: u_sigma,
                    delta: u_delta,
                    impedance: u_power,
                },
                self.last_s_add,
            )?,
            Compensation::Series => {
                let limit = FRAC_PI_2 - REFERENCE_MARGIN;
                let shifted = ControlReferences {
                    sigma: (refs.sigma + u_sigma).clamp(-limit, limit),
                    delta: (refs.delta + u_delta).clamp(-limit, limit),
                    ..*refs
                };
                let effective = feasible_towards(refs, &shifted, gain);
                let corrections = Corrections {
                    impedance: u_power,
                    ..Corrections::default()
                };
                self.solver
                    .solve(&effective, gain, w_ref, corrections, self.last_s_add)?
            }
        };
        self.last_s_add = Some(sol.s_add);
        Ok(sol)
    }
}

/// Series PI loops around the linearized inverse, closed through the exact
/// model at fixed gain. Returns the alignment angles after each step; with
/// disabled gains this is the open-loop linearized response.
pub fn linearized_tracking(
    refs: &ControlReferences,
    gain: f64,
    sigma: PiConfig,
    delta: PiConfig,
    dt: f64,
    steps: usize,
) -> Result<Vec<(f64, f64)>, InversionError> {
    let mut pi_sigma = PiController::new(sigma, dt);
    let mut pi_delta = PiController::new(delta, dt);
    let (mut meas_sigma, mut meas_delta) = (refs.sigma, refs.delta);
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let shifted = ControlReferences {
            sigma: refs.sigma + pi_sigma.step(refs.sigma - meas_sigma),
            delta: refs.delta + pi_delta.step(refs.delta - meas_delta),
            ..*refs
        };
        let (d, s, beta) = linearized_inverse(&shifted, gain)?;
        let p = SwitchingParams::new(d, s, beta, 1.0);
        let angles = alignment_angles(&harmonic_coefficients(&p, gain), beta)
            .map_err(|e| InversionError::InvalidReference(e.to_string()))?;
        meas_sigma = angles.sigma;
        meas_delta = angles.delta;
        out.push((meas_sigma, meas_delta));
    }
    Ok(out)
}

/// Furthest point on the segment from `base` to `target` that the inverse map
/// accepts; `base` itself when nothing better is feasible.
fn feasible_towards(
    base: &ControlReferences,
    target: &ControlReferences,
    gain: f64,
) -> ControlReferences {
    let at = |lambda: f64| ControlReferences {
        sigma: base.sigma + lambda * (target.sigma - base.sigma),
        delta: base.delta + lambda * (target.delta - base.delta),
        ..*base
    };
    if invert(target, gain).feasible {
        return *target;
    }
    if !invert(base, gain).feasible {
        return *base;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..FEASIBILITY_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if invert(&at(mid), gain).feasible {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo)
}
