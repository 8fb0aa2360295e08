//! Closed-loop battery charger on the quasi-static converter model.
//!
//! Each step the CC/CV logic sets a current reference, the controller turns it
//! into commutation parameters and a frequency, and the plant (the converter
//! model with parameter errors the controller does not know about) returns
//! the true output current and alignment angles. Measurements reach the
//! controller through first-order lags. The battery is a coulomb counter with a
//! linear charge-to-voltage map; `time_scale` compresses the charge so a full
//! cycle takes seconds of simulated time.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::controller::{Compensation, Controller, ControllerGains, Measurements};
use crate::inversion::{ControlReferences, Mode};
use crate::model::{evaluate, ModelError, OperatingPoint, SwitchingParams, TankConfig};
use crate::power::{ControlSolution, PowerError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Battery {
    /// Ampere-hours.
    pub capacity: f64,
    pub charge: f64,
    pub v_empty: f64,
    pub v_full: f64,
}

impl Battery {
    pub fn new(capacity: f64, v_empty: f64, v_full: f64) -> Self {
        Self {
            capacity,
            charge: 0.0,
            v_empty,
            v_full,
        }
    }

    pub fn voltage(&self) -> f64 {
        self.v_empty + (self.v_full - self.v_empty) * (self.charge / self.capacity)
    }

    /// Integrates `current` for `dt` seconds, scaled by `time_scale`.
    pub fn step(&mut self, current: f64, dt: f64, time_scale: f64) {
        self.charge = (self.charge + current * dt * time_scale / 3600.0).clamp(0.0, self.capacity);
    }
}

/// Plant-side parameter errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uncertainties {
    pub beta_offset: f64,
    pub inductance_scale: f64,
}

impl Uncertainties {
    pub fn none() -> Self {
        Self {
            beta_offset: 0.0,
            inductance_scale: 1.0,
        }
    }
}

impl Default for Uncertainties {
    fn default() -> Self {
        Self {
            beta_offset: -0.1,
            inductance_scale: 1.05,
        }
    }
}

/// `y += α (x − y)` with `α = 1 − exp(−dt/τ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderLag {
    alpha: f64,
    pub value: f64,
}

impl FirstOrderLag {
    pub fn new(tau: f64, dt: f64, initial: f64) -> Self {
        let alpha = if tau > 0.0 {
            1.0 - (-dt / tau).exp()
        } else {
            1.0
        };
        Self {
            alpha,
            value: initial,
        }
    }

    pub fn step(&mut self, input: f64) -> f64 {
        self.value += self.alpha * (input - self.value);
        self.value
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantOutput {
    pub w: f64,
    pub sigma: Option<f64>,
    pub delta: Option<f64>,
    pub tank_current: f64,
}

/// The converter model with `β` offset and scaled inductance.
pub fn plant_step(
    p: &SwitchingParams,
    u: &Uncertainties,
    op: &OperatingPoint,
    tank: &TankConfig,
) -> Result<PlantOutput, ModelError> {
    let actual = SwitchingParams {
        beta: p.beta + u.beta_offset,
        ..*p
    };
    let tank = tank.with_inductance_scale(u.inductance_scale);
    let ss = evaluate(&actual, op.gain, &tank)?;
    Ok(PlantOutput {
        w: ss.transconductance,
        sigma: ss.angles.map(|a| a.sigma),
        delta: ss.angles.map(|a| a.delta),
        tank_current: ss.tank_current(op.v_in),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperatingMode {
    LowPowerBuck,
    Buck,
    Boost,
    LowPowerBoost,
}

impl OperatingMode {
    pub fn classify(sol: &ControlSolution) -> Self {
        match (sol.mode, sol.low_power()) {
            (Mode::Buck, true) => Self::LowPowerBuck,
            (Mode::Buck, false) => Self::Buck,
            (Mode::Boost, false) => Self::Boost,
            (Mode::Boost, true) => Self::LowPowerBoost,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub tank: TankConfig,
    pub v_in: f64,
    pub i_cc: f64,
    pub v_cv: f64,
    /// CV loop gain, amperes per volt below `v_cv`.
    pub k_cv: f64,
    /// Soft-start: the CC reference ramps up linearly over this time.
    pub ramp_time: f64,
    pub dt: f64,
    pub duration: f64,
    pub time_scale: f64,
    pub capacity: f64,
    pub v_empty: f64,
    pub v_full: f64,
    pub initial_charge: f64,
    pub sensor_tau: f64,
    pub sigma_ref: f64,
    pub delta_ref: f64,
    pub sigma_min: f64,
    pub gains: ControllerGains,
    pub compensation: Compensation,
    pub uncertainties: Uncertainties,
    /// Uniform noise amplitude on the angle measurements (rad) and relative on `W`.
    pub noise: f64,
    pub seed: u64,
    /// Record every `decimate`-th step.
    pub decimate: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            tank: TankConfig {
                inductance: 80e-6,
                capacitance: 47e-9,
                turns_ratio: 600.0 / 320.0,
                omega_max: 2.0 * PI * 165e3,
            },
            v_in: 600.0,
            i_cc: 25.0,
            v_cv: 400.0,
            k_cv: 2.0,
            ramp_time: 1.0,
            dt: 1e-4,
            duration: 25.0,
            time_scale: 216.0,
            capacity: 30.0,
            v_empty: 240.0,
            v_full: 400.0,
            initial_charge: 0.0,
            sensor_tau: 1e-3,
            sigma_ref: 0.1,
            delta_ref: 0.0,
            sigma_min: 0.1,
            gains: ControllerGains::default(),
            compensation: Compensation::Parallel,
            uncertainties: Uncertainties::default(),
            noise: 0.0,
            seed: 0,
            decimate: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.tank
            .validate()
            .map_err(|e| ScenarioError::Config(e.to_string()))?;
        let positive = [
            ("v_in", self.v_in),
            ("dt", self.dt),
            ("duration", self.duration),
            ("time_scale", self.time_scale),
            ("capacity", self.capacity),
            ("inductance_scale", self.uncertainties.inductance_scale),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ScenarioError::Config(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        let non_negative = [
            ("i_cc", self.i_cc),
            ("k_cv", self.k_cv),
            ("ramp_time", self.ramp_time),
            ("sensor_tau", self.sensor_tau),
            ("noise", self.noise),
            ("initial_charge", self.initial_charge),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ScenarioError::Config(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        if self.initial_charge > self.capacity {
            return Err(ScenarioError::Config(
                "initial_charge exceeds capacity".into(),
            ));
        }
        if !(self.v_full > self.v_empty && self.v_empty >= 0.0) {
            return Err(ScenarioError::Config("need 0 <= v_empty < v_full".into()));
        }
        if self.decimate == 0 {
            return Err(ScenarioError::Config("decimate must be >= 1".into()));
        }
        if !self.beta_offset_finite() {
            return Err(ScenarioError::Config("beta_offset must be finite".into()));
        }
        self.references()
            .validate()
            .map_err(|e| ScenarioError::Config(e.to_string()))?;
        if self.steps() > 100_000_000 {
            return Err(ScenarioError::Config(
                "duration/dt exceeds 1e8 steps".into(),
            ));
        }
        Ok(())
    }

    fn beta_offset_finite(&self) -> bool {
        self.uncertainties.beta_offset.is_finite()
    }

    pub fn references(&self) -> ControlReferences {
        ControlReferences::new(self.sigma_ref, self.delta_ref).with_sigma_min(self.sigma_min)
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// CC/CV reference with the soft-start ramp.
    pub fn current_reference(&self, t: f64, v_bat: f64) -> f64 {
        let ramp = if self.ramp_time > 0.0 {
            (t / self.ramp_time).min(1.0)
        } else {
            1.0
        };
        (self.i_cc * ramp)
            .min(self.k_cv * (self.v_cv - v_bat))
            .max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub gain: f64,
    pub i_ref: f64,
    pub i_out: f64,
    pub v_bat: f64,
    pub d: f64,
    pub s: f64,
    pub beta: f64,
    pub omega: f64,
    pub sigma: f64,
    pub delta: f64,
    pub sigma_ref: f64,
    pub delta_ref: f64,
    pub s_add: f64,
    pub w: f64,
    pub mode: OperatingMode,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    /// Charge delivered, summed over every step (not just recorded ones).
    pub delivered: f64,
    pub final_charge: f64,
    pub final_voltage: f64,
}

impl Trace {
    /// Distinct modes in order of appearance, consecutive repeats removed.
    pub fn mode_sequence(&self) -> Vec<OperatingMode> {
        let mut seq: Vec<OperatingMode> = Vec::new();
        for r in &self.rows {
            if seq.last() != Some(&r.mode) {
                seq.push(r.mode);
            }
        }
        seq
    }

    /// True if `pattern` appears in order within the mode sequence.
    pub fn visits_in_order(&self, pattern: &[OperatingMode]) -> bool {
        let mut want = pattern.iter().peekable();
        for m in self.mode_sequence() {
            if want.peek() == Some(&&m) {
                want.next();
            }
        }
        want.peek().is_none()
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("controller aborted at t = {t} s: {source}")]
    Controller {
        t: f64,
        source: PowerError,
        trace: Box<Trace>,
    },
    #[error("plant evaluation failed at t = {t} s: {source}")]
    Plant {
        t: f64,
        source: ModelError,
        trace: Box<Trace>,
    },
}

impl ScenarioError {
    pub fn partial_trace(&self) -> Option<&Trace> {
        match self {
            Self::Config(_) => None,
            Self::Controller { trace, .. } | Self::Plant { trace, .. } => Some(trace),
        }
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Trace, ScenarioError> {
    cfg.validate()?;
    let refs = cfg.references();
    let mut battery = Battery::new(cfg.capacity, cfg.v_empty, cfg.v_full);
    battery.charge = cfg.initial_charge;
    let mut controller = Controller::new(cfg.compensation, cfg.tank, cfg.gains, cfg.dt);
    let mut lag_sigma = FirstOrderLag::new(cfg.sensor_tau, cfg.dt, refs.sigma);
    let mut lag_delta = FirstOrderLag::new(cfg.sensor_tau, cfg.dt, refs.delta);
    let mut lag_w = FirstOrderLag::new(cfg.sensor_tau, cfg.dt, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut noise = |scale: f64| {
        if cfg.noise > 0.0 {
            scale * cfg.noise * rng.random_range(-1.0..=1.0)
        } else {
            0.0
        }
    };

    let steps = cfg.steps();
    let mut trace = Trace {
        rows: Vec::with_capacity(steps / cfg.decimate + 1),
        ..Trace::default()
    };
    let (mut last_sigma, mut last_delta) = (refs.sigma, refs.delta);

    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        let v_bat = battery.voltage();
        let gain = cfg.tank.turns_ratio * v_bat / cfg.v_in;
        let i_ref = cfg.current_reference(t, v_bat);
        let w_ref = i_ref / cfg.v_in;
        let meas = Measurements {
            sigma: lag_sigma.value + noise(1.0),
            delta: lag_delta.value + noise(1.0),
            w: lag_w.value * (1.0 + noise(1.0)),
        };

        let sol = match controller.step(&refs, gain, w_ref, &meas) {
            Ok(sol) => sol,
            Err(source) => {
                finish(&mut trace, &battery);
                return Err(ScenarioError::Controller {
                    t,
                    source,
                    trace: Box::new(trace),
                });
            }
        };
        let op = OperatingPoint {
            gain,
            v_in: cfg.v_in,
        };
        let out = match plant_step(&sol.params(), &cfg.uncertainties, &op, &cfg.tank) {
            Ok(out) => out,
            Err(source) => {
                finish(&mut trace, &battery);
                return Err(ScenarioError::Plant {
                    t,
                    source,
                    trace: Box::new(trace),
                });
            }
        };
        // The angles are undefined when the tank current vanishes; hold them.
        last_sigma = out.sigma.unwrap_or(last_sigma);
        last_delta = out.delta.unwrap_or(last_delta);
        lag_sigma.step(last_sigma);
        lag_delta.step(last_delta);
        lag_w.step(out.w);

        let i_out = out.w * cfg.v_in;
        if k % cfg.decimate == 0 {
            trace.rows.push(TraceRow {
                t,
                gain,
                i_ref,
                i_out,
                v_bat,
                d: sol.d,
                s: sol.s,
                beta: sol.beta,
                omega: sol.omega,
                sigma: last_sigma,
                delta: last_delta,
                sigma_ref: refs.sigma,
                delta_ref: refs.delta,
                s_add: sol.s_add,
                w: out.w,
                mode: OperatingMode::classify(&sol),
            });
        }
        trace.delivered += i_out * cfg.dt * cfg.time_scale / 3600.0;
        battery.step(i_out, cfg.dt, cfg.time_scale);
    }
    finish(&mut trace, &battery);
    Ok(trace)
}

fn finish(trace: &mut Trace, battery: &Battery) {
    trace.final_charge = battery.charge;
    trace.final_voltage = battery.voltage();
}
