//! Flat `key = value` settings shared by every command.
//!
//! Files are parsed as a flat TOML table, so strings in files are quoted.
//! `--set key=value` parses the value the same way and falls back to a bare
//! string (`--set compensation=series`).

use std::f64::consts::PI;
use std::path::Path;

use dbsrc_core::sweep::{LowPowerSpec, MapGrid, Range, Sinusoid, TrajectorySpec};
use dbsrc_core::{
    Compensation, ControlReferences, ControllerGains, Execution, PiConfig, ScenarioConfig,
    TankConfig, Uncertainties,
};
use toml::{Table, Value};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub tank: TankConfig,
    pub sigma_ref: f64,
    pub delta_ref: f64,
    pub sigma_min: f64,
    pub parallel: bool,

    pub map: MapGrid,
    pub trajectory: TrajectorySpec,
    pub lowpower_gains: Vec<f64>,
    pub lowpower_steps: usize,

    pub scenario: ScenarioConfig,
    pub uncertainty: bool,
}

impl Default for Settings {
    fn default() -> Self {
        let scenario = ScenarioConfig::default();
        let lowpower = LowPowerSpec::default();
        Self {
            tank: scenario.tank,
            sigma_ref: scenario.sigma_ref,
            delta_ref: scenario.delta_ref,
            sigma_min: scenario.sigma_min,
            parallel: true,
            map: MapGrid::default(),
            trajectory: TrajectorySpec::default(),
            lowpower_gains: lowpower.gains,
            lowpower_steps: lowpower.steps,
            scenario,
            uncertainty: true,
        }
    }
}

fn bad(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

fn float(key: &str, v: &Value) -> Result<f64, CliError> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(bad(key, format!("expected a number, got {other}"))),
    }
}

fn count(key: &str, v: &Value) -> Result<usize, CliError> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        other => Err(bad(
            key,
            format!("expected a non-negative integer, got {other}"),
        )),
    }
}

fn flag(key: &str, v: &Value) -> Result<bool, CliError> {
    v.as_bool()
        .ok_or_else(|| bad(key, format!("expected true or false, got {v}")))
}

fn floats(key: &str, v: &Value) -> Result<Vec<f64>, CliError> {
    match v {
        Value::Array(items) => items.iter().map(|x| float(key, x)).collect(),
        single => Ok(vec![float(key, single)?]),
    }
}

fn pi_field(cfg: &mut PiConfig, field: &str, key: &str, v: &Value) -> Result<(), CliError> {
    let x = float(key, v)?;
    match field {
        "kp" => cfg.kp = x,
        "ki" => cfg.ki = x,
        _ => {
            cfg.output_min = -x;
            cfg.output_max = x;
        }
    }
    Ok(())
}

impl Settings {
    pub fn set(&mut self, key: &str, v: &Value) -> Result<(), CliError> {
        let sc = &mut self.scenario;
        let tr = &mut self.trajectory;
        match key {
            "inductance" => self.tank.inductance = float(key, v)?,
            "capacitance" => self.tank.capacitance = float(key, v)?,
            "turns_ratio" => self.tank.turns_ratio = float(key, v)?,
            "f_max" => self.tank.omega_max = 2.0 * PI * float(key, v)?,
            "sigma_ref" => self.sigma_ref = float(key, v)?,
            "delta_ref" => self.delta_ref = float(key, v)?,
            "sigma_min" => self.sigma_min = float(key, v)?,
            "parallel" => self.parallel = flag(key, v)?,

            "gain" => self.map.gain = float(key, v)?,
            "s_add" => self.map.s_add = float(key, v)?,
            "sigma_lo" => self.map.sigma.lo = float(key, v)?,
            "sigma_hi" => self.map.sigma.hi = float(key, v)?,
            "sigma_steps" => self.map.sigma.steps = count(key, v)?,
            "delta_lo" => self.map.delta.lo = float(key, v)?,
            "delta_hi" => self.map.delta.hi = float(key, v)?,
            "delta_steps" => self.map.delta.steps = count(key, v)?,

            "traj_duration" => tr.duration = float(key, v)?,
            "traj_steps" => tr.steps = count(key, v)?,
            "gain_start" => tr.gain_start = float(key, v)?,
            "gain_end" => tr.gain_end = float(key, v)?,
            "sigma_offset" => tr.sigma.offset = float(key, v)?,
            "sigma_amplitude" => tr.sigma.amplitude = float(key, v)?,
            "sigma_freq" => tr.sigma.frequency = float(key, v)?,
            "delta_offset" => tr.delta.offset = float(key, v)?,
            "delta_amplitude" => tr.delta.amplitude = float(key, v)?,
            "delta_freq" => tr.delta.frequency = float(key, v)?,
            "s_add_offset" => tr.s_add.offset = float(key, v)?,
            "s_add_amplitude" => tr.s_add.amplitude = float(key, v)?,
            "s_add_freq" => tr.s_add.frequency = float(key, v)?,

            "gains" => self.lowpower_gains = floats(key, v)?,
            "lowpower_steps" => self.lowpower_steps = count(key, v)?,

            "v_in" => sc.v_in = float(key, v)?,
            "i_cc" => sc.i_cc = float(key, v)?,
            "v_cv" => sc.v_cv = float(key, v)?,
            "k_cv" => sc.k_cv = float(key, v)?,
            "ramp_time" => sc.ramp_time = float(key, v)?,
            "dt" => sc.dt = float(key, v)?,
            "duration" => sc.duration = float(key, v)?,
            "time_scale" => sc.time_scale = float(key, v)?,
            "capacity" => sc.capacity = float(key, v)?,
            "v_empty" => sc.v_empty = float(key, v)?,
            "v_full" => sc.v_full = float(key, v)?,
            "initial_charge" => sc.initial_charge = float(key, v)?,
            "sensor_tau" => sc.sensor_tau = float(key, v)?,
            "compensation" => {
                sc.compensation = match v.as_str() {
                    Some("parallel") => Compensation::Parallel,
                    Some("series") => Compensation::Series,
                    _ => return Err(bad(key, format!("expected parallel or series, got {v}"))),
                }
            }
            "uncertainty" => self.uncertainty = flag(key, v)?,
            "beta_offset" => sc.uncertainties.beta_offset = float(key, v)?,
            "inductance_scale" => sc.uncertainties.inductance_scale = float(key, v)?,
            "noise" => sc.noise = float(key, v)?,
            "seed" => sc.seed = count(key, v)? as u64,
            "decimate" => sc.decimate = count(key, v)?,

            "kp_sigma" | "ki_sigma" | "limit_sigma" => {
                pi_field(&mut sc.gains.sigma, &key[..key.len() - 6], key, v)?
            }
            "kp_delta" | "ki_delta" | "limit_delta" => {
                pi_field(&mut sc.gains.delta, &key[..key.len() - 6], key, v)?
            }
            "kp_power" | "ki_power" | "limit_power" => {
                pi_field(&mut sc.gains.power, &key[..key.len() - 6], key, v)?
            }
            _ => return Err(bad(key, "unknown key")),
        }
        Ok(())
    }

    pub fn apply_table(&mut self, table: &Table) -> Result<(), CliError> {
        for (key, v) in table {
            if v.is_table() {
                return Err(bad(key, "nested tables are not supported"));
            }
            self.set(key, v)?;
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let table: Table = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        self.apply_table(&table)
    }

    /// `key=value`; the value is read as TOML, or else as a bare string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected key=value, got {assignment:?}")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let value = toml::from_str::<Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        self.set(key, &value)
    }

    pub fn execution(&self) -> Execution {
        if self.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    pub fn references(&self) -> ControlReferences {
        ControlReferences::new(self.sigma_ref, self.delta_ref).with_sigma_min(self.sigma_min)
    }

    fn check_tank(&self) -> Result<(), CliError> {
        self.tank
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn map_grid(&self) -> Result<MapGrid, CliError> {
        self.check_tank()?;
        let g = self.map;
        if !(g.gain.is_finite() && g.gain >= 0.0) {
            return Err(bad("gain", "must be finite and >= 0"));
        }
        if !(0.0..=PI).contains(&g.s_add) {
            return Err(bad("s_add", "must lie in [0, pi]"));
        }
        check_range("sigma", &g.sigma)?;
        check_range("delta", &g.delta)?;
        Ok(g)
    }

    pub fn trajectory_spec(&self) -> Result<TrajectorySpec, CliError> {
        self.check_tank()?;
        let t = self.trajectory;
        if !(t.duration.is_finite() && t.duration >= 0.0) {
            return Err(bad("traj_duration", "must be finite and >= 0"));
        }
        if t.steps == 0 {
            return Err(bad("traj_steps", "must be >= 1"));
        }
        for (key, x) in [("gain_start", t.gain_start), ("gain_end", t.gain_end)] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(bad(key, "must be finite and >= 0"));
            }
        }
        for (name, s) in [("sigma", t.sigma), ("delta", t.delta), ("s_add", t.s_add)] {
            check_sinusoid(name, &s)?;
        }
        Ok(t)
    }

    pub fn lowpower_spec(&self) -> Result<LowPowerSpec, CliError> {
        self.check_tank()?;
        self.references()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.lowpower_gains.is_empty() {
            return Err(bad("gains", "must not be empty"));
        }
        if let Some(g) = self
            .lowpower_gains
            .iter()
            .find(|g| !(g.is_finite() && **g > 0.0))
        {
            return Err(bad("gains", format!("must be finite and > 0, got {g}")));
        }
        if self.lowpower_steps == 0 {
            return Err(bad("lowpower_steps", "must be >= 1"));
        }
        Ok(LowPowerSpec {
            gains: self.lowpower_gains.clone(),
            sigma: self.sigma_ref,
            delta: self.delta_ref,
            steps: self.lowpower_steps,
            tank: self.tank,
        })
    }

    pub fn scenario_config(&self) -> Result<ScenarioConfig, CliError> {
        let cfg = ScenarioConfig {
            tank: self.tank,
            sigma_ref: self.sigma_ref,
            delta_ref: self.delta_ref,
            sigma_min: self.sigma_min,
            uncertainties: if self.uncertainty {
                self.scenario.uncertainties
            } else {
                Uncertainties::none()
            },
            ..self.scenario.clone()
        };
        check_gains(&cfg.gains)?;
        cfg.validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

fn check_range(name: &str, r: &Range) -> Result<(), CliError> {
    if !(r.lo.is_finite() && r.hi.is_finite()) {
        return Err(bad(name, "range bounds must be finite"));
    }
    if r.steps == 0 {
        return Err(bad(&format!("{name}_steps"), "must be >= 1"));
    }
    Ok(())
}

fn check_sinusoid(name: &str, s: &Sinusoid) -> Result<(), CliError> {
    if [s.offset, s.amplitude, s.frequency]
        .iter()
        .all(|x| x.is_finite())
    {
        Ok(())
    } else {
        Err(bad(name, "waveform parameters must be finite"))
    }
}

fn check_gains(g: &ControllerGains) -> Result<(), CliError> {
    for (name, c) in [("sigma", g.sigma), ("delta", g.delta), ("power", g.power)] {
        let ok = [c.kp, c.ki, c.output_max]
            .iter()
            .all(|x| x.is_finite() && *x >= 0.0);
        if !ok {
            return Err(bad(name, "PI gains and limit must be finite and >= 0"));
        }
    }
    Ok(())
}
