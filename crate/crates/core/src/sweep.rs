//! Grid evaluations behind the CLI commands and the benches.

use std::f64::consts::PI;

use crate::charger::{run_scenario, OperatingMode, ScenarioConfig, Trace};
use crate::exec::{map_ordered, Execution};
use crate::inversion::{invert, ControlReferences};
use crate::model::{alignment_angles, harmonic_coefficients, transconductance, TankConfig};
use crate::power::{s_add_zero_boundary, PowerError};

/// Inclusive linear range; `steps = 1` yields just `lo`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Range {
    pub fn new(lo: f64, hi: f64, steps: usize) -> Self {
        Self { lo, hi, steps }
    }

    pub fn points(&self) -> Vec<f64> {
        match self.steps {
            0 => Vec::new(),
            1 => vec![self.lo],
            n => (0..n)
                .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapGrid {
    pub gain: f64,
    pub s_add: f64,
    pub sigma: Range,
    pub delta: Range,
}

impl Default for MapGrid {
    fn default() -> Self {
        Self {
            gain: 0.5,
            s_add: 0.0,
            sigma: Range::new(-0.5, 0.5, 41),
            delta: Range::new(-0.5, 0.5, 41),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapRow {
    pub sigma_ref: f64,
    pub delta_ref: f64,
    pub d: f64,
    pub s: f64,
    pub beta: f64,
    pub feasible: bool,
}

/// Inverse map over a `σ* × δ*` grid, `σ*` varying slowest.
pub fn feedforward_map(grid: &MapGrid, exec: Execution) -> Vec<MapRow> {
    let deltas = grid.delta.points();
    let cells: Vec<(f64, f64)> = grid
        .sigma
        .points()
        .into_iter()
        .flat_map(|s| deltas.iter().map(move |d| (s, *d)))
        .collect();
    map_ordered(&cells, exec, |&(sigma, delta)| {
        let r = invert(
            &ControlReferences::new(sigma, delta).with_s_add(grid.s_add),
            grid.gain,
        );
        MapRow {
            sigma_ref: sigma,
            delta_ref: delta,
            d: r.d,
            s: r.s,
            beta: r.beta,
            feasible: r.feasible,
        }
    })
}

/// `offset + amplitude · sin(2π f t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub offset: f64,
    pub amplitude: f64,
    pub frequency: f64,
}

impl Sinusoid {
    pub fn at(&self, t: f64) -> f64 {
        self.offset + self.amplitude * (2.0 * PI * self.frequency * t).sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySpec {
    pub duration: f64,
    pub steps: usize,
    pub gain_start: f64,
    pub gain_end: f64,
    pub sigma: Sinusoid,
    pub delta: Sinusoid,
    pub s_add: Sinusoid,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            duration: 1.0,
            steps: 2001,
            gain_start: 0.0,
            gain_end: 2.0,
            sigma: Sinusoid {
                offset: 0.2,
                amplitude: 0.15,
                frequency: 3.0,
            },
            delta: Sinusoid {
                offset: 0.0,
                amplitude: 0.1,
                frequency: 5.0,
            },
            s_add: Sinusoid {
                offset: 0.15,
                amplitude: 0.15,
                frequency: 2.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub gain: f64,
    pub sigma_ref: f64,
    pub delta_ref: f64,
    pub s_add: f64,
    /// Forward model output; NaN when infeasible or collapsed.
    pub sigma: f64,
    pub delta: f64,
    pub d: f64,
    pub s: f64,
    pub beta: f64,
    pub feasible: bool,
}

/// Open-loop inverse-then-forward evaluation along sinusoidal references
/// with `G` swept linearly.
pub fn trajectory(spec: &TrajectorySpec, exec: Execution) -> Vec<TrajectoryRow> {
    let times = Range::new(0.0, spec.duration, spec.steps).points();
    map_ordered(&times, exec, |&t| {
        let frac = if spec.duration > 0.0 {
            t / spec.duration
        } else {
            0.0
        };
        let gain = spec.gain_start + (spec.gain_end - spec.gain_start) * frac;
        let refs = ControlReferences::new(spec.sigma.at(t), spec.delta.at(t))
            .with_s_add(spec.s_add.at(t).clamp(0.0, PI));
        let r = invert(&refs, gain);
        let angles = r
            .feasible
            .then(|| alignment_angles(&harmonic_coefficients(&r.params(1.0), gain), r.beta).ok())
            .flatten();
        TrajectoryRow {
            t,
            gain,
            sigma_ref: refs.sigma,
            delta_ref: refs.delta,
            s_add: refs.s_add,
            sigma: angles.map_or(f64::NAN, |a| a.sigma),
            delta: angles.map_or(f64::NAN, |a| a.delta),
            d: r.d,
            s: r.s,
            beta: r.beta,
            feasible: angles.is_some(),
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowPowerSpec {
    pub gains: Vec<f64>,
    pub sigma: f64,
    pub delta: f64,
    /// Points per curve minus one; the `s_add` step is `π / steps`.
    pub steps: usize,
    pub tank: TankConfig,
}

impl Default for LowPowerSpec {
    fn default() -> Self {
        Self {
            gains: vec![0.7, 1.0, 1.3],
            sigma: 0.1,
            delta: 0.0,
            steps: 256,
            tank: TankConfig {
                inductance: 80e-6,
                capacitance: 47e-9,
                turns_ratio: 1.0,
                omega_max: 2.0 * PI * 165e3,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowPowerRow {
    pub gain: f64,
    pub s_add: f64,
    pub w_over_w0: f64,
    /// Low-power boundary for this gain; 0 when power falls from the start.
    pub s_add_0: f64,
}

/// Transconductance at `ω_max` as a function of `s_add`, relative to `s_add = 0`.
pub fn lowpower_curves(
    spec: &LowPowerSpec,
    exec: Execution,
) -> Result<Vec<LowPowerRow>, PowerError> {
    let base = ControlReferences::new(spec.sigma, spec.delta);
    base.validate()?;
    let w_at = |gain: f64, s_add: f64| -> Result<f64, PowerError> {
        let r = invert(&base.with_s_add(s_add), gain);
        if let Some(reason) = r.infeasibility {
            return Err(crate::inversion::InversionError::Infeasible { gain, reason }.into());
        }
        Ok(transconductance(
            &r.params(spec.tank.omega_max),
            gain,
            &spec.tank,
        )?)
    };

    let mut heads = Vec::with_capacity(spec.gains.len());
    for &gain in &spec.gains {
        let w0 = w_at(gain, 0.0)?;
        let s0 = match s_add_zero_boundary(&base, gain) {
            Ok(v) => v,
            Err(PowerError::NoCrossing) => 0.0,
            Err(e) => return Err(e),
        };
        heads.push((gain, w0, s0));
    }
    let steps = spec.steps.max(1);
    let cells: Vec<(f64, f64, f64, f64)> = heads
        .iter()
        .flat_map(|&(g, w0, s0)| {
            (0..=steps).map(move |k| {
                let s_add = if k == steps {
                    PI
                } else {
                    PI * k as f64 / steps as f64
                };
                (g, w0, s0, s_add)
            })
        })
        .collect();
    map_ordered(&cells, exec, |&(gain, w0, s_add_0, s_add)| {
        Ok(LowPowerRow {
            gain,
            s_add,
            w_over_w0: w_at(gain, s_add)? / w0,
            s_add_0,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSummary {
    pub final_voltage: f64,
    pub final_charge: f64,
    /// Largest relative deviation from `i_cc` once the soft-start has settled.
    pub cc_error: f64,
    /// Largest angle errors over the last tenth of the run.
    pub tail_sigma_error: f64,
    pub tail_delta_error: f64,
    pub modes: Vec<OperatingMode>,
}

/// Settling allowance after the soft-start ramp.
pub const CC_SETTLE: f64 = 0.5;

impl ScenarioSummary {
    pub fn from_trace(cfg: &ScenarioConfig, trace: &Trace) -> Self {
        let cc_error = trace
            .rows
            .iter()
            .filter(|r| r.t >= cfg.ramp_time + CC_SETTLE && r.i_ref == cfg.i_cc)
            .map(|r| ((r.i_out - cfg.i_cc) / cfg.i_cc).abs())
            .fold(0.0, f64::max);
        let tail_start = 0.9 * cfg.duration;
        let tail = trace.rows.iter().filter(|r| r.t >= tail_start);
        let (mut es, mut ed) = (0.0f64, 0.0f64);
        for r in tail {
            es = es.max((r.sigma - r.sigma_ref).abs());
            ed = ed.max((r.delta - r.delta_ref).abs());
        }
        Self {
            final_voltage: trace.final_voltage,
            final_charge: trace.final_charge,
            cc_error,
            tail_sigma_error: es,
            tail_delta_error: ed,
            modes: trace.mode_sequence(),
        }
    }
}

/// Runs independent scenarios, one per worker; errors are reported as text.
pub fn scenario_sweep(
    configs: &[ScenarioConfig],
    exec: Execution,
) -> Vec<Result<ScenarioSummary, String>> {
    map_ordered(configs, exec, |cfg| {
        run_scenario(cfg)
            .map(|trace| ScenarioSummary::from_trace(cfg, &trace))
            .map_err(|e| e.to_string())
    })
}
