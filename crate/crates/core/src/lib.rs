//! Steady-state model and control of a dual-bridge series resonant converter.
//!
//! The converter is described with a first-harmonic model in three commutation
//! parameters: primary on-time `d`, secondary short-time `s` and bridge phase
//! shift `β`. [`inversion`] maps desired alignment angles back to these
//! parameters, [`power`] adds the switching frequency as the power knob, and
//! [`controller`] closes the loop. [`charger`] simulates a battery charger on top.
//!
//! ```
//! use std::f64::consts::PI;
//! use dbsrc_core::{solve_controls, ControlReferences, Corrections, TankConfig};
//!
//! let tank = TankConfig::new(80e-6, 47e-9, 1.875, 2.0 * PI * 165e3).unwrap();
//! let refs = ControlReferences::new(0.1, 0.0);
//! let w_ref = 25.0 / 600.0;
//! let sol = solve_controls(&refs, 0.9, w_ref, &tank, Corrections::default()).unwrap();
//! assert!(sol.omega <= tank.omega_max);
//! assert!((sol.achieved_w(0.9, &tank).unwrap() - w_ref).abs() < 1e-9 * w_ref);
//! ```

pub mod charger;
pub mod controller;
pub mod exec;
pub mod inversion;
pub mod model;
pub mod power;
pub mod sweep;

pub use charger::{
    plant_step, run_scenario, Battery, FirstOrderLag, OperatingMode, PlantOutput, ScenarioConfig,
    ScenarioError, Trace, TraceRow, Uncertainties,
};
pub use controller::{
    linearized_tracking, Compensation, Controller, ControllerGains, Measurements, PiConfig,
    PiController,
};
pub use exec::Execution;
pub use inversion::{
    beta_zero_maps, fully_driven_maps, inversion_residual, invert, invert_alignment,
    linearized_inverse, q_combine, q_from_references, q_split, ControlReferences, InfeasibleReason,
    InversionError, InversionResult, Mode,
};
pub use model::{
    alignment_angles, evaluate, harmonic_coefficients, sync_rect_residual, tank_current_amplitude,
    tank_impedance, transconductance, AlignmentAngles, HarmonicCoefficients, ModelError,
    OperatingPoint, SteadyState, SwitchingParams, TankConfig,
};
pub use power::{
    frequency_from_impedance, fully_driven_frequency, gain_term_h, required_impedance,
    s_add_zero_boundary, solve_controls, ControlSolution, ControlSolver, Corrections, FullyDriven,
    PowerError, PowerReference,
};
