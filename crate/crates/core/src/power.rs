//! Output power through the switching frequency.
//!
//! With the alignment angles pinned at their references the forward model
//! factorizes as `W = n/(2π²) · H / Z(ω)` where
//!
//! ```text
//! H = A · (cos(s + δ*) + cos δ*) / cos σ*
//! ```
//!
//! depends only on the commutation parameters. A power reference `W*` then
//! fixes the tank impedance and hence the frequency. Above `ω_max` the
//! frequency is pinned and the extra short-time `s_add` reduces power instead.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::RwLock;

use thiserror::Error;

use crate::inversion::{fully_driven_maps, invert, ControlReferences, InversionError, Mode};
use crate::model::{
    harmonic_coefficients, transconductance, ModelError, SwitchingParams, TankConfig,
};

/// Scan step for the extra short-time.
pub const S_ADD_STEP: f64 = PI / 512.0;
/// Width of the final bisection bracket on `s_add`.
pub const S_ADD_TOLERANCE: f64 = 1e-10;
/// `H` vanishes exactly at `s = π`; round-off there may leave it slightly negative.
const H_ROUNDOFF: f64 = 1e-12;
const BOUNDARY_TOLERANCE: f64 = 1e-9;
const GAIN_BUCKET: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerError {
    #[error(transparent)]
    Inversion(#[from] InversionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("zero power reference: impedance would be infinite")]
    ZeroReference,
    #[error("negative impedance {0} ohm")]
    NegativeImpedance(f64),
    #[error("gain term H = {0} is negative")]
    NegativeGainTerm(f64),
    #[error("cos(sigma*) too small: {0}")]
    DegenerateSigma(f64),
    #[error("H(s_add) is monotone from 0; no low-power boundary")]
    NoCrossing,
    #[error("no s_add in [0, pi] reaches W* = {0} below omega_max")]
    UnreachablePower(f64),
    #[error("invalid power reference: {0}")]
    InvalidReference(String),
}

/// Desired output transconductance `W* = I_out* / V_in`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerReference {
    pub w_ref: f64,
}

impl PowerReference {
    pub fn new(w_ref: f64) -> Result<Self, PowerError> {
        if w_ref.is_finite() && w_ref >= 0.0 {
            Ok(Self { w_ref })
        } else {
            Err(PowerError::InvalidReference(format!(
                "W_ref must be >= 0, got {w_ref}"
            )))
        }
    }

    pub fn from_current(i_out: f64, v_in: f64) -> Result<Self, PowerError> {
        Self::new(i_out / v_in)
    }
}

/// Regulator outputs added inside [`solve_controls`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Corrections {
    /// Added to the combined duty `q`.
    pub sigma: f64,
    /// Added to the phase shift `β`.
    pub delta: f64,
    /// Subtracted from the required tank impedance (ohm).
    pub impedance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSolution {
    pub d: f64,
    pub s: f64,
    pub beta: f64,
    pub omega: f64,
    pub s_add: f64,
    pub mode: Mode,
    pub h: f64,
}

impl ControlSolution {
    pub fn params(&self) -> SwitchingParams {
        SwitchingParams::new(self.d, self.s, self.beta, self.omega)
    }

    pub fn low_power(&self) -> bool {
        self.s_add > 0.0
    }

    /// Forward-model transconductance at this solution.
    pub fn achieved_w(&self, gain: f64, tank: &TankConfig) -> Result<f64, ModelError> {
        transconductance(&self.params(), gain, tank)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullyDriven {
    pub beta: f64,
    pub s: f64,
    pub impedance: f64,
    pub omega: f64,
}

fn h_term(d: f64, s: f64, beta: f64, refs: &ControlReferences, gain: f64) -> f64 {
    let a = harmonic_coefficients(&SwitchingParams::new(d, s, beta, 1.0), gain).a;
    a * ((s + refs.delta).cos() + refs.delta.cos()) / refs.sigma.cos()
}

fn check_sigma(refs: &ControlReferences) -> Result<(), PowerError> {
    let c = refs.sigma.cos();
    if c.abs() <= 1e-9 {
        Err(PowerError::DegenerateSigma(c))
    } else {
        Ok(())
    }
}

/// Gain term `H` at the inverse-map solution for `refs`.
pub fn gain_term_h(refs: &ControlReferences, gain: f64) -> Result<f64, PowerError> {
    check_sigma(refs)?;
    let r = crate::inversion::invert_alignment(refs, gain)?;
    Ok(h_term(r.d, r.s, r.beta, refs, gain))
}

/// `Z = n H / (2π² W*)`.
pub fn required_impedance(h: f64, w_ref: f64, turns_ratio: f64) -> Result<f64, PowerError> {
    if w_ref.is_nan() || w_ref < 0.0 {
        return Err(PowerError::InvalidReference(format!(
            "W_ref must be >= 0, got {w_ref}"
        )));
    }
    if w_ref == 0.0 {
        return Err(PowerError::ZeroReference);
    }
    Ok(turns_ratio * h / (2.0 * PI * PI * w_ref))
}

/// Above-resonance root of `ωL − 1/(ωC) = Z`.
pub fn frequency_from_impedance(z: f64, tank: &TankConfig) -> Result<f64, PowerError> {
    if z.is_nan() || z < 0.0 {
        return Err(PowerError::NegativeImpedance(z));
    }
    let (l, c) = (tank.inductance, tank.capacitance);
    let cz = c * z;
    Ok((cz + (cz * cz + 4.0 * l * c).sqrt()) / (2.0 * l * c))
}

/// Frequency law for a fully driven primary with `δ = 0`.
pub fn fully_driven_frequency(
    gain: f64,
    g_star: f64,
    w_ref: f64,
    tank: &TankConfig,
) -> Result<FullyDriven, PowerError> {
    if !(g_star > 0.0 && g_star <= 1.0) {
        return Err(PowerError::InvalidReference(format!(
            "G* must be in (0, 1], got {g_star}"
        )));
    }
    if w_ref.is_nan() || w_ref < 0.0 {
        return Err(PowerError::InvalidReference(format!(
            "W_ref must be >= 0, got {w_ref}"
        )));
    }
    if w_ref == 0.0 {
        return Err(PowerError::ZeroReference);
    }
    let (beta, s) = fully_driven_maps(gain, g_star);
    let root = (1.0 - gain * (beta + s).cos()).max(0.0).sqrt();
    let impedance = 4.0 * tank.turns_ratio * (s.cos() + 1.0) / (PI * PI * w_ref) * root;
    let omega = frequency_from_impedance(impedance, tank)?;
    Ok(FullyDriven {
        beta,
        s,
        impedance,
        omega,
    })
}

/// Smallest `s_add > 0` with `H(s_add) = H(0)`, the start of the region where
/// extra short-time monotonically reduces power.
pub fn s_add_zero_boundary(refs: &ControlReferences, gain: f64) -> Result<f64, PowerError> {
    check_sigma(refs)?;
    let base = refs.with_s_add(0.0);
    let h0 = gain_term_h(&base, gain)?;
    let h = |s_add: f64| -> Result<f64, PowerError> {
        let r = invert(&base.with_s_add(s_add), gain);
        match r.infeasibility {
            None => Ok(h_term(r.d, r.s, r.beta, refs, gain) - h0),
            Some(reason) => Err(InversionError::Infeasible { gain, reason }.into()),
        }
    };

    let steps = (PI / S_ADD_STEP).round() as usize;
    let mut above = false;
    let mut prev = 0.0;
    for k in 1..=steps {
        let x = if k == steps {
            PI
        } else {
            k as f64 * S_ADD_STEP
        };
        let v = h(x)?;
        if v > 0.0 {
            above = true;
        } else if above {
            let (mut lo, mut hi) = (prev, x);
            while hi - lo > BOUNDARY_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                if h(mid)? > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(hi);
        } else {
            break;
        }
        prev = x;
    }
    Err(PowerError::NoCrossing)
}

/// Commutation parameters and frequency for `(σ*, δ*)` plus power reference
/// `W*`, with regulator corrections applied.
///
/// The solution at the requested `s_add` is returned if it needs no more than
/// `ω_max`. Otherwise the extra short-time is scanned upward in steps of
/// [`S_ADD_STEP`], starting at the low-power boundary when the request was
/// zero, and the first passing step is refined by bisection so that the
/// frequency lands on `ω_max`. `W* = 0` gives a full short at `ω_max`.
pub fn solve_controls(
    refs: &ControlReferences,
    gain: f64,
    w_ref: f64,
    tank: &TankConfig,
    corrections: Corrections,
) -> Result<ControlSolution, PowerError> {
    let problem = Problem::new(refs, gain, w_ref, tank, corrections)?;
    problem.solve(
        || s_add_zero_boundary(&refs.with_s_add(0.0), gain).unwrap_or(0.0),
        None,
    )
}

/// [`solve_controls`] with a shared low-power boundary cache.
///
/// The boundary is computed once per `(σ*, δ*)` and gain bucket of width
/// `1e-3`, at the bucket center so results do not depend on call order.
#[derive(Debug)]
pub struct ControlSolver {
    tank: TankConfig,
    cache: RwLock<HashMap<(u64, u64, i64), f64>>,
}

impl ControlSolver {
    pub fn new(tank: TankConfig) -> Self {
        Self {
            tank,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn tank(&self) -> &TankConfig {
        &self.tank
    }

    pub fn boundary(&self, refs: &ControlReferences, gain: f64) -> f64 {
        let bucket = (gain / GAIN_BUCKET).round() as i64;
        let key = (refs.sigma.to_bits(), refs.delta.to_bits(), bucket);
        if let Some(v) = self.cache.read().unwrap().get(&key) {
            return *v;
        }
        let v =
            s_add_zero_boundary(&refs.with_s_add(0.0), bucket as f64 * GAIN_BUCKET).unwrap_or(0.0);
        self.cache.write().unwrap().insert(key, v);
        v
    }

    pub fn cached_boundaries(&self) -> usize {
        self.cache.read().unwrap().len()
    }

    /// `hint` is a previous `s_add`; the scan walks from there instead of
    /// from the boundary, which gives the same step when power is monotone
    /// in `s_add`.
    pub fn solve(
        &self,
        refs: &ControlReferences,
        gain: f64,
        w_ref: f64,
        corrections: Corrections,
        hint: Option<f64>,
    ) -> Result<ControlSolution, PowerError> {
        let problem = Problem::new(refs, gain, w_ref, &self.tank, corrections)?;
        problem.solve(|| self.boundary(refs, gain), hint)
    }
}

struct Problem<'a> {
    refs: ControlReferences,
    gain: f64,
    w_ref: f64,
    tank: &'a TankConfig,
    corrections: Corrections,
}

enum Candidate {
    Pass(ControlSolution),
    Fail,
}

impl<'a> Problem<'a> {
    fn new(
        refs: &ControlReferences,
        gain: f64,
        w_ref: f64,
        tank: &'a TankConfig,
        corrections: Corrections,
    ) -> Result<Self, PowerError> {
        refs.validate()?;
        check_sigma(refs)?;
        PowerReference::new(w_ref)?;
        if !(gain.is_finite() && gain >= 0.0) {
            return Err(
                InversionError::InvalidReference(format!("gain must be >= 0, got {gain}")).into(),
            );
        }
        Ok(Self {
            refs: *refs,
            gain,
            w_ref,
            tank,
            corrections,
        })
    }

    /// Commutation parameters at `s_add` with corrections, and `H` there.
    fn point(&self, s_add: f64) -> Result<(f64, f64, f64, Mode, f64), PowerError> {
        let r = invert(&self.refs.with_s_add(s_add), self.gain);
        if let Some(reason) = r.infeasibility {
            return Err(InversionError::Infeasible {
                gain: self.gain,
                reason,
            }
            .into());
        }
        let sigma_reg = self.corrections.sigma;
        let (d, s) = match r.mode {
            // q = d: overflow past π spills into the short-time.
            Mode::Buck => {
                let q = r.d + sigma_reg;
                if q <= PI {
                    (q.max(0.0), r.s)
                } else {
                    (PI, (q - PI).min(PI))
                }
            }
            // q = s + π: underflow spills into the on-time.
            Mode::Boost => {
                let t = r.s + sigma_reg;
                if t >= 0.0 {
                    (r.d, t.min(PI))
                } else {
                    ((r.d + t).max(0.0), 0.0)
                }
            }
        };
        let beta = (r.beta + self.corrections.delta).clamp(-PI, PI);
        let h = h_term(d, s, beta, &self.refs, self.gain);
        Ok((d, s, beta, r.mode, h))
    }

    fn evaluate(&self, s_add: f64) -> Result<Candidate, PowerError> {
        let (d, s, beta, mode, h) = self.point(s_add)?;
        if h < -H_ROUNDOFF {
            return Err(PowerError::NegativeGainTerm(h));
        }
        if h <= H_ROUNDOFF {
            // Delivers nothing at any frequency.
            return Ok(Candidate::Fail);
        }
        let z = (required_impedance(h, self.w_ref, self.tank.turns_ratio)?
            - self.corrections.impedance)
            .max(0.0);
        let omega = frequency_from_impedance(z, self.tank)?;
        if omega > self.tank.omega_max {
            return Ok(Candidate::Fail);
        }
        Ok(Candidate::Pass(ControlSolution {
            d,
            s,
            beta,
            omega,
            s_add,
            mode,
            h,
        }))
    }

    /// Scan candidates never abort the search; they just fail.
    fn scan_evaluate(&self, s_add: f64) -> Option<ControlSolution> {
        match self.evaluate(s_add) {
            Ok(Candidate::Pass(sol)) => Some(sol),
            _ => None,
        }
    }

    fn solve(
        &self,
        boundary: impl FnOnce() -> f64,
        hint: Option<f64>,
    ) -> Result<ControlSolution, PowerError> {
        if self.w_ref == 0.0 {
            let (d, s, beta, mode, h) = self.point(PI)?;
            return Ok(ControlSolution {
                d,
                s,
                beta,
                omega: self.tank.omega_max,
                s_add: PI,
                mode,
                h,
            });
        }
        let requested = self.refs.s_add;
        if let Candidate::Pass(sol) = self.evaluate(requested)? {
            return Ok(sol);
        }

        let start = if requested == 0.0 {
            boundary().max(requested)
        } else {
            requested
        };
        let full = ((PI - start) / S_ADD_STEP).floor() as usize;
        let last_on_grid = start + full as f64 * S_ADD_STEP;
        let count = if PI - last_on_grid > 1e-15 {
            full + 2
        } else {
            full + 1
        };
        let grid = |k: usize| {
            if k > full {
                PI
            } else {
                start + k as f64 * S_ADD_STEP
            }
        };

        let mut k = hint
            .filter(|h| *h >= start)
            .map(|h| (((h - start) / S_ADD_STEP).round() as usize).min(count - 1))
            .unwrap_or(0);
        let found = if let Some(sol) = self.scan_evaluate(grid(k)) {
            let mut best = sol;
            while k > 0 {
                match self.scan_evaluate(grid(k - 1)) {
                    Some(sol) => {
                        best = sol;
                        k -= 1;
                    }
                    None => break,
                }
            }
            Some((k, best))
        } else {
            (k + 1..count)
                .chain(0..k)
                .find_map(|j| self.scan_evaluate(grid(j)).map(|sol| (j, sol)))
        };
        let (k, mut best) = found.ok_or(PowerError::UnreachablePower(self.w_ref))?;
        if k == 0 {
            return Ok(best);
        }

        let (mut lo, mut hi) = (grid(k - 1), grid(k));
        while hi - lo > S_ADD_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            match self.scan_evaluate(mid) {
                Some(sol) => {
                    best = sol;
                    hi = mid;
                }
                None => lo = mid,
            }
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference_tank() -> TankConfig {
        TankConfig::new(80e-6, 47e-9, 1.0, 2.0 * PI * 165e3).unwrap()
    }

    #[test]
    fn h_examples() {
        let h = gain_term_h(&ControlReferences::new(0.0, 0.0), 0.5).unwrap();
        assert_relative_eq!(h, 8.0, max_relative = 1e-15);
        let h = gain_term_h(&ControlReferences::new(0.0, 0.0), 1.0).unwrap();
        assert!(h.abs() < 1e-14);
    }

    #[test]
    fn impedance_examples() {
        let n = 1.3;
        let w = 8.0 * n / (2.0 * PI * PI * 100.0);
        assert_relative_eq!(
            required_impedance(8.0, w, n).unwrap(),
            100.0,
            max_relative = 1e-14
        );
        assert_eq!(required_impedance(0.0, 0.1, n).unwrap(), 0.0);
        assert_eq!(
            required_impedance(8.0, 0.0, n),
            Err(PowerError::ZeroReference)
        );
    }

    #[test]
    fn resonance_at_zero_impedance() {
        let t = reference_tank();
        let w = frequency_from_impedance(0.0, &t).unwrap();
        assert_relative_eq!(w, 1.0 / (80e-6f64 * 47e-9).sqrt(), max_relative = 1e-14);
        assert!(frequency_from_impedance(-1.0, &t).is_err());
    }

    #[test]
    fn fully_driven_boundaries() {
        let t = reference_tank();
        let w = 0.05;
        let fd = fully_driven_frequency(0.0, 1.0, w, &t).unwrap();
        assert_relative_eq!(fd.impedance, 8.0 / (PI * PI * w), max_relative = 1e-14);
        let fd = fully_driven_frequency(1.0, 1.0, w, &t).unwrap();
        assert_eq!(fd.impedance, 0.0);
        assert_relative_eq!(fd.omega, t.resonant_omega(), max_relative = 1e-14);
    }

    #[test]
    fn zero_reference_is_full_short() {
        let t = reference_tank();
        let sol = solve_controls(
            &ControlReferences::new(0.1, 0.0),
            0.7,
            0.0,
            &t,
            Corrections::default(),
        )
        .unwrap();
        assert_eq!(sol.s_add, PI);
        assert_eq!(sol.s, PI);
        assert_eq!(sol.omega, t.omega_max);
        assert_eq!(sol.achieved_w(0.7, &t).unwrap(), 0.0);
    }

    #[test]
    fn analytic_branch_returns_requested_s_add() {
        let t = reference_tank();
        let refs = ControlReferences::new(0.1, 0.0);
        let sol = solve_controls(&refs, 0.7, 0.05, &t, Corrections::default()).unwrap();
        assert_eq!(sol.s_add, 0.0);
        assert!(sol.omega < t.omega_max);
        assert_relative_eq!(sol.achieved_w(0.7, &t).unwrap(), 0.05, max_relative = 1e-9);
    }

    #[test]
    fn cached_solver_matches_free_function() {
        let t = reference_tank();
        let solver = ControlSolver::new(t);
        let refs = ControlReferences::new(0.1, 0.0);
        for w in [0.001, 0.004, 0.008] {
            let a = solve_controls(&refs, 0.7, w, &t, Corrections::default()).unwrap();
            let b = solver
                .solve(&refs, 0.7, w, Corrections::default(), None)
                .unwrap();
            let c = solver
                .solve(&refs, 0.7, w, Corrections::default(), Some(a.s_add))
                .unwrap();
            assert_eq!(a, b);
            assert_eq!(a, c);
        }
        assert_eq!(solver.cached_boundaries(), 1);
    }

    #[test]
    fn stale_hint_at_full_short() {
        let solver = ControlSolver::new(reference_tank());
        let refs = ControlReferences::new(0.1, 0.05);
        for w in [0.002, 0.006] {
            let a = solver
                .solve(&refs, 0.75, w, Corrections::default(), None)
                .unwrap();
            let b = solver
                .solve(&refs, 0.75, w, Corrections::default(), Some(PI))
                .unwrap();
            assert!(
                (a.s_add - b.s_add).abs() < 1e-9,
                "{} vs {}",
                a.s_add,
                b.s_add
            );
        }
    }
}
