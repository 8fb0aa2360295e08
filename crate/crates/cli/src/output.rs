//! CSV writers. Floats carry 17 significant digits in `e` notation, so the
//! output is exact, locale-free and identical across platforms.

use std::io::Write;

use dbsrc_core::sweep::{LowPowerRow, MapRow, TrajectoryRow};
use dbsrc_core::TraceRow;

use crate::CliError;

pub const MAP_HEADER: [&str; 6] = ["sigma_ref", "delta_ref", "d", "s", "beta", "feasible"];
pub const TRAJECTORY_HEADER: [&str; 11] = [
    "t",
    "G",
    "sigma_ref",
    "delta_ref",
    "s_add",
    "sigma",
    "delta",
    "d",
    "s",
    "beta",
    "feasible",
];
pub const LOWPOWER_HEADER: [&str; 4] = ["G", "s_add", "W_over_W0", "s_add_0"];
pub const TRACE_HEADER: [&str; 15] = [
    "t",
    "G",
    "I_ref",
    "I_out",
    "V_bat",
    "d",
    "s",
    "beta",
    "omega",
    "sigma",
    "delta",
    "sigma_ref",
    "delta_ref",
    "s_add",
    "W",
];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_bool(b: bool) -> String {
    u8::from(b).to_string()
}

fn write_rows<W: Write, const N: usize>(
    out: W,
    header: [&str; N],
    rows: impl Iterator<Item = [String; N]>,
) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_map<W: Write>(out: W, rows: &[MapRow]) -> Result<(), CliError> {
    write_rows(
        out,
        MAP_HEADER,
        rows.iter().map(|r| {
            let f = fmt_f64;
            [
                f(r.sigma_ref),
                f(r.delta_ref),
                f(r.d),
                f(r.s),
                f(r.beta),
                fmt_bool(r.feasible),
            ]
        }),
    )
}

pub fn write_trajectory<W: Write>(out: W, rows: &[TrajectoryRow]) -> Result<(), CliError> {
    write_rows(
        out,
        TRAJECTORY_HEADER,
        rows.iter().map(|r| {
            let f = fmt_f64;
            [
                f(r.t),
                f(r.gain),
                f(r.sigma_ref),
                f(r.delta_ref),
                f(r.s_add),
                f(r.sigma),
                f(r.delta),
                f(r.d),
                f(r.s),
                f(r.beta),
                fmt_bool(r.feasible),
            ]
        }),
    )
}

pub fn write_lowpower<W: Write>(out: W, rows: &[LowPowerRow]) -> Result<(), CliError> {
    write_rows(
        out,
        LOWPOWER_HEADER,
        rows.iter()
            .map(|r| [r.gain, r.s_add, r.w_over_w0, r.s_add_0].map(fmt_f64)),
    )
}

pub fn write_trace<W: Write>(out: W, rows: &[TraceRow]) -> Result<(), CliError> {
    write_rows(
        out,
        TRACE_HEADER,
        rows.iter().map(|r| {
            [
                r.t,
                r.gain,
                r.i_ref,
                r.i_out,
                r.v_bat,
                r.d,
                r.s,
                r.beta,
                r.omega,
                r.sigma,
                r.delta,
                r.sigma_ref,
                r.delta_ref,
                r.s_add,
                r.w,
            ]
            .map(fmt_f64)
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(400.0), "4.0000000000000000e2");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
