use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::field::interpolation_proxy;
use crate::schedule::Schedule;
use crate::stage_corrugate::StageReport;

use super::injectivity::Injectivity;

/// What the table needs from one executed stage besides its report.
#[derive(Clone, Debug)]
pub struct StageRecord {
    pub report: StageReport,
    /// `‖D²(u_{q+1} − u_q)‖₀`.
    pub d2_increment_sup: f64,
    pub injectivity: Injectivity,
    /// `‖u_{q+1} − ū‖₀` on the disk of `u_{q+1}`.
    pub distance: f64,
}

/// Row `q` describes `u_{q+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub q: usize,
    pub radius: f64,
    /// `‖g − u_{q+1}♯e‖₀`, copied from the stage report.
    pub defect_sup: f64,
    /// Hölder proxy of `g_{q+1} − u_{q+1}♯e`, copied from the stage report.
    pub defect_alpha: f64,
    /// Interpolation proxy of `‖D(u_{q+1} − u_q)‖_β`.
    pub increment_beta: f64,
    /// `δ_{q+1}^{1/2} λ_{q+1}^β` with the stage's scaled `δ`.
    pub bound: f64,
    pub ratio: f64,
    pub injectivity: f64,
    pub distance: f64,
}

pub fn convergence_report(history: &[StageRecord], beta: f64) -> Vec<ConvergenceRow> {
    history
        .iter()
        .map(|h| {
            let r = &h.report;
            let increment_beta = interpolation_proxy(r.d_displacement_sup, h.d2_increment_sup, beta);
            let bound = r.delta_q1.sqrt() * r.lambda.powf(beta);
            ConvergenceRow {
                q: r.q,
                radius: r.radius,
                defect_sup: r.defect_vs_g_sup,
                defect_alpha: r.defect_alpha,
                increment_beta,
                bound,
                ratio: increment_beta / bound,
                injectivity: h.injectivity.margin(),
                distance: h.distance,
            }
        })
        .collect()
}

/// `log_a` of `δ_{q+1}^{1/2} λ_{q+1}^β` for `q = 0..count`. The sequence
/// decays (and the increments sum in `C^{1,β}`) iff `β < 1/(2bc)`.
pub fn log_bound_sequence(schedule: &Schedule, beta: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|q| 0.5 * schedule.log_delta(q + 1) + beta * schedule.log_lambda(q + 1))
        .collect()
}

pub fn write_table_csv<W: Write>(rows: &[ConvergenceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
