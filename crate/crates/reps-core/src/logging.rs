//! Per-iteration solver records and their CSV serialization.
//!
//! CSV schema (exact solver): `t,jd,grad_l1,grad_l2,grad_linf,v_linf,ns`.
//! The stochastic solver appends `cum_samples,jd_avg`. Floats are written
//! with 17 significant digits so the files round-trip exactly. The `ns`
//! column is wall-clock nanoseconds per recorded step; writers take a
//! `deterministic` flag that zeroes it so repeated runs of the same seed
//! produce byte-identical files.

use crate::scalar::Scalar;

/// One recorded iterate of the exact dual solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateRecord<T> {
    pub t: u64,
    /// Dual objective at the iterate.
    pub jd: T,
    pub grad_l1: T,
    pub grad_l2: T,
    pub grad_linf: T,
    pub v_linf: T,
    /// Wall-clock nanoseconds since the previous record.
    pub ns: u64,
}

/// One recorded iterate of the stochastic solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdRecord<T> {
    pub t: u64,
    /// Dual objective at the current iterate `v_t`.
    pub jd: T,
    /// Exact dual-gradient norms at `v_t` (diagnostics, not used to step).
    pub grad_l1: T,
    pub grad_l2: T,
    pub grad_linf: T,
    pub v_linf: T,
    pub ns: u64,
    /// Total environment samples drawn so far (model batch + final draws).
    pub cum_samples: u64,
    /// Dual objective at the running average of the iterates.
    pub jd_avg: T,
}

/// Float formatting used in CSV files: 17 significant digits, enough for
/// exact `f64` round-trip.
pub fn fmt_float<T: Scalar>(x: T) -> String {
    format!("{:.16e}", x.to_real())
}

/// Iterate log of an exact-solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateLog<T> {
    pub records: Vec<IterateRecord<T>>,
}

impl<T> Default for IterateLog<T> {
    fn default() -> Self {
        IterateLog { records: Vec::new() }
    }
}

impl<T: Scalar> IterateLog<T> {
    pub const CSV_HEADER: &'static str = "t,jd,grad_l1,grad_l2,grad_linf,v_linf,ns";

    pub fn csv_string(&self, deterministic: bool) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let ns = if deterministic { 0 } else { r.ns };
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.t,
                fmt_float(r.jd),
                fmt_float(r.grad_l1),
                fmt_float(r.grad_l2),
                fmt_float(r.grad_linf),
                fmt_float(r.v_linf),
                ns
            ));
        }
        out
    }

    pub fn last(&self) -> Option<&IterateRecord<T>> {
        self.records.last()
    }
}

/// Multipliers and dispersion bookkeeping of a stochastic run.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdDiagnostics<T> {
    /// Multiplier applied to the accuracy schedule `xi_t`.
    pub xi_multiplier: f64,
    /// Multiplier applied to the step-size schedule `tau_t`.
    pub tau_multiplier: f64,
    /// Multiplier applied to the per-step sample schedule `n(t)`.
    pub n_multiplier: f64,
    /// Theoretical dispersion bound `8/beta` on `||g_hat - E[g_hat | model]||`.
    pub dispersion_bound: T,
    /// Largest dispersion observed at a logged step (l1, the largest of the
    /// three norms for a 2-sparse difference).
    pub max_dispersion: T,
    /// Logged steps where dispersion exceeded the bound.
    pub dispersion_violations: u64,
    /// Logged steps whose empirical model had unvisited state-action pairs.
    pub zero_count_steps: u64,
    /// Total samples drawn over the run.
    pub total_samples: u64,
}

/// Iterate log of a stochastic-solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdLog<T> {
    pub records: Vec<SgdRecord<T>>,
    pub diagnostics: SgdDiagnostics<T>,
}

impl<T: Scalar> SgdLog<T> {
    pub const CSV_HEADER: &'static str = "t,jd,grad_l1,grad_l2,grad_linf,v_linf,ns,cum_samples,jd_avg";

    pub fn csv_string(&self, deterministic: bool) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let ns = if deterministic { 0 } else { r.ns };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.t,
                fmt_float(r.jd),
                fmt_float(r.grad_l1),
                fmt_float(r.grad_l2),
                fmt_float(r.grad_linf),
                fmt_float(r.v_linf),
                ns,
                r.cum_samples,
                fmt_float(r.jd_avg)
            ));
        }
        out
    }
}
