//! Optimality-criteria update for problems with a single volume constraint.

use crate::error::{Error, Result};

/// Smallest value the OC ratio `−df/(λ dV)` is allowed to take.
const RATIO_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcParams {
    pub move_limit: f64,
    /// Exponent applied to the optimality ratio.
    pub damping: f64,
    /// Allowed `|V − V*|` on the physical volume fraction.
    pub tolerance: f64,
    pub bracket: (f64, f64),
}

impl Default for OcParams {
    fn default() -> Self {
        Self { move_limit: 0.2, damping: 0.5, tolerance: 1e-6, bracket: (0.0, 1e9) }
    }
}

impl OcParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.move_limit > 0.0 && self.move_limit <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "oc.move",
                reason: format!("{} not in (0, 1]", self.move_limit),
            });
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "oc.damping",
                reason: format!("{} not in (0, 1]", self.damping),
            });
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter {
                name: "oc.tolerance",
                reason: format!("{} must be positive", self.tolerance),
            });
        }
        Ok(())
    }
}

fn candidate(x: &[f64], df: &[f64], dv: &[f64], lambda: f64, p: &OcParams) -> Vec<f64> {
    x.iter()
        .zip(df)
        .zip(dv)
        .map(|((&xe, &g), &v)| {
            if v == 0.0 {
                return xe;
            }
            let ratio = if lambda == 0.0 { f64::INFINITY } else { ((-g).max(0.0) / (lambda * v)).max(RATIO_FLOOR) };
            let lo = (xe - p.move_limit).max(0.0);
            let hi = (xe + p.move_limit).min(1.0);
            (xe * ratio.powf(p.damping)).clamp(lo, hi)
        })
        .collect()
}

/// One optimality-criteria step.
///
/// `physical_volume` maps a candidate design to the volume fraction of its
/// physical field; the Lagrange multiplier is bisected until that volume
/// matches `volfrac` within the tolerance (or the volume stays below
/// `volfrac` with every variable at its upper move limit). Entries with
/// `dv = 0` are left unchanged.
pub fn oc_update<F>(x: &[f64], df: &[f64], dv: &[f64], volfrac: f64, params: &OcParams, mut physical_volume: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if df.len() != x.len() || dv.len() != x.len() {
        return Err(Error::LengthMismatch {
            what: "optimality-criteria sensitivities",
            expected: x.len(),
            actual: if df.len() != x.len() { df.len() } else { dv.len() },
        });
    }
    let (mut l1, mut l2) = params.bracket;
    let upper = candidate(x, df, dv, l1, params);
    let v_upper = physical_volume(&upper)?;
    if v_upper <= volfrac + params.tolerance {
        return Ok(upper);
    }
    let lower = candidate(x, df, dv, l2, params);
    let v_lower = physical_volume(&lower)?;
    if v_lower > volfrac + params.tolerance {
        return Err(Error::OcBracket(format!(
            "volume {v_lower} still above {volfrac} at multiplier {l2}"
        )));
    }
    if (v_lower - volfrac).abs() <= params.tolerance {
        return Ok(lower);
    }
    let mut last = (l1, l2, v_upper, v_lower);
    for _ in 0..2000 {
        let mid = if l1 > 0.0 { (l1 * l2).sqrt() } else { 0.5 * l2 };
        if mid <= l1 || mid >= l2 {
            break;
        }
        let xn = candidate(x, df, dv, mid, params);
        let v = physical_volume(&xn)?;
        if (v - volfrac).abs() <= params.tolerance {
            return Ok(xn);
        }
        if v > volfrac {
            l1 = mid;
            last.2 = v;
        } else {
            l2 = mid;
            last.3 = v;
        }
        last.0 = l1;
        last.1 = l2;
    }
    Err(Error::OcBracket(format!(
        "bisection stalled in [{}, {}] with volumes {} / {} around target {volfrac}",
        last.0, last.1, last.2, last.3
    )))
}
