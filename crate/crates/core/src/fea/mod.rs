//! Plane-stress finite-element analysis on the structured grid.

pub mod band;
pub mod buckling;
pub mod element;
pub mod system;

pub use buckling::{
    buckling_eigs, buckling_sensitivity, eigenvalue_gradient, stress_stiffness, BucklingResult,
    EigenSettings,
};
pub use element::{element_stiffness, ElementStiffness, Q4Element};
pub use system::{assemble_and_solve, Equilibrium, Factor, FeModel, LinearSolver};

use crate::error::{Error, Result};
use crate::mesh::LoadSet;
use crate::threefield::{simp_young, simp_young_derivative};

/// Linear-elastic material with modified SIMP interpolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub e0: f64,
    pub emin: f64,
    pub nu: f64,
    pub penal: f64,
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        if !(self.e0 > self.emin && self.emin > 0.0) {
            return Err(Error::InvalidParameter {
                name: "material",
                reason: format!("need E0 > Emin > 0, got E0={} Emin={}", self.e0, self.emin),
            });
        }
        if !(0.0..0.5).contains(&self.nu) {
            return Err(Error::InvalidParameter { name: "nu", reason: format!("{} not in [0, 0.5)", self.nu) });
        }
        if !(self.penal >= 1.0) {
            return Err(Error::InvalidParameter { name: "penal", reason: format!("{} < 1", self.penal) });
        }
        Ok(())
    }

    pub fn young(&self, xphys: f64) -> f64 {
        simp_young(xphys, self.e0, self.emin, self.penal)
    }

    pub fn dyoung(&self, xphys: f64) -> f64 {
        simp_young_derivative(xphys, self.e0, self.emin, self.penal)
    }

    pub fn young_field(&self, xphys: &[f64]) -> Vec<f64> {
        xphys.iter().map(|&x| self.young(x)).collect()
    }
}

/// Compliance `fᵀu` and its derivative with respect to the physical densities.
pub fn compliance_and_sensitivity(
    model: &FeModel,
    u: &[f64],
    loads: &LoadSet,
    xphys: &[f64],
    material: &Material,
) -> (f64, Vec<f64>) {
    let c = loads.iter().map(|(d, f)| f * u[d]).sum();
    let ke = model.ke();
    let dc = xphys
        .iter()
        .enumerate()
        .map(|(e, &x)| {
            let ue = model.gather(u, e);
            -material.dyoung(x) * ke.bilinear(&ue, &ue)
        })
        .collect();
    (c, dc)
}

/// Kreisselmeier–Steinhauser aggregate of `values` and its weights `∂KS/∂μ_i`.
pub fn ks_aggregate(values: &[f64], rho: f64) -> (f64, Vec<f64>) {
    assert!(!values.is_empty(), "K-S aggregate of an empty set");
    assert!(rho > 0.0, "K-S parameter must be positive");
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (rho * (v - max)).exp()).collect();
    let sum: f64 = exps.iter().sum();
    (max + sum.ln() / rho, exps.iter().map(|e| e / sum).collect())
}
