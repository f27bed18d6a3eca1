//! Design field -> filtered field -> projected physical field, with the
//! derivatives needed to pull sensitivities back to the design variables.

use crate::error::{Error, Result};
use crate::mesh::{GridMesh, PassiveSet};

/// Below this sharpness the projection is replaced by its identity limit.
pub const BETA_IDENTITY_LIMIT: f64 = 1e-9;

/// Row-normalized density filter, `x̃ = W x`.
#[derive(Debug, Clone)]
pub struct FilterOperator {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

impl FilterOperator {
    pub fn new(mesh: &GridMesh, rmin: f64) -> Result<Self> {
        let n = mesh.num_elements();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        row_ptr.push(0);
        for e in 0..n {
            let neighbors = mesh.neighbor_elements(e, rmin)?;
            let total: f64 = neighbors.iter().map(|(_, d)| rmin - d).sum();
            for (i, d) in neighbors {
                cols.push(i);
                weights.push((rmin - d) / total);
            }
            row_ptr.push(cols.len());
        }
        Ok(Self { n, row_ptr, cols, weights })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, e: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[e]..self.row_ptr[e + 1];
        self.cols[range.clone()].iter().copied().zip(self.weights[range].iter().copied())
    }

    pub fn weight(&self, e: usize, i: usize) -> f64 {
        self.row(e).find(|(j, _)| *j == i).map_or(0.0, |(_, w)| w)
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x.len())?;
        Ok((0..self.n).map(|e| self.row(e).map(|(i, w)| w * x[i]).sum()).collect())
    }

    /// `Wᵀ g`.
    pub fn apply_transpose(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.check(g.len())?;
        let mut out = vec![0.0; self.n];
        for (e, ge) in g.iter().enumerate() {
            for (i, w) in self.row(e) {
                out[i] += w * ge;
            }
        }
        Ok(out)
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::LengthMismatch { what: "filter input", expected: self.n, actual: len });
        }
        Ok(())
    }
}

pub fn build_filter(mesh: &GridMesh, rmin: f64) -> Result<FilterOperator> {
    FilterOperator::new(mesh, rmin)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionParams {
    pub beta: f64,
    pub eta: f64,
}

impl ProjectionParams {
    pub fn new(beta: f64, eta: f64) -> Self {
        Self { beta, eta }
    }
}

/// Smoothed Heaviside threshold projection.
pub fn project(xt: f64, beta: f64, eta: f64) -> f64 {
    if beta < BETA_IDENTITY_LIMIT {
        return xt;
    }
    let a = (beta * eta).tanh();
    (a + (beta * (xt - eta)).tanh()) / (a + (beta * (1.0 - eta)).tanh())
}

pub fn project_derivative(xt: f64, beta: f64, eta: f64) -> f64 {
    if beta < BETA_IDENTITY_LIMIT {
        return 1.0;
    }
    let sech = 1.0 / (beta * (xt - eta)).cosh();
    beta * sech * sech / ((beta * eta).tanh() + (beta * (1.0 - eta)).tanh())
}

/// Modified SIMP modulus.
pub fn simp_young(xp: f64, e0: f64, emin: f64, penal: f64) -> f64 {
    emin + xp.powf(penal) * (e0 - emin)
}

pub fn simp_young_derivative(xp: f64, e0: f64, emin: f64, penal: f64) -> f64 {
    if xp == 0.0 {
        return if penal == 1.0 { e0 - emin } else { 0.0 };
    }
    penal * xp.powf(penal - 1.0) * (e0 - emin)
}

/// Gray-level indicator, `(4/N) Σ x̄(1 − x̄)`.
pub fn gray_level(xphys: &[f64]) -> f64 {
    if xphys.is_empty() {
        return 0.0;
    }
    4.0 * xphys.iter().map(|x| x * (1.0 - x)).sum::<f64>() / xphys.len() as f64
}

pub fn volume_fraction(xphys: &[f64]) -> f64 {
    xphys.iter().sum::<f64>() / xphys.len() as f64
}

/// Pulls `df/dx̄` back to `df/dx`: `Wᵀ (df/dx̄ ⊙ dx̄/dx̃)`, zero at passive elements.
pub fn chain_to_design(
    df_dxphys: &[f64],
    filter: &FilterOperator,
    projection_derivative: &[f64],
    passive: &PassiveSet,
) -> Result<Vec<f64>> {
    if projection_derivative.len() != df_dxphys.len() {
        return Err(Error::LengthMismatch {
            what: "projection derivative",
            expected: df_dxphys.len(),
            actual: projection_derivative.len(),
        });
    }
    let mut g: Vec<f64> = df_dxphys.iter().zip(projection_derivative).map(|(a, b)| a * b).collect();
    // pinned x̄ does not depend on x̃
    for e in passive.solid().chain(passive.void()) {
        g[e] = 0.0;
    }
    let mut out = filter.apply_transpose(&g)?;
    for e in passive.solid().chain(passive.void()) {
        out[e] = 0.0;
    }
    Ok(out)
}

/// The three element-wise fields of the current design.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignField {
    pub x: Vec<f64>,
    pub x_filtered: Vec<f64>,
    pub x_phys: Vec<f64>,
    /// `dx̄/dx̃` at the current state (zero at passive elements).
    pub dproj: Vec<f64>,
}

impl DesignField {
    pub fn evaluate(
        x: Vec<f64>,
        filter: &FilterOperator,
        proj: ProjectionParams,
        passive: &PassiveSet,
    ) -> Result<Self> {
        let x_filtered = filter.apply(&x)?;
        let mut x_phys: Vec<f64> = x_filtered.iter().map(|&t| project(t, proj.beta, proj.eta)).collect();
        let mut dproj: Vec<f64> =
            x_filtered.iter().map(|&t| project_derivative(t, proj.beta, proj.eta)).collect();
        for e in passive.solid().chain(passive.void()) {
            x_phys[e] = passive.pinned(e).unwrap_or(x_phys[e]);
            dproj[e] = 0.0;
        }
        Ok(Self { x, x_filtered, x_phys, dproj })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn gray_level(&self) -> f64 {
        gray_level(&self.x_phys)
    }

    pub fn volume(&self) -> f64 {
        volume_fraction(&self.x_phys)
    }

    pub fn chain(&self, df_dxphys: &[f64], filter: &FilterOperator, passive: &PassiveSet) -> Result<Vec<f64>> {
        chain_to_design(df_dxphys, filter, &self.dproj, passive)
    }
}
