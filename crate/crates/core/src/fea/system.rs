//! Global assembly over the free DOFs and the static solve.

use crate::error::{Error, Result};
use crate::fea::band::{BandCholesky, SymBandMatrix};
use crate::fea::element::{ElementStiffness, Q4Element};
use crate::mesh::{GridMesh, LoadSet, SupportSet};

/// Linear solver used for the reduced stiffness system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearSolver {
    Cholesky,
    /// Jacobi-preconditioned conjugate gradient.
    ConjugateGradient { tolerance: f64, max_iterations: usize },
}

impl Default for LinearSolver {
    fn default() -> Self {
        LinearSolver::Cholesky
    }
}

/// Fixed DOFs are eliminated; the remaining DOFs are renumbered so that nodes
/// are visited along the shorter side of the grid, which keeps the band narrow.
#[derive(Debug, Clone)]
pub struct FeModel {
    mesh: GridMesh,
    element: Q4Element,
    ke: ElementStiffness,
    reduced_of: Vec<Option<usize>>,
    free: Vec<usize>,
    element_reduced: Vec<[Option<usize>; 8]>,
    bandwidth: usize,
    solver: LinearSolver,
}

impl FeModel {
    pub fn new(mesh: &GridMesh, nu: f64, supports: &SupportSet) -> Result<Self> {
        let element = Q4Element::new(nu, mesh.h(), mesh.thickness())?;
        let ke = element.stiffness();

        let (nx, ny) = (mesh.nelx() + 1, mesh.nely() + 1);
        let node_order: Vec<usize> = if mesh.nelx() >= mesh.nely() {
            (0..mesh.num_nodes()).collect()
        } else {
            (0..ny).flat_map(|row| (0..nx).map(move |ix| (ix, row))).map(|(ix, row)| mesh.node(ix, row)).collect()
        };
        let mut reduced_of = vec![None; mesh.num_dofs()];
        let mut free = Vec::with_capacity(mesh.num_dofs());
        for node in node_order {
            for d in [2 * node, 2 * node + 1] {
                if !supports.contains(d) {
                    reduced_of[d] = Some(free.len());
                    free.push(d);
                }
            }
        }
        let mut bandwidth = 0;
        let element_reduced: Vec<[Option<usize>; 8]> = (0..mesh.num_elements())
            .map(|e| {
                let dofs = mesh.element_dofs_unchecked(e);
                let red: [Option<usize>; 8] = std::array::from_fn(|k| reduced_of[dofs[k]]);
                let ids: Vec<usize> = red.iter().flatten().copied().collect();
                if let (Some(lo), Some(hi)) = (ids.iter().min(), ids.iter().max()) {
                    bandwidth = bandwidth.max(hi - lo);
                }
                red
            })
            .collect();
        Ok(Self {
            mesh: mesh.clone(),
            element,
            ke,
            reduced_of,
            free,
            element_reduced,
            bandwidth,
            solver: LinearSolver::Cholesky,
        })
    }

    pub fn with_solver(mut self, solver: LinearSolver) -> Self {
        self.solver = solver;
        self
    }

    pub fn mesh(&self) -> &GridMesh {
        &self.mesh
    }

    pub fn element(&self) -> &Q4Element {
        &self.element
    }

    pub fn ke(&self) -> &ElementStiffness {
        &self.ke
    }

    pub fn num_free(&self) -> usize {
        self.free.len()
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn reduced_index(&self, dof: usize) -> Option<usize> {
        self.reduced_of[dof]
    }

    pub fn reduce(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| full[d]).collect()
    }

    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.mesh.num_dofs()];
        for (r, &d) in self.free.iter().enumerate() {
            full[d] = reduced[r];
        }
        full
    }

    /// Element-local slice of a full DOF vector.
    pub fn gather(&self, full: &[f64], e: usize) -> [f64; 8] {
        let dofs = self.mesh.element_dofs_unchecked(e);
        std::array::from_fn(|k| full[dofs[k]])
    }

    /// Adds element-local contributions into a reduced vector.
    pub(crate) fn scatter_reduced(&self, e: usize, local: &[f64; 8], out: &mut [f64]) {
        for (k, r) in self.element_reduced[e].iter().enumerate() {
            if let Some(r) = r {
                out[*r] += local[k];
            }
        }
    }

    /// Assembles `Σ_e scale_e · m_e` over the free DOFs.
    pub(crate) fn assemble_with<F>(&self, mut element_matrix: F) -> SymBandMatrix
    where
        F: FnMut(usize) -> Option<[[f64; 8]; 8]>,
    {
        let mut k = SymBandMatrix::zeros(self.free.len(), self.bandwidth);
        for e in 0..self.mesh.num_elements() {
            let Some(m) = element_matrix(e) else { continue };
            let red = &self.element_reduced[e];
            for a in 0..8 {
                let Some(ra) = red[a] else { continue };
                for b in 0..8 {
                    let Some(rb) = red[b] else { continue };
                    if rb <= ra {
                        k.add(ra, rb, m[a][b]);
                    }
                }
            }
        }
        k
    }

    pub fn assemble_stiffness(&self, young: &[f64]) -> Result<SymBandMatrix> {
        self.check_young(young)?;
        let ke = &self.ke.0;
        Ok(self.assemble_with(|e| {
            let ee = young[e];
            Some(std::array::from_fn(|a| std::array::from_fn(|b| ee * ke[a][b])))
        }))
    }

    fn check_young(&self, young: &[f64]) -> Result<()> {
        let n = self.mesh.num_elements();
        if young.len() != n {
            return Err(Error::LengthMismatch { what: "young field", expected: n, actual: young.len() });
        }
        if let Some((e, v)) = young.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "young",
                reason: format!("element {e} has non-positive modulus {v}"),
            });
        }
        Ok(())
    }

    pub fn factorize(&self, k: SymBandMatrix) -> Result<Factor> {
        match self.solver {
            LinearSolver::Cholesky => {
                let chol = k.cholesky()?;
                Ok(Factor { matrix: k, kind: FactorKind::Cholesky(chol) })
            }
            LinearSolver::ConjugateGradient { tolerance, max_iterations } => {
                let diag = k.diagonal();
                if let Some((i, d)) = diag.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
                    return Err(Error::SingularStiffness { dof: i, pivot: *d, diagonal: *d });
                }
                let inv_diag = diag.iter().map(|d| 1.0 / d).collect();
                Ok(Factor { matrix: k, kind: FactorKind::Cg { inv_diag, tolerance, max_iterations } })
            }
        }
    }

    /// Assembles, factorizes and solves `K u = f`; `u` is returned over all DOFs.
    pub fn solve(&self, young: &[f64], loads: &LoadSet) -> Result<Equilibrium> {
        let k = self.assemble_stiffness(young)?;
        let factor = self.factorize(k)?;
        let f = self.reduce(&loads.to_vector(self.mesh.num_dofs()));
        let ur = factor.solve(&f)?;
        Ok(Equilibrium { u: self.expand(&ur), factor })
    }
}

#[derive(Debug, Clone)]
enum FactorKind {
    Cholesky(BandCholesky),
    Cg { inv_diag: Vec<f64>, tolerance: f64, max_iterations: usize },
}

/// A reduced stiffness matrix prepared for repeated solves.
#[derive(Debug, Clone)]
pub struct Factor {
    matrix: SymBandMatrix,
    kind: FactorKind,
}

impl Factor {
    pub fn matrix(&self) -> &SymBandMatrix {
        &self.matrix
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match &self.kind {
            FactorKind::Cholesky(c) => Ok(c.solve(b)),
            FactorKind::Cg { inv_diag, tolerance, max_iterations } => {
                pcg(&self.matrix, inv_diag, b, *tolerance, *max_iterations)
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn pcg(a: &SymBandMatrix, inv_diag: &[f64], b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        let ap = a.mul_vec(&p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= tol * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::CgNotConverged { iterations: max_iter, residual: dot(&r, &r).sqrt() / bnorm })
}

/// Static solution together with the factorized stiffness, kept for adjoint
/// and eigenvalue solves at the same design.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub u: Vec<f64>,
    pub factor: Factor,
}

/// One-shot static analysis: displacement over all DOFs, zero at supports.
pub fn assemble_and_solve(
    mesh: &GridMesh,
    nu: f64,
    young: &[f64],
    loads: &LoadSet,
    supports: &SupportSet,
) -> Result<Vec<f64>> {
    Ok(FeModel::new(mesh, nu, supports)?.solve(young, loads)?.u)
}
