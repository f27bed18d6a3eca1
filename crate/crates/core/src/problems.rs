//! Benchmark problem definitions.
//!
//! Each constructor returns a fully populated [`ProblemSpec`]: mesh, boundary
//! conditions, passive regions, material, filter radius, objective and
//! constraints, and the optimizer the problem is normally run with.

use crate::error::{Error, Result};
use crate::fea::{FeModel, Material};
use crate::mesh::{GridMesh, LoadSet, PassiveSet, SupportSet};
use crate::optimize::{MmaParams, OcParams, OptimizerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// End compliance `fᵀu`.
    Compliance,
    /// K-S aggregate of the inverse buckling load factors `1/λᵢ`.
    KsInverseBuckling,
    /// Physical volume fraction.
    Volume,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComplianceBound {
    Absolute(f64),
    /// Multiple of the compliance of the fully solid design.
    SolidMultiple(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    /// Physical volume fraction at most `max_fraction`.
    Volume { max_fraction: f64 },
    /// K-S estimate of the lowest buckling load factor at least `min_factor`.
    Buckling { min_factor: f64 },
    Compliance { bound: ComplianceBound },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnVariant {
    MaxBuckling,
    MinVolume,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub name: String,
    pub mesh: GridMesh,
    pub supports: SupportSet,
    pub loads: LoadSet,
    pub passive: PassiveSet,
    pub material: Material,
    /// Filter radius in physical length units.
    pub rmin: f64,
    pub eta: f64,
    pub objective: Objective,
    pub constraints: Vec<Constraint>,
    /// Buckling modes entering the K-S aggregate.
    pub modes: usize,
    pub ks_rho: f64,
    /// Uniform starting value of the design variables.
    pub initial_density: f64,
    pub optimizer: OptimizerKind,
}

impl ProblemSpec {
    pub fn needs_buckling(&self) -> bool {
        self.objective == Objective::KsInverseBuckling
            || self.constraints.iter().any(|c| matches!(c, Constraint::Buckling { .. }))
    }

    /// Checks dimensions, bounds and that the supports suppress rigid-body motion.
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidProblem(msg));
        self.material.validate()?;
        if !(self.rmin > 0.0) {
            return invalid(format!("filter radius must be positive, got {}", self.rmin));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return invalid(format!("projection threshold must lie in (0, 1), got {}", self.eta));
        }
        if self.loads.is_empty() {
            return invalid("no nonzero load".into());
        }
        let ndof = self.mesh.num_dofs();
        for (d, _) in self.loads.iter() {
            if d >= ndof {
                return Err(Error::IndexOutOfRange { what: "load dof", index: d, limit: ndof });
            }
            if self.supports.contains(d) {
                return invalid(format!("load applied to fixed dof {d}"));
            }
        }
        let n = self.mesh.num_elements();
        if let Some(e) = self.passive.solid().chain(self.passive.void()).find(|&e| e >= n) {
            return Err(Error::IndexOutOfRange { what: "passive element", index: e, limit: n });
        }
        if !(0.0..=1.0).contains(&self.initial_density) {
            return invalid(format!("initial density {} outside [0, 1]", self.initial_density));
        }
        for c in &self.constraints {
            let bound = match *c {
                Constraint::Volume { max_fraction } => max_fraction,
                Constraint::Buckling { min_factor } => min_factor,
                Constraint::Compliance { bound: ComplianceBound::Absolute(v) } => v,
                Constraint::Compliance { bound: ComplianceBound::SolidMultiple(v) } => v,
            };
            if !(bound > 0.0 && bound.is_finite()) {
                return invalid(format!("constraint bound must be positive, got {c:?}"));
            }
        }
        if self.needs_buckling() && (self.modes == 0 || !(self.ks_rho > 0.0)) {
            return invalid("buckling requires at least one mode and a positive K-S parameter".into());
        }
        if self.objective == Objective::Volume
            && self.constraints.iter().any(|c| matches!(c, Constraint::Volume { .. }))
        {
            return invalid("volume cannot be both objective and constraint".into());
        }
        if let OptimizerKind::Oc(_) = self.optimizer {
            let volume_only = matches!(self.constraints.as_slice(), [Constraint::Volume { .. }]);
            if !volume_only || self.objective == Objective::Volume {
                return invalid("optimality criteria need a single volume constraint".into());
            }
        }
        if self.constraints.is_empty() {
            return invalid("at least one constraint is required".into());
        }
        // rigid-body modes show up as a singular solid stiffness
        let model = FeModel::new(&self.mesh, self.material.nu, &self.supports)?;
        let young = vec![self.material.e0; n];
        model.factorize(model.assemble_stiffness(&young)?).map_err(|e| match e {
            Error::SingularStiffness { dof, .. } => {
                Error::InvalidProblem(format!("supports do not restrain rigid-body motion (pivot at free dof {dof})"))
            }
            other => other,
        })?;
        Ok(())
    }
}

fn uniform_edge_load(mesh: &GridMesh, nodes: &[usize], dof_offset: usize, total: f64) -> Result<LoadSet> {
    // consistent nodal loads of a uniform traction over consecutive nodes
    let segments = (nodes.len() - 1) as f64;
    let forces = nodes.iter().enumerate().map(|(i, &n)| {
        let share = if i == 0 || i + 1 == nodes.len() { 0.5 } else { 1.0 };
        (2 * n + dof_offset, total * share / segments)
    });
    LoadSet::new(mesh, forces.collect::<Vec<_>>())
}

/// OC settings of the MBB benchmark. A 0.2 move limit falls into a
/// period-two oscillation once β passes about 25 and the gray level stalls.
fn benchmark_oc() -> OcParams {
    OcParams { move_limit: 0.05, ..OcParams::default() }
}

/// Compressed column: clamped base, compressive load on a patch at the top
/// center, solid passive patch under the load.
///
/// `scale` divides the native 120×240 mesh (1, 2 or 4). The domain is 1 wide
/// and 2 tall at every scale, the filter radius is `rmin_in_h` element lengths
/// of the chosen mesh, and the load and passive patch shrink with the mesh.
pub fn compressed_column(scale: usize, rmin_in_h: f64, variant: ColumnVariant) -> Result<ProblemSpec> {
    if ![1, 2, 4].contains(&scale) {
        return Err(Error::InvalidParameter {
            name: "scale",
            reason: format!("must be 1, 2 or 4, got {scale}"),
        });
    }
    if !(rmin_in_h > 0.0) {
        return Err(Error::InvalidParameter { name: "rmin", reason: format!("must be positive, got {rmin_in_h}") });
    }
    let (nelx, nely) = (120 / scale, 240 / scale);
    let h = 1.0 / nelx as f64;
    let mesh = GridMesh::new(nelx, nely, h, 1.0)?;
    let patch_w = 8 / scale;
    let patch_h = (4 / scale).max(1);
    let x0 = (nelx - patch_w) / 2;

    let base = (0..=nelx).flat_map(|ix| {
        let n = mesh.node(ix, nely);
        [2 * n, 2 * n + 1]
    });
    let supports = SupportSet::new(&mesh, base.collect::<Vec<_>>())?;
    let top: Vec<usize> = (x0..=x0 + patch_w).map(|ix| mesh.node(ix, 0)).collect();
    let loads = uniform_edge_load(&mesh, &top, 1, -1e-3)?;
    let patch = (x0..x0 + patch_w).flat_map(|ex| (0..patch_h).map(move |ey| (ex, ey)));
    let passive = PassiveSet::new(&mesh, patch.map(|(ex, ey)| mesh.element(ex, ey)).collect::<Vec<_>>(), [])?;

    let material = Material { e0: 1.0, emin: 1e-6, nu: 0.3, penal: 3.0 };
    let (objective, constraints, modes, initial_density, optimizer, tag) = match variant {
        ColumnVariant::MaxBuckling => (
            Objective::KsInverseBuckling,
            vec![Constraint::Volume { max_fraction: 0.35 }],
            30,
            0.35,
            // OC alternates between two brace layouts here at any move limit
            OptimizerKind::Mma(MmaParams::default()),
            "max-buckling",
        ),
        ColumnVariant::MinVolume => (
            Objective::Volume,
            vec![
                Constraint::Buckling { min_factor: 15.0 },
                Constraint::Compliance { bound: ComplianceBound::SolidMultiple(2.0) },
            ],
            20,
            1.0,
            OptimizerKind::Mma(MmaParams::default()),
            "min-volume",
        ),
    };
    Ok(ProblemSpec {
        name: format!("compressed_column scale={scale} rmin={rmin_in_h}h {tag}"),
        mesh,
        supports,
        loads,
        passive,
        material,
        rmin: rmin_in_h * h,
        eta: 0.5,
        objective,
        constraints,
        modes,
        ks_rho: 160.0,
        initial_density,
        optimizer,
    })
}

/// Meshes accepted by [`cantilever_linear`], as `(nelx, nely)`.
pub const CANTILEVER_MESHES: [(usize, usize); 4] = [(80, 20), (160, 40), (320, 80), (640, 160)];

/// Cantilever of length 4 and height 1 under a downward tip load, solved for
/// linear compliance with a 40% volume constraint and optionally a stability
/// constraint on the K-S estimate of the lowest buckling load factor.
///
/// The tip load `load` is spread over the 4 nodes nearest mid-height of the
/// right edge. The filter radius is 0.075 length units on every mesh.
pub fn cantilever_linear(nelx: usize, nely: usize, load: f64, stability: bool) -> Result<ProblemSpec> {
    if !CANTILEVER_MESHES.contains(&(nelx, nely)) {
        return Err(Error::InvalidParameter {
            name: "mesh",
            reason: format!("{nelx}x{nely} is not one of 80x20, 160x40, 320x80, 640x160"),
        });
    }
    if !(load > 0.0 && load.is_finite()) {
        return Err(Error::InvalidParameter { name: "load", reason: format!("must be positive, got {load}") });
    }
    let h = 4.0 / nelx as f64;
    let mesh = GridMesh::new(nelx, nely, h, 0.1)?;
    let left = (0..=nely).flat_map(|row| {
        let n = mesh.node(0, row);
        [2 * n, 2 * n + 1]
    });
    let supports = SupportSet::new(&mesh, left.collect::<Vec<_>>())?;
    // nely is even for every listed mesh: rows nely/2 - 1 ..= nely/2 + 2
    let rows = nely / 2 - 1..=nely / 2 + 2;
    let tip: Vec<usize> = rows.map(|row| mesh.node(nelx, row)).collect();
    let loads = uniform_edge_load(&mesh, &tip, 1, -load)?;

    let mut constraints = vec![Constraint::Volume { max_fraction: 0.4 }];
    if stability {
        constraints.push(Constraint::Buckling { min_factor: 2.0 });
    }
    Ok(ProblemSpec {
        name: format!("cantilever {nelx}x{nely} load={load}{}", if stability { " stability" } else { "" }),
        mesh,
        supports,
        loads,
        passive: PassiveSet::default(),
        material: Material { e0: 3e9, emin: 3.0, nu: 0.4, penal: 3.0 },
        rmin: 0.075,
        eta: 0.5,
        objective: Objective::Compliance,
        constraints,
        modes: 6,
        ks_rho: 50.0,
        initial_density: 0.4,
        optimizer: OptimizerKind::Mma(MmaParams::default()),
    })
}

/// Half MBB beam: horizontal symmetry condition on the left edge, vertical
/// roller at the bottom-right corner, unit downward load at the top-left corner.
pub fn mbb(nelx: usize, nely: usize, volfrac: f64, rmin_in_h: f64) -> Result<ProblemSpec> {
    if !(volfrac > 0.0 && volfrac <= 1.0) {
        return Err(Error::InvalidParameter { name: "volfrac", reason: format!("{volfrac} not in (0, 1]") });
    }
    if !(rmin_in_h > 0.0) {
        return Err(Error::InvalidParameter { name: "rmin", reason: format!("must be positive, got {rmin_in_h}") });
    }
    let mesh = GridMesh::new(nelx, nely, 1.0, 1.0)?;
    let mut fixed: Vec<usize> = (0..=nely).map(|row| 2 * mesh.node(0, row)).collect();
    fixed.push(2 * mesh.node(nelx, nely) + 1);
    let supports = SupportSet::new(&mesh, fixed)?;
    let loads = LoadSet::new(&mesh, [(2 * mesh.node(0, 0) + 1, -1.0)])?;
    Ok(ProblemSpec {
        name: format!("mbb {nelx}x{nely} volfrac={volfrac} rmin={rmin_in_h}h"),
        mesh,
        supports,
        loads,
        passive: PassiveSet::default(),
        material: Material { e0: 1.0, emin: 1e-9, nu: 0.3, penal: 3.0 },
        rmin: rmin_in_h,
        eta: 0.5,
        objective: Objective::Compliance,
        constraints: vec![Constraint::Volume { max_fraction: volfrac }],
        modes: 0,
        ks_rho: 0.0,
        initial_density: volfrac,
        optimizer: OptimizerKind::Oc(benchmark_oc()),
    })
}
