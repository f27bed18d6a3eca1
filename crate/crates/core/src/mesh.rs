//! Structured grid of square four-node plane-stress elements.
//!
//! Numbering follows the layout common to educational topology-optimization
//! codes: nodes and elements are numbered column by column (x slowest), and
//! within a column from the top row downwards. Node `(ix, row)` has index
//! `ix * (nely + 1) + row` and owns DOFs `2n` (x) and `2n + 1` (y, positive
//! up). Element `(ex, ey)` has index `ex * nely + ey`, with `ey = 0` the top
//! row.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GridMesh {
    nelx: usize,
    nely: usize,
    h: f64,
    thickness: f64,
}

impl GridMesh {
    pub fn new(nelx: usize, nely: usize, h: f64, thickness: f64) -> Result<Self> {
        if nelx == 0 || nely == 0 {
            return Err(Error::InvalidMesh(format!(
                "element counts must be positive, got {nelx}x{nely}"
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidMesh(format!("element size must be positive, got {h}")));
        }
        if !(thickness > 0.0 && thickness.is_finite()) {
            return Err(Error::InvalidMesh(format!(
                "thickness must be positive, got {thickness}"
            )));
        }
        Ok(Self { nelx, nely, h, thickness })
    }

    pub fn nelx(&self) -> usize {
        self.nelx
    }

    pub fn nely(&self) -> usize {
        self.nely
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    pub fn num_elements(&self) -> usize {
        self.nelx * self.nely
    }

    pub fn num_nodes(&self) -> usize {
        (self.nelx + 1) * (self.nely + 1)
    }

    pub fn num_dofs(&self) -> usize {
        2 * self.num_nodes()
    }

    /// Node at column `ix` (0..=nelx) and row `row` counted from the top (0..=nely).
    pub fn node(&self, ix: usize, row: usize) -> usize {
        debug_assert!(ix <= self.nelx && row <= self.nely);
        ix * (self.nely + 1) + row
    }

    /// Physical coordinates of a node, with y measured upwards from the bottom edge.
    pub fn node_position(&self, node: usize) -> (f64, f64) {
        let ix = node / (self.nely + 1);
        let row = node % (self.nely + 1);
        (ix as f64 * self.h, (self.nely - row) as f64 * self.h)
    }

    pub fn element(&self, ex: usize, ey: usize) -> usize {
        debug_assert!(ex < self.nelx && ey < self.nely);
        ex * self.nely + ey
    }

    /// `(ex, ey)` of an element, `ey` counted from the top.
    pub fn element_coords(&self, e: usize) -> (usize, usize) {
        (e / self.nely, e % self.nely)
    }

    pub fn element_center(&self, e: usize) -> (f64, f64) {
        let (ex, ey) = self.element_coords(e);
        ((ex as f64 + 0.5) * self.h, (ey as f64 + 0.5) * self.h)
    }

    /// Global DOFs of element `e`, corners counter-clockwise from bottom-left.
    pub fn element_dofs(&self, e: usize) -> Result<[usize; 8]> {
        if e >= self.num_elements() {
            return Err(Error::IndexOutOfRange {
                what: "element",
                index: e,
                limit: self.num_elements(),
            });
        }
        Ok(self.element_dofs_unchecked(e))
    }

    pub(crate) fn element_dofs_unchecked(&self, e: usize) -> [usize; 8] {
        let (ex, ey) = self.element_coords(e);
        let top_left = self.node(ex, ey);
        let bottom_left = top_left + 1;
        let top_right = self.node(ex + 1, ey);
        let bottom_right = top_right + 1;
        let mut dofs = [0; 8];
        for (k, n) in [bottom_left, bottom_right, top_right, top_left].into_iter().enumerate() {
            dofs[2 * k] = 2 * n;
            dofs[2 * k + 1] = 2 * n + 1;
        }
        dofs
    }

    /// Elements whose centers lie strictly closer than `rmin` to the center of `e`,
    /// including `e` itself, with their center distances.
    pub fn neighbor_elements(&self, e: usize, rmin: f64) -> Result<Vec<(usize, f64)>> {
        if e >= self.num_elements() {
            return Err(Error::IndexOutOfRange {
                what: "element",
                index: e,
                limit: self.num_elements(),
            });
        }
        if !(rmin > 0.0) {
            return Err(Error::InvalidParameter {
                name: "rmin",
                reason: format!("must be positive, got {rmin}"),
            });
        }
        let (ex, ey) = self.element_coords(e);
        let reach = (rmin / self.h).ceil() as usize;
        let mut out = Vec::new();
        for ix in ex.saturating_sub(reach)..=(ex + reach).min(self.nelx - 1) {
            for iy in ey.saturating_sub(reach)..=(ey + reach).min(self.nely - 1) {
                let dx = (ix as f64 - ex as f64) * self.h;
                let dy = (iy as f64 - ey as f64) * self.h;
                let d = dx.hypot(dy);
                if d < rmin {
                    out.push((self.element(ix, iy), d));
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SupportSet {
    dofs: BTreeSet<usize>,
}

impl SupportSet {
    pub fn new(mesh: &GridMesh, dofs: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for d in dofs {
            if d >= mesh.num_dofs() {
                return Err(Error::IndexOutOfRange {
                    what: "support dof",
                    index: d,
                    limit: mesh.num_dofs(),
                });
            }
            set.insert(d);
        }
        Ok(Self { dofs: set })
    }

    pub fn contains(&self, dof: usize) -> bool {
        self.dofs.contains(&dof)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.dofs.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadSet {
    forces: BTreeMap<usize, f64>,
}

impl LoadSet {
    /// Repeated DOFs accumulate.
    pub fn new(mesh: &GridMesh, forces: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (d, f) in forces {
            if d >= mesh.num_dofs() {
                return Err(Error::IndexOutOfRange {
                    what: "load dof",
                    index: d,
                    limit: mesh.num_dofs(),
                });
            }
            *map.entry(d).or_insert(0.0) += f;
        }
        Ok(Self { forces: map })
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.forces.iter().map(|(&d, &f)| (d, f))
    }

    pub fn is_empty(&self) -> bool {
        self.forces.values().all(|f| *f == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            forces: self.forces.iter().map(|(&d, &f)| (d, f * factor)).collect(),
        }
    }

    pub fn to_vector(&self, ndof: usize) -> Vec<f64> {
        let mut f = vec![0.0; ndof];
        for (d, v) in self.iter() {
            f[d] += v;
        }
        f
    }

    pub fn total(&self) -> f64 {
        self.forces.values().sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PassiveSet {
    solid: BTreeSet<usize>,
    void: BTreeSet<usize>,
}

impl PassiveSet {
    pub fn new(
        mesh: &GridMesh,
        solid: impl IntoIterator<Item = usize>,
        void: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let n = mesh.num_elements();
        let check = |e: usize| {
            if e >= n {
                Err(Error::IndexOutOfRange { what: "passive element", index: e, limit: n })
            } else {
                Ok(e)
            }
        };
        let solid = solid.into_iter().map(check).collect::<Result<BTreeSet<_>>>()?;
        let void = void.into_iter().map(check).collect::<Result<BTreeSet<_>>>()?;
        if let Some(e) = solid.intersection(&void).next() {
            return Err(Error::InvalidProblem(format!(
                "element {e} is marked both passive solid and passive void"
            )));
        }
        Ok(Self { solid, void })
    }

    pub fn solid(&self) -> impl Iterator<Item = usize> + '_ {
        self.solid.iter().copied()
    }

    pub fn void(&self) -> impl Iterator<Item = usize> + '_ {
        self.void.iter().copied()
    }

    /// Pinned physical density of `e`, if passive.
    pub fn pinned(&self, e: usize) -> Option<f64> {
        if self.solid.contains(&e) {
            Some(1.0)
        } else if self.void.contains(&e) {
            Some(0.0)
        } else {
            None
        }
    }

    pub fn is_empty(&self) -> bool {
        self.solid.is_empty() && self.void.is_empty()
    }

    pub fn len(&self) -> usize {
        self.solid.len() + self.void.len()
    }
}
