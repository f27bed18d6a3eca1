//! Bilinear square element (Q4) in plane stress, 2x2 Gauss quadrature.

use crate::error::{Error, Result};

pub type Mat8 = [[f64; 8]; 8];

const GAUSS: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)

/// Corner natural coordinates, counter-clockwise from bottom-left.
const CORNERS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

/// Unit-modulus stiffness of a square Q4 element.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementStiffness(pub Mat8);

impl ElementStiffness {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.0[a][b]
    }

    /// `vᵀ k w` for element-local vectors.
    pub fn bilinear(&self, v: &[f64; 8], w: &[f64; 8]) -> f64 {
        let mut s = 0.0;
        for a in 0..8 {
            let mut row = 0.0;
            for b in 0..8 {
                row += self.0[a][b] * w[b];
            }
            s += v[a] * row;
        }
        s
    }

    pub fn apply(&self, v: &[f64; 8]) -> [f64; 8] {
        let mut out = [0.0; 8];
        for a in 0..8 {
            out[a] = (0..8).map(|b| self.0[a][b] * v[b]).sum();
        }
        out
    }
}

/// Shape-function gradients and strain operator at one integration point.
#[derive(Debug, Clone)]
pub(crate) struct GaussPoint {
    pub weight: f64, // quadrature weight * det J * thickness
    pub dndx: [f64; 4],
    pub dndy: [f64; 4],
    pub b: [[f64; 8]; 3],
}

/// Precomputed quadrature data for the square element of a given mesh.
#[derive(Debug, Clone)]
pub struct Q4Element {
    nu: f64,
    d0: [[f64; 3]; 3],
    points: Vec<GaussPoint>,
}

impl Q4Element {
    pub fn new(nu: f64, h: f64, thickness: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&nu) {
            return Err(Error::InvalidParameter {
                name: "nu",
                reason: format!("Poisson ratio must lie in [0, 0.5), got {nu}"),
            });
        }
        if !(h > 0.0) || !(thickness > 0.0) {
            return Err(Error::InvalidParameter {
                name: "h/thickness",
                reason: format!("must be positive, got h={h}, t={thickness}"),
            });
        }
        let c = 1.0 / (1.0 - nu * nu);
        let d0 = [[c, c * nu, 0.0], [c * nu, c, 0.0], [0.0, 0.0, c * (1.0 - nu) / 2.0]];
        let det_j = h * h / 4.0;
        let mut points = Vec::with_capacity(4);
        for &(xi, eta) in &[(-GAUSS, -GAUSS), (GAUSS, -GAUSS), (GAUSS, GAUSS), (-GAUSS, GAUSS)] {
            let mut dndx = [0.0; 4];
            let mut dndy = [0.0; 4];
            for (a, &(xa, ya)) in CORNERS.iter().enumerate() {
                dndx[a] = 0.25 * xa * (1.0 + ya * eta) * 2.0 / h;
                dndy[a] = 0.25 * ya * (1.0 + xa * xi) * 2.0 / h;
            }
            let mut b = [[0.0; 8]; 3];
            for a in 0..4 {
                b[0][2 * a] = dndx[a];
                b[1][2 * a + 1] = dndy[a];
                b[2][2 * a] = dndy[a];
                b[2][2 * a + 1] = dndx[a];
            }
            points.push(GaussPoint { weight: det_j * thickness, dndx, dndy, b });
        }
        Ok(Self { nu, d0, points })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn stiffness(&self) -> ElementStiffness {
        let mut k = [[0.0; 8]; 8];
        for gp in &self.points {
            let db = mul_d_b(&self.d0, &gp.b);
            for a in 0..8 {
                for c in 0..8 {
                    k[a][c] += gp.weight * (0..3).map(|r| gp.b[r][a] * db[r][c]).sum::<f64>();
                }
            }
        }
        // Symmetrize away the last-bit asymmetry of the triple product.
        for a in 0..8 {
            for c in 0..a {
                let v = 0.5 * (k[a][c] + k[c][a]);
                k[a][c] = v;
                k[c][a] = v;
            }
        }
        ElementStiffness(k)
    }

    /// Unit-modulus stress `[sxx, syy, sxy]` at each integration point.
    pub fn unit_stresses(&self, ue: &[f64; 8]) -> [[f64; 3]; 4] {
        let mut out = [[0.0; 3]; 4];
        for (g, gp) in self.points.iter().enumerate() {
            let strain: [f64; 3] =
                std::array::from_fn(|r| (0..8).map(|c| gp.b[r][c] * ue[c]).sum());
            for r in 0..3 {
                out[g][r] = (0..3).map(|c| self.d0[r][c] * strain[c]).sum();
            }
        }
        out
    }

    /// Geometric (stress) stiffness for unit modulus, driven by displacement `ue`.
    pub fn stress_stiffness(&self, ue: &[f64; 8]) -> Mat8 {
        let stresses = self.unit_stresses(ue);
        let mut k = [[0.0; 8]; 8];
        for (gp, s) in self.points.iter().zip(stresses.iter()) {
            for a in 0..4 {
                for c in 0..4 {
                    let v = gp.weight
                        * (gp.dndx[a] * (s[0] * gp.dndx[c] + s[2] * gp.dndy[c])
                            + gp.dndy[a] * (s[2] * gp.dndx[c] + s[1] * gp.dndy[c]));
                    k[2 * a][2 * c] += v;
                    k[2 * a + 1][2 * c + 1] += v;
                }
            }
        }
        k
    }

    /// Gradient of `φᵀ kσ(u) φ` with respect to `u` (unit modulus).
    pub fn stress_stiffness_gradient(&self, phi: &[f64; 8]) -> [f64; 8] {
        let mut q = [0.0; 8];
        for gp in &self.points {
            let (mut ux, mut uy, mut vx, mut vy) = (0.0, 0.0, 0.0, 0.0);
            for a in 0..4 {
                ux += gp.dndx[a] * phi[2 * a];
                uy += gp.dndy[a] * phi[2 * a];
                vx += gp.dndx[a] * phi[2 * a + 1];
                vy += gp.dndy[a] * phi[2 * a + 1];
            }
            let s = [ux * ux + vx * vx, uy * uy + vy * vy, 2.0 * (ux * uy + vx * vy)];
            let ds: [f64; 3] = std::array::from_fn(|r| (0..3).map(|c| self.d0[r][c] * s[c]).sum());
            for c in 0..8 {
                q[c] += gp.weight * (0..3).map(|r| gp.b[r][c] * ds[r]).sum::<f64>();
            }
        }
        q
    }
}

fn mul_d_b(d: &[[f64; 3]; 3], b: &[[f64; 8]; 3]) -> [[f64; 8]; 3] {
    let mut out = [[0.0; 8]; 3];
    for r in 0..3 {
        for c in 0..8 {
            out[r][c] = (0..3).map(|k| d[r][k] * b[k][c]).sum();
        }
    }
    out
}

/// Unit-modulus element stiffness for Poisson ratio `nu`, edge `h` and thickness.
pub fn element_stiffness(nu: f64, h: f64, thickness: f64) -> Result<ElementStiffness> {
    Ok(Q4Element::new(nu, h, thickness)?.stiffness())
}

pub(crate) fn bilinear8(m: &Mat8, v: &[f64; 8], w: &[f64; 8]) -> f64 {
    let mut s = 0.0;
    for a in 0..8 {
        let mut row = 0.0;
        for b in 0..8 {
            row += m[a][b] * w[b];
        }
        s += v[a] * row;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed-form Q4 plane-stress stiffness (unit modulus, unit thickness),
    /// as tabulated in the classic 88-line code, for the same corner order.
    fn closed_form(nu: f64) -> Mat8 {
        let k = [
            0.5 - nu / 6.0,
            0.125 + nu / 8.0,
            -0.25 - nu / 12.0,
            -0.125 + 3.0 * nu / 8.0,
            -0.25 + nu / 12.0,
            -0.125 - nu / 8.0,
            nu / 6.0,
            0.125 - 3.0 * nu / 8.0,
        ];
        let idx = [
            [0, 1, 2, 3, 4, 5, 6, 7],
            [1, 0, 7, 6, 5, 4, 3, 2],
            [2, 7, 0, 5, 6, 3, 4, 1],
            [3, 6, 5, 0, 7, 2, 1, 4],
            [4, 5, 6, 7, 0, 1, 2, 3],
            [5, 4, 3, 2, 1, 0, 7, 6],
            [6, 3, 4, 1, 2, 7, 0, 5],
            [7, 2, 1, 4, 3, 6, 5, 0],
        ];
        let c = 1.0 / (1.0 - nu * nu);
        std::array::from_fn(|a| std::array::from_fn(|b| c * k[idx[a][b]]))
    }

    fn rigid_modes() -> [[f64; 8]; 3] {
        // corners (0,0), (1,0), (1,1), (0,1)
        let xy = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let mut modes = [[0.0; 8]; 3];
        for (a, &(x, y)) in xy.iter().enumerate() {
            modes[0][2 * a] = 1.0;
            modes[1][2 * a + 1] = 1.0;
            modes[2][2 * a] = -y;
            modes[2][2 * a + 1] = x;
        }
        modes
    }

    #[test]
    fn matches_closed_form() {
        for nu in [0.0, 0.3, 0.4, 0.49] {
            let k = element_stiffness(nu, 1.0, 1.0).unwrap();
            let oracle = closed_form(nu);
            for a in 0..8 {
                for b in 0..8 {
                    assert!((k.get(a, b) - oracle[a][b]).abs() < 1e-13, "nu={nu} ({a},{b})");
                }
            }
        }
        let k = element_stiffness(0.3, 1.0, 1.0).unwrap();
        assert!((k.get(0, 0) - (0.5 - 0.05) / 0.91).abs() < 1e-14);
    }

    #[test]
    fn size_independent_and_linear_in_thickness() {
        let k1 = element_stiffness(0.3, 1.0, 1.0).unwrap();
        let k2 = element_stiffness(0.3, 0.025, 2.0).unwrap();
        for a in 0..8 {
            for b in 0..8 {
                assert!((k2.get(a, b) - 2.0 * k1.get(a, b)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn rigid_body_modes_are_annihilated() {
        for nu in [0.0, 0.3, 0.45] {
            let k = element_stiffness(nu, 1.0, 1.0).unwrap();
            for mode in rigid_modes() {
                for v in k.apply(&mode) {
                    assert!(v.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn exactly_three_zero_eigenvalues() {
        let k = element_stiffness(0.3, 1.0, 1.0).unwrap();
        let m = nalgebra::DMatrix::from_fn(8, 8, |a, b| k.get(a, b));
        let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let largest = ev[7];
        assert!(ev[..3].iter().all(|v| v.abs() < 1e-10 * largest));
        assert!(ev[3] > 1e-3 * largest);
    }

    #[test]
    fn rejects_bad_poisson_ratio() {
        assert!(element_stiffness(0.5, 1.0, 1.0).is_err());
        assert!(element_stiffness(-0.1, 1.0, 1.0).is_err());
    }

    #[test]
    fn stress_stiffness_is_linear_and_symmetric() {
        let q = Q4Element::new(0.3, 0.5, 1.0).unwrap();
        let u = [0.1, -0.2, 0.05, 0.3, -0.1, 0.02, 0.07, -0.04];
        let k = q.stress_stiffness(&u);
        let u2: [f64; 8] = std::array::from_fn(|i| 2.5 * u[i]);
        let k2 = q.stress_stiffness(&u2);
        for a in 0..8 {
            for b in 0..8 {
                assert!((k[a][b] - k[b][a]).abs() < 1e-15);
                assert!((k2[a][b] - 2.5 * k[a][b]).abs() < 1e-14);
            }
        }
        assert_eq!(q.stress_stiffness(&[0.0; 8]), [[0.0; 8]; 8]);
    }

    #[test]
    fn stress_stiffness_gradient_matches_finite_difference() {
        let q = Q4Element::new(0.3, 1.0, 1.0).unwrap();
        let phi = [0.3, 0.1, -0.2, 0.4, 0.15, -0.3, 0.05, 0.2];
        let grad = q.stress_stiffness_gradient(&phi);
        // φᵀ kσ(u) φ is linear in u, so its gradient entries are the values at unit vectors.
        for c in 0..8 {
            let mut e = [0.0; 8];
            e[c] = 1.0;
            let direct = bilinear8(&q.stress_stiffness(&e), &phi, &phi);
            assert!((direct - grad[c]).abs() < 1e-14);
        }
    }
}
