//! Linear buckling: stress stiffness, the generalized eigenproblem
//! `(K + λ Kσ) φ = 0` and eigenvalue sensitivities.
//!
//! Eigenpairs come from Lanczos iteration on `K⁻¹(−Kσ)` in the K inner
//! product, with full reorthogonalization. Its dominant positive eigenvalues
//! `μ = 1/λ` are the lowest positive load factors. The factorization of `K`
//! from the static solve is reused throughout.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fea::band::SymBandMatrix;
use crate::fea::element::bilinear8;
use crate::fea::system::{Equilibrium, FeModel};
use crate::fea::Material;

/// Relative gap below which two load factors count as repeated.
pub const REPEATED_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSettings {
    /// Converged when `‖(K + λKσ)φ‖ ≤ tolerance · ‖Kφ‖`.
    pub tolerance: f64,
    /// Cap on Lanczos steps (one solve each).
    pub max_steps: usize,
}

impl Default for EigenSettings {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_steps: 1000 }
    }
}

#[derive(Debug, Clone)]
pub struct BucklingResult {
    /// Ascending positive load factors.
    pub eigenvalues: Vec<f64>,
    /// Mode shapes over all DOFs, `φᵢᵀ K φⱼ = δᵢⱼ`.
    pub modes: Vec<Vec<f64>>,
    /// Fewer positive load factors than requested were found.
    pub fewer_than_requested: bool,
    /// Lanczos steps taken.
    pub iterations: usize,
}

impl BucklingResult {
    /// Whether any of the first `count` load factors is repeated.
    pub fn has_repeated(&self, count: usize) -> bool {
        let n = count.min(self.eigenvalues.len());
        (0..n).any(|i| {
            let l = self.eigenvalues[i];
            [i.checked_sub(1), Some(i + 1)]
                .into_iter()
                .flatten()
                .filter(|&j| j < self.eigenvalues.len())
                .any(|j| (self.eigenvalues[j] - l).abs() <= REPEATED_TOLERANCE * l.abs())
        })
    }
}

/// Stress stiffness `Kσ` over the free DOFs, from element stresses of the
/// SIMP-penalized material driven by `u`.
pub fn stress_stiffness(model: &FeModel, u: &[f64], xphys: &[f64], material: &Material) -> SymBandMatrix {
    let q4 = model.element();
    model.assemble_with(|e| {
        let ue = model.gather(u, e);
        if ue.iter().all(|v| *v == 0.0) {
            return None;
        }
        let ee = material.young(xphys[e]);
        let mut k = q4.stress_stiffness(&ue);
        k.iter_mut().flatten().for_each(|v| *v *= ee);
        Some(k)
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Deterministic pseudo-random start vector number `j`.
fn start_vector(n: usize, j: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let h = (i.wrapping_mul(7919) ^ (j + 1).wrapping_mul(104_729)).wrapping_mul(2_654_435_761) % 10_007;
            h as f64 / 10_007.0 - 0.5
        })
        .collect()
}

/// K-orthonormal Lanczos basis with the recurrence coefficients. Vectors
/// are stored back to back.
struct Krylov {
    n: usize,
    q: Vec<f64>,
    kq: Vec<f64>,
    alpha: Vec<f64>,
    /// `beta[j]` couples `q[j]` and `q[j + 1]`; zero after a restart.
    beta: Vec<f64>,
}

impl Krylov {
    fn len(&self) -> usize {
        self.alpha.len()
    }

    fn push(&mut self, q: &[f64], kq: &[f64], alpha: f64) {
        self.q.extend_from_slice(q);
        self.kq.extend_from_slice(kq);
        self.alpha.push(alpha);
        self.beta.push(0.0);
    }

    /// Classical Gram–Schmidt against the basis in the K inner product.
    /// `norm2` is `‖w‖²_K`; a second pass runs when the first one removed
    /// more than half of it.
    fn orthogonalize(&self, w: &mut [f64], mut norm2: f64) {
        let n = self.n;
        for _ in 0..2 {
            let c: Vec<f64> = self.kq.chunks_exact(n).map(|kq| dot(w, kq)).collect();
            for (q, ci) in self.q.chunks_exact(n).zip(&c) {
                axpy(-ci, q, w);
            }
            let left = norm2 - c.iter().map(|v| v * v).sum::<f64>();
            if left > 0.5 * norm2 {
                return;
            }
            norm2 = left.max(0.0);
        }
    }

    /// Eigenpairs of the tridiagonal projection, descending.
    fn ritz(&self) -> (Vec<f64>, DMatrix<f64>) {
        let j = self.len();
        let t = DMatrix::from_fn(j, j, |r, c| {
            if r == c {
                self.alpha[r]
            } else if r + 1 == c {
                self.beta[r]
            } else if c + 1 == r {
                self.beta[c]
            } else {
                0.0
            }
        });
        let e = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..j).collect();
        order.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
        let s = DMatrix::from_fn(j, j, |r, c| e.eigenvectors[(r, order[c])]);
        (order.iter().map(|&i| e.eigenvalues[i]).collect(), s)
    }

    fn ritz_vector(&self, s: &DMatrix<f64>, col: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (k, q) in self.q.chunks_exact(self.n).enumerate() {
            axpy(s[(k, col)], q, &mut y);
        }
        y
    }
}

/// Lowest `m` positive buckling load factors at the state `eq` (with stress
/// stiffness `ksigma` built from the same displacement).
pub fn buckling_eigs(
    model: &FeModel,
    eq: &Equilibrium,
    ksigma: &SymBandMatrix,
    m: usize,
    settings: EigenSettings,
) -> Result<BucklingResult> {
    assert!(m >= 1, "at least one buckling mode must be requested");
    let k = eq.factor.matrix();
    let n = k.dim();
    let mut b = ksigma.clone();
    b.scale(-1.0);
    let cap = settings.max_steps.min(n);

    let mut kr = Krylov { n, q: Vec::new(), kq: Vec::new(), alpha: Vec::new(), beta: Vec::new() };
    let mut restarts = 0;
    let mut next = start_vector(n, restarts);
    let mut worst = f64::INFINITY;
    let mut check_at = 2 * m + 4;

    while kr.len() < cap {
        // `next` is K-orthogonal to the basis but not yet normalized
        let knext = k.mul_vec(&next);
        let len = dot(&next, &knext).max(0.0).sqrt();
        let scale = kr.alpha.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if kr.len() > 0 && len <= 1e-10 * scale {
            // invariant subspace found: restart with a fresh direction
            restarts += 1;
            if restarts > n {
                break;
            }
            if let Some(last) = kr.beta.last_mut() {
                *last = 0.0;
            }
            let mut w = start_vector(n, restarts);
            let norm2 = dot(&w, &k.mul_vec(&w));
            kr.orthogonalize(&mut w, norm2);
            next = w;
            continue;
        }
        if let Some(last) = kr.beta.last_mut() {
            *last = len;
        }
        let q: Vec<f64> = next.iter().map(|v| v / len).collect();
        let kq: Vec<f64> = knext.iter().map(|v| v / len).collect();
        let bq = b.mul_vec(&q);
        let mut w = eq.factor.solve(&bq)?;
        kr.push(&q, &kq, dot(&q, &bq));
        // K w = B q, so the K-norm of w comes for free
        let norm2 = dot(&w, &bq);
        kr.orthogonalize(&mut w, norm2);
        next = w;

        let steps = kr.len();
        if steps < check_at && steps < cap {
            continue;
        }
        check_at = steps + (steps / 8).max(4);
        let (mu, s) = kr.ritz();
        let mu_scale = mu.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let positive = mu.iter().take_while(|&&v| v > 1e-12 * mu_scale).count();
        let wanted = positive.min(m);
        let exhausted = steps >= cap;
        if wanted < m && !exhausted {
            continue;
        }
        // cheap estimate first: ‖K⁻¹Bφ − μφ‖_K = |β s_last|
        let next_len = dot(&next, &k.mul_vec(&next)).max(0.0).sqrt();
        let estimate_ok = (0..wanted).all(|i| (next_len * s[(steps - 1, i)]).abs() <= settings.tolerance * mu[i]);
        if !estimate_ok && !exhausted {
            continue;
        }
        let reduced: Vec<Vec<f64>> = (0..wanted).map(|i| kr.ritz_vector(&s, i)).collect();
        worst = 0.0;
        for (i, y) in reduced.iter().enumerate() {
            let ky = k.mul_vec(y);
            let by = b.mul_vec(y);
            let lambda = 1.0 / mu[i];
            let r: Vec<f64> = ky.iter().zip(&by).map(|(a, c)| a - lambda * c).collect();
            worst = worst.max(norm(&r) / norm(&ky));
        }
        if wanted > 0 && worst <= settings.tolerance {
            let fewer = wanted < m;
            if fewer {
                warn!("only {wanted} positive buckling load factors found ({m} requested)");
            }
            let modes = reduced.iter().map(|v| model.expand(v)).collect();
            let eigenvalues = mu[..wanted].iter().map(|v| 1.0 / v).collect();
            return Ok(BucklingResult { eigenvalues, modes, fewer_than_requested: fewer, iterations: steps });
        }
        if exhausted {
            break;
        }
    }
    if worst.is_finite() || kr.len() < n {
        return Err(Error::EigenNotConverged { iterations: kr.len(), residual: worst });
    }
    Err(Error::NoPositiveEigenvalue)
}

/// `Σᵢ cᵢ ∂λᵢ/∂x̄` over all elements.
///
/// The stress stiffness depends on the design both directly (through the
/// penalized modulus in the stresses) and through the displacement field; the
/// latter is captured with one adjoint solve. `include_adjoint = false` drops
/// it and exists only to demonstrate that the term matters.
#[allow(clippy::too_many_arguments)]
pub fn eigenvalue_gradient(
    model: &FeModel,
    eq: &Equilibrium,
    material: &Material,
    xphys: &[f64],
    result: &BucklingResult,
    coeffs: &[f64],
    include_adjoint: bool,
) -> Result<Vec<f64>> {
    let q4 = model.element();
    let ke = model.ke();
    let nel = xphys.len();
    let nfree = model.num_free();
    let mut direct = vec![0.0; nel];
    let mut adjoint_rhs = vec![0.0; nfree];

    for e in 0..nel {
        let ue = model.gather(&eq.u, e);
        let ee = material.young(xphys[e]);
        let ks0 = q4.stress_stiffness(&ue);
        for (i, (&c, mode)) in coeffs.iter().zip(&result.modes).enumerate() {
            if c == 0.0 {
                continue;
            }
            let lambda = result.eigenvalues[i];
            let phi = model.gather(mode, e);
            direct[e] += c * lambda * (ke.bilinear(&phi, &phi) + lambda * bilinear8(&ks0, &phi, &phi));
            if include_adjoint {
                let mut q = q4.stress_stiffness_gradient(&phi);
                let s = c * lambda * lambda * ee;
                q.iter_mut().for_each(|v| *v *= s);
                model.scatter_reduced(e, &q, &mut adjoint_rhs);
            }
        }
    }

    let adjoint = if include_adjoint {
        Some(model.expand(&eq.factor.solve(&adjoint_rhs)?))
    } else {
        None
    };
    Ok((0..nel)
        .map(|e| {
            let mut g = direct[e];
            if let Some(a) = &adjoint {
                let ae = model.gather(a, e);
                let ue = model.gather(&eq.u, e);
                g -= ke.bilinear(&ae, &ue);
            }
            material.dyoung(xphys[e]) * g
        })
        .collect())
}

/// Per-mode derivatives `∂λᵢ/∂x̄ₑ` for the first `count` modes, plus a flag
/// raised when any of them is repeated (derivative not unique).
pub fn buckling_sensitivity(
    model: &FeModel,
    eq: &Equilibrium,
    material: &Material,
    xphys: &[f64],
    result: &BucklingResult,
    count: usize,
) -> Result<(Vec<Vec<f64>>, bool)> {
    let count = count.min(result.eigenvalues.len());
    let repeated = result.has_repeated(count);
    if repeated {
        warn!("repeated buckling load factors: sensitivities are not unique");
    }
    let per_mode = (0..count)
        .map(|i| {
            let mut c = vec![0.0; result.eigenvalues.len()];
            c[i] = 1.0;
            eigenvalue_gradient(model, eq, material, xphys, result, &c, true)
        })
        .collect::<Result<_>>()?;
    Ok((per_mode, repeated))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{GridMesh, LoadSet, SupportSet};

    const SOLID: Material = Material { e0: 1.0, emin: 1e-6, nu: 0.3, penal: 3.0 };

    /// Column `width` elements wide and `height` tall, clamped at the base,
    /// with total compressive load `p` spread evenly over the top edge.
    fn column(width: usize, height: usize, p: f64) -> (FeModel, LoadSet) {
        let mesh = GridMesh::new(width, height, 1.0, 1.0).unwrap();
        let base = (0..=width).flat_map(|ix| {
            let n = mesh.node(ix, height);
            [2 * n, 2 * n + 1]
        });
        let supports = SupportSet::new(&mesh, base.collect::<Vec<_>>()).unwrap();
        let per_edge = p / width as f64;
        let top = (0..=width).map(|ix| {
            let share = if ix == 0 || ix == width { 0.5 } else { 1.0 };
            (2 * mesh.node(ix, 0) + 1, -share * per_edge)
        });
        let loads = LoadSet::new(&mesh, top.collect::<Vec<_>>()).unwrap();
        (FeModel::new(&mesh, SOLID.nu, &supports).unwrap(), loads)
    }

    fn analyse(model: &FeModel, loads: &LoadSet, xphys: &[f64], m: usize) -> (Equilibrium, BucklingResult) {
        let eq = model.solve(&SOLID.young_field(xphys), loads).unwrap();
        let ks = stress_stiffness(model, &eq.u, xphys, &SOLID);
        let res = buckling_eigs(model, &eq, &ks, m, EigenSettings::default()).unwrap();
        (eq, res)
    }

    #[test]
    fn euler_fixed_free_column() {
        let p = 1e-3;
        let (model, loads) = column(6, 60, p);
        let x = vec![1.0; 360];
        let (_, res) = analyse(&model, &loads, &x, 3);
        let (w, l, t) = (6.0, 60.0, 1.0);
        let i = t * w * w * w / 12.0;
        let euler = std::f64::consts::PI.powi(2) * SOLID.e0 * i / (2.0 * l * 2.0 * l);
        let ratio = res.eigenvalues[0] * p / euler;
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn modes_are_k_orthonormal_and_converged() {
        let (model, loads) = column(4, 16, 1.0);
        let x = vec![1.0; 64];
        let (eq, res) = analyse(&model, &loads, &x, 4);
        assert_eq!(res.eigenvalues.len(), 4);
        assert!(res.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        let k = eq.factor.matrix();
        let ks = stress_stiffness(&model, &eq.u, &x, &SOLID);
        let reduced: Vec<Vec<f64>> = res.modes.iter().map(|v| model.reduce(v)).collect();
        for i in 0..4 {
            for j in 0..4 {
                let kij = dot(&reduced[i], &k.mul_vec(&reduced[j]));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((kij - expect).abs() < 1e-8, "({i},{j}) {kij}");
            }
            let kphi = k.mul_vec(&reduced[i]);
            let sphi = ks.mul_vec(&reduced[i]);
            let r: Vec<f64> = kphi.iter().zip(&sphi).map(|(a, b)| a + res.eigenvalues[i] * b).collect();
            assert!(norm(&r) <= 1e-8 * norm(&kphi));
            // compression: the stress stiffness softens along the mode
            assert!(dot(&reduced[i], &sphi) < 0.0);
        }
    }

    #[test]
    fn doubling_the_load_halves_every_factor() {
        let x = vec![1.0; 64];
        let (m1, l1) = column(4, 16, 1.0);
        let (m2, l2) = column(4, 16, 2.0);
        let (_, r1) = analyse(&m1, &l1, &x, 3);
        let (_, r2) = analyse(&m2, &l2, &x, 3);
        for (a, b) in r1.eigenvalues.iter().zip(&r2.eigenvalues) {
            assert!((a / b - 2.0).abs() < 1e-8);
        }
    }

    #[test]
    fn invariant_under_common_rescaling() {
        let (model, loads) = column(4, 16, 1.0);
        let x = vec![1.0; 64];
        let (eq, r1) = analyse(&model, &loads, &x, 3);
        let mut k = eq.factor.matrix().clone();
        k.scale(7.5);
        let mut ks = stress_stiffness(&model, &eq.u, &x, &SOLID);
        ks.scale(7.5);
        let eq2 = Equilibrium { u: eq.u.clone(), factor: model.factorize(k).unwrap() };
        let r2 = buckling_eigs(&model, &eq2, &ks, 3, EigenSettings::default()).unwrap();
        for (a, b) in r1.eigenvalues.iter().zip(&r2.eigenvalues) {
            assert!((a - b).abs() <= 1e-8 * a);
        }
    }

    #[test]
    fn zero_displacement_gives_zero_stress_stiffness() {
        let (model, _) = column(3, 6, 1.0);
        let ks = stress_stiffness(&model, &vec![0.0; model.mesh().num_dofs()], &vec![1.0; 18], &SOLID);
        assert!(ks.diagonal().iter().all(|v| *v == 0.0));
    }

    fn graded_design(n: usize) -> Vec<f64> {
        (0..n).map(|e| 0.5 + 0.4 * ((e as f64) * 0.37).sin()).collect()
    }

    fn lambda1(model: &FeModel, loads: &LoadSet, x: &[f64]) -> f64 {
        analyse(model, loads, x, 2).1.eigenvalues[0]
    }

    fn fd_errors(include_adjoint: bool) -> Vec<f64> {
        let (model, loads) = column(6, 18, 1.0);
        let x = graded_design(108);
        let (eq, res) = analyse(&model, &loads, &x, 2);
        assert!(!res.has_repeated(1));
        let grad = eigenvalue_gradient(&model, &eq, &SOLID, &x, &res, &[1.0, 0.0], include_adjoint).unwrap();
        let scale = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        let step = 1e-5;
        (0..108)
            .map(|e| {
                let mut xp = x.clone();
                xp[e] += step;
                let mut xm = x.clone();
                xm[e] -= step;
                let fd = (lambda1(&model, &loads, &xp) - lambda1(&model, &loads, &xm)) / (2.0 * step);
                (grad[e] - fd).abs() / fd.abs().max(1e-3 * scale)
            })
            .collect()
    }

    #[test]
    fn first_mode_sensitivity_matches_finite_difference() {
        let errs = fd_errors(true);
        let worst = errs.iter().fold(0.0f64, |a, b| a.max(*b));
        assert!(worst <= 1e-3, "worst relative error {worst}");
    }

    #[test]
    fn dropping_the_adjoint_term_breaks_the_gradient() {
        let errs = fd_errors(false);
        assert!(errs.iter().any(|e| *e > 1e-3));
    }

    #[test]
    fn sensitivity_is_local() {
        // solid core loaded at its top, surrounded by unloaded near-void material
        let mesh = GridMesh::new(12, 18, 1.0, 1.0).unwrap();
        let base = (0..=12).flat_map(|ix| {
            let n = mesh.node(ix, 18);
            [2 * n, 2 * n + 1]
        });
        let supports = SupportSet::new(&mesh, base.collect::<Vec<_>>()).unwrap();
        let loads = LoadSet::new(&mesh, (4..=8).map(|ix| (2 * mesh.node(ix, 0) + 1, -0.25))).unwrap();
        let model = FeModel::new(&mesh, SOLID.nu, &supports).unwrap();
        let x: Vec<f64> = (0..216)
            .map(|e| if (4..8).contains(&mesh.element_coords(e).0) { 1.0 } else { 1e-4 })
            .collect();
        let (eq, res) = analyse(&model, &loads, &x, 1);
        let (grads, _) = buckling_sensitivity(&model, &eq, &SOLID, &x, &res, 1).unwrap();
        let g = &grads[0];
        let max = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let far = g[mesh.element(0, 0)].abs();
        assert!(far < 1e-6 * max, "far {far} max {max}");
    }
}
