//! Method of moving asymptotes: asymptote update, convex separable
//! approximation and a primal-dual interior-point solve of the subproblem.
//!
//! The subproblem is
//!
//! ```text
//! min  f̃₀(x) + a₀ z + Σ (cᵢ yᵢ + ½ dᵢ yᵢ²)
//! s.t. f̃ᵢ(x) − aᵢ z − yᵢ ≤ 0,  α ≤ x ≤ β,  y, z ≥ 0
//! ```
//!
//! with `f̃ = Σ p/(U − x) + q/(x − L) + r`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmaParams {
    /// Largest change of any variable per iteration, as a fraction of its range.
    pub move_limit: f64,
    pub asyinit: f64,
    pub asyincr: f64,
    pub asydecr: f64,
    pub albefa: f64,
    pub raa0: f64,
    /// Final barrier parameter of the subproblem solve.
    pub epsimin: f64,
    pub a0: f64,
    /// Penalty on the elastic variables `y`.
    pub c: f64,
    pub d: f64,
}

impl Default for MmaParams {
    fn default() -> Self {
        Self {
            move_limit: 0.05,
            asyinit: 0.5,
            asyincr: 1.2,
            asydecr: 0.7,
            albefa: 0.1,
            raa0: 1e-5,
            epsimin: 1e-7,
            a0: 1.0,
            c: 1000.0,
            d: 1.0,
        }
    }
}

impl MmaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.move_limit > 0.0 && self.move_limit <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "mma.move",
                reason: format!("{} not in (0, 1]", self.move_limit),
            });
        }
        if !(self.asyinit > 0.0 && self.asydecr > 0.0 && self.asydecr < 1.0 && self.asyincr > 1.0) {
            return Err(Error::InvalidParameter {
                name: "mma.asymptotes",
                reason: "need asyinit > 0, 0 < asydecr < 1 < asyincr".into(),
            });
        }
        if !(self.epsimin > 0.0 && self.c > 0.0 && self.d >= 0.0 && self.a0 > 0.0) {
            return Err(Error::InvalidParameter {
                name: "mma.subproblem",
                reason: "need epsimin, c, a0 > 0 and d >= 0".into(),
            });
        }
        Ok(())
    }
}

/// Iteration memory carried between MMA updates.
#[derive(Debug, Clone, Default)]
pub struct MmaState {
    iter: usize,
    xold1: Vec<f64>,
    xold2: Vec<f64>,
    low: Vec<f64>,
    upp: Vec<f64>,
}

impl MmaState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn iterations(&self) -> usize {
        self.iter
    }
}

/// One MMA step on variables bounded by `[xmin, xmax]`.
///
/// `g` holds the constraint values (`gᵢ ≤ 0` feasible) and `dg[i]` their
/// gradients.
#[allow(clippy::too_many_arguments)]
pub fn mma_update(
    state: &mut MmaState,
    x: &[f64],
    df0: &[f64],
    g: &[f64],
    dg: &[Vec<f64>],
    xmin: &[f64],
    xmax: &[f64],
    params: &MmaParams,
) -> Result<Vec<f64>> {
    let n = x.len();
    let m = g.len();
    if m == 0 {
        return Err(Error::MmaSubproblem("at least one constraint is required".into()));
    }
    let bad = [df0.len(), xmin.len(), xmax.len()].into_iter().chain(dg.iter().map(Vec::len)).find(|&l| l != n);
    if let Some(actual) = bad {
        return Err(Error::LengthMismatch { what: "mma gradient or bound", expected: n, actual });
    }
    if dg.len() != m {
        return Err(Error::LengthMismatch { what: "mma constraint gradients", expected: m, actual: dg.len() });
    }
    let p = params;
    state.iter += 1;
    let range: Vec<f64> = xmin.iter().zip(xmax).map(|(a, b)| b - a).collect();

    if state.iter <= 2 || state.low.len() != n {
        state.low = (0..n).map(|j| x[j] - p.asyinit * range[j]).collect();
        state.upp = (0..n).map(|j| x[j] + p.asyinit * range[j]).collect();
    } else {
        for j in 0..n {
            let trend = (x[j] - state.xold1[j]) * (state.xold1[j] - state.xold2[j]);
            let factor = if trend > 0.0 {
                p.asyincr
            } else if trend < 0.0 {
                p.asydecr
            } else {
                1.0
            };
            let low = x[j] - factor * (state.xold1[j] - state.low[j]);
            let upp = x[j] + factor * (state.upp[j] - state.xold1[j]);
            state.low[j] = low.clamp(x[j] - 10.0 * range[j], x[j] - 0.01 * range[j]);
            state.upp[j] = upp.clamp(x[j] + 0.01 * range[j], x[j] + 10.0 * range[j]);
        }
    }

    let low = &state.low;
    let upp = &state.upp;
    let alfa: Vec<f64> = (0..n)
        .map(|j| (low[j] + p.albefa * (x[j] - low[j])).max(x[j] - p.move_limit * range[j]).max(xmin[j]))
        .collect();
    let beta: Vec<f64> = (0..n)
        .map(|j| (upp[j] - p.albefa * (upp[j] - x[j])).min(x[j] + p.move_limit * range[j]).min(xmax[j]))
        .collect();

    let approx = |grad: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut pv = vec![0.0; n];
        let mut qv = vec![0.0; n];
        for j in 0..n {
            let xmami = range[j].max(1e-5);
            let (pp, qq) = (grad[j].max(0.0), (-grad[j]).max(0.0));
            let pq = 0.001 * (pp + qq) + p.raa0 / xmami;
            let ux = upp[j] - x[j];
            let xl = x[j] - low[j];
            pv[j] = (pp + pq) * ux * ux;
            qv[j] = (qq + pq) * xl * xl;
        }
        (pv, qv)
    };
    let (p0, q0) = approx(df0);
    let mut pm = Vec::with_capacity(m);
    let mut qm = Vec::with_capacity(m);
    let mut b = vec![0.0; m];
    for i in 0..m {
        let (pi, qi) = approx(&dg[i]);
        b[i] = (0..n).map(|j| pi[j] / (upp[j] - x[j]) + qi[j] / (x[j] - low[j])).sum::<f64>() - g[i];
        pm.push(pi);
        qm.push(qi);
    }

    let sub = Subproblem {
        n,
        m,
        low,
        upp,
        alfa: &alfa,
        beta: &beta,
        p0: &p0,
        q0: &q0,
        p: &pm,
        q: &qm,
        b: &b,
        a0: p.a0,
        c: p.c,
        d: p.d,
    };
    let xnew = sub.solve(p.epsimin)?;

    state.xold2 = std::mem::replace(&mut state.xold1, x.to_vec());
    if state.xold2.is_empty() {
        state.xold2 = x.to_vec();
    }
    Ok(xnew)
}

struct Subproblem<'a> {
    n: usize,
    m: usize,
    low: &'a [f64],
    upp: &'a [f64],
    alfa: &'a [f64],
    beta: &'a [f64],
    p0: &'a [f64],
    q0: &'a [f64],
    p: &'a [Vec<f64>],
    q: &'a [Vec<f64>],
    b: &'a [f64],
    a0: f64,
    c: f64,
    d: f64,
}

/// Primal and dual unknowns of the subproblem (`a = 0` for every constraint).
#[derive(Clone)]
struct Point {
    x: Vec<f64>,
    y: Vec<f64>,
    z: f64,
    lam: Vec<f64>,
    xsi: Vec<f64>,
    eta: Vec<f64>,
    mu: Vec<f64>,
    zet: f64,
    s: Vec<f64>,
}

impl Point {
    fn axpy(&self, t: f64, d: &Point) -> Point {
        let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u + t * v).collect();
        Point {
            x: add(&self.x, &d.x),
            y: add(&self.y, &d.y),
            z: self.z + t * d.z,
            lam: add(&self.lam, &d.lam),
            xsi: add(&self.xsi, &d.xsi),
            eta: add(&self.eta, &d.eta),
            mu: add(&self.mu, &d.mu),
            zet: self.zet + t * d.zet,
            s: add(&self.s, &d.s),
        }
    }
}

impl Subproblem<'_> {
    fn plam_qlam(&self, lam: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut plam = self.p0.to_vec();
        let mut qlam = self.q0.to_vec();
        for i in 0..self.m {
            for j in 0..self.n {
                plam[j] += self.p[i][j] * lam[i];
                qlam[j] += self.q[i][j] * lam[i];
            }
        }
        (plam, qlam)
    }

    fn gvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|i| {
                (0..self.n).map(|j| self.p[i][j] / (self.upp[j] - x[j]) + self.q[i][j] / (x[j] - self.low[j])).sum()
            })
            .collect()
    }

    /// Perturbed KKT residual as one flat vector.
    fn residual(&self, w: &Point, epsi: f64) -> Vec<f64> {
        let (plam, qlam) = self.plam_qlam(&w.lam);
        let gvec = self.gvec(&w.x);
        let mut r = Vec::with_capacity(4 * self.n + 4 * self.m + 2);
        for j in 0..self.n {
            let ux = self.upp[j] - w.x[j];
            let xl = w.x[j] - self.low[j];
            r.push(plam[j] / (ux * ux) - qlam[j] / (xl * xl) - w.xsi[j] + w.eta[j]);
        }
        for i in 0..self.m {
            r.push(self.c + self.d * w.y[i] - w.mu[i] - w.lam[i]);
        }
        r.push(self.a0 - w.zet);
        for i in 0..self.m {
            r.push(gvec[i] - w.y[i] + w.s[i] - self.b[i]);
        }
        for j in 0..self.n {
            r.push(w.xsi[j] * (w.x[j] - self.alfa[j]) - epsi);
            r.push(w.eta[j] * (self.beta[j] - w.x[j]) - epsi);
        }
        for i in 0..self.m {
            r.push(w.mu[i] * w.y[i] - epsi);
            r.push(w.lam[i] * w.s[i] - epsi);
        }
        r.push(w.zet * w.z - epsi);
        r
    }

    fn solve(&self, epsimin: f64) -> Result<Vec<f64>> {
        let (n, m) = (self.n, self.m);
        let x: Vec<f64> = (0..n).map(|j| 0.5 * (self.alfa[j] + self.beta[j])).collect();
        let mut w = Point {
            xsi: (0..n).map(|j| (1.0 / (x[j] - self.alfa[j])).max(1.0)).collect(),
            eta: (0..n).map(|j| (1.0 / (self.beta[j] - x[j])).max(1.0)).collect(),
            x,
            y: vec![1.0; m],
            z: 1.0,
            lam: vec![1.0; m],
            mu: vec![(0.5 * self.c).max(1.0); m],
            zet: 1.0,
            s: vec![1.0; m],
        };
        let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let maxabs = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));

        let mut epsi = 1.0;
        while epsi > epsimin {
            let mut res = self.residual(&w, epsi);
            let mut resnorm = norm(&res);
            let mut resmax = maxabs(&res);
            let mut newton = 0;
            while resmax > 0.9 * epsi {
                newton += 1;
                if newton > 200 {
                    return Err(Error::MmaSubproblem(format!(
                        "no convergence at barrier {epsi:e}: residual norm {resnorm:e}, max {resmax:e}, \
                         z = {:e}, max y = {:e}",
                        w.z,
                        w.y.iter().fold(0.0f64, |a, v| a.max(*v))
                    )));
                }
                let dw = self.newton_direction(&w, epsi)?;
                let mut step = self.max_step(&w, &dw);
                let mut accepted = None;
                for _ in 0..50 {
                    let trial = w.axpy(step, &dw);
                    let r = self.residual(&trial, epsi);
                    let rn = norm(&r);
                    if rn <= resnorm {
                        accepted = Some((trial, r, rn));
                        break;
                    }
                    step *= 0.5;
                }
                let (trial, r, rn) = accepted.unwrap_or_else(|| {
                    let trial = w.axpy(step, &dw);
                    let r = self.residual(&trial, epsi);
                    let rn = norm(&r);
                    (trial, r, rn)
                });
                w = trial;
                res = r;
                resnorm = rn;
                resmax = maxabs(&res);
                if !resnorm.is_finite() {
                    return Err(Error::MmaSubproblem(format!("non-finite residual at barrier {epsi:e}")));
                }
            }
            epsi *= 0.1;
        }
        Ok(w.x)
    }

    fn newton_direction(&self, w: &Point, epsi: f64) -> Result<Point> {
        let (n, m) = (self.n, self.m);
        let (plam, qlam) = self.plam_qlam(&w.lam);
        let gvec = self.gvec(&w.x);
        let mut delx = vec![0.0; n];
        let mut diagx = vec![0.0; n];
        // GG[i][j] = ∂gᵢ/∂xⱼ of the approximations
        let mut gg = vec![vec![0.0; n]; m];
        for j in 0..n {
            let ux = self.upp[j] - w.x[j];
            let xl = w.x[j] - self.low[j];
            let (ux2, xl2) = (ux * ux, xl * xl);
            let dpsidx = plam[j] / ux2 - qlam[j] / xl2;
            delx[j] = dpsidx - epsi / (w.x[j] - self.alfa[j]) + epsi / (self.beta[j] - w.x[j]);
            diagx[j] = 2.0 * (plam[j] / (ux2 * ux) + qlam[j] / (xl2 * xl))
                + w.xsi[j] / (w.x[j] - self.alfa[j])
                + w.eta[j] / (self.beta[j] - w.x[j]);
            for i in 0..m {
                gg[i][j] = self.p[i][j] / ux2 - self.q[i][j] / xl2;
            }
        }
        let dely: Vec<f64> = (0..m).map(|i| self.c + self.d * w.y[i] - w.lam[i] - epsi / w.y[i]).collect();
        let delz = self.a0 - epsi / w.z;
        let dellam: Vec<f64> = (0..m).map(|i| gvec[i] - w.y[i] - self.b[i] + epsi / w.lam[i]).collect();
        let diagy: Vec<f64> = (0..m).map(|i| self.d + w.mu[i] / w.y[i]).collect();
        let diaglamyi: Vec<f64> = (0..m).map(|i| w.s[i] / w.lam[i] + 1.0 / diagy[i]).collect();

        // reduced (m+1)×(m+1) system in (dλ, dz); a = 0 decouples dz
        let mut aa = DMatrix::zeros(m + 1, m + 1);
        let mut bb = DVector::zeros(m + 1);
        for i in 0..m {
            for k in 0..=i {
                let v: f64 = (0..n).map(|j| gg[i][j] * gg[k][j] / diagx[j]).sum();
                aa[(i, k)] = v;
                aa[(k, i)] = v;
            }
            aa[(i, i)] += diaglamyi[i];
            bb[i] = dellam[i] + dely[i] / diagy[i] - (0..n).map(|j| gg[i][j] * delx[j] / diagx[j]).sum::<f64>();
        }
        aa[(m, m)] = -w.zet / w.z;
        bb[m] = delz;
        let sol = aa
            .lu()
            .solve(&bb)
            .ok_or_else(|| Error::MmaSubproblem(format!("singular Newton system at barrier {epsi:e}")))?;
        let dlam: Vec<f64> = (0..m).map(|i| sol[i]).collect();
        let dz = sol[m];
        let dx: Vec<f64> = (0..n)
            .map(|j| -delx[j] / diagx[j] - (0..m).map(|i| gg[i][j] * dlam[i]).sum::<f64>() / diagx[j])
            .collect();
        let dy: Vec<f64> = (0..m).map(|i| -dely[i] / diagy[i] + dlam[i] / diagy[i]).collect();
        let dxsi = (0..n)
            .map(|j| {
                let d = w.x[j] - self.alfa[j];
                -w.xsi[j] + epsi / d - w.xsi[j] * dx[j] / d
            })
            .collect();
        let deta = (0..n)
            .map(|j| {
                let d = self.beta[j] - w.x[j];
                -w.eta[j] + epsi / d + w.eta[j] * dx[j] / d
            })
            .collect();
        let dmu = (0..m).map(|i| -w.mu[i] + epsi / w.y[i] - w.mu[i] * dy[i] / w.y[i]).collect();
        let dzet = -w.zet + epsi / w.z - w.zet * dz / w.z;
        let ds = (0..m).map(|i| -w.s[i] + epsi / w.lam[i] - w.s[i] * dlam[i] / w.lam[i]).collect();
        Ok(Point { x: dx, y: dy, z: dz, lam: dlam, xsi: dxsi, eta: deta, mu: dmu, zet: dzet, s: ds })
    }

    /// Largest step keeping every positive unknown and `x` strictly interior.
    fn max_step(&self, w: &Point, d: &Point) -> f64 {
        let mut worst = 1.0f64;
        let mut check = |v: &[f64], dv: &[f64]| {
            for (a, b) in v.iter().zip(dv) {
                worst = worst.max(-1.01 * b / a);
            }
        };
        check(&w.y, &d.y);
        check(&[w.z], &[d.z]);
        check(&w.lam, &d.lam);
        check(&w.xsi, &d.xsi);
        check(&w.eta, &d.eta);
        check(&w.mu, &d.mu);
        check(&[w.zet], &[d.zet]);
        check(&w.s, &d.s);
        for j in 0..self.n {
            worst = worst.max(-1.01 * d.x[j] / (w.x[j] - self.alfa[j]));
            worst = worst.max(1.01 * d.x[j] / (self.beta[j] - w.x[j]));
        }
        1.0 / worst
    }
}
