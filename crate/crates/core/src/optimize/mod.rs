//! Design updates and the optimization loop.
//!
//! Each iteration evaluates the three fields at the current β, runs the
//! analyses the problem needs, hands the objective and gray level to the
//! continuation state (which fixes β for the next iteration), tests the stop
//! criteria and finally updates the design.

pub mod mma;
pub mod oc;

pub use mma::{mma_update, MmaParams, MmaState};
pub use oc::{oc_update, OcParams};

use log::{debug, info};

use crate::continuation::{relative_change, ContinuationState, SchemeConfig, StopCriteria, DEFAULT_BETA_TOTAL_MAX};
use crate::error::{Error, Result};
use crate::fea::{
    buckling_eigs, compliance_and_sensitivity, eigenvalue_gradient, ks_aggregate, stress_stiffness, EigenSettings,
    FeModel,
};
use crate::problems::{ComplianceBound, Constraint, Objective, ProblemSpec};
use crate::threefield::{DesignField, FilterOperator, ProjectionParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Oc(OcParams),
    Mma(MmaParams),
}

impl OptimizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Oc(_) => "oc",
            OptimizerKind::Mma(_) => "mma",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunLimits {
    pub max_iterations: usize,
    pub stop: StopCriteria,
    pub beta_total_max: f64,
    pub eigen: EigenSettings,
}

impl Default for RunLimits {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            stop: StopCriteria::default(),
            beta_total_max: DEFAULT_BETA_TOTAL_MAX,
            eigen: EigenSettings::default(),
        }
    }
}

/// One row of the optimization history.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based.
    pub iter: usize,
    pub objective: f64,
    /// Normalized constraint values, feasible when `≤ 0`.
    pub constraints: Vec<f64>,
    pub volume: f64,
    pub gray: f64,
    /// β used to evaluate this iteration's physical field.
    pub beta: f64,
    /// Largest change of a design variable since the previous iteration.
    pub change: f64,
    /// Increase of β applied after this iteration.
    pub delta_beta: f64,
    /// K-S estimate of the lowest buckling load factor, when computed.
    pub lambda_ks: Option<f64>,
    /// Lowest buckling load factor, when computed.
    pub lambda_1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    IterationCap,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::IterationCap => "cap",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub design: DesignField,
    pub history: Vec<IterationRecord>,
    pub termination: Termination,
    /// Buckling load factors of the final design, ascending, when computed.
    pub eigenvalues: Option<Vec<f64>>,
}

impl RunOutcome {
    pub fn last(&self) -> &IterationRecord {
        self.history.last().expect("a run has at least one iteration")
    }
}

/// A scalar response and its derivative with respect to the physical field.
struct Response {
    value: f64,
    grad: Vec<f64>,
}

struct Evaluation {
    objective: Response,
    constraints: Vec<Response>,
    lambda_ks: Option<f64>,
    eigenvalues: Option<Vec<f64>>,
}

struct Analyzer<'a> {
    problem: &'a ProblemSpec,
    model: FeModel,
    eigen: EigenSettings,
    compliance_bound: Option<f64>,
}

impl<'a> Analyzer<'a> {
    fn new(problem: &'a ProblemSpec, eigen: EigenSettings) -> Result<Self> {
        let model = FeModel::new(&problem.mesh, problem.material.nu, &problem.supports)?;
        let mut compliance_bound = None;
        for c in &problem.constraints {
            if let Constraint::Compliance { bound } = c {
                compliance_bound = Some(match *bound {
                    ComplianceBound::Absolute(v) => v,
                    ComplianceBound::SolidMultiple(k) => {
                        let solid = vec![1.0; problem.mesh.num_elements()];
                        let eq = model.solve(&problem.material.young_field(&solid), &problem.loads)?;
                        k * compliance_and_sensitivity(&model, &eq.u, &problem.loads, &solid, &problem.material).0
                    }
                });
            }
        }
        Ok(Self { problem, model, eigen, compliance_bound })
    }

    fn evaluate(&mut self, field: &DesignField) -> Result<Evaluation> {
        let p = self.problem;
        let xphys = &field.x_phys;
        let n = xphys.len() as f64;
        let eq = self.model.solve(&p.material.young_field(xphys), &p.loads)?;

        let wants_compliance = p.objective == Objective::Compliance
            || p.constraints.iter().any(|c| matches!(c, Constraint::Compliance { .. }));
        let compliance = wants_compliance
            .then(|| compliance_and_sensitivity(&self.model, &eq.u, &p.loads, xphys, &p.material));

        let mut ks = None;
        let mut eigenvalues = None;
        if p.needs_buckling() {
            let ksigma = stress_stiffness(&self.model, &eq.u, xphys, &p.material);
            let res = buckling_eigs(&self.model, &eq, &ksigma, p.modes, self.eigen)?;
            debug!("eigen: {} Lanczos steps", res.iterations);
            let inverse: Vec<f64> = res.eigenvalues.iter().map(|l| 1.0 / l).collect();
            let (value, weights) = ks_aggregate(&inverse, p.ks_rho);
            // ∂(1/λ)/∂λ = −1/λ²
            let coeffs: Vec<f64> = weights.iter().zip(&res.eigenvalues).map(|(w, l)| -w / (l * l)).collect();
            let grad = eigenvalue_gradient(&self.model, &eq, &p.material, xphys, &res, &coeffs, true)?;
            eigenvalues = Some(res.eigenvalues.clone());
            ks = Some(Response { value, grad });
        }

        let volume = || Response { value: field.volume(), grad: vec![1.0 / n; xphys.len()] };
        let objective = match p.objective {
            Objective::Compliance => {
                let (c, dc) = compliance.clone().expect("compliance computed");
                Response { value: c, grad: dc }
            }
            Objective::KsInverseBuckling => {
                let k = ks.as_ref().expect("buckling computed");
                Response { value: k.value, grad: k.grad.clone() }
            }
            Objective::Volume => volume(),
        };
        let scaled = |r: &Response, bound: f64| Response {
            value: r.value / bound - 1.0,
            grad: r.grad.iter().map(|g| g / bound).collect(),
        };
        let constraints = p
            .constraints
            .iter()
            .map(|c| match *c {
                Constraint::Volume { max_fraction } => scaled(&volume(), max_fraction),
                Constraint::Buckling { min_factor } => {
                    // λ_KS = 1/KS ≥ λ*  ⇔  λ*·KS − 1 ≤ 0
                    let k = ks.as_ref().expect("buckling computed");
                    scaled(k, 1.0 / min_factor)
                }
                Constraint::Compliance { .. } => {
                    let (c, dc) = compliance.clone().expect("compliance computed");
                    scaled(&Response { value: c, grad: dc }, self.compliance_bound.expect("bound resolved"))
                }
            })
            .collect();
        Ok(Evaluation { objective, constraints, lambda_ks: ks.map(|k| 1.0 / k.value), eigenvalues })
    }
}

/// Responses of a problem at design `x` and their derivatives with respect
/// to the design variables (through filter, projection and interpolation).
#[derive(Debug, Clone)]
pub struct DesignResponse {
    pub objective: f64,
    pub objective_grad: Vec<f64>,
    /// Normalized constraint values, feasible when `≤ 0`.
    pub constraints: Vec<f64>,
    pub constraint_grads: Vec<Vec<f64>>,
    pub eigenvalues: Option<Vec<f64>>,
}

/// Evaluates `problem` at design `x` with projection sharpness `beta`.
pub fn evaluate_design(problem: &ProblemSpec, x: &[f64], beta: f64, eigen: EigenSettings) -> Result<DesignResponse> {
    problem.validate()?;
    let filter = FilterOperator::new(&problem.mesh, problem.rmin)?;
    let field = DesignField::evaluate(x.to_vec(), &filter, ProjectionParams::new(beta, problem.eta), &problem.passive)?;
    let eval = Analyzer::new(problem, eigen)?.evaluate(&field)?;
    let objective_grad = field.chain(&eval.objective.grad, &filter, &problem.passive)?;
    let constraint_grads = eval
        .constraints
        .iter()
        .map(|c| field.chain(&c.grad, &filter, &problem.passive))
        .collect::<Result<_>>()?;
    Ok(DesignResponse {
        objective: eval.objective.value,
        objective_grad,
        constraints: eval.constraints.iter().map(|c| c.value).collect(),
        constraint_grads,
        eigenvalues: eval.eigenvalues,
    })
}

/// Runs the optimization loop until the stop criteria hold or the iteration
/// cap is reached.
pub fn run_optimization(problem: &ProblemSpec, scheme: SchemeConfig, limits: &RunLimits) -> Result<RunOutcome> {
    problem.validate()?;
    if limits.max_iterations == 0 {
        return Err(Error::InvalidParameter { name: "max_iterations", reason: "must be at least 1".into() });
    }
    match &problem.optimizer {
        OptimizerKind::Oc(p) => p.validate()?,
        OptimizerKind::Mma(p) => p.validate()?,
    }
    let nel = problem.mesh.num_elements();
    let filter = FilterOperator::new(&problem.mesh, problem.rmin)?;
    let passive = &problem.passive;
    let mut analyzer = Analyzer::new(problem, limits.eigen)?;
    let mut continuation = ContinuationState::new(scheme, limits.beta_total_max);
    let mut mma_state = MmaState::new();
    let free: Vec<usize> = (0..nel).filter(|&e| passive.pinned(e).is_none()).collect();

    let mut x: Vec<f64> = (0..nel).map(|e| passive.pinned(e).unwrap_or(problem.initial_density)).collect();
    let mut x_prev: Option<Vec<f64>> = None;
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut objective_scale = None;

    for k in 1..=limits.max_iterations {
        let at = |e: Error| Error::AtIteration { iteration: k, source: Box::new(e) };
        let beta = continuation.beta();
        let proj = ProjectionParams::new(beta, problem.eta);
        let field = DesignField::evaluate(x.clone(), &filter, proj, passive).map_err(at)?;
        let eval = analyzer.evaluate(&field).map_err(at)?;
        let f = eval.objective.value;
        let gray = field.gray_level();
        let change = x_prev
            .as_ref()
            .map_or(0.0, |xp| xp.iter().zip(&x).fold(0.0f64, |a, (u, v)| a.max((u - v).abs())));
        let rel = history.last().map_or(f64::INFINITY, |r| relative_change(f, r.objective));
        let feasible = eval.constraints.iter().all(|c| c.value <= limits.stop.constraint_tol);
        let delta_beta = continuation.advance(f, gray);

        history.push(IterationRecord {
            iter: k,
            objective: f,
            constraints: eval.constraints.iter().map(|c| c.value).collect(),
            volume: field.volume(),
            gray,
            beta,
            change,
            delta_beta,
            lambda_ks: eval.lambda_ks,
            lambda_1: eval.eigenvalues.as_ref().and_then(|l| l.first().copied()),
        });
        debug!("it {k:4} f {f:.6e} V {:.4} G {gray:.4e} beta {beta:.3} ch {change:.3e}", field.volume());

        if limits.stop.should_stop(gray, rel, feasible) {
            info!("converged after {k} iterations (beta {beta}, gray {gray:.3e})");
            return Ok(RunOutcome {
                design: field,
                history,
                termination: Termination::Converged,
                eigenvalues: eval.eigenvalues,
            });
        }
        if k == limits.max_iterations {
            info!("iteration cap {k} reached (beta {beta}, gray {gray:.3e})");
            return Ok(RunOutcome {
                design: field,
                history,
                termination: Termination::IterationCap,
                eigenvalues: eval.eigenvalues,
            });
        }

        let df = field.chain(&eval.objective.grad, &filter, passive).map_err(at)?;
        let x_new = match &problem.optimizer {
            OptimizerKind::Oc(params) => {
                let max_fraction = match problem.constraints[0] {
                    Constraint::Volume { max_fraction } => max_fraction,
                    _ => unreachable!("validated: single volume constraint"),
                };
                let dv = field.chain(&eval.constraints[0].grad, &filter, passive).map_err(at)?;
                // the next field is evaluated at the already advanced β
                let next_beta = ProjectionParams::new(continuation.beta(), problem.eta);
                oc_update(&x, &df, &dv, max_fraction, params, |xn| {
                    Ok(DesignField::evaluate(xn.to_vec(), &filter, next_beta, passive)?.volume())
                })
                .map_err(at)?
            }
            OptimizerKind::Mma(params) => {
                let scale = *objective_scale.get_or_insert(f.abs().max(1e-30));
                let df0: Vec<f64> = free.iter().map(|&e| df[e] / scale).collect();
                let mut dg = Vec::with_capacity(eval.constraints.len());
                for c in &eval.constraints {
                    let d = field.chain(&c.grad, &filter, passive).map_err(at)?;
                    dg.push(free.iter().map(|&e| d[e]).collect::<Vec<_>>());
                }
                let g: Vec<f64> = eval.constraints.iter().map(|c| c.value).collect();
                let xf: Vec<f64> = free.iter().map(|&e| x[e]).collect();
                let lo = vec![0.0; free.len()];
                let hi = vec![1.0; free.len()];
                let step = mma_update(&mut mma_state, &xf, &df0, &g, &dg, &lo, &hi, params).map_err(at)?;
                let mut xn = x.clone();
                for (&e, v) in free.iter().zip(step) {
                    xn[e] = v;
                }
                xn
            }
        };
        x_prev = Some(std::mem::replace(&mut x, x_new));
    }
    unreachable!("the loop returns at the iteration cap")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuation::AutomaticParams;
    use crate::problems::{cantilever_linear, mbb};

    #[test]
    fn iteration_cap_gives_exact_record_count() {
        let p = mbb(12, 4, 0.5, 1.5).unwrap();
        let limits = RunLimits { max_iterations: 5, ..RunLimits::default() };
        let out = run_optimization(&p, SchemeConfig::default(), &limits).unwrap();
        assert_eq!(out.history.len(), 5);
        assert_eq!(out.termination, Termination::IterationCap);
        assert_eq!(out.termination.as_str(), "cap");
        assert_eq!(out.history[0].beta, 1.0);
        assert_eq!(out.history[0].change, 0.0);
    }

    #[test]
    fn oc_iterates_hold_volume_and_bounds() {
        let p = mbb(20, 8, 0.4, 2.0).unwrap();
        let limits = RunLimits { max_iterations: 30, ..RunLimits::default() };
        let out = run_optimization(&p, SchemeConfig::default(), &limits).unwrap();
        // the first iterate is the uniform start; later ones come from OC
        for r in &out.history[1..] {
            assert!((r.volume - 0.4).abs() <= 1e-6, "iter {} volume {}", r.iter, r.volume);
        }
        assert!(out.design.x.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(out.history.windows(2).all(|w| w[1].beta >= w[0].beta));
    }

    #[test]
    fn runs_are_bit_reproducible() {
        let p = mbb(16, 6, 0.5, 1.8).unwrap();
        let limits = RunLimits { max_iterations: 25, ..RunLimits::default() };
        let a = run_optimization(&p, SchemeConfig::default(), &limits).unwrap();
        let b = run_optimization(&p, SchemeConfig::default(), &limits).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.design, b.design);
    }

    #[test]
    fn mma_cantilever_with_stability_runs() {
        let p = cantilever_linear(80, 20, 2e5, true).unwrap();
        let limits = RunLimits { max_iterations: 4, ..RunLimits::default() };
        let scheme = SchemeConfig::Automatic(AutomaticParams::default());
        let out = run_optimization(&p, scheme, &limits).unwrap();
        assert_eq!(out.history.len(), 4);
        for r in &out.history {
            assert_eq!(r.constraints.len(), 2);
            assert!(r.lambda_ks.unwrap() <= r.lambda_1.unwrap() * (1.0 + 1e-12));
        }
        assert!(out.design.x.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn errors_carry_iteration_context() {
        let mut p = mbb(8, 4, 0.5, 1.5).unwrap();
        p.optimizer = OptimizerKind::Oc(OcParams { bracket: (0.0, 1e-30), ..OcParams::default() });
        let limits = RunLimits { max_iterations: 3, ..RunLimits::default() };
        let err = run_optimization(&p, SchemeConfig::default(), &limits).unwrap_err();
        assert!(matches!(err, Error::AtIteration { iteration: 1, .. }), "{err}");
    }
}
