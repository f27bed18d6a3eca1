use topobeta::fea::EigenSettings;
use topobeta::optimize::evaluate_design;
use topobeta::problems::{compressed_column, mbb, ColumnVariant, ProblemSpec};

fn design(n: usize) -> Vec<f64> {
    (0..n).map(|e| 0.5 + 0.15 * ((e as f64) * 0.71).sin()).collect()
}

/// Worst relative error of the full-chain gradient of `pick` against central
/// differences over the listed elements.
fn worst_error(problem: &ProblemSpec, x: &[f64], beta: f64, elements: &[usize], step: f64, pick: fn(&topobeta::optimize::DesignResponse) -> (f64, &[f64])) -> f64 {
    let eigen = EigenSettings::default();
    let base = evaluate_design(problem, x, beta, eigen).unwrap();
    let (_, grad) = pick(&base);
    let grad = grad.to_vec();
    let fd: Vec<f64> = elements
        .iter()
        .map(|&e| {
            let mut xp = x.to_vec();
            xp[e] += step;
            let mut xm = x.to_vec();
            xm[e] -= step;
            let fp = pick(&evaluate_design(problem, &xp, beta, eigen).unwrap()).0;
            let fm = pick(&evaluate_design(problem, &xm, beta, eigen).unwrap()).0;
            (fp - fm) / (2.0 * step)
        })
        .collect();
    elements
        .iter()
        .zip(&fd)
        .map(|(&e, &d)| (grad[e] - d).abs() / d.abs())
        .fold(0.0, f64::max)
}

fn objective(r: &topobeta::optimize::DesignResponse) -> (f64, &[f64]) {
    (r.objective, &r.objective_grad)
}

fn volume(r: &topobeta::optimize::DesignResponse) -> (f64, &[f64]) {
    (r.constraints[0], &r.constraint_grads[0])
}

#[test]
fn compliance_and_volume_through_the_full_chain() {
    let p = mbb(8, 4, 0.5, 1.5).unwrap();
    let x = design(32);
    let all: Vec<usize> = (0..32).collect();
    for beta in [1.0, 2.0, 8.0] {
        let c = worst_error(&p, &x, beta, &all, 1e-6, objective);
        let v = worst_error(&p, &x, beta, &all, 1e-6, volume);
        assert!(c <= 1e-4, "compliance at beta {beta}: {c}");
        assert!(v <= 1e-4, "volume at beta {beta}: {v}");
    }
}

#[test]
fn ks_objective_through_the_full_chain() {
    let p = compressed_column(4, 4.0, ColumnVariant::MaxBuckling).unwrap();
    let n = p.mesh.num_elements();
    let x: Vec<f64> = (0..n).map(|e| p.passive.pinned(e).unwrap_or(0.35 + 0.2 * ((e as f64) * 0.37).sin())).collect();
    let sample: Vec<usize> = (0..n).step_by(97).filter(|&e| p.passive.pinned(e).is_none()).collect();
    let err = worst_error(&p, &x, 2.0, &sample, 1e-5, objective);
    assert!(err <= 1e-3, "KS objective: {err}");
}

#[test]
fn passive_elements_have_zero_gradient() {
    let p = compressed_column(4, 4.0, ColumnVariant::MaxBuckling).unwrap();
    let n = p.mesh.num_elements();
    let x: Vec<f64> = (0..n).map(|e| p.passive.pinned(e).unwrap_or(0.35)).collect();
    let r = evaluate_design(&p, &x, 1.0, EigenSettings::default()).unwrap();
    let mut count = 0;
    for e in (0..n).filter(|&e| p.passive.pinned(e).is_some()) {
        assert_eq!(r.objective_grad[e], 0.0);
        assert_eq!(r.constraint_grads[0][e], 0.0);
        count += 1;
    }
    assert!(count > 0);
}
