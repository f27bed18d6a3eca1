//! Scheduling of the projection sharpness β.
//!
//! The automatic scheme grows β every iteration by an amount tied to how much
//! the objective is still changing: a design that is still emerging (large
//! relative change) gets a small increase, a settling design a large one,
//! capped at a fraction of the current β. Growth stops while the gray level is
//! at or below the target. Stepped and constant schedules are provided for
//! comparison.

/// Absolute ceiling for β unless configured otherwise.
pub const DEFAULT_BETA_TOTAL_MAX: f64 = 512.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutomaticParams {
    pub gamma: f64,
    /// Largest per-iteration increase as a fraction of the current β.
    pub cap_fraction: f64,
    /// Gray level at or below which β is no longer increased.
    pub epsilon: f64,
    /// Use `|f_k| + |f_{k-1}|` in the numerator instead of the signed sum.
    pub abs_numerator: bool,
}

impl Default for AutomaticParams {
    fn default() -> Self {
        Self { gamma: 1e-4, cap_fraction: 0.2, epsilon: 0.01, abs_numerator: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteppedParams {
    pub hold_iters: usize,
    pub step: f64,
    pub interval: usize,
    pub beta_cap: f64,
    pub epsilon: f64,
    pub freeze_on_gray: bool,
}

impl SteppedParams {
    /// β = 1 for 400 iterations, then +2 every 25 iterations up to 25.
    pub fn default_scheme() -> Self {
        Self { hold_iters: 400, step: 2.0, interval: 25, beta_cap: 25.0, epsilon: 0.01, freeze_on_gray: true }
    }

    /// β = 1 for 200 iterations, then +2 every 25 iterations up to 500.
    pub fn modified_scheme() -> Self {
        Self { hold_iters: 200, beta_cap: 500.0, ..Self::default_scheme() }
    }

    /// Scheduled β for iteration `k` (1-based).
    pub fn scheduled_beta(&self, k: usize) -> f64 {
        if k <= self.hold_iters {
            return 1.0;
        }
        let steps = (k - self.hold_iters - 1) / self.interval.max(1) + 1;
        (1.0 + self.step * steps as f64).min(self.beta_cap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeConfig {
    Automatic(AutomaticParams),
    Stepped(SteppedParams),
    Constant { beta: f64 },
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig::Automatic(AutomaticParams::default())
    }
}

impl SchemeConfig {
    pub fn stepped_default() -> Self {
        SchemeConfig::Stepped(SteppedParams::default_scheme())
    }

    pub fn stepped_modified() -> Self {
        SchemeConfig::Stepped(SteppedParams::modified_scheme())
    }

    pub fn initial_beta(&self) -> f64 {
        match self {
            SchemeConfig::Constant { beta } => *beta,
            _ => 1.0,
        }
    }
}

/// Raw automatic increase from two successive objective values.
///
/// A zero denominator (objective unchanged) yields `+∞`; callers cap it.
pub fn delta_beta(f_k: f64, f_km1: f64, gamma: f64, abs_numerator: bool) -> f64 {
    let den = f_k - f_km1;
    if den == 0.0 {
        return f64::INFINITY;
    }
    let num = if abs_numerator { f_k.abs() + f_km1.abs() } else { f_k + f_km1 };
    (-0.5 * gamma * num / den).max(0.0)
}

/// β state for one optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationState {
    pub scheme: SchemeConfig,
    pub beta: f64,
    pub beta_total_max: f64,
    pub f_prev: Option<f64>,
    /// Iteration whose result will be passed to the next `advance`, 1-based.
    pub iter: usize,
}

impl ContinuationState {
    pub fn new(scheme: SchemeConfig, beta_total_max: f64) -> Self {
        Self { scheme, beta: scheme.initial_beta().min(beta_total_max), beta_total_max, f_prev: None, iter: 1 }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Consumes the objective and gray level of the current iteration and sets
    /// β for the next one. Returns the increase applied.
    pub fn advance(&mut self, f_k: f64, gray: f64) -> f64 {
        let before = self.beta;
        match self.scheme {
            SchemeConfig::Automatic(p) => self.advance_automatic(p, f_k, gray),
            SchemeConfig::Stepped(p) => self.advance_stepped(p, gray),
            SchemeConfig::Constant { .. } => {}
        }
        self.f_prev = Some(f_k);
        self.iter += 1;
        self.beta - before
    }

    fn advance_automatic(&mut self, p: AutomaticParams, f_k: f64, gray: f64) {
        let Some(f_prev) = self.f_prev else { return };
        if gray <= p.epsilon {
            return;
        }
        let step = delta_beta(f_k, f_prev, p.gamma, p.abs_numerator).min(p.cap_fraction * self.beta);
        self.beta = (self.beta + step).min(self.beta_total_max).max(self.beta);
    }

    fn advance_stepped(&mut self, p: SteppedParams, gray: f64) {
        if p.freeze_on_gray && gray <= p.epsilon {
            return;
        }
        let target = p.scheduled_beta(self.iter + 1).min(self.beta_total_max);
        self.beta = self.beta.max(target);
    }
}

/// `|f_k − f_{k−1}| / max(|f_k|, 1e-30)`.
pub fn relative_change(f_k: f64, f_km1: f64) -> f64 {
    (f_k - f_km1).abs() / f_k.abs().max(1e-30)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopCriteria {
    pub gray: f64,
    pub rel_change: f64,
    /// Normalized constraint values up to this count as satisfied.
    pub constraint_tol: f64,
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self { gray: 0.01, rel_change: 1e-5, constraint_tol: 1e-4 }
    }
}

impl StopCriteria {
    pub fn should_stop(&self, gray: f64, rel_change: f64, constraints_satisfied: bool) -> bool {
        gray < self.gray && rel_change < self.rel_change && constraints_satisfied
    }
}

/// Composite stopping test with the default thresholds.
pub fn should_stop(gray: f64, rel_change: f64, constraints_satisfied: bool) -> bool {
    StopCriteria::default().should_stop(gray, rel_change, constraints_satisfied)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn automatic() -> ContinuationState {
        ContinuationState::new(SchemeConfig::default(), DEFAULT_BETA_TOTAL_MAX)
    }

    #[test]
    fn delta_beta_hand_values() {
        // -(1e-4/2) * (0.99 + 1.0) / (0.99 - 1.0)
        assert!((delta_beta(0.99, 1.0, 1e-4, false) - 9.95e-3).abs() < 1e-15);
        assert!((delta_beta(1.0, 2.0, 1e-4, false) - 1.5e-4).abs() < 1e-18);
        assert_eq!(delta_beta(1.1, 1.0, 1e-4, false), 0.0);
        assert_eq!(delta_beta(1.0, 1.0, 1e-4, false), f64::INFINITY);
    }

    #[test]
    fn abs_numerator_variant() {
        // sign-crossing objectives: literal sum is zero, absolute sum is not
        assert_eq!(delta_beta(-1.0, 1.0, 1e-4, false), 0.0);
        assert!((delta_beta(-1.0, 1.0, 1e-4, true) - 5e-5).abs() < 1e-18);
    }

    #[test]
    fn first_iteration_and_gray_gate_hold_beta() {
        let mut s = automatic();
        assert_eq!(s.beta(), 1.0);
        assert_eq!(s.advance(1.0, 0.5), 0.0);
        assert_eq!(s.beta(), 1.0);
        // settled objective but already binary enough
        assert_eq!(s.advance(1.0, 0.005), 0.0);
        assert_eq!(s.beta(), 1.0);
        assert_eq!(s.advance(0.5, 0.01), 0.0);
        assert_eq!(s.beta(), 1.0);
    }

    #[test]
    fn cap_binds() {
        let mut s = automatic();
        s.beta = 100.0;
        s.f_prev = Some(1.0);
        s.iter = 5;
        // raw increase 50 from f: 1.0 -> f_k with -(1e-4/2)(f_k+1)/(f_k-1) = 50
        let f_k = (1.0 - 1e-6) / (1.0 + 1e-6);
        assert!((delta_beta(f_k, 1.0, 1e-4, false) - 50.0).abs() < 1e-6);
        s.advance(f_k, 0.3);
        assert!((s.beta() - 120.0).abs() < 1e-12);

        let mut s = automatic();
        s.beta = 10.0;
        s.f_prev = Some(3.0);
        s.iter = 9;
        s.advance(3.0, 0.3);
        assert!((s.beta() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn total_max_binds() {
        let mut s = ContinuationState::new(SchemeConfig::default(), 50.0);
        s.beta = 45.0;
        s.f_prev = Some(1.0);
        s.advance(1.0, 0.5);
        assert_eq!(s.beta(), 50.0);
        s.advance(1.0, 0.5);
        assert_eq!(s.beta(), 50.0);
    }

    #[test]
    fn stepped_schedules() {
        let d = SteppedParams::default_scheme();
        assert_eq!(d.scheduled_beta(100), 1.0);
        assert_eq!(d.scheduled_beta(400), 1.0);
        assert_eq!(d.scheduled_beta(401), 3.0);
        assert_eq!(d.scheduled_beta(425), 3.0);
        assert_eq!(d.scheduled_beta(426), 5.0);
        assert_eq!(d.scheduled_beta(1000), 25.0);
        let m = SteppedParams::modified_scheme();
        assert_eq!(m.scheduled_beta(200), 1.0);
        assert_eq!(m.scheduled_beta(201), 3.0);
        assert_eq!(m.scheduled_beta(100_000), 500.0);
    }

    #[test]
    fn stepped_state_tracks_schedule() {
        let mut s = ContinuationState::new(SchemeConfig::stepped_default(), DEFAULT_BETA_TOTAL_MAX);
        let mut betas = vec![s.beta()];
        for _ in 0..1000 {
            s.advance(1.0, 0.5);
            betas.push(s.beta());
        }
        // betas[k-1] is the β used in iteration k
        assert_eq!(betas[99], 1.0);
        assert_eq!(betas[400], 3.0);
        assert_eq!(betas[425], 5.0);
        assert_eq!(betas[999], 25.0);
    }

    #[test]
    fn stepped_freezes_on_gray() {
        let mut s = ContinuationState::new(SchemeConfig::stepped_modified(), DEFAULT_BETA_TOTAL_MAX);
        for _ in 0..300 {
            s.advance(1.0, 0.5);
        }
        let frozen = s.beta();
        assert!(frozen > 1.0);
        for _ in 0..100 {
            s.advance(1.0, 0.009);
        }
        assert_eq!(s.beta(), frozen);
    }

    #[test]
    fn constant_scheme() {
        let mut s = ContinuationState::new(SchemeConfig::Constant { beta: 4.0 }, DEFAULT_BETA_TOTAL_MAX);
        for k in 0..50 {
            s.advance(1.0 / (k + 1) as f64, 0.5);
        }
        assert_eq!(s.beta(), 4.0);
    }

    #[test]
    fn stopping_rule() {
        assert!(should_stop(0.009, 5e-6, true));
        assert!(!should_stop(0.02, 1e-7, true));
        assert!(!should_stop(0.005, 1e-6, false));
        assert!(!should_stop(0.005, 2e-5, true));
        assert_eq!(relative_change(1.0, 1.0), 0.0);
        assert!((relative_change(2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn automatic_beta_monotone_and_bounded(
            fs in proptest::collection::vec(0.01f64..10.0, 2..200),
            gs in proptest::collection::vec(0.0f64..1.0, 200),
        ) {
            let mut s = automatic();
            for (k, f) in fs.iter().enumerate() {
                let before = s.beta();
                let prev = s.f_prev;
                let applied = s.advance(*f, gs[k]);
                prop_assert!(s.beta() >= before);
                prop_assert!(s.beta() <= before * 1.2 + 1e-12);
                prop_assert!(s.beta() <= DEFAULT_BETA_TOTAL_MAX);
                if let Some(p) = prev {
                    if *f > p {
                        prop_assert_eq!(applied, 0.0);
                    }
                }
            }
        }

        #[test]
        fn low_gray_keeps_initial_beta(fs in proptest::collection::vec(0.01f64..10.0, 1..100), g in 0.0f64..=0.01) {
            for scheme in [SchemeConfig::default(), SchemeConfig::stepped_default(), SchemeConfig::stepped_modified()] {
                let mut s = ContinuationState::new(scheme, DEFAULT_BETA_TOTAL_MAX);
                for f in &fs {
                    s.advance(*f, g);
                }
                prop_assert_eq!(s.beta(), 1.0);
            }
        }

        #[test]
        fn stepped_caps(n in 1usize..3000) {
            let d = SteppedParams::default_scheme();
            let m = SteppedParams::modified_scheme();
            prop_assert!(d.scheduled_beta(n) <= 25.0);
            prop_assert!(m.scheduled_beta(n) <= 500.0);
            prop_assert!(d.scheduled_beta(n + 1) >= d.scheduled_beta(n));
        }
    }
}
