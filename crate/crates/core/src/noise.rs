//! Noise-level algebra and discretization schedules.
//!
//! Forward time `u` runs from 0 (clean data) to `T`; the sampler runs in
//! reverse time `t = T - u` on a grid `0 = t_0 < … < t_N = T - δ < t_{N+1} = T`.
//! All `1 - e^{-2x}` quantities go through `expm1` so nothing cancels near zero.

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};

#[inline]
pub(crate) fn sigma_sq_raw(t: f64) -> f64 {
    -(-2.0 * t).exp_m1()
}

#[inline]
pub(crate) fn eta_raw(t: f64) -> f64 {
    (-t).exp() / sigma_sq_raw(t)
}

/// Noise variance `σ_t² = 1 - e^{-2t}` of the forward process at time `t`.
pub fn sigma_sq(t: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(domain(format!("sigma requires finite t >= 0, got {t}")));
    }
    Ok(sigma_sq_raw(t))
}

/// Noise scale `σ_t = √(1 - e^{-2t})`.
pub fn sigma(t: f64) -> Result<f64> {
    sigma_sq(t).map(f64::sqrt)
}

/// Weight `η_t = e^{-t} / (1 - e^{-2t})`.
///
/// Read as a function of reverse time, `f(τ) = η_{T-τ}` is the integrating
/// factor that removes the linear drift of the reparameterized reverse SDE.
pub fn eta(t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(domain(format!("eta has a pole at 0; requires t > 0, got {t}")));
    }
    Ok(eta_raw(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleFamily {
    TwoPhase,
    Uniform,
}

impl ScheduleFamily {
    pub fn build(self, horizon: f64, early_stop: f64, steps: usize) -> Result<Schedule> {
        match self {
            ScheduleFamily::TwoPhase => Schedule::two_phase(horizon, early_stop, steps),
            ScheduleFamily::Uniform => Schedule::uniform(horizon, early_stop, steps),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScheduleFamily::TwoPhase => "two-phase",
            ScheduleFamily::Uniform => "uniform",
        }
    }
}

impl std::str::FromStr for ScheduleFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-phase" => Ok(ScheduleFamily::TwoPhase),
            "uniform" => Ok(ScheduleFamily::Uniform),
            other => Err(config(format!("unknown schedule family {other:?}"))),
        }
    }
}

/// Conditions under which the KL guarantee for DDPM is stated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HypothesisViolation {
    KappaAboveLimit,
    HorizonNotAboveOne,
    EarlyStopOutOfRange,
}

pub const KAPPA_LIMIT: f64 = 0.9;

/// A reverse-time grid with its derived coefficients.
///
/// Only the times are stored as input; `α_n`, `ᾱ_n` and `κ` are recomputed on
/// construction and on deserialization.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    horizon: f64,
    early_stop: f64,
    times: Vec<f64>,
    alphas: Vec<f64>,
    one_minus_alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    one_minus_alpha_bars: Vec<f64>,
    kappa: f64,
    step_kappa: f64,
}

impl Schedule {
    /// Builds a schedule from explicit times `t_0..t_{N+1}`.
    pub fn from_times(horizon: f64, early_stop: f64, times: Vec<f64>) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(config(format!("horizon must be positive, got {horizon}")));
        }
        if !(early_stop > 0.0) || early_stop > horizon {
            return Err(config(format!(
                "early stop must lie in (0, T], got {early_stop}"
            )));
        }
        if times.len() < 2 {
            return Err(config("a schedule needs at least t_0 and t_{N+1}"));
        }
        if times[0] != 0.0 {
            return Err(config(format!("t_0 must be 0, got {}", times[0])));
        }
        if *times.last().unwrap() != horizon {
            return Err(config("t_{N+1} must equal the horizon T"));
        }
        if let Some(w) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(config(format!("times not strictly increasing at index {w}")));
        }
        let n = times.len() - 2;
        let last_gap = horizon - times[n];
        if (last_gap - early_stop).abs() > 1e-9 * horizon.max(1.0) {
            return Err(config(format!(
                "t_N = {} inconsistent with T - delta = {}",
                times[n],
                horizon - early_stop
            )));
        }

        let gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let alphas = gaps[..n].iter().map(|h| (-2.0 * h).exp()).collect();
        let one_minus_alphas = gaps[..n].iter().map(|h| -(-2.0 * h).exp_m1()).collect();
        let alpha_bars = times.iter().map(|t| (-2.0 * (horizon - t)).exp()).collect();
        let one_minus_alpha_bars = times.iter().map(|t| sigma_sq_raw(horizon - t)).collect();
        let kappa = kappa_of(horizon, &times);
        let step_kappa = kappa_of(horizon, &times[..=n]);

        Ok(Schedule {
            horizon,
            early_stop,
            times,
            alphas,
            one_minus_alphas,
            alpha_bars,
            one_minus_alpha_bars,
            kappa,
            step_kappa,
        })
    }

    /// Linear first phase on `[0, T-1]`, geometric approach from `T-1` to
    /// `T-δ` in the second phase.
    pub fn two_phase(horizon: f64, early_stop: f64, steps: usize) -> Result<Self> {
        if !(horizon > 1.0) {
            return Err(config(format!("two-phase schedule needs T > 1, got {horizon}")));
        }
        if !(early_stop > 0.0 && early_stop < 1.0) {
            return Err(config(format!(
                "two-phase schedule needs 0 < delta < 1, got {early_stop}"
            )));
        }
        if steps < 2 || steps % 2 != 0 {
            return Err(config(format!(
                "two-phase schedule needs an even N >= 2, got {steps}"
            )));
        }
        let half = steps / 2;
        let nf = steps as f64;
        let mut times = Vec::with_capacity(steps + 2);
        for n in 0..=steps {
            let t = if n <= half {
                2.0 * (horizon - 1.0) * n as f64 / nf
            } else {
                horizon - early_stop.powf(2.0 * (n - half) as f64 / nf)
            };
            times.push(t);
        }
        times.push(horizon);
        Self::from_times(horizon, early_stop, times)
    }

    /// Equally spaced grid on `[0, T-δ]`.
    pub fn uniform(horizon: f64, early_stop: f64, steps: usize) -> Result<Self> {
        if !(horizon > early_stop && early_stop > 0.0) {
            return Err(config(format!(
                "uniform schedule needs T > delta > 0, got T={horizon}, delta={early_stop}"
            )));
        }
        if steps < 1 {
            return Err(config("uniform schedule needs N >= 1"));
        }
        let span = horizon - early_stop;
        let mut times: Vec<f64> = (0..=steps)
            .map(|n| span * (n as f64 / steps as f64))
            .collect();
        times.push(horizon);
        Self::from_times(horizon, early_stop, times)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn early_stop(&self) -> f64 {
        self.early_stop
    }

    /// Number of DDPM steps `N`.
    pub fn steps(&self) -> usize {
        self.times.len() - 2
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// `max_{0<=n<=N} (t_{n+1} - t_n) / min(1, T - t_n)`.
    ///
    /// The final interval `[T-δ, T]` always contributes `δ/min(1, δ)`, so this
    /// is at least 1 whenever `δ <= 1`.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// The same ratio taken over the `N` simulated steps only. This is the
    /// quantity that scales like the average step size and is compared with
    /// [`KAPPA_LIMIT`].
    pub fn step_kappa(&self) -> f64 {
        self.step_kappa
    }

    /// `t_{n+1} - t_n`.
    pub fn interval(&self, n: usize) -> f64 {
        self.times[n + 1] - self.times[n]
    }

    /// Forward time `T - t_n` at which the score is frozen on interval `n`.
    pub fn forward_time(&self, n: usize) -> f64 {
        self.horizon - self.times[n]
    }

    /// `γ_n = √ᾱ_n = e^{-(T - t_n)}`.
    pub fn gamma(&self, n: usize) -> f64 {
        (-(self.horizon - self.times[n])).exp()
    }

    pub fn hypothesis_violations(&self) -> Vec<HypothesisViolation> {
        let mut out = Vec::new();
        if self.step_kappa > KAPPA_LIMIT {
            out.push(HypothesisViolation::KappaAboveLimit);
        }
        if !(self.horizon > 1.0) {
            out.push(HypothesisViolation::HorizonNotAboveOne);
        }
        if !(self.early_stop > 0.0 && self.early_stop < 1.0) {
            out.push(HypothesisViolation::EarlyStopOutOfRange);
        }
        out
    }

    /// DDPM coefficients of step `n`, `0 <= n < N`.
    pub fn step_coeffs(&self, n: usize) -> Result<StepCoefficients> {
        if n >= self.steps() {
            return Err(domain(format!(
                "step index {n} out of range for N = {}",
                self.steps()
            )));
        }
        let mut c = StepCoefficients::from_interval(self.forward_time(n), self.interval(n))?;
        // Use the cached products so that the ᾱ identities hold against this schedule.
        c.alpha = self.alphas[n];
        c.one_minus_alpha = self.one_minus_alphas[n];
        c.alpha_bar = self.alpha_bars[n];
        c.sigma_sq = self.one_minus_alpha_bars[n];
        Ok(c)
    }
}

fn kappa_of(horizon: f64, times: &[f64]) -> f64 {
    times
        .windows(2)
        .map(|w| (w[1] - w[0]) / (horizon - w[0]).min(1.0))
        .fold(0.0, f64::max)
}

#[derive(Serialize, Deserialize)]
struct ScheduleJson {
    #[serde(rename = "T")]
    horizon: f64,
    delta: f64,
    #[serde(rename = "N")]
    steps: usize,
    times: Vec<f64>,
}

impl Serialize for Schedule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ScheduleJson {
            horizon: self.horizon,
            delta: self.early_stop,
            steps: self.steps(),
            times: self.times.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Schedule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = ScheduleJson::deserialize(d)?;
        if raw.times.len() != raw.steps + 2 {
            return Err(serde::de::Error::custom(format!(
                "N = {} but {} times given (expected N + 2)",
                raw.steps,
                raw.times.len()
            )));
        }
        Schedule::from_times(raw.horizon, raw.delta, raw.times).map_err(serde::de::Error::custom)
    }
}

/// Coefficients of one DDPM step
/// `y' = drift_scale·y + score_weight·ŝ + noise_std·z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepCoefficients {
    /// `1/√α_n`
    pub drift_scale: f64,
    /// `(1-α_n)/√α_n`
    pub score_weight: f64,
    /// `√((1-α_n)(1-ᾱ_{n+1})/(1-ᾱ_n))`
    pub noise_std: f64,
    /// `T - t_n`
    pub forward_time: f64,
    /// `σ²_{T-t_n} = 1 - ᾱ_n`
    pub sigma_sq: f64,
    pub alpha: f64,
    pub one_minus_alpha: f64,
    pub alpha_bar: f64,
    pub one_minus_alpha_bar_next: f64,
}

impl StepCoefficients {
    /// Coefficients for a step that starts at forward time `u = T - t_n` and
    /// has length `h = t_{n+1} - t_n`. `h = 0` gives the identity step.
    pub fn from_interval(u: f64, h: f64) -> Result<Self> {
        if !(u > 0.0) || !(h >= 0.0) || !(u - h > 0.0) || !u.is_finite() {
            return Err(domain(format!(
                "step needs 0 <= h < u, got u = {u}, h = {h}"
            )));
        }
        let alpha = (-2.0 * h).exp();
        let one_minus_alpha = -(-2.0 * h).exp_m1();
        let sigma_sq = sigma_sq_raw(u);
        let one_minus_alpha_bar_next = sigma_sq_raw(u - h);
        let drift_scale = h.exp();
        Ok(StepCoefficients {
            drift_scale,
            score_weight: one_minus_alpha * drift_scale,
            noise_std: (one_minus_alpha * one_minus_alpha_bar_next / sigma_sq).sqrt(),
            forward_time: u,
            sigma_sq,
            alpha,
            one_minus_alpha,
            alpha_bar: (-2.0 * u).exp(),
            one_minus_alpha_bar_next,
        })
    }

    /// Noise std in the form `(1/√α)·√((1-α)(α-ᾱ_n)/(1-ᾱ_n))`.
    pub fn noise_std_alpha_form(&self) -> f64 {
        // α - ᾱ_n = α(1 - ᾱ_{n+1})
        let gap = self.alpha * self.one_minus_alpha_bar_next;
        self.drift_scale * (self.one_minus_alpha * gap / self.sigma_sq).sqrt()
    }
}

/// Noise std written through `γ_n = e^{-(T-t_n)}`:
/// `√((γ²_{n+1} - γ²_n)(1 - γ²_{n+1}) / ((1 - γ²_n) γ²_{n+1}))`.
pub fn gamma_form_noise_std(u: f64, h: f64) -> f64 {
    let g1_sq = (-2.0 * (u - h)).exp();
    let diff = g1_sq * -(-2.0 * h).exp_m1();
    let one_minus_g0_sq = -(-2.0 * u).exp_m1();
    let one_minus_g1_sq = -(-2.0 * (u - h)).exp_m1();
    (diff * one_minus_g1_sq / (one_minus_g0_sq * g1_sq)).sqrt()
}

/// Step coefficients obtained by integrating the adaptively discretized
/// reverse SDE exactly over one interval with the integrating factor
/// `f(τ) = η_{T-τ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorCoefficients {
    pub state_gain: f64,
    pub score_gain: f64,
    pub noise_std: f64,
    /// `∫ 2 f(τ)² dτ` over the interval.
    pub weight_integral: f64,
}

pub fn integrator_coeffs(u: f64, h: f64) -> Result<IntegratorCoefficients> {
    if !(u > 0.0) || !(h >= 0.0) || !(u - h > 0.0) {
        return Err(domain(format!("interval needs 0 <= h < u, got u = {u}, h = {h}")));
    }
    let gamma_n = (-u).exp();
    let one_minus_g0_sq = sigma_sq_raw(u);
    let one_minus_g1_sq = sigma_sq_raw(u - h);
    let g1_sq = (-2.0 * (u - h)).exp();
    let integral = g1_sq * -(-2.0 * h).exp_m1() / (one_minus_g0_sq * one_minus_g1_sq);
    let f_n = eta_raw(u);
    let f_next = eta_raw(u - h);
    // μ̂ = (y + σ² ŝ)/γ_n
    Ok(IntegratorCoefficients {
        state_gain: (f_n + integral / gamma_n) / f_next,
        score_gain: integral * one_minus_g0_sq / (gamma_n * f_next),
        noise_std: integral.sqrt() / f_next,
        weight_integral: integral,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn sigma_values() {
        assert_eq!(sigma(0.0).unwrap(), 0.0);
        assert!(sigma(50.0).unwrap() > 1.0 - 1e-12);
        let s = sigma(std::f64::consts::LN_2).unwrap();
        assert!(rel(s, 3f64.sqrt() / 2.0) < 1e-15);
        assert!(sigma(-1e-3).is_err());
    }

    #[test]
    fn eta_values() {
        assert!(rel(eta(std::f64::consts::LN_2).unwrap(), 2.0 / 3.0) < 1e-15);
        assert!((eta(20.0).unwrap() - (-20f64).exp()).abs() <= 1e-15);
        // e^{-t}/(1 - e^{-2t}) ≈ 1/(2t) for small t
        assert!(rel(eta(0.01).unwrap(), 50.0) < 0.01);
        assert!(eta(0.0).is_err());
        assert!(eta(-1.0).is_err());
    }

    #[test]
    fn two_phase_small_example() {
        let s = Schedule::two_phase(3.0, 0.01, 4).unwrap();
        let expected = [0.0, 1.0, 2.0, 2.9, 2.99, 3.0];
        for (a, b) in s.times().iter().zip(expected) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
        // ratios 1/1, 1/1, 0.9/1, 0.09/0.1, 0.01/0.01
        assert!((s.kappa() - 1.0).abs() < 1e-12);
        assert!((s.step_kappa() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_phase_rejects_bad_input() {
        assert!(Schedule::two_phase(3.0, 0.01, 5).is_err());
        assert!(Schedule::two_phase(3.0, 1.0, 4).is_err());
        assert!(Schedule::two_phase(1.0, 0.01, 4).is_err());
        assert!(Schedule::two_phase(3.0, 0.01, 0).is_err());
    }

    #[test]
    fn uniform_example() {
        let s = Schedule::uniform(2.0, 0.5, 3).unwrap();
        let expected = [0.0, 0.5, 1.0, 1.5, 2.0];
        for (a, b) in s.times().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((s.kappa() - 1.0).abs() < 1e-15);
        assert!((s.step_kappa() - 0.5).abs() < 1e-15);
        // last interval has length δ and denominator δ
        let fine = Schedule::uniform(4.0, 0.2, 4000).unwrap();
        assert!((fine.kappa() - 1.0).abs() < 1e-12);
        assert!(Schedule::uniform(1.0, 1.0, 3).is_err());
        assert!(Schedule::uniform(2.0, 0.5, 0).is_err());
    }

    #[test]
    fn kappa_tracks_average_step() {
        for &(t, d) in &[(3.0, 0.01), (6.0, 1e-3), (2.0, 0.5), (8.0, 0.1)] {
            for n in [32, 64, 256, 1024] {
                let s = Schedule::two_phase(t, d, n).unwrap();
                let avg = (t + (1.0f64 / d).ln()) / n as f64;
                assert_eq!(s.kappa(), 1.0);
                let ratio = s.step_kappa() / avg;
                assert!((1.0 / 3.0..=3.0).contains(&ratio), "T={t} δ={d} N={n}: {ratio}");
            }
        }
    }

    #[test]
    fn step_coeffs_example() {
        // T - t_n = 1, interval 0.1
        let c = StepCoefficients::from_interval(1.0, 0.1).unwrap();
        let alpha = (-0.2f64).exp();
        let ab = (-2.0f64).exp();
        let ab1 = (-1.8f64).exp();
        assert!(rel(c.alpha, 0.818_730_753_077_981_9) < 1e-15);
        assert!(rel(c.alpha_bar, 0.135_335_283_236_612_7) < 1e-15);
        assert!(rel(1.0 - c.one_minus_alpha_bar_next, 0.165_298_888_221_586_5) < 1e-13);
        let by_hand = ((1.0 - alpha) * (1.0 - ab1) / (1.0 - ab)).sqrt();
        assert!(rel(c.noise_std, by_hand) < 1e-13);
        assert!((c.noise_std - 0.418316).abs() < 1e-6);
        assert!(rel(c.noise_std_alpha_form(), c.noise_std) < 1e-12);
        assert_eq!(c.sigma_sq, -(-2.0f64).exp_m1());
    }

    #[test]
    fn zero_length_step_is_identity() {
        let c = StepCoefficients::from_interval(0.7, 0.0).unwrap();
        assert_eq!(c.alpha, 1.0);
        assert_eq!(c.noise_std, 0.0);
        assert_eq!(c.drift_scale, 1.0);
        assert_eq!(c.score_weight, 0.0);
    }

    #[test]
    fn step_index_checked() {
        let s = Schedule::two_phase(3.0, 0.01, 4).unwrap();
        assert!(s.step_coeffs(3).is_ok());
        assert!(s.step_coeffs(4).is_err());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let s = Schedule::two_phase(4.0, 0.05, 16).unwrap();
        let js = serde_json::to_string(&s).unwrap();
        assert!(js.contains("\"T\":4.0") && js.contains("\"N\":16"));
        let back: Schedule = serde_json::from_str(&js).unwrap();
        assert_eq!(back, s);
        let bad = r#"{"T":3.0,"delta":0.01,"N":2,"times":[0.0,2.0,1.5,3.0]}"#;
        assert!(serde_json::from_str::<Schedule>(bad).is_err());
        let wrong_n = r#"{"T":3.0,"delta":0.01,"N":3,"times":[0.0,1.0,2.99,3.0]}"#;
        assert!(serde_json::from_str::<Schedule>(wrong_n).is_err());
    }

    #[test]
    fn hypothesis_flags() {
        let coarse = Schedule::two_phase(3.0, 0.01, 4).unwrap();
        assert!(coarse
            .hypothesis_violations()
            .contains(&HypothesisViolation::KappaAboveLimit));
        let fine = Schedule::two_phase(4.0, 0.01, 256).unwrap();
        assert!(fine.hypothesis_violations().is_empty());
    }

    #[test]
    fn integrator_matches_ddpm_example() {
        let c = StepCoefficients::from_interval(1.0, 0.1).unwrap();
        let e = integrator_coeffs(1.0, 0.1).unwrap();
        assert!(rel(e.state_gain, c.drift_scale) < 1e-13);
        assert!(rel(e.score_gain, c.score_weight) < 1e-13);
        assert!(rel(e.noise_std, c.noise_std) < 1e-13);
    }

    proptest! {
        #[test]
        fn schedule_invariants(t in 1.5f64..8.0, logd in -7.0f64..-0.1, half in 1usize..256) {
            let d = logd.exp();
            let s = Schedule::two_phase(t, d, 2 * half).unwrap();
            let times = s.times();
            prop_assert_eq!(times[0], 0.0);
            prop_assert!((times[s.steps()] - (t - d)).abs() < 1e-12);
            for n in 0..s.steps() {
                let a = (-2.0 * (times[n + 1] - times[n])).exp();
                prop_assert!(rel(s.alphas()[n], a) < 1e-15);
                let prod = s.alphas()[n] * s.alpha_bars()[n + 1];
                prop_assert!(rel(prod, s.alpha_bars()[n]) < 1e-14);
                let c = s.step_coeffs(n).unwrap();
                prop_assert!(rel(gamma_form_noise_std(c.forward_time, s.interval(n)), c.noise_std) < 1e-12);
                prop_assert!(rel(c.noise_std_alpha_form(), c.noise_std) < 1e-12);
                prop_assert_eq!(c.sigma_sq, -(-2.0 * (t - times[n])).exp_m1());
            }
            prop_assert_eq!(s.kappa(), kappa_of(t, times));
            prop_assert_eq!(s.step_kappa(), kappa_of(t, &times[..=s.steps()]));
        }

        #[test]
        fn sigma_increasing_eta_decreasing(a in 1e-6f64..10.0, b in 1e-6f64..10.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi > lo);
            prop_assert!(sigma(hi).unwrap() >= sigma(lo).unwrap());
            prop_assert!(eta(hi).unwrap() <= eta(lo).unwrap());
        }

        #[test]
        fn eta_ratio_bounded(t in 1.5f64..8.0, logd in -7.0f64..-0.1, half in 16usize..256, frac in 0.0f64..1.0) {
            let s = Schedule::two_phase(t, logd.exp(), 2 * half).unwrap();
            prop_assume!(s.step_kappa() <= KAPPA_LIMIT);
            for n in 0..s.steps() {
                let tt = s.times()[n] + frac * s.interval(n);
                let r = eta_raw(t - tt) / eta_raw(t - s.times()[n]);
                prop_assert!(r <= 25.0, "ratio {} at n={}", r, n);
            }
        }
    }
}
