//! Sampling-free analysis for the unit-scale subspace Gaussian (and the point
//! mass, `k = 0`).
//!
//! With a linear score every DDPM step maps `N(0, V)` to a Gaussian and
//! commutes with the projection onto the subspace, so the output law is
//! described by two variances: `v_par` on the `k` subspace directions and
//! `v_perp` on the other `d - k`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::exec::{try_map_indexed, Workers};
use crate::noise::{sigma_sq_raw, Schedule, ScheduleFamily, StepCoefficients};
use crate::quadrature::{integrate, Tolerance};
use crate::sampler::SamplerVariant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralState {
    pub v_par: f64,
    pub v_perp: f64,
    pub k: usize,
    pub d: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Initialization {
    /// `N(0, I_d)`, as the sampler does.
    StandardNormal,
    /// The forward marginal `q_T`.
    ForwardMarginal,
}

/// Which side of the bias points along `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasSign {
    Outward,
    Inward,
}

/// Score error of the form `ŝ_n(x) - s_n(x) = c_n x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBias {
    pub coefficients: Vec<f64>,
}

impl LinearBias {
    /// `c_n = ±√(budget / ((T-δ) E‖X_{T-t_n}‖²))` with `E‖X_u‖² = k + (d-k)σ_u²`,
    /// so the mean squared score error integrates to `budget` under the
    /// forward marginals.
    pub fn from_budget(budget: f64, schedule: &Schedule, k: usize, d: usize, sign: BiasSign) -> Result<Self> {
        if !(budget >= 0.0) || !budget.is_finite() {
            return Err(config(format!("score error budget must be >= 0, got {budget}")));
        }
        check_dims(k, d)?;
        let span = schedule.horizon() - schedule.early_stop();
        let s = match sign {
            BiasSign::Outward => 1.0,
            BiasSign::Inward => -1.0,
        };
        let coefficients = (0..schedule.steps())
            .map(|n| s * (budget / (span * second_moment_at(schedule.forward_time(n), k, d))).sqrt())
            .collect();
        Ok(LinearBias { coefficients })
    }

    /// `Σ_n (t_{n+1} - t_n) c_n² E‖X_{T-t_n}‖²`.
    pub fn budget(&self, schedule: &Schedule, k: usize, d: usize) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(n, c)| schedule.interval(n) * c * c * second_moment_at(schedule.forward_time(n), k, d))
            .sum()
    }
}

fn second_moment_at(u: f64, k: usize, d: usize) -> f64 {
    k as f64 + (d - k) as f64 * sigma_sq_raw(u)
}

fn check_dims(k: usize, d: usize) -> Result<()> {
    if d == 0 || k > d {
        return Err(config(format!("need 0 <= k <= d and d >= 1, got k = {k}, d = {d}")));
    }
    Ok(())
}

/// `(m_par, m_perp)` for one step with linear bias `c`.
pub fn step_multipliers(c: &StepCoefficients, bias: f64) -> (f64, f64) {
    let par = c.drift_scale * (1.0 + c.one_minus_alpha * (bias - 1.0));
    let perp = c.drift_scale * (1.0 + c.one_minus_alpha * (bias - 1.0 / c.sigma_sq));
    (par, perp)
}

/// Variances after each step: entry `n` is the state at `t_n`.
pub fn propagate_trajectory(
    schedule: &Schedule,
    k: usize,
    d: usize,
    variant: SamplerVariant,
    bias: Option<&LinearBias>,
    init: Initialization,
) -> Result<Vec<SpectralState>> {
    check_dims(k, d)?;
    if let Some(b) = bias {
        if b.coefficients.len() != schedule.steps() {
            return Err(Error::Shape {
                expected: schedule.steps(),
                got: b.coefficients.len(),
            });
        }
    }
    let (mut v_par, mut v_perp) = match init {
        Initialization::StandardNormal => (1.0, 1.0),
        Initialization::ForwardMarginal => (1.0, sigma_sq_raw(schedule.horizon())),
    };
    let mut out = Vec::with_capacity(schedule.steps() + 1);
    out.push(SpectralState { v_par, v_perp, k, d });
    for n in 0..schedule.steps() {
        let c = variant.coefficients(&schedule.step_coeffs(n)?);
        let b = bias.map_or(0.0, |b| b.coefficients[n]);
        let (mp, mq) = step_multipliers(&c, b);
        let ns2 = c.noise_std * c.noise_std;
        v_par = mp * mp * v_par + ns2;
        v_perp = mq * mq * v_perp + ns2;
        if !(v_par > 0.0 && v_perp > 0.0) || !v_par.is_finite() || !v_perp.is_finite() {
            return Err(Error::Numeric(format!(
                "variance left (0, ∞): v_par = {v_par}, v_perp = {v_perp}"
            ))
            .at_step(n));
        }
        out.push(SpectralState { v_par, v_perp, k, d });
    }
    Ok(out)
}

/// State at `t_N` from a standard normal start.
pub fn propagate_covariance(
    schedule: &Schedule,
    k: usize,
    d: usize,
    variant: SamplerVariant,
    bias: Option<&LinearBias>,
) -> Result<SpectralState> {
    Ok(*propagate_trajectory(schedule, k, d, variant, bias, Initialization::StandardNormal)?
        .last()
        .unwrap())
}

/// `g(r) = r - 1 - ln r`, accurate near `r = 1`.
pub fn g(r: f64) -> f64 {
    let x = r - 1.0;
    if x.abs() < 1e-3 {
        // x - ln(1+x) = x²/2 - x³/3 + x⁴/4 - …
        let mut term = x * x;
        let mut sum = 0.0;
        for j in 2..9 {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * term / j as f64;
            term *= x;
        }
        sum
    } else {
        x - r.ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlOrientation {
    /// `KL(q_δ ‖ p_output)`.
    TargetFirst,
    /// `KL(p_output ‖ q_δ)`.
    OutputFirst,
}

/// KL between the sampler output `N(0, diag(v_par, v_perp))` and
/// `q_δ = N(0, diag(1, σ_δ²))` in the orientation given.
pub fn exact_kl_oriented(state: &SpectralState, delta: f64, orientation: KlOrientation) -> Result<f64> {
    if !(state.v_par > 0.0 && state.v_perp > 0.0) {
        return Err(domain(format!(
            "variances must be positive, got ({}, {})",
            state.v_par, state.v_perp
        )));
    }
    if !(delta > 0.0) {
        return Err(domain(format!("early stop must be positive, got {delta}")));
    }
    let s2 = sigma_sq_raw(delta);
    let (r_par, r_perp) = match orientation {
        KlOrientation::TargetFirst => (1.0 / state.v_par, s2 / state.v_perp),
        KlOrientation::OutputFirst => (state.v_par, state.v_perp / s2),
    };
    let kk = state.k as f64;
    let rest = (state.d - state.k) as f64;
    let par = if state.k == 0 { 0.0 } else { kk * g(r_par) };
    let perp = if state.d == state.k { 0.0 } else { rest * g(r_perp) };
    Ok(0.5 * (par + perp))
}

/// `KL(q_δ ‖ p_output)`.
pub fn exact_kl(state: &SpectralState, delta: f64) -> Result<f64> {
    exact_kl_oriented(state, delta, KlOrientation::TargetFirst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationIntegral {
    pub total: f64,
    pub per_interval: Vec<f64>,
}

/// Integrand of interval `n` at reverse time `t`, written in forward time
/// `u = T - t` with `u_n = T - t_n`:
/// `k (1-σ_u²)/σ_u⁴ · (σ_{u_n}² - σ_u²)`.
pub fn discretization_integrand(u: f64, u_n: f64, k: usize) -> f64 {
    let e = (-2.0 * u).exp();
    let gap = e * -(-2.0 * (u_n - u)).exp_m1();
    let v = sigma_sq_raw(u);
    k as f64 * e * gap / (v * v)
}

/// `Σ_n ∫_{t_n}^{t_{n+1}} D_{t_n,t} dt` for the unit-scale subspace Gaussian,
/// where `E Tr Σ_u = k σ_u²`.
pub fn discretization_integral(schedule: &Schedule, k: usize, d: usize) -> Result<DiscretizationIntegral> {
    check_dims(k, d)?;
    let tol = Tolerance::default();
    let mut per_interval = Vec::with_capacity(schedule.steps());
    for n in 0..schedule.steps() {
        if k == 0 {
            per_interval.push(0.0);
            continue;
        }
        let u_n = schedule.forward_time(n);
        let u_next = schedule.forward_time(n + 1);
        let r = integrate(|u| discretization_integrand(u, u_n, k), u_next, u_n, tol).map_err(|_| {
            Error::Quadrature {
                interval: n,
                lo: schedule.times()[n],
                hi: schedule.times()[n + 1],
            }
        })?;
        per_interval.push(r.value);
    }
    Ok(DiscretizationIntegral {
        total: per_interval.iter().sum(),
        per_interval,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitTerms {
    /// `KL(q_T ‖ N(0, I_d)) = ½ (d-k) g(σ_T²)`.
    pub init_kl: f64,
    /// `(d + E‖X_0‖²) e^{-2T} = (d + k) e^{-2T}`.
    pub init_bound: f64,
    /// `init_bound / init_kl` (infinite when the KL is zero).
    pub slack: f64,
}

pub fn init_terms(horizon: f64, d: usize, k: usize) -> Result<InitTerms> {
    check_dims(k, d)?;
    if !(horizon > 0.0) {
        return Err(domain(format!("horizon must be positive, got {horizon}")));
    }
    let init_kl = 0.5 * (d - k) as f64 * g(sigma_sq_raw(horizon));
    let init_bound = (d + k) as f64 * (-2.0 * horizon).exp();
    Ok(InitTerms {
        init_kl,
        init_bound,
        slack: if init_kl > 0.0 { init_bound / init_kl } else { f64::INFINITY },
    })
}

pub const MAX_STEPS: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum MinSteps {
    Found {
        steps: usize,
        objective: f64,
        /// `(N, exact_kl + init_kl)` at every evaluated `N`, sorted by `N`.
        evaluations: Vec<(usize, f64)>,
    },
    Saturated {
        max_steps: usize,
        objective: f64,
        evaluations: Vec<(usize, f64)>,
    },
}

impl MinSteps {
    pub fn steps(&self) -> Option<usize> {
        match self {
            MinSteps::Found { steps, .. } => Some(*steps),
            MinSteps::Saturated { .. } => None,
        }
    }

    pub fn evaluations(&self) -> &[(usize, f64)] {
        match self {
            MinSteps::Found { evaluations, .. } | MinSteps::Saturated { evaluations, .. } => evaluations,
        }
    }

    /// Whether the objective never increases along the evaluated `N`.
    pub fn is_monotone(&self) -> bool {
        self.evaluations().windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-9))
    }
}

/// Objective minimized by [`find_min_steps`] at one `N`.
pub type Objective<'a> = dyn Fn(usize) -> Result<f64> + 'a;

/// Smallest even `N` with `objective(N) <= target`, assuming the objective
/// is non-increasing in `N`. The ladder `2^p, 1.5·2^p` brackets the answer,
/// then bisection over even `N` pins it down.
pub fn find_min_steps_with(objective: &Objective<'_>, target: f64, max_steps: usize) -> Result<MinSteps> {
    let mut evaluations = Vec::new();
    let eval = |n: usize, ev: &mut Vec<(usize, f64)>| -> Result<f64> {
        let v = objective(n)?;
        ev.push((n, v));
        Ok(v)
    };
    let mut ladder = vec![2usize];
    let mut p = 2usize;
    while p <= max_steps {
        ladder.push(p);
        if p + p / 2 <= max_steps && p >= 4 {
            ladder.push(p + p / 2);
        }
        p *= 2;
    }
    ladder.sort_unstable();
    ladder.dedup();
    let mut lo = 0usize;
    let mut hi = None;
    for &n in &ladder {
        let v = eval(n, &mut evaluations)?;
        if v <= target {
            hi = Some((n, v));
            break;
        }
        lo = n;
    }
    let Some((mut hi_n, mut hi_v)) = hi else {
        let objective = evaluations.last().map_or(f64::NAN, |e| e.1);
        evaluations.sort_by_key(|e| e.0);
        return Ok(MinSteps::Saturated {
            max_steps,
            objective,
            evaluations,
        });
    };
    // invariant: lo fails (or is 0), hi_n passes, both even
    while hi_n - lo > 2 {
        let mid = lo + ((hi_n - lo) / 2) / 2 * 2;
        let mid = if mid == lo { lo + 2 } else { mid };
        let v = eval(mid, &mut evaluations)?;
        if v <= target {
            hi_n = mid;
            hi_v = v;
        } else {
            lo = mid;
        }
    }
    evaluations.sort_by_key(|e| e.0);
    Ok(MinSteps::Found {
        steps: hi_n,
        objective: hi_v,
        evaluations,
    })
}

/// Smallest even `N` with `exact_kl + init_kl <= eps_sq` for the DDPM sampler
/// with exact scores on the given schedule family.
pub fn find_min_steps(
    k: usize,
    d: usize,
    eps_sq: f64,
    horizon: f64,
    early_stop: f64,
    family: ScheduleFamily,
) -> Result<MinSteps> {
    check_dims(k, d)?;
    let init = init_terms(horizon, d, k)?.init_kl;
    let objective = |n: usize| -> Result<f64> {
        let s = family.build(horizon, early_stop, n)?;
        let state = propagate_covariance(&s, k, d, SamplerVariant::Ddpm, None)?;
        Ok(exact_kl(&state, early_stop)? + init)
    };
    find_min_steps_with(&objective, eps_sq, MAX_STEPS)
}

/// Same search with the constant-free upper bound
/// `discretization_integral + init_kl` as the objective.
pub fn find_min_steps_bound(
    k: usize,
    d: usize,
    eps_sq: f64,
    horizon: f64,
    early_stop: f64,
    family: ScheduleFamily,
) -> Result<MinSteps> {
    check_dims(k, d)?;
    let init = init_terms(horizon, d, k)?.init_kl;
    let objective = |n: usize| -> Result<f64> {
        let s = family.build(horizon, early_stop, n)?;
        Ok(discretization_integral(&s, k, d)?.total + init)
    };
    // each evaluation costs O(N) quadratures
    find_min_steps_with(&objective, eps_sq, 1 << 16)
}

/// All terms of the KL bound chain for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub k: usize,
    pub d: usize,
    pub variant: SamplerVariant,
    pub schedule: Schedule,
    pub kappa: f64,
    pub step_kappa: f64,
    pub discretization_integral: f64,
    pub score_term: f64,
    pub init_kl: f64,
    pub init_bound: f64,
    pub init_slack: f64,
    pub exact_kl: Option<f64>,
    pub exact_kl_exact_score: Option<f64>,
    pub t2_split: Vec<f64>,
}

impl BoundReport {
    /// Evaluates every term. `bias` is the injected score error; its budget
    /// is reported as the score term.
    pub fn evaluate(
        schedule: &Schedule,
        k: usize,
        d: usize,
        variant: SamplerVariant,
        bias: Option<&LinearBias>,
    ) -> Result<Self> {
        let disc = discretization_integral(schedule, k, d)?;
        let init = init_terms(schedule.horizon(), d, k)?;
        let delta = schedule.early_stop();
        let exact = exact_kl(&propagate_covariance(schedule, k, d, variant, bias)?, delta)?;
        let exact0 = if bias.is_some() {
            exact_kl(&propagate_covariance(schedule, k, d, variant, None)?, delta)?
        } else {
            exact
        };
        Ok(BoundReport {
            k,
            d,
            variant,
            schedule: schedule.clone(),
            kappa: schedule.kappa(),
            step_kappa: schedule.step_kappa(),
            discretization_integral: disc.total,
            score_term: bias.map_or(0.0, |b| b.budget(schedule, k, d)),
            init_kl: init.init_kl,
            init_bound: init.init_bound,
            init_slack: init.slack,
            exact_kl: Some(exact),
            exact_kl_exact_score: Some(exact0),
            t2_split: disc.per_interval,
        })
    }

    /// Whether `exact_kl <= discretization_integral + init_kl`.
    pub fn chain_holds(&self) -> bool {
        self.exact_kl
            .is_none_or(|kl| kl <= self.discretization_integral + self.init_kl)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// One row per interval: `n, t_n, t_next, forward_time, interval, t2`.
    pub fn write_intervals_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["n", "t_n", "t_next", "forward_time", "interval", "t2"])?;
        let times = self.schedule.times();
        for (n, t2) in self.t2_split.iter().enumerate() {
            out.write_record([
                n.to_string(),
                format!("{:?}", times[n]),
                format!("{:?}", times[n + 1]),
                format!("{:?}", self.schedule.forward_time(n)),
                format!("{:?}", self.schedule.interval(n)),
                format!("{t2:?}"),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Evaluates reports for many configurations in parallel, in input order.
pub fn evaluate_grid(
    configs: &[(Schedule, usize, usize)],
    variant: SamplerVariant,
    workers: Workers,
) -> Result<Vec<BoundReport>> {
    try_map_indexed(configs.len(), workers, |i| {
        let (s, k, d) = &configs[i];
        BoundReport::evaluate(s, *k, *d, variant, None)
    })
}
