//! The named experiments.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use log::info;
use lowdim_ddpm::batch::BatchSidecar;
use lowdim_ddpm::diagnostics::{
    check_trace_monotone, cover_sweep, energy_permutation_test, posvar_bound, trace_curve,
};
use lowdim_ddpm::gaussian_exact::{
    discretization_integral, evaluate_grid, exact_kl, find_min_steps, find_min_steps_bound, init_terms,
    propagate_covariance, BiasSign, LinearBias, MinSteps,
};
use lowdim_ddpm::noise::{Schedule, ScheduleFamily};
use lowdim_ddpm::sampler::run_batch;
use lowdim_ddpm::targets::{forward_sample, DirectionField, ScoreOracle, Target};
use lowdim_ddpm::{Error, Result, SamplerVariant, Workers};

use crate::config::{ExperimentName, ExperimentSpec};
use crate::record::{Cell, ExperimentRecord};

/// A failed run: the partial record plus the error, with the config for context.
#[derive(Debug)]
pub struct RunError {
    pub record: Box<ExperimentRecord>,
    pub source: Error,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let spec = serde_json::to_string(&self.record.spec).unwrap_or_default();
        write!(
            f,
            "{} failed after {} rows (spec {}): {}\nspec: {spec}",
            self.record.experiment,
            self.record.rows.len(),
            self.record.spec_hash,
            self.source
        )
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

/// Runs the experiment named in `spec`. Files produced along the way (the
/// sample batch) go to `out` when given; the record itself is not written.
pub fn run(spec: &ExperimentSpec, workers: Workers, out: Option<&Path>) -> std::result::Result<ExperimentRecord, RunError> {
    let start = Instant::now();
    let mut rec = match ExperimentRecord::new(spec) {
        Ok(r) => r,
        Err(e) => return Err(fail(spec, e)),
    };
    if let Err(e) = spec.validate() {
        rec.error = Some(e.to_string());
        return Err(RunError {
            record: Box::new(rec),
            source: e,
        });
    }
    info!("running {} (spec {})", spec.experiment, rec.spec_hash);
    let result = match spec.experiment {
        ExperimentName::Schedule => schedule(spec, &mut rec),
        ExperimentName::Sample => sample(spec, workers, out, &mut rec),
        ExperimentName::Ksweep => ksweep(spec, &mut rec),
        ExperimentName::Nsweep => nsweep(spec, &mut rec),
        ExperimentName::ScheduleCompare => schedule_compare(spec, &mut rec),
        ExperimentName::VariantCompare => variant_compare(spec, &mut rec),
        ExperimentName::ScoreErrorSweep => score_error_sweep(spec, &mut rec),
        ExperimentName::BoundCheck => bound_check(spec, workers, &mut rec),
        ExperimentName::TraceCurves => trace_curves(spec, workers, &mut rec),
        ExperimentName::Covering => covering(spec, workers, &mut rec),
    };
    rec.wall_clock_secs = start.elapsed().as_secs_f64();
    // JSON has no NaN or infinity
    rec.summary.retain(|_, v| v.is_finite());
    match result {
        Ok(()) => Ok(rec),
        Err(e) => {
            rec.error = Some(e.to_string());
            Err(RunError {
                record: Box::new(rec),
                source: e,
            })
        }
    }
}

fn fail(spec: &ExperimentSpec, e: Error) -> RunError {
    let record = ExperimentRecord {
        experiment: spec.experiment,
        spec: spec.clone(),
        spec_hash: String::new(),
        build: crate::record::BUILD_ID.to_string(),
        columns: Vec::new(),
        rows: Vec::new(),
        schedules: Vec::new(),
        theorem_hypothesis_violated: false,
        summary: Default::default(),
        verdicts: Vec::new(),
        artifacts: Vec::new(),
        wall_clock_secs: 0.0,
        error: Some(e.to_string()),
    };
    RunError {
        record: Box::new(record),
        source: e,
    }
}

fn build_schedule(spec: &ExperimentSpec, family: ScheduleFamily, n: usize) -> Result<Schedule> {
    family.build(spec.horizon(), spec.early_stop, n)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let m = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn schedule(spec: &ExperimentSpec, rec: &mut ExperimentRecord) -> Result<()> {
    rec.set_columns(&[
        "N",
        "n",
        "t_n",
        "t_next",
        "interval",
        "forward_time",
        "alpha",
        "alpha_bar",
        "drift_scale",
        "noise_std",
    ]);
    for &n in &spec.steps {
        let s = build_schedule(spec, spec.family, n)?;
        rec.add_schedule(format!("N={n}"), &s);
        for i in 0..s.steps() {
            let c = s.step_coeffs(i)?;
            rec.push_row(vec![
                n.into(),
                i.into(),
                s.times()[i].into(),
                s.times()[i + 1].into(),
                s.interval(i).into(),
                s.forward_time(i).into(),
                c.alpha.into(),
                c.alpha_bar.into(),
                c.drift_scale.into(),
                c.noise_std.into(),
            ])?;
        }
    }
    Ok(())
}

fn sample(spec: &ExperimentSpec, workers: Workers, out: Option<&Path>, rec: &mut ExperimentRecord) -> Result<()> {
    let target = spec.target.build()?;
    let s = build_schedule(spec, spec.family, spec.steps[0])?;
    rec.add_schedule(format!("N={}", s.steps()), &s);
    let variant = spec.variants[0];
    let oracle = ScoreOracle::exact(target.clone());
    let oracle = if spec.score_budget > 0.0 {
        oracle.perturb(spec.score_budget, &s, DirectionField::Radial)?
    } else {
        oracle
    };
    let batch = run_batch(&oracle, &s, variant, spec.samples, spec.seed, workers)?;
    rec.set_columns(&["coord", "mean", "variance"]);
    let mean = batch.mean();
    let n = batch.len() as f64;
    for (j, m) in mean.iter().enumerate() {
        let var = batch.rows().map(|r| (r[j] - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        rec.push_row(vec![j.into(), (*m).into(), var.into()])?;
    }
    if spec.permutations > 0 {
        let reference = forward_sample(&target, s.early_stop(), spec.samples, spec.seed.wrapping_add(1), workers)?;
        let test = energy_permutation_test(&batch, &reference, spec.permutations, spec.seed.wrapping_add(2), workers)?;
        rec.summary.insert("energy_distance".into(), test.observed);
        rec.summary.insert("energy_p_value".into(), test.p_value());
        rec.summary.insert("energy_null_q95".into(), test.quantile(0.95));
    }
    if let Some(dir) = out {
        let mut side = BatchSidecar::for_batch(&batch);
        side.schedule = Some(s.clone());
        side.variant = Some(variant.name().into());
        side.schedule_hash = Some(lowdim_ddpm::batch::json_hash(&s)?);
        side.oracle_hash = Some(oracle.config_hash());
        batch.save(dir, "samples", &side)?;
        rec.artifacts.push("samples.csv".into());
        rec.artifacts.push("samples.json".into());
    }
    Ok(())
}

fn ksweep(spec: &ExperimentSpec, rec: &mut ExperimentRecord) -> Result<()> {
    rec.set_columns(&["k", "N_star", "objective", "monotone", "N_star_bound"]);
    let t = spec.horizon();
    rec.summary.insert("T".into(), t);
    let mut fit = Vec::new();
    let mut fit_bound = Vec::new();
    for &k in &spec.ks {
        info!("ksweep k = {k}");
        let r = find_min_steps(k, spec.d, spec.eps_sq, t, spec.early_stop, spec.family)?;
        let bound = if spec.bound_search {
            Some(find_min_steps_bound(k, spec.d, spec.eps_sq, t, spec.early_stop, spec.family)?)
        } else {
            None
        };
        let (n_cell, obj) = match &r {
            MinSteps::Found { steps, objective, .. } => {
                fit.push((k as f64, *steps as f64));
                let s = build_schedule(spec, spec.family, *steps)?;
                rec.add_schedule(format!("k={k} N*={steps}"), &s);
                (Cell::from(*steps), *objective)
            }
            MinSteps::Saturated { objective, .. } => (Cell::from("saturated"), *objective),
        };
        let b_cell = match bound.as_ref().map(|b| b.steps()) {
            Some(Some(n)) => {
                fit_bound.push((k as f64, n as f64));
                Cell::from(n)
            }
            Some(None) => Cell::from("saturated"),
            None => Cell::Missing,
        };
        rec.push_row(vec![k.into(), n_cell, obj.into(), r.is_monotone().into(), b_cell])?;
    }
    if let Some(slope) = log_log_slope(&fit) {
        rec.summary.insert("slope".into(), slope);
        rec.verdict(
            "N* slope in [0.7, 1.3]",
            (0.7..=1.3).contains(&slope),
            format!("fitted slope {slope:.4} over k = {:?}", spec.ks),
        );
    }
    if let Some(slope) = log_log_slope(&fit_bound) {
        rec.summary.insert("slope_bound".into(), slope);
    }
    Ok(())
}

fn exact_total(s: &Schedule, k: usize, d: usize, v: SamplerVariant, bias: Option<&LinearBias>) -> Result<f64> {
    exact_kl(&propagate_covariance(s, k, d, v, bias)?, s.early_stop())
}

fn nsweep(spec: &ExperimentSpec, rec: &mut ExperimentRecord) -> Result<()> {
    rec.set_columns(&[
        "N",
        "step_kappa",
        "exact_kl",
        "init_kl",
        "init_share",
        "discretization_integral",
        "kl_ratio",
        "disc_ratio",
    ]);
    let (k, d) = (spec.k, spec.d);
    let init = init_terms(spec.horizon(), d, k)?.init_kl;
    let mut prev: Option<(usize, f64, f64, f64)> = None;
    let mut checked = Vec::new();
    for &n in &spec.steps {
        let s = build_schedule(spec, spec.family, n)?;
        rec.add_schedule(format!("N={n}"), &s);
        let kl = exact_total(&s, k, d, SamplerVariant::Ddpm, None)?;
        let disc = discretization_integral(&s, k, d)?.total;
        let share = if kl > 0.0 { init / kl } else { 0.0 };
        let (mut kr, mut dr) = (None, None);
        if let Some((pn, pkl, pdisc, pshare)) = prev {
            if n == 2 * pn {
                kr = Some(pkl / kl);
                dr = Some(pdisc / disc);
                if pshare <= 0.01 && share <= 0.01 {
                    checked.push((n, pkl / kl));
                }
            }
        }
        rec.push_row(vec![
            n.into(),
            s.step_kappa().into(),
            kl.into(),
            init.into(),
            share.into(),
            disc.into(),
            kr.into(),
            dr.into(),
        ])?;
        prev = Some((n, kl, disc, share));
    }
    if !checked.is_empty() {
        let pass = checked.iter().all(|(_, r)| (1.6..=2.4).contains(r));
        let detail = checked
            .iter()
            .map(|(n, r)| format!("N={n}: {r:.3}"))
            .collect::<Vec<_>>()
            .join(", ");
        rec.verdict("exact_kl halves per doubling", pass, detail);
    }
    Ok(())
}

fn schedule_compare(spec: &ExperimentSpec, rec: &mut ExperimentRecord) -> Result<()> {
    rec.set_columns(&["N", "schedule_family", "exact_kl", "step_kappa", "discretization_integral"]);
    for &n in &spec.steps {
        for family in [ScheduleFamily::TwoPhase, ScheduleFamily::Uniform] {
            let s = build_schedule(spec, family, n)?;
            rec.add_schedule(format!("{} N={n}", family.name()), &s);
            let kl = exact_total(&s, spec.k, spec.d, SamplerVariant::Ddpm, None)?;
            let disc = discretization_integral(&s, spec.k, spec.d)?.total;
            rec.push_row(vec![
                n.into(),
                family.name().into(),
                kl.into(),
                s.step_kappa().into(),
                disc.into(),
            ])?;
        }
    }
    Ok(())
}

fn variant_compare(spec: &ExperimentSpec, rec: &mut ExperimentRecord) -> Result<()> {
    rec.set_columns(&["N", "variant", "exact_kl", "ratio_to_ddpm"]);
    for &n in &spec.steps {
        let s = build_schedule(spec, spec.family, n)?;
        rec.add_schedule(format!("N={n}"), &s);
        let base = exact_total(&s, spec.k, spec.d, SamplerVariant::Ddpm, None)?;
        for &v in &spec.variants {
            let kl = exact_total(&s, spec.k, spec.d, v, None)?;
            let ratio = kl / base;
            rec.push_row(vec![n.into(), v.name().into(), kl.into(), ratio.into()])?;
            if v != SamplerVariant::Ddpm {
                rec.summary.insert(format!("ratio/{v}/N={n}"), ratio);
                rec.verdict(
                    format!("{v} at least 2x ddpm at N={n}"),
                    ratio >= 2.0,
                    format!("exact_kl {kl:.6e} vs ddpm {base:.6e} (ratio {ratio:.3})"),
                );
            }
        }
    }
    Ok(())
}

fn score_error_sweep(spec: &ExperimentSpec, rec: &mut ExperimentRecord) -> Result<()> {
    rec.set_columns(&[
        "N",
        "budget",
        "exact_kl",
        "exact_kl_exact_score",
        "inflation",
        "inflation_over_budget",
    ]);
    let mut worst = f64::NEG_INFINITY;
    let mut ok = true;
    for &n in &spec.steps {
        let s = build_schedule(spec, spec.family, n)?;
        rec.add_schedule(format!("N={n}"), &s);
        let base = exact_total(&s, spec.k, spec.d, SamplerVariant::Ddpm, None)?;
        for &b in &spec.budgets {
            let bias = LinearBias::from_budget(b, &s, spec.k, spec.d, BiasSign::Outward)?;
            let kl = exact_total(&s, spec.k, spec.d, SamplerVariant::Ddpm, Some(&bias))?;
            let inflation = kl - base;
            let rel = if b > 0.0 { inflation / b } else { 0.0 };
            // negative when the bias offsets the sampler's own contraction
            worst = worst.max(rel);
            ok &= inflation <= 8.0 * b;
            rec.push_row(vec![n.into(), b.into(), kl.into(), base.into(), inflation.into(), rel.into()])?;
        }
    }
    rec.summary.insert("max_inflation_over_budget".into(), worst);
    rec.verdict(
        "inflation <= 8 budget",
        ok,
        format!("max inflation / budget = {worst:.4}"),
    );
    Ok(())
}

fn bound_check(spec: &ExperimentSpec, workers: Workers, rec: &mut ExperimentRecord) -> Result<()> {
    rec.set_columns(&[
        "d",
        "k",
        "N",
        "T",
        "delta",
        "exact_kl",
        "discretization_integral",
        "init_kl",
        "init_bound",
        "init_slack",
        "kappa",
        "step_kappa",
        "hypothesis_violated",
        "chain_holds",
    ]);
    let g = &spec.bound_grid;
    let mut configs = Vec::with_capacity(g.len());
    for &(d, k) in &g.dims {
        for &n in &g.steps {
            for &t in &g.horizons {
                for &delta in &g.early_stops {
                    configs.push((spec.family.build(t, delta, n)?, k, d));
                }
            }
        }
    }
    let reports = evaluate_grid(&configs, SamplerVariant::Ddpm, workers)?;
    let (mut chain_fail, mut init_fail) = (0usize, 0usize);
    let mut slack = (f64::INFINITY, 0.0f64);
    for r in &reports {
        let s = &r.schedule;
        let flagged = rec.add_schedule(
            format!("T={} delta={} N={}", s.horizon(), s.early_stop(), s.steps()),
            s,
        );
        let holds = r.chain_holds();
        chain_fail += usize::from(!holds);
        if s.horizon() > 1.0 {
            init_fail += usize::from(r.init_kl > r.init_bound);
            if r.init_slack.is_finite() {
                slack = (slack.0.min(r.init_slack), slack.1.max(r.init_slack));
            }
        }
        rec.push_row(vec![
            r.d.into(),
            r.k.into(),
            s.steps().into(),
            s.horizon().into(),
            s.early_stop().into(),
            r.exact_kl.into(),
            r.discretization_integral.into(),
            r.init_kl.into(),
            r.init_bound.into(),
            r.init_slack.into(),
            r.kappa.into(),
            r.step_kappa.into(),
            flagged.into(),
            holds.into(),
        ])?;
    }
    rec.summary.insert("grid_points".into(), reports.len() as f64);
    rec.summary.insert("init_slack_min".into(), slack.0);
    rec.summary.insert("init_slack_max".into(), slack.1);
    rec.verdict(
        "exact_kl <= discretization_integral + init_kl",
        chain_fail == 0,
        format!("{chain_fail} of {} grid points violate", reports.len()),
    );
    rec.verdict(
        "init_kl <= (d + E|X0|^2) e^(-2T) for T > 1",
        init_fail == 0,
        format!(
            "{init_fail} violations; slack ratio in [{:.3}, {:.3}]",
            slack.0, slack.1
        ),
    );
    Ok(())
}

fn trace_curves(spec: &ExperimentSpec, workers: Workers, rec: &mut ExperimentRecord) -> Result<()> {
    rec.set_columns(&["target", "u", "estimate", "stderr", "n", "seed", "bound_ratio"]);
    for ts in &spec.targets {
        let label = ts.label();
        info!("trace curve for {label}");
        let target = ts.build()?;
        let curve = trace_curve(&target, &spec.grid, spec.samples, spec.seed, workers)?;
        let k = spec.k_declared.unwrap_or(target.intrinsic_dim());
        let mut max_ratio: Option<f64> = None;
        for (j, &u) in curve.times.iter().enumerate() {
            let ratio = if k >= 2 {
                let b = posvar_bound(&target, u, k)?;
                let r = curve.estimates[j] / b;
                max_ratio = Some(max_ratio.map_or(r, |m: f64| m.max(r)));
                Some(r)
            } else {
                None
            };
            rec.push_row(vec![
                label.as_str().into(),
                u.into(),
                curve.estimates[j].into(),
                curve.stderrs[j].into(),
                curve.n.into(),
                curve.seed.into(),
                ratio.into(),
            ])?;
        }
        if let Some(m) = max_ratio {
            rec.summary.insert(format!("max_bound_ratio/{label}"), m);
        }
        let mono = check_trace_monotone(&curve);
        rec.summary.insert(format!("worst_margin/{label}"), mono.worst_margin);
        rec.verdict(
            format!("{label} trace non-decreasing in u"),
            mono.pass,
            format!("worst margin {:.3e}, violations at {:?}", mono.worst_margin, mono.violations),
        );
    }
    Ok(())
}

fn covering(spec: &ExperimentSpec, workers: Workers, rec: &mut ExperimentRecord) -> Result<()> {
    rec.set_columns(&["target", "eps", "count", "log_count", "bound"]);
    let target = spec.target.build()?;
    let Target::Cloud(cloud) = &target else {
        return Err(Error::Config("covering needs a point-cloud target".into()));
    };
    let k = cloud.declared_dim().max(1) as f64;
    let sweep = cover_sweep(cloud.points(), cloud.dim(), &spec.scales, workers)?;
    let label = spec.target.label();
    let mut ok = true;
    for p in &sweep {
        let log_count = (p.count as f64).ln();
        let bound = 3.0 * k * (1.0 / p.eps).ln();
        ok &= log_count <= bound;
        rec.push_row(vec![
            label.as_str().into(),
            p.eps.into(),
            p.count.into(),
            log_count.into(),
            bound.into(),
        ])?;
    }
    rec.verdict(
        "log count <= 3 k log(1/eps)",
        ok,
        format!("k = {k}, points = {}", cloud.len()),
    );
    Ok(())
}
