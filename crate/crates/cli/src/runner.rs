//! Executes the estimators named in a config and assembles the report.

use std::time::Instant;

use rws_core::diagnostics::{
    alpha_hat, concentration_violation, dk_statistic_composed, dk_statistic_scenery, ConcentrationConfig, DkConfig,
};
use rws_core::evt::{
    default_runs_gap, empirical_cluster_counts, extremal_index_logmax, extremal_index_runs_pooled, threshold,
    ComposedSampler,
};
use rws_core::limits::{
    cluster_law, compound_count_law, exceedance_count_law, pi_from_p, theta, tv_distance, CompoundPoissonSpec,
    PiWarning,
};
use rws_core::scenery::{SceneryKind, SceneryModel};
use rws_core::stats::binomial_se;
use rws_core::stochastic::RngStream;
use rws_core::Result as CoreResult;
use serde::{Deserialize, Serialize};

use crate::config::{Estimator, ExperimentConfig};
use crate::report::{
    EstimatorResult, ExperimentReport, Metrics, ReferenceSource, Rule, SectionTiming, Table, SCHEMA,
};

/// Truncation for exact cluster laws.
pub const LAW_TRUNCATION: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Limits,
    Diagnose,
    Sweep,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Limits => "limits",
            Command::Diagnose => "diagnose",
            Command::Sweep => "sweep",
        }
    }

    /// Estimators a command runs for a given config.
    pub fn estimators(&self, cfg: &ExperimentConfig) -> Vec<Estimator> {
        match self {
            Command::Simulate | Command::Sweep => cfg.estimators.clone(),
            Command::Limits => vec![Estimator::Limits],
            Command::Diagnose => {
                let picked: Vec<Estimator> = cfg.estimators.iter().copied().filter(|e| e.is_diagnostic()).collect();
                if picked.is_empty() {
                    vec![Estimator::Dk, Estimator::Alpha, Estimator::Concentration]
                } else {
                    picked
                }
            }
        }
    }
}

fn stream_tag(e: Estimator) -> u64 {
    match e {
        Estimator::Logmax => 1,
        Estimator::Runs => 2,
        Estimator::Clusters => 3,
        Estimator::Dk => 4,
        Estimator::Alpha => 5,
        Estimator::Concentration => 6,
        Estimator::Limits => 7,
    }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    model: SceneryModel,
    theta: f64,
}

impl Ctx<'_> {
    fn stream(&self, e: Estimator, n: usize) -> RngStream {
        RngStream::new(self.cfg.seed, stream_tag(e)).child(n as u64)
    }

    fn law_source(&self) -> ReferenceSource {
        match self.cfg.scenery {
            SceneryKind::Iid(_) => ReferenceSource::ClosedForm,
            SceneryKind::MovingMax { .. } => ReferenceSource::PhaseTypeOracle,
        }
    }
}

#[derive(Default)]
struct Output {
    results: Vec<EstimatorResult>,
    tables: Vec<Table>,
}

/// Runs the command's estimators on every horizon of the config. Estimation
/// failures are recorded per estimator and never stop the others.
pub fn run_experiment(cfg: &ExperimentConfig, command: Command) -> (ExperimentReport, Metrics) {
    let start = Instant::now();
    let ctx = Ctx {
        cfg,
        model: SceneryModel::new(cfg.scenery, cfg.seed),
        theta: theta(cfg.scenery.extremal_index(), cfg.p.escape_prob()).expect("validated walk and scenery"),
    };
    let mut out = Output::default();
    let mut sections = Vec::new();
    let mut convergence = Table::new("theta_convergence", &["n", "theta_hat", "stderr", "theta_ref"]);
    let mut dk_table = Table::new("dk", &["n", "composed", "composed_stderr", "scenery", "scenery_stderr"]);
    for est in command.estimators(cfg) {
        let horizons: Vec<Option<usize>> = if est == Estimator::Limits {
            vec![None]
        } else {
            cfg.n.iter().map(|&n| Some(n)).collect()
        };
        for n in horizons {
            let t0 = Instant::now();
            let before = out.results.len();
            let res = match (est, n) {
                (Estimator::Limits, _) => limits(&ctx, &mut out),
                (Estimator::Logmax, Some(n)) => logmax(&ctx, n, &mut out, &mut convergence),
                (Estimator::Runs, Some(n)) => runs(&ctx, n, &mut out),
                (Estimator::Clusters, Some(n)) => clusters(&ctx, n, &mut out),
                (Estimator::Dk, Some(n)) => dk(&ctx, n, &mut out, &mut dk_table),
                (Estimator::Alpha, Some(n)) => alpha(&ctx, n, &mut out),
                (Estimator::Concentration, Some(n)) => concentration(&ctx, n, &mut out),
                (_, None) => unreachable!("only limits runs without a horizon"),
            };
            if let Err(e) = res {
                out.results.truncate(before);
                out.results.push(EstimatorResult::failed(est.name(), n, e));
            }
            let secs = t0.elapsed().as_secs_f64();
            let reps: u64 = out.results[before..].iter().map(|r| r.replicates).sum();
            sections.push(SectionTiming {
                name: match n {
                    Some(n) => format!("{}@{n}", est.name()),
                    None => est.name().to_string(),
                },
                seconds: secs,
                replicates: reps,
                replicates_per_second: if secs > 0.0 { reps as f64 / secs } else { 0.0 },
            });
        }
    }
    if !convergence.rows.is_empty() {
        out.tables.push(convergence);
    }
    if !dk_table.rows.is_empty() {
        out.tables.push(dk_table);
    }
    let report = ExperimentReport {
        schema: SCHEMA,
        command: command.name().to_string(),
        config: cfg.clone(),
        results: out.results,
        tables: out.tables,
    };
    let metrics = Metrics {
        wall_seconds: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
        sections,
    };
    (report, metrics)
}

fn logmax(ctx: &Ctx, n: usize, out: &mut Output, table: &mut Table) -> CoreResult<()> {
    let cfg = ctx.cfg;
    let th = threshold(&ctx.model, n, cfg.tau)?;
    let sampler = ComposedSampler::composed(cfg.p, ctx.model, n, ctx.stream(Estimator::Logmax, n));
    let exceeds: Vec<bool> = sampler.maxima(cfg.replicates).into_iter().map(|m| m > th.u).collect();
    let est = extremal_index_logmax(&exceeds, cfg.tau)?;
    let mut r = EstimatorResult::new("logmax", Some(n)).value(est.theta, Some(est.stderr), est.replicates);
    if est.degenerate {
        r = r.note("every replicate exceeded the level; estimate is +inf");
    }
    out.results
        .push(r.compare(ctx.theta, ReferenceSource::ClosedForm, Rule::Within, cfg.theta_tolerance));

    let f = exceeds.iter().filter(|&&e| !e).count() as f64 / exceeds.len() as f64;
    let se = binomial_se(f, cfg.replicates);
    out.results.push(
        EstimatorResult::new("max_cdf", Some(n))
            .value(f, Some(se), cfg.replicates)
            .compare((-ctx.theta * cfg.tau).exp(), ReferenceSource::ClosedForm, Rule::Within, 3.0 * se)
            .note("P(max <= u_n) against exp(-theta tau); tolerance is 3 standard errors"),
    );
    table.rows.push(vec![n as f64, est.theta, est.stderr, ctx.theta]);
    Ok(())
}

fn runs(ctx: &Ctx, n: usize, out: &mut Output) -> CoreResult<()> {
    let cfg = ctx.cfg;
    let th = threshold(&ctx.model, n, cfg.tau)?;
    let gap = default_runs_gap(n, cfg.p.escape_prob());
    let sampler = ComposedSampler::composed(cfg.p, ctx.model, n, ctx.stream(Estimator::Runs, n));
    let est = extremal_index_runs_pooled(&sampler.exceedance_summaries(cfg.replicates, th.u, gap));
    let mut r = EstimatorResult::new("runs", Some(n))
        .value(est.theta, Some(est.stderr), est.replicates)
        .note(format!("runs gap {gap}"));
    if est.degenerate {
        r = r.note("no exceedances in any replicate");
    }
    out.results
        .push(r.compare(ctx.theta, ReferenceSource::ClosedForm, Rule::Within, cfg.theta_tolerance));
    Ok(())
}

fn clusters(ctx: &Ctx, n: usize, out: &mut Output) -> CoreResult<()> {
    let cfg = ctx.cfg;
    let k_n = cfg.k_n.at(n);
    let j = cfg.j_max;
    let est = empirical_cluster_counts(
        &cfg.p,
        &ctx.model,
        n,
        cfg.tau,
        k_n,
        j + 1,
        cfg.cluster_replicates,
        &ctx.stream(Estimator::Clusters, n),
    )?;
    let (pi_hat, warnings) = pi_from_p(&est.p_hat, ctx.theta)?;
    let pi = cluster_law(&cfg.p, &cfg.scenery, LAW_TRUNCATION)?;
    let p_theory = exceedance_count_law(&cfg.p, &cfg.scenery, j + 1)?;
    let reps = est.replicates as f64;

    let mut table = Table::new(format!("clusters_n{n}"), &["j", "pi_hat", "stderr", "pi_theory"]);
    for i in 0..j {
        let (a, b) = (est.p_hat[i], est.p_hat[i + 1]);
        let var = (a + b - (a - b).powi(2)) / reps;
        table
            .rows
            .push(vec![(i + 1) as f64, pi_hat.pmf[i], var.sqrt() / ctx.theta, pi.prob(i + 1)]);
    }
    out.tables.push(table);
    let mut counts = Table::new(format!("block_counts_n{n}"), &["j", "p_hat", "stderr", "p_theory"]);
    for i in 0..=j {
        counts
            .rows
            .push(vec![(i + 1) as f64, est.p_hat[i], est.stderr[i], p_theory.pmf[i]]);
    }
    out.tables.push(counts);

    let mut r = EstimatorResult::new("clusters", Some(n))
        .value(tv_distance(&pi_hat.pmf, &pi.pmf[..j]), None, est.replicates)
        .note(format!("total variation of pi_hat(1..{j}) against the exact law; k_n = {k_n}"));
    for w in &warnings {
        r = r.note(match w {
            PiWarning::Negative { j, value } => format!("pi_hat({j}) = {value:e} < 0"),
            PiWarning::Degenerate => "pi_hat vanishes identically".to_string(),
        });
    }
    out.results
        .push(r.compare(0.0, ctx.law_source(), Rule::AtMost, cfg.tv_tolerance));
    out.results.push(
        EstimatorResult::new("block_counts", Some(n))
            .value(tv_distance(&est.p_hat, &p_theory.pmf), None, est.replicates)
            .note(format!(
                "total variation of p_hat(1..{}) against the phase-type visit-count law",
                j + 1
            ))
            .compare(0.0, ReferenceSource::PhaseTypeOracle, Rule::AtMost, cfg.tv_tolerance),
    );
    Ok(())
}

fn dk(ctx: &Ctx, n: usize, out: &mut Output, table: &mut Table) -> CoreResult<()> {
    let cfg = ctx.cfg;
    let composed_cfg = DkConfig::new(cfg.dk_order, n, cfg.tau, cfg.replicates);
    let scenery_cfg = DkConfig::new(1, n, cfg.tau, cfg.replicates);
    let stream = ctx.stream(Estimator::Dk, n);
    let c = dk_statistic_composed(&cfg.p, &ctx.model, &composed_cfg, &stream.child(0))?;
    let s = dk_statistic_scenery(&ctx.model, &scenery_cfg, &stream.child(1))?;
    out.results.push(
        EstimatorResult::new(format!("dk_composed_k{}", cfg.dk_order), Some(n))
            .value(c.value, Some(c.stderr), c.replicates)
            .note(format!("r_n = {}", c.r_n)),
    );
    let mut r = EstimatorResult::new("dk_scenery_k1", Some(n))
        .value(s.value, Some(s.stderr), s.replicates)
        .note(format!("r_n = {}", s.r_n));
    if let SceneryKind::Iid(_) = cfg.scenery {
        let sf = cfg.tau / n as f64;
        let level = cfg.tau * -((-sf).ln_1p() * s.r_n as f64).exp_m1();
        r = r.compare(level, ReferenceSource::ClosedForm, Rule::Within, 3.0 * s.stderr.max(1e-12));
    }
    out.results.push(r);
    table.rows.push(vec![n as f64, c.value, c.stderr, s.value, s.stderr]);
    Ok(())
}

fn alpha(ctx: &Ctx, n: usize, out: &mut Output) -> CoreResult<()> {
    let cfg = ctx.cfg;
    let lag = cfg
        .alpha_lag
        .unwrap_or_else(|| ((n as f64).powf(0.9).ceil() as usize).min(n - 1));
    let sampler = ComposedSampler::composed(cfg.p, ctx.model, n, ctx.stream(Estimator::Alpha, n));
    let a = alpha_hat(&sampler, lag, cfg.tau, cfg.replicates)?;
    out.results.push(
        EstimatorResult::new("alpha", Some(n))
            .value(a.alpha, Some(a.stderr), a.replicates)
            .note(format!(
                "lower bound on the mixing coefficient over {} block-maximum rectangles; lag {lag}",
                a.grid.len()
            )),
    );
    Ok(())
}

fn concentration(ctx: &Ctx, n: usize, out: &mut Output) -> CoreResult<()> {
    let cfg = ctx.cfg;
    let cc = ConcentrationConfig {
        beta: cfg.beta,
        n,
        ell: cfg.ell_rule,
        replicates: cfg.replicates,
    };
    let rep = concentration_violation(&cfg.p, &cc, &ctx.stream(Estimator::Concentration, n))?;
    let mut r = EstimatorResult::new("concentration", Some(n))
        .value(rep.frequency, Some(rep.stderr), rep.replicates)
        .note(format!("violations {}, ell_tilde {}, bound {:e}", rep.violations, rep.ell_tilde, rep.bound));
    if rep.empty_family {
        r = r.note("ell_tilde exceeds n: no split point, the event holds surely");
    }
    if rep.bound_informative {
        r = r.compare(rep.bound, ReferenceSource::ClosedForm, Rule::AtMost, 0.0);
    } else {
        r = r.note("bound non-informative (>= 1); not compared");
    }
    out.results.push(r);
    Ok(())
}

fn limits(ctx: &Ctx, out: &mut Output) -> CoreResult<()> {
    let cfg = ctx.cfg;
    let law = cluster_law(&cfg.p, &cfg.scenery, LAW_TRUNCATION)?;
    out.results.push(
        EstimatorResult::new("theta", None)
            .value(ctx.theta, None, 0)
            .note("sigma q"),
    );
    out.results.push(
        EstimatorResult::new("cluster_mean", None)
            .value(law.mean(), None, 0)
            .note(format!("mean of the exact cluster law at J = {LAW_TRUNCATION}"))
            .compare(1.0 / ctx.theta, ctx.law_source(), Rule::Within, 1e-6),
    );
    out.results.push(
        EstimatorResult::new("cluster_deficit", None)
            .value(law.deficit, None, 0)
            .compare(0.0, ctx.law_source(), Rule::AtMost, 1e-8),
    );
    let spec = CompoundPoissonSpec::new(ctx.theta * cfg.tau, law.clone())?;
    let count = compound_count_law(&spec, cfg.count_max);
    out.results.push(
        EstimatorResult::new("count_p0", None)
            .value(count.prob(0), None, 0)
            .compare((-spec.intensity).exp(), ReferenceSource::ClosedForm, Rule::Within, 0.0),
    );
    let mut t = Table::new("cluster_law", &["j", "pmf", "cumulative"]);
    let mut cum = 0.0;
    // Moments come from the long truncation; the table stops at j_max.
    for (i, p) in law.pmf.iter().take(cfg.j_max).enumerate() {
        cum += p;
        t.rows.push(vec![(i + 1) as f64, *p, cum]);
    }
    out.tables.push(t);
    let mut t = Table::new("count_law", &["j", "pmf", "cumulative"]);
    let mut cum = 0.0;
    for (i, p) in count.pmf.iter().enumerate() {
        cum += p;
        t.rows.push(vec![i as f64, *p, cum]);
    }
    out.tables.push(t);
    Ok(())
}
