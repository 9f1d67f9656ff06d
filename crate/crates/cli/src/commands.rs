use std::io::Write;

use ebaloha::analysis::{
    bd_stationary, classify_regime, collision_trace, dominance_test, exp_moment, simulate_aux_chain,
    tail_quadratic_fit, BirthDeathSpec, DominanceVerdict, TailFunction,
};
use ebaloha::oracle::{build_truncated_chain, exact_first_success_time, exact_stationary, exact_throughput, Solver};
use ebaloha::queueing::{compute_zeta, pk_mean, stationary_or_diverge, ChainKind, Mg1Solve, Mg1Verdict, ServiceDist};
use ebaloha::sim::{
    record_cohort_trace, run_first_success_experiment, run_queued_replicas, run_return_time_experiment,
    run_saturated_replicas, SimConfig,
};
use ebaloha::stats::{ladder_verdict, CensoredSample, LadderVerdict};
use ebaloha::{BackoffLaw, Error, SystemState};

use crate::config::Resolved;
use crate::output::Sink;
use crate::CliError;

type Out<'a> = Sink<Box<dyn Write + 'a>>;

/// Relative change separating a saturating censored mean from a growing one.
const LADDER_TOL: f64 = 0.02;

pub fn run(cfg: &Resolved, out: &mut Out<'_>) -> Result<(), CliError> {
    match cfg.command {
        "classify" => classify(cfg, out),
        "sim-sat" => sim_sat(cfg, out),
        "sim-queue" => sim_queue(cfg, out),
        "first-success" => first_success(cfg, out),
        "return-time" => return_time(cfg, out),
        "bd" => bd(cfg, out),
        "dominance" => dominance(cfg, out),
        "oracle" => oracle(cfg, out),
        "mg1" => mg1(cfg, out),
        other => Err(CliError::Config(format!("unknown command '{other}'"))),
    }
}

fn law(cfg: &Resolved) -> Result<BackoffLaw, CliError> {
    let law = match cfg.raw("law") {
        Some("exp") => BackoffLaw::exponential(cfg.get("b")?, cfg.get("i0")?)?,
        Some("poly") => BackoffLaw::polynomial(cfg.get("alpha")?)?,
        Some(other) => return Err(Error::Parameter(format!("unknown law '{other}', expected exp or poly")).into()),
        None => return Err(CliError::Config("missing law".into())),
    };
    Ok(law)
}

fn replicas(cfg: &Resolved) -> Result<usize, CliError> {
    cfg.get("replicas")
}

fn classify(cfg: &Resolved, out: &mut Out<'_>) -> Result<(), CliError> {
    let r = classify_regime(cfg.get("b")?, cfg.get("i0")?, cfg.get("n")?)?;
    out.record(
        "regime",
        &[
            ("b", r.b.into()),
            ("i0", r.i0.into()),
            ("n", r.n.into()),
            ("joint_regime", r.joint_regime.to_string().into()),
            ("marginal_positive_recurrent_upto", r.marginal_positive_recurrent_upto.into()),
            ("throughput_one", r.throughput_one.into()),
        ],
    )?;
    Ok(())
}

fn sim_sat(cfg: &Resolved, out: &mut Out<'_>) -> Result<(), CliError> {
    let n: usize = cfg.get("n")?;
    let state = match cfg.list::<u32>("start")? {
        Some(v) if v.len() != n => {
            return Err(Error::Parameter(format!("start has {} indices for N = {n}", v.len())).into())
        }
        Some(v) => SystemState::new(v)?,
        None => SystemState::zeros(n)?,
    };
    let mut sim = SimConfig::saturated(law(cfg)?, state, cfg.get("horizon")?, cfg.get("seed")?);
    sim.burn_in = cfg.opt("burn-in")?;
    sim.stream = cfg.get("stream")?;
    let stats = run_saturated_replicas(&sim, replicas(cfg)?)?;
    for r in &stats.replicas {
        out.record(
            "replica",
            &[
                ("replica", r.id.into()),
                ("slots", r.slots.into()),
                ("successes", r.successes.into()),
                ("throughput", r.throughput().into()),
                ("tail_throughput", r.tail_throughput().into()),
                ("winner", r.winner.into()),
                ("x1_zero_fraction", r.x1_zero_fraction().into()),
                ("single_user_share", r.single_user_share().into()),
            ],
        )?;
    }
    for u in 0..n {
        out.record(
            "user",
            &[
                ("user", u.into()),
                ("successes", stats.per_user_successes[u].into()),
                ("tail_successes", stats.tail_per_user_successes[u].into()),
            ],
        )?;
    }
    if cfg.get::<bool>("histograms")? {
        for (u, h) in stats.marginal_histograms.iter().enumerate() {
            for (i, &c) in h.iter().enumerate().filter(|(_, &c)| c > 0) {
                out.record("marginal", &[("user", u.into()), ("index", i.into()), ("slots", c.into())])?;
            }
        }
        for (k, h) in stats.rank_histograms.iter().enumerate() {
            for (i, &c) in h.iter().enumerate().filter(|(_, &c)| c > 0) {
                out.record("rank", &[("rank", (k + 1).into()), ("index", i.into()), ("slots", c.into())])?;
            }
        }
    }
    let thr = stats.replica_throughput();
    out.record(
        "summary",
        &[
            ("n", n.into()),
            ("replicas", stats.replicas.len().into()),
            ("slots", stats.slots.into()),
            ("successes", stats.successes.into()),
            ("collisions", stats.collisions.into()),
            ("throughput", stats.throughput().into()),
            ("throughput_se", thr.se.into()),
            ("tail_throughput", stats.tail_throughput().into()),
            ("tail_busy_efficiency", stats.tail_busy_efficiency().into()),
            ("x1_zero_fraction", stats.x1_zero_fraction().into()),
            ("sorted_x1_zero_fraction", stats.sorted_x1_zero_fraction().into()),
            ("zero_state_returns", stats.return_count.into()),
            ("mean_return_time", stats.mean_return_time().into()),
        ],
    )?;
    Ok(())
}

fn sim_queue(cfg: &Resolved, out: &mut Out<'_>) -> Result<(), CliError> {
    let n: usize = cfg.get("n")?;
    let seed: u64 = cfg.get("seed")?;
    let mut sim = SimConfig::queued(law(cfg)?, SystemState::zeros(n)?, cfg.get("horizon")?, seed, cfg.get("lambda")?);
    sim.sample_stride = cfg.get("stride")?;
    sim.stream = cfg.get("stream")?;
    let stats = run_queued_replicas(&sim, replicas(cfg)?)?;
    for r in &stats.replicas {
        out.record(
            "replica",
            &[
                ("replica", r.id.into()),
                ("slots", r.slots.into()),
                ("arrivals", r.arrivals.into()),
                ("departures", r.departures.into()),
                ("collisions", r.collisions.into()),
                ("final_total_queue", r.final_queues.iter().sum::<u64>().into()),
                ("mean_queue_tail", r.mean_queue_tail().into()),
                ("drift", r.drift().into()),
                ("conserved", r.is_conserved().into()),
            ],
        )?;
    }
    if cfg.get::<bool>("series")? {
        for (k, q) in stats.sampled_total_queue().into_iter().enumerate() {
            out.record("queue", &[("slot", (k as u64 * sim.sample_stride).into()), ("total_queue", q.into())])?;
        }
    }
    let drift = stats.drift_estimate(seed)?;
    out.record(
        "summary",
        &[
            ("n", n.into()),
            ("lambda", cfg.get::<f64>("lambda")?.into()),
            ("replicas", stats.replicas.len().into()),
            ("slots", stats.slots().into()),
            ("arrivals", stats.arrivals().into()),
            ("departures", stats.departures().into()),
            ("departure_rate", stats.departure_rate().into()),
            ("mean_queue_tail", stats.mean_queue_tail().into()),
            ("drift", drift.slope.into()),
            ("drift_se", drift.se.into()),
            ("drift_lo", drift.interval.lo.into()),
            ("drift_hi", drift.interval.hi.into()),
        ],
    )?;
    Ok(())
}

fn ladder_text(v: LadderVerdict) -> &'static str {
    match v {
        LadderVerdict::Saturates => "saturates",
        LadderVerdict::Diverges => "diverges",
        LadderVerdict::Inconclusive => "inconclusive",
    }
}

fn censored(cfg: &Resolved, sample: &CensoredSample, out: &mut Out<'_>) -> Result<(), CliError> {
    let ladder = cfg.list::<u64>("ladder")?.unwrap_or_else(|| vec![sample.t_max]);
    let mut points = Vec::with_capacity(ladder.len());
    for h in ladder {
        let p = sample.at(h)?;
        out.record(
            "ladder",
            &[
                ("horizon", p.horizon.into()),
                ("mean", p.mean.into()),
                ("se", p.se.into()),
                ("censored_fraction", p.censored_fraction.into()),
            ],
        )?;
        points.push(p);
    }
    let observed = sample.times.iter().filter(|t| t.is_some()).count();
    out.record(
        "summary",
        &[
            ("replicas", sample.times.len().into()),
            ("observed", observed.into()),
            ("t_max", sample.t_max.into()),
            ("verdict", ladder_text(ladder_verdict(&points, LADDER_TOL)).into()),
        ],
    )?;
    Ok(())
}

fn first_success(cfg: &Resolved, out: &mut Out<'_>) -> Result<(), CliError> {
    let sample = run_first_success_experiment(
        cfg.get("n")?,
        law(cfg)?,
        cfg.get("m")?,
        cfg.get("t-max")?,
        replicas(cfg)?,
        cfg.get("seed")?,
    )?;
    censored(cfg, &sample, out)
}

fn return_time(cfg: &Resolved, out: &mut Out<'_>) -> Result<(), CliError> {
    let sample = run_return_time_experiment(
        cfg.get("n")?,
        law(cfg)?,
        cfg.get("r")?,
        cfg.get("t-max")?,
        replicas(cfg)?,
        cfg.get("seed")?,
    )?;
    censored(cfg, &sample, out)
}

fn bd_spec(cfg: &Resolved) -> Result<BirthDeathSpec, CliError> {
    let spec = BirthDeathSpec::new(cfg.get("b")?, cfg.get("i0")?, cfg.get("n")?, cfg.get("x2")?)?;
    Ok(match cfg.opt("delta-star")? {
        Some(d) => spec.with_delta_star(d)?,
        None => spec,
    })
}

fn bd(cfg: &Resolved, out: &mut Out<'_>) -> Result<(), CliError> {
    let spec = bd_spec(cfg)?;
    let dist = bd_stationary(&spec, cfg.get("delta-max")?)?;
    for (k, &p) in dist.probs.iter().enumerate() {
        let delta = dist.delta_star as usize + k;
        out.record("bd", &[("delta", delta.into()), ("prob", p.into()), ("ln_prob", p.ln().into())])?;
    }
    let fit = tail_quadratic_fit(&dist.log_points(), None)?;
    let steps: u64 = cfg.get("steps")?;
    let (tv, multi) = if steps > 0 {
        let run = simulate_aux_chain(&spec, steps, cfg.get("seed")?)?;
        for (d, &c) in run.delta_hist.iter().enumerate().filter(|(_, &c)| c > 0) {
            out.record("aux", &[("delta", d.into()), ("frequency", (c as f64 / run.steps as f64).into())])?;
        }
        (run.tv_distance(&dist), run.multi_top_fraction())
    } else {
        (f64::NAN, f64::NAN)
    };
    out.record(
        "summary",
        &[
            ("delta_star", dist.delta_star.into()),
            ("alpha_at_delta_star", spec.alpha(dist.delta_star).into()),
            ("beta", spec.beta().into()),
            ("truncation_mass", dist.truncation_mass.into()),
            ("fit_c2", fit.c2.into()),
            ("fit_c1", fit.c1.into()),
            ("fit_c0", fit.c0.into()),
            ("tv_distance", tv.into()),
            ("multi_top_fraction", multi.into()),
        ],
    )?;
    Ok(())
}

fn dominance(cfg: &Resolved, out: &mut Out<'_>) -> Result<(), CliError> {
    let n: usize = cfg.get("n")?;
    let b: f64 = cfg.get("b")?;
    let x2: u32 = cfg.get("x2")?;
    let seed: u64 = cfg.get("seed")?;
    let law = BackoffLaw::exponential(b, cfg.get("i0")?)?;
    let spec = BirthDeathSpec::new(b, cfg.get("i0")?, n, x2)?;
    let traces: u64 = cfg.get("traces")?;
    let max_slots: u64 = cfg.get("max-slots")?;
    let max_entries: usize = cfg.get("max-entries")?;

    let (mut dn, mut dc) = (Vec::new(), Vec::new());
    let (mut violations, mut x1_zero, mut instants, mut successes) = (0usize, 0usize, 0usize, 0usize);
    for t in 0..traces {
        let rec = record_cohort_trace(n, law, x2, max_slots, max_entries, seed, t)?;
        x1_zero += rec.entries.iter().filter(|e| e.x1_before == 0).count();
        instants += rec.entries.len();
        successes += usize::from(rec.ended_by_success);
        let tr = collision_trace(&rec)?;
        violations += tr.sandwich_violations();
        dn.extend(tr.delta_n_series());
        dc.extend(tr.delta_c_series());
    }
    if dn.is_empty() {
        return Err(Error::Diagnostic("no cohort collisions recorded".into()).into());
    }
    let run = simulate_aux_chain(&spec, cfg.get("steps")?, seed)?;
    let len = run.delta_hist.len().max(*dn.iter().max().expect("nonempty") as usize + 1);
    let aux = TailFunction::from_histogram(&run.delta_hist, len)?;
    let emp = TailFunction::from_samples(&dn, len)?;
    for d in 0..len {
        out.record(
            "ccdf",
            &[
                ("delta", d.into()),
                ("aux", aux.ccdf[d].into()),
                ("aux_se", aux.se[d].into()),
                ("trace", emp.ccdf[d].into()),
                ("trace_se", emp.se[d].into()),
            ],
        )?;
    }
    let verdict = dominance_test(&aux, &emp, cfg.get("tolerance")?)?;
    let (dominates, first_gap) = match verdict {
        DominanceVerdict::Dominates => (true, -1i64),
        DominanceVerdict::Violated { delta, .. } => (false, delta as i64),
    };
    let dn_f: Vec<f64> = dn.iter().map(|&x| f64::from(x)).collect();
    let m_dn = exp_moment(&dn_f, b, seed)?;
    let m_dc = exp_moment(&dc, b, seed)?;
    out.record(
        "summary",
        &[
            ("traces", traces.into()),
            ("ended_by_success", successes.into()),
            ("collision_instants", dn.len().into()),
            ("sandwich_violations", violations.into()),
            ("x1_zero_fraction", (x1_zero as f64 / instants.max(1) as f64).into()),
            ("exp_moment_delta_n", m_dn.estimate.into()),
            ("exp_moment_delta_n_lo", m_dn.interval.lo.into()),
            ("exp_moment_delta_n_hi", m_dn.interval.hi.into()),
            ("exp_moment_delta_c", m_dc.estimate.into()),
            ("exp_moment_delta_c_lo", m_dc.interval.lo.into()),
            ("exp_moment_delta_c_hi", m_dc.interval.hi.into()),
            ("aux_steps", run.steps.into()),
            ("dominates", dominates.into()),
            ("first_violation", first_gap.into()),
        ],
    )?;
    Ok(())
}

fn oracle(cfg: &Resolved, out: &mut Out<'_>) -> Result<(), CliError> {
    let n: usize = cfg.get("n")?;
    let cap: u32 = cfg.get("m-cap")?;
    let budget: u64 = cfg.get("budget")?;
    let law = law(cfg)?;
    let solver = match cfg.raw("solver") {
        Some("auto") => Solver::Auto,
        Some("direct") => Solver::Direct,
        Some("power") => Solver::Power,
        other => return Err(Error::Parameter(format!("unknown solver {other:?}")).into()),
    };
    let chain = build_truncated_chain(n, cap, law, budget)?;
    let st = exact_stationary(&chain, solver, cfg.get("tol")?)?;
    let mut marginal = vec![0.0; cap as usize + 1];
    for (s, &p) in st.pi.iter().enumerate().filter(|(_, &p)| p > 0.0) {
        marginal[chain.decode(s)[0] as usize] += p;
    }
    for (i, &p) in marginal.iter().enumerate() {
        out.record("marginal", &[("index", i.into()), ("prob", p.into())])?;
    }
    let first = match cfg.opt::<u32>("first-success-m")? {
        Some(m) => exact_first_success_time(n, cap, law, m, budget)?,
        None => f64::NAN,
    };
    out.record(
        "summary",
        &[
            ("n", n.into()),
            ("m_cap", cap.into()),
            ("states", chain.states().into()),
            ("support", st.support.into()),
            ("throughput", exact_throughput(&chain, &st.pi)?.into()),
            ("boundary_mass", st.boundary_mass.into()),
            ("residual", st.residual.into()),
            ("first_success_time", first.into()),
        ],
    )?;
    Ok(())
}

fn mg1(cfg: &Resolved, out: &mut Out<'_>) -> Result<(), CliError> {
    let service = ServiceDist::parse(cfg.raw("service").unwrap_or_default())?;
    let lambda: f64 = cfg.get("lambda")?;
    let kind = match cfg.raw("kind") {
        Some("standard") => ChainKind::Standard,
        Some("modified") => ChainKind::Modified,
        other => return Err(Error::Parameter(format!("unknown chain kind {other:?}")).into()),
    };
    let zeta = compute_zeta(&service, lambda)?;
    for (j, &p) in zeta.probs.iter().enumerate() {
        out.record("zeta", &[("arrivals", j.into()), ("prob", p.into())])?;
    }
    let opts = Mg1Solve { r0: cfg.get("r0")?, r_cap: cfg.get("r-cap")?, ..Mg1Solve::default() };
    let verdict = stationary_or_diverge(kind, &zeta, &opts)?;
    let rho = lambda * service.mean();
    let pk = if kind == ChainKind::Standard && rho < 1.0 { pk_mean(&service, lambda)? } else { f64::NAN };
    let (stable, r_max, mean, residual, upper) = match &verdict {
        Mg1Verdict::Stable { pi, r_max, residual, mean_queue } => {
            for (k, &p) in pi.iter().enumerate().filter(|(_, &p)| p > 0.0) {
                out.record("pi", &[("position", k.into()), ("prob", p.into())])?;
            }
            (true, *r_max, *mean_queue, *residual, f64::NAN)
        }
        Mg1Verdict::Unstable { r_max, upper_mass } => (false, *r_max, f64::NAN, f64::NAN, *upper_mass),
    };
    out.record(
        "summary",
        &[
            ("service", service.to_string().into()),
            ("lambda", lambda.into()),
            ("kind", kind.to_string().into()),
            ("rho", rho.into()),
            ("zeta_tail_mass", zeta.tail_mass.into()),
            ("stable", stable.into()),
            ("r_max", r_max.into()),
            ("mean_queue", mean.into()),
            ("pk_mean", pk.into()),
            ("residual", residual.into()),
            ("upper_mass", upper.into()),
        ],
    )?;
    Ok(())
}
