//! Execution of validated scenarios and the files they leave behind.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::{Format, Kind, Plan, ScenarioConfig};
use crate::agents::{run_emergence, GameVerdict};
use crate::dynamics::{
    bootstrap_iterate, linear_map, run_half_cycle, run_inverted, run_temporal, HalfCycleMode, InferenceTrace,
};
use crate::error::{Error, Result};
use crate::hierarchy::hierarchical_run;
use crate::ib::beta_sweep;
use crate::prob::{Alphabet, Dist};
use crate::transport::{exact_ot, sinkhorn, CostMatrix, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// Marginal residual an OT check instance must reach.
const OT_RESIDUAL: f64 = 1e-6;

/// `%.12g`: twelve significant digits, trailing zeros dropped. NaN prints
/// as an empty field.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        return String::new();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if !(-5..12).contains(&exp) {
        return format!("{}e{exp}", trim(mant.to_string()));
    }
    let digits: String = mant.chars().filter(char::is_ascii_digit).collect();
    let body = if exp >= 0 {
        let (a, b) = digits.split_at(exp as usize + 1);
        format!("{a}.{b}")
    } else {
        format!("0.{}{digits}", "0".repeat((-exp - 1) as usize))
    };
    let sign = if x < 0.0 { "-" } else { "" };
    format!("{sign}{}", trim(body))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedReport {
    pub seed: u64,
    pub verdict: String,
    pub ok: bool,
    pub detail: String,
    /// Directory of this seed's files, relative to the output directory.
    pub dir: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub runs: Vec<SeedReport>,
    /// 0 when every seed converged, solved or passed; 2 otherwise.
    pub exit_code: i32,
}

struct Artifacts {
    verdict: String,
    ok: bool,
    detail: String,
    files: Vec<(String, String)>,
}

fn json_text<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes") + "\n"
}

fn trace_csv(trace: &InferenceTrace) -> String {
    let mut out = String::from("t,state_label,objective,cond_entropy_nats,kl_step_nats,variance\n");
    for s in &trace.steps {
        let label = match &s.label {
            Some(l) => l.clone(),
            None => s.state.iter().map(|&x| fmt_float(x)).collect::<Vec<_>>().join(";"),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.t,
            label,
            fmt_float(s.objective),
            fmt_float(s.cond_entropy),
            fmt_float(s.kl_step),
            fmt_float(s.variance)
        );
    }
    let _ = writeln!(out, "# verdict={}", trace.verdict);
    out
}

fn trace_file(stem: &str, trace: &InferenceTrace, format: Format) -> (String, String) {
    match format {
        Format::Csv => (format!("{stem}.csv"), trace_csv(trace)),
        Format::Json => (format!("{stem}.json"), json_text(trace)),
    }
}

fn file_safe(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn trace_artifacts(trace: InferenceTrace, format: Format) -> Artifacts {
    let detail = trace.last().label.clone().unwrap_or_else(|| format!("norm={}", fmt_float(trace.last().objective)));
    Artifacts {
        verdict: trace.verdict.to_string(),
        ok: trace.verdict.is_converged(),
        detail,
        files: vec![trace_file("trace", &trace, format)],
    }
}

fn seeded_simplex(alphabet: &Alphabet, seed: u64) -> Result<Dist> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..alphabet.size()).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    Dist::new(alphabet.clone(), w.into_iter().map(|x| x / s).collect())
}

fn run_seed(cfg: &ScenarioConfig, seed: u64) -> Result<Artifacts> {
    let format = cfg.format;
    match &cfg.plan {
        Plan::Temporal { alphabet, start, entropies, lambda, max_t, embedding } => {
            let start = match start {
                Some(d) => d.clone(),
                None => seeded_simplex(alphabet, seed)?,
            };
            Ok(trace_artifacts(run_temporal(&start, entropies, *lambda, *max_t, embedding)?, format))
        }
        Plan::Inverted { kernel, spec, starts, max_t } => {
            let traces = starts
                .iter()
                .map(|s| run_inverted(s, kernel, spec, *max_t))
                .collect::<Result<Vec<_>>>()?;
            if traces.len() == 1 {
                return Ok(trace_artifacts(traces.into_iter().next().expect("one trace"), format));
            }
            let bad = traces.iter().find(|t| !t.verdict.is_converged());
            let detail = starts
                .iter()
                .zip(&traces)
                .map(|(s, t)| format!("{s}->{}", t.last().label.as_deref().unwrap_or("")))
                .collect::<Vec<_>>()
                .join(" ");
            Ok(Artifacts {
                verdict: bad.map_or_else(|| "converged".to_string(), |t| t.verdict.to_string()),
                ok: bad.is_none(),
                detail,
                files: starts
                    .iter()
                    .zip(&traces)
                    .map(|(s, t)| trace_file(&format!("trace_{}", file_safe(s)), t, format))
                    .collect(),
            })
        }
        Plan::HalfCycle { cycle, start, sampled, max_t } => {
            let mode = if *sampled { HalfCycleMode::Sampled { seed } } else { HalfCycleMode::Expected };
            Ok(trace_artifacts(run_half_cycle(start, cycle, mode, *max_t)?, format))
        }
        Plan::Hierarchy { tower, starts, max_t } => {
            let run = hierarchical_run(tower, starts, *max_t)?;
            let mut files: Vec<(String, String)> = run
                .traces
                .iter()
                .enumerate()
                .map(|(i, t)| trace_file(&format!("trace_L{}", i + 1), t, format))
                .collect();
            files.push(match format {
                Format::Csv => {
                    let mut out = String::from("t,level,unit,parent_nats,child_sum_nats,satisfied\n");
                    for c in &run.checks {
                        let _ = writeln!(
                            out,
                            "{},{},{},{},{},{}",
                            c.t,
                            c.level,
                            c.unit,
                            fmt_float(c.check.parent),
                            fmt_float(c.check.child_sum),
                            c.check.satisfied
                        );
                    }
                    ("checks.csv".into(), out)
                }
                Format::Json => ("checks.json".into(), json_text(&run.checks)),
            });
            let detail = run
                .fixed_points
                .iter()
                .enumerate()
                .map(|(i, l)| format!("L{}={}", i + 1, l.join("|")))
                .collect::<Vec<_>>()
                .join(" ");
            let (verdict, ok) = match run.traces.iter().find(|t| !t.verdict.is_converged()) {
                Some(t) => (t.verdict.to_string(), false),
                None if !run.all_checks_satisfied() => ("check_failed".to_string(), false),
                None => ("converged".to_string(), true),
            };
            Ok(Artifacts { verdict, ok, detail, files })
        }
        Plan::Emergence(game) => {
            let run = run_emergence(game, seed)?;
            let (verdict, ok) = match run.verdict {
                GameVerdict::Solved { round } => (format!("solved({round})"), true),
                GameVerdict::Unsolved => ("unsolved".to_string(), false),
            };
            let series = match format {
                Format::Csv => {
                    let mut out = String::from("seed,round,accuracy,mi_nats,deltaness,compositionality,objective\n");
                    for r in &run.series {
                        let _ = writeln!(
                            out,
                            "{seed},{},{},{},{},{},{}",
                            r.round,
                            fmt_float(r.accuracy),
                            fmt_float(r.mi_nats),
                            fmt_float(r.deltaness),
                            fmt_float(r.compositionality),
                            fmt_float(r.objective)
                        );
                    }
                    ("emergence.csv".to_string(), out)
                }
                Format::Json => ("emergence.json".to_string(), json_text(&run.series)),
            };
            let detail = format!(
                "rounds={} accuracy={} compositionality={}",
                run.rounds_played,
                fmt_float(run.final_metrics.accuracy),
                fmt_float(run.final_metrics.compositionality)
            );
            Ok(Artifacts { verdict, ok, detail, files: vec![series, ("codebooks.json".into(), json_text(&run.codebooks))] })
        }
        Plan::Oscillator { matrix, v0, max_t, tol } => {
            let v0 = v0.clone().unwrap_or_else(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut v: Vec<f64> = (0..matrix.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                v[0] += 1.0f64.copysign(v[0]);
                v
            });
            Ok(trace_artifacts(bootstrap_iterate(linear_map(matrix.clone()), v0, *max_t, *tol), format))
        }
        Plan::IbCurve { joint, z_size, betas } => {
            let sols = beta_sweep(joint, *z_size, betas, seed)?;
            let file = match format {
                Format::Csv => {
                    let mut out = String::from("beta,compression_nats,relevance_nats,iterations\n");
                    for s in &sols {
                        let _ = writeln!(
                            out,
                            "{},{},{},{}",
                            fmt_float(s.beta),
                            fmt_float(s.compression),
                            fmt_float(s.relevance),
                            s.iterations
                        );
                    }
                    ("ib_curve.csv".to_string(), out)
                }
                Format::Json => {
                    let rows: Vec<_> = sols
                        .iter()
                        .map(|s| json!({"beta": s.beta, "compression_nats": s.compression, "relevance_nats": s.relevance, "iterations": s.iterations}))
                        .collect();
                    ("ib_curve.json".to_string(), json_text(&rows))
                }
            };
            Ok(Artifacts { verdict: "computed".into(), ok: true, detail: format!("points={}", sols.len()), files: vec![file] })
        }
        Plan::OtCheck { instances, max_side, reg, tolerance } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rows = Vec::with_capacity(*instances);
            for i in 0..*instances {
                let (r, c) = (rng.gen_range(2..=*max_side), rng.gen_range(2..=*max_side));
                let mut simplex = |n: usize, prefix: &str| -> Result<Dist> {
                    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
                    let s: f64 = w.iter().sum();
                    Dist::new(Alphabet::indexed(prefix, n)?, w.into_iter().map(|x| x / s).collect())
                };
                let mu = simplex(r, "a")?;
                let nu = simplex(c, "b")?;
                let costs: Vec<f64> = (0..r * c).map(|_| rng.gen_range(0.0..1.0)).collect();
                let cm = CostMatrix::new(mu.alphabet().clone(), nu.alphabet().clone(), costs)?;
                let plan = sinkhorn(&mu, &nu, &cm, *reg, DEFAULT_MAX_ITER, DEFAULT_TOL)?;
                let exact = exact_ot(&mu, &nu, &cm)?;
                rows.push((i, r, c, plan.cost, exact.cost, plan.residual, plan.iterations_used));
            }
            let failed = rows.iter().filter(|x| (x.3 - x.4).abs() > *tolerance || x.5 >= OT_RESIDUAL).count();
            let max_gap = rows.iter().map(|x| (x.3 - x.4).abs()).fold(0.0, f64::max);
            let file = match format {
                Format::Csv => {
                    let mut out = String::from("instance,rows,cols,sinkhorn_cost,exact_cost,gap,residual,iterations\n");
                    for (i, r, c, s, e, res, it) in &rows {
                        let _ = writeln!(
                            out,
                            "{i},{r},{c},{},{},{},{},{it}",
                            fmt_float(*s),
                            fmt_float(*e),
                            fmt_float(s - e),
                            fmt_float(*res)
                        );
                    }
                    ("ot_check.csv".to_string(), out)
                }
                Format::Json => {
                    let v: Vec<_> = rows
                        .iter()
                        .map(|(i, r, c, s, e, res, it)| json!({"instance": i, "rows": r, "cols": c, "sinkhorn_cost": s, "exact_cost": e, "residual": res, "iterations": it}))
                        .collect();
                    ("ot_check.json".to_string(), json_text(&v))
                }
            };
            Ok(Artifacts {
                verdict: if failed == 0 { "passed".into() } else { "failed".into() },
                ok: failed == 0,
                detail: format!("failed={failed} max_gap={}", fmt_float(max_gap)),
                files: vec![file],
            })
        }
    }
}

fn write_files(dir: &Path, files: &[(String, String)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, body) in files {
        fs::write(dir.join(name), body)?;
    }
    Ok(())
}

/// Runs every seed (concurrently, at most `threads` workers when given),
/// writes per-seed files, then the ordered summary, manifest and config copy.
///
/// A single seed writes straight into the output directory; several seeds
/// each get a `seed_<n>` subdirectory.
pub fn run_scenario(cfg: &ScenarioConfig, threads: Option<usize>) -> Result<RunReport> {
    let out = cfg.output_dir.clone();
    let nested = cfg.seeds.len() > 1;
    let work = || {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let art = run_seed(cfg, seed)?;
                let rel = if nested { format!("seed_{seed}") } else { ".".to_string() };
                write_files(&if nested { out.join(&rel) } else { out.clone() }, &art.files)?;
                Ok(SeedReport { seed, verdict: art.verdict, ok: art.ok, detail: art.detail, dir: rel })
            })
            .collect::<Result<Vec<_>>>()
    };
    let runs = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }?;
    let exit_code = if runs.iter().all(|r| r.ok) { 0 } else { 2 };

    let n_ok = runs.iter().filter(|r| r.ok).count();
    let fraction_label = if cfg.kind == Kind::Emergence { "solved_fraction" } else { "ok_fraction" };
    let mut summary = String::from("seed,verdict,ok,detail\n");
    for r in &runs {
        let _ = writeln!(summary, "{},{},{},{}", r.seed, r.verdict, r.ok, r.detail.replace(',', ";"));
    }
    let _ = writeln!(summary, "all,{fraction_label},{},{n_ok}/{}", fmt_float(n_ok as f64 / runs.len() as f64), runs.len());
    let manifest = json!({
        "library_version": crate::VERSION,
        "schema_version": super::SCHEMA_VERSION,
        "kind": cfg.kind.name(),
        "format": cfg.format.name(),
        "seeds": cfg.seeds,
        "config": cfg.value,
        "runs": runs,
        "exit_code": exit_code,
    });
    write_files(
        &out,
        &[
            ("summary.csv".into(), summary),
            ("manifest.json".into(), json_text(&manifest)),
            ("config.json".into(), cfg.source.clone()),
        ],
    )?;
    Ok(RunReport { output_dir: out, runs, exit_code })
}
