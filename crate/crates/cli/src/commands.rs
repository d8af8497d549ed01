use std::path::PathBuf;

use clap::Args;
use lognorm_core::certify::{
    self, AssumptionId, CertificateReport, CertifyConfig, Evidence, Overall,
};
use lognorm_core::funclass::{
    self, BuiltinFunction, FunctionClass, ProbeSettings, SampledFunction, VectorFunction,
};
use lognorm_core::linalg::{
    log_norm, log_norm_limit, lyapunov_solve, mat_induced_norm, vec_norm, DEFAULT_H_SCHEDULE,
};
use lognorm_core::odesim::{integrate_ode, IntegratorSettings, Trajectory};
use lognorm_core::quadrature::uniform_grid;
use lognorm_core::{Error, NormKind, Scenario};
use serde_json::json;

use crate::error::{
    CliError, CliResult, EXIT_INCONCLUSIVE, EXIT_NOT_CERTIFIED, EXIT_NUMERIC, EXIT_OK,
};
use crate::numfmt::human;
use crate::output::{write_csv, write_json};
use crate::scenario::{load, parse_kinds, parse_matrix, parse_vector};
use crate::GlobalArgs;

#[derive(Debug, Args)]
pub struct MuArgs {
    /// Matrix as JSON rows, e.g. "[[-11,10],[2,-3]]", or a file path.
    #[arg(long)]
    pub matrix: String,
    /// Comma-separated norm kinds: 1, 2, inf.
    #[arg(long, default_value = "1,2,inf")]
    pub kinds: String,
    /// Also report the weighted norm ‖x‖ = √(xᵀHx) for this H (JSON rows or path).
    #[arg(long)]
    pub weight: Option<String>,
    /// Also report μ_H with H solving AᵀH + HA = −2I (A must be Hurwitz).
    #[arg(long)]
    pub lyapunov: bool,
    /// Add the limit-definition estimate (‖I + hA‖ − 1)/h, h → 0.
    #[arg(long)]
    pub limit: bool,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Builtin scenario (example2, example3, lti_hurwitz, custom-grid) or a scenario JSON file.
    #[arg(long)]
    pub scenario: String,
    /// Scenario parameter as key=value (value parsed as JSON when possible).
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
    /// Write the resolved scenario as JSON to the output directory.
    #[arg(long)]
    pub dump_scenario: bool,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Comma-separated norm kinds: 1, 2, inf.
    #[arg(long, default_value = "2")]
    pub kinds: String,
    /// Cross-check the envelope against simulated trajectories.
    #[arg(long)]
    pub simulate: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Initial state as a JSON array (defaults to the scenario's).
    #[arg(long)]
    pub x0: Option<String>,
    /// Final time (defaults to the scenario's simulation horizon).
    #[arg(long)]
    pub tf: Option<f64>,
    /// Output spacing; accepted integrator steps when omitted.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Append the variation-of-constants envelope B(t) as a column.
    #[arg(long)]
    pub envelope: bool,
    /// Norm kind for the envelope.
    #[arg(long, default_value = "2")]
    pub kind: String,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Builtin function: oscillatory, needle, example2-perturbation, zero, exp-decay.
    #[arg(
        long = "fn",
        conflicts_with = "samples",
        required_unless_present = "samples"
    )]
    pub function: Option<String>,
    /// CSV with header t,h1,...,hn sampling the function.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Comma-separated classes: V, AD, D.
    #[arg(long, default_value = "V,AD,D")]
    pub classes: String,
    #[arg(long, default_value = "2")]
    pub kind: String,
    /// η-grid size for the D supremum.
    #[arg(long, default_value_t = 64)]
    pub eta: usize,
}

pub fn mu(args: &MuArgs, global: &GlobalArgs) -> CliResult<u8> {
    let a = parse_matrix(&args.matrix)?;
    let mut kinds = parse_kinds(&args.kinds)?;
    if let Some(w) = &args.weight {
        kinds.push(NormKind::weighted(parse_matrix(w)?)?);
    }
    if args.lyapunov {
        kinds.push(NormKind::weighted(lyapunov_solve(&a)?)?);
    }
    let mut rows = Vec::new();
    for kind in &kinds {
        let norm = mat_induced_norm(&a, kind)?;
        let mu = log_norm(&a, kind)?;
        let limit = if args.limit {
            Some(log_norm_limit(&a, kind, &DEFAULT_H_SCHEDULE)?)
        } else {
            None
        };
        rows.push((kind.label(), norm, mu, limit));
    }
    if global.json {
        let out: Vec<_> = rows
            .iter()
            .map(|(k, n, m, l)| {
                json!({"kind": k, "norm": n, "mu": m,
                       "mu_limit": l.map(|l| l.value), "mu_limit_error": l.map(|l| l.error)})
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&out).expect("json"));
    } else {
        let mut header = format!("{:<6}{:>14}{:>14}", "kind", "norm", "mu");
        if args.limit {
            header.push_str(&format!("{:>14}{:>14}", "mu_limit", "limit_err"));
        }
        println!("{header}");
        for (k, n, m, l) in &rows {
            let mut line = format!("{:<6}{:>14}{:>14}", k, human(*n), human(*m));
            if let Some(l) = l {
                line.push_str(&format!("{:>14}{:>14}", human(l.value), human(l.error)));
            }
            println!("{line}");
        }
    }
    Ok(EXIT_OK)
}

fn resolve(args: &ScenarioArgs, global: &GlobalArgs) -> CliResult<Scenario> {
    let scenario = load(&args.scenario, &args.params)?;
    if args.dump_scenario {
        let dir = global.out_dir().sub("scenarios")?;
        let spec = scenario.to_spec()?;
        write_json(
            &dir.join(format!("{}.json", scenario.name)),
            &serde_json::to_value(spec).expect("json"),
        )?;
    }
    Ok(scenario)
}

fn integrator(global: &GlobalArgs) -> CliResult<IntegratorSettings> {
    let (rel, abs) = global.tolerances()?;
    Ok(IntegratorSettings::with_tolerances(rel, abs))
}

/// 0 if some kind is certified, else 4 if some kind is inconclusive, else 3.
pub fn certify_exit_code(reports: &[CertificateReport]) -> u8 {
    if reports
        .iter()
        .any(|r| r.overall == Overall::CertifiedOnHorizon)
    {
        EXIT_OK
    } else if reports.iter().any(|r| r.overall == Overall::Inconclusive) {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_NOT_CERTIFIED
    }
}

fn evidence_header(id: AssumptionId) -> &'static str {
    match id {
        AssumptionId::A1 => "integral_mu",
        AssumptionId::A2 => "mu",
        AssumptionId::A3 => "envelope_over_mu",
    }
}

pub fn certify(args: &CertifyArgs, global: &GlobalArgs) -> CliResult<u8> {
    let scenario = resolve(&args.scenario, global)?;
    let kinds = parse_kinds(&args.kinds)?;
    let config = CertifyConfig {
        horizon: global.horizon()?,
        simulate: args.simulate,
        integrator: integrator(global)?,
        seed: global.seed,
        ..CertifyConfig::default()
    };
    let reports = certify::certify(&scenario, &kinds, &config);
    let dir = global.out_dir().sub("certify")?;
    for r in &reports {
        for a in &r.assumptions {
            if matches!(a.evidence, Evidence::None) {
                continue;
            }
            let rows: Vec<Vec<f64>> = a
                .evidence
                .rows()
                .into_iter()
                .map(|(t, v)| vec![t, v])
                .collect();
            let header = ["t".to_string(), evidence_header(a.id).to_string()];
            write_csv(&dir.join(r.evidence_ref(a.id)), &header, &rows)?;
        }
        write_json(
            &dir.join(format!("{}_{}.json", r.scenario, r.kind.label())),
            &r.to_json(),
        )?;
    }
    if global.json {
        let all: Vec<_> = reports.iter().map(CertificateReport::to_json).collect();
        println!("{}", serde_json::to_string_pretty(&all).expect("json"));
    } else {
        for r in &reports {
            println!(
                "{}  kind {}  T = {}  {}",
                r.scenario,
                r.kind.label(),
                human(r.horizon),
                r.overall.label()
            );
            for a in &r.assumptions {
                println!("  {:?}  {:<17} {}", a.id, a.verdict.label(), a.detail);
            }
            let s = &r.simulation;
            if s.performed {
                match &s.error {
                    Some(e) => println!("  simulation failed: {e}"),
                    None => println!(
                        "  simulation: {} runs, max |x|/B = {}, violations {}, tail |x| = {}",
                        s.runs,
                        s.max_envelope_ratio.map_or("-".into(), human),
                        s.violations,
                        s.tail_norm.map_or("-".into(), human),
                    ),
                }
            }
        }
    }
    let sim_failed = reports
        .iter()
        .any(|r| r.simulation.error.is_some() || r.simulation.violations > 0);
    Ok(if sim_failed {
        EXIT_NUMERIC
    } else {
        certify_exit_code(&reports)
    })
}

/// Integrates the scenario and returns the trajectory, or the partial one
/// with the failure.
pub fn run_simulation(
    scenario: &Scenario,
    x0: &[f64],
    tf: f64,
    settings: &IntegratorSettings,
) -> CliResult<(Trajectory, Option<Error>)> {
    if x0.len() != scenario.dim() {
        return Err(CliError::usage(format!(
            "x0 has dimension {}, scenario has {}",
            x0.len(),
            scenario.dim()
        )));
    }
    match integrate_ode(|t, x, out| scenario.rhs(t, x, out), x0, (0.0, tf), settings) {
        Ok(traj) => Ok((traj, None)),
        Err(Error::Integration { reason, t, partial }) => Ok((
            *partial.clone(),
            Some(Error::Integration { reason, t, partial }),
        )),
        Err(e) => Err(e.into()),
    }
}

pub fn simulate(args: &SimulateArgs, global: &GlobalArgs) -> CliResult<u8> {
    let scenario = resolve(&args.scenario, global)?;
    let x0 = match &args.x0 {
        Some(s) => parse_vector(s)?,
        None => scenario.default_initial_state(),
    };
    let tf = args
        .tf
        .unwrap_or_else(|| scenario.default_simulation_horizon());
    if !(tf >= 0.0 && tf.is_finite()) {
        return Err(CliError::usage("--tf must be nonnegative"));
    }
    let kind = args
        .kind
        .parse::<NormKind>()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let (traj, failure) = run_simulation(&scenario, &x0, tf, &integrator(global)?)?;
    let grid = match args.dt {
        Some(dt) if !(dt > 0.0) => return Err(CliError::usage("--dt must be positive")),
        Some(dt) if failure.is_none() && tf > 0.0 => {
            uniform_grid(tf, ((tf / dt).ceil() as usize).max(1))
        }
        _ => traj.ts.clone(),
    };
    let states = traj.sample_grid(&grid)?;
    let envelope = if args.envelope {
        Some(if grid.len() < 2 {
            vec![vec_norm(&x0, &kind)?]
        } else {
            certify::envelope_bound(&scenario, &kind, &grid, 1e-9)?.bound(vec_norm(&x0, &kind)?)
        })
    } else {
        None
    };
    let mut header = vec!["t".to_string()];
    header.extend((1..=scenario.dim()).map(|i| format!("x{i}")));
    if envelope.is_some() {
        header.push("envelope".into());
    }
    let rows: Vec<Vec<f64>> = grid
        .iter()
        .zip(&states)
        .enumerate()
        .map(|(k, (t, x))| {
            let mut row = vec![*t];
            row.extend(x);
            if let Some(b) = &envelope {
                row.push(b[k]);
            }
            row
        })
        .collect();
    let dir = global.out_dir().sub("simulate")?;
    let csv_path = dir.join(format!("{}.csv", scenario.name));
    write_csv(&csv_path, &header, &rows)?;
    let final_norm = vec_norm(traj.last_state(), &kind)?;
    let meta = json!({
        "scenario": scenario.name,
        "complete": failure.is_none(),
        "failure": failure.as_ref().map(|e| e.to_string()),
        "t_end": traj.t_end(),
        "final_norm": final_norm,
        "kind": kind.label(),
        "accepted": traj.accepted,
        "rejected": traj.rejected,
        "csv": csv_path.file_name().and_then(|f| f.to_str()),
    });
    write_json(&dir.join(format!("{}.json", scenario.name)), &meta)?;
    if global.json {
        println!("{}", serde_json::to_string_pretty(&meta).expect("json"));
    } else {
        println!(
            "{}: t = {}, |x| = {} ({} steps, {} rejected) -> {}",
            scenario.name,
            human(traj.t_end()),
            human(final_norm),
            traj.accepted,
            traj.rejected,
            csv_path.display()
        );
    }
    match failure {
        Some(e) => {
            eprintln!("error: partial trajectory written: {e}");
            Ok(EXIT_NUMERIC)
        }
        None => Ok(EXIT_OK),
    }
}

fn read_samples(path: &std::path::Path) -> CliResult<SampledFunction> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut ts = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let nums = record
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if nums.len() < 2 {
            return Err(CliError::usage(format!(
                "{}: need columns t,h1,...",
                path.display()
            )));
        }
        ts.push(nums[0]);
        values.push(nums[1..].to_vec());
    }
    Ok(SampledFunction::new(ts, values)?)
}

pub fn classify(args: &ClassifyArgs, global: &GlobalArgs) -> CliResult<u8> {
    let classes = args
        .classes
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.parse::<FunctionClass>()
                .map_err(|e| CliError::usage(e.to_string()))
        })
        .collect::<CliResult<Vec<_>>>()?;
    if classes.is_empty() {
        return Err(CliError::usage("no classes given"));
    }
    let kind = args
        .kind
        .parse::<NormKind>()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let settings = ProbeSettings {
        eta_points: args.eta,
        ..ProbeSettings::default()
    };
    let horizon = global.horizon()?;
    enum Source {
        Builtin(BuiltinFunction),
        Sampled(SampledFunction),
    }
    let (name, source) = match (&args.function, &args.samples) {
        (Some(f), _) => (f.clone(), Source::Builtin(BuiltinFunction::from_name(f)?)),
        (None, Some(p)) => (
            p.file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("samples")
                .to_string(),
            Source::Sampled(read_samples(p)?),
        ),
        (None, None) => return Err(CliError::usage("give --fn or --samples")),
    };
    let dir = global.out_dir().sub("classify")?;
    let mut results = Vec::new();
    for class in classes {
        let (h, grid): (&dyn VectorFunction, Vec<f64>) = match &source {
            Source::Builtin(b) => (
                b,
                b.natural_grid(class, horizon.unwrap_or_else(|| b.default_horizon())),
            ),
            Source::Sampled(s) => {
                let (lo, hi) = s.domain();
                let end = match class {
                    FunctionClass::V => hi,
                    _ => hi - 1.0,
                };
                let end = horizon.map_or(end, |t| end.min(lo + t));
                if end <= lo {
                    return Err(CliError::usage("samples do not cover a unit window"));
                }
                let steps = ((end - lo) * 4.0).ceil().max(1.0) as usize;
                (
                    s,
                    (0..=steps)
                        .map(|k| lo + (end - lo) * k as f64 / steps as f64)
                        .collect(),
                )
            }
        };
        let series = funclass::probe(class, h, &grid, &kind, &settings)?;
        let stem = format!("{name}_{}", class.label());
        let rows: Vec<Vec<f64>> = series
            .ts
            .iter()
            .zip(&series.values)
            .map(|(t, v)| vec![*t, *v])
            .collect();
        write_csv(
            &dir.join(format!("{stem}.csv")),
            &["t".into(), "value".into()],
            &rows,
        )?;
        let params = json!({
            "function": name,
            "kind": kind.label(),
            "eps_abs": series.rule.eps_abs,
            "delta": series.rule.delta,
            "eta_points": settings.eta_points,
            "quad_tol": settings.quad_tol,
            "points": series.ts.len(),
            "unconverged_windows": series.unconverged_windows,
        });
        write_json(
            &dir.join(format!("{stem}.json")),
            &series.sidecar(params.clone()),
        )?;
        results.push(series);
    }
    if global.json {
        let all: Vec<_> = results
            .iter()
            .map(|s| {
                json!({"class": s.class.label(), "verdict": s.verdict.label(),
                       "trend_slope": s.trend_slope, "last": s.values.last()})
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&all).expect("json"));
    } else {
        println!(
            "{:<6}{:<16}{:>14}{:>14}",
            "class", "verdict", "last", "slope"
        );
        for s in &results {
            println!(
                "{:<6}{:<16}{:>14}{:>14}",
                s.class.label(),
                s.verdict.label(),
                human(*s.values.last().unwrap()),
                s.trend_slope.map_or("-".into(), human)
            );
        }
    }
    Ok(EXIT_OK)
}
