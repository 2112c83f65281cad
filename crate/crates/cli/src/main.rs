mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use lqhv::bounds::{state_bound, generic_bound};
use lqhv::gamma::{compute_gamma, estimate_upsilon};
use lqhv::io::{from_json, OperatorFile};
use lqhv::norms::{covering_bracket, probe_tensor_positivity, SearchConfig, DEFAULT_RESTARTS};
use lqhv::scenarios::{
    analog_inequality_check, chsh_scenario, lhv_constants, quantum_value, violation_ratio, BellFunctional, Scenario,
    CHSH_ALICE, CHSH_BOB,
};
use lqhv::source_ops::{
    build_singlet_special, build_tau, build_tau_tilde_at, verify_defining_relation, SourceOperator,
};
use lqhv::states::{make_singlet, QuantumState};
use lqhv::tensor::eigvals_hermitian;
use lqhv::{Error, Exec};

use report::{Format, Report};

#[derive(Parser)]
#[command(name = "lqhv", version, about = "Source operators, LP-exact scenario parameters and Bell-violation bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for every randomized subroutine.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = ExecArg::Parallel)]
    exec: ExecArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExecArg {
    Sequential,
    Parallel,
}

#[derive(Clone, Copy, ValueEnum)]
enum BuilderArg {
    Tau,
    #[value(name = "tau_tilde", alias = "tau-tilde")]
    TauTilde,
    Auto,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckArg {
    TensorPositivity,
    CoveringBracket,
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    SingletSqrt3,
    ChshGamma,
}

#[derive(Subcommand)]
enum Command {
    /// Build a source operator for a state.
    SourceOp {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        settings: Vec<usize>,
        #[arg(long, value_enum, default_value_t = BuilderArg::Auto)]
        builder: BuilderArg,
        /// Site left undilated by the W-block builder (default: first site with one setting).
        #[arg(long)]
        undilated: Option<usize>,
        /// Random product effects used to check the defining relation.
        #[arg(long, default_value_t = 8)]
        trials: usize,
    },
    /// Exact scenario parameter by linear programming.
    Gamma {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        dual_out: Option<PathBuf>,
        #[arg(long)]
        measure_out: Option<PathBuf>,
    },
    /// Lower bound on the state parameter by measurement search.
    Upsilon {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        settings: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        outcomes: Vec<usize>,
        #[arg(long, default_value_t = 2000)]
        budget: usize,
    },
    /// Analytic upper bounds, generic or for a given state.
    Bounds {
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',', required = true)]
        settings: Vec<usize>,
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// LHV constants, quantum value and violation ratio of a functional.
    BellEval {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        functional: PathBuf,
        /// Also check the analog inequality with this parameter.
        #[arg(long)]
        upsilon: Option<f64>,
    },
    /// Diagnostics on a stored operator.
    Verify {
        #[arg(long)]
        op: PathBuf,
        #[arg(long, value_enum)]
        check: CheckArg,
        #[arg(long, default_value_t = DEFAULT_RESTARTS)]
        restarts: usize,
    },
    /// Fixed reference computations.
    Reproduce {
        #[arg(long, value_enum)]
        case: CaseArg,
    },
}

enum Failure {
    Io(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(_) => Failure::Io(e.to_string()),
            other => Failure::Domain(other),
        }
    }
}

type Outcome<T> = Result<T, Failure>;

fn read<T: DeserializeOwned>(path: &Path) -> Outcome<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    from_json(&text).map_err(|e| match Failure::from(e) {
        Failure::Io(m) => Failure::Io(format!("{}: {m}", path.display())),
        Failure::Domain(Error::Argument(m)) => Failure::Domain(Error::Argument(format!("{}: {m}", path.display()))),
        other => other,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Outcome<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn operator_report(report: &mut Report, t: &SourceOperator, residual: f64) -> Outcome<()> {
    report.extend(OperatorFile {
        shape: t.shape().clone(),
        matrix: t.matrix().clone(),
        builder: Some(t.builder()),
        state: Some(t.state().clone()),
        trace_norm: Some(t.trace_norm()?),
        defining_residual: Some(residual),
    });
    report.set("min_eigenvalue", t.min_eigenvalue()?);
    Ok(())
}

fn source_op(
    report: &mut Report,
    rho: &QuantumState,
    settings: &[usize],
    builder: BuilderArg,
    undilated: Option<usize>,
    trials: usize,
    seed: u64,
) -> Outcome<()> {
    let site = undilated.or_else(|| settings.iter().position(|&s| s == 1));
    let tilde = |u: Option<usize>| -> Outcome<SourceOperator> {
        let u = u.ok_or_else(|| {
            Error::Argument(format!("the W-block builder needs a site with one setting, got {settings:?}"))
        })?;
        Ok(build_tau_tilde_at(rho, settings, u)?)
    };
    let t = match builder {
        BuilderArg::Tau => build_tau(rho, settings, None)?,
        BuilderArg::TauTilde => tilde(site)?,
        BuilderArg::Auto => {
            let tau = build_tau(rho, settings, None)?;
            match site {
                Some(_) => {
                    let alt = tilde(site)?;
                    if alt.trace_norm()? < tau.trace_norm()? {
                        alt
                    } else {
                        tau
                    }
                }
                None => tau,
            }
        }
    };
    let residual = verify_defining_relation(&t, trials, seed)?;
    operator_report(report, &t, residual)
}

fn gamma_cmd(report: &mut Report, sc: &Scenario, dual_out: Option<&Path>, measure_out: Option<&Path>, exec: Exec) -> Outcome<()> {
    let g = compute_gamma(sc)?;
    report.set("gamma", g.gamma);
    report.set("lhv", g.lhv);
    report.set("variables", g.variables);
    report.set("constraints", g.constraints);
    report.set("iterations", g.iterations);
    report.set("negative_mass", g.optimal_measure.negative_mass());
    report.set("marginal_deviation", g.optimal_measure.marginal_deviation(sc)?);
    report.set("dual_ratio", violation_ratio(sc, &g.dual_functional, exec)?);
    if let Some(p) = dual_out {
        write_json(p, &g.dual_functional)?;
    }
    if let Some(p) = measure_out {
        write_json(p, &g.optimal_measure)?;
    }
    Ok(())
}

fn bell_eval(report: &mut Report, sc: &Scenario, f: &BellFunctional, upsilon: Option<f64>, exec: Exec) -> Outcome<()> {
    let c = lhv_constants(f, exec)?;
    report.set("b_inf", c.b_inf);
    report.set("b_sup", c.b_sup);
    report.set("b_abs", c.b_abs);
    report.set("quantum_value", quantum_value(sc, f)?);
    let ratio = match violation_ratio(sc, f, exec) {
        Ok(r) => Some(r),
        Err(Error::TrivialFunctional) => None,
        Err(e) => return Err(e.into()),
    };
    report.set("ratio", ratio);
    if let Some(u) = upsilon {
        report.set("upsilon", u);
        report.set("analog_inequality_holds", analog_inequality_check(sc, f, u, exec)?);
    }
    Ok(())
}

fn verify(report: &mut Report, file: &OperatorFile, check: CheckArg, config: &SearchConfig) -> Outcome<()> {
    report.set("restarts", config.restarts);
    match check {
        CheckArg::TensorPositivity => {
            report.extend(probe_tensor_positivity(&file.matrix, &file.shape, config)?);
        }
        CheckArg::CoveringBracket => {
            report.extend(covering_bracket(&file.matrix, &file.shape, config)?);
        }
    }
    Ok(())
}

fn reproduce(report: &mut Report, case: CaseArg, seed: u64, exec: Exec) -> Outcome<()> {
    match case {
        CaseArg::SingletSqrt3 => {
            report.set("case", "singlet-sqrt3");
            let t = build_singlet_special();
            let norm = t.trace_norm()?;
            report.set("trace_norm", norm);
            report.set("expected", 3f64.sqrt());
            report.set("deviation", (norm - 3f64.sqrt()).abs());
            report.set("eigenvalues", eigvals_hermitian(t.matrix())?);
            report.set("defining_residual", verify_defining_relation(&t, 16, seed)?);
        }
        CaseArg::ChshGamma => {
            report.set("case", "chsh-gamma");
            let sc = chsh_scenario(make_singlet(), CHSH_ALICE, CHSH_BOB)?;
            let g = compute_gamma(&sc)?;
            report.set("gamma", g.gamma);
            report.set("expected", std::f64::consts::SQRT_2);
            report.set("deviation", (g.gamma - std::f64::consts::SQRT_2).abs());
            report.set("dual_ratio", violation_ratio(&sc, &g.dual_functional, exec)?);
            report.set("variables", g.variables);
            report.set("constraints", g.constraints);
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Outcome<Report> {
    let exec = match cli.exec {
        ExecArg::Sequential => Exec::Sequential,
        ExecArg::Parallel => Exec::Parallel,
    };
    let seed = cli.seed;
    let name = match &cli.command {
        Command::SourceOp { .. } => "source-op",
        Command::Gamma { .. } => "gamma",
        Command::Upsilon { .. } => "upsilon",
        Command::Bounds { .. } => "bounds",
        Command::BellEval { .. } => "bell-eval",
        Command::Verify { .. } => "verify",
        Command::Reproduce { .. } => "reproduce",
    };
    let mut report = Report::new(name, seed);
    match &cli.command {
        Command::SourceOp {
            state,
            settings,
            builder,
            undilated,
            trials,
        } => {
            let rho: QuantumState = read(state)?;
            source_op(&mut report, &rho, settings, *builder, *undilated, *trials, seed)?;
        }
        Command::Gamma {
            scenario,
            dual_out,
            measure_out,
        } => {
            let sc: Scenario = read(scenario)?;
            gamma_cmd(&mut report, &sc, dual_out.as_deref(), measure_out.as_deref(), exec)?;
        }
        Command::Upsilon {
            state,
            settings,
            outcomes,
            budget,
        } => {
            let rho: QuantumState = read(state)?;
            let e = estimate_upsilon(&rho, settings, outcomes, *budget, seed, exec)?;
            report.set("settings", settings);
            report.set("outcomes", outcomes);
            report.set("budget", budget);
            report.set("best_gamma", e.best_gamma);
            report.set("estimate", "lower bound");
            report.set("evaluations", e.evaluations);
            report.set("best_params", &e.best_params);
            report.set("povms", e.best_povms.effects());
        }
        Command::Bounds { dims, settings, state } => {
            let r = match state {
                Some(p) => {
                    let rho: QuantumState = read(p)?;
                    if let Some(d) = dims {
                        if d != rho.site_dims() {
                            return Err(Error::Shape(format!(
                                "--dims {d:?} differ from the state's dimensions {:?}",
                                rho.site_dims()
                            ))
                            .into());
                        }
                    }
                    state_bound(&rho, settings, exec)?
                }
                None => {
                    let d = dims
                        .as_ref()
                        .ok_or_else(|| Error::Argument("bounds needs --dims or --state".into()))?;
                    generic_bound(d, settings)?
                }
            };
            report.extend(r);
        }
        Command::BellEval {
            scenario,
            functional,
            upsilon,
        } => {
            let sc: Scenario = read(scenario)?;
            let f: BellFunctional = read(functional)?;
            bell_eval(&mut report, &sc, &f, *upsilon, exec)?;
        }
        Command::Verify { op, check, restarts } => {
            let file: OperatorFile = read(op)?;
            let config = SearchConfig {
                restarts: *restarts,
                seed,
                exec,
            };
            verify(&mut report, &file, *check, &config)?;
        }
        Command::Reproduce { case } => reproduce(&mut report, *case, seed, exec)?,
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|report| {
        let text = report.render(cli.format);
        match &cli.out {
            Some(p) => std::fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
