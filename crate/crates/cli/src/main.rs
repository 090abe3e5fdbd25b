use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use infconv::apps;
use infconv::envelope::moreau_envelope;
use infconv::manifold::ManifoldModel;
use infconv::verify::{self, BundleOptions, CheckReport, Tolerance};
use infconv::Error;
use infconv_cli::config::{Bundle, ConfigError, Format, Prepared, RunConfig};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "infconv",
    version,
    about = "Inf-convolution envelopes on model manifolds"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads.
    #[arg(long, global = true, env = "INFCONV_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// f, f_λ, gradient and prox on the region lattice.
    Envelope {
        #[arg(long, value_delimiter = ',')]
        lambda: Option<Vec<f64>>,
    },
    /// sup and mean of f - f_λ over the region lattice per λ.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        lambda: Option<Vec<f64>>,
    },
    /// Run a check bundle; exit status 1 when any check fails.
    Check {
        #[arg(long, value_enum)]
        bundle: Option<Bundle>,
        #[arg(long, value_delimiter = ',')]
        lambda: Option<Vec<f64>>,
    },
    /// Search for a midpoint-convexity violation of d(·, C)² near a short segment C.
    Counterexample {
        #[arg(long)]
        epsilon: Option<f64>,
        /// Model when no configuration is given.
        #[arg(long, default_value = "sphere")]
        model: String,
    },
    /// Hopf–Lax solution and its Hamilton–Jacobi residual on a (t, x) grid.
    Hj {
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
    },
}

enum Failure {
    Config(String),
    Infeasible(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Infeasible(e.to_string())
    }
}

struct Output {
    body: String,
    all_pass: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(m)) => {
            eprintln!("infconv: configuration error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Infeasible(m)) => {
            eprintln!("infconv: {m}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<bool, Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    let loaded = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            let cfg = RunConfig::parse(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            Some((cfg, text))
        }
        None => None,
    };
    let mut cfg_text = loaded;
    if let Some((cfg, _)) = cfg_text.as_mut() {
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        match &cli.command {
            Command::Envelope { lambda: Some(l) }
            | Command::Sweep { lambda: Some(l) }
            | Command::Check {
                lambda: Some(l), ..
            } => cfg.run.lambda = l.clone(),
            _ => {}
        }
        if let Command::Check {
            bundle: Some(b), ..
        } = &cli.command
        {
            cfg.run.bundle = *b;
        }
        if let Command::Counterexample {
            epsilon: Some(e), ..
        } = &cli.command
        {
            cfg.run.epsilon = *e;
        }
        if let Command::Hj { times: Some(t) } = &cli.command {
            cfg.hj.times = t.clone();
        }
    }
    let format_of = |default: Format| {
        cli.format
            .or_else(|| cfg_text.as_ref().and_then(|(c, _)| c.output.format))
            .unwrap_or(default)
    };
    let out_path = cli
        .out
        .clone()
        .or_else(|| cfg_text.as_ref().and_then(|(c, _)| c.output.path.clone()));

    let output = match &cli.command {
        Command::Counterexample { epsilon, model } => {
            let (m, eps) = match &cfg_text {
                Some((cfg, text)) => {
                    cfg.prepare(Some(text))?;
                    (cfg.model().map_err(Failure::Config)?, cfg.run.epsilon)
                }
                None => {
                    let m = ManifoldModel::from_name(model, None)
                        .map_err(|e| Failure::Config(e.to_string()))?;
                    (m, epsilon.unwrap_or(0.5))
                }
            };
            cmd_counterexample(m, eps, format_of(Format::Json))?
        }
        cmd => {
            let (cfg, text) = cfg_text
                .as_ref()
                .ok_or_else(|| Failure::Config("--config is required for this command".into()))?;
            let prep = cfg.prepare(Some(text))?;
            match cmd {
                Command::Envelope { .. } => cmd_envelope(&prep, format_of(Format::Csv))?,
                Command::Sweep { .. } => cmd_sweep(&prep, format_of(Format::Csv))?,
                Command::Check { .. } => cmd_check(cfg, &prep, format_of(Format::Json))?,
                Command::Hj { .. } => cmd_hj(cfg, &prep, format_of(Format::Csv))?,
                Command::Counterexample { .. } => unreachable!(),
            }
        }
    };
    match out_path {
        Some(p) => std::fs::write(&p, &output.body)
            .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        None => print!("{}", output.body),
    }
    Ok(output.all_pass)
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn axis_names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn csv_line(out: &mut String, cells: impl IntoIterator<Item = String>) {
    let cells: Vec<String> = cells.into_iter().collect();
    out.push_str(&cells.join(","));
    out.push('\n');
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn done(body: String) -> Output {
    Output {
        body,
        all_pass: true,
    }
}

#[derive(Serialize)]
struct EnvelopeRow {
    lambda: f64,
    x: Vec<f64>,
    f: f64,
    f_lambda: f64,
    gradient: Vec<f64>,
    prox: Vec<f64>,
    radius_used: f64,
    minimizer_unique: bool,
}

fn cmd_envelope(p: &Prepared, format: Format) -> Result<Output, Failure> {
    let m = &p.model;
    let jobs: Vec<(f64, usize)> = p
        .lambdas
        .iter()
        .flat_map(|&l| (0..p.grid.len()).map(move |i| (l, i)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(l, i)| {
            let x = &p.grid[i];
            let r = moreau_envelope(m, &p.field, x, &p.params.with_lambda(l))?;
            Ok(EnvelopeRow {
                lambda: l,
                x: x.coords().to_vec(),
                f: p.field.eval(x),
                f_lambda: r.value,
                gradient: r.gradient.vec().to_vec(),
                prox: r.prox_point.coords().to_vec(),
                radius_used: r.radius_used,
                minimizer_unique: r.minimizer_unique,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    if format == Format::Json {
        return Ok(done(json(&rows)));
    }
    let n = m.coord_len();
    let mut out = String::new();
    let mut header = vec!["lambda".to_string()];
    header.extend(axis_names("x", n));
    header.extend(["f".into(), "f_lambda".into()]);
    header.extend(axis_names("grad", n));
    header.extend(axis_names("prox", n));
    header.extend(["radius_used".into(), "minimizer_unique".into()]);
    csv_line(&mut out, header);
    for r in &rows {
        let mut cells = vec![num(r.lambda)];
        cells.extend(r.x.iter().map(|v| num(*v)));
        cells.extend([num(r.f), num(r.f_lambda)]);
        cells.extend(r.gradient.iter().map(|v| num(*v)));
        cells.extend(r.prox.iter().map(|v| num(*v)));
        cells.extend([num(r.radius_used), r.minimizer_unique.to_string()]);
        csv_line(&mut out, cells);
    }
    Ok(done(out))
}

fn cmd_sweep(p: &Prepared, format: Format) -> Result<Output, Failure> {
    let rows = verify::lambda_sweep(&p.model, &p.field, &p.lambdas, &p.grid, &p.params)?;
    if format == Format::Json {
        return Ok(done(json(&rows)));
    }
    let mut out = String::new();
    csv_line(
        &mut out,
        ["lambda", "sup_gap", "mean_gap"].map(String::from),
    );
    for r in &rows {
        csv_line(&mut out, [num(r.lambda), num(r.sup_gap), num(r.mean_gap)]);
    }
    Ok(done(out))
}

fn cmd_check(cfg: &RunConfig, p: &Prepared, format: Format) -> Result<Output, Failure> {
    let (m, f) = (&p.model, &p.field);
    let opts = BundleOptions {
        seed: cfg.seed,
        geodesics: cfg.region.geodesics,
        samples: cfg.region.samples,
        grid_per_axis: cfg.region.resolution,
        tolerance: p.tolerance,
        envelope: p.params.clone(),
        ..BundleOptions::default()
    };
    let samples = apps::region_points(m, &p.region, cfg.region.samples, cfg.seed);
    let reports: Vec<CheckReport> = match cfg.run.bundle {
        Bundle::MainCorollary => verify::main_corollary_bundle(m, f, &p.region, &opts)?,
        Bundle::CartanHadamard => {
            if !m.is_cartan_hadamard() {
                return Err(Failure::Config(format!(
                    "the cartan-hadamard bundle needs a Cartan-Hadamard model, not {m}"
                )));
            }
            verify::cartan_hadamard_bundle(m, f, &p.region, &p.lambdas, &opts)?
        }
        Bundle::Localization => {
            let cases: Vec<_> = p
                .lambdas
                .iter()
                .flat_map(|&l| samples.iter().map(move |x| (x.clone(), l)))
                .collect();
            vec![verify::check_localization(
                m,
                f,
                &cases,
                cfg.region.resolution,
                &p.params,
            )?]
        }
        Bundle::Symmetry => {
            if f.symmetries().is_empty() {
                return Err(Failure::Config(
                    "the symmetry bundle needs at least one [[symmetry]] entry".into(),
                ));
            }
            let mut out = Vec::new();
            for iso in f.symmetries() {
                for &l in &p.lambdas {
                    out.push(verify::check_symmetry(
                        m,
                        f,
                        iso,
                        l,
                        &samples,
                        &p.params,
                        p.tolerance,
                    )?);
                }
            }
            out
        }
        Bundle::C1 => {
            let pairs = verify::pair_plan(m, &p.region, cfg.region.samples, cfg.seed);
            let mut out = Vec::new();
            for &l in &p.lambdas {
                out.push(verify::check_c1(m, f, l, &pairs, &opts.ladder, &p.params)?);
                out.push(verify::check_gradient_fd(
                    m,
                    f,
                    l,
                    &samples,
                    1e-5,
                    &p.params,
                    Tolerance::absolute(1e-5),
                )?);
            }
            out
        }
    };
    let all_pass = reports.iter().all(|r| r.pass);
    let body = match format {
        Format::Json => json(&reports),
        Format::Csv => {
            let mut out = String::new();
            csv_line(
                &mut out,
                [
                    "check",
                    "model",
                    "field",
                    "samples",
                    "worst_violation",
                    "tolerance",
                    "pass",
                ]
                .map(String::from),
            );
            for r in &reports {
                csv_line(
                    &mut out,
                    [
                        r.check_name.clone(),
                        r.model.clone(),
                        format!("\"{}\"", r.field.replace('"', "\"\"")),
                        r.samples.to_string(),
                        num(r.worst_violation),
                        num(r.tolerance),
                        r.pass.to_string(),
                    ],
                );
            }
            out
        }
    };
    Ok(Output { body, all_pass })
}

fn cmd_counterexample(m: ManifoldModel, eps: f64, format: Format) -> Result<Output, Failure> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Failure::Config(format!(
            "epsilon must lie in (0, 1), got {eps}"
        )));
    }
    let rep = apps::counterexample_search(&m, eps)?;
    let body = match format {
        Format::Json => json(&rep),
        Format::Csv => {
            let mut out = String::new();
            csv_line(
                &mut out,
                ["model", "epsilon", "candidates", "witness_found", "margin"].map(String::from),
            );
            let margin = rep
                .witness
                .as_ref()
                .map_or(rep.report.worst_violation, |w| w.margin);
            csv_line(
                &mut out,
                [
                    m.name().to_string(),
                    num(eps),
                    rep.candidates.to_string(),
                    rep.witness.is_some().to_string(),
                    num(margin),
                ],
            );
            out
        }
    };
    Ok(done(body))
}

fn cmd_hj(cfg: &RunConfig, p: &Prepared, format: Format) -> Result<Output, Failure> {
    if !p.model.is_cartan_hadamard() {
        return Err(Failure::Config(format!(
            "the Hopf-Lax table needs a Cartan-Hadamard model, not {}",
            p.model
        )));
    }
    let table = apps::hj_demo(
        &p.model,
        &p.field,
        &cfg.hj.times,
        &p.grid,
        cfg.hj.step,
        &p.params,
    )?;
    if format == Format::Json {
        return Ok(done(json(&table)));
    }
    let mut out = String::new();
    let mut header = vec!["t".to_string()];
    header.extend(axis_names("x", p.model.coord_len()));
    header.extend(["u".into(), "residual".into()]);
    csv_line(&mut out, header);
    for r in &table.rows {
        let mut cells = vec![num(r.t)];
        cells.extend(r.x.iter().map(|v| num(*v)));
        cells.extend([num(r.u), num(r.residual)]);
        csv_line(&mut out, cells);
    }
    Ok(done(out))
}
