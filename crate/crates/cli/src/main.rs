use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use renormlab_core::decompspace::Decomposition;
use renormlab_core::renorm::{self, DecomposedMap};
use renormlab_core::spectral;
use renormlab_core::{Error, FixedPointReport, SolverConfig};

/// Period-doubling renormalization of unimodal maps in decomposed form.
#[derive(Parser, Debug)]
#[command(name = "renormlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Critical exponent of the folding map.
    #[arg(long, default_value_t = 2.0, global = true)]
    alpha: f64,
    /// Comma-separated exponents; runs one solver per value.
    #[arg(long, value_delimiter = ',', global = true)]
    alpha_sweep: Option<Vec<f64>>,
    /// Truncation depth of the decomposition tree.
    #[arg(long, default_value_t = 8, global = true)]
    depth: usize,
    /// Chebyshev nodes per diffeomorphism.
    #[arg(long, default_value_t = 64, global = true)]
    grid: usize,
    #[arg(long, default_value_t = 1e-8, global = true)]
    tol: f64,
    #[arg(long, default_value_t = 200, global = true)]
    max_iter: usize,
    #[arg(long, default_value_t = 0.5, global = true)]
    damping: f64,
    #[arg(long, default_value_t = 0, global = true)]
    seed: u64,
    /// Output file; sweeps write one file per exponent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Input report (JSON).
    #[arg(long = "in", global = true)]
    input: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Truncation fixed point of the renormalization operator.
    FixedPoint {
        #[command(flatten)]
        common: Common,
    },
    /// Periodic orbit of the renormalization operator.
    Orbit {
        #[command(flatten)]
        common: Common,
        /// Period.
        #[arg(short, long, default_value_t = 2)]
        k: usize,
    },
    /// Renormalization window and a rho(t) sweep.
    Window {
        #[command(flatten)]
        common: Common,
        /// Points in the rho(t) sweep.
        #[arg(long, default_value_t = 201)]
        samples: usize,
    },
    /// Superstable cascade of the folding family.
    Cascade {
        #[command(flatten)]
        common: Common,
        /// Last period exponent.
        #[arg(short, default_value_t = 10)]
        m: usize,
    },
    /// Unstable eigenvalue and scaling ratios of a stored report.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Finite-difference step.
        #[arg(long, default_value_t = spectral::DEFAULT_EPS)]
        eps: f64,
        #[arg(long, default_value_t = 6)]
        levels: usize,
    },
    /// Distance to the pure set along a renormalization orbit.
    OrbitDiagnostics {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 6)]
        steps: usize,
    },
}

enum Failure {
    Usage(String),
    Numerical(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::Parse(_) => Failure::Usage(e.to_string()),
            other => Failure::Numerical(other),
        }
    }
}

impl Failure {
    fn report(&self) -> u8 {
        match self {
            Failure::Usage(msg) => {
                eprintln!("error: {msg}");
                1
            }
            Failure::Numerical(e) => {
                eprintln!("error: {e}");
                if let Error::NonConvergence { trace, .. } = e {
                    eprintln!("residual trace:");
                    for (i, r) in trace.iter().enumerate() {
                        eprintln!("{:>5} {r:.6e}", i + 1);
                    }
                }
                2
            }
        }
    }
}

type Outcome = Result<String, Failure>;

impl Common {
    fn config(&self, alpha: f64) -> Result<SolverConfig, Failure> {
        let config = SolverConfig {
            alpha,
            depth: self.depth,
            grid: self.grid,
            tol: self.tol,
            max_iter: self.max_iter,
            damping: self.damping,
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }

    fn alphas(&self) -> Vec<f64> {
        self.alpha_sweep.clone().unwrap_or_else(|| vec![self.alpha])
    }

    fn load_report(&self) -> Result<FixedPointReport, Failure> {
        let path = self
            .input
            .as_ref()
            .ok_or_else(|| Failure::Usage("--in <report.json> is required".into()))?;
        let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn fixed_point(common: &Common, alpha: f64) -> Outcome {
    let report = renorm::find_fixed_point(&common.config(alpha)?)?;
    Ok(to_json(&report))
}

fn orbit(common: &Common, alpha: f64, k: usize) -> Outcome {
    if k == 0 {
        return Err(Failure::Usage("period k must be at least 1".into()));
    }
    let orbit = renorm::find_periodic_orbit(&common.config(alpha)?, k)?;
    if orbit.coincides_with_fixed_point && k > 1 {
        eprintln!("note: the cycle coincides with a fixed point (diameter {:.3e})", orbit.diameter);
    }
    Ok(to_json(&orbit.cycle))
}

fn window(common: &Common, alpha: f64, samples: usize) -> Outcome {
    let config = common.config(alpha)?;
    let phi = match &common.input {
        Some(_) => common.load_report()?.decomposition,
        None => Decomposition::identity(config.depth, config.grid)?,
    };
    let w = renorm::renormalization_window(&phi, alpha)?;
    if w.multiple {
        eprintln!("warning: renormalizable peak values outside the reported window");
    }
    let f = DecomposedMap::new(phi, w.t_min, alpha)?;
    let mut out = format!("t_min,t_max\n{},{}\n\nt,rho\n", w.t_min, w.t_max);
    let n = samples.max(2);
    for i in 0..n {
        let t = w.t_min + (w.t_max - w.t_min) * i as f64 / (n - 1) as f64;
        let rho = f.with_peak(t)?.peak_value_rho()?;
        writeln!(out, "{t},{rho}").expect("writing to a String");
    }
    Ok(out)
}

fn cascade(alpha: f64, m: usize) -> Outcome {
    Ok(spectral::superstable_cascade(alpha, m)?.to_csv())
}

fn spectrum(common: &Common, eps: f64, levels: usize) -> Outcome {
    let report = common.load_report()?;
    let (residual_geometry, residual_peak) = report.certify()?;
    let eigen = spectral::unstable_eigenvalue(&report, eps)?;
    let ratios = spectral::scaling_ratios(&report, levels)?;
    let cascade = spectral::superstable_cascade(report.alpha, 10)?;
    let out = serde_json::json!({
        "alpha": report.alpha,
        "t_star": report.t_star,
        "residual_geometry": residual_geometry,
        "residual_peak": residual_peak,
        "delta": eigen.value,
        "delta_iterations": eigen.iterations,
        "cascade_delta": cascade.delta(),
        "relative_gap": (eigen.value - cascade.delta()).abs() / cascade.delta(),
        "scaling_ratios": ratios,
        "scaling_limit": ratios.last(),
        "cascade_scaling": cascade.scaling(),
    });
    Ok(to_json(&out))
}

fn orbit_diagnostics(common: &Common, alpha: f64, steps: usize) -> Outcome {
    let config = common.config(alpha)?;
    let phi = Decomposition::random_analytic(config.depth, config.grid, 0.3, 0.35, config.seed)?;
    let t = renorm::solve_peak_value(&phi, alpha)?.t;
    let f = DecomposedMap::new(phi, t, alpha)?;
    let records = renorm::renormalization_orbit_diagnostics(&f, steps, 1e-12)?;
    let mut out = String::from("step,t,distance_to_pure,contraction_factor,ratio\n");
    for (i, r) in records.iter().enumerate() {
        let ratio = if i == 0 {
            String::new()
        } else {
            format!("{}", r.distance_to_pure / records[i - 1].distance_to_pure)
        };
        writeln!(
            out,
            "{},{},{},{},{ratio}",
            r.step, r.t, r.distance_to_pure, r.contraction_factor
        )
        .expect("writing to a String");
    }
    Ok(out)
}

/// `out.json` becomes `out-alpha2.json` for a sweep entry.
fn sweep_path(base: &Path, alpha: f64) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}-alpha{alpha}.{}", ext.to_string_lossy()),
        None => format!("{stem}-alpha{alpha}"),
    };
    base.with_file_name(name)
}

fn thread_cap() -> Result<usize, Failure> {
    match std::env::var("RENORMLAB_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Failure::Usage(format!("RENORMLAB_THREADS must be a positive integer (got {v:?})"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn emit(common: &Common, path: Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match path.or_else(|| common.out.clone()) {
        Some(p) => fs::write(&p, text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display()))),
        None => {
            write_stdout(text);
            Ok(())
        }
    }
}

/// A closed pipe downstream (e.g. `| head`) is not an error worth a panic.
fn write_stdout(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|()| out.flush());
}

/// Runs `job` for every exponent, at most `RENORMLAB_THREADS` at a time.
/// Results are emitted in input order; the worst exit code wins.
fn run_sweep(common: &Common, job: &(dyn Fn(f64) -> Outcome + Sync)) -> u8 {
    let alphas = common.alphas();
    if alphas.len() == 1 {
        return match job(alphas[0]).and_then(|text| emit(common, None, &text)) {
            Ok(()) => 0,
            Err(f) => f.report(),
        };
    }
    let workers = match thread_cap() {
        Ok(n) => n.min(alphas.len()),
        Err(f) => return f.report(),
    };
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Outcome>>> = Mutex::new((0..alphas.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= alphas.len() {
                    break;
                }
                let outcome = job(alphas[i]);
                results.lock().expect("no worker panics while holding the lock")[i] = Some(outcome);
            });
        }
    });
    let mut code = 0;
    for (alpha, outcome) in alphas.iter().zip(results.into_inner().expect("workers finished")) {
        let outcome = outcome.expect("every exponent was processed");
        let path = common.out.as_ref().map(|p| sweep_path(p, *alpha));
        let status = outcome.and_then(|text| {
            if path.is_none() {
                write_stdout(&format!("# alpha = {alpha}\n"));
            }
            emit(common, path, &text)
        });
        if let Err(f) = status {
            eprintln!("alpha = {alpha}:");
            code = code.max(f.report());
        }
    }
    code
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let code = match &cli.command {
        Command::FixedPoint { common } => run_sweep(common, &|a| fixed_point(common, a)),
        Command::Orbit { common, k } => run_sweep(common, &|a| orbit(common, a, *k)),
        Command::Window { common, samples } => run_sweep(common, &|a| window(common, a, *samples)),
        Command::Cascade { common, m } => run_sweep(common, &|a| cascade(a, *m)),
        Command::Spectrum { common, eps, levels } => match spectrum(common, *eps, *levels)
            .and_then(|text| emit(common, None, &text))
        {
            Ok(()) => 0,
            Err(f) => f.report(),
        },
        Command::OrbitDiagnostics { common, steps } => {
            run_sweep(common, &|a| orbit_diagnostics(common, a, *steps))
        }
    };
    ExitCode::from(code)
}
