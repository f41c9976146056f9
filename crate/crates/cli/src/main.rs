use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use qcflow::dilation::analyze;
use qcflow::flowlines::{trace_flowline, Domain, FlowlineOptions, Termination, DEFAULT_HYSTERESIS, DEFAULT_STEP};
use qcflow::gradflow::{run_flow_with, write_snapshot, FlowConfig, HaltReason};
use qcflow::linalg::{SquareMatrix, Vector};
use qcflow::maps::build_map;
use qcflow::operators::{linfty_factored, lp_nondiv};
use qcflow::verify::{run_suite, VerifyOptions};

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_HALTED: u8 = 3;

#[derive(Parser)]
#[command(name = "qcflow", version, about = "Quasiconformal distortion calculus and gradient flow")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true, env = "QCFLOW_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a verification suite and emit a JSON report.
    Verify {
        /// core, operators, examples, flowlines, traces or flow.
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report path; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Multiplies every case tolerance.
        #[arg(long, default_value_t = 1.0)]
        tol: f64,
        /// Include wall time in the report (makes it non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Evaluate K, S(g), L_p and L_inf of a registry map at one point.
    Ops {
        map: String,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        params: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        point: Vec<f64>,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trace a flow line of a registry map inside a ball.
    Flowline {
        map: String,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        params: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        x0: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_STEP)]
        ds: f64,
        #[arg(long, default_value_t = 1.0)]
        max_len: f64,
        #[arg(long, default_value_t = DEFAULT_HYSTERESIS)]
        hysteresis: f64,
        /// Radius of the ball about the origin; 0 means unbounded.
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        /// CSV path; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the gradient flow described by a JSON config.
    Flow {
        config: PathBuf,
        /// Base directory for relative output paths (default: the config's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// An error that maps to a specific exit code.
struct Exit(u8, anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Exit {
    fn from(e: E) -> Self {
        Exit(EXIT_USAGE, e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads(cli.threads) {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_USAGE);
    }
    let res = match cli.cmd {
        Command::Verify { suite, seed, out, tol, timing } => cmd_verify(&suite, seed, out.as_deref(), tol, timing),
        Command::Ops { map, params, point, p, out } => cmd_ops(&map, &params, &point, p, out.as_deref()),
        Command::Flowline { map, params, x0, ds, max_len, hysteresis, radius, out } => {
            let domain =
                if radius > 0.0 { Domain::Ball { center: Vector::zeros(x0.len()), radius } } else { Domain::Unbounded };
            let opts = FlowlineOptions { ds, max_len, hysteresis, domain };
            cmd_flowline(&map, &params, &x0, &opts, out.as_deref())
        }
        Command::Flow { config, out } => cmd_flow(&config, out.as_deref()),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(Exit(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(t) = threads {
        anyhow::ensure!(t > 0, "--threads must be positive");
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("building thread pool")?;
    }
    Ok(())
}

/// Writes to `path`, or to stdout when it is `None`.
fn emit(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn cmd_verify(suite: &str, seed: u64, out: Option<&Path>, tol: f64, timing: bool) -> Result<u8, Exit> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(anyhow::anyhow!("--tol must be a positive scale factor").into());
    }
    let opts = VerifyOptions { seed, tol_scale: tol, timing, ..VerifyOptions::default() };
    let report = run_suite(suite, &opts)?;
    emit(out, |w| Ok(writeln!(w, "{}", report.to_json())?))?;
    let s = &report.summary;
    eprintln!("{suite}: {}/{} passed", s.passed, s.total);
    Ok(if report.all_passed() { 0 } else { EXIT_FAIL })
}

#[derive(Serialize)]
struct OpsRecord<'a> {
    map: &'a str,
    params: &'a [f64],
    point: &'a [f64],
    p: f64,
    det: f64,
    #[serde(rename = "K")]
    k: f64,
    #[serde(rename = "K2")]
    k2: f64,
    #[serde(rename = "Sg")]
    sg: SquareMatrix,
    #[serde(rename = "Lp")]
    lp: Vector,
    #[serde(rename = "Linf")]
    linf: Vector,
}

fn cmd_ops(id: &str, params: &[f64], point: &[f64], p: f64, out: Option<&Path>) -> Result<u8, Exit> {
    let map = build_map(id, point.len(), params)?;
    let jet = map.jet(&Vector::from_slice(point))?;
    let report = analyze(&jet.jac, qcflow::dilation::DEFAULT_CONFORMAL_TOL)?;
    let rec = OpsRecord {
        map: id,
        params,
        point,
        p,
        det: jet.jac.det(),
        k: report.k,
        k2: report.k * report.k,
        sg: report.sg,
        lp: lp_nondiv(&jet, p)?,
        linf: linfty_factored(&jet)?,
    };
    emit(out, |w| Ok(writeln!(w, "{}", serde_json::to_string(&rec)?)?))?;
    Ok(0)
}

fn cmd_flowline(id: &str, params: &[f64], x0: &[f64], opts: &FlowlineOptions, out: Option<&Path>) -> Result<u8, Exit> {
    let map = build_map(id, x0.len(), params)?;
    let traj = trace_flowline(map.as_ref(), &Vector::from_slice(x0), opts)?;
    emit(out, |w| Ok(traj.write_csv(w)?))?;
    let status = match traj.terminated {
        Termination::Degenerate if traj.samples.len() <= 1 => "degenerate at start",
        Termination::Degenerate => "degenerate",
        Termination::Boundary => "boundary",
        Termination::MaxLength => "max length",
    };
    eprintln!(
        "status: {status}; length {:.6}; samples {}; row switches {}; K drift {:.3e}",
        traj.length(),
        traj.samples.len(),
        traj.switches,
        traj.k_drift()
    );
    Ok(0)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn cmd_flow(config: &Path, out: Option<&Path>) -> Result<u8, Exit> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg = FlowConfig::from_json(&text)?;
    let base = match out {
        Some(o) => o.to_path_buf(),
        None => config.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    cfg.outputs.series = cfg.outputs.series.as_deref().map(|p| resolve(&base, p));
    cfg.outputs.snapshots = cfg.outputs.snapshots.as_deref().map(|p| resolve(&base, p));
    let (grid, opts) = cfg.prepare()?;

    // Config is valid from here on; outputs may be written.
    if let Some(o) = out {
        fs::create_dir_all(o).with_context(|| format!("creating {}", o.display()))?;
    }
    let snap_dir = cfg.outputs.snapshots.clone();
    if let Some(d) = &snap_dir {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    let every = cfg.outputs.snapshot_every;
    let mut last_snap = None;
    let mut snap_err = None;
    let snap = |step: usize, g: &qcflow::gradflow::GridField| -> Result<()> {
        let d = snap_dir.as_ref().expect("checked by caller");
        let path = d.join(format!("snap_{step:06}.bin"));
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        write_snapshot(g, &mut w)?;
        w.flush()?;
        Ok(())
    };
    let run = run_flow_with(&grid, &opts, |step, g| {
        if snap_dir.is_some() && snap_err.is_none() && (step == 0 || (every > 0 && step % every == 0)) {
            match snap(step, g) {
                Ok(()) => last_snap = Some(step),
                Err(e) => snap_err = Some(e),
            }
        }
    });
    let run = run.map_err(|e| Exit(EXIT_USAGE, e.into()))?;
    if let Some(e) = snap_err {
        return Err(e.into());
    }
    let steps = run.stats.steps();
    if snap_dir.is_some() && last_snap != Some(steps) {
        snap(steps, &run.grid)?;
    }
    let series = cfg.outputs.series.as_deref();
    emit(series, |w| Ok(run.stats.write_csv(w)?))?;

    let s = &run.stats;
    let summary = serde_json::json!({
        "steps": steps,
        "t": s.times.last(),
        "energy0": s.energy.first(),
        "energy": s.final_energy(),
        "min_det": s.min_det.iter().copied().fold(f64::INFINITY, f64::min),
        "det_floor": s.det_floor,
        "monitor_violations": s.monitor_violations,
        "halt": s.halt_reason,
    });
    if series.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(match s.halt_reason {
        HaltReason::Completed => 0,
        _ => EXIT_HALTED,
    })
}
