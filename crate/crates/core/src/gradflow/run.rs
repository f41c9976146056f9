use serde::{Deserialize, Serialize};

use super::{compatibility_check, dtmax, energy_with, frozen_step, GridField, DEFAULT_SAFETY};
use crate::error::{QcError, Result};
use crate::par::Execution;

/// Consecutive energy-monitor violations tolerated before a run halts.
pub const MAX_MONITOR_VIOLATIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum FlowMode {
    Explicit,
    /// Windows of `window` steps swept `outer` times. The first sweep freezes
    /// the coefficients at the window start; sweep `k` takes them from sweep
    /// `k − 1` at the same step.
    Picard {
        outer: usize,
        window: usize,
    },
}

impl FlowMode {
    pub fn picard() -> Self {
        FlowMode::Picard { outer: 3, window: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub p: f64,
    pub horizon: f64,
    pub mode: FlowMode,
    /// Safety factor for the adaptive step `c h²/Λ`.
    pub safety: f64,
    /// Fixed base step; overrides the adaptive bound when set.
    pub dt: Option<f64>,
    pub max_steps: usize,
    pub exec: Execution,
}

impl RunOptions {
    pub fn new(p: f64, horizon: f64) -> Self {
        RunOptions {
            p,
            horizon,
            mode: FlowMode::Explicit,
            safety: DEFAULT_SAFETY,
            dt: None,
            max_steps: 1_000_000,
            exec: Execution::default(),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(QcError::InvalidParameter(m.to_string()));
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return bad("p must be a finite number >= 1");
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be finite and non-negative");
        }
        if !(self.safety > 0.0 && self.safety.is_finite()) {
            return bad("safety factor must be positive");
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad("dt must be positive");
            }
        }
        if let FlowMode::Picard { outer, window } = self.mode {
            if outer == 0 || window == 0 {
                return bad("picard outer and window must be at least 1");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum HaltReason {
    Completed,
    MaxSteps,
    DeterminantCollapse { min_det: f64, floor: f64 },
    NonFiniteValue,
    EnergyMonitor { violations: usize },
}

impl HaltReason {
    pub fn is_clean(&self) -> bool {
        matches!(self, HaltReason::Completed)
    }
}

/// Series over accepted steps. Index 0 is the initial state, so `dt_history`
/// is one shorter than the other series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowRunStats {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub min_det: Vec<f64>,
    pub dt_history: Vec<f64>,
    pub halt_reason: HaltReason,
    pub det_floor: f64,
    pub compatibility: f64,
    /// Total rejected steps (each followed by halving dt).
    pub monitor_violations: usize,
}

impl FlowRunStats {
    pub fn steps(&self) -> usize {
        self.dt_history.len()
    }

    pub fn final_energy(&self) -> f64 {
        *self.energy.last().expect("series holds the initial state")
    }

    /// Largest per-step energy increase.
    pub fn max_energy_increase(&self) -> f64 {
        self.energy.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn monotone_within(&self, tol: f64) -> bool {
        self.energy.windows(2).all(|w| w[1] <= w[0] + tol)
    }

    /// Per-step tolerance of the energy monitor.
    pub fn energy_tolerance(&self) -> f64 {
        1e-12 * (1.0 + self.energy[0].abs())
    }

    /// Writes `step,t,energy,min_det,dt`; the initial row has `dt = 0`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "t", "energy", "min_det", "dt"])?;
        for i in 0..self.times.len() {
            let dt = if i == 0 { 0.0 } else { self.dt_history[i - 1] };
            out.write_record([
                i.to_string(),
                format!("{:e}", self.times[i]),
                format!("{:e}", self.energy[i]),
                format!("{:e}", self.min_det[i]),
                format!("{:e}", dt),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FlowRun {
    pub grid: GridField,
    pub stats: FlowRunStats,
}

/// Evolves `grid` up to `opts.horizon`, recording every accepted step.
pub fn run_flow(grid: &GridField, opts: &RunOptions) -> Result<FlowRun> {
    run_flow_with(grid, opts, |_, _| {})
}

/// Like [`run_flow`], calling `observe(step, grid)` after the initial state
/// and after every accepted step.
pub fn run_flow_with<F: FnMut(usize, &GridField)>(
    grid: &GridField,
    opts: &RunOptions,
    mut observe: F,
) -> Result<FlowRun> {
    opts.validate()?;
    let p = opts.p;
    let e0 = energy_with(grid, p, opts.exec)?;
    let tol = 1e-12 * (1.0 + e0.abs());
    let mut stats = FlowRunStats {
        times: vec![0.0],
        energy: vec![e0],
        min_det: vec![grid.min_det()],
        dt_history: Vec::new(),
        halt_reason: HaltReason::Completed,
        det_floor: grid.det_floor(),
        compatibility: compatibility_check(grid, p)?,
        monitor_violations: 0,
    };
    observe(0, grid);

    let mut cur = grid.clone();
    let mut t = 0.0;
    let mut shrink = 1.0;
    let mut consecutive = 0;
    let end = opts.horizon * (1.0 - 1e-12);
    while t < end {
        if stats.steps() >= opts.max_steps {
            stats.halt_reason = HaltReason::MaxSteps;
            break;
        }
        let base = match opts.dt {
            Some(dt) => dt,
            None => dtmax(&cur, p, opts.safety)?,
        };
        let dt = (base * shrink).min(opts.horizon - t);
        let window = match opts.mode {
            FlowMode::Explicit => 1,
            FlowMode::Picard { window, .. } => window.min(opts.max_steps - stats.steps()),
        };
        // Steps within the window: all at `dt` except possibly the last,
        // which lands on the horizon.
        let mut dts = Vec::with_capacity(window);
        let mut tw = t;
        while dts.len() < window && tw < end {
            let d = dt.min(opts.horizon - tw);
            dts.push(d);
            tw += d;
        }
        let states = match advance(&cur, p, &dts, opts) {
            Ok(s) => s,
            Err(QcError::DeterminantCollapse { min_det, floor }) => {
                stats.halt_reason = HaltReason::DeterminantCollapse { min_det, floor };
                break;
            }
            Err(QcError::NonFinite(_)) => {
                stats.halt_reason = HaltReason::NonFiniteValue;
                break;
            }
            Err(e) => return Err(e),
        };
        let energies = states.iter().map(|g| energy_with(g, p, opts.exec)).collect::<Result<Vec<_>>>();
        let energies = match energies {
            Ok(e) if e.iter().all(|v| v.is_finite()) => e,
            Ok(_) | Err(QcError::NonFinite(_)) => {
                stats.halt_reason = HaltReason::NonFiniteValue;
                break;
            }
            Err(QcError::NonPositiveDeterminant(_)) => {
                stats.halt_reason = HaltReason::NonFiniteValue;
                break;
            }
            Err(e) => return Err(e),
        };
        let mut prev = stats.final_energy();
        let monotone = energies.iter().all(|&e| {
            let ok = e <= prev + tol;
            prev = e;
            ok
        });
        if !monotone {
            stats.monitor_violations += 1;
            consecutive += 1;
            if consecutive >= MAX_MONITOR_VIOLATIONS {
                stats.halt_reason = HaltReason::EnergyMonitor { violations: consecutive };
                break;
            }
            shrink *= 0.5;
            continue;
        }
        consecutive = 0;
        for ((g, e), d) in states.iter().zip(energies).zip(&dts) {
            t += d;
            stats.times.push(t);
            stats.energy.push(e);
            stats.min_det.push(g.min_det());
            stats.dt_history.push(*d);
            observe(stats.steps(), g);
        }
        cur = states.into_iter().next_back().expect("window holds at least one step");
    }
    Ok(FlowRun { grid: cur, stats })
}

/// States after each step of `dts`, starting from `start`.
fn advance(start: &GridField, p: f64, dts: &[f64], opts: &RunOptions) -> Result<Vec<GridField>> {
    let exec = opts.exec;
    match opts.mode {
        FlowMode::Explicit => {
            let mut out = Vec::with_capacity(dts.len());
            let mut g = start.clone();
            for &d in dts {
                g = frozen_step(&g, &g, p, d, exec)?;
                out.push(g.clone());
            }
            Ok(out)
        }
        FlowMode::Picard { outer, .. } => {
            // Sweep 0: coefficients frozen at the window start.
            let mut prev: Vec<GridField> = Vec::with_capacity(dts.len());
            let mut g = start.clone();
            for &d in dts {
                g = frozen_step(&g, start, p, d, exec)?;
                prev.push(g.clone());
            }
            for _ in 1..outer {
                let mut sweep = Vec::with_capacity(dts.len());
                let mut g = start.clone();
                for (k, &d) in dts.iter().enumerate() {
                    let coeffs = if k == 0 { start } else { &prev[k - 1] };
                    g = frozen_step(&g, coeffs, p, d, exec)?;
                    sweep.push(g.clone());
                }
                prev = sweep;
            }
            Ok(prev)
        }
    }
}
