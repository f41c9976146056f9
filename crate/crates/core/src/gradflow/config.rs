//! JSON run configuration and binary grid snapshots.

use std::io::{Read, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::run::{FlowMode, RunOptions};
use super::{GridField, DEFAULT_SAFETY};
use crate::error::{QcError, Result};
use crate::linalg::Vector;
use crate::maps::{build_map, MapRef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub id: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// CSV time series `step,t,energy,min_det,dt`.
    pub series: Option<PathBuf>,
    /// Directory for binary snapshots `snap_<step>.bin`.
    pub snapshots: Option<PathBuf>,
    /// Snapshot every this many accepted steps (the initial and final
    /// states are always written when `snapshots` is set).
    #[serde(default)]
    pub snapshot_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    #[default]
    Explicit,
    Picard,
}

fn default_safety() -> f64 {
    DEFAULT_SAFETY
}
fn default_outer() -> usize {
    3
}
fn default_window() -> usize {
    10
}
fn default_max_steps() -> usize {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub map: MapSpec,
    pub n: usize,
    pub shape: Vec<usize>,
    pub h: f64,
    /// Lower corner of the grid; the zero vector when absent.
    #[serde(default)]
    pub origin: Option<Vec<f64>>,
    pub p: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default)]
    pub mode: ModeName,
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_outer")]
    pub outer: usize,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub outputs: OutputSpec,
}

impl FlowConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| QcError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn options(&self) -> RunOptions {
        let mut o = RunOptions::new(self.p, self.horizon);
        o.mode = match self.mode {
            ModeName::Explicit => FlowMode::Explicit,
            ModeName::Picard => FlowMode::Picard { outer: self.outer, window: self.window },
        };
        o.safety = self.safety;
        o.dt = self.dt;
        o.max_steps = self.max_steps;
        o
    }

    pub fn origin_vector(&self) -> Result<Vector> {
        match &self.origin {
            None => Ok(Vector::zeros(self.n)),
            Some(o) if o.len() == self.n => Ok(Vector::from_slice(o)),
            Some(o) => Err(QcError::Config(format!("origin has {} entries, expected {}", o.len(), self.n))),
        }
    }

    pub fn build_map(&self) -> Result<MapRef> {
        build_map(&self.map.id, self.n, &self.map.params).map_err(|e| QcError::Config(e.to_string()))
    }

    /// Checks everything that can be checked without running the flow, and
    /// samples the initial grid. Nothing is written to disk.
    pub fn prepare(&self) -> Result<(GridField, RunOptions)> {
        let cfg = |m: String| Err(QcError::Config(m));
        if self.shape.len() != self.n {
            return cfg(format!("shape has {} axes but n = {}", self.shape.len(), self.n));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return cfg("h must be positive".into());
        }
        let opts = self.options();
        opts.validate().map_err(|e| QcError::Config(e.to_string()))?;
        if let Some(dir) = &self.outputs.snapshots {
            if dir.exists() && !dir.is_dir() {
                return cfg(format!("snapshot path {} is not a directory", dir.display()));
            }
        }
        if let Some(series) = &self.outputs.series {
            if series.is_dir() {
                return cfg(format!("series path {} is a directory", series.display()));
            }
        }
        let map = self.build_map()?;
        let grid = GridField::sample(map.as_ref(), &self.shape, self.h, self.origin_vector()?)
            .map_err(|e| QcError::Config(format!("initial grid: {e}")))?;
        super::energy(&grid, self.p).map_err(|e| QcError::Config(format!("initial grid: {e}")))?;
        Ok((grid, opts))
    }
}

/// Little-endian dump: `n` and the shape as u64, `h` as f64, then the node
/// values row major as f64.
pub fn write_snapshot<W: Write>(grid: &GridField, mut w: W) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * (2 + grid.dim() + grid.len() * grid.dim()));
    buf.extend_from_slice(&(grid.dim() as u64).to_le_bytes());
    for &s in grid.shape() {
        buf.extend_from_slice(&(s as u64).to_le_bytes());
    }
    buf.extend_from_slice(&grid.spacing().to_le_bytes());
    for v in grid.values() {
        for &c in v.as_slice() {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a snapshot back as `(shape, h, values)`.
pub fn read_snapshot<R: Read>(mut r: R) -> Result<(Vec<usize>, f64, Vec<Vector>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut words = bytes.chunks_exact(8).map(|c| <[u8; 8]>::try_from(c).expect("chunk of 8"));
    let bad = || QcError::Io("truncated snapshot".into());
    let n = u64::from_le_bytes(words.next().ok_or_else(bad)?) as usize;
    if !(2..=3).contains(&n) || bytes.len() % 8 != 0 {
        return Err(QcError::Io("malformed snapshot header".into()));
    }
    let shape = (0..n)
        .map(|_| words.next().map(|w| u64::from_le_bytes(w) as usize).ok_or_else(bad))
        .collect::<Result<Vec<_>>>()?;
    let h = f64::from_le_bytes(words.next().ok_or_else(bad)?);
    let rest: Vec<f64> = words.map(f64::from_le_bytes).collect();
    let nodes: usize = shape.iter().product();
    if rest.len() != nodes * n {
        return Err(QcError::Io(format!("snapshot body has {} values, expected {}", rest.len(), nodes * n)));
    }
    Ok((shape, h, rest.chunks_exact(n).map(Vector::from_slice).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BUMP: &str = r#"{
        "map": {"id": "bump"},
        "n": 2, "shape": [17, 17], "h": 0.0625,
        "p": 2, "T": 1e-4, "safety": 20
    }"#;

    #[test]
    fn parse_with_defaults() {
        let c = FlowConfig::from_json(BUMP).unwrap();
        assert_eq!(c.mode, ModeName::Explicit);
        assert_eq!(c.outer, 3);
        assert_eq!(c.outputs, OutputSpec::default());
        let (g, o) = c.prepare().unwrap();
        assert_eq!(g.len(), 289);
        assert_eq!(o.safety, 20.0);
        let back = FlowConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn malformed_configs() {
        assert!(matches!(FlowConfig::from_json("{"), Err(QcError::Config(_))));
        assert!(FlowConfig::from_json(&BUMP.replace("\"T\"", "\"horizon\"")).is_err());
        let mut c = FlowConfig::from_json(BUMP).unwrap();
        c.shape = vec![17, 17, 17];
        assert!(matches!(c.prepare(), Err(QcError::Config(_))));
        let mut c = FlowConfig::from_json(BUMP).unwrap();
        c.map.id = "nope".into();
        assert!(matches!(c.prepare(), Err(QcError::Config(_))));
        let mut c = FlowConfig::from_json(BUMP).unwrap();
        c.p = 0.0;
        assert!(matches!(c.prepare(), Err(QcError::Config(_))));
    }

    #[test]
    fn snapshot_roundtrip() {
        let c = FlowConfig::from_json(BUMP).unwrap();
        let (g, _) = c.prepare().unwrap();
        let mut buf = Vec::new();
        write_snapshot(&g, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 * (1 + 2 + 1 + 289 * 2));
        let (shape, h, vals) = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(shape, vec![17, 17]);
        assert_eq!(h, 0.0625);
        assert_eq!(vals, g.values());
        assert!(read_snapshot(&buf[..buf.len() - 8]).is_err());
    }
}
