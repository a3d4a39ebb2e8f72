use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{NetError, SimTime};

/// Calibration points `(count, time)`, strictly increasing in both coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(u64, SimTime)>", into = "Vec<(u64, SimTime)>")]
pub struct CalibrationTable {
    points: Vec<(u64, SimTime)>,
}

impl TryFrom<Vec<(u64, SimTime)>> for CalibrationTable {
    type Error = NetError;

    fn try_from(points: Vec<(u64, SimTime)>) -> Result<Self, NetError> {
        CalibrationTable::new(points)
    }
}

impl From<CalibrationTable> for Vec<(u64, SimTime)> {
    fn from(t: CalibrationTable) -> Self {
        t.points
    }
}

impl CalibrationTable {
    pub fn new(points: Vec<(u64, SimTime)>) -> Result<Self, NetError> {
        if points.is_empty() {
            return Err(NetError::Config("calibration table is empty".into()));
        }
        if points[0].0 == 0 || points[0].1 == SimTime::ZERO {
            return Err(NetError::Config("calibration points must be positive".into()));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 <= w[0].1 {
                return Err(NetError::Config(format!(
                    "calibration table not strictly increasing at {:?} -> {:?}",
                    w[0], w[1]
                )));
            }
        }
        Ok(CalibrationTable { points })
    }

    pub fn points(&self) -> &[(u64, SimTime)] {
        &self.points
    }

    /// Segment bracketing `n`; the last segment is reused past the end.
    fn segment(&self, n: u64) -> ((u64, SimTime), (u64, SimTime)) {
        let p = &self.points;
        let i = p.partition_point(|&(c, _)| c < n).clamp(1, p.len() - 1);
        (p[i - 1], p[i])
    }

    /// Piecewise-linear interpolation. Below the first point the curve runs
    /// through the origin; past the last point it keeps the last slope.
    pub fn linear(&self, n: u64) -> SimTime {
        if n == 0 {
            return SimTime::ZERO;
        }
        let (c0, t0) = self.points[0];
        if n <= c0 || self.points.len() == 1 {
            return SimTime::from_ps(scale(t0.as_ps() as f64, n as f64 / c0 as f64));
        }
        let ((c0, t0), (c1, t1)) = self.segment(n);
        let slope = (t1.as_ps() - t0.as_ps()) as f64 / (c1 - c0) as f64;
        let v = t0.as_ps() as f64 + slope * (n as f64 - c0 as f64);
        SimTime::from_ps(v.round() as u64)
    }

    /// Interpolation that is linear in log-log space (a power law between
    /// neighbouring points). Below the first point the curve is linear
    /// through the origin.
    pub fn log_log(&self, n: u64) -> SimTime {
        if n == 0 {
            return SimTime::ZERO;
        }
        let (c0, t0) = self.points[0];
        if n <= c0 || self.points.len() == 1 {
            return SimTime::from_ps(scale(t0.as_ps() as f64, n as f64 / c0 as f64));
        }
        let ((c0, t0), (c1, t1)) = self.segment(n);
        let (t0, t1) = (t0.as_ps() as f64, t1.as_ps() as f64);
        let exponent = (t1 / t0).ln() / (c1 as f64 / c0 as f64).ln();
        let v = t0 * (n as f64 / c0 as f64).powf(exponent);
        SimTime::from_ps(v.round() as u64)
    }
}

fn scale(t: f64, f: f64) -> u64 {
    (t * f).round() as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComputeKind {
    Sort,
    ScanMin,
    /// Merging k values costs a k-element minimum scan.
    Merge,
}

impl FromStr for ComputeKind {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, NetError> {
        match s {
            "sort" => Ok(ComputeKind::Sort),
            "scan_min" | "scan-min" => Ok(ComputeKind::ScanMin),
            "merge" => Ok(ComputeKind::Merge),
            other => Err(NetError::Config(format!("unknown compute kind `{other}`"))),
        }
    }
}

impl fmt::Display for ComputeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComputeKind::Sort => "sort",
            ComputeKind::ScanMin => "scan_min",
            ComputeKind::Merge => "merge",
        })
    }
}

/// Per-node compute and messaging costs.
///
/// `recv_table` is calibrated for 16-byte messages; bytes beyond that cost
/// `per_word` for every further 8-byte word, on both send and receive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub recv_table: CalibrationTable,
    pub send_per_msg: SimTime,
    pub per_word: SimTime,
    /// Software dispatch of every received message (phase check, reorder buffer).
    pub dispatch_per_msg: SimTime,
    pub sort_table: CalibrationTable,
    pub scan_table: CalibrationTable,
    pub clock_ghz: f64,
}

pub const CALIBRATED_MSG_BYTES: u32 = 16;

impl Default for CostModel {
    fn default() -> Self {
        let cycle = |n: u64| SimTime::from_ps(n * 3125 / 10);
        CostModel {
            recv_table: CalibrationTable::new(vec![
                (1, SimTime::from_ns(8)),
                (64, SimTime::from_ns(400)),
            ])
            .expect("static table"),
            send_per_msg: SimTime::from_ns(5),
            per_word: cycle(2),
            dispatch_per_msg: cycle(4),
            sort_table: CalibrationTable::new(vec![
                (1, cycle(10)),
                (40, SimTime::from_ns(900)),
                (1024, SimTime::from_us(30)),
            ])
            .expect("static table"),
            scan_table: CalibrationTable::new(vec![
                (1, cycle(4)),
                (1024, SimTime::from_ns(640)),
                (8192, SimTime::from_us(18)),
            ])
            .expect("static table"),
            clock_ghz: 3.2,
        }
    }
}

impl CostModel {
    pub fn cycles(&self, n: u64) -> SimTime {
        SimTime::from_ns_f64(n as f64 / self.clock_ghz)
    }

    fn extra_words(payload_bytes: u32) -> u64 {
        payload_bytes.saturating_sub(CALIBRATED_MSG_BYTES).div_ceil(8) as u64
    }

    /// Time to receive `count` back-to-back messages of `payload_bytes` each.
    pub fn recv_cost(&self, count: u64, payload_bytes: u32) -> SimTime {
        self.recv_table.linear(count) + self.per_word * (count * Self::extra_words(payload_bytes))
    }

    /// Cost of the `k`-th message (1-based) of a back-to-back burst.
    pub fn recv_marginal(&self, k: u64, payload_bytes: u32) -> SimTime {
        let k = k.max(1);
        self.recv_table.linear(k) - self.recv_table.linear(k - 1)
            + self.per_word * Self::extra_words(payload_bytes)
    }

    pub fn send_cost(&self, payload_bytes: u32) -> SimTime {
        self.send_per_msg + self.per_word * Self::extra_words(payload_bytes)
    }

    pub fn compute_cost(&self, kind: ComputeKind, n: u64) -> SimTime {
        match kind {
            ComputeKind::Sort => self.sort_table.log_log(n),
            ComputeKind::ScanMin | ComputeKind::Merge => self.scan_table.log_log(n),
        }
    }
}
