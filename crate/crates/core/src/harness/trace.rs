//! Per-step simulation traces and their CSV form.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const TRACE_HEADER: &str =
    "k,r,y_d,y,u,e,J,nll_forward,nll_controller,spectral_norm,spectral_radius,stable_flag,method";

/// Marker that starts the last line of a trace from a halted run.
pub const FAILURE_MARKER: &str = "# halted:";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Mdn,
    Baseline,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mdn => "mdn",
            Method::Baseline => "baseline",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mdn" => Ok(Method::Mdn),
            "baseline" => Ok(Method::Baseline),
            _ => Err(Error::Trace(format!("unknown method {s:?}"))),
        }
    }
}

/// Stability monitor outcome at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilitySample {
    pub spectral_norm: f64,
    pub spectral_radius: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub r: f64,
    pub y_d: f64,
    pub y: f64,
    pub u: f64,
    /// `y - y_d`.
    pub e: f64,
    pub cost: f64,
    pub nll_forward: Option<f64>,
    pub nll_controller: Option<f64>,
    /// `None` off the monitoring period; `Some(None)` when the monitor ran
    /// but was indeterminate.
    pub stability: Option<Option<StabilitySample>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub method: Method,
    pub rows: Vec<TraceRow>,
    /// Set when the run halted early.
    pub failure: Option<String>,
}

impl SimTrace {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            rows: Vec::new(),
            failure: None,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Monitored steps with a determinate outcome.
    pub fn stability_samples(&self) -> impl Iterator<Item = (usize, StabilitySample)> + '_ {
        self.rows
            .iter()
            .filter_map(|r| r.stability.flatten().map(|s| (r.k, s)))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 + self.rows.len() * 160);
        s.push_str(TRACE_HEADER);
        s.push('\n');
        for row in &self.rows {
            let (norm, radius, flag) = match row.stability {
                None => (String::new(), String::new(), ""),
                Some(None) => (String::new(), String::new(), "indeterminate"),
                Some(Some(st)) => (
                    num(st.spectral_norm),
                    num(st.spectral_radius),
                    if st.stable { "1" } else { "0" },
                ),
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                row.k,
                num(row.r),
                num(row.y_d),
                num(row.y),
                num(row.u),
                num(row.e),
                num(row.cost),
                opt(row.nll_forward),
                opt(row.nll_controller),
                norm,
                radius,
                flag,
                self.method.name(),
            );
        }
        if let Some(f) = &self.failure {
            let _ = writeln!(s, "{FAILURE_MARKER} {}", f.replace('\n', " "));
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == TRACE_HEADER => {}
            other => return Err(Error::Trace(format!("unexpected header {other:?}"))),
        }
        let mut method = None;
        let mut rows = Vec::new();
        let mut failure = None;
        for (i, line) in lines.enumerate() {
            if let Some(rest) = line.strip_prefix(FAILURE_MARKER) {
                failure = Some(rest.trim().to_string());
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 13 {
                return Err(Error::Trace(format!("line {}: expected 13 fields", i + 2)));
            }
            let m = Method::parse(f[12])?;
            if *method.get_or_insert(m) != m {
                return Err(Error::Trace("mixed methods in one trace".into()));
            }
            let stability = match f[11] {
                "" => None,
                "indeterminate" => Some(None),
                flag => Some(Some(StabilitySample {
                    spectral_norm: real(f[9])?,
                    spectral_radius: real(f[10])?,
                    stable: match flag {
                        "1" => true,
                        "0" => false,
                        _ => return Err(Error::Trace(format!("bad stable flag {flag:?}"))),
                    },
                })),
            };
            rows.push(TraceRow {
                k: f[0]
                    .parse()
                    .map_err(|_| Error::Trace(format!("bad step index {:?}", f[0])))?,
                r: real(f[1])?,
                y_d: real(f[2])?,
                y: real(f[3])?,
                u: real(f[4])?,
                e: real(f[5])?,
                cost: real(f[6])?,
                nll_forward: opt_real(f[7])?,
                nll_controller: opt_real(f[8])?,
                stability,
            });
        }
        Ok(Self {
            method: method.unwrap_or(Method::Mdn),
            rows,
            failure,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse_csv(&std::fs::read_to_string(path)?)
    }
}

/// Shortest representation that parses back to the same bits.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn real(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Trace(format!("bad number {s:?}")))
}

fn opt_real(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        real(s).map(Some)
    }
}

/// Trailing-window statistics of one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub method: Method,
    pub window: usize,
    pub mean_e: f64,
    /// Population standard deviation.
    pub std_e: f64,
    pub mean_cost: f64,
}

pub const SUMMARY_HEADER: &str = "method,window,mean_e,std_e,mean_J";

/// Statistics over the last `min(window, len)` rows.
pub fn summarize(trace: &SimTrace, window: usize) -> Result<Summary> {
    if trace.is_empty() || window == 0 {
        return Err(Error::Trace("cannot summarize an empty window".into()));
    }
    let tail = &trace.rows[trace.rows.len().saturating_sub(window)..];
    let n = tail.len() as f64;
    let mean_e = tail.iter().map(|r| r.e).sum::<f64>() / n;
    let var = tail.iter().map(|r| (r.e - mean_e).powi(2)).sum::<f64>() / n;
    let mean_cost = tail.iter().map(|r| r.cost).sum::<f64>() / n;
    Ok(Summary {
        method: trace.method,
        window: tail.len(),
        mean_e,
        std_e: var.sqrt(),
        mean_cost,
    })
}

pub fn summary_csv(rows: &[Summary]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.method.name(),
            r.window,
            num(r.mean_e),
            num(r.std_e),
            num(r.mean_cost)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(k: usize, e: f64, stability: Option<Option<StabilitySample>>) -> TraceRow {
        TraceRow {
            k,
            r: 0.1 * k as f64,
            y_d: 1.0 / 3.0,
            y: 1.0 / 3.0 + e,
            u: -1e-300,
            e,
            cost: 2.5e17,
            nll_forward: Some(-0.25),
            nll_controller: None,
            stability,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let st = StabilitySample {
            spectral_norm: 0.3,
            spectral_radius: 0.1 + 0.2,
            stable: true,
        };
        let mut t = SimTrace::new(Method::Baseline);
        t.rows = vec![row(0, 0.5, None), row(1, -0.125, Some(None)), row(2, 1e-9, Some(Some(st)))];
        t.failure = Some("non-finite value".into());
        let text = t.to_csv();
        assert!(text.starts_with(TRACE_HEADER));
        let back = SimTrace::parse_csv(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_csv(), text);
    }

    #[test]
    fn summary_uses_trailing_window() {
        let mut t = SimTrace::new(Method::Mdn);
        t.rows = (0..10).map(|k| row(k, if k < 6 { 100.0 } else { (k % 2) as f64 }, None)).collect();
        let s = summarize(&t, 4).unwrap();
        assert_eq!(s.window, 4);
        assert_eq!(s.mean_e, 0.5);
        assert_eq!(s.std_e, 0.5);
        assert_eq!(summarize(&t, 50).unwrap().window, 10);
        assert!(summarize(&SimTrace::new(Method::Mdn), 5).is_err());
    }

    #[test]
    fn malformed_trace_is_rejected() {
        assert!(SimTrace::parse_csv("k,y\n").is_err());
        let bad = format!("{TRACE_HEADER}\n0,1,2\n");
        assert!(SimTrace::parse_csv(&bad).is_err());
    }
}
