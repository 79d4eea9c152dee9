//! Latency harness and model-efficiency comparison.
//!
//! Detector calls are made one at a time on the calling thread and timed
//! with [`Instant`]. A detector may report its own duration, but the harness
//! always records its own wall-clock measurement.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{parse_prediction_text, ClassList};
use crate::error::{Error, Result};
use crate::metrics::Detection;

/// Samples shorter than this are clamped up to it.
pub const MIN_SAMPLE: Duration = Duration::from_micros(1);

#[derive(Debug, Error)]
#[error("{0}")]
pub struct AdapterError(pub String);

/// What a detector hands back for one input.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdapterReply {
    pub detections: Vec<Detection>,
    /// Prediction file written by an external adapter, if any.
    pub prediction_path: Option<PathBuf>,
    /// Duration as timed by the detector itself. Informational only.
    pub self_reported: Option<Duration>,
}

/// Synchronous single-input detector.
pub trait Detector {
    fn detect(&mut self, input: &str) -> std::result::Result<AdapterReply, AdapterError>;
}

impl<F> Detector for F
where
    F: FnMut(&str) -> std::result::Result<AdapterReply, AdapterError>,
{
    fn detect(&mut self, input: &str) -> std::result::Result<AdapterReply, AdapterError> {
        self(input)
    }
}

/// Stub that sleeps a fixed time per call and detects nothing.
#[derive(Debug, Clone, Copy)]
pub struct FixedLatencyDetector {
    pub latency: Duration,
}

impl FixedLatencyDetector {
    pub fn from_millis(ms: f64) -> Self {
        FixedLatencyDetector {
            latency: Duration::from_secs_f64(ms / 1000.0),
        }
    }
}

impl Detector for FixedLatencyDetector {
    fn detect(&mut self, _input: &str) -> std::result::Result<AdapterReply, AdapterError> {
        if !self.latency.is_zero() {
            thread::sleep(self.latency);
        }
        Ok(AdapterReply::default())
    }
}

/// External adapter process.
///
/// The process is spawned once. For each input the harness writes the input
/// path plus a newline to the child's stdin and reads back one line naming
/// the prediction file it wrote. When a class list is attached, that file is
/// parsed into detections.
pub struct SubprocessDetector {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    classes: Option<ClassList>,
}

impl SubprocessDetector {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::io(program, e))?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        Ok(SubprocessDetector {
            child,
            stdin,
            stdout,
            classes: None,
        })
    }

    pub fn with_classes(mut self, classes: ClassList) -> Self {
        self.classes = Some(classes);
        self
    }
}

impl Detector for SubprocessDetector {
    fn detect(&mut self, input: &str) -> std::result::Result<AdapterReply, AdapterError> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| AdapterError("adapter stdin already closed".into()))?;
        writeln!(stdin, "{input}")
            .and_then(|_| stdin.flush())
            .map_err(|e| AdapterError(format!("writing to adapter: {e}")))?;
        let mut line = String::new();
        let n = self
            .stdout
            .read_line(&mut line)
            .map_err(|e| AdapterError(format!("reading from adapter: {e}")))?;
        if n == 0 {
            return Err(AdapterError(format!("adapter exited before answering `{input}`")));
        }
        let path = PathBuf::from(line.trim_end_matches(['\n', '\r']));
        let detections = match &self.classes {
            Some(classes) => {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| AdapterError(format!("{}: {e}", path.display())))?;
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(input);
                parse_prediction_text(&text, &path, stem, classes).map_err(|e| AdapterError(e.to_string()))?
            }
            None => Vec::new(),
        };
        Ok(AdapterReply {
            detections,
            prediction_path: Some(path),
            self_reported: None,
        })
    }
}

impl Drop for SubprocessDetector {
    fn drop(&mut self) {
        // Closing stdin is the adapter's signal to exit.
        drop(self.stdin.take());
        let _ = self.child.wait();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    pub samples: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub fps: f64,
}

impl LatencyStats {
    /// `None` for an empty sample set. Percentile is nearest-rank.
    pub fn from_samples(samples: &[Duration]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut ms: Vec<f64> = samples
            .iter()
            .map(|d| (*d).max(MIN_SAMPLE).as_secs_f64() * 1000.0)
            .collect();
        ms.sort_by(f64::total_cmp);
        let n = ms.len();
        let mean_ms = ms.iter().sum::<f64>() / n as f64;
        let median_ms = if n % 2 == 1 {
            ms[n / 2]
        } else {
            (ms[n / 2 - 1] + ms[n / 2]) / 2.0
        };
        let rank = (0.95 * n as f64).ceil() as usize;
        let p95_ms = ms[rank.clamp(1, n) - 1];
        Some(LatencyStats {
            samples: n,
            mean_ms,
            median_ms,
            p95_ms,
            min_ms: ms[0],
            max_ms: ms[n - 1],
            fps: 1000.0 / mean_ms,
        })
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid benchmark setup: {0}")]
    Setup(String),
    /// The detector failed mid-run; `partial` holds stats over the timed
    /// calls that completed before the failure.
    #[error("detector failed on call {call} ({phase}): {source}")]
    DetectorFailed {
        call: usize,
        phase: &'static str,
        partial: Option<LatencyStats>,
        #[source]
        source: AdapterError,
    },
}

/// Runs `warmup` untimed calls followed by `iterations` timed calls,
/// cycling through `inputs`.
pub fn benchmark<D: Detector + ?Sized>(
    detector: &mut D,
    inputs: &[String],
    warmup: usize,
    iterations: usize,
) -> std::result::Result<LatencyStats, BenchError> {
    if iterations == 0 {
        return Err(BenchError::Setup("iterations must be at least 1".into()));
    }
    if inputs.is_empty() {
        return Err(BenchError::Setup("no inputs to feed the detector".into()));
    }
    let mut feed = inputs.iter().cycle();
    for call in 0..warmup {
        let input = feed.next().expect("cycle over non-empty inputs");
        detector.detect(input).map_err(|source| BenchError::DetectorFailed {
            call,
            phase: "warmup",
            partial: None,
            source,
        })?;
    }
    let mut samples = Vec::with_capacity(iterations);
    for call in 0..iterations {
        let input = feed.next().expect("cycle over non-empty inputs");
        let start = Instant::now();
        let outcome = detector.detect(input);
        let elapsed = start.elapsed();
        if let Err(source) = outcome {
            return Err(BenchError::DetectorFailed {
                call,
                phase: "timed",
                partial: LatencyStats::from_samples(&samples),
                source,
            });
        }
        samples.push(elapsed);
    }
    Ok(LatencyStats::from_samples(&samples).expect("at least one sample"))
}

/// Declared model complexity plus a latency (measured or declared).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub name: String,
    /// Millions of parameters.
    pub params_m: f64,
    pub gflops: f64,
    pub latency_ms: f64,
}

impl ModelMeta {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("params_m", self.params_m),
            ("gflops", self.gflops),
            ("latency_ms", self.latency_ms),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!(
                    "model `{}`: {field} = {v} must be positive",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyRow {
    pub name: String,
    pub params_m: f64,
    pub gflops: f64,
    pub latency_ms: f64,
    pub fps: f64,
    /// Ratios against the first (baseline) model.
    pub params_ratio: f64,
    pub gflops_ratio: f64,
    /// `(latency - baseline) / baseline * 100`.
    pub latency_increase_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyReport {
    pub baseline: String,
    pub rows: Vec<EfficiencyRow>,
}

pub fn efficiency_report(models: &[ModelMeta]) -> Result<EfficiencyReport> {
    if models.len() < 2 {
        return Err(Error::Usage(format!(
            "efficiency comparison needs at least two models, got {}",
            models.len()
        )));
    }
    for m in models {
        m.validate()?;
    }
    let base = &models[0];
    let rows = models
        .iter()
        .map(|m| EfficiencyRow {
            name: m.name.clone(),
            params_m: m.params_m,
            gflops: m.gflops,
            latency_ms: m.latency_ms,
            fps: 1000.0 / m.latency_ms,
            params_ratio: m.params_m / base.params_m,
            gflops_ratio: m.gflops / base.gflops,
            latency_increase_pct: (m.latency_ms - base.latency_ms) / base.latency_ms * 100.0,
        })
        .collect();
    Ok(EfficiencyReport {
        baseline: base.name.clone(),
        rows,
    })
}
