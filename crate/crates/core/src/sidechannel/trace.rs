//! Generative stand-in for per-kernel GPU profiling output.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::OperatorKind;
use crate::rng;
use crate::zoo::madd::node_madd;
use crate::zoo::spec::{ArchitectureSpec, Source};

/// Share of extra kernel launches a verbose runtime adds.
pub const VERBOSE_NOISE_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentProfile {
    pub id: String,
    /// Relative standard deviation of the multiplicative jitter.
    pub metric_jitter: f64,
    pub verbose_runtime: bool,
    pub latency_scale: f64,
}

impl EnvironmentProfile {
    pub const BUILTIN: &'static [&'static str] =
        &["gpu-ideal", "gpu-quiet", "gpu-noisy", "gpu-verbose"];

    pub fn builtin(id: &str) -> Option<Self> {
        let (jitter, verbose) = match id {
            "gpu-ideal" => (0.0, false),
            "gpu-quiet" => (0.02, false),
            "gpu-noisy" => (0.15, false),
            "gpu-verbose" => (0.02, true),
            _ => return None,
        };
        Some(Self {
            id: id.to_string(),
            metric_jitter: jitter,
            verbose_runtime: verbose,
            latency_scale: 1e-3,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.metric_jitter >= 0.0 && self.metric_jitter.is_finite()) {
            return Err(Error::invalid(format!(
                "metric_jitter must be >= 0, got {}",
                self.metric_jitter
            )));
        }
        if !(self.latency_scale > 0.0 && self.latency_scale.is_finite()) {
            return Err(Error::invalid(format!(
                "latency_scale must be > 0, got {}",
                self.latency_scale
            )));
        }
        Ok(())
    }
}

/// True label of a trace event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Op(OperatorKind),
    Noise,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Op(k) => write!(f, "{k}"),
            EventKind::Noise => f.write_str("NOISE"),
        }
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "NOISE" {
            return Ok(EventKind::Noise);
        }
        OperatorKind::from_name(s)
            .map(EventKind::Op)
            .ok_or_else(|| Error::invalid(format!("unknown event kind '{s}'")))
    }
}

impl Serialize for EventKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EventKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One simulated kernel execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTraceEvent {
    #[serde(rename = "lat")]
    pub exec_lat: f64,
    #[serde(rename = "rv")]
    pub read_volume: u64,
    #[serde(rename = "wv")]
    pub write_volume: u64,
    #[serde(rename = "iv")]
    pub input_volume: u64,
    #[serde(rename = "ov")]
    pub output_volume: u64,
    #[serde(rename = "kind")]
    pub true_kind: EventKind,
}

impl KernelTraceEvent {
    pub fn metrics(&self) -> [f64; 5] {
        [
            self.exec_lat,
            self.read_volume as f64,
            self.write_volume as f64,
            self.input_volume as f64,
            self.output_volume as f64,
        ]
    }
}

/// Noise-free metrics of every node in execution order.
pub fn ideal_events(spec: &ArchitectureSpec, latency_scale: f64) -> Result<Vec<KernelTraceEvent>> {
    let topo = spec.validate()?;
    let mut events = Vec::with_capacity(spec.nodes.len());
    for &i in &topo.order {
        let node = &spec.nodes[i];
        let in_shapes: Vec<&[usize]> = topo.sources[i]
            .iter()
            .map(|s| match s {
                Source::Input => spec.input_shape.as_slice(),
                Source::Node(j) => topo.shapes[*j].as_slice(),
            })
            .collect();
        let iv: u64 = in_shapes
            .iter()
            .map(|s| s.iter().product::<usize>() as u64)
            .sum();
        let ov = topo.shapes[i].iter().product::<usize>() as u64;
        let params: u64 = topo.params[i]
            .iter()
            .map(|d| d.shape.iter().product::<usize>() as u64)
            .sum();
        let madd = node_madd(node.kind, &node.params, in_shapes[0], &topo.shapes[i]);
        events.push(KernelTraceEvent {
            exec_lat: latency_scale * (madd + ov) as f64,
            read_volume: 8 * (iv + params),
            write_volume: 8 * ov,
            input_volume: iv,
            output_volume: ov,
            true_kind: EventKind::Op(node.kind),
        });
    }
    Ok(events)
}

fn jitter(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    (sigma * z - 0.5 * sigma * sigma).exp()
}

/// One event per operator in execution order, with multiplicative
/// log-normal jitter; verbose runtimes interleave extra NOISE kernels.
pub fn simulate_kernel_trace(
    spec: &ArchitectureSpec,
    profile: &EnvironmentProfile,
    seed: u64,
) -> Result<Vec<KernelTraceEvent>> {
    profile.validate()?;
    let mut events = ideal_events(spec, profile.latency_scale)?;
    let mut rng = rng::seeded(seed, rng::TRACE);
    let s = profile.metric_jitter;
    for e in &mut events {
        e.exec_lat *= jitter(&mut rng, s);
        for v in [
            &mut e.read_volume,
            &mut e.write_volume,
            &mut e.input_volume,
            &mut e.output_volume,
        ] {
            *v = (*v as f64 * jitter(&mut rng, s)).round() as u64;
        }
    }
    if profile.verbose_runtime {
        let extra = ((events.len() as f64 * VERBOSE_NOISE_FRACTION).round() as usize).max(1);
        for _ in 0..extra {
            let elems: u64 = rng.random_range(16..4096);
            let noise = KernelTraceEvent {
                exec_lat: profile.latency_scale * elems as f64 * rng.random_range(0.5..2.0),
                read_volume: 8 * elems,
                write_volume: 8 * elems,
                input_volume: elems,
                output_volume: elems,
                true_kind: EventKind::Noise,
            };
            let at = rng.random_range(0..=events.len());
            events.insert(at, noise);
        }
    }
    Ok(events)
}

/// Serializes a trace as JSON lines.
pub fn to_jsonl(trace: &[KernelTraceEvent]) -> Result<String> {
    let mut s = String::new();
    for e in trace {
        s.push_str(&serde_json::to_string(e)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn from_jsonl(text: &str) -> Result<Vec<KernelTraceEvent>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
