//! Simulated cache-probing of framework symbols during one inference.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::OperatorKind;
use crate::rng;
use crate::zoo::madd::operator_sequence;
use crate::zoo::spec::ArchitectureSpec;

/// Upper bound of simulated reload times, in cycles.
pub const RELOAD_TIME_SPAN: f64 = 400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Symbol {
    Conv,
    MatMul,
    Softmax,
    Relu,
    MaxPool,
    AveragePool,
    Merge,
    Bias,
}

impl Symbol {
    pub const ALL: [Symbol; 8] = [
        Symbol::Conv,
        Symbol::MatMul,
        Symbol::Softmax,
        Symbol::Relu,
        Symbol::MaxPool,
        Symbol::AveragePool,
        Symbol::Merge,
        Symbol::Bias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Symbol::Conv => "Conv",
            Symbol::MatMul => "MatMul",
            Symbol::Softmax => "Softmax",
            Symbol::Relu => "Relu",
            Symbol::MaxPool => "MaxPool",
            Symbol::AveragePool => "AveragePool",
            Symbol::Merge => "Merge",
            Symbol::Bias => "Bias",
        }
    }

    /// Symbols touched by one operator. GELU, FLATTEN map to none.
    pub fn of(kind: OperatorKind) -> &'static [Symbol] {
        use OperatorKind::*;
        match kind {
            Conv => &[Symbol::Conv, Symbol::Bias],
            Fc => &[Symbol::MatMul, Symbol::Bias],
            Relu => &[Symbol::Relu],
            Maxpool => &[Symbol::MaxPool],
            Avgpool => &[Symbol::AveragePool],
            Add | Concat | Bn => &[Symbol::Merge],
            Softmax => &[Symbol::Softmax],
            Gelu | Flatten => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineProfile {
    pub id: String,
    pub drop_rate: f64,
    pub spurious_rate: f64,
    #[serde(default = "default_threshold")]
    pub reload_threshold: u32,
    #[serde(default = "default_visible")]
    pub matmul_visible: bool,
}

fn default_threshold() -> u32 {
    200
}
fn default_visible() -> bool {
    true
}

impl MachineProfile {
    pub const BUILTIN: &'static [&'static str] =
        &["noiseless", "i7-6850k-like", "i7-4770-like", "i5-3470-like"];

    pub fn builtin(id: &str) -> Option<Self> {
        let (drop_rate, spurious_rate, matmul_visible) = match id {
            "noiseless" => (0.0, 0.0, true),
            "i7-6850k-like" => (0.05, 0.3, true),
            "i7-4770-like" => (0.15, 1.0, true),
            "i5-3470-like" => (0.3, 2.5, false),
            _ => return None,
        };
        Some(Self {
            id: id.to_string(),
            drop_rate,
            spurious_rate,
            reload_threshold: default_threshold(),
            matmul_visible,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return Err(Error::invalid(format!(
                "drop_rate {} outside [0, 1]",
                self.drop_rate
            )));
        }
        if !(self.spurious_rate >= 0.0 && self.spurious_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "spurious_rate must be >= 0, got {}",
                self.spurious_rate
            )));
        }
        if self.reload_threshold == 0 {
            return Err(Error::invalid("reload_threshold must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolHistogram {
    pub counts: BTreeMap<Symbol, u64>,
    pub machine_profile_id: String,
    pub true_architecture_id: String,
    pub true_family: String,
}

impl SymbolHistogram {
    pub fn count(&self, s: Symbol) -> u64 {
        self.counts.get(&s).copied().unwrap_or(0)
    }

    /// Counts in [`Symbol::ALL`] order.
    pub fn vector(&self) -> [f64; 8] {
        Symbol::ALL.map(|s| self.count(s) as f64)
    }
}

/// Symbol hits observed over one inference of `spec`. Each true hit survives
/// with probability `1 - drop_rate`; per symbol, `Poisson(2 * spurious_rate)`
/// candidate hits with reload times uniform on `[0, 400)` are kept when
/// faster than the reload threshold.
pub fn simulate_symbol_stream(
    spec: &ArchitectureSpec,
    profile: &MachineProfile,
    seed: u64,
) -> Result<SymbolHistogram> {
    profile.validate()?;
    let ops = operator_sequence(spec)?;
    let mut rng = rng::seeded(seed, rng::SYMBOLS);
    let mut counts: BTreeMap<Symbol, u64> = Symbol::ALL.iter().map(|&s| (s, 0)).collect();
    for kind in ops {
        for &s in Symbol::of(kind) {
            if profile.drop_rate > 0.0 && rng.random_bool(profile.drop_rate) {
                continue;
            }
            *counts.get_mut(&s).expect("all symbols present") += 1;
        }
    }
    if profile.spurious_rate > 0.0 {
        let candidates =
            Poisson::new(2.0 * profile.spurious_rate).map_err(|e| Error::invalid(e.to_string()))?;
        for s in Symbol::ALL {
            let n = candidates.sample(&mut rng) as u64;
            for _ in 0..n {
                let reload: f64 = rng.random_range(0.0..RELOAD_TIME_SPAN);
                if reload < profile.reload_threshold as f64 {
                    *counts.get_mut(&s).expect("all symbols present") += 1;
                }
            }
        }
    }
    if !profile.matmul_visible {
        counts.insert(Symbol::MatMul, 0);
    }
    Ok(SymbolHistogram {
        counts,
        machine_profile_id: profile.id.clone(),
        true_architecture_id: spec.id.clone(),
        true_family: spec.family.clone(),
    })
}

const CSV_META: [&str; 3] = ["architecture", "family", "profile"];

fn csv_header() -> Vec<&'static str> {
    let mut header: Vec<&str> = Symbol::ALL.iter().map(|s| s.name()).collect();
    header.extend(CSV_META);
    header
}

/// Histogram corpus as CSV: the eight symbol columns, then architecture,
/// family and profile.
pub fn histograms_to_csv(hists: &[SymbolHistogram]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header()).map_err(csv_error)?;
    for h in hists {
        let mut cells: Vec<String> = Symbol::ALL
            .iter()
            .map(|&s| h.count(s).to_string())
            .collect();
        cells.push(h.true_architecture_id.clone());
        cells.push(h.true_family.clone());
        cells.push(h.machine_profile_id.clone());
        w.write_record(&cells).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

fn csv_error(e: csv::Error) -> Error {
    Error::invalid(format!("histogram CSV: {e}"))
}

pub fn histograms_from_csv(text: &str) -> Result<Vec<SymbolHistogram>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_string)
        .collect();
    if header != csv_header() {
        return Err(Error::invalid(format!(
            "unexpected histogram CSV header {header:?}"
        )));
    }
    r.records()
        .enumerate()
        .map(|(n, row)| {
            let row = row.map_err(csv_error)?;
            let mut counts = BTreeMap::new();
            for (i, s) in Symbol::ALL.iter().enumerate() {
                let c = &row[i];
                let v = c.parse::<u64>().map_err(|e| {
                    Error::invalid(format!("row {}: {} count '{c}': {e}", n + 1, s.name()))
                })?;
                counts.insert(*s, v);
            }
            Ok(SymbolHistogram {
                counts,
                true_architecture_id: row[8].to_string(),
                true_family: row[9].to_string(),
                machine_profile_id: row[10].to_string(),
            })
        })
        .collect()
}
