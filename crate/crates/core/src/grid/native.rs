//! Native JSON case format.
//!
//! One document `{base_mva, buses[], branches[], generators[]}`. Ids in the
//! document are 1-based; they map to dense 0-based indices in [`Network`].

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Branch, Bus, Generator, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseDocument {
    base_mva: f64,
    buses: Vec<BusDoc>,
    branches: Vec<BranchDoc>,
    generators: Vec<GeneratorDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BusDoc {
    id: usize,
    load_p: f64,
    #[serde(default = "default_priority")]
    shed_priority: f64,
    #[serde(default)]
    is_slack: bool,
}

fn default_priority() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BranchDoc {
    id: usize,
    from_bus: usize,
    to_bus: usize,
    reactance: f64,
    rating_long: f64,
    cost_weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GeneratorDoc {
    id: usize,
    bus: usize,
    p_max: f64,
    p_min: f64,
    cost: f64,
}

/// Which text dialect a case file is written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dialect {
    MatpowerM,
    NativeJson,
}

impl Dialect {
    /// Guesses the dialect from a file name.
    pub fn from_path(path: &std::path::Path) -> Dialect {
        match path.extension().and_then(|e| e.to_str()) {
            Some("m") => Dialect::MatpowerM,
            _ => Dialect::NativeJson,
        }
    }
}

impl std::str::FromStr for Dialect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matpower-m" | "matpower" | "m" => Ok(Dialect::MatpowerM),
            "native-json" | "json" => Ok(Dialect::NativeJson),
            other => Err(Error::Config(format!("unknown dialect `{other}`"))),
        }
    }
}

/// Parses case text in the given dialect.
pub fn parse_case(text: &str, dialect: Dialect) -> Result<Network> {
    match dialect {
        Dialect::MatpowerM => super::matpower::parse_matpower(text),
        Dialect::NativeJson => from_json(text),
    }
}

pub fn from_json(text: &str) -> Result<Network> {
    let doc: CaseDocument = serde_json::from_str(text).map_err(|e| Error::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let n_bus = doc.buses.len();
    let internal = |id: usize| id.checked_sub(1);

    let mut buses = Vec::with_capacity(n_bus);
    let mut order: Vec<(usize, Bus)> = Vec::new();
    for b in &doc.buses {
        let id = internal(b.id).ok_or_else(|| Error::InvalidNetwork("bus ids are 1-based".into()))?;
        order.push((id, Bus { id, load_p: b.load_p, shed_priority: b.shed_priority, is_slack: b.is_slack }));
    }
    order.sort_by_key(|(id, _)| *id);
    for w in order.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::DuplicateId { kind: "bus", id: w[0].0 + 1 });
        }
    }
    buses.extend(order.into_iter().map(|(_, b)| b));

    let mut branches = Vec::with_capacity(doc.branches.len());
    for br in &doc.branches {
        let id = internal(br.id).ok_or_else(|| Error::InvalidNetwork("branch ids are 1-based".into()))?;
        let endpoint = |bus: usize| match internal(bus) {
            Some(b) if b < n_bus => Ok(b),
            _ => Err(Error::DanglingEndpoint { branch: br.id, bus }),
        };
        branches.push(Branch {
            id,
            from_bus: endpoint(br.from_bus)?,
            to_bus: endpoint(br.to_bus)?,
            reactance: br.reactance,
            rating_long: br.rating_long,
            cost_weight: br.cost_weight,
        });
        if !(br.reactance > 0.0) {
            return Err(Error::NonpositiveReactance { branch: br.id, reactance: br.reactance });
        }
    }
    branches.sort_by_key(|b| b.id);
    for w in branches.windows(2) {
        if w[0].id == w[1].id {
            return Err(Error::DuplicateId { kind: "branch", id: w[0].id + 1 });
        }
    }

    let mut generators = Vec::with_capacity(doc.generators.len());
    for g in &doc.generators {
        let id = internal(g.id).ok_or_else(|| Error::InvalidNetwork("generator ids are 1-based".into()))?;
        let bus = internal(g.bus)
            .filter(|&b| b < n_bus)
            .ok_or_else(|| Error::InvalidNetwork(format!("generator {} sits on nonexistent bus {}", g.id, g.bus)))?;
        generators.push(Generator { id, bus, p_max: g.p_max, p_min: g.p_min, cost: g.cost });
    }
    generators.sort_by_key(|g| g.id);
    for w in generators.windows(2) {
        if w[0].id == w[1].id {
            return Err(Error::DuplicateId { kind: "generator", id: w[0].id + 1 });
        }
    }

    Network::new(doc.base_mva, buses, branches, generators)
}

fn document(net: &Network) -> CaseDocument {
    CaseDocument {
        base_mva: net.base_mva(),
        buses: net
            .buses()
            .iter()
            .map(|b| BusDoc { id: b.id + 1, load_p: b.load_p, shed_priority: b.shed_priority, is_slack: b.is_slack })
            .collect(),
        branches: net
            .branches()
            .iter()
            .map(|b| BranchDoc {
                id: b.id + 1,
                from_bus: b.from_bus + 1,
                to_bus: b.to_bus + 1,
                reactance: b.reactance,
                rating_long: b.rating_long,
                cost_weight: b.cost_weight,
            })
            .collect(),
        generators: net
            .generators()
            .iter()
            .map(|g| GeneratorDoc { id: g.id + 1, bus: g.bus + 1, p_max: g.p_max, p_min: g.p_min, cost: g.cost })
            .collect(),
    }
}

/// Serializes to the native JSON dialect (pretty-printed).
pub fn to_json(net: &Network) -> String {
    serde_json::to_string_pretty(&document(net)).expect("case document serializes")
}

/// SHA-256 of the compact native JSON encoding, hex encoded.
pub fn case_hash(net: &Network) -> String {
    let compact = serde_json::to_string(&document(net)).expect("case document serializes");
    let digest = Sha256::digest(compact.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
