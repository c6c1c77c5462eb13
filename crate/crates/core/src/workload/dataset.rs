//! Flavor tables and request traces.
//!
//! A dataset file is line oriented; `#` starts a comment. Header lines:
//!
//! ```text
//! name <dataset-name>
//! resources <name-1> <name-2> ...
//! host <capacity-1> <capacity-2> ... <weight>
//! class <class-name> <requests-per-replica>
//! ```
//!
//! Every other line is a flavor: its demand coordinates followed by a count
//! and, for class-based datasets, a class name. Without `class` headers the
//! count is the flavor's multiplicity per replica. With them, each replica
//! draws the class quota of requests and the count is the flavor's relative
//! weight within its class.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::ConfigError;
use crate::model::{Flavor, FlavorId, Lifetime, Request, RequestId, ResourceVector};

const NFV: &str = include_str!("../../data/nfv.txt");
const GOOGLE: &str = include_str!("../../data/google.txt");
const AMAZON: &str = include_str!("../../data/amazon.txt");

/// Names of the datasets shipped with the crate.
pub const BUILTIN_DATASETS: [&str; 3] = ["nfv", "google", "amazon"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HostShape {
    pub capacity: ResourceVector,
    pub weight: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetFlavor {
    pub flavor: Flavor,
    pub count: u64,
    pub class: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetSpec {
    pub name: String,
    pub resources: Vec<String>,
    pub host_shapes: Vec<HostShape>,
    pub flavors: Vec<DatasetFlavor>,
    /// `(class, requests per replica)`; empty for count-based datasets.
    pub classes: Vec<(String, u64)>,
}

fn parse_err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::DatasetParse {
        line,
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T, ConfigError> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid number {tok:?}")))
}

impl DatasetSpec {
    pub fn builtin(name: &str) -> Result<Self, ConfigError> {
        let text = match name.to_ascii_lowercase().as_str() {
            "nfv" => NFV,
            "google" => GOOGLE,
            "amazon" => AMAZON,
            _ => return Err(ConfigError::UnknownDataset(name.to_string())),
        };
        Self::parse(text)
    }

    /// The raw text of a built-in table.
    pub fn builtin_source(name: &str) -> Option<&'static str> {
        match name.to_ascii_lowercase().as_str() {
            "nfv" => Some(NFV),
            "google" => Some(GOOGLE),
            "amazon" => Some(AMAZON),
            _ => None,
        }
    }

    /// Loads a built-in dataset by name, or a dataset file by path.
    pub fn resolve(name_or_path: &str) -> Result<Self, ConfigError> {
        if Self::builtin_source(name_or_path).is_some() {
            return Self::builtin(name_or_path);
        }
        let path = Path::new(name_or_path);
        if path.is_file() {
            return Self::load(path);
        }
        Err(ConfigError::UnknownDataset(name_or_path.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::invalid("dataset", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut name = None;
        let mut resources: Vec<String> = Vec::new();
        let mut host_shapes = Vec::new();
        let mut classes: Vec<(String, u64)> = Vec::new();
        let mut flavors = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let toks: Vec<&str> = content.split_whitespace().collect();
            match toks[0] {
                "name" => {
                    if toks.len() != 2 {
                        return Err(parse_err(line, "expected `name <name>`"));
                    }
                    name = Some(toks[1].to_string());
                }
                "resources" => {
                    if toks.len() < 2 {
                        return Err(parse_err(line, "expected at least one resource name"));
                    }
                    resources = toks[1..].iter().map(|s| s.to_string()).collect();
                }
                "host" => {
                    let dim = resources.len();
                    if dim == 0 {
                        return Err(parse_err(line, "`resources` must precede `host`"));
                    }
                    if toks.len() != dim + 2 {
                        return Err(parse_err(line, format!("expected {dim} capacities and a weight")));
                    }
                    let values: Vec<f64> = toks[1..=dim]
                        .iter()
                        .map(|t| parse_num(t, line))
                        .collect::<Result<_, _>>()?;
                    if values.iter().any(|&v| v <= 0.0) {
                        return Err(parse_err(line, "host capacities must be positive"));
                    }
                    let capacity = ResourceVector::new(&values).map_err(|e| parse_err(line, e.to_string()))?;
                    let weight: u64 = parse_num(toks[dim + 1], line)?;
                    if weight == 0 {
                        return Err(parse_err(line, "host weight must be positive"));
                    }
                    host_shapes.push(HostShape { capacity, weight });
                }
                "class" => {
                    if toks.len() != 3 {
                        return Err(parse_err(line, "expected `class <name> <requests>`"));
                    }
                    let quota: u64 = parse_num(toks[2], line)?;
                    if classes.iter().any(|(c, _)| c == toks[1]) {
                        return Err(parse_err(line, format!("duplicate class {}", toks[1])));
                    }
                    classes.push((toks[1].to_string(), quota));
                }
                _ => {
                    let dim = resources.len();
                    if dim == 0 {
                        return Err(parse_err(line, "`resources` must precede flavors"));
                    }
                    if toks.len() != dim + 1 && toks.len() != dim + 2 {
                        return Err(parse_err(
                            line,
                            format!("expected {dim} demands, a count and an optional class"),
                        ));
                    }
                    let values: Vec<f64> = toks[..dim]
                        .iter()
                        .map(|t| parse_num(t, line))
                        .collect::<Result<_, _>>()?;
                    let demand = ResourceVector::new(&values).map_err(|e| parse_err(line, e.to_string()))?;
                    let flavor =
                        Flavor::new(FlavorId(flavors.len()), demand).map_err(|e| parse_err(line, e.to_string()))?;
                    let count: u64 = parse_num(toks[dim], line)?;
                    let class = toks.get(dim + 1).map(|s| s.to_string());
                    flavors.push((line, DatasetFlavor { flavor, count, class }));
                }
            }
        }

        let name = name.ok_or_else(|| parse_err(0, "missing `name` header"))?;
        if host_shapes.is_empty() {
            return Err(parse_err(0, "at least one `host` line is required"));
        }
        if flavors.is_empty() {
            return Err(parse_err(0, "no flavors"));
        }
        for (line, f) in &flavors {
            match (&f.class, classes.is_empty()) {
                (Some(c), false) if !classes.iter().any(|(name, _)| name == c) => {
                    return Err(parse_err(*line, format!("undeclared class {c}")));
                }
                (None, false) => return Err(parse_err(*line, "flavor needs a class")),
                (Some(_), true) => return Err(parse_err(*line, "class given but no `class` headers")),
                _ => {}
            }
        }
        for (class, quota) in &classes {
            let weight: u64 = flavors
                .iter()
                .filter(|(_, f)| f.class.as_deref() == Some(class.as_str()))
                .map(|(_, f)| f.count)
                .sum();
            if *quota > 0 && weight == 0 {
                return Err(parse_err(0, format!("class {class} has no weighted flavors")));
            }
        }
        Ok(Self {
            name,
            resources,
            host_shapes,
            flavors: flavors.into_iter().map(|(_, f)| f).collect(),
            classes,
        })
    }

    pub fn dim(&self) -> usize {
        self.resources.len()
    }

    /// Flavors that can actually occur in a trace.
    pub fn flavor_set(&self) -> Vec<Flavor> {
        self.flavors
            .iter()
            .filter(|f| f.count > 0)
            .map(|f| f.flavor.clone())
            .collect()
    }

    pub fn requests_per_replica(&self) -> u64 {
        if self.classes.is_empty() {
            self.flavors.iter().map(|f| f.count).sum()
        } else {
            self.classes.iter().map(|(_, q)| q).sum()
        }
    }

    /// Capacities of `n` hosts, cycling through the shapes in proportion to their weights.
    pub fn host_capacities(&self, n: usize) -> Vec<ResourceVector> {
        let cycle = self.shape_cycle();
        (0..n)
            .map(|i| self.host_shapes[cycle[i % cycle.len()]].capacity.clone())
            .collect()
    }

    /// Smooth weighted round-robin order over the host shapes.
    fn shape_cycle(&self) -> Vec<usize> {
        let total: i64 = self.host_shapes.iter().map(|s| s.weight as i64).sum();
        let mut current = vec![0i64; self.host_shapes.len()];
        let mut order = Vec::with_capacity(total as usize);
        for _ in 0..total {
            for (c, s) in current.iter_mut().zip(&self.host_shapes) {
                *c += s.weight as i64;
            }
            let (best, _) = current
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .expect("at least one shape");
            current[best] -= total;
            order.push(best);
        }
        order
    }

    /// Builds a shuffled trace of `replicas` copies of the dataset.
    ///
    /// Requests get ids in trace order, arrival slot 0 and infinite lifetime;
    /// the simulator stamps the real arrival slot when they arrive.
    pub fn build_trace(&self, replicas: u64, seed: u64) -> Result<Vec<Request>, ConfigError> {
        if replicas == 0 {
            return Err(ConfigError::invalid("replicas", "must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut flavors: Vec<&Flavor> = Vec::with_capacity((self.requests_per_replica() * replicas) as usize);
        if self.classes.is_empty() {
            for f in &self.flavors {
                for _ in 0..f.count * replicas {
                    flavors.push(&f.flavor);
                }
            }
        } else {
            let per_class: Vec<(Vec<&DatasetFlavor>, WeightedIndex<u64>, u64)> = self
                .classes
                .iter()
                .filter(|(_, quota)| *quota > 0)
                .map(|(class, quota)| {
                    let members: Vec<&DatasetFlavor> = self
                        .flavors
                        .iter()
                        .filter(|f| f.class.as_deref() == Some(class.as_str()))
                        .collect();
                    let dist = WeightedIndex::new(members.iter().map(|f| f.count)).expect("validated class weights");
                    (members, dist, *quota)
                })
                .collect();
            for _ in 0..replicas {
                for (members, dist, quota) in &per_class {
                    for _ in 0..*quota {
                        flavors.push(&members[dist.sample(&mut rng)].flavor);
                    }
                }
            }
        }
        flavors.shuffle(&mut rng);
        flavors
            .into_iter()
            .enumerate()
            .map(|(i, f)| Request::new(RequestId(i), f, 0, Lifetime::Infinite).map_err(ConfigError::from))
            .collect()
    }
}
