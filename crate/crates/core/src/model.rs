//! Hosts, flavors, requests and the cluster state they live in.
//!
//! Resource amounts are stored as fixed-point integers (one unit is a
//! millionth of a normalized resource) so that placing and completing
//! requests conserves capacity exactly and exact-fit comparisons are
//! deterministic.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::ModelError;

/// Fixed-point units per normalized resource unit.
pub const UNITS_PER_ONE: i64 = 1_000_000;

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub struct $name(pub usize);

        impl $name {
            pub fn index(self) -> usize {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_newtype!(
    /// Dense host identifier `0..n`; the fixed ordering used by first-fit.
    HostId
);
id_newtype!(
    /// Request identifier, unique within a trace.
    RequestId
);
id_newtype!(
    /// Index of a flavor within its flavor set.
    FlavorId
);

/// Non-negative vector of normalized resource amounts.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ResourceVector {
    units: SmallVec<[i64; 4]>,
}

impl ResourceVector {
    /// Builds a vector from normalized amounts, rounding to the nearest unit.
    pub fn new(values: &[f64]) -> Result<Self, ModelError> {
        let mut units = SmallVec::with_capacity(values.len());
        for &v in values {
            if !v.is_finite() || v < 0.0 {
                return Err(ModelError::InvalidAmount(v));
            }
            units.push((v * UNITS_PER_ONE as f64).round() as i64);
        }
        Ok(Self { units })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            units: SmallVec::from_elem(0, dim),
        }
    }

    pub fn from_units(units: &[i64]) -> Result<Self, ModelError> {
        if let Some(&bad) = units.iter().find(|&&u| u < 0) {
            return Err(ModelError::InvalidAmount(bad as f64 / UNITS_PER_ONE as f64));
        }
        Ok(Self {
            units: SmallVec::from_slice(units),
        })
    }

    pub fn dim(&self) -> usize {
        self.units.len()
    }

    pub fn units(&self) -> &[i64] {
        &self.units
    }

    pub fn get(&self, i: usize) -> f64 {
        self.units[i] as f64 / UNITS_PER_ONE as f64
    }

    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i)).collect()
    }

    pub fn has_positive(&self) -> bool {
        self.units.iter().any(|&u| u > 0)
    }

    fn check_dim(&self, other: &Self) -> Result<(), ModelError> {
        if self.dim() != other.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    /// Coordinate-wise `self <= other`.
    pub fn fits_within(&self, other: &Self) -> Result<bool, ModelError> {
        self.check_dim(other)?;
        Ok(self.fits_within_unchecked(other))
    }

    #[inline]
    pub(crate) fn fits_within_unchecked(&self, other: &Self) -> bool {
        self.units.iter().zip(&other.units).all(|(a, b)| a <= b)
    }

    pub(crate) fn sub_assign(&mut self, other: &Self) {
        for (a, b) in self.units.iter_mut().zip(&other.units) {
            *a -= b;
        }
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.units.iter_mut().zip(&other.units) {
            *a += b;
        }
    }
}

impl fmt::Debug for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_vec()).finish()
    }
}

impl Serialize for ResourceVector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_vec().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ResourceVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        ResourceVector::new(&values).map_err(serde::de::Error::custom)
    }
}

/// A request shape from the finite flavor set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flavor {
    pub id: FlavorId,
    pub demand: ResourceVector,
}

impl Flavor {
    pub fn new(id: FlavorId, demand: ResourceVector) -> Result<Self, ModelError> {
        if !demand.has_positive() {
            return Err(ModelError::ZeroDemand);
        }
        Ok(Self { id, demand })
    }
}

/// Checks that flavor ids are unique and dimensions agree.
pub fn validate_flavors(flavors: &[Flavor]) -> Result<(), ModelError> {
    let mut seen = std::collections::HashSet::new();
    for f in flavors {
        if !seen.insert(f.id) {
            return Err(ModelError::DuplicateFlavor(f.id.0));
        }
        if let Some(first) = flavors.first() {
            first.demand.check_dim(&f.demand)?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Host {
    pub id: HostId,
    capacity: ResourceVector,
    available: ResourceVector,
}

impl Host {
    /// An empty host.
    pub fn new(id: HostId, capacity: ResourceVector) -> Self {
        Self {
            id,
            available: capacity.clone(),
            capacity,
        }
    }

    pub fn with_available(id: HostId, capacity: ResourceVector, available: ResourceVector) -> Result<Self, ModelError> {
        capacity.check_dim(&available)?;
        if !available.fits_within_unchecked(&capacity) {
            return Err(ModelError::AvailabilityOutOfRange(id));
        }
        Ok(Self {
            id,
            capacity,
            available,
        })
    }

    pub fn capacity(&self) -> &ResourceVector {
        &self.capacity
    }

    pub fn available(&self) -> &ResourceVector {
        &self.available
    }

    #[inline]
    pub fn fits(&self, demand: &ResourceVector) -> bool {
        demand.fits_within_unchecked(&self.available)
    }

    /// Subtracts a demand the caller has already checked with [`Host::fits`].
    pub(crate) fn consume(&mut self, demand: &ResourceVector) {
        debug_assert!(self.fits(demand));
        self.available.sub_assign(demand);
    }
}

/// Whether `host` can accommodate a request of `flavor` right now.
pub fn is_available(host: &Host, flavor: &Flavor) -> Result<bool, ModelError> {
    flavor.demand.fits_within(&host.available)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lifetime {
    Infinite,
    Slots(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Request {
    pub id: RequestId,
    pub flavor: FlavorId,
    pub demand: ResourceVector,
    pub arrival_slot: u64,
    pub lifetime: Lifetime,
}

impl Request {
    pub fn new(id: RequestId, flavor: &Flavor, arrival_slot: u64, lifetime: Lifetime) -> Result<Self, ModelError> {
        if lifetime == Lifetime::Slots(0) {
            return Err(ModelError::ZeroLifetime);
        }
        Ok(Self {
            id,
            flavor: flavor.id,
            demand: flavor.demand.clone(),
            arrival_slot,
            lifetime,
        })
    }

    pub fn departure_slot(&self) -> Option<u64> {
        match self.lifetime {
            Lifetime::Infinite => None,
            Lifetime::Slots(l) => Some(self.arrival_slot + l),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    pub host: HostId,
    pub demand: ResourceVector,
    pub departure_slot: Option<u64>,
}

/// Outcome of resolving one assignment at a host.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum PlaceOutcome {
    Placed,
    /// The host no longer had room; nothing changed.
    Declined,
}

/// Number of hosts able to take each flavor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AvailabilityCensus {
    pub per_flavor: Vec<(FlavorId, usize)>,
}

impl AvailabilityCensus {
    pub fn get(&self, flavor: FlavorId) -> Option<usize> {
        self.per_flavor.iter().find(|(id, _)| *id == flavor).map(|&(_, c)| c)
    }

    /// The pessimistic `k`: fewest available hosts over all flavors.
    pub fn min(&self) -> Option<usize> {
        self.per_flavor.iter().map(|&(_, c)| c).min()
    }
}

/// Hosts, pending queue and live placements of one simulation run.
#[derive(Clone, Debug)]
pub struct ClusterState {
    hosts: Vec<Host>,
    pending: VecDeque<Request>,
    placements: IndexMap<RequestId, Placement>,
    departures: BTreeMap<u64, Vec<RequestId>>,
    slot: u64,
}

impl ClusterState {
    /// Builds a cluster from host capacities; host ids are assigned `0..n`.
    pub fn new(capacities: impl IntoIterator<Item = ResourceVector>) -> Result<Self, ModelError> {
        let hosts: Vec<Host> = capacities
            .into_iter()
            .enumerate()
            .map(|(i, c)| Host::new(HostId(i), c))
            .collect();
        if let Some(first) = hosts.first() {
            for h in &hosts {
                first.capacity.check_dim(&h.capacity)?;
            }
        }
        Ok(Self {
            hosts,
            pending: VecDeque::new(),
            placements: IndexMap::new(),
            departures: BTreeMap::new(),
            slot: 0,
        })
    }

    pub fn hosts(&self) -> &[Host] {
        &self.hosts
    }

    pub fn host(&self, id: HostId) -> Result<&Host, ModelError> {
        self.hosts.get(id.0).ok_or(ModelError::UnknownHost(id))
    }

    pub fn n_hosts(&self) -> usize {
        self.hosts.len()
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn set_slot(&mut self, slot: u64) {
        self.slot = slot;
    }

    pub fn pending(&self) -> &VecDeque<Request> {
        &self.pending
    }

    pub fn enqueue(&mut self, request: Request) {
        self.pending.push_back(request);
    }

    pub fn dequeue(&mut self) -> Option<Request> {
        self.pending.pop_front()
    }

    pub fn placements(&self) -> &IndexMap<RequestId, Placement> {
        &self.placements
    }

    pub fn n_placed(&self) -> usize {
        self.placements.len()
    }

    /// Resolves `request` at `host` against the live availability.
    pub fn place(&mut self, request: &Request, host: HostId) -> Result<PlaceOutcome, ModelError> {
        let dim = self.hosts.first().map(|h| h.capacity.dim());
        let h = self.hosts.get_mut(host.0).ok_or(ModelError::UnknownHost(host))?;
        if Some(request.demand.dim()) != dim {
            return Err(ModelError::DimensionMismatch {
                expected: dim.unwrap_or(0),
                found: request.demand.dim(),
            });
        }
        if self.placements.contains_key(&request.id) {
            return Err(ModelError::AlreadyPlaced(request.id));
        }
        if !h.fits(&request.demand) {
            return Ok(PlaceOutcome::Declined);
        }
        h.consume(&request.demand);
        let departure_slot = request.departure_slot();
        if let Some(t) = departure_slot {
            self.departures.entry(t).or_default().push(request.id);
        }
        self.placements.insert(
            request.id,
            Placement {
                host,
                demand: request.demand.clone(),
                departure_slot,
            },
        );
        Ok(PlaceOutcome::Placed)
    }

    /// Releases a placed request's resources back to its host.
    pub fn complete(&mut self, id: RequestId) -> Result<HostId, ModelError> {
        let placement = self.placements.swap_remove(&id).ok_or(ModelError::NotPlaced(id))?;
        if let Some(t) = placement.departure_slot {
            if let Some(ids) = self.departures.get_mut(&t) {
                ids.retain(|&r| r != id);
                if ids.is_empty() {
                    self.departures.remove(&t);
                }
            }
        }
        self.hosts[placement.host.0].available.add_assign(&placement.demand);
        Ok(placement.host)
    }

    /// Completes every request whose departure slot is at or before the current slot.
    pub fn complete_due(&mut self) -> Vec<RequestId> {
        let due: Vec<u64> = self.departures.range(..=self.slot).map(|(&t, _)| t).collect();
        let mut done = Vec::new();
        for t in due {
            if let Some(ids) = self.departures.remove(&t) {
                for id in ids {
                    // Entry was removed from `departures` already; `complete` tolerates that.
                    if self.complete(id).is_ok() {
                        done.push(id);
                    }
                }
            }
        }
        done
    }

    /// Completes up to `count` placed requests chosen uniformly without replacement.
    pub fn complete_random<R: Rng + ?Sized>(&mut self, count: usize, rng: &mut R) -> Vec<RequestId> {
        let mut done = Vec::with_capacity(count.min(self.placements.len()));
        for _ in 0..count {
            if self.placements.is_empty() {
                break;
            }
            let idx = rng.random_range(0..self.placements.len());
            let id = *self.placements.get_index(idx).expect("index in range").0;
            self.complete(id).expect("placed request");
            done.push(id);
        }
        done
    }

    pub fn census(&self, flavors: &[Flavor]) -> AvailabilityCensus {
        AvailabilityCensus {
            per_flavor: flavors
                .iter()
                .map(|f| (f.id, self.hosts.iter().filter(|h| h.fits(&f.demand)).count()))
                .collect(),
        }
    }

    /// Total used units per resource coordinate.
    pub fn used_units(&self) -> Vec<i64> {
        let dim = self.hosts.first().map_or(0, |h| h.capacity.dim());
        let mut used = vec![0i64; dim];
        for h in &self.hosts {
            for (j, u) in used.iter_mut().enumerate() {
                *u += h.capacity.units[j] - h.available.units[j];
            }
        }
        used
    }

    /// Utilization of the most utilized resource, cluster-wide.
    pub fn utilization(&self) -> f64 {
        let dim = self.hosts.first().map_or(0, |h| h.capacity.dim());
        let used = self.used_units();
        (0..dim)
            .map(|j| {
                let cap: i64 = self.hosts.iter().map(|h| h.capacity.units[j]).sum();
                if cap == 0 {
                    0.0
                } else {
                    used[j] as f64 / cap as f64
                }
            })
            .fold(0.0, f64::max)
    }

    /// Exact check that used capacity equals the demand of placed requests.
    pub fn conservation_holds(&self) -> bool {
        let mut placed = vec![0i64; self.used_units().len()];
        for p in self.placements.values() {
            for (acc, u) in placed.iter_mut().zip(p.demand.units()) {
                *acc += u;
            }
        }
        placed == self.used_units()
            && self
                .hosts
                .iter()
                .all(|h| h.available.fits_within_unchecked(&h.capacity) && h.available.units.iter().all(|&u| u >= 0))
    }
}
