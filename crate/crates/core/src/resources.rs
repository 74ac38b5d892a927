//! VM types, the leasable pool, execution/transfer time and the
//! interruption and performance-variation models.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Geometric, Normal};
use serde::Deserialize;

use crate::error::{invalid, Error, Result};

/// Seconds in one hour; the reference period of hourly probabilities.
pub const HOUR: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pricing {
    /// On-demand, never revoked.
    Reliable,
    /// Spot/preemptible, revocable at any slot.
    Unreliable,
}

impl Pricing {
    pub fn name(self) -> &'static str {
        match self {
            Pricing::Reliable => "reliable",
            Pricing::Unreliable => "unreliable",
        }
    }
}

impl fmt::Display for Pricing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pricing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reliable" | "on-demand" | "ondemand" => Ok(Pricing::Reliable),
            "unreliable" | "spot" | "preemptible" => Ok(Pricing::Unreliable),
            _ => Err(invalid(format!("unknown pricing class `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VmType {
    pub name: String,
    pub vcpus: u32,
    pub speed_mips: f64,
    /// Hourly price of an on-demand lease.
    pub price_reliable: f64,
    /// Hourly price of a revocable lease.
    pub price_unreliable: f64,
    /// Probability of at least one interruption per active hour of a
    /// revocable lease.
    pub p_hourly: f64,
}

impl VmType {
    pub fn new(
        name: impl Into<String>,
        vcpus: u32,
        speed_mips: f64,
        price_reliable: f64,
        price_unreliable: f64,
        p_hourly: f64,
    ) -> Result<Self> {
        let name = name.into();
        if !(speed_mips.is_finite() && speed_mips > 0.0) {
            return Err(Error::Catalog(format!("{name}: speed must be positive")));
        }
        if !(price_unreliable >= 0.0 && price_unreliable < price_reliable) {
            return Err(Error::Catalog(format!(
                "{name}: unreliable price {price_unreliable} must be below reliable price {price_reliable}"
            )));
        }
        if !(0.0..=1.0).contains(&p_hourly) {
            return Err(Error::Catalog(format!(
                "{name}: interruption probability {p_hourly} outside [0, 1]"
            )));
        }
        Ok(Self { name, vcpus, speed_mips, price_reliable, price_unreliable, p_hourly })
    }

    pub fn price(&self, pricing: Pricing) -> f64 {
        match pricing {
            Pricing::Reliable => self.price_reliable,
            Pricing::Unreliable => self.price_unreliable,
        }
    }

    /// Reliable leases are never interrupted.
    pub fn p_hourly_for(&self, pricing: Pricing) -> f64 {
        match pricing {
            Pricing::Reliable => 0.0,
            Pricing::Unreliable => self.p_hourly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VmId(pub u32);

impl VmId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "vm{}", self.0)
    }
}

/// One leasable instance of the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolVm {
    pub id: VmId,
    pub label: String,
    pub speed_mips: f64,
    pub price_hourly: f64,
    pub pricing: Pricing,
    pub p_hourly: f64,
}

impl PoolVm {
    pub fn new(
        id: u32,
        label: impl Into<String>,
        speed_mips: f64,
        price_hourly: f64,
        pricing: Pricing,
        p_hourly: f64,
    ) -> Self {
        Self {
            id: VmId(id),
            label: label.into(),
            speed_mips,
            price_hourly,
            pricing,
            p_hourly: if pricing == Pricing::Reliable { 0.0 } else { p_hourly },
        }
    }
}

#[derive(Debug, Deserialize)]
struct CatalogRow {
    name: String,
    vcpus: u32,
    price_reliable: f64,
    price_unreliable: f64,
    p_hourly: f64,
    #[serde(default)]
    speed_mips: Option<f64>,
}

/// VM types plus the pool built from them: one reliable and one unreliable
/// instance per type. Reliable instances come first, in type order.
#[derive(Debug, Clone, PartialEq)]
pub struct VmCatalog {
    types: Vec<VmType>,
    pool: Vec<PoolVm>,
}

pub const DEFAULT_BASE_MIPS: f64 = 1000.0;

impl VmCatalog {
    pub fn new(types: Vec<VmType>) -> Result<Self> {
        if types.is_empty() {
            return Err(Error::EmptyPool);
        }
        let mut pool = Vec::with_capacity(2 * types.len());
        for pricing in [Pricing::Reliable, Pricing::Unreliable] {
            for t in &types {
                let suffix = match pricing {
                    Pricing::Reliable => "od",
                    Pricing::Unreliable => "spot",
                };
                pool.push(PoolVm::new(
                    pool.len() as u32,
                    format!("{}-{suffix}", t.name),
                    t.speed_mips,
                    t.price(pricing),
                    pricing,
                    t.p_hourly_for(pricing),
                ));
            }
        }
        Ok(Self { types, pool })
    }

    /// The five Amazon EC2 a1 instance types with their on-demand and spot
    /// prices (US East, Linux) and interruption rates.
    pub fn default_catalog() -> Self {
        Self::with_base_mips(DEFAULT_BASE_MIPS)
    }

    /// Default catalog with speeds `vcpus * base_mips`.
    pub fn with_base_mips(base_mips: f64) -> Self {
        const ROWS: [(&str, u32, f64, f64, f64); 5] = [
            ("a1.medium", 2, 0.0255, 0.005, 0.30),
            ("a1.large", 4, 0.051, 0.0098, 0.28),
            ("a1.xlarge", 8, 0.102, 0.0197, 0.25),
            ("a1.2xlarge", 16, 0.204, 0.0394, 0.22),
            ("a1.4xlarge", 32, 0.408, 0.0788, 0.20),
        ];
        let types = ROWS
            .iter()
            .map(|&(name, vcpus, r, u, p)| {
                VmType::new(name, vcpus, f64::from(vcpus) * base_mips, r, u, p)
                    .expect("built-in catalog is valid")
            })
            .collect();
        Self::new(types).expect("built-in catalog is non-empty")
    }

    /// Reads a catalog from CSV with header
    /// `name,vcpus,price_reliable,price_unreliable,p_hourly[,speed_mips]`.
    /// Missing speeds default to `vcpus * base_mips`.
    pub fn from_csv<R: Read>(reader: R, base_mips: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut types = Vec::new();
        for row in rdr.deserialize::<CatalogRow>() {
            let row = row.map_err(|e| Error::Catalog(e.to_string()))?;
            let speed = row.speed_mips.unwrap_or(f64::from(row.vcpus) * base_mips);
            types.push(VmType::new(
                row.name,
                row.vcpus,
                speed,
                row.price_reliable,
                row.price_unreliable,
                row.p_hourly,
            )?);
        }
        Self::new(types)
    }

    pub fn from_csv_path(path: impl AsRef<Path>, base_mips: f64) -> Result<Self> {
        let path = path.as_ref();
        let file =
            std::fs::File::open(path).map_err(|e| Error::Catalog(format!("{}: {e}", path.display())))?;
        Self::from_csv(file, base_mips)
    }

    pub fn types(&self) -> &[VmType] {
        &self.types
    }

    pub fn pool(&self) -> &[PoolVm] {
        &self.pool
    }

    /// Speed of the slowest type; DAX runtimes refer to it.
    pub fn slowest_speed(&self) -> f64 {
        self.types.iter().map(|t| t.speed_mips).fold(f64::INFINITY, f64::min)
    }
}

/// Execution time in seconds of `demand_mi` on a VM of `speed_mips`.
pub fn exec_time(demand_mi: f64, speed_mips: f64) -> Result<f64> {
    if !(speed_mips > 0.0) {
        return Err(invalid("speed must be positive"));
    }
    Ok(demand_mi / speed_mips)
}

/// Time to move `data_mbit` between two tasks. Tasks on the same VM share
/// their data for free.
pub fn transfer_time(data_mbit: f64, same_vm: bool, bandwidth_mbps: f64) -> Result<f64> {
    if !(bandwidth_mbps > 0.0) {
        return Err(invalid("bandwidth must be positive"));
    }
    Ok(if same_vm { 0.0 } else { data_mbit / bandwidth_mbps })
}

/// Per-slot interruption probability `h` such that surviving one hour of
/// slots has probability `1 - p_hourly`.
pub fn per_slot_hazard(p_hourly: f64, slot_seconds: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p_hourly) {
        return Err(invalid(format!("hourly interruption probability {p_hourly} must lie in [0, 1)")));
    }
    if !(slot_seconds > 0.0) {
        return Err(invalid("slot length must be positive"));
    }
    // 1 - (1 - p)^(s / 3600), written to stay accurate for tiny hazards.
    Ok(-f64::exp_m1((slot_seconds / HOUR) * f64::ln_1p(-p_hourly)))
}

/// One Bernoulli draw: is the lease interrupted during this slot?
pub fn interrupted_in_slot<R: Rng + ?Sized>(hazard: f64, rng: &mut R) -> bool {
    rng.gen_bool(hazard.clamp(0.0, 1.0))
}

/// Index (starting at 1) of the first interrupted slot in a run of
/// independent per-slot draws, or `None` when the hazard is zero.
pub fn slots_until_interruption<R: Rng + ?Sized>(hazard: f64, rng: &mut R) -> Option<u64> {
    if hazard <= 0.0 {
        return None;
    }
    if hazard >= 1.0 {
        return Some(1);
    }
    let failures = Geometric::new(hazard).expect("hazard in (0, 1)").sample(rng);
    Some(failures.saturating_add(1))
}

/// Slowdown of a single execution attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variation {
    pub enabled: bool,
    pub mean: f64,
    pub stdev: f64,
    /// Largest allowed slowdown; draws outside `[0, cap]` are resampled.
    pub cap: f64,
}

impl Default for Variation {
    fn default() -> Self {
        Self { enabled: true, mean: 0.095, stdev: 0.05, cap: 0.19 }
    }
}

impl Variation {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stdev >= 0.0 && self.cap >= 0.0) {
            return Err(invalid("variation stdev and cap must be non-negative"));
        }
        if self.stdev == 0.0 && !(0.0..=self.cap).contains(&self.mean) {
            return Err(invalid("deterministic variation mean must lie in [0, cap]"));
        }
        if !(self.mean.is_finite() && self.stdev.is_finite() && self.cap.is_finite()) {
            return Err(invalid("variation parameters must be finite"));
        }
        Ok(())
    }

    /// Multiplier applied to the nominal execution time, `1 + delta` with
    /// `delta ~ Normal(mean, stdev)` truncated to `[0, cap]` by resampling.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if !self.enabled {
            return 1.0;
        }
        let normal = Normal::new(self.mean, self.stdev).expect("validated variation");
        loop {
            let delta = normal.sample(rng);
            if (0.0..=self.cap).contains(&delta) {
                return 1.0 + delta;
            }
        }
    }
}

/// Draws a slowdown factor with the default variation model.
pub fn sample_variation<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Variation::default().sample(rng)
}
