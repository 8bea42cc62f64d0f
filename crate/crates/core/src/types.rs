//! Shared domain types: shard levels, strategy codes, and the cluster /
//! model / network descriptions consumed by every other module.
//!
//! All types here are immutable after construction and safe to share
//! across threads.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("strategy code must have exactly 3 characters, got {0}")]
    BadCodeLength(usize),
    #[error("invalid shard level '{ch}' at position {position}")]
    BadShardLevel { ch: char, position: usize },
    #[error("invalid cluster: {0}")]
    BadCluster(String),
    #[error("invalid model: {0}")]
    BadModel(String),
    #[error("invalid network: {0}")]
    BadNetwork(String),
    #[error("unknown method '{0}' (expected one of: ddp, zero-1, zero-2, zero-3, mics, zero++, paro-igg, paro-iig, paro-nig, or a 3-letter strategy code)")]
    UnknownMethod(String),
    #[error("unknown regime '{0}' (expected full, partial-large, partial-small or peft)")]
    UnknownRegime(String),
    #[error("shard size mismatch: rank {rank} has {got} elements, expected {expected}")]
    ShardSizeMismatch {
        rank: usize,
        got: usize,
        expected: usize,
    },
    #[error("simulation requires {0}")]
    BadSimulation(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Residency of one model-state component.
///
/// The total order follows sharding granularity: `NoShard` (every GPU holds
/// a replica) is coarsest, `Global` (each GPU holds 1/N) is finest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ShardLevel {
    /// Replicated on every GPU.
    NoShard,
    /// Sharded within a group, replicated across groups.
    IntraGroup,
    /// Sharded across all GPUs.
    Global,
}

impl ShardLevel {
    pub const ALL: [ShardLevel; 3] = [
        ShardLevel::NoShard,
        ShardLevel::IntraGroup,
        ShardLevel::Global,
    ];

    /// 0 for NoShard, 1 for IntraGroup, 2 for Global.
    pub fn rank(self) -> u8 {
        match self {
            ShardLevel::NoShard => 0,
            ShardLevel::IntraGroup => 1,
            ShardLevel::Global => 2,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            ShardLevel::NoShard => 'N',
            ShardLevel::IntraGroup => 'I',
            ShardLevel::Global => 'G',
        }
    }

    fn from_char(ch: char, position: usize) -> Result<Self> {
        match ch {
            'N' | 'n' => Ok(ShardLevel::NoShard),
            'I' | 'i' => Ok(ShardLevel::IntraGroup),
            'G' | 'g' => Ok(ShardLevel::Global),
            _ => Err(Error::BadShardLevel { ch, position }),
        }
    }

    /// Number of GPUs one shard is divided over: 1, M or N.
    pub fn divisor(self, cluster: &ClusterSpec) -> u64 {
        match self {
            ShardLevel::NoShard => 1,
            ShardLevel::IntraGroup => cluster.group_size(),
            ShardLevel::Global => cluster.n_gpus(),
        }
    }
}

/// A sharding strategy: one shard level per model-state component,
/// written as a three-letter code in P/G/OS order (e.g. `IIG`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Strategy {
    pub p: ShardLevel,
    pub g: ShardLevel,
    pub os: ShardLevel,
}

impl Strategy {
    pub fn new(p: ShardLevel, g: ShardLevel, os: ShardLevel) -> Self {
        Strategy { p, g, os }
    }

    /// Parse a three-letter code over {N, I, G}.
    pub fn parse(code: &str) -> Result<Self> {
        let chars: Vec<char> = code.chars().collect();
        if chars.len() != 3 {
            return Err(Error::BadCodeLength(chars.len()));
        }
        Ok(Strategy {
            p: ShardLevel::from_char(chars[0], 1)?,
            g: ShardLevel::from_char(chars[1], 2)?,
            os: ShardLevel::from_char(chars[2], 3)?,
        })
    }

    /// The canonical three-letter rendering; `parse(code()) == self`.
    pub fn code(&self) -> String {
        [self.p.as_char(), self.g.as_char(), self.os.as_char()]
            .iter()
            .collect()
    }

    /// True when any component is intra-group sharded. Grouped strategies
    /// decompose world-reaching collectives into intra-/inter-group steps;
    /// flat strategies (plain DDP/ZeRO) use whole-world collectives.
    pub fn is_grouped(&self) -> bool {
        self.p == ShardLevel::IntraGroup
            || self.g == ShardLevel::IntraGroup
            || self.os == ShardLevel::IntraGroup
    }

    /// Well-known name for strategies that coincide with published methods.
    pub fn named_alias(&self) -> Option<&'static str> {
        match self.code().as_str() {
            "NNN" => Some("DDP"),
            "NNG" => Some("ZeRO-1"),
            "NGG" => Some("ZeRO-2"),
            "GGG" => Some("ZeRO-3"),
            "III" => Some("MiCS"),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::parse(s)
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.code())
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let code = String::deserialize(d)?;
        Strategy::parse(&code).map_err(serde::de::Error::custom)
    }
}

/// Trainable-parameter regime, one per recommendation-table column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// All parameters trainable.
    Full,
    /// At least one sixth of the parameters trainable.
    PartialLarge,
    /// Fewer than one sixth trainable, but not parameter-efficient tuning.
    PartialSmall,
    /// Parameter-efficient fine-tuning: trainable share is negligible.
    Peft,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime::Full,
        Regime::PartialLarge,
        Regime::PartialSmall,
        Regime::Peft,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Regime::Full => "full",
            Regime::PartialLarge => "partial-large",
            Regime::PartialSmall => "partial-small",
            Regime::Peft => "peft",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "full" => Ok(Regime::Full),
            "partial-large" | "partial_large" | "partial-big" => Ok(Regime::PartialLarge),
            "partial-small" | "partial_small" => Ok(Regime::PartialSmall),
            "peft" => Ok(Regime::Peft),
            other => Err(Error::UnknownRegime(other.to_string())),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A GPU cluster: N devices in g groups of M, plus the gradient-accumulation
/// step count s of the training loop it runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClusterSpec {
    n_gpus: u64,
    group_size: u64,
    n_groups: u64,
    accum_steps: u64,
}

impl ClusterSpec {
    /// Validate and construct. `group_size` must divide `n_gpus` exactly.
    pub fn new(n_gpus: u64, group_size: u64, accum_steps: u64) -> Result<Self> {
        if n_gpus == 0 {
            return Err(Error::BadCluster("n_gpus must be >= 1".into()));
        }
        if group_size == 0 {
            return Err(Error::BadCluster("group_size must be >= 1".into()));
        }
        if accum_steps == 0 {
            return Err(Error::BadCluster("accum_steps must be >= 1".into()));
        }
        if n_gpus % group_size != 0 {
            return Err(Error::BadCluster(format!(
                "group_size must divide n_gpus ({group_size} does not divide {n_gpus})"
            )));
        }
        Ok(ClusterSpec {
            n_gpus,
            group_size,
            n_groups: n_gpus / group_size,
            accum_steps,
        })
    }

    /// N: number of GPUs.
    pub fn n_gpus(&self) -> u64 {
        self.n_gpus
    }

    /// M: GPUs per group.
    pub fn group_size(&self) -> u64 {
        self.group_size
    }

    /// g = N / M: number of groups.
    pub fn n_groups(&self) -> u64 {
        self.n_groups
    }

    /// s: micro-batches per mini-batch.
    pub fn accum_steps(&self) -> u64 {
        self.accum_steps
    }
}

/// Byte widths of a mixed-precision training setup: 2-byte parameter and
/// gradient replicas and 12 bytes of optimizer state per trainable parameter.
pub const DEFAULT_PARAM_BYTES: u64 = 2;
pub const DEFAULT_GRAD_BYTES: u64 = 2;
pub const DEFAULT_OPTIM_FACTOR: f64 = 12.0;

/// Model under training: parameter counts, per-state byte widths and the
/// layer count used for schedule granularity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelSpec {
    total_params: u64,
    trainable_params: u64,
    param_bytes: u64,
    grad_bytes: u64,
    optim_factor: f64,
    layers: u64,
    peft: bool,
}

impl ModelSpec {
    /// Construct with mixed-precision defaults (2/2/12 bytes per parameter).
    pub fn new(total_params: u64, trainable_params: u64, layers: u64) -> Result<Self> {
        if trainable_params > total_params {
            return Err(Error::BadModel(format!(
                "trainable_params ({trainable_params}) exceeds total_params ({total_params})"
            )));
        }
        if layers == 0 {
            return Err(Error::BadModel("layers must be >= 1".into()));
        }
        Ok(ModelSpec {
            total_params,
            trainable_params,
            param_bytes: DEFAULT_PARAM_BYTES,
            grad_bytes: DEFAULT_GRAD_BYTES,
            optim_factor: DEFAULT_OPTIM_FACTOR,
            layers,
            peft: false,
        })
    }

    /// A fully-trainable model.
    pub fn full_training(params: u64, layers: u64) -> Result<Self> {
        ModelSpec::new(params, params, layers)
    }

    pub fn with_param_bytes(mut self, bytes: u64) -> Result<Self> {
        if bytes == 0 {
            return Err(Error::BadModel("param_bytes must be >= 1".into()));
        }
        self.param_bytes = bytes;
        Ok(self)
    }

    pub fn with_grad_bytes(mut self, bytes: u64) -> Result<Self> {
        if bytes == 0 {
            return Err(Error::BadModel("grad_bytes must be >= 1".into()));
        }
        self.grad_bytes = bytes;
        Ok(self)
    }

    pub fn with_optim_factor(mut self, k: f64) -> Result<Self> {
        if k <= 0.0 || k.is_nan() {
            return Err(Error::BadModel("optim_factor must be positive".into()));
        }
        self.optim_factor = k;
        Ok(self)
    }

    /// Mark the model as a parameter-efficient fine-tune. This is an explicit
    /// caller flag: there is no numeric cutoff separating PEFT from other
    /// small-trainable-share setups.
    pub fn with_peft(mut self, peft: bool) -> Self {
        self.peft = peft;
        self
    }

    pub fn total_params(&self) -> u64 {
        self.total_params
    }

    pub fn trainable_params(&self) -> u64 {
        self.trainable_params
    }

    pub fn param_bytes(&self) -> u64 {
        self.param_bytes
    }

    pub fn grad_bytes(&self) -> u64 {
        self.grad_bytes
    }

    /// K: optimizer-state bytes per trainable parameter.
    pub fn optim_factor(&self) -> f64 {
        self.optim_factor
    }

    pub fn layers(&self) -> u64 {
        self.layers
    }

    pub fn is_peft(&self) -> bool {
        self.peft
    }

    /// Classify the trainable share. The one-sixth boundary is the point
    /// where gradient memory stops dominating parameter memory; PEFT is
    /// whatever the caller flagged as such.
    pub fn regime(&self) -> Regime {
        if self.peft {
            Regime::Peft
        } else if self.trainable_params == self.total_params {
            Regime::Full
        } else if 6 * self.trainable_params >= self.total_params {
            Regime::PartialLarge
        } else {
            Regime::PartialSmall
        }
    }
}

/// Two-tier link model: one bandwidth/latency pair for links inside a group
/// and one for links between groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NetworkSpec {
    /// Bytes per second on an intra-group link.
    pub intra_bw: f64,
    /// Bytes per second on an inter-group link.
    pub inter_bw: f64,
    /// Seconds charged per communication round on intra-group links.
    pub intra_latency: f64,
    /// Seconds charged per communication round on inter-group links.
    pub inter_latency: f64,
}

impl NetworkSpec {
    pub fn new(
        intra_bw: f64,
        inter_bw: f64,
        intra_latency: f64,
        inter_latency: f64,
    ) -> Result<Self> {
        if intra_bw <= 0.0 || inter_bw <= 0.0 || intra_bw.is_nan() || inter_bw.is_nan() {
            return Err(Error::BadNetwork(
                "bandwidths must be strictly positive".into(),
            ));
        }
        if intra_latency < 0.0 || inter_latency < 0.0 {
            return Err(Error::BadNetwork("latencies must be non-negative".into()));
        }
        Ok(NetworkSpec {
            intra_bw,
            inter_bw,
            intra_latency,
            inter_latency,
        })
    }
}

impl Default for NetworkSpec {
    /// DGX-like profile: 600 GB/s NVLink-class links inside a node, 100 GB/s
    /// between nodes. Round latencies are synthetic defaults chosen so that
    /// hierarchical topologies beat the flat ring at large scale.
    fn default() -> Self {
        NetworkSpec {
            intra_bw: 600e9,
            inter_bw: 100e9,
            intra_latency: 20e-6,
            inter_latency: 200e-6,
        }
    }
}
