//! End-to-end cloud queries and their canonical wire format.
//!
//! A [`QueryDescriptor`] captures everything needed to reproduce a cloud,
//! including the layout seed. Its canonical JSON is both the `query` echo in
//! responses and, base64url-encoded, the permalink token. [`CloudEngine`]
//! runs a descriptor against a bound dataset and renders the response JSON:
//!
//! ```text
//! {"version":1,"query":{...},"permalink":"...","entries":[{"t":term,"w":weight,"b":bucket} | {"hint":"glued"} | {"hint":"permutable"}]}
//! ```
//!
//! Weights are written with at most six fractional digits and no trailing zeros.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cube::{Aggregator, CuboidQuery, GroupingMap};
use crate::error::{Error, Result};
use crate::fact_store::BoundDataset;
use crate::iceberg::{build_iceberg, topk_exact, topk_iceberg, IcebergCuboid, IcebergKey};
use crate::layout::{insert_hints, HeuristicSpec, HintThresholds, HintedLayout, LayoutEntry, LayoutRegistry};
use crate::similarity::{similarity_matrix, CellSource, SimilarityRegistry};
use crate::tagcloud::DEFAULT_CLOUD_SIZE;

pub const WIRE_VERSION: u32 = 1;
pub const DEFAULT_LIMIT: usize = 150;
pub const DEFAULT_BUCKETS: u32 = 7;

fn default_k() -> usize {
    DEFAULT_CLOUD_SIZE
}
fn default_limit() -> usize {
    DEFAULT_LIMIT
}
fn default_similarity() -> String {
    "cosine".into()
}
fn default_heuristic() -> String {
    "nn".into()
}
fn default_buckets() -> u32 {
    DEFAULT_BUCKETS
}

/// Complete, reproducible description of a tag-cloud request.
///
/// Field order here is the canonical JSON order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryDescriptor {
    pub dataset: String,
    pub dims: Vec<String>,
    pub agg: Aggregator,
    #[serde(default)]
    pub measure: Option<String>,
    /// Single-value filters on dimensions that are not tag dimensions.
    #[serde(default)]
    pub slices: BTreeMap<String, String>,
    #[serde(default)]
    pub dices: BTreeMap<String, BTreeSet<String>>,
    #[serde(default)]
    pub groupings: Vec<GroupingMap>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_limit")]
    pub limit: usize,
    #[serde(default)]
    pub exact: bool,
    #[serde(default)]
    pub cluster: Vec<String>,
    #[serde(default = "default_similarity")]
    pub similarity: String,
    #[serde(default = "default_heuristic")]
    pub heuristic: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_buckets")]
    pub buckets: u32,
}

impl QueryDescriptor {
    /// A COUNT query over `dims` with every other field at its default.
    pub fn new(dataset: impl Into<String>, dims: Vec<String>) -> Self {
        QueryDescriptor {
            dataset: dataset.into(),
            dims,
            agg: Aggregator::Count,
            measure: None,
            slices: BTreeMap::new(),
            dices: BTreeMap::new(),
            groupings: Vec::new(),
            k: default_k(),
            limit: default_limit(),
            exact: false,
            cluster: Vec::new(),
            similarity: default_similarity(),
            heuristic: default_heuristic(),
            seed: 0,
            buckets: default_buckets(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("descriptor serializes")
    }

    /// URL-safe permalink token.
    pub fn encode(&self) -> String {
        URL_SAFE_NO_PAD.encode(self.to_json())
    }

    pub fn decode(token: &str) -> Result<Self> {
        let bytes = URL_SAFE_NO_PAD
            .decode(token.trim())
            .map_err(|e| Error::Permalink(e.to_string()))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Permalink(e.to_string()))
    }

    /// Dimensions the iceberg must materialize: tag dimensions first, then
    /// the given extra dimensions, then filtered dimensions, without repeats.
    fn iceberg_dims(&self, extra: &[String]) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let filtered = self.slices.keys().chain(self.dices.keys());
        for d in self.dims.iter().chain(extra).chain(filtered) {
            if !out.contains(d) {
                out.push(d.clone());
            }
        }
        out
    }
}

/// Weight as written on the wire: rounded to six fractional digits, integral
/// values without a fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireNumber(pub f64);

impl WireNumber {
    pub fn rounded(self) -> f64 {
        (self.0 * 1e6).round() / 1e6
    }
}

impl Serialize for WireNumber {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let r = self.rounded();
        if r.fract() == 0.0 && r.abs() < 9.0e15 {
            s.serialize_i64(r as i64)
        } else {
            s.serialize_f64(r)
        }
    }
}

impl<'de> Deserialize<'de> for WireNumber {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        f64::deserialize(d).map(WireNumber)
    }
}

/// Same rounding as the wire format, for text output.
pub fn format_number(x: f64) -> String {
    serde_json::to_string(&WireNumber(x)).expect("number serializes")
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WireEntry {
    Tag { t: String, w: WireNumber, b: u32 },
    Hint { hint: String },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireResponse {
    version: u32,
    query: QueryDescriptor,
    permalink: String,
    entries: Vec<WireEntry>,
}

/// Result of running a descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudResponse {
    pub query: QueryDescriptor,
    pub permalink: String,
    pub layout: HintedLayout,
}

impl CloudResponse {
    pub fn to_json(&self) -> String {
        let entries = self
            .layout
            .entries()
            .iter()
            .map(|e| match e {
                LayoutEntry::Tag {
                    term,
                    weight,
                    bucket,
                } => WireEntry::Tag {
                    t: term.clone(),
                    w: WireNumber(*weight),
                    b: *bucket,
                },
                LayoutEntry::Glued => WireEntry::Hint {
                    hint: "glued".into(),
                },
                LayoutEntry::Permutable => WireEntry::Hint {
                    hint: "permutable".into(),
                },
            })
            .collect();
        serde_json::to_string(&WireResponse {
            version: WIRE_VERSION,
            query: self.query.clone(),
            permalink: self.permalink.clone(),
            entries,
        })
        .expect("response serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: WireResponse =
            serde_json::from_str(text).map_err(|e| Error::invalid(e.to_string()))?;
        if wire.version != WIRE_VERSION {
            return Err(Error::invalid(format!("unsupported wire version {}", wire.version)));
        }
        let entries = wire
            .entries
            .into_iter()
            .map(|e| match e {
                WireEntry::Tag { t, w, b } => Ok(LayoutEntry::Tag {
                    term: t,
                    weight: w.0,
                    bucket: b,
                }),
                WireEntry::Hint { hint } => match hint.as_str() {
                    "glued" => Ok(LayoutEntry::Glued),
                    "permutable" => Ok(LayoutEntry::Permutable),
                    other => Err(Error::invalid(format!("unknown hint `{other}`"))),
                },
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CloudResponse {
            query: wire.query,
            permalink: wire.permalink,
            layout: HintedLayout::new(entries)?,
        })
    }
}

type CacheKey = (u64, IcebergKey, usize);
type CacheSlot = Arc<OnceLock<Result<Arc<IcebergCuboid>>>>;

/// Lazily built icebergs keyed by dataset binding, cuboid identity and limit.
///
/// The map lock is held only to find or create a slot; concurrent requests for
/// the same key wait on that slot's build, other keys proceed.
#[derive(Default)]
pub struct IcebergCache {
    slots: Mutex<HashMap<CacheKey, CacheSlot>>,
}

impl IcebergCache {
    pub fn get_or_build(
        &self,
        dataset: &BoundDataset,
        dims: &[String],
        aggregator: Aggregator,
        measure: Option<&str>,
        limit: usize,
    ) -> Result<Arc<IcebergCuboid>> {
        let key = IcebergKey {
            dataset: dataset.id().to_string(),
            dimensions: dims.to_vec(),
            aggregator,
            measure: measure
                .filter(|_| aggregator.needs_measure())
                .map(str::to_string),
        };
        let slot = {
            let mut slots = self.slots.lock().unwrap();
            slots
                .entry((dataset.instance(), key, limit))
                .or_default()
                .clone()
        };
        slot.get_or_init(|| build_iceberg(dataset, dims, aggregator, measure, limit).map(Arc::new))
            .clone()
    }

    /// Drops every iceberg built from the given dataset id.
    pub fn evict_dataset(&self, dataset_id: &str) {
        self.slots
            .lock()
            .unwrap()
            .retain(|(_, key, _), _| key.dataset != dataset_id);
    }

    pub fn len(&self) -> usize {
        self.slots.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Runs descriptors end to end: top-k, similarity, layout, hints.
pub struct CloudEngine {
    similarity: SimilarityRegistry,
    layouts: LayoutRegistry,
    hints: HintThresholds,
    max_k: usize,
    icebergs: IcebergCache,
}

impl Default for CloudEngine {
    fn default() -> Self {
        CloudEngine {
            similarity: SimilarityRegistry::default(),
            layouts: LayoutRegistry::default(),
            hints: HintThresholds::default(),
            max_k: DEFAULT_CLOUD_SIZE,
            icebergs: IcebergCache::default(),
        }
    }
}

impl CloudEngine {
    pub fn new() -> Self {
        CloudEngine::default()
    }

    /// Raises or lowers the largest `k` a descriptor may ask for.
    pub fn with_max_k(mut self, max_k: usize) -> Self {
        self.max_k = max_k;
        self
    }

    pub fn with_hints(mut self, hints: HintThresholds) -> Result<Self> {
        hints.validate()?;
        self.hints = hints;
        Ok(self)
    }

    pub fn similarity_registry(&self) -> &SimilarityRegistry {
        &self.similarity
    }

    pub fn layout_registry(&self) -> &LayoutRegistry {
        &self.layouts
    }

    pub fn icebergs(&self) -> &IcebergCache {
        &self.icebergs
    }

    /// Normalizes names and defaults so that equivalent descriptors encode
    /// to the same permalink. Does not consult any dataset.
    pub fn canonicalize(&self, query: &QueryDescriptor) -> Result<QueryDescriptor> {
        let mut q = query.clone();
        q.similarity = self.similarity.get(&q.similarity)?.name().to_string();
        let spec: HeuristicSpec = q.heuristic.parse()?;
        q.heuristic = self.layouts.build(&spec)?.spec().to_string();
        if !q.agg.needs_measure() {
            q.measure = None;
        }
        q.groupings.sort();
        Ok(q)
    }

    fn validate(&self, dataset: &BoundDataset, q: &QueryDescriptor) -> Result<()> {
        if q.dataset != dataset.id() {
            return Err(Error::invalid(format!(
                "descriptor names dataset `{}`, got `{}`",
                q.dataset,
                dataset.id()
            )));
        }
        if q.dims.is_empty() {
            return Err(Error::invalid("at least one tag dimension is required"));
        }
        if q.k == 0 || q.k > self.max_k {
            return Err(Error::invalid(format!("k must be in 1..={}", self.max_k)));
        }
        if q.limit == 0 {
            return Err(Error::invalid("iceberg limit must be at least 1"));
        }
        if q.buckets == 0 {
            return Err(Error::invalid("bucket count must be at least 1"));
        }
        for d in q.slices.keys() {
            if q.dims.contains(d) {
                return Err(Error::invalid(format!(
                    "sliced dimension `{d}` cannot also be a tag dimension"
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for d in &q.cluster {
            dataset.dimension(d)?;
            if q.dims.contains(d) {
                return Err(Error::invalid(format!(
                    "`{d}` is both a tag dimension and a clustering dimension"
                )));
            }
            if !seen.insert(d) {
                return Err(Error::invalid(format!("clustering dimension `{d}` listed twice")));
            }
        }
        Ok(())
    }

    /// Translates the descriptor's tag dimensions and filters into a cuboid query.
    pub fn cuboid_query(&self, dataset: &BoundDataset, q: &QueryDescriptor) -> Result<CuboidQuery> {
        let mut query = CuboidQuery::new(q.dims.clone(), q.agg, q.measure.clone());
        query.groupings = q.groupings.clone();
        query.validate(dataset)?;
        for (d, v) in &q.slices {
            let base = query.preimage(dataset, d, v)?;
            query.filter.restrict(d, base);
        }
        for (d, values) in &q.dices {
            let base = query.base_values(dataset, d, values)?;
            query.filter.restrict(d, base);
        }
        Ok(query)
    }

    pub fn run(&self, dataset: &BoundDataset, query: &QueryDescriptor) -> Result<CloudResponse> {
        let q = self.canonicalize(query)?;
        self.validate(dataset, &q)?;
        let base = self.cuboid_query(dataset, &q)?;
        let measure = q.measure.as_deref();

        let cloud = if q.exact {
            topk_exact(dataset, &base, q.k)?
        } else {
            let ice = self.icebergs.get_or_build(dataset, &q.iceberg_dims(&[]), q.agg, measure, q.limit)?;
            topk_iceberg(&ice, &base, q.k)?
        };

        let layout = if q.cluster.is_empty() || cloud.is_empty() {
            HintedLayout::plain(cloud.tags(), q.buckets)?
        } else {
            let measure_impl = self.similarity.get(&q.similarity)?;
            let arranger = self.layouts.parse(&q.heuristic)?;
            let matrix = if q.exact {
                similarity_matrix(CellSource::Facts(dataset), &base, &cloud, &q.cluster, measure_impl.as_ref())?
            } else {
                let ice = self.icebergs.get_or_build(
                    dataset,
                    &q.iceberg_dims(&q.cluster),
                    q.agg,
                    measure,
                    q.limit,
                )?;
                similarity_matrix(CellSource::Iceberg(&ice), &base, &cloud, &q.cluster, measure_impl.as_ref())?
            };
            let arrangement = arranger.arrange(&matrix, q.seed)?;
            insert_hints(&arrangement, &matrix, self.hints, q.buckets)?
        };

        Ok(CloudResponse {
            permalink: q.encode(),
            query: q,
            layout,
        })
    }

    /// Runs the descriptor and renders the canonical response JSON.
    pub fn run_json(&self, dataset: &BoundDataset, query: &QueryDescriptor) -> Result<String> {
        Ok(self.run(dataset, query)?.to_json())
    }
}
