//! Multidimensional tag clouds over user-supplied fact tables.
//!
//! The pipeline runs from raw delimited text to an ordered, hinted tag list:
//!
//! 1. [`fact_store`] parses a table and binds dimensions and measures.
//! 2. [`cube`] materializes cuboids and implements slice, dice, roll-up and drill-down.
//! 3. [`iceberg`] keeps the largest cells of a cuboid in memory and answers
//!    approximate top-k queries from them.
//! 4. [`tagcloud`] turns cells into tags and measures cloud quality.
//! 5. [`similarity`] compares tags through their subcuboids.
//! 6. [`layout`] orders tags to keep similar ones close and adds display hints.
//!
//! [`query`] ties the stages together behind a serializable [`QueryDescriptor`]
//! and produces the canonical JSON consumed by clients.

pub mod cube;
pub mod error;
pub mod fact_store;
pub mod iceberg;
pub mod layout;
pub mod query;
pub mod similarity;
pub mod tagcloud;

pub use cube::{Aggregator, Cuboid, CuboidQuery, Filter, GroupingMap};
pub use error::{Error, Result};
pub use fact_store::{bind_schema, parse_table, BoundDataset, RawTable, Schema};
pub use iceberg::{build_iceberg, topk_exact, topk_iceberg, IcebergCuboid};
pub use layout::{Arrangement, HintedLayout, LayoutEntry, LayoutRegistry};
pub use query::{CloudEngine, CloudResponse, QueryDescriptor};
pub use similarity::{SimilarityMatrix, SimilarityRegistry};
pub use tagcloud::{Tag, TagCloud};
