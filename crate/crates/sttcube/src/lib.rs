//! An embeddable OLAP engine for geo-tagged, timestamped text.
//!
//! Records carrying a location, a term list, and a timestamp are loaded
//! into a cube spanning four hierarchies (calendar date, time of day,
//! space, text). Cuboids — pre-aggregated views at one level combination —
//! are materialized selectively under a storage budget by a benefit-greedy
//! planner, and queries are rewritten onto the cheapest materialized
//! ancestor. Density and volatility measures over keywords are answered
//! exactly, or approximately with a per-query error bound (`epsilon`) and a
//! guaranteed ranking prefix (`delta`) when the source view stores only
//! top-K keyword lists.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`] — schema, records, measure cells, query specs
//! * [`ingest`] — parsing, text normalization, the km grid, reverse geocoding
//! * [`hierarchy`] — taxonomies and the parent-assignment schemes
//! * [`cube`] — fact store, construction, incremental update
//! * [`lattice`] — cuboid coordinates, the view lattice, cost and benefit
//! * [`materialize`] — strategies (base-only, greedy, truncated, full)
//! * [`query`] — rewriting, exact and approximate evaluation
//! * [`olap`] — slice / dice / roll-up / drill-down over views
//! * [`persist`] — the on-disk cube directory
//! * [`synth`] — seeded synthetic datasets
//! * [`bench`] — the measurement harness and CSV reports

pub mod bench;
pub mod cube;
pub mod cuboid;
pub mod error;
pub mod exec;
pub mod hierarchy;
pub mod ingest;
pub mod lattice;
pub mod materialize;
pub mod model;
pub mod olap;
pub mod persist;
pub mod query;
pub mod synth;

pub use error::{Error, Result};
