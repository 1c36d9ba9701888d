//! Core domain types: records, schema, measures, query specifications.
//!
//! An [`SttObject`] is the unit of ingest: a point location, a list of
//! terms, and a timestamp at second resolution. The cube schema declares
//! four hierarchies over those attributes — calendar date, time of day,
//! space, text — each a chain of named levels ending in `All`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One geo-tagged, timestamped text record.
///
/// `terms` is a multiset: a term occurring twice contributes two to its
/// keyword frequency. `ts` is epoch seconds, UTC.
#[derive(Debug, Clone, PartialEq)]
pub struct SttObject {
    pub lat: f64,
    pub lon: f64,
    pub terms: Vec<String>,
    pub ts: i64,
}

impl SttObject {
    pub fn new(lat: f64, lon: f64, terms: Vec<String>, ts: i64) -> Self {
        SttObject { lat, lon, terms, ts }
    }
}

/// Which terms count as keywords for the measures.
///
/// The predicate is total and deterministic; terms that fail it still
/// exist in the record but contribute to no textual dimension member.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub enum KeywordSet {
    #[default]
    All,
    HashtagsOnly,
    Listed(BTreeSet<String>),
}

impl KeywordSet {
    pub fn matches(&self, term: &str) -> bool {
        match self {
            KeywordSet::All => true,
            KeywordSet::HashtagsOnly => term.starts_with('#'),
            KeywordSet::Listed(set) => set.contains(term),
        }
    }
}

/// How a spatial point maps into the spatial hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpatialScheme {
    /// Equal-area km cells, coarsened by an integer factor per level.
    Grid,
    /// Point -> City -> Region -> Country via a loaded taxonomy.
    Semantic,
}

/// How a fact's terms map to parent textual members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TextualScheme {
    /// A fact joins every parent any of its terms maps to (n-n).
    Replication,
    /// A fact joins the single parent with the most supporting terms (n-1).
    Majority,
    /// Like majority, but the winner maximizes a supplied importance score.
    Custom,
}

/// Calendar-date hierarchy levels, base first.
pub const DATE_LEVELS: [&str; 5] = ["day", "month", "quarter", "year", "all"];
/// Time-of-day hierarchy levels, base first.
pub const TOD_LEVELS: [&str; 4] = ["second", "minute", "hour", "all"];
/// Semantic spatial hierarchy levels, base first.
pub const SEMANTIC_LEVELS: [&str; 5] = ["location", "city", "region", "country", "all"];
/// Textual hierarchy levels, base first.
pub const TEXT_LEVELS: [&str; 5] = ["term", "theme", "topic", "concept", "all"];

/// Index of a named level in its hierarchy, or None.
pub fn level_index(levels: &[&str], name: &str) -> Option<u8> {
    levels.iter().position(|l| l.eq_ignore_ascii_case(name)).map(|i| i as u8)
}

/// Cardinality of the step from a level to the one above it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cardinality {
    /// Every child maps to exactly one parent.
    Functional,
    /// A child may map to several parents (replication).
    Replicating,
}

/// One named level inside a hierarchy declaration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub name: String,
    /// Cardinality of the step leading up from this level; `None` on `all`.
    pub step_up: Option<Cardinality>,
}

/// A chain of levels over one dimension, ending in `all`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hierarchy {
    pub dimension: String,
    pub name: String,
    pub levels: Vec<Level>,
}

impl Hierarchy {
    fn chain(dimension: &str, name: &str, levels: &[&str], step: Cardinality) -> Self {
        let levels = levels
            .iter()
            .enumerate()
            .map(|(i, l)| Level {
                name: (*l).to_string(),
                step_up: if i + 1 == levels.len() { None } else { Some(step) },
            })
            .collect();
        Hierarchy { dimension: dimension.to_string(), name: name.to_string(), levels }
    }
}

/// Size and coarsening of the km grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Side length of a level-0 cell in km.
    pub base_cell_km: f64,
    /// Integer coarsening factor between consecutive grid levels.
    pub factor: u32,
    /// Number of grid levels below `all`; at least 2.
    pub level_count: u8,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { base_cell_km: 1.0, factor: 3, level_count: 4 }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_cell_km > 0.0) {
            return Err(Error::Config("grid base cell size must be positive".into()));
        }
        if self.factor < 2 {
            return Err(Error::Config("grid coarsening factor must be at least 2".into()));
        }
        if self.level_count < 2 {
            return Err(Error::Config("grid needs at least 2 levels".into()));
        }
        Ok(())
    }

    /// Cell side length at a grid level, km.
    pub fn cell_km(&self, level: u8) -> f64 {
        self.base_cell_km * (self.factor as f64).powi(level as i32)
    }

    /// Cell area at a grid level, km^2.
    pub fn cell_area(&self, level: u8) -> f64 {
        let side = self.cell_km(level);
        side * side
    }
}

/// Declares the hierarchies a cube is built over.
///
/// The hierarchy order fixes the coordinate order used by the lattice:
/// date, time of day, space, text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeSchema {
    pub hierarchies: Vec<Hierarchy>,
    pub spatial_scheme: SpatialScheme,
    pub textual_scheme: TextualScheme,
    pub grid: GridConfig,
    pub keywords: KeywordSet,
}

impl CubeSchema {
    /// The stock four-hierarchy schema for a scheme pair.
    pub fn standard(
        spatial_scheme: SpatialScheme,
        textual_scheme: TextualScheme,
        grid: GridConfig,
    ) -> Self {
        let spatial = match spatial_scheme {
            SpatialScheme::Semantic => {
                Hierarchy::chain("space", "semantic", &SEMANTIC_LEVELS, Cardinality::Functional)
            }
            SpatialScheme::Grid => {
                let mut names: Vec<String> =
                    (0..grid.level_count).map(|l| format!("g{l}")).collect();
                names.push("all".to_string());
                let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
                Hierarchy::chain("space", "grid", &refs, Cardinality::Functional)
            }
        };
        let text_step = match textual_scheme {
            TextualScheme::Replication => Cardinality::Replicating,
            _ => Cardinality::Functional,
        };
        let mut text = Hierarchy::chain("text", "taxonomy", &TEXT_LEVELS, text_step);
        // The base step fact -> term is n-n under every scheme; the tag on
        // `term` describes term -> theme.
        text.levels[0].step_up = Some(match textual_scheme {
            TextualScheme::Replication => Cardinality::Replicating,
            _ => Cardinality::Functional,
        });
        CubeSchema {
            hierarchies: vec![
                Hierarchy::chain("time", "date", &DATE_LEVELS, Cardinality::Functional),
                Hierarchy::chain("time", "timeofday", &TOD_LEVELS, Cardinality::Functional),
                spatial,
                text,
            ],
            spatial_scheme,
            textual_scheme,
            grid,
            keywords: KeywordSet::All,
        }
    }

    /// Per-hierarchy level counts, in coordinate order.
    pub fn level_counts(&self) -> Vec<u8> {
        self.hierarchies.iter().map(|h| h.levels.len() as u8).collect()
    }

    pub fn spatial_level_count(&self) -> u8 {
        self.hierarchies[2].levels.len() as u8
    }

    /// Index of the `all` level in the spatial hierarchy.
    pub fn spatial_all(&self) -> u8 {
        self.spatial_level_count() - 1
    }

    /// Resolve a spatial level name (`city`, `g1`, ...) to its index.
    pub fn spatial_level_by_name(&self, name: &str) -> Option<u8> {
        self.hierarchies[2]
            .levels
            .iter()
            .position(|l| l.name.eq_ignore_ascii_case(name))
            .map(|i| i as u8)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hierarchies.is_empty() {
            return Err(Error::Schema("schema declares no hierarchies".into()));
        }
        for h in &self.hierarchies {
            if h.levels.len() < 2 {
                return Err(Error::Schema(format!(
                    "hierarchy {} needs a base level and all",
                    h.name
                )));
            }
            let last = h.levels.last().unwrap();
            if last.name != "all" {
                return Err(Error::Schema(format!(
                    "hierarchy {} must terminate in all",
                    h.name
                )));
            }
            if last.step_up.is_some() {
                return Err(Error::Schema(format!("hierarchy {} has a step above all", h.name)));
            }
            let mut seen = BTreeSet::new();
            for l in &h.levels {
                if !seen.insert(l.name.as_str()) {
                    return Err(Error::Schema(format!(
                        "duplicate level {} in hierarchy {}",
                        l.name, h.name
                    )));
                }
                if l.step_up.is_none() && l.name != "all" {
                    return Err(Error::Schema(format!(
                        "level {} in {} is missing its step",
                        l.name, h.name
                    )));
                }
            }
        }
        for dim in ["time", "space", "text"] {
            if !self.hierarchies.iter().any(|h| h.dimension == dim) {
                return Err(Error::Schema(format!("no hierarchy for dimension {dim}")));
            }
        }
        self.grid.validate()
    }
}

impl Default for CubeSchema {
    fn default() -> Self {
        CubeSchema::standard(
            SpatialScheme::Grid,
            TextualScheme::Replication,
            GridConfig::default(),
        )
    }
}

/// Aggregated measures for one cell.
///
/// A keyword's frequency counts the facts linked to it, so repeating a
/// word inside one record contributes once; `fact_count` counts distinct
/// facts in the cell's spatio-temporal group.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasureCell {
    pub fact_count: u64,
    pub keyword_freqs: Vec<(String, u64)>,
    pub surface_area: f64,
}

/// The measures a query can request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasureKind {
    FactCount,
    KeywordFrequency,
    SurfaceArea,
    KeywordDensity,
    KeywordVolatility,
    TopKDense,
    TopKVolatile,
    TopKFrequent,
}

/// Aggregation class of a measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureClass {
    /// Combines by summing partial aggregates.
    Distributive,
    /// Derivable from a bounded set of distributive measures.
    Algebraic,
    /// Needs the full sub-aggregate distribution (rankings).
    Holistic,
}

impl MeasureKind {
    pub fn class(self) -> MeasureClass {
        match self {
            MeasureKind::FactCount | MeasureKind::KeywordFrequency | MeasureKind::SurfaceArea => {
                MeasureClass::Distributive
            }
            MeasureKind::KeywordDensity | MeasureKind::KeywordVolatility => MeasureClass::Algebraic,
            MeasureKind::TopKDense | MeasureKind::TopKVolatile | MeasureKind::TopKFrequent => {
                MeasureClass::Holistic
            }
        }
    }

    pub fn is_topk(self) -> bool {
        matches!(
            self,
            MeasureKind::TopKDense | MeasureKind::TopKVolatile | MeasureKind::TopKFrequent
        )
    }

    /// Volatility partitions the query range into intervals; the others
    /// aggregate over the whole range.
    pub fn uses_intervals(self) -> bool {
        matches!(self, MeasureKind::KeywordVolatility | MeasureKind::TopKVolatile)
    }

    /// Density-family measures divide frequencies by a surface area.
    pub fn needs_area(self) -> bool {
        matches!(
            self,
            MeasureKind::KeywordDensity
                | MeasureKind::KeywordVolatility
                | MeasureKind::TopKDense
                | MeasureKind::TopKVolatile
        )
    }
}

/// Result-size cap for ranking queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopK {
    K(u32),
    All,
}

/// Half-open time range, epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: i64,
    pub end: i64,
}

impl TimeRange {
    pub fn new(start: i64, end: i64) -> Self {
        TimeRange { start, end }
    }

    pub fn seconds(&self) -> i64 {
        self.end - self.start
    }

    pub fn contains(&self, ts: i64) -> bool {
        ts >= self.start && ts < self.end
    }

    /// True when both endpoints sit on UTC midnights.
    pub fn day_aligned(&self) -> bool {
        self.start.rem_euclid(86_400) == 0 && self.end.rem_euclid(86_400) == 0
    }
}

/// A measure request against one cube.
///
/// `members` names areas at `spatial_level`; `None` targets everything as
/// a single area. Without `group_by` a multi-member set merges into one
/// area (summed surface); with `group_by` results are grouped per member
/// at that (finer or equal) level inside the filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub measure: MeasureKind,
    pub spatial_scheme: SpatialScheme,
    pub textual_scheme: TextualScheme,
    pub spatial_level: u8,
    pub members: Option<Vec<String>>,
    pub group_by: Option<u8>,
    pub textual_level: u8,
    /// Restrict scoring to these keywords (density / volatility probes).
    pub keywords: Option<Vec<String>>,
    pub range: TimeRange,
    pub intervals: u32,
    pub k: TopK,
}

impl QuerySpec {
    /// Structural validation against a schema; cube-dependent checks
    /// (member existence) happen at evaluation time.
    pub fn validate(&self, schema: &CubeSchema) -> Result<()> {
        if self.spatial_scheme != schema.spatial_scheme
            || self.textual_scheme != schema.textual_scheme
        {
            return Err(Error::Query("query schemes do not match the cube schema".into()));
        }
        let s_levels = schema.spatial_level_count();
        if self.spatial_level >= s_levels {
            return Err(Error::Query(format!(
                "spatial level {} out of range (hierarchy has {})",
                self.spatial_level, s_levels
            )));
        }
        if self.textual_level as usize >= TEXT_LEVELS.len() {
            return Err(Error::Query("textual level out of range".into()));
        }
        if let Some(g) = self.group_by {
            if g > self.spatial_level {
                return Err(Error::Query(
                    "group-by level must be at or below the filter level".into(),
                ));
            }
            if g == s_levels - 1 {
                return Err(Error::Query("cannot group by the all level".into()));
            }
        }
        if self.range.start >= self.range.end {
            return Err(Error::Query("empty time range".into()));
        }
        if self.intervals == 0 {
            return Err(Error::Query("interval count must be at least 1".into()));
        }
        if self.measure.uses_intervals()
            && self.range.seconds() % self.intervals as i64 != 0
        {
            return Err(Error::Query(format!(
                "range of {}s does not divide into {} equal intervals",
                self.range.seconds(),
                self.intervals
            )));
        }
        if let TopK::K(k) = self.k {
            if k == 0 {
                return Err(Error::Query("k must be at least 1".into()));
            }
        }
        if self.measure.is_topk() && self.keywords.is_some() {
            return Err(Error::Query("ranking queries score all keywords".into()));
        }
        // Grid cells tile outward without a bounded whole, so the all level
        // has no surface area to divide by.
        if self.measure.needs_area()
            && self.spatial_scheme == SpatialScheme::Grid
            && self.spatial_level == schema.spatial_all()
        {
            return Err(Error::Query(
                "density measures are undefined at the all level of the grid scheme".into(),
            ));
        }
        Ok(())
    }

    /// Length of one interval in seconds.
    pub fn interval_seconds(&self) -> i64 {
        self.range.seconds() / self.intervals as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_schema_is_valid_and_counts_levels() {
        let s = CubeSchema::default();
        assert!(s.validate().is_ok());
        assert_eq!(s.level_counts(), vec![5, 4, 5, 5]);
        let sem = CubeSchema::standard(
            SpatialScheme::Semantic,
            TextualScheme::Majority,
            GridConfig::default(),
        );
        assert_eq!(sem.level_counts(), vec![5, 4, 5, 5]);
        assert_eq!(sem.spatial_level_by_name("city"), Some(1));
        assert_eq!(s.spatial_level_by_name("g2"), Some(2));
        assert_eq!(s.spatial_level_by_name("nowhere"), None);
    }

    #[test]
    fn schema_missing_all_is_rejected() {
        let mut s = CubeSchema::default();
        s.hierarchies[3].levels.pop();
        s.hierarchies[3].levels.last_mut().unwrap().step_up = None;
        let err = s.validate().unwrap_err();
        assert!(err.to_string().contains("terminate in all"), "{err}");
    }

    #[test]
    fn schema_duplicate_level_is_rejected() {
        let mut s = CubeSchema::default();
        s.hierarchies[0].levels[1].name = "day".into();
        assert!(s.validate().is_err());
    }

    #[test]
    fn schema_empty_is_rejected() {
        let s = CubeSchema { hierarchies: vec![], ..CubeSchema::default() };
        assert!(s.validate().is_err());
    }

    #[test]
    fn grid_config_bounds() {
        assert!(GridConfig { base_cell_km: 0.0, ..Default::default() }.validate().is_err());
        assert!(GridConfig { factor: 1, ..Default::default() }.validate().is_err());
        assert!(GridConfig { level_count: 1, ..Default::default() }.validate().is_err());
        let g = GridConfig::default();
        assert_eq!(g.cell_km(2), 9.0);
        assert_eq!(g.cell_area(1), 9.0);
    }

    #[test]
    fn keyword_set_predicates() {
        assert!(KeywordSet::All.matches("apple"));
        assert!(KeywordSet::HashtagsOnly.matches("#love"));
        assert!(!KeywordSet::HashtagsOnly.matches("love"));
        let listed = KeywordSet::Listed(["apple".to_string()].into());
        assert!(listed.matches("apple"));
        assert!(!listed.matches("pear"));
    }

    fn q() -> QuerySpec {
        QuerySpec {
            measure: MeasureKind::TopKDense,
            spatial_scheme: SpatialScheme::Semantic,
            textual_scheme: TextualScheme::Replication,
            spatial_level: 1,
            members: Some(vec!["aalborg".into()]),
            group_by: None,
            textual_level: 0,
            keywords: None,
            range: TimeRange::new(0, 7 * 86_400),
            intervals: 7,
            k: TopK::K(10),
        }
    }

    #[test]
    fn query_validation_accepts_the_basic_shape() {
        let schema = CubeSchema::standard(
            SpatialScheme::Semantic,
            TextualScheme::Replication,
            GridConfig::default(),
        );
        assert!(q().validate(&schema).is_ok());
    }

    #[test]
    fn query_validation_named_rejections() {
        let schema = CubeSchema::standard(
            SpatialScheme::Semantic,
            TextualScheme::Replication,
            GridConfig::default(),
        );
        let mut zero_intervals = q();
        zero_intervals.intervals = 0;
        assert!(zero_intervals.validate(&schema).is_err());

        // 864000 seconds split 7 ways leaves a remainder.
        let mut ragged = q();
        ragged.measure = MeasureKind::TopKVolatile;
        ragged.range = TimeRange::new(0, 10 * 86_400);
        ragged.intervals = 7;
        assert!(ragged.validate(&schema).is_err());

        let mut empty_range = q();
        empty_range.range = TimeRange::new(5, 5);
        assert!(empty_range.validate(&schema).is_err());

        let mut zero_k = q();
        zero_k.k = TopK::K(0);
        assert!(zero_k.validate(&schema).is_err());

        let mut coarse_group = q();
        coarse_group.group_by = Some(3);
        assert!(coarse_group.validate(&schema).is_err());

        let mut bad_level = q();
        bad_level.spatial_level = 9;
        assert!(bad_level.validate(&schema).is_err());

        let mut wrong_scheme = q();
        wrong_scheme.spatial_scheme = SpatialScheme::Grid;
        assert!(wrong_scheme.validate(&schema).is_err());

        let grid_schema = CubeSchema::standard(
            SpatialScheme::Grid,
            TextualScheme::Replication,
            GridConfig::default(),
        );
        let mut grid_all_density = q();
        grid_all_density.spatial_scheme = SpatialScheme::Grid;
        grid_all_density.spatial_level = grid_schema.spatial_all();
        grid_all_density.members = None;
        assert!(grid_all_density.validate(&grid_schema).is_err());
        grid_all_density.measure = MeasureKind::FactCount;
        assert!(grid_all_density.validate(&grid_schema).is_ok());
    }

    #[test]
    fn dense_ranges_need_no_divisibility() {
        let schema = CubeSchema::standard(
            SpatialScheme::Semantic,
            TextualScheme::Replication,
            GridConfig::default(),
        );
        let mut dense = q();
        dense.range = TimeRange::new(0, 10 * 86_400);
        dense.intervals = 3;
        assert!(dense.validate(&schema).is_ok());
    }

    #[test]
    fn measure_classes() {
        use MeasureClass::*;
        assert_eq!(MeasureKind::FactCount.class(), Distributive);
        assert_eq!(MeasureKind::KeywordFrequency.class(), Distributive);
        assert_eq!(MeasureKind::SurfaceArea.class(), Distributive);
        assert_eq!(MeasureKind::KeywordDensity.class(), Algebraic);
        assert_eq!(MeasureKind::KeywordVolatility.class(), Algebraic);
        assert_eq!(MeasureKind::TopKDense.class(), Holistic);
        assert_eq!(MeasureKind::TopKVolatile.class(), Holistic);
    }

    #[test]
    fn time_range_alignment() {
        assert!(TimeRange::new(0, 86_400).day_aligned());
        assert!(!TimeRange::new(3_600, 86_400).day_aligned());
        assert!(TimeRange::new(0, 86_400).contains(0));
        assert!(!TimeRange::new(0, 86_400).contains(86_400));
    }
}
