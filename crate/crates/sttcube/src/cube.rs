//! The cube: resolved facts, member stores, the lattice, and the
//! materialized cuboids a strategy selected.
//!
//! Construction resolves every object against the taxonomies, aggregates
//! the base cuboid, and hands the lattice to the planner. Updates append
//! facts and re-aggregate only the group keys the new facts touch; the
//! materialized set is left alone until a replan is requested.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::mem;

use serde::{Deserialize, Serialize};

use crate::cuboid::{self, AggContext, Cuboid, Entry, FactRow, GroupKey, SpatialStore, TextStore};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::hierarchy::{
    self, ImportanceScores, SpatialTaxonomy, TextTaxonomy, THEME,
};
use crate::ingest;
use crate::lattice::{Coord, Lattice};
use crate::materialize::{plan_full, plan_greedy, MaterializeConfig, PlanStep, Strategy};
use crate::model::{CubeSchema, GridConfig, SpatialScheme, SttObject, TextualScheme};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CubeConfig {
    pub schema: CubeSchema,
    pub materialize: MaterializeConfig,
    pub exec: Execution,
    /// Reverse-geocode cutoff for the semantic scheme, km.
    pub geocode_cutoff_km: f64,
}

impl Default for CubeConfig {
    fn default() -> Self {
        CubeConfig {
            schema: CubeSchema::standard(
                SpatialScheme::Semantic,
                TextualScheme::Replication,
                GridConfig::default(),
            ),
            materialize: MaterializeConfig::default(),
            exec: Execution::Auto,
            geocode_cutoff_km: ingest::geocode_cutoff_km(),
        }
    }
}

#[derive(Debug)]
pub struct Cube {
    config: CubeConfig,
    spatial_tax: SpatialTaxonomy,
    text_tax: TextTaxonomy,
    scores: ImportanceScores,
    facts: Vec<FactRow>,
    spatial: SpatialStore,
    textual: TextStore,
    lattice: Lattice,
    cuboids: BTreeMap<Coord, Cuboid>,
    plan: Vec<PlanStep>,
}

impl Cube {
    pub fn construct(
        objects: &[SttObject],
        config: CubeConfig,
        spatial_tax: SpatialTaxonomy,
        text_tax: TextTaxonomy,
        scores: ImportanceScores,
    ) -> Result<Cube> {
        config.schema.validate()?;
        config.materialize.validate()?;
        if config.schema.spatial_scheme == SpatialScheme::Semantic && spatial_tax.is_empty() {
            return Err(Error::Config("semantic spatial scheme needs a city taxonomy".into()));
        }
        let dims: [u8; 4] = config
            .schema
            .level_counts()
            .as_slice()
            .try_into()
            .map_err(|_| Error::Schema("a cube needs exactly four hierarchies".into()))?;

        let mut spatial = SpatialStore::new(&config.schema, &spatial_tax);
        let mut textual = TextStore::new();
        let facts: Vec<FactRow> = objects
            .iter()
            .map(|o| {
                resolve(
                    &config.schema,
                    &mut spatial,
                    &mut textual,
                    &spatial_tax,
                    &text_tax,
                    &scores,
                    config.geocode_cutoff_km,
                    o,
                )
            })
            .collect();

        let mut lattice = Lattice::new(dims);
        let mut cuboids = BTreeMap::new();
        let ctx = AggContext {
            spatial: &spatial,
            textual: &textual,
            scheme: config.schema.textual_scheme,
            exec: config.exec,
        };
        let base = cuboid::from_facts(&ctx, &facts, Coord::BASE, None);
        lattice.set_size(Coord::BASE, base.row_count());
        cuboids.insert(Coord::BASE, base);

        let plan =
            apply_strategy(&config.materialize, &ctx, &facts, &mut lattice, &mut cuboids);
        Ok(Cube {
            config,
            spatial_tax,
            text_tax,
            scores,
            facts,
            spatial,
            textual,
            lattice,
            cuboids,
            plan,
        })
    }

    /// Append objects and fold them into every materialized cuboid.
    ///
    /// Untruncated cuboids absorb the delta additively; truncated ones
    /// re-aggregate the touched group keys from the full fact list so the
    /// stored prefix and its boundary stay true. The materialized set is
    /// not revisited; call [`Cube::replan`] for that.
    pub fn update(&mut self, objects: &[SttObject]) {
        let start = self.facts.len();
        for o in objects {
            let fact = resolve(
                &self.config.schema,
                &mut self.spatial,
                &mut self.textual,
                &self.spatial_tax,
                &self.text_tax,
                &self.scores,
                self.config.geocode_cutoff_km,
                o,
            );
            self.facts.push(fact);
        }
        if self.facts.len() == start {
            return;
        }
        let ctx = AggContext {
            spatial: &self.spatial,
            textual: &self.textual,
            scheme: self.config.schema.textual_scheme,
            exec: self.config.exec,
        };
        let (before, delta) = self.facts.split_at(start);
        let coords: Vec<Coord> = self.cuboids.keys().copied().collect();
        for c in coords {
            let target = self.cuboids.get_mut(&c).expect("listed above");
            if target.k.is_none() {
                let add = cuboid::from_facts(&ctx, delta, c, None);
                merge_additive(&ctx, target, add);
            } else {
                rebuild_affected(&ctx, before, delta, target);
            }
            self.lattice.set_size(c, target.row_count());
        }
    }

    /// Drop every cuboid but the base and run the given strategy against
    /// the current facts.
    pub fn replan(&mut self, materialize: MaterializeConfig) -> Result<()> {
        materialize.validate()?;
        self.config.materialize = materialize;
        self.lattice = Lattice::new(self.lattice.dims());
        let base = self.cuboids.remove(&Coord::BASE).expect("base cuboid always exists");
        self.cuboids.clear();
        self.lattice.set_size(Coord::BASE, base.row_count());
        self.cuboids.insert(Coord::BASE, base);
        let ctx = AggContext {
            spatial: &self.spatial,
            textual: &self.textual,
            scheme: self.config.schema.textual_scheme,
            exec: self.config.exec,
        };
        self.plan = apply_strategy(
            &self.config.materialize,
            &ctx,
            &self.facts,
            &mut self.lattice,
            &mut self.cuboids,
        );
        Ok(())
    }

    /// Assemble a cube from persisted parts. The caller guarantees the
    /// parts came from one `save` of one cube; only cheap shape checks
    /// run here.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_saved(
        config: CubeConfig,
        spatial_tax: SpatialTaxonomy,
        text_tax: TextTaxonomy,
        scores: ImportanceScores,
        facts: Vec<FactRow>,
        spatial: SpatialStore,
        textual: TextStore,
        lattice: Lattice,
        cuboids: BTreeMap<Coord, Cuboid>,
        plan: Vec<PlanStep>,
    ) -> Result<Cube> {
        config.schema.validate()?;
        config.materialize.validate()?;
        if !cuboids.contains_key(&Coord::BASE) {
            return Err(Error::Persist("saved cube lacks its base cuboid".into()));
        }
        Ok(Cube {
            config,
            spatial_tax,
            text_tax,
            scores,
            facts,
            spatial,
            textual,
            lattice,
            cuboids,
            plan,
        })
    }

    pub fn schema(&self) -> &CubeSchema {
        &self.config.schema
    }

    pub fn config(&self) -> &CubeConfig {
        &self.config
    }

    pub fn facts(&self) -> &[FactRow] {
        &self.facts
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn cuboid(&self, c: Coord) -> Option<&Cuboid> {
        self.cuboids.get(&c)
    }

    pub fn cuboids(&self) -> impl Iterator<Item = &Cuboid> {
        self.cuboids.values()
    }

    pub fn base(&self) -> &Cuboid {
        &self.cuboids[&Coord::BASE]
    }

    pub fn spatial_store(&self) -> &SpatialStore {
        &self.spatial
    }

    pub fn text_store(&self) -> &TextStore {
        &self.textual
    }

    pub fn spatial_taxonomy(&self) -> &SpatialTaxonomy {
        &self.spatial_tax
    }

    pub fn text_taxonomy(&self) -> &TextTaxonomy {
        &self.text_tax
    }

    pub fn importance(&self) -> &ImportanceScores {
        &self.scores
    }

    /// Greedy pick trace of the last planning run; empty for the stock
    /// none/full strategies.
    pub fn plan_steps(&self) -> &[PlanStep] {
        &self.plan
    }

    pub fn agg_ctx(&self) -> AggContext<'_> {
        AggContext {
            spatial: &self.spatial,
            textual: &self.textual,
            scheme: self.config.schema.textual_scheme,
            exec: self.config.exec,
        }
    }

    /// Rows stored across all materialized cuboids, base included.
    pub fn stored_rows(&self) -> u64 {
        self.cuboids.values().map(|c| c.row_count()).sum()
    }

    /// Rows stored beyond the base cuboid.
    pub fn extra_rows(&self) -> u64 {
        self.stored_rows() - self.base().row_count()
    }
}

/// Resolve one object against the stores: spatial member, term ids, and
/// the scheme's theme assignment.
#[allow(clippy::too_many_arguments)]
fn resolve(
    schema: &CubeSchema,
    spatial: &mut SpatialStore,
    textual: &mut TextStore,
    spatial_tax: &SpatialTaxonomy,
    text_tax: &TextTaxonomy,
    scores: &ImportanceScores,
    cutoff_km: f64,
    obj: &SttObject,
) -> FactRow {
    let kept: Vec<String> =
        obj.terms.iter().filter(|t| schema.keywords.matches(t)).cloned().collect();
    let spatial_id = spatial.intern_base(obj.lat, obj.lon, spatial_tax, cutoff_km);
    let terms: Vec<u32> = kept.iter().map(|t| textual.intern_term(t, text_tax)).collect();
    let mut distinct = terms.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let theme = match schema.textual_scheme {
        TextualScheme::Replication => None,
        TextualScheme::Majority => hierarchy::textual_parent_majority(&kept, text_tax, THEME),
        TextualScheme::Custom => {
            hierarchy::textual_parent_custom(&kept, text_tax, scores, THEME)
        }
    };
    let assigned_theme = theme
        .map(|m| textual.lookup(THEME, m).expect("term chains intern their theme"))
        .unwrap_or(u32::MAX);
    FactRow {
        ts: obj.ts,
        day: hierarchy::day_of(obj.ts),
        sec: hierarchy::second_of_day(obj.ts),
        lat: obj.lat,
        lon: obj.lon,
        spatial: spatial_id,
        terms,
        distinct_terms: distinct,
        assigned_theme,
    }
}

/// Smallest untruncated materialized cuboid the coordinate derives from.
fn best_source<'a>(
    scheme: TextualScheme,
    coord: Coord,
    cuboids: &'a BTreeMap<Coord, Cuboid>,
    scratch: &'a HashMap<Coord, Cuboid>,
) -> Option<&'a Cuboid> {
    cuboids
        .values()
        .chain(scratch.values())
        .filter(|cub| cub.k.is_none() && coord.derivable_from(cub.coord, scheme))
        .min_by_key(|cub| (cub.row_count(), cub.coord))
}

/// Aggregate one cuboid from the cheapest valid source, or from the raw
/// facts when no stored cuboid can seed it (the majority-scheme gap
/// between term rows and theme rows).
fn build_one(
    ctx: &AggContext,
    facts: &[FactRow],
    cuboids: &BTreeMap<Coord, Cuboid>,
    scratch: &HashMap<Coord, Cuboid>,
    coord: Coord,
    k: Option<u32>,
) -> Cuboid {
    match best_source(ctx.scheme, coord, cuboids, scratch) {
        Some(src) => cuboid::from_cuboid(ctx, src, coord, k)
            .expect("source filtered for validity beforehand"),
        None => cuboid::from_facts(ctx, facts, coord, k),
    }
}

fn apply_strategy(
    cfg: &MaterializeConfig,
    ctx: &AggContext,
    facts: &[FactRow],
    lattice: &mut Lattice,
    cuboids: &mut BTreeMap<Coord, Cuboid>,
) -> Vec<PlanStep> {
    match cfg.strategy {
        Strategy::None => Vec::new(),
        Strategy::Full => {
            let empty = HashMap::new();
            for c in plan_full(lattice) {
                let cub = build_one(ctx, facts, cuboids, &empty, c, None);
                lattice.set_size(c, cub.row_count());
                lattice.mark_materialized(c);
                cuboids.insert(c, cub);
            }
            Vec::new()
        }
        Strategy::PartialExact | Strategy::PartialApprox | Strategy::Greedy => {
            let k = cfg.effective_k();
            // An untruncated theme-level scratch cuboid keeps size
            // estimation off the raw facts where the term rows cannot
            // seed coarser textual levels.
            let mut scratch: HashMap<Coord, Cuboid> = HashMap::new();
            if ctx.scheme != TextualScheme::Replication && lattice.dims()[3] > 1 {
                let anchor = Coord::new(0, 0, 0, 1);
                scratch.insert(anchor, cuboid::from_facts(ctx, facts, anchor, None));
            }
            let avg = avg_row_bytes(&cuboids[&Coord::BASE]);
            let plan = plan_greedy(
                lattice,
                ctx.scheme,
                cfg.budget,
                cfg.strict_budget,
                avg,
                |c| build_one(ctx, facts, cuboids, &scratch, c, k).row_count(),
            );
            for step in &plan {
                let cub = build_one(ctx, facts, cuboids, &scratch, step.coord, k);
                debug_assert_eq!(cub.row_count(), step.size);
                cuboids.insert(step.coord, cub);
            }
            plan
        }
    }
}

/// Measured average bytes per stored row, for byte-denominated budgets.
fn avg_row_bytes(base: &Cuboid) -> f64 {
    let groups = base.rows.len() as u64;
    let entries: u64 = base.rows.iter().map(|r| r.entries.len() as u64).sum();
    let bytes = groups * mem::size_of::<cuboid::GroupRow>() as u64
        + entries * mem::size_of::<Entry>() as u64;
    (bytes as f64 / base.row_count().max(1) as f64).max(1.0)
}

/// Fold a delta aggregation into an untruncated cuboid. Frequencies and
/// fact counts are additive, so existing rows merge in place and unseen
/// keys append.
fn merge_additive(ctx: &AggContext, target: &mut Cuboid, add: Cuboid) {
    debug_assert!(target.k.is_none());
    let index: HashMap<GroupKey, usize> =
        target.rows.iter().enumerate().map(|(i, r)| (r.key, i)).collect();
    let mut appended = Vec::new();
    for row in add.rows {
        let Some(&i) = index.get(&row.key) else {
            appended.push(row);
            continue;
        };
        let t = &mut target.rows[i];
        t.fact_count += row.fact_count;
        let mut freqs: HashMap<u32, u64> =
            t.entries.iter().map(|e| (e.member, e.freq)).collect();
        for e in row.entries {
            *freqs.entry(e.member).or_insert(0) += e.freq;
        }
        t.entries = freqs.into_iter().map(|(member, freq)| Entry { member, freq }).collect();
        let names = ctx.textual;
        t.entries.sort_by(|a, b| {
            b.freq.cmp(&a.freq).then_with(|| names.name_of(a.member).cmp(names.name_of(b.member)))
        });
    }
    target.rows.extend(appended);
    target.rows.sort_by_key(|r| r.key);
    target.recount();
}

/// Re-aggregate the group keys a delta touches, from the full fact list,
/// and swap them into a truncated cuboid.
fn rebuild_affected(ctx: &AggContext, before: &[FactRow], delta: &[FactRow], target: &mut Cuboid) {
    let coord = target.coord;
    let add = cuboid::from_facts(ctx, delta, coord, None);
    let affected: HashSet<GroupKey> = add.rows.iter().map(|r| r.key).collect();
    let s_table = ctx.spatial.ancestor_table(coord.spatial);
    let key_of = |f: &FactRow| GroupKey {
        date: hierarchy::date_code(f.day, coord.date),
        tod: hierarchy::tod_code(f.sec, coord.tod),
        spatial: s_table[f.spatial as usize],
    };
    let subset: Vec<FactRow> = before
        .iter()
        .chain(delta.iter())
        .filter(|f| affected.contains(&key_of(f)))
        .cloned()
        .collect();
    let rebuilt = cuboid::from_facts(ctx, &subset, coord, target.k);
    target.rows.retain(|r| !affected.contains(&r.key));
    target.rows.extend(rebuilt.rows);
    target.rows.sort_by_key(|r| r.key);
    target.recount();
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::hierarchy::tests::{SPATIAL_FIXTURE, TEXT_FIXTURE};
    use crate::ingest::parse_ts;
    use crate::materialize::Budget;
    use std::io::Cursor;

    pub fn obj(ts: &str, lat: f64, lon: f64, words: &[&str]) -> SttObject {
        SttObject::new(lat, lon, words.iter().map(|w| w.to_string()).collect(), parse_ts(ts).unwrap())
    }

    pub fn sample_objects() -> Vec<SttObject> {
        vec![
            obj("2019-10-20T11:12:13Z", 57.0166, 9.9912, &["apple", "fruit", "#love"]),
            obj("2019-10-24T11:18:23Z", 56.1874, 10.1714, &["potato", "#newyear"]),
            obj("2019-10-20T11:35:56Z", 56.1510, 10.2047, &["banana", "season"]),
            obj("2019-10-24T16:12:14Z", 57.0166, 9.9912, &["potato", "salad", "#fresh"]),
        ]
    }

    pub fn taxonomies() -> (SpatialTaxonomy, TextTaxonomy) {
        (
            SpatialTaxonomy::from_reader(Cursor::new(SPATIAL_FIXTURE)).unwrap(),
            TextTaxonomy::from_reader(Cursor::new(TEXT_FIXTURE)).unwrap(),
        )
    }

    pub fn build(
        objects: &[SttObject],
        textual_scheme: TextualScheme,
        materialize: MaterializeConfig,
    ) -> Cube {
        let (stax, ttax) = taxonomies();
        let config = CubeConfig {
            schema: CubeSchema::standard(
                SpatialScheme::Semantic,
                textual_scheme,
                GridConfig::default(),
            ),
            materialize,
            exec: Execution::Sequential,
            geocode_cutoff_km: 50.0,
        };
        Cube::construct(objects, config, stax, ttax, ImportanceScores::default()).unwrap()
    }

    fn none_cfg() -> MaterializeConfig {
        MaterializeConfig { strategy: Strategy::None, ..MaterializeConfig::default() }
    }

    #[test]
    fn base_only_construction() {
        let cube = build(&sample_objects(), TextualScheme::Replication, none_cfg());
        assert_eq!(cube.cuboids().count(), 1);
        assert_eq!(cube.base().rows.len(), 4);
        assert_eq!(cube.lattice().size(Coord::BASE), Some(cube.base().row_count()));
        assert_eq!(cube.facts().len(), 4);
        assert_eq!(cube.extra_rows(), 0);
        // 500 coordinates under the stock schema.
        assert_eq!(cube.lattice().len(), 500);
    }

    #[test]
    fn greedy_materialization_matches_direct_aggregation() {
        let cfg = MaterializeConfig {
            strategy: Strategy::PartialExact,
            budget: Budget::Cuboids(4),
            strict_budget: true,
            ..MaterializeConfig::default()
        };
        let cube = build(&sample_objects(), TextualScheme::Replication, cfg);
        assert_eq!(cube.plan_steps().len(), 3);
        assert_eq!(cube.cuboids().count(), 4);
        let ctx = cube.agg_ctx();
        for step in cube.plan_steps() {
            let direct = cuboid::from_facts(&ctx, cube.facts(), step.coord, None);
            let stored = cube.cuboid(step.coord).unwrap();
            assert_eq!(stored.rows, direct.rows, "coord {}", step.coord);
            assert_eq!(cube.lattice().size(step.coord), Some(stored.row_count()));
            assert!(cube.lattice().is_materialized(step.coord));
        }
    }

    #[test]
    fn truncated_strategy_stores_prefixes() {
        let cfg = MaterializeConfig {
            strategy: Strategy::Greedy,
            budget: Budget::Cuboids(2),
            top_k: Some(1),
            strict_budget: true,
            ..MaterializeConfig::default()
        };
        let cube = build(&sample_objects(), TextualScheme::Replication, cfg);
        assert_eq!(cube.plan_steps().len(), 1);
        let coord = cube.plan_steps()[0].coord;
        let stored = cube.cuboid(coord).unwrap();
        assert_eq!(stored.k, Some(1));
        let ctx = cube.agg_ctx();
        let full = cuboid::from_facts(&ctx, cube.facts(), coord, None);
        for (s, f) in stored.rows.iter().zip(&full.rows) {
            assert_eq!(s.key, f.key);
            assert_eq!(s.entries, f.entries[..s.entries.len().min(f.entries.len())].to_vec());
            if f.entries.len() > 1 {
                assert_eq!(s.boundary, f.entries[1].freq);
            }
        }
        assert_eq!(cube.lattice().size(coord), Some(stored.row_count()));
    }

    #[test]
    fn full_strategy_materializes_every_node() {
        let cube = build(
            &sample_objects(),
            TextualScheme::Majority,
            MaterializeConfig { strategy: Strategy::Full, ..MaterializeConfig::default() },
        );
        assert_eq!(cube.cuboids().count(), 500);
        let ctx = cube.agg_ctx();
        // Spot-check coordinates across the lattice against direct
        // aggregation, the majority textual gap included.
        for coord in [
            Coord::new(0, 0, 0, 1),
            Coord::new(2, 1, 3, 2),
            Coord::new(4, 3, 4, 4),
            Coord::new(1, 2, 1, 0),
        ] {
            let direct = cuboid::from_facts(&ctx, cube.facts(), coord, None);
            assert_eq!(cube.cuboid(coord).unwrap().rows, direct.rows, "coord {coord}");
        }
    }

    #[test]
    fn update_equals_fresh_construction() {
        let objects = sample_objects();
        for scheme in [TextualScheme::Replication, TextualScheme::Majority] {
            for cfg in [
                none_cfg(),
                MaterializeConfig { strategy: Strategy::Full, ..MaterializeConfig::default() },
            ] {
                let whole = build(&objects, scheme, cfg.clone());
                let mut grown = build(&objects[..2], scheme, cfg.clone());
                grown.update(&objects[2..]);
                assert_eq!(whole.facts(), grown.facts());
                assert_eq!(whole.cuboids().count(), grown.cuboids().count());
                for cub in whole.cuboids() {
                    let other = grown.cuboid(cub.coord).unwrap();
                    assert_eq!(cub.rows, other.rows, "coord {} under {scheme:?}", cub.coord);
                    assert_eq!(cub.row_count(), other.row_count());
                }
            }
        }
    }

    #[test]
    fn update_rebuilds_truncated_groups_exactly() {
        let objects = sample_objects();
        let cfg = MaterializeConfig {
            strategy: Strategy::Greedy,
            budget: Budget::Cuboids(2),
            top_k: Some(1),
            ..MaterializeConfig::default()
        };
        let mut cube = build(&objects[..2], TextualScheme::Replication, cfg);
        let coord = cube.plan_steps()[0].coord;
        cube.update(&objects[2..]);
        let ctx = cube.agg_ctx();
        let oracle = cuboid::from_facts(&ctx, cube.facts(), coord, Some(1));
        let stored = cube.cuboid(coord).unwrap();
        assert_eq!(stored.rows, oracle.rows);
        assert_eq!(cube.lattice().size(coord), Some(oracle.row_count()));
    }

    #[test]
    fn update_can_introduce_members() {
        let mut cube = build(&sample_objects()[..1], TextualScheme::Replication, none_cfg());
        assert!(cube.text_store().lookup(0, "potato").is_none());
        cube.update(&sample_objects()[1..2]);
        assert!(cube.text_store().lookup(0, "potato").is_some());
        // The new fact landed near Aarhus, adding that point member.
        assert_eq!(cube.base().rows.len(), 2);
    }

    #[test]
    fn replan_swaps_the_materialized_set() {
        let objects = sample_objects();
        let mut cube = build(&objects, TextualScheme::Replication, none_cfg());
        assert_eq!(cube.cuboids().count(), 1);
        cube.replan(MaterializeConfig {
            strategy: Strategy::PartialExact,
            budget: Budget::Cuboids(3),
            strict_budget: true,
            ..MaterializeConfig::default()
        })
        .unwrap();
        assert_eq!(cube.cuboids().count(), 3);
        let fresh = build(
            &objects,
            TextualScheme::Replication,
            MaterializeConfig {
                strategy: Strategy::PartialExact,
                budget: Budget::Cuboids(3),
                strict_budget: true,
                ..MaterializeConfig::default()
            },
        );
        let a: Vec<Coord> = cube.plan_steps().iter().map(|s| s.coord).collect();
        let b: Vec<Coord> = fresh.plan_steps().iter().map(|s| s.coord).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn semantic_scheme_requires_a_taxonomy() {
        let config = CubeConfig {
            materialize: none_cfg(),
            exec: Execution::Sequential,
            ..CubeConfig::default()
        };
        let err = Cube::construct(
            &sample_objects(),
            config,
            SpatialTaxonomy::default(),
            TextTaxonomy::default(),
            ImportanceScores::default(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn keyword_filter_narrows_the_vocabulary() {
        let (stax, ttax) = taxonomies();
        let mut schema = CubeSchema::standard(
            SpatialScheme::Semantic,
            TextualScheme::Replication,
            GridConfig::default(),
        );
        schema.keywords = crate::model::KeywordSet::Listed(
            ["apple", "potato"].iter().map(|s| s.to_string()).collect(),
        );
        let config = CubeConfig {
            schema,
            materialize: none_cfg(),
            exec: Execution::Sequential,
            geocode_cutoff_km: 50.0,
        };
        let cube = Cube::construct(
            &sample_objects(),
            config,
            stax,
            ttax,
            ImportanceScores::default(),
        )
        .unwrap();
        assert!(cube.text_store().lookup(0, "apple").is_some());
        assert!(cube.text_store().lookup(0, "banana").is_none());
        // The banana fact still exists; it just carries no keywords.
        assert_eq!(cube.facts().len(), 4);
        assert_eq!(cube.base().rows.len(), 4);
    }
}
