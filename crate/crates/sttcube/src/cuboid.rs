//! Cuboid storage and the two aggregation paths that fill it: a fold over
//! raw facts and a fold over a finer cuboid's rows.
//!
//! Members are interned per (level, name) into dense ids with one-step
//! parent links, so the aggregation hot path works entirely on integers;
//! strings reappear only at the output boundary. Entry frequencies count
//! fact links (one per distinct term of a fact, rolled upward by the
//! taxonomy), never token repetitions within one fact.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::hierarchy::{
    self, SpatialTaxonomy, TextTaxonomy, ALL_MEMBER, CONCEPT, THEME, TOPIC,
};
use crate::ingest;
use crate::lattice::Coord;
use crate::model::{CubeSchema, GridConfig, SpatialScheme, TextualScheme};

/// Interned members of one dimension, ids dense in first-seen order.
/// The same name may exist at several levels; identity is (level, name).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemberStore {
    names: Vec<String>,
    levels: Vec<u8>,
    by_level: Vec<HashMap<String, u32>>,
}

impl MemberStore {
    pub fn intern(&mut self, level: u8, name: &str) -> u32 {
        while self.by_level.len() <= level as usize {
            self.by_level.push(HashMap::new());
        }
        if let Some(&id) = self.by_level[level as usize].get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.levels.push(level);
        self.by_level[level as usize].insert(name.to_string(), id);
        id
    }

    pub fn lookup(&self, level: u8, name: &str) -> Option<u32> {
        self.by_level.get(level as usize)?.get(name).copied()
    }

    pub fn name_of(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn level_of(&self, id: u32) -> u8 {
        self.levels[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids_at_level(&self, level: u8) -> impl Iterator<Item = u32> + '_ {
        (0..self.len() as u32).filter(move |&id| self.levels[id as usize] == level)
    }
}

/// Spatial members with surface areas and one-step-up parent links.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialStore {
    members: MemberStore,
    areas: Vec<f64>,
    parents: Vec<u32>,
    scheme: SpatialScheme,
    grid: GridConfig,
    all_id: u32,
}

impl SpatialStore {
    /// Interns the all member and, under the semantic scheme, the whole
    /// taxonomy, so filters on fact-free members resolve.
    pub fn new(schema: &CubeSchema, tax: &SpatialTaxonomy) -> SpatialStore {
        let all_level = schema.spatial_all();
        let mut store = SpatialStore {
            members: MemberStore::default(),
            areas: Vec::new(),
            parents: Vec::new(),
            scheme: schema.spatial_scheme,
            grid: schema.grid.clone(),
            all_id: 0,
        };
        // The all member's extent is the union of countries (UNKNOWN chain
        // included); grid cells tile outward, so grid-all has no area.
        let all_area = match schema.spatial_scheme {
            SpatialScheme::Semantic => tax.countries().map(|c| c.surface_area).sum(),
            SpatialScheme::Grid => f64::NAN,
        };
        store.all_id = store.push(all_level, ALL_MEMBER, all_area, 0);
        store.parents[store.all_id as usize] = store.all_id;
        if schema.spatial_scheme == SpatialScheme::Semantic {
            // Countries, then regions, then cities, so parents exist first.
            let rows: Vec<(u8, String, f64, Option<String>)> = tax
                .countries()
                .map(|m| (3, m.id.clone(), m.surface_area, None))
                .chain(tax.regions().map(|m| (2, m.id.clone(), m.surface_area, m.parent.clone())))
                .chain(
                    tax.all_cities().map(|m| (1, m.id.clone(), m.surface_area, m.parent.clone())),
                )
                .collect();
            for (level, id, area, parent) in rows {
                let parent_id = parent
                    .and_then(|p| store.members.lookup(level + 1, &p))
                    .unwrap_or(store.all_id);
                store.push(level, &id, area, parent_id);
            }
        }
        store
    }

    fn push(&mut self, level: u8, name: &str, area: f64, parent: u32) -> u32 {
        let id = self.members.intern(level, name);
        if id as usize == self.areas.len() {
            self.areas.push(area);
            self.parents.push(parent);
        }
        id
    }

    /// Interns the base member for a point: its grid cell chain, or the
    /// point itself linked to its reverse-geocoded city.
    pub fn intern_base(&mut self, lat: f64, lon: f64, tax: &SpatialTaxonomy, cutoff_km: f64) -> u32 {
        match self.scheme {
            SpatialScheme::Grid => {
                let mut cell = ingest::grid_cell_of(lat, lon, &self.grid, 0);
                let mut id = self.push(0, &cell.name(), self.grid.cell_area(0), 0);
                if self.parents[id as usize] != 0 || id == self.all_id {
                    return id; // chain already linked
                }
                let base = id;
                for level in 1..self.grid.level_count {
                    cell = cell.parent(self.grid.factor);
                    let parent = self.push(level, &cell.name(), self.grid.cell_area(level), 0);
                    self.parents[id as usize] = parent;
                    if self.parents[parent as usize] != 0 {
                        return base; // upper chain known from an earlier point
                    }
                    id = parent;
                }
                self.parents[id as usize] = self.all_id;
                base
            }
            SpatialScheme::Semantic => {
                let name = canonical_point(lat, lon);
                if let Some(id) = self.members.lookup(0, &name) {
                    return id;
                }
                let city = ingest::reverse_geocode(lat, lon, tax, cutoff_km);
                let parent = self
                    .members
                    .lookup(1, city)
                    .expect("taxonomy cities are interned at construction");
                self.push(0, &name, self.grid.cell_area(0), parent)
            }
        }
    }

    /// Ancestor of `id` at `to_level` (walks one-step parents).
    pub fn ancestor(&self, id: u32, to_level: u8) -> u32 {
        let mut id = id;
        while self.members.level_of(id) < to_level {
            id = self.parents[id as usize];
        }
        id
    }

    /// Dense id → ancestor-at-level table covering every interned member.
    pub fn ancestor_table(&self, to_level: u8) -> Vec<u32> {
        (0..self.members.len() as u32).map(|id| self.ancestor(id, to_level)).collect()
    }

    pub fn area_of(&self, id: u32) -> f64 {
        self.areas[id as usize]
    }

    pub fn lookup(&self, level: u8, name: &str) -> Option<u32> {
        self.members.lookup(level, name)
    }

    pub fn name_of(&self, id: u32) -> &str {
        self.members.name_of(id)
    }

    pub fn level_of(&self, id: u32) -> u8 {
        self.members.level_of(id)
    }

    pub fn ids_at_level(&self, level: u8) -> impl Iterator<Item = u32> + '_ {
        self.members.ids_at_level(level)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn all_id(&self) -> u32 {
        self.all_id
    }

    /// Rows in dense id order: (level, name, area, parent id).
    pub(crate) fn saved_rows(&self) -> impl Iterator<Item = (u8, &str, f64, u32)> + '_ {
        (0..self.members.len() as u32).map(move |id| {
            (
                self.members.level_of(id),
                self.members.name_of(id),
                self.areas[id as usize],
                self.parents[id as usize],
            )
        })
    }

    /// Rebuilds a store by replaying `saved_rows` output in order, which
    /// reproduces the original dense ids, so stored row references stay valid.
    pub(crate) fn from_saved(
        schema: &CubeSchema,
        rows: impl IntoIterator<Item = (u8, String, f64, u32)>,
    ) -> crate::error::Result<SpatialStore> {
        let mut store = SpatialStore {
            members: MemberStore::default(),
            areas: Vec::new(),
            parents: Vec::new(),
            scheme: schema.spatial_scheme,
            grid: schema.grid.clone(),
            all_id: 0,
        };
        for (level, name, area, parent) in rows {
            store.push(level, &name, area, parent);
        }
        match store.members.lookup(schema.spatial_all(), ALL_MEMBER) {
            Some(id) => store.all_id = id,
            None => {
                return Err(crate::error::Error::Persist(
                    "spatial member table lacks the all member".into(),
                ))
            }
        }
        Ok(store)
    }
}

/// Canonical name of a point member.
pub fn canonical_point(lat: f64, lon: f64) -> String {
    format!("{lat},{lon}")
}

/// Textual members with one-step-up parent links following the taxonomy.
#[derive(Debug, Clone, PartialEq)]
pub struct TextStore {
    members: MemberStore,
    parents: Vec<u32>,
    all_id: u32,
}

impl TextStore {
    pub fn new() -> TextStore {
        let mut members = MemberStore::default();
        let all_id = members.intern(crate::hierarchy::TEXT_ALL, ALL_MEMBER);
        TextStore { members, parents: vec![all_id], all_id }
    }

    /// Interns a term and its theme/topic/concept chain.
    pub fn intern_term(&mut self, term: &str, tax: &TextTaxonomy) -> u32 {
        if let Some(id) = self.members.lookup(0, term) {
            return id;
        }
        let theme = tax.ancestor(term, THEME);
        let topic = tax.ancestor(term, TOPIC);
        let concept = tax.ancestor(term, CONCEPT);
        let concept_id = self.push(CONCEPT, concept, self.all_id);
        let topic_id = self.push(TOPIC, topic, concept_id);
        let theme_id = self.push(THEME, theme, topic_id);
        self.push(0, term, theme_id)
    }

    fn push(&mut self, level: u8, name: &str, parent: u32) -> u32 {
        let id = self.members.intern(level, name);
        if id as usize == self.parents.len() {
            self.parents.push(parent);
        }
        id
    }

    pub fn ancestor(&self, id: u32, to_level: u8) -> u32 {
        let mut id = id;
        while self.members.level_of(id) < to_level {
            id = self.parents[id as usize];
        }
        id
    }

    pub fn ancestor_table(&self, to_level: u8) -> Vec<u32> {
        (0..self.members.len() as u32).map(|id| self.ancestor(id, to_level)).collect()
    }

    pub fn lookup(&self, level: u8, name: &str) -> Option<u32> {
        self.members.lookup(level, name)
    }

    pub fn name_of(&self, id: u32) -> &str {
        self.members.name_of(id)
    }

    pub fn level_of(&self, id: u32) -> u8 {
        self.members.level_of(id)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn all_id(&self) -> u32 {
        self.all_id
    }

    /// Rows in dense id order: (level, name, parent id).
    pub(crate) fn saved_rows(&self) -> impl Iterator<Item = (u8, &str, u32)> + '_ {
        (0..self.members.len() as u32).map(move |id| {
            (self.members.level_of(id), self.members.name_of(id), self.parents[id as usize])
        })
    }

    /// Rebuilds a store by replaying `saved_rows` output in order.
    pub(crate) fn from_saved(
        rows: impl IntoIterator<Item = (u8, String, u32)>,
    ) -> crate::error::Result<TextStore> {
        let mut store =
            TextStore { members: MemberStore::default(), parents: Vec::new(), all_id: 0 };
        for (level, name, parent) in rows {
            store.push(level, &name, parent);
        }
        match store.members.lookup(crate::hierarchy::TEXT_ALL, ALL_MEMBER) {
            Some(id) => store.all_id = id,
            None => {
                return Err(crate::error::Error::Persist(
                    "textual member table lacks the all member".into(),
                ))
            }
        }
        Ok(store)
    }
}

impl Default for TextStore {
    fn default() -> Self {
        TextStore::new()
    }
}

/// One ingested object, fully resolved against the stores.
#[derive(Debug, Clone, PartialEq)]
pub struct FactRow {
    pub ts: i64,
    pub day: i64,
    pub sec: u32,
    pub lat: f64,
    pub lon: f64,
    /// Base spatial member (point or finest grid cell).
    pub spatial: u32,
    /// Normalized tokens with multiplicity, ingestion order.
    pub terms: Vec<u32>,
    /// Sorted distinct term ids; the unit of frequency counting.
    pub distinct_terms: Vec<u32>,
    /// Theme the fact belongs to under majority/custom assignment;
    /// `u32::MAX` under replication (unused).
    pub assigned_theme: u32,
}

/// Group identity within a cuboid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupKey {
    pub date: i64,
    pub tod: u32,
    pub spatial: u32,
}

/// One ranked keyword within a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Entry {
    pub member: u32,
    pub freq: u64,
}

/// One (date, time-of-day, spatial) group with its ranked keyword list.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupRow {
    pub key: GroupKey,
    pub fact_count: u64,
    /// Sorted by frequency descending, then keyword name ascending.
    pub entries: Vec<Entry>,
    /// Frequency of the first entry cut by truncation; 0 when the list
    /// is complete.
    pub boundary: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cuboid {
    pub coord: Coord,
    /// Sorted by key.
    pub rows: Vec<GroupRow>,
    /// Truncation limit the rows were stored under, if any.
    pub k: Option<u32>,
    stored_rows: u64,
}

impl Cuboid {
    pub fn assemble(coord: Coord, rows: Vec<GroupRow>, k: Option<u32>) -> Cuboid {
        let mut c = Cuboid { coord, rows, k, stored_rows: 0 };
        c.recount();
        c
    }

    /// Stored entry rows; a keyword-free group still occupies one row.
    pub fn row_count(&self) -> u64 {
        self.stored_rows
    }

    /// Recompute the stored row count after editing `rows` in place.
    pub(crate) fn recount(&mut self) {
        self.stored_rows = self.rows.iter().map(|r| r.entries.len().max(1) as u64).sum();
    }

    pub fn is_truncated(&self) -> bool {
        self.k.is_some() && self.rows.iter().any(|r| r.boundary > 0)
    }
}

/// Everything an aggregation needs besides the input rows.
pub struct AggContext<'a> {
    pub spatial: &'a SpatialStore,
    pub textual: &'a TextStore,
    pub scheme: TextualScheme,
    pub exec: Execution,
}

#[derive(Default)]
struct GroupAcc {
    fact_count: u64,
    freqs: HashMap<u32, u64>,
}

type Groups = HashMap<GroupKey, GroupAcc>;

fn merge_groups(mut a: Groups, b: Groups) -> Groups {
    if a.len() < b.len() {
        return merge_groups(b, a);
    }
    for (k, acc) in b {
        let slot = a.entry(k).or_default();
        slot.fact_count += acc.fact_count;
        for (m, f) in acc.freqs {
            *slot.freqs.entry(m).or_insert(0) += f;
        }
    }
    a
}

/// Map of every distinct day code to its code at `level`, so the fold
/// never touches the calendar.
fn day_table(days: impl Iterator<Item = i64>, level: u8) -> HashMap<i64, i64> {
    let distinct: BTreeSet<i64> = days.collect();
    distinct.into_iter().map(|d| (d, hierarchy::date_code(d, level))).collect()
}

fn finalize(
    ctx: &AggContext,
    coord: Coord,
    groups: Groups,
    k: Option<u32>,
) -> Cuboid {
    let mut rows: Vec<GroupRow> = groups
        .into_iter()
        .map(|(key, acc)| {
            let mut entries: Vec<Entry> =
                acc.freqs.into_iter().map(|(member, freq)| Entry { member, freq }).collect();
            entries.sort_by(|a, b| {
                b.freq
                    .cmp(&a.freq)
                    .then_with(|| ctx.textual.name_of(a.member).cmp(ctx.textual.name_of(b.member)))
            });
            let mut boundary = 0;
            if let Some(k) = k {
                if entries.len() > k as usize {
                    boundary = entries[k as usize].freq;
                    entries.truncate(k as usize);
                }
            }
            GroupRow { key, fact_count: acc.fact_count, entries, boundary }
        })
        .collect();
    rows.sort_by_key(|r| r.key);
    Cuboid::assemble(coord, rows, k)
}

/// Aggregate raw facts into the cuboid at `coord`, truncating ranked
/// lists to `k` entries when given.
pub fn from_facts(ctx: &AggContext, facts: &[FactRow], coord: Coord, k: Option<u32>) -> Cuboid {
    let days = day_table(facts.iter().map(|f| f.day), coord.date);
    let s_table = ctx.spatial.ancestor_table(coord.spatial);
    let x_table = ctx.textual.ancestor_table(coord.textual);
    let majority = ctx.scheme != TextualScheme::Replication;

    let fold = |groups: &mut Groups, fact: &FactRow| {
        let key = GroupKey {
            date: days[&fact.day],
            tod: hierarchy::tod_code(fact.sec, coord.tod),
            spatial: s_table[fact.spatial as usize],
        };
        let slot = groups.entry(key).or_default();
        slot.fact_count += 1;
        if majority && coord.textual > 0 {
            if fact.assigned_theme != u32::MAX {
                let member = x_table[fact.assigned_theme as usize];
                *slot.freqs.entry(member).or_insert(0) += 1;
            }
        } else {
            for &t in &fact.distinct_terms {
                let member = x_table[t as usize];
                *slot.freqs.entry(member).or_insert(0) += 1;
            }
        }
    };
    let groups = exec::fold_merge(ctx.exec, facts, Groups::default, fold, merge_groups);
    finalize(ctx, coord, groups, k)
}

/// Aggregate a finer cuboid's rows into the cuboid at `coord`.
///
/// The source must be untruncated and valid for the textual scheme;
/// aggregating rows below a truncation boundary would bake the missing
/// tail into the result.
pub fn from_cuboid(ctx: &AggContext, src: &Cuboid, coord: Coord, k: Option<u32>) -> Result<Cuboid> {
    if src.k.is_some() {
        return Err(Error::Schema(format!(
            "cuboid {} is truncated and cannot seed {}",
            src.coord, coord
        )));
    }
    if !coord.derivable_from(src.coord, ctx.scheme) {
        return Err(Error::Schema(format!("cuboid {} is not derivable from {}", coord, src.coord)));
    }
    let days = if src.coord.date == 0 && coord.date > 0 && coord.date < 4 {
        day_table(src.rows.iter().map(|r| r.key.date), coord.date)
    } else {
        HashMap::new()
    };
    let s_table = ctx.spatial.ancestor_table(coord.spatial);
    let x_table = ctx.textual.ancestor_table(coord.textual);
    let (sd, st) = (src.coord.date, src.coord.tod);

    let fold = |groups: &mut Groups, row: &GroupRow| {
        let date = if days.is_empty() {
            hierarchy::date_roll(row.key.date, sd, coord.date)
        } else {
            days[&row.key.date]
        };
        let key = GroupKey {
            date,
            tod: hierarchy::tod_roll(row.key.tod, st, coord.tod),
            spatial: s_table[row.key.spatial as usize],
        };
        let slot = groups.entry(key).or_default();
        slot.fact_count += row.fact_count;
        for e in &row.entries {
            *slot.freqs.entry(x_table[e.member as usize]).or_insert(0) += e.freq;
        }
    };
    let groups = exec::fold_merge(ctx.exec, &src.rows, Groups::default, fold, merge_groups);
    Ok(finalize(ctx, coord, groups, k))
}
