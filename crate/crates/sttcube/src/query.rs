//! Measure evaluation: query rewriting onto the cheapest stored cuboid,
//! exact scoring, and the bounded-error merge over truncated ranked lists.
//!
//! Scores are ranked on integer frequencies and only converted to floats
//! for reporting, so orderings never depend on float rounding.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::cube::Cube;
use crate::cuboid::{self, Entry, GroupRow, TextStore};
use crate::error::{Error, Result};
use crate::exec;
use crate::hierarchy;
use crate::ingest::{self, GridCell};
use crate::lattice::Coord;
use crate::model::{MeasureKind, QuerySpec, SpatialScheme, TopK};

/// Where a plan reads its rows from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Cuboid { coord: Coord, rows: u64, truncated: bool },
    /// No stored cuboid can answer exactly; aggregate the raw facts.
    Facts { count: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryPlan {
    pub source: Source,
    /// True when the answer carries an error bound instead of being exact.
    pub approximate: bool,
}

/// One scored keyword of a non-ranking measure.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordScore {
    pub keyword: String,
    pub freq: u64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub keyword: String,
    /// Aggregated frequency over the queried range.
    pub freq: u64,
    pub score: f64,
    /// Position is within the guaranteed prefix.
    pub guaranteed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    /// Score descending, ties by keyword ascending.
    pub entries: Vec<RankEntry>,
    /// Upper bound on frequency mass a truncated source may have hidden.
    pub epsilon: u64,
    /// Length of the leading run whose positions are guaranteed correct.
    pub delta: u32,
    pub approximate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureValue {
    Count(u64),
    Area(f64),
    Keywords(Vec<KeywordScore>),
    Ranking(Ranking),
}

/// Result for one output group: a `group_by` member, or the merged
/// member set when no grouping was asked for.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupResult {
    pub member: Option<String>,
    pub area: f64,
    pub value: MeasureValue,
}

#[derive(Debug, Clone)]
pub struct QueryOutput {
    pub plan: QueryPlan,
    /// Sorted by member name; a single unnamed entry without `group_by`.
    pub groups: Vec<GroupResult>,
    pub warnings: Vec<String>,
}

/// How a ranking scores its keywords.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankBy {
    /// Raw aggregated frequency.
    Frequency,
    /// Frequency over surface area.
    Density { area: f64 },
    /// Mean absolute per-interval density change.
    Volatility { area: f64, intervals: u32 },
}

impl RankBy {
    fn uses_intervals(self) -> bool {
        matches!(self, RankBy::Volatility { .. })
    }
}

/// One stored ranked list feeding a truncated merge: a group row's
/// entries, its truncation boundary, and the time interval the row's
/// group falls in.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedList<'a> {
    pub entries: &'a [Entry],
    pub boundary: u64,
    pub interval: u32,
}

/// The coordinate granularity a query needs from its source.
///
/// Ranges always filter at day precision; sub-day boundaries force
/// second-level time-of-day rows. The spatial level must reach the
/// grouping level when one is given.
pub(crate) fn needed_coord(spec: &QuerySpec) -> Coord {
    let tod = if day_mode(spec) { 3 } else { 0 };
    let spatial = spec.group_by.unwrap_or(spec.spatial_level);
    Coord::new(0, tod, spatial, spec.textual_level)
}

fn day_mode(spec: &QuerySpec) -> bool {
    spec.range.day_aligned()
        && (!spec.measure.uses_intervals() || spec.interval_seconds() % 86_400 == 0)
}

/// Choose the cheapest stored source that answers the query, preferring
/// exact rows and taking the bounded-error path only when a truncated
/// cuboid is strictly cheaper and the query is a top-k it can serve.
pub fn rewrite(cube: &Cube, spec: &QuerySpec) -> QueryPlan {
    let scheme = cube.schema().textual_scheme;
    let needed = needed_coord(spec);
    let group_safe = matches!(spec.measure, MeasureKind::FactCount | MeasureKind::SurfaceArea);

    let mut exact: Option<(u64, Coord)> = None;
    let mut approx: Option<(u64, Coord)> = None;
    for cub in cube.cuboids() {
        if !needed.derivable_from(cub.coord, scheme) {
            continue;
        }
        let key = (cub.row_count(), cub.coord);
        if cub.k.is_none() || group_safe {
            if exact.map_or(true, |b| key < b) {
                exact = Some(key);
            }
        } else if let (true, TopK::K(k)) = (spec.measure.is_topk(), spec.k) {
            // Truncated lists merge soundly only at their own textual
            // level and only below the stored cutoff.
            if k < cub.k.unwrap() && cub.coord.textual == spec.textual_level {
                if approx.map_or(true, |b| key < b) {
                    approx = Some(key);
                }
            }
        }
    }
    match (exact, approx) {
        (Some(e), Some(a)) if a.0 < e.0 => plan(cube, a, true),
        (Some(e), _) => plan(cube, e, false),
        (None, Some(a)) => plan(cube, a, true),
        (None, None) => QueryPlan {
            source: Source::Facts { count: cube.facts().len() as u64 },
            approximate: false,
        },
    }
}

fn plan(cube: &Cube, pick: (u64, Coord), approximate: bool) -> QueryPlan {
    let truncated = cube.cuboid(pick.1).map_or(false, |c| c.k.is_some());
    QueryPlan { source: Source::Cuboid { coord: pick.1, rows: pick.0, truncated }, approximate }
}

pub fn evaluate(cube: &Cube, spec: &QuerySpec) -> Result<QueryOutput> {
    spec.validate(cube.schema())?;
    let plan = rewrite(cube, spec);
    let mut warnings = Vec::new();
    let groups = match plan.source {
        Source::Facts { .. } => {
            let ctx = cube.agg_ctx();
            let tmp = cuboid::from_facts(&ctx, cube.facts(), needed_coord(spec), None);
            eval_exact(cube, spec, &tmp.rows, &mut warnings)?
        }
        Source::Cuboid { coord, .. } => {
            let rows = &cube.cuboid(coord).expect("plan points at a stored cuboid").rows;
            if plan.approximate {
                eval_approx(cube, spec, rows, &mut warnings)?
            } else {
                eval_exact(cube, spec, rows, &mut warnings)?
            }
        }
    };
    Ok(QueryOutput { plan, groups, warnings })
}

// ---------------------------------------------------------------------------
// Row filtering shared by both evaluation paths

struct RowFilter {
    day_mode: bool,
    start: i64,
    end: i64,
    /// Interval length in seconds (the whole range for interval-less
    /// measures).
    slot_len: i64,
    /// Member ids at the filter level; `None` keeps everything.
    members: Option<HashSet<u32>>,
    /// Source spatial id to filter-level ancestor.
    filter_table: Vec<u32>,
    /// Source spatial id to group-level ancestor; `None` merges.
    group_table: Option<Vec<u32>>,
}

/// Internal group key for the merged (no `group_by`) result.
const MERGED: u32 = u32::MAX;

impl RowFilter {
    fn new(cube: &Cube, spec: &QuerySpec, members: Option<HashSet<u32>>) -> RowFilter {
        let slot_len = if spec.measure.uses_intervals() {
            spec.interval_seconds()
        } else {
            spec.range.seconds()
        };
        RowFilter {
            day_mode: day_mode(spec),
            start: spec.range.start,
            end: spec.range.end,
            slot_len,
            members,
            filter_table: cube.spatial_store().ancestor_table(spec.spatial_level),
            group_table: spec.group_by.map(|g| cube.spatial_store().ancestor_table(g)),
        }
    }

    /// Interval index for an in-range row, `None` outside the range.
    fn slot(&self, date: i64, tod: u32) -> Option<u32> {
        let ts = if self.day_mode {
            hierarchy::day_start(date)
        } else {
            hierarchy::day_start(date) + tod as i64
        };
        if ts < self.start || ts >= self.end {
            return None;
        }
        Some(((ts - self.start) / self.slot_len) as u32)
    }

    /// Output group for an in-filter row, `None` when filtered out.
    fn group(&self, spatial: u32) -> Option<u32> {
        let at_level = self.filter_table[spatial as usize];
        if let Some(set) = &self.members {
            if !set.contains(&at_level) {
                return None;
            }
        }
        Some(match &self.group_table {
            Some(t) => t[spatial as usize],
            None => MERGED,
        })
    }
}

/// Resolve the query's member names to ids at the filter level, with the
/// area each contributes. Unknown names warn; under the grid scheme a
/// well-formed cell name still contributes its geometric area.
fn resolve_members(
    cube: &Cube,
    spec: &QuerySpec,
    warnings: &mut Vec<String>,
) -> (Option<HashSet<u32>>, f64) {
    let store = cube.spatial_store();
    let Some(names) = &spec.members else {
        let all = store.all_id();
        return (None, store.area_of(all));
    };
    let mut ids = HashSet::new();
    let mut seen = BTreeSet::new();
    let mut area = 0.0;
    for name in names {
        if !seen.insert(name.as_str()) {
            continue;
        }
        match store.lookup(spec.spatial_level, name) {
            Some(id) => {
                ids.insert(id);
                area += store.area_of(id);
            }
            None => {
                // A never-observed grid cell still covers ground.
                let cell = (cube.schema().spatial_scheme == SpatialScheme::Grid)
                    .then(|| GridCell::parse(name))
                    .flatten();
                match cell {
                    Some(c) if c.level == spec.spatial_level => {
                        area += cube.schema().grid.cell_area(c.level);
                    }
                    _ => warnings.push(format!(
                        "unknown member {name:?} at spatial level {}",
                        spec.spatial_level
                    )),
                }
            }
        }
    }
    (Some(ids), area)
}

fn merged_area_is_usable(spec: &QuerySpec, cube: &Cube, area: f64) -> Result<()> {
    if !spec.measure.needs_area() || spec.group_by.is_some() {
        return Ok(());
    }
    if cube.schema().spatial_scheme == SpatialScheme::Grid && spec.members.is_none() {
        return Err(Error::Query(
            "grid density queries need explicit members or a group level".into(),
        ));
    }
    if !(area > 0.0) {
        return Err(Error::Query("query area is empty; nothing to divide by".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Exact path

#[derive(Default, Clone)]
struct Acc {
    fact_count: u64,
    /// Keyword totals over the whole range.
    totals: HashMap<u32, u64>,
    /// Per-(interval, keyword) frequencies for volatility measures.
    per_interval: HashMap<(u32, u32), u64>,
}

fn eval_exact(
    cube: &Cube,
    spec: &QuerySpec,
    rows: &[GroupRow],
    warnings: &mut Vec<String>,
) -> Result<Vec<GroupResult>> {
    let (members, merged_area) = resolve_members(cube, spec, warnings);
    merged_area_is_usable(spec, cube, merged_area)?;
    let filter = RowFilter::new(cube, spec, members);
    let x_table = cube.text_store().ancestor_table(spec.textual_level);
    let track_intervals = spec.measure.uses_intervals();

    let fold = |accs: &mut HashMap<u32, Acc>, row: &GroupRow| {
        let Some(slot) = filter.slot(row.key.date, row.key.tod) else { return };
        let Some(group) = filter.group(row.key.spatial) else { return };
        let acc = accs.entry(group).or_default();
        acc.fact_count += row.fact_count;
        for e in &row.entries {
            let m = x_table[e.member as usize];
            *acc.totals.entry(m).or_insert(0) += e.freq;
            if track_intervals {
                *acc.per_interval.entry((slot, m)).or_insert(0) += e.freq;
            }
        }
    };
    let merge = |mut a: HashMap<u32, Acc>, b: HashMap<u32, Acc>| {
        for (g, acc) in b {
            let t = a.entry(g).or_default();
            t.fact_count += acc.fact_count;
            for (m, f) in acc.totals {
                *t.totals.entry(m).or_insert(0) += f;
            }
            for (k, f) in acc.per_interval {
                *t.per_interval.entry(k).or_insert(0) += f;
            }
        }
        a
    };
    let mut accs = exec::fold_merge(cube.agg_ctx().exec, rows, HashMap::new, fold, merge);

    if spec.group_by.is_none() {
        // The merged result exists even when nothing matched.
        accs.entry(MERGED).or_default();
    }
    let mut groups: Vec<(u32, Acc)> = accs.into_iter().collect();
    groups.sort_by_key(|(g, _)| member_sort_key(cube, *g));

    groups
        .into_iter()
        .map(|(g, acc)| {
            let (member, area) = group_identity(cube, g, merged_area);
            let value = score_exact(cube, spec, &acc, area)?;
            Ok(GroupResult { member, area, value })
        })
        .collect()
}

fn member_sort_key(cube: &Cube, g: u32) -> String {
    if g == MERGED {
        String::new()
    } else {
        cube.spatial_store().name_of(g).to_string()
    }
}

fn group_identity(cube: &Cube, g: u32, merged_area: f64) -> (Option<String>, f64) {
    if g == MERGED {
        (None, merged_area)
    } else {
        let store = cube.spatial_store();
        (Some(store.name_of(g).to_string()), store.area_of(g))
    }
}

fn score_exact(cube: &Cube, spec: &QuerySpec, acc: &Acc, area: f64) -> Result<MeasureValue> {
    let x = spec.intervals;
    match spec.measure {
        MeasureKind::FactCount => Ok(MeasureValue::Count(acc.fact_count)),
        MeasureKind::SurfaceArea => Ok(MeasureValue::Area(area)),
        MeasureKind::KeywordFrequency => {
            Ok(MeasureValue::Keywords(keyword_scores(cube, spec, acc, |f, _| f as f64)))
        }
        MeasureKind::KeywordDensity => {
            Ok(MeasureValue::Keywords(keyword_scores(cube, spec, acc, |f, _| f as f64 / area)))
        }
        MeasureKind::KeywordVolatility => Ok(MeasureValue::Keywords(keyword_scores(
            cube,
            spec,
            acc,
            |_, delta| delta as f64 / (area * x as f64),
        ))),
        MeasureKind::TopKFrequent => Ok(rank_exact(cube, spec, acc, RankBy::Frequency)),
        MeasureKind::TopKDense => Ok(rank_exact(cube, spec, acc, RankBy::Density { area })),
        MeasureKind::TopKVolatile => {
            Ok(rank_exact(cube, spec, acc, RankBy::Volatility { area, intervals: x }))
        }
    }
}

/// Sum of absolute frequency steps across intervals, starting from zero.
fn volatility_delta(per_interval: &HashMap<(u32, u32), u64>, member: u32, intervals: u32) -> u64 {
    let mut prev = 0u64;
    let mut delta = 0u64;
    for z in 0..intervals {
        let f = per_interval.get(&(z, member)).copied().unwrap_or(0);
        delta += f.abs_diff(prev);
        prev = f;
    }
    delta
}

/// Scores for the probe keywords (or the whole observed vocabulary when
/// no probes were given). Probes missing from the data score zero.
fn keyword_scores(
    cube: &Cube,
    spec: &QuerySpec,
    acc: &Acc,
    score: impl Fn(u64, u64) -> f64,
) -> Vec<KeywordScore> {
    let volatile = spec.measure.uses_intervals();
    let delta_of = |m: u32| {
        if volatile {
            volatility_delta(&acc.per_interval, m, spec.intervals)
        } else {
            0
        }
    };
    let mut out: Vec<KeywordScore> = match &spec.keywords {
        Some(probes) => {
            let mut seen = BTreeSet::new();
            probes
                .iter()
                .map(|raw| normalize_probe(raw, spec.textual_level))
                .filter(|name| seen.insert(name.clone()))
                .map(|name| {
                    let (freq, delta) = cube
                        .text_store()
                        .lookup(spec.textual_level, &name)
                        .map(|m| (acc.totals.get(&m).copied().unwrap_or(0), delta_of(m)))
                        .unwrap_or((0, 0));
                    KeywordScore { keyword: name, freq, score: score(freq, delta) }
                })
                .collect()
        }
        None => acc
            .totals
            .iter()
            .map(|(&m, &freq)| KeywordScore {
                keyword: cube.text_store().name_of(m).to_string(),
                freq,
                score: score(freq, delta_of(m)),
            })
            .collect(),
    };
    out.sort_by(|a, b| a.keyword.cmp(&b.keyword));
    out
}

/// Query probes meet the vocabulary the way ingestion built it: term
/// probes go through token normalization, coarser members only fold case.
fn normalize_probe(raw: &str, textual_level: u8) -> String {
    if textual_level == 0 {
        ingest::normalize_token(raw)
    } else {
        raw.to_lowercase()
    }
}

fn rank_exact(cube: &Cube, spec: &QuerySpec, acc: &Acc, by: RankBy) -> MeasureValue {
    let store = cube.text_store();
    let metric = |m: u32, freq: u64| match by {
        RankBy::Frequency | RankBy::Density { .. } => freq,
        RankBy::Volatility { intervals, .. } => {
            volatility_delta(&acc.per_interval, m, intervals)
        }
    };
    let mut scored: Vec<(u64, u32)> =
        acc.totals.iter().map(|(&m, &freq)| (metric(m, freq), m)).collect();
    scored.sort_by(|a, b| {
        b.0.cmp(&a.0).then_with(|| store.name_of(a.1).cmp(store.name_of(b.1)))
    });
    if let TopK::K(k) = spec.k {
        scored.truncate(k as usize);
    }
    let entries = scored
        .into_iter()
        .map(|(metric, m)| RankEntry {
            keyword: store.name_of(m).to_string(),
            freq: acc.totals[&m],
            score: to_score(by, metric),
            guaranteed: true,
        })
        .collect::<Vec<_>>();
    let delta = entries.len() as u32;
    MeasureValue::Ranking(Ranking { entries, epsilon: 0, delta, approximate: false })
}

fn to_score(by: RankBy, metric: u64) -> f64 {
    match by {
        RankBy::Frequency => metric as f64,
        RankBy::Density { area } => metric as f64 / area,
        RankBy::Volatility { area, intervals } => metric as f64 / (area * intervals as f64),
    }
}

// ---------------------------------------------------------------------------
// Approximate path

fn eval_approx(
    cube: &Cube,
    spec: &QuerySpec,
    rows: &[GroupRow],
    warnings: &mut Vec<String>,
) -> Result<Vec<GroupResult>> {
    let TopK::K(k) = spec.k else {
        return Err(Error::Query("unbounded rankings cannot take the approximate path".into()));
    };
    let (members, merged_area) = resolve_members(cube, spec, warnings);
    merged_area_is_usable(spec, cube, merged_area)?;
    let filter = RowFilter::new(cube, spec, members);

    let mut lists: HashMap<u32, Vec<TruncatedList<'_>>> = HashMap::new();
    for row in rows {
        let Some(slot) = filter.slot(row.key.date, row.key.tod) else { continue };
        let Some(group) = filter.group(row.key.spatial) else { continue };
        lists
            .entry(group)
            .or_default()
            .push(TruncatedList { entries: &row.entries, boundary: row.boundary, interval: slot });
    }
    if spec.group_by.is_none() {
        lists.entry(MERGED).or_default();
    }
    let mut groups: Vec<(u32, Vec<TruncatedList<'_>>)> = lists.into_iter().collect();
    groups.sort_by_key(|(g, _)| member_sort_key(cube, *g));

    groups
        .into_iter()
        .map(|(g, lists)| {
            let (member, area) = group_identity(cube, g, merged_area);
            let by = match spec.measure {
                MeasureKind::TopKFrequent => RankBy::Frequency,
                MeasureKind::TopKDense => RankBy::Density { area },
                MeasureKind::TopKVolatile => {
                    RankBy::Volatility { area, intervals: spec.intervals }
                }
                _ => unreachable!("only rankings reach the approximate path"),
            };
            let ranking = merge_truncated(&lists, cube.text_store(), k as usize, by);
            Ok(GroupResult { member, area, value: MeasureValue::Ranking(ranking) })
        })
        .collect()
}

/// Merge truncated ranked lists into a bounded-error top-k.
///
/// Each list contributes its first `k+1` entries and one ε seed: the
/// (k+1)-th frequency when it is long enough, its stored truncation
/// boundary otherwise. δ is the length of the leading run of the merged
/// ranking whose aggregated frequencies reach ε; those positions cannot
/// be displaced by whatever the truncation hid.
pub fn merge_truncated(
    lists: &[TruncatedList<'_>],
    textual: &TextStore,
    k: usize,
    by: RankBy,
) -> Ranking {
    let mut epsilon = 0u64;
    let mut totals: HashMap<u32, u64> = HashMap::new();
    let mut per_interval: HashMap<(u32, u32), u64> = HashMap::new();
    let intervals = match by {
        RankBy::Volatility { intervals, .. } => intervals,
        _ => 1,
    };
    for list in lists {
        let take = list.entries.len().min(k + 1);
        epsilon += if list.entries.len() > k { list.entries[k].freq } else { list.boundary };
        for e in &list.entries[..take] {
            *totals.entry(e.member).or_insert(0) += e.freq;
            if by.uses_intervals() {
                *per_interval.entry((list.interval, e.member)).or_insert(0) += e.freq;
            }
        }
    }
    let metric = |m: u32, freq: u64| match by {
        RankBy::Frequency | RankBy::Density { .. } => freq,
        RankBy::Volatility { .. } => volatility_delta(&per_interval, m, intervals),
    };
    let mut scored: Vec<(u64, u32)> =
        totals.iter().map(|(&m, &f)| (metric(m, f), m)).collect();
    scored.sort_by(|a, b| {
        b.0.cmp(&a.0).then_with(|| textual.name_of(a.1).cmp(textual.name_of(b.1)))
    });
    scored.truncate(k);

    // The guarantee is a prefix property: it ends at the first position
    // whose aggregated frequency the hidden mass could overtake.
    let mut delta = 0u32;
    for &(_, m) in &scored {
        if totals[&m] >= epsilon {
            delta += 1;
        } else {
            break;
        }
    }
    let entries = scored
        .iter()
        .enumerate()
        .map(|(i, &(metric, m))| RankEntry {
            keyword: textual.name_of(m).to_string(),
            freq: totals[&m],
            score: to_score(by, metric),
            guaranteed: (i as u32) < delta,
        })
        .collect();
    Ranking { entries, epsilon, delta, approximate: true }
}
