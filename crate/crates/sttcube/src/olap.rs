//! OLAP operators over a cube: slice, dice, roll-up, and drill-down as
//! transformations of an immutable view.
//!
//! A view is a coordinate (one level per dimension) plus accumulated
//! filters. Operators only rewrite that description; `cells` does the
//! actual work by scanning the cheapest stored cuboid that is fine
//! enough for both the view's levels and its filters, so composing
//! operators never loses precision.

use std::collections::{BTreeMap, BTreeSet};

use crate::cube::Cube;
use crate::cuboid::{self, Cuboid, GroupRow};
use crate::error::{Error, Result};
use crate::hierarchy;
use crate::lattice::Coord;
use crate::model::{TextualScheme, TimeRange};

/// The four axes of a view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Date,
    TimeOfDay,
    Spatial,
    Textual,
}

/// One membership condition: the member's ancestor at `level` must be
/// in `members`. Conditions on different calls AND together.
#[derive(Debug, Clone)]
struct Conjunct<C: Ord> {
    level: u8,
    members: BTreeSet<C>,
}

/// Predicates for [`CubeView::stt_dice`]. Every populated field must
/// hold (conjunction); the member lists are alternatives within their
/// dimension. The default diced against is the tautology.
#[derive(Debug, Clone, Default)]
pub struct DiceSpec {
    pub time: Option<TimeRange>,
    /// Member names at a date level, e.g. `(1, vec!["2019-10"])`.
    pub dates: Option<(u8, Vec<String>)>,
    pub tods: Option<(u8, Vec<String>)>,
    pub spatial: Option<(u8, Vec<String>)>,
    pub textual: Option<(u8, Vec<String>)>,
    /// Keep only view cells whose group has at least this many facts.
    pub min_fact_count: Option<u64>,
}

/// One cell of a materialized view: member codes at the view's levels
/// and the measures for that cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewCell {
    pub date: i64,
    pub tod: u32,
    pub spatial: u32,
    /// Textual member id; the all member for keyword-free groups.
    pub textual: u32,
    /// Facts in the cell's (date, time-of-day, spatial) group; repeated
    /// across the group's keyword cells.
    pub fact_count: u64,
    pub freq: u64,
}

#[derive(Debug, Clone)]
pub struct CubeView<'c> {
    cube: &'c Cube,
    coord: Coord,
    time: Option<TimeRange>,
    dates: Vec<Conjunct<i64>>,
    tods: Vec<Conjunct<u32>>,
    spatial: Vec<Conjunct<u32>>,
    textual: Vec<Conjunct<u32>>,
    min_fact_count: Option<u64>,
    warnings: Vec<String>,
}

impl Cube {
    /// A view of the whole cube at base granularity.
    pub fn view(&self) -> CubeView<'_> {
        CubeView {
            cube: self,
            coord: Coord::BASE,
            time: None,
            dates: Vec::new(),
            tods: Vec::new(),
            spatial: Vec::new(),
            textual: Vec::new(),
            min_fact_count: None,
            warnings: Vec::new(),
        }
    }
}

impl<'c> CubeView<'c> {
    pub fn coord(&self) -> Coord {
        self.coord
    }

    /// Messages about conditions that cannot match anything (unknown
    /// member names). The view stays usable; those conditions are empty.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    fn level(&self, dim: Dim) -> u8 {
        match dim {
            Dim::Date => self.coord.date,
            Dim::TimeOfDay => self.coord.tod,
            Dim::Spatial => self.coord.spatial,
            Dim::Textual => self.coord.textual,
        }
    }

    fn all_level(&self, dim: Dim) -> u8 {
        let counts = self.cube.schema().level_counts();
        let i = match dim {
            Dim::Date => 0,
            Dim::TimeOfDay => 1,
            Dim::Spatial => 2,
            Dim::Textual => 3,
        };
        (counts[i] - 1) as u8
    }

    fn with_level(&self, dim: Dim, level: u8) -> CubeView<'c> {
        let mut v = self.clone();
        match dim {
            Dim::Date => v.coord.date = level,
            Dim::TimeOfDay => v.coord.tod = level,
            Dim::Spatial => v.coord.spatial = level,
            Dim::Textual => v.coord.textual = level,
        }
        v
    }

    /// Keep one member of `dim` at the view's current level and remove
    /// the dimension (its level becomes all).
    pub fn stt_slice(&self, dim: Dim, member: &str) -> CubeView<'c> {
        let level = self.level(dim);
        let mut v = self.with_level(dim, self.all_level(dim));
        v.add_member_conjunct(dim, level, std::slice::from_ref(&member.to_string()));
        v
    }

    /// Filter cells by the given predicates; levels are unchanged.
    pub fn stt_dice(&self, dice: &DiceSpec) -> CubeView<'c> {
        let mut v = self.clone();
        if let Some(range) = dice.time {
            v.time = Some(match v.time {
                // Ranges intersect; an empty intersection matches nothing.
                Some(t) => TimeRange { start: t.start.max(range.start), end: t.end.min(range.end) },
                None => range,
            });
        }
        for (dim, cond) in [
            (Dim::Date, &dice.dates),
            (Dim::TimeOfDay, &dice.tods),
            (Dim::Spatial, &dice.spatial),
            (Dim::Textual, &dice.textual),
        ] {
            if let Some((level, names)) = cond {
                v.add_member_conjunct(dim, *level, names);
            }
        }
        if let Some(n) = dice.min_fact_count {
            v.min_fact_count = Some(v.min_fact_count.map_or(n, |p| p.max(n)));
        }
        v
    }

    /// Coarsen `dim` to `level`. Skipping levels applies the composed
    /// steps in one go.
    pub fn stt_rollup(&self, dim: Dim, level: u8) -> Result<CubeView<'c>> {
        if level < self.level(dim) || level > self.all_level(dim) {
            return Err(Error::Query(format!(
                "roll-up must move {dim:?} upward from level {}",
                self.level(dim)
            )));
        }
        Ok(self.with_level(dim, level))
    }

    /// Refine `dim` to `level`, recomputing from finer stored data. The
    /// view's filters keep applying.
    pub fn stt_drilldown(&self, dim: Dim, level: u8) -> Result<CubeView<'c>> {
        if level > self.level(dim) {
            return Err(Error::Query(format!(
                "drill-down must move {dim:?} downward from level {}",
                self.level(dim)
            )));
        }
        Ok(self.with_level(dim, level))
    }

    fn add_member_conjunct(&mut self, dim: Dim, level: u8, names: &[String]) {
        match dim {
            Dim::Date => {
                let mut set = BTreeSet::new();
                for n in names {
                    match hierarchy::parse_date(level, n) {
                        Some(code) => {
                            set.insert(code);
                        }
                        None => self.warn(dim, level, n),
                    }
                }
                self.dates.push(Conjunct { level, members: set });
            }
            Dim::TimeOfDay => {
                let mut set = BTreeSet::new();
                for n in names {
                    match hierarchy::parse_tod(level, n) {
                        Some(code) => {
                            set.insert(code);
                        }
                        None => self.warn(dim, level, n),
                    }
                }
                self.tods.push(Conjunct { level, members: set });
            }
            Dim::Spatial => {
                let mut set = BTreeSet::new();
                for n in names {
                    match self.cube.spatial_store().lookup(level, n) {
                        Some(id) => {
                            set.insert(id);
                        }
                        None => self.warn(dim, level, n),
                    }
                }
                self.spatial.push(Conjunct { level, members: set });
            }
            Dim::Textual => {
                let mut set = BTreeSet::new();
                for n in names {
                    let name =
                        if level == 0 { crate::ingest::normalize_token(n) } else { n.to_lowercase() };
                    match self.cube.text_store().lookup(level, &name) {
                        Some(id) => {
                            set.insert(id);
                        }
                        None => self.warn(dim, level, n),
                    }
                }
                self.textual.push(Conjunct { level, members: set });
            }
        }
    }

    fn warn(&mut self, dim: Dim, level: u8, name: &str) {
        self.warnings.push(format!("unknown {dim:?} member {name:?} at level {level}"));
    }

    /// The coordinate the source rows must be at (or below): fine enough
    /// for the view levels and for every filter.
    fn needed(&self) -> Coord {
        let mut c = self.coord;
        for q in &self.dates {
            c.date = c.date.min(q.level);
        }
        for q in &self.tods {
            c.tod = c.tod.min(q.level);
        }
        for q in &self.spatial {
            c.spatial = c.spatial.min(q.level);
        }
        for q in &self.textual {
            c.textual = c.textual.min(q.level);
        }
        if let Some(t) = self.time {
            c.date = 0;
            if !t.day_aligned() {
                c.tod = 0;
            }
        }
        c
    }

    /// Materialize the view. Cells are ordered by (date, time-of-day,
    /// spatial) group, then keyword name.
    pub fn cells(&self) -> Result<Vec<ViewCell>> {
        let needed = self.needed();
        let scheme = self.cube.schema().textual_scheme;
        if scheme != TextualScheme::Replication
            && self.coord.textual > 0
            && needed.textual < self.coord.textual
        {
            return Err(Error::Query(
                "textual filters below the view level are undefined under single-parent \
                 term assignment"
                    .into(),
            ));
        }
        let ctx = self.cube.agg_ctx();
        let source = self.source(needed);
        let built: Option<Cuboid>;
        let rows: &[GroupRow] = match source {
            Some(coord) if coord == needed => &self.cube.cuboid(coord).unwrap().rows,
            Some(coord) => {
                let src = self.cube.cuboid(coord).unwrap();
                built = Some(cuboid::from_cuboid(&ctx, src, needed, None)?);
                &built.as_ref().unwrap().rows
            }
            None => {
                built = Some(cuboid::from_facts(&ctx, self.cube.facts(), needed, None));
                &built.as_ref().unwrap().rows
            }
        };

        let sstore = self.cube.spatial_store();
        let tstore = self.cube.text_store();
        let spatial_filters: Vec<(&Conjunct<u32>, Vec<u32>)> =
            self.spatial.iter().map(|q| (q, sstore.ancestor_table(q.level))).collect();
        let textual_filters: Vec<(&Conjunct<u32>, Vec<u32>)> =
            self.textual.iter().map(|q| (q, tstore.ancestor_table(q.level))).collect();
        let out_spatial = sstore.ancestor_table(self.coord.spatial);
        let out_textual = tstore.ancestor_table(self.coord.textual);

        let mut groups: BTreeMap<(i64, u32, u32), (u64, BTreeMap<u32, u64>)> = BTreeMap::new();
        'rows: for row in rows {
            if let Some(t) = self.time {
                let ts = hierarchy::day_start(row.key.date)
                    + if needed.tod == 0 { row.key.tod as i64 } else { 0 };
                if ts < t.start || ts >= t.end {
                    continue;
                }
            }
            for q in &self.dates {
                if !q.members.contains(&hierarchy::date_roll(row.key.date, needed.date, q.level)) {
                    continue 'rows;
                }
            }
            for q in &self.tods {
                if !q.members.contains(&hierarchy::tod_roll(row.key.tod, needed.tod, q.level)) {
                    continue 'rows;
                }
            }
            for (q, table) in &spatial_filters {
                if !q.members.contains(&table[row.key.spatial as usize]) {
                    continue 'rows;
                }
            }
            let key = (
                hierarchy::date_roll(row.key.date, needed.date, self.coord.date),
                hierarchy::tod_roll(row.key.tod, needed.tod, self.coord.tod),
                out_spatial[row.key.spatial as usize],
            );
            let group = groups.entry(key).or_default();
            group.0 += row.fact_count;
            'entries: for e in &row.entries {
                for (q, table) in &textual_filters {
                    if !q.members.contains(&table[e.member as usize]) {
                        continue 'entries;
                    }
                }
                *group.1.entry(out_textual[e.member as usize]).or_insert(0) += e.freq;
            }
        }

        let mut cells = Vec::new();
        for ((date, tod, spatial), (fact_count, freqs)) in groups {
            if self.min_fact_count.map_or(false, |min| fact_count < min) {
                continue;
            }
            if freqs.is_empty() {
                // With a textual condition in force an empty keyword set
                // means the cells were filtered away, not that the group
                // is keyword-free; only the latter keeps a placeholder.
                if self.textual.is_empty() {
                    cells.push(ViewCell {
                        date,
                        tod,
                        spatial,
                        textual: tstore.all_id(),
                        fact_count,
                        freq: 0,
                    });
                }
                continue;
            }
            let mut named: Vec<(u32, u64)> = freqs.into_iter().collect();
            named.sort_by(|a, b| tstore.name_of(a.0).cmp(tstore.name_of(b.0)));
            cells.extend(named.into_iter().map(|(textual, freq)| ViewCell {
                date,
                tod,
                spatial,
                textual,
                fact_count,
                freq,
            }));
        }
        Ok(cells)
    }

    /// Total facts matching the view's filters.
    pub fn fact_count(&self) -> Result<u64> {
        let cells = self.cells()?;
        let mut total = 0;
        let mut last = None;
        for c in &cells {
            let key = (c.date, c.tod, c.spatial);
            if last != Some(key) {
                total += c.fact_count;
                last = Some(key);
            }
        }
        Ok(total)
    }

    /// Member names of a cell at the view's levels.
    pub fn render(&self, cell: &ViewCell) -> [String; 4] {
        [
            hierarchy::render_date(self.coord.date, cell.date),
            hierarchy::render_tod(self.coord.tod, cell.tod),
            self.cube.spatial_store().name_of(cell.spatial).to_string(),
            self.cube.text_store().name_of(cell.textual).to_string(),
        ]
    }

    /// Smallest untruncated stored cuboid that covers `needed`; `None`
    /// sends the computation to the raw facts.
    fn source(&self, needed: Coord) -> Option<Coord> {
        let scheme = self.cube.schema().textual_scheme;
        self.cube
            .cuboids()
            .filter(|c| c.k.is_none() && needed.derivable_from(c.coord, scheme))
            .min_by_key(|c| (c.row_count(), c.coord))
            .map(|c| c.coord)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::tests::{build, sample_objects};
    use crate::ingest::parse_ts;
    use crate::materialize::{Budget, MaterializeConfig, Strategy};
    use crate::model::TextualScheme;

    fn range(from: &str, to: &str) -> TimeRange {
        TimeRange::new(parse_ts(from).unwrap(), parse_ts(to).unwrap())
    }

    fn nm() -> MaterializeConfig {
        MaterializeConfig { strategy: Strategy::None, ..MaterializeConfig::default() }
    }

    #[test]
    fn slice_on_a_day_keeps_its_facts() {
        let cube = build(&sample_objects(), TextualScheme::Replication, nm());
        let day = cube.view().stt_slice(Dim::Date, "2019-10-20");
        assert_eq!(day.fact_count().unwrap(), 2);
        // The dimension is gone: its level is all.
        assert_eq!(day.coord().date, 4);
    }

    #[test]
    fn day_slices_partition_the_fact_count() {
        let cube = build(&sample_objects(), TextualScheme::Replication, nm());
        let view = cube.view();
        let total = view.fact_count().unwrap();
        let split: u64 = ["2019-10-20", "2019-10-24"]
            .iter()
            .map(|d| view.stt_slice(Dim::Date, d).fact_count().unwrap())
            .sum();
        assert_eq!(split, total);
        // Slicing the all level keeps every fact.
        let all = view.stt_rollup(Dim::Date, 4).unwrap().stt_slice(Dim::Date, "ALL");
        assert_eq!(all.fact_count().unwrap(), total);
    }

    #[test]
    fn dice_time_and_term_isolates_one_cell() {
        let cube = build(&sample_objects(), TextualScheme::Replication, nm());
        let diced = cube.view().stt_dice(&DiceSpec {
            time: Some(range("2019-10-20T00:00:00Z", "2019-10-21T00:00:00Z")),
            textual: Some((0, vec!["banana".into()])),
            ..DiceSpec::default()
        });
        let cells = diced.cells().unwrap();
        assert_eq!(cells.len(), 1);
        let names = diced.render(&cells[0]);
        assert_eq!(names[0], "2019-10-20");
        assert_eq!(names[1], "11:35:56");
        assert_eq!(names[3], "banana");
        assert_eq!(cells[0].freq, 1);
    }

    #[test]
    fn tautology_dice_is_identity() {
        let cube = build(&sample_objects(), TextualScheme::Replication, nm());
        let view = cube.view();
        assert_eq!(view.stt_dice(&DiceSpec::default()).cells().unwrap(), view.cells().unwrap());
    }

    #[test]
    fn fact_count_threshold_at_location_day_is_empty() {
        // The only point with two facts has them on different days, so no
        // (location, day) group reaches two.
        let cube = build(&sample_objects(), TextualScheme::Replication, nm());
        let grouped = cube
            .view()
            .stt_rollup(Dim::TimeOfDay, 3)
            .unwrap()
            .stt_rollup(Dim::Textual, 4)
            .unwrap();
        let diced = grouped.stt_dice(&DiceSpec {
            min_fact_count: Some(2),
            ..DiceSpec::default()
        });
        assert!(diced.cells().unwrap().is_empty());
        // Dropping the day dimension merges the point's two facts.
        let by_location = grouped.stt_rollup(Dim::Date, 4).unwrap().stt_dice(&DiceSpec {
            min_fact_count: Some(2),
            ..DiceSpec::default()
        });
        assert_eq!(by_location.cells().unwrap().len(), 1);
    }

    #[test]
    fn replication_rollup_spreads_a_fact_over_its_themes() {
        let cube = build(&sample_objects(), TextualScheme::Replication, nm());
        let themes = cube
            .view()
            .stt_slice(Dim::Date, "2019-10-20")
            .stt_dice(&DiceSpec {
                tods: Some((0, vec!["11:12:13".into()])),
                ..DiceSpec::default()
            })
            .stt_rollup(Dim::Textual, 1)
            .unwrap();
        let cells = themes.cells().unwrap();
        let pairs: Vec<(String, u64)> =
            cells.iter().map(|c| (themes.render(c)[3].clone(), c.freq)).collect();
        // apple and fruit both land in fruits; #love keeps to itself.
        assert_eq!(pairs, vec![("#love".to_string(), 1), ("fruits".to_string(), 2)]);
    }

    #[test]
    fn composed_date_rollup_equals_direct() {
        let cube = build(&sample_objects(), TextualScheme::Replication, nm());
        let composed = cube
            .view()
            .stt_rollup(Dim::Date, 1)
            .unwrap()
            .stt_rollup(Dim::Date, 2)
            .unwrap();
        let direct = cube.view().stt_rollup(Dim::Date, 2).unwrap();
        assert_eq!(composed.cells().unwrap(), direct.cells().unwrap());
    }

    #[test]
    fn drilldown_inverts_rollup() {
        let cube = build(&sample_objects(), TextualScheme::Replication, nm());
        let filtered = cube.view().stt_slice(Dim::Date, "2019-10-24");
        let child = filtered.stt_rollup(Dim::Spatial, 1).unwrap();
        let via_parent = child
            .stt_rollup(Dim::Spatial, 2)
            .unwrap()
            .stt_drilldown(Dim::Spatial, 1)
            .unwrap();
        assert_eq!(via_parent.cells().unwrap(), child.cells().unwrap());
    }

    #[test]
    fn drilldown_region_preserves_city_partition() {
        let cube = build(&sample_objects(), TextualScheme::Replication, nm());
        let regions = cube
            .view()
            .stt_rollup(Dim::TimeOfDay, 3)
            .unwrap()
            .stt_rollup(Dim::Date, 4)
            .unwrap()
            .stt_rollup(Dim::Textual, 4)
            .unwrap()
            .stt_rollup(Dim::Spatial, 2)
            .unwrap();
        let cities = regions.stt_drilldown(Dim::Spatial, 1).unwrap();
        let region_total: u64 = regions.cells().unwrap().iter().map(|c| c.fact_count).sum();
        let city_total: u64 = cities.cells().unwrap().iter().map(|c| c.fact_count).sum();
        assert_eq!(region_total, city_total);
        assert_eq!(region_total, 4);
    }

    #[test]
    fn views_read_from_stored_cuboids_when_possible(){
        let full = build(
            &sample_objects(),
            TextualScheme::Replication,
            MaterializeConfig { strategy: Strategy::Full, ..MaterializeConfig::default() },
        );
        let none = build(&sample_objects(), TextualScheme::Replication, nm());
        let shape = |cube: &Cube| {
            cube.view()
                .stt_rollup(Dim::Date, 2)
                .unwrap()
                .stt_rollup(Dim::Spatial, 2)
                .unwrap()
                .stt_rollup(Dim::Textual, 1)
                .unwrap()
                .stt_rollup(Dim::TimeOfDay, 3)
                .unwrap()
                .cells()
                .unwrap()
        };
        // A fully materialized cube and a bare one agree cell for cell.
        assert_eq!(shape(&full), shape(&none));
    }

    #[test]
    fn majority_rollup_assigns_one_theme_per_fact() {
        let cube = build(&sample_objects(), TextualScheme::Majority, nm());
        let themes = cube
            .view()
            .stt_rollup(Dim::Textual, 1)
            .unwrap()
            .stt_rollup(Dim::Spatial, 4)
            .unwrap()
            .stt_rollup(Dim::Date, 4)
            .unwrap()
            .stt_rollup(Dim::TimeOfDay, 3)
            .unwrap();
        let cells = themes.cells().unwrap();
        let pairs: Vec<(String, u64)> =
            cells.iter().map(|c| (themes.render(c)[3].clone(), c.freq)).collect();
        // Votes: fact 1 fruits (apple+fruit beat #love), fact 2 ties to
        // #newyear by name, fact 3 ties to fruits by name, fact 4 #fresh.
        assert_eq!(
            pairs,
            vec![
                ("#fresh".to_string(), 1),
                ("#newyear".to_string(), 1),
                ("fruits".to_string(), 2),
            ]
        );
        let total: u64 = cells.iter().map(|c| c.freq).sum();
        assert_eq!(total, 4, "one theme per fact");
    }

    #[test]
    fn unknown_slice_member_warns_and_empties() {
        let cube = build(&sample_objects(), TextualScheme::Replication, nm());
        let view = cube.view().stt_slice(Dim::Date, "not-a-day");
        assert_eq!(view.warnings().len(), 1);
        assert!(view.cells().unwrap().is_empty());
    }

    #[test]
    fn operators_compose_on_partial_cubes() {
        let cube = build(
            &sample_objects(),
            TextualScheme::Replication,
            MaterializeConfig {
                strategy: Strategy::PartialExact,
                budget: Budget::Cuboids(4),
                strict_budget: true,
                ..MaterializeConfig::default()
            },
        );
        let v = cube
            .view()
            .stt_dice(&DiceSpec {
                time: Some(range("2019-10-01T00:00:00Z", "2019-11-01T00:00:00Z")),
                ..DiceSpec::default()
            })
            .stt_rollup(Dim::Spatial, 3)
            .unwrap()
            .stt_slice(Dim::Spatial, "denmark")
            .stt_rollup(Dim::Textual, 4)
            .unwrap()
            .stt_rollup(Dim::Date, 3)
            .unwrap()
            .stt_drilldown(Dim::Date, 1)
            .unwrap()
            .stt_rollup(Dim::TimeOfDay, 2)
            .unwrap();
        let cells = v.cells().unwrap();
        let facts: u64 = v.fact_count().unwrap();
        assert_eq!(facts, 4);
        assert!(!cells.is_empty());
    }
}
