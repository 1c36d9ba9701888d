//! Hierarchies: temporal level codes, spatial and textual taxonomies, and
//! the parent-assignment schemes that map a fact's terms upward.
//!
//! Temporal members are pure arithmetic on the timestamp. Spatial and
//! textual members come from loaded taxonomies; lookups for terms absent
//! from the textual taxonomy return the term itself (own parent), which
//! also pins `#`-prefixed terms to themselves at every level.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use chrono::{Datelike, TimeZone, Utc};

use crate::error::{Error, Result};
use crate::ingest::UNKNOWN_MEMBER;

/// Name of the single member of every `all` level.
pub const ALL_MEMBER: &str = "ALL";

// ---------------------------------------------------------------------------
// Temporal

/// Days since the epoch, floor division so pre-1970 instants still work.
pub fn day_of(ts: i64) -> i64 {
    ts.div_euclid(86_400)
}

/// Seconds past UTC midnight.
pub fn second_of_day(ts: i64) -> u32 {
    ts.rem_euclid(86_400) as u32
}

/// Epoch second at which a day starts.
pub fn day_start(day: i64) -> i64 {
    day * 86_400
}

fn ymd(day: i64) -> (i32, u32, u32) {
    let dt = Utc.timestamp_opt(day_start(day), 0).single().expect("day in chrono range");
    (dt.year(), dt.month(), dt.day())
}

/// Code of the calendar-date member containing `day` at `level`
/// (0 = day .. 4 = all). Codes are ordered like the calendar.
pub fn date_code(day: i64, level: u8) -> i64 {
    match level {
        0 => day,
        1 => {
            let (y, m, _) = ymd(day);
            y as i64 * 12 + (m as i64 - 1)
        }
        2 => {
            let (y, m, _) = ymd(day);
            y as i64 * 4 + (m as i64 - 1) / 3
        }
        3 => ymd(day).0 as i64,
        _ => 0,
    }
}

/// Render a date-level code the way member ids appear in output files.
pub fn render_date(level: u8, code: i64) -> String {
    match level {
        0 => {
            let (y, m, d) = ymd(code);
            format!("{y:04}-{m:02}-{d:02}")
        }
        1 => format!("{:04}-{:02}", code.div_euclid(12), code.rem_euclid(12) + 1),
        2 => format!("{:04}-Q{}", code.div_euclid(4), code.rem_euclid(4) + 1),
        3 => format!("{code:04}"),
        _ => ALL_MEMBER.to_string(),
    }
}

/// Inverse of [`render_date`]. `None` when the name does not belong to
/// the level.
pub fn parse_date(level: u8, name: &str) -> Option<i64> {
    match level {
        0 => {
            let d = chrono::NaiveDate::parse_from_str(name, "%Y-%m-%d").ok()?;
            Some(day_of(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp()))
        }
        1 => {
            let (y, m) = name.split_once('-')?;
            let m: i64 = m.parse().ok()?;
            (1..=12).contains(&m).then(|| y.parse::<i64>().ok().map(|y| y * 12 + m - 1))?
        }
        2 => {
            let (y, q) = name.split_once("-Q")?;
            let q: i64 = q.parse().ok()?;
            (1..=4).contains(&q).then(|| y.parse::<i64>().ok().map(|y| y * 4 + q - 1))?
        }
        3 => name.parse().ok(),
        _ => (name == ALL_MEMBER).then_some(0),
    }
}

/// Code of the time-of-day member at `level` (0 = second .. 3 = all).
pub fn tod_code(second: u32, level: u8) -> u32 {
    match level {
        0 => second,
        1 => second / 60,
        2 => second / 3_600,
        _ => 0,
    }
}

/// Roll a date-level code upward. Only day-based steps touch the
/// calendar; the rest is integer arithmetic on the code layout.
pub fn date_roll(code: i64, from: u8, to: u8) -> i64 {
    debug_assert!(to >= from, "date codes only roll upward");
    match (from, to) {
        _ if from == to => code,
        (_, 4..) => 0,
        (0, _) => date_code(code, to),
        (1, 2) => code.div_euclid(12) * 4 + code.rem_euclid(12) / 3,
        (1, 3) => code.div_euclid(12),
        (2, 3) => code.div_euclid(4),
        _ => unreachable!("no step from date level {from} to {to}"),
    }
}

/// Roll a time-of-day code upward.
pub fn tod_roll(code: u32, from: u8, to: u8) -> u32 {
    debug_assert!(to >= from, "time-of-day codes only roll upward");
    match (from, to) {
        _ if from == to => code,
        (_, 3..) => 0,
        (0, 1) | (1, 2) => code / 60,
        (0, 2) => code / 3_600,
        _ => unreachable!("no step from time-of-day level {from} to {to}"),
    }
}

pub fn render_tod(level: u8, code: u32) -> String {
    match level {
        0 => format!("{:02}:{:02}:{:02}", code / 3_600, (code / 60) % 60, code % 60),
        1 => format!("{:02}:{:02}", code / 60, code % 60),
        2 => format!("{code:02}"),
        _ => ALL_MEMBER.to_string(),
    }
}

/// Inverse of [`render_tod`].
pub fn parse_tod(level: u8, name: &str) -> Option<u32> {
    let field = |s: &str, max: u32| s.parse::<u32>().ok().filter(|v| *v < max);
    match level {
        0 => {
            let mut it = name.splitn(3, ':');
            let h = field(it.next()?, 24)?;
            let m = field(it.next()?, 60)?;
            let s = field(it.next()?, 60)?;
            Some(h * 3_600 + m * 60 + s)
        }
        1 => {
            let (h, m) = name.split_once(':')?;
            Some(field(h, 24)? * 60 + field(m, 60)?)
        }
        2 => field(name, 24),
        _ => (name == ALL_MEMBER).then_some(0),
    }
}

// ---------------------------------------------------------------------------
// Spatial taxonomy

/// Levels a spatial taxonomy row may declare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SemLevel {
    City,
    Region,
    Country,
}

impl SemLevel {
    fn parse(s: &str) -> Option<SemLevel> {
        match s.to_ascii_lowercase().as_str() {
            "city" => Some(SemLevel::City),
            "region" => Some(SemLevel::Region),
            "country" => Some(SemLevel::Country),
            _ => None,
        }
    }

    /// Index within the semantic spatial hierarchy (location = 0).
    pub fn index(self) -> u8 {
        match self {
            SemLevel::City => 1,
            SemLevel::Region => 2,
            SemLevel::Country => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMember {
    pub id: String,
    pub level: SemLevel,
    pub name: String,
    pub parent: Option<String>,
    pub rep_lat: f64,
    pub rep_lon: f64,
    pub surface_area: f64,
}

/// City/region/country members with parent links and surface areas.
///
/// Loading inserts an [`UNKNOWN_MEMBER`] chain whose surface area is the
/// sum of all known city areas, so out-of-cutoff points keep a positive
/// area at every level.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpatialTaxonomy {
    cities: BTreeMap<String, SpatialMember>,
    regions: BTreeMap<String, SpatialMember>,
    countries: BTreeMap<String, SpatialMember>,
}

impl SpatialTaxonomy {
    /// TSV columns: `member_id level name parent_id rep_lat rep_lon
    /// surface_area_km2`, header row required.
    pub fn from_reader(input: impl BufRead) -> Result<Self> {
        let mut rdr =
            csv::ReaderBuilder::new().delimiter(b'\t').flexible(true).from_reader(input);
        let headers = rdr.headers().map_err(Error::Csv)?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Taxonomy(format!("spatial taxonomy misses column {name}")))
        };
        let (c_id, c_level, c_name) = (col("member_id")?, col("level")?, col("name")?);
        let (c_parent, c_lat, c_lon) = (col("parent_id")?, col("rep_lat")?, col("rep_lon")?);
        let c_area = col("surface_area_km2")?;

        let mut tax = SpatialTaxonomy::default();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(Error::Csv)?;
            let field = |c: usize| rec.get(c).unwrap_or("").trim();
            let id = field(c_id).to_string();
            if id.is_empty() {
                return Err(Error::Taxonomy(format!("row {}: empty member_id", i + 2)));
            }
            let level = SemLevel::parse(field(c_level)).ok_or_else(|| {
                Error::Taxonomy(format!("row {}: unknown level {:?}", i + 2, field(c_level)))
            })?;
            let parent = match field(c_parent) {
                "" => None,
                p if p.eq_ignore_ascii_case("all") => None,
                p => Some(p.to_string()),
            };
            let parse_coord = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite());
            let (rep_lat, rep_lon) =
                (parse_coord(field(c_lat)).unwrap_or(f64::NAN), parse_coord(field(c_lon)).unwrap_or(f64::NAN));
            let surface_area = field(c_area).parse::<f64>().unwrap_or(0.0);
            if !(surface_area > 0.0) {
                return Err(Error::Taxonomy(format!("row {}: {} needs surface_area > 0", i + 2, id)));
            }
            if level == SemLevel::City
                && !(rep_lat.is_finite()
                    && rep_lon.is_finite()
                    && rep_lat.abs() <= 90.0
                    && rep_lon.abs() <= 180.0)
            {
                return Err(Error::Taxonomy(format!(
                    "row {}: city {} needs a representative point",
                    i + 2,
                    id
                )));
            }
            let member =
                SpatialMember { id: id.clone(), level, name: field(c_name).to_string(), parent, rep_lat, rep_lon, surface_area };
            let map = tax.level_map_mut(level);
            match map.entry(id.clone()) {
                Entry::Vacant(e) => {
                    e.insert(member);
                }
                Entry::Occupied(_) => {
                    return Err(Error::Taxonomy(format!("duplicate member {id} at {level:?}")))
                }
            }
        }
        tax.link_unknown();
        tax.validate()?;
        Ok(tax)
    }

    fn level_map_mut(&mut self, level: SemLevel) -> &mut BTreeMap<String, SpatialMember> {
        match level {
            SemLevel::City => &mut self.cities,
            SemLevel::Region => &mut self.regions,
            SemLevel::Country => &mut self.countries,
        }
    }

    fn level_map(&self, level: SemLevel) -> &BTreeMap<String, SpatialMember> {
        match level {
            SemLevel::City => &self.cities,
            SemLevel::Region => &self.regions,
            SemLevel::Country => &self.countries,
        }
    }

    /// Catch-all members for points no city claims. Their surface area is
    /// the sum of known city areas at every level.
    fn link_unknown(&mut self) {
        let area: f64 = self.cities.values().map(|c| c.surface_area).sum();
        let area = if area > 0.0 { area } else { 1.0 };
        for level in [SemLevel::City, SemLevel::Region, SemLevel::Country] {
            let parent =
                if level == SemLevel::Country { None } else { Some(UNKNOWN_MEMBER.to_string()) };
            self.level_map_mut(level).insert(
                UNKNOWN_MEMBER.to_string(),
                SpatialMember {
                    id: UNKNOWN_MEMBER.to_string(),
                    level,
                    name: UNKNOWN_MEMBER.to_string(),
                    parent,
                    rep_lat: f64::NAN,
                    rep_lon: f64::NAN,
                    surface_area: area,
                },
            );
        }
    }

    fn validate(&self) -> Result<()> {
        for city in self.cities.values() {
            let p = city.parent.as_deref().ok_or_else(|| {
                Error::Taxonomy(format!("city {} has no parent region", city.id))
            })?;
            if !self.regions.contains_key(p) {
                return Err(Error::Taxonomy(format!("city {} points at missing region {p}", city.id)));
            }
        }
        for region in self.regions.values() {
            let p = region.parent.as_deref().ok_or_else(|| {
                Error::Taxonomy(format!("region {} has no parent country", region.id))
            })?;
            if !self.countries.contains_key(p) {
                return Err(Error::Taxonomy(format!(
                    "region {} points at missing country {p}",
                    region.id
                )));
            }
        }
        Ok(())
    }

    /// Geocodable cities (the UNKNOWN placeholder has no point and is
    /// excluded).
    pub fn cities(&self) -> impl Iterator<Item = &SpatialMember> {
        self.cities.values().filter(|c| c.rep_lat.is_finite())
    }

    /// Every city member in id order, the UNKNOWN placeholder included.
    pub fn all_cities(&self) -> impl Iterator<Item = &SpatialMember> {
        self.cities.values()
    }

    pub fn regions(&self) -> impl Iterator<Item = &SpatialMember> {
        self.regions.values()
    }

    pub fn countries(&self) -> impl Iterator<Item = &SpatialMember> {
        self.countries.values()
    }

    pub fn get(&self, level: SemLevel, id: &str) -> Option<&SpatialMember> {
        self.level_map(level).get(id)
    }

    /// Ancestor of a city at a semantic level index (1 = city .. 3 =
    /// country, 4 = all).
    pub fn ancestor_of_city<'a>(&'a self, city_id: &'a str, level_idx: u8) -> &'a str {
        if level_idx >= 4 {
            return ALL_MEMBER;
        }
        let mut id = city_id;
        let mut lvl = SemLevel::City;
        loop {
            if lvl.index() == level_idx {
                return id;
            }
            let member = match self.get(lvl, id) {
                Some(m) => m,
                None => return UNKNOWN_MEMBER,
            };
            match (&member.parent, lvl) {
                (Some(p), SemLevel::City) => {
                    id = p;
                    lvl = SemLevel::Region;
                }
                (Some(p), SemLevel::Region) => {
                    id = p;
                    lvl = SemLevel::Country;
                }
                _ => return id,
            }
        }
    }

    /// Surface area of a member at a semantic level index.
    pub fn area_of(&self, level_idx: u8, id: &str) -> Option<f64> {
        let level = match level_idx {
            1 => SemLevel::City,
            2 => SemLevel::Region,
            3 => SemLevel::Country,
            _ => return None,
        };
        self.get(level, id).map(|m| m.surface_area)
    }

    pub fn is_empty(&self) -> bool {
        // The UNKNOWN chain alone does not make a taxonomy.
        !self.cities.values().any(|c| c.rep_lat.is_finite())
    }

    /// Write the taxonomy in the format [`SpatialTaxonomy::from_reader`]
    /// accepts. The UNKNOWN chain is omitted; loading regenerates it.
    pub fn dump_tsv(&self, mut out: impl std::io::Write) -> Result<()> {
        writeln!(out, "member_id\tlevel\tname\tparent_id\trep_lat\trep_lon\tsurface_area_km2")?;
        let levels = [
            (&self.countries, "country"),
            (&self.regions, "region"),
            (&self.cities, "city"),
        ];
        for (map, level) in levels {
            for m in map.values().filter(|m| m.id != UNKNOWN_MEMBER) {
                let coord = |v: f64| if v.is_finite() { format!("{v:?}") } else { String::new() };
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{:?}",
                    m.id,
                    level,
                    m.name,
                    m.parent.as_deref().unwrap_or(""),
                    coord(m.rep_lat),
                    coord(m.rep_lon),
                    m.surface_area,
                )?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Textual taxonomy

/// Indices into the textual hierarchy.
pub const TERM: u8 = 0;
pub const THEME: u8 = 1;
pub const TOPIC: u8 = 2;
pub const CONCEPT: u8 = 3;
pub const TEXT_ALL: u8 = 4;

/// Single-parent hypernym maps for the three upward steps of the textual
/// hierarchy. Absent children are their own parent, so the maps only hold
/// genuine links.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TextTaxonomy {
    term_to_theme: BTreeMap<String, String>,
    theme_to_topic: BTreeMap<String, String>,
    topic_to_concept: BTreeMap<String, String>,
}

impl TextTaxonomy {
    /// TSV rows `child<TAB>parent<TAB>level` where `level` names the
    /// parent's level: `theme`, `topic`, or `concept`. No header.
    pub fn from_reader(input: impl BufRead) -> Result<Self> {
        let mut tax = TextTaxonomy::default();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') && t.contains('\t') == false {
                continue;
            }
            let mut parts = t.split('\t');
            let (child, parent, level) = match (parts.next(), parts.next(), parts.next()) {
                (Some(c), Some(p), Some(l)) => (c.trim(), p.trim(), l.trim()),
                _ => {
                    return Err(Error::Taxonomy(format!(
                        "textual taxonomy row {} needs child, parent, level",
                        i + 1
                    )))
                }
            };
            if child.is_empty() || parent.is_empty() {
                return Err(Error::Taxonomy(format!("textual taxonomy row {}: empty field", i + 1)));
            }
            let map = match level.to_ascii_lowercase().as_str() {
                "theme" => &mut tax.term_to_theme,
                "topic" => &mut tax.theme_to_topic,
                "concept" => &mut tax.topic_to_concept,
                other => {
                    return Err(Error::Taxonomy(format!(
                        "textual taxonomy row {}: unknown level {other:?}",
                        i + 1
                    )))
                }
            };
            let child_lc = child.to_lowercase();
            let parent_lc = parent.to_lowercase();
            if child_lc == parent_lc {
                continue; // explicit own-parent row; same as absent
            }
            match map.entry(child_lc) {
                Entry::Vacant(e) => {
                    e.insert(parent_lc);
                }
                Entry::Occupied(e) => {
                    return Err(Error::Taxonomy(format!(
                        "textual taxonomy row {}: {} already has parent {}",
                        i + 1,
                        child,
                        e.get()
                    )))
                }
            }
        }
        Ok(tax)
    }

    fn step<'a>(map: &'a BTreeMap<String, String>, child: &'a str) -> &'a str {
        if child.starts_with('#') {
            return child;
        }
        map.get(child).map(String::as_str).unwrap_or(child)
    }

    /// Ancestor of a term at a textual level index.
    pub fn ancestor<'a>(&'a self, term: &'a str, level: u8) -> &'a str {
        match level {
            TERM => term,
            THEME => Self::step(&self.term_to_theme, term),
            TOPIC => Self::step(&self.theme_to_topic, self.ancestor(term, THEME)),
            CONCEPT => Self::step(&self.topic_to_concept, self.ancestor(term, TOPIC)),
            _ => ALL_MEMBER,
        }
    }

    /// One step up from a member already at `level` (used when rolling a
    /// view from one textual level to the next).
    pub fn step_up<'a>(&'a self, member: &'a str, level: u8) -> &'a str {
        match level {
            TERM => Self::step(&self.term_to_theme, member),
            THEME => Self::step(&self.theme_to_topic, member),
            TOPIC => Self::step(&self.topic_to_concept, member),
            _ => ALL_MEMBER,
        }
    }

    /// Write the taxonomy in the format [`TextTaxonomy::from_reader`]
    /// accepts.
    pub fn dump_tsv(&self, mut out: impl std::io::Write) -> Result<()> {
        let maps = [
            (&self.term_to_theme, "theme"),
            (&self.theme_to_topic, "topic"),
            (&self.topic_to_concept, "concept"),
        ];
        for (map, level) in maps {
            for (child, parent) in map {
                writeln!(out, "{child}\t{parent}\t{level}")?;
            }
        }
        Ok(())
    }
}

/// Importance score per member id, for the custom scheme.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImportanceScores {
    scores: BTreeMap<String, f64>,
}

impl ImportanceScores {
    /// TSV rows `member_id<TAB>score`, no header.
    pub fn from_reader(input: impl BufRead) -> Result<Self> {
        let mut scores = BTreeMap::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let mut parts = t.split('\t');
            let (id, score) = match (parts.next(), parts.next()) {
                (Some(id), Some(s)) => (id.trim().to_lowercase(), s.trim()),
                _ => {
                    return Err(Error::Taxonomy(format!(
                        "importance row {} needs member_id and score",
                        i + 1
                    )))
                }
            };
            let score: f64 = score
                .parse()
                .map_err(|_| Error::Taxonomy(format!("importance row {}: bad score", i + 1)))?;
            scores.insert(id, score);
        }
        Ok(ImportanceScores { scores })
    }

    pub fn get(&self, member: &str) -> f64 {
        self.scores.get(member).copied().unwrap_or(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Write the scores in the format [`ImportanceScores::from_reader`]
    /// accepts.
    pub fn dump_tsv(&self, mut out: impl std::io::Write) -> Result<()> {
        for (id, score) in &self.scores {
            writeln!(out, "{id}\t{score:?}")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Parent assignment schemes

/// Replication: the distinct ancestors of a fact's terms at `level`. A
/// fact joins every parent any of its terms maps to.
pub fn textual_parents_replication<'a>(
    terms: &'a [String],
    tax: &'a TextTaxonomy,
    level: u8,
) -> BTreeSet<&'a str> {
    if level >= TEXT_ALL {
        let mut set = BTreeSet::new();
        if !terms.is_empty() {
            set.insert(ALL_MEMBER);
        }
        return set;
    }
    terms.iter().map(|t| tax.ancestor(t, level)).collect()
}

/// Majority: the single ancestor with the most supporting term
/// occurrences; frequency ties break to the lexicographically smaller
/// member. Empty term lists have no parent.
pub fn textual_parent_majority<'a>(
    terms: &'a [String],
    tax: &'a TextTaxonomy,
    level: u8,
) -> Option<&'a str> {
    if terms.is_empty() {
        return None;
    }
    if level >= TEXT_ALL {
        return Some(ALL_MEMBER);
    }
    let mut votes: BTreeMap<&str, u64> = BTreeMap::new();
    for t in terms {
        *votes.entry(tax.ancestor(t, level)).or_insert(0) += 1;
    }
    // BTreeMap iterates keys in order, so `>` keeps the smaller key on ties.
    votes
        .iter()
        .fold(None::<(&str, u64)>, |best, (&m, &v)| match best {
            Some((_, bv)) if v <= bv => best,
            _ => Some((m, v)),
        })
        .map(|(m, _)| m)
}

/// Custom: among the replication candidates, the member with the highest
/// importance score; score ties break lexicographically.
pub fn textual_parent_custom<'a>(
    terms: &'a [String],
    tax: &'a TextTaxonomy,
    scores: &ImportanceScores,
    level: u8,
) -> Option<&'a str> {
    if terms.is_empty() {
        return None;
    }
    if level >= TEXT_ALL {
        return Some(ALL_MEMBER);
    }
    let candidates = textual_parents_replication(terms, tax, level);
    candidates
        .into_iter()
        .fold(None::<(&str, f64)>, |best, m| {
            let s = scores.get(m);
            match best {
                Some((_, bs)) if s <= bs => best,
                _ => Some((m, s)),
            }
        })
        .map(|(m, _)| m)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::ingest::parse_ts;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn ts(s: &str) -> i64 {
        parse_ts(s).unwrap()
    }

    #[test]
    fn temporal_members_of_a_timestamp() {
        let t = ts("2019-10-20T11:12:13Z");
        let day = day_of(t);
        let rendered: Vec<String> = (0..5).map(|l| render_date(l, date_code(day, l))).collect();
        assert_eq!(rendered, vec!["2019-10-20", "2019-10", "2019-Q4", "2019", "ALL"]);
        let sec = second_of_day(t);
        let tods: Vec<String> = (0..4).map(|l| render_tod(l, tod_code(sec, l))).collect();
        assert_eq!(tods, vec!["11:12:13", "11:12", "11", "ALL"]);
    }

    #[test]
    fn quarter_boundaries() {
        let q2 = date_code(day_of(ts("2019-06-30T23:59:59Z")), 2);
        let q3 = date_code(day_of(ts("2019-07-01T00:00:00Z")), 2);
        assert_eq!(render_date(2, q2), "2019-Q2");
        assert_eq!(render_date(2, q3), "2019-Q3");
        assert_eq!(q3, q2 + 1);
    }

    #[test]
    fn leap_day_and_year_wrap() {
        let leap = day_of(ts("2020-02-29T12:00:00Z"));
        assert_eq!(render_date(0, date_code(leap, 0)), "2020-02-29");
        assert_eq!(render_date(1, date_code(leap, 1)), "2020-02");
        let wrap = day_of(ts("2019-12-31T23:59:59Z"));
        assert_eq!(render_date(2, date_code(wrap, 2)), "2019-Q4");
        assert_eq!(render_date(3, date_code(wrap, 3)), "2019");
        assert_eq!(date_code(wrap + 1, 3), 2020);
    }

    #[test]
    fn identical_timestamps_share_members() {
        let a = ts("2019-10-20T11:12:13Z");
        let b = ts("2019-10-20T11:12:13Z");
        assert_eq!(day_of(a), day_of(b));
        assert_eq!(second_of_day(a), second_of_day(b));
    }

    proptest! {
        #[test]
        fn date_chain_is_consistent(offset in 0i64..40_000) {
            // Every day's month lies inside its quarter inside its year.
            let day = offset; // 1970..~2079
            let (y, m, _) = ymd(day);
            prop_assert_eq!(date_code(day, 1), y as i64 * 12 + m as i64 - 1);
            prop_assert_eq!(date_code(day, 2), y as i64 * 4 + (m as i64 - 1) / 3);
            prop_assert_eq!(date_code(day, 3), y as i64);
        }

        #[test]
        fn rolling_codes_composes(day in -20_000i64..40_000, sec in 0u32..86_400) {
            for from in 0u8..5 {
                for to in from..5 {
                    let direct = date_roll(date_code(day, from), from, to);
                    prop_assert_eq!(direct, date_code(day, to), "date {}->{}", from, to);
                }
            }
            for from in 0u8..4 {
                for to in from..4 {
                    let direct = tod_roll(tod_code(sec, from), from, to);
                    prop_assert_eq!(direct, tod_code(sec, to), "tod {}->{}", from, to);
                }
            }
        }
    }

    pub const SPATIAL_FIXTURE: &str = "\
member_id\tlevel\tname\tparent_id\trep_lat\trep_lon\tsurface_area_km2
aalborg\tcity\tAalborg\tnorth-jutland\t57.0166\t9.9912\t139.0
aarhus\tcity\tAarhus\tcentral-jutland\t56.1629\t10.2039\t91.0
copenhagen\tcity\tCopenhagen\tcapital\t55.6761\t12.5683\t86.4
north-jutland\tregion\tNorth Jutland\tdenmark\t\t\t7933.0
central-jutland\tregion\tCentral Jutland\tdenmark\t\t\t13000.0
capital\tregion\tCapital Region\tdenmark\t\t\t2561.0
denmark\tcountry\tDenmark\t\t\t\t42933.0
";

    #[test]
    fn spatial_taxonomy_loads_and_chains() {
        let tax = SpatialTaxonomy::from_reader(Cursor::new(SPATIAL_FIXTURE)).unwrap();
        assert_eq!(tax.ancestor_of_city("aalborg", 1), "aalborg");
        assert_eq!(tax.ancestor_of_city("aalborg", 2), "north-jutland");
        assert_eq!(tax.ancestor_of_city("aalborg", 3), "denmark");
        assert_eq!(tax.ancestor_of_city("aalborg", 4), "ALL");
        assert_eq!(tax.area_of(1, "aalborg"), Some(139.0));
        assert_eq!(tax.area_of(3, "denmark"), Some(42933.0));
        // The UNKNOWN chain carries the summed city area at every level.
        let total = 139.0 + 91.0 + 86.4;
        assert_eq!(tax.area_of(1, UNKNOWN_MEMBER), Some(total));
        assert_eq!(tax.area_of(2, UNKNOWN_MEMBER), Some(total));
        assert_eq!(tax.ancestor_of_city(UNKNOWN_MEMBER, 3), UNKNOWN_MEMBER);
        assert_eq!(tax.cities().count(), 3);
    }

    #[test]
    fn spatial_taxonomy_rejects_dangling_parent() {
        let bad = "member_id\tlevel\tname\tparent_id\trep_lat\trep_lon\tsurface_area_km2\n\
                   aalborg\tcity\tAalborg\tnowhere\t57.0\t9.9\t139.0\n";
        assert!(SpatialTaxonomy::from_reader(Cursor::new(bad)).is_err());
    }

    #[test]
    fn spatial_taxonomy_rejects_zero_area_and_duplicates() {
        let zero = "member_id\tlevel\tname\tparent_id\trep_lat\trep_lon\tsurface_area_km2\n\
                    denmark\tcountry\tDenmark\t\t\t\t0\n";
        assert!(SpatialTaxonomy::from_reader(Cursor::new(zero)).is_err());
        let dup = "member_id\tlevel\tname\tparent_id\trep_lat\trep_lon\tsurface_area_km2\n\
                   denmark\tcountry\tDenmark\t\t\t\t1.0\n\
                   denmark\tcountry\tDenmark\t\t\t\t2.0\n";
        assert!(SpatialTaxonomy::from_reader(Cursor::new(dup)).is_err());
    }

    pub const TEXT_FIXTURE: &str = "\
apple\tfruits\ttheme
fruit\tfruits\ttheme
banana\tfruits\ttheme
rose\tflowers\ttheme
fruits\tfood\ttopic
flowers\tgardening\ttopic
food\tconsumption\tconcept
";

    #[test]
    fn textual_ancestors_with_own_parent_rule() {
        let tax = TextTaxonomy::from_reader(Cursor::new(TEXT_FIXTURE)).unwrap();
        assert_eq!(tax.ancestor("apple", THEME), "fruits");
        assert_eq!(tax.ancestor("apple", TOPIC), "food");
        assert_eq!(tax.ancestor("apple", CONCEPT), "consumption");
        assert_eq!(tax.ancestor("apple", TEXT_ALL), "ALL");
        // Absent terms and hashtags are their own parent at every level.
        assert_eq!(tax.ancestor("zzz", THEME), "zzz");
        assert_eq!(tax.ancestor("zzz", CONCEPT), "zzz");
        assert_eq!(tax.ancestor("#love", THEME), "#love");
        assert_eq!(tax.ancestor("#love", CONCEPT), "#love");
        assert_eq!(tax.step_up("fruits", THEME), "food");
    }

    #[test]
    fn textual_taxonomy_rejects_conflicting_parent() {
        let bad = "apple\tfruits\ttheme\napple\tflowers\ttheme\n";
        assert!(TextTaxonomy::from_reader(Cursor::new(bad)).is_err());
        let bad_level = "apple\tfruits\tgalaxy\n";
        assert!(TextTaxonomy::from_reader(Cursor::new(bad_level)).is_err());
    }

    fn fixture_terms() -> Vec<String> {
        vec!["apple".into(), "fruit".into(), "#love".into()]
    }

    #[test]
    fn replication_collects_every_parent() {
        let tax = TextTaxonomy::from_reader(Cursor::new(TEXT_FIXTURE)).unwrap();
        let terms = fixture_terms();
        let parents = textual_parents_replication(&terms, &tax, THEME);
        assert_eq!(parents.into_iter().collect::<Vec<_>>(), vec!["#love", "fruits"]);
        let all = textual_parents_replication(&terms, &tax, TEXT_ALL);
        assert_eq!(all.into_iter().collect::<Vec<_>>(), vec!["ALL"]);
        assert!(textual_parents_replication(&[], &tax, THEME).is_empty());
    }

    #[test]
    fn majority_counts_supporting_terms() {
        let tax = TextTaxonomy::from_reader(Cursor::new(TEXT_FIXTURE)).unwrap();
        let terms = fixture_terms();
        assert_eq!(textual_parent_majority(&terms, &tax, THEME), Some("fruits"));
        // 1-1 tie between flowers and fruits: lexicographic winner.
        let tie: Vec<String> = vec!["apple".into(), "rose".into()];
        assert_eq!(textual_parent_majority(&tie, &tax, THEME), Some("flowers"));
        // Occurrences vote: apple twice beats rose once.
        let multi: Vec<String> = vec!["apple".into(), "rose".into(), "apple".into()];
        assert_eq!(textual_parent_majority(&multi, &tax, THEME), Some("fruits"));
        assert_eq!(textual_parent_majority(&[], &tax, THEME), None);
    }

    #[test]
    fn custom_scores_can_flip_the_majority_winner() {
        let tax = TextTaxonomy::from_reader(Cursor::new(TEXT_FIXTURE)).unwrap();
        let scores =
            ImportanceScores::from_reader(Cursor::new("fruits\t0.9\nflowers\t0.1\n")).unwrap();
        let terms: Vec<String> = vec!["apple".into(), "rose".into(), "rose".into()];
        assert_eq!(textual_parent_majority(&terms, &tax, THEME), Some("flowers"));
        assert_eq!(textual_parent_custom(&terms, &tax, &scores, THEME), Some("fruits"));
        // With no scores the custom winner is the lexicographic smallest.
        let none = ImportanceScores::default();
        assert_eq!(textual_parent_custom(&terms, &tax, &none, THEME), Some("flowers"));
    }

    proptest! {
        #[test]
        fn majority_winner_is_a_replication_parent(
            terms in proptest::collection::vec("[a-f]{1,3}", 1..6),
            level in 1u8..4,
        ) {
            let tax = TextTaxonomy::from_reader(Cursor::new(TEXT_FIXTURE)).unwrap();
            let terms: Vec<String> = terms;
            let winner = textual_parent_majority(&terms, &tax, level).unwrap();
            let parents = textual_parents_replication(&terms, &tax, level);
            prop_assert!(parents.contains(winner));
        }
    }
}
