//! Record parsing, text normalization, the km grid, reverse geocoding.
//!
//! Input rows are JSON lines or CSV with the fields `lat`, `lon`, `text`,
//! `ts`. Bad rows never abort a load: each is skipped and reported with a
//! stable machine-readable reason. Only I/O failures abort.

use std::collections::BTreeSet;
use std::io::BufRead;

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};

use crate::error::{Error, Result};
use crate::hierarchy::SpatialTaxonomy;
use crate::model::{GridConfig, SttObject};

/// Kilometres per degree in the fixed plate-carree projection the grid
/// lives in. One global scale keeps cells axis-aligned and nested.
pub const KM_PER_DEG: f64 = 111.32;

/// Name of the environment variable overriding the geocoding cutoff (km).
pub const GEOCODE_CUTOFF_ENV: &str = "STTCUBE_GEOCODE_CUTOFF_KM";

/// Default reverse-geocoding cutoff in km.
pub const GEOCODE_CUTOFF_DEFAULT_KM: f64 = 50.0;

/// Placeholder member for points beyond the geocoding cutoff.
pub const UNKNOWN_MEMBER: &str = "UNKNOWN";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Jsonl,
    Csv,
}

/// Why a row was skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    MalformedLine,
    BadCoordinate,
    EmptyText,
    BadTimestamp,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::MalformedLine => "malformed_line",
            RejectReason::BadCoordinate => "bad_coordinate",
            RejectReason::EmptyText => "empty_text",
            RejectReason::BadTimestamp => "bad_timestamp",
        }
    }
}

/// One skipped row: 1-based data line and the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub line: u64,
    pub reason: RejectReason,
}

#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub records: Vec<SttObject>,
    pub rejections: Vec<Rejection>,
}

/// Parse a stream of rows, preprocessing each record's text.
///
/// Record order is preserved. Rows failing field extraction are reported
/// in `rejections` and do not affect their neighbours.
pub fn parse_records(
    input: impl BufRead,
    format: RecordFormat,
    stops: &StopwordList,
) -> Result<ParseOutcome> {
    match format {
        RecordFormat::Jsonl => parse_jsonl(input, stops),
        RecordFormat::Csv => parse_csv(input, stops),
    }
}

fn parse_jsonl(input: impl BufRead, stops: &StopwordList) -> Result<ParseOutcome> {
    let mut out = ParseOutcome::default();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(_) => {
                out.rejections.push(Rejection { line: lineno, reason: RejectReason::MalformedLine });
                continue;
            }
        };
        let lat = value.get("lat").and_then(coerce_f64);
        let lon = value.get("lon").and_then(coerce_f64);
        let text = value.get("text").and_then(|v| v.as_str()).map(str::to_owned);
        let ts = value.get("ts").and_then(|v| v.as_str()).map(str::to_owned);
        push_record(&mut out, lineno, lat, lon, text, ts, stops);
    }
    Ok(out)
}

fn parse_csv(input: impl BufRead, stops: &StopwordList) -> Result<ParseOutcome> {
    let mut out = ParseOutcome::default();
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = rdr.headers().map_err(Error::Csv)?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (c_lat, c_lon, c_text, c_ts) = (col("lat"), col("lon"), col("text"), col("ts"));
    if c_lat.is_none() || c_lon.is_none() || c_text.is_none() || c_ts.is_none() {
        return Err(Error::Config("csv input needs lat, lon, text, ts columns".into()));
    }
    for (idx, rec) in rdr.records().enumerate() {
        let lineno = idx as u64 + 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                    return Err(Error::Csv(e));
                }
                out.rejections.push(Rejection { line: lineno, reason: RejectReason::MalformedLine });
                continue;
            }
        };
        let field = |c: Option<usize>| c.and_then(|i| rec.get(i)).map(str::to_owned);
        let lat = field(c_lat).and_then(|s| s.trim().parse::<f64>().ok());
        let lon = field(c_lon).and_then(|s| s.trim().parse::<f64>().ok());
        push_record(&mut out, lineno, lat, lon, field(c_text), field(c_ts), stops);
    }
    Ok(out)
}

fn coerce_f64(v: &serde_json::Value) -> Option<f64> {
    v.as_f64()
}

fn push_record(
    out: &mut ParseOutcome,
    lineno: u64,
    lat: Option<f64>,
    lon: Option<f64>,
    text: Option<String>,
    ts: Option<String>,
    stops: &StopwordList,
) {
    let reject = |out: &mut ParseOutcome, reason| {
        out.rejections.push(Rejection { line: lineno, reason });
    };
    let (lat, lon) = match (lat, lon) {
        (Some(la), Some(lo))
            if la.is_finite() && lo.is_finite() && la.abs() <= 90.0 && lo.abs() <= 180.0 =>
        {
            (la, lo)
        }
        _ => return reject(out, RejectReason::BadCoordinate),
    };
    let text = match text {
        Some(t) if !t.trim().is_empty() => t,
        _ => return reject(out, RejectReason::EmptyText),
    };
    let ts = match ts.as_deref().and_then(parse_ts) {
        Some(t) => t,
        None => return reject(out, RejectReason::BadTimestamp),
    };
    out.records.push(SttObject::new(lat, lon, preprocess(&text, stops), ts));
}

/// Parse an RFC 3339 timestamp (a bare `YYYY-MM-DDTHH:MM:SS` is read as
/// UTC) into epoch seconds.
pub fn parse_ts(s: &str) -> Option<i64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    if let Ok(naive) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
        return Some(naive.and_utc().timestamp());
    }
    if let Ok(naive) = NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S") {
        return Some(naive.and_utc().timestamp());
    }
    None
}

/// Render epoch seconds as RFC 3339 UTC, second resolution.
pub fn render_ts(ts: i64) -> String {
    match Utc.timestamp_opt(ts, 0) {
        chrono::LocalResult::Single(dt) => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        _ => format!("@{ts}"),
    }
}

// ---------------------------------------------------------------------------
// Text preprocessing

/// Terms dropped before normalization. The default list covers common
/// English function words; a file with one word per line replaces it.
#[derive(Debug, Clone)]
pub struct StopwordList {
    words: BTreeSet<String>,
}

const DEFAULT_STOPWORDS: &str = "a about after all also an and any are as at be because been \
before being between both but by can could did do does down each few for from further had has \
have having he her here hers him his how i if in into is it its just me more most my no nor not \
now of off on once only or other our ours out over own s same she should so some such t than \
that the their theirs them then there these they this those through to too under until up very \
was we were what when where which while who whom why will with you your yours";

impl Default for StopwordList {
    fn default() -> Self {
        StopwordList {
            words: DEFAULT_STOPWORDS.split_whitespace().map(str::to_owned).collect(),
        }
    }
}

impl StopwordList {
    pub fn empty() -> Self {
        StopwordList { words: BTreeSet::new() }
    }

    /// One word per line; blank lines ignored. Replaces the default list.
    pub fn from_reader(input: impl BufRead) -> Result<Self> {
        let mut words = BTreeSet::new();
        for line in input.lines() {
            let line = line?;
            let w = line.trim().to_lowercase();
            if !w.is_empty() {
                words.insert(w);
            }
        }
        Ok(StopwordList { words })
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }
}

/// Words the suffix stripper must leave alone.
const NORMALIZER_EXCEPTIONS: &[&str] = &[
    "anything", "evening", "everything", "morning", "news", "nothing", "series", "something",
    "species",
];

/// Lowercase, tokenize, drop stopwords and letterless tokens, strip
/// suffixes. `#`-prefixed tokens are kept verbatim apart from lowercasing.
///
/// The output is a fixed point: preprocessing the joined output again
/// returns it unchanged.
pub fn preprocess(text: &str, stops: &StopwordList) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut out = Vec::new();
    for raw in lower.split(|c: char| !(c.is_alphanumeric() || c == '#')) {
        let token = raw.trim_end_matches('#');
        if token.is_empty() {
            continue;
        }
        if let Some(tag) = token.strip_prefix('#') {
            let tag = tag.trim_start_matches('#');
            if !tag.is_empty() {
                out.push(format!("#{tag}"));
            }
            continue;
        }
        if !token.chars().any(|c| c.is_alphabetic()) {
            continue;
        }
        if stops.contains(token) {
            continue;
        }
        out.push(normalize_token(token));
    }
    out
}

/// Deterministic suffix stripping: plural `-s`/`-es`, `-ing`, `-ed`, with
/// a short exception list. Not a stemmer; just enough to fold the common
/// inflections onto one key. Idempotent, so probes normalized at query
/// time meet the vocabulary ingestion built.
pub fn normalize_token(token: &str) -> String {
    let mut t = token.to_string();
    // A strip can expose another suffix (teased -> teas); every pass
    // shortens the token, so the fixed point is reached quickly.
    loop {
        let next = strip_suffixes(&t);
        if next == t {
            return t;
        }
        t = next;
    }
}

fn strip_suffixes(token: &str) -> String {
    if NORMALIZER_EXCEPTIONS.contains(&token) {
        return token.to_string();
    }
    let mut t = token.to_string();

    // Plural forms.
    if t.ends_with("ies") && t.len() > 4 {
        t.truncate(t.len() - 3);
        t.push('y');
        return t;
    } else if t.ends_with("sses") {
        t.truncate(t.len() - 2);
    } else if ["xes", "ches", "shes", "zes", "oes"].iter().any(|s| t.ends_with(s)) {
        t.truncate(t.len() - 2);
    } else if t.ends_with("ss") || t.ends_with("us") || t.ends_with("is") {
        // Base forms like class, virus, basis keep their s.
    } else if t.ends_with('s') && t.len() > 3 {
        t.truncate(t.len() - 1);
    }

    // Verb forms, applied to the de-pluralized token.
    if t.ends_with("eed") {
        if has_vowel(&t[..t.len() - 3]) {
            t.truncate(t.len() - 1);
        }
    } else if t.ends_with("ing") && t.len() >= 5 && has_vowel(&t[..t.len() - 3]) {
        t.truncate(t.len() - 3);
        undouble(&mut t);
    } else if t.ends_with("ed") && t.len() >= 4 && has_vowel(&t[..t.len() - 2]) {
        t.truncate(t.len() - 2);
        undouble(&mut t);
    }
    t
}

fn has_vowel(s: &str) -> bool {
    s.chars().any(|c| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y'))
}

/// running -> run, but falling -> fall (l, s, z keep their double).
fn undouble(t: &mut String) {
    let bytes = t.as_bytes();
    let n = bytes.len();
    if n >= 2 && bytes[n - 1] == bytes[n - 2] {
        let c = bytes[n - 1] as char;
        if c.is_ascii_alphabetic() && !matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'l' | 's' | 'z') {
            t.truncate(n - 1);
        }
    }
}

// ---------------------------------------------------------------------------
// Spatial mapping

/// A cell of the km grid at some level. Indices are floor divisions of the
/// projected coordinates, so they are negative west/south of the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridCell {
    pub level: u8,
    pub x: i64,
    pub y: i64,
}

impl GridCell {
    pub fn name(&self) -> String {
        format!("g{}:{}:{}", self.level, self.x, self.y)
    }

    /// Inverse of [`GridCell::name`].
    pub fn parse(name: &str) -> Option<GridCell> {
        let rest = name.strip_prefix('g')?;
        let mut parts = rest.splitn(3, ':');
        let level = parts.next()?.parse().ok()?;
        let x = parts.next()?.parse().ok()?;
        let y = parts.next()?.parse().ok()?;
        Some(GridCell { level, x, y })
    }

    /// The enclosing cell one level up.
    pub fn parent(&self, factor: u32) -> GridCell {
        GridCell {
            level: self.level + 1,
            x: self.x.div_euclid(factor as i64),
            y: self.y.div_euclid(factor as i64),
        }
    }

    /// The enclosing cell at `level` (>= self.level).
    pub fn at_level(&self, factor: u32, level: u8) -> GridCell {
        let mut c = *self;
        while c.level < level {
            c = c.parent(factor);
        }
        c
    }
}

/// Map a point to its grid cell at `level`.
pub fn grid_cell_of(lat: f64, lon: f64, grid: &GridConfig, level: u8) -> GridCell {
    debug_assert!(level < grid.level_count);
    let size = grid.cell_km(level);
    GridCell {
        level,
        x: (lon * KM_PER_DEG / size).floor() as i64,
        y: (lat * KM_PER_DEG / size).floor() as i64,
    }
}

/// Great-circle distance in km.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    const R: f64 = 6371.0;
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = (lat2 - lat1).to_radians();
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * R * a.sqrt().atan2((1.0 - a).sqrt())
}

/// The geocoding cutoff in km, from the environment or the default.
pub fn geocode_cutoff_km() -> f64 {
    std::env::var(GEOCODE_CUTOFF_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<f64>().ok())
        .filter(|v| v.is_finite() && *v > 0.0)
        .unwrap_or(GEOCODE_CUTOFF_DEFAULT_KM)
}

/// Nearest city by representative point, or [`UNKNOWN_MEMBER`] beyond the
/// cutoff. Distance ties break to the lexicographically smaller city id.
pub fn reverse_geocode<'t>(
    lat: f64,
    lon: f64,
    taxonomy: &'t SpatialTaxonomy,
    cutoff_km: f64,
) -> &'t str {
    let mut best: Option<(f64, &str)> = None;
    for city in taxonomy.cities() {
        let d = haversine_km(lat, lon, city.rep_lat, city.rep_lon);
        let better = match best {
            None => true,
            Some((bd, bid)) => d < bd || (d == bd && city.id.as_str() < bid),
        };
        if better {
            best = Some((d, &city.id));
        }
    }
    match best {
        Some((d, id)) if d <= cutoff_km => id,
        _ => UNKNOWN_MEMBER,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    #[test]
    fn preprocess_keeps_terms_and_hashtags() {
        let stops = StopwordList::default();
        assert_eq!(preprocess("Apple, fruit, #love", &stops), vec!["apple", "fruit", "#love"]);
        assert_eq!(preprocess("Potato, #NewYear", &stops), vec!["potato", "#newyear"]);
    }

    #[test]
    fn preprocess_strips_inflections() {
        let stops = StopwordList::default();
        assert_eq!(preprocess("working works worked", &stops), vec!["work", "work", "work"]);
    }

    #[test]
    fn normalizer_cases() {
        for (input, want) in [
            ("berries", "berry"),
            ("boxes", "box"),
            ("churches", "church"),
            ("classes", "class"),
            ("goes", "go"),
            ("running", "run"),
            ("falling", "fall"),
            ("planned", "plan"),
            ("agreed", "agree"),
            ("feed", "feed"),
            ("sing", "sing"),
            ("red", "red"),
            ("virus", "virus"),
            ("news", "news"),
            ("morning", "morning"),
            ("meetings", "meet"),
        ] {
            assert_eq!(normalize_token(input), want, "input {input}");
        }
    }

    #[test]
    fn preprocess_drops_stopwords_and_letterless_tokens() {
        let stops = StopwordList::default();
        assert_eq!(preprocess("the 123 !!! and potato", &stops), vec!["potato"]);
        assert_eq!(preprocess("#123 42", &stops), vec!["#123"]);
        assert!(preprocess("", &stops).is_empty());
        assert!(preprocess("the of and", &stops).is_empty());
    }

    #[test]
    fn preprocess_is_idempotent_on_fixture_text() {
        let stops = StopwordList::default();
        let once = preprocess("Working berries at the #Market, going strong!", &stops);
        let again = preprocess(&once.join(" "), &stops);
        assert_eq!(once, again);
    }

    proptest! {
        #[test]
        fn preprocess_idempotent(words in proptest::collection::vec("[a-z]{1,12}", 0..8)) {
            let stops = StopwordList::default();
            let text = words.join(" ");
            let once = preprocess(&text, &stops);
            let again = preprocess(&once.join(" "), &stops);
            prop_assert_eq!(once, again);
        }

        #[test]
        fn grid_levels_nest(lat in -85.0f64..85.0, lon in -179.0f64..179.0, level in 0u8..3) {
            let grid = GridConfig::default();
            let child = grid_cell_of(lat, lon, &grid, level);
            let direct = grid_cell_of(lat, lon, &grid, level + 1);
            prop_assert_eq!(child.parent(grid.factor), direct);
        }
    }

    #[test]
    fn grid_cell_of_known_point() {
        let grid = GridConfig::default();
        let c = grid_cell_of(57.016254, 9.991203, &grid, 0);
        assert_eq!((c.x, c.y), (1112, 6347));
        assert_eq!(c.name(), "g0:1112:6347");
        let p = c.at_level(grid.factor, 2);
        assert_eq!((p.level, p.x, p.y), (2, 123, 705));
    }

    #[test]
    fn haversine_aalborg_aarhus() {
        let d = haversine_km(57.0166, 9.9912, 56.1629, 10.2039);
        assert!((94.0..98.0).contains(&d), "{d}");
    }

    #[test]
    fn timestamps_round_trip() {
        let ts = parse_ts("2019-10-20T11:12:13Z").unwrap();
        assert_eq!(render_ts(ts), "2019-10-20T11:12:13Z");
        assert_eq!(parse_ts("2019-10-20T11:12:13"), Some(ts));
        assert_eq!(parse_ts("2019-10-20 11:12:13"), Some(ts));
        assert_eq!(parse_ts("2019-10-20T13:12:13+02:00"), Some(ts));
        assert_eq!(parse_ts("not a time"), None);
    }

    #[test]
    fn jsonl_isolates_bad_rows() {
        let data = concat!(
            "{\"lat\": 57.0, \"lon\": 9.9, \"text\": \"Apple\", \"ts\": \"2019-10-20T11:12:13Z\"}\n",
            "{\"lat\": \"x\", \"lon\": 9.9, \"text\": \"Apple\", \"ts\": \"2019-10-20T11:12:13Z\"}\n",
            "not json at all\n",
            "{\"lat\": 57.0, \"lon\": 9.9, \"text\": \"  \", \"ts\": \"2019-10-20T11:12:13Z\"}\n",
            "{\"lat\": 57.0, \"lon\": 9.9, \"text\": \"Pear\", \"ts\": \"whenever\"}\n",
            "{\"lat\": 91.0, \"lon\": 9.9, \"text\": \"Apple\", \"ts\": \"2019-10-20T11:12:13Z\"}\n",
        );
        let out = parse_records(Cursor::new(data), RecordFormat::Jsonl, &StopwordList::default())
            .unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].terms, vec!["apple"]);
        let reasons: Vec<_> = out.rejections.iter().map(|r| (r.line, r.reason)).collect();
        assert_eq!(
            reasons,
            vec![
                (2, RejectReason::BadCoordinate),
                (3, RejectReason::MalformedLine),
                (4, RejectReason::EmptyText),
                (5, RejectReason::BadTimestamp),
                (6, RejectReason::BadCoordinate),
            ]
        );
    }

    #[test]
    fn csv_parses_and_isolates() {
        let data = "lat,lon,text,ts\n\
                    57.0,9.9,Apple pie,2019-10-20T11:12:13Z\n\
                    oops,9.9,Apple,2019-10-20T11:12:13Z\n";
        let out =
            parse_records(Cursor::new(data), RecordFormat::Csv, &StopwordList::default()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].terms, vec!["apple", "pie"]);
        assert_eq!(out.rejections.len(), 1);
        assert_eq!(out.rejections[0].reason, RejectReason::BadCoordinate);
    }

    #[test]
    fn csv_missing_columns_is_a_config_error() {
        let data = "lat,lon\n1.0,2.0\n";
        assert!(
            parse_records(Cursor::new(data), RecordFormat::Csv, &StopwordList::default()).is_err()
        );
    }

    #[test]
    fn stopword_file_replaces_default() {
        let list = StopwordList::from_reader(Cursor::new("Apple\n\nBANANA\n")).unwrap();
        assert!(list.contains("apple"));
        assert!(list.contains("banana"));
        assert!(!list.contains("the"));
    }
}
