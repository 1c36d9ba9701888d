//! The on-disk cube directory.
//!
//! [`save`] lays a cube out as plain files so external tooling can inspect
//! every part of it:
//!
//! ```text
//! <dir>/
//!   schema.json      format version, configuration, planner trace
//!   lattice.tsv      node sizes and the materialized set
//!   facts.bin        resolved facts, length-prefixed little-endian rows
//!   members/         interned member tables and the loaded taxonomies
//!   cuboids/         one TSV per materialized cuboid, rows sorted by group key
//! ```
//!
//! Saving is byte-stable: one cube writes the same bytes every time, and a
//! save/load/save cycle reproduces each file exactly. Member tables are
//! written in dense id order and replayed in that order on load, so stored
//! group rows keep their ids without a translation table. Truncated cuboids
//! carry the frequency just below each cut (the `boundary` column); the
//! approximate merge seeds its error bound from it.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Cursor, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cube::{Cube, CubeConfig};
use crate::cuboid::{Cuboid, Entry, FactRow, GroupKey, GroupRow, SpatialStore, TextStore};
use crate::error::{Error, Result};
use crate::hierarchy::{self, ImportanceScores, SpatialTaxonomy, TextTaxonomy};
use crate::lattice::{Coord, Lattice};
use crate::materialize::PlanStep;

/// Bumped whenever any file layout changes; [`load`] refuses other versions.
pub const FORMAT_VERSION: u32 = 1;

const FACTS_MAGIC: &[u8; 4] = b"STTF";
const SPATIAL_HEADER: &str = "level\tname\tarea\tparent";
const TEXTUAL_HEADER: &str = "level\tname\tparent";

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    format_version: u32,
    config: CubeConfig,
    plan: Vec<PlanStep>,
}

pub fn save(cube: &Cube, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let members = dir.join("members");
    let cuboids = dir.join("cuboids");
    fs::create_dir_all(&members)?;
    // A reused directory may hold cuboids the current plan no longer has.
    if cuboids.exists() {
        fs::remove_dir_all(&cuboids)?;
    }
    fs::create_dir_all(&cuboids)?;

    let schema = SchemaFile {
        format_version: FORMAT_VERSION,
        config: cube.config().clone(),
        plan: cube.plan_steps().to_vec(),
    };
    let mut out = BufWriter::new(File::create(dir.join("schema.json"))?);
    serde_json::to_writer_pretty(&mut out, &schema)?;
    out.write_all(b"\n")?;
    out.flush()?;

    let mut out = BufWriter::new(File::create(dir.join("lattice.tsv"))?);
    cube.lattice().dump_tsv(&mut out)?;
    out.flush()?;

    write_facts(cube.facts(), &dir.join("facts.bin"))?;

    let mut out = BufWriter::new(File::create(members.join("spatial.tsv"))?);
    writeln!(out, "{SPATIAL_HEADER}")?;
    for (level, name, area, parent) in cube.spatial_store().saved_rows() {
        writeln!(out, "{level}\t{name}\t{area:?}\t{parent}")?;
    }
    out.flush()?;

    let mut out = BufWriter::new(File::create(members.join("textual.tsv"))?);
    writeln!(out, "{TEXTUAL_HEADER}")?;
    for (level, name, parent) in cube.text_store().saved_rows() {
        writeln!(out, "{level}\t{name}\t{parent}")?;
    }
    out.flush()?;

    let mut out = BufWriter::new(File::create(members.join("taxonomy_spatial.tsv"))?);
    cube.spatial_taxonomy().dump_tsv(&mut out)?;
    out.flush()?;

    let mut out = BufWriter::new(File::create(members.join("taxonomy_text.tsv"))?);
    cube.text_taxonomy().dump_tsv(&mut out)?;
    out.flush()?;

    let mut out = BufWriter::new(File::create(members.join("importance.tsv"))?);
    cube.importance().dump_tsv(&mut out)?;
    out.flush()?;

    for cuboid in cube.cuboids() {
        write_cuboid(cuboid, &cuboids.join(format!("{}.tsv", cuboid.coord.token())))?;
    }
    Ok(())
}

pub fn load(dir: impl AsRef<Path>) -> Result<Cube> {
    let dir = dir.as_ref();
    let saved: SchemaFile = serde_json::from_str(&read_string(&dir.join("schema.json"))?)?;
    if saved.format_version != FORMAT_VERSION {
        return Err(Error::Persist(format!(
            "directory has format version {}, this build reads {}",
            saved.format_version, FORMAT_VERSION
        )));
    }
    let dims: [u8; 4] = saved
        .config
        .schema
        .level_counts()
        .as_slice()
        .try_into()
        .map_err(|_| Error::Persist("saved schema does not have four hierarchies".into()))?;

    let members = dir.join("members");
    // A taxonomy that was never loaded dumps as a bare header; sending that
    // through the reader would invent the catch-all chain the original
    // lacked, so an empty dump round-trips to the empty taxonomy.
    let spatial_text = read_string(&members.join("taxonomy_spatial.tsv"))?;
    let spatial_tax = if spatial_text.lines().filter(|l| !l.trim().is_empty()).count() <= 1 {
        SpatialTaxonomy::default()
    } else {
        SpatialTaxonomy::from_reader(Cursor::new(spatial_text))?
    };
    let text_tax =
        TextTaxonomy::from_reader(Cursor::new(read_string(&members.join("taxonomy_text.tsv"))?))?;
    let scores =
        ImportanceScores::from_reader(Cursor::new(read_string(&members.join("importance.tsv"))?))?;

    let spatial = read_spatial_members(&saved.config, &members.join("spatial.tsv"))?;
    let textual = read_textual_members(&members.join("textual.tsv"))?;
    let facts = read_facts(&dir.join("facts.bin"))?;

    let lattice_path = dir.join("lattice.tsv");
    let lattice = Lattice::load_tsv(dims, BufReader::new(open(&lattice_path)?))?;

    let cuboid_dir = dir.join("cuboids");
    let mut cuboids = BTreeMap::new();
    for entry in
        fs::read_dir(&cuboid_dir).map_err(|e| persist_err(&cuboid_dir, &e.to_string()))?
    {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("tsv") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let coord = Coord::parse_token(stem)
            .ok_or_else(|| persist_err(&path, "file name is not a cuboid coordinate"))?;
        cuboids.insert(coord, read_cuboid(coord, &path)?);
    }

    Cube::from_saved(
        saved.config,
        spatial_tax,
        text_tax,
        scores,
        facts,
        spatial,
        textual,
        lattice,
        cuboids,
        saved.plan,
    )
}

fn persist_err(path: &Path, msg: &str) -> Error {
    Error::Persist(format!("{}: {msg}", path.display()))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| persist_err(path, &e.to_string()))
}

fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| persist_err(path, &e.to_string()))
}

fn parse_num<T: std::str::FromStr>(s: &str, path: &Path) -> Result<T> {
    s.parse().map_err(|_| persist_err(path, &format!("bad number {s:?}")))
}

fn field<'a>(parts: &mut impl Iterator<Item = &'a str>, path: &Path) -> Result<&'a str> {
    parts.next().ok_or_else(|| persist_err(path, "short row"))
}

fn read_spatial_members(config: &CubeConfig, path: &Path) -> Result<SpatialStore> {
    let input = BufReader::new(open(path)?);
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line != SPATIAL_HEADER {
                return Err(persist_err(path, "not a spatial member table"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let level: u8 = parse_num(field(&mut parts, path)?, path)?;
        let name = field(&mut parts, path)?.to_string();
        let area: f64 = parse_num(field(&mut parts, path)?, path)?;
        let parent: u32 = parse_num(field(&mut parts, path)?, path)?;
        rows.push((level, name, area, parent));
    }
    SpatialStore::from_saved(&config.schema, rows)
}

fn read_textual_members(path: &Path) -> Result<TextStore> {
    let input = BufReader::new(open(path)?);
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line != TEXTUAL_HEADER {
                return Err(persist_err(path, "not a textual member table"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let level: u8 = parse_num(field(&mut parts, path)?, path)?;
        let name = field(&mut parts, path)?.to_string();
        let parent: u32 = parse_num(field(&mut parts, path)?, path)?;
        rows.push((level, name, parent));
    }
    TextStore::from_saved(rows)
}

/// Fixed row bytes ahead of the term ids: ts, lat, lon, spatial,
/// assigned_theme, term count.
const FACT_FIXED_BYTES: usize = 8 + 8 + 8 + 4 + 4 + 4;

fn write_facts(facts: &[FactRow], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(FACTS_MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(facts.len() as u64).to_le_bytes())?;
    for f in facts {
        let len = (FACT_FIXED_BYTES + 4 * f.terms.len()) as u32;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(&f.ts.to_le_bytes())?;
        out.write_all(&f.lat.to_le_bytes())?;
        out.write_all(&f.lon.to_le_bytes())?;
        out.write_all(&f.spatial.to_le_bytes())?;
        out.write_all(&f.assigned_theme.to_le_bytes())?;
        out.write_all(&(f.terms.len() as u32).to_le_bytes())?;
        for t in &f.terms {
            out.write_all(&t.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Day, second-of-day, and the distinct term set are derived columns;
/// loading recomputes them instead of storing them.
fn read_facts(path: &Path) -> Result<Vec<FactRow>> {
    let mut input = BufReader::new(open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != FACTS_MAGIC {
        return Err(persist_err(path, "not a fact file"));
    }
    let version = read_u32(&mut input)?;
    if version != FORMAT_VERSION {
        return Err(persist_err(path, &format!("fact file version {version}")));
    }
    let count = read_u64(&mut input)? as usize;
    let mut facts = Vec::with_capacity(count);
    let mut row = Vec::new();
    for _ in 0..count {
        let len = read_u32(&mut input)? as usize;
        row.resize(len, 0);
        input.read_exact(&mut row)?;
        if len < FACT_FIXED_BYTES {
            return Err(persist_err(path, "truncated fact row"));
        }
        let ts = i64::from_le_bytes(row[0..8].try_into().unwrap());
        let lat = f64::from_le_bytes(row[8..16].try_into().unwrap());
        let lon = f64::from_le_bytes(row[16..24].try_into().unwrap());
        let spatial = u32::from_le_bytes(row[24..28].try_into().unwrap());
        let assigned_theme = u32::from_le_bytes(row[28..32].try_into().unwrap());
        let nterms = u32::from_le_bytes(row[32..36].try_into().unwrap()) as usize;
        if len != FACT_FIXED_BYTES + 4 * nterms {
            return Err(persist_err(path, "fact row length disagrees with its term count"));
        }
        let terms: Vec<u32> = row[FACT_FIXED_BYTES..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut distinct_terms = terms.clone();
        distinct_terms.sort_unstable();
        distinct_terms.dedup();
        facts.push(FactRow {
            ts,
            day: hierarchy::day_of(ts),
            sec: hierarchy::second_of_day(ts),
            lat,
            lon,
            spatial,
            terms,
            distinct_terms,
            assigned_theme,
        });
    }
    let mut probe = [0u8; 1];
    if input.read(&mut probe)? != 0 {
        return Err(persist_err(path, "trailing bytes after the last fact"));
    }
    Ok(facts)
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(input: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// First line `k<TAB>{limit or -}`, then one row per group:
/// `date tod spatial fact_count boundary entries`, entries as
/// semicolon-joined `member:freq` pairs in stored rank order.
fn write_cuboid(cuboid: &Cuboid, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match cuboid.k {
        Some(k) => writeln!(out, "k\t{k}")?,
        None => writeln!(out, "k\t-")?,
    }
    for r in &cuboid.rows {
        let entries: Vec<String> =
            r.entries.iter().map(|e| format!("{}:{}", e.member, e.freq)).collect();
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.key.date,
            r.key.tod,
            r.key.spatial,
            r.fact_count,
            r.boundary,
            entries.join(";")
        )?;
    }
    out.flush()?;
    Ok(())
}

fn read_cuboid(coord: Coord, path: &Path) -> Result<Cuboid> {
    let input = BufReader::new(open(path)?);
    let mut lines = input.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(persist_err(path, "missing k header")),
    };
    let k = match header.strip_prefix("k\t") {
        Some("-") => None,
        Some(v) => Some(parse_num(v, path)?),
        None => return Err(persist_err(path, "missing k header")),
    };
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let date: i64 = parse_num(field(&mut parts, path)?, path)?;
        let tod: u32 = parse_num(field(&mut parts, path)?, path)?;
        let spatial: u32 = parse_num(field(&mut parts, path)?, path)?;
        let fact_count: u64 = parse_num(field(&mut parts, path)?, path)?;
        let boundary: u64 = parse_num(field(&mut parts, path)?, path)?;
        let packed = field(&mut parts, path)?;
        let mut entries = Vec::new();
        for pair in packed.split(';').filter(|p| !p.is_empty()) {
            let (member, freq) =
                pair.split_once(':').ok_or_else(|| persist_err(path, "bad entry pair"))?;
            entries.push(Entry {
                member: parse_num(member, path)?,
                freq: parse_num(freq, path)?,
            });
        }
        rows.push(GroupRow { key: GroupKey { date, tod, spatial }, fact_count, entries, boundary });
    }
    Ok(Cuboid::assemble(coord, rows, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::tests::{build, sample_objects};
    use crate::exec::Execution;
    use crate::ingest::parse_ts;
    use crate::materialize::{Budget, MaterializeConfig, Strategy};
    use crate::model::{
        CubeSchema, GridConfig, MeasureKind, QuerySpec, SpatialScheme, TextualScheme, TimeRange,
        TopK,
    };
    use crate::query;

    fn full_cfg() -> MaterializeConfig {
        MaterializeConfig { strategy: Strategy::Full, ..MaterializeConfig::default() }
    }

    fn truncated_cfg() -> MaterializeConfig {
        MaterializeConfig {
            strategy: Strategy::PartialApprox,
            budget: Budget::Cuboids(4),
            top_k: Some(1),
            strict_budget: false,
        }
    }

    fn dense_spec(textual_scheme: TextualScheme, spatial_scheme: SpatialScheme) -> QuerySpec {
        QuerySpec {
            measure: MeasureKind::TopKDense,
            spatial_scheme,
            textual_scheme,
            spatial_level: 1,
            members: None,
            group_by: Some(1),
            textual_level: 0,
            keywords: None,
            range: TimeRange::new(
                parse_ts("2019-10-20T00:00:00Z").unwrap(),
                parse_ts("2019-10-26T00:00:00Z").unwrap(),
            ),
            intervals: 1,
            k: TopK::All,
        }
    }

    /// NaN areas (grid all, catch-all points) defeat derived float
    /// equality, so the spatial parts are compared through their dumped
    /// forms, where NaN is an ordinary token.
    fn spatial_rows(s: &SpatialStore) -> Vec<(u8, String, u64, u32)> {
        s.saved_rows().map(|(l, n, a, p)| (l, n.to_string(), a.to_bits(), p)).collect()
    }

    fn tax_dump(t: &SpatialTaxonomy) -> Vec<u8> {
        let mut out = Vec::new();
        t.dump_tsv(&mut out).unwrap();
        out
    }

    fn assert_same_cube(a: &Cube, b: &Cube) {
        assert_eq!(a.facts(), b.facts());
        assert_eq!(spatial_rows(a.spatial_store()), spatial_rows(b.spatial_store()));
        assert_eq!(a.text_store(), b.text_store());
        assert_eq!(tax_dump(a.spatial_taxonomy()), tax_dump(b.spatial_taxonomy()));
        assert_eq!(a.text_taxonomy(), b.text_taxonomy());
        assert_eq!(a.importance(), b.importance());
        assert_eq!(a.lattice(), b.lattice());
        assert_eq!(a.plan_steps(), b.plan_steps());
        assert_eq!(
            serde_json::to_string(a.config()).unwrap(),
            serde_json::to_string(b.config()).unwrap()
        );
        let coords: Vec<Coord> = a.cuboids().map(|c| c.coord).collect();
        assert_eq!(coords, b.cuboids().map(|c| c.coord).collect::<Vec<_>>());
        for c in coords {
            assert_eq!(a.cuboid(c), b.cuboid(c));
        }
    }

    #[test]
    fn full_cube_round_trips() {
        let cube = build(&sample_objects(), TextualScheme::Replication, full_cfg());
        let dir = tempfile::tempdir().unwrap();
        save(&cube, dir.path()).unwrap();
        let loaded = load(dir.path()).unwrap();
        assert_same_cube(&cube, &loaded);

        let spec = dense_spec(TextualScheme::Replication, SpatialScheme::Semantic);
        let a = query::evaluate(&cube, &spec).unwrap();
        let b = query::evaluate(&loaded, &spec).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn truncated_cube_round_trips_with_boundaries() {
        let cube = build(&sample_objects(), TextualScheme::Majority, truncated_cfg());
        let truncated_boundaries = cube
            .cuboids()
            .filter(|c| c.k.is_some())
            .flat_map(|c| c.rows.iter())
            .filter(|r| r.boundary > 0)
            .count();
        assert!(truncated_boundaries > 0, "fixture must exercise a cut list");

        let dir = tempfile::tempdir().unwrap();
        save(&cube, dir.path()).unwrap();
        let loaded = load(dir.path()).unwrap();
        assert_same_cube(&cube, &loaded);
    }

    #[test]
    fn grid_cube_round_trips_without_a_taxonomy() {
        let config = crate::cube::CubeConfig {
            schema: CubeSchema::standard(
                SpatialScheme::Grid,
                TextualScheme::Replication,
                GridConfig::default(),
            ),
            materialize: full_cfg(),
            exec: Execution::Sequential,
            geocode_cutoff_km: 50.0,
        };
        let cube = Cube::construct(
            &sample_objects(),
            config,
            SpatialTaxonomy::default(),
            TextTaxonomy::default(),
            ImportanceScores::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        save(&cube, dir.path()).unwrap();
        let loaded = load(dir.path()).unwrap();
        assert_same_cube(&cube, &loaded);

        let spec = dense_spec(TextualScheme::Replication, SpatialScheme::Grid);
        let a = query::evaluate(&cube, &spec).unwrap();
        let b = query::evaluate(&loaded, &spec).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    fn dir_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
        let mut out = BTreeMap::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in fs::read_dir(&d).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                    out.insert(rel, fs::read(&p).unwrap());
                }
            }
        }
        out
    }

    #[test]
    fn saving_is_byte_stable() {
        let cube = build(&sample_objects(), TextualScheme::Majority, truncated_cfg());
        let (a, b, c) = (
            tempfile::tempdir().unwrap(),
            tempfile::tempdir().unwrap(),
            tempfile::tempdir().unwrap(),
        );
        save(&cube, a.path()).unwrap();
        save(&cube, b.path()).unwrap();
        assert_eq!(dir_files(a.path()), dir_files(b.path()));

        let loaded = load(a.path()).unwrap();
        save(&loaded, c.path()).unwrap();
        assert_eq!(dir_files(a.path()), dir_files(c.path()));
    }

    #[test]
    fn update_behaves_identically_after_a_reload() {
        let mut cube = build(&sample_objects(), TextualScheme::Replication, full_cfg());
        let dir = tempfile::tempdir().unwrap();
        save(&cube, dir.path()).unwrap();
        let mut loaded = load(dir.path()).unwrap();

        let extra = vec![crate::cube::tests::obj(
            "2019-10-25T09:00:00Z",
            56.1510,
            10.2047,
            &["apple", "harvest"],
        )];
        cube.update(&extra);
        loaded.update(&extra);
        assert_same_cube(&cube, &loaded);
    }

    #[test]
    fn unknown_format_versions_are_refused() {
        let cube = build(&sample_objects(), TextualScheme::Replication, full_cfg());
        let dir = tempfile::tempdir().unwrap();
        save(&cube, dir.path()).unwrap();

        let schema_path = dir.path().join("schema.json");
        let mut doc: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&schema_path).unwrap()).unwrap();
        doc["format_version"] = serde_json::Value::from(FORMAT_VERSION + 1);
        fs::write(&schema_path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();

        match load(dir.path()) {
            Err(Error::Persist(msg)) => assert!(msg.contains("format version")),
            other => panic!("expected a version refusal, got {other:?}"),
        }
    }
}
