//! Seeded synthetic datasets for benchmarks and property tests.
//!
//! Objects are drawn around the representative points of an embedded
//! twelve-city taxonomy (Denmark and southern Sweden), with uniform
//! timestamps over a configurable span and term lists sampled from a
//! Zipf-distributed vocabulary, so keyword frequencies have the long tail
//! that makes ranked-list truncation interesting. Everything is a pure
//! function of [`SynthConfig`]: the same seed yields the same dataset,
//! vocabulary, and taxonomies.

use std::io::{Cursor, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::error::Result;
use crate::hierarchy::{SpatialTaxonomy, TextTaxonomy};
use crate::ingest::{self, normalize_token};
use crate::model::SttObject;

/// City/region/country fixture the generator samples from.
const CITIES_TSV: &str = include_str!("synth_cities.tsv");

/// 2021-03-01T00:00:00Z; a 37-day default span then crosses a month and a
/// quarter boundary, so date rollups on synthetic cubes are non-trivial.
const START_TS: i64 = 1_614_556_800;

/// Offset mixed into the seed for the vocabulary stream, so vocabulary
/// and object draws do not share RNG state.
const VOCAB_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub objects: usize,
    pub seed: u64,
    /// Span covered by timestamps, starting at a fixed epoch day.
    pub days: u32,
    /// Vocabulary size; terms are drawn from it with Zipf weights.
    pub vocabulary: usize,
    pub zipf_exponent: f64,
    /// Terms per object, uniform in `1..=max_terms`.
    pub max_terms: usize,
}

impl SynthConfig {
    pub fn new(objects: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            objects,
            seed,
            days: 37,
            vocabulary: 240,
            zipf_exponent: 1.45,
            max_terms: 5,
        }
    }
}

/// The embedded city taxonomy.
pub fn spatial_taxonomy() -> SpatialTaxonomy {
    SpatialTaxonomy::from_reader(Cursor::new(CITIES_TSV)).expect("embedded fixture is well-formed")
}

/// Pronounceable three-syllable stems, deduplicated and stable under
/// token normalization, so re-ingesting generated text reproduces the
/// same terms.
pub fn vocabulary(cfg: &SynthConfig) -> Vec<String> {
    const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ VOCAB_STREAM);
    let mut words = Vec::with_capacity(cfg.vocabulary);
    while words.len() < cfg.vocabulary {
        let mut w = String::with_capacity(6);
        for _ in 0..3 {
            w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
            w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
        }
        if normalize_token(&w) == w && !words.contains(&w) {
            words.push(w);
        }
    }
    words
}

/// Textual taxonomy over the seed's vocabulary: blocks of eight terms per
/// theme, five themes per topic, three topics per concept.
pub fn text_taxonomy(cfg: &SynthConfig) -> TextTaxonomy {
    let vocab = vocabulary(cfg);
    let mut rows = String::new();
    let themes = vocab.len().div_ceil(8);
    for (i, term) in vocab.iter().enumerate() {
        rows.push_str(&format!("{term}\ttheme-{:03}\ttheme\n", i / 8));
    }
    for t in 0..themes {
        rows.push_str(&format!("theme-{t:03}\ttopic-{:02}\ttopic\n", t / 5));
    }
    for t in 0..themes.div_ceil(5) {
        rows.push_str(&format!("topic-{t:02}\tconcept-{:02}\tconcept\n", t / 3));
    }
    TextTaxonomy::from_reader(Cursor::new(rows)).expect("generated taxonomy is well-formed")
}

/// Draw the configured objects. Each takes one city pick, a small
/// coordinate jitter (within the reverse-geocoding cutoff of its city),
/// a uniform timestamp, and `1..=max_terms` Zipf term draws.
pub fn generate(cfg: &SynthConfig) -> Vec<SttObject> {
    let vocab = vocabulary(cfg);
    let tax = spatial_taxonomy();
    let cities: Vec<(f64, f64)> = tax
        .all_cities()
        .filter(|c| c.rep_lat.is_finite())
        .map(|c| (c.rep_lat, c.rep_lon))
        .collect();
    let zipf =
        Zipf::new(vocab.len() as u64, cfg.zipf_exponent).expect("vocabulary is non-empty");
    let span = i64::from(cfg.days).max(1) * 86_400;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.objects)
        .map(|_| {
            let (clat, clon) = cities[rng.gen_range(0..cities.len())];
            let lat = clat + rng.gen_range(-0.02..0.02);
            let lon = clon + rng.gen_range(-0.03..0.03);
            let ts = START_TS + rng.gen_range(0..span);
            let count = rng.gen_range(1..=cfg.max_terms);
            let terms = (0..count)
                .map(|_| vocab[zipf.sample(&mut rng) as usize - 1].clone())
                .collect();
            SttObject::new(lat, lon, terms, ts)
        })
        .collect()
}

/// Objects plus the two taxonomies they were drawn against.
pub fn dataset(cfg: &SynthConfig) -> (Vec<SttObject>, SpatialTaxonomy, TextTaxonomy) {
    (generate(cfg), spatial_taxonomy(), text_taxonomy(cfg))
}

/// One `{"lat":..,"lon":..,"ts":"..","text":".."}` object per line, the
/// shape [`ingest::parse_records`] reads back.
pub fn write_jsonl(objects: &[SttObject], mut out: impl Write) -> Result<()> {
    for o in objects {
        let line = serde_json::json!({
            "lat": o.lat,
            "lon": o.lon,
            "ts": ingest::render_ts(o.ts),
            "text": o.terms.join(" "),
        });
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{HashMap, HashSet};

    use crate::hierarchy::day_of;
    use crate::ingest::{parse_records, RecordFormat, StopwordList};

    #[test]
    fn the_seed_determines_the_dataset() {
        let cfg = SynthConfig::new(500, 11);
        assert_eq!(generate(&cfg), generate(&cfg));
        let other = SynthConfig::new(500, 12);
        assert_ne!(generate(&cfg), generate(&other));
    }

    #[test]
    fn vocabulary_is_normalization_stable_and_distinct() {
        let cfg = SynthConfig::new(0, 3);
        let vocab = vocabulary(&cfg);
        assert_eq!(vocab.len(), cfg.vocabulary);
        let distinct: HashSet<&String> = vocab.iter().collect();
        assert_eq!(distinct.len(), vocab.len());
        for w in &vocab {
            assert_eq!(&normalize_token(w), w);
        }
    }

    #[test]
    fn every_term_has_a_theme_chain() {
        let cfg = SynthConfig::new(0, 3);
        let tax = text_taxonomy(&cfg);
        for w in vocabulary(&cfg) {
            assert!(tax.ancestor(&w, 1).starts_with("theme-"), "{w} is unmapped");
            assert!(tax.ancestor(&w, 2).starts_with("topic-"));
            assert!(tax.ancestor(&w, 3).starts_with("concept-"));
        }
    }

    #[test]
    fn objects_stay_within_their_city_cutoff() {
        let cfg = SynthConfig::new(2_000, 7);
        let tax = spatial_taxonomy();
        for o in generate(&cfg) {
            let city = ingest::reverse_geocode(o.lat, o.lon, &tax, 50.0);
            assert_ne!(city, ingest::UNKNOWN_MEMBER);
            assert!(tax.ancestor_of_city(city, 2).len() > 1);
        }
    }

    #[test]
    fn jsonl_output_reingests_to_the_same_objects() {
        let cfg = SynthConfig::new(300, 5);
        let objects = generate(&cfg);
        let mut buf = Vec::new();
        write_jsonl(&objects, &mut buf).unwrap();
        let parsed =
            parse_records(Cursor::new(buf), RecordFormat::Jsonl, &StopwordList::empty()).unwrap();
        assert!(parsed.rejections.is_empty());
        assert_eq!(parsed.records, objects);
    }

    /// The day-city keyword profile is what makes the benchmark regimes
    /// distinct: rich enough that a truncated list (K = 31) cuts real
    /// tail, small enough that a day-city cuboid is far cheaper to scan
    /// than the base.
    #[test]
    fn day_city_groups_carry_a_rich_keyword_tail() {
        let cfg = SynthConfig::new(100_000, 1);
        let tax = spatial_taxonomy();
        let mut groups: HashMap<(i64, String), HashSet<String>> = HashMap::new();
        for o in generate(&cfg) {
            let city = ingest::reverse_geocode(o.lat, o.lon, &tax, 50.0).to_string();
            let set = groups.entry((day_of(o.ts), city)).or_default();
            for t in &o.terms {
                set.insert(t.clone());
            }
        }
        let mean =
            groups.values().map(|s| s.len()).sum::<usize>() as f64 / groups.len() as f64;
        assert!(
            (60.0..=140.0).contains(&mean),
            "mean distinct keywords per day-city group drifted to {mean:.1}"
        );
    }
}
