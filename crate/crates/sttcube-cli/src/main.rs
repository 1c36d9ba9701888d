//! Command line front end: construct and update cube directories, re-plan
//! materialization, run measure queries, generate synthetic datasets, and
//! drive the benchmark harness.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sttcube::bench::{self, BenchConfig};
use sttcube::cube::{Cube, CubeConfig};
use sttcube::exec::Execution;
use sttcube::hierarchy::{ImportanceScores, SpatialTaxonomy, TextTaxonomy};
use sttcube::ingest::{self, RecordFormat, StopwordList};
use sttcube::materialize::{Budget, MaterializeConfig, Strategy};
use sttcube::model::{
    self, CubeSchema, GridConfig, MeasureKind, QuerySpec, SpatialScheme, SttObject,
    TextualScheme, TimeRange, TopK,
};
use sttcube::persist;
use sttcube::query::{self, MeasureValue, QueryOutput, Source};
use sttcube::synth::{self, SynthConfig};

#[derive(Parser)]
#[command(name = "sttcube", version, about = "OLAP cubes over geo-tagged, timestamped text")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a cube from a record file and save it as a directory.
    Construct(ConstructArgs),
    /// Append records to a saved cube.
    Update(UpdateArgs),
    /// Re-plan materialization on a saved cube.
    #[command(alias = "replan")]
    Materialize(MaterializeArgs),
    /// Evaluate one measure query against a saved cube.
    Query(QueryArgs),
    /// Run the benchmark suite and write CSV reports.
    Bench(BenchArgs),
    /// Generate a seeded synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Jsonl,
    Csv,
}

impl From<FormatArg> for RecordFormat {
    fn from(f: FormatArg) -> RecordFormat {
        match f {
            FormatArg::Jsonl => RecordFormat::Jsonl,
            FormatArg::Csv => RecordFormat::Csv,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SpatialSchemeArg {
    Grid,
    Semantic,
}

impl From<SpatialSchemeArg> for SpatialScheme {
    fn from(s: SpatialSchemeArg) -> SpatialScheme {
        match s {
            SpatialSchemeArg::Grid => SpatialScheme::Grid,
            SpatialSchemeArg::Semantic => SpatialScheme::Semantic,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TextualSchemeArg {
    Replication,
    Majority,
    Custom,
}

impl From<TextualSchemeArg> for TextualScheme {
    fn from(s: TextualSchemeArg) -> TextualScheme {
        match s {
            TextualSchemeArg::Replication => TextualScheme::Replication,
            TextualSchemeArg::Majority => TextualScheme::Majority,
            TextualSchemeArg::Custom => TextualScheme::Custom,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Nm,
    Pem,
    Pam,
    Fm,
    Greedy,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Strategy {
        match s {
            StrategyArg::Nm => Strategy::None,
            StrategyArg::Pem => Strategy::PartialExact,
            StrategyArg::Pam => Strategy::PartialApprox,
            StrategyArg::Fm => Strategy::Full,
            StrategyArg::Greedy => Strategy::Greedy,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MeasureArg {
    FactCount,
    KeywordFrequency,
    SurfaceArea,
    KeywordDensity,
    KeywordVolatility,
    TopkDense,
    TopkVolatile,
    TopkFrequent,
}

impl From<MeasureArg> for MeasureKind {
    fn from(m: MeasureArg) -> MeasureKind {
        match m {
            MeasureArg::FactCount => MeasureKind::FactCount,
            MeasureArg::KeywordFrequency => MeasureKind::KeywordFrequency,
            MeasureArg::SurfaceArea => MeasureKind::SurfaceArea,
            MeasureArg::KeywordDensity => MeasureKind::KeywordDensity,
            MeasureArg::KeywordVolatility => MeasureKind::KeywordVolatility,
            MeasureArg::TopkDense => MeasureKind::TopKDense,
            MeasureArg::TopkVolatile => MeasureKind::TopKVolatile,
            MeasureArg::TopkFrequent => MeasureKind::TopKFrequent,
        }
    }
}

#[derive(Args)]
struct InputArgs {
    /// Record file, one object per line.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: FormatArg,
    /// Stopword file, one word per line; a built-in English list otherwise.
    #[arg(long, value_name = "FILE")]
    stopwords: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long, value_enum, default_value = "pem")]
    strategy: StrategyArg,
    /// Extra-row budget for partial strategies.
    #[arg(long, value_name = "N", conflicts_with_all = ["budget_cuboids", "budget_bytes"])]
    budget_rows: Option<u64>,
    /// Extra-cuboid budget for partial strategies (default 3).
    #[arg(long, value_name = "N", conflicts_with = "budget_bytes")]
    budget_cuboids: Option<u64>,
    /// Extra-byte budget for partial strategies.
    #[arg(long, value_name = "N")]
    budget_bytes: Option<u64>,
    /// Keywords kept per stored group under pam; unbounded otherwise.
    #[arg(long, value_name = "K")]
    top_k: Option<u32>,
    /// Stop strictly under budget instead of completing the final pick.
    #[arg(long)]
    strict_budget: bool,
}

impl PlanArgs {
    fn to_config(&self) -> MaterializeConfig {
        let defaults = MaterializeConfig::default();
        let budget = if let Some(n) = self.budget_rows {
            Budget::Rows(n)
        } else if let Some(n) = self.budget_cuboids {
            Budget::Cuboids(n)
        } else if let Some(n) = self.budget_bytes {
            Budget::Bytes(n)
        } else {
            defaults.budget
        };
        MaterializeConfig {
            strategy: self.strategy.into(),
            budget,
            top_k: self.top_k,
            strict_budget: self.strict_budget,
        }
    }
}

#[derive(Args)]
struct ConstructArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Directory the cube is saved to.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "semantic")]
    spatial_scheme: SpatialSchemeArg,
    #[arg(long, value_enum, default_value = "replication")]
    textual_scheme: TextualSchemeArg,
    /// City taxonomy TSV; required by the semantic scheme.
    #[arg(long, value_name = "FILE")]
    spatial_taxonomy: Option<PathBuf>,
    /// Term taxonomy TSV (child, parent, level); terms self-parent otherwise.
    #[arg(long, value_name = "FILE")]
    textual_taxonomy: Option<PathBuf>,
    /// Importance scores TSV for the custom scheme.
    #[arg(long, value_name = "FILE")]
    importance: Option<PathBuf>,
    #[command(flatten)]
    plan: PlanArgs,
    /// Side length of a level-0 grid cell, km.
    #[arg(long, value_name = "KM", default_value_t = 1.0)]
    grid_cell_km: f64,
    /// Coarsening factor between grid levels.
    #[arg(long, value_name = "N", default_value_t = 3)]
    grid_factor: u32,
    /// Grid levels below all.
    #[arg(long, value_name = "N", default_value_t = 4)]
    grid_levels: u8,
    /// Reverse-geocoding cutoff, km.
    #[arg(long, value_name = "KM")]
    geocode_cutoff_km: Option<f64>,
    /// Disable the data-parallel aggregation folds.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct UpdateArgs {
    /// Saved cube directory.
    #[arg(long, value_name = "DIR")]
    cube: PathBuf,
    #[command(flatten)]
    input: InputArgs,
}

#[derive(Args)]
struct MaterializeArgs {
    /// Saved cube directory.
    #[arg(long, value_name = "DIR")]
    cube: PathBuf,
    #[command(flatten)]
    plan: PlanArgs,
}

#[derive(Args)]
struct QueryArgs {
    /// Saved cube directory.
    #[arg(long, value_name = "DIR")]
    cube: PathBuf,
    #[arg(long, value_enum)]
    measure: MeasureArg,
    /// Spatial level name (city, g1, all, ...) or index.
    #[arg(long, value_name = "LEVEL")]
    spatial_level: String,
    /// Area members at that level; everything when omitted.
    #[arg(long, value_name = "NAMES", value_delimiter = ',')]
    members: Option<Vec<String>>,
    /// Group results by this (finer or equal) spatial level.
    #[arg(long, value_name = "LEVEL")]
    group_by: Option<String>,
    /// Textual level name (term, theme, ...) or index.
    #[arg(long, value_name = "LEVEL", default_value = "term")]
    textual_level: String,
    /// Score only these keywords.
    #[arg(long, value_name = "WORDS", value_delimiter = ',')]
    keywords: Option<Vec<String>>,
    /// Range start, inclusive: a date or a timestamp.
    #[arg(long, value_name = "WHEN")]
    from: String,
    /// Range end, exclusive.
    #[arg(long, value_name = "WHEN")]
    to: String,
    /// Equal sub-intervals for volatility measures.
    #[arg(long, value_name = "N", default_value_t = 1)]
    intervals: u32,
    /// Ranking length: a number or "all".
    #[arg(long, value_name = "K", default_value = "all")]
    k: String,
    /// Spatial and textual scheme pair, e.g. "grid,majority"; the cube's
    /// own schemes when omitted.
    #[arg(long, value_name = "SPATIAL,TEXTUAL")]
    scheme: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    /// Record file to benchmark over; a synthetic dataset when omitted.
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: FormatArg,
    #[arg(long, value_name = "FILE")]
    stopwords: Option<PathBuf>,
    /// City taxonomy TSV; required with --data.
    #[arg(long, value_name = "FILE")]
    spatial_taxonomy: Option<PathBuf>,
    /// Term taxonomy TSV.
    #[arg(long, value_name = "FILE")]
    textual_taxonomy: Option<PathBuf>,
    /// Synthetic object count when no --data is given.
    #[arg(long, value_name = "N", default_value_t = 10_000)]
    objects: usize,
    /// Strategies to compare.
    #[arg(long, value_delimiter = ',', default_value = "nm,pam,pem,fm")]
    strategies: Vec<StrategyArg>,
    /// Timing repetitions per query.
    #[arg(long, value_name = "N", default_value_t = 10)]
    reps: usize,
    #[arg(long, value_name = "N", default_value_t = 7)]
    seed: u64,
    /// Report directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Keywords kept per stored group in the pam cube.
    #[arg(long, value_name = "K", default_value_t = 31)]
    top_k: u32,
    /// Extra-cuboid budget for the partial strategies.
    #[arg(long, value_name = "N", default_value_t = 4)]
    budget_cuboids: u64,
    #[arg(long, value_enum, default_value = "replication")]
    textual_scheme: TextualSchemeArg,
    /// Sweep stored-K values with one pam replan each.
    #[arg(long)]
    k_sweep: bool,
    /// Base sizes for the scan-cost linearity fit, e.g. "1000,2000,4000".
    #[arg(long, value_name = "SIZES", value_delimiter = ',')]
    cost_model: Option<Vec<usize>>,
    /// Time with the data-parallel folds enabled.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_name = "N", default_value_t = 100_000)]
    objects: usize,
    #[arg(long, value_name = "N", default_value_t = 7)]
    seed: u64,
    /// JSONL output file.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Also write spatial.tsv and textual.tsv taxonomies here.
    #[arg(long, value_name = "DIR")]
    taxonomies: Option<PathBuf>,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Construct(args) => construct(args),
        Command::Update(args) => update(args),
        Command::Materialize(args) => materialize(args),
        Command::Query(args) => run_query(args),
        Command::Bench(args) => run_bench(args),
        Command::Synth(args) => run_synth(args),
    }
}

// ---------------------------------------------------------------------------
// Shared loading helpers

fn open_buffered(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn load_stopwords(path: &Option<PathBuf>) -> Result<StopwordList> {
    match path {
        Some(p) => StopwordList::from_reader(open_buffered(p)?)
            .with_context(|| format!("reading stopwords from {}", p.display())),
        None => Ok(StopwordList::default()),
    }
}

fn read_records(input: &InputArgs) -> Result<Vec<SttObject>> {
    let stops = load_stopwords(&input.stopwords)?;
    let outcome = ingest::parse_records(open_buffered(&input.input)?, input.format.into(), &stops)
        .with_context(|| format!("parsing {}", input.input.display()))?;
    if !outcome.rejections.is_empty() {
        let mut counts = std::collections::BTreeMap::new();
        for r in &outcome.rejections {
            *counts.entry(r.reason.code()).or_insert(0u64) += 1;
        }
        let detail: Vec<String> =
            counts.iter().map(|(code, n)| format!("{code} {n}")).collect();
        eprintln!(
            "rejected {} of {} lines ({})",
            outcome.rejections.len(),
            outcome.rejections.len() + outcome.records.len(),
            detail.join(", ")
        );
    }
    Ok(outcome.records)
}

fn load_spatial_taxonomy(path: &Option<PathBuf>) -> Result<SpatialTaxonomy> {
    match path {
        Some(p) => SpatialTaxonomy::from_reader(open_buffered(p)?)
            .with_context(|| format!("reading spatial taxonomy from {}", p.display())),
        None => Ok(SpatialTaxonomy::default()),
    }
}

fn load_text_taxonomy(path: &Option<PathBuf>) -> Result<TextTaxonomy> {
    match path {
        Some(p) => TextTaxonomy::from_reader(open_buffered(p)?)
            .with_context(|| format!("reading textual taxonomy from {}", p.display())),
        None => Ok(TextTaxonomy::default()),
    }
}

fn print_plan(cube: &Cube) {
    let extra = cube.cuboids().count() - 1;
    println!(
        "base cuboid: {} rows from {} facts",
        cube.base().row_count(),
        cube.facts().len()
    );
    if extra == 0 {
        println!("no extra cuboids materialized");
    } else {
        println!("materialized {extra} extra cuboids ({} extra rows)", cube.extra_rows());
        // The greedy strategies leave a pick trace; none/full do not.
        for s in cube.plan_steps() {
            println!("  {}  benefit {}  rows {}", s.coord.token(), s.benefit, s.size);
        }
    }
}

// ---------------------------------------------------------------------------
// construct / update / materialize

fn construct(args: ConstructArgs) -> Result<()> {
    let records = read_records(&args.input)?;
    let spatial_tax = load_spatial_taxonomy(&args.spatial_taxonomy)?;
    let text_tax = load_text_taxonomy(&args.textual_taxonomy)?;
    let scores = match &args.importance {
        Some(p) => ImportanceScores::from_reader(open_buffered(p)?)
            .with_context(|| format!("reading importance scores from {}", p.display()))?,
        None => ImportanceScores::default(),
    };
    let config = CubeConfig {
        schema: CubeSchema::standard(
            args.spatial_scheme.into(),
            args.textual_scheme.into(),
            GridConfig {
                base_cell_km: args.grid_cell_km,
                factor: args.grid_factor,
                level_count: args.grid_levels,
            },
        ),
        materialize: args.plan.to_config(),
        exec: if args.sequential { Execution::Sequential } else { Execution::Auto },
        geocode_cutoff_km: args.geocode_cutoff_km.unwrap_or_else(ingest::geocode_cutoff_km),
    };
    println!("constructing with {} over {} records", config.materialize.strategy, records.len());
    let cube = Cube::construct(&records, config, spatial_tax, text_tax, scores)?;
    print_plan(&cube);
    persist::save(&cube, &args.out)?;
    println!("saved cube to {}", args.out.display());
    Ok(())
}

fn update(args: UpdateArgs) -> Result<()> {
    let records = read_records(&args.input)?;
    let mut cube = persist::load(&args.cube)
        .with_context(|| format!("loading cube from {}", args.cube.display()))?;
    let before = cube.facts().len();
    cube.update(&records);
    println!("appended {} facts ({} total)", cube.facts().len() - before, cube.facts().len());
    print_plan(&cube);
    persist::save(&cube, &args.cube)?;
    println!("saved cube to {}", args.cube.display());
    Ok(())
}

fn materialize(args: MaterializeArgs) -> Result<()> {
    let mut cube = persist::load(&args.cube)
        .with_context(|| format!("loading cube from {}", args.cube.display()))?;
    let config = args.plan.to_config();
    println!("re-planning with {}", config.strategy);
    cube.replan(config)?;
    print_plan(&cube);
    persist::save(&cube, &args.cube)?;
    println!("saved cube to {}", args.cube.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// query

fn parse_when(s: &str) -> Result<i64> {
    if let Some(ts) = ingest::parse_ts(s) {
        return Ok(ts);
    }
    if let Ok(date) = chrono_free_date(s) {
        return Ok(date);
    }
    s.parse::<i64>()
        .with_context(|| format!("cannot read {s:?} as a date, datetime, or epoch seconds"))
}

/// Midnight UTC of a bare `YYYY-MM-DD`.
fn chrono_free_date(s: &str) -> Result<i64> {
    ingest::parse_ts(&format!("{s}T00:00:00"))
        .ok_or_else(|| anyhow::anyhow!("not a date: {s:?}"))
}

fn parse_topk(s: &str) -> Result<TopK> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(TopK::All);
    }
    let k: u32 = s.parse().with_context(|| format!("k must be a number or \"all\", got {s:?}"))?;
    Ok(TopK::K(k))
}

fn spatial_level_of(schema: &CubeSchema, s: &str) -> Result<u8> {
    if let Some(i) = schema.spatial_level_by_name(s) {
        return Ok(i);
    }
    s.parse::<u8>()
        .with_context(|| format!("unknown spatial level {s:?}"))
}

fn textual_level_of(s: &str) -> Result<u8> {
    if let Some(i) = model::level_index(&model::TEXT_LEVELS, s) {
        return Ok(i);
    }
    s.parse::<u8>()
        .with_context(|| format!("unknown textual level {s:?}"))
}

fn parse_scheme_pair(s: &str) -> Result<(SpatialScheme, TextualScheme)> {
    let (a, b) = s
        .split_once(',')
        .with_context(|| format!("scheme must look like \"grid,majority\", got {s:?}"))?;
    let spatial = match a.trim().to_ascii_lowercase().as_str() {
        "grid" => SpatialScheme::Grid,
        "semantic" => SpatialScheme::Semantic,
        other => bail!("unknown spatial scheme {other:?}"),
    };
    let textual = match b.trim().to_ascii_lowercase().as_str() {
        "replication" => TextualScheme::Replication,
        "majority" => TextualScheme::Majority,
        "custom" => TextualScheme::Custom,
        other => bail!("unknown textual scheme {other:?}"),
    };
    Ok((spatial, textual))
}

fn run_query(args: QueryArgs) -> Result<()> {
    let cube = persist::load(&args.cube)
        .with_context(|| format!("loading cube from {}", args.cube.display()))?;
    let schema = cube.schema();
    let (spatial_scheme, textual_scheme) = match &args.scheme {
        Some(s) => parse_scheme_pair(s)?,
        None => (schema.spatial_scheme, schema.textual_scheme),
    };
    let spec = QuerySpec {
        measure: args.measure.into(),
        spatial_scheme,
        textual_scheme,
        spatial_level: spatial_level_of(schema, &args.spatial_level)?,
        members: args.members.clone(),
        group_by: args.group_by.as_deref().map(|g| spatial_level_of(schema, g)).transpose()?,
        textual_level: textual_level_of(&args.textual_level)?,
        keywords: args.keywords.clone(),
        range: TimeRange::new(parse_when(&args.from)?, parse_when(&args.to)?),
        intervals: args.intervals,
        k: parse_topk(&args.k)?,
    };
    let out = query::evaluate(&cube, &spec)?;
    print_output(&out);
    Ok(())
}

fn print_output(out: &QueryOutput) {
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    match out.plan.source {
        Source::Cuboid { coord, rows, truncated } => println!(
            "# source: cuboid {} ({} rows{})",
            coord.token(),
            rows,
            if truncated { ", truncated" } else { "" }
        ),
        Source::Facts { count } => println!("# source: facts ({count} rows)"),
    }
    println!("# approximate: {}", if out.plan.approximate { "yes" } else { "no" });
    println!("rank\tmember_or_keyword\tscore\tguaranteed");

    // Scalar values rank across groups; list values rank within each
    // group, groups separated by comment lines.
    let mut scalars: Vec<(&str, f64)> = Vec::new();
    for g in &out.groups {
        let label = g.member.as_deref().unwrap_or("*");
        match &g.value {
            MeasureValue::Count(n) => scalars.push((label, *n as f64)),
            MeasureValue::Area(a) => scalars.push((label, *a)),
            MeasureValue::Keywords(ks) => {
                if out.groups.len() > 1 {
                    println!("# group: {label}");
                }
                for (i, k) in ks.iter().enumerate() {
                    print_row(i + 1, &k.keyword, k.score, !out.plan.approximate);
                }
            }
            MeasureValue::Ranking(r) => {
                if out.groups.len() > 1 {
                    println!("# group: {label} epsilon={} delta={}", r.epsilon, r.delta);
                } else {
                    println!("# epsilon: {}", r.epsilon);
                    println!("# delta: {}", r.delta);
                }
                for (i, e) in r.entries.iter().enumerate() {
                    print_row(i + 1, &e.keyword, e.score, e.guaranteed);
                }
            }
        }
    }
    if !scalars.is_empty() {
        scalars.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        for (i, (label, score)) in scalars.iter().enumerate() {
            print_row(i + 1, label, *score, !out.plan.approximate);
        }
    }
}

fn print_row(rank: usize, label: &str, score: f64, guaranteed: bool) {
    let score = if score.fract() == 0.0 && score.abs() < 1e15 {
        format!("{}", score as i64)
    } else {
        format!("{score:.6}")
    };
    println!("{rank}\t{label}\t{score}\t{}", u8::from(guaranteed));
}

// ---------------------------------------------------------------------------
// bench / synth

fn run_bench(args: BenchArgs) -> Result<()> {
    let (objects, spatial_tax, text_tax) = match &args.data {
        Some(path) => {
            let input = InputArgs {
                input: path.clone(),
                format: args.format,
                stopwords: args.stopwords.clone(),
            };
            let records = read_records(&input)?;
            let Some(stax) = &args.spatial_taxonomy else {
                bail!("--data needs --spatial-taxonomy for the semantic scheme");
            };
            (
                records,
                load_spatial_taxonomy(&Some(stax.clone()))?,
                load_text_taxonomy(&args.textual_taxonomy)?,
            )
        }
        None => {
            println!("synthesizing {} objects (seed {})", args.objects, args.seed);
            synth::dataset(&SynthConfig::new(args.objects, args.seed))
        }
    };

    let cfg = BenchConfig {
        objects: objects.len(),
        seed: args.seed,
        strategies: args.strategies.iter().map(|&s| s.into()).collect(),
        repetitions: args.reps,
        top_k: args.top_k,
        budget: Budget::Cuboids(args.budget_cuboids),
        textual_scheme: args.textual_scheme.into(),
        parallel: args.parallel,
        include_k_sweep: args.k_sweep,
        cost_model_sizes: args.cost_model.clone().unwrap_or_default(),
        ..BenchConfig::new(objects.len(), args.seed)
    };
    let report = bench::run_benchmark(&cfg, &objects, &spatial_tax, &text_tax)?;

    for row in &report.storage {
        println!(
            "{}: {} base + {} extra = {} rows",
            row.strategy, row.base_rows, row.extra_rows, row.total_rows
        );
    }
    bench::emit_report(&report, &args.out)?;
    let mut files = vec!["latency.csv", "storage.csv", "accuracy.csv", "benefit_curve.csv", "k_sweep.csv"];
    if report.cost_model.is_some() {
        files.push("cost_model.csv");
    }
    println!("wrote {} under {}", files.join(", "), args.out.display());
    Ok(())
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let cfg = SynthConfig::new(args.objects, args.seed);
    let (objects, spatial_tax, text_tax) = synth::dataset(&cfg);
    let out = File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let mut w = BufWriter::new(out);
    synth::write_jsonl(&objects, &mut w)?;
    w.flush()?;
    println!("wrote {} objects to {}", objects.len(), args.out.display());
    if let Some(dir) = &args.taxonomies {
        std::fs::create_dir_all(dir)?;
        let spath = dir.join("spatial.tsv");
        spatial_tax.dump_tsv(BufWriter::new(File::create(&spath)?))?;
        let tpath = dir.join("textual.tsv");
        text_tax.dump_tsv(BufWriter::new(File::create(&tpath)?))?;
        println!("wrote taxonomies to {} and {}", spath.display(), tpath.display());
    }
    Ok(())
}
