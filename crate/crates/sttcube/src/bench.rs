//! The measurement harness: a nine-template query suite over seeded
//! parameters, wall-clock latency per materialization strategy, storage
//! accounting, truncated-ranking accuracy against untruncated ground
//! truth, the benefit-per-pick curve, a stored-K sweep, and a scan-cost
//! linearity fit. Reports land as plot-ready CSV files.
//!
//! Evaluation is deterministic, so cross-strategy disagreement on an
//! exact-path result is a defect and aborts the report rather than being
//! averaged away. Repetitions exist to average wall-clock noise only.
//! Queries run sequentially by default to keep latency attribution clean;
//! [`BenchConfig::parallel`] opts the engine's data-parallel folds back in
//! for throughput measurements.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::cube::{Cube, CubeConfig};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::hierarchy::{ImportanceScores, SpatialTaxonomy, TextTaxonomy};
use crate::ingest;
use crate::materialize::{Budget, MaterializeConfig, Strategy};
use crate::model::{
    CubeSchema, GridConfig, MeasureKind, QuerySpec, SpatialScheme, SttObject, TextualScheme,
    TimeRange, TopK,
};
use crate::query::{self, MeasureValue, QueryOutput, Ranking};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Synthetic object count when no external dataset is supplied.
    pub objects: usize,
    pub seed: u64,
    /// Build/report order; storage rows are emitted NM, PAM, PEM, FM
    /// regardless.
    pub strategies: Vec<Strategy>,
    pub repetitions: usize,
    /// Stored-K values the sweep materializes, one PAM replan each.
    pub k_sweep: Vec<u32>,
    /// Ranked-list truncation for the PAM cube.
    pub top_k: u32,
    pub budget: Budget,
    pub textual_scheme: TextualScheme,
    /// Run the engine's parallel folds during timing.
    pub parallel: bool,
    /// The K sweep costs one replan per entry; off unless asked for.
    pub include_k_sweep: bool,
    /// Prefix sizes for the scan-cost linearity fit; empty skips it.
    pub cost_model_sizes: Vec<usize>,
}

impl BenchConfig {
    pub fn new(objects: usize, seed: u64) -> BenchConfig {
        BenchConfig {
            objects,
            seed,
            strategies: vec![
                Strategy::None,
                Strategy::PartialApprox,
                Strategy::PartialExact,
                Strategy::Full,
            ],
            repetitions: 10,
            k_sweep: vec![10, 20, 50, 100, 200, 500, 1000],
            top_k: 31,
            budget: Budget::Cuboids(4),
            textual_scheme: TextualScheme::Replication,
            parallel: false,
            include_k_sweep: false,
            cost_model_sizes: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Bench("repetitions must be at least 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Bench("at least one strategy is required".into()));
        }
        if self.strategies.contains(&Strategy::Greedy) {
            return Err(Error::Bench("compare NM, PEM, PAM, or FM; greedy is PEM/PAM".into()));
        }
        for (i, s) in self.strategies.iter().enumerate() {
            if self.strategies[..i].contains(s) {
                return Err(Error::Bench("duplicate strategy in the comparison list".into()));
            }
        }
        if self.top_k == 0 {
            return Err(Error::Bench("top_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// One instantiated suite query.
#[derive(Debug, Clone)]
pub struct BenchQuery {
    /// `Q<n>-dense` or `Q<n>-volatile`.
    pub name: String,
    pub template: u8,
    pub spec: QuerySpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyRow {
    pub query: String,
    pub strategy: Strategy,
    pub reps: usize,
    pub mean_ms: f64,
    pub stddev_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageRow {
    pub strategy: Strategy,
    pub base_rows: u64,
    pub extra_rows: u64,
    pub total_rows: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub query: String,
    pub k: u32,
    /// Every compared group had its whole prefix inside the guaranteed
    /// run, so the row is exact by construction.
    pub delta_covers_k: bool,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenefitPoint {
    /// Materialized views, base included, after this pick.
    pub views: u32,
    pub coord: String,
    pub cumulative_benefit: u64,
    pub total_rows: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSweepRow {
    pub materialized_k: u32,
    pub samples: usize,
    pub mean_ms: f64,
    pub stddev_ms: f64,
    pub median_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostPoint {
    pub rows: u64,
    pub mean_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearityReport {
    pub points: Vec<CostPoint>,
    pub slope_ms_per_row: f64,
    pub intercept_ms: f64,
    /// 0.0 when the latencies have no variance to explain.
    pub r_squared: f64,
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub latency: Vec<LatencyRow>,
    pub storage: Vec<StorageRow>,
    pub accuracy: Vec<AccuracyRow>,
    pub benefit_curve: Vec<BenefitPoint>,
    pub k_sweep: Vec<KSweepRow>,
    pub cost_model: Option<LinearityReport>,
}

// ---------------------------------------------------------------------------
// Suite generation

struct Template {
    n: u8,
    spatial: u8,
    textual: u8,
    group_by: Option<u8>,
    top_all: bool,
}

/// City, region, and country analogues of the nine published templates;
/// 8 and 9 group a country by its regions, 9 ranks everything (k = ALL).
const TEMPLATES: [Template; 9] = [
    Template { n: 1, spatial: 1, textual: 0, group_by: None, top_all: false },
    Template { n: 2, spatial: 1, textual: 2, group_by: None, top_all: false },
    Template { n: 3, spatial: 3, textual: 3, group_by: None, top_all: false },
    Template { n: 4, spatial: 2, textual: 0, group_by: None, top_all: false },
    Template { n: 5, spatial: 2, textual: 3, group_by: None, top_all: false },
    Template { n: 6, spatial: 2, textual: 1, group_by: None, top_all: false },
    Template { n: 7, spatial: 3, textual: 0, group_by: None, top_all: false },
    Template { n: 8, spatial: 3, textual: 0, group_by: Some(2), top_all: false },
    Template { n: 9, spatial: 3, textual: 2, group_by: Some(2), top_all: true },
];

/// Instantiate the suite against one cube's members: each template gets a
/// uniformly sampled member at its spatial level, a day-aligned span of
/// 1..=14 days inside the data, and (unless it ranks everything) a k in
/// 5..=25, below the default stored K so truncated sources genuinely
/// engage the approximate path. Dense and volatile variants share their
/// template's parameters. Single-parent textual schemes skip the four
/// term-level templates, leaving the five published ones.
pub fn generate_suite(cube: &Cube, seed: u64) -> Vec<BenchQuery> {
    let schema = cube.schema();
    let facts = cube.facts();
    let (min_day, max_day) = facts
        .iter()
        .fold((i64::MAX, i64::MIN), |(lo, hi), f| (lo.min(f.day), hi.max(f.day)));
    let span_days = if facts.is_empty() { 1 } else { (max_day - min_day + 1).max(1) };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suite = Vec::new();
    for t in &TEMPLATES {
        // Parameters are drawn for every template, taken or not, so a
        // scheme change does not reshuffle the surviving queries.
        let member = sample_member(cube, t.spatial, &mut rng);
        let len = rng.gen_range(1..=span_days.min(14));
        let start = min_day + rng.gen_range(0..=span_days - len);
        let range = TimeRange::new(start * 86_400, (start + len) * 86_400);
        let k = rng.gen_range(5..=25);
        if schema.textual_scheme != TextualScheme::Replication && t.textual == 0 {
            continue;
        }
        let Some(member) = member else { continue };
        for (measure, variant) in [
            (MeasureKind::TopKDense, "dense"),
            (MeasureKind::TopKVolatile, "volatile"),
        ] {
            suite.push(BenchQuery {
                name: format!("Q{}-{variant}", t.n),
                template: t.n,
                spec: QuerySpec {
                    measure,
                    spatial_scheme: schema.spatial_scheme,
                    textual_scheme: schema.textual_scheme,
                    spatial_level: t.spatial,
                    members: Some(vec![member.clone()]),
                    group_by: t.group_by,
                    textual_level: t.textual,
                    keywords: None,
                    range,
                    intervals: if measure == MeasureKind::TopKVolatile {
                        len as u32
                    } else {
                        1
                    },
                    k: if t.top_all { TopK::All } else { TopK::K(k) },
                },
            });
        }
    }
    suite
}

fn sample_member(cube: &Cube, level: u8, rng: &mut ChaCha8Rng) -> Option<String> {
    let store = cube.spatial_store();
    let named: Vec<String> = store
        .ids_at_level(level)
        .map(|id| store.name_of(id).to_string())
        .filter(|n| n != ingest::UNKNOWN_MEMBER)
        .collect();
    if named.is_empty() {
        return None;
    }
    Some(named[rng.gen_range(0..named.len())].clone())
}

// ---------------------------------------------------------------------------
// Cube building and the main driver

fn cube_config(cfg: &BenchConfig, strategy: Strategy) -> CubeConfig {
    let materialize = match strategy {
        Strategy::None => MaterializeConfig { strategy, ..MaterializeConfig::default() },
        Strategy::Full => MaterializeConfig { strategy, ..MaterializeConfig::default() },
        Strategy::PartialExact => MaterializeConfig {
            strategy,
            budget: cfg.budget,
            top_k: None,
            strict_budget: true,
        },
        Strategy::PartialApprox | Strategy::Greedy => MaterializeConfig {
            strategy: Strategy::PartialApprox,
            budget: cfg.budget,
            top_k: Some(cfg.top_k),
            strict_budget: true,
        },
    };
    CubeConfig {
        schema: CubeSchema::standard(
            SpatialScheme::Semantic,
            cfg.textual_scheme,
            GridConfig::default(),
        ),
        materialize,
        exec: if cfg.parallel { Execution::Auto } else { Execution::Sequential },
        geocode_cutoff_km: ingest::geocode_cutoff_km(),
    }
}

/// One cube per requested strategy, all over the same facts.
pub fn build_cubes(
    cfg: &BenchConfig,
    objects: &[SttObject],
    spatial_tax: &SpatialTaxonomy,
    text_tax: &TextTaxonomy,
) -> Result<Vec<(Strategy, Cube)>> {
    if objects.is_empty() {
        return Err(Error::Bench("the dataset is empty".into()));
    }
    cfg.strategies
        .iter()
        .map(|&s| {
            let cube = Cube::construct(
                objects,
                cube_config(cfg, s),
                spatial_tax.clone(),
                text_tax.clone(),
                ImportanceScores::default(),
            )?;
            Ok((s, cube))
        })
        .collect()
}

/// Build, generate, measure, and assemble the full report.
pub fn run_benchmark(
    cfg: &BenchConfig,
    objects: &[SttObject],
    spatial_tax: &SpatialTaxonomy,
    text_tax: &TextTaxonomy,
) -> Result<BenchReport> {
    cfg.validate()?;
    let cubes = build_cubes(cfg, objects, spatial_tax, text_tax)?;
    let suite = generate_suite(&cubes[0].1, cfg.seed);
    let mut report = run_suite(&cubes, &suite, cfg.repetitions)?;

    let pam = cubes.iter().find(|(s, _)| *s == Strategy::PartialApprox);
    let nm = cubes.iter().find(|(s, _)| *s == Strategy::None);
    if let (Some((_, pam)), Some((_, nm))) = (pam, nm) {
        report.accuracy = accuracy_eval(pam, nm, &suite)?;
    }

    let planned = cubes
        .iter()
        .find(|(s, _)| *s == Strategy::PartialExact)
        .or_else(|| cubes.iter().find(|(s, _)| *s == Strategy::PartialApprox));
    if let Some((_, cube)) = planned {
        report.benefit_curve = benefit_curve(cube);
    }

    if cfg.include_k_sweep {
        if let Some(template) = suite.iter().find(|q| matches!(q.spec.k, TopK::K(_))) {
            let mut scratch = Cube::construct(
                objects,
                cube_config(cfg, Strategy::None),
                spatial_tax.clone(),
                text_tax.clone(),
                ImportanceScores::default(),
            )?;
            report.k_sweep = k_sweep(&mut scratch, &template.spec, cfg)?;
        }
    }

    if cfg.cost_model_sizes.len() >= 3 {
        report.cost_model = Some(cost_model_microbench(
            cfg,
            objects,
            spatial_tax,
            text_tax,
            &cfg.cost_model_sizes,
        )?);
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Measurement

fn time_eval(cube: &Cube, spec: &QuerySpec) -> Result<(f64, QueryOutput)> {
    let t0 = Instant::now();
    let out = query::evaluate(cube, spec)?;
    Ok((t0.elapsed().as_secs_f64() * 1e3, out))
}

fn mean_stddev(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Strategy-independent digest of a result's groups; the plan line is
/// deliberately left out since sources legitimately differ.
fn fingerprint(out: &QueryOutput) -> u64 {
    let mut text = String::new();
    for g in &out.groups {
        text.push_str(g.member.as_deref().unwrap_or("*"));
        text.push_str(&format!("|{:?}|", g.area));
        match &g.value {
            MeasureValue::Count(n) => text.push_str(&format!("c{n}")),
            MeasureValue::Area(a) => text.push_str(&format!("a{a:?}")),
            MeasureValue::Keywords(ks) => {
                for k in ks {
                    text.push_str(&format!("{}:{}:{:?};", k.keyword, k.freq, k.score));
                }
            }
            MeasureValue::Ranking(r) => {
                text.push_str(&format!("e{}d{}", r.epsilon, r.delta));
                for e in &r.entries {
                    text.push_str(&format!("{}:{}:{:?};", e.keyword, e.freq, e.score));
                }
            }
        }
        text.push('\n');
    }
    // FNV-1a; the std hasher is seeded per process and would not make a
    // reportable value.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Latencies and storage for every (query, strategy) pair. Exact-path
/// results are fingerprinted and must agree across strategies.
pub fn run_suite(
    cubes: &[(Strategy, Cube)],
    suite: &[BenchQuery],
    repetitions: usize,
) -> Result<BenchReport> {
    let mut report = BenchReport::default();
    for q in suite {
        let mut exact: Option<(Strategy, u64)> = None;
        for (strategy, cube) in cubes {
            let mut samples = Vec::with_capacity(repetitions);
            let mut last = None;
            for _ in 0..repetitions {
                let (ms, out) = time_eval(cube, &q.spec)?;
                samples.push(ms);
                last = Some(out);
            }
            let out = last.expect("repetitions >= 1");
            if !out.plan.approximate {
                let fp = fingerprint(&out);
                match exact {
                    None => exact = Some((*strategy, fp)),
                    Some((first, expect)) if expect != fp => {
                        return Err(Error::Bench(format!(
                            "{} disagrees with {} on {} (exact paths)",
                            strategy, first, q.name
                        )));
                    }
                    Some(_) => {}
                }
            }
            let (mean_ms, stddev_ms) = mean_stddev(&samples);
            report.latency.push(LatencyRow {
                query: q.name.clone(),
                strategy: *strategy,
                reps: repetitions,
                mean_ms,
                stddev_ms,
            });
        }
    }
    report.storage = storage_rows(cubes)?;
    Ok(report)
}

/// Fixed NM, PAM, PEM, FM emission order, checked for monotone totals.
fn storage_rows(cubes: &[(Strategy, Cube)]) -> Result<Vec<StorageRow>> {
    let order = [
        Strategy::None,
        Strategy::PartialApprox,
        Strategy::PartialExact,
        Strategy::Full,
    ];
    let mut rows = Vec::new();
    for want in order {
        if let Some((_, cube)) = cubes.iter().find(|(s, _)| *s == want) {
            rows.push(StorageRow {
                strategy: want,
                base_rows: cube.base().row_count(),
                extra_rows: cube.extra_rows(),
                total_rows: cube.stored_rows(),
            });
        }
    }
    for pair in rows.windows(2) {
        if pair[0].total_rows > pair[1].total_rows {
            return Err(Error::Bench(format!(
                "storage ordering violated: {} stores {} rows, {} stores {}",
                pair[0].strategy, pair[0].total_rows, pair[1].strategy, pair[1].total_rows
            )));
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Accuracy

fn rankings_by_member(out: &QueryOutput) -> BTreeMap<Option<String>, &Ranking> {
    out.groups
        .iter()
        .filter_map(|g| match &g.value {
            MeasureValue::Ranking(r) => Some((g.member.clone(), r)),
            _ => None,
        })
        .collect()
}

/// Fraction of the truncated cube's top-k positions matching untruncated
/// ground truth, per suite query. Grouped queries average across their
/// groups. Rank-everything queries (k = ALL) have no approximate path and
/// are skipped.
pub fn accuracy_eval(
    pam: &Cube,
    nm: &Cube,
    suite: &[BenchQuery],
) -> Result<Vec<AccuracyRow>> {
    let mut rows = Vec::new();
    for q in suite {
        let TopK::K(k) = q.spec.k else { continue };
        let approx = query::evaluate(pam, &q.spec)?;
        let truth = query::evaluate(nm, &q.spec)?;
        let truth_groups = rankings_by_member(&truth);
        let approx_groups = rankings_by_member(&approx);

        let mut sum = 0.0;
        let mut covered = true;
        for (member, want) in &truth_groups {
            let eff = (k as usize).min(want.entries.len());
            if eff == 0 {
                sum += 1.0;
                continue;
            }
            let Some(got) = approx_groups.get(member) else {
                covered = false;
                continue;
            };
            let matching = (0..eff)
                .filter(|&i| {
                    got.entries.get(i).map(|e| e.keyword.as_str())
                        == Some(want.entries[i].keyword.as_str())
                })
                .count();
            sum += matching as f64 / eff as f64;
            covered &= got.delta as usize >= eff.min(got.entries.len()).max(eff);
        }
        let accuracy =
            if truth_groups.is_empty() { 1.0 } else { sum / truth_groups.len() as f64 };
        rows.push(AccuracyRow { query: q.name.clone(), k, delta_covers_k: covered, accuracy });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Benefit curve, K sweep, cost model

/// Cumulative greedy benefit per view count, starting from the base-only
/// cube at zero.
pub fn benefit_curve(cube: &Cube) -> Vec<BenefitPoint> {
    let base_rows = cube.base().row_count();
    let mut points = vec![BenefitPoint {
        views: 1,
        coord: crate::lattice::Coord::BASE.token(),
        cumulative_benefit: 0,
        total_rows: base_rows,
    }];
    let mut cumulative = 0;
    for (i, step) in cube.plan_steps().iter().enumerate() {
        cumulative += step.benefit;
        points.push(BenefitPoint {
            views: i as u32 + 2,
            coord: step.coord.token(),
            cumulative_benefit: cumulative,
            total_rows: step.total_rows,
        });
    }
    points
}

/// 100 long-tail k draws in 1..=1000, shape 2 and scale 60, matching the
/// published methodology's distribution choice.
pub fn gamma_topk_values(seed: u64, count: usize) -> Vec<u32> {
    let gamma = Gamma::new(2.0_f64, 60.0).expect("constant parameters are valid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6b73_7765_6570);
    (0..count)
        .map(|_| (gamma.sample(&mut rng).round() as i64).clamp(1, 1000) as u32)
        .collect()
}

/// Replan the scratch cube once per stored-K value and time the template
/// query across the 100 sampled k values.
pub fn k_sweep(
    scratch: &mut Cube,
    template: &QuerySpec,
    cfg: &BenchConfig,
) -> Result<Vec<KSweepRow>> {
    let ks = gamma_topk_values(cfg.seed, 100);
    let mut rows = Vec::new();
    for &stored in &cfg.k_sweep {
        scratch.replan(MaterializeConfig {
            strategy: Strategy::PartialApprox,
            budget: cfg.budget,
            top_k: Some(stored),
            strict_budget: true,
        })?;
        let mut samples = Vec::with_capacity(ks.len());
        for &k in &ks {
            let mut spec = template.clone();
            spec.k = TopK::K(k);
            samples.push(time_eval(scratch, &spec)?.0);
        }
        let (mean_ms, stddev_ms) = mean_stddev(&samples);
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        rows.push(KSweepRow {
            materialized_k: stored,
            samples: samples.len(),
            mean_ms,
            stddev_ms,
            median_ms: sorted[sorted.len() / 2],
        });
    }
    Ok(rows)
}

/// Least-squares fit through (x, y); a flat y column has nothing to
/// explain and reports R² = 0.
pub(crate) fn least_squares(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let sst: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ssr: f64 = points
        .iter()
        .map(|p| (p.1 - (slope * p.0 + intercept)).powi(2))
        .sum();
    let r2 = if sst == 0.0 { 0.0 } else { 1.0 - ssr / sst };
    (slope, intercept, r2)
}

/// Scan latency against base size over dataset prefixes: each size gets a
/// fresh base-only cube and a rank-everything scan at the coarsest
/// spatial level, the pattern whose cost the planner models as linear in
/// rows.
pub fn cost_model_microbench(
    cfg: &BenchConfig,
    objects: &[SttObject],
    spatial_tax: &SpatialTaxonomy,
    text_tax: &TextTaxonomy,
    sizes: &[usize],
) -> Result<LinearityReport> {
    if sizes.len() < 3 {
        return Err(Error::Bench("the linearity fit needs at least 3 sizes".into()));
    }
    let mut points = Vec::new();
    for &size in sizes {
        let n = size.min(objects.len()).max(1);
        let cube = Cube::construct(
            &objects[..n],
            cube_config(cfg, Strategy::None),
            spatial_tax.clone(),
            text_tax.clone(),
            ImportanceScores::default(),
        )?;
        let facts = cube.facts();
        let (min_day, max_day) = facts
            .iter()
            .fold((i64::MAX, i64::MIN), |(lo, hi), f| (lo.min(f.day), hi.max(f.day)));
        let spec = QuerySpec {
            measure: MeasureKind::TopKFrequent,
            spatial_scheme: cube.schema().spatial_scheme,
            textual_scheme: cube.schema().textual_scheme,
            spatial_level: 3,
            members: None,
            group_by: None,
            textual_level: u8::from(cfg.textual_scheme != TextualScheme::Replication),
            keywords: None,
            range: TimeRange::new(min_day * 86_400, (max_day + 1) * 86_400),
            intervals: 1,
            k: TopK::All,
        };
        let mut samples = Vec::with_capacity(cfg.repetitions);
        for _ in 0..cfg.repetitions {
            samples.push(time_eval(&cube, &spec)?.0);
        }
        points.push(CostPoint {
            rows: cube.base().row_count(),
            mean_ms: mean_stddev(&samples).0,
        });
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.rows as f64, p.mean_ms)).collect();
    let (slope, intercept, r2) = least_squares(&xy);
    Ok(LinearityReport {
        points,
        slope_ms_per_row: slope,
        intercept_ms: intercept,
        r_squared: r2,
    })
}

// ---------------------------------------------------------------------------
// Report files

/// Write `latency.csv`, `storage.csv`, `accuracy.csv`,
/// `benefit_curve.csv`, and `k_sweep.csv` (plus `cost_model.csv` when the
/// fit ran) under `out`. A failed file is removed rather than left
/// half-written.
pub fn emit_report(report: &BenchReport, out: impl AsRef<Path>) -> Result<()> {
    let out = out.as_ref();
    fs::create_dir_all(out)?;

    write_file(&out.join("latency.csv"), |w| {
        writeln!(w, "query,strategy,reps,mean_ms,stddev_ms")?;
        for r in &report.latency {
            writeln!(
                w,
                "{},{},{},{:.6},{:.6}",
                r.query, r.strategy, r.reps, r.mean_ms, r.stddev_ms
            )?;
        }
        Ok(())
    })?;

    write_file(&out.join("storage.csv"), |w| {
        writeln!(w, "strategy,base_rows,extra_rows,total_rows")?;
        for r in &report.storage {
            writeln!(w, "{},{},{},{}", r.strategy, r.base_rows, r.extra_rows, r.total_rows)?;
        }
        Ok(())
    })?;

    write_file(&out.join("accuracy.csv"), |w| {
        writeln!(w, "query,k,delta_covers_k,accuracy")?;
        for r in &report.accuracy {
            writeln!(
                w,
                "{},{},{},{:.4}",
                r.query,
                r.k,
                if r.delta_covers_k { "T" } else { "F" },
                r.accuracy
            )?;
        }
        Ok(())
    })?;

    write_file(&out.join("benefit_curve.csv"), |w| {
        writeln!(w, "views,coord,cumulative_benefit,total_rows")?;
        for p in &report.benefit_curve {
            writeln!(w, "{},{},{},{}", p.views, p.coord, p.cumulative_benefit, p.total_rows)?;
        }
        Ok(())
    })?;

    write_file(&out.join("k_sweep.csv"), |w| {
        writeln!(w, "materialized_k,samples,mean_ms,stddev_ms,median_ms")?;
        for r in &report.k_sweep {
            writeln!(
                w,
                "{},{},{:.6},{:.6},{:.6}",
                r.materialized_k, r.samples, r.mean_ms, r.stddev_ms, r.median_ms
            )?;
        }
        Ok(())
    })?;

    if let Some(fit) = &report.cost_model {
        write_file(&out.join("cost_model.csv"), |w| {
            writeln!(w, "rows,mean_ms,fitted_ms")?;
            for p in &fit.points {
                let fitted = fit.slope_ms_per_row * p.rows as f64 + fit.intercept_ms;
                writeln!(w, "{},{:.6},{:.6}", p.rows, p.mean_ms, fitted)?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let outcome = body(&mut w).and_then(|()| w.flush().map_err(Error::from));
    if outcome.is_err() {
        let _ = fs::remove_file(path);
    }
    outcome
}
