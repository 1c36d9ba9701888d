//! Greedy cuboid selection under a size budget, plus the stock strategy
//! presets built on it.
//!
//! Planning is lattice arithmetic only: it reads and writes sizes and
//! materialized flags but never touches rows. The cube applies a plan by
//! aggregating each picked coordinate in pick order.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Coord, Lattice};
use crate::model::TextualScheme;

/// Ranked-list cutoff the approximate strategy falls back to.
pub const DEFAULT_TOP_K: u32 = 31;

/// Size budget for partial materialization. The planner keeps picking
/// while the cube, base included, fits the budget, so the last pick may
/// overshoot unless `strict_budget` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Budget {
    /// Total stored rows across materialized cuboids.
    Rows(u64),
    /// Number of materialized cuboids, base included.
    Cuboids(u64),
    /// Total stored bytes; divided by a measured average row width.
    Bytes(u64),
}

impl Budget {
    /// Row-denominated cap, `None` for cuboid-count budgets.
    fn row_cap(&self, avg_row_bytes: f64) -> Option<u64> {
        match *self {
            Budget::Rows(n) => Some(n),
            Budget::Bytes(b) => Some((b as f64 / avg_row_bytes.max(1.0)) as u64),
            Budget::Cuboids(_) => None,
        }
    }

    fn count_cap(&self) -> Option<u64> {
        match *self {
            Budget::Cuboids(n) => Some(n),
            _ => None,
        }
    }
}

/// Materialization presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// Base cuboid only; every query scans it.
    None,
    /// Greedy picks under the budget, full ranked lists.
    PartialExact,
    /// Greedy picks under the budget, ranked lists cut to the top K.
    PartialApprox,
    /// Every lattice node, full ranked lists.
    Full,
    /// Greedy picks with the truncation the config asks for.
    Greedy,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::None => "NM",
            Strategy::PartialExact => "PEM",
            Strategy::PartialApprox => "PAM",
            Strategy::Full => "FM",
            Strategy::Greedy => "GREEDY",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Strategy> {
        match s.to_ascii_lowercase().as_str() {
            "nm" | "none" => Ok(Strategy::None),
            "pem" | "partial-exact" => Ok(Strategy::PartialExact),
            "pam" | "partial-approx" => Ok(Strategy::PartialApprox),
            "fm" | "full" => Ok(Strategy::Full),
            "greedy" => Ok(Strategy::Greedy),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterializeConfig {
    pub strategy: Strategy,
    pub budget: Budget,
    /// Ranked-list cutoff; consulted by the approximate and greedy
    /// strategies, `None` meaning unbounded.
    pub top_k: Option<u32>,
    /// Refuse picks that would push the cube past the budget instead of
    /// keeping the overshooting final pick.
    pub strict_budget: bool,
}

impl Default for MaterializeConfig {
    fn default() -> Self {
        MaterializeConfig {
            strategy: Strategy::PartialExact,
            budget: Budget::Cuboids(3),
            top_k: None,
            strict_budget: false,
        }
    }
}

impl MaterializeConfig {
    /// Truncation the strategy actually applies to picked cuboids.
    pub fn effective_k(&self) -> Option<u32> {
        match self.strategy {
            Strategy::None | Strategy::Full | Strategy::PartialExact => None,
            Strategy::PartialApprox => Some(self.top_k.unwrap_or(DEFAULT_TOP_K)),
            Strategy::Greedy => self.top_k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_k == Some(0) {
            return Err(Error::Config("top-k cutoff must be at least 1".into()));
        }
        Ok(())
    }
}

/// One greedy pick, with the state that justified it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub coord: Coord,
    /// Benefit at pick time.
    pub benefit: u64,
    /// Stored rows of the picked cuboid.
    pub size: u64,
    /// Cube rows after this pick, base included.
    pub total_rows: u64,
}

/// Pick cuboids by descending benefit until the budget stops the loop.
///
/// Ties break to the smaller cuboid, then the lexicographically smaller
/// coordinate. Without `strict` the loop body runs before the budget
/// check, so one pick always happens and the final pick may overshoot;
/// with `strict` a pick that would not fit ends the loop instead.
///
/// `estimate` is consulted once for each node whose size the lattice does
/// not know yet; results are cached in the lattice. Picked nodes are
/// marked materialized.
pub fn plan_greedy(
    lattice: &mut Lattice,
    scheme: TextualScheme,
    budget: Budget,
    strict: bool,
    avg_row_bytes: f64,
    mut estimate: impl FnMut(Coord) -> u64,
) -> Vec<PlanStep> {
    let coords = lattice.coords().to_vec();
    for &c in &coords {
        if lattice.size(c).is_none() {
            let rows = estimate(c);
            lattice.set_size(c, rows);
        }
    }
    let row_cap = budget.row_cap(avg_row_bytes);
    let count_cap = budget.count_cap();

    let mut total_rows: u64 = lattice.materialized().map(|m| lattice.size(m).unwrap()).sum();
    let mut count: u64 = lattice.materialized().count() as u64;
    let mut steps = Vec::new();

    loop {
        // Scan costs are shared by every candidate this round.
        let costs: HashMap<Coord, u64> =
            coords.iter().map(|&n| (n, lattice.cost(n, scheme))).collect();
        let mut best: Option<(u64, u64, Coord)> = None;
        for &c in &coords {
            if lattice.is_materialized(c) {
                continue;
            }
            let size = lattice.size(c).unwrap();
            let benefit: u64 = coords
                .iter()
                .filter(|&&n| n.derivable_from(c, scheme))
                .map(|n| costs[n].saturating_sub(size))
                .sum();
            // Highest benefit wins; ties go to fewer rows, then the
            // smaller coordinate.
            let beats = |b: &(u64, u64, Coord)| {
                benefit > b.0 || (benefit == b.0 && (size, c) < (b.1, b.2))
            };
            if best.as_ref().map_or(true, beats) {
                best = Some((benefit, size, c));
            }
        }
        let Some((benefit, size, coord)) = best else { break };
        if strict {
            let fits = row_cap.map_or(true, |cap| total_rows + size <= cap)
                && count_cap.map_or(true, |cap| count + 1 <= cap);
            if !fits {
                break;
            }
        }
        lattice.mark_materialized(coord);
        total_rows += size;
        count += 1;
        steps.push(PlanStep { coord, benefit, size, total_rows });
        let within = row_cap.map_or(true, |cap| total_rows <= cap)
            && count_cap.map_or(true, |cap| count <= cap);
        if !within {
            break;
        }
    }
    steps
}

/// Every unmaterialized node in an order where ancestors precede the
/// coordinates derivable from them.
pub fn plan_full(lattice: &Lattice) -> Vec<Coord> {
    lattice.topological().into_iter().filter(|&c| !lattice.is_materialized(c)).collect()
}
