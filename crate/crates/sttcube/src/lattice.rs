//! Cuboid lattice: coordinate enumeration, derivability, and the linear
//! cost model driving greedy view selection.
//!
//! A coordinate names one level per hierarchy in the order (date,
//! time-of-day, spatial, textual). Coordinate `a` is derivable from `b`
//! when every level of `a` is at or above `b`'s, with one scheme-specific
//! exception: majority and custom textual assignment cannot be re-derived
//! from term-level rows, so term-level sources only serve term-level
//! targets there.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TextualScheme;

/// One level index per hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Coord {
    pub date: u8,
    pub tod: u8,
    pub spatial: u8,
    pub textual: u8,
}

impl Coord {
    pub const BASE: Coord = Coord { date: 0, tod: 0, spatial: 0, textual: 0 };

    pub fn new(date: u8, tod: u8, spatial: u8, textual: u8) -> Coord {
        Coord { date, tod, spatial, textual }
    }

    /// True when a cuboid at `self` can be computed by aggregating rows
    /// of a cuboid at `src`.
    pub fn derivable_from(self, src: Coord, scheme: TextualScheme) -> bool {
        if self.date < src.date
            || self.tod < src.tod
            || self.spatial < src.spatial
            || self.textual < src.textual
        {
            return false;
        }
        match scheme {
            TextualScheme::Replication => true,
            // Argmax assignment happens per fact; term rows do not carry it.
            _ => src.textual > 0 || self.textual == 0,
        }
    }

    /// Compact token used in filenames and the lattice dump.
    pub fn token(self) -> String {
        format!("d{}t{}s{}x{}", self.date, self.tod, self.spatial, self.textual)
    }

    pub fn parse_token(s: &str) -> Option<Coord> {
        let rest = s.strip_prefix('d')?;
        let (d, rest) = rest.split_once('t')?;
        let (t, rest) = rest.split_once('s')?;
        let (sp, x) = rest.split_once('x')?;
        Some(Coord {
            date: d.parse().ok()?,
            tod: t.parse().ok()?,
            spatial: sp.parse().ok()?,
            textual: x.parse().ok()?,
        })
    }

    fn level_sum(self) -> u32 {
        self.date as u32 + self.tod as u32 + self.spatial as u32 + self.textual as u32
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token())
    }
}

/// All coordinates of a cube, with row counts and materialization flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    dims: [u8; 4],
    nodes: Vec<Coord>,
    sizes: HashMap<Coord, u64>,
    materialized: BTreeSet<Coord>,
}

impl Lattice {
    /// `dims` holds the level count of each hierarchy. The base coordinate
    /// starts out materialized; its size must be set before cost queries.
    pub fn new(dims: [u8; 4]) -> Lattice {
        assert!(dims.iter().all(|&d| d >= 1), "each hierarchy needs at least one level");
        let mut nodes =
            Vec::with_capacity(dims.iter().map(|&d| d as usize).product::<usize>());
        for d in 0..dims[0] {
            for t in 0..dims[1] {
                for s in 0..dims[2] {
                    for x in 0..dims[3] {
                        nodes.push(Coord::new(d, t, s, x));
                    }
                }
            }
        }
        let mut materialized = BTreeSet::new();
        materialized.insert(Coord::BASE);
        Lattice { dims, nodes, sizes: HashMap::new(), materialized }
    }

    pub fn dims(&self) -> [u8; 4] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn coords(&self) -> &[Coord] {
        &self.nodes
    }

    pub fn contains(&self, c: Coord) -> bool {
        c.date < self.dims[0] && c.tod < self.dims[1] && c.spatial < self.dims[2] && c.textual < self.dims[3]
    }

    pub fn set_size(&mut self, c: Coord, rows: u64) {
        self.sizes.insert(c, rows);
    }

    pub fn size(&self, c: Coord) -> Option<u64> {
        self.sizes.get(&c).copied()
    }

    pub fn mark_materialized(&mut self, c: Coord) {
        self.materialized.insert(c);
    }

    pub fn clear_materialized(&mut self) {
        self.materialized.clear();
        self.materialized.insert(Coord::BASE);
    }

    pub fn is_materialized(&self, c: Coord) -> bool {
        self.materialized.contains(&c)
    }

    pub fn materialized(&self) -> impl Iterator<Item = Coord> + '_ {
        self.materialized.iter().copied()
    }

    /// Coordinates answerable from `c`, including `c` itself.
    pub fn descendants(&self, c: Coord, scheme: TextualScheme) -> Vec<Coord> {
        self.nodes.iter().copied().filter(|&n| n.derivable_from(c, scheme)).collect()
    }

    /// Materialization order that guarantees every coordinate's ancestors
    /// come first: ascending total level, lexicographic within.
    pub fn topological(&self) -> Vec<Coord> {
        let mut order = self.nodes.clone();
        order.sort_by_key(|c| (c.level_sum(), *c));
        order
    }

    /// Scan cost of answering `c` today: the smallest materialized source
    /// it is derivable from, falling back to the base size when no
    /// materialized source is valid (the majority-scheme term gap).
    ///
    /// Panics if a consulted size was never set; planners populate sizes
    /// before asking.
    pub fn cost(&self, c: Coord, scheme: TextualScheme) -> u64 {
        let need = |m: Coord| {
            self.size(m).unwrap_or_else(|| panic!("size of materialized {m} not set"))
        };
        self.materialized
            .iter()
            .filter(|&&m| c.derivable_from(m, scheme))
            .map(|&m| need(m))
            .min()
            .unwrap_or_else(|| need(Coord::BASE))
    }

    /// Total scan savings materializing `c` would deliver to itself and
    /// every descendant, under the linear cost model. Requires size(c).
    pub fn benefit(&self, c: Coord, scheme: TextualScheme) -> u64 {
        let own = self.size(c).unwrap_or_else(|| panic!("size of candidate {c} not set"));
        self.nodes
            .iter()
            .filter(|&&n| n.derivable_from(c, scheme))
            .map(|&n| self.cost(n, scheme).saturating_sub(own))
            .sum()
    }

    /// TSV dump: `coord  row_count  materialized`, one line per node.
    pub fn dump_tsv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "coord\trow_count\tmaterialized")?;
        for &c in &self.nodes {
            writeln!(
                out,
                "{}\t{}\t{}",
                c.token(),
                self.size(c).map(|s| s.to_string()).unwrap_or_default(),
                if self.is_materialized(c) { "T" } else { "F" }
            )?;
        }
        Ok(())
    }

    /// Rebuild a lattice from a dump produced by [`Lattice::dump_tsv`].
    pub fn load_tsv(dims: [u8; 4], input: impl BufRead) -> Result<Lattice> {
        let mut lattice = Lattice::new(dims);
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (coord, rows, flag) = match (parts.next(), parts.next(), parts.next()) {
                (Some(c), Some(r), Some(f)) => (c, r, f),
                _ => {
                    return Err(Error::Persist(format!(
                        "lattice line {}: expected three fields",
                        i + 1
                    )))
                }
            };
            let c = Coord::parse_token(coord)
                .filter(|&c| lattice.contains(c))
                .ok_or_else(|| Error::Persist(format!("lattice line {}: bad coord {coord}", i + 1)))?;
            if !rows.is_empty() {
                let rows: u64 = rows
                    .parse()
                    .map_err(|_| Error::Persist(format!("lattice line {}: bad row count", i + 1)))?;
                lattice.set_size(c, rows);
            }
            if flag.trim() == "T" {
                lattice.mark_materialized(c);
            }
        }
        Ok(lattice)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    /// Three two-level hierarchies (time-of-day pinned to one level): the
    /// classic day/location/term example with its published row counts.
    pub fn example_lattice() -> Lattice {
        let mut l = Lattice::new([2, 1, 2, 2]);
        let m = 1_000_000;
        l.set_size(Coord::new(0, 0, 0, 0), 100 * m); // day, location, term
        l.set_size(Coord::new(0, 0, 1, 0), 4 * m); // day, term
        l.set_size(Coord::new(0, 0, 0, 1), 15 * m); // day, location
        l.set_size(Coord::new(1, 0, 0, 0), 96 * m); // location, term
        l.set_size(Coord::new(0, 0, 1, 1), 37); // day
        l.set_size(Coord::new(1, 0, 0, 1), 14 * m); // location
        l.set_size(Coord::new(1, 0, 1, 0), 2 * m); // term
        l.set_size(Coord::new(1, 0, 1, 1), 1); // apex
        l
    }

    #[test]
    fn default_dims_enumerate_five_hundred() {
        let l = Lattice::new([5, 4, 5, 5]);
        assert_eq!(l.len(), 500);
        assert!(l.is_materialized(Coord::BASE));
    }

    #[test]
    fn example_benefits_match_published_arithmetic() {
        let l = example_lattice();
        let scheme = TextualScheme::Replication;
        let day_term = Coord::new(0, 0, 1, 0);
        let loc_term = Coord::new(1, 0, 0, 0);
        // Four coordinates are answerable from each; only the base is
        // materialized, so each saves (100M − own size) four times.
        assert_eq!(l.descendants(day_term, scheme).len(), 4);
        assert_eq!(l.benefit(day_term, scheme), 384_000_000);
        assert_eq!(l.benefit(loc_term, scheme), 16_000_000);
        assert_eq!(l.benefit(Coord::new(0, 0, 0, 1), scheme), 340_000_000);
        assert_eq!(l.benefit(Coord::new(1, 0, 1, 0), scheme), 196_000_000);
        assert_eq!(l.benefit(Coord::new(1, 0, 0, 1), scheme), 172_000_000);
        assert_eq!(l.benefit(Coord::new(0, 0, 1, 1), scheme), 2 * (100_000_000 - 37));
        assert_eq!(l.benefit(Coord::new(1, 0, 1, 1), scheme), 99_999_999);
        // The day+term node beats every other candidate.
        let best = l
            .coords()
            .iter()
            .copied()
            .filter(|&c| !l.is_materialized(c))
            .max_by_key(|&c| l.benefit(c, scheme))
            .unwrap();
        assert_eq!(best, day_term);
    }

    #[test]
    fn materializing_a_node_lowers_descendant_costs() {
        let mut l = example_lattice();
        let scheme = TextualScheme::Replication;
        let term = Coord::new(1, 0, 1, 0);
        assert_eq!(l.cost(term, scheme), 100_000_000);
        l.mark_materialized(Coord::new(0, 0, 1, 0));
        assert_eq!(l.cost(term, scheme), 4_000_000);
        // A node with size above every descendant's current cost earns 0.
        assert_eq!(l.benefit(Coord::new(1, 0, 0, 0), scheme), 8_000_000);
        l.set_size(Coord::new(1, 0, 0, 0), 200_000_000);
        assert_eq!(l.benefit(Coord::new(1, 0, 0, 0), scheme), 0);
    }

    #[test]
    fn majority_blocks_term_to_theme_derivation() {
        let term_src = Coord::new(0, 0, 0, 0);
        let theme = Coord::new(0, 0, 0, 1);
        assert!(theme.derivable_from(term_src, TextualScheme::Replication));
        assert!(!theme.derivable_from(term_src, TextualScheme::Majority));
        assert!(!theme.derivable_from(term_src, TextualScheme::Custom));
        // Theme-level sources chain upward under every scheme.
        let topic = Coord::new(0, 0, 0, 2);
        assert!(topic.derivable_from(theme, TextualScheme::Majority));
        // Term-level targets are unaffected.
        let coarse_term = Coord::new(1, 0, 1, 0);
        assert!(coarse_term.derivable_from(term_src, TextualScheme::Majority));
    }

    #[test]
    fn topological_order_puts_ancestors_first() {
        let l = Lattice::new([5, 4, 5, 5]);
        let order = l.topological();
        assert_eq!(order.len(), 500);
        let pos: HashMap<Coord, usize> =
            order.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        for &c in l.coords() {
            for &d in &l.descendants(c, TextualScheme::Replication) {
                if d != c {
                    assert!(pos[&c] < pos[&d], "{c} must precede {d}");
                }
            }
        }
    }

    #[test]
    fn dump_and_load_round_trip() {
        let mut l = example_lattice();
        l.mark_materialized(Coord::new(0, 0, 1, 0));
        let mut buf = Vec::new();
        l.dump_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("d0t0s0x0\t100000000\tT"));
        let back = Lattice::load_tsv([2, 1, 2, 2], Cursor::new(buf)).unwrap();
        for &c in l.coords() {
            assert_eq!(back.size(c), l.size(c));
            assert_eq!(back.is_materialized(c), l.is_materialized(c));
        }
    }

    proptest! {
        #[test]
        fn derivability_is_a_partial_order(
            a in (0u8..5, 0u8..4, 0u8..5, 0u8..5),
            b in (0u8..5, 0u8..4, 0u8..5, 0u8..5),
            c in (0u8..5, 0u8..4, 0u8..5, 0u8..5),
        ) {
            let m = |t: (u8, u8, u8, u8)| Coord::new(t.0, t.1, t.2, t.3);
            let (a, b, c) = (m(a), m(b), m(c));
            let s = TextualScheme::Replication;
            prop_assert!(a.derivable_from(a, s));
            if a.derivable_from(b, s) && b.derivable_from(a, s) {
                prop_assert_eq!(a, b);
            }
            if a.derivable_from(b, s) && b.derivable_from(c, s) {
                prop_assert!(a.derivable_from(c, s));
            }
        }

        #[test]
        fn every_coord_is_derivable_from_base(
            c in (0u8..5, 0u8..4, 0u8..5, 0u8..5),
        ) {
            let c = Coord::new(c.0, c.1, c.2, c.3);
            prop_assert!(c.derivable_from(Coord::BASE, TextualScheme::Replication));
        }

        #[test]
        fn coord_token_round_trips(
            c in (0u8..5, 0u8..4, 0u8..5, 0u8..5),
        ) {
            let c = Coord::new(c.0, c.1, c.2, c.3);
            prop_assert_eq!(Coord::parse_token(&c.token()), Some(c));
        }
    }
}
