//! Probabilistic timed automata, difference-bound-matrix zones, forward zone
//! exploration, and exact min/max reachability probabilities via the
//! digital-clocks semantics.
//!
//! The digital-clocks analysis is exact for closed, diagonal-free PTAs:
//! clocks range over integers capped one past the largest constant they are
//! compared against, delays advance all clocks by one unit, and the induced
//! MDP of a tree-shaped PTA is acyclic apart from capped-delay self-loops
//! (which stand for letting time diverge).

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use num::{One, Zero};
use thiserror::Error;

use crate::graph::CmpOp;
use crate::rational::Rat;
use crate::solver::{Atom, AtomOp, LinTerm, LinearFormula, QueryMode};

// ---------------------------------------------------------------------------
// Clock constraints
// ---------------------------------------------------------------------------

/// A single comparison `clock ~ bound` or `clock - minus ~ bound`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ClockAtom {
    pub clock: String,
    pub minus: Option<String>,
    pub op: CmpOp,
    pub bound: i64,
}

impl ClockAtom {
    pub fn le(clock: &str, bound: i64) -> Self {
        ClockAtom {
            clock: clock.into(),
            minus: None,
            op: CmpOp::Le,
            bound,
        }
    }

    pub fn ge(clock: &str, bound: i64) -> Self {
        ClockAtom {
            clock: clock.into(),
            minus: None,
            op: CmpOp::Ge,
            bound,
        }
    }

    pub fn is_closed(&self) -> bool {
        matches!(self.op, CmpOp::Le | CmpOp::Ge | CmpOp::Eq)
    }

    pub fn is_diagonal(&self) -> bool {
        self.minus.is_some()
    }
}

impl fmt::Display for ClockAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.minus {
            Some(m) => write!(f, "{} - {} {} {}", self.clock, m, self.op, self.bound),
            None => write!(f, "{} {} {}", self.clock, self.op, self.bound),
        }
    }
}

/// A finite conjunction of clock comparisons.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClockConstraint(pub Vec<ClockAtom>);

impl ClockConstraint {
    pub fn trivial() -> Self {
        ClockConstraint(Vec::new())
    }

    pub fn and(mut self, other: ClockConstraint) -> ClockConstraint {
        self.0.extend(other.0);
        self
    }

    pub fn is_trivial(&self) -> bool {
        self.0.is_empty()
    }

    pub fn clocks(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for a in &self.0 {
            out.insert(a.clock.clone());
            if let Some(m) = &a.minus {
                out.insert(m.clone());
            }
        }
        out
    }

    /// Evaluates against an integer valuation; `cap` gives the per-clock
    /// value standing for "larger than any constant of this clock".
    pub fn satisfied_by(&self, val: &dyn Fn(&str) -> i64) -> bool {
        self.0.iter().all(|a| {
            let v = match &a.minus {
                Some(m) => val(&a.clock) - val(m),
                None => val(&a.clock),
            };
            a.op.holds(&v, &a.bound)
        })
    }
}

impl fmt::Display for ClockConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "true");
        }
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " & ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// DBM zones
// ---------------------------------------------------------------------------

/// A DBM entry bounding `x_i - x_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entry {
    /// `x_i - x_j < b` or `<= b`.
    Bound(i64, bool),
    Inf,
}

impl Entry {
    const LE_ZERO: Entry = Entry::Bound(0, false);

    fn add(self, other: Entry) -> Entry {
        match (self, other) {
            (Entry::Inf, _) | (_, Entry::Inf) => Entry::Inf,
            (Entry::Bound(a, sa), Entry::Bound(b, sb)) => Entry::Bound(a + b, sa || sb),
        }
    }

    fn tighter_than(self, other: Entry) -> bool {
        match (self, other) {
            (Entry::Inf, _) => false,
            (_, Entry::Inf) => true,
            (Entry::Bound(a, sa), Entry::Bound(b, sb)) => a < b || (a == b && sa && !sb),
        }
    }
}

impl fmt::Display for Entry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entry::Inf => write!(f, "inf"),
            Entry::Bound(b, true) => write!(f, "<{b}"),
            Entry::Bound(b, false) => write!(f, "<={b}"),
        }
    }
}

/// A zone over a fixed clock list, as a difference bound matrix with the
/// reference clock at index 0. Kept canonical (shortest-path closed) by all
/// operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Zone {
    dim: usize,
    entries: Vec<Entry>,
}

impl Zone {
    /// All clocks exactly zero.
    pub fn zero(num_clocks: usize) -> Zone {
        let dim = num_clocks + 1;
        Zone {
            dim,
            entries: vec![Entry::LE_ZERO; dim * dim],
        }
    }

    /// All nonnegative valuations.
    pub fn universe(num_clocks: usize) -> Zone {
        let dim = num_clocks + 1;
        let mut z = Zone {
            dim,
            entries: vec![Entry::Inf; dim * dim],
        };
        for i in 0..dim {
            *z.at_mut(i, i) = Entry::LE_ZERO;
            // reference - x_i <= 0, i.e. x_i >= 0
            *z.at_mut(0, i) = Entry::LE_ZERO;
        }
        z
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn at(&self, i: usize, j: usize) -> Entry {
        self.entries[i * self.dim + j]
    }

    fn at_mut(&mut self, i: usize, j: usize) -> &mut Entry {
        &mut self.entries[i * self.dim + j]
    }

    pub fn is_empty(&self) -> bool {
        (0..self.dim).any(|i| self.at(i, i).tighter_than(Entry::LE_ZERO))
    }

    /// Floyd–Warshall shortest-path closure.
    pub fn canonicalize(&mut self) {
        for k in 0..self.dim {
            for i in 0..self.dim {
                for j in 0..self.dim {
                    let via = self.at(i, k).add(self.at(k, j));
                    if via.tighter_than(self.at(i, j)) {
                        *self.at_mut(i, j) = via;
                    }
                }
            }
        }
    }

    /// Tightens with `x_i - x_j (<|<=) b`, keeping canonical form.
    /// Index 0 is the reference clock.
    pub fn and_entry(&mut self, i: usize, j: usize, e: Entry) {
        if !e.tighter_than(self.at(i, j)) {
            return;
        }
        *self.at_mut(i, j) = e;
        if self.at(j, i).add(e).tighter_than(Entry::LE_ZERO) {
            // Inconsistent; mark empty via the diagonal.
            *self.at_mut(i, i) = Entry::Bound(-1, true);
            return;
        }
        for a in 0..self.dim {
            for b in 0..self.dim {
                let via_ij = self.at(a, i).add(e).add(self.at(j, b));
                if via_ij.tighter_than(self.at(a, b)) {
                    *self.at_mut(a, b) = via_ij;
                }
            }
        }
    }

    /// Time elapse: drop all upper bounds on individual clocks.
    pub fn up(&mut self) {
        for i in 1..self.dim {
            *self.at_mut(i, 0) = Entry::Inf;
        }
    }

    /// Reset clock `i` to zero.
    pub fn reset(&mut self, i: usize) {
        for j in 0..self.dim {
            *self.at_mut(i, j) = self.at(0, j);
            *self.at_mut(j, i) = self.at(j, 0);
        }
        *self.at_mut(i, i) = Entry::LE_ZERO;
    }

    /// Lower and upper bound entries for `x_i - x_j`: returns
    /// `(entry(j,i), entry(i,j))`, i.e. `x_j - x_i <= l` and `x_i - x_j <= u`.
    pub fn bounds(&self, i: usize, j: usize) -> (Entry, Entry) {
        (self.at(j, i), self.at(i, j))
    }

    pub fn includes(&self, other: &Zone) -> bool {
        assert_eq!(self.dim, other.dim);
        (0..self.dim * self.dim).all(|k| !self.entries[k].tighter_than(other.entries[k]))
    }

    /// The zone as linear atoms over the given clock names (index 1 maps to
    /// `names[0]`). The reference clock contributes single-variable bounds.
    pub fn to_atoms(&self, names: &[String]) -> Vec<Atom> {
        let mut out = Vec::new();
        let term_of = |k: usize| -> LinTerm {
            if k == 0 {
                LinTerm::constant(Rat::zero())
            } else {
                LinTerm::var(&names[k - 1])
            }
        };
        for i in 0..self.dim {
            for j in 0..self.dim {
                if i == j {
                    continue;
                }
                if let Entry::Bound(b, strict) = self.at(i, j) {
                    // x_i - x_j (<|<=) b
                    let term = term_of(i)
                        .sub(&term_of(j))
                        .sub(&LinTerm::constant(Rat::from_integer(b.into())));
                    out.push(Atom {
                        term,
                        op: if strict { AtomOp::Lt } else { AtomOp::Le },
                    });
                }
            }
        }
        out
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        let mut first = true;
        for i in 0..self.dim {
            for j in 0..self.dim {
                if i != j {
                    if let Entry::Bound(b, s) = self.at(i, j) {
                        if !first {
                            write!(f, ", ")?;
                        }
                        first = false;
                        write!(f, "x{i}-x{j}{}{b}", if s { "<" } else { "<=" })?;
                    }
                }
            }
        }
        write!(f, "]")
    }
}

/// Maps clock names to DBM indices (reference clock is index 0).
#[derive(Debug, Clone)]
pub struct ClockIndex {
    pub names: Vec<String>,
    by_name: BTreeMap<String, usize>,
}

impl ClockIndex {
    pub fn new(names: Vec<String>) -> Self {
        let by_name = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i + 1))
            .collect();
        ClockIndex { names, by_name }
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Applies a clock constraint to a zone.
pub fn apply_constraint(z: &mut Zone, cc: &ClockConstraint, idx: &ClockIndex) {
    for a in &cc.0 {
        let i = idx.index(&a.clock).expect("undeclared clock in constraint");
        let j = a.minus.as_ref().map(|m| idx.index(m).expect("undeclared clock")).unwrap_or(0);
        match a.op {
            CmpOp::Le => z.and_entry(i, j, Entry::Bound(a.bound, false)),
            CmpOp::Lt => z.and_entry(i, j, Entry::Bound(a.bound, true)),
            CmpOp::Ge => z.and_entry(j, i, Entry::Bound(-a.bound, false)),
            CmpOp::Gt => z.and_entry(j, i, Entry::Bound(-a.bound, true)),
            CmpOp::Eq => {
                z.and_entry(i, j, Entry::Bound(a.bound, false));
                z.and_entry(j, i, Entry::Bound(-a.bound, false));
            }
        }
    }
}

/// One discrete successor step on entry zones: elapse within the source
/// invariant, take the guard, reset, and enter the target invariant. The
/// result is the set of valuations with which the target can be entered.
pub fn zone_successor(
    entry: &Zone,
    guard: &ClockConstraint,
    resets: &BTreeSet<String>,
    inv_source: &ClockConstraint,
    inv_target: &ClockConstraint,
    idx: &ClockIndex,
) -> Zone {
    let mut z = entry.clone();
    z.up();
    apply_constraint(&mut z, inv_source, idx);
    apply_constraint(&mut z, guard, idx);
    if z.is_empty() {
        return z;
    }
    for r in resets {
        if let Some(i) = idx.index(r) {
            z.reset(i);
        }
    }
    apply_constraint(&mut z, inv_target, idx);
    z
}

/// Time elapse within an invariant: the full reachable zone of a location
/// given its entry zone.
pub fn zone_elapse(entry: &Zone, inv: &ClockConstraint, idx: &ClockIndex) -> Zone {
    let mut z = entry.clone();
    z.up();
    apply_constraint(&mut z, inv, idx);
    z
}

// ---------------------------------------------------------------------------
// PTA
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Location {
    pub name: String,
    pub invariant: ClockConstraint,
    pub labels: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub probability: Rat,
    pub resets: BTreeSet<String>,
    pub target: usize,
}

#[derive(Debug, Clone)]
pub struct Edge {
    pub source: usize,
    pub action: String,
    pub guard: ClockConstraint,
    pub branches: Vec<Branch>,
}

#[derive(Debug, Clone)]
pub struct Pta {
    pub clocks: Vec<String>,
    pub locations: Vec<Location>,
    pub initial: usize,
    pub edges: Vec<Edge>,
    pub aps: BTreeSet<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PtaError {
    #[error("initial clock valuation violates the initial location invariant")]
    InitialInvariant,
    #[error("edge `{0}` has branch probabilities summing to {1}, not 1")]
    BadProbabilities(String, String),
    #[error("constraint atom `{0}` is not closed or not diagonal-free")]
    OpenOrDiagonal(String),
    #[error("PTA location graph is cyclic; analysis requires a tree-shaped PTA")]
    Cyclic,
    #[error("unknown atomic proposition `{0}`")]
    UnknownAp(String),
    #[error("undeclared clock `{0}`")]
    UnknownClock(String),
    #[error("urgent rule `{0}` has an upper-bound clock guard atom; urgency cannot be encoded as a location invariant")]
    UrgentUpperBound(String),
    #[error("urgent rule `{0}` has multiple lower-bound clock guard atoms")]
    UrgentMultipleLowerBounds(String),
}

impl Pta {
    pub fn validate(&self) -> Result<(), PtaError> {
        let zeros = |_: &str| 0i64;
        if !self.locations[self.initial].invariant.satisfied_by(&zeros) {
            return Err(PtaError::InitialInvariant);
        }
        for e in &self.edges {
            let sum: Rat = e
                .branches
                .iter()
                .map(|b| b.probability.clone())
                .fold(Rat::zero(), |a, b| a + b);
            if sum != Rat::one() {
                return Err(PtaError::BadProbabilities(e.action.clone(), sum.to_string()));
            }
        }
        let declared: BTreeSet<&String> = self.clocks.iter().collect();
        for cc in self
            .locations
            .iter()
            .map(|l| &l.invariant)
            .chain(self.edges.iter().map(|e| &e.guard))
        {
            for c in cc.clocks() {
                if !declared.contains(&c) {
                    return Err(PtaError::UnknownClock(c));
                }
            }
        }
        Ok(())
    }

    /// Digital-clocks admissibility: every guard and invariant atom closed
    /// and diagonal-free.
    pub fn validate_digital(&self) -> Result<(), PtaError> {
        let check = |cc: &ClockConstraint| -> Result<(), PtaError> {
            for a in &cc.0 {
                if !a.is_closed() || a.is_diagonal() {
                    return Err(PtaError::OpenOrDiagonal(a.to_string()));
                }
            }
            Ok(())
        };
        for l in &self.locations {
            check(&l.invariant)?;
        }
        for e in &self.edges {
            check(&e.guard)?;
        }
        Ok(())
    }

    /// Topological order of locations along edges; error if cyclic.
    fn topo_order(&self) -> Result<Vec<usize>, PtaError> {
        let n = self.locations.len();
        let mut indegree = vec![0usize; n];
        for e in &self.edges {
            for b in &e.branches {
                if b.target != e.source {
                    indegree[b.target] += 1;
                }
            }
        }
        let mut queue: VecDeque<usize> =
            (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for e in self.edges.iter().filter(|e| e.source == i) {
                for b in &e.branches {
                    if b.target != e.source {
                        indegree[b.target] -= 1;
                        if indegree[b.target] == 0 {
                            queue.push_back(b.target);
                        }
                    }
                }
            }
        }
        if order.len() == n {
            Ok(order)
        } else {
            Err(PtaError::Cyclic)
        }
    }

    /// Locations with no outgoing edges.
    pub fn leaves(&self) -> Vec<usize> {
        let mut has_out = vec![false; self.locations.len()];
        for e in &self.edges {
            has_out[e.source] = true;
        }
        (0..self.locations.len()).filter(|&i| !has_out[i]).collect()
    }

    /// Deterministic text listing: one location per line with id, invariant,
    /// labels, and its forward zone.
    pub fn dump(&self, zones: &BTreeMap<usize, Zone>) -> String {
        let mut out = String::new();
        for (i, l) in self.locations.iter().enumerate() {
            let labels: Vec<String> = l.labels.iter().cloned().collect();
            let zone = zones
                .get(&i)
                .map(|z| z.to_string())
                .unwrap_or_else(|| "unreachable".to_string());
            out.push_str(&format!(
                "loc {} name={} inv=[{}] labels=[{}] zone={}\n",
                i,
                l.name,
                l.invariant,
                labels.join(","),
                zone
            ));
        }
        for e in &self.edges {
            let branches: Vec<String> = e
                .branches
                .iter()
                .map(|b| {
                    let resets: Vec<String> = b.resets.iter().cloned().collect();
                    format!("{}:{{{}}}->{}", b.probability, resets.join(","), b.target)
                })
                .collect();
            out.push_str(&format!(
                "edge {} from={} guard=[{}] {}\n",
                e.action,
                e.source,
                e.guard,
                branches.join(" ")
            ));
        }
        out
    }
}

/// The unique reachable zone per location of a tree-shaped PTA (the
/// post-elapse zone, restricted by the location invariant). Unreachable
/// locations (empty entry zone) are absent from the result.
pub fn forward_zones(pta: &Pta) -> Result<BTreeMap<usize, Zone>, PtaError> {
    let order = pta.topo_order()?;
    let idx = ClockIndex::new(pta.clocks.clone());
    let mut entry: BTreeMap<usize, Zone> = BTreeMap::new();
    let mut full: BTreeMap<usize, Zone> = BTreeMap::new();
    let root_entry = Zone::zero(idx.len());
    entry.insert(pta.initial, root_entry);
    for &loc in &order {
        let e = match entry.get(&loc) {
            Some(z) if !z.is_empty() => z.clone(),
            _ => continue,
        };
        let z_full = zone_elapse(&e, &pta.locations[loc].invariant, &idx);
        full.insert(loc, z_full);
        for edge in pta.edges.iter().filter(|e| e.source == loc) {
            for b in &edge.branches {
                let succ = zone_successor(
                    &e,
                    &edge.guard,
                    &b.resets,
                    &pta.locations[loc].invariant,
                    &pta.locations[b.target].invariant,
                    &idx,
                );
                if succ.is_empty() {
                    continue;
                }
                // Tree shape: each target has a unique incoming branch.
                entry.insert(b.target, succ);
            }
        }
    }
    Ok(full)
}

// ---------------------------------------------------------------------------
// Digital clocks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct DigitalState {
    loc: usize,
    vals: Vec<i64>, // indexed by position in active clock list of loc
}

/// Exact min/max probability of eventually reaching a location labeled with
/// `target_ap`, over the digital-clocks MDP.
pub fn minmax_reach(pta: &Pta, target_ap: &str, mode: QueryMode) -> Result<Rat, PtaError> {
    pta.validate()?;
    pta.validate_digital()?;
    if !pta.aps.contains(target_ap) {
        return Err(PtaError::UnknownAp(target_ap.to_string()));
    }
    let order = pta.topo_order()?;

    // Per-clock cap: one past the largest constant the clock is compared to.
    let mut caps: BTreeMap<String, i64> = pta.clocks.iter().map(|c| (c.clone(), 1)).collect();
    let mut note = |cc: &ClockConstraint| {
        for a in &cc.0 {
            let e = caps.get_mut(&a.clock).expect("validated clock");
            *e = (*e).max(a.bound + 1);
        }
    };
    for l in &pta.locations {
        note(&l.invariant);
    }
    for e in &pta.edges {
        note(&e.guard);
    }

    // Cone of influence: per location, the clocks whose value can still
    // matter. Computed in reverse topological order.
    let n = pta.locations.len();
    let mut active: Vec<BTreeSet<String>> = vec![BTreeSet::new(); n];
    let mut edges_from: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, e) in pta.edges.iter().enumerate() {
        edges_from[e.source].push(i);
    }
    for &loc in order.iter().rev() {
        let mut set = pta.locations[loc].invariant.clocks();
        for &ei in &edges_from[loc] {
            let e = &pta.edges[ei];
            set.extend(e.guard.clocks());
            for b in &e.branches {
                for c in &active[b.target] {
                    if !b.resets.contains(c) {
                        set.insert(c.clone());
                    }
                }
                for c in pta.locations[b.target].invariant.clocks() {
                    if !b.resets.contains(&c) {
                        set.insert(c);
                    }
                }
            }
        }
        active[loc] = set;
    }
    let active_list: Vec<Vec<String>> = active
        .iter()
        .map(|s| s.iter().cloned().collect())
        .collect();

    // Forward exploration of reachable digital states.
    #[derive(Debug)]
    enum Action {
        Delay(usize),
        /// Capped delay self-loop: letting time diverge in place.
        Stall,
        Edge(Vec<(Rat, usize)>),
    }
    let mut states: Vec<DigitalState> = Vec::new();
    let mut ids: HashMap<DigitalState, usize> = HashMap::new();
    let mut actions: Vec<Vec<Action>> = Vec::new();
    let intern = |s: DigitalState,
                      states: &mut Vec<DigitalState>,
                      ids: &mut HashMap<DigitalState, usize>|
     -> usize {
        if let Some(&i) = ids.get(&s) {
            return i;
        }
        let i = states.len();
        ids.insert(s.clone(), i);
        states.push(s);
        i
    };
    let init = DigitalState {
        loc: pta.initial,
        vals: vec![0; active_list[pta.initial].len()],
    };
    let init_id = intern(init, &mut states, &mut ids);
    let mut frontier = vec![init_id];
    while let Some(sid) = frontier.pop() {
        while actions.len() <= sid {
            actions.push(Vec::new());
        }
        if !actions[sid].is_empty() {
            continue;
        }
        let st = states[sid].clone();
        let loc = st.loc;
        let clocks_here = &active_list[loc];
        let val_of = |name: &str| -> i64 {
            clocks_here
                .iter()
                .position(|c| c == name)
                .map(|i| st.vals[i])
                .unwrap_or(0)
        };
        let mut acts = Vec::new();
        // Delay by one unit (capped per clock).
        let next_vals: Vec<i64> = clocks_here
            .iter()
            .zip(&st.vals)
            .map(|(c, &v)| (v + 1).min(caps[c]))
            .collect();
        let next_val_of = |name: &str| -> i64 {
            clocks_here
                .iter()
                .position(|c| c == name)
                .map(|i| next_vals[i])
                .unwrap_or(0)
        };
        if pta.locations[loc].invariant.satisfied_by(&next_val_of) {
            if next_vals == st.vals {
                acts.push(Action::Stall);
            } else {
                let t = DigitalState {
                    loc,
                    vals: next_vals,
                };
                let tid = intern(t, &mut states, &mut ids);
                frontier.push(tid);
                acts.push(Action::Delay(tid));
            }
        }
        // Discrete edges.
        for &ei in &edges_from[loc] {
            let e = &pta.edges[ei];
            if !e.guard.satisfied_by(&val_of) {
                continue;
            }
            let mut branches = Vec::new();
            let mut ok = true;
            for b in &e.branches {
                let tvals: Vec<i64> = active_list[b.target]
                    .iter()
                    .map(|c| if b.resets.contains(c) { 0 } else { val_of(c) })
                    .collect();
                let tval_of = |name: &str| -> i64 {
                    active_list[b.target]
                        .iter()
                        .position(|c| c == name)
                        .map(|i| tvals[i])
                        .unwrap_or(0)
                };
                if !pta.locations[b.target].invariant.satisfied_by(&tval_of) {
                    ok = false;
                    break;
                }
                branches.push((
                    b.probability.clone(),
                    DigitalState {
                        loc: b.target,
                        vals: tvals,
                    },
                ));
            }
            if !ok {
                continue;
            }
            let resolved: Vec<(Rat, usize)> = branches
                .into_iter()
                .map(|(p, s)| {
                    let tid = intern(s, &mut states, &mut ids);
                    frontier.push(tid);
                    (p, tid)
                })
                .collect();
            acts.push(Action::Edge(resolved));
        }
        actions[sid] = acts;
    }
    while actions.len() < states.len() {
        actions.push(Vec::new());
    }

    // Topological order over digital states: every non-stall action strictly
    // increases (location depth, sum of clock values) lexicographically, so
    // Kahn's algorithm succeeds.
    let m = states.len();
    let mut indeg = vec![0usize; m];
    for acts in &actions {
        for a in acts {
            match a {
                Action::Delay(t) => indeg[*t] += 1,
                Action::Edge(bs) => {
                    for (_, t) in bs {
                        indeg[*t] += 1;
                    }
                }
                Action::Stall => {}
            }
        }
    }
    let mut queue: VecDeque<usize> = (0..m).filter(|&i| indeg[i] == 0).collect();
    let mut topo = Vec::with_capacity(m);
    while let Some(i) = queue.pop_front() {
        topo.push(i);
        for a in &actions[i] {
            match a {
                Action::Delay(t) => {
                    indeg[*t] -= 1;
                    if indeg[*t] == 0 {
                        queue.push_back(*t);
                    }
                }
                Action::Edge(bs) => {
                    for (_, t) in bs {
                        indeg[*t] -= 1;
                        if indeg[*t] == 0 {
                            queue.push_back(*t);
                        }
                    }
                }
                Action::Stall => {}
            }
        }
    }
    if topo.len() != m {
        return Err(PtaError::Cyclic);
    }

    // Single backward pass.
    let mut value: Vec<Rat> = vec![Rat::zero(); m];
    for &sid in topo.iter().rev() {
        let loc = states[sid].loc;
        if pta.locations[loc].labels.contains(target_ap) {
            value[sid] = Rat::one();
            continue;
        }
        let mut best: Option<Rat> = None;
        for a in &actions[sid] {
            let v = match a {
                Action::Delay(t) => value[*t].clone(),
                Action::Stall => Rat::zero(),
                Action::Edge(bs) => bs
                    .iter()
                    .map(|(p, t)| p * &value[*t])
                    .fold(Rat::zero(), |a, b| a + b),
            };
            best = Some(match best {
                None => v,
                Some(b) => match mode {
                    QueryMode::Max => b.max(v),
                    QueryMode::Min => b.min(v),
                },
            });
        }
        value[sid] = best.unwrap_or_else(Rat::zero);
    }
    Ok(value[init_id].clone())
}

/// Step 8: the probability interval `[reach(success), reach(maybe)]` for the
/// requested mode.
pub fn probability_interval(pta: &Pta, mode: QueryMode) -> Result<(Rat, Rat), PtaError> {
    let lo = minmax_reach(pta, "success", mode)?;
    let hi = minmax_reach(pta, "maybe", mode)?;
    Ok((lo, hi))
}

/// The zone as a conjunction of difference atoms over clock names, for
/// injection into step-7 check formulas.
pub fn zone_formula(zone: &Zone, clocks: &[String]) -> LinearFormula {
    LinearFormula::and(
        zone.to_atoms(clocks)
            .into_iter()
            .map(LinearFormula::Atom)
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// PTA construction from a state-space tree (step 2)
// ---------------------------------------------------------------------------

/// Name of the time-point clock reset by the step leading to the `i`-th
/// graph of a path; `tpc0` is never reset, so at any moment `tpc0 - tpc_i`
/// is the absolute time at which the `i`-th graph was entered and
/// `tpc_i - tpc_j` (for `j >= i`) the time expired between graphs `i` and
/// `j`.
pub fn tpc_name(i: u32) -> String {
    format!("tpc{i}")
}

/// Auxiliary clock reset on every edge; `ENTRY_CLOCK <= 0` encodes urgency
/// of rules that are enabled from the moment a location is entered.
pub const ENTRY_CLOCK: &str = "c.entry";

/// Builds the PTA equivalent to the explored tree: locations are tree
/// nodes, sibling branches of one `(rule, match)` pair aggregate into a
/// single probabilistic edge, invariants come from the PTGT invariants plus
/// urgency, and every step resets its depth's time-point clock.
pub fn construct_pta(
    tree: &crate::gts::StateSpaceTree,
    s: &crate::gts::Ptgts,
) -> Result<Pta, PtaError> {
    use crate::gts::{evaluate_ap, evaluate_invariant};

    // Clock set: clocks of all state graphs, time-point clocks, entry clock.
    let mut clocks: BTreeSet<String> = BTreeSet::new();
    for node in &tree.nodes {
        clocks.extend(node.graph.clock_vars(&s.type_graph));
    }
    let max_depth = tree.max_depth();
    for i in 0..=max_depth {
        clocks.insert(tpc_name(i));
    }
    clocks.insert(ENTRY_CLOCK.to_string());

    // Group outgoing edges per node by (rule, match).
    let mut groups: BTreeMap<(usize, usize, Vec<u32>), Vec<usize>> = BTreeMap::new();
    for (ei, e) in tree.edges.iter().enumerate() {
        groups
            .entry((e.parent, e.rule_index, e.match_morphism.image_key()))
            .or_default()
            .push(ei);
    }

    let mut locations = Vec::with_capacity(tree.nodes.len());
    for (ni, node) in tree.nodes.iter().enumerate() {
        let mut invariant = ClockConstraint::trivial();
        for inv in &s.invariants {
            invariant = invariant.and(evaluate_invariant(inv, &node.graph));
        }
        // Urgency: time may not pass beyond the enablement of an urgent
        // rule matched here. Lower-bound guard atoms flip into upper
        // bounds; a trivially enabled urgent rule pins the entry clock.
        for edges in groups
            .range((ni, 0, vec![])..(ni + 1, 0, vec![]))
            .map(|(_, v)| v)
        {
            let first = &tree.edges[edges[0]];
            let rule = &s.rules[first.rule_index];
            if !s.urgent.contains(&rule.name) {
                continue;
            }
            let mut lower_atoms = Vec::new();
            for a in &first.guard.0 {
                match a.op {
                    CmpOp::Ge | CmpOp::Eq => lower_atoms.push(ClockAtom {
                        clock: a.clock.clone(),
                        minus: None,
                        op: CmpOp::Le,
                        bound: a.bound,
                    }),
                    CmpOp::Le => {
                        return Err(PtaError::UrgentUpperBound(rule.name.clone()));
                    }
                    _ => return Err(PtaError::OpenOrDiagonal(a.to_string())),
                }
            }
            if lower_atoms.len() > 1 {
                return Err(PtaError::UrgentMultipleLowerBounds(rule.name.clone()));
            }
            if lower_atoms.is_empty() {
                lower_atoms.push(ClockAtom {
                    clock: ENTRY_CLOCK.to_string(),
                    minus: None,
                    op: CmpOp::Le,
                    bound: 0,
                });
            }
            invariant = invariant.and(ClockConstraint(lower_atoms));
        }
        let labels: BTreeSet<String> = s
            .aps
            .iter()
            .filter(|(_, c)| evaluate_ap(c, &node.graph))
            .map(|(n, _)| n.clone())
            .collect();
        locations.push(Location {
            name: format!("q{ni}"),
            invariant,
            labels,
        });
    }

    let mut edges = Vec::new();
    for ((parent, rule_index, match_key), members) in &groups {
        let first = &tree.edges[members[0]];
        let rule = &s.rules[*rule_index];
        let mut branches = Vec::new();
        for &ei in members {
            let te = &tree.edges[ei];
            let mut resets = te.resets.clone();
            resets.insert(tpc_name(tree.nodes[te.child].depth));
            resets.insert(ENTRY_CLOCK.to_string());
            branches.push(Branch {
                probability: te.probability.clone(),
                resets,
                target: te.child,
            });
        }
        let key: Vec<String> = match_key.iter().map(|k| k.to_string()).collect();
        edges.push(Edge {
            source: *parent,
            action: format!("{}@q{}[{}]", rule.name, parent, key.join(".")),
            guard: first.guard.clone(),
            branches,
        });
    }

    let pta = Pta {
        clocks: clocks.into_iter().collect(),
        locations,
        initial: 0,
        edges,
        aps: s.aps.iter().map(|(n, _)| n.clone()).collect(),
    };
    pta.validate()?;
    Ok(pta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    /// The two-action PTA used as the running PTA example: from l0 action
    /// `a` (guard c0>=3) goes to l3 with probability 1; action `b` (guard
    /// c0>=1) goes to l1 (reset c0) or l2 with probability 1/2 each.
    pub(crate) fn two_action_pta() -> Pta {
        let c0 = "c0".to_string();
        Pta {
            clocks: vec![c0],
            locations: vec![
                Location {
                    name: "l0".into(),
                    invariant: ClockConstraint(vec![ClockAtom::le("c0", 5)]),
                    labels: BTreeSet::new(),
                },
                Location {
                    name: "l1".into(),
                    invariant: ClockConstraint::trivial(),
                    labels: ["done".to_string()].into(),
                },
                Location {
                    name: "l2".into(),
                    invariant: ClockConstraint::trivial(),
                    labels: ["error1".to_string()].into(),
                },
                Location {
                    name: "l3".into(),
                    invariant: ClockConstraint::trivial(),
                    labels: ["error2".to_string()].into(),
                },
            ],
            initial: 0,
            edges: vec![
                Edge {
                    source: 0,
                    action: "a".into(),
                    guard: ClockConstraint(vec![ClockAtom::ge("c0", 3)]),
                    branches: vec![Branch {
                        probability: rat(1, 1),
                        resets: BTreeSet::new(),
                        target: 3,
                    }],
                },
                Edge {
                    source: 0,
                    action: "b".into(),
                    guard: ClockConstraint(vec![ClockAtom::ge("c0", 1)]),
                    branches: vec![
                        Branch {
                            probability: rat(1, 2),
                            resets: ["c0".to_string()].into(),
                            target: 1,
                        },
                        Branch {
                            probability: rat(1, 2),
                            resets: BTreeSet::new(),
                            target: 2,
                        },
                    ],
                },
            ],
            aps: ["done".to_string(), "error1".to_string(), "error2".to_string()]
                .into_iter()
                .collect(),
        }
    }

    #[test]
    fn reach_probabilities_of_two_action_pta() {
        let pta = two_action_pta();
        assert_eq!(minmax_reach(&pta, "done", QueryMode::Max).unwrap(), rat(1, 2));
        assert_eq!(minmax_reach(&pta, "done", QueryMode::Min).unwrap(), rat(0, 1));
    }

    #[test]
    fn reach_is_one_when_every_location_is_labeled() {
        let mut pta = two_action_pta();
        for l in &mut pta.locations {
            l.labels.insert("everywhere".into());
        }
        pta.aps.insert("everywhere".into());
        assert_eq!(
            minmax_reach(&pta, "everywhere", QueryMode::Max).unwrap(),
            rat(1, 1)
        );
        assert_eq!(
            minmax_reach(&pta, "everywhere", QueryMode::Min).unwrap(),
            rat(1, 1)
        );
    }

    #[test]
    fn digital_validation_rejects_open_guards() {
        let mut pta = two_action_pta();
        pta.edges[0].guard = ClockConstraint(vec![ClockAtom {
            clock: "c0".into(),
            minus: None,
            op: CmpOp::Gt,
            bound: 3,
        }]);
        match minmax_reach(&pta, "done", QueryMode::Max) {
            Err(PtaError::OpenOrDiagonal(s)) => assert!(s.contains("c0 > 3")),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn forward_zones_of_two_action_pta() {
        let pta = two_action_pta();
        let zones = forward_zones(&pta).unwrap();
        let idx = ClockIndex::new(pta.clocks.clone());
        let c = idx.index("c0").unwrap();
        // l0: 0 <= c0 <= 5
        let (lo, up) = zones[&0].bounds(c, 0);
        assert_eq!(lo, Entry::Bound(0, false));
        assert_eq!(up, Entry::Bound(5, false));
        // l3: c0 >= 3, unbounded above
        let (lo, up) = zones[&3].bounds(c, 0);
        assert_eq!(lo, Entry::Bound(-3, false));
        assert_eq!(up, Entry::Inf);
        // l2: c0 >= 1
        let (lo, _) = zones[&2].bounds(c, 0);
        assert_eq!(lo, Entry::Bound(-1, false));
        // l1: c0 >= 0 (reset then elapse)
        let (lo, up) = zones[&1].bounds(c, 0);
        assert_eq!(lo, Entry::Bound(0, false));
        assert_eq!(up, Entry::Inf);
    }

    #[test]
    fn successor_with_all_resets_pins_clocks_to_zero() {
        let idx = ClockIndex::new(vec!["c0".into(), "c1".into()]);
        let entry = Zone::zero(2);
        let mut resets = BTreeSet::new();
        resets.insert("c0".to_string());
        resets.insert("c1".to_string());
        let z = zone_successor(
            &entry,
            &ClockConstraint::trivial(),
            &resets,
            &ClockConstraint::trivial(),
            &ClockConstraint(vec![ClockAtom::le("c0", 7)]),
            &idx,
        );
        let (lo, up) = z.bounds(1, 0);
        assert_eq!((lo, up), (Entry::Bound(0, false), Entry::Bound(0, false)));
        let (lo, up) = z.bounds(2, 0);
        assert_eq!((lo, up), (Entry::Bound(0, false), Entry::Bound(0, false)));
    }

    #[test]
    fn successor_with_contradicting_guard_is_empty() {
        // Source invariant c <= 1 vs guard c >= 3, no reset in between.
        let idx = ClockIndex::new(vec!["c".into()]);
        let entry = Zone::zero(1);
        let z = zone_successor(
            &entry,
            &ClockConstraint(vec![ClockAtom::ge("c", 3)]),
            &BTreeSet::new(),
            &ClockConstraint(vec![ClockAtom::le("c", 1)]),
            &ClockConstraint::trivial(),
            &idx,
        );
        assert!(z.is_empty());
    }

    #[test]
    fn canonicalization_is_idempotent() {
        let mut z = Zone::universe(3);
        let idx = ClockIndex::new(vec!["a".into(), "b".into(), "c".into()]);
        apply_constraint(
            &mut z,
            &ClockConstraint(vec![
                ClockAtom::le("a", 4),
                ClockAtom::ge("b", 2),
                ClockAtom {
                    clock: "a".into(),
                    minus: Some("c".into()),
                    op: CmpOp::Le,
                    bound: 1,
                },
            ]),
            &idx,
        );
        let mut once = z.clone();
        once.canonicalize();
        let mut twice = once.clone();
        twice.canonicalize();
        assert_eq!(once, twice);
        // and_entry keeps zones canonical already
        assert_eq!(z, once);
    }

    #[test]
    fn zone_atoms_match_bounds() {
        let idx = ClockIndex::new(vec!["a".into(), "b".into()]);
        let mut z = Zone::zero(2);
        z.up();
        apply_constraint(&mut z, &ClockConstraint(vec![ClockAtom::le("a", 3)]), &idx);
        let atoms = z.to_atoms(&idx.names);
        // a <= 3 must be among the atoms: term a - 3 <= 0.
        assert!(atoms.iter().any(|at| {
            at.op == AtomOp::Le
                && at.term.coeff_of("a") == rat(1, 1)
                && at.term.constant == rat(-3, 1)
                && at.term.coeffs.len() == 1
        }));
    }
}
