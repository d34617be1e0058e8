//! Graph conditions, metric temporal graph conditions, and a reference
//! monitor deciding MTGC satisfaction on recorded timed paths.
//!
//! Conditions use id-inclusion contexts: a quantifier's extended graph
//! contains the context graph's elements under the same ids, so embeddings
//! never need explicit morphisms. The monitor enumerates candidate
//! positions — discrete-step positions, delay endpoints, interval-shifted
//! breakpoints, and segment midpoints — which is exact because graphs and
//! matches only change at discrete steps and all intervals are closed.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num::Zero;
use thiserror::Error;

use crate::graph::{find_monos, AttrSlot, Element, Graph, Morphism};
use crate::rational::Rat;
use crate::solver::QueryMode;

// ---------------------------------------------------------------------------
// Graph conditions (GL)
// ---------------------------------------------------------------------------

/// A nested graph condition over a context graph. The context of the whole
/// condition is supplied at evaluation time; `Exists` extends it (its graph
/// is a superset of the context under shared ids), `Restrict` shrinks it.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphCondition {
    True,
    Not(Box<GraphCondition>),
    And(Vec<GraphCondition>),
    Exists(Graph, Box<GraphCondition>),
    Restrict(Graph, Box<GraphCondition>),
}

impl GraphCondition {
    pub fn not(c: GraphCondition) -> GraphCondition {
        GraphCondition::Not(Box::new(c))
    }

    pub fn exists(extended: Graph, inner: GraphCondition) -> GraphCondition {
        GraphCondition::Exists(extended, Box::new(inner))
    }

    /// `∀(f, c) = ¬∃(f, ¬c)`.
    pub fn forall(extended: Graph, inner: GraphCondition) -> GraphCondition {
        GraphCondition::not(GraphCondition::exists(extended, GraphCondition::not(inner)))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LogicError {
    #[error("condition context mismatch: {0}")]
    ContextMismatch(String),
}

/// Restricts a morphism to the elements (and their slot variables) of a
/// subgraph of its source.
fn restrict_morphism(m: &Morphism, keep: &Graph) -> Morphism {
    let mut out = Morphism::default();
    for (&a, &b) in &m.node_map {
        if keep.nodes.contains_key(&a) {
            out.node_map.insert(a, b);
        }
    }
    for (&a, &b) in &m.edge_map {
        if keep.edges.contains_key(&a) {
            out.edge_map.insert(a, b);
        }
    }
    let kept_vars: BTreeSet<&String> = keep
        .attrs
        .iter()
        .filter_map(|(_, slot)| match slot {
            AttrSlot::Var(v) => Some(v),
            AttrSlot::Value(_) => None,
        })
        .collect();
    for (v, b) in &m.var_map {
        if kept_vars.contains(v) {
            out.var_map.insert(v.clone(), b.clone());
        }
    }
    out
}

/// Satisfaction of a graph condition by a mono `m` from the condition's
/// context into `host` (all attributes of `host` ground).
pub fn gc_check(host: &Graph, m: &Morphism, c: &GraphCondition) -> bool {
    match c {
        GraphCondition::True => true,
        GraphCondition::Not(inner) => !gc_check(host, m, inner),
        GraphCondition::And(parts) => parts.iter().all(|p| gc_check(host, m, p)),
        GraphCondition::Exists(extended, inner) => find_monos(extended, host, Some(m))
            .iter()
            .any(|m2| gc_check(host, m2, inner)),
        GraphCondition::Restrict(restricted, inner) => {
            gc_check(host, &restrict_morphism(m, restricted), inner)
        }
    }
}

/// Host-graph satisfaction: the initial morphism from the empty context.
pub fn gc_check_host(host: &Graph, c: &GraphCondition) -> bool {
    gc_check(host, &Morphism::default(), c)
}

// ---------------------------------------------------------------------------
// Metric temporal graph conditions
// ---------------------------------------------------------------------------

/// A closed interval over nonnegative rationals; `hi = None` means
/// unbounded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interval {
    pub lo: Rat,
    pub hi: Option<Rat>,
}

impl Interval {
    pub fn new(lo: Rat, hi: Option<Rat>) -> Result<Self, String> {
        if lo < Rat::zero() {
            return Err("interval lower bound must be nonnegative".into());
        }
        if let Some(h) = &hi {
            if *h < lo {
                return Err("empty interval".into());
            }
        }
        Ok(Interval { lo, hi })
    }

    pub fn contains(&self, d: &Rat) -> bool {
        *d >= self.lo && self.hi.as_ref().map(|h| *d <= *h).unwrap_or(true)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.hi {
            Some(h) => write!(f, "[{},{}]", self.lo, h),
            None => write!(f, "[{},inf)", self.lo),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mtgc {
    True,
    Not(Box<Mtgc>),
    And(Vec<Mtgc>),
    Exists(Graph, Box<Mtgc>),
    Restrict(Graph, Box<Mtgc>),
    /// Extend the match at a future (or current) position at which some
    /// newly matched element was just created.
    ExistsNew(Graph, Box<Mtgc>),
    Until(Interval, Box<Mtgc>, Box<Mtgc>),
}

impl Mtgc {
    pub fn not(c: Mtgc) -> Mtgc {
        Mtgc::Not(Box::new(c))
    }

    pub fn exists(extended: Graph, inner: Mtgc) -> Mtgc {
        Mtgc::Exists(extended, Box::new(inner))
    }

    pub fn exists_new(extended: Graph, inner: Mtgc) -> Mtgc {
        Mtgc::ExistsNew(extended, Box::new(inner))
    }

    /// `∀N(f, c) = ¬∃N(f, ¬c)`.
    pub fn forall_new(extended: Graph, inner: Mtgc) -> Mtgc {
        Mtgc::not(Mtgc::exists_new(extended, Mtgc::not(inner)))
    }

    pub fn restrict(restricted: Graph, inner: Mtgc) -> Mtgc {
        Mtgc::Restrict(restricted, Box::new(inner))
    }

    pub fn until(i: Interval, lhs: Mtgc, rhs: Mtgc) -> Mtgc {
        Mtgc::Until(i, Box::new(lhs), Box::new(rhs))
    }

    /// Eventually within `i`: `true U_i c`.
    pub fn eventually(i: Interval, inner: Mtgc) -> Mtgc {
        Mtgc::until(i, Mtgc::True, inner)
    }

    pub fn from_gc(c: &GraphCondition) -> Mtgc {
        match c {
            GraphCondition::True => Mtgc::True,
            GraphCondition::Not(i) => Mtgc::not(Mtgc::from_gc(i)),
            GraphCondition::And(ps) => Mtgc::And(ps.iter().map(Mtgc::from_gc).collect()),
            GraphCondition::Exists(g, i) => Mtgc::exists(g.clone(), Mtgc::from_gc(i)),
            GraphCondition::Restrict(g, i) => Mtgc::restrict(g.clone(), Mtgc::from_gc(i)),
        }
    }

    fn intervals(&self, out: &mut Vec<Interval>) {
        match self {
            Mtgc::True => {}
            Mtgc::Not(i) => i.intervals(out),
            Mtgc::And(ps) => ps.iter().for_each(|p| p.intervals(out)),
            Mtgc::Exists(_, i) | Mtgc::Restrict(_, i) | Mtgc::ExistsNew(_, i) => i.intervals(out),
            Mtgc::Until(iv, a, b) => {
                out.push(iv.clone());
                a.intervals(out);
                b.intervals(out);
            }
        }
    }

    fn temporal_depth(&self) -> usize {
        match self {
            Mtgc::True => 0,
            Mtgc::Not(i) => i.temporal_depth(),
            Mtgc::And(ps) => ps.iter().map(|p| p.temporal_depth()).max().unwrap_or(0),
            Mtgc::Exists(_, i) | Mtgc::Restrict(_, i) => i.temporal_depth(),
            Mtgc::ExistsNew(_, i) => 1 + i.temporal_depth(),
            Mtgc::Until(_, a, b) => 1 + a.temporal_depth().max(b.temporal_depth()),
        }
    }
}

/// Probabilistic metric temporal graph conditions.
#[derive(Debug, Clone, PartialEq)]
pub enum Pmtgc {
    /// `P ~ c [phi]` with `phi` over the empty context.
    Prob {
        op: crate::graph::CmpOp,
        bound: Rat,
        phi: Mtgc,
    },
    /// `Pmin=? [phi]` or `Pmax=? [phi]`.
    Query { mode: QueryMode, phi: Mtgc },
}

impl Pmtgc {
    pub fn phi(&self) -> &Mtgc {
        match self {
            Pmtgc::Prob { phi, .. } => phi,
            Pmtgc::Query { phi, .. } => phi,
        }
    }
}

// ---------------------------------------------------------------------------
// Timed paths and positions
// ---------------------------------------------------------------------------

/// A position `(t, s)`: total time and the number of discrete steps
/// performed so far, ordered lexicographically. Keeping the step index
/// global (instead of per time point) makes it coincide with the
/// creation/deletion indices recorded when folding a path into a graph
/// with history.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Position {
    pub t: Rat,
    pub s: u32,
}

impl Position {
    pub fn new(t: Rat, s: u32) -> Self {
        Position { t, s }
    }

    pub fn zero() -> Self {
        Position {
            t: Rat::zero(),
            s: 0,
        }
    }
}

impl PartialOrd for Position {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Position {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.t.cmp(&other.t).then(self.s.cmp(&other.s))
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.t, self.s)
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteStep {
    pub rule: String,
    pub branch: String,
    pub match_morphism: Morphism,
    /// Elements of the source graph deleted by the step.
    pub deleted: Vec<Element>,
    /// Elements of the target graph created by the step.
    pub created: Vec<Element>,
    pub resets: BTreeSet<String>,
    pub target: Graph,
}

#[derive(Debug, Clone)]
pub enum PathStep {
    /// A delay of strictly positive duration.
    Delay(Rat),
    Discrete(DiscreteStep),
}

/// A finite recorded path: graphs connected by delays and DPO steps.
/// Element ids are stable along spans, so preserved elements keep their
/// identity from graph to graph.
#[derive(Debug, Clone)]
pub struct TimedPath {
    pub initial: Graph,
    pub initial_valuation: BTreeMap<String, Rat>,
    pub steps: Vec<PathStep>,
}

impl TimedPath {
    pub fn total_time(&self) -> Rat {
        self.steps
            .iter()
            .map(|s| match s {
                PathStep::Delay(d) => d.clone(),
                PathStep::Discrete(_) => Rat::zero(),
            })
            .fold(Rat::zero(), |a, b| a + b)
    }

    /// Clock valuation after the k-th step (0 = initial valuation).
    pub fn valuation_after(&self, k: usize) -> BTreeMap<String, Rat> {
        let mut val = self.initial_valuation.clone();
        for step in self.steps.iter().take(k) {
            match step {
                PathStep::Delay(d) => {
                    for v in val.values_mut() {
                        *v += d.clone();
                    }
                }
                PathStep::Discrete(ds) => {
                    for c in &ds.resets {
                        val.insert(c.clone(), Rat::zero());
                    }
                    // Clocks of created elements start at zero.
                    for el in &ds.created {
                        for ((owner, _), slot) in &ds.target.attrs {
                            if owner == el {
                                if let AttrSlot::Var(v) = slot {
                                    val.entry(v.clone()).or_insert_with(Rat::zero);
                                }
                            }
                        }
                    }
                }
            }
        }
        val
    }
}

/// Precomputed view of a timed path: graphs at canonical positions, element
/// lifetimes, and delay segments.
pub struct PathIndex<'a> {
    /// Graph after each prefix: `graphs[0]` is the initial graph,
    /// `graphs[k+1]` the graph after step k.
    graphs: Vec<&'a Graph>,
    /// Canonical position reached after each prefix (same indexing).
    cursor: Vec<Position>,
    /// Half-open delay segments `[lo, hi)` with their step index and the
    /// graph index current during the segment.
    segments: Vec<(Rat, Rat, u32, usize)>,
    /// Exact point positions (cluster times) mapping to graph indices.
    points: BTreeMap<Position, usize>,
    created: BTreeMap<Element, Position>,
    deleted: BTreeMap<Element, Position>,
    total: Rat,
}

impl<'a> PathIndex<'a> {
    pub fn new(path: &'a TimedPath) -> Self {
        let mut graphs: Vec<&Graph> = vec![&path.initial];
        let mut cursor = vec![Position::zero()];
        let mut segments = Vec::new();
        let mut points = BTreeMap::new();
        let mut created: BTreeMap<Element, Position> = BTreeMap::new();
        let mut deleted: BTreeMap<Element, Position> = BTreeMap::new();
        for el in path.initial.elements() {
            created.insert(el, Position::zero());
        }
        points.insert(Position::zero(), 0usize);
        let mut t = Rat::zero();
        let mut s = 0u32;
        for step in &path.steps {
            match step {
                PathStep::Delay(d) => {
                    let lo = t.clone();
                    t += d.clone();
                    segments.push((lo, t.clone(), s, graphs.len() - 1));
                    graphs.push(*graphs.last().unwrap());
                    cursor.push(Position::new(t.clone(), s));
                    points.insert(Position::new(t.clone(), s), graphs.len() - 1);
                }
                PathStep::Discrete(ds) => {
                    s += 1;
                    let pos = Position::new(t.clone(), s);
                    for el in &ds.deleted {
                        deleted.insert(*el, pos.clone());
                    }
                    for el in &ds.created {
                        created.insert(*el, pos.clone());
                    }
                    graphs.push(&ds.target);
                    cursor.push(pos.clone());
                    points.insert(pos, graphs.len() - 1);
                }
            }
        }
        PathIndex {
            graphs,
            cursor,
            segments,
            points,
            created,
            deleted,
            total: t,
        }
    }

    pub fn total_time(&self) -> &Rat {
        &self.total
    }

    pub fn final_position(&self) -> Position {
        self.cursor.last().cloned().unwrap_or_else(Position::zero)
    }

    pub fn creation_position(&self, el: Element) -> Option<&Position> {
        self.created.get(&el)
    }

    /// Graph at a position: delays keep the graph over a half-open time
    /// interval at the current step index, discrete steps increment the
    /// step index at a fixed time. `None` beyond the path or in a gap
    /// (e.g. a step index not attained at that time).
    pub fn graph_at(&self, pos: &Position) -> Option<&'a Graph> {
        if let Some(&gi) = self.points.get(pos) {
            return Some(self.graphs[gi]);
        }
        for (lo, hi, s, gi) in &self.segments {
            if pos.t >= *lo && pos.t < *hi && pos.s == *s {
                return Some(self.graphs[*gi]);
            }
        }
        None
    }

    pub fn is_defined(&self, pos: &Position) -> bool {
        self.graph_at(pos).is_some()
    }

    /// An element exists at `pos` if it was created at or before `pos` and
    /// not yet deleted (an element is no longer present at the position of
    /// its deleting step).
    pub fn exists_at(&self, el: Element, pos: &Position) -> bool {
        match self.created.get(&el) {
            Some(c) if *c <= *pos => {}
            _ => return false,
        }
        match self.deleted.get(&el) {
            Some(d) => *pos < *d,
            None => true,
        }
    }

    /// All defined positions at exact time `u`.
    fn positions_at(&self, u: &Rat) -> Vec<Position> {
        let mut out = Vec::new();
        let lo = Position::new(u.clone(), 0);
        let hi = Position::new(u.clone(), u32::MAX);
        for (p, _) in self.points.range(lo..=hi) {
            out.push(p.clone());
        }
        if out.is_empty() {
            for (slo, shi, s, _) in &self.segments {
                if *u >= *slo && *u < *shi {
                    out.push(Position::new(u.clone(), *s));
                    break;
                }
            }
        }
        out
    }

    /// Positions at which an element can have just been created: the origin
    /// and every discrete-step position.
    fn creation_positions(&self) -> BTreeSet<Position> {
        self.created.values().cloned().collect()
    }
}

/// Propagates a match along the path: defined when every matched element is
/// preserved by all steps between the two positions (timed steps always
/// preserve). The propagated morphism maps the same pattern elements to the
/// same element ids; attribute bindings are refreshed against the graph at
/// the target position.
pub fn propagate_match(
    index: &PathIndex,
    pattern: &Graph,
    m: &Morphism,
    from: &Position,
    to: &Position,
) -> Option<Morphism> {
    if !index.is_defined(to) || !index.is_defined(from) {
        return None;
    }
    if from == to {
        return Some(m.clone());
    }
    for el in m
        .node_map
        .values()
        .map(|&n| Element::Node(n))
        .chain(m.edge_map.values().map(|&e| Element::Edge(e)))
    {
        if !index.exists_at(el, to) {
            return None;
        }
    }
    // Rebind attribute variables at the target graph; a literal that no
    // longer matches (a changed attribute value) blocks propagation.
    let host = index.graph_at(to)?;
    let mut out = Morphism {
        node_map: m.node_map.clone(),
        edge_map: m.edge_map.clone(),
        var_map: BTreeMap::new(),
    };
    for (&pn, &hn) in &m.node_map {
        if !rebind(pattern, host, Element::Node(pn), Element::Node(hn), &mut out) {
            return None;
        }
    }
    for (&pe, &he) in &m.edge_map {
        if !rebind(pattern, host, Element::Edge(pe), Element::Edge(he), &mut out) {
            return None;
        }
    }
    Some(out)
}

fn rebind(pattern: &Graph, host: &Graph, pel: Element, hel: Element, out: &mut Morphism) -> bool {
    use crate::graph::Binding;
    for ((el, attr), slot) in &pattern.attrs {
        if *el != pel {
            continue;
        }
        let hslot = match host.attr(hel, attr) {
            Some(s) => s,
            None => return false,
        };
        let target = match hslot {
            AttrSlot::Value(v) => Binding::Value(v.clone()),
            AttrSlot::Var(v) => Binding::HostVar(v.clone()),
        };
        match slot {
            AttrSlot::Value(v) => {
                if target != Binding::Value(v.clone()) {
                    return false;
                }
            }
            AttrSlot::Var(v) => match out.var_map.get(v) {
                Some(existing) => {
                    if *existing != target {
                        return false;
                    }
                }
                None => {
                    out.var_map.insert(v.clone(), target);
                }
            },
        }
    }
    true
}

// ---------------------------------------------------------------------------
// The reference monitor
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default)]
pub struct MonitorOptions {
    /// Require `tau' > tau` (strictly later positions) for `Until`
    /// witnesses; the default allows `tau' = tau`.
    pub until_strict: bool,
}

/// Decides `path, pos, m |= phi` for a finite path. `ctx` is the context
/// graph of `phi` and `m` maps it into the graph at `pos`.
pub fn mtgc_check(
    path: &TimedPath,
    pos: &Position,
    ctx: &Graph,
    m: &Morphism,
    phi: &Mtgc,
    opts: MonitorOptions,
) -> bool {
    let index = PathIndex::new(path);
    let candidates = candidate_positions(&index, phi);
    let mut memo = HashMap::new();
    eval(
        &index,
        &candidates,
        &mut memo,
        pos,
        ctx,
        m,
        phi,
        opts,
    )
}

/// Host-path satisfaction: the empty context at the origin.
pub fn mtgc_check_path(path: &TimedPath, phi: &Mtgc, opts: MonitorOptions) -> bool {
    mtgc_check(
        path,
        &Position::zero(),
        &Graph::new(),
        &Morphism::default(),
        phi,
        opts,
    )
}

/// Candidate positions: all positions at breakpoint times (event times
/// closed under adding interval endpoints, to the formula's temporal depth)
/// plus a midpoint between each pair of consecutive breakpoint times.
fn candidate_positions(index: &PathIndex, phi: &Mtgc) -> Vec<Position> {
    let mut intervals = Vec::new();
    phi.intervals(&mut intervals);
    let depth = phi.temporal_depth();
    let mut times: BTreeSet<Rat> = BTreeSet::new();
    times.insert(Rat::zero());
    times.insert(index.total.clone());
    for p in index.points.keys() {
        times.insert(p.t.clone());
    }
    for _ in 0..depth {
        let snapshot: Vec<Rat> = times.iter().cloned().collect();
        for t in &snapshot {
            for iv in &intervals {
                let a = t + &iv.lo;
                if a <= index.total {
                    times.insert(a);
                }
                if let Some(h) = &iv.hi {
                    let b = t + h;
                    if b <= index.total {
                        times.insert(b);
                    }
                }
            }
        }
    }
    let sorted: Vec<Rat> = times.into_iter().collect();
    let mut out = Vec::new();
    for (i, t) in sorted.iter().enumerate() {
        out.extend(index.positions_at(t));
        if i + 1 < sorted.len() {
            let mid = (t + &sorted[i + 1]) / Rat::from_integer(2.into());
            out.extend(index.positions_at(&mid));
        }
    }
    out.sort();
    out.dedup();
    out
}

type MemoKey = (usize, Position, Vec<(u32, u32)>, Vec<(u32, u32)>);

#[allow(clippy::too_many_arguments)]
fn eval(
    index: &PathIndex,
    candidates: &[Position],
    memo: &mut HashMap<MemoKey, bool>,
    pos: &Position,
    ctx: &Graph,
    m: &Morphism,
    phi: &Mtgc,
    opts: MonitorOptions,
) -> bool {
    let key: MemoKey = (
        phi as *const Mtgc as usize,
        pos.clone(),
        m.node_map.iter().map(|(a, b)| (a.0, b.0)).collect(),
        m.edge_map.iter().map(|(a, b)| (a.0, b.0)).collect(),
    );
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let result = match phi {
        Mtgc::True => true,
        Mtgc::Not(inner) => !eval(index, candidates, memo, pos, ctx, m, inner, opts),
        Mtgc::And(parts) => parts
            .iter()
            .all(|p| eval(index, candidates, memo, pos, ctx, m, p, opts)),
        Mtgc::Exists(extended, inner) => {
            let host = match index.graph_at(pos) {
                Some(g) => g,
                None => {
                    memo.insert(key, false);
                    return false;
                }
            };
            find_monos(extended, host, Some(m))
                .iter()
                .any(|m2| eval(index, candidates, memo, pos, extended, m2, inner, opts))
        }
        Mtgc::Restrict(restricted, inner) => {
            let m2 = restrict_morphism(m, restricted);
            eval(index, candidates, memo, pos, restricted, &m2, inner, opts)
        }
        Mtgc::ExistsNew(extended, inner) => {
            // New elements are those of the extension beyond the context.
            let new_elems: Vec<Element> = extended
                .elements()
                .filter(|el| !ctx.has_element(*el))
                .collect();
            let mut witnesses = index.creation_positions();
            witnesses.insert(pos.clone());
            witnesses.iter().any(|cand| {
                if cand < pos {
                    return false;
                }
                let m_prop = match propagate_match(index, ctx, m, pos, cand) {
                    Some(mp) => mp,
                    None => return false,
                };
                let host = match index.graph_at(cand) {
                    Some(g) => g,
                    None => return false,
                };
                find_monos(extended, host, Some(&m_prop)).iter().any(|m2| {
                    let just_created = new_elems.iter().any(|pel| {
                        m2.map_element(*pel)
                            .and_then(|hel| index.creation_position(hel))
                            .map(|cp| cp == cand)
                            .unwrap_or(false)
                    });
                    just_created
                        && eval(index, candidates, memo, cand, extended, m2, inner, opts)
                })
            })
        }
        Mtgc::Until(interval, lhs, rhs) => candidates.iter().any(|cand| {
            let order_ok = if opts.until_strict {
                cand > pos
            } else {
                cand >= pos
            };
            if !order_ok {
                return false;
            }
            let delta = &cand.t - &pos.t;
            if !interval.contains(&delta) {
                return false;
            }
            let m2 = match propagate_match(index, ctx, m, pos, cand) {
                Some(mp) => mp,
                None => return false,
            };
            if !eval(index, candidates, memo, cand, ctx, &m2, rhs, opts) {
                return false;
            }
            // lhs must hold at every intermediate candidate position.
            candidates
                .iter()
                .filter(|mid| *mid >= pos && *mid < cand)
                .all(|mid| {
                    match propagate_match(index, ctx, m, pos, mid) {
                        Some(mm) => eval(index, candidates, memo, mid, ctx, &mm, lhs, opts),
                        None => false,
                    }
                })
        }),
    };
    memo.insert(key, result);
    result
}
