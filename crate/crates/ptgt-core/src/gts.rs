//! PTGT rules, DPO rule application, priority-aware step enumeration,
//! tree-shaped state-space exploration, the time-bound encoding, and
//! GC-based invariants and atomic propositions.
//!
//! Rules use the shared-id discipline: the interface K is the left-hand
//! side minus the deleted elements, and the right-hand side contains K's
//! elements under the same ids plus created elements under fresh ids.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num::One;
use thiserror::Error;

use crate::graph::{
    find_monos, AttrSlot, AttrValue, AttributeFormula, Binding, CmpOp, Element, Graph, Morphism,
    Sort, Term, TypeGraph,
};
use crate::logic::{gc_check_host, GraphCondition};
use crate::pta::{ClockAtom, ClockConstraint};
use crate::rational::Rat;

/// Node type and clock attribute injected by the time-bound encoding.
pub const BOUND_NODE_TYPE: &str = "Bound";
pub const BOUND_RULE_NAME: &str = "bound-reached";

// ---------------------------------------------------------------------------
// Rules
// ---------------------------------------------------------------------------

/// An underlying GT rule. `lhs` is shared with the owning PTGT rule;
/// `deleted` lists lhs elements outside the interface; `rhs` holds the
/// preserved elements (same ids) plus created ones.
#[derive(Debug, Clone)]
pub struct GtRule {
    pub lhs: Graph,
    pub deleted: Vec<Element>,
    pub rhs: Graph,
    /// Attribute effect in executable form: primed variable := term over
    /// lhs variables. The formula view is the conjunction of equations.
    pub assignments: Vec<(String, Term)>,
}

impl GtRule {
    pub fn created(&self) -> Vec<Element> {
        self.rhs
            .elements()
            .filter(|el| !self.lhs.has_element(*el) || self.deleted.contains(el))
            .collect()
    }

    pub fn interface_elements(&self) -> Vec<Element> {
        self.lhs
            .elements()
            .filter(|el| !self.deleted.contains(el))
            .collect()
    }

    /// The attribute effect as a formula (primed variables suffixed `'`).
    pub fn effect_formula(&self) -> AttributeFormula {
        AttributeFormula::and(
            self.assignments
                .iter()
                .map(|(v, t)| {
                    AttributeFormula::Cmp(CmpOp::Eq, Term::Var(format!("{v}'")), t.clone())
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct PtgtBranch {
    pub name: String,
    pub rule: GtRule,
    /// Clock variables of the rhs to reset (pattern-level names).
    pub resets: BTreeSet<String>,
    pub probability: Rat,
}

#[derive(Debug, Clone)]
pub struct PtgtRule {
    pub name: String,
    /// Left-hand side; its `ac` is the attribute guard.
    pub lhs: Graph,
    /// Clock guard atoms over lhs clock variables (closed, diagonal-free).
    pub clock_guard: Vec<ClockAtom>,
    pub priority: u32,
    pub branches: Vec<PtgtBranch>,
}

/// A validated PTGT invariant of the supported shape
/// `not exists (pattern with a single strict clock comparison)`.
#[derive(Debug, Clone)]
pub struct Invariant {
    pub name: String,
    pub pattern: Graph,
    /// The forbidden comparison `clock_var op bound` (op strict; its
    /// negation is the closed constraint contributed per match).
    pub clock_var: String,
    pub op: CmpOp,
    pub bound: i64,
    /// After the time-bound encoding: the invariant only applies while a
    /// node of this type is present.
    pub requires_node_type: Option<String>,
}

impl Invariant {
    /// Validates the supported invariant condition shape.
    pub fn from_condition(
        name: &str,
        pattern: Graph,
        forbid: &AttributeFormula,
        tg: &TypeGraph,
    ) -> Result<Invariant, GtsError> {
        let bad = |why: &str| GtsError::UnsupportedInvariant {
            name: name.to_string(),
            why: why.to_string(),
        };
        let clock_vars = pattern.clock_vars(tg);
        match forbid {
            AttributeFormula::Cmp(op, Term::Var(v), Term::Const(AttrValue::Int(b))) => {
                if !clock_vars.contains(v) {
                    return Err(bad("comparison must involve a clock variable"));
                }
                if !matches!(op, CmpOp::Lt | CmpOp::Gt) {
                    return Err(bad(
                        "comparison must be strict so its negation is a closed constraint",
                    ));
                }
                if *b < 0 {
                    return Err(bad("clock bound must be nonnegative"));
                }
                Ok(Invariant {
                    name: name.to_string(),
                    pattern,
                    clock_var: v.clone(),
                    op: *op,
                    bound: *b,
                    requires_node_type: None,
                })
            }
            _ => Err(bad(
                "invariant must forbid a single clock comparison `c < n` or `c > n`",
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ptgts {
    pub type_graph: TypeGraph,
    pub initial: Graph,
    pub rules: Vec<PtgtRule>,
    pub invariants: Vec<Invariant>,
    pub aps: Vec<(String, GraphCondition)>,
    pub urgent: BTreeSet<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GtsError {
    #[error("rule `{rule}`: {why}")]
    BadRule { rule: String, why: String },
    #[error("invariant `{name}` has an unsupported shape: {why}")]
    UnsupportedInvariant { name: String, why: String },
    #[error("state space not finite within limits ({states} states, depth {depth})")]
    LimitExceeded { states: usize, depth: u32 },
    #[error("attribute evaluation failed in rule `{rule}`: {why}")]
    Attribute { rule: String, why: String },
}

// ---------------------------------------------------------------------------
// DPO application
// ---------------------------------------------------------------------------

/// Result of applying a GT rule: the derived graph and the span data
/// (deleted elements of the source, created elements of the target).
#[derive(Debug, Clone)]
pub struct AppliedStep {
    pub result: Graph,
    pub deleted: Vec<Element>,
    pub created: Vec<Element>,
    /// Host clock names reset by the owning branch (declared resets plus
    /// clocks of created elements).
    pub reset_clocks: BTreeSet<String>,
}

impl AppliedStep {
    /// The span `D -> G, D -> H` as id-inclusion morphisms with `D` the
    /// source minus the deleted elements.
    pub fn span(&self, source: &Graph) -> (Graph, Morphism, Morphism) {
        let mut d = source.clone();
        for el in &self.deleted {
            d.remove_element(*el);
        }
        let to_source = Morphism::identity(&d);
        let to_target = Morphism::identity(&d);
        (d, to_source, to_target)
    }
}

/// Applies one underlying GT rule at a match. `None` when the dangling
/// condition is violated (the step is inapplicable, not an error).
pub fn apply_gt_rule(
    host: &Graph,
    tg: &TypeGraph,
    rule_name: &str,
    gt: &GtRule,
    branch_resets: &BTreeSet<String>,
    m: &Morphism,
) -> Result<Option<AppliedStep>, GtsError> {
    // Deleted host elements.
    let mut deleted_nodes: BTreeSet<crate::graph::NodeId> = BTreeSet::new();
    let mut deleted_edges: BTreeSet<crate::graph::EdgeId> = BTreeSet::new();
    for el in &gt.deleted {
        match el {
            Element::Node(n) => {
                deleted_nodes.insert(match m.node_map.get(n) {
                    Some(&h) => h,
                    None => {
                        return Err(GtsError::BadRule {
                            rule: rule_name.into(),
                            why: "match does not cover a deleted node".into(),
                        })
                    }
                });
            }
            Element::Edge(e) => {
                deleted_edges.insert(match m.edge_map.get(e) {
                    Some(&h) => h,
                    None => {
                        return Err(GtsError::BadRule {
                            rule: rule_name.into(),
                            why: "match does not cover a deleted edge".into(),
                        })
                    }
                });
            }
        }
    }
    // Dangling condition: no surviving edge may touch a deleted node.
    for (eid, e) in &host.edges {
        if deleted_edges.contains(eid) {
            continue;
        }
        if deleted_nodes.contains(&e.source) || deleted_nodes.contains(&e.target) {
            return Ok(None);
        }
    }

    let mut result = host.clone();
    for &n in &deleted_nodes {
        result.remove_element(Element::Node(n));
    }
    for &e in &deleted_edges {
        result.remove_element(Element::Edge(e));
    }

    // Ground environment of the match for effect evaluation.
    let mut env: BTreeMap<String, AttrValue> = BTreeMap::new();
    for (v, b) in &m.var_map {
        if let Binding::Value(val) = b {
            env.insert(v.clone(), val.clone());
        }
    }
    let eval_term = |t: &Term| -> Result<AttrValue, GtsError> {
        t.eval(&env).map_err(|e| GtsError::Attribute {
            rule: rule_name.into(),
            why: e.to_string(),
        })
    };
    let assignments: BTreeMap<&String, &Term> =
        gt.assignments.iter().map(|(v, t)| (v, t)).collect();

    // Created elements: fresh ids, deterministic order (nodes then edges by
    // rhs id).
    let mut created: Vec<Element> = Vec::new();
    let mut node_image: BTreeMap<crate::graph::NodeId, crate::graph::NodeId> = BTreeMap::new();
    let mut reset_clocks: BTreeSet<String> = BTreeSet::new();
    let created_elems = gt.created();
    for el in &created_elems {
        if let Element::Node(rn) = el {
            let data = &gt.rhs.nodes[rn];
            let fresh = result.add_node(&data.ty, &data.name);
            node_image.insert(*rn, fresh);
            created.push(Element::Node(fresh));
        }
    }
    for el in &created_elems {
        if let Element::Edge(re) = el {
            let data = &gt.rhs.edges[re];
            let src = match node_image.get(&data.source) {
                Some(&f) => f,
                None => match m.node_map.get(&data.source) {
                    Some(&h) => h,
                    None => {
                        return Err(GtsError::BadRule {
                            rule: rule_name.into(),
                            why: "created edge endpoint neither matched nor created".into(),
                        })
                    }
                },
            };
            let tgt = match node_image.get(&data.target) {
                Some(&f) => f,
                None => match m.node_map.get(&data.target) {
                    Some(&h) => h,
                    None => {
                        return Err(GtsError::BadRule {
                            rule: rule_name.into(),
                            why: "created edge endpoint neither matched nor created".into(),
                        })
                    }
                },
            };
            let fresh = result.add_edge(&data.ty, &data.name, src, tgt);
            created.push(Element::Edge(fresh));
        }
    }

    // Attributes of the result, driven by the rhs slots.
    for ((rel, attr), slot) in &gt.rhs.attrs {
        let is_created = created_elems.contains(rel);
        let host_el = if is_created {
            match rel {
                Element::Node(rn) => Element::Node(node_image[rn]),
                Element::Edge(_re) => {
                    // Created edge: find by offset within created list.
                    let pos = created_elems
                        .iter()
                        .filter(|e| matches!(e, Element::Edge(_)))
                        .position(|e| e == rel)
                        .expect("created edge present");
                    *created
                        .iter()
                        .filter(|e| matches!(e, Element::Edge(_)))
                        .nth(pos)
                        .expect("created edge image")
                }
            }
        } else {
            m.map_element(*rel).ok_or_else(|| GtsError::BadRule {
                rule: rule_name.into(),
                why: "rhs preserved element not covered by match".into(),
            })?
        };
        let sort = attr_sort(tg, &gt.rhs, *rel, attr);
        match slot {
            AttrSlot::Value(v) => {
                result.set_attr(host_el, attr, AttrSlot::Value(v.clone()));
            }
            AttrSlot::Var(v) => {
                if sort == Some(Sort::Clock) {
                    if is_created {
                        // Fresh clock, named after the element identity;
                        // created clocks start at zero.
                        let fresh_clock = format!("c.{host_el}");
                        reset_clocks.insert(fresh_clock.clone());
                        result.set_attr(host_el, attr, AttrSlot::Var(fresh_clock));
                    }
                    // Preserved clocks keep their host slot untouched.
                } else if let Some(term) = assignments.get(v) {
                    let value = eval_term(term)?;
                    result.set_attr(host_el, attr, AttrSlot::Value(value));
                } else if is_created {
                    return Err(GtsError::BadRule {
                        rule: rule_name.into(),
                        why: format!(
                            "attribute `{attr}` of a created element needs a literal or an effect equation"
                        ),
                    });
                }
                // Preserved, no assignment: keep the old value.
            }
        }
    }

    // Declared resets: rhs clock variables resolve to host clock names.
    for var in branch_resets {
        match m.var_map.get(var) {
            Some(Binding::HostVar(h)) => {
                reset_clocks.insert(h.clone());
            }
            Some(Binding::Value(_)) | None => {
                // A reset of a created element's clock: covered above via
                // fresh clocks; anything else is a rule validation problem.
            }
        }
    }

    Ok(Some(AppliedStep {
        result,
        deleted: deleted_nodes
            .iter()
            .map(|&n| Element::Node(n))
            .chain(deleted_edges.iter().map(|&e| Element::Edge(e)))
            .collect(),
        created,
        reset_clocks,
    }))
}

fn attr_sort(tg: &TypeGraph, g: &Graph, el: Element, attr: &str) -> Option<Sort> {
    let decls = match el {
        Element::Node(n) => tg.attrs_of_node(&g.nodes.get(&n)?.ty),
        Element::Edge(e) => tg.attrs_of_edge(&g.edges.get(&e)?.ty),
    };
    decls.iter().find(|d| d.name == attr).map(|d| d.sort)
}

// ---------------------------------------------------------------------------
// Step enumeration and exploration
// ---------------------------------------------------------------------------

/// All applicable `(rule index, match)` pairs after priority filtering:
/// only pairs of the highest present priority survive. Clock guards are not
/// filtered here; they become PTA guards.
pub fn enabled_steps(g: &Graph, s: &Ptgts) -> Vec<(usize, Morphism)> {
    let mut found: Vec<(usize, Morphism)> = Vec::new();
    for (ri, rule) in s.rules.iter().enumerate() {
        for m in find_monos(&rule.lhs, g, None) {
            // The step exists only if every branch satisfies the dangling
            // condition (each branch must yield a target).
            let all_branches_ok = rule.branches.iter().all(|b| {
                apply_gt_rule(g, &s.type_graph, &rule.name, &b.rule, &b.resets, &m)
                    .map(|r| r.is_some())
                    .unwrap_or(false)
            });
            if all_branches_ok {
                found.push((ri, m));
            }
        }
    }
    let top = found
        .iter()
        .map(|(ri, _)| s.rules[*ri].priority)
        .max()
        .unwrap_or(0);
    found.retain(|(ri, _)| s.rules[*ri].priority == top);
    // Deterministic order: rule name, then canonical match order.
    found.sort_by(|(ra, ma), (rb, mb)| {
        s.rules[*ra]
            .name
            .cmp(&s.rules[*rb].name)
            .then_with(|| ma.image_key().cmp(&mb.image_key()))
    });
    found
}

#[derive(Debug, Clone, Copy)]
pub struct ExploreLimits {
    pub max_states: usize,
    pub max_depth: u32,
}

impl Default for ExploreLimits {
    fn default() -> Self {
        ExploreLimits {
            max_states: 100_000,
            max_depth: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub graph: Graph,
    pub depth: u32,
    pub parent: Option<usize>,
    pub entering_edge: Option<usize>,
    pub children: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TreeEdge {
    pub parent: usize,
    pub child: usize,
    pub rule_index: usize,
    pub branch_index: usize,
    pub match_morphism: Morphism,
    pub probability: Rat,
    /// Clock guard instantiated to host clock names.
    pub guard: ClockConstraint,
    /// Host clock names reset on this step (time-point clocks are added by
    /// the PTA construction).
    pub resets: BTreeSet<String>,
    pub deleted: Vec<Element>,
    pub created: Vec<Element>,
}

/// Tree-shaped state space: no isomorphism collapsing, each node reached by
/// exactly one step sequence.
#[derive(Debug, Clone)]
pub struct StateSpaceTree {
    pub nodes: Vec<TreeNode>,
    pub edges: Vec<TreeEdge>,
}

impl StateSpaceTree {
    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].children.is_empty())
            .collect()
    }

    pub fn max_depth(&self) -> u32 {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Edge indices along the unique path from the root to `node`.
    pub fn path_to(&self, node: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut cur = node;
        while let Some(e) = self.nodes[cur].entering_edge {
            path.push(e);
            cur = self.edges[e].parent;
        }
        path.reverse();
        path
    }
}

/// Instantiates a rule's clock guard at a match (pattern clock variables to
/// host clock names).
pub fn instantiate_guard(rule: &PtgtRule, m: &Morphism) -> ClockConstraint {
    let resolve = |v: &str| -> String {
        match m.var_map.get(v) {
            Some(Binding::HostVar(h)) => h.clone(),
            _ => v.to_string(),
        }
    };
    ClockConstraint(
        rule.clock_guard
            .iter()
            .map(|a| ClockAtom {
                clock: resolve(&a.clock),
                minus: a.minus.as_ref().map(|x| resolve(x)),
                op: a.op,
                bound: a.bound,
            })
            .collect(),
    )
}

/// Breadth-first expansion of the tree-shaped state space. Deterministic:
/// children ordered by rule name, canonical match order, branch index.
pub fn explore_tree(s: &Ptgts, limits: ExploreLimits) -> Result<StateSpaceTree, GtsError> {
    let mut tree = StateSpaceTree {
        nodes: vec![TreeNode {
            graph: s.initial.clone(),
            depth: 0,
            parent: None,
            entering_edge: None,
            children: Vec::new(),
        }],
        edges: Vec::new(),
    };
    let mut queue: VecDeque<usize> = VecDeque::new();
    queue.push_back(0);
    while let Some(node) = queue.pop_front() {
        let depth = tree.nodes[node].depth;
        let steps = enabled_steps(&tree.nodes[node].graph, s);
        if !steps.is_empty() && depth >= limits.max_depth {
            return Err(GtsError::LimitExceeded {
                states: tree.nodes.len(),
                depth,
            });
        }
        for (ri, m) in steps {
            let rule = &s.rules[ri];
            let guard = instantiate_guard(rule, &m);
            for (bi, branch) in rule.branches.iter().enumerate() {
                let applied =
                    apply_gt_rule(&tree.nodes[node].graph, &s.type_graph, &rule.name, &branch.rule, &branch.resets, &m)?
                        .expect("dangling checked during enumeration");
                if tree.nodes.len() >= limits.max_states {
                    return Err(GtsError::LimitExceeded {
                        states: tree.nodes.len(),
                        depth: depth + 1,
                    });
                }
                let child = tree.nodes.len();
                tree.nodes.push(TreeNode {
                    graph: applied.result,
                    depth: depth + 1,
                    parent: Some(node),
                    entering_edge: Some(tree.edges.len()),
                    children: Vec::new(),
                });
                tree.nodes[node].children.push(child);
                tree.edges.push(TreeEdge {
                    parent: node,
                    child,
                    rule_index: ri,
                    branch_index: bi,
                    match_morphism: m.clone(),
                    probability: branch.probability.clone(),
                    guard: guard.clone(),
                    resets: applied.reset_clocks,
                    deleted: applied.deleted,
                    created: applied.created,
                });
                queue.push_back(child);
            }
        }
    }
    Ok(tree)
}

// ---------------------------------------------------------------------------
// Time-bound encoding (step 1)
// ---------------------------------------------------------------------------

/// Encodes a finite time bound into the PTGTS: a `Bound` node with a fresh
/// clock is added everywhere, an urgent top-priority rule deletes it exactly
/// at the bound, and invariants are suspended once it is gone. For an
/// unbounded analysis the system is returned unchanged.
///
/// Discrete behavior is thereby confined to the closed interval `[0, T]`:
/// the deletion rule does not preempt other rules at the boundary instant,
/// because a graph-level preemption would have to ignore clock guards and
/// would disable the whole system from the start.
pub fn encode_time_bound(s: &Ptgts, t: Option<i64>) -> Ptgts {
    let t = match t {
        None => return s.clone(),
        Some(t) => t,
    };
    let mut out = s.clone();
    out.type_graph.node_types.insert(
        BOUND_NODE_TYPE.to_string(),
        vec![crate::graph::AttrDecl {
            name: "x".into(),
            sort: Sort::Clock,
        }],
    );
    let bound_clock = "c.bound".to_string();
    let b = out.initial.add_node(BOUND_NODE_TYPE, "bound");
    out.initial
        .set_attr(Element::Node(b), "x", AttrSlot::Var(bound_clock));

    // The Bound node joins L, K, and R of every underlying GT rule as a
    // preserved context node.
    let add_bound = |g: &mut Graph| -> Element {
        let n = g.add_node(BOUND_NODE_TYPE, "bound");
        g.set_attr(Element::Node(n), "x", AttrSlot::Var("x.bound".into()));
        Element::Node(n)
    };
    for rule in &mut out.rules {
        add_bound(&mut rule.lhs);
        for branch in &mut rule.branches {
            branch.rule.lhs = rule.lhs.clone();
            add_bound(&mut branch.rule.rhs);
        }
    }

    // Urgent top-priority deletion rule with guard x = T.
    let max_priority = out.rules.iter().map(|r| r.priority).max().unwrap_or(0);
    let mut lhs = Graph::new();
    let n = lhs.add_node(BOUND_NODE_TYPE, "bound");
    lhs.set_attr(Element::Node(n), "x", AttrSlot::Var("x.bound".into()));
    let mut rhs = lhs.clone();
    rhs.remove_element(Element::Node(n));
    out.rules.push(PtgtRule {
        name: BOUND_RULE_NAME.to_string(),
        lhs: lhs.clone(),
        clock_guard: vec![ClockAtom {
            clock: "x.bound".into(),
            minus: None,
            op: CmpOp::Eq,
            bound: t,
        }],
        priority: max_priority + 1,
        branches: vec![PtgtBranch {
            name: "expire".into(),
            rule: GtRule {
                lhs,
                deleted: vec![Element::Node(n)],
                rhs,
                assignments: Vec::new(),
            },
            resets: BTreeSet::new(),
            probability: Rat::one(),
        }],
    });
    out.urgent.insert(BOUND_RULE_NAME.to_string());

    for inv in &mut out.invariants {
        inv.requires_node_type = Some(BOUND_NODE_TYPE.to_string());
    }
    out
}

// ---------------------------------------------------------------------------
// Invariants and atomic propositions
// ---------------------------------------------------------------------------

/// Evaluates a PTGT invariant on a graph: the conjunction over all matches
/// of the negated forbidden comparison, as a closed clock constraint over
/// host clock names. An unmatched pattern contributes nothing.
pub fn evaluate_invariant(inv: &Invariant, g: &Graph) -> ClockConstraint {
    if let Some(ty) = &inv.requires_node_type {
        if !g.nodes.values().any(|n| n.ty == *ty) {
            return ClockConstraint::trivial();
        }
    }
    let mut atoms = Vec::new();
    for m in find_monos(&inv.pattern, g, None) {
        let clock = match m.var_map.get(&inv.clock_var) {
            Some(Binding::HostVar(h)) => h.clone(),
            _ => continue,
        };
        atoms.push(ClockAtom {
            clock,
            minus: None,
            op: inv.op.negate(),
            bound: inv.bound,
        });
    }
    atoms.sort();
    atoms.dedup();
    ClockConstraint(atoms)
}

/// State labeling: satisfaction of the AP's graph condition by the graph
/// (clock-independent).
pub fn evaluate_ap(c: &GraphCondition, g: &Graph) -> bool {
    gc_check_host(g, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::AttrDecl;
    use crate::rational::rat;

    /// Type graph with senders, routers, and messages carrying a clock.
    fn tg() -> TypeGraph {
        let mut tg = TypeGraph::default();
        tg.node_types.insert(
            "Sender".into(),
            vec![AttrDecl {
                name: "num".into(),
                sort: Sort::Int,
            }],
        );
        tg.node_types.insert("Router".into(), vec![]);
        tg.node_types.insert(
            "Message".into(),
            vec![
                AttrDecl {
                    name: "id".into(),
                    sort: Sort::Int,
                },
                AttrDecl {
                    name: "c".into(),
                    sort: Sort::Clock,
                },
            ],
        );
        tg.edge_types.insert(
            "at".into(),
            crate::graph::EdgeType {
                source: "Message".into(),
                target: "Router".into(),
                attrs: vec![],
            },
        );
        tg.edge_types.insert(
            "next".into(),
            crate::graph::EdgeType {
                source: "Router".into(),
                target: "Router".into(),
                attrs: vec![],
            },
        );
        tg
    }

    /// Initial graph: sender (num=1), two routers, one message (id=1).
    fn initial() -> Graph {
        let mut g = Graph::new();
        let s = g.add_node("Sender", "S");
        g.set_attr(Element::Node(s), "num", AttrSlot::Value(AttrValue::Int(1)));
        let r1 = g.add_node("Router", "R1");
        let r2 = g.add_node("Router", "R2");
        g.add_edge("next", "e1", r1, r2);
        let m = g.add_node("Message", "M1");
        g.set_attr(Element::Node(m), "id", AttrSlot::Value(AttrValue::Int(1)));
        g.set_attr(Element::Node(m), "c", AttrSlot::Var("c1".into()));
        g
    }

    /// A send-like rule: guard num = id, creates an at-edge to the router,
    /// bumps num.
    fn send_rule() -> PtgtRule {
        let mut lhs = Graph::new();
        let s = lhs.add_node("Sender", "S");
        lhs.set_attr(Element::Node(s), "num", AttrSlot::Var("n".into()));
        let r = lhs.add_node("Router", "R");
        let m = lhs.add_node("Message", "M");
        lhs.set_attr(Element::Node(m), "id", AttrSlot::Var("i".into()));
        lhs.set_attr(Element::Node(m), "c", AttrSlot::Var("c".into()));
        lhs.ac = AttributeFormula::Cmp(CmpOp::Eq, Term::Var("n".into()), Term::Var("i".into()));
        let mut rhs = lhs.clone();
        rhs.ac = AttributeFormula::True;
        rhs.add_edge("at", "e", m, r);
        PtgtRule {
            name: "send".into(),
            lhs: lhs.clone(),
            clock_guard: vec![],
            priority: 0,
            branches: vec![PtgtBranch {
                name: "ok".into(),
                rule: GtRule {
                    lhs,
                    deleted: vec![],
                    rhs,
                    assignments: vec![(
                        "n".into(),
                        Term::Add(
                            Box::new(Term::Var("n".into())),
                            Box::new(Term::Const(AttrValue::Int(1))),
                        ),
                    )],
                },
                resets: ["c".to_string()].into(),
                probability: rat(1, 1),
            }],
        }
    }

    /// Moves the message between routers; one success branch deleting and
    /// recreating the at-edge, one failure branch deleting it outright.
    fn move_rule() -> PtgtRule {
        let mut lhs = Graph::new();
        let m = lhs.add_node("Message", "M");
        lhs.set_attr(Element::Node(m), "id", AttrSlot::Var("i".into()));
        lhs.set_attr(Element::Node(m), "c", AttrSlot::Var("c".into()));
        let r1 = lhs.add_node("Router", "R1");
        let r2 = lhs.add_node("Router", "R2");
        let at = lhs.add_edge("at", "e1", m, r1);
        lhs.add_edge("next", "e2", r1, r2);
        let mut rhs_ok = lhs.clone();
        rhs_ok.remove_element(Element::Edge(at));
        rhs_ok.add_edge("at", "e3", m, r2);
        let mut rhs_fail = lhs.clone();
        rhs_fail.remove_element(Element::Edge(at));
        PtgtRule {
            name: "move".into(),
            lhs: lhs.clone(),
            clock_guard: vec![ClockAtom::ge("c", 2)],
            priority: 0,
            branches: vec![
                PtgtBranch {
                    name: "ok".into(),
                    rule: GtRule {
                        lhs: lhs.clone(),
                        deleted: vec![Element::Edge(at)],
                        rhs: rhs_ok,
                        assignments: vec![],
                    },
                    resets: ["c".to_string()].into(),
                    probability: rat(4, 5),
                },
                PtgtBranch {
                    name: "fail".into(),
                    rule: GtRule {
                        lhs,
                        deleted: vec![Element::Edge(at)],
                        rhs: rhs_fail,
                        assignments: vec![],
                    },
                    resets: BTreeSet::new(),
                    probability: rat(1, 5),
                },
            ],
        }
    }

    fn system() -> Ptgts {
        Ptgts {
            type_graph: tg(),
            initial: initial(),
            rules: vec![send_rule(), move_rule()],
            invariants: vec![],
            aps: vec![],
            urgent: BTreeSet::new(),
        }
    }

    #[test]
    fn dpo_size_accounting() {
        let s = system();
        let rule = send_rule();
        let ms = find_monos(&rule.lhs, &s.initial, None);
        assert_eq!(ms.len(), 2); // two routers to attach to
        let applied = apply_gt_rule(
            &s.initial,
            &s.type_graph,
            "send",
            &rule.branches[0].rule,
            &rule.branches[0].resets,
            &ms[0],
        )
        .unwrap()
        .unwrap();
        // |H| = |G| - |L\K| + |R\K| = |G| - 0 + 1
        assert_eq!(
            applied.result.element_count(),
            s.initial.element_count() + 1
        );
        // Attribute effect: num bumped to 2.
        let sender = applied
            .result
            .nodes
            .iter()
            .find(|(_, d)| d.ty == "Sender")
            .map(|(&id, _)| id)
            .unwrap();
        assert_eq!(
            applied.result.attr(Element::Node(sender), "num"),
            Some(&AttrSlot::Value(AttrValue::Int(2)))
        );
        // The message clock is reset.
        assert!(applied.reset_clocks.contains("c1"));
    }

    #[test]
    fn identity_rule_keeps_graph() {
        let s = system();
        let mut lhs = Graph::new();
        lhs.add_node("Router", "R");
        let rule = GtRule {
            lhs: lhs.clone(),
            deleted: vec![],
            rhs: lhs.clone(),
            assignments: vec![],
        };
        let ms = find_monos(&lhs, &s.initial, None);
        let applied = apply_gt_rule(&s.initial, &s.type_graph, "id", &rule, &BTreeSet::new(), &ms[0])
            .unwrap()
            .unwrap();
        assert_eq!(applied.result, s.initial);
        assert!(applied.deleted.is_empty() && applied.created.is_empty());
    }

    #[test]
    fn dangling_condition_blocks_node_deletion() {
        let s = system();
        // Deleting a router that still has a next-edge dangles.
        let mut lhs = Graph::new();
        let r = lhs.add_node("Router", "R");
        let rule = GtRule {
            lhs: lhs.clone(),
            deleted: vec![Element::Node(r)],
            rhs: {
                let mut g = lhs.clone();
                g.remove_element(Element::Node(r));
                g
            },
            assignments: vec![],
        };
        let ms = find_monos(&lhs, &s.initial, None);
        for m in &ms {
            let applied =
                apply_gt_rule(&s.initial, &s.type_graph, "del", &rule, &BTreeSet::new(), m)
                    .unwrap();
            assert!(applied.is_none(), "dangling deletion must be inapplicable");
        }
    }

    #[test]
    fn priority_filtering_discards_lower_priorities() {
        let mut s = system();
        s.rules[1].priority = 1; // move outranks send
        // Put the message at router R1 first.
        let tree = explore_tree(&s, ExploreLimits::default()).unwrap();
        // Root: only send is applicable (no at-edge yet), one match with n=i.
        let root_children = &tree.nodes[0].children;
        assert_eq!(root_children.len(), 2); // two send matches (both routers)
        // After sending to R1 the move rule (priority 1) must preempt send.
        let child = root_children[0];
        let grandchildren = &tree.nodes[child].children;
        for &gc in grandchildren {
            let e = tree.nodes[gc].entering_edge.unwrap();
            assert_eq!(s.rules[tree.edges[e].rule_index].name, "move");
        }
    }

    #[test]
    fn exploration_is_deterministic_and_finite() {
        let s = system();
        let t1 = explore_tree(&s, ExploreLimits::default()).unwrap();
        let t2 = explore_tree(&s, ExploreLimits::default()).unwrap();
        assert_eq!(t1.nodes.len(), t2.nodes.len());
        for (a, b) in t1.nodes.iter().zip(&t2.nodes) {
            assert_eq!(a.graph, b.graph);
            assert_eq!(a.parent, b.parent);
        }
        for (a, b) in t1.edges.iter().zip(&t2.edges) {
            assert_eq!(a.rule_index, b.rule_index);
            assert_eq!(a.branch_index, b.branch_index);
            assert_eq!(a.resets, b.resets);
        }
    }

    #[test]
    fn unbounded_growth_hits_limits() {
        let mut s = system();
        // A rule that unconditionally adds a router node.
        let lhs = Graph::new();
        let mut rhs = Graph::new();
        rhs.add_node("Router", "new");
        s.rules = vec![PtgtRule {
            name: "grow".into(),
            lhs: lhs.clone(),
            clock_guard: vec![],
            priority: 0,
            branches: vec![PtgtBranch {
                name: "ok".into(),
                rule: GtRule {
                    lhs,
                    deleted: vec![],
                    rhs,
                    assignments: vec![],
                },
                resets: BTreeSet::new(),
                probability: rat(1, 1),
            }],
        }];
        match explore_tree(
            &s,
            ExploreLimits {
                max_states: 10,
                max_depth: 64,
            },
        ) {
            Err(GtsError::LimitExceeded { .. }) => {}
            other => panic!("expected limit error, got {other:?}"),
        }
    }

    #[test]
    fn empty_rule_set_yields_single_node() {
        let mut s = system();
        s.rules.clear();
        let tree = explore_tree(&s, ExploreLimits::default()).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert!(enabled_steps(&s.initial, &s).is_empty());
    }

    #[test]
    fn invariant_evaluation_per_match() {
        let s = system();
        // Forbid a message sitting at a router for more than 5 units.
        let mut pattern = Graph::new();
        let m = pattern.add_node("Message", "M");
        pattern.set_attr(Element::Node(m), "id", AttrSlot::Var("i".into()));
        pattern.set_attr(Element::Node(m), "c", AttrSlot::Var("c".into()));
        let r = pattern.add_node("Router", "R");
        pattern.add_edge("at", "e", m, r);
        let inv = Invariant::from_condition(
            "deadline",
            pattern,
            &AttributeFormula::Cmp(
                CmpOp::Gt,
                Term::Var("c".into()),
                Term::Const(AttrValue::Int(5)),
            ),
            &s.type_graph,
        )
        .unwrap();
        // No at-edge: trivial constraint.
        assert!(evaluate_invariant(&inv, &s.initial).is_trivial());
        // One message at a router: c1 <= 5.
        let rule = send_rule();
        let ms = find_monos(&rule.lhs, &s.initial, None);
        let applied = apply_gt_rule(
            &s.initial,
            &s.type_graph,
            "send",
            &rule.branches[0].rule,
            &rule.branches[0].resets,
            &ms[0],
        )
        .unwrap()
        .unwrap();
        let cc = evaluate_invariant(&inv, &applied.result);
        assert_eq!(
            cc.0,
            vec![ClockAtom {
                clock: "c1".into(),
                minus: None,
                op: CmpOp::Le,
                bound: 5
            }]
        );
    }

    #[test]
    fn invariant_shape_validation() {
        let s = system();
        let mut pattern = Graph::new();
        let m = pattern.add_node("Message", "M");
        pattern.set_attr(Element::Node(m), "id", AttrSlot::Var("i".into()));
        pattern.set_attr(Element::Node(m), "c", AttrSlot::Var("c".into()));
        // Non-strict comparison: negation would be strict, rejected.
        let err = Invariant::from_condition(
            "bad",
            pattern.clone(),
            &AttributeFormula::Cmp(
                CmpOp::Ge,
                Term::Var("c".into()),
                Term::Const(AttrValue::Int(5)),
            ),
            &s.type_graph,
        )
        .unwrap_err();
        assert!(matches!(err, GtsError::UnsupportedInvariant { .. }));
        // Non-clock variable rejected.
        let err = Invariant::from_condition(
            "bad2",
            pattern,
            &AttributeFormula::Cmp(
                CmpOp::Gt,
                Term::Var("i".into()),
                Term::Const(AttrValue::Int(5)),
            ),
            &s.type_graph,
        )
        .unwrap_err();
        assert!(matches!(err, GtsError::UnsupportedInvariant { .. }));
    }

    #[test]
    fn time_bound_encoding_shapes() {
        let s = system();
        // Unbounded: unchanged.
        let same = encode_time_bound(&s, None);
        assert_eq!(same.rules.len(), s.rules.len());
        // Bounded: Bound node everywhere, urgent top-priority deletion rule.
        let bounded = encode_time_bound(&s, Some(10));
        assert!(bounded
            .initial
            .nodes
            .values()
            .any(|n| n.ty == BOUND_NODE_TYPE));
        let bound_rule = bounded
            .rules
            .iter()
            .find(|r| r.name == BOUND_RULE_NAME)
            .unwrap();
        assert!(bounded.urgent.contains(BOUND_RULE_NAME));
        assert!(bound_rule.priority > s.rules.iter().map(|r| r.priority).max().unwrap());
        for rule in &bounded.rules {
            if rule.name == BOUND_RULE_NAME {
                continue;
            }
            assert!(rule.lhs.nodes.values().any(|n| n.ty == BOUND_NODE_TYPE));
            for b in &rule.branches {
                assert!(b.rule.rhs.nodes.values().any(|n| n.ty == BOUND_NODE_TYPE));
            }
        }
        // Exploration terminates: after the bound fires nothing matches.
        let tree = explore_tree(&bounded, ExploreLimits::default()).unwrap();
        assert!(tree.nodes.len() > 1);
        for leaf in tree.leaves() {
            let g = &tree.nodes[leaf].graph;
            // Leaves either still have work pending or dropped the bound.
            if !g.nodes.values().any(|n| n.ty == BOUND_NODE_TYPE) {
                assert!(enabled_steps(g, &bounded).is_empty());
            }
        }
    }
}
