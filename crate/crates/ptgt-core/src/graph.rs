//! Typed attributed graphs over a fixed type graph, injective morphisms,
//! attribute formulas, and subgraph matching.
//!
//! Graphs carry attribute slots that are either ground values (state graphs)
//! or local variables (patterns, rule sides). Attributes of sort `clock`
//! always hold a variable: the name of the clock whose value lives in the
//! clock valuation, never in the graph itself.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::rational::Rat;

/// Attribute sorts supported by the type graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Sort {
    Real,
    Int,
    Clock,
    Str,
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::Real => write!(f, "real"),
            Sort::Int => write!(f, "int"),
            Sort::Clock => write!(f, "clock"),
            Sort::Str => write!(f, "string"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttrDecl {
    pub name: String,
    pub sort: Sort,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeType {
    pub source: String,
    pub target: String,
    pub attrs: Vec<AttrDecl>,
}

/// The fixed type graph: node types, edge types with endpoints, and the
/// attribute declarations of each type.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TypeGraph {
    pub node_types: BTreeMap<String, Vec<AttrDecl>>,
    pub edge_types: BTreeMap<String, EdgeType>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TypeGraphError {
    #[error("edge type `{edge}` references undeclared node type `{node}`")]
    UnknownEndpoint { edge: String, node: String },
    #[error("duplicate attribute `{attr}` on type `{ty}`")]
    DuplicateAttr { ty: String, attr: String },
}

impl TypeGraph {
    pub fn validate(&self) -> Result<(), TypeGraphError> {
        for (ty, attrs) in &self.node_types {
            let mut seen = BTreeSet::new();
            for a in attrs {
                if !seen.insert(&a.name) {
                    return Err(TypeGraphError::DuplicateAttr {
                        ty: ty.clone(),
                        attr: a.name.clone(),
                    });
                }
            }
        }
        for (name, et) in &self.edge_types {
            for node in [&et.source, &et.target] {
                if !self.node_types.contains_key(node) {
                    return Err(TypeGraphError::UnknownEndpoint {
                        edge: name.clone(),
                        node: node.clone(),
                    });
                }
            }
            let mut seen = BTreeSet::new();
            for a in &et.attrs {
                if !seen.insert(&a.name) {
                    return Err(TypeGraphError::DuplicateAttr {
                        ty: name.clone(),
                        attr: a.name.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn attrs_of_node(&self, ty: &str) -> &[AttrDecl] {
        self.node_types.get(ty).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn attrs_of_edge(&self, ty: &str) -> &[AttrDecl] {
        self.edge_types
            .get(ty)
            .map(|e| e.attrs.as_slice())
            .unwrap_or(&[])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub u32);

/// A node or edge identity. Nodes order before edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Element {
    Node(NodeId),
    Edge(EdgeId),
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Element::Node(NodeId(i)) => write!(f, "n{i}"),
            Element::Edge(EdgeId(i)) => write!(f, "e{i}"),
        }
    }
}

/// Ground attribute values.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum AttrValue {
    Int(i64),
    Real(Rat),
    Str(String),
}

impl AttrValue {
    pub fn sort(&self) -> Sort {
        match self {
            AttrValue::Int(_) => Sort::Int,
            AttrValue::Real(_) => Sort::Real,
            AttrValue::Str(_) => Sort::Str,
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Int(i) => write!(f, "{i}"),
            AttrValue::Real(r) => write!(f, "{r}"),
            AttrValue::Str(s) => write!(f, "\"{s}\""),
        }
    }
}

/// An attribute slot: a ground value or a local variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum AttrSlot {
    Value(AttrValue),
    Var(String),
}

impl fmt::Display for AttrSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrSlot::Value(v) => write!(f, "{v}"),
            AttrSlot::Var(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeData {
    pub ty: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeData {
    pub ty: String,
    pub name: String,
    pub source: NodeId,
    pub target: NodeId,
}

/// A typed attributed graph. Element ids are opaque totally-ordered tokens
/// assigned by creation order; `next_node`/`next_edge` keep id allocation
/// deterministic across DPO steps.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Graph {
    pub nodes: BTreeMap<NodeId, NodeData>,
    pub edges: BTreeMap<EdgeId, EdgeData>,
    pub attrs: BTreeMap<(Element, String), AttrSlot>,
    pub ac: AttributeFormula,
    next_node: u32,
    next_edge: u32,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn add_node(&mut self, ty: &str, name: &str) -> NodeId {
        let id = NodeId(self.next_node);
        self.next_node += 1;
        self.nodes.insert(
            id,
            NodeData {
                ty: ty.to_string(),
                name: name.to_string(),
            },
        );
        id
    }

    pub fn add_edge(&mut self, ty: &str, name: &str, source: NodeId, target: NodeId) -> EdgeId {
        let id = EdgeId(self.next_edge);
        self.next_edge += 1;
        self.edges.insert(
            id,
            EdgeData {
                ty: ty.to_string(),
                name: name.to_string(),
                source,
                target,
            },
        );
        id
    }

    /// Inserts a node with a caller-chosen id, bumping the allocator past it.
    pub fn insert_node(&mut self, id: NodeId, data: NodeData) {
        self.next_node = self.next_node.max(id.0 + 1);
        self.nodes.insert(id, data);
    }

    pub fn insert_edge(&mut self, id: EdgeId, data: EdgeData) {
        self.next_edge = self.next_edge.max(id.0 + 1);
        self.edges.insert(id, data);
    }

    pub fn set_attr(&mut self, el: Element, attr: &str, slot: AttrSlot) {
        self.attrs.insert((el, attr.to_string()), slot);
    }

    pub fn attr(&self, el: Element, attr: &str) -> Option<&AttrSlot> {
        self.attrs.get(&(el, attr.to_string()))
    }

    pub fn elements(&self) -> impl Iterator<Item = Element> + '_ {
        self.nodes
            .keys()
            .map(|&n| Element::Node(n))
            .chain(self.edges.keys().map(|&e| Element::Edge(e)))
    }

    pub fn element_count(&self) -> usize {
        self.nodes.len() + self.edges.len()
    }

    pub fn type_of(&self, el: Element) -> Option<&str> {
        match el {
            Element::Node(n) => self.nodes.get(&n).map(|d| d.ty.as_str()),
            Element::Edge(e) => self.edges.get(&e).map(|d| d.ty.as_str()),
        }
    }

    pub fn name_of(&self, el: Element) -> Option<&str> {
        match el {
            Element::Node(n) => self.nodes.get(&n).map(|d| d.name.as_str()),
            Element::Edge(e) => self.edges.get(&e).map(|d| d.name.as_str()),
        }
    }

    /// Clock variable names appearing in clock-sorted attribute slots.
    pub fn clock_vars(&self, tg: &TypeGraph) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for ((el, attr), slot) in &self.attrs {
            let decls = match el {
                Element::Node(n) => self
                    .nodes
                    .get(n)
                    .map(|d| tg.attrs_of_node(&d.ty))
                    .unwrap_or(&[]),
                Element::Edge(e) => self
                    .edges
                    .get(e)
                    .map(|d| tg.attrs_of_edge(&d.ty))
                    .unwrap_or(&[]),
            };
            if decls.iter().any(|d| d.name == *attr && d.sort == Sort::Clock) {
                if let AttrSlot::Var(v) = slot {
                    out.insert(v.clone());
                }
            }
        }
        out
    }

    /// Removes an element together with its attribute slots. Removing a node
    /// does not cascade to incident edges; callers check the dangling
    /// condition first.
    pub fn remove_element(&mut self, el: Element) {
        match el {
            Element::Node(n) => {
                self.nodes.remove(&n);
            }
            Element::Edge(e) => {
                self.edges.remove(&e);
            }
        }
        self.attrs.retain(|(owner, _), _| *owner != el);
    }

    pub fn has_element(&self, el: Element) -> bool {
        match el {
            Element::Node(n) => self.nodes.contains_key(&n),
            Element::Edge(e) => self.edges.contains_key(&e),
        }
    }
}

/// Violations reported by [`validate_graph`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub element: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.element, self.rule)
    }
}

/// Checks a graph against a type graph: declared types, endpoint typing,
/// and exactly one slot per declared attribute.
pub fn validate_graph(g: &Graph, tg: &TypeGraph) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    for (id, n) in &g.nodes {
        if !tg.node_types.contains_key(&n.ty) {
            out.push(Violation {
                element: n.name.clone(),
                rule: format!("unknown node type `{}`", n.ty),
            });
            continue;
        }
        for decl in tg.attrs_of_node(&n.ty) {
            if g.attr(Element::Node(*id), &decl.name).is_none() {
                out.push(Violation {
                    element: n.name.clone(),
                    rule: format!("missing attribute `{}`", decl.name),
                });
            }
        }
    }
    for (id, e) in &g.edges {
        let et = match tg.edge_types.get(&e.ty) {
            Some(et) => et,
            None => {
                out.push(Violation {
                    element: e.name.clone(),
                    rule: format!("unknown edge type `{}`", e.ty),
                });
                continue;
            }
        };
        match (g.nodes.get(&e.source), g.nodes.get(&e.target)) {
            (Some(s), Some(t)) => {
                if s.ty != et.source || t.ty != et.target {
                    out.push(Violation {
                        element: e.name.clone(),
                        rule: "edge type endpoint mismatch".to_string(),
                    });
                }
            }
            _ => out.push(Violation {
                element: e.name.clone(),
                rule: "dangling edge endpoint".to_string(),
            }),
        }
        for decl in tg.attrs_of_edge(&e.ty) {
            if g.attr(Element::Edge(*id), &decl.name).is_none() {
                out.push(Violation {
                    element: e.name.clone(),
                    rule: format!("missing attribute `{}`", decl.name),
                });
            }
        }
    }
    // Attribute slots must belong to declared attributes of existing elements.
    for (el, attr) in g.attrs.keys() {
        let ok = match el {
            Element::Node(n) => g
                .nodes
                .get(n)
                .map(|d| tg.attrs_of_node(&d.ty).iter().any(|a| a.name == *attr))
                .unwrap_or(false),
            Element::Edge(e) => g
                .edges
                .get(e)
                .map(|d| tg.attrs_of_edge(&d.ty).iter().any(|a| a.name == *attr))
                .unwrap_or(false),
        };
        if !ok {
            out.push(Violation {
                element: el.to_string(),
                rule: format!("undeclared attribute `{attr}`"),
            });
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

// ---------------------------------------------------------------------------
// Attribute formulas
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl CmpOp {
    pub fn holds<T: PartialOrd>(self, a: &T, b: &T) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Eq => a == b,
            CmpOp::Ge => a >= b,
            CmpOp::Gt => a > b,
        }
    }

    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Ge => CmpOp::Lt,
            CmpOp::Gt => CmpOp::Le,
            // Negated equality is handled by the callers (a<b or a>b).
            CmpOp::Eq => CmpOp::Eq,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmpOp::Lt => write!(f, "<"),
            CmpOp::Le => write!(f, "<="),
            CmpOp::Eq => write!(f, "="),
            CmpOp::Ge => write!(f, ">="),
            CmpOp::Gt => write!(f, ">"),
        }
    }
}

/// First-order terms over attribute variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Const(AttrValue),
    Var(String),
    Add(Box<Term>, Box<Term>),
    Sub(Box<Term>, Box<Term>),
    /// Scalar multiple `q * t`.
    Scale(Rat, Box<Term>),
}

impl Term {
    pub fn vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Term::Const(_) => {}
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Add(a, b) | Term::Sub(a, b) => {
                a.vars(out);
                b.vars(out);
            }
            Term::Scale(_, t) => t.vars(out),
        }
    }

    /// Evaluates a ground term to a value. Numeric terms evaluate to `Real`;
    /// integers are widened.
    pub fn eval(&self, env: &BTreeMap<String, AttrValue>) -> Result<AttrValue, EvalError> {
        match self {
            Term::Const(v) => Ok(v.clone()),
            Term::Var(v) => env
                .get(v)
                .cloned()
                .ok_or_else(|| EvalError::UnboundVar(v.clone())),
            Term::Add(a, b) => numeric(a.eval(env)?, b.eval(env)?, |x, y| x + y),
            Term::Sub(a, b) => numeric(a.eval(env)?, b.eval(env)?, |x, y| x - y),
            Term::Scale(q, t) => match t.eval(env)? {
                AttrValue::Int(i) => Ok(real_or_int(q * Rat::from_integer(i.into()))),
                AttrValue::Real(r) => Ok(real_or_int(q * r)),
                AttrValue::Str(_) => Err(EvalError::SortMismatch),
            },
        }
    }
}

fn real_or_int(r: Rat) -> AttrValue {
    if r.denom() == &num::BigInt::from(1) {
        if let Some(i) = crate::rational::to_i64(&r) {
            return AttrValue::Int(i);
        }
    }
    AttrValue::Real(r)
}

fn numeric(
    a: AttrValue,
    b: AttrValue,
    op: impl Fn(Rat, Rat) -> Rat,
) -> Result<AttrValue, EvalError> {
    let ra = match a {
        AttrValue::Int(i) => Rat::from_integer(i.into()),
        AttrValue::Real(r) => r,
        AttrValue::Str(_) => return Err(EvalError::SortMismatch),
    };
    let rb = match b {
        AttrValue::Int(i) => Rat::from_integer(i.into()),
        AttrValue::Real(r) => r,
        AttrValue::Str(_) => return Err(EvalError::SortMismatch),
    };
    Ok(real_or_int(op(ra, rb)))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVar(String),
    #[error("sort mismatch in attribute term")]
    SortMismatch,
    #[error("quantifiers are not evaluable on ground graphs")]
    Quantifier,
}

/// Quantifier-free evaluation is all state graphs ever need; the quantified
/// constructors exist for symbolic ACs handled by the solver module.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum AttributeFormula {
    #[default]
    True,
    False,
    Cmp(CmpOp, Term, Term),
    And(Vec<AttributeFormula>),
    Or(Vec<AttributeFormula>),
    Not(Box<AttributeFormula>),
    Exists(Vec<(String, Sort)>, Box<AttributeFormula>),
    Forall(Vec<(String, Sort)>, Box<AttributeFormula>),
}

impl AttributeFormula {
    pub fn and(parts: Vec<AttributeFormula>) -> AttributeFormula {
        let mut flat = Vec::new();
        for p in parts {
            match p {
                AttributeFormula::True => {}
                AttributeFormula::And(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => AttributeFormula::True,
            1 => flat.pop().unwrap(),
            _ => AttributeFormula::And(flat),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            AttributeFormula::True | AttributeFormula::False => {}
            AttributeFormula::Cmp(_, a, b) => {
                a.vars(out);
                b.vars(out);
            }
            AttributeFormula::And(ps) | AttributeFormula::Or(ps) => {
                for p in ps {
                    p.collect_vars(out);
                }
            }
            AttributeFormula::Not(p) => p.collect_vars(out),
            AttributeFormula::Exists(vs, p) | AttributeFormula::Forall(vs, p) => {
                let mut inner = BTreeSet::new();
                p.collect_vars(&mut inner);
                for (v, _) in vs {
                    inner.remove(v);
                }
                out.extend(inner);
            }
        }
    }

    pub fn eval(&self, env: &BTreeMap<String, AttrValue>) -> Result<bool, EvalError> {
        match self {
            AttributeFormula::True => Ok(true),
            AttributeFormula::False => Ok(false),
            AttributeFormula::Cmp(op, a, b) => {
                let va = a.eval(env)?;
                let vb = b.eval(env)?;
                match (va, vb) {
                    (AttrValue::Str(x), AttrValue::Str(y)) => Ok(op.holds(&x, &y)),
                    (AttrValue::Str(_), _) | (_, AttrValue::Str(_)) => {
                        Err(EvalError::SortMismatch)
                    }
                    (x, y) => {
                        let rx = as_rat(&x);
                        let ry = as_rat(&y);
                        Ok(op.holds(&rx, &ry))
                    }
                }
            }
            AttributeFormula::And(ps) => {
                for p in ps {
                    if !p.eval(env)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            AttributeFormula::Or(ps) => {
                for p in ps {
                    if p.eval(env)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            AttributeFormula::Not(p) => Ok(!p.eval(env)?),
            AttributeFormula::Exists(..) | AttributeFormula::Forall(..) => {
                Err(EvalError::Quantifier)
            }
        }
    }
}

fn as_rat(v: &AttrValue) -> Rat {
    match v {
        AttrValue::Int(i) => Rat::from_integer((*i).into()),
        AttrValue::Real(r) => r.clone(),
        AttrValue::Str(_) => unreachable!("callers reject strings"),
    }
}

// ---------------------------------------------------------------------------
// Morphisms and matching
// ---------------------------------------------------------------------------

/// What a pattern variable is bound to in the host.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Binding {
    Value(AttrValue),
    /// Bound to a host-side variable (e.g. a clock name).
    HostVar(String),
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Binding::Value(v) => write!(f, "{v}"),
            Binding::HostVar(v) => write!(f, "{v}"),
        }
    }
}

/// An injective, type- and incidence-preserving mapping between graphs,
/// together with the induced variable binding.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Morphism {
    pub node_map: BTreeMap<NodeId, NodeId>,
    pub edge_map: BTreeMap<EdgeId, EdgeId>,
    pub var_map: BTreeMap<String, Binding>,
}

impl Morphism {
    pub fn identity(g: &Graph) -> Morphism {
        let mut m = Morphism::default();
        for &n in g.nodes.keys() {
            m.node_map.insert(n, n);
        }
        for &e in g.edges.keys() {
            m.edge_map.insert(e, e);
        }
        for slot in g.attrs.values() {
            if let AttrSlot::Var(v) = slot {
                m.var_map.insert(v.clone(), Binding::HostVar(v.clone()));
            }
        }
        m
    }

    pub fn map_element(&self, el: Element) -> Option<Element> {
        match el {
            Element::Node(n) => self.node_map.get(&n).map(|&x| Element::Node(x)),
            Element::Edge(e) => self.edge_map.get(&e).map(|&x| Element::Edge(x)),
        }
    }

    /// Composition `other ∘ self` (apply `self` first).
    pub fn then(&self, other: &Morphism) -> Morphism {
        let mut out = Morphism::default();
        for (&a, &b) in &self.node_map {
            if let Some(&c) = other.node_map.get(&b) {
                out.node_map.insert(a, c);
            }
        }
        for (&a, &b) in &self.edge_map {
            if let Some(&c) = other.edge_map.get(&b) {
                out.edge_map.insert(a, c);
            }
        }
        for (v, b) in &self.var_map {
            let chased = match b {
                Binding::Value(val) => Binding::Value(val.clone()),
                Binding::HostVar(h) => other
                    .var_map
                    .get(h)
                    .cloned()
                    .unwrap_or_else(|| Binding::HostVar(h.clone())),
            };
            out.var_map.insert(v.clone(), chased);
        }
        out
    }

    pub fn is_injective(&self) -> bool {
        let nodes: BTreeSet<_> = self.node_map.values().collect();
        let edges: BTreeSet<_> = self.edge_map.values().collect();
        nodes.len() == self.node_map.len() && edges.len() == self.edge_map.len()
    }

    /// The canonical sort key: image ids in pattern-element order.
    pub fn image_key(&self) -> Vec<u32> {
        let mut key = Vec::with_capacity(self.node_map.len() + self.edge_map.len());
        key.extend(self.node_map.values().map(|n| n.0));
        key.extend(self.edge_map.values().map(|e| e.0));
        key
    }
}

/// Finds every injective, type-preserving extension of `partial` mapping all
/// of `pattern` into `host`, in a deterministic canonical order (sorted by
/// mapped host ids).
///
/// Attribute feasibility: variable bindings must be consistent, ground-value
/// slots must agree exactly, and the pattern AC is evaluated whenever the
/// binding makes it ground. Host-variable bindings (clocks) stay symbolic.
pub fn find_monos(pattern: &Graph, host: &Graph, partial: Option<&Morphism>) -> Vec<Morphism> {
    let mut state = match partial {
        Some(m) => m.clone(),
        None => Morphism::default(),
    };
    // Order: already-mapped elements first (anchors), then nodes by
    // connectivity to anchors, edges once both endpoints are placed.
    let mut order: Vec<Element> = Vec::new();
    let mut placed: BTreeSet<Element> = BTreeSet::new();
    for &n in pattern.nodes.keys() {
        if state.node_map.contains_key(&n) {
            placed.insert(Element::Node(n));
        }
    }
    for &e in pattern.edges.keys() {
        if state.edge_map.contains_key(&e) {
            placed.insert(Element::Edge(e));
        }
    }
    let mut pending_nodes: Vec<NodeId> = pattern
        .nodes
        .keys()
        .copied()
        .filter(|n| !placed.contains(&Element::Node(*n)))
        .collect();
    let mut pending_edges: BTreeSet<EdgeId> = pattern
        .edges
        .keys()
        .copied()
        .filter(|e| !placed.contains(&Element::Edge(*e)))
        .collect();
    // Greedily pick the pending node most connected to placed elements; ties
    // by id for determinism. Flush edges as soon as their endpoints exist.
    let flush_edges = |placed: &BTreeSet<Element>,
                       pending_edges: &mut BTreeSet<EdgeId>,
                       order: &mut Vec<Element>| {
        loop {
            let ready: Vec<EdgeId> = pending_edges
                .iter()
                .copied()
                .filter(|e| {
                    let d = &pattern.edges[e];
                    placed.contains(&Element::Node(d.source))
                        && placed.contains(&Element::Node(d.target))
                })
                .collect();
            if ready.is_empty() {
                break;
            }
            for e in ready {
                pending_edges.remove(&e);
                order.push(Element::Edge(e));
            }
        }
    };
    {
        let mut placed_mut = placed.clone();
        flush_edges(&placed_mut, &mut pending_edges, &mut order);
        while !pending_nodes.is_empty() {
            let score = |n: NodeId| {
                pattern
                    .edges
                    .values()
                    .filter(|d| {
                        (d.source == n && placed_mut.contains(&Element::Node(d.target)))
                            || (d.target == n && placed_mut.contains(&Element::Node(d.source)))
                    })
                    .count()
            };
            let (idx, _) = pending_nodes
                .iter()
                .enumerate()
                .max_by_key(|(i, &n)| (score(n), std::cmp::Reverse(*i)))
                .unwrap();
            let n = pending_nodes.remove(idx);
            placed_mut.insert(Element::Node(n));
            order.push(Element::Node(n));
            flush_edges(&placed_mut, &mut pending_edges, &mut order);
        }
    }

    let mut results = Vec::new();
    search(pattern, host, &order, 0, &mut state, &mut results);
    results.sort_by_key(|m| m.image_key());
    results
}

fn search(
    pattern: &Graph,
    host: &Graph,
    order: &[Element],
    depth: usize,
    state: &mut Morphism,
    results: &mut Vec<Morphism>,
) {
    if depth == order.len() {
        if ac_feasible(pattern, state) {
            results.push(state.clone());
        }
        return;
    }
    match order[depth] {
        Element::Node(pn) => {
            let pdata = &pattern.nodes[&pn];
            let used: BTreeSet<NodeId> = state.node_map.values().copied().collect();
            for (&hn, hdata) in &host.nodes {
                if hdata.ty != pdata.ty || used.contains(&hn) {
                    continue;
                }
                // Degree pruning: host must offer at least as many incident
                // edges per type as the pattern demands.
                if !degree_ok(pattern, host, pn, hn) {
                    continue;
                }
                let saved_vars = state.var_map.clone();
                state.node_map.insert(pn, hn);
                if bind_attrs(pattern, host, Element::Node(pn), Element::Node(hn), state) {
                    search(pattern, host, order, depth + 1, state, results);
                }
                state.node_map.remove(&pn);
                state.var_map = saved_vars;
            }
        }
        Element::Edge(pe) => {
            let pdata = &pattern.edges[&pe];
            let src = state.node_map[&pdata.source];
            let tgt = state.node_map[&pdata.target];
            let used: BTreeSet<EdgeId> = state.edge_map.values().copied().collect();
            for (&he, hdata) in &host.edges {
                if hdata.ty != pdata.ty
                    || hdata.source != src
                    || hdata.target != tgt
                    || used.contains(&he)
                {
                    continue;
                }
                let saved_vars = state.var_map.clone();
                state.edge_map.insert(pe, he);
                if bind_attrs(pattern, host, Element::Edge(pe), Element::Edge(he), state) {
                    search(pattern, host, order, depth + 1, state, results);
                }
                state.edge_map.remove(&pe);
                state.var_map = saved_vars;
            }
        }
    }
}

fn degree_ok(pattern: &Graph, host: &Graph, pn: NodeId, hn: NodeId) -> bool {
    let mut need: BTreeMap<(&str, bool), usize> = BTreeMap::new();
    for d in pattern.edges.values() {
        if d.source == pn {
            *need.entry((d.ty.as_str(), true)).or_default() += 1;
        }
        if d.target == pn {
            *need.entry((d.ty.as_str(), false)).or_default() += 1;
        }
    }
    for ((ty, outgoing), n) in need {
        let have = host
            .edges
            .values()
            .filter(|d| d.ty == ty && if outgoing { d.source == hn } else { d.target == hn })
            .count();
        if have < n {
            return false;
        }
    }
    true
}

fn bind_attrs(
    pattern: &Graph,
    host: &Graph,
    pel: Element,
    hel: Element,
    state: &mut Morphism,
) -> bool {
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
                // A literal in the pattern must match the host value exactly.
                if target != Binding::Value(v.clone()) {
                    return false;
                }
            }
            AttrSlot::Var(v) => match state.var_map.get(v) {
                Some(existing) => {
                    if *existing != target {
                        return false;
                    }
                }
                None => {
                    state.var_map.insert(v.clone(), target);
                }
            },
        }
    }
    true
}

/// The pattern AC is checked once all its variables are bound to ground
/// values; bindings to host variables (clocks) defer the check.
fn ac_feasible(pattern: &Graph, state: &Morphism) -> bool {
    if pattern.ac == AttributeFormula::True {
        return true;
    }
    let mut env = BTreeMap::new();
    for v in pattern.ac.free_vars() {
        match state.var_map.get(&v) {
            Some(Binding::Value(val)) => {
                env.insert(v, val.clone());
            }
            Some(Binding::HostVar(_)) | None => return true, // deferred
        }
    }
    pattern.ac.eval(&env).unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_tg() -> TypeGraph {
        let mut tg = TypeGraph::default();
        tg.node_types.insert("A".into(), vec![]);
        tg.node_types.insert(
            "B".into(),
            vec![AttrDecl {
                name: "x".into(),
                sort: Sort::Int,
            }],
        );
        tg.edge_types.insert(
            "ab".into(),
            EdgeType {
                source: "A".into(),
                target: "B".into(),
                attrs: vec![],
            },
        );
        tg.edge_types.insert(
            "aa".into(),
            EdgeType {
                source: "A".into(),
                target: "A".into(),
                attrs: vec![],
            },
        );
        tg.validate().unwrap();
        tg
    }

    #[test]
    fn validate_accepts_empty_graph() {
        let tg = small_tg();
        assert!(validate_graph(&Graph::new(), &tg).is_ok());
    }

    #[test]
    fn validate_rejects_endpoint_mismatch() {
        let tg = small_tg();
        let mut g = Graph::new();
        let a = g.add_node("A", "a");
        let b = g.add_node("B", "b");
        g.set_attr(Element::Node(b), "x", AttrSlot::Value(AttrValue::Int(1)));
        // `ab` edges must run A -> B; this one runs B -> A.
        g.add_edge("ab", "e", b, a);
        let errs = validate_graph(&g, &tg).unwrap_err();
        assert!(errs.iter().any(|v| v.rule.contains("endpoint mismatch")));
    }

    #[test]
    fn validate_rejects_missing_attr() {
        let tg = small_tg();
        let mut g = Graph::new();
        g.add_node("B", "b");
        let errs = validate_graph(&g, &tg).unwrap_err();
        assert!(errs.iter().any(|v| v.rule.contains("missing attribute")));
    }

    #[test]
    fn empty_pattern_has_exactly_one_match() {
        let tg = small_tg();
        let mut host = Graph::new();
        host.add_node("A", "a1");
        host.add_node("A", "a2");
        let _ = tg;
        let monos = find_monos(&Graph::new(), &host, None);
        assert_eq!(monos.len(), 1);
        assert!(monos[0].node_map.is_empty());
    }

    #[test]
    fn single_node_pattern_counts_typed_nodes() {
        let mut host = Graph::new();
        host.add_node("A", "a1");
        host.add_node("A", "a2");
        let b = host.add_node("B", "b");
        host.set_attr(Element::Node(b), "x", AttrSlot::Value(AttrValue::Int(7)));
        let mut pat = Graph::new();
        pat.add_node("A", "p");
        assert_eq!(find_monos(&pat, &host, None).len(), 2);
    }

    #[test]
    fn injectivity_is_enforced() {
        let mut host = Graph::new();
        host.add_node("A", "a1");
        let mut pat = Graph::new();
        pat.add_node("A", "p1");
        pat.add_node("A", "p2");
        assert_eq!(find_monos(&pat, &host, None).len(), 0);
    }

    #[test]
    fn attribute_literals_restrict_matches() {
        let mut host = Graph::new();
        let b1 = host.add_node("B", "b1");
        host.set_attr(Element::Node(b1), "x", AttrSlot::Value(AttrValue::Int(1)));
        let b2 = host.add_node("B", "b2");
        host.set_attr(Element::Node(b2), "x", AttrSlot::Value(AttrValue::Int(2)));
        let mut pat = Graph::new();
        let p = pat.add_node("B", "p");
        pat.set_attr(Element::Node(p), "x", AttrSlot::Value(AttrValue::Int(2)));
        let monos = find_monos(&pat, &host, None);
        assert_eq!(monos.len(), 1);
        assert_eq!(monos[0].node_map[&p], b2);
    }

    #[test]
    fn shared_variable_forces_equal_values() {
        let mut host = Graph::new();
        let b1 = host.add_node("B", "b1");
        host.set_attr(Element::Node(b1), "x", AttrSlot::Value(AttrValue::Int(1)));
        let b2 = host.add_node("B", "b2");
        host.set_attr(Element::Node(b2), "x", AttrSlot::Value(AttrValue::Int(1)));
        let b3 = host.add_node("B", "b3");
        host.set_attr(Element::Node(b3), "x", AttrSlot::Value(AttrValue::Int(2)));
        let mut pat = Graph::new();
        let p1 = pat.add_node("B", "p1");
        pat.set_attr(Element::Node(p1), "x", AttrSlot::Var("v".into()));
        let p2 = pat.add_node("B", "p2");
        pat.set_attr(Element::Node(p2), "x", AttrSlot::Var("v".into()));
        // Both orders of (b1, b2) qualify; any pair involving b3 does not.
        assert_eq!(find_monos(&pat, &host, None).len(), 2);
    }

    #[test]
    fn ground_ac_is_checked() {
        let mut host = Graph::new();
        let b1 = host.add_node("B", "b1");
        host.set_attr(Element::Node(b1), "x", AttrSlot::Value(AttrValue::Int(3)));
        let mut pat = Graph::new();
        let p = pat.add_node("B", "p");
        pat.set_attr(Element::Node(p), "x", AttrSlot::Var("v".into()));
        pat.ac = AttributeFormula::Cmp(
            CmpOp::Gt,
            Term::Var("v".into()),
            Term::Const(AttrValue::Int(5)),
        );
        assert_eq!(find_monos(&pat, &host, None).len(), 0);
        pat.ac = AttributeFormula::Cmp(
            CmpOp::Gt,
            Term::Var("v".into()),
            Term::Const(AttrValue::Int(2)),
        );
        assert_eq!(find_monos(&pat, &host, None).len(), 1);
    }

    #[test]
    fn partial_morphism_is_extended() {
        let mut host = Graph::new();
        let a1 = host.add_node("A", "a1");
        let a2 = host.add_node("A", "a2");
        host.add_edge("aa", "e1", a1, a2);
        let mut pat = Graph::new();
        let p1 = pat.add_node("A", "p1");
        let p2 = pat.add_node("A", "p2");
        pat.add_edge("aa", "pe", p1, p2);
        let mut partial = Morphism::default();
        partial.node_map.insert(p2, a2);
        let monos = find_monos(&pat, &host, Some(&partial));
        assert_eq!(monos.len(), 1);
        assert_eq!(monos[0].node_map[&p1], a1);
    }

    #[test]
    fn composition_with_identity() {
        let mut g = Graph::new();
        let a = g.add_node("A", "a");
        let mut h = Graph::new();
        let b = h.add_node("A", "b");
        let mut m = Morphism::default();
        m.node_map.insert(a, b);
        let id_h = Morphism::identity(&h);
        assert_eq!(m.then(&id_h).node_map, m.node_map);
        let id_g = Morphism::identity(&g);
        assert_eq!(id_g.then(&m).node_map, m.node_map);
    }
}
