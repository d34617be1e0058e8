//! Satisfiability of first-order linear formulas over real variables and
//! bounded integer variables.
//!
//! The decision procedure grounds integer quantifiers by range expansion and
//! eliminates real quantifiers innermost-first by Fourier–Motzkin on a
//! disjunctive normal form. Satisfying assignments are reconstructed by
//! back-substitution and replayed against the original formula before they
//! are returned.
//!
//! An external SMT-LIB 2 solver can be plugged in as an alternative backend;
//! a missing or unparseable answer maps to [`SatResult::Unknown`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write as _;
use std::process::{Command, Stdio};

use num::{One, Signed, Zero};
use thiserror::Error;

use crate::rational::Rat;

// ---------------------------------------------------------------------------
// Terms and formulas
// ---------------------------------------------------------------------------

/// A linear combination of variables plus a constant.
#[derive(Debug, Clone, PartialEq, Eq, Default, PartialOrd, Ord)]
pub struct LinTerm {
    pub coeffs: BTreeMap<String, Rat>,
    pub constant: Rat,
}

impl LinTerm {
    pub fn constant(c: Rat) -> Self {
        LinTerm {
            coeffs: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(name: &str) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(name.to_string(), Rat::one());
        LinTerm {
            coeffs,
            constant: Rat::zero(),
        }
    }

    pub fn add(&self, other: &LinTerm) -> LinTerm {
        let mut out = self.clone();
        for (v, c) in &other.coeffs {
            let e = out.coeffs.entry(v.clone()).or_insert_with(Rat::zero);
            *e += c.clone();
        }
        out.constant += other.constant.clone();
        out.normalize();
        out
    }

    pub fn sub(&self, other: &LinTerm) -> LinTerm {
        self.add(&other.scale(&-Rat::one()))
    }

    pub fn scale(&self, q: &Rat) -> LinTerm {
        let mut out = LinTerm::constant(&self.constant * q);
        for (v, c) in &self.coeffs {
            out.coeffs.insert(v.clone(), c * q);
        }
        out.normalize();
        out
    }

    fn normalize(&mut self) {
        self.coeffs.retain(|_, c| !c.is_zero());
    }

    pub fn coeff_of(&self, var: &str) -> Rat {
        self.coeffs.get(var).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn is_const(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Replaces `var` by `repl`.
    pub fn substitute(&self, var: &str, repl: &LinTerm) -> LinTerm {
        let c = self.coeff_of(var);
        if c.is_zero() {
            return self.clone();
        }
        let mut out = self.clone();
        out.coeffs.remove(var);
        out.add(&repl.scale(&c))
    }

    pub fn eval(&self, env: &BTreeMap<String, Rat>) -> Option<Rat> {
        let mut acc = self.constant.clone();
        for (v, c) in &self.coeffs {
            acc += c * env.get(v)?;
        }
        Some(acc)
    }
}

impl fmt::Display for LinTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, c) in &self.coeffs {
            if first {
                if c == &Rat::one() {
                    write!(f, "{v}")?;
                } else {
                    write!(f, "{c}*{v}")?;
                }
                first = false;
            } else if c.is_negative() {
                let a = -c.clone();
                if a.is_one() {
                    write!(f, " - {v}")?;
                } else {
                    write!(f, " - {a}*{v}")?;
                }
            } else if c.is_one() {
                write!(f, " + {v}")?;
            } else {
                write!(f, " + {c}*{v}")?;
            }
        }
        if first {
            write!(f, "{}", self.constant)?;
        } else if !self.constant.is_zero() {
            if self.constant.is_negative() {
                write!(f, " - {}", -self.constant.clone())?;
            } else {
                write!(f, " + {}", self.constant)?;
            }
        }
        Ok(())
    }
}

/// Comparison against zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AtomOp {
    /// `term <= 0`
    Le,
    /// `term < 0`
    Lt,
    /// `term = 0`
    Eq,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Atom {
    pub term: LinTerm,
    pub op: AtomOp,
}

impl Atom {
    /// `lhs op rhs` as a normalized atom.
    pub fn cmp(lhs: LinTerm, op: crate::graph::CmpOp, rhs: LinTerm) -> Atom {
        use crate::graph::CmpOp;
        match op {
            CmpOp::Le => Atom {
                term: lhs.sub(&rhs),
                op: AtomOp::Le,
            },
            CmpOp::Lt => Atom {
                term: lhs.sub(&rhs),
                op: AtomOp::Lt,
            },
            CmpOp::Ge => Atom {
                term: rhs.sub(&lhs),
                op: AtomOp::Le,
            },
            CmpOp::Gt => Atom {
                term: rhs.sub(&lhs),
                op: AtomOp::Lt,
            },
            CmpOp::Eq => Atom {
                term: lhs.sub(&rhs),
                op: AtomOp::Eq,
            },
        }
    }

    fn eval_const(&self) -> Option<bool> {
        if !self.term.is_const() {
            return None;
        }
        let c = &self.term.constant;
        Some(match self.op {
            AtomOp::Le => !c.is_positive(),
            AtomOp::Lt => c.is_negative(),
            AtomOp::Eq => c.is_zero(),
        })
    }

    pub fn eval(&self, env: &BTreeMap<String, Rat>) -> Option<bool> {
        let v = self.term.eval(env)?;
        Some(match self.op {
            AtomOp::Le => !v.is_positive(),
            AtomOp::Lt => v.is_negative(),
            AtomOp::Eq => v.is_zero(),
        })
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.op {
            AtomOp::Le => "<=",
            AtomOp::Lt => "<",
            AtomOp::Eq => "=",
        };
        write!(f, "{} {} 0", self.term, op)
    }
}

/// Sort of a quantified variable. Integer variables always carry a finite
/// range; real variables are unbounded.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum QSort {
    Real,
    Int { lo: i64, hi: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct QVar {
    pub name: String,
    pub sort: QSort,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum LinearFormula {
    True,
    False,
    Atom(Atom),
    And(Vec<LinearFormula>),
    Or(Vec<LinearFormula>),
    Not(Box<LinearFormula>),
    Exists(Vec<QVar>, Box<LinearFormula>),
    Forall(Vec<QVar>, Box<LinearFormula>),
}

impl LinearFormula {
    pub fn and(parts: Vec<LinearFormula>) -> LinearFormula {
        let mut flat = Vec::new();
        for p in parts {
            match p {
                LinearFormula::True => {}
                LinearFormula::False => return LinearFormula::False,
                LinearFormula::And(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => LinearFormula::True,
            1 => flat.pop().unwrap(),
            _ => LinearFormula::And(flat),
        }
    }

    pub fn or(parts: Vec<LinearFormula>) -> LinearFormula {
        let mut flat = Vec::new();
        for p in parts {
            match p {
                LinearFormula::False => {}
                LinearFormula::True => return LinearFormula::True,
                LinearFormula::Or(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => LinearFormula::False,
            1 => flat.pop().unwrap(),
            _ => LinearFormula::Or(flat),
        }
    }

    /// Quantification with constant-body simplification (all variable
    /// domains are nonempty).
    pub fn exists(vars: Vec<QVar>, body: LinearFormula) -> LinearFormula {
        match body {
            LinearFormula::True => LinearFormula::True,
            LinearFormula::False => LinearFormula::False,
            other if vars.is_empty() => other,
            other => LinearFormula::Exists(vars, Box::new(other)),
        }
    }

    pub fn not(f: LinearFormula) -> LinearFormula {
        match f {
            LinearFormula::True => LinearFormula::False,
            LinearFormula::False => LinearFormula::True,
            LinearFormula::Not(inner) => *inner,
            other => LinearFormula::Not(Box::new(other)),
        }
    }

    /// Free variables (not bound by any enclosing quantifier).
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut BTreeSet::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut BTreeSet<String>, out: &mut BTreeSet<String>) {
        match self {
            LinearFormula::True | LinearFormula::False => {}
            LinearFormula::Atom(a) => {
                for v in a.term.coeffs.keys() {
                    if !bound.contains(v) {
                        out.insert(v.clone());
                    }
                }
            }
            LinearFormula::And(ps) | LinearFormula::Or(ps) => {
                for p in ps {
                    p.collect_free(bound, out);
                }
            }
            LinearFormula::Not(p) => p.collect_free(bound, out),
            LinearFormula::Exists(vs, p) | LinearFormula::Forall(vs, p) => {
                let added: Vec<String> = vs
                    .iter()
                    .filter(|v| bound.insert(v.name.clone()))
                    .map(|v| v.name.clone())
                    .collect();
                p.collect_free(bound, out);
                for v in added {
                    bound.remove(&v);
                }
            }
        }
    }

    /// Substitutes a free variable by a linear term; scopes rebinding the
    /// variable are left untouched.
    pub fn substitute(&self, var: &str, repl: &LinTerm) -> LinearFormula {
        match self {
            LinearFormula::True | LinearFormula::False => self.clone(),
            LinearFormula::Atom(a) => LinearFormula::Atom(Atom {
                term: a.term.substitute(var, repl),
                op: a.op,
            }),
            LinearFormula::And(ps) => {
                LinearFormula::And(ps.iter().map(|p| p.substitute(var, repl)).collect())
            }
            LinearFormula::Or(ps) => {
                LinearFormula::Or(ps.iter().map(|p| p.substitute(var, repl)).collect())
            }
            LinearFormula::Not(p) => LinearFormula::Not(Box::new(p.substitute(var, repl))),
            LinearFormula::Exists(vs, p) => {
                if vs.iter().any(|v| v.name == var) {
                    self.clone()
                } else {
                    LinearFormula::Exists(vs.clone(), Box::new(p.substitute(var, repl)))
                }
            }
            LinearFormula::Forall(vs, p) => {
                if vs.iter().any(|v| v.name == var) {
                    self.clone()
                } else {
                    LinearFormula::Forall(vs.clone(), Box::new(p.substitute(var, repl)))
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Quantifier elimination
// ---------------------------------------------------------------------------

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SolveError {
    #[error("formula size budget exceeded ({0} literals)")]
    Budget(u64),
    #[error("external solver failed: {0}")]
    External(String),
}

/// Literal budget; exceeding it surfaces as [`SatResult::Unknown`].
#[derive(Debug, Clone, Copy)]
pub struct Budget {
    pub max_literals: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_literals: 1_000_000,
        }
    }
}

struct Counter {
    used: u64,
    max: u64,
}

impl Counter {
    fn spend(&mut self, n: u64) -> Result<(), SolveError> {
        self.used = self.used.saturating_add(n);
        if self.used > self.max {
            Err(SolveError::Budget(self.max))
        } else {
            Ok(())
        }
    }
}

/// Expands bounded integer quantifiers and eliminates real quantifiers
/// innermost-first by Fourier–Motzkin. The result is quantifier-free and
/// equivalent to the input over its free variables.
pub fn ground_and_eliminate(
    f: &LinearFormula,
    budget: Budget,
) -> Result<LinearFormula, SolveError> {
    let mut counter = Counter {
        used: 0,
        max: budget.max_literals,
    };
    eliminate(f, &mut counter)
}

fn eliminate(f: &LinearFormula, counter: &mut Counter) -> Result<LinearFormula, SolveError> {
    counter.spend(1)?;
    Ok(match f {
        LinearFormula::True | LinearFormula::False | LinearFormula::Atom(_) => f.clone(),
        LinearFormula::And(ps) => LinearFormula::and(
            ps.iter()
                .map(|p| eliminate(p, counter))
                .collect::<Result<_, _>>()?,
        ),
        LinearFormula::Or(ps) => LinearFormula::or(
            ps.iter()
                .map(|p| eliminate(p, counter))
                .collect::<Result<_, _>>()?,
        ),
        LinearFormula::Not(p) => negate_qf(&eliminate(p, counter)?),
        LinearFormula::Forall(vs, p) => {
            let inner =
                LinearFormula::Exists(vs.clone(), Box::new(LinearFormula::Not(p.clone())));
            negate_qf(&eliminate(&inner, counter)?)
        }
        LinearFormula::Exists(vs, p) => {
            let mut body = eliminate(p, counter)?;
            for v in vs.iter().rev() {
                body = eliminate_one(v, body, counter)?;
            }
            body
        }
    })
}

/// Negates a quantifier-free formula structurally.
fn negate_qf(f: &LinearFormula) -> LinearFormula {
    match f {
        LinearFormula::True => LinearFormula::False,
        LinearFormula::False => LinearFormula::True,
        LinearFormula::Atom(a) => match a.op {
            AtomOp::Le => LinearFormula::Atom(Atom {
                term: a.term.scale(&-Rat::one()),
                op: AtomOp::Lt,
            }),
            AtomOp::Lt => LinearFormula::Atom(Atom {
                term: a.term.scale(&-Rat::one()),
                op: AtomOp::Le,
            }),
            AtomOp::Eq => LinearFormula::or(vec![
                LinearFormula::Atom(Atom {
                    term: a.term.clone(),
                    op: AtomOp::Lt,
                }),
                LinearFormula::Atom(Atom {
                    term: a.term.scale(&-Rat::one()),
                    op: AtomOp::Lt,
                }),
            ]),
        },
        LinearFormula::And(ps) => LinearFormula::or(ps.iter().map(negate_qf).collect()),
        LinearFormula::Or(ps) => LinearFormula::and(ps.iter().map(negate_qf).collect()),
        LinearFormula::Not(p) => (**p).clone(),
        LinearFormula::Exists(..) | LinearFormula::Forall(..) => {
            unreachable!("negate_qf on quantified formula")
        }
    }
}

fn eliminate_one(
    v: &QVar,
    body: LinearFormula,
    counter: &mut Counter,
) -> Result<LinearFormula, SolveError> {
    match &v.sort {
        QSort::Int { lo, hi } => {
            let mut parts = Vec::new();
            let mut k = *lo;
            while k <= *hi {
                counter.spend(1)?;
                let c = LinTerm::constant(Rat::from_integer(k.into()));
                parts.push(body.substitute(&v.name, &c));
                k += 1;
            }
            Ok(LinearFormula::or(parts))
        }
        QSort::Real => {
            let dnf = to_dnf(&body, counter)?;
            let mut parts = Vec::new();
            for conjunct in dnf {
                counter.spend(conjunct.len() as u64)?;
                let pruned = match normalize_conjunct(&conjunct) {
                    None => continue,
                    Some(p) => p,
                };
                let reduced = fm_eliminate(&v.name, &pruned);
                parts.push(conjunct_to_formula(&reduced));
            }
            Ok(LinearFormula::or(parts))
        }
    }
}

fn conjunct_to_formula(atoms: &[Atom]) -> LinearFormula {
    match normalize_conjunct(atoms) {
        None => LinearFormula::False,
        Some(kept) => {
            LinearFormula::and(kept.into_iter().map(LinearFormula::Atom).collect())
        }
    }
}

/// Drops redundant atoms of a conjunction: per linear part only the
/// tightest upper bound survives, constant atoms fold away, and an
/// immediately contradictory pair (`t <= c` vs `-t <= -c'` with `c < c'`)
/// yields `None`. Keeps Fourier–Motzkin polynomial on difference systems.
fn normalize_conjunct(atoms: &[Atom]) -> Option<Vec<Atom>> {
    use std::collections::BTreeMap as Map;
    // Key: the variable part of the term. Value: tightest (bound, strict)
    // for `vars <= bound` (after moving the constant right), plus equality.
    #[derive(Default)]
    struct Best {
        le: Option<(Rat, bool)>,
        eq: Option<Rat>,
    }
    let mut table: Map<Vec<(String, Rat)>, Best> = Map::new();
    for a in atoms {
        match a.eval_const() {
            Some(true) => continue,
            Some(false) => return None,
            None => {}
        }
        let vars: Vec<(String, Rat)> = a
            .term
            .coeffs
            .iter()
            .map(|(v, c)| (v.clone(), c.clone()))
            .collect();
        let bound = -a.term.constant.clone();
        match a.op {
            AtomOp::Eq => {
                let entry = table.entry(vars).or_default();
                match &entry.eq {
                    Some(b) if *b != bound => return None,
                    _ => entry.eq = Some(bound),
                }
            }
            AtomOp::Le | AtomOp::Lt => {
                let strict = a.op == AtomOp::Lt;
                let entry = table.entry(vars).or_default();
                let tighter = entry
                    .le
                    .as_ref()
                    .map(|(b, s)| bound < *b || (bound == *b && strict && !s))
                    .unwrap_or(true);
                if tighter {
                    entry.le = Some((bound, strict));
                }
            }
        }
    }
    // Cross-check opposite orientations and equalities.
    let mut out = Vec::new();
    let keys: Vec<Vec<(String, Rat)>> = table.keys().cloned().collect();
    for vars in keys {
        let negated: Vec<(String, Rat)> = vars.iter().map(|(v, c)| (v.clone(), -c.clone())).collect();
        let best = &table[&vars];
        if let Some(eqb) = best.eq.clone() {
            // eq must respect the le bound and the opposite side's bound.
            if let Some((ub, strict)) = &best.le {
                if eqb > *ub || (eqb == *ub && *strict) {
                    return None;
                }
            }
            if let Some(opp) = table.get(&negated) {
                if let Some((lb_neg, strict)) = &opp.le {
                    // -vars <= lb_neg means vars >= -lb_neg.
                    let lb = -lb_neg.clone();
                    if eqb < lb || (eqb == lb && *strict) {
                        return None;
                    }
                }
                if let Some(eq_opp) = &opp.eq {
                    if -eq_opp.clone() != eqb {
                        return None;
                    }
                }
            }
            let mut term = LinTerm::constant(-eqb);
            for (v, c) in &vars {
                term.coeffs.insert(v.clone(), c.clone());
            }
            out.push(Atom {
                term,
                op: AtomOp::Eq,
            });
            continue;
        }
        if let Some((ub, strict)) = &best.le {
            if let Some(opp) = table.get(&negated) {
                if let Some((lb_neg, s2)) = &opp.le {
                    let lb = -lb_neg.clone();
                    if lb > *ub || (lb == *ub && (*strict || *s2)) {
                        return None;
                    }
                }
            }
            let mut term = LinTerm::constant(-ub.clone());
            for (v, c) in &vars {
                term.coeffs.insert(v.clone(), c.clone());
            }
            out.push(Atom {
                term,
                op: if *strict { AtomOp::Lt } else { AtomOp::Le },
            });
        }
    }
    Some(out)
}

/// Disjunctive normal form of a quantifier-free formula.
fn to_dnf(f: &LinearFormula, counter: &mut Counter) -> Result<Vec<Vec<Atom>>, SolveError> {
    Ok(match f {
        LinearFormula::True => vec![vec![]],
        LinearFormula::False => vec![],
        LinearFormula::Atom(a) => vec![vec![a.clone()]],
        LinearFormula::Or(ps) => {
            let mut out = Vec::new();
            for p in ps {
                out.extend(to_dnf(p, counter)?);
                counter.spend(out.len() as u64 / 16 + 1)?;
            }
            out
        }
        LinearFormula::And(ps) => {
            let mut acc: Vec<Vec<Atom>> = vec![vec![]];
            for p in ps {
                let rhs = to_dnf(p, counter)?;
                let mut next = Vec::new();
                for a in &acc {
                    for b in &rhs {
                        counter.spend((a.len() + b.len()) as u64)?;
                        let mut c = a.clone();
                        c.extend(b.iter().cloned());
                        next.push(c);
                    }
                }
                acc = next;
                if acc.is_empty() {
                    break;
                }
            }
            acc
        }
        LinearFormula::Not(p) => to_dnf(&negate_qf(p), counter)?,
        LinearFormula::Exists(..) | LinearFormula::Forall(..) => {
            unreachable!("to_dnf on quantified formula")
        }
    })
}

/// Fourier–Motzkin elimination of `x` from a conjunction of atoms.
fn fm_eliminate(x: &str, atoms: &[Atom]) -> Vec<Atom> {
    // An equality involving x lets us substitute exactly.
    if let Some(pos) = atoms
        .iter()
        .position(|a| a.op == AtomOp::Eq && !a.term.coeff_of(x).is_zero())
    {
        let eq = &atoms[pos];
        let c = eq.term.coeff_of(x);
        // c*x + r = 0  =>  x = -r/c
        let mut r = eq.term.clone();
        r.coeffs.remove(x);
        let solution = r.scale(&(-Rat::one() / c));
        return atoms
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != pos)
            .map(|(_, a)| Atom {
                term: a.term.substitute(x, &solution),
                op: a.op,
            })
            .collect();
    }
    let mut uppers: Vec<(LinTerm, bool)> = Vec::new(); // x <= t (strict?)
    let mut lowers: Vec<(LinTerm, bool)> = Vec::new(); // x >= t (strict?)
    let mut rest: Vec<Atom> = Vec::new();
    for a in atoms {
        let c = a.term.coeff_of(x);
        if c.is_zero() {
            rest.push(a.clone());
            continue;
        }
        // c*x + r (op) 0 with op in {<=, <}
        let mut r = a.term.clone();
        r.coeffs.remove(x);
        let bound = r.scale(&(-Rat::one() / c.clone()));
        let strict = a.op == AtomOp::Lt;
        if c.is_positive() {
            uppers.push((bound, strict));
        } else {
            lowers.push((bound, strict));
        }
    }
    for (lo, ls) in &lowers {
        for (up, us) in &uppers {
            let term = lo.sub(up);
            let op = if *ls || *us { AtomOp::Lt } else { AtomOp::Le };
            rest.push(Atom { term, op });
        }
    }
    rest
}

// ---------------------------------------------------------------------------
// Satisfiability
// ---------------------------------------------------------------------------

pub type Witness = BTreeMap<String, Rat>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatResult {
    Sat(Witness),
    Unsat,
    Unknown(String),
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }
}

/// Backend used by [`check_sat_with`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum SolverChoice {
    #[default]
    Builtin,
    /// External process consuming SMT-LIB 2 on stdin and answering
    /// `sat`/`unsat`/`unknown` on stdout.
    External(String),
}

/// Decides satisfiability over the free (real) variables. `Sat` carries a
/// witness replayed against the original formula.
pub fn check_sat(f: &LinearFormula) -> SatResult {
    check_sat_budget(f, Budget::default())
}

pub fn check_sat_budget(f: &LinearFormula, budget: Budget) -> SatResult {
    match sat_internal(f, budget) {
        Ok(r) => r,
        Err(SolveError::Budget(b)) => {
            SatResult::Unknown(format!("budget of {b} literals exceeded"))
        }
        Err(e) => SatResult::Unknown(e.to_string()),
    }
}

pub fn check_sat_with(choice: &SolverChoice, f: &LinearFormula, budget: Budget) -> SatResult {
    match choice {
        SolverChoice::Builtin => check_sat_budget(f, budget),
        SolverChoice::External(cmd) => match external_sat(cmd, f) {
            Ok(r) => r,
            Err(e) => SatResult::Unknown(e.to_string()),
        },
    }
}

fn sat_internal(f: &LinearFormula, budget: Budget) -> Result<SatResult, SolveError> {
    let mut counter = Counter {
        used: 0,
        max: budget.max_literals,
    };
    let qf = eliminate(f, &mut counter)?;
    let free: Vec<String> = qf.free_vars().into_iter().collect();
    let dnf = to_dnf(&qf, &mut counter)?;
    for conjunct in dnf {
        if let Some(w) = feasible_witness(&conjunct, &free) {
            // Substituting the witness and deciding the closed formula must
            // give back True.
            if replay(f, &w, budget) {
                return Ok(SatResult::Sat(w));
            }
            return Ok(SatResult::Unknown(
                "witness failed replay against original formula".into(),
            ));
        }
    }
    Ok(SatResult::Unsat)
}

/// Decides a formula under a full assignment of its free variables.
pub fn replay(f: &LinearFormula, witness: &Witness, budget: Budget) -> bool {
    let mut g = f.clone();
    for (v, val) in witness {
        g = g.substitute(v, &LinTerm::constant(val.clone()));
    }
    if !g.free_vars().is_empty() {
        return false;
    }
    match ground_and_eliminate(&g, budget) {
        Ok(LinearFormula::True) => true,
        Ok(LinearFormula::False) => false,
        Ok(other) => matches!(fold_const(&other), Some(true)),
        Err(_) => false,
    }
}

fn fold_const(f: &LinearFormula) -> Option<bool> {
    match f {
        LinearFormula::True => Some(true),
        LinearFormula::False => Some(false),
        LinearFormula::Atom(a) => a.eval_const(),
        LinearFormula::And(ps) => {
            for p in ps {
                if !fold_const(p)? {
                    return Some(false);
                }
            }
            Some(true)
        }
        LinearFormula::Or(ps) => {
            for p in ps {
                if fold_const(p)? {
                    return Some(true);
                }
            }
            Some(false)
        }
        LinearFormula::Not(p) => fold_const(p).map(|b| !b),
        _ => None,
    }
}

/// Searches a rational point satisfying a conjunction of atoms, eliminating
/// variables one by one and back-substituting.
fn feasible_witness(conjunct: &[Atom], vars: &[String]) -> Option<Witness> {
    let mut stages: Vec<Vec<Atom>> = vec![normalize_conjunct(conjunct)?];
    for v in vars {
        let next = normalize_conjunct(&fm_eliminate(v, stages.last().unwrap()))?;
        stages.push(next);
    }
    for a in stages.last().unwrap() {
        match a.eval_const() {
            Some(true) => {}
            _ => return None,
        }
    }
    let mut w = Witness::new();
    for (i, v) in vars.iter().enumerate().rev() {
        let atoms = &stages[i];
        let val = pick_value(v, atoms, &w)?;
        w.insert(v.clone(), val);
    }
    Some(w)
}

fn pick_value(x: &str, atoms: &[Atom], env: &Witness) -> Option<Rat> {
    let mut lo: Option<(Rat, bool)> = None; // (bound, strict)
    let mut hi: Option<(Rat, bool)> = None;
    for a in atoms {
        let c = a.term.coeff_of(x);
        if c.is_zero() {
            continue;
        }
        let mut r = a.term.clone();
        r.coeffs.remove(x);
        let bound = r.scale(&(-Rat::one() / c.clone())).eval(env)?;
        match a.op {
            AtomOp::Eq => return Some(bound),
            AtomOp::Le | AtomOp::Lt => {
                let strict = a.op == AtomOp::Lt;
                if c.is_positive() {
                    let tighter = hi
                        .as_ref()
                        .map(|(b, s)| bound < *b || (bound == *b && strict && !s))
                        .unwrap_or(true);
                    if tighter {
                        hi = Some((bound, strict));
                    }
                } else {
                    let tighter = lo
                        .as_ref()
                        .map(|(b, s)| bound > *b || (bound == *b && strict && !s))
                        .unwrap_or(true);
                    if tighter {
                        lo = Some((bound, strict));
                    }
                }
            }
        }
    }
    match (lo, hi) {
        (None, None) => Some(Rat::zero()),
        (Some((l, ls)), None) => Some(if ls { l + Rat::one() } else { l }),
        (None, Some((h, hs))) => Some(if hs { h - Rat::one() } else { h }),
        (Some((l, ls)), Some((h, hs))) => {
            if l == h {
                if ls || hs {
                    None
                } else {
                    Some(l)
                }
            } else if l < h {
                if !ls {
                    Some(l)
                } else {
                    Some((l + h) / Rat::from_integer(2.into()))
                }
            } else {
                None
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Location labeling (step 7)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Label {
    Success,
    Maybe,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Success => write!(f, "success"),
            Label::Maybe => write!(f, "maybe"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum QueryMode {
    Min,
    Max,
}

impl fmt::Display for QueryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryMode::Min => write!(f, "min"),
            QueryMode::Max => write!(f, "max"),
        }
    }
}

/// Per-leaf verdict of the violation check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafLabeling {
    pub labels: BTreeSet<Label>,
    /// Present when the solver answered `Unknown`.
    pub unknown_reason: Option<String>,
}

/// Labels each leaf with `{success, maybe}`, `{maybe}`, or `{}`.
///
/// For `max` the check formula is `zone && !(ac && gh_ac)`: satisfiable
/// means a violation is avoidable, so the leaf is labeled. For `min` it is
/// `zone && ac && gh_ac`: unsatisfiable means a violation is unreachable,
/// so the leaf is labeled. An `Unknown` answer labels with `{maybe}` only.
pub fn label_locations(
    leaves: &[usize],
    zones: &BTreeMap<usize, LinearFormula>,
    acs: &BTreeMap<usize, LinearFormula>,
    gh_acs: &BTreeMap<usize, LinearFormula>,
    mode: QueryMode,
    choice: &SolverChoice,
    budget: Budget,
) -> BTreeMap<usize, LeafLabeling> {
    let mut out = BTreeMap::new();
    for &leaf in leaves {
        let zone = zones.get(&leaf).cloned().unwrap_or(LinearFormula::True);
        let ac = acs.get(&leaf).cloned().unwrap_or(LinearFormula::True);
        let gh = gh_acs.get(&leaf).cloned().unwrap_or(LinearFormula::True);
        let restriction = LinearFormula::and(vec![ac, gh]);
        let check = match mode {
            QueryMode::Max => LinearFormula::and(vec![zone, LinearFormula::not(restriction)]),
            QueryMode::Min => LinearFormula::and(vec![zone, restriction]),
        };
        let result = check_sat_with(choice, &check, budget);
        let labeling = match (mode, result) {
            (QueryMode::Max, SatResult::Sat(_)) | (QueryMode::Min, SatResult::Unsat) => {
                LeafLabeling {
                    labels: [Label::Success, Label::Maybe].into_iter().collect(),
                    unknown_reason: None,
                }
            }
            (_, SatResult::Unknown(reason)) => LeafLabeling {
                labels: [Label::Maybe].into_iter().collect(),
                unknown_reason: Some(reason),
            },
            _ => LeafLabeling {
                labels: BTreeSet::new(),
                unknown_reason: None,
            },
        };
        out.insert(leaf, labeling);
    }
    out
}

// ---------------------------------------------------------------------------
// SMT-LIB 2 export and the external backend
// ---------------------------------------------------------------------------

/// Renders a deterministic SMT-LIB 2 script deciding the formula. Free
/// variables are declared as `Real`; bounded integer quantifiers use `Int`
/// with explicit range conjuncts (logic `LIRA`), otherwise the logic is
/// `LRA`.
pub fn export_smtlib2(f: &LinearFormula) -> String {
    let mut out = String::new();
    let logic = if has_int(f) { "LIRA" } else { "LRA" };
    out.push_str(&format!("(set-logic {logic})\n"));
    for v in f.free_vars() {
        out.push_str(&format!("(declare-const {} Real)\n", smt_name(&v)));
    }
    out.push_str("(assert ");
    render(f, &mut out);
    out.push_str(")\n(check-sat)\n");
    out
}

fn has_int(f: &LinearFormula) -> bool {
    match f {
        LinearFormula::True | LinearFormula::False | LinearFormula::Atom(_) => false,
        LinearFormula::And(ps) | LinearFormula::Or(ps) => ps.iter().any(has_int),
        LinearFormula::Not(p) => has_int(p),
        LinearFormula::Exists(vs, p) | LinearFormula::Forall(vs, p) => {
            vs.iter().any(|v| matches!(v.sort, QSort::Int { .. })) || has_int(p)
        }
    }
}

/// SMT-LIB simple symbols exclude `$`/`:`; quote anything else with `|...|`.
fn smt_name(v: &str) -> String {
    if !v.is_empty()
        && v.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
        && !v.chars().next().unwrap().is_ascii_digit()
    {
        v.to_string()
    } else {
        format!("|{v}|")
    }
}

fn render_rat(r: &Rat, out: &mut String) {
    let neg = r.is_negative();
    let a = r.abs();
    let body = if a.denom().is_one() {
        format!("{}.0", a.numer())
    } else {
        format!("(/ {}.0 {}.0)", a.numer(), a.denom())
    };
    if neg {
        out.push_str(&format!("(- {body})"));
    } else {
        out.push_str(&body);
    }
}

fn render_term(t: &LinTerm, out: &mut String) {
    let mut monomials: Vec<String> = Vec::new();
    for (v, c) in &t.coeffs {
        if c.is_one() {
            monomials.push(smt_name(v));
        } else {
            let mut s = String::from("(* ");
            render_rat(c, &mut s);
            s.push(' ');
            s.push_str(&smt_name(v));
            s.push(')');
            monomials.push(s);
        }
    }
    if !t.constant.is_zero() || monomials.is_empty() {
        let mut s = String::new();
        render_rat(&t.constant, &mut s);
        monomials.push(s);
    }
    if monomials.len() == 1 {
        out.push_str(&monomials[0]);
    } else {
        out.push_str("(+ ");
        out.push_str(&monomials.join(" "));
        out.push(')');
    }
}

fn render(f: &LinearFormula, out: &mut String) {
    match f {
        LinearFormula::True => out.push_str("true"),
        LinearFormula::False => out.push_str("false"),
        LinearFormula::Atom(a) => {
            let op = match a.op {
                AtomOp::Le => "<=",
                AtomOp::Lt => "<",
                AtomOp::Eq => "=",
            };
            out.push_str(&format!("({op} "));
            render_term(&a.term, out);
            out.push_str(" 0.0)");
        }
        LinearFormula::And(ps) => {
            out.push_str("(and");
            for p in ps {
                out.push(' ');
                render(p, out);
            }
            out.push(')');
        }
        LinearFormula::Or(ps) => {
            out.push_str("(or");
            for p in ps {
                out.push(' ');
                render(p, out);
            }
            out.push(')');
        }
        LinearFormula::Not(p) => {
            out.push_str("(not ");
            render(p, out);
            out.push(')');
        }
        LinearFormula::Exists(vs, p) | LinearFormula::Forall(vs, p) => {
            let kw = if matches!(f, LinearFormula::Exists(..)) {
                "exists"
            } else {
                "forall"
            };
            out.push_str(&format!("({kw} ("));
            let mut ranges = Vec::new();
            for (i, v) in vs.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                match &v.sort {
                    QSort::Real => out.push_str(&format!("({} Real)", smt_name(&v.name))),
                    QSort::Int { lo, hi } => {
                        out.push_str(&format!("({} Int)", smt_name(&v.name)));
                        ranges.push((v.name.clone(), *lo, *hi));
                    }
                }
            }
            out.push_str(") ");
            let range_terms: Vec<String> = ranges
                .iter()
                .map(|(n, lo, hi)| format!("(and (<= {lo} {0}) (<= {0} {hi}))", smt_name(n)))
                .collect();
            if range_terms.is_empty() {
                render(p, out);
            } else if matches!(f, LinearFormula::Exists(..)) {
                out.push_str("(and ");
                out.push_str(&range_terms.join(" "));
                out.push(' ');
                render(p, out);
                out.push(')');
            } else {
                out.push_str("(=> (and ");
                out.push_str(&range_terms.join(" "));
                out.push_str(") ");
                render(p, out);
                out.push(')');
            }
            out.push(')');
        }
    }
}

fn external_sat(command: &str, f: &LinearFormula) -> Result<SatResult, SolveError> {
    let script = export_smtlib2(f);
    let mut parts = command.split_whitespace();
    let prog = parts
        .next()
        .ok_or_else(|| SolveError::External("empty solver command".into()))?;
    let mut child = Command::new(prog)
        .args(parts)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| SolveError::External(format!("spawn `{command}`: {e}")))?;
    child
        .stdin
        .take()
        .ok_or_else(|| SolveError::External("no stdin".into()))?
        .write_all(script.as_bytes())
        .map_err(|e| SolveError::External(e.to_string()))?;
    let out = child
        .wait_with_output()
        .map_err(|e| SolveError::External(e.to_string()))?;
    let text = String::from_utf8_lossy(&out.stdout);
    let verdict = text
        .lines()
        .map(str::trim)
        .find(|l| matches!(*l, "sat" | "unsat" | "unknown"));
    match verdict {
        Some("sat") => Ok(SatResult::Sat(Witness::new())),
        Some("unsat") => Ok(SatResult::Unsat),
        Some("unknown") => Ok(SatResult::Unknown("external solver: unknown".into())),
        _ => Ok(SatResult::Unknown(format!(
            "external solver produced no verdict: {}",
            text.lines().next().unwrap_or("")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::CmpOp;
    use crate::rational::rat_int;

    fn x() -> LinTerm {
        LinTerm::var("x")
    }

    fn c(n: i64) -> LinTerm {
        LinTerm::constant(rat_int(n))
    }

    fn atom(lhs: LinTerm, op: CmpOp, rhs: LinTerm) -> LinearFormula {
        LinearFormula::Atom(Atom::cmp(lhs, op, rhs))
    }

    /// `4 <= x <= 10` with one extra conjunct.
    fn band(extra: LinearFormula) -> LinearFormula {
        LinearFormula::and(vec![
            atom(c(4), CmpOp::Le, x()),
            atom(x(), CmpOp::Le, c(10)),
            extra,
        ])
    }

    #[test]
    fn exists_band_avoiding_five() {
        // exists x. 4 <= x <= 10 and not (x >= 5)  -- satisfiable
        let f = LinearFormula::Exists(
            vec![QVar {
                name: "x".into(),
                sort: QSort::Real,
            }],
            Box::new(band(LinearFormula::not(atom(x(), CmpOp::Ge, c(5))))),
        );
        let qf = ground_and_eliminate(&f, Budget::default()).unwrap();
        assert_eq!(qf, LinearFormula::True);
    }

    #[test]
    fn exists_contradiction() {
        let f = LinearFormula::Exists(
            vec![QVar {
                name: "x".into(),
                sort: QSort::Real,
            }],
            Box::new(atom(x(), CmpOp::Lt, x())),
        );
        let qf = ground_and_eliminate(&f, Budget::default()).unwrap();
        assert_eq!(qf, LinearFormula::False);
    }

    #[test]
    fn forall_int_exists_real() {
        // forall y in [0,2]. exists x. x > y
        let f = LinearFormula::Forall(
            vec![QVar {
                name: "y".into(),
                sort: QSort::Int { lo: 0, hi: 2 },
            }],
            Box::new(LinearFormula::Exists(
                vec![QVar {
                    name: "x".into(),
                    sort: QSort::Real,
                }],
                Box::new(atom(x(), CmpOp::Gt, LinTerm::var("y"))),
            )),
        );
        let qf = ground_and_eliminate(&f, Budget::default()).unwrap();
        assert_eq!(qf, LinearFormula::True);
    }

    #[test]
    fn sat_examples_from_labeling_table() {
        // (4 <= x <= 10) and not (x >= 3): unsat
        let f = band(LinearFormula::not(atom(x(), CmpOp::Ge, c(3))));
        assert_eq!(check_sat(&f), SatResult::Unsat);
        // (4 <= x <= 10) and (x >= 12): unsat
        let f = band(atom(x(), CmpOp::Ge, c(12)));
        assert_eq!(check_sat(&f), SatResult::Unsat);
        // True: sat with empty witness
        assert_eq!(
            check_sat(&LinearFormula::True),
            SatResult::Sat(Witness::new())
        );
    }

    #[test]
    fn witnesses_replay() {
        let f = band(LinearFormula::not(atom(x(), CmpOp::Ge, c(5))));
        match check_sat(&f) {
            SatResult::Sat(w) => {
                let v = &w["x"];
                assert!(*v >= rat_int(4) && *v < rat_int(5));
                assert!(replay(&f, &w, Budget::default()));
            }
            other => panic!("expected sat, got {other:?}"),
        }
    }

    #[test]
    fn equalities_are_substituted() {
        // x = 2y and x >= 5 and y <= 2 : unsat
        let f = LinearFormula::and(vec![
            atom(x(), CmpOp::Eq, LinTerm::var("y").scale(&rat_int(2))),
            atom(x(), CmpOp::Ge, c(5)),
            atom(LinTerm::var("y"), CmpOp::Le, c(2)),
        ]);
        assert_eq!(check_sat(&f), SatResult::Unsat);
        // relax: y <= 3 : sat
        let f = LinearFormula::and(vec![
            atom(x(), CmpOp::Eq, LinTerm::var("y").scale(&rat_int(2))),
            atom(x(), CmpOp::Ge, c(5)),
            atom(LinTerm::var("y"), CmpOp::Le, c(3)),
        ]);
        assert!(check_sat(&f).is_sat());
    }

    #[test]
    fn budget_exhaustion_is_unknown() {
        let f = band(LinearFormula::True);
        match check_sat_budget(&f, Budget { max_literals: 1 }) {
            SatResult::Unknown(_) => {}
            other => panic!("expected unknown, got {other:?}"),
        }
    }

    #[test]
    fn labeling_matches_mode_rules() {
        let zone = band(LinearFormula::True);
        let mk = |ac: LinearFormula| {
            let zones: BTreeMap<usize, LinearFormula> = [(0, zone.clone())].into();
            let acs: BTreeMap<usize, LinearFormula> = [(0, ac)].into();
            let ghs: BTreeMap<usize, LinearFormula> = [(0, LinearFormula::True)].into();
            (zones, acs, ghs)
        };
        let ac5 = atom(x(), CmpOp::Ge, c(5));
        let (zones, acs, ghs) = mk(ac5);
        let labels = label_locations(
            &[0],
            &zones,
            &acs,
            &ghs,
            QueryMode::Max,
            &SolverChoice::Builtin,
            Budget::default(),
        );
        assert_eq!(labels[&0].labels.len(), 2);
        // Unknown via zero budget labels {maybe} only.
        let labels = label_locations(
            &[0],
            &zones,
            &acs,
            &ghs,
            QueryMode::Max,
            &SolverChoice::Builtin,
            Budget { max_literals: 0 },
        );
        assert_eq!(
            labels[&0].labels.iter().copied().collect::<Vec<_>>(),
            vec![Label::Maybe]
        );
    }

    #[test]
    fn smtlib_export_is_deterministic_and_balanced() {
        let f = LinearFormula::and(vec![
            atom(x(), CmpOp::Ge, c(12)),
            band(LinearFormula::True),
            LinearFormula::Exists(
                vec![QVar {
                    name: "k".into(),
                    sort: QSort::Int { lo: 0, hi: 3 },
                }],
                Box::new(atom(LinTerm::var("k"), CmpOp::Le, x())),
            ),
        ]);
        let s1 = export_smtlib2(&f);
        let s2 = export_smtlib2(&f);
        assert_eq!(s1, s2);
        assert!(s1.starts_with("(set-logic LIRA)"));
        assert!(s1.contains("(check-sat)"));
        let mut depth: i64 = 0;
        for ch in s1.chars() {
            match ch {
                '(' => depth += 1,
                ')' => {
                    depth -= 1;
                    assert!(depth >= 0);
                }
                _ => {}
            }
        }
        assert_eq!(depth, 0);
        let g = band(LinearFormula::True);
        assert!(export_smtlib2(&g).starts_with("(set-logic LRA)"));
    }

    #[test]
    fn fm_roundtrip_preserves_satisfiability() {
        // Eliminating a variable and re-introducing an unconstrained one
        // keeps satisfiability.
        let f = band(LinearFormula::True);
        let elim = ground_and_eliminate(
            &LinearFormula::Exists(
                vec![QVar {
                    name: "x".into(),
                    sort: QSort::Real,
                }],
                Box::new(f.clone()),
            ),
            Budget::default(),
        )
        .unwrap();
        let with_fresh = LinearFormula::and(vec![
            elim,
            atom(LinTerm::var("z"), CmpOp::Ge, LinTerm::var("z")),
        ]);
        assert_eq!(check_sat(&f).is_sat(), check_sat(&with_fresh).is_sat());
    }
}
