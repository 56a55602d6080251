//! Signatures: sorts, subsorting, constructors, clause-defined operations,
//! edge types and transition rules.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::term::{ConId, Ctx, EdgeId, MetaId, OpId, SortId, Term};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SigError {
    #[error("duplicate {kind} `{name}`")]
    Duplicate { kind: &'static str, name: String },
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
    #[error("subsort declaration `{lower} < {upper}` creates a cycle")]
    SubsortCycle { lower: String, upper: String },
    #[error("operation `{0}` needs at least one auxiliary parameter")]
    NoAuxParams(String),
}

/// One constructor argument: the sorts it binds, then its own sort.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArgSpec {
    pub binders: Ctx,
    pub sort: SortId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstructorDecl {
    pub name: String,
    pub args: Vec<ArgSpec>,
    pub result: SortId,
}

/// An additional operation `name(main; aux..)`. Its stratum is its index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OperationDecl {
    pub name: String,
    pub main: SortId,
    pub aux: Vec<SortId>,
    pub result: SortId,
}

/// Sort and binding context of a label position.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct LabelSlot {
    pub sort: SortId,
    pub ctx: Ctx,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeTypeDecl {
    pub name: String,
    pub source: SortId,
    pub labels: Vec<LabelSlot>,
    pub target: SortId,
}

/// A metavariable of a clause or rule. `ctx` lists the variables the
/// metavariable may depend on, innermost last.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaDecl {
    pub name: String,
    pub sort: SortId,
    pub ctx: Ctx,
}

/// A structural-recursion clause `op(head(args..); aux..) = rhs`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clause {
    pub op: OpId,
    pub head: ConId,
    pub metas: Vec<MetaDecl>,
    /// One metavariable per argument of `head`.
    pub arg_metas: Vec<MetaId>,
    /// One metavariable per auxiliary parameter of `op`.
    pub aux_metas: Vec<MetaId>,
    pub rhs: Term,
}

/// `source -edge[labels]-> target`, possibly containing metavariables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionPattern {
    pub source: Term,
    pub edge: EdgeId,
    pub labels: Vec<Term>,
    pub target: Term,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub name: String,
    pub metas: Vec<MetaDecl>,
    pub premises: Vec<TransitionPattern>,
    pub conclusion: TransitionPattern,
}

impl Rule {
    pub fn meta_name(&self, m: MetaId) -> &str {
        &self.metas[m.index()].name
    }
}

#[derive(Clone, Debug, Default)]
pub struct Signature {
    pub sorts: Vec<String>,
    /// Declared `lower < upper` pairs.
    pub subsorts: Vec<(SortId, SortId)>,
    leq: Vec<Vec<bool>>,
    pub cons: Vec<ConstructorDecl>,
    pub ops: Vec<OperationDecl>,
    pub clauses: Vec<Clause>,
    pub edges: Vec<EdgeTypeDecl>,
    pub rules: Vec<Rule>,
    clause_index: HashMap<(OpId, ConId), usize>,
}

impl Signature {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_sort(&mut self, name: &str) -> Result<SortId, SigError> {
        if self.sort_id(name).is_some() {
            return Err(SigError::Duplicate { kind: "sort", name: name.into() });
        }
        let id = SortId::from(self.sorts.len());
        self.sorts.push(name.to_string());
        for row in &mut self.leq {
            row.push(false);
        }
        let n = self.sorts.len();
        let mut row = vec![false; n];
        row[n - 1] = true;
        self.leq.push(row);
        Ok(id)
    }

    pub fn add_subsort(&mut self, lower: SortId, upper: SortId) -> Result<(), SigError> {
        if self.leq(upper, lower) && lower != upper {
            return Err(SigError::SubsortCycle {
                lower: self.sort_name(lower).into(),
                upper: self.sort_name(upper).into(),
            });
        }
        self.subsorts.push((lower, upper));
        let n = self.sorts.len();
        // transitive closure: everything below `lower` is now below everything above `upper`
        let below: Vec<usize> = (0..n).filter(|&a| self.leq[a][lower.index()]).collect();
        let above: Vec<usize> = (0..n).filter(|&b| self.leq[upper.index()][b]).collect();
        for &a in &below {
            for &b in &above {
                self.leq[a][b] = true;
            }
        }
        Ok(())
    }

    pub fn add_con(&mut self, decl: ConstructorDecl) -> Result<ConId, SigError> {
        if self.name_taken(&decl.name) {
            return Err(SigError::Duplicate { kind: "constructor", name: decl.name });
        }
        self.cons.push(decl);
        Ok(ConId::from(self.cons.len() - 1))
    }

    pub fn add_op(&mut self, decl: OperationDecl) -> Result<OpId, SigError> {
        if self.name_taken(&decl.name) {
            return Err(SigError::Duplicate { kind: "operation", name: decl.name });
        }
        if decl.aux.is_empty() {
            return Err(SigError::NoAuxParams(decl.name));
        }
        self.ops.push(decl);
        Ok(OpId::from(self.ops.len() - 1))
    }

    /// Clauses are accepted as written; exhaustiveness, duplicates and
    /// recursion shape are reported by `ops::validate_signature_ops`.
    pub fn add_clause(&mut self, clause: Clause) {
        self.clause_index
            .entry((clause.op, clause.head))
            .or_insert(self.clauses.len());
        self.clauses.push(clause);
    }

    pub fn add_edge(&mut self, decl: EdgeTypeDecl) -> Result<EdgeId, SigError> {
        if self.edge_id(&decl.name).is_some() {
            return Err(SigError::Duplicate { kind: "edge type", name: decl.name });
        }
        self.edges.push(decl);
        Ok(EdgeId::from(self.edges.len() - 1))
    }

    pub fn add_rule(&mut self, rule: Rule) -> Result<(), SigError> {
        if self.rules.iter().any(|r| r.name == rule.name) {
            return Err(SigError::Duplicate { kind: "rule", name: rule.name });
        }
        self.rules.push(rule);
        Ok(())
    }

    fn name_taken(&self, name: &str) -> bool {
        self.con_id(name).is_some() || self.op_id(name).is_some()
    }

    pub fn sort_id(&self, name: &str) -> Option<SortId> {
        self.sorts.iter().position(|s| s == name).map(SortId::from)
    }

    pub fn con_id(&self, name: &str) -> Option<ConId> {
        self.cons.iter().position(|c| c.name == name).map(ConId::from)
    }

    pub fn op_id(&self, name: &str) -> Option<OpId> {
        self.ops.iter().position(|o| o.name == name).map(OpId::from)
    }

    pub fn edge_id(&self, name: &str) -> Option<EdgeId> {
        self.edges.iter().position(|e| e.name == name).map(EdgeId::from)
    }

    pub fn sort_name(&self, s: SortId) -> &str {
        &self.sorts[s.index()]
    }

    pub fn con(&self, c: ConId) -> &ConstructorDecl {
        &self.cons[c.index()]
    }

    pub fn op(&self, o: OpId) -> &OperationDecl {
        &self.ops[o.index()]
    }

    pub fn edge(&self, e: EdgeId) -> &EdgeTypeDecl {
        &self.edges[e.index()]
    }

    pub fn clause_for(&self, op: OpId, head: ConId) -> Option<&Clause> {
        self.clause_index.get(&(op, head)).map(|&i| &self.clauses[i])
    }

    /// Reflexive-transitive subsort order.
    pub fn leq(&self, a: SortId, b: SortId) -> bool {
        self.leq[a.index()][b.index()]
    }

    /// Greatest common lower bound, if it exists and is unique.
    pub fn meet(&self, a: SortId, b: SortId) -> Option<SortId> {
        let lower: Vec<SortId> = (0..self.sorts.len())
            .map(SortId::from)
            .filter(|&s| self.leq(s, a) && self.leq(s, b))
            .collect();
        lower
            .iter()
            .copied()
            .find(|&s| lower.iter().all(|&t| self.leq(t, s)))
    }

    /// The unique greatest sort above `s`, or `s` itself if there is none.
    /// Terms are compared across sorts with the same top.
    pub fn top_sort(&self, s: SortId) -> SortId {
        let above: Vec<SortId> = self.sorts().filter(|&t| self.leq(s, t)).collect();
        above
            .iter()
            .copied()
            .find(|&t| above.iter().all(|&u| self.leq(u, t)))
            .unwrap_or(s)
    }

    /// Constructors whose result sort is below `sort`, in declaration order.
    pub fn cons_of_sort(&self, sort: SortId) -> impl Iterator<Item = ConId> + '_ {
        self.cons
            .iter()
            .enumerate()
            .filter(move |(_, c)| self.leq(c.result, sort))
            .map(|(i, _)| ConId::from(i))
    }

    /// Number of binders in front of argument `i` of constructor `c`.
    pub fn binders(&self, c: ConId, i: usize) -> usize {
        self.cons[c.index()].args[i].binders.len()
    }

    pub fn sorts(&self) -> impl Iterator<Item = SortId> {
        (0..self.sorts.len()).map(SortId::from)
    }
}
