//! Bounded derivation of the labelled transition system generated by a
//! rule set.
//!
//! Derivation runs in rounds. Each round applies every rule to every
//! universe term against the store as it stood at the start of the round;
//! the new transitions are inserted at the end of the round. Premise queries
//! place *demands*: a premise source outside the universe is added to it, and
//! a queried label tuple outside the static [`LabelUniverse`] becomes an
//! extra instantiation for the queried term's label metavariables. Demands
//! propagate to a fixpoint within the round.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::enumerate::enumerate_terms;
use crate::format::premise_schedule;
use crate::kernel::{least_sort, strengthen};
use crate::ops::{instantiate_at, normalize};
use crate::sig::{LabelSlot, MetaDecl, Rule, Signature, TransitionPattern};
use crate::term::{Ctx, EdgeId, SortId, Term};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct TermId(pub u32);

impl TermId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Hash-consed closed terms with their least sorts.
#[derive(Clone, Debug, Default)]
pub struct TermTable {
    terms: Vec<Term>,
    sorts: Vec<SortId>,
    index: HashMap<Term, TermId>,
}

impl TermTable {
    /// Interns a closed, normal, well-sorted term.
    pub fn intern(&mut self, sig: &Signature, t: Term) -> Option<TermId> {
        if let Some(&id) = self.index.get(&t) {
            return Some(id);
        }
        let sort = least_sort(sig, &Ctx::new(), &t).ok()?;
        let id = TermId(self.terms.len() as u32);
        self.terms.push(t.clone());
        self.sorts.push(sort);
        self.index.insert(t, id);
        Some(id)
    }

    pub fn get(&self, t: &Term) -> Option<TermId> {
        self.index.get(t).copied()
    }

    pub fn term(&self, id: TermId) -> &Term {
        &self.terms[id.index()]
    }

    pub fn sort(&self, id: TermId) -> SortId {
        self.sorts[id.index()]
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("term is not in the store's universe")]
    NotInUniverse,
}

/// Finite sets of closed terms standing in for the labels of each slot.
#[derive(Clone, Debug, Default)]
pub struct LabelUniverse {
    pub max_label_size: usize,
    pub slots: BTreeMap<LabelSlot, Vec<Term>>,
}

impl LabelUniverse {
    pub fn terms(&self, slot: &LabelSlot) -> &[Term] {
        self.slots.get(slot).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, slot: &LabelSlot, t: &Term) -> bool {
        self.terms(slot).contains(t)
    }

    /// Every label tuple for `edge`, in enumeration order.
    pub fn tuples(&self, sig: &Signature, edge: EdgeId) -> Vec<Vec<Term>> {
        let mut out = vec![Vec::new()];
        for slot in &sig.edge(edge).labels {
            let mut next = Vec::new();
            for prefix in &out {
                for t in self.terms(slot) {
                    let mut v: Vec<Term> = prefix.clone();
                    v.push(t.clone());
                    next.push(v);
                }
            }
            out = next;
        }
        out
    }

    /// Adds a label to a slot; returns whether it was new.
    pub fn insert(&mut self, slot: &LabelSlot, t: Term) -> bool {
        let terms = self.slots.entry(slot.clone()).or_default();
        if terms.contains(&t) {
            return false;
        }
        terms.push(t);
        true
    }
}

/// Enumerates the labels of every slot used by some edge type, up to
/// `max_label_size` nodes.
pub fn build_label_universe(sig: &Signature, max_label_size: usize) -> LabelUniverse {
    let mut slots = BTreeMap::new();
    for e in &sig.edges {
        for slot in &e.labels {
            slots
                .entry(slot.clone())
                .or_insert_with(|| enumerate_terms(sig, slot.sort, &slot.ctx, max_label_size));
        }
    }
    LabelUniverse { max_label_size, slots }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EngineConfig {
    pub fuel: usize,
    pub max_universe: usize,
    /// Size cap on terms joining the universe after the seeds; `None` means
    /// four times the largest seed.
    pub max_term_size: Option<usize>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { fuel: 30, max_universe: 5000, max_term_size: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DeriveStats {
    pub rounds: usize,
    pub fixpoint: bool,
    pub universe: usize,
    pub transitions: usize,
    /// Conclusions dropped in the last round because their target could not
    /// join the universe.
    pub dropped: usize,
    /// Premise sources that could not join the universe in the last round.
    pub blocked: usize,
    pub size_cap: usize,
}

pub type Successors = BTreeSet<(Vec<TermId>, TermId)>;

/// The derived transitions, their universe, and completeness flags.
#[derive(Clone, Debug)]
pub struct TransitionStore {
    table: TermTable,
    universe: Vec<TermId>,
    in_universe: Vec<bool>,
    trans: BTreeMap<(TermId, EdgeId), Successors>,
    exhausted: BTreeSet<(TermId, EdgeId)>,
    observable: Vec<BTreeSet<Vec<TermId>>>,
    demands: BTreeMap<(TermId, EdgeId), BTreeSet<Vec<TermId>>>,
    edge_sources: Vec<SortId>,
    pub stats: DeriveStats,
    pub label_size: usize,
    pub config: EngineConfig,
}

/// Result of [`transitions_of`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionsOf {
    pub entries: Vec<(Vec<Term>, Term)>,
    /// False when the set may be a strict under-approximation.
    pub exhausted: bool,
}

static EMPTY: Successors = BTreeSet::new();

impl TransitionStore {
    pub fn table(&self) -> &TermTable {
        &self.table
    }

    pub fn term(&self, id: TermId) -> &Term {
        self.table.term(id)
    }

    pub fn sort(&self, id: TermId) -> SortId {
        self.table.sort(id)
    }

    /// Universe members in insertion order (seeds first).
    pub fn universe(&self) -> &[TermId] {
        &self.universe
    }

    pub fn id_of(&self, t: &Term) -> Option<TermId> {
        self.table.get(t).filter(|id| self.in_universe(*id))
    }

    pub fn in_universe(&self, id: TermId) -> bool {
        self.in_universe.get(id.index()).copied().unwrap_or(false)
    }

    pub fn successors(&self, id: TermId, edge: EdgeId) -> &Successors {
        self.trans.get(&(id, edge)).unwrap_or(&EMPTY)
    }

    /// All stored transitions as (source, edge, labels, target).
    pub fn iter(&self) -> impl Iterator<Item = (TermId, EdgeId, &Vec<TermId>, TermId)> + '_ {
        self.trans
            .iter()
            .flat_map(|(&(s, e), set)| set.iter().map(move |(l, t)| (s, e, l, *t)))
    }

    pub fn contains(&self, source: TermId, edge: EdgeId, labels: &[TermId], target: TermId) -> bool {
        self.successors(source, edge).contains(&(labels.to_vec(), target))
    }

    /// Whether `edge` applies to terms of `id`'s sort.
    pub fn edge_applies(&self, sig: &Signature, id: TermId, edge: EdgeId) -> bool {
        sig.leq(self.sort(id), self.edge_sources[edge.index()])
    }

    pub fn is_exhausted(&self, id: TermId, edge: EdgeId) -> bool {
        self.exhausted.contains(&(id, edge))
    }

    /// Exhausted for every edge type that applies to the term.
    pub fn is_exhausted_term(&self, sig: &Signature, id: TermId) -> bool {
        (0..sig.edges.len())
            .map(EdgeId::from)
            .filter(|&e| self.edge_applies(sig, id, e))
            .all(|e| self.is_exhausted(id, e))
    }

    /// True when every label is in the static label universe. Only such
    /// transitions take part in bisimulation checking, so that every
    /// universe term is challenged with the same labels.
    pub fn is_observable(&self, edge: EdgeId, labels: &[TermId]) -> bool {
        labels.is_empty() || self.observable[edge.index()].contains(labels)
    }

    /// Label tuples outside the static universe at which transitions of
    /// `id` along `edge` were queried by some rule premise.
    pub fn demanded(&self, id: TermId, edge: EdgeId) -> impl Iterator<Item = &Vec<TermId>> + '_ {
        self.demands.get(&(id, edge)).into_iter().flatten()
    }

    /// The static label tuples of `edge`.
    pub fn observable_labels(&self, edge: EdgeId) -> &BTreeSet<Vec<TermId>> {
        &self.observable[edge.index()]
    }

    pub fn len(&self) -> usize {
        self.stats.transitions
    }

    pub fn is_empty(&self) -> bool {
        self.stats.transitions == 0
    }
}

/// All stored transitions from `t` along `edge`.
pub fn transitions_of(store: &TransitionStore, t: &Term, edge: EdgeId) -> Result<TransitionsOf, EngineError> {
    let id = store.id_of(t).ok_or(EngineError::NotInUniverse)?;
    let entries = store
        .successors(id, edge)
        .iter()
        .map(|(ls, tg)| (ls.iter().map(|&l| store.term(l).clone()).collect(), store.term(*tg).clone()))
        .collect();
    Ok(TransitionsOf { entries, exhausted: store.is_exhausted(id, edge) })
}

/// Derives transitions from `seeds` with the default size cap.
pub fn derive_transitions(
    sig: &Signature,
    seeds: &[Term],
    labels: &LabelUniverse,
    fuel: usize,
    max_universe: usize,
) -> TransitionStore {
    derive_with(sig, seeds, labels, &EngineConfig { fuel, max_universe, max_term_size: None })
}

type Binding = Vec<Option<Term>>;
type Key = (TermId, EdgeId);

struct Plan {
    order: Vec<usize>,
    /// Conclusion label metavariables not bound by the source.
    free_labels: bool,
}

struct Deriver<'a> {
    sig: &'a Signature,
    plans: Vec<Plan>,
    table: TermTable,
    universe: Vec<TermId>,
    in_universe: Vec<bool>,
    trans: BTreeMap<Key, Successors>,
    demands: BTreeMap<Key, BTreeSet<Vec<TermId>>>,
    static_tuples: Vec<Vec<Vec<TermId>>>,
    static_sets: Vec<BTreeSet<Vec<TermId>>>,
    size_cap: usize,
    max_universe: usize,
    // per-round state
    work: VecDeque<TermId>,
    queued: Vec<bool>,
    changed: bool,
    pending: BTreeSet<(TermId, EdgeId, Vec<TermId>, TermId)>,
    deps: Vec<(Key, Key)>,
    taint: BTreeSet<Key>,
    dropped: usize,
    blocked: usize,
}

pub fn derive_with(sig: &Signature, seeds: &[Term], labels: &LabelUniverse, config: &EngineConfig) -> TransitionStore {
    let plans = sig
        .rules
        .iter()
        .map(|r| {
            let bound = r.conclusion.source.metas();
            let mut label_metas = BTreeSet::new();
            for l in &r.conclusion.labels {
                l.collect_metas(&mut label_metas);
            }
            Plan {
                order: premise_schedule(r).unwrap_or_else(|| (0..r.premises.len()).collect()),
                free_labels: !label_metas.is_subset(&bound),
            }
        })
        .collect();
    let max_seed = seeds.iter().map(Term::size).max().unwrap_or(1);
    let mut d = Deriver {
        sig,
        plans,
        table: TermTable::default(),
        universe: Vec::new(),
        in_universe: Vec::new(),
        trans: BTreeMap::new(),
        demands: BTreeMap::new(),
        static_tuples: Vec::new(),
        static_sets: Vec::new(),
        size_cap: config.max_term_size.unwrap_or(4 * max_seed),
        max_universe: config.max_universe,
        work: VecDeque::new(),
        queued: Vec::new(),
        changed: false,
        pending: BTreeSet::new(),
        deps: Vec::new(),
        taint: BTreeSet::new(),
        dropped: 0,
        blocked: 0,
    };
    for e in 0..sig.edges.len() {
        let tuples: Vec<Vec<TermId>> = labels
            .tuples(sig, EdgeId::from(e))
            .into_iter()
            .filter_map(|tuple| tuple.into_iter().map(|t| d.table.intern(sig, t)).collect::<Option<Vec<_>>>())
            .collect();
        d.static_sets.push(tuples.iter().cloned().collect());
        d.static_tuples.push(tuples);
    }
    for s in seeds {
        if let Ok(n) = normalize(sig, s) {
            if let Some(id) = d.table.intern(sig, n) {
                d.add_to_universe(id);
            }
        }
    }
    let mut rounds = 0;
    let mut fixpoint = false;
    while rounds < config.fuel {
        rounds += 1;
        if !d.round() {
            fixpoint = true;
            break;
        }
    }
    let mut exhausted = BTreeSet::new();
    if fixpoint {
        let mut dependents: HashMap<Key, Vec<Key>> = HashMap::new();
        for (from, to) in &d.deps {
            dependents.entry(*to).or_default().push(*from);
        }
        let mut tainted = d.taint.clone();
        let mut queue: Vec<Key> = tainted.iter().copied().collect();
        while let Some(k) = queue.pop() {
            if let Some(ds) = dependents.get(&k) {
                for &from in ds {
                    if tainted.insert(from) {
                        queue.push(from);
                    }
                }
            }
        }
        for &u in &d.universe {
            for e in 0..sig.edges.len() {
                let e = EdgeId::from(e);
                if sig.leq(d.table.sort(u), sig.edge(e).source) && !tainted.contains(&(u, e)) {
                    exhausted.insert((u, e));
                }
            }
        }
    }
    let transitions = d.trans.values().map(BTreeSet::len).sum();
    TransitionStore {
        stats: DeriveStats {
            rounds,
            fixpoint,
            universe: d.universe.len(),
            transitions,
            dropped: d.dropped,
            blocked: d.blocked,
            size_cap: d.size_cap,
        },
        table: d.table,
        universe: d.universe,
        in_universe: d.in_universe,
        trans: d.trans,
        exhausted,
        observable: d.static_sets,
        demands: d.demands,
        edge_sources: sig.edges.iter().map(|e| e.source).collect(),
        label_size: labels.max_label_size,
        config: config.clone(),
    }
}

impl<'a> Deriver<'a> {
    fn in_universe(&self, id: TermId) -> bool {
        self.in_universe.get(id.index()).copied().unwrap_or(false)
    }

    fn add_to_universe(&mut self, id: TermId) {
        if self.in_universe(id) {
            return;
        }
        if self.in_universe.len() <= id.index() {
            self.in_universe.resize(id.index() + 1, false);
        }
        self.in_universe[id.index()] = true;
        self.universe.push(id);
        self.enqueue(id);
    }

    fn enqueue(&mut self, id: TermId) {
        if self.queued.len() <= id.index() {
            self.queued.resize(id.index() + 1, false);
        }
        if !self.queued[id.index()] {
            self.queued[id.index()] = true;
            self.work.push_back(id);
        }
    }

    /// Brings a term into the universe if the bounds allow it.
    fn admit(&mut self, t: Term) -> Option<TermId> {
        if let Some(id) = self.table.get(&t) {
            if self.in_universe(id) {
                return Some(id);
            }
        }
        if t.size() > self.size_cap || self.universe.len() >= self.max_universe {
            return None;
        }
        let id = self.table.intern(self.sig, t)?;
        self.add_to_universe(id);
        self.changed = true;
        Some(id)
    }

    fn demand(&mut self, src: TermId, edge: EdgeId, labels: &[TermId]) {
        if labels.is_empty() || self.static_sets[edge.index()].contains(labels) {
            return;
        }
        if self.demands.entry((src, edge)).or_default().insert(labels.to_vec()) {
            self.changed = true;
            self.enqueue(src);
        }
    }

    /// One round; returns whether anything changed.
    fn round(&mut self) -> bool {
        self.changed = false;
        self.pending.clear();
        self.deps.clear();
        self.taint.clear();
        self.dropped = 0;
        self.blocked = 0;
        self.queued.clear();
        self.work.clear();
        for u in self.universe.clone() {
            self.enqueue(u);
        }
        while let Some(u) = self.work.pop_front() {
            self.queued[u.index()] = false;
            self.process(u);
        }
        for (s, e, ls, t) in std::mem::take(&mut self.pending) {
            if self.trans.entry((s, e)).or_default().insert((ls, t)) {
                self.changed = true;
            }
        }
        self.changed
    }

    fn process(&mut self, u: TermId) {
        let sig = self.sig;
        for ri in 0..sig.rules.len() {
            let rule = &sig.rules[ri];
            let edge = rule.conclusion.edge;
            if !sig.leq(self.table.sort(u), sig.edge(edge).source) {
                continue;
            }
            let mut b: Binding = vec![None; rule.metas.len()];
            let term = self.table.term(u).clone();
            if match_pattern(sig, &rule.metas, &rule.conclusion.source, &term, &mut Ctx::new(), &mut b) != Some(true) {
                continue;
            }
            let key = (u, edge);
            if self.plans[ri].free_labels {
                let mut tuples = self.static_tuples[edge.index()].clone();
                if let Some(extra) = self.demands.get(&key) {
                    tuples.extend(extra.iter().cloned());
                }
                for tuple in tuples {
                    let mut b2 = b.clone();
                    let ok = rule.conclusion.labels.iter().zip(&tuple).all(|(pat, &l)| {
                        match_pattern(sig, &rule.metas, pat, self.table.term(l), &mut Ctx::new(), &mut b2) == Some(true)
                    });
                    if ok {
                        self.fire(ri, key, b2);
                    }
                }
            } else {
                self.fire(ri, key, b);
            }
        }
    }

    fn fire(&mut self, ri: usize, key: Key, b: Binding) {
        let sig = self.sig;
        let rule = &sig.rules[ri];
        let mut bindings = vec![b];
        for &pi in &self.plans[ri].order.clone() {
            let mut next = Vec::new();
            for b in &bindings {
                self.premise(rule, &rule.premises[pi], key, b, &mut next);
            }
            bindings = next;
            if bindings.is_empty() {
                return;
            }
        }
        for b in bindings {
            self.conclude(rule, key, &b);
        }
    }

    fn instantiate(&self, metas: &[MetaDecl], t: &Term, b: &Binding) -> Option<Term> {
        let t = instantiate_at(self.sig, metas, t, b, 0).ok()?;
        normalize(self.sig, &t).ok()
    }

    fn premise(&mut self, rule: &Rule, p: &TransitionPattern, key: Key, b: &Binding, out: &mut Vec<Binding>) {
        let sig = self.sig;
        let bound = |t: &Term| t.metas().iter().all(|m| b[m.index()].is_some());
        let mut sources: Vec<(TermId, Binding)> = Vec::new();
        if bound(&p.source) {
            let Some(t) = self.instantiate(&rule.metas, &p.source, b) else {
                self.taint.insert(key);
                return;
            };
            match self.admit(t) {
                Some(id) => sources.push((id, b.clone())),
                None => {
                    self.blocked += 1;
                    self.taint.insert(key);
                    return;
                }
            }
        } else if let Some(m) = p.source.as_bare_meta() {
            let decl = &rule.metas[m.index()];
            for &(s, e) in self.trans.keys() {
                if e == p.edge && sig.leq(self.table.sort(s), decl.sort) && decl.ctx.is_empty() {
                    let mut b2 = b.clone();
                    b2[m.index()] = Some(self.table.term(s).clone());
                    sources.push((s, b2));
                }
            }
            sources.dedup_by_key(|(s, _)| *s);
        } else {
            self.taint.insert(key);
            return;
        }
        for (s, b) in sources {
            self.deps.push((key, (s, p.edge)));
            let ground_labels = p.labels.iter().all(|l| l.metas().iter().all(|m| b[m.index()].is_some()));
            let candidates: Vec<(Vec<TermId>, TermId)> = if ground_labels {
                let mut ls = Vec::with_capacity(p.labels.len());
                for l in &p.labels {
                    let Some(t) = self.instantiate(&rule.metas, l, &b) else {
                        self.taint.insert(key);
                        return;
                    };
                    let Some(id) = self.table.intern(sig, t) else {
                        self.taint.insert(key);
                        return;
                    };
                    ls.push(id);
                }
                self.demand(s, p.edge, &ls);
                self.trans
                    .get(&(s, p.edge))
                    .map(|set| set.iter().filter(|(l, _)| *l == ls).cloned().collect())
                    .unwrap_or_default()
            } else {
                self.trans
                    .get(&(s, p.edge))
                    .map(|set| set.iter().cloned().collect())
                    .unwrap_or_default()
            };
            for (ls, tgt) in candidates {
                let mut b2 = b.clone();
                let mut ok = true;
                if !ground_labels {
                    for (pat, &l) in p.labels.iter().zip(&ls) {
                        match match_pattern(sig, &rule.metas, pat, self.table.term(l), &mut Ctx::new(), &mut b2) {
                            Some(true) => {}
                            Some(false) => {
                                ok = false;
                                break;
                            }
                            None => {
                                self.taint.insert(key);
                                ok = false;
                                break;
                            }
                        }
                    }
                }
                if !ok {
                    continue;
                }
                match match_pattern(sig, &rule.metas, &p.target, self.table.term(tgt), &mut Ctx::new(), &mut b2) {
                    Some(true) => out.push(b2),
                    Some(false) => {}
                    None => {
                        self.taint.insert(key);
                    }
                }
            }
        }
    }

    fn conclude(&mut self, rule: &Rule, key: Key, b: &Binding) {
        let c = &rule.conclusion;
        let Some(target) = self.instantiate(&rule.metas, &c.target, b) else {
            self.taint.insert(key);
            return;
        };
        let mut labels = Vec::with_capacity(c.labels.len());
        for l in &c.labels {
            let Some(t) = self.instantiate(&rule.metas, l, b) else {
                self.taint.insert(key);
                return;
            };
            let Some(id) = self.table.intern(self.sig, t) else {
                self.taint.insert(key);
                return;
            };
            labels.push(id);
        }
        match self.admit(target) {
            Some(t) => {
                let fresh = !self
                    .trans
                    .get(&key)
                    .is_some_and(|set| set.contains(&(labels.clone(), t)));
                if fresh {
                    self.pending.insert((key.0, key.1, labels, t));
                }
            }
            None => {
                self.dropped += 1;
                self.taint.insert(key);
            }
        }
    }
}

/// First-order matching of a rule template against a normal term.
/// `Some(false)` is a mismatch, `None` a template shape the matcher does not
/// support (a metavariable with replacements or an operation call whose
/// metavariables are not all bound yet).
pub fn match_pattern(
    sig: &Signature,
    metas: &[MetaDecl],
    pat: &Term,
    t: &Term,
    ctx: &mut Ctx,
    b: &mut Binding,
) -> Option<bool> {
    match (pat, t) {
        (Term::Var(i), Term::Var(j)) => Some(i == j),
        (Term::Var(_), _) => Some(false),
        (Term::Con(c, pargs), Term::Con(d, targs)) => {
            if c != d || pargs.len() != targs.len() {
                return Some(false);
            }
            for (k, (pa, ta)) in pargs.iter().zip(targs).enumerate() {
                let binders = &sig.con(*c).args[k].binders;
                let n = ctx.len();
                ctx.extend(binders.iter().copied());
                let r = match_pattern(sig, metas, pa, ta, ctx, b);
                ctx.truncate(n);
                if r != Some(true) {
                    return r;
                }
            }
            Some(true)
        }
        (Term::Con(..), _) => Some(false),
        (Term::Meta(m, args), _) if args.is_empty() => {
            let decl = &metas[m.index()];
            let q = decl.ctx.len();
            if q > ctx.len() || decl.ctx[..] != ctx[..q] {
                return Some(false);
            }
            let Some(value) = strengthen(sig, t, (ctx.len() - q) as u32, 0) else {
                return Some(false);
            };
            match &b[m.index()] {
                Some(existing) => Some(*existing == value),
                None => {
                    let ok = least_sort(sig, &decl.ctx, &value).is_ok_and(|s| sig.leq(s, decl.sort));
                    if ok {
                        b[m.index()] = Some(value);
                    }
                    Some(ok)
                }
            }
        }
        _ => {
            if pat.metas().iter().any(|m| b[m.index()].is_none()) {
                return None;
            }
            let inst = instantiate_at(sig, metas, pat, b, ctx.len() as u32).ok()?;
            let norm = normalize(sig, &inst).ok()?;
            Some(norm == *t)
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::kernel::substitute;
    use crate::testutil::{sort, sr, t};

    type Triple = (Term, EdgeId, Vec<Term>, Term);

    fn triples(store: &TransitionStore) -> BTreeSet<Triple> {
        store
            .iter()
            .map(|(s, e, ls, tg)| {
                (store.term(s).clone(), e, ls.iter().map(|&l| store.term(l).clone()).collect(), store.term(tg).clone())
            })
            .collect()
    }

    fn derive(sig: &Signature, seeds: &[&str], label_size: usize, fuel: usize) -> TransitionStore {
        let seeds: Vec<Term> = seeds.iter().map(|s| t(sig, s)).collect();
        derive_transitions(sig, &seeds, &build_label_universe(sig, label_size), fuel, 5000)
    }

    fn edge(sig: &Signature, name: &str) -> EdgeId {
        sig.edge_id(name).unwrap()
    }

    fn targets(store: &TransitionStore, sig: &Signature, src: &str, e: &str) -> BTreeSet<Term> {
        transitions_of(store, &t(sig, src), edge(sig, e))
            .unwrap()
            .entries
            .into_iter()
            .filter(|(ls, _)| ls.is_empty())
            .map(|(_, tg)| tg)
            .collect()
    }

    #[test]
    fn label_universes() {
        let sig = sr();
        let (v, c) = (sort(&sig, "v"), sort(&sig, "c"));
        let slot = |s| LabelSlot { sort: s, ctx: vec![] };
        let one = build_label_universe(&sig, 1);
        assert_eq!(one.terms(&slot(c)), &[t(&sig, "[]")]);
        assert!(one.terms(&slot(v)).is_empty());
        let two = build_label_universe(&sig, 2);
        assert!(two.contains(&slot(v), &t(&sig, "\\x.x")));
        let zero = build_label_universe(&sig, 0);
        assert!(zero.terms(&slot(v)).is_empty() && zero.terms(&slot(c)).is_empty());
    }

    #[test]
    fn reset_of_a_value_steps_to_it() {
        let sig = sr();
        let store = derive(&sig, &["<\\x.x>"], 2, 10);
        let got = targets(&store, &sig, "<\\x.x>", "tau");
        assert!(got.contains(&t(&sig, "\\x.x")) && got.contains(&t(&sig, "<\\x.x>")));
    }

    #[test]
    fn values_only_step_to_themselves() {
        let sig = sr();
        let store = derive(&sig, &["\\x.x"], 2, 10);
        assert_eq!(targets(&store, &sig, "\\x.x", "tau"), BTreeSet::from([t(&sig, "\\x.x")]));
    }

    #[test]
    fn lambdas_answer_every_value_label() {
        let sig = sr();
        let store = derive(&sig, &["\\x.x"], 3, 10);
        let v = sort(&sig, "v");
        let labels = build_label_universe(&sig, 3);
        let got = transitions_of(&store, &t(&sig, "\\x.x"), edge(&sig, "val")).unwrap();
        for w in labels.terms(&LabelSlot { sort: v, ctx: vec![] }) {
            assert!(got.entries.contains(&(vec![w.clone()], w.clone())), "{w}");
        }
    }

    #[test]
    fn beta_is_derived() {
        let sig = sr();
        let store = derive(&sig, &["(\\x.x) (\\y.y)"], 2, 4);
        assert!(targets(&store, &sig, "(\\x.x) (\\y.y)", "tau").contains(&t(&sig, "\\y.y")));
    }

    #[test]
    fn capture_and_return() {
        let sig = sr();
        let store = derive(&sig, &["<shift k. k>"], 2, 10);
        let got = targets(&store, &sig, "<shift k. k>", "tau");
        assert!(got.contains(&t(&sig, "<\\x.<x>>")));
        assert!(got.contains(&t(&sig, "\\x.<x>")));
    }

    #[test]
    fn every_universe_term_steps_to_itself() {
        let sig = sr();
        let store = derive(&sig, &["<shift k. k (\\x.x)>", "(\\x.x x) (\\y.y)"], 2, 10);
        let tau = edge(&sig, "tau");
        for &id in store.universe() {
            if store.edge_applies(&sig, id, tau) {
                assert!(store.contains(id, tau, &[], id), "{}", store.term(id));
            }
        }
    }

    #[test]
    fn divergence_is_not_exhausted() {
        let sig = sr();
        let omega = "(\\x. x x) (\\x. x x)";
        let store = derive(&sig, &[omega], 2, 30);
        let id = store.id_of(&t(&sig, omega)).unwrap();
        // Omega only reaches itself, so its store does reach a fixpoint
        assert!(store.is_exhausted(id, edge(&sig, "tau")));
        assert!(store.successors(id, edge(&sig, "val")).is_empty());
        let short = derive(&sig, &["(\\x.x) ((\\y.y) (\\z.z))"], 2, 1);
        let id = short.id_of(&t(&sig, "(\\x.x) ((\\y.y) (\\z.z))")).unwrap();
        assert!(!short.is_exhausted_term(&sig, id));
        assert!(!transitions_of(&short, short.term(id), edge(&sig, "tau")).unwrap().exhausted);
    }

    #[test]
    fn unknown_terms_are_rejected() {
        let sig = sr();
        let store = derive(&sig, &["\\x.x"], 2, 4);
        assert_eq!(
            transitions_of(&store, &t(&sig, "\\y.\\x.y"), edge(&sig, "tau")),
            Err(EngineError::NotInUniverse)
        );
    }

    const SEEDS: [&str; 4] = ["<shift k. k>", "(\\x.x) ((\\y.y) (\\z.z))", "<(shift k. k) (\\x.x)>", "\\x.(\\y.y) x"];

    #[test]
    fn more_fuel_never_removes_transitions() {
        let sig = sr();
        let mut prev = BTreeSet::new();
        for fuel in [1, 2, 3, 5, 8, 30] {
            let now = triples(&derive(&sig, &SEEDS, 2, fuel));
            assert!(prev.is_subset(&now), "fuel {fuel}");
            prev = now;
        }
    }

    #[test]
    fn larger_labels_never_remove_transitions() {
        let sig = sr();
        let small = triples(&derive(&sig, &SEEDS, 1, 30));
        let large = triples(&derive(&sig, &SEEDS, 2, 30));
        assert!(small.is_subset(&large));
    }

    #[test]
    fn silent_steps_saturate() {
        let sig = sr();
        let store = derive(&sig, &SEEDS, 2, 30);
        let tau = edge(&sig, "tau");
        for (s, e, ls, tg) in store.iter() {
            if !store.is_exhausted_term(&sig, s) {
                continue;
            }
            for (_, mid) in store.successors(s, tau) {
                for (ls2, tg2) in store.successors(*mid, e) {
                    let _ = (ls, tg);
                    assert!(store.contains(s, e, ls2, *tg2), "{} {}", store.term(s), store.term(*tg2));
                }
            }
        }
    }

    #[test]
    fn value_transitions_factor_through_a_lambda() {
        let sig = sr();
        let seeds = crate::run::program_seeds(&sig, 4);
        let store = derive_transitions(&sig, &seeds, &build_label_universe(&sig, 2), 30, 5000);
        let (tau, val, lam) = (edge(&sig, "tau"), edge(&sig, "val"), sig.con_id("lam").unwrap());
        let mut checked = 0;
        for (s, e, ls, tg) in store.iter() {
            if e != val || !store.is_exhausted_term(&sig, s) {
                continue;
            }
            let w = store.term(ls[0]).clone();
            let found = store.successors(s, tau).iter().any(|(_, mid)| match store.term(*mid) {
                Term::Con(c, args) if *c == lam => {
                    let body = substitute(&sig, &args[0], &[w.clone()]);
                    store.id_of(&body).is_some_and(|b| store.contains(b, tau, &[], tg))
                }
                _ => false,
            });
            assert!(found, "{} -val[{}]-> {}", store.term(s), w, store.term(tg));
            checked += 1;
        }
        assert!(checked > 50, "{checked}");
    }
}
