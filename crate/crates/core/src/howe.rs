//! Howe closure over a finite universe of open and closed terms, relational
//! composition and transitive closure, and the property suite checked
//! against a derived transition store.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::bisim::Bisimilarity;
use crate::engine::{TermId, TransitionStore};
use crate::enumerate::enumerate_terms;
use crate::kernel::least_sort;
use crate::sig::Signature;
use crate::syntax::print_term_in;
use crate::term::{ConId, Ctx, EdgeId, SortId, Term};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct UId(pub u32);

impl UId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug)]
pub struct UEntry {
    pub ctx: Ctx,
    pub term: Term,
    pub sort: SortId,
    pub head: Option<ConId>,
    /// Universe ids of the constructor arguments, each in its extended
    /// context; `None` when an argument is outside the universe.
    pub args: Vec<Option<UId>>,
    pub store_id: Option<TermId>,
    /// Every subterm, at every depth, is in the universe.
    pub constructor_closed: bool,
}

/// A finite set of terms-in-context.
#[derive(Clone, Debug, Default)]
pub struct TermUniverse {
    entries: Vec<UEntry>,
    index: HashMap<(Ctx, Term), UId>,
    groups: HashMap<(Ctx, ConId), Vec<UId>>,
}

impl TermUniverse {
    /// Builds the universe from `(ctx, term, store id)` triples; duplicates
    /// and ill-sorted terms are dropped.
    pub fn new(sig: &Signature, items: impl IntoIterator<Item = (Ctx, Term, Option<TermId>)>) -> Self {
        let mut u = TermUniverse::default();
        for (ctx, term, store_id) in items {
            let key = (ctx.clone(), term.clone());
            if u.index.contains_key(&key) {
                continue;
            }
            let Ok(sort) = least_sort(sig, &ctx, &term) else { continue };
            let head = match &term {
                Term::Con(c, _) => Some(*c),
                _ => None,
            };
            let id = UId(u.entries.len() as u32);
            u.index.insert(key, id);
            if let Some(c) = head {
                u.groups.entry((ctx.clone(), c)).or_default().push(id);
            }
            u.entries.push(UEntry { ctx, term, sort, head, args: Vec::new(), store_id, constructor_closed: false });
        }
        for i in 0..u.entries.len() {
            let e = &u.entries[i];
            let args = match &e.term {
                Term::Con(c, args) => args
                    .iter()
                    .enumerate()
                    .map(|(k, a)| {
                        let mut ctx = e.ctx.clone();
                        ctx.extend(sig.con(*c).args[k].binders.iter().copied());
                        u.index.get(&(ctx, a.clone())).copied()
                    })
                    .collect(),
                _ => Vec::new(),
            };
            u.entries[i].args = args;
        }
        // closedness under subterms, smallest terms first
        let mut order: Vec<usize> = (0..u.entries.len()).collect();
        order.sort_by_key(|&i| u.entries[i].term.size());
        for i in order {
            let closed = u.entries[i]
                .args
                .iter()
                .all(|a| a.is_some_and(|a| u.entries[a.index()].constructor_closed));
            u.entries[i].constructor_closed = closed;
        }
        u
    }

    /// Closed store terms, closed terms of every other sort up to
    /// `term_size`, and open terms in contexts of binder sorts: a context of
    /// length `k` holds terms up to `term_size - k` nodes.
    pub fn for_store(sig: &Signature, store: &TransitionStore, term_size: usize) -> Self {
        let mut items: Vec<(Ctx, Term, Option<TermId>)> =
            store.universe().iter().map(|&id| (Ctx::new(), store.term(id).clone(), Some(id))).collect();
        for s in sig.sorts() {
            for t in enumerate_terms(sig, s, &Ctx::new(), term_size) {
                let sid = store.id_of(&t);
                items.push((Ctx::new(), t, sid));
            }
        }
        for ctx in binder_contexts(sig, term_size) {
            if ctx.is_empty() {
                continue;
            }
            let budget = term_size.saturating_sub(ctx.len());
            for s in sig.sorts() {
                for t in enumerate_terms(sig, s, &ctx, budget) {
                    items.push((ctx.clone(), t, None));
                }
            }
        }
        // subterms of store terms, so that every store term is
        // constructor-closed
        let mut i = 0;
        while i < items.len() {
            if let (ctx, Term::Con(c, args), _) = &items[i] {
                let sub: Vec<(Ctx, Term, Option<TermId>)> = args
                    .iter()
                    .enumerate()
                    .map(|(k, a)| {
                        let mut inner = ctx.clone();
                        inner.extend(sig.con(*c).args[k].binders.iter().copied());
                        let sid = if inner.is_empty() { store.id_of(a) } else { None };
                        (inner, a.clone(), sid)
                    })
                    .collect();
                items.extend(sub);
            }
            i += 1;
        }
        TermUniverse::new(sig, items)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, id: UId) -> &UEntry {
        &self.entries[id.index()]
    }

    pub fn entries(&self) -> impl Iterator<Item = (UId, &UEntry)> {
        self.entries.iter().enumerate().map(|(i, e)| (UId(i as u32), e))
    }

    pub fn id_of(&self, ctx: &Ctx, t: &Term) -> Option<UId> {
        self.index.get(&(ctx.clone(), t.clone())).copied()
    }

    pub fn store_entry(&self, id: TermId, t: &Term) -> Option<UId> {
        self.id_of(&Ctx::new(), t).filter(|u| self.entry(*u).store_id == Some(id))
    }

    fn group(&self, ctx: &Ctx, c: ConId) -> &[UId] {
        self.groups.get(&(ctx.clone(), c)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn print(&self, sig: &Signature, id: UId) -> String {
        let e = self.entry(id);
        let names: Vec<String> = (0..e.ctx.len()).map(|i| format!("x{}", i + 1)).collect();
        print_term_in(sig, &names, &e.term)
    }
}

/// Binding contexts reachable by going under constructor binders, up to
/// length `term_size - 1`, shortest first.
fn binder_contexts(sig: &Signature, term_size: usize) -> Vec<Ctx> {
    let mut out = vec![Ctx::new()];
    let mut seen: BTreeSet<Ctx> = out.iter().cloned().collect();
    let mut i = 0;
    while i < out.len() {
        let base = out[i].clone();
        i += 1;
        for c in &sig.cons {
            for a in &c.args {
                if a.binders.is_empty() {
                    continue;
                }
                let mut ctx = base.clone();
                ctx.extend(a.binders.iter().copied());
                if ctx.len() < term_size && seen.insert(ctx.clone()) {
                    out.push(ctx);
                }
            }
        }
    }
    out
}

/// A relation on universe ids, stored as successor sets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct URelation {
    succ: BTreeMap<UId, BTreeSet<UId>>,
    len: usize,
}

impl URelation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn identity(ids: impl IntoIterator<Item = UId>) -> Self {
        let mut r = URelation::new();
        for i in ids {
            r.insert(i, i);
        }
        r
    }

    pub fn insert(&mut self, a: UId, b: UId) -> bool {
        let fresh = self.succ.entry(a).or_default().insert(b);
        if fresh {
            self.len += 1;
        }
        fresh
    }

    pub fn remove(&mut self, a: UId, b: UId) -> bool {
        let gone = self.succ.get_mut(&a).is_some_and(|s| s.remove(&b));
        if gone {
            self.len -= 1;
        }
        gone
    }

    pub fn contains(&self, a: UId, b: UId) -> bool {
        self.succ.get(&a).is_some_and(|s| s.contains(&b))
    }

    pub fn successors(&self, a: UId) -> impl Iterator<Item = UId> + '_ {
        self.succ.get(&a).into_iter().flatten().copied()
    }

    pub fn successor_count(&self, a: UId) -> usize {
        self.succ.get(&a).map_or(0, BTreeSet::len)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (UId, UId)> + '_ {
        self.succ.iter().flat_map(|(&a, s)| s.iter().map(move |&b| (a, b)))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_subset(&self, other: &URelation) -> bool {
        self.pairs().all(|(a, b)| other.contains(a, b))
    }

    pub fn union_with(&mut self, other: &URelation) {
        for (a, b) in other.pairs() {
            self.insert(a, b);
        }
    }

    pub fn converse(&self) -> URelation {
        let mut r = URelation::new();
        for (a, b) in self.pairs() {
            r.insert(b, a);
        }
        r
    }
}

/// `{(a, c) : (a, b) in r, (b, c) in s}`.
pub fn compose_relations(r: &URelation, s: &URelation) -> URelation {
    let mut out = URelation::new();
    for (a, b) in r.pairs() {
        for c in s.successors(b) {
            out.insert(a, c);
        }
    }
    out
}

/// The least transitive relation containing `r`.
pub fn transitive_closure(r: &URelation) -> URelation {
    let mut out = URelation::new();
    for (&a, direct) in &r.succ {
        let mut stack: Vec<UId> = direct.iter().copied().collect();
        while let Some(b) = stack.pop() {
            if out.insert(a, b) {
                stack.extend(r.successors(b));
            }
        }
    }
    out
}

/// The comparison relation for the Howe closure: the bisimilarity
/// approximant on closed store terms, the identity everywhere else.
pub fn sim_relation(universe: &TermUniverse, store: &TransitionStore, bisim: &Bisimilarity) -> URelation {
    let mut by_block: BTreeMap<u32, Vec<UId>> = BTreeMap::new();
    let mut r = URelation::new();
    for (id, e) in universe.entries() {
        match e.store_id.and_then(|s| bisim.block(s)) {
            Some(b) if e.ctx.is_empty() && store.in_universe(e.store_id.unwrap()) => {
                by_block.entry(b).or_default().push(id)
            }
            _ => {
                r.insert(id, id);
            }
        }
    }
    for members in by_block.values() {
        for &a in members {
            for &b in members {
                r.insert(a, b);
            }
        }
    }
    r
}

#[derive(Clone, Debug)]
pub struct HoweClosure {
    pub base: URelation,
    pub sim: URelation,
    pub closure: URelation,
    pub iterations: usize,
    pub converged: bool,
}

/// Variables are related to themselves: they are the nullary part of the
/// congruence rule.
fn variable_pairs(universe: &TermUniverse) -> Vec<UId> {
    universe
        .entries()
        .filter(|(_, e)| matches!(e.term, Term::Var(_)))
        .map(|(id, _)| id)
        .collect()
}

/// Pairs `(t, s)` with the same head and pointwise related arguments
/// that are missing from `h`.
fn congruence_gaps(universe: &TermUniverse, h: &URelation, t: UId, out: &mut Vec<(UId, UId)>) {
    let e = universe.entry(t);
    let Some(c) = e.head else { return };
    let Some(args) = e.args.iter().copied().collect::<Option<Vec<UId>>>() else { return };
    let group = universe.group(&e.ctx, c);
    let product: usize = args.iter().map(|&a| h.successor_count(a)).product();
    if args.is_empty() {
        if !h.contains(t, t) {
            out.push((t, t));
        }
        return;
    }
    if product == 0 {
        return;
    }
    if product <= group.len() {
        let lists: Vec<Vec<UId>> = args.iter().map(|&a| h.successors(a).collect()).collect();
        let mut choice = vec![0usize; lists.len()];
        'outer: loop {
            let picked: Vec<Term> = choice
                .iter()
                .zip(&lists)
                .map(|(&k, l)| universe.entry(l[k]).term.clone())
                .collect();
            if let Some(s) = universe.id_of(&e.ctx, &Term::Con(c, picked)) {
                if !h.contains(t, s) {
                    out.push((t, s));
                }
            }
            for pos in (0..choice.len()).rev() {
                choice[pos] += 1;
                if choice[pos] < lists[pos].len() {
                    continue 'outer;
                }
                choice[pos] = 0;
            }
            break;
        }
    } else {
        for &s in group {
            if h.contains(t, s) {
                continue;
            }
            let se = universe.entry(s);
            let ok = args
                .iter()
                .zip(&se.args)
                .all(|(&a, b)| b.is_some_and(|b| h.contains(a, b)));
            if ok {
                out.push((t, s));
            }
        }
    }
}

fn composition_gaps(h: &URelation, sim: &URelation, a: UId, out: &mut Vec<(UId, UId)>) {
    for b in h.successors(a) {
        for c in sim.successors(b) {
            if !h.contains(a, c) {
                out.push((a, c));
            }
        }
    }
}

/// Least relation containing `base` closed under constructor congruence
/// and right composition with `sim`, by iteration to a fixpoint.
pub fn howe_closure(universe: &TermUniverse, base: &URelation, sim: &URelation, max_iter: usize) -> HoweClosure {
    let mut h = base.clone();
    for v in variable_pairs(universe) {
        h.insert(v, v);
    }
    let mut iterations = 0;
    let mut converged = false;
    // process terms by size so that congruence mostly fires bottom-up
    let mut order: Vec<UId> = universe.entries().map(|(id, _)| id).collect();
    order.sort_by_key(|&id| universe.entry(id).term.size());
    while iterations < max_iter {
        iterations += 1;
        let mut changed = false;
        let mut gaps = Vec::new();
        for &t in &order {
            gaps.clear();
            congruence_gaps(universe, &h, t, &mut gaps);
            for &(a, b) in &gaps {
                changed |= h.insert(a, b);
            }
            gaps.clear();
            composition_gaps(&h, sim, t, &mut gaps);
            for &(a, b) in &gaps {
                changed |= h.insert(a, b);
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    HoweClosure { base: base.clone(), sim: sim.clone(), closure: h, iterations, converged }
}

/// Whether `(a, b)` follows from `h` by one closure rule instance.
pub fn derivable(universe: &TermUniverse, h: &URelation, sim: &URelation, a: UId, b: UId) -> bool {
    let ea = universe.entry(a);
    let eb = universe.entry(b);
    if a == b && matches!(ea.term, Term::Var(_)) {
        return true;
    }
    if ea.head.is_some() && ea.head == eb.head && ea.ctx == eb.ctx {
        let ok = ea
            .args
            .iter()
            .zip(&eb.args)
            .all(|(x, y)| matches!((x, y), (Some(x), Some(y)) if h.contains(*x, *y)));
        if ok {
            return true;
        }
    }
    h.successors(a).any(|m| sim.contains(m, b))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PropertyCheck {
    pub name: String,
    pub violations: Vec<String>,
    pub skips: usize,
    pub pairs_checked: usize,
}

impl PropertyCheck {
    fn new(name: &str) -> Self {
        PropertyCheck { name: name.into(), ..Default::default() }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct HoweReport {
    pub checks: Vec<PropertyCheck>,
}

impl HoweReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(PropertyCheck::passed)
    }

    pub fn violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations.len()).sum()
    }
}

/// Keeps at most this many witnesses per check.
const MAX_WITNESSES: usize = 20;

fn record(check: &mut PropertyCheck, witness: impl FnOnce() -> String) {
    if check.violations.len() < MAX_WITNESSES {
        check.violations.push(witness());
    } else if check.violations.len() == MAX_WITNESSES {
        check.violations.push("...".into());
    }
}

/// Checks the closure laws of `hc.closure`, symmetry of its transitive
/// closure, and the flexible simulation property against `store`.
pub fn check_howe_properties(sig: &Signature, universe: &TermUniverse, hc: &HoweClosure, store: &TransitionStore) -> HoweReport {
    let h = &hc.closure;
    let sim = &hc.sim;
    let pr = |id: UId| universe.print(sig, id);
    let pair = |a: UId, b: UId| format!("({}, {})", pr(a), pr(b));

    let mut cong = PropertyCheck::new("congruence");
    let mut gaps = Vec::new();
    for (t, e) in universe.entries() {
        if e.head.is_none() {
            continue;
        }
        if e.args.iter().any(Option::is_none) {
            cong.skips += 1;
            continue;
        }
        gaps.clear();
        congruence_gaps(universe, h, t, &mut gaps);
        cong.pairs_checked += 1;
        for &(a, b) in &gaps {
            record(&mut cong, || pair(a, b));
        }
    }

    let mut comp = PropertyCheck::new("right-composition");
    for (a, b) in h.pairs() {
        for c in sim.successors(b) {
            comp.pairs_checked += 1;
            if !h.contains(a, c) {
                record(&mut comp, || format!("{} then sim {}", pair(a, b), pair(b, c)));
            }
        }
    }

    let mut refl = PropertyCheck::new("reflexivity");
    for (t, e) in universe.entries() {
        if !e.constructor_closed {
            refl.skips += 1;
            continue;
        }
        refl.pairs_checked += 1;
        if !h.contains(t, t) {
            record(&mut refl, || pair(t, t));
        }
    }

    let mut simh = PropertyCheck::new("sim-inclusion");
    for (a, b) in sim.pairs() {
        if !universe.entry(a).constructor_closed {
            simh.skips += 1;
            continue;
        }
        simh.pairs_checked += 1;
        if !h.contains(a, b) {
            record(&mut simh, || pair(a, b));
        }
    }

    let mut symm = PropertyCheck::new("symmetry");
    let plus = transitive_closure(h);
    for (a, b) in plus.pairs() {
        if !(universe.entry(a).constructor_closed && universe.entry(b).constructor_closed) {
            symm.skips += 1;
            continue;
        }
        symm.pairs_checked += 1;
        if !plus.contains(b, a) {
            record(&mut symm, || pair(a, b));
        }
    }

    let key = flexible_check(sig, universe, h, store);
    HoweReport { checks: vec![cong, comp, refl, simh, symm, key] }
}

/// For every related pair of exhausted closed programs, every observable
/// transition of the left term, and every label tuple related to its labels
/// componentwise, the right term has a transition with those labels to a
/// related target.
pub fn flexible_check(sig: &Signature, universe: &TermUniverse, h: &URelation, store: &TransitionStore) -> PropertyCheck {
    let mut key = PropertyCheck::new("flexible-simulation");
    let uid_of_store = |id: TermId| universe.id_of(&Ctx::new(), store.term(id));
    let mut related_labels: HashMap<TermId, Vec<TermId>> = HashMap::new();
    let mut label_alternatives = |l: TermId| -> Vec<TermId> {
        related_labels
            .entry(l)
            .or_insert_with(|| {
                let Some(lu) = uid_of_store_label(universe, store, l) else { return Vec::new() };
                h.successors(lu)
                    .filter_map(|m| store.table().get(&universe.entry(m).term))
                    .collect()
            })
            .clone()
    };
    for (a, b) in h.pairs() {
        let (ea, eb) = (universe.entry(a), universe.entry(b));
        if !ea.ctx.is_empty() || !eb.ctx.is_empty() {
            continue;
        }
        let (Some(sa), Some(sb)) = (ea.store_id, eb.store_id) else {
            if ea.store_id.is_some() || eb.store_id.is_some() {
                key.skips += 1;
            }
            continue;
        };
        if !store.is_exhausted_term(sig, sa) || !store.is_exhausted_term(sig, sb) {
            key.skips += 1;
            continue;
        }
        for e in 0..sig.edges.len() {
            let e = EdgeId::from(e);
            for (ls, t1) in store.successors(sa, e) {
                if !store.is_observable(e, ls) {
                    continue;
                }
                let Some(u1) = uid_of_store(*t1) else {
                    key.skips += 1;
                    continue;
                };
                let alts: Vec<Vec<TermId>> = ls.iter().map(|&l| label_alternatives(l)).collect();
                for ls2 in cartesian(&alts) {
                    if !store.is_observable(e, &ls2) {
                        continue;
                    }
                    key.pairs_checked += 1;
                    let answered = store
                        .successors(sb, e)
                        .iter()
                        .filter(|(l, _)| *l == ls2)
                        .any(|(_, t2)| uid_of_store(*t2).is_some_and(|u2| h.contains(u1, u2)));
                    if !answered {
                        record(&mut key, || {
                            format!(
                                "({}, {}): {} -{}[{}]-> {} unanswered at labels [{}]",
                                universe.print(sig, a),
                                universe.print(sig, b),
                                universe.print(sig, a),
                                sig.edge(e).name,
                                ls.iter().map(|&l| crate::syntax::print_term(sig, store.term(l))).collect::<Vec<_>>().join(", "),
                                universe.print(sig, u1),
                                ls2.iter().map(|&l| crate::syntax::print_term(sig, store.term(l))).collect::<Vec<_>>().join(", "),
                            )
                        });
                    }
                }
            }
        }
    }
    key
}

fn uid_of_store_label(universe: &TermUniverse, store: &TransitionStore, l: TermId) -> Option<UId> {
    universe.id_of(&Ctx::new(), store.term(l))
}

fn cartesian(lists: &[Vec<TermId>]) -> Vec<Vec<TermId>> {
    let mut out = vec![Vec::new()];
    for l in lists {
        let mut next = Vec::new();
        for prefix in &out {
            for &x in l {
                let mut v: Vec<TermId> = prefix.clone();
                v.push(x);
                next.push(v);
            }
        }
        out = next;
    }
    out
}
