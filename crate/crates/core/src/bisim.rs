//! Bounded bisimilarity over a derived transition store, by partition
//! refinement, with distinguishing traces; sampled enhancement and
//! congruence checks on relations.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{TermId, TransitionStore};
use crate::kernel::{least_sort, substitute};
use crate::ops::normalize;
use crate::relation::Relation;
use crate::sig::Signature;
use crate::term::{Ctx, EdgeId, OpId, SortId, Term};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BisimError {
    #[error("candidate term is not in the store's universe")]
    NotInUniverse,
}

/// Greatest bisimulation on the store, restricted to transitions whose
/// labels lie in the static label universe. Partitions of every refinement
/// round are kept for trace extraction.
#[derive(Clone, Debug)]
pub struct Bisimilarity {
    pos: HashMap<TermId, usize>,
    members: Vec<TermId>,
    /// `history[k][i]`: block of `members[i]` after `k` rounds.
    history: Vec<Vec<u32>>,
}

type Signature1 = Vec<(EdgeId, Vec<TermId>, u32)>;

impl Bisimilarity {
    /// Refinement rounds until the partition was stable.
    pub fn rounds(&self) -> usize {
        self.history.len() - 1
    }

    fn final_blocks(&self) -> &[u32] {
        self.history.last().unwrap()
    }

    pub fn block(&self, id: TermId) -> Option<u32> {
        self.pos.get(&id).map(|&i| self.final_blocks()[i])
    }

    fn block_at(&self, k: usize, id: TermId) -> u32 {
        self.history[k][self.pos[&id]]
    }

    pub fn related(&self, a: TermId, b: TermId) -> bool {
        matches!((self.block(a), self.block(b)), (Some(x), Some(y)) if x == y)
    }

    pub fn block_count(&self) -> usize {
        self.final_blocks().iter().collect::<BTreeSet<_>>().len()
    }

    /// The approximant as a relation on closed terms.
    pub fn to_relation(&self, store: &TransitionStore) -> Relation {
        let universe = self.members.iter().map(|&id| (Ctx::new(), store.term(id).clone()));
        let by_term: HashMap<&Term, u32> = self
            .members
            .iter()
            .enumerate()
            .map(|(i, &id)| (store.term(id), self.final_blocks()[i]))
            .collect();
        Relation::from_classes(universe, |(ctx, t)| if ctx.is_empty() { by_term.get(t).copied() } else { None })
    }
}

fn observable_moves<'s>(store: &'s TransitionStore, sig: &Signature, id: TermId) -> Vec<(EdgeId, &'s Vec<TermId>, TermId)> {
    let mut out = Vec::new();
    for e in 0..sig.edges.len() {
        let e = EdgeId::from(e);
        for (ls, t) in store.successors(id, e) {
            if store.is_observable(e, ls) {
                out.push((e, ls, *t));
            }
        }
    }
    out
}

/// Partition refinement from the partition by top sort.
pub fn refine(sig: &Signature, store: &TransitionStore) -> Bisimilarity {
    let members: Vec<TermId> = store.universe().to_vec();
    let pos: HashMap<TermId, usize> = members.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let moves: Vec<Vec<(EdgeId, &Vec<TermId>, TermId)>> =
        members.iter().map(|&id| observable_moves(store, sig, id)).collect();
    let mut initial = Vec::with_capacity(members.len());
    let mut tops: BTreeMap<SortId, u32> = BTreeMap::new();
    for &id in &members {
        let top = sig.top_sort(store.sort(id));
        let n = tops.len() as u32;
        initial.push(*tops.entry(top).or_insert(n));
    }
    let mut history = vec![initial];
    loop {
        let cur = history.last().unwrap();
        let count = cur.iter().collect::<BTreeSet<_>>().len();
        let mut keys: HashMap<(u32, Signature1), u32> = HashMap::new();
        let mut next = Vec::with_capacity(members.len());
        for (i, mv) in moves.iter().enumerate() {
            let mut s: Signature1 = mv.iter().map(|&(e, ls, t)| (e, ls.clone(), cur[pos[&t]])).collect();
            s.sort();
            s.dedup();
            let n = keys.len() as u32;
            next.push(*keys.entry((cur[i], s)).or_insert(n));
        }
        let stable = keys.len() == count;
        history.push(next);
        if stable {
            break;
        }
    }
    Bisimilarity { pos, members, history }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct StoredTransition {
    pub source: TermId,
    pub edge: EdgeId,
    pub labels: Vec<TermId>,
    pub target: TermId,
}

/// One challenge of a distinguishing game and every answer the other side
/// has. The game continues from the challenge target and the first answer;
/// the last step has no answers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub challenger: Side,
    pub challenge: StoredTransition,
    pub answers: Vec<StoredTransition>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum BisimVerdict {
    EquivalentUpToBounds {
        depth: usize,
        fuel: usize,
        label_size: usize,
        /// Every term reachable from the pair had its transitions derived
        /// completely within the bounds.
        exhausted: bool,
    },
    Distinguished {
        trace: Vec<TraceStep>,
    },
}

impl BisimVerdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, BisimVerdict::EquivalentUpToBounds { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PairVerdict {
    pub left: TermId,
    pub right: TermId,
    pub verdict: BisimVerdict,
}

/// Refines the whole universe, then classifies each candidate pair.
pub fn compute_bisim(
    sig: &Signature,
    store: &TransitionStore,
    candidates: &[(Term, Term)],
) -> Result<(Bisimilarity, Vec<PairVerdict>), BisimError> {
    let ids: Vec<(TermId, TermId)> = candidates
        .iter()
        .map(|(a, b)| Ok((store.id_of(a).ok_or(BisimError::NotInUniverse)?, store.id_of(b).ok_or(BisimError::NotInUniverse)?)))
        .collect::<Result<_, BisimError>>()?;
    let bisim = refine(sig, store);
    let verdicts = ids
        .into_iter()
        .map(|(a, b)| PairVerdict { left: a, right: b, verdict: verdict(sig, store, &bisim, a, b) })
        .collect();
    Ok((bisim, verdicts))
}

pub fn verdict(sig: &Signature, store: &TransitionStore, bisim: &Bisimilarity, a: TermId, b: TermId) -> BisimVerdict {
    if bisim.related(a, b) {
        BisimVerdict::EquivalentUpToBounds {
            depth: bisim.rounds(),
            fuel: store.config.fuel,
            label_size: store.label_size,
            exhausted: reachable_exhausted(sig, store, &[a, b]),
        }
    } else {
        BisimVerdict::Distinguished { trace: distinguishing_trace(sig, store, bisim, a, b) }
    }
}

/// Whether every term reachable from `roots` is exhausted.
pub fn reachable_exhausted(sig: &Signature, store: &TransitionStore, roots: &[TermId]) -> bool {
    let mut seen: BTreeSet<TermId> = roots.iter().copied().collect();
    let mut stack: Vec<TermId> = roots.to_vec();
    while let Some(id) = stack.pop() {
        if !store.is_exhausted_term(sig, id) {
            return false;
        }
        for e in 0..sig.edges.len() {
            for (_, t) in store.successors(id, EdgeId::from(e)) {
                if seen.insert(*t) {
                    stack.push(*t);
                }
            }
        }
    }
    true
}

fn first_split(bisim: &Bisimilarity, a: TermId, b: TermId) -> Option<usize> {
    (0..bisim.history.len()).find(|&k| bisim.block_at(k, a) != bisim.block_at(k, b))
}

/// A challenge from `x` that `y` cannot answer within level `k - 1`.
fn unmatched(
    sig: &Signature,
    store: &TransitionStore,
    bisim: &Bisimilarity,
    k: usize,
    x: TermId,
    y: TermId,
) -> Option<(StoredTransition, Vec<StoredTransition>)> {
    for (e, ls, t) in observable_moves(store, sig, x) {
        let answers: Vec<StoredTransition> = store
            .successors(y, e)
            .iter()
            .filter(|(l, _)| l == ls)
            .map(|(l, t2)| StoredTransition { source: y, edge: e, labels: l.clone(), target: *t2 })
            .collect();
        let matched = answers.iter().any(|ans| bisim.block_at(k - 1, ans.target) == bisim.block_at(k - 1, t));
        if !matched {
            return Some((StoredTransition { source: x, edge: e, labels: ls.clone(), target: t }, answers));
        }
    }
    None
}

/// Plays the refinement history backwards: each step is a challenge the
/// other side cannot match at the previous level.
pub fn distinguishing_trace(
    sig: &Signature,
    store: &TransitionStore,
    bisim: &Bisimilarity,
    a: TermId,
    b: TermId,
) -> Vec<TraceStep> {
    let mut trace = Vec::new();
    let (mut left, mut right) = (a, b);
    while let Some(k) = first_split(bisim, left, right) {
        if k == 0 {
            break;
        }
        let (challenger, (challenge, answers)) = match unmatched(sig, store, bisim, k, left, right) {
            Some(found) => (Side::Left, found),
            None => match unmatched(sig, store, bisim, k, right, left) {
                Some(found) => (Side::Right, found),
                None => break,
            },
        };
        let next = answers.first().map(|ans| ans.target);
        let challenge_target = challenge.target;
        trace.push(TraceStep { challenger, challenge, answers });
        match (next, challenger) {
            (None, _) => break,
            (Some(n), Side::Left) => (left, right) = (challenge_target, n),
            (Some(n), Side::Right) => (left, right) = (n, challenge_target),
        }
    }
    trace
}

/// Replays a trace from the pair `(a, b)`: every challenge exists and leaves
/// the current term of its side, every answer list is complete for the other
/// side, and the last challenge is unanswered.
pub fn replay_trace(store: &TransitionStore, a: TermId, b: TermId, trace: &[TraceStep]) -> bool {
    let exists = |t: &StoredTransition| store.contains(t.source, t.edge, &t.labels, t.target);
    let (mut left, mut right) = (a, b);
    for (i, step) in trace.iter().enumerate() {
        let (me, other) = match step.challenger {
            Side::Left => (left, right),
            Side::Right => (right, left),
        };
        if step.challenge.source != me || !exists(&step.challenge) {
            return false;
        }
        let complete: Vec<StoredTransition> = store
            .successors(other, step.challenge.edge)
            .iter()
            .filter(|(l, _)| *l == step.challenge.labels)
            .map(|(l, t)| StoredTransition { source: other, edge: step.challenge.edge, labels: l.clone(), target: *t })
            .collect();
        if complete != step.answers {
            return false;
        }
        let last = i + 1 == trace.len();
        match step.answers.first() {
            None => return last,
            Some(_) if last => return false,
            Some(ans) => match step.challenger {
                Side::Left => (left, right) = (step.challenge.target, ans.target),
                Side::Right => (left, right) = (ans.target, step.challenge.target),
            },
        }
    }
    false
}

/// Outcome of a sampled closure check.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CheckReport {
    pub checked: usize,
    pub skipped: usize,
    pub violations: Vec<Violation>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: String,
    pub premise: (String, String),
    pub conclusion: (String, String),
}

fn closed_members<'r>(sig: &Signature, r: &'r Relation, sort: SortId) -> Vec<&'r Term> {
    r.members(|c, t| c.is_empty() && least_sort(sig, c, t).is_ok_and(|s| sig.leq(s, sort)))
        .into_iter()
        .map(|(_, t)| t)
        .collect()
}

fn has_sort(sig: &Signature, ctx: &Ctx, t: &Term, sort: SortId) -> bool {
    least_sort(sig, ctx, t).is_ok_and(|s| sig.leq(s, sort))
}

/// Samples instances of the enhancement conditions: related open terms
/// stay related under closing substitutions from the universe, and related
/// main arguments of every operation stay related under the operation.
pub fn check_enhanced(sig: &Signature, r: &Relation, samples: usize, seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let print = |t: &Term| crate::syntax::print_term(sig, t);
    let print_in = |ctx: &Ctx, t: &Term| {
        let names: Vec<String> = (0..ctx.len()).map(|i| format!("#{}", ctx.len() - 1 - i)).collect();
        crate::syntax::print_term_in(sig, &names, t)
    };
    let mut report = CheckReport::default();
    // kinds: substitution, then one per operation
    let kinds: Vec<Option<OpId>> = std::iter::once(None).chain((0..sig.ops.len()).map(|o| Some(OpId::from(o)))).collect();
    for _ in 0..samples {
        let kind = *kinds.choose(&mut rng).unwrap();
        match kind {
            None => {
                let Some((ctx, a, b)) = sample_pair(&mut rng, r, |c, _| !c.is_empty()) else {
                    report.skipped += 1;
                    continue;
                };
                let mut reps = Vec::with_capacity(ctx.len());
                for &slot in &ctx {
                    let pool = closed_members(sig, r, slot);
                    match pool.choose(&mut rng) {
                        Some(t) => reps.push((*t).clone()),
                        None => break,
                    }
                }
                if reps.len() != ctx.len() {
                    report.skipped += 1;
                    continue;
                }
                let (sa, sb) = (substitute(sig, &a, &reps), substitute(sig, &b, &reps));
                let empty = Ctx::new();
                if !r.in_universe(&empty, &sa) || !r.in_universe(&empty, &sb) {
                    report.skipped += 1;
                    continue;
                }
                report.checked += 1;
                if !r.related(&empty, &sa, &sb) {
                    report.violations.push(Violation {
                        kind: "substitution".into(),
                        premise: (print_in(&ctx, &a), print_in(&ctx, &b)),
                        conclusion: (print(&sa), print(&sb)),
                    });
                }
            }
            Some(o) => {
                let decl = sig.op(o);
                let Some((_, a, b)) = sample_pair(&mut rng, r, |c, t| c.is_empty() && has_sort(sig, c, t, decl.main)) else {
                    report.skipped += 1;
                    continue;
                };
                let mut aux = Vec::new();
                for &s in &decl.aux {
                    match closed_members(sig, r, s).choose(&mut rng) {
                        Some(t) => aux.push((*t).clone()),
                        None => break,
                    }
                }
                if aux.len() != decl.aux.len() {
                    report.skipped += 1;
                    continue;
                }
                let (Ok(ca), Ok(cb)) = (
                    normalize(sig, &Term::op(o, a.clone(), aux.clone())),
                    normalize(sig, &Term::op(o, b.clone(), aux)),
                ) else {
                    report.skipped += 1;
                    continue;
                };
                let empty = Ctx::new();
                if !r.in_universe(&empty, &ca) || !r.in_universe(&empty, &cb) {
                    report.skipped += 1;
                    continue;
                }
                report.checked += 1;
                if !r.related(&empty, &ca, &cb) {
                    report.violations.push(Violation {
                        kind: decl.name.clone(),
                        premise: (print(&a), print(&b)),
                        conclusion: (print(&ca), print(&cb)),
                    });
                }
            }
        }
    }
    report
}

/// A nontrivial related pair if there is one, else an identity pair.
fn sample_pair<R: Rng>(rng: &mut R, r: &Relation, keep: impl Fn(&Ctx, &Term) -> bool + Copy) -> Option<(Ctx, Term, Term)> {
    if let Some(p) = r.sample_nontrivial(rng, keep) {
        return Some(p);
    }
    let members = r.members(keep);
    let (c, t) = members.choose(rng)?;
    r.related(c, t, t).then(|| (c.clone(), t.clone(), t.clone()))
}

/// One sampled composite for the congruence check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CongruenceSample {
    pub premise: (Ctx, Term, Term),
    pub left: Term,
    pub right: Term,
}

/// Draws `samples` composites `c(.., a, ..)` / `c(.., b, ..)` with `(a, b)`
/// related by `r` and identical padding arguments from the universe.
pub fn sample_congruence(sig: &Signature, r: &Relation, samples: usize, seed: u64) -> Vec<Option<CongruenceSample>> {
    sample_congruence_where(sig, r, samples, seed, |_| true)
}

/// As [`sample_congruence`], drawing only from constructors accepted by
/// `keep` whose every argument position has members in the universe.
pub fn sample_congruence_where(
    sig: &Signature,
    r: &Relation,
    samples: usize,
    seed: u64,
    keep: impl Fn(crate::term::ConId) -> bool,
) -> Vec<Option<CongruenceSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let viable: Vec<(usize, usize)> = sig
        .cons
        .iter()
        .enumerate()
        .filter(|&(c, decl)| {
            keep(crate::term::ConId::from(c))
                && decl.args.iter().all(|s| {
                    !r.members(|ctx, t| *ctx == s.binders && has_sort(sig, ctx, t, s.sort)).is_empty()
                })
        })
        .flat_map(|(c, decl)| (0..decl.args.len()).map(move |i| (c, i)))
        .collect();
    (0..samples)
        .map(|_| {
            let &(c, i) = viable.choose(&mut rng)?;
            let decl = &sig.cons[c];
            let spec = &decl.args[i];
            let pair = sample_pair(&mut rng, r, |ctx, t| *ctx == spec.binders && has_sort(sig, ctx, t, spec.sort))?;
            let mut left = Vec::with_capacity(decl.args.len());
            let mut right = Vec::with_capacity(decl.args.len());
            for (j, s) in decl.args.iter().enumerate() {
                if j == i {
                    left.push(pair.1.clone());
                    right.push(pair.2.clone());
                    continue;
                }
                let pool = r.members(|ctx, t| *ctx == s.binders && has_sort(sig, ctx, t, s.sort));
                let (_, pad) = pool.choose(&mut rng)?;
                left.push(pad.clone());
                right.push(pad.clone());
            }
            let con = crate::term::ConId::from(c);
            Some(CongruenceSample { premise: pair, left: Term::Con(con, left), right: Term::Con(con, right) })
        })
        .collect()
}

/// Constructor congruence on sampled composites; composites outside the
/// universe are skipped.
pub fn check_congruence(sig: &Signature, r: &Relation, samples: usize, seed: u64) -> CheckReport {
    check_congruence_samples(sig, r, &sample_congruence(sig, r, samples, seed))
}

pub fn check_congruence_samples(sig: &Signature, r: &Relation, samples: &[Option<CongruenceSample>]) -> CheckReport {
    let mut report = CheckReport::default();
    let empty = Ctx::new();
    for s in samples {
        let Some(s) = s else {
            report.skipped += 1;
            continue;
        };
        if !r.in_universe(&empty, &s.left) || !r.in_universe(&empty, &s.right) {
            report.skipped += 1;
            continue;
        }
        report.checked += 1;
        if !r.related(&empty, &s.left, &s.right) {
            let (ctx, a, b) = &s.premise;
            let names: Vec<String> = (0..ctx.len()).map(|i| format!("#{}", ctx.len() - 1 - i)).collect();
            report.violations.push(Violation {
                kind: sig.con(head(&s.left)).name.clone(),
                premise: (
                    crate::syntax::print_term_in(sig, &names, a),
                    crate::syntax::print_term_in(sig, &names, b),
                ),
                conclusion: (crate::syntax::print_term(sig, &s.left), crate::syntax::print_term(sig, &s.right)),
            });
        }
    }
    report
}

fn head(t: &Term) -> crate::term::ConId {
    match t {
        Term::Con(c, _) => *c,
        _ => unreachable!("congruence composites are constructor terms"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::run::{program_seeds, RunConfig};
    use crate::testutil::{sr, t, t_in};

    const OMEGA: &str = "(\\x. x x) (\\x. x x)";

    fn store_for(sig: &Signature, terms: &[Term], fuel: usize, label_size: usize) -> TransitionStore {
        RunConfig { fuel, label_size, ..RunConfig::default() }.derive(sig, terms)
    }

    fn verdict_of(sig: &Signature, a: &str, b: &str, fuel: usize) -> (TransitionStore, TermId, TermId, BisimVerdict) {
        let (a, b) = (t(sig, a), t(sig, b));
        let store = store_for(sig, &[a.clone(), b.clone()], fuel, 2);
        let (_, v) = compute_bisim(sig, &store, &[(a, b)]).unwrap();
        let v = v.into_iter().next().unwrap();
        (store, v.left, v.right, v.verdict)
    }

    #[test]
    fn identity_pair_is_equivalent() {
        let sig = sr();
        assert!(verdict_of(&sig, "\\x.x", "\\x.x", 30).3.is_equivalent());
    }

    #[test]
    fn administrative_redex_is_absorbed() {
        let sig = sr();
        for fuel in [4, 30] {
            let (_, _, _, v) = verdict_of(&sig, "\\x.x", "\\x.(\\y.y) x", fuel);
            assert!(v.is_equivalent(), "fuel {fuel}: {v:?}");
        }
    }

    #[test]
    fn divergent_body_is_distinguished() {
        let sig = sr();
        let (store, a, b, v) = verdict_of(&sig, "\\x.x", &format!("\\x.{OMEGA}"), 30);
        let BisimVerdict::Distinguished { trace } = v else { panic!("{v:?}") };
        assert!(!trace.is_empty() && trace.len() <= 3);
        assert!(replay_trace(&store, a, b, &trace));
        // a truncated trace no longer replays
        assert!(!replay_trace(&store, a, b, &trace[..trace.len() - 1]) || trace.len() == 1);
        // the final challenge is a value challenge the divergent side never answers
        let last = trace.last().unwrap();
        assert_eq!(last.challenge.edge, sig.edge_id("val").unwrap());
        assert!(last.answers.is_empty());
    }

    #[test]
    fn captured_identity_context_is_equivalent() {
        let sig = sr();
        assert!(verdict_of(&sig, "<shift k. k>", "\\x.<x>", 30).3.is_equivalent());
    }

    #[test]
    fn candidates_outside_the_universe_are_rejected() {
        let sig = sr();
        let store = store_for(&sig, &[t(&sig, "\\x.x")], 10, 2);
        let r = compute_bisim(&sig, &store, &[(t(&sig, "\\x.x"), t(&sig, "\\y.\\x.x"))]);
        assert_eq!(r.err(), Some(BisimError::NotInUniverse));
    }

    fn universe_store(size: usize) -> (Signature, TransitionStore) {
        let sig = sr();
        let store = store_for(&sig, &program_seeds(&sig, size), 30, 2);
        (sig, store)
    }

    #[test]
    fn refinement_result_is_a_bisimulation() {
        // Independent check of the final partition: every observable move
        // of one member is answered by every other member of its block.
        let (sig, store) = universe_store(4);
        let bisim = refine(&sig, &store);
        let mut blocks: BTreeMap<u32, Vec<TermId>> = BTreeMap::new();
        for &id in store.universe() {
            blocks.entry(bisim.block(id).unwrap()).or_default().push(id);
        }
        for members in blocks.values() {
            for &x in members {
                for &y in members {
                    for (e, ls, tg) in observable_moves(&store, &sig, x) {
                        let answered = store
                            .successors(y, e)
                            .iter()
                            .any(|(l, t2)| l == ls && bisim.related(tg, *t2));
                        assert!(answered, "{} vs {}", store.term(x), store.term(y));
                    }
                }
            }
        }
    }

    #[test]
    fn split_pairs_have_replayable_traces() {
        let (sig, store) = universe_store(4);
        let bisim = refine(&sig, &store);
        let p = sig.sort_id("p").unwrap();
        let programs: Vec<TermId> = store
            .universe()
            .iter()
            .copied()
            .filter(|&id| sig.leq(store.sort(id), p))
            .take(40)
            .collect();
        let mut split = 0;
        for &a in &programs {
            for &b in &programs {
                if !bisim.related(a, b) {
                    let trace = distinguishing_trace(&sig, &store, &bisim, a, b);
                    assert!(replay_trace(&store, a, b, &trace), "{} vs {}", store.term(a), store.term(b));
                    split += 1;
                }
            }
        }
        assert!(split > 0);
    }

    #[test]
    fn distinctions_survive_larger_bounds() {
        let sig = sr();
        let seeds = program_seeds(&sig, 4);
        let small = store_for(&sig, &seeds, 10, 1);
        let large = store_for(&sig, &seeds, 30, 2);
        let (bs, bl) = (refine(&sig, &small), refine(&sig, &large));
        let ids = |st: &TransitionStore, t: &Term| st.id_of(t).unwrap();
        for a in &seeds {
            for b in &seeds {
                let (sa, sb) = (ids(&small, a), ids(&small, b));
                if !bs.related(sa, sb) && reachable_exhausted(&sig, &small, &[sa, sb]) {
                    assert!(!bl.related(ids(&large, a), ids(&large, b)));
                }
            }
        }
    }

    /// Closed store terms plus open programs in one binder and small
    /// contexts, so that every enhancement condition has instances.
    fn mixed_universe(sig: &Signature, store: &TransitionStore) -> Vec<(Ctx, Term)> {
        let (v, p, c) = (sig.sort_id("v").unwrap(), sig.sort_id("p").unwrap(), sig.sort_id("c").unwrap());
        let mut out: Vec<(Ctx, Term)> = store.universe().iter().map(|&id| (Ctx::new(), store.term(id).clone())).collect();
        out.extend(crate::enumerate::enumerate_terms(sig, p, &vec![v], 3).into_iter().map(|t| (vec![v], t)));
        out.extend(crate::enumerate::enumerate_terms(sig, c, &vec![], 3).into_iter().map(|t| (Ctx::new(), t)));
        out
    }

    #[test]
    fn identity_is_enhanced_and_a_congruence() {
        let (sig, store) = universe_store(4);
        let id = Relation::identity(mixed_universe(&sig, &store));
        let e = check_enhanced(&sig, &id, 100, 0);
        assert!(e.passed() && e.checked > 0, "{e:?}");
        let c = check_congruence(&sig, &id, 100, 0);
        assert!(c.passed() && c.checked > 0, "{c:?}");
    }

    #[test]
    fn approximant_is_enhanced_within_bounds() {
        // Open bodies are related when their abstractions are bisimilar.
        let (sig, store) = universe_store(5);
        let bisim = refine(&sig, &store);
        let v = sig.sort_id("v").unwrap();
        let lam = sig.con_id("lam").unwrap();
        let mut r = bisim.to_relation(&store);
        let lambdas: Vec<(TermId, &Term)> = store
            .universe()
            .iter()
            .filter_map(|&id| match store.term(id) {
                Term::Con(c, args) if *c == lam => Some((id, &args[0])),
                _ => None,
            })
            .collect();
        for &(x, a) in &lambdas {
            r.insert_universe(vec![v], a.clone());
            for &(y, b) in &lambdas {
                if bisim.related(x, y) {
                    r.insert_pair(vec![v], a.clone(), b.clone());
                }
            }
        }
        let report = check_enhanced(&sig, &r, 300, 0);
        assert!(report.passed(), "{:?}", report.violations);
        assert!(report.checked > 20, "{report:?}");
    }

    #[test]
    fn open_singleton_is_not_enhanced() {
        // the bodies of \x.x and \x.Omega, related in context [x]
        let sig = sr();
        let v = sig.sort_id("v").unwrap();
        let (a, b) = (t_in(&sig, &["x"], "x"), t(&sig, OMEGA));
        let w = t(&sig, "\\z.z");
        let mut r = Relation::empty([(vec![v], a.clone()), (vec![v], b.clone()), (Ctx::new(), w.clone()), (Ctx::new(), b.clone())]);
        r.insert_pair(vec![v], a, b);
        let report = check_enhanced(&sig, &r, 50, 0);
        assert!(!report.passed());
        assert_eq!(report.violations[0].kind, "substitution");
        assert_eq!(report.violations[0].conclusion, ("\\x. x".to_string(), crate::syntax::print_term(&sig, &t(&sig, OMEGA))));
    }

    #[test]
    fn congruence_keeps_absorbed_redex_related() {
        let sig = sr();
        let (a, b) = (t(&sig, "\\x.x"), t(&sig, "\\x.(\\y.y) x"));
        let pad = t(&sig, "\\z.z");
        let app = sig.con_id("app").unwrap();
        let (l, r) = (Term::Con(app, vec![a.clone(), pad.clone()]), Term::Con(app, vec![b.clone(), pad]));
        let store = store_for(&sig, &[a.clone(), b.clone(), l.clone(), r.clone()], 30, 2);
        let rel = refine(&sig, &store).to_relation(&store);
        let sample = CongruenceSample { premise: (Ctx::new(), a, b), left: l, right: r };
        let report = check_congruence_samples(&sig, &rel, &[Some(sample)]);
        assert_eq!((report.checked, report.violations.len()), (1, 0));
    }

    #[test]
    fn faulty_pair_breaks_congruence() {
        let sig = sr();
        let (a, b) = (t(&sig, "\\x.x"), t(&sig, &format!("\\x.{OMEGA}")));
        let (l, r) = (t(&sig, &format!("<(\\x.x) (\\z.z)>")), t(&sig, &format!("<(\\x.{OMEGA}) (\\z.z)>")));
        let universe = [a.clone(), b.clone(), l.clone(), r.clone()].map(|x| (Ctx::new(), x));
        let mut rel = Relation::identity(universe);
        rel.insert_pair(Ctx::new(), a.clone(), b.clone());
        // reset(app(-, \z.z)) is two constructors deep; check the app layer
        let app = sig.con_id("app").unwrap();
        let pad = t(&sig, "\\z.z");
        let (la, ra) = (Term::Con(app, vec![a.clone(), pad.clone()]), Term::Con(app, vec![b.clone(), pad]));
        rel.insert_universe(Ctx::new(), la.clone());
        rel.insert_universe(Ctx::new(), ra.clone());
        let sample = CongruenceSample { premise: (Ctx::new(), a, b), left: la, right: ra };
        let report = check_congruence_samples(&sig, &rel, &[Some(sample), None]);
        assert_eq!(report.checked, 1);
        assert_eq!(report.skipped, 1);
        assert_eq!(report.violations[0].kind, "app");
        let _ = (l, r);
    }

    #[test]
    fn relation_equivalence_laws() {
        let (sig, store) = universe_store(4);
        let r = refine(&sig, &store).to_relation(&store);
        let terms: Vec<&Term> = r.universe().iter().map(|(_, t)| t).take(60).collect();
        let e = Ctx::new();
        for a in &terms {
            assert!(r.related(&e, a, a));
            for b in &terms {
                assert_eq!(r.related(&e, a, b), r.related(&e, b, a));
                if r.related(&e, a, b) {
                    for c in &terms {
                        if r.related(&e, b, c) {
                            assert!(r.related(&e, a, c));
                        }
                    }
                }
            }
        }
    }
}
