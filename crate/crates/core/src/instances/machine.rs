//! A direct abstract machine for the shift/reset calculus: standard
//! call-by-value reduction by unique evaluation-context decomposition.
//! Used as an oracle for the rule engine.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::engine::{derive_with, EngineConfig, LabelUniverse, TransitionStore};
use crate::enumerate::TermSampler;
use crate::kernel::{least_sort, substitute};
use crate::sig::Signature;
use crate::syntax::print_term;
use crate::term::{ConId, EdgeId, SortId, Term};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MachineError {
    #[error("signature lacks constructor `{0}`")]
    MissingConstructor(String),
    #[error("not a closed program: {0}")]
    IllSorted(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MachineOutcome {
    Step(Term),
    Value(Term),
    /// A shift with no enclosing reset: its body (under the continuation
    /// binder) and the reset-free context around it, as a `c` term.
    ControlStuck { body: Term, local: Term },
}

#[derive(Debug, Clone, Copy)]
enum Frame<'t> {
    /// `[] e2`
    AppL(&'t Term),
    /// `v []`
    AppR(&'t Term),
    Reset,
}

enum Redex<'t> {
    Beta(&'t Term, &'t Term),
    ResetValue(&'t Term),
    Shift(&'t Term),
}

/// Constructor ids of the shift/reset signature, looked up by name.
#[derive(Debug, Clone)]
pub struct Machine<'s> {
    sig: &'s Signature,
    p: SortId,
    lam: ConId,
    app: ConId,
    shift: ConId,
    reset: ConId,
    hole: ConId,
    capp: ConId,
    cappr: ConId,
}

impl<'s> Machine<'s> {
    pub fn new(sig: &'s Signature) -> Result<Self, MachineError> {
        let con = |n: &str| sig.con_id(n).ok_or_else(|| MachineError::MissingConstructor(n.into()));
        Ok(Machine {
            sig,
            p: sig.sort_id("p").ok_or_else(|| MachineError::MissingConstructor("sort p".into()))?,
            lam: con("lam")?,
            app: con("app")?,
            shift: con("shift")?,
            reset: con("reset")?,
            hole: con("hole")?,
            capp: con("capp")?,
            cappr: con("cappr")?,
        })
    }

    fn is_value(&self, t: &Term) -> bool {
        matches!(t, Term::Con(c, _) if *c == self.lam)
    }

    /// Splits `t` into evaluation frames (outermost first) and a redex;
    /// `None` for values.
    fn decompose<'t>(&self, mut t: &'t Term, frames: &mut Vec<Frame<'t>>) -> Option<Redex<'t>> {
        loop {
            let Term::Con(c, args) = t else { return None };
            if *c == self.app {
                let (e1, e2) = (&args[0], &args[1]);
                if !self.is_value(e1) {
                    frames.push(Frame::AppL(e2));
                    t = e1;
                } else if !self.is_value(e2) {
                    frames.push(Frame::AppR(e1));
                    t = e2;
                } else {
                    return Some(Redex::Beta(e1, e2));
                }
            } else if *c == self.reset {
                if self.is_value(&args[0]) {
                    return Some(Redex::ResetValue(&args[0]));
                }
                frames.push(Frame::Reset);
                t = &args[0];
            } else if *c == self.shift {
                return Some(Redex::Shift(&args[0]));
            } else {
                return None;
            }
        }
    }

    /// Rebuilds a program around `t` from frames, innermost last.
    fn plug_frames(&self, frames: &[Frame<'_>], mut t: Term) -> Term {
        for f in frames.iter().rev() {
            t = match f {
                Frame::AppL(e2) => Term::con(self.app, vec![t, (*e2).clone()]),
                Frame::AppR(v) => Term::con(self.app, vec![(*v).clone(), t]),
                Frame::Reset => Term::con(self.reset, vec![t]),
            };
        }
        t
    }

    /// Reifies reset-free frames as a context term.
    fn frames_to_context(&self, frames: &[Frame<'_>]) -> Term {
        let mut c = Term::con(self.hole, vec![]);
        for f in frames.iter().rev() {
            c = match f {
                Frame::AppL(e2) => Term::con(self.cappr, vec![c, (*e2).clone()]),
                Frame::AppR(v) => Term::con(self.capp, vec![(*v).clone(), c]),
                Frame::Reset => unreachable!("local contexts are reset-free"),
            };
        }
        c
    }

    /// `E[t]` for a context term `E`.
    pub fn plug(&self, ctx: &Term, t: Term) -> Term {
        match ctx {
            Term::Con(c, _) if *c == self.hole => t,
            Term::Con(c, args) if *c == self.capp => Term::con(self.app, vec![args[0].clone(), self.plug(&args[1], t)]),
            Term::Con(c, args) if *c == self.cappr => Term::con(self.app, vec![self.plug(&args[0], t), args[1].clone()]),
            other => panic!("not an evaluation context: {other}"),
        }
    }

    /// `lam(x. <E[x]>)` for a closed context `E`.
    fn reified(&self, ctx: &Term) -> Term {
        let inner = self.plug(ctx, Term::Var(0));
        Term::con(self.lam, vec![Term::con(self.reset, vec![inner])])
    }

    /// `<b[k := lam(x. <E[x]>)]>`.
    pub fn capture(&self, body: &Term, ctx: &Term) -> Term {
        let k = self.reified(ctx);
        Term::con(self.reset, vec![substitute(self.sig, body, &[k])])
    }

    /// `E[F]`: the context `F` placed in the hole of `E`.
    pub fn compose(&self, outer: &Term, inner: &Term) -> Term {
        match outer {
            Term::Con(c, _) if *c == self.hole => inner.clone(),
            Term::Con(c, args) if *c == self.capp => Term::con(self.capp, vec![args[0].clone(), self.compose(&args[1], inner)]),
            Term::Con(c, args) if *c == self.cappr => {
                Term::con(self.cappr, vec![self.compose(&args[0], inner), args[1].clone()])
            }
            other => panic!("not an evaluation context: {other}"),
        }
    }

    pub fn check_program(&self, t: &Term) -> Result<(), MachineError> {
        match least_sort(self.sig, &Vec::new(), t) {
            Ok(s) if self.sig.leq(s, self.p) => Ok(()),
            _ => Err(MachineError::IllSorted(print_term(self.sig, t))),
        }
    }

    pub fn step(&self, t: &Term) -> MachineOutcome {
        let mut frames = Vec::new();
        match self.decompose(t, &mut frames) {
            None => MachineOutcome::Value(t.clone()),
            Some(Redex::Beta(f, v)) => {
                let Term::Con(_, body) = f else { unreachable!() };
                MachineOutcome::Step(self.plug_frames(&frames, substitute(self.sig, &body[0], &[v.clone()])))
            }
            Some(Redex::ResetValue(v)) => MachineOutcome::Step(self.plug_frames(&frames, v.clone())),
            Some(Redex::Shift(body)) => match frames.iter().rposition(|f| matches!(f, Frame::Reset)) {
                None => MachineOutcome::ControlStuck { body: body.clone(), local: self.frames_to_context(&frames) },
                Some(r) => {
                    let local = self.frames_to_context(&frames[r + 1..]);
                    MachineOutcome::Step(self.plug_frames(&frames[..r], self.capture(body, &local)))
                }
            },
        }
    }

    /// Runs τ-steps from `t`; the states visited (including `t`) and how
    /// the run ended.
    pub fn run(&self, t: &Term, fuel: usize) -> Run {
        let mut states = vec![t.clone()];
        let mut seen: BTreeSet<Term> = states.iter().cloned().collect();
        let mut cur = t.clone();
        for _ in 0..fuel {
            match self.step(&cur) {
                MachineOutcome::Step(next) => {
                    if !seen.insert(next.clone()) {
                        return Run { states, end: RunEnd::Cycle };
                    }
                    states.push(next.clone());
                    cur = next;
                }
                MachineOutcome::Value(v) => return Run { states, end: RunEnd::Value(v) },
                MachineOutcome::ControlStuck { body, local } => {
                    return Run { states, end: RunEnd::Stuck { body, local } }
                }
            }
        }
        Run { states, end: RunEnd::OutOfFuel }
    }

    pub fn weak_labels(&self, t: &Term, fuel: usize) -> WeakLabels {
        let run = self.run(t, fuel);
        match run.end {
            RunEnd::Value(Term::Con(_, args)) => WeakLabels { v_family: Some(args[0].clone()), ..Default::default() },
            RunEnd::Stuck { body, local } => WeakLabels { c_family: Some((body, local)), ..Default::default() },
            RunEnd::OutOfFuel | RunEnd::Cycle => WeakLabels { diverged: true, ..Default::default() },
            RunEnd::Value(_) => WeakLabels::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunEnd {
    Value(Term),
    Stuck { body: Term, local: Term },
    /// Revisited a state: the run loops forever.
    Cycle,
    OutOfFuel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub states: Vec<Term>,
    pub end: RunEnd,
}

impl Run {
    /// Whether `states` is the complete τ-reachable set.
    pub fn complete(&self) -> bool {
        !matches!(self.end, RunEnd::OutOfFuel)
    }
}

/// The labelled behaviour of a program after silent steps.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WeakLabels {
    /// Body `b` of the reached value `lam(x. b)`: label `w` leads to `b[x := w]`.
    pub v_family: Option<Term>,
    /// Shift body and local context: label `E` leads to
    /// `<b[k := lam(x. <E[F[x]]>)]>`.
    pub c_family: Option<(Term, Term)>,
    pub diverged: bool,
}

pub fn machine_step(sig: &Signature, t: &Term) -> Result<MachineOutcome, MachineError> {
    let m = Machine::new(sig)?;
    m.check_program(t)?;
    Ok(m.step(t))
}

pub fn machine_weak_labels(sig: &Signature, t: &Term, fuel: usize) -> Result<WeakLabels, MachineError> {
    let m = Machine::new(sig)?;
    m.check_program(t)?;
    Ok(m.weak_labels(t, fuel))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OracleReport {
    pub term: String,
    /// The engine store is exhausted for the term; only then is a
    /// disagreement a discrepancy.
    pub exhausted: bool,
    /// The machine run ended (value, stuck or cycle) within fuel.
    pub machine_complete: bool,
    pub tau_states: usize,
    pub labels_compared: usize,
    pub discrepancies: Vec<String>,
}

impl OracleReport {
    pub fn clean(&self) -> bool {
        self.discrepancies.is_empty()
    }

    /// Both sides were complete, so the comparison was conclusive.
    pub fn compared(&self) -> bool {
        self.exhausted && self.machine_complete
    }
}

fn show_set(sig: &Signature, s: &BTreeSet<Term>) -> String {
    let items: Vec<String> = s.iter().map(|t| print_term(sig, t)).collect();
    format!("{{{}}}", items.join(", "))
}

fn engine_targets(store: &TransitionStore, t: &Term, edge: EdgeId, labels: &[Term]) -> BTreeSet<Term> {
    let Some(id) = store.id_of(t) else { return BTreeSet::new() };
    let Some(ls) = labels.iter().map(|l| store.table().get(l)).collect::<Option<Vec<_>>>() else {
        return BTreeSet::new();
    };
    store
        .successors(id, edge)
        .iter()
        .filter(|(l, _)| *l == ls)
        .map(|(_, tg)| store.term(*tg).clone())
        .collect()
}

/// Derives transitions for `t` and compares them with the machine: the
/// τ-reachable set, and the value and context families at every label of
/// `labels`.
pub fn oracle_compare(
    sig: &Signature,
    t: &Term,
    fuel: usize,
    labels: &LabelUniverse,
) -> Result<OracleReport, MachineError> {
    let config = EngineConfig { fuel, ..EngineConfig::default() };
    let store = derive_with(sig, std::slice::from_ref(t), labels, &config);
    oracle_compare_in(sig, &store, t, fuel, labels)
}

/// As [`oracle_compare`], against an existing store.
pub fn oracle_compare_in(
    sig: &Signature,
    store: &TransitionStore,
    t: &Term,
    fuel: usize,
    labels: &LabelUniverse,
) -> Result<OracleReport, MachineError> {
    let m = Machine::new(sig)?;
    m.check_program(t)?;
    let edge = |n: &str| sig.edge_id(n).ok_or_else(|| MachineError::MissingConstructor(format!("edge {n}")));
    let (tau, val, ctx) = (edge("tau")?, edge("val")?, edge("ctx")?);
    let exhausted = store.id_of(t).is_some_and(|id| store.in_universe(id) && store.is_exhausted_term(sig, id));
    let run = m.run(t, fuel);
    let mut report = OracleReport {
        term: print_term(sig, t),
        exhausted,
        machine_complete: run.complete(),
        tau_states: run.states.len(),
        labels_compared: 0,
        discrepancies: Vec::new(),
    };
    if !report.compared() {
        return Ok(report);
    }
    let mut diff = |what: String, engine: &BTreeSet<Term>, machine: Option<BTreeSet<Term>>| match machine {
        Some(machine) if *engine != machine => report.discrepancies.push(format!(
            "{what}: engine {} machine {}",
            show_set(sig, engine),
            show_set(sig, &machine)
        )),
        Some(_) => {}
        None => report.discrepancies.push(format!("{what}: machine target run out of fuel")),
    };
    let machine_tau: BTreeSet<Term> = run.states.iter().cloned().collect();
    diff("tau".into(), &engine_targets(store, t, tau, &[]), Some(machine_tau));

    // targets of a family instance: everything the instance reaches silently
    let closure = |start: Term| -> Option<BTreeSet<Term>> {
        let r = m.run(&start, fuel);
        r.complete().then(|| r.states.into_iter().collect())
    };
    let mut compared = 0;
    let slot = |e: EdgeId| sig.edge(e).labels[0].clone();
    for w in labels.terms(&slot(val)) {
        compared += 1;
        let expected = match &run.end {
            RunEnd::Value(Term::Con(_, args)) => closure(substitute(sig, &args[0], &[w.clone()])),
            _ => Some(BTreeSet::new()),
        };
        let label = format!("val[{}]", print_term(sig, w));
        diff(label, &engine_targets(store, t, val, &[w.clone()]), expected);
    }
    for e in labels.terms(&slot(ctx)) {
        compared += 1;
        let expected = match &run.end {
            RunEnd::Stuck { body, local } => closure(m.capture(body, &m.compose(e, local))),
            _ => Some(BTreeSet::new()),
        };
        let label = format!("ctx[{}]", print_term(sig, e));
        diff(label, &engine_targets(store, t, ctx, &[e.clone()]), expected);
    }
    report.labels_compared = compared;
    Ok(report)
}

/// `count` closed programs of size at most `max_size`, sampled uniformly
/// per size from a seeded generator.
pub fn random_programs(sig: &Signature, count: usize, max_size: usize, seed: u64) -> Vec<Term> {
    let Some(p) = sig.sort_id("p") else { return Vec::new() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampler = TermSampler::new(sig);
    (0..count)
        .filter_map(|_| sampler.sample_up_to(&mut rng, p, &Vec::new(), max_size))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::shift_reset;
    use crate::syntax::parse_term;

    fn t(sig: &Signature, s: &str) -> Term {
        parse_term(sig, s).unwrap()
    }

    #[test]
    fn step_examples() {
        let sig = shift_reset();
        let step = |s: &str| machine_step(&sig, &t(&sig, s)).unwrap();
        assert_eq!(step(r"(\x. x) (\y. y)"), MachineOutcome::Step(t(&sig, r"\y. y")));
        assert_eq!(step(r"<\x. x>"), MachineOutcome::Step(t(&sig, r"\x. x")));
        assert_eq!(step(r"<shift k. k>"), MachineOutcome::Step(t(&sig, r"<\x. <x>>")));
        assert!(matches!(step(r"shift k. k"), MachineOutcome::ControlStuck { .. }));
        assert_eq!(step(r"\x. x"), MachineOutcome::Value(t(&sig, r"\x. x")));
    }

    #[test]
    fn weak_label_examples() {
        let sig = shift_reset();
        let wl = machine_weak_labels(&sig, &t(&sig, r"\x. x"), 10).unwrap();
        assert_eq!(wl.v_family, Some(Term::Var(0)));
        let wl = machine_weak_labels(&sig, &t(&sig, r"(shift k. k) (\y. y)"), 10).unwrap();
        let (body, local) = wl.c_family.unwrap();
        assert_eq!(body, Term::Var(0));
        assert_eq!(local, t(&sig, r"[] (\y. y)"));
        let wl = machine_weak_labels(&sig, &t(&sig, r"(\x. x x) (\x. x x)"), 25).unwrap();
        assert!(wl.diverged);
    }

    #[test]
    fn shift_captures_up_to_nearest_reset() {
        let sig = shift_reset();
        // <(\a. a) <(shift k. k) (\y. y)>> : only the inner context is captured
        let e = t(&sig, r"<(\a. a) <(shift k. k) (\y. y)>>");
        let next = t(&sig, r"<(\a. a) <\x. <x (\y. y)>>>");
        assert_eq!(machine_step(&sig, &e).unwrap(), MachineOutcome::Step(next));
    }

    /// Every position of `e` whose path from the root passes only through
    /// evaluation frames and whose subterm is a redex, found by visiting
    /// every position.
    fn redex_positions(sig: &Signature, e: &Term) -> Vec<Vec<usize>> {
        let con = |n: &str| sig.con_id(n).unwrap();
        let (lam, app, shift, reset) = (con("lam"), con("app"), con("shift"), con("reset"));
        let is_value = |t: &Term| matches!(t, Term::Con(c, _) if *c == lam);
        let mut all: Vec<(Vec<usize>, &Term)> = Vec::new();
        fn walk<'t>(t: &'t Term, path: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, &'t Term)>) {
            out.push((path.clone(), t));
            if let Term::Con(_, args) = t {
                for (i, a) in args.iter().enumerate() {
                    path.push(i);
                    walk(a, path, out);
                    path.pop();
                }
            }
        }
        walk(e, &mut Vec::new(), &mut all);
        let evaluation_path = |path: &[usize]| {
            let mut cur = e;
            for &i in path {
                let Term::Con(c, args) = cur else { return false };
                let ok = (*c == app && (i == 0 || is_value(&args[0]))) || *c == reset;
                if !ok {
                    return false;
                }
                cur = &args[i];
            }
            true
        };
        let is_redex = |t: &Term| match t {
            Term::Con(c, args) if *c == app => is_value(&args[0]) && is_value(&args[1]),
            Term::Con(c, args) if *c == reset => is_value(&args[0]),
            Term::Con(c, _) => *c == shift,
            _ => false,
        };
        all.into_iter()
            .filter(|(path, t)| evaluation_path(path) && is_redex(t))
            .map(|(path, _)| path)
            .collect()
    }

    #[test]
    fn decomposition_is_unique() {
        let sig = shift_reset();
        let lam = sig.con_id("lam").unwrap();
        for (i, e) in random_programs(&sig, 400, 9, 11).into_iter().enumerate() {
            let found = redex_positions(&sig, &e);
            assert!(found.len() <= 1, "{}: {found:?}", print_term(&sig, &e));
            let out = machine_step(&sig, &e).unwrap();
            match out {
                MachineOutcome::Value(_) => assert!(matches!(&e, Term::Con(c, _) if *c == lam)),
                _ => assert_eq!(found.len(), 1, "#{i} {}", print_term(&sig, &e)),
            }
        }
    }

    #[test]
    fn ill_sorted_input_is_rejected() {
        let sig = shift_reset();
        assert!(matches!(machine_step(&sig, &t(&sig, "[]")), Err(MachineError::IllSorted(_))));
        assert!(matches!(machine_step(&sig, &Term::Var(0)), Err(MachineError::IllSorted(_))));
    }

    #[test]
    fn context_family_instantiates_by_capture() {
        let sig = shift_reset();
        let m = Machine::new(&sig).unwrap();
        let wl = m.weak_labels(&t(&sig, r"(shift k. k) (\y. y)"), 10);
        let (body, local) = wl.c_family.unwrap();
        let e = t(&sig, r"(\z. z) []");
        let got = m.capture(&body, &m.compose(&e, &local));
        assert_eq!(got, t(&sig, r"<\x. <(\z. z) (x (\y. y))>>"));
    }

    #[test]
    fn runs_report_cycles_and_values() {
        let sig = shift_reset();
        let m = Machine::new(&sig).unwrap();
        let r = m.run(&t(&sig, r"(\x. x x) (\x. x x)"), 50);
        assert_eq!(r.end, RunEnd::Cycle);
        assert!(r.complete());
        let r = m.run(&t(&sig, r"<shift k. k>"), 50);
        assert_eq!(r.end, RunEnd::Value(t(&sig, r"\x. <x>")));
        assert_eq!(r.states.len(), 3);
        let r = m.run(&t(&sig, r"(\x. x) ((\x. x) (\y. y))"), 1);
        assert_eq!(r.end, RunEnd::OutOfFuel);
    }

    #[test]
    fn oracle_examples_agree() {
        let sig = shift_reset();
        let labels = crate::engine::build_label_universe(&sig, 2);
        for s in [r"(\x. x) (\y. y)", r"<shift k. k>", r"(shift k. k) (\y. y)", r"<(shift k. k (k (\z.z))) (\y. y)>"] {
            let r = oracle_compare(&sig, &t(&sig, s), 30, &labels).unwrap();
            assert!(r.compared(), "{r:?}");
            assert!(r.clean(), "{r:?}");
        }
    }

    #[test]
    fn oracle_agrees_on_random_programs() {
        let sig = shift_reset();
        let labels = crate::engine::build_label_universe(&sig, 2);
        let mut compared = 0;
        for e in random_programs(&sig, 40, 7, 5) {
            let r = oracle_compare(&sig, &e, 30, &labels).unwrap();
            assert!(r.clean(), "{r:?}");
            compared += usize::from(r.compared());
        }
        assert!(compared > 30);
    }
}
