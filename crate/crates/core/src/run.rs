//! End-to-end pipelines shared by the command-line tool and the test
//! suites: seed enumeration, the Howe property suite and the two-phase
//! congruence check.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::bisim::{reachable_exhausted, refine, sample_congruence_where, CheckReport, CongruenceSample, Violation};
use crate::engine::{build_label_universe, derive_with, EngineConfig, LabelUniverse, TermId, TransitionStore};
use crate::enumerate::enumerate_terms;
use crate::kernel::least_sort;
use crate::howe::{check_howe_properties, howe_closure, sim_relation, HoweReport, TermUniverse, URelation};
use crate::sig::Signature;
use crate::syntax::{print_term, print_term_in};
use crate::term::{Ctx, EdgeId, SortId, Term};

/// Bounds and seed of a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunConfig {
    pub fuel: usize,
    pub max_universe: usize,
    pub label_size: usize,
    pub term_size: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { fuel: 30, max_universe: 5000, label_size: 2, term_size: 5, samples: 200, seed: 0 }
    }
}

impl RunConfig {
    pub fn engine(&self) -> EngineConfig {
        EngineConfig { fuel: self.fuel, max_universe: self.max_universe, max_term_size: None }
    }

    pub fn labels(&self, sig: &Signature) -> LabelUniverse {
        build_label_universe(sig, self.label_size)
    }

    pub fn derive(&self, sig: &Signature, seeds: &[Term]) -> TransitionStore {
        derive_with(sig, seeds, &self.labels(sig), &self.engine())
    }
}

/// Sorts that are the source of some edge type, with no two related by
/// subsorting (the larger one is kept).
pub fn program_sorts(sig: &Signature) -> Vec<SortId> {
    let sources: BTreeSet<SortId> = sig.edges.iter().map(|e| e.source).collect();
    sources
        .iter()
        .copied()
        .filter(|&s| !sources.iter().any(|&t| t != s && sig.leq(s, t)))
        .collect()
}

/// Every closed program up to `max_size` nodes.
pub fn program_seeds(sig: &Signature, max_size: usize) -> Vec<Term> {
    program_sorts(sig)
        .into_iter()
        .flat_map(|s| enumerate_terms(sig, s, &Vec::new(), max_size))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct HoweRun {
    pub seeds: usize,
    pub store_universe: usize,
    pub transitions: usize,
    pub bisim_blocks: usize,
    pub term_universe: usize,
    pub closure_pairs: usize,
    pub iterations: usize,
    pub converged: bool,
    pub report: HoweReport,
}

/// Derives transitions for all programs up to the configured size, takes
/// the Howe closure of the empty relation with respect to bisimilarity,
/// and checks its properties. `fault` pairs, given as closed terms, are
/// seeded into the store and added to the closure before checking.
pub fn howe_suite(sig: &Signature, config: &RunConfig, fault: &[(Term, Term)]) -> HoweRun {
    let mut seeds = program_seeds(sig, config.term_size);
    for (a, b) in fault {
        for t in [a, b] {
            if !seeds.contains(t) {
                seeds.push(t.clone());
            }
        }
    }
    let store = config.derive(sig, &seeds);
    let bisim = refine(sig, &store);
    let universe = TermUniverse::for_store(sig, &store, config.term_size);
    let sim = sim_relation(&universe, &store, &bisim);
    let mut hc = howe_closure(&universe, &URelation::new(), &sim, config.fuel.max(1) * 10);
    for (a, b) in fault {
        let empty = Vec::new();
        if let (Some(a), Some(b)) = (universe.id_of(&empty, a), universe.id_of(&empty, b)) {
            hc.closure.insert(a, b);
        }
    }
    let report = check_howe_properties(sig, &universe, &hc, &store);
    HoweRun {
        seeds: seeds.len(),
        store_universe: store.universe().len(),
        transitions: store.len(),
        bisim_blocks: bisim.block_count(),
        term_universe: universe.len(),
        closure_pairs: hc.closure.len(),
        iterations: hc.iterations,
        converged: hc.converged,
        report,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CongruenceRun {
    pub seeds: usize,
    pub store_universe: usize,
    /// Samples whose pair is not related on the local store.
    pub premise_split: usize,
    /// Samples whose composites query the pair at labels outside the
    /// static label universe.
    pub outside_labels: usize,
    /// Samples whose local store did not settle within bounds.
    pub inconclusive: usize,
    pub report: CheckReport,
}

enum Local {
    Related,
    Unrelated,
    PremiseSplit,
    OutsideLabels,
    Inconclusive,
}

/// Terms reachable from `roots` by stored transitions, roots included.
fn reachable(sig: &Signature, store: &TransitionStore, roots: &[TermId]) -> BTreeSet<TermId> {
    let mut seen: BTreeSet<TermId> = roots.iter().copied().collect();
    let mut stack = roots.to_vec();
    while let Some(id) = stack.pop() {
        for e in (0..sig.edges.len()).map(EdgeId::from) {
            for (_, t) in store.successors(id, e) {
                if seen.insert(*t) {
                    stack.push(*t);
                }
            }
        }
    }
    seen
}

/// Decides a sampled composite pair on a store seeded with the pair and
/// the composites. The approximant only observed the pair at static
/// labels; when a composite queries a term reachable from the pair at any
/// other label, the sample lies outside what the approximant covers.
fn local_congruence(sig: &Signature, config: &RunConfig, s: &CongruenceSample) -> Local {
    let (_, a, b) = &s.premise;
    let seeds = [a.clone(), b.clone(), s.left.clone(), s.right.clone()];
    let store = derive_with(sig, &seeds, &config.labels(sig), &config.engine());
    let id = |t: &Term| store.id_of(t).expect("seeds are in the universe");
    let ids = [id(a), id(b), id(&s.left), id(&s.right)];
    let outside = reachable(sig, &store, &ids[..2])
        .into_iter()
        .any(|x| (0..sig.edges.len()).any(|e| store.demanded(x, EdgeId::from(e)).next().is_some()));
    if outside {
        return Local::OutsideLabels;
    }
    if !reachable_exhausted(sig, &store, &ids) {
        return Local::Inconclusive;
    }
    let bisim = refine(sig, &store);
    if !bisim.related(ids[0], ids[1]) {
        Local::PremiseSplit
    } else if bisim.related(ids[2], ids[3]) {
        Local::Related
    } else {
        Local::Unrelated
    }
}

/// Samples composites `c(.., a, ..)` / `c(.., b, ..)` with `(a, b)` related
/// by the bisimilarity approximant over all programs up to the configured
/// size, and checks each composite pair with [`local_congruence`].
/// Composites that are not programs have no transitions and are skipped.
pub fn congruence_suite(sig: &Signature, config: &RunConfig) -> CongruenceRun {
    let seeds = program_seeds(sig, config.term_size);
    let store = config.derive(sig, &seeds);
    let r = refine(sig, &store).to_relation(&store);
    let programs = program_sorts(sig);
    let samples = sample_congruence_where(sig, &r, config.samples, config.seed, |c| {
        programs.iter().any(|&p| sig.leq(sig.cons[c.index()].result, p))
    });
    let is_program = |t: &Term| {
        least_sort(sig, &Vec::new(), t).is_ok_and(|s| programs.iter().any(|&p| sig.leq(s, p)))
    };
    let mut run = CongruenceRun {
        seeds: seeds.len(),
        store_universe: store.universe().len(),
        premise_split: 0,
        outside_labels: 0,
        inconclusive: 0,
        report: CheckReport::default(),
    };
    let print = |ctx: &Ctx, t: &Term| {
        let names: Vec<String> = (0..ctx.len()).map(|i| format!("#{}", ctx.len() - 1 - i)).collect();
        print_term_in(sig, &names, t)
    };
    for s in &samples {
        let Some(s) = s.as_ref().filter(|s| is_program(&s.left)) else {
            run.report.skipped += 1;
            continue;
        };
        match local_congruence(sig, config, s) {
            Local::Related => run.report.checked += 1,
            Local::Unrelated => {
                run.report.checked += 1;
                let (ctx, a, b) = &s.premise;
                run.report.violations.push(Violation {
                    kind: sig.cons[match &s.left {
                        Term::Con(c, _) => c.index(),
                        _ => unreachable!("composites are constructor terms"),
                    }]
                    .name
                    .clone(),
                    premise: (print(ctx, a), print(ctx, b)),
                    conclusion: (print_term(sig, &s.left), print_term(sig, &s.right)),
                });
            }
            Local::PremiseSplit => {
                run.premise_split += 1;
                run.report.skipped += 1;
            }
            Local::OutsideLabels => {
                run.outside_labels += 1;
                run.report.skipped += 1;
            }
            Local::Inconclusive => {
                run.inconclusive += 1;
                run.report.skipped += 1;
            }
        }
    }
    run
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{pcf, shift_reset};

    #[test]
    fn program_sorts_are_maximal_edge_sources() {
        let sig = shift_reset();
        assert_eq!(program_sorts(&sig), vec![sig.sort_id("p").unwrap()]);
        let pcf = pcf();
        assert_eq!(program_sorts(&pcf), vec![pcf.sort_id("t").unwrap()]);
    }

    #[test]
    fn seeds_include_values() {
        let sig = shift_reset();
        let seeds = program_seeds(&sig, 3);
        assert!(seeds.contains(&crate::syntax::parse_term(&sig, "\\x.x").unwrap()));
        assert!(seeds.iter().all(|t| t.size() <= 3));
    }

    #[test]
    fn small_runs_pass() {
        let sig = shift_reset();
        let config = RunConfig { term_size: 4, samples: 40, ..RunConfig::default() };
        let howe = howe_suite(&sig, &config, &[]);
        assert!(howe.converged && howe.report.passed(), "{:?}", howe.report);
        let cong = congruence_suite(&sig, &config);
        assert!(cong.report.passed(), "{:?}", cong.report);
        assert_eq!(cong.report.checked + cong.report.skipped, 40);
        assert!(cong.report.checked > 0);
    }

    #[test]
    fn suites_are_deterministic() {
        let sig = shift_reset();
        let config = RunConfig { term_size: 3, samples: 20, ..RunConfig::default() };
        let a = serde_json::to_string(&congruence_suite(&sig, &config)).unwrap();
        let b = serde_json::to_string(&congruence_suite(&sig, &config)).unwrap();
        assert_eq!(a, b);
    }
}
