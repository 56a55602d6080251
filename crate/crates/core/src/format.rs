//! Rule-format checking: structural conclusion sources and border arities
//! reconstructed by premise scheduling.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::sig::{Rule, Signature};
use crate::syntax::print_template;
use crate::term::{MetaId, Term};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Structuralness {
    Pass,
    Fail { witness: String },
}

impl Structuralness {
    pub fn passed(&self) -> bool {
        matches!(self, Structuralness::Pass)
    }
}

/// Why a premise could never be scheduled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StuckPremise {
    pub index: usize,
    pub premise: String,
    pub reason: String,
}

/// The border arity of a rule and the schedule that reconstructs it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BorderArity {
    pub rule: String,
    pub border_mvars: Vec<String>,
    pub all_mvars: Vec<String>,
    /// Premise indices (0-based) in scheduling order, when every premise
    /// could be scheduled.
    pub scheduled_order: Option<Vec<usize>>,
    pub stuck: Vec<StuckPremise>,
    /// Metavariables of the conclusion target never made available.
    pub uncovered: Vec<String>,
}

impl BorderArity {
    pub fn cofibration_passed(&self) -> bool {
        self.scheduled_order.is_some()
    }

    pub fn coverage_passed(&self) -> bool {
        self.uncovered.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RuleReport {
    pub rule: String,
    pub structural: Structuralness,
    pub border: BorderArity,
}

impl RuleReport {
    pub fn passed(&self) -> bool {
        self.structural.passed() && self.border.cofibration_passed() && self.border.coverage_passed()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FormatReport {
    pub rules: Vec<RuleReport>,
    pub passed: bool,
}

/// The conclusion source must be a bare metavariable or one constructor over
/// pairwise distinct bare metavariables.
pub fn check_structuralness(sig: &Signature, rule: &Rule) -> Structuralness {
    let src = &rule.conclusion.source;
    let fail = |t: &Term| Structuralness::Fail { witness: print_template(sig, &rule.metas, t) };
    match src {
        Term::Meta(_, args) if args.is_empty() => Structuralness::Pass,
        Term::Con(_, args) => {
            let mut seen = BTreeSet::new();
            for a in args {
                match a.as_bare_meta() {
                    Some(m) if seen.insert(m) => {}
                    _ => return fail(a),
                }
            }
            Structuralness::Pass
        }
        other => fail(other),
    }
}

fn names(rule: &Rule, set: &BTreeSet<MetaId>) -> Vec<String> {
    set.iter().map(|&m| rule.meta_name(m).to_string()).collect()
}

/// Metavariables available before any premise runs: those of the
/// conclusion's source and labels.
pub fn border_mvars(rule: &Rule) -> BTreeSet<MetaId> {
    let mut out = rule.conclusion.source.metas();
    for l in &rule.conclusion.labels {
        l.collect_metas(&mut out);
    }
    out
}

pub fn all_mvars(rule: &Rule) -> BTreeSet<MetaId> {
    (0..rule.metas.len()).map(MetaId::from).collect()
}

/// Premise `i`'s target metavariable, if the target is a bare metavariable
/// not occurring in the premise's own source or labels.
fn premise_target(rule: &Rule, i: usize) -> Result<MetaId, String> {
    let p = &rule.premises[i];
    let m = p
        .target
        .as_bare_meta()
        .ok_or_else(|| "premise target is not a bare metavariable".to_string())?;
    let mut inputs = p.source.metas();
    for l in &p.labels {
        l.collect_metas(&mut inputs);
    }
    if inputs.contains(&m) {
        return Err("premise target occurs in its own source or labels".into());
    }
    let twice = rule
        .premises
        .iter()
        .enumerate()
        .any(|(j, q)| j != i && q.target.as_bare_meta() == Some(m));
    if twice {
        return Err("premise target is shared with another premise".into());
    }
    Ok(m)
}

fn schedule_with(rule: &Rule, pick: &mut dyn FnMut(&[usize]) -> usize) -> (Vec<usize>, BTreeSet<MetaId>) {
    let mut available = border_mvars(rule);
    let mut order = Vec::new();
    let mut done = vec![false; rule.premises.len()];
    loop {
        let ready: Vec<usize> = (0..rule.premises.len())
            .filter(|&i| !done[i])
            .filter(|&i| {
                let Ok(target) = premise_target(rule, i) else { return false };
                let p = &rule.premises[i];
                let mut inputs = p.source.metas();
                for l in &p.labels {
                    l.collect_metas(&mut inputs);
                }
                inputs.is_subset(&available) && !available.contains(&target)
            })
            .collect();
        if ready.is_empty() {
            break;
        }
        let i = ready[pick(&ready)];
        done[i] = true;
        order.push(i);
        available.insert(premise_target(rule, i).unwrap());
    }
    (order, available)
}

fn border_arity(sig: &Signature, rule: &Rule, order: Vec<usize>, available: BTreeSet<MetaId>) -> BorderArity {
    let scheduled: BTreeSet<usize> = order.iter().copied().collect();
    let stuck: Vec<StuckPremise> = (0..rule.premises.len())
        .filter(|i| !scheduled.contains(i))
        .map(|i| {
            let p = &rule.premises[i];
            let reason = match premise_target(rule, i) {
                Err(e) => e,
                Ok(t) if available.contains(&t) => {
                    format!("target `{}` is already available", rule.meta_name(t))
                }
                Ok(_) => {
                    let mut inputs = p.source.metas();
                    for l in &p.labels {
                        l.collect_metas(&mut inputs);
                    }
                    let missing: BTreeSet<MetaId> = inputs.difference(&available).copied().collect();
                    format!("needs unavailable {}", names(rule, &missing).join(", "))
                }
            };
            StuckPremise { index: i, premise: crate::syntax::print_transition_pattern(sig, &rule.metas, p), reason }
        })
        .collect();
    let uncovered: BTreeSet<MetaId> = rule.conclusion.target.metas().difference(&available).copied().collect();
    BorderArity {
        rule: rule.name.clone(),
        border_mvars: names(rule, &border_mvars(rule)),
        all_mvars: rule.metas.iter().map(|m| m.name.clone()).collect(),
        scheduled_order: stuck.is_empty().then_some(order),
        stuck,
        uncovered: names(rule, &uncovered),
    }
}

/// Greedy scheduling, always taking the lowest-numbered ready premise.
pub fn check_cofibration(sig: &Signature, rule: &Rule) -> BorderArity {
    let (order, available) = schedule_with(rule, &mut |_| 0);
    border_arity(sig, rule, order, available)
}

/// Scheduling with a random pick among the ready premises.
pub fn check_cofibration_randomized<R: Rng>(sig: &Signature, rule: &Rule, rng: &mut R) -> BorderArity {
    let (order, available) = schedule_with(rule, &mut |ready| {
        let idx: Vec<usize> = (0..ready.len()).collect();
        *idx.choose(rng).unwrap()
    });
    border_arity(sig, rule, order, available)
}

/// A valid premise order for evaluation, or `None` if the rule does not
/// schedule.
pub fn premise_schedule(rule: &Rule) -> Option<Vec<usize>> {
    let (order, _) = schedule_with(rule, &mut |_| 0);
    (order.len() == rule.premises.len()).then_some(order)
}

pub fn format_report(sig: &Signature) -> FormatReport {
    let rules: Vec<RuleReport> = sig
        .rules
        .iter()
        .map(|r| RuleReport {
            rule: r.name.clone(),
            structural: check_structuralness(sig, r),
            border: check_cofibration(sig, r),
        })
        .collect();
    let passed = rules.iter().all(RuleReport::passed);
    FormatReport { rules, passed }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;

    use super::*;
    use crate::instances::{pcf, shift_reset};
    use crate::syntax::parse_signature;

    fn rule<'s>(sig: &'s Signature, name: &str) -> &'s Rule {
        sig.rules.iter().find(|r| r.name == name).unwrap()
    }

    fn fixture(text: &str) -> FormatReport {
        format_report(&parse_signature(text).unwrap())
    }

    #[test]
    fn shipped_instances_pass() {
        let report = format_report(&shift_reset());
        assert!(report.passed, "{report:?}");
        assert_eq!(report.rules.len(), 17);
        assert!(format_report(&pcf()).passed);
    }

    #[test]
    fn saturation_rule_schedules_in_order() {
        let sig = shift_reset();
        let b = check_cofibration(&sig, rule(&sig, "preval"));
        assert_eq!(b.scheduled_order, Some(vec![0, 1]));
        assert_eq!(b.border_mvars, vec!["e1", "w"]);
    }

    #[test]
    fn capture_rule_has_empty_schedule() {
        let sig = shift_reset();
        let r = rule(&sig, "sa");
        assert!(check_structuralness(&sig, r).passed());
        let b = check_cofibration(&sig, r);
        assert_eq!(b.scheduled_order, Some(vec![]));
        assert!(b.coverage_passed());
        assert_eq!(border_mvars(r), all_mvars(r));
    }

    #[test]
    fn bare_and_coerced_sources_are_structural() {
        let sig = shift_reset();
        assert!(check_structuralness(&sig, rule(&sig, "refl")).passed());
        assert!(check_structuralness(&sig, rule(&sig, "betap")).passed());
    }

    #[test]
    fn standard_beta_fixture_fails_structuralness() {
        let report = fixture(include_str!("../sigs/fixtures/beta-standard.sig"));
        assert!(!report.passed);
        let bad: Vec<&RuleReport> = report.rules.iter().filter(|r| !r.passed()).collect();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].rule, "beta");
        assert_eq!(bad[0].structural, Structuralness::Fail { witness: "lam(x. e)".into() });
    }

    #[test]
    fn lookahead_fixture_is_stuck() {
        let report = fixture(include_str!("../sigs/fixtures/lookahead.sig"));
        let r = report.rules.iter().find(|r| r.rule == "look").unwrap();
        assert!(r.structural.passed());
        assert_eq!(r.border.scheduled_order, None);
        assert_eq!(r.border.stuck.len(), 1);
        assert_eq!(r.border.stuck[0].reason, "needs unavailable e2");
    }

    #[test]
    fn fresh_target_fixture_fails_coverage() {
        let report = fixture(include_str!("../sigs/fixtures/fresh-target.sig"));
        let r = report.rules.iter().find(|r| r.rule == "fresh").unwrap();
        assert!(r.border.cofibration_passed());
        assert_eq!(r.border.uncovered, vec!["f"]);
        assert!(!report.passed);
    }

    #[test]
    fn compound_target_fixture_is_stuck() {
        let report = fixture(include_str!("../sigs/fixtures/compound-target.sig"));
        let r = report.rules.iter().find(|r| r.rule == "split").unwrap();
        assert_eq!(r.border.stuck[0].reason, "premise target is not a bare metavariable");
        assert!(!report.passed);
    }

    /// Whether some permutation of the premises can be run in sequence,
    /// each needing only metavariables made available before it.
    fn brute_force_schedulable(rule: &Rule) -> bool {
        fn go(rule: &Rule, avail: &BTreeSet<MetaId>, left: &mut Vec<usize>) -> bool {
            if left.is_empty() {
                return true;
            }
            for k in 0..left.len() {
                let i = left[k];
                let p = &rule.premises[i];
                let Some(target) = p.target.as_bare_meta() else { continue };
                let mut inputs = p.source.metas();
                p.labels.iter().for_each(|l| l.collect_metas(&mut inputs));
                let shared = rule.premises.iter().enumerate().any(|(j, q)| j != i && q.target.as_bare_meta() == Some(target));
                if shared || inputs.contains(&target) || !inputs.is_subset(avail) || avail.contains(&target) {
                    continue;
                }
                let mut next = avail.clone();
                next.insert(target);
                left.remove(k);
                let ok = go(rule, &next, left);
                left.insert(k, i);
                if ok {
                    return true;
                }
            }
            false
        }
        go(rule, &border_mvars(rule), &mut (0..rule.premises.len()).collect())
    }

    const TINY: &str = "sort t\ncon f : t, t -> t\nedge tau : t -> t\nedge lab : t [t] -> t\n";

    fn random_rule(premises: &[(usize, usize, Option<usize>)], target: usize) -> String {
        let mut text = String::from("rule r : ");
        for (s, t, l) in premises {
            match l {
                Some(l) => text += &format!("m{s} -lab[m{l}]-> m{t}, "),
                None => text += &format!("m{s} -tau-> m{t}, "),
            }
        }
        text += &format!("=> f(m0, m1) -tau-> m{target}");
        text
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn scheduling_verdict_is_order_independent(
            premises in prop::collection::vec((0usize..6, 0usize..6, prop::option::of(0usize..6)), 0..5),
            target in 0usize..6,
            seed in any::<u64>(),
        ) {
            let text = format!("{TINY}{}", random_rule(&premises, target));
            let parsed = parse_signature(&text);
            prop_assume!(parsed.is_ok());
            let sig = parsed.unwrap();
            let r = &sig.rules[0];
            let greedy = check_cofibration(&sig, r);
            prop_assert_eq!(greedy.cofibration_passed(), brute_force_schedulable(r));
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..8 {
                let b = check_cofibration_randomized(&sig, r, &mut rng);
                prop_assert_eq!(b.cofibration_passed(), greedy.cofibration_passed());
                prop_assert_eq!(&b.uncovered, &greedy.uncovered);
                if let Some(order) = &b.scheduled_order {
                    let mut sorted = order.clone();
                    sorted.sort();
                    prop_assert_eq!(sorted, (0..r.premises.len()).collect::<Vec<_>>());
                }
            }
        }

        #[test]
        fn self_feeding_premises_never_schedule(s in 0usize..6, seed in any::<u64>()) {
            let _ = seed;
            let text = format!("{TINY}rule r : m{s} -lab[m{s}]-> m{s}, => f(m0, m1) -tau-> m0");
            if let Ok(sig) = parse_signature(&text) {
                prop_assert!(!check_cofibration(&sig, &sig.rules[0]).cofibration_passed());
            }
        }
    }
}
