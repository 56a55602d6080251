//! Stored transitions and derived beta steps checked against hand-written
//! golden files.

use std::path::PathBuf;

use sosbench::engine::{build_label_universe, derive_transitions, transitions_of};
use sosbench::instances::{pcf, shift_reset};
use sosbench::kernel::substitute;
use sosbench::sig::Signature;
use sosbench::syntax::parse_term;
use sosbench::term::Term;

fn golden(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "golden", name].iter().collect();
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'))
}

struct Expected {
    source: Term,
    edge: String,
    labels: Vec<Term>,
    target: Term,
}

/// `source -edge[l1; l2]-> target`
fn parse_line(sig: &Signature, line: &str) -> Expected {
    let (left, target) = line.rsplit_once("-> ").unwrap_or_else(|| panic!("{line}"));
    let (source, edge) = left.rsplit_once(" -").unwrap_or_else(|| panic!("{line}"));
    let (edge, labels) = match edge.split_once('[') {
        Some((e, rest)) => (e, rest.strip_suffix(']').unwrap().split(';').map(str::trim).collect()),
        None => (edge, Vec::new()),
    };
    let p = |s: &str| parse_term(sig, s).unwrap_or_else(|e| panic!("{s}: {e}"));
    Expected { source: p(source), edge: edge.into(), labels: labels.into_iter().map(p).collect(), target: p(target.trim()) }
}

fn check_file(sig: &Signature, name: &str, expected_count: usize, label_size: usize) {
    let text = golden(name);
    let expected: Vec<Expected> = lines(&text).map(|l| parse_line(sig, l)).collect();
    assert_eq!(expected.len(), expected_count);
    let labels = build_label_universe(sig, label_size);
    for (line, e) in lines(&text).zip(&expected) {
        let store = derive_transitions(sig, std::slice::from_ref(&e.source), &labels, 30, 5000);
        let edge = sig.edge_id(&e.edge).unwrap_or_else(|| panic!("{line}: unknown edge"));
        let got = transitions_of(&store, &e.source, edge).unwrap();
        assert!(got.exhausted, "{line}: not exhausted");
        assert!(got.entries.contains(&(e.labels.clone(), e.target.clone())), "{line}: missing");
    }
}

#[test]
fn pcf_golden_transitions() {
    check_file(&pcf(), "pcf.transitions", 20, 2);
}

#[test]
fn shift_reset_golden_transitions() {
    check_file(&shift_reset(), "shiftreset.transitions", 14, 2);
}

#[test]
fn beta_pairs_step_to_the_substituted_body() {
    let sig = shift_reset();
    let app = sig.con_id("app").unwrap();
    let tau = sig.edge_id("tau").unwrap();
    let labels = build_label_universe(&sig, 2);
    let text = golden("beta.pairs");
    let mut n = 0;
    for line in lines(&text) {
        let (f, v) = line.split_once(';').unwrap();
        let (f, v) = (parse_term(&sig, f.trim()).unwrap(), parse_term(&sig, v.trim()).unwrap());
        let Term::Con(_, args) = &f else { panic!("{line}") };
        let expected = substitute(&sig, &args[0], std::slice::from_ref(&v));
        let redex = Term::Con(app, vec![f.clone(), v.clone()]);
        for fuel in [2, 30] {
            let store = derive_transitions(&sig, std::slice::from_ref(&redex), &labels, fuel, 5000);
            let got = transitions_of(&store, &redex, tau).unwrap();
            assert!(got.entries.contains(&(vec![], expected.clone())), "{line} at fuel {fuel}");
        }
        n += 1;
    }
    assert_eq!(n, 20);
}
