use std::collections::HashSet;

use super::parser::Sugar;
use crate::sig::{MetaDecl, Signature, TransitionPattern};
use crate::term::{ConId, EdgeId, Term};

/// Terms print with the surface sugar where the signature has the matching
/// constructors; templates (with metavariables or operation calls) always
/// print in prefix form.
pub struct Printer<'a> {
    sig: &'a Signature,
    sugar: Sugar,
    metas: &'a [MetaDecl],
    reserved: HashSet<String>,
    prefix: bool,
}

const VAR_NAMES: [&str; 5] = ["x", "y", "z", "u", "w"];
const CONT_NAMES: [&str; 3] = ["k", "h", "g"];

impl<'a> Printer<'a> {
    pub fn new(sig: &'a Signature) -> Self {
        let mut reserved: HashSet<String> = sig.cons.iter().map(|c| c.name.clone()).collect();
        reserved.extend(sig.ops.iter().map(|o| o.name.clone()));
        reserved.insert("shift".into());
        Printer { sig, sugar: Sugar::of(sig), metas: &[], reserved, prefix: false }
    }

    pub fn for_template(sig: &'a Signature, metas: &'a [MetaDecl]) -> Self {
        let mut p = Printer::new(sig);
        p.reserved.extend(metas.iter().map(|m| m.name.clone()));
        p.metas = metas;
        p.prefix = true;
        p
    }

    pub fn term(&self, t: &Term) -> String {
        self.term_in(&[], t)
    }

    /// Prints `t` whose free variables are named by `names` (innermost last).
    pub fn term_in(&self, names: &[String], t: &Term) -> String {
        let mut names = names.to_vec();
        let mut out = String::new();
        self.go(t, &mut names, 0, &mut out);
        out
    }

    pub fn transition(&self, source: &Term, edge: EdgeId, labels: &[Term], target: &Term) -> String {
        let mut out = self.term(source);
        out.push_str(" -");
        out.push_str(&self.sig.edge(edge).name);
        if !labels.is_empty() {
            out.push('[');
            for (i, l) in labels.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&self.term(l));
            }
            out.push(']');
        }
        out.push_str("-> ");
        out.push_str(&self.term(target));
        out
    }

    fn fresh(&self, con: ConId, names: &[String]) -> String {
        let base: &[&str] = if Some(con) == self.sugar.shift { &CONT_NAMES } else { &VAR_NAMES };
        let free = |n: &str| !self.reserved.contains(n) && !names.iter().any(|m| m == n);
        if let Some(n) = base.iter().find(|n| free(n)) {
            return n.to_string();
        }
        (1..)
            .map(|i| format!("{}{}", base[0], i))
            .find(|n| free(n))
            .unwrap()
    }

    fn is_juxt(&self, c: ConId) -> bool {
        !self.prefix && [self.sugar.app, self.sugar.capp, self.sugar.cappr].contains(&Some(c))
    }

    fn is_binder_sugar(&self, c: ConId) -> bool {
        !self.prefix && [self.sugar.lam, self.sugar.shift].contains(&Some(c))
    }

    /// `level`: 0 anywhere, 1 left operand of a juxtaposition, 2 atom.
    fn go(&self, t: &Term, names: &mut Vec<String>, level: u8, out: &mut String) {
        match t {
            Term::Var(i) => {
                let i = *i as usize;
                match names.len().checked_sub(i + 1) {
                    Some(pos) => out.push_str(&names[pos]),
                    None => out.push_str(&format!("#{i}")),
                }
            }
            Term::Con(c, args) if self.is_binder_sugar(*c) => {
                if level > 0 {
                    out.push('(');
                }
                let name = self.fresh(*c, names);
                if Some(*c) == self.sugar.lam {
                    out.push('\\');
                } else {
                    out.push_str("shift ");
                }
                out.push_str(&name);
                out.push_str(". ");
                names.push(name);
                self.go(&args[0], names, 0, out);
                names.pop();
                if level > 0 {
                    out.push(')');
                }
            }
            Term::Con(c, args) if self.is_juxt(*c) => {
                if level > 1 {
                    out.push('(');
                }
                self.go(&args[0], names, 1, out);
                out.push(' ');
                self.go(&args[1], names, 2, out);
                if level > 1 {
                    out.push(')');
                }
            }
            Term::Con(c, args) if !self.prefix && Some(*c) == self.sugar.reset => {
                out.push('<');
                self.go(&args[0], names, 0, out);
                out.push('>');
            }
            Term::Con(c, _) if !self.prefix && Some(*c) == self.sugar.hole => out.push_str("[]"),
            Term::Con(c, args) => {
                let decl = self.sig.con(*c);
                out.push_str(&decl.name);
                if args.is_empty() {
                    return;
                }
                out.push('(');
                for (i, (a, spec)) in args.iter().zip(&decl.args).enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    for _ in &spec.binders {
                        let name = self.fresh(*c, names);
                        out.push_str(&name);
                        out.push_str(". ");
                        names.push(name);
                    }
                    self.go(a, names, 0, out);
                    for _ in &spec.binders {
                        names.pop();
                    }
                }
                out.push(')');
            }
            Term::Op(o, main, aux) => {
                out.push_str(&self.sig.op(*o).name);
                out.push('(');
                self.go(main, names, 0, out);
                out.push_str("; ");
                for (i, a) in aux.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    self.go(a, names, 0, out);
                }
                out.push(')');
            }
            Term::Meta(m, args) => {
                match self.metas.get(m.index()) {
                    Some(d) => out.push_str(&d.name),
                    None => out.push_str(&format!("?{}", m.0)),
                }
                if !args.is_empty() {
                    out.push('{');
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            out.push_str(", ");
                        }
                        self.go(a, names, 0, out);
                    }
                    out.push('}');
                }
            }
        }
    }
}

/// Prints a closed ground term in surface syntax.
pub fn print_term(sig: &Signature, t: &Term) -> String {
    Printer::new(sig).term(t)
}

/// Prints a ground term whose free variables are named by `names`.
pub fn print_term_in(sig: &Signature, names: &[String], t: &Term) -> String {
    Printer::new(sig).term_in(names, t)
}

/// Prints a clause or rule template in prefix form.
pub fn print_template(sig: &Signature, metas: &[MetaDecl], t: &Term) -> String {
    Printer::for_template(sig, metas).term(t)
}

pub fn print_transition_pattern(sig: &Signature, metas: &[MetaDecl], p: &TransitionPattern) -> String {
    let pr = Printer::for_template(sig, metas);
    let mut out = pr.term(&p.source);
    out.push_str(" -");
    out.push_str(&sig.edge(p.edge).name);
    if !p.labels.is_empty() {
        out.push('[');
        let labels: Vec<String> = p.labels.iter().map(|l| pr.term(l)).collect();
        out.push_str(&labels.join(", "));
        out.push(']');
    }
    out.push_str("-> ");
    out.push_str(&pr.term(&p.target));
    out
}
