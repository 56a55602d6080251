//! Clause-defined operations: validation, metavariable instantiation and
//! evaluation to normal form.

use serde::Serialize;
use thiserror::Error;

use crate::kernel::{infer_sort, map_free};
use crate::sig::{Clause, MetaDecl, Signature};
use crate::term::{ConId, OpId, Term};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("operation `{op}` has no clause for constructor `{con}`")]
    NoClause { op: String, con: String },
    #[error("operation `{op}` applied to a variable has no clause")]
    StuckOnVariable { op: String },
    #[error("metavariable `{0}` is unbound")]
    UnboundMeta(String),
    #[error("metavariable `{0}` used under fewer binders than its context")]
    MetaContext(String),
    #[error("term still contains a metavariable")]
    MetaInTerm,
}

/// One problem found by [`validate_signature_ops`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OpsIssue {
    MissingClause { op: String, con: String },
    DuplicateClause { op: String, con: String },
    WrongHeadSort { op: String, con: String },
    NonDecreasingRecursion { op: String, con: String, call: String },
    StratumViolation { op: String, con: String, callee: String },
    SortError { op: String, con: String, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct OpsReport {
    pub issues: Vec<OpsIssue>,
}

impl OpsReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Checks every operation's clauses: exhaustive over the constructors of its
/// main sort, one clause per constructor, recursion only on immediate
/// argument metavariables, calls only to operations of the same or an
/// earlier stratum, and a well-sorted right-hand side.
pub fn validate_signature_ops(sig: &Signature) -> OpsReport {
    let mut issues = Vec::new();
    for (oi, op) in sig.ops.iter().enumerate() {
        let o = OpId::from(oi);
        for c in sig.cons_of_sort(op.main) {
            let n = sig.clauses.iter().filter(|cl| cl.op == o && cl.head == c).count();
            if n == 0 {
                issues.push(OpsIssue::MissingClause { op: op.name.clone(), con: sig.con(c).name.clone() });
            } else if n > 1 {
                issues.push(OpsIssue::DuplicateClause { op: op.name.clone(), con: sig.con(c).name.clone() });
            }
        }
    }
    for clause in &sig.clauses {
        let op = sig.op(clause.op);
        let con = &sig.con(clause.head).name;
        if !sig.leq(sig.con(clause.head).result, op.main) {
            issues.push(OpsIssue::WrongHeadSort { op: op.name.clone(), con: con.clone() });
            continue;
        }
        check_calls(sig, clause, &clause.rhs, &mut issues);
        match infer_sort(sig, &clause.metas, &Vec::new(), &clause.rhs) {
            Ok(s) if sig.leq(s, op.result) => {}
            Ok(s) => issues.push(OpsIssue::SortError {
                op: op.name.clone(),
                con: con.clone(),
                message: format!("right-hand side has sort {}, expected {}", sig.sort_name(s), sig.sort_name(op.result)),
            }),
            Err(e) => issues.push(OpsIssue::SortError { op: op.name.clone(), con: con.clone(), message: e.to_string() }),
        }
    }
    OpsReport { issues }
}

fn check_calls(sig: &Signature, clause: &Clause, t: &Term, issues: &mut Vec<OpsIssue>) {
    let op = sig.op(clause.op);
    let con = &sig.con(clause.head).name;
    match t {
        Term::Var(_) => {}
        Term::Con(_, args) | Term::Meta(_, args) => args.iter().for_each(|a| check_calls(sig, clause, a, issues)),
        Term::Op(callee, main, aux) => {
            if *callee == clause.op {
                let decreasing = matches!(main.as_bare_meta(), Some(m) if clause.arg_metas.contains(&m));
                if !decreasing {
                    issues.push(OpsIssue::NonDecreasingRecursion {
                        op: op.name.clone(),
                        con: con.clone(),
                        call: describe_call(sig, clause, t),
                    });
                }
            } else if callee.index() > clause.op.index() {
                issues.push(OpsIssue::StratumViolation {
                    op: op.name.clone(),
                    con: con.clone(),
                    callee: sig.op(*callee).name.clone(),
                });
            }
            check_calls(sig, clause, main, issues);
            aux.iter().for_each(|a| check_calls(sig, clause, a, issues));
        }
    }
}

fn describe_call(sig: &Signature, clause: &Clause, t: &Term) -> String {
    crate::syntax::print_template(sig, &clause.metas, t)
}

/// Replaces metavariables in `template` by their bindings.
///
/// A binding for `m` is a term in `m`'s own context. An occurrence
/// `m{a1..ak}` under `depth` local binders substitutes the `ai` for the
/// innermost `k` variables of that context and weakens the remaining
/// prefix into the occurrence's position.
pub fn instantiate(sig: &Signature, metas: &[MetaDecl], template: &Term, binding: &[Option<Term>]) -> Result<Term, EvalError> {
    inst_at(sig, metas, template, binding, 0)
}

/// As [`instantiate`], for a template sitting under `depth` local binders.
pub fn instantiate_at(
    sig: &Signature,
    metas: &[MetaDecl],
    template: &Term,
    binding: &[Option<Term>],
    depth: u32,
) -> Result<Term, EvalError> {
    inst_at(sig, metas, template, binding, depth)
}

fn inst_at(sig: &Signature, metas: &[MetaDecl], t: &Term, binding: &[Option<Term>], depth: u32) -> Result<Term, EvalError> {
    Ok(match t {
        Term::Var(i) => Term::Var(*i),
        Term::Con(c, args) => Term::Con(
            *c,
            args.iter()
                .enumerate()
                .map(|(k, a)| inst_at(sig, metas, a, binding, depth + sig.binders(*c, k) as u32))
                .collect::<Result<_, _>>()?,
        ),
        Term::Op(o, m, aux) => Term::Op(
            *o,
            Box::new(inst_at(sig, metas, m, binding, depth)?),
            aux.iter().map(|a| inst_at(sig, metas, a, binding, depth)).collect::<Result<_, _>>()?,
        ),
        Term::Meta(m, args) => {
            let decl = &metas[m.index()];
            let value = binding
                .get(m.index())
                .and_then(Option::as_ref)
                .ok_or_else(|| EvalError::UnboundMeta(decl.name.clone()))?;
            let k = args.len() as u32;
            let q = decl.ctx.len() as u32 - k;
            if q > depth {
                return Err(EvalError::MetaContext(decl.name.clone()));
            }
            let weaken = depth - q;
            let args: Vec<Term> = args
                .iter()
                .map(|a| inst_at(sig, metas, a, binding, depth))
                .collect::<Result<_, _>>()?;
            map_free(sig, value, &mut |j| {
                if j < k {
                    args[(k - 1 - j) as usize].clone()
                } else {
                    Term::Var(j - k + weaken)
                }
            })
        }
    })
}

/// Unfolds `op(main; aux)` by its clauses. `main` and `aux` must be normal.
pub fn eval_op(sig: &Signature, op: OpId, main: &Term, aux: &[Term]) -> Result<Term, EvalError> {
    let head: ConId = match main {
        Term::Con(c, _) => *c,
        Term::Var(_) => return Err(EvalError::StuckOnVariable { op: sig.op(op).name.clone() }),
        _ => return Err(EvalError::MetaInTerm),
    };
    let clause = sig.clause_for(op, head).ok_or_else(|| EvalError::NoClause {
        op: sig.op(op).name.clone(),
        con: sig.con(head).name.clone(),
    })?;
    let Term::Con(_, args) = main else { unreachable!() };
    let mut binding: Vec<Option<Term>> = vec![None; clause.metas.len()];
    for (m, a) in clause.arg_metas.iter().zip(args) {
        binding[m.index()] = Some(a.clone());
    }
    for (m, a) in clause.aux_metas.iter().zip(aux) {
        binding[m.index()] = Some(a.clone());
    }
    let unfolded = instantiate(sig, &clause.metas, &clause.rhs, &binding)?;
    normalize(sig, &unfolded)
}

/// Eliminates every operation call bottom-up.
pub fn normalize(sig: &Signature, t: &Term) -> Result<Term, EvalError> {
    match t {
        Term::Var(i) => Ok(Term::Var(*i)),
        Term::Con(c, args) => Ok(Term::Con(*c, args.iter().map(|a| normalize(sig, a)).collect::<Result<_, _>>()?)),
        Term::Op(o, m, aux) => {
            let m = normalize(sig, m)?;
            let aux: Vec<Term> = aux.iter().map(|a| normalize(sig, a)).collect::<Result<_, _>>()?;
            eval_op(sig, *o, &m, &aux)
        }
        Term::Meta(..) => Err(EvalError::MetaInTerm),
    }
}

/// Instantiates and normalizes in one step.
pub fn instantiate_normal(sig: &Signature, metas: &[MetaDecl], template: &Term, binding: &[Option<Term>]) -> Result<Term, EvalError> {
    let t = instantiate(sig, metas, template, binding)?;
    if t.is_normal() {
        Ok(t)
    } else {
        normalize(sig, &t)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::kernel::substitute;
    use crate::syntax::parse_signature;
    use crate::testutil::{sample, sort, sr, t, t_in};

    /// Context application written directly over the shift/reset
    /// constructors, independent of the clause machinery.
    fn plug_by_hand(sig: &Signature, ctx: &Term, e: Term) -> Term {
        let (hole, capp, cappr, app) = (
            sig.con_id("hole").unwrap(),
            sig.con_id("capp").unwrap(),
            sig.con_id("cappr").unwrap(),
            sig.con_id("app").unwrap(),
        );
        match ctx {
            Term::Con(c, _) if *c == hole => e,
            Term::Con(c, a) if *c == capp => Term::Con(app, vec![a[0].clone(), plug_by_hand(sig, &a[1], e)]),
            Term::Con(c, a) if *c == cappr => Term::Con(app, vec![plug_by_hand(sig, &a[0], e), a[1].clone()]),
            _ => panic!("not a context"),
        }
    }

    fn plug(sig: &Signature, ctx: &Term, e: &Term) -> Term {
        eval_op(sig, sig.op_id("plug").unwrap(), ctx, std::slice::from_ref(e)).unwrap()
    }

    fn comp(sig: &Signature, outer: &Term, inner: &Term) -> Term {
        eval_op(sig, sig.op_id("comp").unwrap(), outer, std::slice::from_ref(inner)).unwrap()
    }

    #[test]
    fn shipped_operations_validate() {
        assert_eq!(validate_signature_ops(&sr()).issues, vec![]);
    }

    #[test]
    fn whole_lhs_recursion_is_rejected() {
        let text = crate::instances::SHIFT_RESET_SIG
            .replace("plug(capp(v, E) ; e) = app(v, plug(E ; e))", "plug(capp(v, E) ; e) = plug(capp(v, E) ; e)");
        let sig = parse_signature(&text).unwrap();
        let issues = validate_signature_ops(&sig).issues;
        assert!(
            matches!(&issues[..], [OpsIssue::NonDecreasingRecursion { op, con, .. }] if op == "plug" && con == "capp"),
            "{issues:?}"
        );
    }

    #[test]
    fn missing_clause_is_reported() {
        let text = crate::instances::SHIFT_RESET_SIG.replace("plug(hole ; e) = e\n", "");
        let sig = parse_signature(&text).unwrap();
        assert_eq!(
            validate_signature_ops(&sig).issues,
            vec![OpsIssue::MissingClause { op: "plug".into(), con: "hole".into() }]
        );
    }

    #[test]
    fn calls_to_later_operations_do_not_parse() {
        let text = crate::instances::SHIFT_RESET_SIG.replace(
            "plug(cappr(E, e2) ; e) = app(plug(E ; e), e2)",
            "plug(cappr(E, e2) ; e) = plug(comp(E ; hole) ; app(e, e2))",
        );
        assert!(parse_signature(&text).is_err());
    }

    #[test]
    fn plug_examples() {
        let sig = sr();
        let e = t(&sig, "<\\x.x>");
        assert_eq!(plug(&sig, &t(&sig, "[]"), &e), e);
        let ctx = t(&sig, "(\\y.y) []");
        assert_eq!(plug(&sig, &ctx, &e), t(&sig, "(\\y.y) <\\x.x>"));
        assert_eq!(plug(&sig, &t(&sig, "[] (\\x.x)"), &t(&sig, "\\y.y")), t(&sig, "(\\y.y) (\\x.x)"));
    }

    #[test]
    fn normalize_examples() {
        let sig = sr();
        let plug_id = sig.op_id("plug").unwrap();
        let comp_id = sig.op_id("comp").unwrap();
        let e = t(&sig, "\\x.x");
        assert_eq!(normalize(&sig, &Term::op(plug_id, t(&sig, "[]"), vec![e.clone()])).unwrap(), e);
        let plain = t(&sig, "<(\\x.x) (\\y.y)>");
        assert_eq!(normalize(&sig, &plain).unwrap(), plain);
        let call = Term::op(comp_id, t(&sig, "(\\x.x) []"), vec![t(&sig, "[] (\\y.y)")]);
        assert_eq!(normalize(&sig, &call).unwrap(), t(&sig, "(\\x.x) ([] (\\y.y))"));
    }

    #[test]
    fn stuck_on_variable() {
        let sig = sr();
        let plug_id = sig.op_id("plug").unwrap();
        let call = Term::op(plug_id, Term::Var(0), vec![t(&sig, "\\x.x")]);
        assert!(matches!(normalize(&sig, &call), Err(EvalError::StuckOnVariable { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn plug_matches_hand_written(seed in any::<u64>(), k in 1usize..8) {
            let sig = sr();
            let (p, c) = (sort(&sig, "p"), sort(&sig, "c"));
            let ctx = sample(&sig, c, &vec![], k, seed).unwrap();
            let e = sample(&sig, p, &vec![], 5, seed ^ 1).unwrap();
            prop_assert_eq!(plug(&sig, &ctx, &e), plug_by_hand(&sig, &ctx, e.clone()));
        }

        #[test]
        fn context_application_is_associative(seed in any::<u64>(), k in 1usize..7) {
            let sig = sr();
            let (p, c) = (sort(&sig, "p"), sort(&sig, "c"));
            let outer = sample(&sig, c, &vec![], k, seed).unwrap();
            let inner = sample(&sig, c, &vec![], k, seed ^ 1).unwrap();
            let e = sample(&sig, p, &vec![], 4, seed ^ 2).unwrap();
            prop_assert_eq!(
                plug(&sig, &comp(&sig, &outer, &inner), &e),
                plug(&sig, &outer, &plug(&sig, &inner, &e))
            );
        }

        #[test]
        fn operations_commute_with_substitution(seed in any::<u64>(), k in 1usize..7) {
            // open context and plugged term in [x]; close with w
            let sig = sr();
            let (v, p, c) = (sort(&sig, "v"), sort(&sig, "p"), sort(&sig, "c"));
            let ctx = vec![v];
            let e_ctx = sample(&sig, c, &ctx, k, seed).unwrap();
            let e = sample(&sig, p, &ctx, 4, seed ^ 1).unwrap();
            let w = sample(&sig, v, &vec![], 4, seed ^ 2).unwrap();
            for op in ["plug", "comp"] {
                let o = sig.op_id(op).unwrap();
                let aux = if op == "plug" { e.clone() } else { sample(&sig, c, &ctx, 3, seed ^ 3).unwrap() };
                let call = Term::op(o, e_ctx.clone(), vec![aux.clone()]);
                let before = substitute(&sig, &normalize(&sig, &call).unwrap(), &[w.clone()]);
                let after = normalize(
                    &sig,
                    &Term::op(o, substitute(&sig, &e_ctx, &[w.clone()]), vec![substitute(&sig, &aux, &[w.clone()])]),
                ).unwrap();
                prop_assert_eq!(before, after);
            }
        }

        #[test]
        fn unfolding_is_bounded_by_main_size(seed in any::<u64>(), k in 1usize..9) {
            let sig = sr();
            let (p, c) = (sort(&sig, "p"), sort(&sig, "c"));
            let ctx = sample(&sig, c, &vec![], k, seed).unwrap();
            let e = sample(&sig, p, &vec![], 3, seed ^ 1).unwrap();
            // every clause adds at most one node, so the result is no larger
            // than both inputs together
            prop_assert!(plug(&sig, &ctx, &e).size() <= ctx.size() + e.size());
        }
    }

    #[test]
    fn open_terms_plug_under_binders() {
        let sig = sr();
        let ctx = t_in(&sig, &["x"], "x []");
        assert_eq!(plug(&sig, &ctx, &t(&sig, "\\y.y")), t_in(&sig, &["x"], "x (\\y.y)"));
    }
}
