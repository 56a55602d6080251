//! Sort checking and capture-avoiding substitution on de Bruijn terms.

use thiserror::Error;

use crate::sig::{MetaDecl, Signature};
use crate::term::{Ctx, SortId, Term};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SortError {
    #[error("variable #{index} out of range in a context of length {len}")]
    VarOutOfRange { index: u32, len: usize },
    #[error("unknown constructor #{0}")]
    UnknownCon(u32),
    #[error("unknown operation #{0}")]
    UnknownOp(u32),
    #[error("unknown metavariable #{0}")]
    UnknownMeta(u32),
    #[error("`{name}` expects {expected} arguments, found {found}")]
    Arity { name: String, expected: usize, found: usize },
    #[error("expected sort {expected}, found {found}")]
    Mismatch { expected: String, found: String },
    #[error("metavariable `{name}` used outside its binding context")]
    MetaContext { name: String },
}

/// Least sort of `t` in `ctx`. Metavariables are typed by `metas`.
pub fn infer_sort(sig: &Signature, metas: &[MetaDecl], ctx: &Ctx, t: &Term) -> Result<SortId, SortError> {
    match t {
        Term::Var(i) => {
            let i = *i as usize;
            if i < ctx.len() {
                Ok(ctx[ctx.len() - 1 - i])
            } else {
                Err(SortError::VarOutOfRange { index: i as u32, len: ctx.len() })
            }
        }
        Term::Con(c, args) => {
            let decl = sig.cons.get(c.index()).ok_or(SortError::UnknownCon(c.0))?;
            if decl.args.len() != args.len() {
                return Err(SortError::Arity {
                    name: decl.name.clone(),
                    expected: decl.args.len(),
                    found: args.len(),
                });
            }
            for (spec, arg) in decl.args.iter().zip(args) {
                let mut inner = ctx.clone();
                inner.extend(spec.binders.iter().copied());
                expect(sig, metas, &inner, arg, spec.sort)?;
            }
            Ok(decl.result)
        }
        Term::Op(o, main, aux) => {
            let decl = sig.ops.get(o.index()).ok_or(SortError::UnknownOp(o.0))?;
            if decl.aux.len() != aux.len() {
                return Err(SortError::Arity {
                    name: decl.name.clone(),
                    expected: decl.aux.len(),
                    found: aux.len(),
                });
            }
            expect(sig, metas, ctx, main, decl.main)?;
            for (&s, a) in decl.aux.iter().zip(aux) {
                expect(sig, metas, ctx, a, s)?;
            }
            Ok(decl.result)
        }
        Term::Meta(m, args) => {
            let decl = metas.get(m.index()).ok_or(SortError::UnknownMeta(m.0))?;
            let k = args.len();
            let ok = k <= decl.ctx.len() && {
                let q = decl.ctx.len() - k;
                q <= ctx.len() && decl.ctx[..q] == ctx[..q]
            };
            if !ok {
                return Err(SortError::MetaContext { name: decl.name.clone() });
            }
            let q = decl.ctx.len() - k;
            for (a, &s) in args.iter().zip(&decl.ctx[q..]) {
                expect(sig, metas, ctx, a, s)?;
            }
            Ok(decl.sort)
        }
    }
}

fn expect(sig: &Signature, metas: &[MetaDecl], ctx: &Ctx, t: &Term, s: SortId) -> Result<SortId, SortError> {
    let found = infer_sort(sig, metas, ctx, t)?;
    if sig.leq(found, s) {
        Ok(found)
    } else {
        Err(SortError::Mismatch {
            expected: sig.sort_name(s).into(),
            found: sig.sort_name(found).into(),
        })
    }
}

/// Checks `t` at `expected` in `ctx`; returns the least sort on success.
pub fn check_sort(sig: &Signature, ctx: &Ctx, t: &Term, expected: SortId) -> Result<SortId, SortError> {
    expect(sig, &[], ctx, t, expected)
}

/// Least sort of a term without metavariables.
pub fn least_sort(sig: &Signature, ctx: &Ctx, t: &Term) -> Result<SortId, SortError> {
    infer_sort(sig, &[], ctx, t)
}

/// Adds `d` to every variable index `>= cutoff`.
pub fn shift(sig: &Signature, t: &Term, d: u32, cutoff: u32) -> Term {
    if d == 0 {
        return t.clone();
    }
    match t {
        Term::Var(i) if *i >= cutoff => Term::Var(i + d),
        Term::Var(i) => Term::Var(*i),
        Term::Con(c, args) => Term::Con(
            *c,
            args.iter()
                .enumerate()
                .map(|(k, a)| shift(sig, a, d, cutoff + sig.binders(*c, k) as u32))
                .collect(),
        ),
        Term::Op(o, m, aux) => Term::Op(
            *o,
            Box::new(shift(sig, m, d, cutoff)),
            aux.iter().map(|a| shift(sig, a, d, cutoff)).collect(),
        ),
        Term::Meta(m, args) => Term::Meta(*m, args.iter().map(|a| shift(sig, a, d, cutoff)).collect()),
    }
}

/// Replaces every free variable `j` (counted from the top of `t`) by `f(j)`,
/// a term in the target context. Replacements are shifted under binders.
pub fn map_free(sig: &Signature, t: &Term, f: &mut dyn FnMut(u32) -> Term) -> Term {
    map_free_at(sig, t, 0, f)
}

fn map_free_at(sig: &Signature, t: &Term, depth: u32, f: &mut dyn FnMut(u32) -> Term) -> Term {
    match t {
        Term::Var(i) if *i < depth => Term::Var(*i),
        Term::Var(i) => shift(sig, &f(i - depth), depth, 0),
        Term::Con(c, args) => Term::Con(
            *c,
            args.iter()
                .enumerate()
                .map(|(k, a)| map_free_at(sig, a, depth + sig.binders(*c, k) as u32, f))
                .collect(),
        ),
        Term::Op(o, m, aux) => Term::Op(
            *o,
            Box::new(map_free_at(sig, m, depth, f)),
            aux.iter().map(|a| map_free_at(sig, a, depth, f)).collect(),
        ),
        Term::Meta(m, args) => Term::Meta(*m, args.iter().map(|a| map_free_at(sig, a, depth, f)).collect()),
    }
}

/// Simultaneous substitution: `replacements[i]` replaces the variable bound
/// by `ctx[i]` of `t`'s context (so the last entry replaces `Var(0)`).
/// Variables beyond the replaced slots are renumbered into the outer context.
pub fn substitute(sig: &Signature, t: &Term, replacements: &[Term]) -> Term {
    let n = replacements.len() as u32;
    map_free(sig, t, &mut |j| {
        if j < n {
            replacements[(n - 1 - j) as usize].clone()
        } else {
            Term::Var(j - n)
        }
    })
}

/// Removes `d` unused variables at `cutoff`; `None` if one of them occurs.
pub fn strengthen(sig: &Signature, t: &Term, d: u32, cutoff: u32) -> Option<Term> {
    match t {
        Term::Var(i) if *i < cutoff => Some(Term::Var(*i)),
        Term::Var(i) if *i < cutoff + d => None,
        Term::Var(i) => Some(Term::Var(i - d)),
        Term::Con(c, args) => args
            .iter()
            .enumerate()
            .map(|(k, a)| strengthen(sig, a, d, cutoff + sig.binders(*c, k) as u32))
            .collect::<Option<Vec<_>>>()
            .map(|args| Term::Con(*c, args)),
        Term::Op(o, m, aux) => {
            let m = strengthen(sig, m, d, cutoff)?;
            let aux = aux
                .iter()
                .map(|a| strengthen(sig, a, d, cutoff))
                .collect::<Option<Vec<_>>>()?;
            Some(Term::Op(*o, Box::new(m), aux))
        }
        Term::Meta(m, args) => args
            .iter()
            .map(|a| strengthen(sig, a, d, cutoff))
            .collect::<Option<Vec<_>>>()
            .map(|args| Term::Meta(*m, args)),
    }
}

/// True when no variable escapes `ctx_len` binders.
pub fn is_closed_in(sig: &Signature, t: &Term, ctx_len: u32) -> bool {
    match t {
        Term::Var(i) => *i < ctx_len,
        Term::Con(c, args) => args
            .iter()
            .enumerate()
            .all(|(k, a)| is_closed_in(sig, a, ctx_len + sig.binders(*c, k) as u32)),
        Term::Op(_, m, aux) => is_closed_in(sig, m, ctx_len) && aux.iter().all(|a| is_closed_in(sig, a, ctx_len)),
        Term::Meta(_, args) => args.iter().all(|a| is_closed_in(sig, a, ctx_len)),
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::testutil::{sample, sort, sr, t, t_in};

    #[test]
    fn sort_checking_uses_the_subsort_order() {
        let sig = sr();
        let (v, p, c) = (sort(&sig, "v"), sort(&sig, "p"), sort(&sig, "c"));
        assert_eq!(check_sort(&sig, &vec![], &t(&sig, "\\x.x"), v), Ok(v));
        assert_eq!(check_sort(&sig, &vec![], &t(&sig, "(\\x.x) (\\y.y)"), p), Ok(p));
        assert_eq!(check_sort(&sig, &vec![], &t(&sig, "(\\x.x) []"), c), Ok(c));
        assert!(matches!(
            check_sort(&sig, &vec![], &t(&sig, "(\\x.x) (\\y.y)"), v),
            Err(SortError::Mismatch { .. })
        ));
        assert!(matches!(
            least_sort(&sig, &vec![], &Term::Var(0)),
            Err(SortError::VarOutOfRange { index: 0, len: 0 })
        ));
    }

    #[test]
    fn substitution_examples() {
        let sig = sr();
        let w = t(&sig, "\\z.z");
        assert_eq!(substitute(&sig, &Term::Var(0), &[w.clone()]), w);
        let body = t_in(&sig, &["x"], "\\y. x");
        assert_eq!(substitute(&sig, &body, &[w.clone()]), t(&sig, "\\y. \\z. z"));
        let body = t_in(&sig, &["x"], "shift k. x k");
        assert_eq!(substitute(&sig, &body, &[w]), t(&sig, "shift k. (\\z.z) k"));
    }

    #[test]
    fn substitution_does_not_capture() {
        let sig = sr();
        // Replacing x by the free variable y under a binder that is also
        // called y must keep the two apart.
        let body = t_in(&sig, &["y", "x"], "\\y. x y");
        let got = substitute(&sig, &body, &[Term::Var(0)]);
        assert_eq!(got, t_in(&sig, &["y"], "\\z. y z"));
    }

    #[test]
    fn substitution_replaces_innermost_slots_last() {
        let sig = sr();
        let body = t_in(&sig, &["a", "b"], "a b");
        let (f, g) = (t(&sig, "\\x.x"), t(&sig, "\\x.\\y.x"));
        assert_eq!(substitute(&sig, &body, &[f.clone(), g.clone()]), t(&sig, "(\\x.x) (\\x.\\y.x)"));
        // One replacement for the innermost slot leaves `a` free.
        assert_eq!(substitute(&sig, &body, &[g]), t_in(&sig, &["a"], "a (\\x.\\y.x)"));
    }

    #[test]
    fn strengthen_inverts_shift() {
        let sig = sr();
        let e = t_in(&sig, &["a", "b"], "\\x. a (b x)");
        let up = shift(&sig, &e, 2, 1);
        assert_eq!(strengthen(&sig, &up, 2, 1), Some(e.clone()));
        assert_eq!(strengthen(&sig, &e, 1, 0), None);
        assert!(is_closed_in(&sig, &e, 2));
        assert!(!is_closed_in(&sig, &e, 1));
    }

    fn ctx_v(sig: &Signature, n: usize) -> Ctx {
        vec![sort(sig, "v"); n]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn identity_substitution(seed in any::<u64>(), n in 0usize..3, size in 1usize..9) {
            let sig = sr();
            let p = sort(&sig, "p");
            if let Some(e) = sample(&sig, p, &ctx_v(&sig, n), size, seed) {
                let ids: Vec<Term> = (0..n as u32).rev().map(Term::Var).collect();
                prop_assert_eq!(substitute(&sig, &e, &ids), e);
            }
        }

        #[test]
        fn substitution_composes(seed in any::<u64>(), size in 1usize..9) {
            // e in [a, b], sigma: [a, b] -> [c], tau: [c] -> closed
            let sig = sr();
            let (v, p) = (sort(&sig, "v"), sort(&sig, "p"));
            let e = sample(&sig, p, &ctx_v(&sig, 2), size, seed);
            let s1 = sample(&sig, v, &ctx_v(&sig, 1), 4, seed ^ 1);
            let s2 = sample(&sig, v, &ctx_v(&sig, 1), 4, seed ^ 2);
            let tau = sample(&sig, v, &vec![], 4, seed ^ 3).unwrap();
            if let (Some(e), Some(s1), Some(s2)) = (e, s1, s2) {
                let sigma = [s1, s2];
                let lhs = substitute(&sig, &substitute(&sig, &e, &sigma), &[tau.clone()]);
                let composed: Vec<Term> = sigma.iter().map(|s| substitute(&sig, s, &[tau.clone()])).collect();
                prop_assert_eq!(lhs, substitute(&sig, &e, &composed));
            }
        }

        #[test]
        fn substitution_preserves_sorts(seed in any::<u64>(), size in 1usize..9) {
            let sig = sr();
            let (v, p) = (sort(&sig, "v"), sort(&sig, "p"));
            let e = sample(&sig, p, &ctx_v(&sig, 1), size, seed);
            let w = sample(&sig, v, &vec![], 5, seed ^ 7).unwrap();
            if let Some(e) = e {
                let s = least_sort(&sig, &ctx_v(&sig, 1), &e).unwrap();
                let got = substitute(&sig, &e, &[w]);
                prop_assert!(check_sort(&sig, &vec![], &got, s).is_ok());
            }
        }
    }
}
