//! Finite term universes: exhaustive enumeration and uniform sampling by size.

use std::collections::HashMap;

use rand::Rng;

use crate::sig::Signature;
use crate::term::{ConId, Ctx, SortId, Term};

/// Every normal-form term of sort `sort` (or below) in `ctx` with at most
/// `max_size` nodes, ordered by size and then by the canonical constructor
/// order (declaration order).
pub fn enumerate_terms(sig: &Signature, sort: SortId, ctx: &Ctx, max_size: usize) -> Vec<Term> {
    let mut e = Enumerator::new(sig);
    (1..=max_size).flat_map(|n| e.exact(sort, ctx, n).to_vec()).collect()
}

/// Memoizing enumerator of terms by exact size.
pub struct Enumerator<'a> {
    sig: &'a Signature,
    memo: HashMap<(SortId, Ctx, usize), Vec<Term>>,
}

impl<'a> Enumerator<'a> {
    pub fn new(sig: &'a Signature) -> Self {
        Enumerator { sig, memo: HashMap::new() }
    }

    pub fn exact(&mut self, sort: SortId, ctx: &Ctx, n: usize) -> &[Term] {
        let key = (sort, ctx.clone(), n);
        if !self.memo.contains_key(&key) {
            let terms = self.compute(sort, ctx, n);
            self.memo.insert(key.clone(), terms);
        }
        &self.memo[&key]
    }

    fn compute(&mut self, sort: SortId, ctx: &Ctx, n: usize) -> Vec<Term> {
        let sig = self.sig;
        let mut out = Vec::new();
        if n == 0 {
            return out;
        }
        if n == 1 {
            for (pos, &s) in ctx.iter().enumerate() {
                if sig.leq(s, sort) {
                    out.push(Term::Var((ctx.len() - 1 - pos) as u32));
                }
            }
        }
        let cons: Vec<ConId> = sig.cons_of_sort(sort).collect();
        for c in cons {
            let decl = sig.con(c).clone();
            if decl.args.is_empty() {
                if n == 1 {
                    out.push(Term::Con(c, vec![]));
                }
                continue;
            }
            for split in compositions(n - 1, decl.args.len()) {
                let mut parts: Vec<Vec<Term>> = Vec::with_capacity(split.len());
                for (spec, &k) in decl.args.iter().zip(&split) {
                    let mut inner = ctx.clone();
                    inner.extend(spec.binders.iter().copied());
                    parts.push(self.exact(spec.sort, &inner, k).to_vec());
                }
                if parts.iter().any(Vec::is_empty) {
                    continue;
                }
                cartesian(&parts, &mut |args| out.push(Term::Con(c, args)));
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

/// All ways to write `total` as an ordered sum of `parts` positive integers.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn go(total: usize, parts: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 0 {
            if total == 0 {
                out.push(acc.clone());
            }
            return;
        }
        if total < parts {
            return;
        }
        for first in 1..=(total - (parts - 1)) {
            acc.push(first);
            go(total - first, parts - 1, acc, out);
            acc.pop();
        }
    }
    let mut out = Vec::new();
    go(total, parts, &mut Vec::new(), &mut out);
    out
}

fn cartesian(parts: &[Vec<Term>], emit: &mut dyn FnMut(Vec<Term>)) {
    fn go(parts: &[Vec<Term>], acc: &mut Vec<Term>, emit: &mut dyn FnMut(Vec<Term>)) {
        match parts.split_first() {
            None => emit(acc.clone()),
            Some((first, rest)) => {
                for t in first {
                    acc.push(t.clone());
                    go(rest, acc, emit);
                    acc.pop();
                }
            }
        }
    }
    go(parts, &mut Vec::new(), emit)
}

/// Uniform random terms of a given exact size, by counting and unranking.
pub struct TermSampler<'a> {
    sig: &'a Signature,
    counts: HashMap<(SortId, Ctx, usize), u128>,
}

impl<'a> TermSampler<'a> {
    pub fn new(sig: &'a Signature) -> Self {
        TermSampler { sig, counts: HashMap::new() }
    }

    /// Number of terms of sort `sort` in `ctx` with exactly `n` nodes.
    pub fn count(&mut self, sort: SortId, ctx: &Ctx, n: usize) -> u128 {
        if n == 0 {
            return 0;
        }
        let key = (sort, ctx.clone(), n);
        if let Some(&c) = self.counts.get(&key) {
            return c;
        }
        let sig = self.sig;
        let mut total: u128 = 0;
        if n == 1 {
            total += ctx.iter().filter(|&&s| sig.leq(s, sort)).count() as u128;
        }
        let cons: Vec<ConId> = sig.cons_of_sort(sort).collect();
        for c in cons {
            total = total.saturating_add(self.con_count(c, ctx, n));
        }
        self.counts.insert(key, total);
        total
    }

    fn con_count(&mut self, c: ConId, ctx: &Ctx, n: usize) -> u128 {
        let decl = self.sig.con(c).clone();
        if decl.args.is_empty() {
            return u128::from(n == 1);
        }
        let mut total: u128 = 0;
        for split in compositions(n - 1, decl.args.len()) {
            total = total.saturating_add(self.split_count(c, ctx, &split));
        }
        total
    }

    fn split_count(&mut self, c: ConId, ctx: &Ctx, split: &[usize]) -> u128 {
        let decl = self.sig.con(c).clone();
        let mut prod: u128 = 1;
        for (spec, &k) in decl.args.iter().zip(split) {
            let mut inner = ctx.clone();
            inner.extend(spec.binders.iter().copied());
            prod = prod.saturating_mul(self.count(spec.sort, &inner, k));
            if prod == 0 {
                break;
            }
        }
        prod
    }

    /// A uniformly chosen term with exactly `n` nodes, if any exists.
    pub fn sample_exact<R: Rng>(&mut self, rng: &mut R, sort: SortId, ctx: &Ctx, n: usize) -> Option<Term> {
        let total = self.count(sort, ctx, n);
        if total == 0 {
            return None;
        }
        let mut pick = rng.gen_range(0..total);
        let sig = self.sig;
        if n == 1 {
            for (pos, &s) in ctx.iter().enumerate() {
                if sig.leq(s, sort) {
                    if pick == 0 {
                        return Some(Term::Var((ctx.len() - 1 - pos) as u32));
                    }
                    pick -= 1;
                }
            }
        }
        let cons: Vec<ConId> = sig.cons_of_sort(sort).collect();
        for c in cons {
            let decl = sig.con(c).clone();
            if decl.args.is_empty() {
                if n == 1 {
                    if pick == 0 {
                        return Some(Term::Con(c, vec![]));
                    }
                    pick -= 1;
                }
                continue;
            }
            for split in compositions(n - 1, decl.args.len()) {
                let w = self.split_count(c, ctx, &split);
                if pick < w {
                    let mut args = Vec::with_capacity(split.len());
                    for (spec, &k) in decl.args.iter().zip(&split) {
                        let mut inner = ctx.clone();
                        inner.extend(spec.binders.iter().copied());
                        args.push(self.sample_exact(rng, spec.sort, &inner, k)?);
                    }
                    return Some(Term::Con(c, args));
                }
                pick -= w;
            }
        }
        None
    }

    /// Picks a size uniformly among the nonempty sizes `1..=max`, then a
    /// uniform term of that size.
    pub fn sample_up_to<R: Rng>(&mut self, rng: &mut R, sort: SortId, ctx: &Ctx, max: usize) -> Option<Term> {
        let sizes: Vec<usize> = (1..=max).filter(|&n| self.count(sort, ctx, n) > 0).collect();
        if sizes.is_empty() {
            return None;
        }
        let n = sizes[rng.gen_range(0..sizes.len())];
        self.sample_exact(rng, sort, ctx, n)
    }
}
