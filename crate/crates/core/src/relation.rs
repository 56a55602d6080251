//! Binary relations over a finite universe of terms, indexed by binding
//! context.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::kernel::least_sort;
use crate::sig::Signature;
use crate::term::{Ctx, SortId, Term};

pub type Entry = (Ctx, Term);

/// A relation given by explicit pairs, an equivalence (classes), and
/// optionally the identity on its universe.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Relation {
    universe: BTreeSet<Entry>,
    pairs: BTreeSet<(Ctx, Term, Term)>,
    classes: BTreeMap<Entry, u32>,
    reflexive: bool,
}

impl Relation {
    pub fn empty(universe: impl IntoIterator<Item = Entry>) -> Self {
        Relation { universe: universe.into_iter().collect(), ..Default::default() }
    }

    pub fn identity(universe: impl IntoIterator<Item = Entry>) -> Self {
        Relation { reflexive: true, ..Relation::empty(universe) }
    }

    /// The equivalence whose classes are given by `class_of`.
    pub fn from_classes(universe: impl IntoIterator<Item = Entry>, class_of: impl Fn(&Entry) -> Option<u32>) -> Self {
        let mut r = Relation::empty(universe);
        r.reflexive = true;
        for e in &r.universe {
            if let Some(c) = class_of(e) {
                r.classes.insert(e.clone(), c);
            }
        }
        r
    }

    pub fn insert_pair(&mut self, ctx: Ctx, a: Term, b: Term) {
        self.pairs.insert((ctx, a, b));
    }

    pub fn insert_universe(&mut self, ctx: Ctx, t: Term) {
        self.universe.insert((ctx, t));
    }

    pub fn universe(&self) -> &BTreeSet<Entry> {
        &self.universe
    }

    pub fn in_universe(&self, ctx: &Ctx, t: &Term) -> bool {
        self.universe.contains(&(ctx.clone(), t.clone()))
    }

    pub fn related(&self, ctx: &Ctx, a: &Term, b: &Term) -> bool {
        if self.reflexive && a == b && self.in_universe(ctx, a) {
            return true;
        }
        if self.pairs.contains(&(ctx.clone(), a.clone(), b.clone())) {
            return true;
        }
        let ka = (ctx.clone(), a.clone());
        let kb = (ctx.clone(), b.clone());
        matches!((self.classes.get(&ka), self.classes.get(&kb)), (Some(x), Some(y)) if x == y)
    }

    /// Pairs listed explicitly (not those implied by classes or reflexivity).
    pub fn explicit_pairs(&self) -> &BTreeSet<(Ctx, Term, Term)> {
        &self.pairs
    }

    pub fn classes(&self) -> BTreeMap<u32, Vec<Entry>> {
        let mut out: BTreeMap<u32, Vec<Entry>> = BTreeMap::new();
        for (e, &c) in &self.classes {
            out.entry(c).or_default().push(e.clone());
        }
        out
    }

    /// Universe members satisfying `keep`, in order.
    pub fn members(&self, keep: impl Fn(&Ctx, &Term) -> bool) -> Vec<&Entry> {
        self.universe.iter().filter(|(c, t)| keep(c, t)).collect()
    }

    /// A related pair of distinct terms whose left entry satisfies `keep`,
    /// chosen uniformly among explicit pairs and same-class pairs.
    pub fn sample_nontrivial<R: Rng>(&self, rng: &mut R, keep: impl Fn(&Ctx, &Term) -> bool) -> Option<(Ctx, Term, Term)> {
        let explicit: Vec<&(Ctx, Term, Term)> = self
            .pairs
            .iter()
            .filter(|(c, a, b)| a != b && keep(c, a))
            .collect();
        let classes: Vec<Vec<Entry>> = self
            .classes()
            .into_values()
            .map(|members| members.into_iter().filter(|(c, t)| keep(c, t)).collect::<Vec<_>>())
            .filter(|m| m.len() >= 2)
            .collect();
        let class_weight: Vec<u64> = classes.iter().map(|m| (m.len() * (m.len() - 1)) as u64).collect();
        let total = explicit.len() as u64 + class_weight.iter().sum::<u64>();
        if total == 0 {
            return None;
        }
        let mut pick = rng.gen_range(0..total);
        if pick < explicit.len() as u64 {
            return Some(explicit[pick as usize].clone());
        }
        pick -= explicit.len() as u64;
        for (m, &w) in classes.iter().zip(&class_weight) {
            if pick < w {
                let n = m.len() as u64;
                let i = (pick / (n - 1)) as usize;
                let mut j = (pick % (n - 1)) as usize;
                if j >= i {
                    j += 1;
                }
                return Some((m[i].0.clone(), m[i].1.clone(), m[j].1.clone()));
            }
            pick -= w;
        }
        None
    }
}

/// Least sort of a universe entry, if it is well-sorted.
pub fn entry_sort(sig: &Signature, ctx: &Ctx, t: &Term) -> Option<SortId> {
    least_sort(sig, ctx, t).ok()
}
