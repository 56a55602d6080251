//! Helpers shared by unit tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::enumerate::TermSampler;
use crate::sig::Signature;
use crate::syntax::{parse_term, parse_term_in};
use crate::term::{Ctx, Term};

pub fn sr() -> Signature {
    crate::instances::shift_reset()
}

pub fn sort(sig: &Signature, name: &str) -> crate::term::SortId {
    sig.sort_id(name).unwrap_or_else(|| panic!("no sort {name}"))
}

/// Parses a closed term, panicking with the message on failure.
pub fn t(sig: &Signature, text: &str) -> Term {
    parse_term(sig, text).unwrap_or_else(|e| panic!("{text}: {e}"))
}

/// Parses a term whose free variables are `names`, all at sort `v`
/// (innermost last).
pub fn t_in(sig: &Signature, names: &[&str], text: &str) -> Term {
    let v = sort(sig, "v");
    let ctx: Vec<(String, _)> = names.iter().map(|n| (n.to_string(), v)).collect();
    parse_term_in(sig, text, &ctx).unwrap_or_else(|e| panic!("{text}: {e}"))
}

/// A uniformly drawn term of at most `max` nodes, if any exists.
pub fn sample(sig: &Signature, sort: crate::term::SortId, ctx: &Ctx, max: usize, seed: u64) -> Option<Term> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TermSampler::new(sig).sample_up_to(&mut rng, sort, ctx, max)
}
