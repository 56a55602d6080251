//! Multi-sorted terms with de Bruijn binding.
//!
//! A [`Term`] never stores binder names: the number and sorts of the binders
//! in front of each constructor argument come from the constructor's
//! declaration in the [`Signature`](crate::sig::Signature). Variable `Var(0)`
//! is the innermost enclosing binder.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl From<usize> for $name {
            fn from(i: usize) -> Self {
                $name(i as u32)
            }
        }
    };
}

id_type!(
    /// A sort, indexed by declaration order.
    SortId
);
id_type!(
    /// A term constructor, indexed by declaration order (the canonical ordering).
    ConId
);
id_type!(
    /// An additional operation; its index is also its stratum.
    OpId
);
id_type!(
    /// An edge (transition) type.
    EdgeId
);
id_type!(
    /// A metavariable of a rule or clause, indexing its `metas` table.
    MetaId
);

/// Sorts of the enclosing binders, innermost last.
pub type Ctx = Vec<SortId>;

/// A term over a signature.
///
/// `Op` and `Meta` are transient: they appear in clause right-hand sides and
/// rule templates, and are eliminated by instantiation and normalization.
/// `Meta(m, args)` applies the metavariable to explicit replacements for the
/// innermost `args.len()` variables of its context, so `e{w}` is the
/// substitution of `w` for the bound variable of `e`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(u32),
    Con(ConId, Vec<Term>),
    Op(OpId, Box<Term>, Vec<Term>),
    Meta(MetaId, Vec<Term>),
}

impl Term {
    pub fn con(c: ConId, args: Vec<Term>) -> Term {
        Term::Con(c, args)
    }

    pub fn op(o: OpId, main: Term, aux: Vec<Term>) -> Term {
        Term::Op(o, Box::new(main), aux)
    }

    pub fn meta(m: MetaId) -> Term {
        Term::Meta(m, Vec::new())
    }

    /// Node count: every variable, constructor, operation and metavariable
    /// occurrence counts one.
    pub fn size(&self) -> usize {
        match self {
            Term::Var(_) => 1,
            Term::Con(_, args) => 1 + args.iter().map(Term::size).sum::<usize>(),
            Term::Op(_, m, aux) => 1 + m.size() + aux.iter().map(Term::size).sum::<usize>(),
            Term::Meta(_, args) => 1 + args.iter().map(Term::size).sum::<usize>(),
        }
    }

    /// True when the term contains no `Op` and no `Meta` node.
    pub fn is_normal(&self) -> bool {
        match self {
            Term::Var(_) => true,
            Term::Con(_, args) => args.iter().all(Term::is_normal),
            Term::Op(..) | Term::Meta(..) => false,
        }
    }

    pub fn has_op(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Con(_, args) | Term::Meta(_, args) => args.iter().any(Term::has_op),
            Term::Op(..) => true,
        }
    }

    pub fn has_meta(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Con(_, args) => args.iter().any(Term::has_meta),
            Term::Op(_, m, aux) => m.has_meta() || aux.iter().any(Term::has_meta),
            Term::Meta(..) => true,
        }
    }

    /// All metavariables occurring in the term.
    pub fn metas(&self) -> BTreeSet<MetaId> {
        let mut out = BTreeSet::new();
        self.collect_metas(&mut out);
        out
    }

    pub fn collect_metas(&self, out: &mut BTreeSet<MetaId>) {
        match self {
            Term::Var(_) => {}
            Term::Con(_, args) => args.iter().for_each(|a| a.collect_metas(out)),
            Term::Op(_, m, aux) => {
                m.collect_metas(out);
                aux.iter().for_each(|a| a.collect_metas(out));
            }
            Term::Meta(m, args) => {
                out.insert(*m);
                args.iter().for_each(|a| a.collect_metas(out));
            }
        }
    }

    /// The metavariable if this term is a bare occurrence `m` (no replacements).
    pub fn as_bare_meta(&self) -> Option<MetaId> {
        match self {
            Term::Meta(m, args) if args.is_empty() => Some(*m),
            _ => None,
        }
    }
}

/// Pretty-printing needs a signature; this is only a debugging fallback.
impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(i) => write!(f, "#{i}"),
            Term::Con(c, args) => {
                write!(f, "c{}", c.0)?;
                write_list(f, args)
            }
            Term::Op(o, m, aux) => {
                write!(f, "o{}({m}", o.0)?;
                for a in aux {
                    write!(f, "; {a}")?;
                }
                write!(f, ")")
            }
            Term::Meta(m, args) => {
                write!(f, "?{}", m.0)?;
                if args.is_empty() {
                    Ok(())
                } else {
                    write_list(f, args)
                }
            }
        }
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, args: &[Term]) -> fmt::Result {
    if args.is_empty() {
        return Ok(());
    }
    write!(f, "(")?;
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            write!(f, ", ")?;
        }
        write!(f, "{a}")?;
    }
    write!(f, ")")
}
