//! Surface syntax: signature files, terms and their printers.

mod lexer;
mod parser;
mod printer;
mod sigfile;

use std::fmt;

pub use parser::Sugar;
pub use printer::{print_template, print_term, print_term_in, print_transition_pattern, Printer};
pub use sigfile::parse_signature;

use crate::sig::Signature;
use crate::term::{SortId, Term};
use lexer::{lex_line, strip_comment};
use parser::{MetaMode, TermParser};

/// A syntax error with a 1-based line and column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, col: usize, message: impl Into<String>) -> Self {
        ParseError { line, col, message: message.into() }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for ParseError {}

/// Parses a ground term. `ctx` names the free variables (innermost last).
pub fn parse_term_in(sig: &Signature, text: &str, ctx: &[(String, SortId)]) -> Result<Term, ParseError> {
    let toks = lex_line(strip_comment(text), 1)?;
    let mut p = TermParser::new(sig, &toks, 1, MetaMode::Forbidden).with_scope(ctx.to_vec());
    let t = p.parse_term()?;
    if !p.at_end() {
        return Err(p.error_here("unexpected input after term"));
    }
    let sorts = ctx.iter().map(|(_, s)| *s).collect();
    crate::kernel::least_sort(sig, &sorts, &t).map_err(|e| ParseError::new(1, 1, e.to_string()))?;
    Ok(t)
}

/// Parses a closed ground term.
pub fn parse_term(sig: &Signature, text: &str) -> Result<Term, ParseError> {
    parse_term_in(sig, text, &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerate::enumerate_terms;
    use crate::instances::{pcf, PCF_SIG, SHIFT_RESET_SIG};
    use crate::testutil::{sort, sr};

    #[test]
    fn shipped_signature_shape() {
        let sig = parse_signature(SHIFT_RESET_SIG).unwrap();
        assert_eq!(sig.sorts().count(), 3);
        assert_eq!(sig.cons.len(), 7);
        assert_eq!(sig.ops.len(), 2);
        assert_eq!(sig.clauses.len(), 6);
        assert_eq!(sig.edges.len(), 3);
        assert_eq!(sig.rules.len(), 17);
        let (v, p) = (sort(&sig, "v"), sort(&sig, "p"));
        assert!(sig.leq(v, p) && !sig.leq(p, v));
        let pcf = parse_signature(PCF_SIG).unwrap();
        assert_eq!(pcf.rules.len(), 21);
    }

    #[test]
    fn minimal_and_broken_files() {
        let sig = parse_signature("sort v").unwrap();
        assert_eq!(sig.sorts().count(), 1);
        let err = parse_signature("sort p\ncon app : p, p -> q").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("unknown sort `q`"), "{err}");
        let err = parse_signature("sort v\nsort v").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(parse_signature("sort v\nbogus v").is_err());
    }

    #[test]
    fn surface_sugar_desugars() {
        let sig = sr();
        let lam = sig.con_id("lam").unwrap();
        let app = sig.con_id("app").unwrap();
        let reset = sig.con_id("reset").unwrap();
        let shift = sig.con_id("shift").unwrap();
        let id = Term::Con(lam, vec![Term::Var(0)]);
        assert_eq!(parse_term(&sig, "\\x.x").unwrap(), id);
        assert_eq!(
            parse_term(&sig, "<shift k. k>").unwrap(),
            Term::Con(reset, vec![Term::Con(shift, vec![Term::Var(0)])])
        );
        assert_eq!(parse_term(&sig, "(\\x.x) (\\y.y)").unwrap(), Term::Con(app, vec![id.clone(), id.clone()]));
        // prefix form names the same term
        assert_eq!(parse_term(&sig, "app(lam(x. x), lam(y. y))").unwrap(), parse_term(&sig, "(\\x.x) (\\y.y)").unwrap());
    }

    #[test]
    fn application_associates_left_and_lambda_extends_right() {
        let sig = sr();
        assert_eq!(parse_term(&sig, "\\a.\\b.\\c. a b c").unwrap(), parse_term(&sig, "\\a.\\b.\\c. ((a b) c)").unwrap());
        assert_eq!(parse_term(&sig, "\\x. x \\y. y").unwrap(), parse_term(&sig, "\\x. (x (\\y. y))").unwrap());
    }

    #[test]
    fn term_errors() {
        let sig = sr();
        assert!(parse_term(&sig, "x").unwrap_err().message.contains("x"));
        // a program where a value is required
        assert!(parse_term(&sig, "<\\x.x> []").is_err());
        assert!(parse_term(&sig, "(\\x.x").is_err());
    }

    fn round_trips(sig: &Signature, max: usize) -> usize {
        let mut n = 0;
        for s in sig.sorts() {
            for t in enumerate_terms(sig, s, &Vec::new(), max) {
                let printed = print_term(sig, &t);
                let back = parse_term(sig, &printed).unwrap_or_else(|e| panic!("{printed}: {e}"));
                assert_eq!(back, t, "{printed}");
                n += 1;
            }
        }
        n
    }

    #[test]
    fn printing_round_trips_up_to_size_six() {
        assert!(round_trips(&sr(), 6) > 1000);
        assert!(round_trips(&pcf(), 6) > 100);
    }

    #[test]
    fn open_terms_round_trip() {
        let sig = sr();
        let v = sort(&sig, "v");
        let names = vec!["a".to_string(), "b".to_string()];
        let scope: Vec<(String, SortId)> = names.iter().map(|n| (n.clone(), v)).collect();
        for s in sig.sorts() {
            for t in enumerate_terms(&sig, s, &vec![v, v], 4) {
                let printed = print_term_in(&sig, &names, &t);
                assert_eq!(parse_term_in(&sig, &printed, &scope).unwrap(), t, "{printed}");
            }
        }
    }
}
