//! Terms: the generic prefix form `con(arg, x. arg)`, operation calls
//! `op(main; aux)`, metavariables `m`, `m{t}` and `m:sort`, and the
//! lambda-calculus sugar `\x. e`, `e e`, `shift x. e`, `<e>`, `[]`.

use super::lexer::{Tok, Token};
use super::ParseError;
use crate::kernel::least_sort;
use crate::sig::Signature;
use crate::term::{ConId, Ctx, MetaId, SortId, Term};

/// Constructors the surface sugar maps to, when the signature has them with
/// the expected shape.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sugar {
    pub lam: Option<ConId>,
    pub app: Option<ConId>,
    pub shift: Option<ConId>,
    pub reset: Option<ConId>,
    pub hole: Option<ConId>,
    pub capp: Option<ConId>,
    pub cappr: Option<ConId>,
}

impl Sugar {
    pub fn of(sig: &Signature) -> Sugar {
        let shaped = |name: &str, binders: &[usize]| -> Option<ConId> {
            let c = sig.con_id(name)?;
            let decl = sig.con(c);
            let ok = decl.args.len() == binders.len()
                && decl.args.iter().zip(binders).all(|(a, &b)| a.binders.len() == b);
            ok.then_some(c)
        };
        Sugar {
            lam: shaped("lam", &[1]),
            app: shaped("app", &[0, 0]),
            shift: shaped("shift", &[1]),
            reset: shaped("reset", &[0]),
            hole: shaped("hole", &[]),
            capp: shaped("capp", &[0, 0]),
            cappr: shaped("cappr", &[0, 0]),
        }
    }
}

/// Metavariables met while parsing a rule: created on first use.
#[derive(Debug, Default)]
pub struct MetaBuilder {
    pub names: Vec<String>,
    pub annotations: Vec<Option<SortId>>,
}

impl MetaBuilder {
    fn get_or_add(&mut self, name: &str) -> MetaId {
        match self.names.iter().position(|n| n == name) {
            Some(i) => MetaId::from(i),
            None => {
                self.names.push(name.to_string());
                self.annotations.push(None);
                MetaId::from(self.names.len() - 1)
            }
        }
    }
}

pub enum MetaMode<'m> {
    /// Ground terms: unbound names are errors.
    Forbidden,
    /// Clause right-hand sides: only the listed names.
    Fixed(&'m [String]),
    /// Rules: any unbound, non-constructor name is a metavariable.
    Open(&'m mut MetaBuilder),
}

pub struct TermParser<'a, 'm> {
    sig: &'a Signature,
    toks: &'a [Token],
    pos: usize,
    scope: Vec<(String, SortId)>,
    metas: MetaMode<'m>,
    sugar: Sugar,
    line: usize,
}

impl<'a, 'm> TermParser<'a, 'm> {
    pub fn new(sig: &'a Signature, toks: &'a [Token], line: usize, metas: MetaMode<'m>) -> Self {
        TermParser { sig, toks, pos: 0, scope: Vec::new(), metas, sugar: Sugar::of(sig), line }
    }

    pub fn with_scope(mut self, scope: Vec<(String, SortId)>) -> Self {
        self.scope = scope;
        self
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn set_pos(&mut self, pos: usize) {
        self.pos = pos;
    }

    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.tok)
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    pub fn error_here(&self, msg: impl Into<String>) -> ParseError {
        match self.toks.get(self.pos) {
            Some(t) => ParseError::new(t.line, t.col, msg),
            None => {
                let col = self.toks.last().map(|t| t.col + 1).unwrap_or(1);
                ParseError::new(self.line, col, msg)
            }
        }
    }

    pub fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => {
                let msg = format!("expected {}, found {}", want.describe(), t.describe());
                Err(self.error_here(msg))
            }
            None => Err(self.error_here(format!("expected {}, found end of line", want.describe()))),
        }
    }

    pub fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            Some(t) => {
                let msg = format!("expected a name, found {}", t.describe());
                Err(self.error_here(msg))
            }
            None => Err(self.error_here("expected a name, found end of line")),
        }
    }

    fn ctx(&self) -> Ctx {
        self.scope.iter().map(|(_, s)| *s).collect()
    }

    fn lookup_bound(&self, name: &str) -> Option<u32> {
        self.scope.iter().rev().position(|(n, _)| n == name).map(|i| i as u32)
    }

    fn starts_binder_sugar(&self) -> bool {
        match self.peek() {
            Some(Tok::Backslash) => self.sugar.lam.is_some(),
            Some(Tok::Ident(s)) if s == "shift" => {
                self.sugar.shift.is_some()
                    && matches!(self.peek_at(1), Some(Tok::Ident(_)))
                    && matches!(self.peek_at(2), Some(Tok::Dot))
            }
            _ => false,
        }
    }

    fn starts_atom(&self) -> bool {
        match self.peek() {
            Some(Tok::Ident(_)) | Some(Tok::LParen) => true,
            Some(Tok::LAngle) => self.sugar.reset.is_some(),
            Some(Tok::Hole) => self.sugar.hole.is_some(),
            _ => false,
        }
    }

    pub fn parse_term(&mut self) -> Result<Term, ParseError> {
        if self.starts_binder_sugar() {
            return self.parse_binder_sugar();
        }
        let mut acc = self.parse_atom()?;
        loop {
            if self.starts_binder_sugar() {
                let rhs = self.parse_binder_sugar()?;
                acc = self.juxtapose(acc, rhs)?;
                break;
            }
            if !self.starts_atom() {
                break;
            }
            let rhs = self.parse_atom()?;
            acc = self.juxtapose(acc, rhs)?;
        }
        Ok(acc)
    }

    fn parse_binder_sugar(&mut self) -> Result<Term, ParseError> {
        let con = match self.peek() {
            Some(Tok::Backslash) => {
                self.pos += 1;
                self.sugar.lam.unwrap()
            }
            _ => {
                self.pos += 1;
                self.sugar.shift.unwrap()
            }
        };
        let name = self.ident()?;
        self.expect(Tok::Dot)?;
        let sort = self.sig.con(con).args[0].binders[0];
        self.scope.push((name, sort));
        let body = self.parse_term();
        self.scope.pop();
        Ok(Term::Con(con, vec![body?]))
    }

    fn known_sort(&self, t: &Term) -> Option<SortId> {
        if t.has_meta() {
            if let (Term::Meta(m, _), MetaMode::Open(b)) = (t, &self.metas) {
                return b.annotations[m.index()];
            }
            return None;
        }
        least_sort(self.sig, &self.ctx(), t).ok()
    }

    fn juxtapose(&self, l: Term, r: Term) -> Result<Term, ParseError> {
        let sig = self.sig;
        let ls = self.known_sort(&l);
        let rs = self.known_sort(&r);
        if let (Some(cappr), Some(s)) = (self.sugar.cappr, ls) {
            if sig.leq(s, sig.con(cappr).args[0].sort) && !sig.leq(s, sig.con(cappr).args[1].sort) {
                return Ok(Term::Con(cappr, vec![l, r]));
            }
        }
        if let (Some(capp), Some(s)) = (self.sugar.capp, rs) {
            if sig.leq(s, sig.con(capp).args[1].sort) && !sig.leq(s, sig.con(capp).args[0].sort) {
                return Ok(Term::Con(capp, vec![l, r]));
            }
        }
        match self.sugar.app {
            Some(app) => Ok(Term::Con(app, vec![l, r])),
            None => Err(self.error_here("juxtaposition needs an `app` constructor")),
        }
    }

    fn parse_atom(&mut self) -> Result<Term, ParseError> {
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let t = self.parse_term()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            Some(Tok::LAngle) if self.sugar.reset.is_some() => {
                self.pos += 1;
                let t = self.parse_term()?;
                self.expect(Tok::RAngle)?;
                Ok(Term::Con(self.sugar.reset.unwrap(), vec![t]))
            }
            Some(Tok::Hole) if self.sugar.hole.is_some() => {
                self.pos += 1;
                Ok(Term::Con(self.sugar.hole.unwrap(), vec![]))
            }
            Some(Tok::Ident(name)) => {
                let start = self.pos;
                self.pos += 1;
                if let Some(i) = self.lookup_bound(&name) {
                    return Ok(Term::Var(i));
                }
                if let Some(c) = self.sig.con_id(&name) {
                    return self.parse_con_args(c);
                }
                if let Some(o) = self.sig.op_id(&name) {
                    return self.parse_op_args(o);
                }
                self.parse_meta(&name, start)
            }
            Some(t) => Err(self.error_here(format!("expected a term, found {}", t.describe()))),
            None => Err(self.error_here("expected a term, found end of line")),
        }
    }

    fn parse_con_args(&mut self, c: ConId) -> Result<Term, ParseError> {
        let decl = self.sig.con(c).clone();
        if decl.args.is_empty() {
            if self.peek() == Some(&Tok::LParen) && self.peek_at(1) == Some(&Tok::RParen) {
                self.pos += 2;
            }
            return Ok(Term::Con(c, vec![]));
        }
        if self.peek() != Some(&Tok::LParen) {
            return Err(self.error_here(format!("constructor `{}` expects {} arguments", decl.name, decl.args.len())));
        }
        self.pos += 1;
        let mut args = Vec::with_capacity(decl.args.len());
        for (i, spec) in decl.args.iter().enumerate() {
            if i > 0 {
                if self.peek() == Some(&Tok::RParen) {
                    return Err(self.error_here(format!(
                        "constructor `{}` expects {} arguments, found {}",
                        decl.name,
                        decl.args.len(),
                        i
                    )));
                }
                self.expect(Tok::Comma)?;
            }
            let mut pushed = 0;
            for &bs in &spec.binders {
                let name = self.ident()?;
                self.expect(Tok::Dot)?;
                self.scope.push((name, bs));
                pushed += 1;
            }
            let arg = self.parse_term();
            for _ in 0..pushed {
                self.scope.pop();
            }
            args.push(arg?);
        }
        if self.peek() == Some(&Tok::Comma) {
            return Err(self.error_here(format!("constructor `{}` expects {} arguments", decl.name, decl.args.len())));
        }
        self.expect(Tok::RParen)?;
        Ok(Term::Con(c, args))
    }

    fn parse_op_args(&mut self, o: crate::term::OpId) -> Result<Term, ParseError> {
        let decl = self.sig.op(o).clone();
        self.expect(Tok::LParen)?;
        let main = self.parse_term()?;
        self.expect(Tok::Semi)?;
        let mut aux = vec![self.parse_term()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            aux.push(self.parse_term()?);
        }
        self.expect(Tok::RParen)?;
        if aux.len() != decl.aux.len() {
            return Err(self.error_here(format!(
                "operation `{}` expects {} auxiliary arguments, found {}",
                decl.name,
                decl.aux.len(),
                aux.len()
            )));
        }
        Ok(Term::op(o, main, aux))
    }

    fn parse_meta(&mut self, name: &str, start: usize) -> Result<Term, ParseError> {
        let id = match &mut self.metas {
            MetaMode::Forbidden => {
                self.pos = start;
                return Err(self.error_here(format!("unbound name `{name}`")));
            }
            MetaMode::Fixed(names) => match names.iter().position(|n| n == name) {
                Some(i) => MetaId::from(i),
                None => {
                    self.pos = start;
                    return Err(self.error_here(format!("unknown metavariable `{name}`")));
                }
            },
            MetaMode::Open(b) => b.get_or_add(name),
        };
        let mut args = Vec::new();
        if self.peek() == Some(&Tok::LBrace) {
            self.pos += 1;
            args.push(self.parse_term()?);
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                args.push(self.parse_term()?);
            }
            self.expect(Tok::RBrace)?;
        }
        if self.peek() == Some(&Tok::Colon) {
            self.pos += 1;
            let sname = self.ident()?;
            let sort = self
                .sig
                .sort_id(&sname)
                .ok_or_else(|| self.error_here(format!("unknown sort `{sname}`")))?;
            match &mut self.metas {
                MetaMode::Open(b) => match b.annotations[id.index()] {
                    Some(prev) if prev != sort => {
                        return Err(self.error_here(format!("conflicting sort annotations for `{name}`")));
                    }
                    _ => b.annotations[id.index()] = Some(sort),
                },
                _ => return Err(self.error_here("sort annotations are only allowed in rules")),
            }
        }
        Ok(Term::Meta(id, args))
    }
}
