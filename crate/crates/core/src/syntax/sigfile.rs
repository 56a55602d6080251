//! Line-oriented signature files.
//!
//! ```text
//! sort ID
//! subsort ID < ID
//! con ID : argspec, ... -> ID        argspec := ([ID, ...])? ID
//! op ID : ID ; ID, ... -> ID
//! ID(con(args..) ; aux, ...) = term  # clause
//! edge ID : ID ([ID, ...])? -> ID
//! rule ID : transition, ..., => transition
//! ```

use std::collections::BTreeMap;

use super::lexer::{lex_line, strip_comment, Tok, Token};
use super::parser::{MetaBuilder, MetaMode, TermParser};
use super::ParseError;
use crate::kernel::infer_sort;
use crate::sig::{ArgSpec, Clause, ConstructorDecl, EdgeTypeDecl, LabelSlot, MetaDecl, OperationDecl, Rule, Signature, TransitionPattern};
use crate::term::{Ctx, MetaId, SortId, Term};

pub fn parse_signature(text: &str) -> Result<Signature, ParseError> {
    let mut sig = Signature::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let toks = lex_line(strip_comment(raw), line)?;
        if toks.is_empty() {
            continue;
        }
        let mut cur = Cursor { sig: &sig, toks: &toks, pos: 0, line };
        let decl = cur.declaration()?;
        apply(&mut sig, decl, &toks[0])?;
    }
    Ok(sig)
}

enum Decl {
    Sort(String),
    Subsort(SortId, SortId),
    Con(ConstructorDecl),
    Op(OperationDecl),
    Clause(Clause),
    Edge(EdgeTypeDecl),
    Rule(Rule),
}

fn apply(sig: &mut Signature, decl: Decl, first: &Token) -> Result<(), ParseError> {
    let err = |e: crate::sig::SigError| ParseError::new(first.line, first.col, e.to_string());
    match decl {
        Decl::Sort(name) => sig.add_sort(&name).map(|_| ()).map_err(err),
        Decl::Subsort(a, b) => sig.add_subsort(a, b).map_err(err),
        Decl::Con(c) => sig.add_con(c).map(|_| ()).map_err(err),
        Decl::Op(o) => sig.add_op(o).map(|_| ()).map_err(err),
        Decl::Clause(c) => {
            sig.add_clause(c);
            Ok(())
        }
        Decl::Edge(e) => sig.add_edge(e).map(|_| ()).map_err(err),
        Decl::Rule(r) => sig.add_rule(r).map_err(err),
    }
}

struct Cursor<'a> {
    sig: &'a Signature,
    toks: &'a [Token],
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn error_at(&self, pos: usize, msg: impl Into<String>) -> ParseError {
        match self.toks.get(pos) {
            Some(t) => ParseError::new(t.line, t.col, msg),
            None => {
                let col = self.toks.last().map(|t| t.col + 1).unwrap_or(1);
                ParseError::new(self.line, col, msg)
            }
        }
    }

    fn error(&self, msg: impl Into<String>) -> ParseError {
        self.error_at(self.pos, msg)
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(self.error(format!("expected {}, found {}", want.describe(), t.describe()))),
            None => Err(self.error(format!("expected {}, found end of line", want.describe()))),
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            Some(t) => Err(self.error(format!("expected a name, found {}", t.describe()))),
            None => Err(self.error("expected a name, found end of line")),
        }
    }

    fn sort(&mut self) -> Result<SortId, ParseError> {
        let at = self.pos;
        let name = self.ident()?;
        self.sig
            .sort_id(&name)
            .ok_or_else(|| self.error_at(at, format!("unknown sort `{name}`")))
    }

    fn end(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(self.error(format!("unexpected {} at end of declaration", t.describe()))),
        }
    }

    fn declaration(&mut self) -> Result<Decl, ParseError> {
        let head = self.ident()?;
        let is_clause = matches!(self.peek(), Some(Tok::LParen)) && self.sig.op_id(&head).is_some();
        if is_clause {
            return self.clause(&head);
        }
        let decl = match head.as_str() {
            "sort" => Decl::Sort(self.ident()?),
            "subsort" => {
                let a = self.sort()?;
                self.expect(Tok::LAngle)?;
                let b = self.sort()?;
                Decl::Subsort(a, b)
            }
            "con" => self.con()?,
            "op" => self.op()?,
            "edge" => self.edge()?,
            "rule" => return self.rule(),
            other => {
                return Err(self.error_at(0, format!("unknown declaration `{other}`")));
            }
        };
        self.end()?;
        Ok(decl)
    }

    fn con(&mut self) -> Result<Decl, ParseError> {
        let name = self.ident()?;
        self.expect(Tok::Colon)?;
        let mut args = Vec::new();
        if self.peek() != Some(&Tok::Arrow) {
            loop {
                let mut binders = Ctx::new();
                if self.peek() == Some(&Tok::LBracket) {
                    self.pos += 1;
                    binders.push(self.sort()?);
                    while self.peek() == Some(&Tok::Comma) {
                        self.pos += 1;
                        binders.push(self.sort()?);
                    }
                    self.expect(Tok::RBracket)?;
                }
                let sort = self.sort()?;
                args.push(ArgSpec { binders, sort });
                if self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::Arrow)?;
        let result = self.sort()?;
        Ok(Decl::Con(ConstructorDecl { name, args, result }))
    }

    fn op(&mut self) -> Result<Decl, ParseError> {
        let name = self.ident()?;
        self.expect(Tok::Colon)?;
        let main = self.sort()?;
        self.expect(Tok::Semi)?;
        let mut aux = vec![self.sort()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            aux.push(self.sort()?);
        }
        self.expect(Tok::Arrow)?;
        let result = self.sort()?;
        Ok(Decl::Op(OperationDecl { name, main, aux, result }))
    }

    fn edge(&mut self) -> Result<Decl, ParseError> {
        let name = self.ident()?;
        self.expect(Tok::Colon)?;
        let source = self.sort()?;
        let mut labels = Vec::new();
        if self.peek() == Some(&Tok::LBracket) {
            self.pos += 1;
            labels.push(LabelSlot { sort: self.sort()?, ctx: Ctx::new() });
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                labels.push(LabelSlot { sort: self.sort()?, ctx: Ctx::new() });
            }
            self.expect(Tok::RBracket)?;
        }
        self.expect(Tok::Arrow)?;
        let target = self.sort()?;
        Ok(Decl::Edge(EdgeTypeDecl { name, source, labels, target }))
    }

    /// `op(con(x. a, b) ; c, d) = rhs`
    fn clause(&mut self, op_name: &str) -> Result<Decl, ParseError> {
        let sig = self.sig;
        let op = sig.op_id(op_name).unwrap();
        let op_decl = sig.op(op).clone();
        self.expect(Tok::LParen)?;
        let head_at = self.pos;
        let head_name = self.ident()?;
        let head = sig
            .con_id(&head_name)
            .ok_or_else(|| self.error_at(head_at, format!("unknown constructor `{head_name}`")))?;
        let head_decl = sig.con(head).clone();
        let mut metas: Vec<MetaDecl> = Vec::new();
        let mut arg_metas = Vec::new();
        let mut add_meta = |cur: &Cursor, at: usize, name: String, sort: SortId, ctx: Ctx| {
            if metas.iter().any(|m| m.name == name) {
                return Err(cur.error_at(at, format!("metavariable `{name}` bound twice")));
            }
            if sig.con_id(&name).is_some() || sig.op_id(&name).is_some() {
                return Err(cur.error_at(at, format!("`{name}` is a constructor or operation name")));
            }
            metas.push(MetaDecl { name, sort, ctx });
            Ok(MetaId::from(metas.len() - 1))
        };
        if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            for (i, spec) in head_decl.args.iter().enumerate() {
                if i > 0 {
                    self.expect(Tok::Comma)?;
                }
                // optional binder names, which only document the context
                while matches!(self.peek(), Some(Tok::Ident(_))) && self.toks.get(self.pos + 1).map(|t| &t.tok) == Some(&Tok::Dot) {
                    self.pos += 2;
                }
                let at = self.pos;
                let name = self.ident()?;
                arg_metas.push(add_meta(self, at, name, spec.sort, spec.binders.clone())?);
            }
            self.expect(Tok::RParen)?;
        }
        if arg_metas.len() != head_decl.args.len() {
            return Err(self.error(format!(
                "constructor `{}` expects {} arguments",
                head_decl.name,
                head_decl.args.len()
            )));
        }
        let mut aux_metas = Vec::new();
        if self.peek() == Some(&Tok::Semi) {
            self.pos += 1;
            loop {
                let at = self.pos;
                let name = self.ident()?;
                let k = aux_metas.len();
                let sort = *op_decl
                    .aux
                    .get(k)
                    .ok_or_else(|| self.error_at(at, format!("operation `{op_name}` has {} auxiliary parameters", op_decl.aux.len())))?;
                aux_metas.push(add_meta(self, at, name, sort, Ctx::new())?);
                if self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        if aux_metas.len() != op_decl.aux.len() {
            return Err(self.error(format!(
                "operation `{op_name}` expects {} auxiliary parameters",
                op_decl.aux.len()
            )));
        }
        self.expect(Tok::RParen)?;
        self.expect(Tok::Eq)?;
        let names: Vec<String> = metas.iter().map(|m| m.name.clone()).collect();
        let rest = &self.toks[self.pos..];
        let mut p = TermParser::new(sig, rest, self.line, MetaMode::Fixed(&names));
        let rhs = p.parse_term()?;
        if !p.at_end() {
            return Err(p.error_here("unexpected input after clause"));
        }
        Ok(Decl::Clause(Clause { op, head, metas, arg_metas, aux_metas, rhs }))
    }

    fn rule(&mut self) -> Result<Decl, ParseError> {
        let name = self.ident()?;
        self.expect(Tok::Colon)?;
        let rest = &self.toks[self.pos..];
        let mut builder = MetaBuilder::default();
        let (premises, conclusion) = {
            let mut p = TermParser::new(self.sig, rest, self.line, MetaMode::Open(&mut builder));
            let mut premises = Vec::new();
            while p.peek() != Some(&Tok::Turnstile) {
                premises.push(transition(self.sig, &mut p)?);
                match p.peek() {
                    Some(Tok::Comma) => p.expect(Tok::Comma)?,
                    Some(Tok::Turnstile) => {}
                    _ => return Err(p.error_here("expected `,` or `=>` after premise")),
                }
            }
            p.expect(Tok::Turnstile)?;
            let conclusion = transition(self.sig, &mut p)?;
            if !p.at_end() {
                return Err(p.error_here("unexpected input after conclusion"));
            }
            (premises, conclusion)
        };
        let metas = infer_metas(self.sig, &builder, &premises, &conclusion)
            .map_err(|m| ParseError::new(self.line, 1, format!("rule `{name}`: {m}")))?;
        Ok(Decl::Rule(Rule { name, metas, premises, conclusion }))
    }
}

fn transition(sig: &Signature, p: &mut TermParser) -> Result<TransitionPattern, ParseError> {
    let source = p.parse_term()?;
    p.expect(Tok::Minus)?;
    let at = p.pos();
    let edge_name = p.ident()?;
    let edge = match sig.edge_id(&edge_name) {
        Some(e) => e,
        None => {
            p.set_pos(at);
            return Err(p.error_here(format!("unknown edge type `{edge_name}`")));
        }
    };
    let mut labels = Vec::new();
    if p.peek() == Some(&Tok::LBracket) {
        p.expect(Tok::LBracket)?;
        labels.push(p.parse_term()?);
        while p.peek() == Some(&Tok::Comma) {
            p.expect(Tok::Comma)?;
            labels.push(p.parse_term()?);
        }
        p.expect(Tok::RBracket)?;
    }
    p.expect(Tok::Arrow)?;
    let target = p.parse_term()?;
    if labels.len() != sig.edge(edge).labels.len() {
        return Err(p.error_here(format!(
            "edge type `{edge_name}` expects {} labels, found {}",
            sig.edge(edge).labels.len(),
            labels.len()
        )));
    }
    Ok(TransitionPattern { source, edge, labels, target })
}

/// Where a metavariable occurs: binding context, expected sort, number of
/// explicit replacements.
struct Occurrence {
    ctx: Ctx,
    sort: SortId,
    nargs: usize,
}

fn collect(sig: &Signature, t: &Term, ctx: &Ctx, sort: SortId, out: &mut BTreeMap<MetaId, Vec<Occurrence>>) -> Result<(), String> {
    match t {
        Term::Var(_) => {}
        Term::Con(c, args) => {
            let decl = sig.con(*c);
            for (spec, a) in decl.args.iter().zip(args) {
                let mut inner = ctx.clone();
                inner.extend(spec.binders.iter().copied());
                collect(sig, a, &inner, spec.sort, out)?;
            }
        }
        Term::Op(o, main, aux) => {
            let decl = sig.op(*o);
            collect(sig, main, ctx, decl.main, out)?;
            for (&s, a) in decl.aux.iter().zip(aux) {
                collect(sig, a, ctx, s, out)?;
            }
        }
        Term::Meta(m, args) => {
            out.entry(*m).or_default().push(Occurrence { ctx: ctx.clone(), sort, nargs: args.len() });
        }
    }
    Ok(())
}

fn pattern_parts<'p>(sig: &Signature, p: &'p TransitionPattern) -> Vec<(&'p Term, SortId, Ctx)> {
    let e = sig.edge(p.edge);
    let mut parts = vec![(&p.source, e.source, Ctx::new())];
    for (l, slot) in p.labels.iter().zip(&e.labels) {
        parts.push((l, slot.sort, slot.ctx.clone()));
    }
    parts.push((&p.target, e.target, Ctx::new()));
    parts
}

fn infer_metas(
    sig: &Signature,
    builder: &MetaBuilder,
    premises: &[TransitionPattern],
    conclusion: &TransitionPattern,
) -> Result<Vec<MetaDecl>, String> {
    let mut occ: BTreeMap<MetaId, Vec<Occurrence>> = BTreeMap::new();
    let all: Vec<&TransitionPattern> = premises.iter().chain(std::iter::once(conclusion)).collect();
    for p in &all {
        for (t, sort, ctx) in pattern_parts(sig, p) {
            collect(sig, t, &ctx, sort, &mut occ)?;
        }
    }
    let mut metas = Vec::with_capacity(builder.names.len());
    for (i, name) in builder.names.iter().enumerate() {
        let m = MetaId::from(i);
        let list = occ.get(&m).map(Vec::as_slice).unwrap_or(&[]);
        let mut sort = builder.annotations[i];
        for o in list {
            sort = Some(match sort {
                None => o.sort,
                Some(s) => sig
                    .meet(s, o.sort)
                    .ok_or_else(|| format!("metavariable `{name}` is used at incompatible sorts"))?,
            });
        }
        let sort = sort.ok_or_else(|| format!("metavariable `{name}` has no sort"))?;
        let ctx = list
            .iter()
            .filter(|o| o.nargs == 0)
            .map(|o| o.ctx.clone())
            .min_by_key(Vec::len)
            .ok_or_else(|| format!("metavariable `{name}` must occur at least once without replacements"))?;
        metas.push(MetaDecl { name: name.clone(), sort, ctx });
    }
    for p in &all {
        for (t, sort, ctx) in pattern_parts(sig, p) {
            match infer_sort(sig, &metas, &ctx, t) {
                Ok(s) if sig.leq(s, sort) => {}
                Ok(s) => {
                    return Err(format!(
                        "expected sort {}, found {}",
                        sig.sort_name(sort),
                        sig.sort_name(s)
                    ))
                }
                Err(e) => return Err(e.to_string()),
            }
        }
    }
    Ok(metas)
}
