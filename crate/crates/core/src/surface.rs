//! Concrete syntax for types, contexts, processes and `.mcp` protocol files.
//!
//! ```text
//! type    := "end" | IDENT | "rec" IDENT "." type | branch ("+" branch)*
//! branch  := role "<-" role "?" LABEL "(" base? ")" ["." type]
//!          | "(" pterm ("(+)" pterm)* ")"
//! pterm   := prob ":" head ["." type]
//! head    := role "->" role "!" LABEL "(" base? ")" | "tau"
//! proc    := unary ("|" unary)*
//! unary   := "0" | "new" IDENT "." unary | "if" value "then" unary "else" unary
//!          | "def" decl ("and" decl)* "in" unary | IDENT "(" values ";" chans ")"
//!          | chan "{" psum ("+" psum)* "}" | "(" proc ")" | IDENT
//! psum    := role "<-" role "?" LABEL "(" IDENT? ")" ["." proc]
//!          | "(" pprob ("(+)" pprob)* ")"
//! pprob   := [prob ":"] (role "->" role "!" LABEL "(" value? ")" | "tau") ["." proc]
//! decl    := IDENT "(" params ";" chan ":" type, ... ")" "=" proc
//! chan    := IDENT "[" (role | "{" role ("," role)* "}") "]"
//! ```
//!
//! Files hold `type N = T`, `context N { chan : T, ... }` and
//! `process N = P` items; `#` starts a line comment. A bare identifier
//! refers to a type alias or to a named process and is inlined.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::rational::{parse_probability, Rational};
use crate::syntax::{
    is_end, BaseType, Branch, Channel, Decl, Head, LocalContext, Msg, Name, PAction, POut, PSummand,
    Process, SessionType, Summand, Ty, Value,
};
use crate::typemeta::{check_guarded, free_vars, subst};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default, serde::Serialize)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize)]
pub enum ParseErrorKind {
    Syntax,
    Unbound,
    Duplicate,
    Invalid,
}

#[derive(Clone, PartialEq, Eq, Debug, Error)]
#[error("{pos}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub pos: Pos,
    pub message: String,
}

impl ParseError {
    fn new(kind: ParseErrorKind, pos: Pos, message: impl Into<String>) -> Self {
        ParseError {
            kind,
            pos,
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum ItemKind {
    Type,
    Context,
    Process,
}

/// A parsed `.mcp` file with all references resolved.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct ProtocolFile {
    pub types: BTreeMap<Name, Ty>,
    pub contexts: BTreeMap<Name, LocalContext>,
    pub processes: BTreeMap<Name, Process>,
    pub spans: BTreeMap<(ItemKind, Name), Pos>,
}

// ---------------------------------------------------------------- lexer

#[derive(Clone, PartialEq, Eq, Debug)]
enum Tok {
    Ident(String),
    Num(String),
    Arrow,
    LArrow,
    Quest,
    Bang,
    LParen,
    RParen,
    OPlus,
    Plus,
    Dot,
    Colon,
    LBrace,
    RBrace,
    LBrack,
    RBrack,
    Comma,
    Semi,
    Bar,
    Eq,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(s) | Tok::Num(s) => return write!(f, "`{s}`"),
            Tok::Arrow => "->",
            Tok::LArrow => "<-",
            Tok::Quest => "?",
            Tok::Bang => "!",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::OPlus => "(+)",
            Tok::Plus => "+",
            Tok::Dot => ".",
            Tok::Colon => ":",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LBrack => "[",
            Tok::RBrack => "]",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Bar => "|",
            Tok::Eq => "=",
            Tok::Eof => "end of input",
        };
        write!(f, "`{s}`")
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let adv = |i: &mut usize, col: &mut usize, n: usize| {
        *i += n;
        *col += n;
    };
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            adv(&mut i, &mut col, 1);
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let peek = |k: usize| chars.get(i + k).copied();
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            out.push((Tok::Ident(s), pos));
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < chars.len() && (chars[i] == '.' || chars[i] == '/') && chars[i + 1].is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            out.push((Tok::Num(s), pos));
            continue;
        }
        let (tok, n) = match (c, peek(1), peek(2)) {
            ('-', Some('>'), _) => (Tok::Arrow, 2),
            ('<', Some('-'), _) => (Tok::LArrow, 2),
            ('(', Some('+'), Some(')')) => (Tok::OPlus, 3),
            ('?', _, _) => (Tok::Quest, 1),
            ('!', _, _) => (Tok::Bang, 1),
            ('(', _, _) => (Tok::LParen, 1),
            (')', _, _) => (Tok::RParen, 1),
            ('+', _, _) => (Tok::Plus, 1),
            ('.', _, _) => (Tok::Dot, 1),
            (':', _, _) => (Tok::Colon, 1),
            ('{', _, _) => (Tok::LBrace, 1),
            ('}', _, _) => (Tok::RBrace, 1),
            ('[', _, _) => (Tok::LBrack, 1),
            (']', _, _) => (Tok::RBrack, 1),
            (',', _, _) => (Tok::Comma, 1),
            (';', _, _) => (Tok::Semi, 1),
            ('|', _, _) => (Tok::Bar, 1),
            ('=', _, _) => (Tok::Eq, 1),
            _ => {
                return Err(ParseError::new(
                    ParseErrorKind::Syntax,
                    pos,
                    format!("unexpected character `{c}`"),
                ))
            }
        };
        adv(&mut i, &mut col, n);
        out.push((tok, pos));
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

// ---------------------------------------------------------------- parser

const PROC_REF: &str = "&";

struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
    /// First occurrence of each free identifier in a type.
    type_refs: BTreeMap<Name, Pos>,
    proc_refs: BTreeMap<Name, Pos>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn new(src: &str) -> PResult<Self> {
        Ok(Parser {
            toks: lex(src)?,
            i: 0,
            type_refs: BTreeMap::new(),
            proc_refs: BTreeMap::new(),
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let j = (self.i + k).min(self.toks.len() - 1);
        &self.toks[j].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].0.clone();
        if self.i < self.toks.len() - 1 {
            self.i += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(ParseError::new(ParseErrorKind::Syntax, self.pos(), msg))
    }

    fn expect(&mut self, t: Tok) -> PResult<()> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected {t}, found {}", self.peek()))
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{kw}`, found {}", self.peek()))
        }
    }

    fn ident(&mut self) -> PResult<Name> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            t => self.err(format!("expected identifier, found {t}")),
        }
    }

    fn plain_ident(&mut self) -> PResult<Name> {
        let pos = self.pos();
        let s = self.ident()?;
        if KEYWORDS.contains(&s.as_str()) {
            return Err(ParseError::new(
                ParseErrorKind::Syntax,
                pos,
                format!("keyword `{s}` cannot be used as a name"),
            ));
        }
        Ok(s)
    }

    fn at_eof(&self) -> bool {
        *self.peek() == Tok::Eof
    }

    // ----- types

    fn base(&mut self) -> PResult<Option<BaseType>> {
        self.expect(Tok::LParen)?;
        let b = if self.is_kw("nat") {
            self.bump();
            Some(BaseType::Nat)
        } else if self.is_kw("bool") {
            self.bump();
            Some(BaseType::Bool)
        } else {
            None
        };
        self.expect(Tok::RParen)?;
        Ok(b)
    }

    fn prob(&mut self) -> PResult<Rational> {
        let pos = self.pos();
        match self.bump() {
            Tok::Num(s) => parse_probability(&s)
                .map_err(|e| ParseError::new(ParseErrorKind::Invalid, pos, e.to_string())),
            t => Err(ParseError::new(
                ParseErrorKind::Syntax,
                pos,
                format!("expected probability, found {t}"),
            )),
        }
    }


    fn ty(&mut self, scope: &mut Vec<Name>) -> PResult<Ty> {
        self.ty_at(scope, true)
    }

    /// `splice`: a parenthesised choice followed by `+` is merged with the siblings.
    fn ty_at(&mut self, scope: &mut Vec<Name>, splice: bool) -> PResult<Ty> {
        if self.is_kw("rec") && !matches!(self.peek_at(1), Tok::LArrow) {
            self.bump();
            let x = self.plain_ident()?;
            self.expect(Tok::Dot)?;
            scope.push(x.clone());
            let body = self.ty_at(scope, splice);
            scope.pop();
            return Ok(SessionType::rec(x, body?));
        }
        if self.is_kw("end") && !matches!(self.peek_at(1), Tok::LArrow) {
            self.bump();
            return Ok(SessionType::end());
        }
        if let Tok::Ident(s) = self.peek().clone() {
            if !matches!(self.peek_at(1), Tok::LArrow) {
                let pos = self.pos();
                self.bump();
                if !scope.contains(&s) {
                    self.type_refs.entry(s.clone()).or_insert(pos);
                }
                return Ok(SessionType::var(s));
            }
        }
        if *self.peek() == Tok::LParen && !matches!(self.peek_at(1), Tok::Num(_)) {
            let pos = self.pos();
            self.bump();
            let inner = self.ty(scope)?;
            self.expect(Tok::RParen)?;
            if !splice || *self.peek() != Tok::Plus {
                return Ok(inner);
            }
            let SessionType::Mixed(bs) = &*inner else {
                return Err(ParseError::new(ParseErrorKind::Syntax, pos, "only choices can be combined with `+`"));
            };
            let mut branches = bs.clone();
            while self.eat(&Tok::Plus) {
                self.branch_into(scope, &mut branches)?;
            }
            return Ok(SessionType::mixed(branches));
        }
        let mut branches = Vec::new();
        loop {
            self.branch_into(scope, &mut branches)?;
            if !self.eat(&Tok::Plus) {
                break;
            }
        }
        Ok(SessionType::mixed(branches))
    }

    fn cont_ty(&mut self, scope: &mut Vec<Name>) -> PResult<Ty> {
        if self.eat(&Tok::Dot) {
            self.ty_at(scope, false)
        } else {
            Ok(SessionType::end())
        }
    }

    fn branch_into(&mut self, scope: &mut Vec<Name>, out: &mut Vec<Branch>) -> PResult<()> {
        match self.peek().clone() {
            Tok::Ident(_) if matches!(self.peek_at(1), Tok::LArrow) => {
                let to = self.ident()?;
                self.expect(Tok::LArrow)?;
                let from = self.ident()?;
                self.expect(Tok::Quest)?;
                let label = self.ident()?;
                let payload = self.base()?;
                let cont = self.cont_ty(scope)?;
                out.push(Branch::Input(Msg { from, to, label, payload }, cont));
                Ok(())
            }
            Tok::LParen if matches!(self.peek_at(1), Tok::Num(_)) => {
                self.bump();
                let mut ss = Vec::new();
                loop {
                    let prob = self.prob()?;
                    self.expect(Tok::Colon)?;
                    let head = if self.is_kw("tau") && !matches!(self.peek_at(1), Tok::Arrow) {
                        self.bump();
                        Head::Tau
                    } else {
                        let from = self.ident()?;
                        self.expect(Tok::Arrow)?;
                        let to = self.ident()?;
                        self.expect(Tok::Bang)?;
                        let label = self.ident()?;
                        let payload = self.base()?;
                        Head::Out(Msg { from, to, label, payload })
                    };
                    let cont = self.cont_ty(scope)?;
                    ss.push(Summand { prob, head, cont });
                    if !self.eat(&Tok::OPlus) {
                        break;
                    }
                }
                self.expect(Tok::RParen)?;
                out.push(Branch::Sum(ss));
                Ok(())
            }
            Tok::LParen => {
                let pos = self.pos();
                self.bump();
                let inner = self.ty(scope)?;
                self.expect(Tok::RParen)?;
                match &*inner {
                    SessionType::Mixed(bs) => {
                        out.extend(bs.iter().cloned());
                        Ok(())
                    }
                    _ => Err(ParseError::new(ParseErrorKind::Syntax, pos, "only choices can be combined with `+`")),
                }
            }
            t => self.err(format!("expected a type, found {t}")),
        }
    }

    // ----- channels, values

    fn chan(&mut self) -> PResult<Channel> {
        let session = self.plain_ident()?;
        self.expect(Tok::LBrack)?;
        let mut roles = BTreeSet::new();
        if self.eat(&Tok::LBrace) {
            loop {
                roles.insert(self.ident()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(Tok::RBrace)?;
        } else {
            roles.insert(self.ident()?);
        }
        self.expect(Tok::RBrack)?;
        Ok(Channel { session, roles })
    }

    fn value(&mut self) -> PResult<Value> {
        let pos = self.pos();
        match self.bump() {
            Tok::Ident(s) if s == "true" => Ok(Value::Bool(true)),
            Tok::Ident(s) if s == "false" => Ok(Value::Bool(false)),
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => Ok(Value::Var(s)),
            Tok::Num(s) => match s.parse::<u64>() {
                Ok(n) if n >= 1 => Ok(Value::Nat(n)),
                _ => Err(ParseError::new(
                    ParseErrorKind::Invalid,
                    pos,
                    format!("natural literal `{s}` must be a whole number >= 1"),
                )),
            },
            t => Err(ParseError::new(ParseErrorKind::Syntax, pos, format!("expected a value, found {t}"))),
        }
    }

    // ----- processes

    fn proc(&mut self) -> PResult<Process> {
        let mut parts = vec![self.unary()?];
        while self.eat(&Tok::Bar) {
            parts.push(self.unary()?);
        }
        Ok(Process::par_all(parts))
    }

    fn cont_proc(&mut self) -> PResult<Process> {
        if self.eat(&Tok::Dot) {
            self.proc()
        } else {
            Ok(Process::Inact)
        }
    }

    fn unary(&mut self) -> PResult<Process> {
        match self.peek().clone() {
            Tok::Num(s) if s == "0" => {
                self.bump();
                Ok(Process::Inact)
            }
            Tok::LParen => {
                self.bump();
                let p = self.proc()?;
                self.expect(Tok::RParen)?;
                Ok(p)
            }
            Tok::Ident(kw) if kw == "new" => {
                self.bump();
                let s = self.plain_ident()?;
                self.expect(Tok::Dot)?;
                Ok(Process::res(s, self.unary()?))
            }
            Tok::Ident(kw) if kw == "if" => {
                self.bump();
                let v = self.value()?;
                self.expect_kw("then")?;
                let a = self.unary()?;
                self.expect_kw("else")?;
                let b = self.unary()?;
                Ok(Process::Cond(v, Box::new(a), Box::new(b)))
            }
            Tok::Ident(kw) if kw == "def" => {
                self.bump();
                let mut decls = vec![self.decl()?];
                while self.is_kw("and") {
                    self.bump();
                    decls.push(self.decl()?);
                }
                self.expect_kw("in")?;
                Ok(Process::Def(decls, Box::new(self.unary()?)))
            }
            Tok::Ident(_) => match self.peek_at(1) {
                Tok::LBrack => {
                    let chan = self.chan()?;
                    self.expect(Tok::LBrace)?;
                    let mut summands = Vec::new();
                    loop {
                        summands.push(self.psum()?);
                        if !self.eat(&Tok::Plus) {
                            break;
                        }
                    }
                    self.expect(Tok::RBrace)?;
                    Ok(Process::Choice { chan, summands })
                }
                Tok::LParen => {
                    let name = self.plain_ident()?;
                    self.expect(Tok::LParen)?;
                    let mut args = Vec::new();
                    if !matches!(self.peek(), Tok::Semi | Tok::RParen) {
                        loop {
                            args.push(self.value()?);
                            if !self.eat(&Tok::Comma) {
                                break;
                            }
                        }
                    }
                    let mut chans = Vec::new();
                    if self.eat(&Tok::Semi) && *self.peek() != Tok::RParen {
                        loop {
                            chans.push(self.chan()?);
                            if !self.eat(&Tok::Comma) {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen)?;
                    Ok(Process::Call { name, args, chans })
                }
                _ => {
                    let pos = self.pos();
                    let name = self.plain_ident()?;
                    self.proc_refs.entry(name.clone()).or_insert(pos);
                    Ok(Process::Call {
                        name: format!("{PROC_REF}{name}"),
                        args: vec![],
                        chans: vec![],
                    })
                }
            },
            t => self.err(format!("expected a process, found {t}")),
        }
    }

    fn decl(&mut self) -> PResult<Decl> {
        let name = self.plain_ident()?;
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek_at(1), Tok::Colon) {
            loop {
                let x = self.plain_ident()?;
                self.expect(Tok::Colon)?;
                let pos = self.pos();
                let u = match self.bump() {
                    Tok::Ident(s) if s == "nat" => BaseType::Nat,
                    Tok::Ident(s) if s == "bool" => BaseType::Bool,
                    t => {
                        return Err(ParseError::new(
                            ParseErrorKind::Syntax,
                            pos,
                            format!("expected `nat` or `bool`, found {t}"),
                        ))
                    }
                };
                params.push((x, u));
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        let mut chans = Vec::new();
        if self.eat(&Tok::Semi) && *self.peek() != Tok::RParen {
            loop {
                let c = self.chan()?;
                self.expect(Tok::Colon)?;
                let t = self.ty(&mut Vec::new())?;
                chans.push((c, t));
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        self.expect(Tok::Eq)?;
        let body = self.proc()?;
        Ok(Decl { name, params, chans, body })
    }

    fn psum(&mut self) -> PResult<PSummand> {
        match self.peek().clone() {
            Tok::Ident(_) if matches!(self.peek_at(1), Tok::LArrow) => {
                let to = self.ident()?;
                self.expect(Tok::LArrow)?;
                let from = self.ident()?;
                self.expect(Tok::Quest)?;
                let label = self.ident()?;
                self.expect(Tok::LParen)?;
                let binder = if *self.peek() == Tok::RParen {
                    None
                } else {
                    Some(self.plain_ident()?)
                };
                self.expect(Tok::RParen)?;
                let cont = self.cont_proc()?;
                Ok(PSummand::Input {
                    to,
                    from,
                    label,
                    binder,
                    cont: Box::new(cont),
                })
            }
            Tok::LParen => {
                self.bump();
                let mut outs = Vec::new();
                loop {
                    let prob = if matches!(self.peek(), Tok::Num(_)) {
                        let p = self.prob()?;
                        self.expect(Tok::Colon)?;
                        p
                    } else {
                        Rational::one()
                    };
                    let action = if self.is_kw("tau") && !matches!(self.peek_at(1), Tok::Arrow) {
                        self.bump();
                        PAction::Tau
                    } else {
                        let from = self.ident()?;
                        self.expect(Tok::Arrow)?;
                        let to = self.ident()?;
                        self.expect(Tok::Bang)?;
                        let label = self.ident()?;
                        self.expect(Tok::LParen)?;
                        let payload = if *self.peek() == Tok::RParen {
                            None
                        } else {
                            Some(self.value()?)
                        };
                        self.expect(Tok::RParen)?;
                        PAction::Send { from, to, label, payload }
                    };
                    let cont = self.cont_proc()?;
                    outs.push(POut { prob, action, cont });
                    if !self.eat(&Tok::OPlus) {
                        break;
                    }
                }
                self.expect(Tok::RParen)?;
                Ok(PSummand::Out(outs))
            }
            t => self.err(format!("expected an input or a probabilistic sum, found {t}")),
        }
    }

    // ----- contexts

    fn context_body(&mut self) -> PResult<Vec<(Channel, Ty, Pos)>> {
        self.expect(Tok::LBrace)?;
        let mut out = Vec::new();
        while *self.peek() != Tok::RBrace {
            let pos = self.pos();
            let c = self.chan()?;
            self.expect(Tok::Colon)?;
            let t = self.ty(&mut Vec::new())?;
            out.push((c, t, pos));
            if !self.eat(&Tok::Comma) {
                self.eat(&Tok::Semi);
            }
        }
        self.expect(Tok::RBrace)?;
        Ok(out)
    }
}

const KEYWORDS: &[&str] = &[
    "end", "rec", "tau", "new", "if", "then", "else", "def", "in", "and", "type", "context", "process",
    "true", "false", "nat", "bool",
];

// ---------------------------------------------------------------- resolution

fn resolve_type(t: &Ty, aliases: &BTreeMap<Name, Ty>, refs: &BTreeMap<Name, Pos>) -> PResult<Ty> {
    let mut out = t.clone();
    for v in free_vars(t) {
        match aliases.get(&v) {
            Some(a) => out = subst(&out, &v, a),
            None => {
                let pos = refs.get(&v).copied().unwrap_or_default();
                return Err(ParseError::new(ParseErrorKind::Unbound, pos, format!("unbound type name `{v}`")));
            }
        }
    }
    Ok(out)
}

fn validate_type(t: &Ty, pos: Pos) -> PResult<()> {
    check_guarded(t).map_err(|e| ParseError::new(ParseErrorKind::Invalid, pos, e.to_string()))
}

fn map_proc_types(p: &Process, f: &mut dyn FnMut(&Ty) -> PResult<Ty>) -> PResult<Process> {
    Ok(match p {
        Process::Inact | Process::Call { .. } => p.clone(),
        Process::Par(a, b) => Process::par(map_proc_types(a, f)?, map_proc_types(b, f)?),
        Process::Res(s, b) => Process::res(s.clone(), map_proc_types(b, f)?),
        Process::Cond(v, a, b) => Process::Cond(v.clone(), Box::new(map_proc_types(a, f)?), Box::new(map_proc_types(b, f)?)),
        Process::Def(ds, b) => {
            let mut nd = Vec::new();
            for d in ds {
                let mut chans = Vec::new();
                for (c, t) in &d.chans {
                    chans.push((c.clone(), f(t)?));
                }
                nd.push(Decl {
                    name: d.name.clone(),
                    params: d.params.clone(),
                    chans,
                    body: map_proc_types(&d.body, f)?,
                });
            }
            Process::Def(nd, Box::new(map_proc_types(b, f)?))
        }
        Process::Choice { chan, summands } => {
            let mut ns = Vec::new();
            for s in summands {
                ns.push(match s {
                    PSummand::Input { to, from, label, binder, cont } => PSummand::Input {
                        to: to.clone(),
                        from: from.clone(),
                        label: label.clone(),
                        binder: binder.clone(),
                        cont: Box::new(map_proc_types(cont, f)?),
                    },
                    PSummand::Out(os) => {
                        let mut v = Vec::new();
                        for o in os {
                            v.push(POut {
                                prob: o.prob.clone(),
                                action: o.action.clone(),
                                cont: map_proc_types(&o.cont, f)?,
                            });
                        }
                        PSummand::Out(v)
                    }
                });
            }
            Process::Choice { chan: chan.clone(), summands: ns }
        }
    })
}

fn proc_refs_of(p: &Process, out: &mut BTreeSet<Name>) {
    match p {
        Process::Inact => {}
        Process::Call { name, .. } => {
            if let Some(n) = name.strip_prefix(PROC_REF) {
                out.insert(n.to_string());
            }
        }
        Process::Par(a, b) | Process::Cond(_, a, b) => {
            proc_refs_of(a, out);
            proc_refs_of(b, out);
        }
        Process::Res(_, b) => proc_refs_of(b, out),
        Process::Def(ds, b) => {
            ds.iter().for_each(|d| proc_refs_of(&d.body, out));
            proc_refs_of(b, out);
        }
        Process::Choice { summands, .. } => {
            for s in summands {
                match s {
                    PSummand::Input { cont, .. } => proc_refs_of(cont, out),
                    PSummand::Out(os) => os.iter().for_each(|o| proc_refs_of(&o.cont, out)),
                }
            }
        }
    }
}

fn inline_procs(p: &Process, defs: &BTreeMap<Name, Process>) -> Process {
    match p {
        Process::Call { name, .. } if name.starts_with(PROC_REF) => defs[&name[PROC_REF.len()..]].clone(),
        Process::Inact | Process::Call { .. } => p.clone(),
        Process::Par(a, b) => Process::par(inline_procs(a, defs), inline_procs(b, defs)),
        Process::Res(s, b) => Process::res(s.clone(), inline_procs(b, defs)),
        Process::Cond(v, a, b) => Process::Cond(v.clone(), Box::new(inline_procs(a, defs)), Box::new(inline_procs(b, defs))),
        Process::Def(ds, b) => Process::Def(
            ds.iter()
                .map(|d| Decl {
                    body: inline_procs(&d.body, defs),
                    ..d.clone()
                })
                .collect(),
            Box::new(inline_procs(b, defs)),
        ),
        Process::Choice { chan, summands } => Process::Choice {
            chan: chan.clone(),
            summands: summands
                .iter()
                .map(|s| match s {
                    PSummand::Input { to, from, label, binder, cont } => PSummand::Input {
                        to: to.clone(),
                        from: from.clone(),
                        label: label.clone(),
                        binder: binder.clone(),
                        cont: Box::new(inline_procs(cont, defs)),
                    },
                    PSummand::Out(os) => PSummand::Out(
                        os.iter()
                            .map(|o| POut {
                                prob: o.prob.clone(),
                                action: o.action.clone(),
                                cont: inline_procs(&o.cont, defs),
                            })
                            .collect(),
                    ),
                })
                .collect(),
        },
    }
}

fn topo_order<V>(
    items: &BTreeMap<Name, (V, Pos)>,
    deps: impl Fn(&V) -> BTreeSet<Name>,
) -> PResult<Vec<Name>> {
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state: BTreeMap<&Name, u8> = BTreeMap::new();
    let mut order = Vec::new();
    fn visit<'a, V>(
        n: &'a Name,
        items: &'a BTreeMap<Name, (V, Pos)>,
        deps: &dyn Fn(&V) -> BTreeSet<Name>,
        state: &mut BTreeMap<&'a Name, u8>,
        order: &mut Vec<Name>,
    ) -> PResult<()> {
        match state.get(n) {
            Some(2) => return Ok(()),
            Some(1) => {
                return Err(ParseError::new(
                    ParseErrorKind::Invalid,
                    items[n].1,
                    format!("definition of `{n}` refers to itself"),
                ))
            }
            _ => {}
        }
        state.insert(n, 1);
        for d in deps(&items[n].0) {
            if let Some((k, _)) = items.get_key_value(&d) {
                visit(k, items, deps, state, order)?;
            }
        }
        state.insert(n, 2);
        order.push(n.clone());
        Ok(())
    }
    for n in items.keys() {
        visit(n, items, &deps, &mut state, &mut order)?;
    }
    Ok(order)
}

// ---------------------------------------------------------------- entry points

enum RawItem {
    Type(Name, Ty, Pos),
    Context(Name, Vec<(Channel, Ty, Pos)>, Pos),
    Process(Name, Process, Pos),
}

/// Parses a whole `.mcp` file.
pub fn parse_file(text: &str) -> Result<ProtocolFile, ParseError> {
    let mut p = Parser::new(text)?;
    let mut raw = Vec::new();
    while !p.at_eof() {
        let pos = p.pos();
        if p.is_kw("type") {
            p.bump();
            let n = p.plain_ident()?;
            p.expect(Tok::Eq)?;
            let t = p.ty(&mut Vec::new())?;
            raw.push(RawItem::Type(n, t, pos));
        } else if p.is_kw("context") {
            p.bump();
            let n = p.plain_ident()?;
            let body = p.context_body()?;
            raw.push(RawItem::Context(n, body, pos));
        } else if p.is_kw("process") {
            p.bump();
            let n = p.plain_ident()?;
            p.expect(Tok::Eq)?;
            let q = p.proc()?;
            raw.push(RawItem::Process(n, q, pos));
        } else {
            return p.err(format!("expected `type`, `context` or `process`, found {}", p.peek()));
        }
    }

    let mut file = ProtocolFile::default();
    let mut raw_types: BTreeMap<Name, (Ty, Pos)> = BTreeMap::new();
    let mut raw_ctx: Vec<(Name, Vec<(Channel, Ty, Pos)>, Pos)> = Vec::new();
    let mut raw_procs: BTreeMap<Name, (Process, Pos)> = BTreeMap::new();
    for item in raw {
        let (kind, name, pos) = match &item {
            RawItem::Type(n, _, pos) => (ItemKind::Type, n.clone(), *pos),
            RawItem::Context(n, _, pos) => (ItemKind::Context, n.clone(), *pos),
            RawItem::Process(n, _, pos) => (ItemKind::Process, n.clone(), *pos),
        };
        if file.spans.contains_key(&(kind, name.clone())) {
            return Err(ParseError::new(ParseErrorKind::Duplicate, pos, format!("duplicate definition of `{name}`")));
        }
        file.spans.insert((kind, name), pos);
        match item {
            RawItem::Type(n, t, pos) => {
                raw_types.insert(n, (t, pos));
            }
            RawItem::Context(n, b, pos) => raw_ctx.push((n, b, pos)),
            RawItem::Process(n, q, pos) => {
                raw_procs.insert(n, (q, pos));
            }
        }
    }

    for n in topo_order(&raw_types, |t| free_vars(t))? {
        let (t, pos) = &raw_types[&n];
        let r = resolve_type(t, &file.types, &p.type_refs)?;
        validate_type(&r, *pos)?;
        file.types.insert(n, r);
    }
    for (n, bindings, _) in raw_ctx {
        let mut d = LocalContext::new();
        for (c, t, pos) in bindings {
            let r = resolve_type(&t, &file.types, &p.type_refs)?;
            validate_type(&r, pos)?;
            if is_end(&r) {
                continue;
            }
            d.add(c, r).map_err(|e| ParseError::new(ParseErrorKind::Invalid, pos, e.to_string()))?;
        }
        file.contexts.insert(n, d);
    }
    for (n, pos) in &p.proc_refs {
        if !raw_procs.contains_key(n) {
            return Err(ParseError::new(ParseErrorKind::Unbound, *pos, format!("unbound process name `{n}`")));
        }
    }
    for n in topo_order(&raw_procs, |q| {
        let mut s = BTreeSet::new();
        proc_refs_of(q, &mut s);
        s
    })? {
        let (q, pos) = &raw_procs[&n];
        let inlined = inline_procs(q, &file.processes);
        let resolved = map_proc_types(&inlined, &mut |t| {
            let r = resolve_type(t, &file.types, &p.type_refs)?;
            validate_type(&r, *pos)?;
            Ok(r)
        })?;
        file.processes.insert(n, resolved);
    }
    Ok(file)
}

fn finish<T>(p: &Parser, v: T) -> PResult<T> {
    if !p.at_eof() {
        return p.err(format!("unexpected {} after end of term", p.peek()));
    }
    Ok(v)
}

/// Parses a single closed type.
pub fn parse_type(text: &str) -> Result<Ty, ParseError> {
    let mut p = Parser::new(text)?;
    let t = p.ty(&mut Vec::new())?;
    finish(&p, ())?;
    let r = resolve_type(&t, &BTreeMap::new(), &p.type_refs)?;
    validate_type(&r, Pos { line: 1, col: 1 })?;
    Ok(r)
}

/// Parses a single process without named references.
pub fn parse_process(text: &str) -> Result<Process, ParseError> {
    let mut p = Parser::new(text)?;
    let q = p.proc()?;
    finish(&p, ())?;
    if let Some((n, pos)) = p.proc_refs.iter().next() {
        return Err(ParseError::new(ParseErrorKind::Unbound, *pos, format!("unbound process name `{n}`")));
    }
    map_proc_types(&q, &mut |t| {
        let r = resolve_type(t, &BTreeMap::new(), &p.type_refs)?;
        validate_type(&r, Pos { line: 1, col: 1 })?;
        Ok(r)
    })
}

/// Parses a context literal `{ s[p] : T, ... }`.
pub fn parse_context(text: &str) -> Result<LocalContext, ParseError> {
    let mut p = Parser::new(text)?;
    let body = p.context_body()?;
    finish(&p, ())?;
    let mut d = LocalContext::new();
    for (c, t, pos) in body {
        let r = resolve_type(&t, &BTreeMap::new(), &p.type_refs)?;
        validate_type(&r, pos)?;
        if is_end(&r) {
            continue;
        }
        d.add(c, r).map_err(|e| ParseError::new(ParseErrorKind::Invalid, pos, e.to_string()))?;
    }
    Ok(d)
}

// ---------------------------------------------------------------- printer

fn base_str(b: &Option<BaseType>) -> &'static str {
    match b {
        None => "",
        Some(BaseType::Nat) => "nat",
        Some(BaseType::Bool) => "bool",
    }
}

pub fn print_channel(c: &Channel) -> String {
    if c.roles.len() == 1 {
        format!("{}[{}]", c.session, c.roles.iter().next().unwrap())
    } else {
        let rs: Vec<&str> = c.roles.iter().map(String::as_str).collect();
        format!("{}[{{{}}}]", c.session, rs.join(","))
    }
}

pub fn print_msg_out(m: &Msg) -> String {
    format!("{}->{}!{}({})", m.from, m.to, m.label, base_str(&m.payload))
}

pub fn print_msg_in(m: &Msg) -> String {
    format!("{}<-{}?{}({})", m.to, m.from, m.label, base_str(&m.payload))
}

pub fn print_head(h: &Head) -> String {
    match h {
        Head::Tau => "tau".to_string(),
        Head::Out(m) => print_msg_out(m),
    }
}

pub fn print_summand(s: &Summand) -> String {
    format!("{}: {}.{}", s.prob.to_surface(), print_head(&s.head), print_type(&s.cont))
}

pub fn print_branch(b: &Branch) -> String {
    print_branch_at(b, true)
}

fn print_branch_at(b: &Branch, last: bool) -> String {
    match b {
        Branch::Input(m, c) => {
            let needs_group = match &**c {
                SessionType::Mixed(bs) => bs.len() > 1 || !last,
                SessionType::Rec(..) => true,
                _ => false,
            };
            if needs_group {
                format!("{}.({})", print_msg_in(m), print_type(c))
            } else {
                format!("{}.{}", print_msg_in(m), print_type(c))
            }
        }
        Branch::Sum(ss) => {
            let parts: Vec<String> = ss.iter().map(print_summand).collect();
            format!("({})", parts.join(" (+) "))
        }
    }
}

/// Surface text of a type; probabilities are always explicit.
pub fn print_type(t: &SessionType) -> String {
    match t {
        SessionType::End => "end".to_string(),
        SessionType::Var(x) => x.clone(),
        SessionType::Rec(x, b) => format!("rec {x}. {}", print_type(b)),
        SessionType::Mixed(bs) if bs.is_empty() => "end".to_string(),
        SessionType::Mixed(bs) => bs
            .iter()
            .enumerate()
            .map(|(i, b)| print_branch_at(b, i + 1 == bs.len()))
            .collect::<Vec<_>>()
            .join(" + "),
    }
}

pub fn print_context(d: &LocalContext) -> String {
    if d.is_empty() {
        return "{ }".to_string();
    }
    let parts: Vec<String> = d
        .iter()
        .map(|(c, t)| format!("{} : {}", print_channel(c), print_type(t)))
        .collect();
    format!("{{ {} }}", parts.join(", "))
}

pub fn print_value(v: &Value) -> String {
    match v {
        Value::Var(x) => x.clone(),
        Value::Nat(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
    }
}

fn print_unary(p: &Process) -> String {
    match p {
        Process::Par(..) => format!("({})", print_process(p)),
        _ => print_process(p),
    }
}

fn print_decl(d: &Decl) -> String {
    let ps: Vec<String> = d
        .params
        .iter()
        .map(|(x, u)| format!("{x}: {}", base_str(&Some(*u))))
        .collect();
    let cs: Vec<String> = d
        .chans
        .iter()
        .map(|(c, t)| format!("{}: {}", print_channel(c), print_type(t)))
        .collect();
    let body = match &d.body {
        Process::Def(..) => format!("({})", print_process(&d.body)),
        b => print_process(b),
    };
    format!("{}({}; {}) = {}", d.name, ps.join(", "), cs.join(", "), body)
}

/// Surface text of a process; probability 1 is omitted.
pub fn print_process(p: &Process) -> String {
    match p {
        Process::Inact => "0".to_string(),
        Process::Par(..) => p
            .components()
            .into_iter()
            .map(print_unary)
            .collect::<Vec<_>>()
            .join(" | "),
        Process::Res(s, b) => format!("new {s}. {}", print_unary(b)),
        Process::Cond(v, a, b) => format!("if {} then {} else {}", print_value(v), print_unary(a), print_unary(b)),
        Process::Def(ds, b) => format!(
            "def {} in {}",
            ds.iter().map(print_decl).collect::<Vec<_>>().join(" and "),
            print_unary(b)
        ),
        Process::Call { name, args, chans } => format!(
            "{}({}; {})",
            name,
            args.iter().map(print_value).collect::<Vec<_>>().join(", "),
            chans.iter().map(print_channel).collect::<Vec<_>>().join(", ")
        ),
        Process::Choice { chan, summands } => {
            let parts: Vec<String> = summands.iter().map(print_psummand).collect();
            format!("{}{{{}}}", print_channel(chan), parts.join(" + "))
        }
    }
}

fn print_psummand(s: &PSummand) -> String {
    match s {
        PSummand::Input { to, from, label, binder, cont } => format!(
            "{to}<-{from}?{label}({}).{}",
            binder.as_deref().unwrap_or(""),
            print_process(cont)
        ),
        PSummand::Out(os) => {
            let parts: Vec<String> = os
                .iter()
                .map(|o| {
                    let act = match &o.action {
                        PAction::Tau => "tau".to_string(),
                        PAction::Send { from, to, label, payload } => format!(
                            "{from}->{to}!{label}({})",
                            payload.as_ref().map(print_value).unwrap_or_default()
                        ),
                    };
                    let prob = if o.prob.is_one() {
                        String::new()
                    } else {
                        format!("{}: ", o.prob.to_surface())
                    };
                    format!("{prob}{act}.{}", print_process(&o.cont))
                })
                .collect();
            format!("({})", parts.join(" (+) "))
        }
    }
}

/// Prints every item of a file; aliases are already inlined.
pub fn print_file(f: &ProtocolFile) -> String {
    let mut out = String::new();
    for (n, t) in &f.types {
        out.push_str(&format!("type {n} = {}\n", print_type(t)));
    }
    for (n, d) in &f.contexts {
        out.push_str(&format!("context {n} {}\n", print_context(d)));
    }
    for (n, p) in &f.processes {
        out.push_str(&format!("process {n} = {}\n", print_process(p)));
    }
    out
}

impl fmt::Display for SessionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_type(self))
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_channel(self))
    }
}

impl fmt::Display for LocalContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_context(self))
    }
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_process(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defendant_type() {
        let f = parse_file("type Td = (0.5: d->j!wk().end (+) 0.2: d->j!str().end (+) 0.3: d->j!wit().end)").unwrap();
        let td = &f.types["Td"];
        let SessionType::Mixed(bs) = &**td else { panic!() };
        let Branch::Sum(ss) = &bs[0] else { panic!() };
        let probs: Vec<Rational> = ss.iter().map(|s| s.prob.clone()).collect();
        assert_eq!(probs, vec![Rational::new(1, 2), Rational::new(1, 5), Rational::new(3, 10)]);
    }

    #[test]
    fn end_and_context() {
        let f = parse_file("type T = end\ntype Tc = j<-p?lws()\ncontext D { s[{j,d}] : Tc }").unwrap();
        assert_eq!(*f.types["T"], SessionType::End);
        let d = &f.contexts["D"];
        assert_eq!(d.len(), 1);
        let c = d.channels().next().unwrap();
        assert_eq!(c.roles.len(), 2);
    }

    #[test]
    fn printer_shapes() {
        assert_eq!(print_type(&SessionType::End), "end");
        let t = parse_type("rec t. p<-q?l().t").unwrap();
        assert_eq!(print_type(&t), "rec t. p<-q?l().t");
    }

    #[test]
    fn optional_trailing_end() {
        assert_eq!(parse_type("p<-q?l()").unwrap(), parse_type("p<-q?l().end").unwrap());
        assert_eq!(
            parse_process("s[p]{(p->q!l())}").unwrap(),
            parse_process("s[p]{(1: p->q!l().0)}").unwrap()
        );
    }

    #[test]
    fn nested_choices_round_trip() {
        let t = parse_type("(a<-b?x().(a<-c?y().end + a<-c?z().end)) + a<-d?w().end").unwrap();
        assert_eq!(t.branches().len(), 2);
        let greedy = parse_type("a<-b?x().a<-c?y().end + a<-c?z().end").unwrap();
        assert_eq!(greedy.branches().len(), 1);
        assert_eq!(parse_type(&print_type(&t)).unwrap(), t);
    }

    #[test]
    fn process_round_trip() {
        let src = "new s. (s[p]{(p->j!lws().s[p]{p<-j?glt(x).if x then 0 else 0})} | s[{j,d}]{j<-p?lws().s[{j,d}]{(0.5: j->p!glt(true).0 (+) 0.5: tau.0)}})";
        let p = parse_process(src).unwrap();
        assert_eq!(parse_process(&print_process(&p)).unwrap(), p);
        let d = "def X(n: nat; s[a]: rec t. (1: a->b!l(nat).t)) = s[a]{(a->b!l(n).X(n; s[a]))} in X(3; s[a])";
        let q = parse_process(d).unwrap();
        assert_eq!(parse_process(&print_process(&q)).unwrap(), q);
    }

    #[test]
    fn errors_are_positioned() {
        let e = parse_type("p<-q?l(.end").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Syntax);
        assert_eq!(e.pos, Pos { line: 1, col: 8 });
        let e = parse_file("type A = end\n\ntype A = end").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Duplicate);
        assert_eq!(e.pos.line, 3);
        let e = parse_file("type A = B").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Unbound);
        let e = parse_type("rec t. t").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Invalid);
        let e = parse_type("(1.5: a->b!l())").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Invalid);
    }

    #[test]
    fn aliases_and_process_refs() {
        let src = "
            # comment
            process Q = s[b]{b<-a?l()}
            type Ta = (1: a->b!l())
            type Tb = b<-a?l()
            context D { s[a] : Ta, s[b] : Tb }
            process P = new s. (s[a]{(a->b!l())} | Q)
        ";
        let f = parse_file(src).unwrap();
        assert_eq!(f.contexts["D"].len(), 2);
        assert!(matches!(f.processes["P"], Process::Res(..)));
        let text = print_process(&f.processes["P"]);
        assert!(text.contains("b<-a?l()"));
    }

    #[test]
    fn keyword_labels() {
        let t = parse_type("b<-a?nat(nat).b<-c?bool(bool) + b<-c?new(nat)").unwrap();
        assert_eq!(parse_type(&print_type(&t)).unwrap(), t);
    }
}
