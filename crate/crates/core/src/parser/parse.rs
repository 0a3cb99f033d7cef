use crate::ast::*;

use super::lexer::{Tok, Token};
use super::{ParseDiagnostic, KEYWORDS};

type PResult<T> = Result<T, ParseDiagnostic>;

pub struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

const BINOPS: &[(&str, BinOp)] = &[
    ("\\/", BinOp::Union),
    ("\\", BinOp::Minus),
    ("/\\", BinOp::Inter),
    ("**", BinOp::Product),
    ("<-|", BinOp::DomSub),
    ("<|", BinOp::DomRes),
    ("<+", BinOp::Override),
    (";", BinOp::Compose),
];

impl Parser {
    pub fn new(toks: Vec<Token>) -> Self {
        Parser { toks, pos: 0 }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span.clone()
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(ParseDiagnostic::error(self.span(), msg))
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Word(w) => format!("'{w}'"),
            Tok::Label(l) => format!("label '@{l}'"),
            Tok::Sym(s) => format!("'{s}'"),
            Tok::Eof => "end of input".to_string(),
        }
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Word(w) if w == kw)
    }

    fn at_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.at_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.err(format!("expected '{kw}', found {}", self.describe()))
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected '{s}', found {}", self.describe()))
        }
    }

    pub fn expect_eof(&mut self) -> PResult<()> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            self.err(format!("unexpected {}", self.describe()))
        }
    }

    fn is_keyword_here(&self) -> bool {
        matches!(self.peek(), Tok::Word(w) if KEYWORDS.contains(&w.as_str()))
    }

    fn ident(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Word(w) => {
                if KEYWORDS.contains(&w.as_str()) {
                    return self.err(format!("'{w}' is a reserved keyword"));
                }
                if w.contains('-') {
                    return self.err(format!("'{w}' is not a valid identifier"));
                }
                let span = self.bump().span;
                Ok((w, span))
            }
            _ => self.err(format!("expected identifier, found {}", self.describe())),
        }
    }

    fn ident_list(&mut self) -> PResult<Vec<String>> {
        let mut out = vec![self.ident()?.0];
        while self.eat_sym(",") {
            out.push(self.ident()?.0);
        }
        Ok(out)
    }

    fn label(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Label(l) => Ok((l, self.bump().span)),
            _ => self.err(format!("expected label '@name', found {}", self.describe())),
        }
    }

    pub fn chain(&mut self) -> PResult<RefinementChain> {
        let mut chain = RefinementChain::default();
        if *self.peek() == Tok::Eof {
            return self.err("expected 'context' or 'machine'");
        }
        loop {
            if self.at_kw("context") {
                chain.contexts.push(self.context()?);
            } else if self.at_kw("machine") {
                chain.machines.push(self.machine()?);
            } else if *self.peek() == Tok::Eof {
                return Ok(chain);
            } else if matches!(self.peek(), Tok::Word(_)) {
                return self.err(format!(
                    "unknown keyword {}: expected 'context' or 'machine'",
                    self.describe()
                ));
            } else {
                return self.err(format!(
                    "expected 'context' or 'machine', found {}",
                    self.describe()
                ));
            }
        }
    }

    fn context(&mut self) -> PResult<Context> {
        let span = self.span();
        self.expect_kw("context")?;
        let name = self.ident()?.0;
        let extends = if self.eat_kw("extends") {
            Some(self.ident()?.0)
        } else {
            None
        };
        let mut ctx = Context {
            name,
            extends,
            carrier_sets: Vec::new(),
            constants: Vec::new(),
            axioms: Vec::new(),
            span,
        };
        let mut seen: Vec<&str> = Vec::new();
        loop {
            let section_span = self.span();
            if self.eat_kw("end") {
                return Ok(ctx);
            }
            let section = match self.peek() {
                Tok::Word(w) if ["sets", "constants", "axioms"].contains(&w.as_str()) => {
                    w.clone()
                }
                Tok::Word(_) if !self.is_keyword_here() => {
                    return self.err(format!(
                        "unknown keyword {} in context: expected 'sets', 'constants', 'axioms' or 'end'",
                        self.describe()
                    ))
                }
                _ => {
                    return self.err(format!(
                        "expected 'sets', 'constants', 'axioms' or 'end', found {}",
                        self.describe()
                    ))
                }
            };
            let key: &'static str = match section.as_str() {
                "sets" => "sets",
                "constants" => "constants",
                _ => "axioms",
            };
            if seen.contains(&key) {
                return Err(ParseDiagnostic::error(
                    section_span,
                    format!("duplicate section '{key}'"),
                ));
            }
            seen.push(key);
            self.bump();
            match key {
                "sets" => ctx.carrier_sets = self.ident_list()?,
                "constants" => {
                    while matches!(self.peek(), Tok::Word(_)) && !self.is_keyword_here() {
                        let (name, span) = self.ident()?;
                        let def = if self.eat_sym(":") {
                            ConstantDef::Atom(self.ident()?.0)
                        } else if self.eat_sym("=") {
                            ConstantDef::Set(self.expr()?)
                        } else {
                            return self.err(format!(
                                "expected ':' or '=' after constant, found {}",
                                self.describe()
                            ));
                        };
                        ctx.constants.push(Constant { name, def, span });
                        self.eat_sym(",");
                    }
                }
                _ => {
                    while matches!(self.peek(), Tok::Label(_)) {
                        ctx.axioms.push(self.labeled()?);
                    }
                }
            }
        }
    }

    fn labeled(&mut self) -> PResult<Labeled> {
        let (label, span) = self.label()?;
        let pred = self.predicate()?;
        Ok(Labeled { label, pred, span })
    }

    fn machine(&mut self) -> PResult<Machine> {
        let span = self.span();
        self.expect_kw("machine")?;
        let name = self.ident()?.0;
        let refines = if self.eat_kw("refines") {
            Some(self.ident()?.0)
        } else {
            None
        };
        let sees = if self.eat_kw("sees") {
            self.ident_list()?
        } else {
            Vec::new()
        };
        let mut m = Machine {
            name,
            refines,
            sees,
            layer: None,
            removes: Vec::new(),
            variables: Vec::new(),
            invariants: Vec::new(),
            events: Vec::new(),
            span,
        };
        loop {
            let item_span = self.span();
            let word = match self.peek() {
                Tok::Word(w) => w.clone(),
                _ => {
                    return self.err(format!(
                        "expected a machine item or 'end', found {}",
                        self.describe()
                    ))
                }
            };
            match word.as_str() {
                "end" => {
                    self.bump();
                    return Ok(m);
                }
                "layer" => {
                    if m.layer.is_some() {
                        return Err(ParseDiagnostic::error(item_span, "duplicate section 'layer'"));
                    }
                    self.bump();
                    let lspan = self.span();
                    match self.peek().clone() {
                        Tok::Word(w) => match LayerLabel::parse(&w) {
                            Some(l) => {
                                self.bump();
                                m.layer = Some(l);
                            }
                            None => {
                                return Err(ParseDiagnostic::error(
                                    lspan,
                                    format!("unknown layer label '{w}'"),
                                ))
                            }
                        },
                        _ => return self.err("expected a layer label"),
                    }
                }
                "removes" => {
                    if !m.removes.is_empty() {
                        return Err(ParseDiagnostic::error(
                            item_span,
                            "duplicate section 'removes'",
                        ));
                    }
                    self.bump();
                    m.removes = self.ident_list()?;
                }
                "class" => {
                    self.bump();
                    let (name, span) = self.ident()?;
                    self.expect_sym(":")?;
                    let parent = self.ident()?.0;
                    self.expect_kw("kind")?;
                    let kind = match self.peek() {
                        Tok::Word(w) => match w.as_str() {
                            "primary" => ClassKind::Primary,
                            "secondary" => ClassKind::Secondary,
                            "attribute" => ClassKind::Attribute,
                            "historical" => ClassKind::Historical,
                            _ => return self.err(format!("unknown class kind {}", self.describe())),
                        },
                        _ => return self.err("expected a class kind"),
                    };
                    self.bump();
                    m.variables.push(VariableDecl {
                        name,
                        role: VarRole::ClassInstanceSet,
                        typing: VarTyping::Class { parent, kind },
                        span,
                    });
                }
                "attribute" | "association" => {
                    self.bump();
                    let role = if word == "attribute" {
                        VarRole::Attribute
                    } else {
                        VarRole::Association
                    };
                    let (name, span) = self.ident()?;
                    self.expect_sym(":")?;
                    let source = self.ident()?.0;
                    let mut kind = self.arrow()?;
                    let target = self.ident()?.0;
                    if self.at_kw("injective") {
                        if !kind.is_function() {
                            return self.err("'injective' requires a function arrow ('-->' or '+->')");
                        }
                        self.bump();
                        kind.injective = true;
                    }
                    m.variables.push(VariableDecl {
                        name,
                        role,
                        typing: VarTyping::Relation {
                            source,
                            target,
                            kind,
                        },
                        span,
                    });
                }
                "invariant" => {
                    self.bump();
                    m.invariants.push(self.labeled()?);
                }
                "event" => m.events.push(self.event()?),
                _ if KEYWORDS.contains(&word.as_str()) => {
                    return self.err(format!("'{word}' is not allowed here"));
                }
                _ => return self.err(format!("unknown keyword '{word}'")),
            }
        }
    }

    fn arrow(&mut self) -> PResult<RelationKind> {
        let k = match self.peek() {
            Tok::Sym("-->") => RelationKind::TOTAL,
            Tok::Sym("+->") => RelationKind::PARTIAL,
            Tok::Sym("<->") => RelationKind::RELATION,
            _ => {
                return self.err(format!(
                    "expected '-->', '+->' or '<->', found {}",
                    self.describe()
                ))
            }
        };
        self.bump();
        Ok(k)
    }

    fn at_arrow(&self) -> bool {
        self.at_sym("-->") || self.at_sym("+->") || self.at_sym("<->")
    }

    fn event(&mut self) -> PResult<Event> {
        let span = self.span();
        self.expect_kw("event")?;
        let name = self.ident()?.0;
        let kind = match self.peek() {
            Tok::Word(w) if w == "constructor" => EventKind::Constructor,
            Tok::Word(w) if w == "destructor" => EventKind::Destructor,
            Tok::Word(w) if w == "normal" => EventKind::Normal,
            Tok::Word(w) if w == "query" => EventKind::Query,
            _ => EventKind::Normal,
        };
        if matches!(self.peek(), Tok::Word(w) if ["constructor", "destructor", "normal", "query"].contains(&w.as_str()))
        {
            self.bump();
        }
        let class_owner = if self.eat_kw("of") {
            Some(self.ident()?.0)
        } else {
            None
        };
        let link = if self.eat_kw("extends") {
            Some(EventLink::Extends(self.ident()?.0))
        } else if self.eat_kw("refines") {
            Some(EventLink::Refines(self.ident()?.0))
        } else {
            None
        };
        let mut ev = Event {
            name,
            kind,
            class_owner,
            link,
            parameters: Vec::new(),
            guards: Vec::new(),
            actions: Vec::new(),
            span,
        };
        if self.eat_kw("any") {
            loop {
                let name = self.ident()?.0;
                self.expect_sym(":")?;
                let typing = self.expr()?;
                ev.parameters.push(Param { name, typing });
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        if self.eat_kw("where") {
            while matches!(self.peek(), Tok::Label(_)) {
                ev.guards.push(self.labeled()?);
            }
        }
        if self.eat_kw("then") {
            while matches!(self.peek(), Tok::Label(_)) {
                let (label, span) = self.label()?;
                let target = self.ident()?.0;
                self.expect_sym(":=")?;
                let expr = self.expr()?;
                ev.actions.push(Action {
                    label,
                    target,
                    expr,
                    span,
                });
            }
        }
        if !self.at_kw("end") {
            if matches!(self.peek(), Tok::Word(_)) && !self.is_keyword_here() {
                return self.err(format!("unknown keyword {} in event", self.describe()));
            }
            return self.err(format!(
                "expected 'any', 'where', 'then' or 'end', found {}",
                self.describe()
            ));
        }
        self.bump();
        Ok(ev)
    }

    pub fn predicate(&mut self) -> PResult<Expr> {
        let lhs = self.disjunction()?;
        if self.eat_sym("=>") {
            let rhs = self.predicate()?;
            return Ok(Expr::Logic(Logic::Implies, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> PResult<Expr> {
        let mut lhs = self.conjunction()?;
        while self.eat_kw("or") {
            let rhs = self.conjunction()?;
            lhs = Expr::Logic(Logic::Or, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while self.eat_sym("&") {
            let rhs = self.unary()?;
            lhs = Expr::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_kw("not") {
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        if self.at_sym("!") || self.at_sym("#") {
            let q = if self.eat_sym("!") {
                Quantifier::ForAll
            } else {
                self.bump();
                Quantifier::Exists
            };
            let mut vars = Vec::new();
            loop {
                let name = self.ident()?.0;
                self.expect_sym(":")?;
                let typing = self.expr()?;
                vars.push(Param { name, typing });
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym(".")?;
            let body = self.predicate()?;
            return Ok(Expr::Quant(q, vars, Box::new(body)));
        }
        if self.eat_kw("true") {
            return Ok(Expr::Bool(true));
        }
        if self.eat_kw("false") {
            return Ok(Expr::Bool(false));
        }
        let lhs = self.expr()?;
        let op = match self.peek() {
            Tok::Sym(":") => Some((RelOp::In, false)),
            Tok::Sym("/:") => Some((RelOp::NotIn, false)),
            Tok::Sym("<:") => Some((RelOp::Subset, false)),
            Tok::Sym("=") => Some((RelOp::Eq, false)),
            Tok::Sym("/=") => Some((RelOp::Eq, true)),
            _ => None,
        };
        let Some((op, negate)) = op else {
            return Ok(lhs);
        };
        self.bump();
        let rhs = self.expr()?;
        if op == RelOp::In && self.at_arrow() {
            let mut kind = self.arrow()?;
            let ran = self.expr()?;
            if self.at_kw("injective") {
                if !kind.is_function() {
                    return self.err("'injective' requires a function arrow ('-->' or '+->')");
                }
                self.bump();
                kind.injective = true;
            }
            return Ok(Expr::FnClass {
                func: Box::new(lhs),
                dom: Box::new(rhs),
                ran: Box::new(ran),
                kind,
            });
        }
        let e = Expr::rel(op, lhs, rhs);
        Ok(if negate { Expr::Not(Box::new(e)) } else { e })
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.binexpr()?;
        while self.eat_sym("|->") {
            let rhs = self.binexpr()?;
            lhs = Expr::maplet(lhs, rhs);
        }
        Ok(lhs)
    }

    fn binexpr(&mut self) -> PResult<Expr> {
        let mut lhs = self.postfix()?;
        loop {
            let op = match self.peek() {
                Tok::Sym(s) => BINOPS.iter().find(|(t, _)| t == s).map(|(_, op)| *op),
                _ => None,
            };
            let Some(op) = op else { return Ok(lhs) };
            self.bump();
            let rhs = self.postfix()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            if self.eat_sym("~") {
                e = Expr::Inverse(Box::new(e));
            } else if self.eat_sym("[") {
                let arg = self.expr()?;
                self.expect_sym("]")?;
                e = Expr::Image(Box::new(e), Box::new(arg));
            } else if self.eat_sym("(") {
                let arg = self.expr()?;
                self.expect_sym(")")?;
                e = Expr::Apply(Box::new(e), Box::new(arg));
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        if self.eat_sym("(") {
            let e = self.predicate()?;
            self.expect_sym(")")?;
            return Ok(e);
        }
        if self.eat_sym("{") {
            let mut items = Vec::new();
            if !self.eat_sym("}") {
                loop {
                    items.push(self.expr()?);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.expect_sym("}")?;
            }
            return Ok(Expr::Enum(items));
        }
        for (kw, ctor) in [
            ("dom", Expr::Dom as fn(Box<Expr>) -> Expr),
            ("ran", Expr::Ran),
            ("POW", Expr::Pow),
        ] {
            if self.eat_kw(kw) {
                self.expect_sym("(")?;
                let e = self.expr()?;
                self.expect_sym(")")?;
                return Ok(ctor(Box::new(e)));
            }
        }
        match self.peek() {
            Tok::Word(_) => Ok(Expr::Ident(self.ident()?.0)),
            _ => self.err(format!("expected an expression, found {}", self.describe())),
        }
    }
}
