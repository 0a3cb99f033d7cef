//! Model vocabulary shared by every stage: contexts, machines, class
//! annotations, events and the set-theoretic expression language.
//!
//! Values here are plain data. Source positions are carried in [`Span`]s,
//! which compare equal regardless of position so that two chains parsed
//! from differently formatted text are structurally equal.

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

/// Location of a syntactic item. Lines and columns are 1-based.
#[derive(Clone, Debug, Default)]
pub struct Span {
    pub file: Option<Arc<PathBuf>>,
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

impl Span {
    pub fn new(line: usize, column: usize, length: usize) -> Self {
        Span {
            file: None,
            line,
            column,
            length,
        }
    }
}

// Spans never take part in structural comparison.
impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}
impl Eq for Span {}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.file {
            Some(p) => write!(f, "{}:{}:{}", p.display(), self.line, self.column),
            None => write!(f, "{}:{}", self.line, self.column),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Context {
    pub name: String,
    pub extends: Option<String>,
    pub carrier_sets: Vec<String>,
    pub constants: Vec<Constant>,
    pub axioms: Vec<Labeled>,
    pub span: Span,
}

/// A context constant. `Atom` designates a distinguished element of a carrier
/// set; `Set` is a finite literal built from earlier constants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConstantDef {
    Atom(String),
    Set(Expr),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constant {
    pub name: String,
    pub def: ConstantDef,
    pub span: Span,
}

/// A labelled predicate: invariant, axiom or guard.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Labeled {
    pub label: String,
    pub pred: Expr,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerLabel {
    Structure,
    Attributes,
    Secondary,
    AttributeClasses,
    Historical,
    Queries,
    Other,
}

impl LayerLabel {
    pub const ALL: [LayerLabel; 7] = [
        LayerLabel::Structure,
        LayerLabel::Attributes,
        LayerLabel::Secondary,
        LayerLabel::AttributeClasses,
        LayerLabel::Historical,
        LayerLabel::Queries,
        LayerLabel::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LayerLabel::Structure => "structure",
            LayerLabel::Attributes => "attributes",
            LayerLabel::Secondary => "secondary",
            LayerLabel::AttributeClasses => "attribute-classes",
            LayerLabel::Historical => "historical",
            LayerLabel::Queries => "queries",
            LayerLabel::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.as_str() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Machine {
    pub name: String,
    pub refines: Option<String>,
    pub sees: Vec<String>,
    pub layer: Option<LayerLabel>,
    /// Abstract variables dropped by this (data) refinement.
    pub removes: Vec<String>,
    pub variables: Vec<VariableDecl>,
    pub invariants: Vec<Labeled>,
    pub events: Vec<Event>,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassKind {
    Primary,
    Secondary,
    Attribute,
    Historical,
}

impl ClassKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassKind::Primary => "primary",
            ClassKind::Secondary => "secondary",
            ClassKind::Attribute => "attribute",
            ClassKind::Historical => "historical",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FunctionKind {
    Relation,
    Total,
    Partial,
}

/// Shape of an attribute or association. `injective` is only meaningful for
/// the two function kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RelationKind {
    pub kind: FunctionKind,
    pub injective: bool,
}

impl RelationKind {
    pub const RELATION: RelationKind = RelationKind {
        kind: FunctionKind::Relation,
        injective: false,
    };
    pub const TOTAL: RelationKind = RelationKind {
        kind: FunctionKind::Total,
        injective: false,
    };
    pub const PARTIAL: RelationKind = RelationKind {
        kind: FunctionKind::Partial,
        injective: false,
    };

    pub fn is_function(self) -> bool {
        self.kind != FunctionKind::Relation
    }

    pub fn arrow(self) -> &'static str {
        match self.kind {
            FunctionKind::Relation => "<->",
            FunctionKind::Total => "-->",
            FunctionKind::Partial => "+->",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarRole {
    ClassInstanceSet,
    Attribute,
    Association,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VarTyping {
    /// `class C : PARENT kind K` where PARENT is a carrier set or a superclass.
    Class { parent: String, kind: ClassKind },
    /// `attribute f : SOURCE <arrow> TARGET [injective]`
    Relation {
        source: String,
        target: String,
        kind: RelationKind,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VariableDecl {
    pub name: String,
    pub role: VarRole,
    pub typing: VarTyping,
    pub span: Span,
}

impl VariableDecl {
    pub fn class_kind(&self) -> Option<ClassKind> {
        match &self.typing {
            VarTyping::Class { kind, .. } => Some(*kind),
            _ => None,
        }
    }

    pub fn relation(&self) -> Option<(&str, &str, RelationKind)> {
        match &self.typing {
            VarTyping::Relation {
                source,
                target,
                kind,
            } => Some((source, target, *kind)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassAnnotation {
    pub class_name: String,
    pub kind: ClassKind,
    /// Superclass when the class is declared inside another class.
    pub supertype: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    Constructor,
    Destructor,
    Normal,
    Query,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Constructor => "constructor",
            EventKind::Destructor => "destructor",
            EventKind::Normal => "normal",
            EventKind::Query => "query",
        }
    }
}

/// How an event relates to the abstract machine's events.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EventLink {
    /// Inherits all parameters, guards and actions of the abstract event.
    Extends(String),
    /// Restates the event; the abstract binding is the restriction of the
    /// concrete binding to the abstract parameters.
    Refines(String),
}

impl EventLink {
    pub fn target(&self) -> &str {
        match self {
            EventLink::Extends(s) | EventLink::Refines(s) => s,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub typing: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Action {
    pub label: String,
    pub target: String,
    pub expr: Expr,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub name: String,
    pub kind: EventKind,
    pub class_owner: Option<String>,
    pub link: Option<EventLink>,
    pub parameters: Vec<Param>,
    pub guards: Vec<Labeled>,
    pub actions: Vec<Action>,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Union,
    Minus,
    Inter,
    Product,
    DomSub,
    DomRes,
    Override,
    Compose,
}

impl BinOp {
    pub fn token(self) -> &'static str {
        match self {
            BinOp::Union => "\\/",
            BinOp::Minus => "\\",
            BinOp::Inter => "/\\",
            BinOp::Product => "**",
            BinOp::DomSub => "<-|",
            BinOp::DomRes => "<|",
            BinOp::Override => "<+",
            BinOp::Compose => ";",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RelOp {
    In,
    NotIn,
    Subset,
    Eq,
}

impl RelOp {
    pub fn token(self) -> &'static str {
        match self {
            RelOp::In => ":",
            RelOp::NotIn => "/:",
            RelOp::Subset => "<:",
            RelOp::Eq => "=",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Logic {
    And,
    Or,
    Implies,
}

impl Logic {
    pub fn token(self) -> &'static str {
        match self {
            Logic::And => "&",
            Logic::Or => "or",
            Logic::Implies => "=>",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Quantifier {
    ForAll,
    Exists,
}

/// Expressions and predicates share one tree; the typechecker separates them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Ident(String),
    /// `{a, b, ...}`; empty for `{}`.
    Enum(Vec<Expr>),
    Maplet(Box<Expr>, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Inverse(Box<Expr>),
    Image(Box<Expr>, Box<Expr>),
    Apply(Box<Expr>, Box<Expr>),
    Dom(Box<Expr>),
    Ran(Box<Expr>),
    Pow(Box<Expr>),
    Bool(bool),
    Rel(RelOp, Box<Expr>, Box<Expr>),
    Logic(Logic, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Quant(Quantifier, Vec<Param>, Box<Expr>),
    /// `f : A <arrow> B [injective]`
    FnClass {
        func: Box<Expr>,
        dom: Box<Expr>,
        ran: Box<Expr>,
        kind: RelationKind,
    },
}

impl Expr {
    pub fn ident(s: impl Into<String>) -> Expr {
        Expr::Ident(s.into())
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Bin(op, Box::new(l), Box::new(r))
    }

    pub fn rel(op: RelOp, l: Expr, r: Expr) -> Expr {
        Expr::Rel(op, Box::new(l), Box::new(r))
    }

    pub fn maplet(l: Expr, r: Expr) -> Expr {
        Expr::Maplet(Box::new(l), Box::new(r))
    }

    pub fn and(l: Expr, r: Expr) -> Expr {
        Expr::Logic(Logic::And, Box::new(l), Box::new(r))
    }

    pub fn singleton(e: Expr) -> Expr {
        Expr::Enum(vec![e])
    }

    /// Conjunction of a list; `true` when empty.
    pub fn conjoin(mut preds: Vec<Expr>) -> Expr {
        if preds.is_empty() {
            return Expr::Bool(true);
        }
        let first = preds.remove(0);
        preds.into_iter().fold(first, Expr::and)
    }

    /// Free identifiers, excluding quantifier-bound names.
    pub fn free_idents(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut bound = Vec::new();
        self.collect_free(&mut bound, &mut out);
        out
    }

    pub fn mentions(&self, name: &str) -> bool {
        self.free_idents().iter().any(|n| n == name)
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut Vec<String>) {
        match self {
            Expr::Ident(n) => {
                if !bound.contains(n) && !out.contains(n) {
                    out.push(n.clone());
                }
            }
            Expr::Enum(items) => items.iter().for_each(|e| e.collect_free(bound, out)),
            Expr::Maplet(a, b)
            | Expr::Bin(_, a, b)
            | Expr::Image(a, b)
            | Expr::Apply(a, b)
            | Expr::Rel(_, a, b)
            | Expr::Logic(_, a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Expr::Inverse(a) | Expr::Dom(a) | Expr::Ran(a) | Expr::Pow(a) | Expr::Not(a) => {
                a.collect_free(bound, out)
            }
            Expr::Bool(_) => {}
            Expr::Quant(_, vars, body) => {
                let depth = bound.len();
                for v in vars {
                    v.typing.collect_free(bound, out);
                    bound.push(v.name.clone());
                }
                body.collect_free(bound, out);
                bound.truncate(depth);
            }
            Expr::FnClass { func, dom, ran, .. } => {
                func.collect_free(bound, out);
                dom.collect_free(bound, out);
                ran.collect_free(bound, out);
            }
        }
    }

    /// Replace free occurrences of `name` with `with`. Bound occurrences are
    /// left alone; callers must avoid capture themselves.
    pub fn substitute(&self, name: &str, with: &Expr) -> Expr {
        self.map_idents(&mut |n| (n == name).then(|| with.clone()))
    }

    /// Rebuild the tree, replacing free identifiers for which `f` returns a
    /// replacement.
    pub fn map_idents(&self, f: &mut dyn FnMut(&str) -> Option<Expr>) -> Expr {
        let mut bound = Vec::new();
        self.map_inner(&mut bound, f)
    }

    fn map_inner(&self, bound: &mut Vec<String>, f: &mut dyn FnMut(&str) -> Option<Expr>) -> Expr {
        let b = |e: &Expr, bound: &mut Vec<String>, f: &mut dyn FnMut(&str) -> Option<Expr>| {
            Box::new(e.map_inner(bound, f))
        };
        match self {
            Expr::Ident(n) => {
                if bound.contains(n) {
                    self.clone()
                } else {
                    f(n).unwrap_or_else(|| self.clone())
                }
            }
            Expr::Enum(items) => Expr::Enum(items.iter().map(|e| e.map_inner(bound, f)).collect()),
            Expr::Maplet(x, y) => Expr::Maplet(b(x, bound, f), b(y, bound, f)),
            Expr::Bin(op, x, y) => Expr::Bin(*op, b(x, bound, f), b(y, bound, f)),
            Expr::Image(x, y) => Expr::Image(b(x, bound, f), b(y, bound, f)),
            Expr::Apply(x, y) => Expr::Apply(b(x, bound, f), b(y, bound, f)),
            Expr::Rel(op, x, y) => Expr::Rel(*op, b(x, bound, f), b(y, bound, f)),
            Expr::Logic(op, x, y) => Expr::Logic(*op, b(x, bound, f), b(y, bound, f)),
            Expr::Inverse(x) => Expr::Inverse(b(x, bound, f)),
            Expr::Dom(x) => Expr::Dom(b(x, bound, f)),
            Expr::Ran(x) => Expr::Ran(b(x, bound, f)),
            Expr::Pow(x) => Expr::Pow(b(x, bound, f)),
            Expr::Not(x) => Expr::Not(b(x, bound, f)),
            Expr::Bool(v) => Expr::Bool(*v),
            Expr::Quant(q, vars, body) => {
                let depth = bound.len();
                let mut new_vars = Vec::with_capacity(vars.len());
                for v in vars {
                    new_vars.push(Param {
                        name: v.name.clone(),
                        typing: v.typing.map_inner(bound, f),
                    });
                    bound.push(v.name.clone());
                }
                let body = b(body, bound, f);
                bound.truncate(depth);
                Expr::Quant(*q, new_vars, body)
            }
            Expr::FnClass {
                func,
                dom,
                ran,
                kind,
            } => Expr::FnClass {
                func: b(func, bound, f),
                dom: b(dom, bound, f),
                ran: b(ran, bound, f),
                kind: *kind,
            },
        }
    }

    pub fn is_predicate(&self) -> bool {
        matches!(
            self,
            Expr::Bool(_)
                | Expr::Rel(..)
                | Expr::Logic(..)
                | Expr::Not(_)
                | Expr::Quant(..)
                | Expr::FnClass { .. }
        )
    }
}

/// A whole `.ubdb` model: contexts and machines in refinement order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RefinementChain {
    pub contexts: Vec<Context>,
    pub machines: Vec<Machine>,
}

impl RefinementChain {
    pub fn machine(&self, name: &str) -> Option<&Machine> {
        self.machines.iter().find(|m| m.name == name)
    }

    pub fn context(&self, name: &str) -> Option<&Context> {
        self.contexts.iter().find(|c| c.name == name)
    }

    /// Class annotations of every class declared anywhere in the chain.
    pub fn annotations(&self) -> Vec<ClassAnnotation> {
        let classes: Vec<&VariableDecl> = self
            .machines
            .iter()
            .flat_map(|m| m.variables.iter())
            .filter(|v| v.role == VarRole::ClassInstanceSet)
            .collect();
        classes
            .iter()
            .filter_map(|v| match &v.typing {
                VarTyping::Class { parent, kind } => Some(ClassAnnotation {
                    class_name: v.name.clone(),
                    kind: *kind,
                    supertype: classes
                        .iter()
                        .any(|c| &c.name == parent)
                        .then(|| parent.clone()),
                }),
                _ => None,
            })
            .collect()
    }

    pub fn layer_labels(&self) -> Vec<(String, LayerLabel)> {
        self.machines
            .iter()
            .filter_map(|m| m.layer.map(|l| (m.name.clone(), l)))
            .collect()
    }
}
