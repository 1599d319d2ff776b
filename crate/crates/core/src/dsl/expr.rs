use std::fmt;

use crate::tensor::C64;

/// Coordinate families. Indices are stored 0-based; base and fiber
/// variables print 1-based (`z1`, `w1`), homogeneous ones 0-based (`Z0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKind {
    /// base coordinate `z`
    Base,
    /// affine fiber coordinate `w`
    Fiber,
    /// homogeneous fiber coordinate `Z`
    Homog,
}

impl VarKind {
    fn letter(self) -> &'static str {
        match self {
            VarKind::Base => "z",
            VarKind::Fiber => "w",
            VarKind::Homog => "Z",
        }
    }

    /// Offset between the printed index and the stored index.
    fn print_offset(self) -> usize {
        match self {
            VarKind::Base | VarKind::Fiber => 1,
            VarKind::Homog => 0,
        }
    }

    pub fn from_letter(s: &str) -> Option<Self> {
        match s {
            "z" => Some(VarKind::Base),
            "w" => Some(VarKind::Fiber),
            "Z" => Some(VarKind::Homog),
            _ => None,
        }
    }

    pub fn index_from_printed(self, printed: i64) -> Option<usize> {
        let idx = printed - self.print_offset() as i64;
        (idx >= 0).then_some(idx as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var {
    pub kind: VarKind,
    pub index: usize,
}

impl Var {
    pub fn base(index: usize) -> Self {
        Var { kind: VarKind::Base, index }
    }
    pub fn fiber(index: usize) -> Self {
        Var { kind: VarKind::Fiber, index }
    }
    pub fn homog(index: usize) -> Self {
        Var { kind: VarKind::Homog, index }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.letter(), self.index + self.kind.print_offset())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Pow,
    Abs2,
    Conj,
    Sqrt,
    Sin,
    Cos,
    Re,
    Im,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "pow" => Func::Pow,
            "abs2" => Func::Abs2,
            "conj" => Func::Conj,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "re" => Func::Re,
            "im" => Func::Im,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Pow => "pow",
            Func::Abs2 => "abs2",
            Func::Conj => "conj",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Re => "re",
            Func::Im => "im",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Pow => 2,
            _ => 1,
        }
    }
}

/// Scalar expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(C64),
    Var(Var),
    /// `z[k]`-style variable indexed by an enclosing sum index.
    Indexed(VarKind, String),
    /// Value of an enclosing sum index.
    Index(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
    /// `sum(k, lo, hi, body)`, bounds inclusive.
    Sum {
        index: String,
        lo: i64,
        hi: i64,
        body: Box<Expr>,
    },
}

/// A parsed field: scalar or matrix literal of scalar subtrees.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldExpr {
    Scalar(Expr),
    Matrix(Vec<Vec<Expr>>),
}

impl Expr {
    pub fn real(x: f64) -> Self {
        Expr::Num(C64::new(x, 0.0))
    }

    pub fn var(v: Var) -> Self {
        Expr::Var(v)
    }

    pub fn call(f: Func, args: Vec<Expr>) -> Self {
        Expr::Call(f, args)
    }

    fn bin(op: BinOp, a: Expr, b: Expr) -> Self {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn is_num(&self, x: f64) -> bool {
        matches!(self, Expr::Num(c) if c.re == x && c.im == 0.0)
    }

    /// Product with light constant folding.
    pub fn mul(a: Expr, b: Expr) -> Self {
        match (&a, &b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
            _ if a.is_num(0.0) || b.is_num(0.0) => Expr::real(0.0),
            _ if a.is_num(1.0) => b,
            _ if b.is_num(1.0) => a,
            _ => Self::bin(BinOp::Mul, a, b),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Self {
        match (&a, &b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
            _ if a.is_num(0.0) => b,
            _ if b.is_num(0.0) => a,
            _ => Self::bin(BinOp::Add, a, b),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Self {
        match (&a, &b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
            _ if b.is_num(0.0) => a,
            _ => Self::bin(BinOp::Sub, a, b),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Self {
        match (&a, &b) {
            _ if b.is_num(1.0) => a,
            _ => Self::bin(BinOp::Div, a, b),
        }
    }

    pub fn neg(a: Expr) -> Self {
        match a {
            Expr::Num(x) => Expr::Num(-x),
            other => Expr::Neg(Box::new(other)),
        }
    }

    /// Sum of a list, `0` when empty.
    pub fn sum_of(terms: impl IntoIterator<Item = Expr>) -> Self {
        terms.into_iter().fold(Expr::real(0.0), Expr::add)
    }

    /// Replaces every variable for which `f` returns a replacement. Sum-indexed
    /// variables are expanded first.
    pub fn substitute(&self, f: &dyn Fn(Var) -> Option<Expr>) -> Expr {
        let expanded = self.expand_sums();
        expanded.subst_inner(f)
    }

    fn subst_inner(&self, f: &dyn Fn(Var) -> Option<Expr>) -> Expr {
        match self {
            Expr::Var(v) => f(*v).unwrap_or_else(|| self.clone()),
            Expr::Num(_) | Expr::Indexed(..) | Expr::Index(_) => self.clone(),
            Expr::Neg(a) => Expr::Neg(Box::new(a.subst_inner(f))),
            Expr::Bin(op, a, b) => Expr::Bin(*op, Box::new(a.subst_inner(f)), Box::new(b.subst_inner(f))),
            Expr::Call(func, args) => Expr::Call(*func, args.iter().map(|a| a.subst_inner(f)).collect()),
            Expr::Sum { index, lo, hi, body } => Expr::Sum {
                index: index.clone(),
                lo: *lo,
                hi: *hi,
                body: Box::new(body.subst_inner(f)),
            },
        }
    }

    /// Unrolls `sum(...)` nodes into explicit additions.
    pub fn expand_sums(&self) -> Expr {
        self.expand_with(&mut Vec::new())
    }

    fn expand_with(&self, env: &mut Vec<(String, i64)>) -> Expr {
        let lookup = |env: &Vec<(String, i64)>, name: &str| env.iter().rev().find(|(n, _)| n == name).map(|(_, v)| *v);
        match self {
            Expr::Num(_) | Expr::Var(_) => self.clone(),
            Expr::Index(name) => match lookup(env, name) {
                Some(v) => Expr::real(v as f64),
                None => self.clone(),
            },
            Expr::Indexed(kind, name) => match lookup(env, name).and_then(|v| kind.index_from_printed(v)) {
                Some(idx) => Expr::Var(Var { kind: *kind, index: idx }),
                None => self.clone(),
            },
            Expr::Neg(a) => Expr::Neg(Box::new(a.expand_with(env))),
            Expr::Bin(op, a, b) => Expr::Bin(*op, Box::new(a.expand_with(env)), Box::new(b.expand_with(env))),
            Expr::Call(func, args) => Expr::Call(*func, args.iter().map(|a| a.expand_with(env)).collect()),
            Expr::Sum { index, lo, hi, body } => {
                let mut terms = Vec::new();
                for k in *lo..=*hi {
                    env.push((index.clone(), k));
                    terms.push(body.expand_with(env));
                    env.pop();
                }
                terms
                    .into_iter()
                    .reduce(|a, b| Expr::Bin(BinOp::Add, Box::new(a), Box::new(b)))
                    .unwrap_or_else(|| Expr::real(0.0))
            }
        }
    }

    /// Every concrete variable referenced (after sum expansion).
    pub fn variables(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.expand_sums().collect_vars(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Var(v) => out.push(*v),
            Expr::Num(_) | Expr::Indexed(..) | Expr::Index(_) => {}
            Expr::Neg(a) => a.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
            Expr::Sum { body, .. } => body.collect_vars(out),
        }
    }
}

fn fmt_num(f: &mut fmt::Formatter<'_>, c: &C64) -> fmt::Result {
    if c.im == 0.0 {
        if c.re < 0.0 || (c.re == 0.0 && c.re.is_sign_negative()) {
            write!(f, "(-{:?})", -c.re)
        } else {
            write!(f, "{:?}", c.re)
        }
    } else if c.re == 0.0 {
        if c.im < 0.0 {
            write!(f, "(-{:?}i)", -c.im)
        } else {
            write!(f, "{:?}i", c.im)
        }
    } else {
        write!(f, "({:?} + ({:?}i))", c.re, c.im)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => fmt_num(f, c),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Indexed(kind, name) => write!(f, "{}[{}]", kind.letter(), name),
            Expr::Index(name) => write!(f, "{name}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Expr::Sum { index, lo, hi, body } => write!(f, "sum({index}, {lo}, {hi}, {body})"),
        }
    }
}

impl fmt::Display for FieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldExpr::Scalar(e) => write!(f, "{e}"),
            FieldExpr::Matrix(rows) => {
                write!(f, "[")?;
                for (i, row) in rows.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "[")?;
                    for (j, e) in row.iter().enumerate() {
                        if j > 0 {
                            write!(f, ", ")?;
                        }
                        write!(f, "{e}")?;
                    }
                    write!(f, "]")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// Symbolic determinant by cofactor expansion along the first row.
pub fn det_expr(m: &[Vec<Expr>]) -> Expr {
    let dim = m.len();
    match dim {
        0 => Expr::real(1.0),
        1 => m[0][0].clone(),
        _ => {
            let mut terms = Vec::with_capacity(dim);
            for col in 0..dim {
                if m[0][col].is_num(0.0) {
                    continue;
                }
                let minor = minor_of(m, 0, col);
                let term = Expr::mul(m[0][col].clone(), det_expr(&minor));
                terms.push(if col % 2 == 0 { term } else { Expr::neg(term) });
            }
            Expr::sum_of(terms)
        }
    }
}

fn minor_of(m: &[Vec<Expr>], row: usize, col: usize) -> Vec<Vec<Expr>> {
    m.iter()
        .enumerate()
        .filter(|(i, _)| *i != row)
        .map(|(_, r)| r.iter().enumerate().filter(|(j, _)| *j != col).map(|(_, e)| e.clone()).collect())
        .collect()
}

/// Cofactor `(-1)^{i+j} det(minor_{ij})`.
pub fn cofactor_expr(m: &[Vec<Expr>], i: usize, j: usize) -> Expr {
    let d = det_expr(&minor_of(m, i, j));
    if (i + j).is_multiple_of(2) {
        d
    } else {
        Expr::neg(d)
    }
}
