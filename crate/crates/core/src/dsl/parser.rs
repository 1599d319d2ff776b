use super::expr::{BinOp, Expr, FieldExpr, Func, Var, VarKind};
use crate::error::{Error, Result};
use crate::tensor::C64;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Imag(f64),
    Ident(String),
    Sym(char),
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    text: String,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (1usize, 1usize);
    let mut k = 0;
    while k < chars.len() {
        let c = chars[k];
        if c == '\n' {
            line += 1;
            col = 1;
            k += 1;
            continue;
        }
        if c.is_whitespace() {
            col += 1;
            k += 1;
            continue;
        }
        let start = k;
        let (tl, tc) = (line, col);
        let tok = if c.is_ascii_digit() || (c == '.' && chars.get(k + 1).is_some_and(|d| d.is_ascii_digit())) {
            while k < chars.len() && (chars[k].is_ascii_digit() || chars[k] == '.') {
                k += 1;
            }
            if k < chars.len() && (chars[k] == 'e' || chars[k] == 'E') {
                let mut j = k + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    k = j;
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                }
            }
            let text: String = chars[start..k].iter().collect();
            let value: f64 = text.parse().map_err(|_| Error::Parse {
                line: tl,
                column: tc,
                token: text.clone(),
                message: "malformed number".into(),
            })?;
            let imag = k < chars.len()
                && chars[k] == 'i'
                && !chars.get(k + 1).is_some_and(|d| d.is_alphanumeric() || *d == '_');
            if imag {
                k += 1;
                Tok::Imag(value)
            } else {
                Tok::Num(value)
            }
        } else if c.is_alphabetic() || c == '_' {
            while k < chars.len() && (chars[k].is_alphanumeric() || chars[k] == '_') {
                k += 1;
            }
            Tok::Ident(chars[start..k].iter().collect())
        } else if "+-*/^(),[]".contains(c) {
            k += 1;
            Tok::Sym(c)
        } else {
            return Err(Error::Parse {
                line: tl,
                column: tc,
                token: c.to_string(),
                message: "unexpected character".into(),
            });
        };
        col += k - start;
        out.push(Token {
            tok,
            text: chars[start..k].iter().collect(),
            line: tl,
            column: tc,
        });
    }
    out.push(Token {
        tok: Tok::End,
        text: "<end of input>".into(),
        line,
        column: col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    indices: Vec<String>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(t: &Token, message: impl Into<String>) -> Error {
        Error::Parse {
            line: t.line,
            column: t.column,
            token: t.text.clone(),
            message: message.into(),
        }
    }

    fn is_sym(&self, c: char) -> bool {
        self.peek().tok == Tok::Sym(c)
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.is_sym(c) {
            self.next();
            Ok(())
        } else {
            Err(Self::error_at(self.peek(), format!("expected `{c}`")))
        }
    }

    fn field(&mut self) -> Result<FieldExpr> {
        if self.is_sym('[') {
            self.next();
            let mut rows = Vec::new();
            loop {
                let t = self.peek().clone();
                self.expect('[').map_err(|_| Self::error_at(&t, "expected `[` opening a matrix row"))?;
                let mut row = vec![self.expr()?];
                while self.is_sym(',') {
                    self.next();
                    row.push(self.expr()?);
                }
                self.expect(']')?;
                if let Some(first) = rows.first() {
                    let first: &Vec<Expr> = first;
                    if first.len() != row.len() {
                        return Err(Self::error_at(&t, "ragged matrix row"));
                    }
                }
                rows.push(row);
                if self.is_sym(',') {
                    self.next();
                } else {
                    break;
                }
            }
            self.expect(']')?;
            if rows.len() != rows[0].len() {
                return Err(Self::error_at(&self.toks[0], "matrix literal must be square"));
            }
            Ok(FieldExpr::Matrix(rows))
        } else {
            Ok(FieldExpr::Scalar(self.expr()?))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.is_sym('+') {
                BinOp::Add
            } else if self.is_sym('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            self.next();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.power()?;
        loop {
            let op = if self.is_sym('*') {
                BinOp::Mul
            } else if self.is_sym('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            self.next();
            let rhs = self.power()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    // `^` is right associative and binds looser than unary minus.
    fn power(&mut self) -> Result<Expr> {
        let base = self.unary()?;
        if self.is_sym('^') {
            self.next();
            let exp = self.power()?;
            Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)))
        } else {
            Ok(base)
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.is_sym('-') {
            self.next();
            // A minus on a constant folds into the constant so printed
            // negative constants reparse to the same tree.
            match self.peek().tok {
                Tok::Num(v) => {
                    self.next();
                    return Ok(Expr::Num(-C64::new(v, 0.0)));
                }
                Tok::Imag(v) => {
                    self.next();
                    return Ok(Expr::Num(-C64::new(0.0, v)));
                }
                _ => {}
            }
            return Ok(Expr::neg(self.unary()?));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        let t = self.next();
        match &t.tok {
            Tok::Num(v) => Ok(Expr::real(*v)),
            Tok::Imag(v) => Ok(Expr::Num(C64::new(0.0, *v))),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => self.identifier(&t, name),
            _ => Err(Self::error_at(&t, "expected an operand")),
        }
    }

    fn identifier(&mut self, t: &Token, name: &str) -> Result<Expr> {
        if self.is_sym('(') {
            if name == "sum" {
                return self.sum(t);
            }
            let func = Func::from_name(name).ok_or_else(|| Self::error_at(t, "unknown function"))?;
            self.next();
            let mut args = Vec::new();
            if !self.is_sym(')') {
                args.push(self.expr()?);
                while self.is_sym(',') {
                    self.next();
                    args.push(self.expr()?);
                }
            }
            self.expect(')')?;
            if args.len() != func.arity() {
                return Err(Self::error_at(
                    t,
                    format!("`{}` takes {} argument(s), got {}", func.name(), func.arity(), args.len()),
                ));
            }
            return Ok(Expr::Call(func, args));
        }
        if self.is_sym('[') {
            let kind = VarKind::from_letter(name).ok_or_else(|| Self::error_at(t, "only z, w, Z can be indexed"))?;
            self.next();
            let idx = self.next();
            let Tok::Ident(ix) = &idx.tok else {
                return Err(Self::error_at(&idx, "expected a sum index"));
            };
            if !self.indices.contains(ix) {
                return Err(Self::error_at(&idx, "index is not bound by an enclosing sum"));
            }
            self.expect(']')?;
            return Ok(Expr::Indexed(kind, ix.clone()));
        }
        if self.indices.iter().any(|s| s == name) {
            return Ok(Expr::Index(name.to_string()));
        }
        match name {
            "i" => return Ok(Expr::Num(C64::new(0.0, 1.0))),
            "pi" => return Ok(Expr::real(std::f64::consts::PI)),
            _ => {}
        }
        let mut chars = name.chars();
        if let Some(kind) = chars.next().and_then(|c| VarKind::from_letter(&c.to_string())) {
            let digits = chars.as_str();
            if !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit()) {
                let printed: i64 = digits.parse().map_err(|_| Self::error_at(t, "variable index out of range"))?;
                let index = kind
                    .index_from_printed(printed)
                    .ok_or_else(|| Self::error_at(t, "variable indices for z and w start at 1"))?;
                return Ok(Expr::Var(Var { kind, index }));
            }
        }
        if Func::from_name(name).is_some() || name == "sum" {
            return Err(Self::error_at(t, "function name used without arguments"));
        }
        Err(Self::error_at(t, "unknown identifier"))
    }

    fn int_literal(&mut self) -> Result<i64> {
        let neg = if self.is_sym('-') {
            self.next();
            true
        } else {
            false
        };
        let t = self.next();
        match t.tok {
            Tok::Num(v) if v.fract() == 0.0 && v.abs() < 1e9 => Ok(if neg { -(v as i64) } else { v as i64 }),
            _ => Err(Self::error_at(&t, "sum bounds must be integer literals")),
        }
    }

    fn sum(&mut self, t: &Token) -> Result<Expr> {
        self.expect('(')?;
        let idx = self.next();
        let Tok::Ident(index) = idx.tok.clone() else {
            return Err(Self::error_at(&idx, "expected a sum index name"));
        };
        if matches!(index.as_str(), "i" | "pi") || VarKind::from_letter(&index).is_some() || Func::from_name(&index).is_some() {
            return Err(Self::error_at(&idx, "reserved name used as sum index"));
        }
        self.expect(',')?;
        let lo = self.int_literal()?;
        self.expect(',')?;
        let hi = self.int_literal()?;
        self.expect(',')?;
        if hi < lo {
            return Err(Self::error_at(t, "empty sum range"));
        }
        self.indices.push(index.clone());
        let body = self.expr();
        self.indices.pop();
        let body = body?;
        self.expect(')')?;
        Ok(Expr::Sum {
            index,
            lo,
            hi,
            body: Box::new(body),
        })
    }
}

/// Parses a scalar expression or a square matrix literal.
pub fn parse_field(source: &str) -> Result<FieldExpr> {
    if source.trim().is_empty() {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            token: String::new(),
            message: "empty expression".into(),
        });
    }
    let mut p = Parser {
        toks: lex(source)?,
        pos: 0,
        indices: Vec::new(),
    };
    let f = p.field()?;
    if p.peek().tok != Tok::End {
        return Err(Parser::error_at(p.peek(), "trailing input"));
    }
    Ok(f)
}

/// Parses a scalar expression; matrix literals are rejected.
pub fn parse_scalar(source: &str) -> Result<Expr> {
    match parse_field(source)? {
        FieldExpr::Scalar(e) => Ok(e),
        FieldExpr::Matrix(_) => Err(Error::Parse {
            line: 1,
            column: 1,
            token: "[".into(),
            message: "expected a scalar expression, found a matrix".into(),
        }),
    }
}

/// Checks every variable against the declared base dimension `n` and fiber
/// dimension `r`.
pub fn validate(e: &Expr, n: usize, r: usize) -> Result<()> {
    for v in e.variables() {
        let ok = match v.kind {
            VarKind::Base => v.index < n,
            VarKind::Fiber => v.index < r,
            VarKind::Homog => v.index <= r,
        };
        if !ok {
            return Err(Error::input(format!("variable `{v}` outside declared n = {n}, r = {r}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(src: &str) -> Expr {
        parse_scalar(src).unwrap()
    }

    #[test]
    fn log_tree() {
        let e = s("log(1 + abs2(w1))");
        let expected = Expr::Call(
            Func::Log,
            vec![Expr::Bin(
                BinOp::Add,
                Box::new(Expr::real(1.0)),
                Box::new(Expr::Call(Func::Abs2, vec![Expr::Var(Var::fiber(0))])),
            )],
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn product_tree() {
        let e = s("exp(-abs2(z1)) * (1 + abs2(w1))");
        assert!(matches!(e, Expr::Bin(BinOp::Mul, ..)));
    }

    #[test]
    fn matrix_literal() {
        let f = parse_field("[[exp(-abs2(z1)), 0],[0, exp(-2*abs2(z1))]]").unwrap();
        match f {
            FieldExpr::Matrix(rows) => {
                assert_eq!(rows.len(), 2);
                assert!(rows[0][1].is_num(0.0));
            }
            _ => panic!("expected matrix"),
        }
    }

    #[test]
    fn precedence() {
        assert_eq!(s("1 + 2 * 3"), s("1 + (2 * 3)"));
        assert_eq!(s("2 ^ 3 ^ 2"), s("2 ^ (3 ^ 2)"));
        assert_eq!(s("-z1 ^ 2"), s("(-z1) ^ 2"));
        assert!(parse_field("a1").is_err());
    }

    #[test]
    fn imaginary_literals() {
        assert_eq!(s("2i"), Expr::Num(C64::new(0.0, 2.0)));
        assert_eq!(s("i"), Expr::Num(C64::new(0.0, 1.0)));
    }

    #[test]
    fn errors_carry_position() {
        match parse_field("1 +\n  foo(z1)") {
            Err(Error::Parse { line, column, token, .. }) => {
                assert_eq!((line, column), (2, 3));
                assert_eq!(token, "foo");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_field("pow(z1)"), Err(Error::Parse { .. })));
        assert!(matches!(parse_field("1 $ 2"), Err(Error::Parse { .. })));
        assert!(matches!(parse_field("(1 + 2"), Err(Error::Parse { .. })));
        assert!(matches!(parse_field("z0"), Err(Error::Parse { .. })));
    }

    #[test]
    fn sums_expand() {
        let e = s("sum(k, 1, 2, abs2(w[k]))");
        assert_eq!(e.variables(), vec![Var::fiber(0), Var::fiber(1)]);
        assert!(parse_field("w[k]").is_err());
    }

    #[test]
    fn print_reparse() {
        for src in [
            "log(1 + abs2(w1))",
            "-3.5 * z1 - (-2i) / w2 ^ -2",
            "[[exp(-abs2(z1)), 0], [0, exp(-2*abs2(z1))]]",
            "sum(k, 0, 2, abs2(Z[k]) * k)",
            "pow(abs2(Z0)^2 + abs2(Z1)^2, 0.5) + 1e-300",
        ] {
            let f = parse_field(src).unwrap();
            let again = parse_field(&f.to_string()).unwrap();
            assert_eq!(f, again, "{src}");
        }
    }

    #[test]
    fn validation() {
        assert!(validate(&s("z1 + w1"), 1, 1).is_ok());
        assert!(validate(&s("z2"), 1, 1).is_err());
        assert!(validate(&s("Z2"), 1, 1).is_err());
    }
}
