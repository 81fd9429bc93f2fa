//! Closed expression grammar over path functionals.
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | var | func '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Variables: `t`, `T`, `h`, `B` (first coordinate), `B1`..`Bd`, `supB`, `infB`, `intB`.
//! Functions: `abs exp ln sqrt sin cos pos neg` (one argument), `max min` (two or more).

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Var {
    Time,
    Horizon,
    Step,
    /// Zero-based coordinate.
    B(usize),
    SupB,
    InfB,
    IntB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Abs,
    Exp,
    Ln,
    Sqrt,
    Sin,
    Cos,
    Pos,
    Neg,
    Max,
    Min,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "abs" => Func::Abs,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "pos" => Func::Pos,
            "neg" => Func::Neg,
            "max" => Func::Max,
            "min" => Func::Min,
            _ => return None,
        })
    }

    fn name(&self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Pos => "pos",
            Func::Neg => "neg",
            Func::Max => "max",
            Func::Min => "min",
        }
    }

    fn variadic(&self) -> bool {
        matches!(self, Func::Max | Func::Min)
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
    fn symbol(&self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Values of the path functionals at one node.
#[derive(Debug, Clone, Copy)]
pub struct PathContext<'a> {
    pub t: f64,
    pub horizon: f64,
    pub step: f64,
    pub b: &'a [f64],
    pub sup_b: f64,
    pub inf_b: f64,
    pub int_b: f64,
}

impl Expr {
    pub fn eval(&self, ctx: &PathContext<'_>) -> f64 {
        match self {
            Expr::Num(x) => *x,
            Expr::Var(v) => match v {
                Var::Time => ctx.t,
                Var::Horizon => ctx.horizon,
                Var::Step => ctx.step,
                Var::B(j) => ctx.b[*j],
                Var::SupB => ctx.sup_b,
                Var::InfB => ctx.inf_b,
                Var::IntB => ctx.int_b,
            },
            Expr::Neg(e) => -e.eval(ctx),
            Expr::Bin(op, a, b) => {
                let (x, y) = (a.eval(ctx), b.eval(ctx));
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x / y,
                    BinOp::Pow => x.powf(y),
                }
            }
            Expr::Call(f, args) => {
                let first = args[0].eval(ctx);
                match f {
                    Func::Abs => first.abs(),
                    Func::Exp => first.exp(),
                    Func::Ln => first.ln(),
                    Func::Sqrt => first.sqrt(),
                    Func::Sin => first.sin(),
                    Func::Cos => first.cos(),
                    Func::Pos => first.max(0.0),
                    Func::Neg => (-first).max(0.0),
                    Func::Max => args[1..].iter().fold(first, |m, a| m.max(a.eval(ctx))),
                    Func::Min => args[1..].iter().fold(first, |m, a| m.min(a.eval(ctx))),
                }
            }
        }
    }
}

/// Canonical form: binary operations and negations fully parenthesized.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => write!(f, "{x}"),
            Expr::Var(v) => match v {
                Var::Time => f.write_str("t"),
                Var::Horizon => f.write_str("T"),
                Var::Step => f.write_str("h"),
                Var::B(j) => write!(f, "B{}", j + 1),
                Var::SupB => f.write_str("supB"),
                Var::InfB => f.write_str("infB"),
                Var::IntB => f.write_str("intB"),
            },
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("at column {column}: {message}")]
pub struct ExprError {
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text.parse().map_err(|_| ExprError {
                column: start + 1,
                message: format!("bad number `{text}`"),
            })?;
            out.push((start + 1, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push((start + 1, Tok::Ident(chars[start..i].iter().collect())));
        } else if "+-*/^(),".contains(c) {
            out.push((i + 1, Tok::Sym(c)));
            i += 1;
        } else {
            return Err(ExprError {
                column: i + 1,
                message: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    dim: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn column(&self) -> usize {
        self.toks.get(self.pos).map(|(c, _)| *c).unwrap_or(self.end)
    }

    fn err(&self, message: impl Into<String>) -> ExprError {
        ExprError {
            column: self.column(),
            message: message.into(),
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ExprError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{c}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let column = self.column();
        match self.toks.get(self.pos).map(|(_, t)| t.clone()) {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if let Some(func) = Func::lookup(&name) {
                    self.expect('(')?;
                    let mut args = vec![self.expr()?];
                    while self.eat(',') {
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    let ok = if func.variadic() {
                        args.len() >= 2
                    } else {
                        args.len() == 1
                    };
                    if !ok {
                        return Err(ExprError {
                            column,
                            message: format!("wrong number of arguments to `{name}`"),
                        });
                    }
                    return Ok(Expr::Call(func, args));
                }
                self.variable(&name, column).map(Expr::Var)
            }
            Some(Tok::Sym(c)) => Err(self.err(format!("unexpected `{c}`"))),
            None => Err(self.err("unexpected end of expression")),
        }
    }

    fn variable(&self, name: &str, column: usize) -> Result<Var, ExprError> {
        let v = match name {
            "t" => Var::Time,
            "T" => Var::Horizon,
            "h" => Var::Step,
            "B" => Var::B(0),
            "supB" => Var::SupB,
            "infB" => Var::InfB,
            "intB" => Var::IntB,
            _ => {
                let coord = name
                    .strip_prefix('B')
                    .and_then(|s| s.parse::<usize>().ok())
                    .filter(|&j| j >= 1);
                match coord {
                    Some(j) if j <= self.dim => Var::B(j - 1),
                    Some(j) => {
                        return Err(ExprError {
                            column,
                            message: format!("`B{j}` exceeds dimension {}", self.dim),
                        })
                    }
                    None => {
                        return Err(ExprError {
                            column,
                            message: format!("unknown name `{name}`"),
                        })
                    }
                }
            }
        };
        Ok(v)
    }
}

/// Parses an expression for a tree of dimension `dim`.
pub fn parse(src: &str, dim: usize) -> Result<Expr, ExprError> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        dim,
        end: src.chars().count() + 1,
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(b: &[f64]) -> PathContext<'_> {
        PathContext {
            t: 0.5,
            horizon: 1.0,
            step: 0.1,
            b,
            sup_b: 2.0,
            inf_b: -1.0,
            int_b: 0.25,
        }
    }

    #[test]
    fn precedence() {
        let e = parse("1 + 2 * 3 ^ 2", 1).unwrap();
        assert_eq!(e.eval(&ctx(&[0.0])), 19.0);
        let e = parse("-2^2", 1).unwrap();
        assert_eq!(e.eval(&ctx(&[0.0])), -4.0);
        let e = parse("2^3^2", 1).unwrap();
        assert_eq!(e.eval(&ctx(&[0.0])), 512.0);
        let e = parse("8 / 2 / 2 - 1 - 1", 1).unwrap();
        assert_eq!(e.eval(&ctx(&[0.0])), 0.0);
    }

    #[test]
    fn functionals_and_functions() {
        let b = [0.7, -0.4];
        let e = parse("max(B1, B2, supB) + pos(B2) + neg(B2) + intB * T - infB", 2).unwrap();
        assert!((e.eval(&ctx(&b)) - (2.0 + 0.0 + 0.4 + 0.25 + 1.0)).abs() < 1e-15);
        let e = parse("exp(ln(2)) + sqrt(4) + abs(-1) + sin(0) + cos(0) + 1.5e1", 1).unwrap();
        assert!((e.eval(&ctx(&b)) - 21.0).abs() < 1e-12);
    }

    #[test]
    fn errors_carry_columns() {
        assert_eq!(parse("1 + ", 1).unwrap_err().column, 5);
        assert_eq!(parse("B2", 1).unwrap_err().column, 1);
        assert!(parse("foo(1)", 1).is_err());
        assert!(parse("max(1)", 1).is_err());
        assert!(parse("1 $ 2", 1).is_err());
        assert!(parse("(1", 1).is_err());
        assert!(parse("1 2", 1).is_err());
    }

    #[test]
    fn canonical_round_trip() {
        for src in ["B^2", "-B + 3", "max(0.3 - B, 0) * exp(-t)", "1e-7 * intB / h", "2^-1"] {
            let e = parse(src, 1).unwrap();
            let back = parse(&e.to_string(), 1).unwrap();
            assert_eq!(e, back, "{src} -> {e}");
        }
    }
}
