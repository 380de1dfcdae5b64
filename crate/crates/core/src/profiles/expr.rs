//! A small arithmetic language for boundary profiles `G(x, y)`.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?          // right associative
//! atom    := number | 'x' | 'y' | 'pi' | func '(' sum ')' | '(' sum ')'
//! func    := 'sin' | 'cos' | 'exp' | 'abs'
//! ```
//!
//! `-2^2` parses as `-(2^2)` and `2^3^2` as `2^(3^2)`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Neg,
    Sin,
    Cos,
    Exp,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Pi,
    Var(Var),
    Unary(Func, Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
}

/// Parsed expression in the variables `x` and `y`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        parse_expression(src)
    }

    pub fn constant(c: f64) -> Expr {
        Expr {
            root: Node::Const(c),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        eval_node(&self.root, x, y)
    }

    pub fn uses(&self, var: Var) -> bool {
        fn walk(n: &Node, v: Var) -> bool {
            match n {
                Node::Var(w) => *w == v,
                Node::Const(_) | Node::Pi => false,
                Node::Unary(_, a) => walk(a, v),
                Node::Binary(_, a, b) => walk(a, v) || walk(b, v),
            }
        }
        walk(&self.root, var)
    }

    /// Replaces every occurrence of `x` by the constant `value`.
    pub fn bind_x(&self, value: f64) -> Expr {
        fn walk(n: &Node, value: f64) -> Node {
            match n {
                Node::Var(Var::X) => Node::Const(value),
                Node::Var(Var::Y) | Node::Const(_) | Node::Pi => n.clone(),
                Node::Unary(f, a) => Node::Unary(*f, Box::new(walk(a, value))),
                Node::Binary(op, a, b) => {
                    Node::Binary(*op, Box::new(walk(a, value)), Box::new(walk(b, value)))
                }
            }
        }
        Expr {
            root: walk(&self.root, value),
        }
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr {
            root: Node::Binary(op, Box::new(lhs.root), Box::new(rhs.root)),
        }
    }

    /// `self + c`
    pub fn add_constant(self, c: f64) -> Expr {
        Expr::binary(BinOp::Add, self, Expr::constant(c))
    }

    /// `self * c`
    pub fn scale(self, c: f64) -> Expr {
        Expr::binary(BinOp::Mul, self, Expr::constant(c))
    }
}

impl std::str::FromStr for Expr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Expr> {
        parse_expression(s)
    }
}

pub fn parse_expression(src: &str) -> Result<Expr> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
    };
    let root = p.sum()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        let c = p.src[p.pos] as char;
        return Err(p.err(p.pos, format!("unexpected '{c}'")));
    }
    Ok(Expr { root })
}

fn eval_node(n: &Node, x: f64, y: f64) -> Result<f64> {
    let v = match n {
        Node::Const(c) => *c,
        Node::Pi => std::f64::consts::PI,
        Node::Var(Var::X) => x,
        Node::Var(Var::Y) => y,
        Node::Unary(f, a) => {
            let a = eval_node(a, x, y)?;
            match f {
                Func::Neg => -a,
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Exp => a.exp(),
                Func::Abs => a.abs(),
            }
        }
        Node::Binary(op, a, b) => {
            let a = eval_node(a, x, y)?;
            let b = eval_node(b, x, y)?;
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(Error::Eval("division by zero".into()));
                    }
                    a / b
                }
                BinOp::Pow => {
                    if a == 0.0 && b < 0.0 {
                        return Err(Error::Eval("zero raised to a negative power".into()));
                    }
                    a.powf(b)
                }
            }
        }
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Eval(format!("non-finite value at x={x}, y={y}")))
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Syntax {
            offset,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn sum(&mut self) -> Result<Node> {
        let mut lhs = self.product()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.product()?;
            let op = if c == b'+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == b'*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Node::Unary(Func::Neg, Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let Some(c) = self.peek() else {
            return Err(self.err(self.pos, "unexpected end of input"));
        };
        let start = self.pos;
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c == b'(' {
            self.pos += 1;
            let inner = self.sum()?;
            return match self.peek() {
                Some(b')') => {
                    self.pos += 1;
                    Ok(inner)
                }
                _ => Err(self.err(self.pos, "expected ')'")),
            };
        }
        if c.is_ascii_alphabetic() {
            while self.pos < self.src.len()
                && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
            {
                self.pos += 1;
            }
            let ident = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
            let func = match ident {
                "x" => return Ok(Node::Var(Var::X)),
                "y" => return Ok(Node::Var(Var::Y)),
                "pi" => return Ok(Node::Pi),
                "sin" => Func::Sin,
                "cos" => Func::Cos,
                "exp" => Func::Exp,
                "abs" => Func::Abs,
                _ => return Err(self.err(start, format!("unknown identifier '{ident}'"))),
            };
            if self.peek() != Some(b'(') {
                return Err(self.err(self.pos, format!("expected '(' after '{ident}'")));
            }
            self.pos += 1;
            let arg = self.sum()?;
            if self.peek() != Some(b')') {
                return Err(self.err(self.pos, "expected ')'"));
            }
            self.pos += 1;
            return Ok(Node::Unary(func, Box::new(arg)));
        }
        Err(self.err(start, format!("unexpected '{}'", c as char)))
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let bytes = self.src;
        let mut i = self.pos;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'.' {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = std::str::from_utf8(&bytes[start..i]).unwrap_or("");
        let value: f64 = text
            .parse()
            .map_err(|_| self.err(start, format!("malformed number '{text}'")))?;
        self.pos = i;
        Ok(Node::Const(value))
    }
}

// Printing is fully parenthesized so that reparsing never depends on precedence.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, f)
    }
}

fn write_node(n: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match n {
        Node::Const(c) => {
            if *c < 0.0 {
                write!(f, "(-{:?})", -c)
            } else {
                write!(f, "{c:?}")
            }
        }
        Node::Pi => write!(f, "pi"),
        Node::Var(Var::X) => write!(f, "x"),
        Node::Var(Var::Y) => write!(f, "y"),
        Node::Unary(Func::Neg, a) => {
            write!(f, "(-")?;
            write_node(a, f)?;
            write!(f, ")")
        }
        Node::Unary(func, a) => {
            let name = match func {
                Func::Sin => "sin",
                Func::Cos => "cos",
                Func::Exp => "exp",
                Func::Abs => "abs",
                Func::Neg => unreachable!(),
            };
            write!(f, "{name}(")?;
            write_node(a, f)?;
            write!(f, ")")
        }
        Node::Binary(op, a, b) => {
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
                BinOp::Pow => "^",
            };
            write!(f, "(")?;
            write_node(a, f)?;
            write!(f, " {sym} ")?;
            write_node(b, f)?;
            write!(f, ")")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eval(src: &str, x: f64, y: f64) -> f64 {
        parse_expression(src).unwrap().eval(x, y).unwrap()
    }

    #[test]
    fn sine_profile_at_quarter_period() {
        let v = eval("1 + 0.5*sin(2*pi*y)", 0.0, 0.25);
        assert!((v - 1.5).abs() < 1e-15);
    }

    #[test]
    fn square() {
        assert_eq!(eval("x^2", 3.0, 0.0), 9.0);
    }

    #[test]
    fn unbalanced_paren_offset() {
        match parse_expression("sin(") {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("-2^2", 0.0, 0.0), -4.0);
        assert_eq!(eval("2^3^2", 0.0, 0.0), 512.0);
        assert_eq!(eval("2^-1", 0.0, 0.0), 0.5);
        assert_eq!(eval("1 - 2 - 3", 0.0, 0.0), -4.0);
        assert_eq!(eval("8 / 4 / 2", 0.0, 0.0), 1.0);
        assert_eq!(eval("2 * -3", 0.0, 0.0), -6.0);
        assert_eq!(eval(" 1.5e1 +\t2E-1 ", 0.0, 0.0), 15.2);
        assert_eq!(eval("abs(-x) * exp(0) + cos(0)", 2.0, 0.0), 3.0);
    }

    #[test]
    fn syntax_errors() {
        let offset = |s: &str| match parse_expression(s) {
            Err(Error::Syntax { offset, .. }) => offset,
            other => panic!("{s}: expected syntax error, got {other:?}"),
        };
        assert_eq!(offset("1 +"), 3);
        assert_eq!(offset("foo(1)"), 0);
        assert_eq!(offset("1 + z"), 4);
        assert_eq!(offset("(1 + 2"), 6);
        assert_eq!(offset("1 2"), 2);
        assert_eq!(offset("sin 2"), 4);
        assert_eq!(offset("*3"), 0);
    }

    #[test]
    fn evaluation_errors_are_not_nan() {
        let e = parse_expression("1/(x-1)").unwrap();
        assert!(matches!(e.eval(1.0, 0.0), Err(Error::Eval(_))));
        let e = parse_expression("x^(-1)").unwrap();
        assert!(matches!(e.eval(0.0, 0.0), Err(Error::Eval(_))));
        let e = parse_expression("(0-x)^0.5").unwrap();
        assert!(matches!(e.eval(2.0, 0.0), Err(Error::Eval(_))));
        let e = parse_expression("exp(x)").unwrap();
        assert!(matches!(e.eval(1e4, 0.0), Err(Error::Eval(_))));
    }

    #[test]
    fn bind_x_freezes_slow_variable() {
        let e = parse_expression("1 + 0.2*x + 0.1*sin(2*pi*y)").unwrap();
        let b = e.bind_x(0.5);
        assert!(!b.uses(Var::X));
        assert!(b.uses(Var::Y));
        assert_eq!(b.eval(123.0, 0.3).unwrap(), e.eval(0.5, 0.3).unwrap());
    }

    fn arb_node() -> impl Strategy<Value = Node> {
        let leaf = prop_oneof![
            (-5.0f64..5.0).prop_map(Node::Const),
            Just(Node::Pi),
            Just(Node::Var(Var::X)),
            Just(Node::Var(Var::Y)),
        ];
        leaf.prop_recursive(5, 48, 2, |inner| {
            prop_oneof![
                (
                    prop_oneof![
                        Just(Func::Neg),
                        Just(Func::Sin),
                        Just(Func::Cos),
                        Just(Func::Abs)
                    ],
                    inner.clone()
                )
                    .prop_map(|(f, a)| Node::Unary(f, Box::new(a))),
                (
                    prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul)],
                    inner.clone(),
                    inner
                )
                    .prop_map(|(op, a, b)| Node::Binary(
                        op,
                        Box::new(a),
                        Box::new(b)
                    )),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_then_reparse_evaluates_identically(
            node in arb_node(),
            pts in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 100),
        ) {
            let e = Expr { root: node };
            let back = parse_expression(&e.to_string()).unwrap();
            for (x, y) in pts {
                let a = e.eval(x, y).unwrap();
                let b = back.eval(x, y).unwrap();
                prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(1e-300) || a == b);
            }
        }
    }
}
