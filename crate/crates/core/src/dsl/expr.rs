use std::fmt;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "abs" => Some(Func::Abs),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
        }
    }
}

/// Expression tree over a single independent variable.
///
/// Literals are always nonnegative; a negative constant is `Neg(Num(x))`,
/// which is what the parser produces for `-x`. Use [`Expr::num`] to keep
/// programmatically built trees in that normal form.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var,
    Pi,
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn num(x: f64) -> Expr {
        if x < 0.0 || (x == 0.0 && x.is_sign_negative()) {
            Expr::Neg(Box::new(Expr::Num(-x)))
        } else {
            Expr::Num(x)
        }
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn call(func: Func, arg: Expr) -> Expr {
        Expr::Call(func, Box::new(arg))
    }

    pub fn neg(inner: Expr) -> Expr {
        Expr::Neg(Box::new(inner))
    }

    /// `amplitude * sin(s)^2`, the lobe shape of the oscillating family.
    pub fn sin_squared_lobe(amplitude: f64) -> Expr {
        Expr::binary(
            BinOp::Mul,
            Expr::num(amplitude),
            Expr::binary(BinOp::Pow, Expr::call(Func::Sin, Expr::Var), Expr::Num(2.0)),
        )
    }

    pub fn depends_on_var(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Pi => false,
            Expr::Var => true,
            Expr::Neg(e) | Expr::Call(_, e) => e.depends_on_var(),
            Expr::Binary(_, a, b) => a.depends_on_var() || b.depends_on_var(),
        }
    }

    pub fn eval(&self, s: f64) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(x) => *x,
            Expr::Var => s,
            Expr::Pi => std::f64::consts::PI,
            Expr::Neg(e) => -e.eval(s)?,
            Expr::Call(func, arg) => {
                let x = arg.eval(s)?;
                match func {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Abs => x.abs(),
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(EvalError::LogNonPositive { s, arg: x });
                        }
                        x.ln()
                    }
                }
            }
            Expr::Binary(op, a, b) => {
                let x = a.eval(s)?;
                let y = b.eval(s)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(EvalError::DivisionByZero { s });
                        }
                        x / y
                    }
                    BinOp::Pow => pow(x, y, s)?,
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite { s })
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Binary(BinOp::Pow, ..) => 4,
            Expr::Num(_) | Expr::Var | Expr::Pi | Expr::Call(..) => 5,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, child: &Expr, min_prec: u8) -> fmt::Result {
        if child.precedence() < min_prec {
            write!(f, "({child})")
        } else {
            write!(f, "{child}")
        }
    }
}

fn pow(x: f64, y: f64, s: f64) -> Result<f64, EvalError> {
    if y.fract() == 0.0 && y.abs() <= 64.0 {
        if x == 0.0 && y < 0.0 {
            return Err(EvalError::DivisionByZero { s });
        }
        return Ok(x.powi(y as i32));
    }
    if x < 0.0 {
        return Err(EvalError::NegativeBase { s, base: x, exponent: y });
    }
    if x == 0.0 && y < 0.0 {
        return Err(EvalError::DivisionByZero { s });
    }
    Ok(x.powf(y))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Debug formatting of f64 is the shortest round-tripping form.
            Expr::Num(x) => write!(f, "{x:?}"),
            Expr::Var => write!(f, "s"),
            Expr::Pi => write!(f, "pi"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                self.write_child(f, e, 3)
            }
            Expr::Call(func, arg) => write!(f, "{}({arg})", func.name()),
            Expr::Binary(op, a, b) => {
                let (sym, prec) = match op {
                    BinOp::Add => (" + ", 1),
                    BinOp::Sub => (" - ", 1),
                    BinOp::Mul => ("*", 2),
                    BinOp::Div => ("/", 2),
                    BinOp::Pow => ("^", 4),
                };
                if *op == BinOp::Pow {
                    // base must be atomic; exponent may be any unary-level term
                    self.write_child(f, a, 5)?;
                    write!(f, "{sym}")?;
                    self.write_child(f, b, 3)
                } else {
                    self.write_child(f, a, prec)?;
                    write!(f, "{sym}")?;
                    self.write_child(f, b, prec + 1)
                }
            }
        }
    }
}
