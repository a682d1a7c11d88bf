//! Scalar values and operations shared by both engines, so that the columnar
//! engine and the materializing interpreter agree bit for bit.

use std::fmt;

use crate::query::{BinOp, CmpOp};

use super::ExecError;

#[derive(Debug, Clone, Copy)]
pub enum Scalar {
    Int(i64),
    Float(f64),
    Bool(bool),
    None,
}

impl PartialEq for Scalar {
    /// Bitwise for floats: used to compare sinks, not program values.
    fn eq(&self, other: &Scalar) -> bool {
        match (self, other) {
            (Scalar::Int(a), Scalar::Int(b)) => a == b,
            (Scalar::Float(a), Scalar::Float(b)) => a.to_bits() == b.to_bits(),
            (Scalar::Bool(a), Scalar::Bool(b)) => a == b,
            (Scalar::None, Scalar::None) => true,
            _ => false,
        }
    }
}

impl fmt::Display for Scalar {
    /// Sink text form: floats carry 17 significant digits.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Int(i) => write!(f, "{i}"),
            Scalar::Float(x) if x.is_finite() => write!(f, "{x:.16e}"),
            Scalar::Float(x) if x.is_nan() => f.write_str("nan"),
            Scalar::Float(x) => f.write_str(if *x > 0.0 { "inf" } else { "-inf" }),
            Scalar::Bool(b) => f.write_str(if *b { "True" } else { "False" }),
            Scalar::None => f.write_str("None"),
        }
    }
}

/// Builtin math functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MathFn {
    Sqrt,
    Cos,
    Sin,
    Cosh,
    Sinh,
    Exp,
    Log,
    Abs,
}

impl MathFn {
    pub const ALL: [MathFn; 8] =
        [MathFn::Sqrt, MathFn::Cos, MathFn::Sin, MathFn::Cosh, MathFn::Sinh, MathFn::Exp, MathFn::Log, MathFn::Abs];

    pub fn name(self) -> &'static str {
        match self {
            MathFn::Sqrt => "sqrt",
            MathFn::Cos => "cos",
            MathFn::Sin => "sin",
            MathFn::Cosh => "cosh",
            MathFn::Sinh => "sinh",
            MathFn::Exp => "exp",
            MathFn::Log => "log",
            MathFn::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<MathFn> {
        MathFn::ALL.into_iter().find(|m| m.name() == name)
    }
}

/// Kind bits for runtime isinstance checks on scalars.
pub mod kind {
    pub const INT: u8 = 1;
    pub const FLOAT: u8 = 2;
    pub const BOOL: u8 = 4;
    pub const NONE: u8 = 8;
}

impl Scalar {
    pub fn type_name(&self) -> &'static str {
        match self {
            Scalar::Int(_) => "int",
            Scalar::Float(_) => "float",
            Scalar::Bool(_) => "bool",
            Scalar::None => "NoneType",
        }
    }

    pub fn kind_bit(&self) -> u8 {
        match self {
            Scalar::Int(_) => kind::INT,
            Scalar::Float(_) => kind::FLOAT,
            Scalar::Bool(_) => kind::BOOL,
            Scalar::None => kind::NONE,
        }
    }

    pub fn truthy(&self) -> bool {
        match *self {
            Scalar::Int(i) => i != 0,
            Scalar::Float(x) => x != 0.0,
            Scalar::Bool(b) => b,
            Scalar::None => false,
        }
    }

    /// The value as a list index.
    #[inline]
    pub fn as_index(&self) -> Result<i64, ExecError> {
        match *self {
            Scalar::Int(i) => Ok(i),
            other => Err(ExecError::Type(format!("indices must be integers, not {}", other.type_name()))),
        }
    }

    fn number(&self, op: &str) -> Result<Num, ExecError> {
        match *self {
            Scalar::Int(i) => Ok(Num::I(i)),
            Scalar::Float(x) => Ok(Num::F(x)),
            other => Err(ExecError::Type(format!("unsupported operand type for {op}: {}", other.type_name()))),
        }
    }
}

#[derive(Clone, Copy)]
enum Num {
    I(i64),
    F(f64),
}

impl Num {
    fn f(self) -> f64 {
        match self {
            Num::I(i) => i as f64,
            Num::F(x) => x,
        }
    }
}

fn overflow() -> ExecError {
    ExecError::Overflow("integer result does not fit in 64 bits".into())
}

fn zero_division() -> ExecError {
    ExecError::ZeroDivision("division by zero".into())
}

#[inline]
pub fn binary(op: BinOp, a: Scalar, b: Scalar) -> Result<Scalar, ExecError> {
    if let (Scalar::Float(x), Scalar::Float(y)) = (a, b) {
        match op {
            BinOp::Add => return Ok(Scalar::Float(x + y)),
            BinOp::Sub => return Ok(Scalar::Float(x - y)),
            BinOp::Mul => return Ok(Scalar::Float(x * y)),
            _ => {}
        }
    }
    let sym = op.symbol();
    let (a, b) = (a.number(sym)?, b.number(sym)?);
    Ok(match (op, a, b) {
        (BinOp::Add, Num::I(x), Num::I(y)) => Scalar::Int(x.checked_add(y).ok_or_else(overflow)?),
        (BinOp::Sub, Num::I(x), Num::I(y)) => Scalar::Int(x.checked_sub(y).ok_or_else(overflow)?),
        (BinOp::Mul, Num::I(x), Num::I(y)) => Scalar::Int(x.checked_mul(y).ok_or_else(overflow)?),
        (BinOp::Add, x, y) => Scalar::Float(x.f() + y.f()),
        (BinOp::Sub, x, y) => Scalar::Float(x.f() - y.f()),
        (BinOp::Mul, x, y) => Scalar::Float(x.f() * y.f()),
        (BinOp::Div, x, y) => {
            if y.f() == 0.0 {
                return Err(zero_division());
            }
            Scalar::Float(x.f() / y.f())
        }
        (BinOp::FloorDiv, Num::I(x), Num::I(y)) => {
            if y == 0 {
                return Err(zero_division());
            }
            let q = x.checked_div(y).ok_or_else(overflow)?;
            Scalar::Int(if (x % y != 0) && ((x < 0) != (y < 0)) { q - 1 } else { q })
        }
        (BinOp::FloorDiv, x, y) => Scalar::Float(float_divmod(x.f(), y.f())?.0),
        (BinOp::Mod, Num::I(x), Num::I(y)) => {
            if y == 0 {
                return Err(zero_division());
            }
            let r = x.checked_rem(y).ok_or_else(overflow)?;
            Scalar::Int(if r != 0 && ((r < 0) != (y < 0)) { r + y } else { r })
        }
        (BinOp::Mod, x, y) => Scalar::Float(float_divmod(x.f(), y.f())?.1),
        (BinOp::Pow, Num::I(x), Num::I(y)) if y >= 0 => {
            let e = u32::try_from(y).map_err(|_| overflow())?;
            Scalar::Int(x.checked_pow(e).ok_or_else(overflow)?)
        }
        (BinOp::Pow, x, y) => {
            let (x, y) = (x.f(), y.f());
            if x == 0.0 && y < 0.0 {
                return Err(ExecError::ZeroDivision("0.0 cannot be raised to a negative power".into()));
            }
            if x < 0.0 && y.fract() != 0.0 && y.is_finite() {
                return Err(ExecError::Value("negative number raised to a fractional power".into()));
            }
            let r = x.powf(y);
            if r.is_infinite() && x.is_finite() && y.is_finite() {
                return Err(ExecError::Overflow("numerical result out of range".into()));
            }
            Scalar::Float(r)
        }
    })
}

/// Floored division and modulo with the sign conventions of the host
/// language the queries imitate.
fn float_divmod(x: f64, y: f64) -> Result<(f64, f64), ExecError> {
    if y == 0.0 {
        return Err(ExecError::ZeroDivision("float division by zero".into()));
    }
    let mut m = x % y;
    let mut div = (x - m) / y;
    if m != 0.0 {
        if (y < 0.0) != (m < 0.0) {
            m += y;
            div -= 1.0;
        }
    } else {
        m = 0.0f64.copysign(y);
    }
    let floordiv = if div != 0.0 {
        let mut fd = div.floor();
        if div - fd > 0.5 {
            fd += 1.0;
        }
        fd
    } else {
        0.0f64.copysign(x / y)
    };
    Ok((floordiv, m))
}

#[inline]
pub fn compare(op: CmpOp, a: Scalar, b: Scalar) -> Result<Scalar, ExecError> {
    if let (Scalar::Float(x), Scalar::Float(y)) = (a, b) {
        return Ok(Scalar::Bool(match op {
            CmpOp::Eq => x == y,
            CmpOp::Ne => x != y,
            CmpOp::Lt => x < y,
            CmpOp::Le => x <= y,
            CmpOp::Gt => x > y,
            CmpOp::Ge => x >= y,
            CmpOp::Is | CmpOp::IsNot => return Err(ExecError::Type("identity comparison of numbers".into())),
        }));
    }
    match op {
        CmpOp::Eq | CmpOp::Ne => {
            let eq = match (a, b) {
                (Scalar::Bool(x), Scalar::Bool(y)) => x == y,
                (Scalar::None, Scalar::None) => true,
                (Scalar::Bool(_) | Scalar::None, _) | (_, Scalar::Bool(_) | Scalar::None) => false,
                (Scalar::Int(x), Scalar::Int(y)) => x == y,
                (x, y) => x.number("==")?.f() == y.number("==")?.f(),
            };
            Ok(Scalar::Bool(if op == CmpOp::Eq { eq } else { !eq }))
        }
        CmpOp::Is | CmpOp::IsNot => Err(ExecError::Type("identity comparison of numbers".into())),
        _ => {
            let sym = op.symbol();
            let r = match (a.number(sym)?, b.number(sym)?) {
                (Num::I(x), Num::I(y)) => ordering(op, x.cmp(&y)),
                (x, y) => {
                    let (x, y) = (x.f(), y.f());
                    match op {
                        CmpOp::Lt => x < y,
                        CmpOp::Le => x <= y,
                        CmpOp::Gt => x > y,
                        _ => x >= y,
                    }
                }
            };
            Ok(Scalar::Bool(r))
        }
    }
}

fn ordering(op: CmpOp, o: std::cmp::Ordering) -> bool {
    use std::cmp::Ordering::*;
    match op {
        CmpOp::Lt => o == Less,
        CmpOp::Le => o != Greater,
        CmpOp::Gt => o == Greater,
        _ => o != Less,
    }
}

pub fn negate(a: Scalar) -> Result<Scalar, ExecError> {
    match a.number("unary -")? {
        Num::I(i) => i.checked_neg().map(Scalar::Int).ok_or_else(overflow),
        Num::F(x) => Ok(Scalar::Float(-x)),
    }
}

#[inline]
pub fn math(f: MathFn, a: Scalar) -> Result<Scalar, ExecError> {
    let n = a.number(f.name())?;
    if f == MathFn::Abs {
        return match n {
            Num::I(i) => i.checked_abs().map(Scalar::Int).ok_or_else(overflow),
            Num::F(x) => Ok(Scalar::Float(x.abs())),
        };
    }
    let x = n.f();
    let domain = || ExecError::Value("math domain error".into());
    let r = match f {
        MathFn::Sqrt if x < 0.0 => return Err(domain()),
        MathFn::Sqrt => x.sqrt(),
        MathFn::Log if x <= 0.0 => return Err(domain()),
        MathFn::Log => x.ln(),
        MathFn::Cos | MathFn::Sin if x.is_infinite() => return Err(domain()),
        MathFn::Cos => x.cos(),
        MathFn::Sin => x.sin(),
        MathFn::Cosh => x.cosh(),
        MathFn::Sinh => x.sinh(),
        MathFn::Exp => x.exp(),
        MathFn::Abs => unreachable!("handled above"),
    };
    if r.is_infinite() && x.is_finite() {
        return Err(ExecError::Overflow("math range error".into()));
    }
    Ok(Scalar::Float(r))
}
