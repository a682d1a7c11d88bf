use std::fmt;

/// 1-based source position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl Pos {
    pub const fn new(line: u32, col: u32) -> Pos {
        Pos { line, col }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub functions: Vec<FunctionDef>,
}

impl Program {
    /// The first definition is the per-event entry point.
    pub fn entry(&self) -> &FunctionDef {
        &self.functions[0]
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// Zeroes every position, for structural comparisons.
    pub fn clear_positions(&mut self) {
        for f in &mut self.functions {
            f.pos = Pos::default();
            f.body.iter_mut().for_each(Stmt::clear_positions);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    /// `a = e`, or tuple unpacking when there is more than one target.
    Assign { targets: Vec<String>, value: Expr },
    For { target: String, iter: Expr, body: Vec<Stmt> },
    If { cond: Expr, then: Vec<Stmt>, elifs: Vec<(Expr, Vec<Stmt>)>, orelse: Option<Vec<Stmt>> },
    Return(Option<Expr>),
    Emit(Expr),
    Expr(Expr),
}

impl Stmt {
    fn clear_positions(&mut self) {
        self.pos = Pos::default();
        let block = |b: &mut Vec<Stmt>| b.iter_mut().for_each(Stmt::clear_positions);
        match &mut self.kind {
            StmtKind::Assign { value, .. } => value.clear_positions(),
            StmtKind::For { iter, body, .. } => {
                iter.clear_positions();
                block(body);
            }
            StmtKind::If { cond, then, elifs, orelse } => {
                cond.clear_positions();
                block(then);
                for (c, b) in elifs {
                    c.clear_positions();
                    block(b);
                }
                if let Some(b) = orelse {
                    block(b);
                }
            }
            StmtKind::Return(e) => {
                if let Some(e) = e {
                    e.clear_positions();
                }
            }
            StmtKind::Emit(e) | StmtKind::Expr(e) => e.clear_positions(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    FloorDiv,
    Mod,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::FloorDiv => "//",
            BinOp::Mod => "%",
            BinOp::Pow => "**",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Is,
    IsNot,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Is => "is",
            CmpOp::IsNot => "is not",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Name(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    None,
    Str(String),
    Attribute(Box<Expr>, String),
    Subscript(Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Compare(CmpOp, Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Neg(Box<Expr>),
    Tuple(Vec<Expr>),
}

impl Expr {
    pub fn new(kind: ExprKind, pos: Pos) -> Expr {
        Expr { kind, pos }
    }

    fn clear_positions(&mut self) {
        self.pos = Pos::default();
        match &mut self.kind {
            ExprKind::Attribute(b, _) | ExprKind::Not(b) | ExprKind::Neg(b) => b.clear_positions(),
            ExprKind::Subscript(a, b)
            | ExprKind::Binary(_, a, b)
            | ExprKind::Compare(_, a, b)
            | ExprKind::And(a, b)
            | ExprKind::Or(a, b) => {
                a.clear_positions();
                b.clear_positions();
            }
            ExprKind::Call(_, args) | ExprKind::Tuple(args) => args.iter_mut().for_each(Expr::clear_positions),
            _ => {}
        }
    }
}
