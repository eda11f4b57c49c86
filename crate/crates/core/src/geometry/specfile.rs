//! Text domain specifications: a library shape reference, or a list of chart
//! records whose graphs together form the boundary.
//!
//! ```text
//! # square with side 8 from corner and edge records
//! dim 2
//! lipschitz 1
//! radius 0.9
//! chart
//!   rotation 0.7071067811865476 -0.7071067811865476 0.7071067811865476 0.7071067811865476
//!   base 4 4
//!   radius 2.5
//!   expr -abs(y1)
//! end
//! ```
//!
//! Rotation rows are the tangent axes followed by the outward vertical; the
//! domain lies below each graph. Expressions use y1 (and y2 in three
//! dimensions), numbers, `pi`, + - * / ^, abs, sqrt, sin, cos, min, max and
//! parentheses.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector2};

use super::atlas::DomainAtlas;
use super::chart::{ChartFn, ChartJet, ImplicitChart, LevelSet, LipschitzChart, ShiftedChart};
use super::frame::{Point, ReferenceFrame, Tangent, TangentMatrix};
use super::index::PointIndex;
use super::shapes::{parse_shape_arg, shape_spec, BoundaryModel};
use crate::error::{Error, Result};

// ------------------------------------------------------------ jets

/// Value, gradient and Hessian in (y1, y2), propagated in forward mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: Vector2<f64>,
    pub h: TangentMatrix,
}

impl Jet {
    fn constant(v: f64) -> Self {
        Self { v, g: Vector2::zeros(), h: TangentMatrix::zeros() }
    }

    fn var(k: usize, y: &Tangent) -> Self {
        let mut g = Vector2::zeros();
        g[k] = 1.0;
        Self { v: y[k], g, h: TangentMatrix::zeros() }
    }

    /// f(self) given f, f', f''.
    fn chain(self, f: f64, d: f64, dd: f64) -> Self {
        Self { v: f, g: self.g * d, h: self.h * d + self.g * self.g.transpose() * dd }
    }

    fn add(self, o: Self) -> Self {
        Self { v: self.v + o.v, g: self.g + o.g, h: self.h + o.h }
    }

    fn sub(self, o: Self) -> Self {
        Self { v: self.v - o.v, g: self.g - o.g, h: self.h - o.h }
    }

    fn mul(self, o: Self) -> Self {
        Self {
            v: self.v * o.v,
            g: self.g * o.v + o.g * self.v,
            h: self.h * o.v + o.h * self.v + self.g * o.g.transpose() + o.g * self.g.transpose(),
        }
    }

    fn recip(self) -> Self {
        let v = self.v;
        self.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }

    fn pow(self, e: Self) -> Self {
        if e.g == Vector2::zeros() && e.h == TangentMatrix::zeros() {
            let p = e.v;
            let v = self.v;
            if p == 0.0 {
                return Self::constant(1.0);
            }
            return self.chain(v.powf(p), p * v.powf(p - 1.0), p * (p - 1.0) * v.powf(p - 2.0));
        }
        // a^b = exp(b ln a)
        let ln = self.chain(self.v.ln(), 1.0 / self.v, -1.0 / (self.v * self.v));
        let x = e.mul(ln);
        let ex = x.v.exp();
        x.chain(ex, ex, ex)
    }
}

// ------------------------------------------------------------ expressions

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Bin(char, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Abs,
    Sqrt,
    Sin,
    Cos,
    Min,
    Max,
}

impl Func {
    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

impl Expr {
    pub fn eval(&self, y: &Tangent) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(k) => y[*k],
            Expr::Neg(a) => -a.eval(y),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(y), b.eval(y));
                match op {
                    '+' => a + b,
                    '-' => a - b,
                    '*' => a * b,
                    '/' => a / b,
                    _ => a.powf(b),
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(y);
                match f {
                    Func::Abs => a.abs(),
                    Func::Sqrt => a.sqrt(),
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Min => a.min(args[1].eval(y)),
                    Func::Max => a.max(args[1].eval(y)),
                }
            }
        }
    }

    pub fn jet(&self, y: &Tangent) -> Jet {
        match self {
            Expr::Num(v) => Jet::constant(*v),
            Expr::Var(k) => Jet::var(*k, y),
            Expr::Neg(a) => {
                let j = a.jet(y);
                Jet { v: -j.v, g: -j.g, h: -j.h }
            }
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.jet(y), b.jet(y));
                match op {
                    '+' => a.add(b),
                    '-' => a.sub(b),
                    '*' => a.mul(b),
                    '/' => a.mul(b.recip()),
                    _ => a.pow(b),
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].jet(y);
                match f {
                    // one-sided derivative at kinks
                    Func::Abs => a.chain(a.v.abs(), if a.v < 0.0 { -1.0 } else { 1.0 }, 0.0),
                    Func::Sqrt => {
                        let s = a.v.sqrt();
                        a.chain(s, 0.5 / s, -0.25 / (s * a.v))
                    }
                    Func::Sin => a.chain(a.v.sin(), a.v.cos(), -a.v.sin()),
                    Func::Cos => a.chain(a.v.cos(), -a.v.sin(), -a.v.cos()),
                    Func::Min | Func::Max => {
                        let b = args[1].jet(y);
                        let first = if *f == Func::Min { a.v <= b.v } else { a.v >= b.v };
                        if first {
                            a
                        } else {
                            b
                        }
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

struct Lexer {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
}

fn perr(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, column, message: message.into() }
}

impl Lexer {
    /// `col0` is the 1-based column of the first character of `src`.
    fn new(src: &str, line: usize, col0: usize) -> Result<Self> {
        let chars: Vec<char> = src.chars().collect();
        let mut toks = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = col0 + i;
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
                let s: String = chars[start..i].iter().collect();
                let v = s.parse::<f64>().map_err(|_| perr(line, col, format!("bad number `{s}`")))?;
                toks.push((Tok::Num(v), col));
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                toks.push((Tok::Ident(chars[start..i].iter().collect()), col));
            } else if "+-*/^(),".contains(c) {
                toks.push((Tok::Op(c), col));
                i += 1;
            } else {
                return Err(perr(line, col, format!("unexpected character `{c}`")));
            }
        }
        toks.push((Tok::End, col0 + chars.len()));
        Ok(Self { toks, pos: 0, line })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn col(&self) -> usize {
        self.toks[self.pos].1
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if *self.peek() == Tok::Op(c) {
            self.next();
            Ok(())
        } else {
            Err(perr(self.line, self.col(), format!("expected `{c}`")))
        }
    }
}

struct Parser {
    lex: Lexer,
    vars: usize,
}

impl Parser {
    fn expr(&mut self) -> Result<Expr> {
        let mut a = self.term()?;
        while let Tok::Op(c @ ('+' | '-')) = *self.lex.peek() {
            self.lex.next();
            a = Expr::Bin(c, Box::new(a), Box::new(self.term()?));
        }
        Ok(a)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut a = self.unary()?;
        while let Tok::Op(c @ ('*' | '/')) = *self.lex.peek() {
            self.lex.next();
            a = Expr::Bin(c, Box::new(a), Box::new(self.unary()?));
        }
        Ok(a)
    }

    fn unary(&mut self) -> Result<Expr> {
        match *self.lex.peek() {
            Tok::Op('-') => {
                self.lex.next();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Op('+') => {
                self.lex.next();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if *self.lex.peek() == Tok::Op('^') {
            self.lex.next();
            let e = self.unary()?;
            return Ok(Expr::Bin('^', Box::new(base), Box::new(e)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let (line, col) = (self.lex.line, self.lex.col());
        match self.lex.next() {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.lex.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let func = match name.as_str() {
                    "abs" => Some(Func::Abs),
                    "sqrt" => Some(Func::Sqrt),
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "min" => Some(Func::Min),
                    "max" => Some(Func::Max),
                    _ => None,
                };
                if let Some(f) = func {
                    self.lex.expect('(')?;
                    let mut args = vec![self.expr()?];
                    while *self.lex.peek() == Tok::Op(',') {
                        self.lex.next();
                        args.push(self.expr()?);
                    }
                    if args.len() != f.arity() {
                        return Err(perr(line, col, format!("`{name}` takes {} argument(s)", f.arity())));
                    }
                    self.lex.expect(')')?;
                    return Ok(Expr::Call(f, args));
                }
                match name.as_str() {
                    "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                    "y1" => Ok(Expr::Var(0)),
                    "y2" if self.vars >= 2 => Ok(Expr::Var(1)),
                    _ => Err(perr(line, col, format!("unknown identifier `{name}`"))),
                }
            }
            Tok::End => Err(perr(line, col, "unexpected end of expression")),
            Tok::Op(c) => Err(perr(line, col, format!("unexpected `{c}`"))),
        }
    }
}

/// Parses an expression in `vars` tangential variables. `line` and `col0`
/// locate the expression in its file for error messages.
pub fn parse_expr(src: &str, vars: usize, line: usize, col0: usize) -> Result<Expr> {
    let mut p = Parser { lex: Lexer::new(src, line, col0)?, vars };
    let e = p.expr()?;
    if *p.lex.peek() != Tok::End {
        return Err(perr(line, p.lex.col(), "unexpected trailing input"));
    }
    Ok(e)
}

/// A chart given by an expression.
#[derive(Clone, Debug)]
pub struct ExprChart {
    pub expr: Expr,
}

impl ChartFn for ExprChart {
    fn value(&self, y: &Tangent) -> f64 {
        self.expr.eval(y)
    }

    fn jet(&self, y: &Tangent, order: usize) -> ChartJet {
        let j = self.expr.jet(y);
        ChartJet { value: j.v, grad: j.g, hess: (order >= 2).then_some(j.h) }
    }
}

// ------------------------------------------------------------ spec files

/// One chart record.
#[derive(Clone, Debug)]
pub struct ChartRecord {
    pub frame: ReferenceFrame,
    pub radius: f64,
    pub func: Arc<dyn ChartFn>,
    /// Expression text or shape reference, as written.
    pub source: String,
}

/// Library-shape boundary seen as a level set, negative inside.
#[derive(Debug)]
struct DepthLevel(Arc<dyn BoundaryModel>);

impl LevelSet for DepthLevel {
    fn level(&self, x: &Point) -> f64 {
        -self.0.depth(x)
    }

    fn level_grad(&self, x: &Point) -> Point {
        -self.0.depth_jet(x).1
    }

    fn level_hess(&self, x: &Point) -> Matrix3<f64> {
        -self.0.depth_jet(x).2
    }
}

/// A parsed specification.
#[derive(Clone, Debug)]
pub enum DomainSpec {
    Shape { name: String, args: String, epsilon0: Option<f64> },
    Charts { dim: usize, lipschitz: f64, radius: f64, smooth: bool, epsilon0: Option<f64>, records: Vec<ChartRecord> },
}

fn number(tok: &str, line: usize, col: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| perr(line, col, format!("expected a number, found `{tok}`")))
}

/// Splits a line into whitespace-separated words with 1-based columns.
fn words(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push((s + 1, &line[s..i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

enum Source {
    Expr(Expr),
    Model(Arc<dyn BoundaryModel>),
}

#[derive(Default)]
struct PendingRecord {
    rotation: Option<Vec<f64>>,
    base: Option<Vec<f64>>,
    radius: Option<f64>,
    func: Option<(Source, String)>,
    line: usize,
}

pub fn parse_spec(text: &str) -> Result<DomainSpec> {
    let mut dim = None;
    let mut lipschitz = None;
    let mut radius = None;
    let mut smooth = false;
    let mut epsilon0 = None;
    let mut shape: Option<(String, String)> = None;
    let mut records = Vec::new();
    let mut current: Option<PendingRecord> = None;
    let mut last_line = 0;
    for (k, raw) in text.lines().enumerate() {
        let ln = k + 1;
        last_line = ln;
        let line = raw.split('#').next().unwrap_or("");
        let w = words(line);
        let Some(&(col, key)) = w.first() else { continue };
        let rest = &w[1..];
        let nums = |n: usize| -> Result<Vec<f64>> {
            if rest.len() != n {
                return Err(perr(ln, col, format!("`{key}` expects {n} number(s), found {}", rest.len())));
            }
            rest.iter().map(|(c, t)| number(t, ln, *c)).collect()
        };
        if let Some(rec) = current.as_mut() {
            match key {
                "rotation" => {
                    let d = dim.ok_or_else(|| perr(ln, col, "`dim` must precede chart records"))?;
                    rec.rotation = Some(nums(d * d)?);
                }
                "base" => {
                    let d = dim.ok_or_else(|| perr(ln, col, "`dim` must precede chart records"))?;
                    rec.base = Some(nums(d)?);
                }
                "radius" => rec.radius = Some(nums(1)?[0]),
                "expr" => {
                    let d = dim.ok_or_else(|| perr(ln, col, "`dim` must precede chart records"))?;
                    let Some(&(c0, _)) = rest.first() else {
                        return Err(perr(ln, col, "missing expression"));
                    };
                    let src = line[c0 - 1..].trim_end();
                    let expr = parse_expr(src, d - 1, ln, c0)?;
                    rec.func = Some((Source::Expr(expr), src.to_string()));
                }
                "shape" => {
                    let Some(&(c0, _)) = rest.first() else {
                        return Err(perr(ln, col, "missing shape name"));
                    };
                    let arg = shape_arg(rest);
                    let (name, params) = parse_shape_arg(&arg).map_err(|e| perr(ln, c0, e.to_string()))?;
                    let spec = shape_spec(&name, &params).map_err(|e| perr(ln, c0, e.to_string()))?;
                    rec.func = Some((Source::Model(spec.model), arg));
                }
                "end" => {
                    let rec = current.take().unwrap();
                    records.push(finish_record(rec, dim.unwrap(), lipschitz)?);
                }
                other => return Err(perr(ln, col, format!("unknown chart field `{other}`"))),
            }
            continue;
        }
        match key {
            "dim" => {
                let d = nums(1)?[0];
                if d != 2.0 && d != 3.0 {
                    return Err(perr(ln, rest[0].0, "dim must be 2 or 3"));
                }
                dim = Some(d as usize);
            }
            "lipschitz" => lipschitz = Some(nums(1)?[0]),
            "radius" => radius = Some(nums(1)?[0]),
            "eps0" => epsilon0 = Some(nums(1)?[0]),
            "smooth" => {
                smooth = match rest.first().map(|t| t.1) {
                    Some("true") => true,
                    Some("false") => false,
                    _ => return Err(perr(ln, col, "`smooth` expects true or false")),
                }
            }
            "shape" => {
                let Some(&(c0, name)) = rest.first() else {
                    return Err(perr(ln, col, "missing shape name"));
                };
                let arg = shape_arg(rest);
                // validate now so that errors carry a location
                parse_shape_arg(&arg).map_err(|e| perr(ln, c0, e.to_string()))?;
                shape = Some((name.to_string(), arg));
            }
            "chart" => current = Some(PendingRecord { line: ln, ..Default::default() }),
            other => return Err(perr(ln, col, format!("unknown keyword `{other}`"))),
        }
    }
    if let Some(rec) = current {
        return Err(perr(last_line.max(rec.line), 1, "chart record is missing `end`"));
    }
    if let Some((name, args)) = shape {
        if !records.is_empty() {
            return Err(perr(1, 1, "a spec holds either a shape or chart records, not both"));
        }
        return Ok(DomainSpec::Shape { name, args, epsilon0 });
    }
    let dim = dim.ok_or_else(|| perr(last_line.max(1), 1, "missing `dim`"))?;
    let lipschitz = lipschitz.ok_or_else(|| perr(last_line.max(1), 1, "missing `lipschitz`"))?;
    let radius = radius.ok_or_else(|| perr(last_line.max(1), 1, "missing `radius`"))?;
    if records.is_empty() {
        return Err(perr(last_line.max(1), 1, "no chart records"));
    }
    Ok(DomainSpec::Charts { dim, lipschitz, radius, smooth, epsilon0, records })
}

/// `disk radius=4 lipschitz=0.2` as the `disk:radius=4,lipschitz=0.2` form.
fn shape_arg(words: &[(usize, &str)]) -> String {
    let args: Vec<&str> = words[1..].iter().map(|t| t.1).collect();
    if args.is_empty() {
        words[0].1.to_string()
    } else {
        format!("{}:{}", words[0].1, args.join(","))
    }
}

fn finish_record(rec: PendingRecord, dim: usize, lipschitz: Option<f64>) -> Result<ChartRecord> {
    let ln = rec.line;
    let rot = rec.rotation.ok_or_else(|| perr(ln, 1, "chart record without `rotation`"))?;
    let base = rec.base.ok_or_else(|| perr(ln, 1, "chart record without `base`"))?;
    let radius = rec.radius.ok_or_else(|| perr(ln, 1, "chart record without `radius`"))?;
    let (src, source) = rec.func.ok_or_else(|| perr(ln, 1, "chart record without `expr` or `shape`"))?;
    let mut m = Matrix3::identity();
    for r in 0..dim {
        for c in 0..dim {
            m[(r, c)] = rot[r * dim + c];
        }
    }
    let mut b = Point::zeros();
    for a in 0..dim {
        b[a] = base[a];
    }
    let frame = ReferenceFrame::new(m, b, dim).map_err(|e| perr(ln, 1, e.to_string()))?;
    if !(radius > 0.0) {
        return Err(perr(ln, 1, "chart radius must be positive"));
    }
    let func: Arc<dyn ChartFn> = match src {
        Source::Expr(expr) => Arc::new(ExprChart { expr }),
        Source::Model(model) => {
            if model.dim() != dim {
                return Err(perr(ln, 1, "shape dimension differs from `dim`"));
            }
            let ell = radius * (1.0 + lipschitz.unwrap_or(1.0));
            Arc::new(ImplicitChart { level: Arc::new(DepthLevel(model)), frame: frame.clone(), ell })
        }
    };
    Ok(ChartRecord { frame, radius, func, source })
}

// ------------------------------------------------------------ union model

/// Boundary formed by the graphs of the chart records over their windows.
/// Signed distances come from the nearest dense sample refined by
/// Gauss-Newton on the owning record's graph.
pub struct ChartUnion {
    dim: usize,
    records: Vec<ChartRecord>,
    /// (record, tangential coordinate) of each dense sample.
    owners: Vec<(usize, Tangent)>,
    points: Vec<Point>,
    normals: Vec<Point>,
    index: PointIndex,
    bbox: (Point, Point),
    diameter: f64,
    spacing: f64,
}

impl fmt::Debug for ChartUnion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChartUnion").field("dim", &self.dim).field("records", &self.records.len()).finish()
    }
}

impl ChartUnion {
    pub fn new(dim: usize, records: Vec<ChartRecord>) -> Result<Self> {
        let scale = records.iter().map(|r| r.radius).fold(f64::INFINITY, f64::min);
        let spacing = scale / if dim == 2 { 256.0 } else { 48.0 };
        let mut u = Self {
            dim,
            records,
            owners: Vec::new(),
            points: Vec::new(),
            normals: Vec::new(),
            index: PointIndex::new(&[Point::zeros()], dim),
            bbox: (Point::zeros(), Point::zeros()),
            diameter: 0.0,
            spacing,
        };
        let samples = u.owned_samples(spacing);
        if samples.is_empty() {
            return Err(Error::InvalidParameter("chart records produce no boundary samples".into()));
        }
        for (k, y, p, n) in samples {
            u.owners.push((k, y));
            u.points.push(p);
            u.normals.push(n);
        }
        u.index = PointIndex::new(&u.points, dim);
        let mut lo = Point::repeat(f64::INFINITY);
        let mut hi = Point::repeat(f64::NEG_INFINITY);
        for p in &u.points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        for a in dim..3 {
            lo[a] = 0.0;
            hi[a] = 0.0;
        }
        u.bbox = (lo, hi);
        u.diameter = crate::metrics::diameter(&u.points, dim);
        Ok(u)
    }

    fn graph(&self, k: usize, y: &Tangent) -> (Point, Point) {
        let r = &self.records[k];
        let j = r.func.jet(y, 1);
        let p = r.frame.to_world(y, j.value);
        let mut local = Point::zeros();
        local[0] = -j.grad.x;
        if self.dim == 3 {
            local[1] = -j.grad.y;
        }
        local[self.dim - 1] = 1.0;
        let n = r.frame.rotation().transpose() * local.normalize();
        (p, n)
    }

    /// Tangential margin of world point x in record k when x lies on its graph.
    fn margin_on(&self, k: usize, x: &Point) -> Option<f64> {
        let r = &self.records[k];
        let (y, yn) = r.frame.to_local(x);
        let m = r.radius - y.norm();
        (m > 0.0 && (r.func.value(&y) - yn).abs() < 1e-9 * (1.0 + r.radius)).then_some(m)
    }

    /// Samples of every record window; a sample is kept only by the record in
    /// which it has the largest margin, ties going to the lower index.
    fn owned_samples(&self, spacing: f64) -> Vec<(usize, Tangent, Point, Point)> {
        let mut out = Vec::new();
        for (k, r) in self.records.iter().enumerate() {
            let per = (2.0 * r.radius / spacing).ceil() as usize + 1;
            for y in super::chart::tangent_grid(self.dim, r.radius * (1.0 - 1e-9), per) {
                let (p, n) = self.graph(k, &y);
                let own = r.radius - y.norm();
                let beaten = (0..self.records.len())
                    .filter(|&j| j != k)
                    .any(|j| self.margin_on(j, &p).is_some_and(|m| m > own || (m == own && j < k)));
                if !beaten {
                    out.push((k, y, p, n));
                }
            }
        }
        out
    }

    /// Closest graph point of record k to x, from the starting coordinate y0.
    fn project(&self, k: usize, x: &Point, y0: Tangent) -> (f64, Tangent) {
        let r = &self.records[k];
        let (yx, yn) = r.frame.to_local(x);
        let dist = |y: &Tangent| ((y - yx).norm_squared() + (r.func.value(y) - yn).powi(2)).sqrt();
        let mut y = y0;
        let mut best = dist(&y);
        for _ in 0..20 {
            let j = r.func.jet(&y, 1);
            let res = j.value - yn;
            // minimize |y - yx|^2 + (phi(y) - yn)^2 by Gauss-Newton
            let a = TangentMatrix::identity() + j.grad * j.grad.transpose();
            let g = (y - yx) + j.grad * res;
            let mut a2 = a;
            if self.dim == 2 {
                a2[(1, 1)] = 1.0;
            }
            let Some(inv) = a2.try_inverse() else { break };
            let mut step = inv * g;
            if self.dim == 2 {
                step.y = 0.0;
            }
            let mut t = 1.0;
            let mut improved = false;
            while t > 1e-4 {
                let cand = y - step * t;
                if cand.norm() < r.radius {
                    let d = dist(&cand);
                    if d < best {
                        best = d;
                        y = cand;
                        improved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !improved || step.norm() * t < 1e-14 {
                break;
            }
        }
        (best, y)
    }
}

impl BoundaryModel for ChartUnion {
    fn dim(&self) -> usize {
        self.dim
    }

    fn depth(&self, x: &Point) -> f64 {
        let (i, d0) = self.index.nearest(x);
        let (k, y0) = self.owners[i];
        let (d, y) = self.project(k, x, y0);
        let d = d.min(d0);
        let r = &self.records[k];
        let (yx, yn) = r.frame.to_local(x);
        let inside = if yx.norm() < r.radius {
            r.func.value(&yx) - yn > 0.0
        } else {
            let (p, n) = self.graph(k, &y);
            n.dot(&(x - p)) < 0.0
        };
        if inside {
            d
        } else {
            -d
        }
    }

    fn sample_boundary(&self, spacing: f64) -> Vec<(Point, Point)> {
        self.owned_samples(spacing).into_iter().map(|(_, _, p, n)| (p, n)).collect()
    }

    fn chart_at(&self, p: &Point, radius: f64, lipschitz: f64) -> Result<LipschitzChart> {
        let mut best: Option<(usize, f64, Tangent)> = None;
        for (k, r) in self.records.iter().enumerate() {
            let (y, yn) = r.frame.to_local(p);
            if (r.func.value(&y) - yn).abs() > 1e-6 * (1.0 + r.radius) {
                continue;
            }
            let m = r.radius - y.norm();
            if best.as_ref().map_or(true, |b| m > b.1) {
                best = Some((k, m, y));
            }
        }
        let Some((k, m, y)) = best else {
            return Err(Error::Covering(format!("no chart record contains the boundary point {:?}", p.as_slice())));
        };
        if m < radius {
            return Err(Error::Covering(format!(
                "boundary point {:?} is only {m:.4} inside record {k}; need the atlas radius {radius}",
                p.as_slice()
            )));
        }
        let r = &self.records[k];
        let frame = ReferenceFrame::new(*r.frame.rotation(), *p, self.dim)?;
        let func = Arc::new(ShiftedChart::new(r.func.clone(), y));
        Ok(LipschitzChart { frame, radius, lipschitz, func })
    }

    fn bbox(&self) -> (Point, Point) {
        self.bbox
    }

    fn diameter(&self) -> f64 {
        self.diameter
    }

    fn length_scale(&self) -> f64 {
        self.spacing * 64.0
    }
}

/// Builds the atlas described by a spec.
pub fn load_spec(text: &str) -> Result<DomainAtlas> {
    match parse_spec(text)? {
        DomainSpec::Shape { name: _, args, epsilon0 } => {
            let (name, params) = parse_shape_arg(&args)?;
            let mut atlas = super::atlas::make_shape(&name, &params)?;
            if let Some(e) = epsilon0 {
                atlas.set_epsilon0(e)?;
            }
            Ok(atlas)
        }
        DomainSpec::Charts { dim, lipschitz, radius, smooth, epsilon0, records } => {
            let model = Arc::new(ChartUnion::new(dim, records)?);
            let mut atlas = DomainAtlas::from_model("spec", model, lipschitz, radius, smooth)?;
            if let Some(e) = epsilon0 {
                atlas.set_epsilon0(e)?;
            }
            Ok(atlas)
        }
    }
}

pub fn load_spec_file(path: &std::path::Path) -> Result<DomainAtlas> {
    load_spec(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Expr> {
        parse_expr(s, 2, 1, 1)
    }

    #[test]
    fn precedence_and_functions() {
        let y = Tangent::new(0.5, -2.0);
        let cases = [
            ("1 + 2 * 3", 7.0),
            ("2 ^ 3 ^ 2", 512.0),
            ("-2 ^ 2", -4.0),
            ("(1 + 2) * 3", 9.0),
            ("abs(y2) + sqrt(4)", 4.0),
            ("min(y1, y2) * max(1, 2)", -4.0),
            ("sin(0) + cos(0)", 1.0),
            ("1e-1 * 10", 1.0),
            ("y1 / 2 - y2", 2.25),
            ("2 * pi", 2.0 * std::f64::consts::PI),
        ];
        for (s, v) in cases {
            assert!((parse(s).unwrap().eval(&y) - v).abs() < 1e-12, "{s}");
        }
    }

    #[test]
    fn jets_match_differences() {
        let e = parse("sqrt(4 - y1^2 - y2^2) * sin(y1) + y1 * y2 / (1 + y2^2) + 2^y1").unwrap();
        let y = Tangent::new(0.3, -0.4);
        let j = e.jet(&y);
        assert!((j.v - e.eval(&y)).abs() < 1e-14);
        let h = 1e-5;
        for a in 0..2 {
            let mut d = Tangent::zeros();
            d[a] = h;
            let fd = (e.eval(&(y + d)) - e.eval(&(y - d))) / (2.0 * h);
            assert!((fd - j.g[a]).abs() < 1e-8);
            let gp = e.jet(&(y + d)).g;
            let gm = e.jet(&(y - d)).g;
            for b in 0..2 {
                assert!(((gp[b] - gm[b]) / (2.0 * h) - j.h[(a, b)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn errors_carry_locations() {
        match parse_expr("y1 + * 2", 1, 7, 6) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (7, 11)),
            other => panic!("{other:?}"),
        }
        match parse_expr("y1 $ 2", 1, 1, 1) {
            Err(Error::Parse { column, .. }) => assert_eq!(column, 4),
            other => panic!("{other:?}"),
        }
        assert!(parse_expr("y2", 1, 1, 1).is_err());
        assert!(parse_expr("min(1)", 1, 1, 1).is_err());
        assert!(parse_expr("(1 + 2", 1, 1, 1).is_err());
        let text = "dim 2\nlipschitz 1\nradius 0.5\nchart\n  rotation 1 0 0 1\n  base 0 0\n  radius 1\n  expr y1 ++ )\nend\n";
        match parse_spec(text) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (8, 14)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_spec("dim 4\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_spec("dim 2\nfoo 1\n"), Err(Error::Parse { line: 2, column: 1, .. })));
    }

    #[test]
    fn shape_reference() {
        let atlas = load_spec("shape disk radius=4 lipschitz=0.2\n").unwrap();
        assert_eq!(atlas.dim, 2);
        assert!((atlas.lipschitz() - 0.2).abs() < 1e-15);
        assert!(load_spec("shape blob\n").is_err());
    }
}
