//! Symbolic weight expressions.
//!
//! An expression is a finite sum of rational multiples of monomials
//! `h^a · Π_m W_m^{b_m} · Π Int_m[...]`. Every `Int_m[e]` stands for
//! `∫_0^u e(s) ⋆dW_m(s)` where `u` is the variable of the enclosing level, so
//! the same monomial type is reused at every nesting depth: at the top level
//! the variable is the step size `h` and `W_m` is the increment `ΔW_m = W_m(h)`,
//! inside an integral they are the integration variable `s` and `W_m(s)`.
//!
//! Text form: `1/3*Int0[Int1[s^4],s]`. At the top level the atoms print as
//! `h` and `dWm`, inside integrals as `s` and `Wm`; the parser accepts either
//! spelling at any depth. Factors inside `Int` brackets are separated by
//! commas and multiplied.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::numbers::{parse_rational, to_f64, Rational};

/// Calculus used to read `⋆dW`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Interpretation {
    Ito,
    Stratonovich,
}

impl std::str::FromStr for Interpretation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ito" | "itô" => Ok(Interpretation::Ito),
            "stratonovich" | "strat" => Ok(Interpretation::Stratonovich),
            _ => Err(Error::InvalidArgument(format!(
                "unknown interpretation '{s}' (ito|stratonovich)"
            ))),
        }
    }
}

impl fmt::Display for Interpretation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interpretation::Ito => "ito",
            Interpretation::Stratonovich => "stratonovich",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IterInt {
    pub color: u32,
    /// Monic integrand; its coefficient lives in the enclosing term.
    pub integrand: Monomial,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    pub h: u32,
    /// Powers of `W_m`, `m ≥ 1`.
    pub w: BTreeMap<u32, u32>,
    /// Sorted.
    pub ints: Vec<IterInt>,
}

impl Monomial {
    pub fn one() -> Monomial {
        Monomial::default()
    }

    pub fn is_one(&self) -> bool {
        self.h == 0 && self.w.is_empty() && self.ints.is_empty()
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut w = self.w.clone();
        for (&m, &p) in &other.w {
            *w.entry(m).or_insert(0) += p;
        }
        let mut ints = self.ints.clone();
        ints.extend(other.ints.iter().cloned());
        ints.sort();
        Monomial {
            h: self.h + other.h,
            w,
            ints,
        }
    }

    /// Colors of Wiener processes referenced anywhere inside.
    fn colors(&self, out: &mut Vec<u32>) {
        out.extend(self.w.keys().copied());
        for i in &self.ints {
            if i.color > 0 {
                out.push(i.color);
            }
            i.integrand.colors(out);
        }
    }

    fn factors(&self, top: bool) -> Vec<String> {
        let mut out = Vec::new();
        for i in &self.ints {
            let inner = i.integrand.factors(false);
            let inner = if inner.is_empty() {
                "1".to_string()
            } else {
                inner.join(",")
            };
            out.push(format!("Int{}[{}]", i.color, inner));
        }
        let var = if top { "h" } else { "s" };
        match self.h {
            0 => {}
            1 => out.push(var.to_string()),
            a => out.push(format!("{var}^{a}")),
        }
        let w = if top { "dW" } else { "W" };
        for (&m, &p) in &self.w {
            if p == 1 {
                out.push(format!("{w}{m}"));
            } else {
                out.push(format!("{w}{m}^{p}"));
            }
        }
        out
    }
}

/// Normalized weight expression.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct WeightExpr {
    terms: BTreeMap<Monomial, Rational>,
}

impl WeightExpr {
    pub fn zero() -> WeightExpr {
        WeightExpr::default()
    }

    pub fn one() -> WeightExpr {
        WeightExpr::constant(Rational::one())
    }

    pub fn constant(c: Rational) -> WeightExpr {
        WeightExpr::term(c, Monomial::one())
    }

    pub fn term(c: Rational, mono: Monomial) -> WeightExpr {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(mono, c);
        }
        WeightExpr { terms }
    }

    /// `h^a`.
    pub fn h_pow(a: u32) -> WeightExpr {
        WeightExpr::term(
            Rational::one(),
            Monomial {
                h: a,
                ..Monomial::default()
            },
        )
    }

    pub fn h() -> WeightExpr {
        WeightExpr::h_pow(1)
    }

    /// `W_m(h)`; `W_0(h) = h`.
    pub fn dw(m: u32) -> WeightExpr {
        WeightExpr::dw_pow(m, 1)
    }

    pub fn dw_pow(m: u32, p: u32) -> WeightExpr {
        if m == 0 {
            return WeightExpr::h_pow(p);
        }
        let mut mono = Monomial::one();
        if p > 0 {
            mono.w.insert(m, p);
        }
        WeightExpr::term(Rational::one(), mono)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scale(&self, c: &Rational) -> WeightExpr {
        if c.is_zero() {
            return WeightExpr::zero();
        }
        WeightExpr {
            terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect(),
        }
    }

    fn add_term(&mut self, mono: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(mono);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn pow(&self, k: u32) -> WeightExpr {
        let mut out = WeightExpr::one();
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// `∫_0^u e(s) ⋆dW_color(s)`, expanded by linearity.
    pub fn integrate(color: u32, integrand: &WeightExpr) -> WeightExpr {
        let mut out = WeightExpr::zero();
        for (mono, c) in &integrand.terms {
            for (m, v) in int_monomial(color, mono).terms {
                out.add_term(m, v * c);
            }
        }
        out
    }

    /// `Int_color[f_1, …, f_k]`.
    pub fn integrate_product(color: u32, factors: &[WeightExpr]) -> WeightExpr {
        let prod = factors.iter().fold(WeightExpr::one(), |acc, f| &acc * f);
        WeightExpr::integrate(color, &prod)
    }

    /// True if no Wiener process of positive color appears.
    pub fn is_deterministic(&self) -> bool {
        self.colors().is_empty()
    }

    pub fn colors(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for m in self.terms.keys() {
            m.colors(&mut out);
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Polynomial in `h` and `dW_m` (no iterated integrals left).
    pub fn is_polynomial(&self) -> bool {
        self.terms.keys().all(|m| m.ints.is_empty())
    }

    /// Evaluates a polynomial expression; `dw[m - 1]` is `ΔW_m`.
    pub fn eval_poly(&self, h: f64, dw: &[f64]) -> Result<f64> {
        let mut sum = 0.0;
        for (mono, c) in &self.terms {
            if !mono.ints.is_empty() {
                return Err(Error::NotPolynomial(self.to_string()));
            }
            let mut v = to_f64(c) * h.powi(mono.h as i32);
            for (&m, &p) in &mono.w {
                let x = dw.get(m as usize - 1).ok_or(Error::ColorMissing {
                    color: m,
                    available: dw.len() as u32,
                })?;
                v *= x.powi(p as i32);
            }
            sum += v;
        }
        Ok(sum)
    }

    /// The single rational coefficient of a term `c·h^a`, if the expression is one.
    pub fn as_h_power(&self) -> Option<(Rational, u32)> {
        if self.terms.len() != 1 {
            return None;
        }
        let (m, c) = self.terms.iter().next()?;
        if m.w.is_empty() && m.ints.is_empty() {
            Some((c.clone(), m.h))
        } else {
            None
        }
    }

    /// Rewrites `Int_m[W_m^k]` in closed form for the given calculus.
    /// In the Stratonovich case it equals `W_m^{k+1}/(k+1)`; the Itô case adds
    /// the correction `-(k/2) Int_0[W_m^{k-1}]`.
    pub fn simplify(&self, interp: Interpretation) -> WeightExpr {
        let mut out = WeightExpr::zero();
        for (mono, c) in &self.terms {
            let s = simplify_monomial(mono, interp);
            for (m, v) in s.terms {
                out.add_term(m, v * c);
            }
        }
        out
    }

    pub fn parse(s: &str) -> Result<WeightExpr> {
        Ok(RawExpr::parse(s)?.normalize())
    }
}

fn simplify_monomial(mono: &Monomial, interp: Interpretation) -> WeightExpr {
    let mut out = WeightExpr::term(
        Rational::one(),
        Monomial {
            h: mono.h,
            w: mono.w.clone(),
            ints: Vec::new(),
        },
    );
    for i in &mono.ints {
        let inner = simplify_monomial(&i.integrand, interp);
        let mut integral = WeightExpr::zero();
        for (m, c) in inner.terms {
            for (mm, v) in closed_form(i.color, &m, interp).terms {
                integral.add_term(mm, v * &c);
            }
        }
        out = &out * &integral;
    }
    out
}

fn closed_form(color: u32, mono: &Monomial, interp: Interpretation) -> WeightExpr {
    if color > 0 && mono.h == 0 && mono.ints.is_empty() && mono.w.len() == 1 {
        if let Some(&k) = mono.w.get(&color) {
            let mut out = WeightExpr::dw_pow(color, k + 1).scale(&Rational::new((1).into(), (k + 1).into()));
            if interp == Interpretation::Ito {
                let mut below = Monomial::one();
                if k > 1 {
                    below.w.insert(color, k - 1);
                }
                let lower = int_monomial(0, &below);
                out = &out - &lower.scale(&Rational::new(k.into(), 2.into()));
            }
            return out;
        }
    }
    int_monomial(color, mono)
}

/// Normalizing constructor for a single integral of a monic integrand.
fn int_monomial(color: u32, mono: &Monomial) -> WeightExpr {
    if mono.is_one() {
        return WeightExpr::dw(color);
    }
    if color == 0 && mono.w.is_empty() && mono.ints.is_empty() {
        let a = mono.h + 1;
        return WeightExpr::h_pow(a).scale(&Rational::new(1.into(), a.into()));
    }
    WeightExpr::term(
        Rational::one(),
        Monomial {
            ints: vec![IterInt {
                color,
                integrand: mono.clone(),
            }],
            ..Monomial::default()
        },
    )
}

impl Add for &WeightExpr {
    type Output = WeightExpr;
    fn add(self, rhs: &WeightExpr) -> WeightExpr {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl Sub for &WeightExpr {
    type Output = WeightExpr;
    fn sub(self, rhs: &WeightExpr) -> WeightExpr {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }
}

impl Mul for &WeightExpr {
    type Output = WeightExpr;
    fn mul(self, rhs: &WeightExpr) -> WeightExpr {
        let mut out = WeightExpr::zero();
        for (a, x) in &self.terms {
            for (b, y) in &rhs.terms {
                out.add_term(a.mul(b), x * y);
            }
        }
        out
    }
}

impl Neg for &WeightExpr {
    type Output = WeightExpr;
    fn neg(self) -> WeightExpr {
        self.scale(&-Rational::one())
    }
}

impl fmt::Display for WeightExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (k, (mono, c)) in self.terms.iter().enumerate() {
            let factors = mono.factors(true);
            let neg = c.is_negative();
            let abs = c.abs();
            let body = if factors.is_empty() {
                abs.to_string()
            } else if abs.is_one() {
                factors.join("*")
            } else {
                format!("{}*{}", abs, factors.join("*"))
            };
            match (k, neg) {
                (0, false) => write!(f, "{body}")?,
                (0, true) => write!(f, "-{body}")?,
                (_, false) => write!(f, " + {body}")?,
                (_, true) => write!(f, " - {body}")?,
            }
        }
        Ok(())
    }
}

/// Expression tree as written, before normalization.
#[derive(Clone, Debug, PartialEq)]
pub enum RawExpr {
    Const(Rational),
    /// Level variable (`h` or `s`) to a power.
    Var(u32),
    /// `W_m` (`dWm`) to a power, `m ≥ 1`.
    Wiener(u32, u32),
    Int(u32, Vec<RawExpr>),
    Sum(Vec<RawExpr>),
    Product(Vec<RawExpr>),
    Neg(Box<RawExpr>),
}

impl RawExpr {
    pub fn parse(input: &str) -> Result<RawExpr> {
        let mut p = ExprParser {
            input,
            bytes: input.as_bytes(),
            pos: 0,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.bytes.len() {
            return Err(p.error("trailing characters"));
        }
        Ok(e)
    }

    pub fn normalize(&self) -> WeightExpr {
        match self {
            RawExpr::Const(c) => WeightExpr::constant(c.clone()),
            RawExpr::Var(a) => WeightExpr::h_pow(*a),
            RawExpr::Wiener(m, p) => WeightExpr::dw_pow(*m, *p),
            RawExpr::Int(m, fs) => {
                let fs: Vec<WeightExpr> = fs.iter().map(RawExpr::normalize).collect();
                WeightExpr::integrate_product(*m, &fs)
            }
            RawExpr::Sum(xs) => xs.iter().fold(WeightExpr::zero(), |acc, x| &acc + &x.normalize()),
            RawExpr::Product(xs) => xs.iter().fold(WeightExpr::one(), |acc, x| &acc * &x.normalize()),
            RawExpr::Neg(x) => -&x.normalize(),
        }
    }

    /// Colors referenced, positive only.
    pub fn colors(&self) -> Vec<u32> {
        fn walk(e: &RawExpr, out: &mut Vec<u32>) {
            match e {
                RawExpr::Const(_) | RawExpr::Var(_) => {}
                RawExpr::Wiener(m, _) => out.push(*m),
                RawExpr::Int(m, xs) => {
                    if *m > 0 {
                        out.push(*m);
                    }
                    xs.iter().for_each(|x| walk(x, out));
                }
                RawExpr::Sum(xs) | RawExpr::Product(xs) => xs.iter().for_each(|x| walk(x, out)),
                RawExpr::Neg(x) => walk(x, out),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.sort_unstable();
        out.dedup();
        out
    }
}

struct ExprParser<'a> {
    input: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl ExprParser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Parse {
            input: self.input.to_string(),
            pos: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.input[self.pos..].starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn digits(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        self.input[start..self.pos].parse().ok()
    }

    fn index(&mut self) -> Result<u32> {
        self.digits().ok_or_else(|| self.error("expected an index"))
    }

    fn power(&mut self) -> Result<u32> {
        if self.eat("^") {
            self.skip_ws();
            self.digits().ok_or_else(|| self.error("expected an exponent"))
        } else {
            Ok(1)
        }
    }

    fn expr(&mut self) -> Result<RawExpr> {
        let mut terms = vec![self.term()?];
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    terms.push(self.term()?);
                }
                Some(b'-') => {
                    self.pos += 1;
                    terms.push(RawExpr::Neg(Box::new(self.term()?)));
                }
                _ => break,
            }
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            RawExpr::Sum(terms)
        })
    }

    fn term(&mut self) -> Result<RawExpr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(RawExpr::Neg(Box::new(self.term()?)));
        }
        let mut factors = vec![self.factor()?];
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    factors.push(self.factor()?);
                }
                Some(b'/') => {
                    self.pos += 1;
                    match self.factor()? {
                        RawExpr::Const(c) if !c.is_zero() => factors.push(RawExpr::Const(c.recip())),
                        _ => return Err(self.error("can only divide by a nonzero number")),
                    }
                }
                _ => break,
            }
        }
        Ok(if factors.len() == 1 {
            factors.pop().unwrap()
        } else {
            RawExpr::Product(factors)
        })
    }

    fn factor(&mut self) -> Result<RawExpr> {
        let c = self.peek().ok_or_else(|| self.error("unexpected end of expression"))?;
        match c {
            b'0'..=b'9' => {
                let start = self.pos;
                while self.pos < self.bytes.len()
                    && (self.bytes[self.pos].is_ascii_digit() || matches!(self.bytes[self.pos], b'.' | b'/'))
                {
                    self.pos += 1;
                }
                let text = &self.input[start..self.pos];
                let value = parse_rational(text).map_err(|_| self.error("malformed number"))?;
                Ok(RawExpr::Const(value))
            }
            b'(' => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(")") {
                    return Err(self.error("expected ')'"));
                }
                Ok(e)
            }
            _ if self.eat("Int") => {
                let m = self.index()?;
                if !self.eat("[") {
                    return Err(self.error("expected '['"));
                }
                let mut fs = vec![self.expr()?];
                loop {
                    if self.eat(",") {
                        fs.push(self.expr()?);
                    } else if self.eat("]") {
                        break;
                    } else {
                        return Err(self.error("expected ',' or ']'"));
                    }
                }
                Ok(RawExpr::Int(m, fs))
            }
            _ if self.eat("dW") || self.eat("W") => {
                let m = self.index()?;
                let p = self.power()?;
                Ok(if m == 0 { RawExpr::Var(p) } else { RawExpr::Wiener(m, p) })
            }
            b'h' | b's' | b't' => {
                self.pos += 1;
                let p = self.power()?;
                Ok(RawExpr::Var(p))
            }
            _ => Err(self.error("expected a number, h, s, dWm, Wm, Intm[...] or '('")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numbers::rational;

    fn p(s: &str) -> WeightExpr {
        WeightExpr::parse(s).unwrap()
    }

    #[test]
    fn deterministic_integrals_collapse() {
        assert_eq!(p("Int0[1]"), WeightExpr::h());
        assert_eq!(p("Int0[Int0[1]]"), WeightExpr::h_pow(2).scale(&rational(1, 2)));
        assert_eq!(p("Int0[Int0[Int0[1]]]").to_string(), "1/6*h^3");
        assert_eq!(p("Int0[s]*Int0[s]").to_string(), "1/4*h^4");
        assert_eq!(p("Int2[1]"), WeightExpr::dw(2));
        assert_eq!(p("h/2"), p("1/2*h"));
        assert!(WeightExpr::parse("h/dW1").is_err());
    }

    #[test]
    fn display_round_trip() {
        for s in [
            "1/3*Int0[Int1[s^4],s]",
            "3/8*h^2*dW1",
            "-1/2*dW1^2 + h",
            "0",
            "-2",
            "Int1[s,W1]*dW2",
        ] {
            let e = p(s);
            assert_eq!(e.to_string(), s);
            assert_eq!(p(&e.to_string()), e);
        }
    }

    #[test]
    fn linearity_and_merging() {
        assert_eq!(p("Int1[2*s + 3*s]"), p("5*Int1[s]"));
        assert_eq!(p("h*dW1 - dW1*h"), WeightExpr::zero());
        assert_eq!(p("(h + dW1)*(h - dW1)"), p("h^2 - dW1^2"));
    }

    #[test]
    fn closed_forms_depend_on_calculus() {
        let e = p("Int1[W1]");
        assert_eq!(e.simplify(Interpretation::Stratonovich), p("1/2*dW1^2"));
        assert_eq!(e.simplify(Interpretation::Ito), p("1/2*dW1^2 - 1/2*h"));
        let e = p("Int1[W1^2]");
        assert_eq!(e.simplify(Interpretation::Ito), p("1/3*dW1^3 - Int0[W1]"));
        // Nested: the inner closed form feeds the outer one.
        assert_eq!(
            p("Int1[Int1[W1]]").simplify(Interpretation::Stratonovich),
            p("1/6*dW1^3")
        );
        assert_eq!(p("Int1[s]").simplify(Interpretation::Ito), p("Int1[s]"));
    }

    #[test]
    fn polynomial_evaluation() {
        let e = p("3/8*h^2*dW1 + 1");
        assert!((e.eval_poly(0.5, &[2.0]).unwrap() - 1.1875).abs() < 1e-15);
        assert!(matches!(
            p("Int1[s]").eval_poly(1.0, &[1.0]),
            Err(Error::NotPolynomial(_))
        ));
        assert!(matches!(
            p("dW2").eval_poly(1.0, &[1.0]),
            Err(Error::ColorMissing { .. })
        ));
    }

    #[test]
    fn parse_errors() {
        for s in ["", "Int1[", "h^", "2*", "dW", "Int1[]", "h h", "x"] {
            assert!(WeightExpr::parse(s).is_err(), "{s:?}");
        }
    }
}
