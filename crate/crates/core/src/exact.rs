//! Exact rational arithmetic helpers and an exact log-domain value type.
//!
//! All probabilities in this crate are `BigRational`; logarithms are taken
//! only at report boundaries. [`Bits`] keeps a logarithm exact by storing the
//! rational argument and a positive integer scale, so that quantities such as
//! `2 - 3 + log2(16/3)` collapse to the single exact pair `log2(8/3) / 1`.

use crate::error::{Error, Result};
use num::bigint::Sign;
use num::{BigInt, BigRational, BigUint, Integer, One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::fmt;

/// Parses an exact rational from `"num/den"`, an integer, or a finite decimal
/// such as `"0.25"`.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::parse("empty rational"));
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num
            .trim()
            .parse()
            .map_err(|_| Error::parse(format!("bad numerator in {s:?}")))?;
        let d: BigInt = den
            .trim()
            .parse()
            .map_err(|_| Error::parse(format!("bad denominator in {s:?}")))?;
        if d.is_zero() {
            return Err(Error::parse(format!("zero denominator in {s:?}")));
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::parse(format!("bad decimal {s:?}")));
        }
        let digits = format!(
            "{}{}",
            if int_part.is_empty() || int_part == "-" {
                format!("{int_part}0")
            } else {
                int_part.to_string()
            },
            frac_part
        );
        let n: BigInt = digits
            .parse()
            .map_err(|_| Error::parse(format!("bad decimal {s:?}")))?;
        let d = BigInt::from(10u32).pow(frac_part.len() as u32);
        return Ok(BigRational::new(n, d));
    }
    let n: BigInt = s
        .parse()
        .map_err(|_| Error::parse(format!("bad rational {s:?}")))?;
    Ok(BigRational::from_integer(n))
}

/// Canonical `"num/den"` rendering; integers render without the denominator.
pub fn format_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// log2 of a positive big integer, robust to values beyond f64 range.
fn log2_biguint(n: &BigUint) -> f64 {
    debug_assert!(!n.is_zero());
    let bits = n.bits();
    if bits <= 53 {
        return (n.to_u64().unwrap() as f64).log2();
    }
    // Keep the top 53 bits as a mantissa and account for the shift.
    let shift = bits - 53;
    let top = (n >> shift).to_u64().unwrap();
    (top as f64).log2() + shift as f64
}

/// log2 of a positive rational as f64 (report-boundary only).
pub fn log2_rational(r: &BigRational) -> f64 {
    assert!(
        r.is_positive(),
        "log2 of a non-positive rational: {}",
        format_rational(r)
    );
    log2_biguint(r.numer().magnitude()) - log2_biguint(r.denom().magnitude())
}

fn pow_rational(base: &BigRational, exp: u32) -> BigRational {
    let n = num::pow::pow(base.numer().clone(), exp as usize);
    let d = num::pow::pow(base.denom().clone(), exp as usize);
    BigRational::new(n, d)
}

fn pow_rational_signed(base: &BigRational, exp: &BigInt) -> Result<BigRational> {
    let mag = exp
        .magnitude()
        .to_u32()
        .ok_or_else(|| Error::validation("exponent too large for exact log arithmetic"))?;
    let p = pow_rational(base, mag);
    if exp.sign() == Sign::Minus {
        if p.is_zero() {
            return Err(Error::validation("negative power of zero"));
        }
        Ok(p.recip())
    } else {
        Ok(p)
    }
}

/// Exact log-domain quantity: `value = log2(arg) / scale` bits, with `arg > 0`
/// rational and `scale >= 1`. Sums, differences, rational multiples, and
/// comparisons stay exact; the float rendering happens only on demand.
#[derive(Clone, Debug)]
pub struct Bits {
    arg: BigRational,
    scale: u32,
}

impl Bits {
    pub fn new(arg: BigRational, scale: u32) -> Result<Self> {
        if !arg.is_positive() {
            return Err(Error::validation(format!(
                "log argument must be positive, got {}",
                format_rational(&arg)
            )));
        }
        if scale == 0 {
            return Err(Error::validation("log scale must be positive"));
        }
        Ok(Bits { arg, scale })
    }

    pub fn zero() -> Self {
        Bits {
            arg: BigRational::one(),
            scale: 1,
        }
    }

    /// `log2(m)` for a positive integer count.
    pub fn of_count(m: u64) -> Self {
        assert!(m > 0);
        Bits {
            arg: BigRational::from_integer(BigInt::from(m)),
            scale: 1,
        }
    }

    /// `log2(r)` for a positive rational.
    pub fn of_ratio(r: &BigRational) -> Result<Self> {
        Bits::new(r.clone(), 1)
    }

    /// `log2(r) / t`, the per-symbol form used for rate surrogates.
    pub fn per_symbol(r: &BigRational, t: u32) -> Result<Self> {
        Bits::new(r.clone(), t)
    }

    /// Exact integer multiple `k * self`; `k` may be negative.
    pub fn mul_int(&self, k: i64) -> Result<Self> {
        self.mul_ratio(&BigRational::from_integer(BigInt::from(k)))
    }

    /// Exact rational multiple `(p/q) * self`.
    pub fn mul_ratio(&self, r: &BigRational) -> Result<Self> {
        let arg = pow_rational_signed(&self.arg, r.numer())?;
        let q = r
            .denom()
            .to_u32()
            .ok_or_else(|| Error::validation("scale overflow in exact log arithmetic"))?;
        let scale = self
            .scale
            .checked_mul(q)
            .ok_or_else(|| Error::validation("scale overflow in exact log arithmetic"))?;
        Bits::new(arg, scale)
    }

    pub fn neg(&self) -> Self {
        Bits {
            arg: self.arg.recip(),
            scale: self.scale,
        }
    }

    pub fn add(&self, other: &Bits) -> Result<Self> {
        let l = (self.scale as u64).lcm(&(other.scale as u64));
        let l32 = u32::try_from(l)
            .map_err(|_| Error::validation("scale overflow in exact log arithmetic"))?;
        let a = pow_rational(&self.arg, (l / self.scale as u64) as u32);
        let b = pow_rational(&other.arg, (l / other.scale as u64) as u32);
        Bits::new(a * b, l32)
    }

    pub fn sub(&self, other: &Bits) -> Result<Self> {
        self.add(&other.neg())
    }

    /// Float rendering, the only lossy operation on this type.
    pub fn value(&self) -> f64 {
        log2_rational(&self.arg) / self.scale as f64
    }

    /// The exact `(argument, scale)` pair behind the logarithm.
    pub fn exact_parts(&self) -> (&BigRational, u32) {
        (&self.arg, self.scale)
    }

    /// `"log2(num/den)/scale"` rendering of the exact pair.
    pub fn exact_repr(&self) -> String {
        if self.scale == 1 {
            format!("log2({})", format_rational(&self.arg))
        } else {
            format!("log2({})/{}", format_rational(&self.arg), self.scale)
        }
    }

    /// Exact rational value when the argument is a power of two, e.g.
    /// `log2(8/1) = 3`. Returns `None` otherwise.
    pub fn as_exact_rational(&self) -> Option<BigRational> {
        let two = BigUint::from(2u32);
        let mut exp = BigInt::zero();
        let num = self.arg.numer().magnitude();
        let den = self.arg.denom().magnitude();
        for (mag, sign) in [(num, 1i64), (den, -1i64)] {
            if mag.is_one() {
                continue;
            }
            let bits = mag.bits() - 1;
            if &two.pow(bits as u32) != mag {
                return None;
            }
            exp += BigInt::from(sign * bits as i64);
        }
        Some(BigRational::new(exp, BigInt::from(self.scale)))
    }
}

impl PartialEq for Bits {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Bits {}

impl PartialOrd for Bits {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Bits {
    /// Exact comparison via cross-exponentiation:
    /// `log2(a)/s <= log2(b)/r  <=>  a^r <= b^s`.
    fn cmp(&self, other: &Self) -> Ordering {
        pow_rational(&self.arg, other.scale).cmp(&pow_rational(&other.arg, self.scale))
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.exact_repr(), format_bits_value(self.value()))
    }
}

/// Fixed 12-decimal rendering used in all reports for byte stability.
pub fn format_bits_value(v: f64) -> String {
    format!("{v:.12}")
}

// ---------------------------------------------------------------------------
// Rate expressions
// ---------------------------------------------------------------------------

/// Parses an externally supplied rate such as `"3 - 0.75*log2(3)"` into an
/// exact [`Bits`] value. Grammar: sums/differences of terms, each term a
/// product of rational literals and at most one `log2(rational)` factor.
pub fn parse_rate_expr(input: &str) -> Result<Bits> {
    let tokens = tokenize(input)?;
    let mut p = ExprParser { tokens, pos: 0 };
    let v = p.expr()?;
    if p.pos != p.tokens.len() {
        return Err(Error::parse(format!(
            "trailing input in rate expression {input:?}"
        )));
    }
    v.into_bits()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigRational),
    Log2,
    Plus,
    Minus,
    Star,
    LParen,
    RParen,
}

fn tokenize(input: &str) -> Result<Vec<Tok>> {
    let mut toks = Vec::new();
    let bytes = input.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' => i += 1,
            '+' => {
                toks.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                toks.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                toks.push(Tok::Star);
                i += 1;
            }
            '(' => {
                toks.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                toks.push(Tok::RParen);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len()
                    && matches!(bytes[i] as char, '0'..='9' | '.' | '/')
                {
                    i += 1;
                }
                toks.push(Tok::Num(parse_rational(&input[start..i])?));
            }
            'l' if input[i..].starts_with("log2") => {
                toks.push(Tok::Log2);
                i += 4;
            }
            _ => {
                return Err(Error::parse(format!(
                    "unexpected character {c:?} in rate expression"
                )))
            }
        }
    }
    Ok(toks)
}

/// Linear value `scalar + log` during expression evaluation.
struct LinVal {
    scalar: BigRational,
    log: Bits,
}

impl LinVal {
    fn scalar(r: BigRational) -> Self {
        LinVal {
            scalar: r,
            log: Bits::zero(),
        }
    }
    fn log(b: Bits) -> Self {
        LinVal {
            scalar: BigRational::zero(),
            log: b,
        }
    }
    fn into_bits(self) -> Result<Bits> {
        // scalar p/q bits = log2(2^p)/q.
        let two = BigRational::from_integer(BigInt::from(2));
        let p = pow_rational_signed(&two, self.scalar.numer())?;
        let q = self
            .scalar
            .denom()
            .to_u32()
            .ok_or_else(|| Error::validation("scalar denominator too large in rate expression"))?;
        self.log.add(&Bits::new(p, q)?)
    }
}

struct ExprParser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl ExprParser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }
    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }
    fn expect(&mut self, t: Tok) -> Result<()> {
        match self.bump() {
            Some(got) if got == t => Ok(()),
            got => Err(Error::parse(format!("expected {t:?}, got {got:?}"))),
        }
    }

    fn expr(&mut self) -> Result<LinVal> {
        let mut acc = self.term()?;
        while let Some(op) = self.peek() {
            let negate = match op {
                Tok::Plus => false,
                Tok::Minus => true,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            if negate {
                acc.scalar -= rhs.scalar;
                acc.log = acc.log.sub(&rhs.log)?;
            } else {
                acc.scalar += rhs.scalar;
                acc.log = acc.log.add(&rhs.log)?;
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<LinVal> {
        let mut factors = vec![self.factor()?];
        while matches!(self.peek(), Some(Tok::Star)) {
            self.bump();
            factors.push(self.factor()?);
        }
        // At most one log factor; the rest must be pure scalars.
        let mut coeff = BigRational::one();
        let mut log: Option<Bits> = None;
        for f in factors {
            if f.log == Bits::zero() {
                coeff *= f.scalar;
            } else if !f.scalar.is_zero() {
                return Err(Error::parse(
                    "cannot multiply a mixed scalar+log term in a rate expression",
                ));
            } else if log.is_some() {
                return Err(Error::parse(
                    "cannot multiply two log terms in a rate expression",
                ));
            } else {
                log = Some(f.log);
            }
        }
        Ok(match log {
            Some(l) => LinVal::log(l.mul_ratio(&coeff)?),
            None => LinVal::scalar(coeff),
        })
    }

    fn factor(&mut self) -> Result<LinVal> {
        match self.bump() {
            Some(Tok::Num(r)) => Ok(LinVal::scalar(r)),
            Some(Tok::Minus) => {
                let v = self.factor()?;
                Ok(LinVal {
                    scalar: -v.scalar,
                    log: v.log.neg(),
                })
            }
            Some(Tok::LParen) => {
                let v = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(v)
            }
            Some(Tok::Log2) => {
                self.expect(Tok::LParen)?;
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                if inner.log != Bits::zero() {
                    return Err(Error::parse("nested log2 in rate expression"));
                }
                Ok(LinVal::log(Bits::new(inner.scalar, 1)?))
            }
            got => Err(Error::parse(format!(
                "unexpected token {got:?} in rate expression"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    #[test]
    fn parse_forms() {
        assert_eq!(rat("3/4"), BigRational::new(3.into(), 4.into()));
        assert_eq!(rat("7"), BigRational::from_integer(7.into()));
        assert_eq!(rat("0.25"), rat("1/4"));
        assert_eq!(rat("0.1"), rat("1/10"));
        assert_eq!(rat("-0.5"), rat("-1/2"));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn format_round_trip() {
        for s in ["3/4", "-2/7", "5", "0"] {
            let r = rat(s);
            assert_eq!(rat(&format_rational(&r)), r);
        }
    }

    #[test]
    fn bits_algebra() {
        // 2 - 3 + log2(16/3) = log2(8/3)
        let two = Bits::of_count(4); // log2 4 = 2
        let three = Bits::of_count(8); // log2 8 = 3
        let corr = Bits::of_ratio(&rat("16/3")).unwrap();
        let total = two.sub(&three).unwrap().add(&corr).unwrap();
        assert_eq!(total, Bits::of_ratio(&rat("8/3")).unwrap());
        assert!((total.value() - (3.0 - 3.0f64.log2())).abs() < 1e-12);
    }

    #[test]
    fn bits_ordering_is_exact() {
        // log2(3) vs log2(9)/2 are equal; log2(3) < log2(10)/2.
        let a = Bits::of_count(3);
        let b = Bits::per_symbol(&rat("9"), 2).unwrap();
        let c = Bits::per_symbol(&rat("10"), 2).unwrap();
        assert_eq!(a, b);
        assert!(a < c);
    }

    #[test]
    fn bits_exact_rational_detection() {
        assert_eq!(Bits::of_count(8).as_exact_rational(), Some(rat("3")));
        assert_eq!(
            Bits::per_symbol(&rat("1/4"), 3)
                .unwrap()
                .as_exact_rational(),
            Some(rat("-2/3"))
        );
        assert_eq!(Bits::of_count(3).as_exact_rational(), None);
    }

    #[test]
    fn rate_expression_biased_example() {
        // 3 - (3/4) log2 3 = log2(4096/27)/4
        let v = parse_rate_expr("3 - 0.75*log2(3)").unwrap();
        assert_eq!(v, Bits::per_symbol(&rat("4096/27"), 4).unwrap());
        assert!((v.value() - (3.0 - 0.75 * 3.0f64.log2())).abs() < 1e-12);
        let w = parse_rate_expr("3 - 3/4 * log2(3)").unwrap();
        assert_eq!(v, w);
    }

    #[test]
    fn rate_expression_rejects_nonlinear() {
        assert!(parse_rate_expr("log2(3) * log2(3)").is_err());
        assert!(parse_rate_expr("log2(log2(4))").is_err());
        assert!(parse_rate_expr("2 +").is_err());
    }

    #[test]
    fn log2_of_huge_values() {
        let r = pow_rational(&rat("3"), 700);
        let b = Bits::new(r, 1).unwrap();
        assert!((b.value() - 700.0 * 3.0f64.log2()).abs() < 1e-6);
    }
}
