//! Prime-field arithmetic, points of `F_q^r`, univariate interpolation and
//! dense linear solving over `F_q`.
//!
//! Only prime moduli are supported. Every [`FieldElement`] carries its modulus so
//! that mixing elements of different fields is caught at runtime; the checked
//! operations (`checked_add`, `checked_mul`, `inv`, ...) report such mistakes as
//! [`FieldError`], while the `std::ops` impls panic on them.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest modulus accepted. Keeps every product inside a `u64`.
pub const MAX_MODULUS: u32 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("modulus {0} is not a prime in [2, {MAX_MODULUS}]")]
    NotPrime(u32),
    #[error("value {value} out of range for modulus {modulus}")]
    OutOfRange { value: u32, modulus: u32 },
    #[error("modulus mismatch: {0} vs {1}")]
    ModulusMismatch(u32, u32),
    #[error("zero has no multiplicative inverse")]
    InverseOfZero,
    #[error("duplicate interpolation abscissa {0}")]
    DuplicateAbscissa(u32),
    #[error("interpolation abscissa must be nonzero")]
    ZeroAbscissa,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample at a={a} is inconsistent with the degree-{deg} interpolant")]
    InconsistentSample { a: u32, deg: usize },
    #[error("singular matrix")]
    Singular,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, FieldError>;

pub fn is_prime(q: u32) -> bool {
    if q < 2 {
        return false;
    }
    let mut d = 2u32;
    while d * d <= q {
        if q.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// Validates `q` as a supported prime modulus.
pub fn check_modulus(q: u32) -> Result<u32> {
    if q > MAX_MODULUS || !is_prime(q) {
        return Err(FieldError::NotPrime(q));
    }
    Ok(q)
}

/// An element of the prime field `F_q`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FieldElement {
    value: u32,
    modulus: u32,
}

impl FieldElement {
    /// Builds `value mod q`, checking that `q` is prime.
    pub fn new(value: u64, q: u32) -> Result<Self> {
        check_modulus(q)?;
        Ok(Self::reduce(value, q))
    }

    /// Builds an element from an already reduced value.
    pub fn from_canonical(value: u32, q: u32) -> Result<Self> {
        check_modulus(q)?;
        if value >= q {
            return Err(FieldError::OutOfRange { value, modulus: q });
        }
        Ok(Self { value, modulus: q })
    }

    // Callers guarantee `q` was validated.
    pub(crate) fn reduce(value: u64, q: u32) -> Self {
        Self {
            value: (value % q as u64) as u32,
            modulus: q,
        }
    }

    pub fn zero(q: u32) -> Self {
        Self { value: 0, modulus: q }
    }

    pub fn one(q: u32) -> Self {
        Self::reduce(1, q)
    }

    pub fn value(self) -> u32 {
        self.value
    }

    pub fn modulus(self) -> u32 {
        self.modulus
    }

    pub fn is_zero(self) -> bool {
        self.value == 0
    }

    fn same_field(self, other: Self) -> Result<()> {
        if self.modulus != other.modulus {
            return Err(FieldError::ModulusMismatch(self.modulus, other.modulus));
        }
        Ok(())
    }

    pub fn checked_add(self, other: Self) -> Result<Self> {
        self.same_field(other)?;
        Ok(Self::reduce(self.value as u64 + other.value as u64, self.modulus))
    }

    pub fn checked_sub(self, other: Self) -> Result<Self> {
        self.same_field(other)?;
        let q = self.modulus as u64;
        Ok(Self::reduce(self.value as u64 + q - other.value as u64, self.modulus))
    }

    pub fn checked_mul(self, other: Self) -> Result<Self> {
        self.same_field(other)?;
        Ok(Self::reduce(self.value as u64 * other.value as u64, self.modulus))
    }

    pub fn pow(self, mut exp: u64) -> Self {
        let q = self.modulus as u64;
        let mut base = self.value as u64;
        let mut acc = 1u64 % q;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base % q;
            }
            base = base * base % q;
            exp >>= 1;
        }
        Self::reduce(acc, self.modulus)
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(self) -> Result<Self> {
        if self.value == 0 {
            return Err(FieldError::InverseOfZero);
        }
        Ok(self.pow(self.modulus as u64 - 2))
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(mod {})", self.value, self.modulus)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl Add for FieldElement {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.checked_add(rhs).expect("field add across moduli")
    }
}

impl Sub for FieldElement {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.checked_sub(rhs).expect("field sub across moduli")
    }
}

impl Mul for FieldElement {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.checked_mul(rhs).expect("field mul across moduli")
    }
}

impl Neg for FieldElement {
    type Output = Self;
    fn neg(self) -> Self {
        Self::zero(self.modulus) - self
    }
}

/// A point of `F_q^r`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FPoint {
    coords: Vec<FieldElement>,
}

impl FPoint {
    pub fn new(coords: Vec<FieldElement>) -> Result<Self> {
        if let Some(first) = coords.first() {
            let q = first.modulus();
            if let Some(bad) = coords.iter().find(|c| c.modulus() != q) {
                return Err(FieldError::ModulusMismatch(q, bad.modulus()));
            }
        }
        Ok(Self { coords })
    }

    /// Builds a point from raw coordinate values, each reduced mod `q`.
    pub fn from_values(values: &[u32], q: u32) -> Result<Self> {
        check_modulus(q)?;
        Ok(Self {
            coords: values
                .iter()
                .map(|&v| FieldElement::reduce(v as u64, q))
                .collect(),
        })
    }

    pub fn zero(r: usize, q: u32) -> Self {
        Self {
            coords: vec![FieldElement::zero(q); r],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[FieldElement] {
        &self.coords
    }

    pub fn values(&self) -> Vec<u32> {
        self.coords.iter().map(|c| c.value()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|c| c.is_zero())
    }

    /// `self + a * dir`
    pub fn along(&self, a: FieldElement, dir: &FPoint) -> FPoint {
        assert_eq!(self.dim(), dir.dim(), "point dimension mismatch");
        FPoint {
            coords: self
                .coords
                .iter()
                .zip(&dir.coords)
                .map(|(&s, &x)| s + a * x)
                .collect(),
        }
    }
}

/// A univariate polynomial, coefficients in ascending degree order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniPoly {
    coeffs: Vec<FieldElement>,
    modulus: u32,
}

impl UniPoly {
    pub fn new(mut coeffs: Vec<FieldElement>, q: u32) -> Result<Self> {
        check_modulus(q)?;
        if let Some(bad) = coeffs.iter().find(|c| c.modulus() != q) {
            return Err(FieldError::ModulusMismatch(q, bad.modulus()));
        }
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Ok(Self { coeffs, modulus: q })
    }

    pub fn coeffs(&self) -> &[FieldElement] {
        &self.coeffs
    }

    /// Degree, with `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn eval(&self, x: FieldElement) -> FieldElement {
        self.coeffs
            .iter()
            .rev()
            .fold(FieldElement::zero(self.modulus), |acc, &c| acc * x + c)
    }

    /// The unique polynomial of degree < `points.len()` through `points`,
    /// expanded into the monomial basis.
    pub fn interpolate(points: &[(FieldElement, FieldElement)], q: u32) -> Result<Self> {
        check_modulus(q)?;
        check_distinct(points.iter().map(|p| p.0), false)?;
        let zero = FieldElement::zero(q);
        let mut acc = vec![zero; points.len()];
        for (k, &(ak, yk)) in points.iter().enumerate() {
            // basis numerator prod_{m != k} (x - a_m), built incrementally
            let mut basis = vec![FieldElement::one(q)];
            let mut denom = FieldElement::one(q);
            for (m, &(am, _)) in points.iter().enumerate() {
                if m == k {
                    continue;
                }
                let mut next = vec![zero; basis.len() + 1];
                for (d, &c) in basis.iter().enumerate() {
                    next[d + 1] = next[d + 1] + c;
                    next[d] = next[d] - c * am;
                }
                basis = next;
                denom = denom * (ak - am);
            }
            let scale = yk * denom.inv()?;
            for (d, &c) in basis.iter().enumerate() {
                acc[d] = acc[d] + c * scale;
            }
        }
        Self::new(acc, q)
    }
}

fn check_distinct(abscissae: impl Iterator<Item = FieldElement>, forbid_zero: bool) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for a in abscissae {
        if forbid_zero && a.is_zero() {
            return Err(FieldError::ZeroAbscissa);
        }
        if !seen.insert(a.value()) {
            return Err(FieldError::DuplicateAbscissa(a.value()));
        }
    }
    Ok(())
}

/// Evaluates at `x` the Lagrange interpolant through `basis`.
fn lagrange_eval(basis: &[(FieldElement, FieldElement)], x: FieldElement) -> Result<FieldElement> {
    let q = x.modulus();
    let mut acc = FieldElement::zero(q);
    for (k, &(ak, yk)) in basis.iter().enumerate() {
        let mut num = FieldElement::one(q);
        let mut den = FieldElement::one(q);
        for (m, &(am, _)) in basis.iter().enumerate() {
            if m != k {
                num = num.checked_mul(x.checked_sub(am)?)?;
                den = den.checked_mul(ak.checked_sub(am)?)?;
            }
        }
        acc = acc.checked_add(yk.checked_mul(num.checked_mul(den.inv()?)?)?)?;
    }
    Ok(acc)
}

/// Returns `h(0)` for the unique `h` of degree `<= deg_bound` through the first
/// `deg_bound + 1` samples. Any further samples must agree with `h`.
pub fn lagrange_at_zero(
    samples: &[(FieldElement, FieldElement)],
    deg_bound: usize,
) -> Result<FieldElement> {
    let needed = deg_bound + 1;
    if samples.len() < needed {
        return Err(FieldError::TooFewSamples {
            needed,
            got: samples.len(),
        });
    }
    let q = samples[0].0.modulus();
    for &(a, y) in samples {
        a.same_field(samples[0].0)?;
        y.same_field(samples[0].0)?;
    }
    check_distinct(samples.iter().map(|s| s.0), true)?;

    let (basis, surplus) = samples.split_at(needed);
    for &(a, y) in surplus {
        if lagrange_eval(basis, a)? != y {
            return Err(FieldError::InconsistentSample {
                a: a.value(),
                deg: deg_bound,
            });
        }
    }
    lagrange_eval(basis, FieldElement::zero(q))
}

/// Solves the square system `A x = b` by Gaussian elimination.
pub fn solve_linear(a: &[Vec<FieldElement>], b: &[FieldElement]) -> Result<Vec<FieldElement>> {
    let k = a.len();
    if b.len() != k || a.iter().any(|row| row.len() != k) {
        return Err(FieldError::Dimension(format!(
            "expected {k}x{k} matrix and length-{k} rhs"
        )));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut aug: Vec<Vec<FieldElement>> = a
        .iter()
        .zip(b)
        .map(|(row, &rhs)| {
            let mut r = row.clone();
            r.push(rhs);
            r
        })
        .collect();
    let q = aug[0][0].modulus();
    for row in &aug {
        for e in row {
            if e.modulus() != q {
                return Err(FieldError::ModulusMismatch(q, e.modulus()));
            }
        }
    }

    for col in 0..k {
        let pivot = (col..k)
            .find(|&r| !aug[r][col].is_zero())
            .ok_or(FieldError::Singular)?;
        aug.swap(col, pivot);
        let inv = aug[col][col].inv()?;
        for e in aug[col].iter_mut() {
            *e = *e * inv;
        }
        let pivot_row = aug[col].clone();
        for (r, row) in aug.iter_mut().enumerate() {
            if r == col || row[col].is_zero() {
                continue;
            }
            let factor = row[col];
            for (e, &p) in row.iter_mut().zip(&pivot_row) {
                *e = *e - factor * p;
            }
        }
    }
    Ok(aug.into_iter().map(|row| row[k]).collect())
}

/// Multiplies `A x`.
pub fn mat_vec(a: &[Vec<FieldElement>], x: &[FieldElement]) -> Vec<FieldElement> {
    a.iter()
        .map(|row| {
            row.iter()
                .zip(x)
                .fold(FieldElement::zero(x[0].modulus()), |acc, (&m, &v)| acc + m * v)
        })
        .collect()
}
