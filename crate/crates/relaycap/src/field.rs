//! Arithmetic over GF(q) and matrices over it.
//!
//! Supported fields: prime fields GF(p) for any prime p, and binary
//! extensions GF(2^m) for m up to 16 with a reduction polynomial (a sensible
//! default is provided per degree, overridable). Elements are integers in
//! `[0, q)`; for extensions the base-2 digits of an element are its
//! polynomial coefficients.

use thiserror::Error;

/// Order cap. Keeps tables and exhaustive loops desk-sized.
pub const MAX_ORDER: u64 = 1 << 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FieldError {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("extension fields are only supported in characteristic 2 (got p={p}, m={m})")]
    UnsupportedExtension { p: u64, m: u32 },
    #[error("field order {0} exceeds the cap of 2^16")]
    OrderTooLarge(u64),
    #[error("degree must be at least 1")]
    ZeroDegree,
    #[error("reduction polynomial {poly:#b} is not irreducible of degree {m} over GF(2)")]
    ReduciblePolynomial { poly: u32, m: u32 },
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("element {0} is outside the field")]
    ElementOutOfRange(u64),
}

/// Default reduction polynomials for GF(2^m), m = 1..=16, low-weight and
/// irreducible. Index m-1; bit k is the coefficient of x^k.
const DEFAULT_POLYS: [u32; 16] = [
    0b10,                  // m=1: x (unused; GF(2) needs no reduction)
    0b111,                 // x^2 + x + 1
    0b1011,                // x^3 + x + 1
    0b1_0011,              // x^4 + x + 1
    0b10_0101,             // x^5 + x^2 + 1
    0b100_0011,            // x^6 + x + 1
    0b1000_1001,           // x^7 + x^3 + 1
    0b1_0001_1011,         // x^8 + x^4 + x^3 + x + 1
    0b10_0001_0001,        // x^9 + x^4 + 1
    0b100_0000_1001,       // x^10 + x^3 + 1
    0b1000_0000_0101,      // x^11 + x^2 + 1
    0b1_0000_0101_0011,    // x^12 + x^6 + x^4 + x + 1
    0b10_0000_0001_1011,   // x^13 + x^4 + x^3 + x + 1
    0b100_0100_0100_0011,  // x^14 + x^10 + x^6 + x + 1
    0b1000_0000_0000_0011, // x^15 + x + 1
    0b1_0001_0000_0000_1011, // x^16 + x^12 + x^3 + x + 1
];

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

/// Polynomial degree over GF(2); `deg(0)` is defined here as 0.
fn poly_deg(p: u32) -> u32 {
    31u32.saturating_sub(p.leading_zeros())
}

/// Remainder of polynomial division over GF(2).
fn poly_rem(mut a: u64, b: u64) -> u64 {
    debug_assert!(b != 0);
    let db = 63 - b.leading_zeros() as i64;
    loop {
        let da = 63 - (a | 1).leading_zeros() as i64;
        if a == 0 || da < db {
            return a;
        }
        a ^= b << (da - db);
    }
}

/// Brute-force irreducibility test over GF(2): no divisor of degree
/// 1..=m/2 divides `poly`. Cheap for m <= 16.
fn poly_irreducible(poly: u32, m: u32) -> bool {
    if poly_deg(poly) != m {
        return false;
    }
    for d in 1..=(m / 2) {
        for low in 0..(1u64 << d) {
            let candidate = (1u64 << d) | low;
            if poly_rem(poly as u64, candidate) == 0 {
                return false;
            }
        }
    }
    true
}

/// A finite field GF(q), q = p^m. Copyable; all operations are pure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Field {
    q: u32,
    p: u32,
    m: u32,
    /// Reduction polynomial, meaningful only when m > 1.
    poly: u32,
}

impl Field {
    /// Builds GF(p^m). For m > 1 only p = 2 is supported; `poly` overrides
    /// the default reduction polynomial.
    pub fn new(p: u64, m: u32, poly: Option<u32>) -> Result<Self, FieldError> {
        if m == 0 {
            return Err(FieldError::ZeroDegree);
        }
        if !is_prime(p) {
            return Err(FieldError::NotPrime(p));
        }
        if m > 1 && p != 2 {
            return Err(FieldError::UnsupportedExtension { p, m });
        }
        let q = (p as u128).checked_pow(m).ok_or(FieldError::OrderTooLarge(u64::MAX))?;
        if q > MAX_ORDER as u128 {
            return Err(FieldError::OrderTooLarge(q.min(u64::MAX as u128) as u64));
        }
        let poly = if m > 1 {
            let chosen = poly.unwrap_or(DEFAULT_POLYS[(m - 1) as usize]);
            if !poly_irreducible(chosen, m) {
                return Err(FieldError::ReduciblePolynomial { poly: chosen, m });
            }
            chosen
        } else {
            0
        };
        Ok(Field { q: q as u32, p: p as u32, m, poly })
    }

    /// Prime field GF(p).
    pub fn prime(p: u64) -> Result<Self, FieldError> {
        Self::new(p, 1, None)
    }

    /// Binary extension GF(2^m) with the default reduction polynomial.
    pub fn binary_ext(m: u32) -> Result<Self, FieldError> {
        Self::new(2, m, None)
    }

    pub fn order(&self) -> u32 {
        self.q
    }

    pub fn characteristic(&self) -> u32 {
        self.p
    }

    pub fn degree(&self) -> u32 {
        self.m
    }

    pub fn reduction_poly(&self) -> Option<u32> {
        (self.m > 1).then_some(self.poly)
    }

    pub fn contains(&self, a: u32) -> bool {
        a < self.q
    }

    pub fn check(&self, a: u32) -> Result<(), FieldError> {
        if self.contains(a) {
            Ok(())
        } else {
            Err(FieldError::ElementOutOfRange(a as u64))
        }
    }

    #[inline]
    pub fn add(&self, a: u32, b: u32) -> u32 {
        debug_assert!(a < self.q && b < self.q);
        if self.m == 1 {
            let s = a as u64 + b as u64;
            (s % self.p as u64) as u32
        } else {
            a ^ b
        }
    }

    #[inline]
    pub fn neg(&self, a: u32) -> u32 {
        debug_assert!(a < self.q);
        if self.m == 1 {
            if a == 0 {
                0
            } else {
                self.p - a
            }
        } else {
            a
        }
    }

    #[inline]
    pub fn sub(&self, a: u32, b: u32) -> u32 {
        self.add(a, self.neg(b))
    }

    #[inline]
    pub fn mul(&self, a: u32, b: u32) -> u32 {
        debug_assert!(a < self.q && b < self.q);
        if self.m == 1 {
            ((a as u64 * b as u64) % self.p as u64) as u32
        } else {
            // Carry-less multiply with reduction after each shift.
            let mut acc: u32 = 0;
            let mut x = a;
            let mut y = b;
            while y != 0 {
                if y & 1 == 1 {
                    acc ^= x;
                }
                y >>= 1;
                x <<= 1;
                if x >> self.m != 0 {
                    x ^= self.poly;
                }
            }
            acc
        }
    }

    /// Multiplicative inverse. Errors on zero.
    pub fn inv(&self, a: u32) -> Result<u32, FieldError> {
        if a == 0 {
            return Err(FieldError::ZeroInverse);
        }
        debug_assert!(a < self.q);
        if self.m == 1 {
            // Extended Euclid on (a, p).
            let (mut r0, mut r1) = (self.p as i64, a as i64);
            let (mut t0, mut t1) = (0i64, 1i64);
            while r1 != 0 {
                let quot = r0 / r1;
                (r0, r1) = (r1, r0 - quot * r1);
                (t0, t1) = (t1, t0 - quot * t1);
            }
            debug_assert_eq!(r0, 1);
            Ok(t0.rem_euclid(self.p as i64) as u32)
        } else {
            // a^(q-2) by square-and-multiply.
            Ok(self.pow(a, self.q as u64 - 2))
        }
    }

    pub fn pow(&self, a: u32, mut e: u64) -> u32 {
        let mut base = a;
        let mut acc = 1u32;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatrixError {
    #[error("entry count {got} does not match {rows}x{cols}")]
    ShapeMismatch { rows: usize, cols: usize, got: usize },
    #[error("entry {0} is outside the field")]
    EntryOutOfRange(u32),
    #[error("vector length {got} does not match column count {cols}")]
    DimensionMismatch { cols: usize, got: usize },
}

/// Dense row-major matrix over a finite field. Zero rows or columns are fine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FfMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<u32>,
    field: Field,
}

impl FfMatrix {
    pub fn new(field: Field, rows: usize, cols: usize, entries: Vec<u32>) -> Result<Self, MatrixError> {
        if entries.len() != rows * cols {
            return Err(MatrixError::ShapeMismatch { rows, cols, got: entries.len() });
        }
        if let Some(&bad) = entries.iter().find(|&&e| !field.contains(e)) {
            return Err(MatrixError::EntryOutOfRange(bad));
        }
        Ok(FfMatrix { rows, cols, entries, field })
    }

    pub fn zero(field: Field, rows: usize, cols: usize) -> Self {
        FfMatrix { rows, cols, entries: vec![0; rows * cols], field }
    }

    pub fn identity(field: Field, n: usize) -> Self {
        let mut m = Self::zero(field, n, n);
        for i in 0..n {
            m.entries[i * n + i] = 1;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn field(&self) -> Field {
        self.field
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u32 {
        self.entries[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: u32) {
        debug_assert!(self.field.contains(v));
        self.entries[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> FfMatrix {
        let mut out = FfMatrix::zero(self.field, self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.entries[c * self.rows + r] = self.get(r, c);
            }
        }
        out
    }

    /// Rank by in-place Gaussian elimination. Pivots on the first nonzero
    /// entry in each column scanning rows top-down, so the result is
    /// deterministic. The empty matrix has rank 0.
    pub fn rank(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            return 0;
        }
        let f = self.field;
        let mut work = self.entries.clone();
        let cols = self.cols;
        let mut pivot_row = 0usize;
        for col in 0..cols {
            if pivot_row >= self.rows {
                break;
            }
            let Some(src) = (pivot_row..self.rows).find(|&r| work[r * cols + col] != 0) else {
                continue;
            };
            if src != pivot_row {
                for c in 0..cols {
                    work.swap(src * cols + c, pivot_row * cols + c);
                }
            }
            let pivot = work[pivot_row * cols + col];
            let pivot_inv = f.inv(pivot).expect("pivot is nonzero");
            for r in (pivot_row + 1)..self.rows {
                let factor = work[r * cols + col];
                if factor == 0 {
                    continue;
                }
                let scale = f.mul(factor, pivot_inv);
                for c in col..cols {
                    let sub = f.mul(scale, work[pivot_row * cols + c]);
                    work[r * cols + c] = f.sub(work[r * cols + c], sub);
                }
            }
            pivot_row += 1;
        }
        pivot_row
    }

    /// Matrix-vector product over the field.
    pub fn mul_vec(&self, x: &[u32]) -> Result<Vec<u32>, MatrixError> {
        if x.len() != self.cols {
            return Err(MatrixError::DimensionMismatch { cols: self.cols, got: x.len() });
        }
        let f = self.field;
        let mut y = vec![0u32; self.rows];
        for r in 0..self.rows {
            let mut acc = 0u32;
            for c in 0..self.cols {
                acc = f.add(acc, f.mul(self.get(r, c), x[c]));
            }
            y[r] = acc;
        }
        Ok(y)
    }

    /// Matrix product `self * rhs`.
    pub fn mul_mat(&self, rhs: &FfMatrix) -> FfMatrix {
        assert_eq!(self.cols, rhs.rows);
        let f = self.field;
        let mut out = FfMatrix::zero(f, self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == 0 {
                    continue;
                }
                for c in 0..rhs.cols {
                    let v = f.mul(a, rhs.get(k, c));
                    let cur = out.get(r, c);
                    out.set(r, c, f.add(cur, v));
                }
            }
        }
        out
    }
}
