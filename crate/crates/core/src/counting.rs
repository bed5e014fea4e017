//! Counting pipelines for free groups: the number `c_k` of cyclically
//! reduced words of length `k` with trivial abelianization (dynamic program
//! over exponent vectors), its Möbius-primitive decomposition `p_d`, exact
//! conjugacy-class counts with trivial abelianization (two evaluation orders
//! that must agree), the all-classes growth baseline, a Laurent-polynomial
//! constant-term recurrence with a Chebyshev numeric cross-check, and the
//! sharp asymptotic with its variance constant.

use crate::freewords::count_cyclically_reduced;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CountingError {
    #[error("argument must be at least 1")]
    ZeroArgument,
    #[error("rank must be between 2 and 26 (got {0})")]
    BadRank(u8),
    #[error("dense state space for rank {r}, length {k} is too large")]
    DenseCapacity { r: u8, k: u64 },
    #[error("constant-term recurrence supports rank 2 or 3 and length at most 16 (got rank {r}, length {k})")]
    CtBounds { r: u8, k: u64 },
    #[error("Laurent coefficient escaped the exponent box at bound {bound}")]
    ExponentOverflow { bound: i64 },
    #[error("internal consistency failure: {0}")]
    Inconsistent(String),
}

fn check_rank(r: u8) -> Result<(), CountingError> {
    if (2..=26).contains(&r) {
        Ok(())
    } else {
        Err(CountingError::BadRank(r))
    }
}

/// Sorted divisors of `n >= 1`.
pub fn divisors(n: u64) -> Result<Vec<u64>, CountingError> {
    if n == 0 {
        return Err(CountingError::ZeroArgument);
    }
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1;
    while d * d <= n {
        if n % d == 0 {
            small.push(d);
            if d != n / d {
                large.push(n / d);
            }
        }
        d += 1;
    }
    large.reverse();
    small.extend(large);
    Ok(small)
}

fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += 1;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

/// Euler's totient. `n >= 1`.
pub fn totient(n: u64) -> Result<u64, CountingError> {
    if n == 0 {
        return Err(CountingError::ZeroArgument);
    }
    let mut out = n;
    for (p, _) in factorize(n) {
        out = out / p * (p - 1);
    }
    Ok(out)
}

/// Möbius function. `n >= 1`.
pub fn mobius(n: u64) -> Result<i64, CountingError> {
    if n == 0 {
        return Err(CountingError::ZeroArgument);
    }
    let factors = factorize(n);
    if factors.iter().any(|&(_, e)| e > 1) {
        return Ok(0);
    }
    Ok(if factors.len() % 2 == 0 { 1 } else { -1 })
}

/// `c_k`: cyclically reduced words of length `k` in rank `r` whose
/// abelianization vanishes. Computed by a dense dynamic program over
/// (exponent vector, last letter) with the first letter pinned to one fixed
/// generator; the total is that count times `2r`, since relabeling and
/// inverting generators act transitively on first letters while preserving
/// both reducedness and the zero-abelianization condition.
pub fn ck(r: u8, k: u64) -> Result<BigInt, CountingError> {
    check_rank(r)?;
    if k == 0 {
        return Ok(BigInt::one());
    }
    let rr = r as usize;
    let letters = 2 * rr;
    let kk = k as usize;
    let side = 2 * kk + 1;
    let mut states: u128 = 1;
    for _ in 0..rr {
        states = states.saturating_mul(side as u128);
    }
    if states.saturating_mul(letters as u128) > 60_000_000 {
        return Err(CountingError::DenseCapacity { r, k });
    }
    let states = states as usize;
    let strides: Vec<usize> = (0..rr).map(|i| side.pow(i as u32)).collect();
    let zero_index: usize = (0..rr).map(|i| kk * strides[i]).sum();

    // L1 norms per state index, for pruning: a state can still reach the
    // zero vector only if its norm is at most the number of letters left.
    let mut norms = vec![0u32; states];
    for (idx, norm) in norms.iter_mut().enumerate() {
        let mut rest = idx;
        let mut n = 0u32;
        for _ in 0..rr {
            let coord = (rest % side) as i64 - kk as i64;
            rest /= side;
            n += coord.unsigned_abs() as u32;
        }
        *norm = n;
    }

    // dp[letter][state]: words of the current length ending in `letter` with
    // the given exponent vector; letter codes as in the word module
    // (2 * generator + inverse bit, inverse of code l is l ^ 1).
    let mut dp = vec![vec![BigInt::zero(); states]; letters];
    dp[0][zero_index + strides[0]] = BigInt::one();
    for step in 1..kk {
        let remaining = (kk - step) as u32;
        let mut next = vec![vec![BigInt::zero(); states]; letters];
        for (last, states_for_last) in dp.iter().enumerate() {
            for (idx, count) in states_for_last.iter().enumerate() {
                if count.is_zero() || norms[idx] > remaining {
                    continue;
                }
                // Decode coordinates once for boundary checks.
                let mut coords = [0i64; 26];
                let mut rest = idx;
                for c in coords.iter_mut().take(rr) {
                    *c = (rest % side) as i64 - kk as i64;
                    rest /= side;
                }
                for l in 0..letters {
                    if l == last ^ 1 {
                        continue;
                    }
                    let g = l / 2;
                    let delta: i64 = if l % 2 == 0 { 1 } else { -1 };
                    let coord = coords[g] + delta;
                    if coord.unsigned_abs() as usize > kk {
                        continue;
                    }
                    let nidx = if delta > 0 { idx + strides[g] } else { idx - strides[g] };
                    next[l][nidx] += count;
                }
            }
        }
        dp = next;
    }
    // Close the cycle: the exponent vector is zero and the last letter must
    // not cancel against the pinned first letter (code 0, inverse code 1).
    let mut total = BigInt::zero();
    for (l, states_for_last) in dp.iter().enumerate() {
        if kk > 1 && l == 1 {
            continue;
        }
        total += &states_for_last[zero_index];
    }
    Ok(total * BigInt::from(letters))
}

/// Brute-force `c_k` by enumerating cyclically reduced words; for
/// cross-checking the dynamic program at small sizes.
pub fn ck_brute_force(r: u8, k: u64) -> Result<BigInt, CountingError> {
    check_rank(r)?;
    let mut count = BigInt::zero();
    crate::freewords::for_each_cyclically_reduced(r, k, |letters| {
        let ab = crate::freewords::abelianize_letters(letters, r);
        if ab.iter().all(|&v| v == 0) {
            count += 1;
        }
    });
    Ok(count)
}

/// `p_d = sum over e | d of mobius(d/e) * c_e`: primitive (non-power)
/// cyclically reduced words of length `d` with trivial abelianization.
pub fn pd(r: u8, d: u64) -> Result<BigInt, CountingError> {
    if d == 0 {
        return Err(CountingError::ZeroArgument);
    }
    let mut total = BigInt::zero();
    for e in divisors(d)? {
        let mu = mobius(d / e)?;
        if mu != 0 {
            total += BigInt::from(mu) * ck(r, e)?;
        }
    }
    Ok(total)
}

/// Both evaluation orders for the trivial-abelianization class count at
/// length `k`: `sum over d | k of p_d / d` and
/// `sum over e | k of c_e * totient(k/e) / k`. Exact rationals; the two must
/// coincide and be integral (enforced by [`classes_trivial_ab`]).
pub fn classes_trivial_ab_breakdown(
    r: u8,
    k: u64,
) -> Result<(BigRational, BigRational), CountingError> {
    if k == 0 {
        return Err(CountingError::ZeroArgument);
    }
    let mut via_primitives = BigRational::zero();
    for d in divisors(k)? {
        via_primitives += BigRational::new(pd(r, d)?, BigInt::from(d));
    }
    let mut via_totients = BigRational::zero();
    for e in divisors(k)? {
        via_totients +=
            BigRational::new(ck(r, e)? * BigInt::from(totient(k / e)?), BigInt::from(k));
    }
    Ok((via_primitives, via_totients))
}

/// Conjugacy classes of length `k` with trivial abelianization, verified by
/// computing the count in two independent orders and requiring an exact,
/// integral agreement.
pub fn classes_trivial_ab(r: u8, k: u64) -> Result<BigInt, CountingError> {
    let (a, b) = classes_trivial_ab_breakdown(r, k)?;
    if a != b {
        return Err(CountingError::Inconsistent(format!(
            "class-count evaluation orders disagree at rank {r}, length {k}: {a} vs {b}"
        )));
    }
    if !a.is_integer() {
        return Err(CountingError::Inconsistent(format!(
            "class count at rank {r}, length {k} is not an integer: {a}"
        )));
    }
    Ok(a.to_integer())
}

/// Conjugacy classes of length exactly `k` (no abelianization condition):
/// the necklace count over all cyclically reduced words, via the primitive
/// decomposition of `count_cyclically_reduced`.
pub fn conjugacy_growth_baseline(r: u8, k: u64) -> Result<BigInt, CountingError> {
    if k == 0 {
        return Err(CountingError::ZeroArgument);
    }
    let n_of = |e: u64| -> Result<BigInt, CountingError> {
        count_cyclically_reduced(r, e).map_err(|e| CountingError::Inconsistent(e.to_string()))
    };
    let mut total = BigRational::zero();
    for d in divisors(k)? {
        let mut prim = BigInt::zero();
        for e in divisors(d)? {
            let mu = mobius(d / e)?;
            if mu != 0 {
                prim += BigInt::from(mu) * n_of(e)?;
            }
        }
        total += BigRational::new(prim, BigInt::from(d));
    }
    if !total.is_integer() {
        return Err(CountingError::Inconsistent(format!(
            "baseline class count at rank {r}, length {k} is not an integer: {total}"
        )));
    }
    Ok(total.to_integer())
}

/// A Laurent polynomial in `vars` variables with integer coefficients,
/// stored densely over the exponent box `[-bound, bound]^vars`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LaurentPoly {
    vars: usize,
    bound: i64,
    side: usize,
    coeffs: Vec<BigInt>,
}

impl LaurentPoly {
    pub fn zero(vars: usize, bound: i64) -> Result<LaurentPoly, CountingError> {
        if vars == 0 || bound < 0 {
            return Err(CountingError::ZeroArgument);
        }
        let side = 2 * bound as usize + 1;
        let mut size: u128 = 1;
        for _ in 0..vars {
            size = size.saturating_mul(side as u128);
        }
        if size > 40_000_000 {
            return Err(CountingError::DenseCapacity { r: vars as u8, k: bound as u64 });
        }
        Ok(LaurentPoly { vars, bound, side, coeffs: vec![BigInt::zero(); size as usize] })
    }

    pub fn one(vars: usize, bound: i64) -> Result<LaurentPoly, CountingError> {
        let mut p = LaurentPoly::zero(vars, bound)?;
        let center = p.center();
        p.coeffs[center] = BigInt::one();
        Ok(p)
    }

    fn center(&self) -> usize {
        let mut idx = 0;
        for i in 0..self.vars {
            idx += self.bound as usize * self.side.pow(i as u32);
        }
        idx
    }

    fn stride(&self, var: usize) -> usize {
        self.side.pow(var as u32)
    }

    /// Coefficient of the monomial with the given exponents (0 outside the
    /// box).
    pub fn coeff(&self, exps: &[i64]) -> BigInt {
        assert_eq!(exps.len(), self.vars, "exponent arity mismatch");
        let mut idx = 0usize;
        for (i, &e) in exps.iter().enumerate() {
            if e.abs() > self.bound {
                return BigInt::zero();
            }
            idx += (e + self.bound) as usize * self.stride(i);
        }
        self.coeffs[idx].clone()
    }

    pub fn constant_term(&self) -> BigInt {
        self.coeffs[self.center()].clone()
    }

    /// Multiply by `sum over i of (x_i + x_i^-1)`. Errors if a nonzero
    /// coefficient would shift outside the exponent box.
    pub fn mul_by_sum_of_vars(&self) -> Result<LaurentPoly, CountingError> {
        let mut out = LaurentPoly::zero(self.vars, self.bound)?;
        for (idx, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let mut rest = idx;
            for var in 0..self.vars {
                let coord = (rest % self.side) as i64 - self.bound;
                rest /= self.side;
                for delta in [1i64, -1] {
                    let shifted = coord + delta;
                    if shifted.abs() > self.bound {
                        return Err(CountingError::ExponentOverflow { bound: self.bound });
                    }
                    let nidx = if delta > 0 {
                        idx + self.stride(var)
                    } else {
                        idx - self.stride(var)
                    };
                    out.coeffs[nidx] += c;
                }
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, c: &BigInt) -> LaurentPoly {
        let mut out = self.clone();
        for v in &mut out.coeffs {
            *v *= c;
        }
        out
    }

    pub fn sub(&self, other: &LaurentPoly) -> LaurentPoly {
        assert_eq!(self.vars, other.vars, "arity mismatch");
        assert_eq!(self.bound, other.bound, "bound mismatch");
        let mut out = self.clone();
        for (v, o) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *v -= o;
        }
        out
    }

    /// Evaluate with every variable set to the same nonzero rational `t`.
    pub fn eval_uniform(&self, t: &BigRational) -> Result<BigRational, CountingError> {
        if t.is_zero() {
            return Err(CountingError::ZeroArgument);
        }
        // Precompute powers t^s for s in [-vars*bound, vars*bound].
        let span = self.vars as i64 * self.bound;
        let mut powers = Vec::with_capacity(2 * span as usize + 1);
        let mut cur = BigRational::one();
        powers.push(cur.clone());
        for _ in 0..span {
            cur *= t;
            powers.push(cur.clone());
        }
        let inv = t.recip();
        let mut cur = BigRational::one();
        let mut neg_powers = Vec::with_capacity(span as usize);
        for _ in 0..span {
            cur *= &inv;
            neg_powers.push(cur.clone());
        }
        let power = |s: i64| -> &BigRational {
            if s >= 0 {
                &powers[s as usize]
            } else {
                &neg_powers[(-s - 1) as usize]
            }
        };
        let mut total = BigRational::zero();
        for (idx, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let mut rest = idx;
            let mut s = 0i64;
            for _ in 0..self.vars {
                s += (rest % self.side) as i64 - self.bound;
                rest /= self.side;
            }
            total += BigRational::from(c.clone()) * power(s);
        }
        Ok(total)
    }
}

/// The polynomial `P_k` of the constant-term recurrence
/// `P_0 = 1`, `P_1 = u`, `P_k = 2 u P_{k-1} - 4 (2r - 1) P_{k-2}` with
/// `u = sum over i of (x_i + x_i^-1)`. Supported for rank 2 or 3 and
/// `k <= 16`.
pub fn rivin_poly(r: u8, k: u64) -> Result<LaurentPoly, CountingError> {
    if !(r == 2 || r == 3) || k > 16 {
        return Err(CountingError::CtBounds { r, k });
    }
    let vars = r as usize;
    let bound = (k as i64).max(1);
    let mut prev = LaurentPoly::one(vars, bound)?;
    if k == 0 {
        return Ok(prev);
    }
    let mut cur = prev.mul_by_sum_of_vars()?;
    let two = BigInt::from(2);
    let four_g = BigInt::from(4 * (2 * r as i64 - 1));
    for _ in 2..=k {
        let next = cur.mul_by_sum_of_vars()?.scaled(&two).sub(&prev.scaled(&four_g));
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Constant term of [`rivin_poly`].
pub fn rivin_ct(r: u8, k: u64) -> Result<BigInt, CountingError> {
    Ok(rivin_poly(r, k)?.constant_term())
}

/// Chebyshev polynomial of the first kind, `T_k(x)`, by the three-term
/// recurrence.
pub fn chebyshev_t(k: u64, x: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = x;
    for _ in 2..=k {
        let next = 2.0 * x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Closed-form reference for `P_k` with all variables set to `t`:
/// `(2 sqrt(2r - 1))^k * T_k( r (t + 1/t) / (2 sqrt(2r - 1)) )`.
pub fn rivin_chebyshev_reference(r: u8, k: u64, t: f64) -> f64 {
    let g = (2.0 * r as f64 - 1.0).sqrt();
    (2.0 * g).powi(k as i32) * chebyshev_t(k, r as f64 * (t + 1.0 / t) / (2.0 * g))
}

/// Relative error between the exact uniform evaluation of `P_k` at `t` and
/// the Chebyshev closed form.
pub fn rivin_numeric_check(r: u8, k: u64, t: &BigRational) -> Result<f64, CountingError> {
    let exact = rivin_poly(r, k)?
        .eval_uniform(t)?
        .to_f64()
        .ok_or_else(|| CountingError::Inconsistent("evaluation out of f64 range".into()))?;
    let t_f = t
        .to_f64()
        .ok_or_else(|| CountingError::Inconsistent("argument out of f64 range".into()))?;
    let reference = rivin_chebyshev_reference(r, k, t_f);
    let denom = reference.abs().max(1.0);
    Ok((exact - reference).abs() / denom)
}

/// The variance constant of the sharp asymptotic:
/// `sigma^2 = (1 / sqrt(2r - 1)) (1 + sqrt((r + sqrt(2r - 1)) /
/// (r - sqrt(2r - 1))))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SharpParams {
    pub r: u8,
    pub sigma_squared: f64,
    pub sigma: f64,
}

impl SharpParams {
    pub fn new(r: u8) -> Result<SharpParams, CountingError> {
        check_rank(r)?;
        let rf = r as f64;
        let g = (2.0 * rf - 1.0).sqrt();
        let sigma_squared = (1.0 / g) * (1.0 + ((rf + g) / (rf - g)).sqrt());
        Ok(SharpParams { r, sigma_squared, sigma: sigma_squared.sqrt() })
    }
}

/// The sharp prediction for `c_{2m}`:
/// `4 r (2r - 1)^(2m - 1) / ( (2 pi)^(r/2) sigma^r m^(r/2) )`.
pub fn sharp_asymptotic(r: u8, m: u64) -> Result<f64, CountingError> {
    if m == 0 {
        return Err(CountingError::ZeroArgument);
    }
    let params = SharpParams::new(r)?;
    let rf = r as f64;
    let growth = (2.0 * rf - 1.0).powi(2 * m as i32 - 1);
    let denom = (2.0 * std::f64::consts::PI).powf(rf / 2.0)
        * params.sigma_squared.powf(rf / 2.0)
        * (m as f64).powf(rf / 2.0);
    Ok(4.0 * rf * growth / denom)
}

/// `c_{2m} / sharp_asymptotic(r, m)`.
pub fn sharp_ratio(r: u8, m: u64) -> Result<f64, CountingError> {
    let exact = ck(r, 2 * m)?
        .to_f64()
        .ok_or_else(|| CountingError::Inconsistent("count out of f64 range".into()))?;
    Ok(exact / sharp_asymptotic(r, m)?)
}
