//! String and integer operations with SMT-LIB semantics. Positions and
//! lengths count Unicode scalar values.

use num_bigint::BigInt;
use num_traits::{Euclid, Signed, ToPrimitive, Zero};

/// Index as usize when it lies in `0..=usize::MAX`.
fn index(i: &BigInt) -> Option<usize> {
    if i.is_negative() {
        None
    } else {
        i.to_usize()
    }
}

fn chars(s: &str) -> Vec<char> {
    s.chars().collect()
}

pub fn length(s: &str) -> BigInt {
    BigInt::from(s.chars().count())
}

/// `str.at`: the character at `i`, or "" out of range.
pub fn at(s: &str, i: &BigInt) -> String {
    match index(i).and_then(|i| s.chars().nth(i)) {
        Some(c) => c.to_string(),
        None => String::new(),
    }
}

/// `str.substr`: the longest substring from `i` of length at most `n`; ""
/// when `i` is out of range or `n <= 0`.
pub fn substr(s: &str, i: &BigInt, n: &BigInt) -> String {
    let cs = chars(s);
    let Some(i) = index(i) else { return String::new() };
    if i >= cs.len() || !n.is_positive() {
        return String::new();
    }
    let n = n.to_usize().unwrap_or(usize::MAX);
    let end = i.saturating_add(n).min(cs.len());
    cs[i..end].iter().collect()
}

/// `str.indexof`: first position `>= i` where `t` occurs in `s`, or -1.
pub fn indexof(s: &str, t: &str, i: &BigInt) -> BigInt {
    let cs = chars(s);
    let ts = chars(t);
    let Some(i) = index(i) else { return BigInt::from(-1) };
    if i > cs.len() {
        return BigInt::from(-1);
    }
    if ts.len() > cs.len() {
        return BigInt::from(-1);
    }
    (i..=cs.len() - ts.len())
        .find(|&k| cs[k..k + ts.len()] == ts[..])
        .map_or(BigInt::from(-1), BigInt::from)
}

pub fn contains(s: &str, t: &str) -> bool {
    s.contains(t)
}

/// `str.prefixof a b`: `a` is a prefix of `b`.
pub fn prefixof(a: &str, b: &str) -> bool {
    b.starts_with(a)
}

/// `str.suffixof a b`: `a` is a suffix of `b`.
pub fn suffixof(a: &str, b: &str) -> bool {
    b.ends_with(a)
}

/// `str.replace`: replace the first occurrence of `t`; an empty `t` is
/// found at position 0.
pub fn replace(s: &str, t: &str, u: &str) -> String {
    s.replacen(t, u, 1)
}

/// `str.to_int`: the decimal value of a nonempty digit string, else -1.
pub fn str_to_int(s: &str) -> BigInt {
    if !s.is_empty() && s.chars().all(|c| c.is_ascii_digit()) {
        s.parse().expect("digits")
    } else {
        BigInt::from(-1)
    }
}

/// `str.from_int`: decimal digits of a non-negative integer, else "".
pub fn int_to_str(n: &BigInt) -> String {
    if n.is_negative() {
        String::new()
    } else {
        n.to_string()
    }
}

/// Euclidean division; None for a zero divisor.
pub fn div(a: &BigInt, b: &BigInt) -> Option<BigInt> {
    (!b.is_zero()).then(|| a.div_euclid(b))
}

/// Euclidean remainder, always in `0..|b|`.
pub fn modulo(a: &BigInt, b: &BigInt) -> Option<BigInt> {
    (!b.is_zero()).then(|| a.rem_euclid(b))
}
