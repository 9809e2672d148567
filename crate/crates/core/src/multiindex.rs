//! Multi-indices, graded basis enumeration and the composition counters
//! `G_p(n, q)` / `F_p(n, q)` together with their bounds as predicates.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// A d-tuple of non-negative integers.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    pub fn zero(d: usize) -> Self {
        MultiIndex(vec![0; d])
    }

    /// Unit multi-index `e_axis`.
    pub fn unit(d: usize, axis: usize) -> Self {
        let mut e = vec![0; d];
        e[axis] = 1;
        MultiIndex(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    /// `|j| = Σ j_k`.
    pub fn order(&self) -> usize {
        self.0.iter().map(|&v| v as usize).sum()
    }

    /// `j! = Π j_k!` as a float (exact up to 170!).
    pub fn factorial(&self) -> f64 {
        self.0
            .iter()
            .map(|&v| (1..=v).map(f64::from).product::<f64>())
            .product()
    }

    pub fn get(&self, axis: usize) -> u32 {
        self.0[axis]
    }

    pub fn raised(&self, axis: usize) -> Self {
        let mut e = self.0.clone();
        e[axis] += 1;
        MultiIndex(e)
    }

    pub fn lowered(&self, axis: usize) -> Option<Self> {
        if self.0[axis] == 0 {
            return None;
        }
        let mut e = self.0.clone();
        e[axis] -= 1;
        Some(MultiIndex(e))
    }

    pub fn checked_sub(&self, other: &MultiIndex) -> Option<Self> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| a.checked_sub(b))
            .collect::<Option<Vec<_>>>()
            .map(MultiIndex)
    }

    pub fn add(&self, other: &MultiIndex) -> Self {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `x^j` for a real point.
    pub fn monomial(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(&p, &xi)| xi.powi(p as i32))
            .product()
    }

    /// Index of the last non-zero component, if any.
    pub fn last_nonzero(&self) -> Option<usize> {
        self.0.iter().rposition(|&v| v != 0)
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// All multi-indices of dimension `d` with `|j| <= cap`, in graded order
/// (by `|j|`, then descending lexicographic within a grade).
#[derive(Clone, Debug)]
pub struct BasisIndexSet {
    dim: usize,
    cap: usize,
    indices: Vec<MultiIndex>,
    lookup: HashMap<MultiIndex, usize>,
    grade_start: Vec<usize>,
    raise: Vec<usize>,
    lower: Vec<usize>,
}

const NONE: usize = usize::MAX;

fn push_grade(d: usize, n: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if prefix.len() + 1 == d {
        prefix.push(n);
        out.push(MultiIndex(prefix.clone()));
        prefix.pop();
        return;
    }
    for first in (0..=n).rev() {
        prefix.push(first);
        push_grade(d, n - first, prefix, out);
        prefix.pop();
    }
}

impl BasisIndexSet {
    /// Enumerate every multi-index with `|j| <= cap`.
    ///
    /// Ordinal 0 is always the zero multi-index. Panics if `d == 0`.
    pub fn enumerate_upto(d: usize, cap: usize) -> Self {
        assert!(d >= 1, "dimension must be positive");
        let mut indices = Vec::new();
        let mut grade_start = Vec::with_capacity(cap + 2);
        let mut prefix = Vec::with_capacity(d);
        for n in 0..=cap {
            grade_start.push(indices.len());
            push_grade(d, n as u32, &mut prefix, &mut indices);
        }
        grade_start.push(indices.len());
        let lookup: HashMap<MultiIndex, usize> = indices
            .iter()
            .enumerate()
            .map(|(i, j)| (j.clone(), i))
            .collect();
        let mut raise = vec![NONE; indices.len() * d];
        let mut lower = vec![NONE; indices.len() * d];
        for (i, j) in indices.iter().enumerate() {
            for p in 0..d {
                if let Some(&r) = lookup.get(&j.raised(p)) {
                    raise[i * d + p] = r;
                }
                if let Some(lw) = j.lowered(p) {
                    lower[i * d + p] = lookup[&lw];
                }
            }
        }
        BasisIndexSet {
            dim: d,
            cap,
            indices,
            lookup,
            grade_start,
            raise,
            lower,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn get(&self, ordinal: usize) -> &MultiIndex {
        &self.indices[ordinal]
    }

    pub fn ordinal(&self, j: &MultiIndex) -> Option<usize> {
        self.lookup.get(j).copied()
    }

    /// Ordinals of grade `n` form the contiguous range returned here.
    pub fn grade_range(&self, n: usize) -> std::ops::Range<usize> {
        if n > self.cap {
            return self.len()..self.len();
        }
        self.grade_start[n]..self.grade_start[n + 1]
    }

    /// Number of indices with `|j| <= n` (a prefix of the ordinal range).
    pub fn count_upto(&self, n: usize) -> usize {
        self.grade_start[(n + 1).min(self.cap + 1)]
    }

    pub fn grade_of(&self, ordinal: usize) -> usize {
        self.indices[ordinal].order()
    }

    /// Ordinal of `j + e_axis`, if it lies inside the cap.
    #[inline]
    pub fn raise(&self, ordinal: usize, axis: usize) -> Option<usize> {
        let r = self.raise[ordinal * self.dim + axis];
        (r != NONE).then_some(r)
    }

    /// Ordinal of `j - e_axis`, if `j_axis > 0`.
    #[inline]
    pub fn lower(&self, ordinal: usize, axis: usize) -> Option<usize> {
        let r = self.lower[ordinal * self.dim + axis];
        (r != NONE).then_some(r)
    }
}

/// Checked binomial coefficient `C(n, k)`.
pub fn binomial(n: u64, k: u64) -> Result<u128> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) after the multiplication
        acc = acc
            .checked_mul((n - i) as u128)
            .ok_or_else(|| Error::Overflow(format!("C({n}, {k})")))?
            / (i as u128 + 1);
    }
    Ok(acc)
}

/// Number of multi-indices of dimension `d` with `|j| <= n`, i.e. `C(n + d, d)`.
pub fn basis_size(d: usize, n: usize) -> Result<u128> {
    binomial((n + d) as u64, d as u64)
}

/// Count compositions of `n` into `q` parts, each part `s` in `1..=p`
/// weighted by `weight(s)`.
fn weighted_compositions(
    p: usize,
    n: usize,
    q: usize,
    weight: impl Fn(usize) -> Result<u128>,
    what: &str,
) -> Result<u128> {
    if q == 0 {
        return Ok(u128::from(n == 0));
    }
    if n < q || n > q.saturating_mul(p) {
        return Ok(0);
    }
    let weights: Vec<u128> = (0..=p.min(n))
        .map(|s| if s == 0 { Ok(0) } else { weight(s) })
        .collect::<Result<_>>()?;
    let overflow = || Error::Overflow(what.to_string());
    // ways[s] = weighted count of compositions of s into k parts
    let mut ways = vec![0u128; n + 1];
    ways[0] = 1;
    for _ in 0..q {
        let mut next = vec![0u128; n + 1];
        for (s, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            for part in 1..weights.len() {
                if s + part > n {
                    break;
                }
                let add = w.checked_mul(weights[part]).ok_or_else(overflow)?;
                next[s + part] = next[s + part].checked_add(add).ok_or_else(overflow)?;
            }
        }
        ways = next;
    }
    Ok(ways[n])
}

/// `G_p(n, q)`: compositions `n = m_1 + ... + m_q` with `1 <= m_j <= p`.
pub fn count_g(p: usize, n: usize, q: usize) -> Result<u128> {
    weighted_compositions(p, n, q, |_| Ok(1), &format!("G_{p}({n},{q})"))
}

/// `F_p(n, q)`: ordered tuples of `q` d-dimensional multi-indices with
/// `1 <= |m_j| <= p` and `Σ |m_j| = n`.
pub fn count_f(d: usize, p: usize, n: usize, q: usize) -> Result<u128> {
    assert!(d >= 1, "dimension must be positive");
    weighted_compositions(
        p,
        n,
        q,
        |s| binomial((s + d - 1) as u64, (d - 1) as u64),
        &format!("F_{p}({n},{q}) in d={d}"),
    )
}

/// `Γ_p(n, q)`: compositions of `n` into `q` parts in `0..=p`, via the
/// shift identity `Γ_p(n, q) = G_{p+1}(n + q, q)`.
pub fn count_gamma(p: usize, n: usize, q: usize) -> Result<u128> {
    count_g(p + 1, n + q, q)
}

/// Right-hand side of the two-sided bound on `G_p(n, q)`:
/// `C(n-1, q-1)` below the midpoint `floor(q(p+1)/2)` and
/// `C(q(p+1)-n-1, q-1)` above it. `None` outside `q <= n <= qp`.
pub fn g_upper_bound(p: usize, n: usize, q: usize) -> Result<Option<u128>> {
    if q == 0 || n < q || n > q * p {
        return Ok(None);
    }
    let mid = q * (p + 1) / 2;
    let top = if n <= mid { n - 1 } else { q * (p + 1) - n - 1 };
    binomial(top as u64, (q - 1) as u64).map(Some)
}

/// Envelope `2e * e^{1/e}` for `G_p(n, q)^{1/n}` (Stirling constant `1/e`).
pub fn composition_root_envelope() -> f64 {
    let e = std::f64::consts::E;
    2.0 * e * (1.0 / e).exp()
}
