use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A monomial `x1^a1 ... xd^ad`, stored as its degree vector.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial(exponents)
    }

    pub fn one(d: usize) -> Self {
        Monomial(vec![0; d])
    }

    pub fn var(d: usize, i: usize) -> Self {
        let mut e = vec![0; d];
        e[i] = 1;
        Monomial(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn divides(&self, other: &Monomial) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// `other / self`, assuming `self` divides `other`.
    pub fn quotient_of(&self, other: &Monomial) -> Monomial {
        Monomial(other.0.iter().zip(&self.0).map(|(b, a)| b - a).collect())
    }

    /// Signed difference of degree vectors.
    pub fn difference(&self, other: &Monomial) -> Vec<i64> {
        self.0.iter().zip(&other.0).map(|(&a, &b)| a as i64 - b as i64).collect()
    }
}

// Graded lex: lower total degree first; within a degree, larger powers of x1 first,
// so d=2 degree 2 reads x1^2, x1 x2, x2^2.
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sorted multiset of the coordinates of an integer vector.
#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MonomialType(Vec<i64>);

impl MonomialType {
    pub fn values(&self) -> &[i64] {
        &self.0
    }

    pub fn norm_sq(&self) -> i64 {
        self.0.iter().map(|x| x * x).sum()
    }
}

pub fn monomial_type(v: &[i64]) -> MonomialType {
    let mut s = v.to_vec();
    s.sort_unstable();
    MonomialType(s)
}

/// All monomials of exactly degree `deg` in `d` variables, in graded-lex order.
pub fn monomials_of_degree(d: usize, deg: u32) -> Vec<Monomial> {
    let mut out = Vec::new();
    if d == 0 {
        if deg == 0 {
            out.push(Monomial(vec![]));
        }
        return out;
    }
    let mut cur = vec![0u32; d];
    fill(&mut cur, 0, deg, &mut out);
    out
}

fn fill(cur: &mut Vec<u32>, pos: usize, rest: u32, out: &mut Vec<Monomial>) {
    if pos + 1 == cur.len() {
        cur[pos] = rest;
        out.push(Monomial(cur.clone()));
        return;
    }
    for a in (0..=rest).rev() {
        cur[pos] = a;
        fill(cur, pos + 1, rest - a, out);
    }
    cur[pos] = 0;
}

/// All monomials of degree at most `bound`, graded-lex.
pub fn monomials_up_to(d: usize, bound: u32) -> Vec<Monomial> {
    (0..=bound).flat_map(|k| monomials_of_degree(d, k)).collect()
}

fn binom(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Number of monomials of degree at most `bound` in `d` variables.
pub fn basis_size(d: usize, bound: u32) -> usize {
    binom(d as u64 + bound as u64, d as u64) as usize
}

/// The fixed monomial order with index lookup shared by every vectorization.
#[derive(Clone, Debug)]
pub struct MonomialBasis {
    d: usize,
    bound: u32,
    list: Vec<Monomial>,
    index: HashMap<Monomial, usize>,
}

impl MonomialBasis {
    pub fn new(d: usize, bound: u32) -> Self {
        let list = monomials_up_to(d, bound);
        let index = list.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        MonomialBasis { d, bound, list, index }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn bound(&self) -> u32 {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.list
    }

    pub fn get(&self, i: usize) -> &Monomial {
        &self.list[i]
    }

    pub fn index_of(&self, m: &Monomial) -> Result<usize> {
        if m.dim() != self.d {
            return Err(Error::DimensionMismatch { left: m.dim(), right: self.d });
        }
        self.index
            .get(m)
            .copied()
            .ok_or(Error::DegreeTooLarge { degree: m.degree(), bound: self.bound })
    }
}
