//! Set partitions and cumulants of laws with finite support.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Largest ground set for partition enumeration (Bell(10) = 115975).
pub const MAX_PARTITION_SIZE: usize = 10;
/// Largest order of a mixed cumulant.
pub const MAX_CUMULANT_ORDER: usize = 8;
/// Largest order of a cumulant tensor.
pub const MAX_TENSOR_ORDER: usize = 4;
/// Largest number of tensor entries.
pub const MAX_TENSOR_ENTRIES: usize = 1_000_000;

/// A partition of `{0..n}` stored as a restricted growth string: element `i`
/// lies in block `block_of[i]`, and blocks are numbered by first occurrence.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SetPartition {
    block_of: Vec<u8>,
    num_blocks: usize,
}

impl SetPartition {
    /// Builds a partition from a restricted growth string.
    pub fn from_rgs(block_of: Vec<u8>) -> Result<Self> {
        let mut next = 0u8;
        for &b in &block_of {
            if b > next {
                return Err(Error::InvalidParameter(format!(
                    "not a restricted growth string: {block_of:?}"
                )));
            }
            if b == next {
                next += 1;
            }
        }
        Ok(SetPartition {
            block_of,
            num_blocks: next as usize,
        })
    }

    /// Size of the ground set.
    pub fn n(&self) -> usize {
        self.block_of.len()
    }

    /// Number of blocks `|π|`.
    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    /// Block index (zero-based) of element `i` (zero-based).
    #[inline]
    pub fn block_of(&self, i: usize) -> usize {
        self.block_of[i] as usize
    }

    pub fn rgs(&self) -> &[u8] {
        &self.block_of
    }

    /// Blocks as sorted element lists, in block order.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_blocks];
        for (i, &b) in self.block_of.iter().enumerate() {
            out[b as usize].push(i);
        }
        out
    }

    /// Blocks as bitmasks over the ground set.
    pub fn block_masks(&self) -> Vec<u32> {
        let mut out = vec![0u32; self.num_blocks];
        for (i, &b) in self.block_of.iter().enumerate() {
            out[b as usize] |= 1 << i;
        }
        out
    }
}

/// Bell numbers by the Bell triangle.
pub fn bell(n: usize) -> u64 {
    let mut row = vec![1u64];
    for _ in 0..n {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(*row.last().unwrap());
        for v in &row {
            let last = *next.last().unwrap();
            next.push(last + v);
        }
        row = next;
    }
    row[0]
}

fn check_partition_size(n: usize) -> Result<()> {
    if n > MAX_PARTITION_SIZE {
        return Err(Error::CapExceeded {
            what: "partition ground set",
            size: n,
            cap: MAX_PARTITION_SIZE,
        });
    }
    Ok(())
}

/// All partitions of `{0..n}` in lexicographic restricted-growth order.
pub fn enumerate_partitions(n: usize) -> Result<Vec<SetPartition>> {
    check_partition_size(n)?;
    let mut out = Vec::with_capacity(bell(n) as usize);
    if n == 0 {
        out.push(SetPartition {
            block_of: Vec::new(),
            num_blocks: 0,
        });
        return Ok(out);
    }
    // a[i] is the block of i; m[i] = max(a[0..i]) + 1.
    let mut a = vec![0u8; n];
    let mut m = vec![1u8; n];
    loop {
        out.push(SetPartition {
            block_of: a.clone(),
            num_blocks: (m[n - 1].max(a[n - 1] + 1)) as usize,
        });
        let mut i = n - 1;
        loop {
            if i == 0 {
                return Ok(out);
            }
            if a[i] < m[i] {
                break;
            }
            i -= 1;
        }
        a[i] += 1;
        for j in i + 1..n {
            a[j] = 0;
            m[j] = m[j - 1].max(a[j - 1] + 1);
        }
    }
}

/// Partitions of `{0..ℓ+m}` that separate every pair `(2j, 2j+1)`, `j < m`.
pub fn filtered_partitions(l: usize, m: usize) -> Result<Vec<SetPartition>> {
    if m > l {
        return Err(Error::InvalidParameter(format!("m = {m} exceeds l = {l}")));
    }
    Ok(enumerate_partitions(l + m)?
        .into_iter()
        .filter(|p| (0..m).all(|j| p.block_of(2 * j) != p.block_of(2 * j + 1)))
        .collect())
}

/// Partition lists for ground sets `0..=max_n`, built once and shared.
#[derive(Clone, Debug)]
pub struct PartitionTable {
    lists: Vec<Vec<SetPartition>>,
}

impl PartitionTable {
    pub fn new(max_n: usize) -> Result<Self> {
        check_partition_size(max_n)?;
        let lists = (0..=max_n)
            .map(enumerate_partitions)
            .collect::<Result<Vec<_>>>()?;
        Ok(PartitionTable { lists })
    }

    pub fn max_n(&self) -> usize {
        self.lists.len() - 1
    }

    pub fn get(&self, n: usize) -> Result<&[SetPartition]> {
        self.lists.get(n).map(|v| v.as_slice()).ok_or(Error::CapExceeded {
            what: "partition table",
            size: n,
            cap: self.max_n(),
        })
    }
}

/// A probability law on finitely many atoms in `R^dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteLaw {
    dim: usize,
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl FiniteLaw {
    /// `atoms` holds one row of length `dim` per atom.
    pub fn new(dim: usize, atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != dim * weights.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * weights.len(),
                found: atoms.len(),
            });
        }
        if weights.is_empty() {
            return Err(Error::InvalidParameter("empty support".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidParameter("negative or NaN weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "weights sum to {total}, not 1"
            )));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("law atoms".into()));
        }
        Ok(FiniteLaw {
            dim,
            atoms,
            weights,
        })
    }

    /// Uniform law on the given atoms.
    pub fn uniform(dim: usize, atoms: Vec<f64>) -> Result<Self> {
        let k = atoms.len().checked_div(dim).unwrap_or(0);
        Self::new(dim, atoms, vec![1.0 / k as f64; k])
    }

    /// Scalar law.
    pub fn scalar(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        Self::new(1, values, weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    /// Values of coordinate `c` across atoms.
    pub fn coordinate(&self, c: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.atoms[i * self.dim + c]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for (mj, a) in m.iter_mut().zip(self.atom(i)) {
                *mj += w * a;
            }
        }
        m
    }

    /// `E[Π_j X_{coords[j]}]`.
    pub fn joint_moment(&self, coords: &[usize]) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let a = self.atom(i);
                w * coords.iter().map(|&c| a[c]).product::<f64>()
            })
            .sum()
    }

    /// Law of `X + Y` with `X ~ self`, `Y ~ other` independent.
    pub fn independent_sum(&self, other: &FiniteLaw) -> Result<FiniteLaw> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut atoms = Vec::with_capacity(self.atoms.len() * other.len());
        let mut weights = Vec::with_capacity(self.len() * other.len());
        for i in 0..self.len() {
            for j in 0..other.len() {
                atoms.extend(self.atom(i).iter().zip(other.atom(j)).map(|(a, b)| a + b));
                weights.push(self.weights[i] * other.weights[j]);
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        FiniteLaw::new(self.dim, atoms, weights)
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Joint cumulant `κ(X_1, …, X_k)` of random variables given by their values
/// on a common finite support with the given weights.
///
/// Möbius sum over partitions of `[k]` of products of joint moments; the
/// `2^k` subset moments are computed once.
pub fn joint_cumulant(vars: &[&[f64]], weights: &[f64]) -> Result<f64> {
    let k = vars.len();
    if k > MAX_CUMULANT_ORDER {
        return Err(Error::CapExceeded {
            what: "cumulant order",
            size: k,
            cap: MAX_CUMULANT_ORDER,
        });
    }
    if k == 0 {
        return Ok(0.0);
    }
    for v in vars {
        if v.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: weights.len(),
                found: v.len(),
            });
        }
    }
    let moments = subset_moments(vars, weights);
    let mut total = 0.0;
    for p in enumerate_partitions(k)? {
        let b = p.num_blocks();
        let coef = factorial(b - 1) * if b % 2 == 1 { 1.0 } else { -1.0 };
        let prod: f64 = p.block_masks().iter().map(|&m| moments[m as usize]).product();
        total += coef * prod;
    }
    Ok(total)
}

// moments[mask] = E[Π_{i ∈ mask} X_i].
fn subset_moments(vars: &[&[f64]], weights: &[f64]) -> Vec<f64> {
    let k = vars.len();
    let mut moments = vec![0.0; 1 << k];
    let mut prod = vec![0.0; 1 << k];
    for (a, w) in weights.iter().enumerate() {
        prod[0] = 1.0;
        for mask in 1usize..(1 << k) {
            let low = mask.trailing_zeros() as usize;
            prod[mask] = prod[mask & (mask - 1)] * vars[low][a];
        }
        for (m, p) in moments.iter_mut().zip(&prod) {
            *m += w * p;
        }
    }
    moments
}

/// Mixed cumulant of the coordinates `coords` of a vector-valued law.
pub fn mixed_cumulant(law: &FiniteLaw, coords: &[usize]) -> Result<f64> {
    for &c in coords {
        if c >= law.dim() {
            return Err(Error::DimensionMismatch {
                expected: law.dim(),
                found: c + 1,
            });
        }
    }
    let cols: Vec<Vec<f64>> = coords.iter().map(|&c| law.coordinate(c)).collect();
    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    joint_cumulant(&refs, law.weights())
}

/// Scalar cumulant `κ_ℓ(X)` of coordinate 0.
pub fn scalar_cumulant(law: &FiniteLaw, l: usize) -> Result<f64> {
    mixed_cumulant(law, &vec![0; l])
}

/// Bivariate cumulants `κ_{i,j} = κ(A ×i, B ×j)` for `i + j ≤ max_order`,
/// from the moment recursion that splits off the block containing the first
/// variable. Returned as `table[i][j]`.
pub fn bivariate_cumulants(
    a: &[f64],
    b: &[f64],
    weights: &[f64],
    max_order: usize,
) -> Vec<Vec<f64>> {
    let n = max_order;
    // Raw moments m[i][j] = E[A^i B^j].
    let mut m = vec![vec![0.0; n + 1]; n + 1];
    for ((&x, &y), &w) in a.iter().zip(b).zip(weights) {
        let mut xp = w;
        for i in 0..=n {
            let mut v = xp;
            for j in 0..=(n - i) {
                m[i][j] += v;
                v *= y;
            }
            xp *= x;
        }
    }
    let binom = binomial_table(n);
    let mut k = vec![vec![0.0; n + 1]; n + 1];
    for total in 1..=n {
        for i in 0..=total {
            let j = total - i;
            let mut v = m[i][j];
            if i >= 1 {
                for p in 1..=i {
                    for q in 0..=j {
                        if p == i && q == j {
                            continue;
                        }
                        v -= binom[i - 1][p - 1] * binom[j][q] * k[p][q] * m[i - p][j - q];
                    }
                }
            } else {
                for q in 1..j {
                    v -= binom[j - 1][q - 1] * k[0][q] * m[0][j - q];
                }
            }
            k[i][j] = v;
        }
    }
    k
}

/// Pascal triangle `C[n][k]` for `n ≤ max`.
pub fn binomial_table(max: usize) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; max + 1]; max + 1];
    for n in 0..=max {
        c[n][0] = 1.0;
        for k in 1..=n {
            c[n][k] = c[n - 1][k - 1] + if k < n { c[n - 1][k] } else { 0.0 };
        }
    }
    c
}

/// Dense tensor of order `ℓ` over `R^dim`, row-major in its indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensor {
    order: usize,
    dim: usize,
    data: Vec<f64>,
}

impl SymTensor {
    pub fn zeros(order: usize, dim: usize) -> Result<Self> {
        let size = tensor_size(order, dim)?;
        Ok(SymTensor {
            order,
            dim,
            data: vec![0.0; size],
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn offset(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    /// Multi-index of flat position `flat`.
    pub fn index_of(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.order];
        for slot in idx.iter_mut().rev() {
            *slot = flat % self.dim;
            flat /= self.dim;
        }
        idx
    }

    /// Order-2 tensor as a matrix.
    pub fn to_mat(&self) -> Option<Mat> {
        (self.order == 2).then(|| Mat::from_vec(self.dim, self.dim, self.data.clone()).unwrap())
    }

    /// Largest deviation from full index symmetry.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for flat in 0..self.data.len() {
            let mut idx = self.index_of(flat);
            let v = self.data[flat];
            idx.sort_unstable();
            worst = worst.max((v - self.get(&idx)).abs());
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &SymTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

fn tensor_size(order: usize, dim: usize) -> Result<usize> {
    let mut size: usize = 1;
    for _ in 0..order {
        size = size.saturating_mul(dim);
    }
    if size > MAX_TENSOR_ENTRIES {
        return Err(Error::CapExceeded {
            what: "tensor entries",
            size,
            cap: MAX_TENSOR_ENTRIES,
        });
    }
    Ok(size)
}

/// Calls `f` once per nondecreasing multi-index of length `order`.
pub(crate) fn for_each_sorted_index(order: usize, dim: usize, mut f: impl FnMut(&[usize])) {
    if dim == 0 {
        return;
    }
    let mut idx = vec![0usize; order];
    loop {
        f(&idx);
        let mut p = order;
        loop {
            if p == 0 {
                return;
            }
            p -= 1;
            if idx[p] + 1 < dim {
                idx[p] += 1;
                let v = idx[p];
                for q in idx.iter_mut().skip(p + 1) {
                    *q = v;
                }
                break;
            }
        }
    }
}

/// Fills every permutation of `idx` with `v`.
pub(crate) fn scatter_symmetric(t: &mut SymTensor, idx: &[usize], v: f64) {
    let mut perm = idx.to_vec();
    perm.sort_unstable();
    loop {
        t.set(&perm, v);
        // next lexicographic permutation
        let n = perm.len();
        if n < 2 {
            return;
        }
        let mut i = n - 1;
        while i > 0 && perm[i - 1] >= perm[i] {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        let mut j = n - 1;
        while perm[j] <= perm[i - 1] {
            j -= 1;
        }
        perm.swap(i - 1, j);
        perm[i..].reverse();
    }
}

/// Order-`ℓ` cumulant tensor of a vector-valued finite law.
pub fn cumulant_tensor(law: &FiniteLaw, l: usize) -> Result<SymTensor> {
    if l > MAX_TENSOR_ORDER {
        return Err(Error::CapExceeded {
            what: "cumulant tensor order",
            size: l,
            cap: MAX_TENSOR_ORDER,
        });
    }
    let d = law.dim();
    let mut t = SymTensor::zeros(l, d)?;
    if l == 0 {
        return Ok(t);
    }
    let cols: Vec<Vec<f64>> = (0..d).map(|c| law.coordinate(c)).collect();
    let mut err = None;
    for_each_sorted_index(l, d, |idx| {
        let vars: Vec<&[f64]> = idx.iter().map(|&c| cols[c].as_slice()).collect();
        match joint_cumulant(&vars, law.weights()) {
            Ok(v) => scatter_symmetric(&mut t, idx, v),
            Err(e) => err = Some(e),
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_counts() {
        assert_eq!(enumerate_partitions(1).unwrap().len(), 1);
        assert_eq!(enumerate_partitions(4).unwrap().len(), 15);
        assert_eq!(enumerate_partitions(6).unwrap().len(), 203);
        assert_eq!(bell(10), 115_975);
        assert!(enumerate_partitions(11).is_err());
    }

    #[test]
    fn filtered_counts() {
        assert_eq!(filtered_partitions(2, 0).unwrap().len(), 2);
        assert_eq!(filtered_partitions(2, 2).unwrap().len(), 7);
        let p = filtered_partitions(1, 1).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].blocks(), vec![vec![0], vec![1]]);
    }

    #[test]
    fn rgs_validation() {
        assert!(SetPartition::from_rgs(vec![0, 2]).is_err());
        let p = SetPartition::from_rgs(vec![0, 1, 0]).unwrap();
        assert_eq!(p.num_blocks(), 2);
        assert_eq!(p.block_masks(), vec![0b101, 0b010]);
    }

    #[test]
    fn low_order_cumulants() {
        let law = FiniteLaw::scalar(vec![0.0, 1.0, 3.0], vec![0.2, 0.5, 0.3]).unwrap();
        let mean = 0.5 + 0.9;
        let var = 0.5 + 0.3 * 9.0 - mean * mean;
        assert!((scalar_cumulant(&law, 1).unwrap() - mean).abs() < 1e-14);
        assert!((scalar_cumulant(&law, 2).unwrap() - var).abs() < 1e-14);
    }

    #[test]
    fn bernoulli_third_cumulant() {
        let p = 0.3;
        let law = FiniteLaw::scalar(vec![0.0, 1.0], vec![1.0 - p, p]).unwrap();
        let k3 = scalar_cumulant(&law, 3).unwrap();
        assert!((k3 - p * (1.0 - p) * (1.0 - 2.0 * p)).abs() < 1e-15);
    }

    #[test]
    fn bivariate_matches_partition_sum() {
        let a = [0.3, -1.2, 2.0, 0.7];
        let b = [1.1, 0.4, -0.6, 2.2];
        let w = [0.1, 0.2, 0.3, 0.4];
        let table = bivariate_cumulants(&a, &b, &w, 6);
        for i in 0..=6 {
            for j in 0..=(6 - i) {
                if i + j == 0 {
                    continue;
                }
                let mut vars: Vec<&[f64]> = vec![&a[..]; i];
                vars.extend(std::iter::repeat_n(&b[..], j));
                let direct = joint_cumulant(&vars, &w).unwrap();
                assert!(
                    (table[i][j] - direct).abs() < 1e-10 * (1.0 + direct.abs()),
                    "({i},{j}): {} vs {direct}",
                    table[i][j]
                );
            }
        }
    }

    #[test]
    fn tensor_low_orders() {
        let law = FiniteLaw::uniform(2, vec![1.0, 0.0, 0.0, 2.0, -1.0, 1.0]).unwrap();
        let t1 = cumulant_tensor(&law, 1).unwrap();
        assert_eq!(t1.as_slice(), law.mean().as_slice());
        let t2 = cumulant_tensor(&law, 2).unwrap().to_mat().unwrap();
        let ev = crate::linalg::sym_eigenvalues(&t2).unwrap();
        assert!(ev[0] >= -1e-14);
        // Sign-flip symmetric law: odd cumulants vanish.
        let sym = FiniteLaw::uniform(2, vec![1.0, 2.0, -1.0, -2.0, 0.5, -3.0, -0.5, 3.0]).unwrap();
        let t3 = cumulant_tensor(&sym, 3).unwrap();
        assert!(t3.as_slice().iter().all(|v| v.abs() < 1e-14));
        assert!(cumulant_tensor(&law, 5).is_err());
    }

    #[test]
    fn sorted_index_iteration() {
        let mut count = 0;
        for_each_sorted_index(3, 4, |_| count += 1);
        assert_eq!(count, 20); // C(4+3-1, 3)
    }
}
