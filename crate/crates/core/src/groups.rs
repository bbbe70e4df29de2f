//! Finite orthogonal matrix groups, their orbits and kernel decompositions.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::math;

/// Default cap on the group order.
pub const DEFAULT_ORDER_CAP: usize = 5040;

const ORTHO_TOL: f64 = 1e-12;
const ELEMENT_TOL: f64 = 1e-10;

/// A finite subgroup of O(d), stored as its list of elements with the identity
/// first.
#[derive(Clone, Debug)]
pub struct GroupAction {
    name: String,
    dim: usize,
    elements: Vec<Mat>,
    index: BTreeMap<Vec<i64>, usize>,
}

impl PartialEq for GroupAction {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.dim == other.dim && self.elements == other.elements
    }
}

// Elements are bucketed by entries rounded to a 1e-6 grid; distinct group
// elements differ by far more, and roundoff stays far below the grid.
fn element_key(m: &Mat) -> Vec<i64> {
    m.as_slice()
        .iter()
        .map(|v| libm::round(v * 1e6) as i64)
        .collect()
}

fn build_index(elements: &[Mat]) -> BTreeMap<Vec<i64>, usize> {
    let mut index = BTreeMap::new();
    for (i, e) in elements.iter().enumerate() {
        index.entry(element_key(e)).or_insert(i);
    }
    index
}

impl GroupAction {
    /// Builds and validates a group from explicit elements.
    pub fn new(name: impl Into<String>, dim: usize, elements: Vec<Mat>) -> Result<Self> {
        let index = build_index(&elements);
        let g = GroupAction {
            name: name.into(),
            dim,
            elements,
            index,
        };
        g.validate()?;
        Ok(g)
    }

    /// Checks orthogonality, identity-first, closure and inverses.
    pub fn validate(&self) -> Result<()> {
        let k = self.elements.len();
        if k == 0 {
            return Err(Error::InvalidOrder(0));
        }
        if self.index.len() != k {
            return Err(Error::InvalidGroup("repeated elements".to_string()));
        }
        let id = Mat::identity(self.dim);
        for (i, g) in self.elements.iter().enumerate() {
            if g.rows() != self.dim || g.cols() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: g.rows().max(g.cols()),
                });
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("group element {i}")));
            }
            if g.transpose().matmul(g).max_abs_diff(&id) > ORTHO_TOL {
                return Err(Error::InvalidGroup(format!("element {i} is not orthogonal")));
            }
        }
        if self.elements[0].max_abs_diff(&id) > ELEMENT_TOL {
            return Err(Error::InvalidGroup("element 0 is not the identity".to_string()));
        }
        for (i, gi) in self.elements.iter().enumerate() {
            let mut has_inverse = false;
            for (j, gj) in self.elements.iter().enumerate() {
                let prod = gi.matmul(gj);
                if self.find(&prod).is_none() {
                    return Err(Error::InvalidGroup(format!(
                        "product of elements {i} and {j} is not in the group"
                    )));
                }
                has_inverse |= prod.max_abs_diff(&id) <= ELEMENT_TOL;
            }
            if !has_inverse {
                return Err(Error::InvalidGroup(format!("element {i} has no inverse")));
            }
        }
        Ok(())
    }

    /// Index of the element equal to `m` within the closure tolerance.
    pub fn find(&self, m: &Mat) -> Option<usize> {
        if m.rows() != self.dim || m.cols() != self.dim {
            return None;
        }
        if let Some(&i) = self.index.get(&element_key(m)) {
            if self.elements[i].max_abs_diff(m) <= ELEMENT_TOL {
                return Some(i);
            }
        }
        // Fall back to a scan for entries that straddle a rounding boundary.
        self.elements
            .iter()
            .position(|g| g.max_abs_diff(m) <= ELEMENT_TOL)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Group order K.
    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[Mat] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &Mat {
        &self.elements[i]
    }

    /// `g_i θ`.
    pub fn apply(&self, i: usize, theta: &[f64]) -> Vec<f64> {
        self.elements[i].matvec(theta)
    }

    /// All points `gθ` in element order.
    pub fn orbit_points(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        self.elements.iter().map(|g| g.matvec(theta)).collect()
    }

    /// Whether `E_g[g] = 0` within `tol`.
    pub fn is_mean_zero(&self, tol: f64) -> bool {
        mean_projection(self).max_abs() <= tol
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        Ok(())
    }
}

fn rotation2(angle: f64) -> Mat {
    let (s, c) = (math::sin(angle), math::cos(angle));
    Mat::from_vec(2, 2, vec![c, -s, s, c]).expect("2x2")
}

/// `{Id, h, …, h^{K−1}}` with `h` the planar rotation by 2π/K.
pub fn rotations(k: usize) -> Result<GroupAction> {
    if k == 0 {
        return Err(Error::InvalidOrder(0));
    }
    check_cap(k, DEFAULT_ORDER_CAP)?;
    // Each power is built from its own angle rather than by repeated
    // multiplication, keeping every element within roundoff of exact.
    let elements = (0..k)
        .map(|j| {
            let mut m = rotation2(math::TAU * j as f64 / k as f64);
            for v in m.as_mut_slice() {
                if v.abs() < 1e-15 {
                    *v = 0.0;
                }
            }
            m
        })
        .collect();
    GroupAction::new(format!("rotations({k})"), 2, elements)
}

/// The `d` cyclic coordinate shifts; `h` maps `(θ₀,…,θ_{d−1})` to
/// `(θ_{d−1}, θ₀, …, θ_{d−2})`.
pub fn cyclic(d: usize) -> Result<GroupAction> {
    if d == 0 {
        return Err(Error::InvalidOrder(0));
    }
    check_cap(d, DEFAULT_ORDER_CAP)?;
    let elements = (0..d)
        .map(|a| {
            let mut m = Mat::zeros(d, d);
            for j in 0..d {
                m[((j + a) % d, j)] = 1.0;
            }
            m
        })
        .collect();
    GroupAction::new(format!("cyclic({d})"), d, elements)
}

/// All `d!` coordinate permutations with the default order cap.
pub fn symmetric(d: usize) -> Result<GroupAction> {
    symmetric_with_cap(d, DEFAULT_ORDER_CAP)
}

/// All `d!` coordinate permutations in lexicographic order (identity first).
pub fn symmetric_with_cap(d: usize, cap: usize) -> Result<GroupAction> {
    if d == 0 {
        return Err(Error::InvalidOrder(0));
    }
    let mut order: usize = 1;
    for i in 2..=d {
        order = order.saturating_mul(i);
    }
    check_cap(order, cap)?;
    let mut perm: Vec<usize> = (0..d).collect();
    let mut elements = Vec::with_capacity(order);
    loop {
        let mut m = Mat::zeros(d, d);
        for (i, p) in perm.iter().enumerate() {
            m[(i, *p)] = 1.0;
        }
        elements.push(m);
        if !next_permutation(&mut perm) {
            break;
        }
    }
    GroupAction::new(format!("symmetric({d})"), d, elements)
}

fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// The trivial group `{Id_d}`.
pub fn trivial(d: usize) -> Result<GroupAction> {
    GroupAction::new(format!("trivial({d})"), d, vec![Mat::identity(d)])
}

/// Block-diagonal product `G1 × G2` acting on `R^{d1+d2}`.
pub fn product(g1: &GroupAction, g2: &GroupAction) -> Result<GroupAction> {
    product_with_cap(g1, g2, DEFAULT_ORDER_CAP)
}

pub fn product_with_cap(g1: &GroupAction, g2: &GroupAction, cap: usize) -> Result<GroupAction> {
    let order = g1.order().saturating_mul(g2.order());
    check_cap(order, cap)?;
    let (d1, d2) = (g1.dim(), g2.dim());
    let mut elements = Vec::with_capacity(order);
    for a in g1.elements() {
        for b in g2.elements() {
            let mut m = Mat::zeros(d1 + d2, d1 + d2);
            for i in 0..d1 {
                for j in 0..d1 {
                    m[(i, j)] = a[(i, j)];
                }
            }
            for i in 0..d2 {
                for j in 0..d2 {
                    m[(d1 + i, d1 + j)] = b[(i, j)];
                }
            }
            elements.push(m);
        }
    }
    GroupAction::new(
        format!("{}x{}", g1.name(), g2.name()),
        d1 + d2,
        elements,
    )
}

fn check_cap(order: usize, cap: usize) -> Result<()> {
    if order > cap {
        return Err(Error::GroupTooLarge { order, cap });
    }
    Ok(())
}

/// `E_g[g] = (1/K) Σ g`, the orthogonal projection onto the fixed subspace.
pub fn mean_projection(g: &GroupAction) -> Mat {
    let mut p = Mat::zeros(g.dim(), g.dim());
    for e in g.elements() {
        p.add_scaled(1.0, e);
    }
    p.scale(1.0 / g.order() as f64)
}

/// Splitting `R^d = span(V1) ⊕ span(V2)` where `G` fixes `V1` pointwise and
/// acts without fixed vectors on `V2`.
#[derive(Clone, Debug)]
pub struct KernelDecomposition {
    /// `d × d1` orthonormal basis of the fixed subspace.
    pub v1: Mat,
    /// `d × d2` orthonormal basis of the kernel of `E_g[g]`.
    pub v2: Mat,
    /// The mean-zero group `{V2ᵀ g V2}`; `None` when `d2 = 0`.
    pub reduced: Option<GroupAction>,
}

impl KernelDecomposition {
    pub fn d1(&self) -> usize {
        self.v1.cols()
    }

    pub fn d2(&self) -> usize {
        self.v2.cols()
    }

    /// `(V1ᵀθ, V2ᵀθ)`.
    pub fn split(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.v1.tr_matvec(theta), self.v2.tr_matvec(theta))
    }
}

/// Eigen-splits the mean projection at threshold 0.5.
pub fn kernel_decomposition(g: &GroupAction) -> Result<KernelDecomposition> {
    let d = g.dim();
    let p = mean_projection(g);
    let eig = linalg::sym_eigen(&p)?;
    let mut fixed = Vec::new();
    let mut moving = Vec::new();
    for (c, lam) in eig.values.iter().enumerate() {
        let mut v = eig.vectors.col(c);
        // Sign convention: first entry of largest magnitude is positive.
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() + 1e-12 { x } else { m });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        if *lam > 0.5 {
            fixed.push(v);
        } else {
            moving.push(v);
        }
    }
    let v1 = columns(d, &fixed);
    let v2 = columns(d, &moving);
    let reduced = if moving.is_empty() {
        None
    } else {
        let d2 = moving.len();
        let elements: Vec<Mat> = g
            .elements()
            .iter()
            .map(|e| v2.transpose().matmul(e).matmul(&v2))
            .collect();
        let mut elements = elements;
        // Remove eigenvector roundoff from the identity image.
        elements[0] = Mat::identity(d2);
        Some(GroupAction::new(format!("{}|kernel", g.name()), d2, elements)?)
    };
    Ok(KernelDecomposition { v1, v2, reduced })
}

fn columns(d: usize, cols: &[Vec<f64>]) -> Mat {
    let mut m = Mat::zeros(d, cols.len());
    for (j, c) in cols.iter().enumerate() {
        for i in 0..d {
            m[(i, j)] = c[i];
        }
    }
    m
}

/// The orbit `{gθ}` with a count of distinct points.
#[derive(Clone, Debug, PartialEq)]
pub struct Orbit {
    pub points: Vec<Vec<f64>>,
    pub distinct_count: usize,
}

/// Distance below which two orbit points are considered equal.
pub const ORBIT_DISTINCT_TOL: f64 = 1e-8;

pub fn orbit(g: &GroupAction, theta: &[f64]) -> Result<Orbit> {
    g.check_dim(theta)?;
    let points = g.orbit_points(theta);
    let mut reps: Vec<&Vec<f64>> = Vec::new();
    for p in &points {
        if reps.iter().all(|r| linalg::dist(r, p) > ORBIT_DISTINCT_TOL) {
            reps.push(p);
        }
    }
    let distinct_count = reps.len();
    Ok(Orbit {
        points,
        distinct_count,
    })
}

/// `min_g ‖θ − gμ‖`.
pub fn orbit_distance(g: &GroupAction, theta: &[f64], mu: &[f64]) -> Result<f64> {
    g.check_dim(theta)?;
    g.check_dim(mu)?;
    Ok(g
        .elements()
        .iter()
        .map(|e| linalg::dist(theta, &e.matvec(mu)))
        .fold(f64::INFINITY, f64::min))
}

/// `min_{g ≠ h} ‖gθ − hθ‖`; zero when the orbit has repeated points.
pub fn min_pairwise_orbit_distance(g: &GroupAction, theta: &[f64]) -> Result<f64> {
    g.check_dim(theta)?;
    let pts = g.orbit_points(theta);
    let mut best = f64::INFINITY;
    for i in 0..pts.len() {
        for j in 0..i {
            best = best.min(linalg::dist(&pts[i], &pts[j]));
        }
    }
    Ok(best)
}
