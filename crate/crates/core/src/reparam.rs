//! Invariant-coordinate charts `φ(θ)` for the concrete groups, and the
//! pull-back of gradients and Hessians from `θ` to `φ` coordinates.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::math::{self, TAU};
use crate::mra;

/// Largest Jacobian condition number accepted by [`Chart::pullback`].
pub const MAX_CONDITION: f64 = 1e8;
/// Radii and Fourier moduli below this are outside every chart.
pub const MIN_RADIUS: f64 = 1e-12;
/// Entries closer than this are treated as repeated by the power-sum chart.
pub const MIN_SEPARATION: f64 = 1e-10;

/// Which coordinates the chart uses.
#[derive(Clone, Debug, PartialEq)]
pub enum ChartKind {
    Identity,
    /// `(‖θ‖, Arg θ − Arg θ*)` on `R²` for `rotations(k)`.
    Polar2 { k: usize },
    /// `p_k = (1/d) Σ θ_j^k`, `k = 1..d`.
    PowerSums,
    /// `(v_0, r_1..r_m, [v_{d/2}], t_1..t_m)`.
    FourierMra,
}

/// A chart with its phase reference.
#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    kind: ChartKind,
    dim: usize,
    reference: Vec<f64>,
}

/// `φ(θ)` with Jacobian `J = dφ/dθ` (row `i` is `∇φ_i`) and the Hessian of
/// each coordinate function.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartPoint {
    pub phi: Vec<f64>,
    pub jacobian: Mat,
    pub coord_hessians: Vec<Mat>,
}

fn mismatch(expected: usize, found: usize) -> Error {
    Error::DimensionMismatch { expected, found }
}

impl Chart {
    pub fn identity(d: usize) -> Self {
        Chart {
            kind: ChartKind::Identity,
            dim: d,
            reference: vec![0.0; d],
        }
    }

    pub fn polar2(theta_star: &[f64], k: usize) -> Result<Self> {
        if theta_star.len() != 2 {
            return Err(mismatch(2, theta_star.len()));
        }
        if linalg::norm(theta_star) < MIN_RADIUS {
            return Err(Error::OutOfDomain("reference radius is zero".into()));
        }
        if k == 0 {
            return Err(Error::InvalidOrder(k));
        }
        Ok(Chart {
            kind: ChartKind::Polar2 { k },
            dim: 2,
            reference: theta_star.to_vec(),
        })
    }

    pub fn power_sums(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("empty dimension".into()));
        }
        Ok(Chart {
            kind: ChartKind::PowerSums,
            dim: d,
            reference: vec![0.0; d],
        })
    }

    pub fn fourier_mra(theta_star: &[f64]) -> Result<Self> {
        // Validates the reference coefficients.
        mra::fourier(theta_star, theta_star)?;
        Ok(Chart {
            kind: ChartKind::FourierMra,
            dim: theta_star.len(),
            reference: theta_star.to_vec(),
        })
    }

    pub fn kind(&self) -> &ChartKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Series order `ℓ` whose block each coordinate belongs to.
    pub fn bands(&self) -> Vec<usize> {
        let d = self.dim;
        match self.kind {
            ChartKind::Identity => vec![1; d],
            ChartKind::Polar2 { k } => vec![2, k],
            ChartKind::PowerSums => (1..=d).collect(),
            ChartKind::FourierMra => {
                let m = mra::num_phases(d);
                let mut b = vec![1];
                b.extend(std::iter::repeat_n(2, m + d.is_multiple_of(2) as usize));
                b.extend(std::iter::repeat_n(3, m));
                b
            }
        }
    }

    /// Number of coordinates in each band `ℓ = 1..L`.
    pub fn band_dims(&self) -> Vec<usize> {
        let bands = self.bands();
        let l = bands.iter().copied().max().unwrap_or(0);
        (1..=l).map(|b| bands.iter().filter(|x| **x == b).count()).collect()
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim {
            return Err(mismatch(self.dim, theta.len()));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("chart input".into()));
        }
        Ok(())
    }

    /// Coordinates, Jacobian and coordinate Hessians at `θ`.
    pub fn eval(&self, theta: &[f64]) -> Result<ChartPoint> {
        self.check(theta)?;
        match self.kind {
            ChartKind::Identity => Ok(ChartPoint {
                phi: theta.to_vec(),
                jacobian: Mat::identity(self.dim),
                coord_hessians: vec![Mat::zeros(self.dim, self.dim); self.dim],
            }),
            ChartKind::Polar2 { .. } => self.eval_polar(theta),
            ChartKind::PowerSums => self.eval_power_sums(theta),
            ChartKind::FourierMra => self.eval_fourier(theta),
        }
    }

    /// Coordinates only.
    pub fn phi(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval(theta)?.phi)
    }

    fn eval_polar(&self, theta: &[f64]) -> Result<ChartPoint> {
        let (x, y) = (theta[0], theta[1]);
        let r2 = x * x + y * y;
        let r = math::sqrt(r2);
        if r < MIN_RADIUS {
            return Err(Error::OutOfDomain("polar chart: coordinate 0 (radius) vanishes".into()));
        }
        let ref_angle = math::atan2(self.reference[1], self.reference[0]);
        let t = wrap_angle(math::atan2(y, x) - ref_angle);
        let r3 = r2 * r;
        let r4 = r2 * r2;
        let jacobian = Mat::from_rows(&[[x / r, y / r], [-y / r2, x / r2]])?;
        let hr = Mat::from_rows(&[[y * y / r3, -x * y / r3], [-x * y / r3, x * x / r3]])?;
        let off = (y * y - x * x) / r4;
        let ht = Mat::from_rows(&[[2.0 * x * y / r4, off], [off, -2.0 * x * y / r4]])?;
        Ok(ChartPoint {
            phi: vec![r, t],
            jacobian,
            coord_hessians: vec![hr, ht],
        })
    }

    fn eval_power_sums(&self, theta: &[f64]) -> Result<ChartPoint> {
        let d = self.dim;
        for i in 0..d {
            for j in i + 1..d {
                if (theta[i] - theta[j]).abs() < MIN_SEPARATION {
                    return Err(Error::OutOfDomain(format!(
                        "power-sum chart: entries {i} and {j} coincide"
                    )));
                }
            }
        }
        let dd = d as f64;
        let mut phi = vec![0.0; d];
        let mut jacobian = Mat::zeros(d, d);
        let mut coord_hessians = Vec::with_capacity(d);
        for k in 1..=d {
            let mut h = Mat::zeros(d, d);
            for (j, x) in theta.iter().enumerate() {
                phi[k - 1] += math::powi(*x, k as i32) / dd;
                jacobian[(k - 1, j)] = k as f64 / dd * math::powi(*x, k as i32 - 1);
                if k >= 2 {
                    h[(j, j)] = (k * (k - 1)) as f64 / dd * math::powi(*x, k as i32 - 2);
                }
            }
            coord_hessians.push(h);
        }
        Ok(ChartPoint {
            phi,
            jacobian,
            coord_hessians,
        })
    }

    fn eval_fourier(&self, theta: &[f64]) -> Result<ChartPoint> {
        let d = self.dim;
        let coords = mra::fourier(theta, &self.reference)?;
        let m = coords.r.len();
        let sq = 1.0 / math::sqrt(d as f64);
        let n = self.dim;
        let mut phi = Vec::with_capacity(n);
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut hess: Vec<Mat> = Vec::with_capacity(n);
        phi.push(coords.v0);
        rows.push(vec![sq; d]);
        hess.push(Mat::zeros(d, d));
        let basis = |k: usize| -> (Vec<f64>, Vec<f64>) {
            (0..d)
                .map(|j| {
                    let a = TAU * ((j * k) % d) as f64 / d as f64;
                    (math::cos(a) * sq, math::sin(a) * sq)
                })
                .unzip()
        };
        let mut phase_rows = Vec::with_capacity(m);
        let mut phase_hess = Vec::with_capacity(m);
        for k in 1..=m {
            let z: Complex64 = coords.v[k - 1];
            let (a, b) = (z.re, z.im);
            let r = coords.r[k - 1];
            if r < MIN_RADIUS {
                return Err(Error::OutOfDomain(format!(
                    "Fourier chart: coordinate r_{k} vanishes"
                )));
            }
            let (c, s) = basis(k);
            let r2 = r * r;
            let r3 = r2 * r;
            let r4 = r2 * r2;
            phi.push(r);
            rows.push((0..d).map(|j| (a * c[j] + b * s[j]) / r).collect());
            hess.push(bilinear(&c, &s, b * b / r3, a * a / r3, -a * b / r3));
            phase_rows.push((0..d).map(|j| (a * s[j] - b * c[j]) / r2).collect());
            phase_hess.push(bilinear(
                &c,
                &s,
                2.0 * a * b / r4,
                -2.0 * a * b / r4,
                (b * b - a * a) / r4,
            ));
        }
        if let Some(h) = coords.v_half {
            phi.push(h);
            rows.push((0..d).map(|j| if j % 2 == 0 { sq } else { -sq }).collect());
            hess.push(Mat::zeros(d, d));
        }
        phi.extend(coords.t.iter().copied());
        rows.extend(phase_rows);
        hess.extend(phase_hess);
        Ok(ChartPoint {
            phi,
            jacobian: Mat::from_rows(&rows)?,
            coord_hessians: hess,
        })
    }

    /// `θ(φ)`. For the power-sum chart the roots are assigned in the rank
    /// order of `near` (ascending when absent).
    pub fn inverse(&self, phi: &[f64], near: Option<&[f64]>) -> Result<Vec<f64>> {
        if phi.len() != self.dim {
            return Err(mismatch(self.dim, phi.len()));
        }
        match self.kind {
            ChartKind::Identity => Ok(phi.to_vec()),
            ChartKind::Polar2 { .. } => {
                let ang = math::atan2(self.reference[1], self.reference[0]) + phi[1];
                Ok(vec![phi[0] * math::cos(ang), phi[0] * math::sin(ang)])
            }
            ChartKind::PowerSums => {
                let d = self.dim;
                let roots = power_sum_roots(phi)?;
                let Some(near) = near else {
                    return Ok(roots);
                };
                if near.len() != d {
                    return Err(mismatch(d, near.len()));
                }
                let mut order: Vec<usize> = (0..d).collect();
                order.sort_by(|a, b| near[*a].total_cmp(&near[*b]));
                let mut theta = vec![0.0; d];
                for (rank, idx) in order.into_iter().enumerate() {
                    theta[idx] = roots[rank];
                }
                Ok(theta)
            }
            ChartKind::FourierMra => {
                let d = self.dim;
                let m = mra::num_phases(d);
                let mut c = mra::fourier(&self.reference, &self.reference)?;
                c.v0 = phi[0];
                for k in 0..m {
                    let base = c.v[k].arg() + phi[1 + m + d.is_multiple_of(2) as usize + k];
                    c.v[k] = Complex64::from_polar(phi[1 + k], base);
                }
                if d.is_multiple_of(2) {
                    c.v_half = Some(phi[1 + m]);
                }
                Ok(mra::inv_fourier(&c))
            }
        }
    }

    /// Jacobian condition number at `θ`.
    pub fn condition(&self, theta: &[f64]) -> Result<f64> {
        Ok(linalg::condition_number(&self.eval(theta)?.jacobian))
    }

    /// `∇_φ f = J^{−T}∇_θ f` and
    /// `∇²_φ f = J^{−T}(∇²_θ f − Σ_i (∇_φ f)_i ∇²φ_i) J^{−1}`.
    pub fn pullback(&self, theta: &[f64], grad: &[f64], hess: &Mat) -> Result<(Vec<f64>, Mat)> {
        let pt = self.eval(theta)?;
        pullback_at(&pt, grad, hess)
    }
}

/// [`Chart::pullback`] at an already evaluated chart point.
pub fn pullback_at(pt: &ChartPoint, grad: &[f64], hess: &Mat) -> Result<(Vec<f64>, Mat)> {
    let d = pt.phi.len();
    if grad.len() != d {
        return Err(mismatch(d, grad.len()));
    }
    if hess.rows() != d || hess.cols() != d {
        return Err(mismatch(d, hess.rows()));
    }
    let cond = linalg::condition_number(&pt.jacobian);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::Singular);
    }
    let jinv = linalg::inverse(&pt.jacobian)?;
    let jinv_t = jinv.transpose();
    let grad_phi = jinv_t.matvec(grad);
    let mut inner = hess.clone();
    for (g, h) in grad_phi.iter().zip(&pt.coord_hessians) {
        inner.add_scaled(-g, h);
    }
    let mut hess_phi = jinv_t.matmul(&inner).matmul(&jinv);
    hess_phi.symmetrize();
    Ok((grad_phi, hess_phi))
}

/// Angles use `[0, 2π)`, like the Fourier phases.
fn wrap_angle(x: f64) -> f64 {
    mra::wrap_phase(x)
}

/// `f_aa ccᵀ + f_bb ssᵀ + f_ab (csᵀ + scᵀ)`.
fn bilinear(c: &[f64], s: &[f64], faa: f64, fbb: f64, fab: f64) -> Mat {
    let d = c.len();
    let mut m = Mat::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = faa * c[i] * c[j] + fbb * s[i] * s[j] + fab * (c[i] * s[j] + s[i] * c[j]);
        }
    }
    m
}

/// Sorted real `θ` with `(1/d) Σ θ_j^k = p_k`, via Newton's identities and
/// companion-matrix roots.
fn power_sum_roots(p: &[f64]) -> Result<Vec<f64>> {
    let d = p.len();
    let sums: Vec<f64> = p.iter().map(|x| x * d as f64).collect();
    // e[k]: elementary symmetric polynomials.
    let mut e = vec![0.0; d + 1];
    e[0] = 1.0;
    for k in 1..=d {
        let mut acc = 0.0;
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            acc += sign * e[k - i] * sums[i - 1];
        }
        e[k] = acc / k as f64;
    }
    // x^d − e1 x^{d−1} + e2 x^{d−2} − …
    let coeffs: Vec<f64> = (0..d)
        .map(|i| {
            let k = d - i;
            if k.is_multiple_of(2) {
                e[k]
            } else {
                -e[k]
            }
        })
        .collect();
    linalg::real_roots_monic(&coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_sums_example() {
        let c = Chart::power_sums(3).unwrap();
        let phi = c.phi(&[1.0, 2.0, 3.0]).unwrap();
        assert!((phi[0] - 2.0).abs() < 1e-15);
        assert!((phi[1] - 14.0 / 3.0).abs() < 1e-14);
        assert!((phi[2] - 12.0).abs() < 1e-14);
        let back = c.inverse(&phi, Some(&[3.0, 1.0, 2.0])).unwrap();
        for (a, b) in back.iter().zip([3.0, 1.0, 2.0]) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(c.phi(&[1.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn polar_at_reference() {
        let ts = [0.6, -0.8];
        let c = Chart::polar2(&ts, 3).unwrap();
        let phi = c.phi(&ts).unwrap();
        assert!((phi[0] - 1.0).abs() < 1e-15 && phi[1] == 0.0);
        assert_eq!(c.band_dims(), vec![0, 1, 1]);
        assert!(c.phi(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn fourier_bands() {
        let c = Chart::fourier_mra(&[1.0, 0.3, -0.2, 0.5, 0.1]).unwrap();
        assert_eq!(c.band_dims(), vec![1, 2, 2]);
        let c = Chart::fourier_mra(&[1.0, 0.3, -0.2, 0.5, 0.1, 0.7]).unwrap();
        assert_eq!(c.band_dims(), vec![1, 3, 2]);
    }

    #[test]
    fn identity_pullback() {
        let c = Chart::identity(2);
        let h = Mat::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap();
        let (g, hp) = c.pullback(&[0.3, 0.1], &[1.0, -2.0], &h).unwrap();
        assert_eq!(g, vec![1.0, -2.0]);
        assert!(hp.max_abs_diff(&h) < 1e-15);
    }
}
