//! Central finite differences with one Richardson extrapolation step
//! (step sizes `h` and `h/2`), used where no analytic derivative exists.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::linalg::Mat;

/// Default step for functions of moderate scale: `1e-3·max(1, ‖x‖)`.
pub fn default_step(x: &[f64]) -> f64 {
    1e-3 * crate::linalg::norm(x).max(1.0)
}

/// Gradient of a scalar function.
pub fn gradient<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut out = vec![0.0; x.len()];
    let mut y = x.to_vec();
    for i in 0..x.len() {
        let mut central = |step: f64, y: &mut Vec<f64>| -> Result<f64> {
            y[i] = x[i] + step;
            let fp = f(y)?;
            y[i] = x[i] - step;
            let fm = f(y)?;
            y[i] = x[i];
            Ok((fp - fm) / (2.0 * step))
        };
        let d1 = central(h, &mut y)?;
        let d2 = central(h / 2.0, &mut y)?;
        out[i] = (4.0 * d2 - d1) / 3.0;
    }
    Ok(out)
}

/// Hessian of a scalar function from second differences.
pub fn hessian<F>(mut f: F, x: &[f64], h: f64) -> Result<Mat>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let d = x.len();
    let mut out = Mat::zeros(d, d);
    let mut y = x.to_vec();
    for i in 0..d {
        for j in 0..=i {
            let mut second = |step: f64, y: &mut Vec<f64>| -> Result<f64> {
                let mut eval = |si: f64, sj: f64, y: &mut Vec<f64>| -> Result<f64> {
                    y.copy_from_slice(x);
                    y[i] += si * step;
                    y[j] += sj * step;
                    f(y)
                };
                let v = eval(1.0, 1.0, y)? - eval(1.0, -1.0, y)? - eval(-1.0, 1.0, y)?
                    + eval(-1.0, -1.0, y)?;
                Ok(v / (4.0 * step * step))
            };
            let d1 = second(h, &mut y)?;
            let d2 = second(h / 2.0, &mut y)?;
            let v = (4.0 * d2 - d1) / 3.0;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Jacobian of a vector function, rows indexed by output.
pub fn jacobian<F>(mut f: F, x: &[f64], h: f64) -> Result<Mat>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let m = f(x)?.len();
    let mut out = Mat::zeros(m, x.len());
    let mut y = x.to_vec();
    for j in 0..x.len() {
        let mut central = |step: f64, y: &mut Vec<f64>| -> Result<Vec<f64>> {
            y[j] = x[j] + step;
            let fp = f(y)?;
            y[j] = x[j] - step;
            let fm = f(y)?;
            y[j] = x[j];
            Ok(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * step)).collect())
        };
        let d1 = central(h, &mut y)?;
        let d2 = central(h / 2.0, &mut y)?;
        for i in 0..m {
            out[(i, j)] = (4.0 * d2[i] - d1[i]) / 3.0;
        }
    }
    Ok(out)
}
