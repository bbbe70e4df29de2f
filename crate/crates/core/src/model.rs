//! Synthetic observations `Y = g·θ* + σ·ε`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::groups::GroupAction;
use crate::rng::CounterRng;

/// Law of the latent group element.
#[derive(Clone, Debug, PartialEq)]
pub enum HLaw {
    Uniform,
    /// Always the element with this index.
    Fixed(usize),
    /// Categorical law over element indices.
    Weights(Vec<f64>),
}

impl HLaw {
    fn validate(&self, k: usize) -> Result<()> {
        match self {
            HLaw::Uniform => Ok(()),
            HLaw::Fixed(i) if *i < k => Ok(()),
            HLaw::Fixed(i) => Err(Error::InvalidParameter(format!(
                "fixed element {i} out of range for order {k}"
            ))),
            HLaw::Weights(w) => {
                if w.len() != k {
                    return Err(Error::DimensionMismatch {
                        expected: k,
                        found: w.len(),
                    });
                }
                if w.iter().any(|x| !(*x >= 0.0)) {
                    return Err(Error::InvalidParameter("negative element weight".into()));
                }
                let s: f64 = w.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "element weights sum to {s}, not 1"
                    )));
                }
                Ok(())
            }
        }
    }

    fn draw(&self, k: usize, u: f64) -> usize {
        match self {
            HLaw::Uniform => ((u * k as f64) as usize).min(k - 1),
            HLaw::Fixed(i) => *i,
            HLaw::Weights(w) => {
                let mut acc = 0.0;
                let mut last = 0;
                for (i, wi) in w.iter().enumerate() {
                    if *wi > 0.0 {
                        last = i;
                    }
                    acc += wi;
                    if u < acc && *wi > 0.0 {
                        return i;
                    }
                }
                last
            }
        }
    }

    /// Short text label, e.g. `uniform`, `fixed(2)`, `weights(0.5,0.5)`.
    pub fn label(&self) -> String {
        match self {
            HLaw::Uniform => "uniform".into(),
            HLaw::Fixed(i) => format!("fixed({i})"),
            HLaw::Weights(w) => {
                let parts: Vec<String> = w.iter().map(|x| format!("{x:?}")).collect();
                format!("weights({})", parts.join(","))
            }
        }
    }

    /// Inverse of [`HLaw::label`].
    pub fn parse(s: &str) -> Result<HLaw> {
        let s = s.trim();
        if s == "uniform" {
            return Ok(HLaw::Uniform);
        }
        let bad = || Error::InvalidParameter(format!("unrecognized element law '{s}'"));
        if let Some(inner) = s.strip_prefix("fixed(").and_then(|r| r.strip_suffix(')')) {
            return inner.trim().parse().map(HLaw::Fixed).map_err(|_| bad());
        }
        if let Some(inner) = s.strip_prefix("weights(").and_then(|r| r.strip_suffix(')')) {
            let w = inner
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<core::result::Result<Vec<_>, _>>()
                .map_err(|_| bad())?;
            return Ok(HLaw::Weights(w));
        }
        Err(bad())
    }
}

/// Generation metadata carried alongside a dataset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetMeta {
    pub theta_star: Option<Vec<f64>>,
    pub group: Option<String>,
    pub h_law: Option<HLaw>,
}

/// `n` observations in `R^d`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    sigma: f64,
    seed: u64,
    y: Vec<f64>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(d: usize, y: Vec<f64>, sigma: f64, seed: u64, meta: DatasetMeta) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !y.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d * (y.len() / d + 1),
                found: y.len(),
            });
        }
        let n = y.len() / d;
        if n == 0 {
            return Err(Error::InvalidParameter("dataset needs n >= 1".into()));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("observation row {}", i / d)));
        }
        if let Some(t) = &meta.theta_star {
            if t.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: t.len(),
                });
            }
        }
        Ok(Dataset {
            n,
            d,
            sigma,
            seed,
            y,
            meta,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.y[i * self.d..(i + 1) * self.d]
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = crate::sum::chunked_sum(self.n, self.d, |i, acc| {
            for (a, y) in acc.iter_mut().zip(self.row(i)) {
                *a += y;
            }
        });
        m.iter_mut().for_each(|v| *v /= self.n as f64);
        m
    }

    /// `(1/n) Σ ‖Y_i‖`.
    pub fn mean_norm(&self) -> f64 {
        crate::sum::chunked_sum(self.n, 1, |i, acc| {
            acc[0] += crate::linalg::norm(self.row(i));
        })[0]
            / self.n as f64
    }
}

/// Draws `n` observations. Sample `i` uses its own counter stream: one uniform
/// selects the group element, then `d` normals form `ε`.
pub fn sample_dataset(
    g: &GroupAction,
    theta_star: &[f64],
    sigma: f64,
    n: usize,
    seed: u64,
    h_law: HLaw,
) -> Result<Dataset> {
    let d = g.dim();
    if theta_star.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: theta_star.len(),
        });
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    h_law.validate(g.order())?;
    let orbit = g.orbit_points(theta_star);
    let mut y = vec![0.0; n * d];
    let mut eps = vec![0.0; d];
    for (i, row) in y.chunks_exact_mut(d).enumerate() {
        let mut rng = CounterRng::substream(seed, i as u64);
        let gi = h_law.draw(g.order(), rng.uniform());
        rng.fill_normal(&mut eps);
        for ((r, c), e) in row.iter_mut().zip(&orbit[gi]).zip(&eps) {
            *r = c + sigma * e;
        }
    }
    let meta = DatasetMeta {
        theta_star: Some(theta_star.to_vec()),
        group: Some(g.name().into()),
        h_law: Some(h_law),
    };
    Dataset::new(d, y, sigma, seed, meta)
}

/// `N` standard normal vectors in `R^d` for common-random-number Monte Carlo.
pub fn noise_sample(d: usize, count: usize, seed: u64) -> Vec<f64> {
    let mut out = vec![0.0; d * count];
    for (i, row) in out.chunks_exact_mut(d).enumerate() {
        CounterRng::substream(seed, i as u64).fill_normal(row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups;

    #[test]
    fn tiny_noise_reproduces_theta() {
        let g = groups::trivial(3).unwrap();
        let t = [1.0, -2.0, 0.5];
        let ds = sample_dataset(&g, &t, 1e-12, 50, 3, HLaw::Uniform).unwrap();
        for i in 0..ds.n() {
            for (a, b) in ds.row(i).iter().zip(&t) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let g = groups::rotations(3).unwrap();
        let a = sample_dataset(&g, &[1.0, 0.0], 0.5, 100, 11, HLaw::Uniform).unwrap();
        let b = sample_dataset(&g, &[1.0, 0.0], 0.5, 100, 11, HLaw::Uniform).unwrap();
        let c = sample_dataset(&g, &[1.0, 0.0], 0.5, 100, 12, HLaw::Uniform).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = groups::rotations(3).unwrap();
        assert!(sample_dataset(&g, &[1.0, 0.0], 0.0, 10, 1, HLaw::Uniform).is_err());
        let w = HLaw::Weights(vec![0.5, 0.4, 0.0]);
        assert!(sample_dataset(&g, &[1.0, 0.0], 1.0, 10, 1, w).is_err());
        assert!(Dataset::new(2, vec![1.0, f64::NAN], 1.0, 0, DatasetMeta::default()).is_err());
    }

    #[test]
    fn fixed_law_uses_one_element() {
        let g = groups::cyclic(3).unwrap();
        let ds = sample_dataset(&g, &[1.0, 0.0, 0.0], 1e-9, 20, 5, HLaw::Fixed(1)).unwrap();
        for i in 0..ds.n() {
            assert!((ds.row(i)[1] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn law_labels_round_trip() {
        for law in [HLaw::Uniform, HLaw::Fixed(2), HLaw::Weights(vec![0.25, 0.75])] {
            assert_eq!(HLaw::parse(&law.label()).unwrap(), law);
        }
    }
}
