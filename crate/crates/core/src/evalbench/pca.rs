use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PcaError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("sample {index} has dimension {found}, expected {expected}")]
    Dimension { index: usize, expected: usize, found: usize },
    #[error("requested {requested} components from {dim}-dimensional data")]
    Components { requested: usize, dim: usize },
}

/// Principal components of standardized data.
#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Per-dimension standard deviation used for scaling; constant
    /// dimensions keep scale 1.
    pub scale: Vec<f64>,
    /// All eigenvalues of the covariance, descending.
    pub eigenvalues: Vec<f64>,
    /// Leading eigenvectors, one per row.
    pub components: DMatrix<f64>,
    /// Number of eigenvalues above the numerical noise floor.
    pub rank: usize,
}

impl Pca {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let z = nalgebra::DVector::from_vec(self.standardize(x));
        (&self.components * z).iter().copied().collect()
    }

    /// Share of total variance carried by each kept component.
    pub fn explained_ratio(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        self.eigenvalues[..self.components.nrows()]
            .iter()
            .map(|v| if total > 0.0 { v.max(0.0) / total } else { 0.0 })
            .collect()
    }

    /// Sum of the eigenvalues not kept.
    pub fn discarded_variance(&self) -> f64 {
        self.eigenvalues[self.components.nrows()..].iter().sum()
    }

    /// Mean squared distance between standardized samples and their
    /// reconstruction from the kept components.
    pub fn reconstruction_error(&self, data: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for x in data {
            let z = nalgebra::DVector::from_vec(self.standardize(x));
            let c = &self.components * &z;
            let r = self.components.transpose() * c;
            total += (z - r).norm_squared();
        }
        total / data.len() as f64
    }
}

/// PCA with covariance normalized by the sample count, on mean-centred data
/// scaled to unit variance per dimension.
pub fn pca(data: &[Vec<f64>], components: usize) -> Result<Pca, PcaError> {
    let n = data.len();
    if n < 2 {
        return Err(PcaError::TooFewSamples(n));
    }
    let d = data[0].len();
    for (index, x) in data.iter().enumerate() {
        if x.len() != d {
            return Err(PcaError::Dimension {
                index,
                expected: d,
                found: x.len(),
            });
        }
    }
    if components == 0 || components > d {
        return Err(PcaError::Components { requested: components, dim: d });
    }
    let mut mean = vec![0.0; d];
    for x in data {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n as f64;
        }
    }
    let mut scale = vec![0.0; d];
    for x in data {
        for j in 0..d {
            scale[j] += (x[j] - mean[j]).powi(2) / n as f64;
        }
    }
    let scale: Vec<f64> = scale.iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }).collect();
    let z = DMatrix::from_fn(n, d, |i, j| (data[i][j] - mean[j]) / scale[j]);
    let cov = (z.transpose() * &z) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let floor = eigenvalues[0].abs().max(1.0) * 1e-10;
    let rank = eigenvalues.iter().filter(|v| **v > floor).count();
    if rank < components {
        log::warn!("covariance has rank {rank}, fewer than the {components} requested components");
    }
    let comps = DMatrix::from_fn(components, d, |r, c| eig.eigenvectors[(c, order[r])]);
    Ok(Pca {
        mean,
        scale,
        eigenvalues,
        components: comps,
        rank,
    })
}

/// Gaussian kernel density estimate in two dimensions with a per-axis
/// Silverman bandwidth.
#[derive(Debug, Clone, Serialize)]
pub struct Kde2 {
    pub points: Vec<[f64; 2]>,
    pub bandwidth: [f64; 2],
}

fn std_and_iqr(v: &mut [f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let idx = p * (v.len() - 1) as f64;
        let lo = idx.floor() as usize;
        let hi = idx.ceil() as usize;
        v[lo] + (idx - lo as f64) * (v[hi] - v[lo])
    };
    (sd, q(0.75) - q(0.25))
}

/// Silverman's rule of thumb: `0.9 min(sd, IQR / 1.34) n^(-1/5)`.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let (sd, iqr) = std_and_iqr(&mut v);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (values.len() as f64).powf(-0.2);
    if h > 0.0 {
        h
    } else {
        1e-6
    }
}

impl Kde2 {
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
        let bandwidth = [silverman_bandwidth(&xs), silverman_bandwidth(&ys)];
        Self { points, bandwidth }
    }

    pub fn density(&self, at: [f64; 2]) -> f64 {
        let [hx, hy] = self.bandwidth;
        let norm = 1.0 / (2.0 * std::f64::consts::PI * hx * hy * self.points.len() as f64);
        self.points
            .iter()
            .map(|p| {
                let u = (at[0] - p[0]) / hx;
                let v = (at[1] - p[1]) / hy;
                (-0.5 * (u * u + v * v)).exp()
            })
            .sum::<f64>()
            * norm
    }

    /// Density level whose super-level set contains the fraction `mass` of
    /// the sample points.
    pub fn contour_level(&self, mass: f64) -> f64 {
        let mut d: Vec<f64> = self.points.iter().map(|p| self.density(*p)).collect();
        d.sort_by(f64::total_cmp);
        let k = (((1.0 - mass) * d.len() as f64).floor() as usize).min(d.len() - 1);
        d[k]
    }

    /// Density on a regular grid covering the points plus three bandwidths.
    pub fn grid(&self, resolution: usize) -> Vec<[f64; 3]> {
        let pad = [3.0 * self.bandwidth[0], 3.0 * self.bandwidth[1]];
        let lo = [0, 1].map(|a| self.points.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min) - pad[a]);
        let hi = [0, 1].map(|a| self.points.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max) + pad[a]);
        let r = resolution.max(2);
        let mut out = Vec::with_capacity(r * r);
        for i in 0..r {
            for j in 0..r {
                let x = lo[0] + (hi[0] - lo[0]) * i as f64 / (r - 1) as f64;
                let y = lo[1] + (hi[1] - lo[1]) * j as f64 / (r - 1) as f64;
                out.push([x, y, self.density([x, y])]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_data_is_rank_one() {
        let data: Vec<Vec<f64>> = (0..50).map(|i| {
            let t = i as f64 * 0.1;
            vec![t, 2.0 * t + 1.0, -t]
        }).collect();
        let p = pca(&data, 2).unwrap();
        assert!((p.explained_ratio()[0] - 1.0).abs() < 1e-12);
        assert_eq!(p.rank, 1);
    }

    #[test]
    fn mean_projects_to_origin() {
        let data: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64).sin(), (i as f64 * 0.3).cos(), i as f64]).collect();
        let p = pca(&data, 2).unwrap();
        for v in p.project(&p.mean) {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn contour_holds_requested_mass() {
        let pts: Vec<[f64; 2]> = (0..400).map(|i| {
            let a = i as f64 * 0.618;
            [a.sin() * (i % 7) as f64, a.cos() * (i % 5) as f64]
        }).collect();
        let kde = Kde2::new(pts.clone());
        let level = kde.contour_level(0.95);
        let inside = pts.iter().filter(|p| kde.density(**p) >= level).count();
        assert!(inside as f64 >= 0.95 * pts.len() as f64);
        assert!((inside as f64) < 0.95 * pts.len() as f64 + 2.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(pca(&[vec![1.0]], 1).unwrap_err(), PcaError::TooFewSamples(1));
        assert!(matches!(pca(&[vec![1.0, 2.0], vec![1.0]], 1), Err(PcaError::Dimension { .. })));
        assert!(matches!(pca(&[vec![1.0], vec![2.0]], 2), Err(PcaError::Components { .. })));
    }
}
