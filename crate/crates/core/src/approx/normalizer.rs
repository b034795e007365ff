use serde::{Deserialize, Serialize};

const CLIP: f64 = 5.0;
const EPS: f64 = 1e-8;

/// Running per-dimension mean and variance of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
    /// When set, `update` is a no-op.
    pub frozen: bool,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            count: 0.0,
            frozen: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Merges a batch of rows (Chan et al. parallel update).
    pub fn update<'a, I>(&mut self, rows: I)
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        if self.frozen {
            return;
        }
        let d = self.dim();
        let mut n = 0.0;
        let mut mean = vec![0.0; d];
        let mut m2 = vec![0.0; d];
        for row in rows {
            assert_eq!(row.len(), d);
            n += 1.0;
            for i in 0..d {
                let delta = row[i] - mean[i];
                mean[i] += delta / n;
                m2[i] += delta * (row[i] - mean[i]);
            }
        }
        if n == 0.0 {
            return;
        }
        if self.count == 0.0 {
            self.mean = mean;
            self.var = m2.iter().map(|v| v / n).collect();
            self.count = n;
            return;
        }
        let total = self.count + n;
        for i in 0..d {
            let delta = mean[i] - self.mean[i];
            let m_a = self.var[i] * self.count;
            let m_b = m2[i];
            let m = m_a + m_b + delta * delta * self.count * n / total;
            self.mean[i] += delta * n / total;
            self.var[i] = m / total;
        }
        self.count = total;
    }

    pub fn normalize_into(&self, x: &[f64], out: &mut [f32]) {
        for i in 0..x.len() {
            let v = (x[i] - self.mean[i]) / (self.var[i] + EPS).sqrt();
            out[i] = v.clamp(-CLIP, CLIP) as f32;
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f32> {
        let mut out = vec![0.0; x.len()];
        self.normalize_into(x, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_batch_statistics() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64, (i as f64 * 0.3).sin()]).collect();
        let mut n = RunningNorm::new(2);
        n.update(rows[..37].iter().map(|r| r.as_slice()));
        n.update(rows[37..].iter().map(|r| r.as_slice()));
        for d in 0..2 {
            let mean = rows.iter().map(|r| r[d]).sum::<f64>() / 100.0;
            let var = rows.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / 100.0;
            assert!((n.mean[d] - mean).abs() < 1e-10);
            assert!((n.var[d] - var).abs() < 1e-9);
        }
        let frozen_mean = n.mean.clone();
        n.frozen = true;
        n.update([[1e6, 1e6]].iter().map(|r| r.as_slice()));
        assert_eq!(n.mean, frozen_mean);
    }
}
