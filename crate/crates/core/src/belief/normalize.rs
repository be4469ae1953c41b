use crate::error::{Error, Result};

/// Per-dimension z-score applied to raw observations before masking.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ObsNormalizer {
    pub fn identity(dim: usize) -> Self {
        ObsNormalizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Statistics over `rows`. Dimensions with (near) zero spread keep unit
    /// scale so constant slots stay finite.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for r in rows {
            if r.len() != dim {
                return Err(Error::dim("normalizer_fit", &[r.len()], &[dim]));
            }
            n += 1;
            for (j, &v) in r.iter().enumerate() {
                sum[j] += v;
                sq[j] += v * v;
            }
        }
        if n == 0 {
            return Err(Error::contract(
                "cannot fit a normalizer to no observations",
            ));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let var = (s / n as f64 - m * m).max(0.0);
                if var < 1e-12 {
                    1.0
                } else {
                    var.sqrt()
                }
            })
            .collect();
        Ok(ObsNormalizer { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Normalizes and zero-pads to `width`.
    pub fn apply(&self, raw: &[f64], width: usize) -> Vec<f64> {
        let mut out = vec![0.0; width];
        for (j, &v) in raw.iter().enumerate().take(width) {
            out[j] = (v - self.mean[j]) / self.std[j];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_and_apply() {
        let rows = [vec![1.0, 5.0], vec![3.0, 5.0]];
        let n = ObsNormalizer::fit(rows.iter().map(|r| r.as_slice()), 2).unwrap();
        assert_eq!(n.mean, vec![2.0, 5.0]);
        assert_eq!(n.std, vec![1.0, 1.0]);
        assert_eq!(n.apply(&[3.0, 5.0], 3), vec![1.0, 0.0, 0.0]);
    }
}
