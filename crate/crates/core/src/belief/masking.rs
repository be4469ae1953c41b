use crate::error::{Error, Result};

/// An observation after the availability mask has been applied.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedObservation {
    pub raw: Vec<f64>,
    pub mask: bool,
    /// `raw` when available, the all-zero vector when dropped.
    pub effective: Vec<f64>,
}

impl MaskedObservation {
    pub fn dim(&self) -> usize {
        self.raw.len()
    }
}

pub fn mask_observation(raw: Vec<f64>, mask: bool) -> Result<MaskedObservation> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "observation contains non-finite values".into(),
        ));
    }
    // Written as literal zeros rather than 0·raw so negative entries do not
    // leave -0.0 behind.
    let effective = if mask {
        raw.clone()
    } else {
        vec![0.0; raw.len()]
    };
    Ok(MaskedObservation {
        raw,
        mask,
        effective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn examples() {
        let o = mask_observation(vec![0.3, -1.2], true).unwrap();
        assert_eq!(o.effective, vec![0.3, -1.2]);
        let o = mask_observation(vec![0.3, -1.2], false).unwrap();
        assert_eq!(o.effective, vec![0.0, 0.0]);
        assert!(o.effective.iter().all(|v| v.to_bits() == 0));
        assert!(mask_observation(vec![f64::INFINITY], true).is_err());
    }

    #[test]
    fn seeded_bernoulli_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 1000;
        let kept = (0..n).filter(|_| rng.random::<f64>() < 0.7).count();
        let rate = kept as f64 / n as f64;
        assert!((0.65..=0.75).contains(&rate), "{rate}");
    }

    proptest! {
        #[test]
        fn masking_is_bit_exact(raw in proptest::collection::vec(-1e6f64..1e6, 1..12), m: bool) {
            let o = mask_observation(raw.clone(), m).unwrap();
            if m {
                prop_assert!(o.effective.iter().zip(&raw).all(|(a, b)| a.to_bits() == b.to_bits()));
            } else {
                prop_assert!(o.effective.iter().all(|v| v.to_bits() == 0));
            }
        }
    }
}
