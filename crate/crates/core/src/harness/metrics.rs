use crate::{Error, Result, Vector};

/// Reported value for an SNR whose noise power is zero or negligible.
pub const SNR_CAP_DB: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnrMode {
    /// Reference is the noiseless output on the same topology draw.
    Unbiased,
    /// Reference is the mean noiseless output over topology draws.
    Biased,
}

/// `10 log10(1 / mean_ratio)`, capped at [`SNR_CAP_DB`].
pub fn ratio_to_db(mean_ratio: f64) -> f64 {
    if mean_ratio <= 0.0 {
        return SNR_CAP_DB;
    }
    (-10.0 * mean_ratio.log10()).min(SNR_CAP_DB)
}

/// `||y_q - y||^2 / ||y||^2`.
pub fn error_ratio(yq: &Vector, reference: &Vector) -> Result<f64> {
    let power = reference.norm_squared();
    if power == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((yq - reference).norm_squared() / power)
}

/// SNR in dB of a set of quantized outputs: the mean of the per-trial
/// linear error ratios, converted once.
///
/// In unbiased mode `references[i]` is the noiseless output of trial `i`;
/// in biased mode all trials are compared with the sample mean of
/// `references`.
pub fn snr(outputs: &[Vector], references: &[Vector], mode: SnrMode) -> Result<f64> {
    if outputs.len() != references.len() {
        return Err(Error::DimensionMismatch {
            expected: references.len(),
            got: outputs.len(),
        });
    }
    if outputs.is_empty() {
        return Err(Error::arg("outputs", "no trials"));
    }
    let ratios: Vec<f64> = match mode {
        SnrMode::Unbiased => outputs
            .iter()
            .zip(references)
            .map(|(yq, y)| error_ratio(yq, y))
            .collect::<Result<_>>()?,
        SnrMode::Biased => {
            let mean = sample_mean(references);
            outputs.iter().map(|yq| error_ratio(yq, &mean)).collect::<Result<_>>()?
        }
    };
    Ok(ratio_to_db(ratios.iter().sum::<f64>() / ratios.len() as f64))
}

pub(crate) fn sample_mean(vs: &[Vector]) -> Vector {
    let mut acc = Vector::zeros(vs[0].len());
    for v in vs {
        acc += v;
    }
    acc / vs.len() as f64
}

/// Power of the mean output over its total variance, in dB.
///
/// `samples` are noiseless outputs over independent topology draws.
pub fn mean_to_variance_db(samples: &[Vector]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::arg("trials", "need at least two samples"));
    }
    let mean = sample_mean(samples);
    let var: f64 = samples.iter().map(|y| (y - &mean).norm_squared()).sum::<f64>() / (samples.len() - 1) as f64;
    let power = mean.norm_squared();
    if power == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(if var == 0.0 {
        SNR_CAP_DB
    } else {
        (10.0 * (power / var).log10()).min(SNR_CAP_DB)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extremes() {
        let y = vec![Vector::from_vec(vec![1.0, -2.0])];
        assert_eq!(snr(&y, &y, SnrMode::Unbiased).unwrap(), SNR_CAP_DB);
        let zero = vec![Vector::zeros(2)];
        assert!(snr(&zero, &y, SnrMode::Unbiased).unwrap().abs() < 1e-12);
        assert!(matches!(snr(&y, &zero, SnrMode::Unbiased), Err(Error::ZeroReference)));
    }

    #[test]
    fn averages_linear_ratios() {
        let refs = vec![Vector::from_vec(vec![1.0]); 2];
        let outs = vec![Vector::from_vec(vec![1.1]), Vector::from_vec(vec![1.3])];
        let expect = -10.0 * ((0.01 + 0.09) / 2.0_f64).log10();
        assert!((snr(&outs, &refs, SnrMode::Unbiased).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn biased_uses_mean_reference() {
        let refs = vec![Vector::from_vec(vec![1.0]), Vector::from_vec(vec![3.0])];
        let outs = refs.clone();
        // mean 2, ratios 1/4 each
        let got = snr(&outs, &refs, SnrMode::Biased).unwrap();
        assert!((got - 10.0 * 4.0_f64.log10()).abs() < 1e-9);
        assert_eq!(mean_to_variance_db(&vec![Vector::from_vec(vec![2.0]); 3]).unwrap(), SNR_CAP_DB);
    }
}
