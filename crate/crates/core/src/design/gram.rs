use super::kernel::{kernel_tensor, symmetrized, KernelTensor};
use crate::filters::FirFilter;
use crate::graph::{ResModel, ShiftOperator};
use crate::{Error, Matrix, Result};

/// Gram matrix `H^T H` of the sub-filter `H = sum_{kappa=k}^{K} phi_kappa S^{kappa-k}`
/// through which the noise injected before exchange `k` reaches the output.
pub fn fir_subfilter_gram(shift: &ShiftOperator, fir: &FirFilter, k: usize) -> Result<Matrix> {
    check_source(fir, k)?;
    let n = shift.node_count();
    let taps = fir.taps();
    let eye = Matrix::identity(n, n);
    // Horner: H = (..(phi_K S + phi_{K-1}) S + ..) + phi_k
    let mut h = &eye * taps[fir.order()];
    for kappa in (k..fir.order()).rev() {
        h = h * shift.matrix() + &eye * taps[kappa];
    }
    Ok(symmetrized(h.tr_mul(&h)))
}

/// All expected Gram matrices `E[G_{n_{k-1}}]`, `k = 1..=K`, of an FIR filter
/// over random shifts.
///
/// `E[Phi_{k:kappa1-1}^T Phi_{k:kappa2-1}]` only depends on the gap
/// `d = |kappa2 - kappa1|` and the number of shared factors
/// `l = min(kappa1, kappa2) - k`: it equals `M_l` of the recursion
/// `M_0 = mean^d`, `M_l = E[S_t M_{l-1} S_t]`. The table of `M` for every
/// `d + l <= K - 1` serves all sources.
pub fn expected_grams(kernel: &KernelTensor, fir: &FirFilter) -> Vec<Matrix> {
    let n = kernel.node_count();
    let order = fir.order();
    let taps = fir.taps();

    let mut table: Vec<Vec<Matrix>> = Vec::with_capacity(order);
    let mut power = Matrix::identity(n, n);
    for d in 0..order {
        let mut row = Vec::with_capacity(order - d);
        row.push(power.clone());
        for l in 1..order - d {
            let next = kernel.expected_sms(&row[l - 1]);
            row.push(next);
        }
        table.push(row);
        power = &power * kernel.mean();
    }

    (1..=order)
        .map(|k| {
            let mut g = Matrix::zeros(n, n);
            for k1 in k..=order {
                for k2 in k1..=order {
                    let term = &table[k2 - k1][k1 - k];
                    let weight = taps[k1] * taps[k2] * if k1 == k2 { 1.0 } else { 2.0 };
                    g += term * weight;
                }
            }
            symmetrized(g)
        })
        .collect()
}

/// `E[G_{n_{k-1}}(Phi_{k:K-1})]` for one source index `k`.
pub fn expected_gram_stoch(model: &ResModel, fir: &FirFilter, k: usize) -> Result<Matrix> {
    check_source(fir, k)?;
    let kernel = kernel_tensor(model);
    Ok(expected_grams(&kernel, fir).swap_remove(k - 1))
}

fn check_source(fir: &FirFilter, k: usize) -> Result<()> {
    if k == 0 || k > fir.order() {
        return Err(Error::arg(
            "k",
            format!("source index must lie in 1..={}, got {k}", fir.order()),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_shift, Graph, ShiftKind};

    fn path3() -> ShiftOperator {
        build_shift(&Graph::new(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap(), &ShiftKind::Adjacency).unwrap()
    }

    #[test]
    fn hand_computed_gram() {
        let fir = FirFilter::new(vec![1.0, 1.0, 1.0]).unwrap();
        let g = fir_subfilter_gram(&path3(), &fir, 1).unwrap();
        assert_eq!(g, Matrix::from_row_slice(3, 3, &[2., 2., 1., 2., 3., 2., 1., 2., 2.]));
        let last = fir_subfilter_gram(&path3(), &fir, 2).unwrap();
        assert_eq!(last, Matrix::identity(3, 3));
        assert!(fir_subfilter_gram(&path3(), &fir, 3).is_err());
    }

    #[test]
    fn tail_gram_is_scaled_identity() {
        let fir = FirFilter::new(vec![0.1, -0.4, 2.5]).unwrap();
        let g = fir_subfilter_gram(&path3(), &fir, 2).unwrap();
        assert_eq!(g, Matrix::identity(3, 3) * 6.25);
        let scaled = fir_subfilter_gram(&path3(), &fir.scaled(-3.0), 1).unwrap();
        let base = fir_subfilter_gram(&path3(), &fir, 1).unwrap();
        assert!((scaled - base * 9.0).amax() < 1e-12);
    }

    #[test]
    fn stochastic_reduces_to_deterministic_at_full_survival() {
        let g = Graph::new(5, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (0, 4, 1.0), (1, 4, 1.0)]).unwrap();
        let model = ResModel::new(g, 1.0, ShiftKind::ScaledLaplacian).unwrap();
        let fir = FirFilter::new(vec![0.3, 1.0, -0.6, 0.25, 0.4]).unwrap();
        let kernel = kernel_tensor(&model);
        for (k, eg) in expected_grams(&kernel, &fir).iter().enumerate() {
            let det = fir_subfilter_gram(model.base(), &fir, k + 1).unwrap();
            assert!((eg - det).amax() < 1e-12);
        }
    }

    #[test]
    fn order_one_gram_is_tap_squared() {
        let g = Graph::new(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let model = ResModel::new(g, 0.4, ShiftKind::Adjacency).unwrap();
        let fir = FirFilter::new(vec![0.5, -1.5]).unwrap();
        assert_eq!(expected_gram_stoch(&model, &fir, 1).unwrap(), Matrix::identity(3, 3) * 2.25);
    }
}
