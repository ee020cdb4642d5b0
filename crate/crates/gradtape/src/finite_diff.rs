//! Central finite differences, used as an independent check on backward.

use crate::tensor::Tensor;

/// Central-difference gradient of `f` w.r.t. every entry of every input.
pub fn central_gradient(f: impl Fn(&[Tensor]) -> f64, inputs: &[Tensor], h: f64) -> Vec<Tensor> {
    let mut work = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[i].rows(), inputs[i].cols());
        for j in 0..inputs[i].len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let plus = f(&work);
            work[i].data_mut()[j] = orig - h;
            let minus = f(&work);
            work[i].data_mut()[j] = orig;
            g.data_mut()[j] = (plus - minus) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// Largest entrywise `|a − n| / max(|a|, |n|, floor)`.
///
/// The floor keeps entries that are zero up to rounding from dominating.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| {
            assert_eq!(a.shape(), n.shape());
            a.data()
                .iter()
                .zip(n.data())
                .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}
