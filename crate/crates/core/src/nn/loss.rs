use super::{NnError, Scalar};

/// Row-wise softmax of `(batch, classes)` logits.
pub fn softmax_rows<T: Scalar>(logits: &[T], classes: usize) -> Vec<T> {
    let mut out = logits.to_vec();
    for row in out.chunks_exact_mut(classes) {
        let max = row.iter().copied().fold(row[0], |a, b| if b > a { b } else { a });
        let mut sum = T::ZERO;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

/// Mean negative log-likelihood of `labels` under softmax(`logits`), and its
/// gradient `(softmax - onehot) / batch`.
pub fn cross_entropy<T: Scalar>(logits: &[T], labels: &[usize], classes: usize) -> Result<(T, Vec<T>), NnError> {
    let batch = labels.len();
    if logits.len() != batch * classes || batch == 0 {
        return Err(NnError::Shape(format!(
            "{} logits for {batch} labels of {classes} classes",
            logits.len()
        )));
    }
    if let Some(index) = labels.iter().position(|&l| l >= classes) {
        return Err(NnError::LabelOutOfRange {
            index,
            label: labels[index],
            classes,
        });
    }
    let mut grad = softmax_rows(logits, classes);
    let inv = T::from_f64(1.0 / batch as f64);
    let mut loss = 0.0f64;
    for (b, (row, &l)) in grad.chunks_exact_mut(classes).zip(labels).enumerate() {
        // log-sum-exp on the raw logits keeps confident rows exact
        let z = &logits[b * classes..(b + 1) * classes];
        let max = z.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v.to_f64() - max).exp()).sum::<f64>().ln();
        loss += lse - z[l].to_f64();
        row[l] -= T::ONE;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
    let loss = T::from_f64(loss / batch as f64);
    if !loss.is_finite() {
        return Err(NnError::NonFiniteLoss);
    }
    Ok((loss, grad))
}
