use crate::error::{Error, Result};

/// Unit-cost edit distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - levenshtein / max(len)`; 1.0 only for equal sequences.
pub fn sequence_fidelity<T: PartialEq>(predicted: &[T], truth: &[T]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::invalid("truth sequence is empty"));
    }
    let d = levenshtein(predicted, truth) as f64;
    Ok(1.0 - d / predicted.len().max(truth.len()) as f64)
}
