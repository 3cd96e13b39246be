use crate::error::{Error, Result};

/// Levenshtein distance with unit substitution, insertion and deletion costs.
pub fn edit_distance<T: PartialEq>(hyp: &[T], reference: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=reference.len()).collect();
    let mut cur = vec![0; reference.len() + 1];
    for (i, h) in hyp.iter().enumerate() {
        cur[0] = i + 1;
        for (j, r) in reference.iter().enumerate() {
            let sub = prev[j] + usize::from(h != r);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[reference.len()]
}

/// Character error rate of `hyp` against a nonempty `reference`.
pub fn cer(hyp: &str, reference: &str) -> Result<f64> {
    let h: Vec<char> = hyp.chars().collect();
    let r: Vec<char> = reference.chars().collect();
    if r.is_empty() {
        return Err(Error::InvalidArgument("empty reference".into()));
    }
    Ok(edit_distance(&h, &r) as f64 / r.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(cer("abc", "abc").unwrap(), 0.0);
        assert_eq!(cer("", "abcd").unwrap(), 1.0);
        assert!((cer("axc", "abc").unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(edit_distance(b"kitten", b"sitting"), 3);
        assert!(cer("a", "").is_err());
    }
}
