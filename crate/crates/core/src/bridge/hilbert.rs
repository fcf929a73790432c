use crate::error::{Error, Result};

/// Hilbert projective metric on the positive cone:
/// `log(max_i(u_i/v_i) / min_i(u_i/v_i))`.
///
/// Zero exactly when `u` is a positive multiple of `v`.
pub fn hilbert_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::Domain(format!(
            "Hilbert distance needs equal nonempty lengths, got {} and {}",
            u.len(),
            v.len()
        )));
    }
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for (&a, &b) in u.iter().zip(v) {
        if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Domain("Hilbert distance needs strictly positive finite entries".into()));
        }
        let r = a / b;
        hi = hi.max(r);
        lo = lo.min(r);
    }
    // max/min of the same ratio set: the result is exactly 0 for equal ratios.
    Ok((hi / lo).ln().max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_and_scale_invariance() {
        let u = [0.3, 1.7, 2.0];
        assert_eq!(hilbert_distance(&u, &u).unwrap(), 0.0);
        let twice: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
        assert_eq!(hilbert_distance(&twice, &u).unwrap(), 0.0);
    }

    #[test]
    fn swapped_pair() {
        let d = hilbert_distance(&[1.0, 2.0], &[2.0, 1.0]).unwrap();
        assert!((d - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn nonpositive_entries_rejected() {
        assert!(matches!(hilbert_distance(&[1.0, 0.0], &[1.0, 1.0]), Err(Error::Domain(_))));
        assert!(hilbert_distance(&[1.0], &[-1.0]).is_err());
        assert!(hilbert_distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_projective(u in prop::collection::vec(1e-3f64..1e3, 4), v in prop::collection::vec(1e-3f64..1e3, 4), c in 1e-3f64..1e3) {
            let d = hilbert_distance(&u, &v).unwrap();
            prop_assert!((d - hilbert_distance(&v, &u).unwrap()).abs() <= 1e-12);
            let cu: Vec<f64> = u.iter().map(|x| c * x).collect();
            prop_assert!((d - hilbert_distance(&cu, &v).unwrap()).abs() <= 1e-12);
        }
    }
}
