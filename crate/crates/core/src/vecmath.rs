//! Small dense-vector helpers used by the learner and detectors.

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `a += scale * b`
pub(crate) fn add_scaled(a: &mut [f64], b: &[f64], scale: f64) {
    debug_assert_eq!(a.len(), b.len());
    for (x, y) in a.iter_mut().zip(b) {
        *x += scale * y;
    }
}

pub(crate) fn scale(a: &mut [f64], s: f64) {
    for x in a.iter_mut() {
        *x *= s;
    }
}

/// Returns `a / |a|`, or `None` when the norm is exactly zero.
pub(crate) fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    if n == 0.0 {
        return None;
    }
    Some(a.iter().map(|x| x / n).collect())
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_and_norm() {
        assert_eq!(dot(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]), 32.0);
        assert_eq!(norm(&[3.0, 4.0]), 5.0);
    }

    #[test]
    fn normalized_zero_is_none() {
        assert!(normalized(&[0.0, 0.0]).is_none());
        let u = normalized(&[3.0, 4.0]).unwrap();
        assert!((u[0] - 0.6).abs() < 1e-15);
        assert!((u[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn add_scaled_accumulates() {
        let mut a = vec![1.0, 1.0];
        add_scaled(&mut a, &[2.0, -1.0], 0.5);
        assert_eq!(a, vec![2.0, 0.5]);
    }
}
