//! Deterministic summation helpers.

/// Pairwise (cascade) summation; the reduction tree depends only on the length.
pub fn pairwise(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise(a) + pairwise(b)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases() {
        assert_eq!(pairwise(&[]), 0.0);
        assert_eq!(pairwise(&[2.5]), 2.5);
        assert_eq!(pairwise(&[1.0, 2.0, 3.0, 4.0, 5.0]), 15.0);
    }

    #[test]
    fn cancels_symmetric_input() {
        let xs = [0.1, -0.3, 0.7, -0.7, 0.3, -0.1];
        assert_eq!(pairwise(&xs), 0.0);
    }
}
