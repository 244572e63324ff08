use serde::{Deserialize, Serialize};

/// One-sided exact sign test: probability of at least `wins` successes in
/// `wins + losses` fair coin flips. Ties are excluded by the caller.
pub fn sign_test_p(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    // ln C(n, k) built incrementally from ln C(n, 0) = 0.
    let ln2n = n as f64 * std::f64::consts::LN_2;
    let mut ln_c = 0.0;
    let mut p = 0.0;
    for k in 0..=n {
        if k > 0 {
            ln_c += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        if k >= wins {
            p += (ln_c - ln2n).exp();
        }
    }
    p.min(1.0)
}

/// Paired comparison of per-seed values where smaller is better for
/// `candidate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// One-sided sign-test p-value for "candidate is smaller".
    pub p_value: f64,
}

pub fn paired_smaller(candidate: &[f64], reference: &[f64]) -> PairedComparison {
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (c, r) in candidate.iter().zip(reference) {
        if c < r {
            wins += 1;
        } else if c > r {
            losses += 1;
        } else {
            ties += 1;
        }
    }
    PairedComparison {
        wins,
        losses,
        ties,
        p_value: sign_test_p(wins, losses),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(wins: usize, n: usize) -> f64 {
        let mut count = 0u64;
        for mask in 0u64..(1 << n) {
            if mask.count_ones() as usize >= wins {
                count += 1;
            }
        }
        count as f64 / (1u64 << n) as f64
    }

    #[test]
    fn matches_enumeration() {
        for n in 0..=12 {
            for w in 0..=n {
                assert!((sign_test_p(w, n - w) - brute(w, n)).abs() < 1e-12, "{w}/{n}");
            }
        }
        assert!((sign_test_p(8, 2) - 56.0 / 1024.0).abs() < 1e-15);
    }

    #[test]
    fn paired_counts() {
        let c = paired_smaller(&[1.0, 2.0, 3.0, 0.0], &[2.0, 2.0, 1.0, 5.0]);
        assert_eq!((c.wins, c.losses, c.ties), (2, 1, 1));
        assert!((c.p_value - 0.5).abs() < 1e-15);
    }
}
