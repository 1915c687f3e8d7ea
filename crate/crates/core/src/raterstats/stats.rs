//! Exact binomial intervals, Fisher's exact test and TOST z-tests.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;

use super::RaterError;

/// Relative slack in Fisher's "as or less likely than observed" comparison.
pub const FISHER_REL_TOL: f64 = 1e-7;

fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Exact binomial interval. `low = 0` when `successes = 0` and `high = 1`
/// when `successes = n`.
pub fn clopper_pearson(successes: u64, n: u64, confidence: f64) -> Result<(f64, f64), RaterError> {
    if n == 0 || successes > n {
        return Err(RaterError::Invalid(format!("{successes} successes out of {n}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(RaterError::Invalid(format!("confidence {confidence} outside (0, 1)")));
    }
    let alpha = 1.0 - confidence;
    let (s, n) = (successes as f64, n as f64);
    let low = if successes == 0 {
        0.0
    } else {
        beta_quantile(s, n - s + 1.0, alpha / 2.0)
    };
    let high = if s == n {
        1.0
    } else {
        beta_quantile(s + 1.0, n - s, 1.0 - alpha / 2.0)
    };
    Ok((low, high))
}

/// A 2x2 table `[[a, b], [c, d]]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ContingencyTable2x2 {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable2x2 {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        Self { a, b, c, d }
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.a, self.c, self.b, self.d)
    }
}

fn ln_factorials(n: u64) -> Vec<f64> {
    let mut t = vec![0.0; n as usize + 1];
    for i in 1..=n as usize {
        t[i] = t[i - 1] + (i as f64).ln();
    }
    t
}

/// Two-sided Fisher exact test: the total hypergeometric probability of all
/// tables with the observed margins that are no more likely than the
/// observed one. Tables with an empty row or column give `p = 1`.
pub fn fisher_exact_two_sided(t: &ContingencyTable2x2) -> f64 {
    let t = &canonical(t);
    let (r1, r2) = (t.a + t.b, t.c + t.d);
    let (c1, c2) = (t.a + t.c, t.b + t.d);
    if r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0 {
        return 1.0;
    }
    let n = t.total();
    let lf = ln_factorials(n);
    let f = |k: u64| lf[k as usize];
    let fixed = ((f(r1) + f(r2)) + (f(c1) + f(c2))) - f(n);
    let ln_p = |a: u64| {
        let (b, c) = (r1 - a, c1 - a);
        let d = r2 - c;
        fixed - (f(a) + f(d)) - (f(b) + f(c))
    };
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let observed = ln_p(t.a);
    let cutoff = observed + FISHER_REL_TOL.ln_1p();
    let p: f64 = (lo..=hi).map(ln_p).filter(|&lp| lp <= cutoff).map(f64::exp).sum();
    p.min(1.0)
}

/// The row/column swap and transpose image of `t` with the smallest
/// `(a, b, c, d)`, so that equivalent tables give bit-identical p-values.
fn canonical(t: &ContingencyTable2x2) -> ContingencyTable2x2 {
    let ContingencyTable2x2 { a, b, c, d } = *t;
    [
        (a, b, c, d),
        (b, a, d, c),
        (c, d, a, b),
        (d, c, b, a),
        (a, c, b, d),
        (c, a, d, b),
        (b, d, a, c),
        (d, b, c, a),
    ]
    .into_iter()
    .min()
    .map(|(a, b, c, d)| ContingencyTable2x2::new(a, b, c, d))
    .expect("eight candidates")
}

fn check_proportion(p: f64, n: u64) -> Result<(), RaterError> {
    if !(0.0..=1.0).contains(&p) || n == 0 {
        return Err(RaterError::Invalid(format!("proportion {p} over {n} pairs")));
    }
    Ok(())
}

fn unpooled_se(p_ref: f64, n_ref: u64, p_cand: f64, n_cand: u64) -> f64 {
    (p_ref * (1.0 - p_ref) / n_ref as f64 + p_cand * (1.0 - p_cand) / n_cand as f64).sqrt()
}

fn upper_tail(z: f64) -> f64 {
    Normal::standard().cdf(-z)
}

/// One-sided test of `H0: p_ref - p_cand >= margin`; a small p supports
/// non-inferiority of the candidate. `z = ((p_cand - p_ref) + margin) / SE`
/// with the unpooled SE and `p = Phi(-z)`.
pub fn tost_noninferiority(p_ref: f64, n_ref: u64, p_cand: f64, n_cand: u64, margin: f64) -> Result<f64, RaterError> {
    check_proportion(p_ref, n_ref)?;
    check_proportion(p_cand, n_cand)?;
    let shift = (p_cand - p_ref) + margin;
    let se = unpooled_se(p_ref, n_ref, p_cand, n_cand);
    if se == 0.0 {
        return Ok(if shift > 0.0 { 0.0 } else { 1.0 });
    }
    Ok(upper_tail(shift / se))
}

/// Two-bound equivalence: the larger of the two one-sided p-values for
/// `|p_cand - p_ref| < margin`.
pub fn tost_equivalence(p_ref: f64, n_ref: u64, p_cand: f64, n_cand: u64, margin: f64) -> Result<f64, RaterError> {
    let lower = tost_noninferiority(p_ref, n_ref, p_cand, n_cand, margin)?;
    let diff = p_cand - p_ref;
    let se = unpooled_se(p_ref, n_ref, p_cand, n_cand);
    let upper = if se == 0.0 {
        if margin - diff > 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        upper_tail((margin - diff) / se)
    };
    Ok(lower.max(upper))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_boundaries() {
        assert_eq!(clopper_pearson(0, 20, 0.95).unwrap().0, 0.0);
        assert_eq!(clopper_pearson(20, 20, 0.95).unwrap().1, 1.0);
        let (lo, hi) = clopper_pearson(90, 100, 0.95).unwrap();
        assert!((lo - 0.8238).abs() < 1e-3 && (hi - 0.9510).abs() < 1e-3);
        assert!(clopper_pearson(3, 2, 0.95).is_err());
        assert!(clopper_pearson(0, 0, 0.95).is_err());
    }

    #[test]
    fn fisher_small_tables() {
        assert!((fisher_exact_two_sided(&ContingencyTable2x2::new(5, 5, 5, 5)) - 1.0).abs() < 1e-12);
        assert!((fisher_exact_two_sided(&ContingencyTable2x2::new(3, 1, 1, 3)) - 34.0 / 70.0).abs() < 1e-12);
        assert_eq!(fisher_exact_two_sided(&ContingencyTable2x2::new(0, 0, 4, 2)), 1.0);
        let t = ContingencyTable2x2::new(7, 2, 1, 9);
        assert_eq!(fisher_exact_two_sided(&t), fisher_exact_two_sided(&t.transpose()));
    }

    #[test]
    fn tost_reference_values() {
        let p = tost_noninferiority(0.89, 720, 0.88, 360, 0.05).unwrap();
        assert!((p - 0.026770550766807597).abs() < 1e-9);
        let p = tost_noninferiority(0.9, 360, 0.85, 360, 0.05).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        assert!(tost_noninferiority(0.9, 10_000, 0.9, 10_000, 0.05).unwrap() < 0.05);
        assert_eq!(tost_noninferiority(1.0, 10, 1.0, 10, 0.05).unwrap(), 0.0);
        assert_eq!(tost_noninferiority(1.0, 10, 0.0, 10, 0.05).unwrap(), 1.0);
        assert!(tost_noninferiority(1.2, 10, 0.5, 10, 0.05).is_err());
    }

    #[test]
    fn equivalence_is_at_least_noninferiority() {
        let ni = tost_noninferiority(0.8, 200, 0.83, 200, 0.05).unwrap();
        let eq = tost_equivalence(0.8, 200, 0.83, 200, 0.05).unwrap();
        assert!(eq >= ni);
    }
}
