use crate::error::{input_err, Result};

/// Probability that a random `pos` value exceeds a random `neg` value,
/// ties counting one half.
pub fn auc_roc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(input_err!("auc_roc needs non-empty score lists"));
    }
    let wins: f64 = pos.iter().map(|&p| pairwise_wins(p, neg)).sum();
    Ok(wins / (pos.len() * neg.len()) as f64)
}

/// Number of `others` strictly below `x`, plus half the ties.
pub(crate) fn pairwise_wins(x: f64, others: &[f64]) -> f64 {
    others
        .iter()
        .map(|&o| {
            if x > o {
                1.0
            } else if x == o {
                0.5
            } else {
                0.0
            }
        })
        .sum()
}

/// Harmonic mean of values in [0, 1]; any zero makes the result zero.
pub fn harmonic_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(input_err!("harmonic mean of an empty list"));
    }
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(input_err!("harmonic mean needs finite non-negative values, got {v}"));
    }
    if values.contains(&0.0) {
        return Ok(0.0);
    }
    Ok(values.len() as f64 / values.iter().map(|v| 1.0 / v).sum::<f64>())
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Two-sample Kolmogorov-Smirnov statistic: the largest gap between the two
/// empirical CDFs.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(input_err!("ks_statistic needs non-empty samples"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(input_err!("ks_statistic got NaN"));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// Survival function of the limiting Kolmogorov distribution,
/// `Q(x) = 2 Σ (-1)^(k-1) exp(-2 k² x²)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        // Jacobi theta form converges fast for small x.
        let t = std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let s: f64 = (1..=20).map(|k| (-((2 * k - 1) as f64).powi(2) * t).exp()).sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s).clamp(0.0, 1.0);
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * (k * k) as f64 * x * x).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

/// Two-sample KS test, asymptotic p-value `Q(sqrt(nm/(n+m)) · D)`.
pub fn ks_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let d = ks_statistic(a, b)?;
    let (n, m) = (a.len() as f64, b.len() as f64);
    Ok((d, kolmogorov_sf((n * m / (n + m)).sqrt() * d)))
}

/// Lowercased whitespace tokens.
pub fn rouge_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 between a candidate and a reference text.
pub fn rouge_l_f1(candidate: &str, reference: &str) -> f64 {
    let c = rouge_tokens(candidate);
    let r = rouge_tokens(reference);
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let l = lcs_len(&c, &r) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / c.len() as f64;
    let rec = l / r.len() as f64;
    2.0 * p * rec / (p + rec)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log σ(x)` without overflow.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc_roc(&[0.9, 0.4], &[0.5, 0.1]).unwrap(), 0.75);
        assert_eq!(auc_roc(&[2.0, 3.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[1.0; 3], &[1.0; 4]).unwrap(), 0.5);
        assert!(auc_roc(&[], &[1.0]).is_err());
    }

    #[test]
    fn harmonic_mean_rules() {
        assert_eq!(harmonic_mean(&[1.0; 9]).unwrap(), 1.0);
        assert!((harmonic_mean(&[0.5; 9]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(harmonic_mean(&[0.7, 0.0, 0.9]).unwrap(), 0.0);
        assert!((harmonic_mean(&[0.5, 1.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(harmonic_mean(&[]).is_err());
        assert!(harmonic_mean(&[-0.1]).is_err());
    }

    #[test]
    fn ks_examples() {
        let a: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert_eq!(ks_test(&a, &a).unwrap(), (0.0, 1.0));
        let b: Vec<f64> = (100..150).map(|i| i as f64).collect();
        let (d, p) = ks_test(&a, &b).unwrap();
        assert_eq!(d, 1.0);
        assert!(p < 1e-6);
        assert_eq!(ks_statistic(&[1.0, 2.0], &[1.0, 3.0]).unwrap(), 0.5);
        assert!(ks_test(&[], &a).is_err());
    }

    #[test]
    fn kolmogorov_sf_reference_points() {
        // kstwobign.sf reference values
        for (x, want) in [
            (0.5, 0.963945243),
            (1.0, 0.269999671),
            (1.36, 0.049485877),
            (2.0, 0.000670925),
        ] {
            assert!((kolmogorov_sf(x) - want).abs() < 1e-5, "x={x}");
        }
        // the two series agree where they meet
        let t = std::f64::consts::PI.powi(2) / (8.0 * 1.18f64.powi(2));
        let small: f64 = 1.0
            - (2.0 * std::f64::consts::PI).sqrt() / 1.18
                * (1..=20).map(|k| (-((2 * k - 1) as f64).powi(2) * t).exp()).sum::<f64>();
        assert!((small - kolmogorov_sf(1.18)).abs() < 1e-12);
    }

    #[test]
    fn rouge_examples() {
        assert!((rouge_l_f1("the cat sat", "the cat ran") - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rouge_l_f1("a b c", "a b c"), 1.0);
        assert_eq!(rouge_l_f1("x y", "a b"), 0.0);
        assert_eq!(rouge_l_f1("", "a b"), 0.0);
        assert_eq!(rouge_l_f1("The Cat", "the cat"), 1.0);
    }

    #[test]
    fn sigmoid_stability() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((log_sigmoid(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!(log_sigmoid(-800.0).is_finite());
        assert_eq!(log_sigmoid(800.0), 0.0);
    }

    proptest! {
        #[test]
        fn auc_is_antisymmetric(pos in prop::collection::vec(0u8..5, 1..8), neg in prop::collection::vec(0u8..5, 1..8)) {
            let p: Vec<f64> = pos.iter().map(|&v| v as f64).collect();
            let n: Vec<f64> = neg.iter().map(|&v| v as f64).collect();
            let a = auc_roc(&p, &n).unwrap();
            prop_assert!((a + auc_roc(&n, &p).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rouge_symmetric_and_identity(a in prop::collection::vec(0u8..4, 0..7), b in prop::collection::vec(0u8..4, 0..7)) {
            let sa = a.iter().map(|v| format!("w{v}")).collect::<Vec<_>>().join(" ");
            let sb = b.iter().map(|v| format!("w{v}")).collect::<Vec<_>>().join(" ");
            let f = rouge_l_f1(&sa, &sb);
            prop_assert!((f - rouge_l_f1(&sb, &sa)).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert_eq!(f == 1.0, !a.is_empty() && a == b);
        }

        #[test]
        fn ks_p_value_in_unit_interval(a in prop::collection::vec(-5.0f64..5.0, 2..20), b in prop::collection::vec(-5.0f64..5.0, 2..20)) {
            let (d, p) = ks_test(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
