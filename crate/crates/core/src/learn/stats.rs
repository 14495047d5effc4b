use super::LearnError;
use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson correlation of two equal-length vectors.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, LearnError> {
    if a.len() != b.len() {
        return Err(LearnError::LengthMismatch(format!("{} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(LearnError::UndefinedCorrelation);
    }
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 || !(saa.is_finite() && sbb.is_finite()) {
        return Err(LearnError::UndefinedCorrelation);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Two-sided Student-t confidence interval for the mean of `v`.
pub fn t_interval(v: &[f64], level: f64) -> (f64, f64) {
    let m = mean(v);
    let n = v.len();
    if n < 2 {
        return (m, m);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("valid degrees of freedom")
        .inverse_cdf(0.5 + level / 2.0);
    (m - t * se, m + t * se)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_basics() {
        let x = [1.0, 2.0, 4.0, 8.0, 3.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&x, &[2.0; 5]), Err(LearnError::UndefinedCorrelation));
        assert_eq!(pearson(&[1.0], &[1.0]), Err(LearnError::UndefinedCorrelation));
        assert!(pearson(&x, &[1.0]).is_err());
    }

    #[test]
    fn pearson_known_value() {
        // hand computed: dx = [-1.5,-0.5,0.5,1.5], dy = [-1,-1,1,1]
        // sab = 4, saa = 5, sbb = 4 -> r = 4 / sqrt(20)
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[0.0, 0.0, 2.0, 2.0]).unwrap();
        assert!((r - 4.0 / 20f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn t_interval_matches_table() {
        // t_{0.975, 9} = 2.262157
        let v = [0.9, 0.92, 0.95, 0.93, 0.91, 0.94, 0.96, 0.9, 0.92, 0.97];
        let (lo, hi) = t_interval(&v, 0.95);
        let m = mean(&v);
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 9.0).sqrt();
        let half = 2.262157 * sd / 10f64.sqrt();
        assert!((hi - m - half).abs() < 1e-6);
        assert!((m - lo - half).abs() < 1e-6);
        assert_eq!(t_interval(&[0.5], 0.95), (0.5, 0.5));
    }
}
