//! Power-law fits of loss against parameter count and the published
//! reference curves.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// `loss(N) = (N / n_c)^(−alpha)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLawFit {
    pub n_c: f64,
    pub alpha: f64,
    /// Root-mean-square error of the fit in log-loss space.
    pub residual: f64,
}

impl PowerLawFit {
    pub fn loss(&self, n: f64) -> f64 {
        (n / self.n_c).powf(-self.alpha)
    }
}

/// Least squares on `ln loss = −α(ln N − ln N_c)` over at least three
/// positive points.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(Error::Input(format!(
            "a power-law fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some((n, l)) = points.iter().find(|(n, l)| !(*n > 0.0 && *l > 0.0 && n.is_finite() && l.is_finite())) {
        return Err(Error::Domain(format!(
            "power-law points must be positive and finite, got N={n}, loss={l}"
        )));
    }
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(n, _)| n.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, l)| l.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("power-law points need at least two distinct N".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let alpha = -slope;
    if !(alpha > 0.0) {
        return Err(Error::Numeric(format!(
            "loss does not decrease with N (fitted exponent {alpha})"
        )));
    }
    // ln loss = slope·ln N + c with c = α ln N_c
    let c = my - slope * mx;
    let n_c = (c / alpha).exp();
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (slope * x + c - y).powi(2))
        .sum::<f64>()
        / k)
        .sqrt();
    Ok(PowerLawFit { n_c, alpha, residual })
}

/// Reads `N,loss` rows; a non-numeric first row is taken as a header.
pub fn parse_points(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Input(format!("points csv: {e}")))?;
        if record.len() != 2 {
            return Err(Error::Input(format!(
                "points csv row {} has {} fields, expected N,loss",
                i + 1,
                record.len()
            )));
        }
        match (record[0].parse::<f64>(), record[1].parse::<f64>()) {
            (Ok(n), Ok(l)) => out.push((n, l)),
            _ if i == 0 => continue,
            _ => {
                return Err(Error::Input(format!(
                    "points csv row {} is not numeric: {:?}",
                    i + 1,
                    record
                )))
            }
        }
    }
    Ok(out)
}

/// Published loss-versus-parameters fits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Curve {
    Transformer,
    Lstm,
    Lmu,
    LmuGlobal,
}

impl Curve {
    pub const ALL: [Curve; 4] = [Curve::Transformer, Curve::Lstm, Curve::Lmu, Curve::LmuGlobal];

    /// `(N_c, α)` of the parameter term.
    pub fn constants(self) -> (f64, f64) {
        match self {
            Curve::Transformer => (6.5e13, 0.077),
            Curve::Lstm => (7.45e14, 0.071),
            Curve::Lmu => (1.95e14, 0.072),
            Curve::LmuGlobal => (3.80e14, 0.069),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Curve::Transformer => "transformer",
            Curve::Lstm => "lstm",
            Curve::Lmu => "lmu",
            Curve::LmuGlobal => "lmu_g",
        }
    }
}

/// Exponent of the transformer's training-steps term.
pub const TRANSFORMER_STEPS_EXPONENT: f64 = 0.76;

impl FromStr for Curve {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transformer" => Ok(Curve::Transformer),
            "lstm" => Ok(Curve::Lstm),
            "lmu" => Ok(Curve::Lmu),
            "lmu_g" | "lmu_global" | "lmug" => Ok(Curve::LmuGlobal),
            _ => Err(Error::Unknown {
                kind: "reference curve",
                name: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for Curve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Reference loss in nats at `n` non-embedding parameters. The transformer
/// steps term `(S/S_min)^(−0.76)` is added only when `steps_ratio` is
/// given, since `S_min` is not pinned down by the published form.
pub fn reference_loss(curve: Curve, n: f64, steps_ratio: Option<f64>) -> Result<f64> {
    if !(n > 0.0) {
        return Err(Error::Domain(format!("parameter count must be positive, got {n}")));
    }
    let (n_c, alpha) = curve.constants();
    let mut loss = (n / n_c).powf(-alpha);
    if let (Curve::Transformer, Some(ratio)) = (curve, steps_ratio) {
        if !(ratio > 0.0) {
            return Err(Error::Domain(format!("steps ratio must be positive, got {ratio}")));
        }
        loss += ratio.powf(-TRANSFORMER_STEPS_EXPONENT);
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn samples(n_c: f64, alpha: f64) -> Vec<(f64, f64)> {
        [5.5e4, 1e5, 2e5, 4e5, 7e5, 1e6]
            .iter()
            .map(|&n| (n, (n / n_c).powf(-alpha)))
            .collect()
    }

    #[test]
    fn recovers_noiseless_curve() {
        let fit = fit_power_law(&samples(1.95e14, 0.072)).unwrap();
        assert!((fit.n_c / 1.95e14 - 1.0).abs() <= 1e-6, "{fit:?}");
        assert!((fit.alpha / 0.072 - 1.0).abs() <= 1e-6, "{fit:?}");
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn rejects_bad_points() {
        assert!(matches!(fit_power_law(&[(1.0, 2.0), (2.0, 1.0)]), Err(Error::Input(_))));
        assert!(matches!(
            fit_power_law(&[(1.0, 2.0), (2.0, 0.0), (3.0, 1.0)]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            fit_power_law(&[(-1.0, 2.0), (2.0, 1.0), (3.0, 1.0)]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn noisy_exponent_within_ten_percent() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                let n = 1e4 * 1.3f64.powi(i);
                (n, (n / 1.95e14).powf(-0.072) * (1.0 + rng.gen_range(-0.05..0.05)))
            })
            .collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!((fit.alpha / 0.072 - 1.0).abs() <= 0.1, "{fit:?}");
    }

    #[test]
    fn reference_values() {
        assert_eq!(reference_loss(Curve::Lmu, 1.95e14, None).unwrap(), 1.0);
        assert_eq!(reference_loss(Curve::Lstm, 7.45e14, None).unwrap(), 1.0);
        assert_eq!(reference_loss(Curve::LmuGlobal, 3.80e14, None).unwrap(), 1.0);
        assert_eq!(reference_loss(Curve::Transformer, 6.5e13, None).unwrap(), 1.0);
        let lmu = reference_loss(Curve::Lmu, 1e6, None).unwrap();
        assert!((lmu - 3.95).abs() < 0.005, "{lmu}");
        assert_eq!(reference_loss(Curve::Transformer, 6.5e13, Some(1.0)).unwrap(), 2.0);
        assert!(matches!("gru".parse::<Curve>(), Err(Error::Unknown { .. })));
    }

    #[test]
    fn csv_points() {
        let pts = parse_points("N,loss\n# comment\n1e5, 4.1\n2e5,3.9\n").unwrap();
        assert_eq!(pts, vec![(1e5, 4.1), (2e5, 3.9)]);
        assert!(parse_points("1,2\nx,y\n").is_err());
    }

    proptest! {
        #[test]
        fn scale_equivariant(log_c in -3.0f64..3.0, alpha in 0.02f64..0.5) {
            let c = 10f64.powf(log_c);
            let base = samples(3e13, alpha);
            let scaled: Vec<_> = base.iter().map(|&(n, l)| (n * c, l)).collect();
            let a = fit_power_law(&base).unwrap();
            let b = fit_power_law(&scaled).unwrap();
            prop_assert!((b.n_c / (a.n_c * c) - 1.0).abs() < 1e-6);
            prop_assert!((b.alpha - a.alpha).abs() < 1e-9);
        }
    }
}
