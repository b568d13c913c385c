//! Singular-spectrum statistics: normalized singular distribution and
//! effective rank (the exponential of the spectral entropy).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::svd::{numerical_rank, svd};

/// Spectrum summary of one matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralReport {
    pub label: String,
    /// Non-increasing singular values.
    pub sigma: Vec<f64>,
    /// Normalized singular distribution, `p_i = sigma_i / sum(sigma)`.
    pub p: Vec<f64>,
    /// `exp` of the Shannon entropy of `p`.
    pub effective_rank: f64,
    /// Count of singular values above the relative rank cutoff.
    pub exact_rank: usize,
}

fn check_sigma(sigma: &[f64]) -> Result<()> {
    if sigma.iter().any(|&s| s < 0.0 || !s.is_finite()) {
        return Err(Error::Validation(
            "singular values must be finite and non-negative".into(),
        ));
    }
    if sigma.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Validation(
            "singular values must be non-increasing".into(),
        ));
    }
    if sigma.iter().all(|&s| s == 0.0) {
        return Err(Error::Validation(
            "all singular values are zero: distribution undefined".into(),
        ));
    }
    Ok(())
}

/// Relative weight of each singular value in the spectrum.
pub fn singular_distribution(sigma: &[f64]) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    let total: f64 = sigma.iter().sum();
    Ok(sigma.iter().map(|&s| s / total).collect())
}

/// Effective rank: `exp(-sum p_i log p_i)` with the `0 log 0 = 0`
/// convention. Lies in `[1, Q]` for a length-Q spectrum with any mass.
pub fn effective_rank(sigma: &[f64]) -> Result<f64> {
    let p = singular_distribution(sigma)?;
    let entropy: f64 = p
        .iter()
        .filter(|&&pi| pi > 0.0)
        .map(|&pi| -pi * pi.ln())
        .sum();
    Ok(entropy.exp())
}

/// Full spectrum report for a matrix.
pub fn spectral_report(m: &Matrix, label: &str) -> Result<SpectralReport> {
    let s = svd(m, false)?;
    let p = singular_distribution(&s.sigma)?;
    let effective = effective_rank(&s.sigma)?;
    Ok(SpectralReport {
        label: label.to_string(),
        exact_rank: numerical_rank(&s.sigma),
        sigma: s.sigma,
        p,
        effective_rank: effective,
    })
}

/// Renders paired weight/activation reports as a fixed-width text table:
/// labels across the top, one `W0` row and one `X_pre` row, effective ranks
/// with two decimals. Pairs must agree on their label.
pub fn render_report_table(pairs: &[(SpectralReport, SpectralReport)]) -> Result<String> {
    for (w, x) in pairs {
        if w.label != x.label {
            return Err(Error::Validation(format!(
                "paired reports disagree on label: {:?} vs {:?}",
                w.label, x.label
            )));
        }
    }
    let row_headers = ["W0", "X_pre"];
    let head_width = row_headers.iter().map(|h| h.len()).max().unwrap();
    let widths: Vec<usize> = pairs
        .iter()
        .map(|(w, x)| {
            w.label
                .len()
                .max(format!("{:.2}", w.effective_rank).len())
                .max(format!("{:.2}", x.effective_rank).len())
        })
        .collect();

    let mut out = String::new();
    write!(out, "{:head_width$}", "").unwrap();
    for ((w, _), width) in pairs.iter().zip(&widths) {
        write!(out, "  {:>width$}", w.label).unwrap();
    }
    out.push('\n');
    if pairs.is_empty() {
        return Ok(out);
    }
    for (hi, header) in row_headers.iter().enumerate() {
        write!(out, "{header:<head_width$}").unwrap();
        for ((w, x), width) in pairs.iter().zip(&widths) {
            let value = if hi == 0 { w.effective_rank } else { x.effective_rank };
            write!(out, "  {value:>width$.2}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

/// CSV export of one report: header `idx,sigma,p`, one row per singular
/// value, 17 significant digits.
pub fn report_to_csv(report: &SpectralReport) -> String {
    let mut out = String::from("idx,sigma,p\n");
    for (i, (s, p)) in report.sigma.iter().zip(&report.p).enumerate() {
        writeln!(out, "{i},{s:.16e},{p:.16e}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::outer;

    #[test]
    fn distribution_normalizes() {
        assert_eq!(singular_distribution(&[1.0, 1.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(singular_distribution(&[3.0, 1.0]).unwrap(), vec![0.75, 0.25]);
        assert_eq!(
            singular_distribution(&[2.0, 1.0, 1.0]).unwrap(),
            vec![0.5, 0.25, 0.25]
        );
    }

    #[test]
    fn distribution_rejects_degenerate_inputs() {
        assert!(singular_distribution(&[0.0, 0.0]).is_err());
        assert!(singular_distribution(&[1.0, 2.0]).is_err()); // increasing
        assert!(singular_distribution(&[1.0, -0.5]).is_err());
    }

    #[test]
    fn effective_rank_analytic_cases() {
        assert!((effective_rank(&[1.0, 1.0]).unwrap() - 2.0).abs() < 1e-12);
        assert!((effective_rank(&[1.0, 0.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        // p = (1/2, 1/4, 1/4): entropy = 1.5 ln 2, eRank = 2^1.5.
        let e = effective_rank(&[2.0, 1.0, 1.0]).unwrap();
        assert!((e - 2f64.powf(1.5)).abs() < 1e-12, "{e}");
    }

    #[test]
    fn effective_rank_scale_invariance() {
        let sigma = [5.0, 3.0, 1.0, 0.25];
        let base = effective_rank(&sigma).unwrap();
        for c in [1e-6, 0.5, 1e6] {
            let scaled: Vec<f64> = sigma.iter().map(|s| s * c).collect();
            assert!((effective_rank(&scaled).unwrap() - base).abs() < 1e-10);
        }
    }

    #[test]
    fn effective_rank_concentration_limit() {
        // (1, eps, ..., eps) approaches rank 1 as eps shrinks, strictly.
        let mut last = f64::INFINITY;
        for eps in [1e-3, 1e-6, 1e-9] {
            let sigma = vec![1.0, eps, eps, eps];
            let e = effective_rank(&sigma).unwrap();
            assert!(e < last, "not strictly decreasing at eps={eps}");
            last = e;
        }
        assert!((last - 1.0).abs() < 1e-6);
    }

    #[test]
    fn report_matches_standalone_ops() {
        let m = Matrix::from_rows(&[
            &[0.3, 1.4, -0.2, 0.9, 0.0, 1.1],
            &[2.0, -0.4, 0.6, 0.1, 0.8, -0.3],
            &[0.5, 0.5, 1.5, -1.0, 0.2, 0.4],
            &[-0.7, 0.9, 0.3, 0.6, 1.2, 0.0],
            &[1.1, 0.2, -0.8, 0.4, 0.5, 0.7],
            &[0.0, 1.3, 0.9, -0.5, 0.6, 1.8],
            &[0.8, -1.1, 0.4, 0.2, 0.9, 0.3],
            &[0.6, 0.7, -0.3, 1.0, 0.1, 0.5],
        ])
        .unwrap();
        let report = spectral_report(&m, "rand8x6").unwrap();
        assert_eq!(report.effective_rank, effective_rank(&report.sigma).unwrap());
        let psum: f64 = report.p.iter().sum();
        assert!((psum - 1.0).abs() < 1e-12);
        assert!(report.effective_rank >= 1.0);
        assert!(report.effective_rank <= report.sigma.len() as f64);
    }

    #[test]
    fn report_identity_and_rank_one() {
        let id = spectral_report(&Matrix::identity(4), "id").unwrap();
        assert!((id.effective_rank - 4.0).abs() < 1e-10);
        assert_eq!(id.exact_rank, 4);

        let r1 = outer(&[1.0, 2.0, -1.0], &[0.5, 0.25]);
        let rep = spectral_report(&r1, "rank1").unwrap();
        assert!((rep.effective_rank - 1.0).abs() < 1e-10);
        assert_eq!(rep.exact_rank, 1);
    }

    #[test]
    fn table_renders_paper_style_rows() {
        let mk = |label: &str, e: f64| SpectralReport {
            label: label.into(),
            sigma: vec![1.0],
            p: vec![1.0],
            effective_rank: e,
            exact_rank: 1,
        };
        let table =
            render_report_table(&[(mk("kproj (0)", 548.30), mk("kproj (0)", 101.28))]).unwrap();
        assert!(table.contains("548.30"));
        assert!(table.contains("101.28"));
        assert!(table.contains("W0"));
        assert!(table.contains("X_pre"));

        let small = render_report_table(&[(mk("a", 4.0), mk("a", 1.0))]).unwrap();
        assert!(small.contains("4.00"));
        assert!(small.contains("1.00"));

        let empty = render_report_table(&[]).unwrap();
        assert_eq!(empty.lines().count(), 1);
        assert!(!empty.contains("W0"));

        let mismatched = render_report_table(&[(mk("a", 1.0), mk("b", 1.0))]);
        assert!(mismatched.is_err());
    }

    #[test]
    fn csv_has_17_significant_digits() {
        let rep = SpectralReport {
            label: "x".into(),
            sigma: vec![1.0 / 3.0],
            p: vec![1.0],
            effective_rank: 1.0,
            exact_rank: 1,
        };
        let csv = report_to_csv(&rep);
        assert!(csv.starts_with("idx,sigma,p\n"));
        assert!(csv.contains("3.3333333333333331e-1"));
    }
}
