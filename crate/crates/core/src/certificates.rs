//! Well-posedness certificates computed from the scalar constant matrices
//! alone, with no discretisation involved.
//!
//! A [`ConstantsBundle`] carries the coupling constants `alpha` (ellipticity
//! constants on the diagonal, nonpositive continuity constants off the
//! diagonal), the lower-order constants `omega`, the diagonal continuity
//! constants and the norm of the embedding `V -> H`.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm_real, symmetric_eigenvalues, RMat};
use crate::report::{CertificateEntry, CertificateReport, Criterion, Verdict};

/// Relative tolerance used for every semidefiniteness decision.
pub const SEMIDEFINITE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsBundle {
    alpha: RMat,
    omega: RMat,
    m_diag: Vec<f64>,
    embedding_norm: f64,
}

impl ConstantsBundle {
    pub fn new(alpha: RMat, omega: RMat, m_diag: Vec<f64>, embedding_norm: f64) -> Result<Self> {
        let m = alpha.nrows();
        if m == 0 {
            return Err(Error::Dimension("constants bundle needs m >= 1".into()));
        }
        if !alpha.is_square() || omega.shape() != (m, m) || m_diag.len() != m {
            return Err(Error::Dimension(format!(
                "alpha {:?}, omega {:?} and m_diag ({}) must all describe m = {m}",
                alpha.shape(),
                omega.shape(),
                m_diag.len()
            )));
        }
        if alpha.iter().chain(omega.iter()).chain(m_diag.iter()).any(|x| !x.is_finite())
            || !embedding_norm.is_finite()
        {
            return Err(Error::Validation("constants must be finite".into()));
        }
        for i in 0..m {
            for j in 0..m {
                if i != j && alpha[(i, j)] > 0.0 {
                    return Err(Error::Validation(format!(
                        "off-diagonal alpha[{}][{}] = {} must be <= 0",
                        i + 1,
                        j + 1,
                        alpha[(i, j)]
                    )));
                }
            }
        }
        if let Some(bad) = m_diag.iter().find(|&&x| x < 0.0) {
            return Err(Error::Validation(format!("diagonal continuity constant {bad} is negative")));
        }
        if embedding_norm < 0.0 {
            return Err(Error::Validation("embedding norm must be >= 0".into()));
        }
        Ok(Self {
            alpha,
            omega,
            m_diag,
            embedding_norm,
        })
    }

    /// Bundle with `omega = 0`, unit diagonal continuity constants and unit
    /// embedding norm.
    pub fn from_alpha(alpha: RMat) -> Result<Self> {
        let m = alpha.nrows();
        Self::new(alpha, RMat::zeros(m, m), vec![1.0; m], 1.0)
    }

    pub fn m(&self) -> usize {
        self.alpha.nrows()
    }

    pub fn alpha(&self) -> &RMat {
        &self.alpha
    }

    pub fn omega(&self) -> &RMat {
        &self.omega
    }

    pub fn m_diag(&self) -> &[f64] {
        &self.m_diag
    }

    pub fn embedding_norm(&self) -> f64 {
        self.embedding_norm
    }

    /// Continuity matrix: `M_ii` on the diagonal, `-alpha_ij` elsewhere.
    pub fn continuity_matrix(&self) -> RMat {
        let m = self.m();
        RMat::from_fn(m, m, |i, j| if i == j { self.m_diag[i] } else { -self.alpha[(i, j)] })
    }

    /// `|omega_ij|` off the diagonal, zero on it.
    pub fn omega_offdiag_abs(&self) -> RMat {
        let m = self.m();
        RMat::from_fn(m, m, |i, j| if i == j { 0.0 } else { self.omega[(i, j)].abs() })
    }
}

pub fn symmetric_part(a: &RMat) -> Result<RMat> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("matrix must be square, got {:?}", a.shape())));
    }
    Ok((a + a.transpose()).scale(0.5))
}

/// Smallest eigenvalue of `(A + A^T)/2`; `A` is positive definite with
/// constant `c` exactly when this is `>= c`.
pub fn min_symmetric_eigenvalue(a: &RMat) -> Result<f64> {
    let sym = symmetric_part(a)?;
    symmetric_eigenvalues(&sym)?
        .first()
        .copied()
        .ok_or_else(|| Error::Dimension("empty matrix".into()))
}

fn max_symmetric_eigenvalue(a: &RMat) -> Result<f64> {
    let sym = symmetric_part(a)?;
    symmetric_eigenvalues(&sym)?
        .last()
        .copied()
        .ok_or_else(|| Error::Dimension("empty matrix".into()))
}

fn semidefinite_slack(a: &RMat) -> Result<f64> {
    Ok(SEMIDEFINITE_TOL * spectral_norm_real(a)?)
}

/// Diagonal dominance of the symmetrised constants:
/// `alpha_ii > sum_{k != i} |alpha_ik + alpha_ki| / 2` for every row.
pub fn gershgorin_check(bundle: &ConstantsBundle) -> CertificateEntry {
    let a = bundle.alpha();
    let m = bundle.m();
    let mut pass = true;
    let mut entry = CertificateEntry::new(Criterion::Gershgorin, Verdict::Pass, "");
    let mut worst = f64::INFINITY;
    for i in 0..m {
        let radius: f64 = (0..m)
            .filter(|&k| k != i)
            .map(|k| (a[(i, k)] + a[(k, i)]).abs() / 2.0)
            .sum();
        let margin = a[(i, i)] - radius;
        pass &= a[(i, i)] > radius;
        worst = worst.min(margin);
        entry = entry.with(format!("margin_{}", i + 1), margin);
    }
    entry.verdict = Verdict::from_bool(pass);
    entry.explanation = if pass {
        format!("every row strictly dominant (smallest margin {})", crate::fmt_f64(worst))
    } else {
        format!("row dominance violated (smallest margin {})", crate::fmt_f64(worst))
    };
    entry
}

/// Certifies H-ellipticity of the form matrix with constants
/// `(lambda_min(sym A), ||Omega||_2)`.
pub fn ellipticity_certificate(bundle: &ConstantsBundle) -> Result<CertificateEntry> {
    let alpha = min_symmetric_eigenvalue(bundle.alpha())?;
    let omega = spectral_norm_real(bundle.omega())?;
    let certified = alpha > semidefinite_slack(bundle.alpha())?;
    let explanation = if certified {
        "A positive definite: form is H-elliptic with constants (alpha, omega)".to_string()
    } else {
        "A is not positive definite: no ellipticity certificate".to_string()
    };
    Ok(CertificateEntry::new(Criterion::Ellipticity, Verdict::from_bool(certified), explanation)
        .with("alpha", alpha)
        .with("omega", omega))
}

/// `||M||_2 + ||Omega_0||_2 * e^2`.
pub fn continuity_bound(bundle: &ConstantsBundle) -> Result<f64> {
    let m = spectral_norm_real(&bundle.continuity_matrix())?;
    let o = spectral_norm_real(&bundle.omega_offdiag_abs())?;
    Ok(m + o * bundle.embedding_norm().powi(2))
}

/// Accretivity from `A - diag A` positive semidefinite and
/// `Omega - diag Omega` negative semidefinite. `diagonal_accretive` is the
/// caller's assertion that every diagonal form is accretive on its own.
pub fn accretivity_certificate(
    bundle: &ConstantsBundle,
    diagonal_accretive: bool,
) -> Result<CertificateEntry> {
    let m = bundle.m();
    let a0 = RMat::from_fn(m, m, |i, j| if i == j { 0.0 } else { bundle.alpha()[(i, j)] });
    let o0 = RMat::from_fn(m, m, |i, j| if i == j { 0.0 } else { bundle.omega()[(i, j)] });
    let a0_min = min_symmetric_eigenvalue(&a0)?;
    let o0_max = max_symmetric_eigenvalue(&o0)?;
    let a0_ok = a0_min >= -semidefinite_slack(&a0)?;
    let o0_ok = o0_max <= semidefinite_slack(&o0)?;
    let flag = if diagonal_accretive { 1.0 } else { 0.0 };
    let entry = |verdict, why: &str| {
        CertificateEntry::new(Criterion::Accretivity, verdict, why)
            .with("lambda_min_A0", a0_min)
            .with("lambda_max_Omega0", o0_max)
            .with("diagonal_accretive", flag)
    };
    if !diagonal_accretive {
        return Ok(entry(
            Verdict::NotApplicable,
            "diagonal forms not asserted accretive",
        ));
    }
    Ok(match (a0_ok, o0_ok) {
        (true, true) => entry(Verdict::Pass, "A0 positive and Omega0 negative semidefinite"),
        (false, _) => entry(Verdict::Fail, "A0 is not positive semidefinite"),
        (true, false) => entry(Verdict::Fail, "Omega0 is not negative semidefinite"),
    })
}

/// `pi/2 - arctan(continuity_bound)`, the sector half-angle of the generated
/// analytic semigroup.
pub fn analyticity_angle(bundle: &ConstantsBundle) -> Result<f64> {
    Ok(angle_from_bound(continuity_bound(bundle)?))
}

pub fn angle_from_bound(bound: f64) -> f64 {
    FRAC_PI_2 - bound.atan()
}

/// Uniform exponential stability: applicable only when `Omega == 0`; passes
/// when `sym(A)` is positive definite.
pub fn stability_check(bundle: &ConstantsBundle) -> Result<CertificateEntry> {
    let lambda = min_symmetric_eigenvalue(bundle.alpha())?;
    if bundle.omega().iter().any(|&x| x != 0.0) {
        return Ok(CertificateEntry::new(
            Criterion::ExponentialStability,
            Verdict::NotApplicable,
            "omega is not identically zero",
        )
        .with("lambda_min", lambda));
    }
    let pass = lambda > semidefinite_slack(bundle.alpha())?;
    let why = if pass {
        "omega = 0 and A positive definite: uniformly exponentially stable"
    } else {
        "omega = 0 but A is not positive definite"
    };
    Ok(CertificateEntry::new(Criterion::ExponentialStability, Verdict::from_bool(pass), why)
        .with("lambda_min", lambda))
}

/// All certificates in one report. The analyticity angle is only reported as
/// passing when ellipticity was certified.
pub fn certify(bundle: &ConstantsBundle, diagonal_accretive: bool) -> Result<CertificateReport> {
    let mut report = CertificateReport::default();
    report.push(gershgorin_check(bundle));
    let ell = ellipticity_certificate(bundle)?;
    let elliptic = ell.verdict == Verdict::Pass;
    report.push(ell);
    let bound = continuity_bound(bundle)?;
    report.push(
        CertificateEntry::new(Criterion::Continuity, Verdict::Pass, "form matrix is continuous")
            .with("bound", bound),
    );
    report.push(accretivity_certificate(bundle, diagonal_accretive)?);
    let angle = angle_from_bound(bound);
    report.push(if elliptic {
        CertificateEntry::new(Criterion::AnalyticityAngle, Verdict::Pass, "analytic semigroup")
            .with("angle", angle)
            .with("angle_over_pi", angle / std::f64::consts::PI)
    } else {
        CertificateEntry::new(
            Criterion::AnalyticityAngle,
            Verdict::NotApplicable,
            "requires the ellipticity certificate",
        )
    });
    report.push(stability_check(bundle)?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_4;

    fn mat(rows: &[&[f64]]) -> RMat {
        let m = rows.len();
        RMat::from_fn(m, rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn symmetric_part_examples() {
        let s = mat(&[&[2.0, -1.0], &[-1.0, 2.0]]);
        assert_eq!(symmetric_part(&s).unwrap(), s);
        assert_eq!(
            symmetric_part(&mat(&[&[0.0, 1.0], &[0.0, 0.0]])).unwrap(),
            mat(&[&[0.0, 0.5], &[0.5, 0.0]])
        );
        assert_eq!(
            symmetric_part(&mat(&[&[1.0, 2.0], &[4.0, 3.0]])).unwrap(),
            mat(&[&[1.0, 3.0], &[3.0, 3.0]])
        );
        assert!(matches!(symmetric_part(&RMat::zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn min_eigenvalue_examples() {
        assert_abs_diff_eq!(min_symmetric_eigenvalue(&mat(&[&[2.0, -1.0], &[-1.0, 2.0]])).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(min_symmetric_eigenvalue(&RMat::identity(3, 3)).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(min_symmetric_eigenvalue(&mat(&[&[1.0, -2.0], &[-2.0, 1.0]])).unwrap(), -1.0, epsilon = 1e-14);
    }

    #[test]
    fn gershgorin_examples() {
        let b = ConstantsBundle::from_alpha(mat(&[&[2.0, -1.0], &[-1.0, 2.0]])).unwrap();
        let e = gershgorin_check(&b);
        assert_eq!(e.verdict, Verdict::Pass);
        assert_eq!(e.constant("margin_1"), Some(1.0));

        let b = ConstantsBundle::from_alpha(mat(&[&[1.0, -1.0], &[-1.0, 1.0]])).unwrap();
        assert_eq!(gershgorin_check(&b).verdict, Verdict::Fail);

        let b = ConstantsBundle::from_alpha(mat(&[&[3.0, -1.0, 0.0], &[-1.0, 3.0, -1.0], &[0.0, -1.0, 3.0]])).unwrap();
        let e = gershgorin_check(&b);
        assert_eq!(e.verdict, Verdict::Pass);
        assert_eq!(e.constant("margin_2"), Some(1.0));
    }

    #[test]
    fn ellipticity_examples() {
        let b = ConstantsBundle::from_alpha(mat(&[&[2.0, -1.0], &[-1.0, 2.0]])).unwrap();
        let e = ellipticity_certificate(&b).unwrap();
        assert_eq!(e.verdict, Verdict::Pass);
        assert_abs_diff_eq!(e.constant("alpha").unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.constant("omega").unwrap(), 0.0, epsilon = 1e-12);

        let b = ConstantsBundle::new(RMat::identity(2, 2), mat(&[&[0.0, 1.0], &[1.0, 0.0]]), vec![1.0; 2], 1.0).unwrap();
        let e = ellipticity_certificate(&b).unwrap();
        assert_eq!(e.verdict, Verdict::Pass);
        assert_abs_diff_eq!(e.constant("omega").unwrap(), 1.0, epsilon = 1e-12);

        let b = ConstantsBundle::new(mat(&[&[1.0, -2.0], &[-2.0, 1.0]]), mat(&[&[0.3, 1.0], &[0.0, 2.0]]), vec![1.0; 2], 1.0).unwrap();
        let e = ellipticity_certificate(&b).unwrap();
        assert_eq!(e.verdict, Verdict::Fail);
        assert_abs_diff_eq!(e.constant("alpha").unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn continuity_examples() {
        let b = ConstantsBundle::new(
            RMat::identity(2, 2),
            mat(&[&[0.0, 0.5], &[0.5, 0.0]]),
            vec![1.0, 1.0],
            1.0,
        )
        .unwrap();
        assert_abs_diff_eq!(continuity_bound(&b).unwrap(), 1.5, epsilon = 1e-12);

        let b = ConstantsBundle::new(RMat::identity(3, 3), RMat::zeros(3, 3), vec![1.0; 3], 7.3).unwrap();
        assert_abs_diff_eq!(continuity_bound(&b).unwrap(), 1.0, epsilon = 1e-12);

        let b = ConstantsBundle::new(mat(&[&[2.0, -1.0], &[-1.0, 2.0]]), RMat::zeros(2, 2), vec![2.0, 2.0], 1.0).unwrap();
        assert_abs_diff_eq!(continuity_bound(&b).unwrap(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn accretivity_examples() {
        let b = ConstantsBundle::from_alpha(RMat::identity(2, 2)).unwrap();
        assert_eq!(accretivity_certificate(&b, true).unwrap().verdict, Verdict::Pass);

        let b = ConstantsBundle::from_alpha(mat(&[&[1.0, -1.0], &[-1.0, 1.0]])).unwrap();
        let e = accretivity_certificate(&b, true).unwrap();
        assert_eq!(e.verdict, Verdict::Fail);
        assert_abs_diff_eq!(e.constant("lambda_min_A0").unwrap(), -1.0, epsilon = 1e-12);

        let b = ConstantsBundle::new(RMat::identity(2, 2), mat(&[&[0.0, -1.0], &[-1.0, 0.0]]), vec![1.0; 2], 1.0).unwrap();
        let e = accretivity_certificate(&b, true).unwrap();
        assert_eq!(e.verdict, Verdict::Fail);
        assert_abs_diff_eq!(e.constant("lambda_max_Omega0").unwrap(), 1.0, epsilon = 1e-12);

        let b = ConstantsBundle::from_alpha(RMat::identity(2, 2)).unwrap();
        assert_eq!(accretivity_certificate(&b, false).unwrap().verdict, Verdict::NotApplicable);
    }

    #[test]
    fn angle_examples() {
        assert_abs_diff_eq!(angle_from_bound(1.0), FRAC_PI_4, epsilon = 1e-15);
        assert_abs_diff_eq!(angle_from_bound(0.0), FRAC_PI_2, epsilon = 1e-15);
        // pi/2 - atan(1.5) = atan(2/3)
        assert_abs_diff_eq!(angle_from_bound(1.5), (2.0f64 / 3.0).atan(), epsilon = 1e-15);
        assert_abs_diff_eq!(angle_from_bound(1.5), 0.588, epsilon = 1e-3);
        let b = ConstantsBundle::new(RMat::identity(2, 2), RMat::zeros(2, 2), vec![1.0, 1.0], 1.0).unwrap();
        assert_abs_diff_eq!(analyticity_angle(&b).unwrap(), FRAC_PI_4, epsilon = 1e-12);
    }

    #[test]
    fn stability_examples() {
        let b = ConstantsBundle::from_alpha(mat(&[&[2.0, -1.0], &[-1.0, 2.0]])).unwrap();
        assert_eq!(stability_check(&b).unwrap().verdict, Verdict::Pass);

        let b = ConstantsBundle::new(mat(&[&[2.0, -1.0], &[-1.0, 2.0]]), mat(&[&[0.0, 0.1], &[0.1, 0.0]]), vec![1.0; 2], 1.0).unwrap();
        assert_eq!(stability_check(&b).unwrap().verdict, Verdict::NotApplicable);

        let b = ConstantsBundle::from_alpha(mat(&[&[1.0, -1.0], &[-1.0, 1.0]])).unwrap();
        assert_eq!(stability_check(&b).unwrap().verdict, Verdict::Fail);
    }

    #[test]
    fn bundle_validation() {
        assert!(ConstantsBundle::from_alpha(mat(&[&[1.0, 0.5], &[0.0, 1.0]])).is_err());
        assert!(ConstantsBundle::new(RMat::identity(2, 2), RMat::zeros(2, 2), vec![-1.0, 1.0], 1.0).is_err());
        assert!(ConstantsBundle::new(RMat::identity(2, 2), RMat::zeros(3, 3), vec![1.0, 1.0], 1.0).is_err());
        assert!(ConstantsBundle::from_alpha(RMat::zeros(0, 0)).is_err());
    }

    #[test]
    fn full_report_for_tridiagonal_bundle() {
        let b = ConstantsBundle::new(mat(&[&[2.0, -1.0], &[-1.0, 2.0]]), RMat::zeros(2, 2), vec![0.0, 0.0], 1.0).unwrap();
        let r = certify(&b, true).unwrap();
        assert_eq!(r.entries.len(), 6);
        // M = [[0,1],[1,0]] has norm 1, so the angle is pi/4
        let angle = r.get(Criterion::AnalyticityAngle).unwrap().constant("angle").unwrap();
        assert_abs_diff_eq!(angle, FRAC_PI_4, epsilon = 1e-12);
        // A0 = [[0,-1],[-1,0]] is indefinite
        assert!(r.has_failure());
    }
}
