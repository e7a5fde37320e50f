//! Structure → QSS → verification, as one call.

use num_complex::Complex64;

use crate::error::Result;
use crate::linalg::Tolerances;
use crate::model::ModelSpec;
use crate::qss::{
    absorbing_implies_positive_rate, extract_qss, perron_structure, real_eigen_candidates,
    restricted_spectrum, verify_qss, EigenCandidate, PerronReport, QssExtraction,
    VerificationReport,
};
use crate::structure::{
    absorption_operator, check_irreducible, check_subharmonic, restrict, AbsorptionReport,
    IrreducibilityReport, RestrictedGenerator, SubharmonicReport,
};

#[derive(Debug)]
pub struct Analysis {
    pub subharmonic: SubharmonicReport,
    pub restriction: RestrictedGenerator,
    pub absorption: Result<AbsorptionReport>,
    pub irreducibility: IrreducibilityReport,
    /// Spectrum of the restricted predual generator.
    pub spectrum: Vec<Complex64>,
    pub candidates: Vec<EigenCandidate>,
    pub extraction: QssExtraction,
    pub perron: Result<PerronReport>,
    /// One report per family anchor, in family order.
    pub verifications: Vec<VerificationReport>,
    /// Statements of the theory that failed on this model.
    pub theory_failures: Vec<String>,
}

impl Analysis {
    pub fn is_consistent(&self) -> bool {
        self.theory_failures.is_empty()
    }

    pub fn perron_family(&self) -> Option<&crate::qss::QssFamily> {
        let idx = self.perron.as_ref().ok()?.perron_family?;
        self.extraction.families.get(idx)
    }
}

/// Runs the full analysis. Errors are input errors (invalid or
/// non-subharmonic models, numerical breakdown); failures of theoretical
/// statements are collected in [`Analysis::theory_failures`].
pub fn analyze(spec: &ModelSpec, tol: &Tolerances) -> Result<Analysis> {
    let subharmonic = check_subharmonic(spec, tol);
    let restriction = restrict(spec, tol)?;
    let absorption = match absorption_operator(spec, tol) {
        Err(e) if !e.is_theory_violation() => return Err(e),
        r => r,
    };
    let irreducibility = check_irreducible(&restriction);
    let spectrum = restricted_spectrum(&restriction)?;
    let candidates = real_eigen_candidates(&restriction, tol)?;
    let mut extraction = extract_qss(spec, &restriction, &candidates, tol)?;
    let perron = perron_structure(
        &restriction,
        &mut extraction.families,
        Some(&irreducibility),
        tol,
    );

    let mut theory_failures = Vec::new();
    if let Err(e) = &perron {
        theory_failures.push(e.to_string());
    }
    if let Err(e) = &absorption {
        theory_failures.push(e.to_string());
    }
    let mut verifications = Vec::with_capacity(extraction.families.len());
    for fam in &extraction.families {
        let v = verify_qss(spec, &fam.anchor)?;
        if !v.passed {
            theory_failures.push(format!(
                "QSS at alpha = {} fails verification (max residual {:.3e}, log gap {:.3e})",
                fam.alpha,
                v.max_residual(),
                v.alpha_log_gap
            ));
        }
        if let Ok(a) = &absorption {
            if !absorbing_implies_positive_rate(a.is_absorbing, fam.alpha) {
                theory_failures.push(format!(
                    "absorbing p0 carries a QSS with alpha = {}",
                    fam.alpha
                ));
            }
        }
        verifications.push(v);
    }
    Ok(Analysis {
        subharmonic,
        restriction,
        absorption,
        irreducibility,
        spectrum,
        candidates,
        extraction,
        perron,
        verifications,
        theory_failures,
    })
}
