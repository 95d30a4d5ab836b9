//! Verdicts, the criterion registry, and certificate reports.
//!
//! Every line of a text report starts with the bracketed id of the criterion
//! it belongs to. The ids are fixed; [`Criterion::ALL`] is the registry.

use std::fmt;

use serde::{Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    #[serde(rename = "NOT-APPLICABLE")]
    NotApplicable,
}

impl Verdict {
    pub fn from_bool(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn is_fail(self) -> bool {
        self == Verdict::Fail
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::NotApplicable => "NOT-APPLICABLE",
        })
    }
}

/// Registry of every criterion the crate can report on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Criterion {
    Gershgorin,
    Ellipticity,
    Continuity,
    Accretivity,
    AnalyticityAngle,
    ExponentialStability,
    Sector,
    Parabola,
    Identification,
    RowSums,
    ColumnSums,
    StripSubspace,
    BallSubspace,
    StripRuntime,
    ProductSubspace,
    Subsystem,
    Realness,
    Positivity,
    Domination,
    LinfContractivity,
}

impl Criterion {
    pub const ALL: [Criterion; 20] = [
        Criterion::Gershgorin,
        Criterion::Ellipticity,
        Criterion::Continuity,
        Criterion::Accretivity,
        Criterion::AnalyticityAngle,
        Criterion::ExponentialStability,
        Criterion::Sector,
        Criterion::Parabola,
        Criterion::Identification,
        Criterion::RowSums,
        Criterion::ColumnSums,
        Criterion::StripSubspace,
        Criterion::BallSubspace,
        Criterion::StripRuntime,
        Criterion::ProductSubspace,
        Criterion::Subsystem,
        Criterion::Realness,
        Criterion::Positivity,
        Criterion::Domination,
        Criterion::LinfContractivity,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Criterion::Gershgorin => "gershgorin",
            Criterion::Ellipticity => "ellipticity",
            Criterion::Continuity => "continuity",
            Criterion::Accretivity => "accretivity",
            Criterion::AnalyticityAngle => "analyticity-angle",
            Criterion::ExponentialStability => "exponential-stability",
            Criterion::Sector => "sector",
            Criterion::Parabola => "parabola",
            Criterion::Identification => "identification",
            Criterion::RowSums => "row-sums",
            Criterion::ColumnSums => "column-sums",
            Criterion::StripSubspace => "strip-subspace",
            Criterion::BallSubspace => "ball-subspace",
            Criterion::StripRuntime => "strip-runtime",
            Criterion::ProductSubspace => "product-subspace",
            Criterion::Subsystem => "subsystem",
            Criterion::Realness => "realness",
            Criterion::Positivity => "positivity",
            Criterion::Domination => "domination",
            Criterion::LinfContractivity => "linf-contractivity",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Criterion::Gershgorin => "strict diagonal dominance of the symmetrised constants matrix",
            Criterion::Ellipticity => "H-ellipticity of the form matrix from a positive definite constants matrix",
            Criterion::Continuity => "continuity bound ||M|| + ||Omega_0|| e^2",
            Criterion::Accretivity => "accretivity from semidefinite off-diagonal constant matrices",
            Criterion::AnalyticityAngle => "angle of the analytic semigroup",
            Criterion::ExponentialStability => "uniform exponential stability for vanishing omega",
            Criterion::Sector => "numerical range inside the ellipticity sector",
            Criterion::Parabola => "numerical range inside a parabola (cosine family)",
            Criterion::Identification => "associated operator equals the matrix of block operators",
            Criterion::RowSums => "equal row sums of the coupling coefficients",
            Criterion::ColumnSums => "equal column sums of the coupling coefficients",
            Criterion::StripSubspace => "invariance of the strips ||u - Pu|| <= a",
            Criterion::BallSubspace => "invariance of the sets ||Pu|| <= a",
            Criterion::StripRuntime => "strip invariance along simulated trajectories",
            Criterion::ProductSubspace => "invariance of a product of closed subspaces",
            Criterion::Subsystem => "invariance of the leading subsystem",
            Criterion::Realness => "real semigroup",
            Criterion::Positivity => "positive semigroup",
            Criterion::Domination => "domination of the decoupled diagonal semigroup",
            Criterion::LinfContractivity => "invariance of the unit ball of L-infinity",
        }
    }

    pub fn from_id(id: &str) -> Option<Criterion> {
        Criterion::ALL.into_iter().find(|c| c.id() == id)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl Serialize for Criterion {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.id())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateEntry {
    pub criterion: Criterion,
    pub verdict: Verdict,
    pub constants: Vec<(String, f64)>,
    pub explanation: String,
}

impl CertificateEntry {
    pub fn new(criterion: Criterion, verdict: Verdict, explanation: impl Into<String>) -> Self {
        Self {
            criterion,
            verdict,
            constants: Vec::new(),
            explanation: explanation.into(),
        }
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.constants.push((name.into(), value));
        self
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn to_line(&self) -> String {
        let mut line = format!("[{}] {}", self.criterion, self.verdict);
        for (name, value) in &self.constants {
            line.push_str(&format!(" {name}={}", crate::fmt_f64(*value)));
        }
        if !self.explanation.is_empty() {
            line.push_str(" :: ");
            line.push_str(&self.explanation);
        }
        line
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CertificateReport {
    pub entries: Vec<CertificateEntry>,
}

impl CertificateReport {
    /// Adds an entry. A criterion may appear at most once; a repeated
    /// criterion replaces the earlier entry.
    pub fn push(&mut self, entry: CertificateEntry) {
        debug_assert!(entry.constants.iter().all(|(_, v)| v.is_finite()));
        match self.entries.iter_mut().find(|e| e.criterion == entry.criterion) {
            Some(slot) => *slot = entry,
            None => self.entries.push(entry),
        }
    }

    pub fn get(&self, criterion: Criterion) -> Option<&CertificateEntry> {
        self.entries.iter().find(|e| e.criterion == criterion)
    }

    pub fn has_failure(&self) -> bool {
        self.entries.iter().any(|e| e.verdict.is_fail())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }
}
