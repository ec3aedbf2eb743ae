//! Machine-readable verdict reports and their re-verification.

use std::path::Path;

use phidecomp::decomp::{
    verify_certificate, verify_witness, DecompositionCertificate, FeasibilityProblem, FeasibilityReport, Verdict,
    WitnessSource,
};
use phidecomp::linalg::ComplexMatrix;
use serde::{Deserialize, Serialize};

use crate::instance::{matrix_from_json, matrix_to_json, MatrixJson};
use crate::{CliError, ExitCode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictLabel {
    Feasible,
    Infeasible,
    Undetermined,
}

impl VerdictLabel {
    pub fn exit_code(self) -> ExitCode {
        match self {
            VerdictLabel::Feasible => ExitCode::Feasible,
            VerdictLabel::Infeasible => ExitCode::Infeasible,
            VerdictLabel::Undetermined => ExitCode::Undetermined,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VerdictLabel::Feasible => "feasible",
            VerdictLabel::Infeasible => "infeasible",
            VerdictLabel::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificatePayload {
    /// Choi matrices `X_k` of the maps `ψ_k`.
    pub choi: Vec<MatrixJson>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessPayload {
    pub w: MatrixJson,
    pub pairing: f64,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelPayload {
    pub holds: bool,
    pub kernel_dim: usize,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub tool: String,
    pub version: String,
    pub instance: String,
    pub seed: u64,
    pub verdict: VerdictLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificatePayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessPayload>,
    /// `λ_min(X_k)` for a certificate, `λ_min(P_k*(W))` for a witness.
    pub margins: Vec<f64>,
    pub iterations: usize,
    /// Absent when the kernel pre-check decided the instance.
    pub final_distance: Option<f64>,
    pub kernel: KernelPayload,
    pub tail_slack: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<String>,
    pub wall_time_s: f64,
}

/// Outcome of re-checking a report's payload against its problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Reverification {
    pub valid: bool,
    /// Certificate residual or witness pairing, recomputed.
    pub value: f64,
    pub margins: Vec<f64>,
}

impl VerdictReport {
    pub fn from_run(
        instance: &str,
        seed: u64,
        prob: &FeasibilityProblem,
        run: &FeasibilityReport,
        wall_time_s: f64,
    ) -> Self {
        let (verdict, certificate, witness, margins, diagnostics) = match &run.verdict {
            Verdict::Feasible(c) => (
                VerdictLabel::Feasible,
                Some(CertificatePayload {
                    choi: c.choi.iter().map(matrix_to_json).collect(),
                    residual: c.residual,
                }),
                None,
                verify_certificate(c, prob).min_eigenvalues,
                None,
            ),
            Verdict::Infeasible(w) => (
                VerdictLabel::Infeasible,
                None,
                Some(WitnessPayload {
                    w: matrix_to_json(&w.w),
                    pairing: -w.gap,
                    source: match w.source {
                        WitnessSource::Kernel => "kernel".to_string(),
                        WitnessSource::Separation => "separation".to_string(),
                    },
                }),
                w.dual_margins.clone(),
                None,
            ),
            Verdict::Undetermined(d) => (VerdictLabel::Undetermined, None, None, Vec::new(), Some(d.reason.clone())),
        };
        VerdictReport {
            tool: "phidecomp".to_string(),
            version: crate::VERSION.to_string(),
            instance: instance.to_string(),
            seed,
            verdict,
            certificate,
            witness,
            margins,
            iterations: run.iterations,
            final_distance: run.final_distance.is_finite().then_some(run.final_distance),
            kernel: KernelPayload {
                holds: run.kernel.holds,
                kernel_dim: run.kernel.kernel_dim,
                max_violation: run.kernel.max_violation,
            },
            tail_slack: run.tail_slack,
            diagnostics,
            wall_time_s,
        }
    }

    pub fn to_json(&self) -> String {
        crate::to_json_compact(self)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::invalid(format!("report: {e}")))
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_json() + "\n")
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn certificate(&self, prob: &FeasibilityProblem) -> Result<Option<DecompositionCertificate>, CliError> {
        let n = prob.block_dim();
        self.certificate
            .as_ref()
            .map(|c| {
                let choi = c
                    .choi
                    .iter()
                    .enumerate()
                    .map(|(k, x)| matrix_from_json(x, n, n, &format!("certificate.choi[{k}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(DecompositionCertificate {
                    choi,
                    residual: c.residual,
                })
            })
            .transpose()
    }

    pub fn witness(&self, prob: &FeasibilityProblem) -> Result<Option<ComplexMatrix>, CliError> {
        let n = prob.block_dim();
        self.witness
            .as_ref()
            .map(|w| matrix_from_json(&w.w, n, n, "witness.w"))
            .transpose()
    }

    /// Re-runs the decomposition verifiers on the payload. Undetermined
    /// reports carry nothing to verify and come back invalid.
    pub fn reverify(&self, prob: &FeasibilityProblem) -> Result<Reverification, CliError> {
        match self.verdict {
            VerdictLabel::Feasible => {
                let cert = self
                    .certificate(prob)?
                    .ok_or_else(|| CliError::invalid("feasible report without certificate".to_string()))?;
                let c = verify_certificate(&cert, prob);
                Ok(Reverification {
                    valid: c.valid,
                    value: c.residual,
                    margins: c.min_eigenvalues,
                })
            }
            VerdictLabel::Infeasible => {
                let w = self
                    .witness(prob)?
                    .ok_or_else(|| CliError::invalid("infeasible report without witness".to_string()))?;
                let c = verify_witness(&w, prob);
                Ok(Reverification {
                    valid: c.valid,
                    value: c.pairing,
                    margins: c.dual_margins,
                })
            }
            VerdictLabel::Undetermined => Ok(Reverification {
                valid: false,
                value: f64::NAN,
                margins: Vec::new(),
            }),
        }
    }

    /// Largest entrywise difference between this report's payload and
    /// `other`'s, for serialization fidelity checks.
    pub fn payload_distance(&self, other: &VerdictReport) -> f64 {
        fn dist(a: &MatrixJson, b: &MatrixJson) -> f64 {
            if a.len() != b.len() {
                return f64::INFINITY;
            }
            let mut m = 0.0f64;
            for (ra, rb) in a.iter().zip(b) {
                if ra.len() != rb.len() {
                    return f64::INFINITY;
                }
                for (x, y) in ra.iter().zip(rb) {
                    m = m.max((x[0] - y[0]).abs()).max((x[1] - y[1]).abs());
                }
            }
            m
        }
        match (&self.certificate, &other.certificate, &self.witness, &other.witness) {
            (Some(a), Some(b), None, None) if a.choi.len() == b.choi.len() => {
                a.choi.iter().zip(&b.choi).map(|(x, y)| dist(x, y)).fold(0.0, f64::max)
            }
            (None, None, Some(a), Some(b)) => dist(&a.w, &b.w),
            (None, None, None, None) => 0.0,
            _ => f64::INFINITY,
        }
    }
}
