//! JSON instance files.
//!
//! ```json
//! {
//!   "name": "transpose",
//!   "d": 2, "h": 2,
//!   "target": [[[1.0, 0.0], [0.0, 0.0], ...], ...],
//!   "sequence": [{"kind": "identity"}, {"kind": "transpose"}],
//!   "options": {"max_iter": 20000}
//! }
//! ```
//!
//! `target` is the Choi matrix `J[(i*h + a), (j*h + b)] = φ(E_ij)[a, b]`,
//! row-major, entries as `[re, im]`. Sequence entries are `identity`,
//! `transpose`, `unitary_conjugation` (with `matrix`, `d x d`) or `custom`
//! (with `coeffs`, `d² x d²`, column `i*d + j` is `vec(φ_k(E_ij))`). Optional
//! `weights` scale the entries; `tail_bound` marks the sequence as a
//! truncation of a vanishing sequence.

use std::path::Path;

use phidecomp::decomp::FeasibilityOptions;
use phidecomp::linalg::{hermitian_defect, ComplexMatrix, C64};
use phidecomp::seq::MapSequence;
use phidecomp::superop::SuperOperator;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Complex matrix as rows of `[re, im]` pairs.
pub type MatrixJson = Vec<Vec<[f64; 2]>>;

/// Relative Hermiticity slack for targets, against `max(1, ‖J‖_F)`.
pub const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub d: usize,
    pub h: usize,
    pub target: MatrixJson,
    pub sequence: Vec<SequenceEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_from: Option<usize>,
    #[serde(default, skip_serializing_if = "InstanceOptions::is_empty")]
    pub options: InstanceOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceEntry {
    Identity,
    Transpose,
    UnitaryConjugation { matrix: MatrixJson },
    Custom { coeffs: MatrixJson },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feas_rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psd_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl InstanceOptions {
    fn is_empty(&self) -> bool {
        *self == InstanceOptions::default()
    }
}

/// A parsed and validated instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub target: SuperOperator,
    pub seq: MapSequence,
    pub options: InstanceOptions,
}

impl Instance {
    /// Solver options with instance overrides applied.
    pub fn feasibility_options(&self) -> FeasibilityOptions {
        let mut o = FeasibilityOptions::default();
        if let Some(t) = self.options.feas_rel_tol {
            o.feas_rel_tol = t;
        }
        if let Some(t) = self.options.psd_tol {
            o.psd_tol = t;
        }
        if let Some(m) = self.options.max_iter {
            o.max_iter = m;
        }
        o
    }
}

pub fn matrix_to_json(m: &ComplexMatrix) -> MatrixJson {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re + 0.0, m[(r, c)].im + 0.0]).collect())
        .collect()
}

pub fn matrix_from_json(rows: &MatrixJson, nrows: usize, ncols: usize, field: &str) -> Result<ComplexMatrix, CliError> {
    if rows.len() != nrows {
        return Err(CliError::invalid(format!(
            "field `{field}`: expected {nrows} rows, found {}",
            rows.len()
        )));
    }
    let mut m = ComplexMatrix::zeros(nrows, ncols);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(CliError::invalid(format!(
                "field `{field}`: row {r} has {} entries, expected {ncols}",
                row.len()
            )));
        }
        for (c, [re, im]) in row.iter().enumerate() {
            if !(re.is_finite() && im.is_finite()) {
                return Err(CliError::invalid(format!("field `{field}`: entry ({r}, {c}) is not finite")));
            }
            m[(r, c)] = C64::new(*re, *im);
        }
    }
    Ok(m)
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            CliError::invalid(format!(
                "line {}, column {}, field `{path}`: {inner}",
                inner.line(),
                inner.column()
            ))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        crate::to_json_compact(self)
    }

    pub fn from_parts(name: &str, target: &SuperOperator, sequence: Vec<SequenceEntry>) -> Self {
        InstanceFile {
            name: Some(name.to_string()),
            description: None,
            d: target.input_dim(),
            h: target.output_dim(),
            target: matrix_to_json(target.choi()),
            sequence,
            weights: None,
            tail_bound: None,
            decay_from: None,
            options: InstanceOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<Instance, CliError> {
        let (d, h) = (self.d, self.h);
        if d == 0 || h == 0 {
            return Err(CliError::invalid("fields `d` and `h` must be positive".to_string()));
        }
        let choi = matrix_from_json(&self.target, d * h, d * h, "target")?;
        let scale = phidecomp::linalg::frobenius(&choi).max(1.0);
        let defect = hermitian_defect(&choi);
        if defect > HERMITIAN_TOL * scale {
            return Err(CliError::invalid(format!(
                "field `target`: Choi matrix is not Hermitian, defect ‖J − J†‖_F = {defect:.3e}"
            )));
        }
        let target = SuperOperator::from_choi(d, h, choi)
            .map_err(|e| CliError::invalid(format!("field `target`: {e}")))?;

        if self.sequence.is_empty() {
            return Err(CliError::invalid("field `sequence`: must contain at least one entry".to_string()));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.sequence.len() {
                return Err(CliError::invalid(format!(
                    "field `weights`: {} weights for {} sequence entries",
                    w.len(),
                    self.sequence.len()
                )));
            }
            if let Some(k) = w.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(CliError::invalid(format!("field `weights[{k}]`: must be finite and positive")));
            }
        }
        let mut maps = Vec::with_capacity(self.sequence.len());
        for (k, entry) in self.sequence.iter().enumerate() {
            let field = format!("sequence[{k}]");
            let map = match entry {
                SequenceEntry::Identity => SuperOperator::identity(d),
                SequenceEntry::Transpose => SuperOperator::transpose(d),
                SequenceEntry::UnitaryConjugation { matrix } => {
                    let u = matrix_from_json(matrix, d, d, &format!("{field}.matrix"))?;
                    SuperOperator::unitary_conjugation(&u)
                        .map_err(|e| CliError::invalid(format!("field `{field}`: {e}")))?
                }
                SequenceEntry::Custom { coeffs } => {
                    let c = matrix_from_json(coeffs, d * d, d * d, &format!("{field}.coeffs"))?;
                    let map = SuperOperator::from_coeffs(d, d, c)
                        .map_err(|e| CliError::invalid(format!("field `{field}`: {e}")))?;
                    if !map.is_star_map() {
                        return Err(CliError::invalid(format!(
                            "field `{field}`: not a *-map (defect {:.3e})",
                            map.star_defect()
                        )));
                    }
                    map
                }
            };
            let w = self.weights.as_ref().map_or(1.0, |w| w[k]);
            maps.push(if w == 1.0 { map } else { map.scale(w) });
        }
        let seq = match self.tail_bound {
            Some(tb) => MapSequence::truncated(maps, self.decay_from.unwrap_or(0), tb),
            None => MapSequence::finite(maps),
        }
        .map_err(|e| CliError::invalid(format!("field `sequence`: {e}")))?;

        let o = &self.options;
        for (field, v) in [("options.feas_rel_tol", o.feas_rel_tol), ("options.psd_tol", o.psd_tol)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(CliError::invalid(format!("field `{field}`: must be finite and positive")));
                }
            }
        }
        if o.max_iter == Some(0) {
            return Err(CliError::invalid("field `options.max_iter`: must be positive".to_string()));
        }
        Ok(Instance {
            name: self.name.clone().unwrap_or_else(|| "unnamed".to_string()),
            target,
            seq,
            options: self.options.clone(),
        })
    }
}
