//! One completion run on a ground-truth instance, scored against `M` and
//! summarised in the machine-readable result schema.

use serde::{Deserialize, Serialize};

use crate::completion::{self, BoundParams, BoundReport, CompletionParams, CompletionResult, CompletionStatus};
use crate::error::{Error, Result};
use crate::instances::GroundTruthInstance;
use crate::linalg::{
    sparsity_number, standard_basis_member, DenseMatrix, RankTolerance, SubspaceBasis,
    MAX_EXHAUSTIVE_DIM,
};
use crate::oracle::QueryOracle;

/// A sparsity number used in a budget formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PsiValue {
    pub value: usize,
    /// `false` when the ambient dimension is above the exhaustive limit and
    /// `value` is only a certified lower bound (1, or 2 when no standard basis
    /// vector lies in the subspace).
    pub exact: bool,
}

/// ψ for budget purposes. Budgets are nonincreasing in ψ, so a lower bound
/// yields a conservative budget.
pub fn psi_for_bounds(span_of: &DenseMatrix, tol: RankTolerance) -> Result<PsiValue> {
    let basis = match SubspaceBasis::column_space(span_of, tol) {
        Ok(b) if b.dim() > 0 => b,
        // Zero subspace: no finite ψ; fall back to the smallest admissible value.
        _ => return Ok(PsiValue { value: 1, exact: false }),
    };
    if basis.ambient_dim() <= MAX_EXHAUSTIVE_DIM {
        return Ok(PsiValue {
            value: sparsity_number(&basis, tol)?,
            exact: true,
        });
    }
    let value = if standard_basis_member(&basis, tol)?.is_some() { 1 } else { 2 };
    Ok(PsiValue { value, exact: value == 1 })
}

/// Result schema emitted by `run` and collected by trial batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub status: CompletionStatus,
    pub noisy_rows_hat: Vec<usize>,
    pub query_count: usize,
    pub proof_bound: f64,
    pub stated_bound: f64,
    /// `max |M̂ − M| / max |M|` over rows outside `Γ`; `None` when one of those
    /// rows was left unknown.
    pub max_rel_error: Option<f64>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))
    }
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub result: CompletionResult,
    pub report: RunReport,
    pub bounds: BoundReport,
    pub psi_u: PsiValue,
    pub psi_v: PsiValue,
}

/// Budgets for an instance, with ψ taken from its clean submatrix.
pub fn instance_bounds(
    inst: &GroundTruthInstance,
    epsilon: f64,
    tol: RankTolerance,
) -> Result<(BoundReport, PsiValue, PsiValue)> {
    let clean = inst.clean_submatrix();
    let psi_u = psi_for_bounds(&clean, tol)?;
    let psi_v = psi_for_bounds(&clean.transpose(), tol)?;
    let bounds = completion::theorem_bound(&BoundParams {
        n1: inst.n1(),
        n2: inst.n2(),
        r: inst.rank(),
        omega: inst.noisy_rows().len(),
        psi_u: psi_u.value,
        psi_v: psi_v.value,
        epsilon,
    })?;
    Ok((bounds, psi_u, psi_v))
}

pub fn max_rel_error(inst: &GroundTruthInstance, result: &CompletionResult) -> Option<f64> {
    let rows = inst.clean_rows();
    let scale = inst.m().select_rows(&rows).max_abs();
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut worst = 0.0_f64;
    for &i in &rows {
        for j in 0..inst.n2() {
            let v = result.recovered.get(i, j)?;
            worst = worst.max((v - inst.m().get(i, j)).abs() / scale);
        }
    }
    Some(worst)
}

pub fn evaluate(inst: &GroundTruthInstance, params: &CompletionParams, oracle_seed: u64) -> Result<Evaluation> {
    let mut oracle = QueryOracle::for_instance(inst, oracle_seed)?;
    evaluate_with(inst, params, &mut oracle)
}

/// As [`evaluate`], with a caller-owned oracle so its query log stays available.
pub fn evaluate_with(
    inst: &GroundTruthInstance,
    params: &CompletionParams,
    oracle: &mut QueryOracle,
) -> Result<Evaluation> {
    if (oracle.n_rows(), oracle.n_cols()) != (inst.n1(), inst.n2()) {
        return Err(Error::InvalidInput("oracle shape does not match the instance".into()));
    }
    let result = completion::run(oracle, params)?;
    let (bounds, psi_u, psi_v) = instance_bounds(inst, params.epsilon(), params.tol())?;
    let report = RunReport {
        status: result.status,
        noisy_rows_hat: result.noisy_rows_hat.clone(),
        query_count: result.query_count,
        proof_bound: bounds.proof_bound,
        stated_bound: bounds.stated_bound,
        max_rel_error: max_rel_error(inst, &result),
    };
    Ok(Evaluation {
        result,
        report,
        bounds,
        psi_u,
        psi_v,
    })
}
