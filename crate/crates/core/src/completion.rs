//! Adaptive completion with sparse noisy rows.
//!
//! Three phases run against a [`QueryOracle`]:
//!
//! 1. **Discovery** grows row/column index sets `R`, `C` one pair at a time,
//!    keeping `N[R, C]` invertible. Each pass probes every column outside `C`
//!    at one uniformly random row; the loop ends after `η` consecutive passes
//!    without growth.
//! 2. **Identification** flags row `i ∈ R` as noisy when deleting it drops the
//!    rank of the fully observed columns `N[:, C]`, i.e. when `e_i` lies in
//!    their span.
//! 3. **Recovery** picks a square invertible block on the remaining certificate
//!    rows and expresses every other column through it. Flagged rows are left
//!    unknown.
//!
//! The module also evaluates the query budgets that bound the number of
//! observations the procedure needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    column_basis, ei_in_colspace, is_invertible, numerical_rank, solve_least_squares, DenseMatrix,
    RankTolerance,
};
use crate::oracle::QueryOracle;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    epsilon: f64,
    tol: RankTolerance,
}

impl CompletionParams {
    pub const DEFAULT_EPSILON: f64 = 0.1;

    pub fn new(epsilon: f64, tol: RankTolerance) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Self { epsilon, tol })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn tol(&self) -> RankTolerance {
        self.tol
    }
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self {
            epsilon: Self::DEFAULT_EPSILON,
            tol: RankTolerance::default(),
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )))
    }
}

/// Evolving certificate of the discovery phase.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscoveryState {
    /// Certificate rows in order of acceptance.
    pub rows: Vec<usize>,
    /// Certificate columns, paired positionally with `rows`.
    pub cols: Vec<usize>,
    pub rank_hat: usize,
    /// Consecutive passes without a rank increase.
    pub zeta: usize,
    pub eta: usize,
    /// Total passes performed.
    pub passes: usize,
}

impl DiscoveryState {
    pub fn empty(eta: usize) -> Self {
        Self {
            rows: Vec::new(),
            cols: Vec::new(),
            rank_hat: 0,
            zeta: 0,
            eta,
            passes: 0,
        }
    }

    /// The state as it was right after the first `k` accepted pairs.
    pub fn prefix(&self, k: usize) -> Self {
        let k = k.min(self.rank_hat);
        Self {
            rows: self.rows[..k].to_vec(),
            cols: self.cols[..k].to_vec(),
            rank_hat: k,
            zeta: 0,
            eta: self.eta,
            passes: 0,
        }
    }
}

/// Number of consecutive unproductive passes tolerated before discovery stops:
/// `⌈max((2n₁/n₂)·ln(1/ε), ln(1/ε))⌉`, at least one.
pub fn compute_eta(n1: usize, n2: usize, epsilon: f64) -> Result<usize> {
    check_epsilon(epsilon)?;
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidInput("matrix dimensions must be positive".into()));
    }
    let log_inv = (1.0 / epsilon).ln();
    let eta = (2.0 * n1 as f64 / n2 as f64 * log_inv).max(log_inv).ceil();
    Ok((eta as usize).max(1))
}

pub fn discover(oracle: &mut QueryOracle, params: &CompletionParams) -> Result<DiscoveryState> {
    let (n1, n2) = (oracle.n_rows(), oracle.n_cols());
    let mut state = DiscoveryState::empty(compute_eta(n1, n2, params.epsilon)?);
    let full_rank = n1.min(n2);
    let mut in_c = vec![false; n2];
    let mut in_r = vec![false; n1];

    while state.zeta < state.eta {
        if state.rank_hat == full_rank {
            // Nothing left to find; remaining passes are vacuous.
            state.zeta = state.eta;
            break;
        }
        state.zeta += 1;
        state.passes += 1;
        let open: Vec<usize> = (0..n2).filter(|&j| !in_c[j]).collect();
        for j in open {
            let i = oracle.draw_random_row();
            oracle.query_entry(i, j)?;
            if in_r[i] {
                // A row already in R cannot extend the certificate.
                continue;
            }
            let mut rows = state.rows.clone();
            rows.push(i);
            let mut cols = state.cols.clone();
            cols.push(j);
            let block = oracle.query_submatrix(&rows, &cols)?;
            if is_invertible(&block, params.tol)? {
                oracle.query_column(j)?;
                oracle.query_row(i)?;
                state.rows = rows;
                state.cols = cols;
                state.rank_hat += 1;
                state.zeta = 0;
                in_r[i] = true;
                in_c[j] = true;
                if state.rank_hat == full_rank {
                    break;
                }
            }
        }
    }
    Ok(state)
}

fn observed_columns(oracle: &mut QueryOracle, cols: &[usize]) -> Result<DenseMatrix> {
    let n1 = oracle.n_rows();
    for &j in cols {
        if let Some(i) = (0..n1).find(|&i| !oracle.is_observed(i, j)) {
            return Err(Error::Contract(format!(
                "certificate column {j} is not fully observed (row {i} missing)"
            )));
        }
    }
    let mut out = DenseMatrix::zeros(n1, cols.len());
    for (b, &j) in cols.iter().enumerate() {
        for (i, v) in oracle.query_column(j)?.into_iter().enumerate() {
            out.set(i, b, v);
        }
    }
    Ok(out)
}

/// Rows of `R` whose deletion lowers the rank of `N[:, C]`, sorted ascending.
///
/// Uses only already observed cells.
pub fn identify_noisy_rows(
    oracle: &mut QueryOracle,
    state: &DiscoveryState,
    params: &CompletionParams,
) -> Result<Vec<usize>> {
    let n_c = observed_columns(oracle, &state.cols)?;
    let mut flagged = Vec::new();
    for &i in &state.rows {
        if ei_in_colspace(&n_c, i, params.tol)? {
            flagged.push(i);
        }
    }
    flagged.sort_unstable();
    Ok(flagged)
}

/// Entries of `M` on the rows outside the flagged set; flagged rows are unknown.
#[derive(Clone, Debug, PartialEq)]
pub struct RecoveredMatrix {
    values: DenseMatrix,
    unknown_rows: Vec<usize>,
}

impl RecoveredMatrix {
    pub fn unknown(n1: usize, n2: usize) -> Self {
        Self {
            values: DenseMatrix::zeros(n1, n2),
            unknown_rows: (0..n1).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn is_unknown_row(&self, i: usize) -> bool {
        self.unknown_rows.binary_search(&i).is_ok()
    }

    pub fn unknown_rows(&self) -> &[usize] {
        &self.unknown_rows
    }

    /// `None` marks an unknown entry.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        (!self.is_unknown_row(i)).then(|| self.values.get(i, j))
    }

    pub fn known_rows(&self) -> Vec<usize> {
        (0..self.rows()).filter(|&i| !self.is_unknown_row(i)).collect()
    }

    /// The known rows as a dense matrix.
    pub fn known_submatrix(&self) -> DenseMatrix {
        self.values.select_rows(&self.known_rows())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompletionStatus {
    Ok,
    PreconditionViolated,
    BudgetExhausted,
}

impl std::fmt::Display for CompletionStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ok => "ok",
            Self::PreconditionViolated => "precondition-violated",
            Self::BudgetExhausted => "budget-exhausted",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompletionResult {
    pub noisy_rows_hat: Vec<usize>,
    pub recovered: RecoveredMatrix,
    pub rows_r: Vec<usize>,
    pub cols_c: Vec<usize>,
    /// Columns of `C` used as the recovery basis.
    pub basis_cols: Vec<usize>,
    pub query_count: usize,
    pub status: CompletionStatus,
}

pub fn recover(
    oracle: &mut QueryOracle,
    state: &DiscoveryState,
    noisy_rows: &[usize],
    params: &CompletionParams,
) -> Result<CompletionResult> {
    let (n1, n2) = (oracle.n_rows(), oracle.n_cols());
    let is_flagged = |i: usize| noisy_rows.contains(&i);
    let cert_rows: Vec<usize> = state.rows.iter().copied().filter(|&i| !is_flagged(i)).collect();
    if cert_rows.is_empty() && state.rank_hat > 0 {
        return Err(Error::Contract(
            "every certificate row was flagged as noisy".into(),
        ));
    }
    let known_rows: Vec<usize> = (0..n1).filter(|&i| !is_flagged(i)).collect();

    let n_c = observed_columns(oracle, &state.cols)?;
    let picked = column_basis(&n_c.select_rows(&cert_rows), params.tol)?;
    if picked.len() < cert_rows.len() {
        return Err(Error::Degenerate(format!(
            "certificate rows support only {} of {} basis columns",
            picked.len(),
            cert_rows.len()
        )));
    }
    let basis_cols: Vec<usize> = picked.iter().map(|&k| state.cols[k]).collect();
    let basis_full = n_c.select_cols(&picked);
    let square = basis_full.select_rows(&cert_rows);

    let mut values = DenseMatrix::zeros(n1, n2);
    for j in 0..n2 {
        if let Some(k) = state.cols.iter().position(|&c| c == j) {
            for &i in &known_rows {
                values.set(i, j, n_c.get(i, k));
            }
            continue;
        }
        let rhs = cert_rows
            .iter()
            .map(|&i| oracle.query_entry(i, j))
            .collect::<Result<Vec<f64>>>()?;
        let coeffs = solve_least_squares(&square, &rhs, params.tol)?;
        for &i in &known_rows {
            let v = basis_full
                .row(i)
                .iter()
                .zip(&coeffs)
                .map(|(a, c)| a * c)
                .sum();
            values.set(i, j, v);
        }
    }

    let mut unknown_rows = noisy_rows.to_vec();
    unknown_rows.sort_unstable();
    Ok(CompletionResult {
        noisy_rows_hat: unknown_rows.clone(),
        recovered: RecoveredMatrix {
            values,
            unknown_rows,
        },
        rows_r: state.rows.clone(),
        cols_c: state.cols.clone(),
        basis_cols,
        query_count: oracle.unique_query_count(),
        status: CompletionStatus::Ok,
    })
}

/// Discovery, identification and recovery in sequence. Algorithmic failures
/// are reported through [`CompletionResult::status`].
pub fn run(oracle: &mut QueryOracle, params: &CompletionParams) -> Result<CompletionResult> {
    let (n1, n2) = (oracle.n_rows(), oracle.n_cols());
    let state = discover(oracle, params)?;
    let flagged = identify_noisy_rows(oracle, &state, params)?;

    let failed = |oracle: &QueryOracle, status| CompletionResult {
        noisy_rows_hat: flagged.clone(),
        recovered: RecoveredMatrix::unknown(n1, n2),
        rows_r: state.rows.clone(),
        cols_c: state.cols.clone(),
        basis_cols: Vec::new(),
        query_count: oracle.unique_query_count(),
        status,
    };

    let certificate = oracle.query_submatrix(&state.rows, &state.cols)?;
    if state.rank_hat > 0 && !is_invertible(&certificate, params.tol)? {
        return Ok(failed(oracle, CompletionStatus::BudgetExhausted));
    }
    // With no clean certificate row left the column space holds a standard
    // basis vector on every certificate row, which the model rules out.
    if state.rank_hat > 0 && flagged.len() == state.rows.len() {
        return Ok(failed(oracle, CompletionStatus::PreconditionViolated));
    }
    match recover(oracle, &state, &flagged, params) {
        Ok(result) => Ok(result),
        Err(Error::Degenerate(_)) => Ok(failed(oracle, CompletionStatus::BudgetExhausted)),
        Err(e) => Err(e),
    }
}

/// Inputs to the query-budget formulas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub n1: usize,
    pub n2: usize,
    pub r: usize,
    pub omega: usize,
    pub psi_u: usize,
    pub psi_v: usize,
    pub epsilon: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// The closed-form budget as displayed in the guarantee, with its free
    /// dimension symbol read as `n₂`.
    pub stated_bound: f64,
    /// Discovery passes plus full row/column queries plus recovery probes.
    pub proof_bound: f64,
    /// The two discovery-phase terms of `proof_bound`.
    pub discovery_terms: f64,
    pub log_inv_epsilon: f64,
    pub params: BoundParams,
}

pub fn theorem_bound(p: &BoundParams) -> Result<BoundReport> {
    check_epsilon(p.epsilon)?;
    if p.n1 == 0 || p.n2 == 0 {
        return Err(Error::InvalidInput("matrix dimensions must be positive".into()));
    }
    if p.psi_u == 0 || p.psi_v == 0 {
        return Err(Error::InvalidInput("sparsity numbers must be at least 1".into()));
    }
    if p.omega > p.n1 {
        return Err(Error::InvalidInput(format!(
            "|omega| = {} exceeds n1 = {}",
            p.omega, p.n1
        )));
    }
    let (n1, n2, r, omega) = (p.n1 as f64, p.n2 as f64, p.r as f64, p.omega as f64);
    let (psi_u, psi_v) = (p.psi_u as f64, p.psi_v as f64);
    let log_inv = -p.epsilon.ln();

    let noisy_phase = 2.0 * n1 * (omega + 2.0 + log_inv);
    let clean_phase = 2.0 * n1 / psi_u * (r + omega + 2.0 + log_inv);
    let discovery_terms = noisy_phase + clean_phase;
    let full_queries = (r + omega) * (n1 + n2);
    let recovery_probes = r * (n2 - r - omega).max(0.0);
    let proof_bound = discovery_terms + full_queries + recovery_probes;

    let stated_bound = (n1 + n2 - omega) * omega
        + 4.0 * n1 / psi_u * (r + 2.0 + log_inv) * n2 / psi_v
        + 2.0 * n1 * (omega + 2.0 + log_inv);

    Ok(BoundReport {
        stated_bound,
        proof_bound,
        discovery_terms,
        log_inv_epsilon: log_inv,
        params: *p,
    })
}

/// Numerical rank of the known part of a recovery.
pub fn recovered_rank(result: &CompletionResult, tol: RankTolerance) -> Result<usize> {
    numerical_rank(&result.recovered.known_submatrix(), tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> CompletionParams {
        CompletionParams::default()
    }

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn eta_examples() {
        assert_eq!(compute_eta(100, 50, 0.1).unwrap(), 10);
        assert_eq!(compute_eta(40, 40, 0.1).unwrap(), 5);
        assert_eq!(compute_eta(40, 40, 0.99).unwrap(), 1);
        assert!(compute_eta(4, 4, 0.0).is_err());
        assert!(compute_eta(4, 4, 1.0).is_err());
    }

    #[test]
    fn discovery_on_rank_one_ones() {
        let ones = DenseMatrix::from_rows(&[[1.0; 4]; 4]).unwrap();
        let mut o = QueryOracle::new(ones, 5).unwrap();
        let s = discover(&mut o, &params()).unwrap();
        assert_eq!(s.rank_hat, 1);
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.cols.len(), 1);
        assert_eq!(s.zeta, s.eta);
    }

    #[test]
    fn discovery_on_zero_matrix() {
        let mut o = QueryOracle::new(DenseMatrix::zeros(5, 4), 1).unwrap();
        let s = discover(&mut o, &params()).unwrap();
        assert_eq!(s.rank_hat, 0);
        assert!(s.rows.is_empty() && s.cols.is_empty());
        let r = run(&mut QueryOracle::new(DenseMatrix::zeros(5, 4), 1).unwrap(), &params()).unwrap();
        assert_eq!(r.status, CompletionStatus::Ok);
        assert_eq!(r.recovered.get(2, 3), Some(0.0));
    }

    #[test]
    fn discovery_stops_at_full_rank() {
        let mut o = QueryOracle::new(DenseMatrix::identity(3).scaled(2.0), 9).unwrap();
        let s = discover(&mut o, &CompletionParams::new(0.001, RankTolerance::default()).unwrap()).unwrap();
        assert_eq!(s.rank_hat, 3);
        assert_eq!(o.unique_query_count(), 9);
    }

    #[test]
    fn identify_example() {
        // N[:, C] = [[1,2],[2,4],[5,7]] with R = {0, 2}.
        let mut o = QueryOracle::new(m(&[&[1., 2.], &[2., 4.], &[5., 7.]]), 0).unwrap();
        o.query_column(0).unwrap();
        o.query_column(1).unwrap();
        let state = DiscoveryState {
            rows: vec![0, 2],
            cols: vec![0, 1],
            rank_hat: 2,
            zeta: 0,
            eta: 1,
            passes: 0,
        };
        assert_eq!(identify_noisy_rows(&mut o, &state, &params()).unwrap(), vec![2]);
    }

    #[test]
    fn identify_requires_observed_columns() {
        let mut o = QueryOracle::new(m(&[&[1., 2.], &[2., 5.]]), 0).unwrap();
        o.query_entry(0, 0).unwrap();
        let state = DiscoveryState {
            rows: vec![0],
            cols: vec![0],
            rank_hat: 1,
            zeta: 0,
            eta: 1,
            passes: 0,
        };
        assert!(matches!(
            identify_noisy_rows(&mut o, &state, &params()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn identity_is_precondition_violation() {
        let mut o = QueryOracle::new(DenseMatrix::identity(2), 4).unwrap();
        let res = run(&mut o, &CompletionParams::new(0.001, RankTolerance::default()).unwrap()).unwrap();
        assert_eq!(res.noisy_rows_hat, vec![0, 1]);
        assert_eq!(res.status, CompletionStatus::PreconditionViolated);
        assert_eq!(res.recovered.get(0, 0), None);
    }

    #[test]
    fn recover_rank_one_proportional() {
        // Clean rows {0, 1}, basis column 0 = (1, 2), column 1 observed as 3 on row 0.
        let mut o = QueryOracle::new(m(&[&[1., 3.], &[2., 6.]]), 0).unwrap();
        o.query_column(0).unwrap();
        o.query_row(0).unwrap();
        let state = DiscoveryState {
            rows: vec![0],
            cols: vec![0],
            rank_hat: 1,
            zeta: 1,
            eta: 1,
            passes: 1,
        };
        let before = o.unique_query_count();
        let res = recover(&mut o, &state, &[], &params()).unwrap();
        assert_eq!(o.unique_query_count(), before);
        assert_relative_eq!(res.recovered.get(0, 1).unwrap(), 3.0, epsilon = 1e-12);
        assert_relative_eq!(res.recovered.get(1, 1).unwrap(), 6.0, epsilon = 1e-12);
        assert_eq!(res.recovered.get(1, 0), Some(2.0));
        assert_eq!(res.basis_cols, vec![0]);
    }

    #[test]
    fn theorem_bound_examples() {
        let p = BoundParams {
            n1: 100,
            n2: 50,
            r: 2,
            omega: 2,
            psi_u: 50,
            psi_v: 10,
            epsilon: 0.1,
        };
        let b = theorem_bound(&p).unwrap();
        let l = (10.0f64).ln();
        assert_relative_eq!(b.discovery_terms, 200.0 * (4.0 + l) + 4.0 * (6.0 + l), epsilon = 1e-9);
        assert!((b.discovery_terms - 1293.7).abs() < 0.05);

        let q = BoundParams { omega: 0, psi_u: 100, ..p };
        let b = theorem_bound(&q).unwrap();
        assert_relative_eq!(b.discovery_terms, 200.0 * (2.0 + l) + 2.0 * (4.0 + l), epsilon = 1e-9);

        let e = BoundParams { epsilon: (-1.0f64).exp(), ..p };
        assert_relative_eq!(theorem_bound(&e).unwrap().log_inv_epsilon, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn theorem_bound_rejects_bad_params() {
        let p = BoundParams {
            n1: 10,
            n2: 10,
            r: 1,
            omega: 0,
            psi_u: 2,
            psi_v: 2,
            epsilon: 0.1,
        };
        assert!(theorem_bound(&BoundParams { psi_u: 0, ..p }).is_err());
        assert!(theorem_bound(&BoundParams { psi_v: 0, ..p }).is_err());
        assert!(theorem_bound(&BoundParams { epsilon: 1.5, ..p }).is_err());
        assert!(theorem_bound(&BoundParams { omega: 11, ..p }).is_err());
    }
}
