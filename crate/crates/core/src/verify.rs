//! Brute-force cross-checks and Monte Carlo validators.
//!
//! Nothing here reuses the decision logic of [`crate::completion`]: the
//! noisy-row oracle works on the full matrix, the exact rank uses rational
//! elimination, and the sparsity enumerations walk zero sets literally.

use num_rational::BigRational;
use num_traits::{FromPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::completion::{CompletionParams, CompletionStatus, DiscoveryState};
use crate::error::{Error, Result};
use crate::instances::{generate, GeneratorConfig, GroundTruthInstance};
use crate::linalg::{
    is_invertible, numerical_rank, solve_least_squares, sparsity_number, DenseMatrix,
    RankTolerance, SubspaceBasis, MAX_EXHAUSTIVE_DIM,
};
use crate::par::{self, Execution};
use crate::report::evaluate;

/// Largest relative entry error that still counts as exact recovery.
pub const EXACT_RECOVERY_TOL: f64 = 1e-8;

/// Mixed into instance seeds to derive the oracle seed of a trial.
pub const ORACLE_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn oracle_seed_for(instance_seed: u64) -> u64 {
    instance_seed ^ ORACLE_SEED_SALT
}

/// Rows whose deletion lowers the rank of the full matrix.
pub fn oracle_noisy_rows(n_full: &DenseMatrix, tol: RankTolerance) -> Result<Vec<usize>> {
    let full = numerical_rank(n_full, tol)?;
    let mut out = Vec::new();
    for i in 0..n_full.rows() {
        if numerical_rank(&n_full.without_row(i), tol)? < full {
            out.push(i);
        }
    }
    Ok(out)
}

/// `e_i ∈ col(m)` tested by appending `e_i` as a column.
pub fn ei_in_colspace_by_append(m: &DenseMatrix, i: usize, tol: RankTolerance) -> Result<bool> {
    if i >= m.rows() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: m.rows(),
        });
    }
    let mut e = vec![0.0; m.rows()];
    e[i] = 1.0;
    let before = numerical_rank(m, tol)?;
    let after = numerical_rank(&m.append_column(&e)?, tol)?;
    Ok(after == before)
}

/// Exact rank over the rationals; every finite `f64` is converted exactly.
pub fn oracle_exact_rank(m: &DenseMatrix) -> Result<usize> {
    let mut a: Vec<Vec<BigRational>> = (0..m.rows())
        .map(|i| {
            m.row(i)
                .iter()
                .map(|&v| {
                    BigRational::from_f64(v)
                        .ok_or_else(|| Error::InvalidInput(format!("cannot rationalise {v}")))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let (rows, cols) = m.shape();
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..rows).find(|&r| !a[r][c].is_zero()) else {
            continue;
        };
        a.swap(rank, p);
        let pivot = a[rank][c].clone();
        for r in rank + 1..rows {
            if a[r][c].is_zero() {
                continue;
            }
            let f = &a[r][c] / &pivot;
            let (top, bottom) = a.split_at_mut(r);
            for (x, p) in bottom[0][c..].iter_mut().zip(&top[rank][c..]) {
                *x -= &f * p;
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    Ok(rank)
}

fn check_enumerable(basis: &SubspaceBasis) -> Result<()> {
    if basis.dim() == 0 {
        return Err(Error::InvalidInput("zero-dimensional span".into()));
    }
    if basis.ambient_dim() > MAX_EXHAUSTIVE_DIM {
        return Err(Error::Capacity {
            dim: basis.ambient_dim(),
            max: MAX_EXHAUSTIVE_DIM,
        });
    }
    Ok(())
}

/// True when some nonzero vector of the span vanishes outside `support`.
fn support_admits_vector(basis: &SubspaceBasis, support_mask: u32, tol: RankTolerance) -> Result<bool> {
    let zeros: Vec<usize> = (0..basis.ambient_dim())
        .filter(|&i| support_mask & (1 << i) == 0)
        .collect();
    Ok(numerical_rank(&basis.matrix().select_rows(&zeros), tol)? < basis.dim())
}

/// ψ by increasing support size, returning at the first admissible support.
pub fn sparsity_number_cardinality_first(basis: &SubspaceBasis, tol: RankTolerance) -> Result<usize> {
    check_enumerable(basis)?;
    let n = basis.ambient_dim();
    for k in 1..=n {
        // Gosper's hack: all n-bit masks with k bits set, in increasing order.
        let mut mask: u32 = (1u32 << k) - 1;
        while mask < (1u32 << n) {
            if support_admits_vector(basis, mask, tol)? {
                return Ok(k);
            }
            let c = mask & mask.wrapping_neg();
            let r = mask + c;
            mask = (((r ^ mask) >> 2) / c) | r;
        }
    }
    Err(Error::Contract("no admissible support found".into()))
}

/// ψ by scanning every nonempty support in lexicographic mask order.
pub fn sparsity_number_lexicographic(basis: &SubspaceBasis, tol: RankTolerance) -> Result<usize> {
    check_enumerable(basis)?;
    let n = basis.ambient_dim();
    let mut best = usize::MAX;
    for mask in 1u32..(1u32 << n) {
        let size = mask.count_ones() as usize;
        if size < best && support_admits_vector(basis, mask, tol)? {
            best = size;
        }
    }
    Ok(best)
}

/// One seeded run of the full pipeline scored against ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub instance_seed: u64,
    pub oracle_seed: u64,
    pub n1: usize,
    pub n2: usize,
    pub r: usize,
    pub omega: usize,
    pub status: CompletionStatus,
    pub identified: bool,
    pub max_rel_error: Option<f64>,
    pub query_count: usize,
    pub proof_bound: f64,
    pub stated_bound: f64,
    pub psi_u: usize,
    pub success: bool,
}

impl TrialOutcome {
    pub fn exceeds_budget(&self) -> bool {
        self.query_count as f64 > self.proof_bound
    }
}

pub fn run_trial_on(
    inst: &GroundTruthInstance,
    params: &CompletionParams,
    oracle_seed: u64,
) -> Result<TrialOutcome> {
    let ev = evaluate(inst, params, oracle_seed)?;
    let identified = ev.report.noisy_rows_hat == inst.noisy_rows();
    let exact = ev
        .report
        .max_rel_error
        .is_some_and(|e| e <= EXACT_RECOVERY_TOL);
    Ok(TrialOutcome {
        instance_seed: inst.seed(),
        oracle_seed,
        n1: inst.n1(),
        n2: inst.n2(),
        r: inst.rank(),
        omega: inst.noisy_rows().len(),
        status: ev.report.status,
        identified,
        max_rel_error: ev.report.max_rel_error,
        query_count: ev.report.query_count,
        proof_bound: ev.report.proof_bound,
        stated_bound: ev.report.stated_bound,
        psi_u: ev.psi_u.value,
        success: ev.report.status == CompletionStatus::Ok && identified && exact,
    })
}

pub fn run_trial(config: &GeneratorConfig, params: &CompletionParams, oracle_seed: u64) -> Result<TrialOutcome> {
    run_trial_on(&generate(config)?, params, oracle_seed)
}

/// Runs independent trials; outcomes come back in job order.
pub fn run_trials(
    jobs: &[(GeneratorConfig, u64)],
    params: &CompletionParams,
    exec: Execution,
) -> Result<Vec<TrialOutcome>> {
    par::map_indexed(jobs.len(), exec, |k| run_trial(&jobs[k].0, params, jobs[k].1))
        .into_iter()
        .collect()
}

/// Aggregate of a batch of trials; one CSV row per configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub n1: usize,
    pub n2: usize,
    pub r: usize,
    pub omega: usize,
    /// Smallest ψ(U) seen in the batch.
    pub psi_u: usize,
    pub epsilon: f64,
    pub trials: usize,
    pub successes: usize,
    pub mean_queries: f64,
    /// Largest per-trial budget in the batch.
    pub proof_bound: f64,
    /// Trials whose query count exceeded their own budget.
    pub bound_violations: usize,
}

impl TrialStats {
    pub fn from_outcomes(outcomes: &[TrialOutcome], epsilon: f64) -> Result<Self> {
        let first = outcomes
            .first()
            .ok_or_else(|| Error::InvalidInput("no trials to aggregate".into()))?;
        let trials = outcomes.len();
        Ok(Self {
            n1: first.n1,
            n2: first.n2,
            r: first.r,
            omega: first.omega,
            psi_u: outcomes.iter().map(|o| o.psi_u).min().unwrap_or(0),
            epsilon,
            trials,
            successes: outcomes.iter().filter(|o| o.success).count(),
            mean_queries: outcomes.iter().map(|o| o.query_count as f64).sum::<f64>()
                / trials as f64,
            proof_bound: outcomes.iter().map(|o| o.proof_bound).fold(0.0, f64::max),
            bound_violations: outcomes.iter().filter(|o| o.exceeds_budget()).count(),
        })
    }

    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

pub fn write_trial_stats<W: std::io::Write>(rows: &[TrialStats], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trial_stats<R: std::io::Read>(reader: R) -> Result<Vec<TrialStats>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Runs `trials` instances with seeds `seed_start, seed_start + 1, …`.
pub fn estimate_success_rate(
    config: &GeneratorConfig,
    params: &CompletionParams,
    trials: usize,
    seed_start: u64,
    exec: Execution,
) -> Result<TrialStats> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be positive".into()));
    }
    let jobs: Vec<(GeneratorConfig, u64)> = (0..trials as u64)
        .map(|t| {
            let seed = seed_start.wrapping_add(t);
            (config.with_seed(seed), oracle_seed_for(seed))
        })
        .collect();
    TrialStats::from_outcomes(&run_trials(&jobs, params, exec)?, params.epsilon())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionEstimate {
    /// Column probed, the lowest index outside `C` whose residual is nonzero
    /// on some clean row.
    pub column: usize,
    pub probes: usize,
    pub successes: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub psi_u: usize,
    /// `ψ(U) / n₁`.
    pub lower_bound: f64,
    /// `(|Γ ∖ R| + ψ(U)) / n₁`.
    pub proof_value: f64,
}

/// Monte Carlo frequency with which one random-row probe of the next useful
/// column extends the certificate `mid_state`.
pub fn estimate_detection_probability(
    inst: &GroundTruthInstance,
    mid_state: &DiscoveryState,
    probes: usize,
    seed: u64,
    tol: RankTolerance,
    exec: Execution,
) -> Result<DetectionEstimate> {
    if probes == 0 {
        return Err(Error::InvalidInput("probes must be positive".into()));
    }
    let full_rank = inst.rank() + inst.noisy_rows().len();
    if mid_state.rank_hat >= full_rank {
        return Err(Error::InvalidInput(format!(
            "mid state already has rank {} of {full_rank}",
            mid_state.rank_hat
        )));
    }
    let n = inst.observed();
    let (rows, cols) = (&mid_state.rows, &mid_state.cols);
    if !is_invertible(&n.select(rows, cols), tol)? {
        return Err(Error::InvalidInput("mid state certificate is singular".into()));
    }
    let clean = inst.clean_rows();
    let psi_u = sparsity_number(&SubspaceBasis::column_space(&inst.clean_submatrix(), tol)?, tol)?;

    let block = n.select(rows, cols);
    let scale = n.max_abs().max(f64::MIN_POSITIVE);
    let mut column = None;
    for j in (0..inst.n2()).filter(|j| !cols.contains(j)) {
        let coeffs = solve_least_squares(&block, &n.select(rows, &[j]).column(0), tol)?;
        let residual_on_clean = clean.iter().any(|&i| {
            let fitted: f64 = cols.iter().zip(&coeffs).map(|(&c, x)| n.get(i, c) * x).sum();
            (n.get(i, j) - fitted).abs() > 1e-8 * scale
        });
        if residual_on_clean {
            column = Some(j);
            break;
        }
    }
    let column = column.ok_or_else(|| {
        Error::InvalidInput("no column outside C has a residual on clean rows".into())
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<usize> = (0..probes).map(|_| rng.random_range(0..inst.n1())).collect();
    let mut ext_cols = cols.clone();
    ext_cols.push(column);
    let hits = par::map_indexed(probes, exec, |k| -> Result<bool> {
        let i = draws[k];
        if rows.contains(&i) {
            return Ok(false);
        }
        let mut ext_rows = rows.clone();
        ext_rows.push(i);
        is_invertible(&n.select(&ext_rows, &ext_cols), tol)
    });
    let mut successes = 0;
    for h in hits {
        successes += usize::from(h?);
    }
    let p = successes as f64 / probes as f64;
    let noisy_outside = inst.noisy_rows().iter().filter(|i| !rows.contains(i)).count();
    let n1 = inst.n1() as f64;
    Ok(DetectionEstimate {
        column,
        probes,
        successes,
        estimate: p,
        std_error: (p * (1.0 - p) / probes as f64).sqrt(),
        psi_u,
        lower_bound: psi_u as f64 / n1,
        proof_value: (noisy_outside + psi_u) as f64 / n1,
    })
}

/// Integer-valued random matrix for cross-checking tolerance ranks.
pub fn random_integer_matrix(rows: usize, cols: usize, rank: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut int = |r: usize, c: usize| {
        let data = (0..r * c).map(|_| rng.random_range(-4i32..=4) as f64).collect();
        DenseMatrix::new(r, c, data).expect("shape")
    };
    if rank == 0 {
        return DenseMatrix::zeros(rows, cols);
    }
    int(rows, rank).matmul(&int(rank, cols)).expect("shapes agree")
}
