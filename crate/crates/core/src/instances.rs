//! Ground-truth problem instances: a clean rank-`r` matrix `M`, a sparse set
//! of noisy rows `Γ`, and additive Gaussian noise `Δ` supported on `Γ`.

use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    numerical_rank, sparsity_number, standard_basis_member, DenseMatrix, RankTolerance,
    SubspaceBasis,
};

/// Attempts before [`generate`] gives up on degenerate draws.
pub const MAX_GENERATION_ATTEMPTS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorMode {
    /// `M = A·B` with i.i.d. standard normal factors.
    Gaussian,
    /// Clean column space spanned by vectors with disjoint supports.
    SparseBasis,
}

impl std::str::FromStr for GeneratorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "sparse-basis" => Ok(Self::SparseBasis),
            other => Err(Error::InvalidInput(format!("unknown generator mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n1: usize,
    pub n2: usize,
    pub rank: usize,
    pub num_noisy: usize,
    pub mode: GeneratorMode,
    pub target_psi: Option<usize>,
    /// Reject draws whose clean column space contains a standard basis vector.
    pub enforce_psi: bool,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn gaussian(n1: usize, n2: usize, rank: usize, num_noisy: usize, seed: u64) -> Self {
        Self {
            n1,
            n2,
            rank,
            num_noisy,
            mode: GeneratorMode::Gaussian,
            target_psi: None,
            enforce_psi: true,
            seed,
        }
    }

    pub fn sparse_basis(
        n1: usize,
        n2: usize,
        rank: usize,
        num_noisy: usize,
        target_psi: usize,
        seed: u64,
    ) -> Self {
        Self {
            mode: GeneratorMode::SparseBasis,
            target_psi: Some(target_psi),
            ..Self::gaussian(n1, n2, rank, num_noisy, seed)
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let Self {
            n1,
            n2,
            rank,
            num_noisy,
            ..
        } = *self;
        if n1 == 0 || n2 == 0 || rank == 0 {
            return Err(Error::Infeasible("n1, n2 and rank must be positive".into()));
        }
        if num_noisy > n1 || rank + num_noisy > (n1 - num_noisy).min(n2) {
            return Err(Error::Infeasible(format!(
                "rank + noisy rows = {} must not exceed min(n1 - noisy, n2) = {}",
                rank + num_noisy,
                n1.saturating_sub(num_noisy).min(n2)
            )));
        }
        match (self.mode, self.target_psi) {
            (GeneratorMode::Gaussian, Some(_)) => Err(Error::Infeasible(
                "target_psi only applies to sparse-basis mode".into(),
            )),
            (GeneratorMode::Gaussian, None) => Ok(()),
            (GeneratorMode::SparseBasis, None) => Err(Error::Infeasible(
                "sparse-basis mode requires target_psi".into(),
            )),
            (GeneratorMode::SparseBasis, Some(psi)) => {
                if psi < 2 {
                    Err(Error::Infeasible("target_psi must be at least 2".into()))
                } else if rank * psi > n1 - num_noisy {
                    Err(Error::Infeasible(format!(
                        "rank x target_psi = {} exceeds the {} clean rows",
                        rank * psi,
                        n1 - num_noisy
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// The hidden pair `(M, Δ)` together with the observed `N = M + Δ`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthInstance {
    m: DenseMatrix,
    noisy_rows: Vec<usize>,
    noise: DenseMatrix,
    n_observed: DenseMatrix,
    rank: usize,
    seed: u64,
}

impl GroundTruthInstance {
    /// Assembles an instance and checks the structural invariants. The rank
    /// is measured from `m`.
    pub fn from_parts(
        m: DenseMatrix,
        noisy_rows: Vec<usize>,
        noise: DenseMatrix,
        seed: u64,
        tol: RankTolerance,
    ) -> Result<Self> {
        let (n1, n2) = m.shape();
        if n1 == 0 || n2 == 0 {
            return Err(Error::Validation("matrix dimensions must be positive".into()));
        }
        if noise.shape() != (n1, n2) {
            return Err(Error::Validation(format!(
                "noise is {}x{} but M is {n1}x{n2}",
                noise.rows(),
                noise.cols()
            )));
        }
        if !m.is_finite() || !noise.is_finite() {
            return Err(Error::Validation("non-finite entries".into()));
        }
        if noisy_rows.len() > n1 {
            return Err(Error::Validation(format!(
                "{} noisy rows exceed n1 = {n1}",
                noisy_rows.len()
            )));
        }
        let mut sorted = noisy_rows.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != noisy_rows.len() {
            return Err(Error::Validation("duplicate noisy row index".into()));
        }
        if let Some(&bad) = sorted.iter().find(|&&i| i >= n1) {
            return Err(Error::Validation(format!("noisy row {bad} out of range")));
        }
        for i in 0..n1 {
            let zero_row = noise.row(i).iter().all(|&v| v == 0.0);
            let listed = sorted.binary_search(&i).is_ok();
            if listed == zero_row {
                return Err(Error::Validation(if listed {
                    format!("noisy row {i} carries no noise")
                } else {
                    format!("row {i} carries noise but is not listed as noisy")
                }));
            }
        }
        let mut n_observed = m.clone();
        for i in 0..n1 {
            for j in 0..n2 {
                n_observed.set(i, j, m.get(i, j) + noise.get(i, j));
            }
        }
        let rank = numerical_rank(&m, tol)?;
        Ok(Self {
            m,
            noisy_rows: sorted,
            noise,
            n_observed,
            rank,
            seed,
        })
    }

    pub fn n1(&self) -> usize {
        self.m.rows()
    }

    pub fn n2(&self) -> usize {
        self.m.cols()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The clean matrix `M`.
    pub fn m(&self) -> &DenseMatrix {
        &self.m
    }

    pub fn noise(&self) -> &DenseMatrix {
        &self.noise
    }

    /// The observable matrix `N = M + Δ`.
    pub fn observed(&self) -> &DenseMatrix {
        &self.n_observed
    }

    /// `Γ`, sorted ascending.
    pub fn noisy_rows(&self) -> &[usize] {
        &self.noisy_rows
    }

    pub fn clean_rows(&self) -> Vec<usize> {
        (0..self.n1())
            .filter(|i| self.noisy_rows.binary_search(i).is_err())
            .collect()
    }

    /// `M` restricted to the rows outside `Γ`.
    pub fn clean_submatrix(&self) -> DenseMatrix {
        self.m.select_rows(&self.clean_rows())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, tol: RankTolerance) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text, tol)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = InstanceFile {
            n1: self.n1(),
            n2: self.n2(),
            r: self.rank,
            gamma: self.noisy_rows.clone(),
            seed: self.seed,
            m: self.m.to_nested(),
            noise: self.noise.to_nested(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Malformed(e.to_string()))
    }

    pub fn from_json(text: &str, tol: RankTolerance) -> Result<Self> {
        let file: InstanceFile =
            serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
        if file.gamma.len() > file.n1 {
            return Err(Error::Validation(format!(
                "|gamma| = {} exceeds n1 = {}",
                file.gamma.len(),
                file.n1
            )));
        }
        let m = nested_to_matrix(&file.m, file.n1, file.n2, "m")?;
        let noise = nested_to_matrix(&file.noise, file.n1, file.n2, "noise")?;
        let inst = Self::from_parts(m, file.gamma, noise, file.seed, tol)?;
        if inst.rank != file.r {
            return Err(Error::Validation(format!(
                "declared rank {} but M has numerical rank {}",
                file.r, inst.rank
            )));
        }
        Ok(inst)
    }
}

/// On-disk instance layout.
#[derive(Debug, Serialize, Deserialize)]
struct InstanceFile {
    n1: usize,
    n2: usize,
    r: usize,
    gamma: Vec<usize>,
    seed: u64,
    m: Vec<Vec<f64>>,
    noise: Vec<Vec<f64>>,
}

fn nested_to_matrix(rows: &[Vec<f64>], n1: usize, n2: usize, name: &str) -> Result<DenseMatrix> {
    if rows.len() != n1 || rows.iter().any(|r| r.len() != n2) {
        return Err(Error::Validation(format!(
            "field {name} does not have shape {n1}x{n2}"
        )));
    }
    DenseMatrix::from_rows(rows)
}

/// Sparsity numbers of the clean submatrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityProfile {
    /// ψ of the column space of `M` restricted to clean rows.
    pub psi_col_clean: usize,
    /// ψ of the row space of `M` restricted to clean rows.
    pub psi_row_clean: usize,
}

pub fn compute_profile(inst: &GroundTruthInstance, tol: RankTolerance) -> Result<SparsityProfile> {
    let clean = inst.clean_submatrix();
    Ok(SparsityProfile {
        psi_col_clean: sparsity_number(&SubspaceBasis::column_space(&clean, tol)?, tol)?,
        psi_row_clean: sparsity_number(&SubspaceBasis::row_space(&clean, tol)?, tol)?,
    })
}

pub fn generate(config: &GeneratorConfig) -> Result<GroundTruthInstance> {
    config.validate()?;
    let tol = RankTolerance::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let inst = draw(config, &mut rng, tol)?;
        if admissible(&inst, config, tol)? {
            return Ok(inst);
        }
    }
    Err(Error::RetryExhausted {
        attempts: MAX_GENERATION_ATTEMPTS,
    })
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let data = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    DenseMatrix::new(rows, cols, data).expect("shape matches data")
}

fn draw(config: &GeneratorConfig, rng: &mut ChaCha8Rng, tol: RankTolerance) -> Result<GroundTruthInstance> {
    let (n1, n2, r) = (config.n1, config.n2, config.rank);
    let mut gamma = index::sample(rng, n1, config.num_noisy).into_vec();
    gamma.sort_unstable();
    let clean: Vec<usize> = (0..n1).filter(|i| gamma.binary_search(i).is_err()).collect();

    let left = match config.mode {
        GeneratorMode::Gaussian => gaussian_matrix(n1, r, rng),
        GeneratorMode::SparseBasis => {
            let psi = config.target_psi.expect("validated");
            let mut a = DenseMatrix::zeros(n1, r);
            let mut shuffled = clean.clone();
            shuffled.shuffle(rng);
            for (k, support) in shuffled.chunks(psi).take(r).enumerate() {
                for &i in support {
                    a.set(i, k, StandardNormal.sample(rng));
                }
            }
            // Rows in Γ are unconstrained in M.
            for &i in &gamma {
                for k in 0..r {
                    a.set(i, k, StandardNormal.sample(rng));
                }
            }
            a
        }
    };
    let right = gaussian_matrix(r, n2, rng);
    let m = left.matmul(&right)?;

    let mut noise = DenseMatrix::zeros(n1, n2);
    for &i in &gamma {
        for j in 0..n2 {
            noise.set(i, j, StandardNormal.sample(rng));
        }
    }
    GroundTruthInstance::from_parts(m, gamma, noise, config.seed, tol)
}

fn admissible(inst: &GroundTruthInstance, config: &GeneratorConfig, tol: RankTolerance) -> Result<bool> {
    let r = config.rank;
    if inst.rank() != r {
        return Ok(false);
    }
    if numerical_rank(inst.observed(), tol)? != r + config.num_noisy {
        return Ok(false);
    }
    let clean = inst.clean_submatrix();
    if numerical_rank(&clean, tol)? != r {
        return Ok(false);
    }
    if config.enforce_psi {
        let basis = SubspaceBasis::column_space(&clean, tol)?;
        if standard_basis_member(&basis, tol)?.is_some() {
            return Ok(false);
        }
    }
    Ok(true)
}
