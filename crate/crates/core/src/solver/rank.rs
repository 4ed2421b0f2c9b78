use nalgebra::{DMatrix, SVD};

/// Singular-value rank and right nullspace of a constraint Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct RankAnalysis {
    /// Variable count (columns).
    pub n: usize,
    /// Residual row count.
    pub m: usize,
    pub rank: usize,
    /// n x (n - rank), orthonormal columns.
    pub nullspace_basis: DMatrix<f64>,
    /// Rows are linearly dependent (rank < m).
    pub redundant: bool,
    pub singular_values: Vec<f64>,
}

impl RankAnalysis {
    pub fn nullity(&self) -> usize {
        self.n - self.rank
    }
}

/// Rank via SVD with cutoff `rank_tol * sigma_max`; the nullspace is spanned
/// by the right singular vectors of the discarded values.
pub fn rank_analysis(j: &DMatrix<f64>, rank_tol: f64) -> RankAnalysis {
    let (m, n) = j.shape();
    if n == 0 {
        return RankAnalysis {
            n,
            m,
            rank: 0,
            nullspace_basis: DMatrix::zeros(0, 0),
            redundant: m > 0,
            singular_values: Vec::new(),
        };
    }
    // Zero rows leave singular values unchanged and give a full n x n V.
    let padded = if m >= n {
        j.clone()
    } else {
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (m, n)).copy_from(j);
        a
    };
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("requested V");
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    let cutoff = rank_tol * sigma_max;
    let keep: Vec<bool> = sigma.iter().map(|&s| sigma_max > 0.0 && s > cutoff).collect();
    let rank = keep.iter().filter(|&&k| k).count();
    let null_rows: Vec<usize> = (0..sigma.len()).filter(|&i| !keep[i]).collect();
    let mut basis = DMatrix::zeros(n, null_rows.len());
    for (c, &i) in null_rows.iter().enumerate() {
        for r in 0..n {
            basis[(r, c)] = v_t[(i, r)];
        }
    }
    let mut singular_values = sigma;
    singular_values.sort_by(|a, b| b.total_cmp(a));
    singular_values.truncate(m.min(n));
    RankAnalysis { n, m, rank, nullspace_basis: basis, redundant: rank < m, singular_values }
}
