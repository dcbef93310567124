//! First-order constant-coefficient operators `𝒜z = Σᵢ A⁽ⁱ⁾ ∂ᵢz`, their
//! symbol at a state, and wave-cone membership.
//!
//! The symbol of `𝒜` at `z` is the `l × N` matrix `Z[j][i] = Σₖ A⁽ⁱ⁾[j][k] z[k]`.
//! A plane wave `z·h(y·ξ)` satisfies `𝒜(z·h(y·ξ)) = h'(y·ξ)·Zξ`, so `z` lies in
//! the wave cone iff `Z` has a non-trivial kernel, i.e. `rank Z < N`. For the
//! Euler operator `Z` is `4 × 3` and the criterion reads `rank Z < 3`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::euler_states::{ExtendedState, EXTENDED_DIM};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOperator {
    #[serde(rename = "N")]
    n: usize,
    l: usize,
    d: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<Vec<f64>>>,
}

/// `N` coefficient matrices, each `l × d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawOperator")]
pub struct FirstOrderOperator {
    #[serde(rename = "N")]
    pub n: usize,
    pub l: usize,
    pub d: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<RawOperator> for FirstOrderOperator {
    type Error = Error;
    fn try_from(r: RawOperator) -> Result<Self> {
        FirstOrderOperator::new(r.a).and_then(|op| {
            if (op.n, op.l, op.d) != (r.n, r.l, r.d) {
                Err(Error::InvalidData(format!(
                    "declared shape (N={}, l={}, d={}) does not match matrices (N={}, l={}, d={})",
                    r.n, r.l, r.d, op.n, op.l, op.d
                )))
            } else {
                Ok(op)
            }
        })
    }
}

impl FirstOrderOperator {
    pub fn new(a: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(Error::InvalidData("operator needs at least one coefficient matrix".into()));
        }
        let l = a[0].len();
        let d = a[0].first().map_or(0, |r| r.len());
        if l == 0 || d == 0 {
            return Err(Error::InvalidData("coefficient matrices must be non-empty".into()));
        }
        for m in &a {
            if m.len() != l {
                return Err(Error::DimensionMismatch { expected: l, got: m.len() });
            }
            for row in m {
                if row.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: row.len() });
                }
            }
        }
        Ok(Self { n, l, d, a })
    }

    /// `𝒜z` at a point, given the partial derivatives `∂ᵢz` (one `d`-vector per variable).
    pub fn apply_to_gradient(&self, grad: &[Vec<f64>]) -> Result<Vec<f64>> {
        if grad.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: grad.len() });
        }
        let mut out = vec![0.0; self.l];
        for (m, g) in self.a.iter().zip(grad) {
            if g.len() != self.d {
                return Err(Error::DimensionMismatch { expected: self.d, got: g.len() });
            }
            for (o, row) in out.iter_mut().zip(m) {
                *o += row.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        Ok(out)
    }
}

/// The operator of the linearised Euler system in the variables
/// `(t, x₁, x₂)` acting on `(ρ, m₁, m₂, U₁₁, U₁₂, E, r₁, r₂)`.
pub fn euler_operator() -> FirstOrderOperator {
    let a_t = vec![
        vec![1., 0., 0., 0., 0., 0., 0., 0.],
        vec![0., 1., 0., 0., 0., 0., 0., 0.],
        vec![0., 0., 1., 0., 0., 0., 0., 0.],
        vec![0., 0., 0., 0., 0., 1., 0., 0.],
    ];
    let a_x1 = vec![
        vec![0., 1., 0., 0., 0., 0., 0., 0.],
        vec![0., 0., 0., 1., 0., 1., 0., 0.],
        vec![0., 0., 0., 0., 1., 0., 0., 0.],
        vec![0., 0., 0., 0., 0., 0., 1., 0.],
    ];
    let a_x2 = vec![
        vec![0., 0., 1., 0., 0., 0., 0., 0.],
        vec![0., 0., 0., 0., 1., 0., 0., 0.],
        vec![0., 0., 0., -1., 0., 1., 0., 0.],
        vec![0., 0., 0., 0., 0., 0., 0., 1.],
    ];
    FirstOrderOperator::new(vec![a_t, a_x1, a_x2]).expect("static operator is well formed")
}

/// `l × N` symbol matrix together with the state it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolMatrix {
    pub z: Vec<Vec<f64>>,
    pub source_state: Vec<f64>,
}

impl SymbolMatrix {
    pub fn rows(&self) -> usize {
        self.z.len()
    }

    pub fn cols(&self) -> usize {
        self.z.first().map_or(0, |r| r.len())
    }

    pub fn apply(&self, xi: &[f64]) -> Vec<f64> {
        self.z.iter().map(|row| row.iter().zip(xi).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn frobenius(&self) -> f64 {
        self.z.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn to_dmatrix(&self) -> DMatrix<f64> {
        let (l, n) = (self.rows(), self.cols());
        // Pad to at least n rows so the SVD returns a full right basis.
        let rows = l.max(n);
        DMatrix::from_fn(rows, n, |j, i| if j < l { self.z[j][i] } else { 0.0 })
    }
}

/// `Z[j][i] = Σₖ A⁽ⁱ⁾[j][k]·z[k]`.
pub fn assemble_symbol(op: &FirstOrderOperator, z: &[f64]) -> Result<SymbolMatrix> {
    if z.len() != op.d {
        return Err(Error::DimensionMismatch { expected: op.d, got: z.len() });
    }
    let mut m = vec![vec![0.0; op.n]; op.l];
    for (i, a) in op.a.iter().enumerate() {
        for (j, row) in a.iter().enumerate() {
            m[j][i] = row.iter().zip(z).map(|(a, b)| a * b).sum();
        }
    }
    Ok(SymbolMatrix { z: m, source_state: z.to_vec() })
}

/// Symbol of the Euler operator at `za − zb`.
pub fn difference_symbol_euler(za: &ExtendedState, zb: &ExtendedState) -> SymbolMatrix {
    let diff: [f64; EXTENDED_DIM] = za.sub(zb);
    assemble_symbol(&euler_operator(), &diff).expect("extended states have the operator's dimension")
}

/// Singular values below `max(l, N)·ε·σ_max·kappa` count as zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankTolerance {
    pub kappa: f64,
}

impl Default for RankTolerance {
    fn default() -> Self {
        Self { kappa: 1e3 }
    }
}

impl RankTolerance {
    /// Singular values within this factor of the threshold flag the verdict as marginal.
    pub const MARGINAL_FACTOR: f64 = 100.0;

    pub fn threshold(&self, l: usize, n: usize, sigma_max: f64) -> f64 {
        l.max(n) as f64 * f64::EPSILON * sigma_max * self.kappa
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeVerdict {
    pub in_cone: bool,
    pub rank: usize,
    /// Decreasing.
    pub singular_values: Vec<f64>,
    pub threshold: f64,
    pub marginal: bool,
    /// Right singular vector of the smallest singular value, present iff `in_cone`.
    pub kernel_direction: Option<Vec<f64>>,
    /// All right singular vectors whose singular value is treated as zero.
    pub kernel_basis: Vec<Vec<f64>>,
}

fn canonical_sign(mut v: Vec<f64>) -> Vec<f64> {
    let mut best = 0;
    for (k, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() * (1.0 + 1e-12) {
            best = k;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// Rank by singular-value thresholding; `in_cone ⟺ rank < N`.
pub fn cone_membership(sym: &SymbolMatrix, tol: RankTolerance) -> ConeVerdict {
    let (l, n) = (sym.rows(), sym.cols());
    let svd = sym.to_dmatrix().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let singular_values: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    let threshold = tol.threshold(l, n, sigma_max);
    let rank = singular_values.iter().filter(|&&s| s > threshold).count();
    let marginal = singular_values.iter().any(|&s| {
        s > 0.0 && s > threshold / RankTolerance::MARGINAL_FACTOR && s <= threshold * RankTolerance::MARGINAL_FACTOR
    });
    let kernel_basis: Vec<Vec<f64>> = order
        .iter()
        .filter(|&&k| svd.singular_values[k] <= threshold)
        .map(|&k| canonical_sign(v_t.row(k).iter().copied().collect()))
        .collect();
    let in_cone = rank < n;
    let kernel_direction = if in_cone {
        let k = *order.last().expect("at least one singular value");
        Some(canonical_sign(v_t.row(k).iter().copied().collect()))
    } else {
        None
    };
    ConeVerdict { in_cone, rank, singular_values, threshold, marginal, kernel_direction, kernel_basis }
}

/// Determinant of the 3×3 block formed by `rows` (0-based) of a symbol with
/// three columns, by cofactor expansion along the first selected row.
pub fn submatrix_determinant(sym: &SymbolMatrix, rows: [usize; 3]) -> Result<f64> {
    if sym.cols() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: sym.cols() });
    }
    for &r in &rows {
        if r >= sym.rows() {
            return Err(Error::IndexOutOfRange { index: r, rows: sym.rows() });
        }
    }
    if rows[0] == rows[1] || rows[0] == rows[2] || rows[1] == rows[2] {
        return Err(Error::DuplicateRows(rows));
    }
    let a = &sym.z[rows[0]];
    let b = &sym.z[rows[1]];
    let c = &sym.z[rows[2]];
    Ok(a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0]))
}
