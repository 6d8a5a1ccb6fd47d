use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{wccn_apply, SubspaceError, WccnTransform};
use crate::tensor::{dot, regularize, sym_generalized_eig, Eigen, LinalgError, Matrix, Tensor3};

/// Non-kin pairs drawn per kin pair when sampling extra-pair differences.
pub const EXTRA_PAIR_RATIO: usize = 4;

/// Index pair into the two views' mode-3 samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KinPair {
    pub parent: usize,
    pub child: usize,
    pub kin: bool,
}

/// Parent-view and child-view tensors with labelled cross-view pairs.
#[derive(Clone, Debug)]
pub struct PairedTensors {
    view1: Tensor3,
    view2: Tensor3,
    pairs: Vec<KinPair>,
}

impl PairedTensors {
    pub fn new(view1: Tensor3, view2: Tensor3, pairs: Vec<KinPair>) -> Result<Self, SubspaceError> {
        let [a1, a2, n1] = view1.dims();
        let [b1, b2, n2] = view2.dims();
        if (a1, a2) != (b1, b2) {
            return Err(SubspaceError::ViewMismatch([a1, a2], [b1, b2]));
        }
        if let Some(p) = pairs.iter().find(|p| p.parent >= n1 || p.child >= n2) {
            return Err(SubspaceError::PairIndex {
                parent: p.parent,
                child: p.child,
                n1,
                n2,
            });
        }
        if !pairs.iter().any(|p| p.kin) {
            return Err(SubspaceError::NoKinPairs);
        }
        if !pairs.iter().any(|p| !p.kin) {
            return Err(SubspaceError::NoNonKinPairs);
        }
        Ok(Self { view1, view2, pairs })
    }

    pub fn view1(&self) -> &Tensor3 {
        &self.view1
    }

    pub fn view2(&self) -> &Tensor3 {
        &self.view2
    }

    pub fn pairs(&self) -> &[KinPair] {
        &self.pairs
    }

    /// `(I1, I2)` of every sample.
    pub fn sample_dims(&self) -> (usize, usize) {
        let [i1, i2, _] = self.view1.dims();
        (i1, i2)
    }
}

/// How each per-mode generalized eigenproblem is solved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverPath {
    /// Dense problem, except that a mode whose difference vectors span fewer
    /// dimensions than the mode size is solved inside that span.
    #[default]
    Auto,
    /// Always the full `I_n × I_n` problem.
    Dense,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TxqdaConfig {
    pub d1: usize,
    pub d2: usize,
    pub iterations: usize,
    pub shrinkage: f64,
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverPath,
}

impl TxqdaConfig {
    pub fn new(d1: usize, d2: usize) -> Self {
        Self {
            d1,
            d2,
            iterations: 5,
            shrinkage: 1e-3,
            seed: 0,
            solver: SolverPath::Auto,
        }
    }
}

/// Trace ratio `tr(U S_E Uᵀ) / tr(U (S_I + ridge) Uᵀ)` after updating one
/// mode in one sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepDiagnostic {
    pub sweep: usize,
    pub mode: usize,
    pub trace_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TxqdaModel {
    /// `d1 × I1`
    pub u1: Matrix,
    /// `d2 × I2`
    pub u2: Matrix,
    pub iterations: usize,
    pub wccn: Option<WccnTransform>,
    pub config: TxqdaConfig,
    pub diagnostics: Vec<SweepDiagnostic>,
}

impl TxqdaModel {
    /// A model built from explicit projection matrices; no training-time
    /// reduction requirement is enforced.
    pub fn from_parts(u1: Matrix, u2: Matrix, wccn: Option<WccnTransform>) -> Result<Self, SubspaceError> {
        if u1.rows() > u1.cols() || u2.rows() > u2.cols() {
            return Err(SubspaceError::Dimension(format!(
                "projections {}x{} and {}x{} must not expand",
                u1.rows(),
                u1.cols(),
                u2.rows(),
                u2.cols()
            )));
        }
        if let Some(w) = &wccn {
            if w.dim() != u1.rows() * u2.rows() {
                return Err(SubspaceError::Dimension(format!(
                    "WCCN dimension {} does not match projected size {}",
                    w.dim(),
                    u1.rows() * u2.rows()
                )));
            }
        }
        let config = TxqdaConfig::new(u1.rows(), u2.rows());
        Ok(Self {
            u1,
            u2,
            iterations: 0,
            wccn,
            config,
            diagnostics: Vec::new(),
        })
    }

    /// `U1`, `U2` as identity truncations to `(d1, d2)`.
    pub fn identity(i1: usize, i2: usize, d1: usize, d2: usize) -> Result<Self, SubspaceError> {
        Self::from_parts(
            Matrix::identity_truncation(d1, i1),
            Matrix::identity_truncation(d2, i2),
            None,
        )
    }

    pub fn input_dims(&self) -> (usize, usize) {
        (self.u1.cols(), self.u2.cols())
    }

    pub fn output_dim(&self) -> usize {
        self.u1.rows() * self.u2.rows()
    }

    /// Trace ratios recorded for one mode, in sweep order.
    pub fn trace_ratios(&self, mode: usize) -> Vec<f64> {
        self.diagnostics
            .iter()
            .filter(|d| d.mode == mode)
            .map(|d| d.trace_ratio)
            .collect()
    }

    /// Sweeps (after the first) whose trace ratio fell below the previous
    /// one by more than `tol`, as `(mode, sweep)`.
    pub fn monotonicity_violations(&self, tol: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for mode in [1, 2] {
            let per: Vec<&SweepDiagnostic> = self.diagnostics.iter().filter(|d| d.mode == mode).collect();
            for w in per.windows(2) {
                if w[1].trace_ratio < w[0].trace_ratio - tol {
                    out.push((mode, w[1].sweep));
                }
            }
        }
        out
    }
}

/// Seeded sample of non-kin cross pairs `(parent, child)`, at most
/// [`EXTRA_PAIR_RATIO`] per kin pair, sorted ascending.
pub fn sample_extra_pairs(data: &PairedTensors, seed: u64) -> Vec<(usize, usize)> {
    let n1 = data.view1.dims()[2];
    let n2 = data.view2.dims()[2];
    let kin: HashSet<(usize, usize)> = data
        .pairs
        .iter()
        .filter(|p| p.kin)
        .map(|p| (p.parent, p.child))
        .collect();
    let available = n1 * n2 - kin.len();
    let want = (EXTRA_PAIR_RATIO * kin.len()).min(available);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Over-draw by the kin count so that rejecting kin cells still leaves `want`.
    let draw = (want + kin.len()).min(n1 * n2);
    let mut picked: Vec<(usize, usize)> = rand::seq::index::sample(&mut rng, n1 * n2, draw)
        .into_iter()
        .map(|idx| (idx / n2, idx % n2))
        .filter(|cell| !kin.contains(cell))
        .take(want)
        .collect();
    picked.sort_unstable();
    picked
}

/// Difference vectors along `mode` for the given cross pairs: the columns of
/// the mode-n unfolding of each `x_i − z_j`.
fn mode_vectors(xs: &[Matrix], zs: &[Matrix], pairs: &[(usize, usize)], mode: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for &(i, j) in pairs {
        let diff = xs[i].sub(&zs[j]).expect("projected samples share a shape");
        if mode == 1 {
            for c in 0..diff.cols() {
                out.push(diff.column(c));
            }
        } else {
            for r in 0..diff.rows() {
                out.push(diff.row(r).to_vec());
            }
        }
    }
    out
}

fn scatter(vectors: &[Vec<f64>], n: usize, weight: f64) -> Matrix {
    let mut s = Matrix::zeros(n, n);
    for v in vectors {
        s.add_outer(v, weight);
    }
    s.symmetrize();
    s
}

fn project_other_mode(samples: &[Matrix], mode: usize, u1: &Matrix, u2: &Matrix) -> Vec<Matrix> {
    let u2t = u2.transpose();
    samples
        .iter()
        .map(|m| {
            if mode == 1 {
                m.matmul(&u2t).expect("U2 matches I2")
            } else {
                u1.matmul(m).expect("U1 matches I1")
            }
        })
        .collect()
}

fn slices(t: &Tensor3) -> Vec<Matrix> {
    (0..t.dims()[2]).map(|k| t.slice3(k)).collect()
}

/// Intra and extra scatter matrices for `mode`, with the other mode projected
/// by `u_other` (`U2` for mode 1, `U1` for mode 2).
pub fn mode_scatters(
    data: &PairedTensors,
    extra: &[(usize, usize)],
    mode: usize,
    u_other: &Matrix,
) -> Result<(Matrix, Matrix), SubspaceError> {
    let (i1, i2) = data.sample_dims();
    let (u1, u2) = match mode {
        1 => (Matrix::identity(i1), u_other.clone()),
        2 => (u_other.clone(), Matrix::identity(i2)),
        _ => return Err(LinalgError::InvalidMode(mode).into()),
    };
    let xs = project_other_mode(&slices(&data.view1), mode, &u1, &u2);
    let zs = project_other_mode(&slices(&data.view2), mode, &u1, &u2);
    let intra = kin_cells(data);
    let n = if mode == 1 { i1 } else { i2 };
    let s_i = scatter(&mode_vectors(&xs, &zs, &intra, mode), n, 1.0 / intra.len() as f64);
    let s_e = scatter(&mode_vectors(&xs, &zs, extra, mode), n, 1.0 / extra.len().max(1) as f64);
    Ok((s_i, s_e))
}

fn kin_cells(data: &PairedTensors) -> Vec<(usize, usize)> {
    data.pairs
        .iter()
        .filter(|p| p.kin)
        .map(|p| (p.parent, p.child))
        .collect()
}

/// Orthonormal basis (as rows) of the span of `vectors`, by modified
/// Gram-Schmidt with one re-orthogonalization pass.
fn span_basis(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let scale = vectors.iter().map(|v| dot(v, v).sqrt()).fold(0.0, f64::max);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &basis {
                let p = dot(&w, q);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= p * y);
            }
        }
        let norm = dot(&w, &w).sqrt();
        if norm > 1e-10 * scale && norm > 0.0 {
            w.iter_mut().for_each(|x| *x /= norm);
            basis.push(w);
        }
    }
    basis
}

struct ModeSolution {
    /// `d × n`, rows are the leading generalized eigenvectors.
    projection: Matrix,
    trace_ratio: f64,
}

fn leading_rows(eig: &Eigen, d: usize) -> Matrix {
    let n = eig.vectors.rows();
    let mut u = Matrix::zeros(d, n);
    for r in 0..d {
        for c in 0..n {
            u[(r, c)] = eig.vectors[(c, r)];
        }
    }
    u
}

/// `w_i`, `w_e` are the per-vector weights: one over the pair counts.
#[allow(clippy::too_many_arguments)]
fn solve_mode(
    intra: &[Vec<f64>],
    extra: &[Vec<f64>],
    w_i: f64,
    w_e: f64,
    n: usize,
    d: usize,
    shrinkage: f64,
    solver: SolverPath,
) -> Result<ModeSolution, LinalgError> {
    let trace_ratio = |eig: &Eigen| eig.values[..d].iter().sum::<f64>() / d as f64;

    let reduced = if solver == SolverPath::Auto && intra.len() + extra.len() < n {
        let all: Vec<Vec<f64>> = intra.iter().chain(extra).cloned().collect();
        let basis = span_basis(&all);
        (basis.len() >= d && basis.len() < n).then_some(basis)
    } else {
        None
    };

    match reduced {
        None => {
            let s_i = scatter(intra, n, w_i);
            let s_e = scatter(extra, n, w_e);
            let eig = sym_generalized_eig(&s_e, &regularize(&s_i, shrinkage))?;
            Ok(ModeSolution {
                projection: leading_rows(&eig, d),
                trace_ratio: trace_ratio(&eig),
            })
        }
        Some(basis) => {
            // Every eigenvector with a non-zero eigenvalue lies in the span of
            // the difference vectors, so the problem restricted to an
            // orthonormal basis of that span has the same leading solutions.
            let r = basis.len();
            let coords = |vs: &[Vec<f64>]| -> Vec<Vec<f64>> {
                vs.iter().map(|v| basis.iter().map(|q| dot(q, v)).collect()).collect()
            };
            let s_i = scatter(&coords(intra), r, w_i);
            let s_e = scatter(&coords(extra), r, w_e);
            let trace_full: f64 = intra.iter().map(|v| dot(v, v)).sum::<f64>() * w_i;
            let ridge = shrinkage * trace_full / n as f64;
            let mut b = s_i;
            for k in 0..r {
                b[(k, k)] += ridge;
            }
            let eig = sym_generalized_eig(&s_e, &b)?;
            let mut u = Matrix::zeros(d, n);
            for row in 0..d {
                let out = u.row_mut(row);
                for (k, q) in basis.iter().enumerate() {
                    let w = eig.vectors[(k, row)];
                    out.iter_mut().zip(q).for_each(|(o, x)| *o += w * x);
                }
            }
            Ok(ModeSolution {
                projection: u,
                trace_ratio: trace_ratio(&eig),
            })
        }
    }
}

/// Learns the two mode projections by alternating generalized
/// eigenproblems. The returned model carries no WCCN transform.
pub fn txqda_train(data: &PairedTensors, cfg: &TxqdaConfig) -> Result<TxqdaModel, SubspaceError> {
    let (i1, i2) = data.sample_dims();
    if cfg.d1 == 0 || cfg.d1 > i1 || cfg.d2 == 0 || cfg.d2 > i2 {
        return Err(SubspaceError::Dimension(format!(
            "need 1 <= d1 <= {i1} and 1 <= d2 <= {i2}, got d1={} d2={}",
            cfg.d1, cfg.d2
        )));
    }
    if cfg.d1 * cfg.d2 >= i1 * i2 {
        return Err(SubspaceError::Dimension(format!(
            "d1*d2 = {} must be smaller than I1*I2 = {}",
            cfg.d1 * cfg.d2,
            i1 * i2
        )));
    }
    if cfg.iterations == 0 {
        return Err(SubspaceError::Dimension("at least one sweep is required".into()));
    }
    if !cfg.shrinkage.is_finite() || cfg.shrinkage < 0.0 {
        return Err(SubspaceError::Dimension(format!(
            "shrinkage must be non-negative, got {}",
            cfg.shrinkage
        )));
    }

    let intra = kin_cells(data);
    let extra = sample_extra_pairs(data, cfg.seed);
    if extra.is_empty() {
        return Err(SubspaceError::NoNonKinPairs);
    }
    let xs = slices(&data.view1);
    let zs = slices(&data.view2);

    let mut u1 = Matrix::identity_truncation(cfg.d1, i1);
    let mut u2 = Matrix::identity_truncation(cfg.d2, i2);
    let mut diagnostics = Vec::with_capacity(2 * cfg.iterations);

    for sweep in 1..=cfg.iterations {
        for mode in [1, 2] {
            let (n, d) = if mode == 1 { (i1, cfg.d1) } else { (i2, cfg.d2) };
            if n == 1 {
                // A singleton mode keeps U = (1).
                continue;
            }
            let px = project_other_mode(&xs, mode, &u1, &u2);
            let pz = project_other_mode(&zs, mode, &u1, &u2);
            let v_intra = mode_vectors(&px, &pz, &intra, mode);
            let v_extra = mode_vectors(&px, &pz, &extra, mode);
            let w_i = 1.0 / intra.len() as f64;
            let w_e = 1.0 / extra.len() as f64;
            let sol = solve_mode(&v_intra, &v_extra, w_i, w_e, n, d, cfg.shrinkage, cfg.solver)
                .map_err(|source| SubspaceError::Eigen { mode, sweep, source })?;
            diagnostics.push(SweepDiagnostic {
                sweep,
                mode,
                trace_ratio: sol.trace_ratio,
            });
            if mode == 1 {
                u1 = sol.projection;
            } else {
                u2 = sol.projection;
            }
        }
    }

    // Stored at file precision so a reloaded model is identical.
    Ok(TxqdaModel {
        u1: u1.to_f32_precision(),
        u2: u2.to_f32_precision(),
        iterations: cfg.iterations,
        wccn: None,
        config: cfg.clone(),
        diagnostics,
    })
}

/// `vec(U1 · M · U2ᵀ)` (row-major), whitened when the model carries WCCN.
pub fn txqda_project(sample: &Matrix, model: &TxqdaModel) -> Result<Vec<f64>, SubspaceError> {
    let (i1, i2) = model.input_dims();
    if sample.shape() != (i1, i2) {
        return Err(SubspaceError::Dimension(format!(
            "sample is {}x{}, model expects {i1}x{i2}",
            sample.rows(),
            sample.cols()
        )));
    }
    let y = model.u1.matmul(sample)?.matmul(&model.u2.transpose())?.into_vec();
    match &model.wccn {
        Some(w) => wccn_apply(&y, w),
        None => Ok(y),
    }
}

/// Projects every mode-3 sample of `t`.
pub fn txqda_project_tensor(t: &Tensor3, model: &TxqdaModel) -> Result<Vec<Vec<f64>>, SubspaceError> {
    let [i1, i2, n] = t.dims();
    if (i1, i2) != model.input_dims() {
        return Err(SubspaceError::Dimension(format!(
            "tensor samples are {i1}x{i2}, model expects {:?}",
            model.input_dims()
        )));
    }
    let core = t.mode_n_product(&model.u1, 1)?.mode_n_product(&model.u2, 2)?;
    let [d1, d2, _] = core.dims();
    (0..n)
        .map(|k| {
            let mut y = Vec::with_capacity(d1 * d2);
            for a in 0..d1 {
                for b in 0..d2 {
                    y.push(core.get(a, b, k));
                }
            }
            match &model.wccn {
                Some(w) => wccn_apply(&y, w),
                None => Ok(y),
            }
        })
        .collect()
}
