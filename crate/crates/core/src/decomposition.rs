//! Higher-order SVD, tripartite extraction and recursive state concentration.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::linalg::{left_singular_basis, numerical_rank, Matrix};
use crate::tensor::{mode_multiply, rescale, unfold, unrescale, vectorize, wrap, DenseTensor, PairingPlan, Shape};

/// Relative singular value cutoff for local ranks: `sigma > tol * sigma_max`.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct HosvdResult {
    /// `U^(k)`, `J_k x J_k` unitary, columns by descending singular value.
    pub factors: Vec<Matrix>,
    pub core: DenseTensor,
    pub local_ranks: Vec<usize>,
    /// Mode singular values, descending, zero-padded to `J_k`.
    pub mode_spectra: Vec<Vec<f64>>,
}

impl HosvdResult {
    /// `U^(1) x ... x U^(M) core`.
    pub fn reconstruct(&self) -> Result<DenseTensor> {
        self.factors
            .iter()
            .enumerate()
            .try_fold(self.core.clone(), |acc, (k, u)| mode_multiply(&acc, u, k))
    }

    /// The core restricted to `j_k < r_k` on every mode.
    pub fn truncated_core(&self) -> Result<DenseTensor> {
        sub_block(&self.core, &self.local_ranks)
    }
}

fn sub_block(t: &DenseTensor, extents: &[usize]) -> Result<DenseTensor> {
    if extents == t.dims() {
        return Ok(t.clone());
    }
    let shape = Shape::new(extents.to_vec())?;
    let mut data = Vec::with_capacity(shape.volume());
    let mut index = vec![0usize; extents.len()];
    for _ in 0..shape.volume() {
        data.push(t.get(&index));
        for k in (0..index.len()).rev() {
            index[k] += 1;
            if index[k] < extents[k] {
                break;
            }
            index[k] = 0;
        }
    }
    DenseTensor::new(shape, data)
}

pub fn hosvd(t: &DenseTensor) -> Result<HosvdResult> {
    hosvd_with(t, Execution::default())
}

/// HOSVD with an explicit execution policy for the per-mode SVDs.
pub fn hosvd_with(t: &DenseTensor, exec: Execution) -> Result<HosvdResult> {
    if t.order() < 2 {
        return Err(Error::OrderTooLow {
            order: t.order(),
            min: 2,
        });
    }
    let bases = map_indexed(exec, t.order(), |k| {
        unfold(t, k).map(|m| left_singular_basis(&m))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut core = t.clone();
    for (k, b) in bases.iter().enumerate() {
        core = mode_multiply(&core, &b.u.adjoint(), k)?;
    }
    let local_ranks = bases
        .iter()
        .map(|b| numerical_rank(&b.singular_values, RANK_TOLERANCE))
        .collect();
    let (factors, mode_spectra) = bases.into_iter().map(|b| (b.u, b.singular_values)).unzip();
    Ok(HosvdResult {
        factors,
        core,
        local_ranks,
        mode_spectra,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityViolation {
    pub mode: usize,
    pub alpha: usize,
    pub beta: usize,
    pub overlap: f64,
}

#[derive(Debug, Clone)]
pub struct OrthogonalityReport {
    pub tolerance: f64,
    pub violations: Vec<OrthogonalityViolation>,
    pub max_overlap: f64,
    /// Norms of the fixed-index subtensors per mode.
    pub subtensor_norms: Vec<Vec<f64>>,
    pub norms_descending: bool,
    /// Whether the subtensors are additionally unit-norm. HOSVD cores give
    /// subtensor norms equal to the mode singular values, so this is normally
    /// false; it is reported rather than enforced.
    pub unit_norm: bool,
}

impl OrthogonalityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.norms_descending
    }
}

/// Checks that fixed-index subtensors are mutually orthogonal on every mode.
/// Overlaps are compared against `tol * max(1, ||core||^2)`.
pub fn check_all_orthogonal(core: &DenseTensor, tol: f64) -> OrthogonalityReport {
    let bound = tol * core.norm().powi(2).max(1.0);
    let mut violations = Vec::new();
    let mut max_overlap = 0.0f64;
    let mut subtensor_norms = Vec::with_capacity(core.order());
    let mut norms_descending = true;
    for k in 0..core.order() {
        let m = unfold(core, k).expect("mode in range");
        let gram = &m * m.adjoint();
        let norms: Vec<f64> = (0..gram.nrows()).map(|a| gram[(a, a)].re.max(0.0).sqrt()).collect();
        for a in 0..gram.nrows() {
            for b in a + 1..gram.nrows() {
                let overlap = gram[(a, b)].norm();
                max_overlap = max_overlap.max(overlap);
                if overlap > bound {
                    violations.push(OrthogonalityViolation {
                        mode: k,
                        alpha: a,
                        beta: b,
                        overlap,
                    });
                }
            }
        }
        norms_descending &= norms.windows(2).all(|w| w[0] + bound.sqrt() >= w[1]);
        subtensor_norms.push(norms);
    }
    let unit_norm = subtensor_norms.iter().flatten().all(|n| (n - 1.0).abs() <= tol);
    OrthogonalityReport {
        tolerance: tol,
        violations,
        max_overlap,
        subtensor_norms,
        norms_descending,
        unit_norm,
    }
}

/// The leading `r_k` singular vectors of one composite mode, wrapped into
/// `I_a x I_b` matrices, plus the remaining vectors as the complement.
#[derive(Debug, Clone, PartialEq)]
pub struct TripartiteExtract {
    pub mode: usize,
    /// `(I_a, I_b)`; `(J_k, 1)` for a singleton group.
    pub dims: (usize, usize),
    pub slices: Vec<Matrix>,
    pub complement_slices: Vec<Matrix>,
}

impl TripartiteExtract {
    pub fn rank(&self) -> usize {
        self.slices.len()
    }

    /// `J_k = I_a * I_b`.
    pub fn composite_dim(&self) -> usize {
        self.dims.0 * self.dims.1
    }

    /// `U_1`: the vectorized slices as columns (`J_k x r_k`).
    pub fn retained_basis(&self) -> Matrix {
        columns_of(self.composite_dim(), &self.slices)
    }

    /// `U = (U_1, U_0)`, the full `J_k x J_k` basis.
    pub fn full_basis(&self) -> Matrix {
        let all: Vec<Matrix> = self.slices.iter().chain(&self.complement_slices).cloned().collect();
        columns_of(self.composite_dim(), &all)
    }
}

fn columns_of(rows: usize, slices: &[Matrix]) -> Matrix {
    let mut m = Matrix::zeros(rows, slices.len());
    for (j, s) in slices.iter().enumerate() {
        for (i, z) in vectorize(s).into_iter().enumerate() {
            m[(i, j)] = z;
        }
    }
    m
}

pub fn extract_tripartites(h: &HosvdResult, level_dims: &[(usize, usize)]) -> Result<Vec<TripartiteExtract>> {
    if level_dims.len() != h.factors.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} factor dims for {} modes",
            level_dims.len(),
            h.factors.len()
        )));
    }
    h.factors
        .iter()
        .zip(level_dims)
        .zip(&h.local_ranks)
        .enumerate()
        .map(|(k, ((u, &(ia, ib)), &r))| {
            if ia * ib != u.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "mode {k}: {ia}x{ib} does not factor J = {}",
                    u.nrows()
                )));
            }
            let wrapped = (0..u.ncols())
                .map(|j| {
                    let col: Vec<C64> = u.column(j).iter().copied().collect();
                    wrap(&col, ia, ib)
                })
                .collect::<Result<Vec<_>>>()?;
            let (slices, complement_slices) = (wrapped[..r].to_vec(), wrapped[r..].to_vec());
            Ok(TripartiteExtract {
                mode: k,
                dims: (ia, ib),
                slices,
                complement_slices,
            })
        })
        .collect()
}

/// One rescale + HOSVD step of the hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    /// Dimensions of the tensor this level decomposed.
    pub input_dims: Vec<usize>,
    pub pairing: PairingPlan,
    pub extracts: Vec<TripartiteExtract>,
    /// `r_k`; the dimensions of the next level's input (or the terminal core).
    pub residual_ranks: Vec<usize>,
    pub mode_spectra: Vec<Vec<f64>>,
}

impl Level {
    /// Extracts that come from a pair of modes (genuine `r x I_a x I_b`
    /// tripartite states); singleton groups are excluded.
    pub fn tripartite_count(&self) -> usize {
        (0..self.extracts.len()).filter(|&k| self.pairing.is_pair(k)).count()
    }
}

/// Decomposes `t` once with the given plan and returns the level together
/// with the rank-truncated core `Omega_r`.
pub fn decompose_level(t: &DenseTensor, plan: &PairingPlan, exec: Execution) -> Result<(Level, DenseTensor)> {
    let rescaled = rescale(t, plan)?;
    let h = hosvd_with(&rescaled, exec)?;
    if h.local_ranks.contains(&0) {
        return Err(Error::ZeroState);
    }
    let extracts = extract_tripartites(&h, &plan.factor_dims(t.dims()))?;
    let residual = h.truncated_core()?;
    let level = Level {
        input_dims: t.dims().to_vec(),
        pairing: plan.clone(),
        extracts,
        residual_ranks: h.local_ranks,
        mode_spectra: h.mode_spectra,
    };
    Ok((level, residual))
}

#[derive(Debug, Clone)]
pub struct ConcentrateOptions {
    /// Stop once the core has at most this many modes (2 or 3).
    pub stop_order: usize,
    /// Plan for the outermost level; deeper levels always pair adjacently.
    pub first_pairing: Option<PairingPlan>,
    pub exec: Execution,
}

impl Default for ConcentrateOptions {
    fn default() -> Self {
        ConcentrateOptions {
            stop_order: 3,
            first_pairing: None,
            exec: Execution::default(),
        }
    }
}

impl ConcentrateOptions {
    pub fn with_stop_order(stop_order: usize) -> Self {
        ConcentrateOptions {
            stop_order,
            ..Default::default()
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.stop_order) {
            return Err(Error::InvalidStopOrder(self.stop_order));
        }
        Ok(())
    }

    pub(crate) fn plan_for(&self, depth: usize, order: usize) -> Result<PairingPlan> {
        match (&self.first_pairing, depth) {
            (Some(plan), 0) => {
                if plan.order() != order {
                    return Err(Error::InvalidPlan(format!(
                        "plan {plan} covers {} modes, state has {order}",
                        plan.order()
                    )));
                }
                Ok(plan.clone())
            }
            _ => Ok(PairingPlan::adjacent(order)),
        }
    }
}

/// The hierarchy of tripartite extracts and the terminal core.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationTree {
    pub original_shape: Shape,
    pub stop_order: usize,
    /// Outermost level first.
    pub levels: Vec<Level>,
    pub terminal: DenseTensor,
}

impl ConcentrationTree {
    pub fn tripartite_count(&self) -> usize {
        self.levels.iter().map(Level::tripartite_count).sum()
    }

    pub fn extract_count(&self) -> usize {
        self.levels.iter().map(|l| l.extracts.len()).sum()
    }

    /// Structural consistency between levels, extracts and the terminal.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::MalformedTree(msg));
        let mut expected = self.original_shape.dims().to_vec();
        for (l, level) in self.levels.iter().enumerate() {
            if level.input_dims != expected {
                return bad(format!("level {l} input {:?}, expected {expected:?}", level.input_dims));
            }
            if level.pairing.order() != expected.len() {
                return bad(format!("level {l} pairing does not cover {} modes", expected.len()));
            }
            let factor_dims = level.pairing.factor_dims(&expected);
            let m = level.pairing.rescaled_order();
            if level.extracts.len() != m || level.residual_ranks.len() != m {
                return bad(format!("level {l} has inconsistent mode count"));
            }
            for (k, (e, &fd)) in level.extracts.iter().zip(&factor_dims).enumerate() {
                let j = fd.0 * fd.1;
                let r = level.residual_ranks[k];
                if e.dims != fd || e.rank() != r || r == 0 || r > j || e.rank() + e.complement_slices.len() != j {
                    return bad(format!("level {l} mode {k}: extract inconsistent with plan or rank"));
                }
                if e.slices.iter().chain(&e.complement_slices).any(|s| s.shape() != fd) {
                    return bad(format!("level {l} mode {k}: slice of wrong size"));
                }
            }
            expected = level.residual_ranks.clone();
        }
        if self.terminal.dims() != expected.as_slice() {
            return bad(format!(
                "terminal {:?} does not match innermost ranks {expected:?}",
                self.terminal.dims()
            ));
        }
        Ok(())
    }
}

pub fn concentrate(state: &DenseTensor, stop_order: usize) -> Result<ConcentrationTree> {
    concentrate_with(state, &ConcentrateOptions::with_stop_order(stop_order))
}

pub fn concentrate_with(state: &DenseTensor, opts: &ConcentrateOptions) -> Result<ConcentrationTree> {
    opts.validate()?;
    if state.order() < 2 {
        return Err(Error::OrderTooLow {
            order: state.order(),
            min: 2,
        });
    }
    if state.norm() == 0.0 {
        return Err(Error::ZeroState);
    }
    let mut levels = Vec::new();
    let mut current = state.clone();
    while current.order() > opts.stop_order {
        let plan = opts.plan_for(levels.len(), current.order())?;
        let (level, residual) = decompose_level(&current, &plan, opts.exec)?;
        levels.push(level);
        current = residual;
    }
    Ok(ConcentrationTree {
        original_shape: state.shape().clone(),
        stop_order: opts.stop_order,
        levels,
        terminal: current,
    })
}

/// Concentrates many states, fanning out over states.
pub fn concentrate_batch(states: &[DenseTensor], opts: &ConcentrateOptions) -> Vec<Result<ConcentrationTree>> {
    let inner = ConcentrateOptions {
        exec: Execution::Sequential,
        ..opts.clone()
    };
    map_indexed(opts.exec, states.len(), |i| concentrate_with(&states[i], &inner))
}

/// Replays a level in reverse: expands `core` by the retained bases and
/// undoes the pair rescaling.
pub(crate) fn expand_level(core: &DenseTensor, bases: &[Matrix], level: &Level) -> Result<DenseTensor> {
    let mut t = core.clone();
    for (k, b) in bases.iter().enumerate() {
        t = mode_multiply(&t, b, k)?;
    }
    unrescale(&t, &level.pairing, &level.input_dims)
}

pub fn reconstruct(tree: &ConcentrationTree) -> Result<DenseTensor> {
    tree.validate()?;
    tree.levels.iter().rev().try_fold(tree.terminal.clone(), |core, level| {
        let bases: Vec<Matrix> = level.extracts.iter().map(TripartiteExtract::retained_basis).collect();
        expand_level(&core, &bases, level)
    })
}

/// `2(prod I - 1) - 2 sum (I_i^2 - 1)`, reported raw (it can be negative).
pub fn count_parameters(dims: &[usize]) -> Result<i128> {
    let mut volume: i128 = 1;
    let mut local: i128 = 0;
    for &d in dims {
        let d = i128::try_from(d).map_err(|_| Error::Overflow)?;
        volume = volume.checked_mul(d).ok_or(Error::Overflow)?;
        local = d
            .checked_mul(d)
            .and_then(|sq| local.checked_add(sq - 1))
            .ok_or(Error::Overflow)?;
    }
    (volume - 1)
        .checked_mul(2)
        .and_then(|a| local.checked_mul(2).and_then(|b| a.checked_sub(b)))
        .ok_or(Error::Overflow)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelParameterCount {
    /// Parameters carried by the level's tripartite extracts.
    pub tripartite: i128,
    /// Parameters of the level's residual core `Omega_r`.
    pub residual: i128,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterCount {
    /// Sum of every level's tripartite count plus the terminal core's count.
    pub total: i128,
    pub per_level: Vec<LevelParameterCount>,
    pub terminal: i128,
}

/// Tripartite parameter count of one level: sum over composite modes of
/// `2(r I_a I_b - 1) - 2(I_a^2 + I_b^2 - 2)`.
pub fn tripartite_parameters(ranks: &[usize], factor_dims: &[(usize, usize)]) -> Result<i128> {
    ranks.iter().zip(factor_dims).try_fold(0i128, |acc, (&r, &(a, b))| {
        let (r, a, b) = (r as i128, a as i128, b as i128);
        let term = r
            .checked_mul(a)
            .and_then(|x| x.checked_mul(b))
            .and_then(|x| x.checked_sub(1))
            .and_then(|x| x.checked_mul(2))
            .and_then(|x| {
                a.checked_mul(a)
                    .and_then(|aa| b.checked_mul(b).and_then(|bb| aa.checked_add(bb)))
                    .and_then(|s| (s - 2).checked_mul(2))
                    .and_then(|y| x.checked_sub(y))
            })
            .ok_or(Error::Overflow)?;
        acc.checked_add(term).ok_or(Error::Overflow)
    })
}

pub fn count_tree_parameters(tree: &ConcentrationTree) -> Result<ParameterCount> {
    let per_level = tree
        .levels
        .iter()
        .map(|l| {
            Ok(LevelParameterCount {
                tripartite: tripartite_parameters(&l.residual_ranks, &l.pairing.factor_dims(&l.input_dims))?,
                residual: count_parameters(&l.residual_ranks)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let terminal = count_parameters(tree.terminal.dims())?;
    let total = per_level
        .iter()
        .try_fold(terminal, |acc, l| acc.checked_add(l.tripartite))
        .ok_or(Error::Overflow)?;
    Ok(ParameterCount {
        total,
        per_level,
        terminal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius, unitarity_defect};
    use crate::statelib::{random_state, rng_from_seed};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn bipartite_hosvd_is_svd() {
        let t = random_state(&[3, 4], &mut rng_from_seed(3));
        let h = hosvd(&t).unwrap();
        for k in 0..2 {
            assert!(unitarity_defect(&h.factors[k]) < 1e-10);
        }
        for i in 0..3 {
            for j in 0..4 {
                let z = h.core.get(&[i, j]);
                if i == j {
                    // independent gauges per mode leave a phase on the diagonal
                    assert!((z.norm() - h.mode_spectra[0][i]).abs() < 1e-12);
                } else {
                    assert!(z.norm() < 1e-12, "off-diagonal {z}");
                }
            }
        }
        assert_eq!(h.local_ranks, vec![3, 3]);
        assert!(h.reconstruct().unwrap().distance(&t).unwrap() < 1e-12);
    }

    #[test]
    fn four_by_four_example_singular_values() {
        let (a1, a2, a3, a4) = (0.1, 0.7, 0.5, 0.5);
        let mut m = DenseTensor::zeros(Shape::new(vec![4, 4]).unwrap()).into_data();
        m[1] = c(a1);
        m[2] = c(a2);
        m[4] = c(a3);
        m[8] = c(a4);
        let t = DenseTensor::from_dims(&[4, 4], m).unwrap();
        let h = hosvd(&t).unwrap();
        let s = &h.mode_spectra[0];
        assert!((s[0] - f64::hypot(a1, a2)).abs() < 1e-14);
        assert!((s[1] - f64::hypot(a3, a4)).abs() < 1e-14);
        assert_eq!(h.local_ranks, vec![2, 2]);
    }

    #[test]
    fn random_core_is_all_orthogonal() {
        let t = random_state(&[2, 2, 2, 2], &mut rng_from_seed(11));
        let h = hosvd(&t).unwrap();
        let report = check_all_orthogonal(&h.core, 1e-10);
        assert!(report.passed(), "{report:?}");
        assert!(!report.unit_norm);
        for (norms, spectrum) in report.subtensor_norms.iter().zip(&h.mode_spectra) {
            for (a, b) in norms.iter().zip(spectrum) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        // direct inner products between subtensors of mode 2
        for a in 0..2 {
            for b in 0..2 {
                let mut overlap = C64::new(0.0, 0.0);
                for i in 0..2 {
                    for j in 0..2 {
                        for l in 0..2 {
                            overlap += h.core.get(&[i, j, a, l]).conj() * h.core.get(&[i, j, b, l]);
                        }
                    }
                }
                if a != b {
                    assert!(overlap.norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn generic_tensor_is_not_all_orthogonal() {
        let t = random_state(&[2, 2, 2], &mut rng_from_seed(4));
        assert!(!check_all_orthogonal(&t, 1e-10).passed());
    }

    #[test]
    fn full_rank_extract_has_empty_complement() {
        let t = random_state(&[2, 2, 2, 2], &mut rng_from_seed(5));
        let tree = concentrate(&t, 3).unwrap();
        for e in &tree.levels[0].extracts {
            assert_eq!(e.rank(), 4);
            assert!(e.complement_slices.is_empty());
            assert!(unitarity_defect(&e.full_basis()) < 1e-10);
        }
    }

    #[test]
    fn extraction_rejects_bad_factorization() {
        let t = random_state(&[4, 4], &mut rng_from_seed(6));
        let h = hosvd(&t).unwrap();
        assert!(extract_tripartites(&h, &[(2, 2), (3, 1)]).is_err());
        assert!(extract_tripartites(&h, &[(2, 2)]).is_err());
    }

    #[test]
    fn ghz4_concentrates_to_diagonal_core() {
        let s = 1.0 / 2f64.sqrt();
        let mut data = vec![c(0.0); 16];
        data[0] = c(s);
        data[15] = c(s);
        let ghz = DenseTensor::from_dims(&[2, 2, 2, 2], data).unwrap();
        let tree = concentrate(&ghz, 3).unwrap();
        assert_eq!(tree.levels.len(), 1);
        let level = &tree.levels[0];
        assert_eq!(level.residual_ranks, vec![2, 2]);
        let e00 = Matrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(0.0)]);
        let e11 = Matrix::from_row_slice(2, 2, &[c(0.0), c(0.0), c(0.0), c(1.0)]);
        for e in &level.extracts {
            // degenerate spectrum: the retained pair spans {E00, E11}
            let span = e.retained_basis();
            for target in [&e00, &e11] {
                let v = Matrix::from_column_slice(4, 1, &vectorize(target));
                let proj = span.adjoint() * &v;
                assert!((frobenius(&proj) - 1.0).abs() < 1e-12);
            }
        }
        // terminal singular values are 1/sqrt(2) each
        let h = hosvd(&tree.terminal).unwrap();
        assert!(h.mode_spectra[0].iter().all(|x| (x - s).abs() < 1e-12));
        assert!(reconstruct(&tree).unwrap().distance(&ghz).unwrap() < 1e-12);
    }

    #[test]
    fn tripartite_input_is_already_terminal() {
        let t = random_state(&[2, 3, 2], &mut rng_from_seed(7));
        let tree = concentrate(&t, 3).unwrap();
        assert!(tree.levels.is_empty());
        assert_eq!(tree.terminal, t);
        assert_eq!(reconstruct(&tree).unwrap(), t);
        let counts = count_tree_parameters(&tree).unwrap();
        assert!(counts.per_level.is_empty());
        assert_eq!(counts.total, count_parameters(&[2, 3, 2]).unwrap());
    }

    #[test]
    fn invalid_inputs() {
        let v = random_state(&[4], &mut rng_from_seed(1));
        assert!(matches!(concentrate(&v, 3), Err(Error::OrderTooLow { .. })));
        assert!(matches!(hosvd(&v), Err(Error::OrderTooLow { .. })));
        let t = random_state(&[2, 2, 2, 2], &mut rng_from_seed(1));
        assert_eq!(concentrate(&t, 4).unwrap_err(), Error::InvalidStopOrder(4));
        let zero = DenseTensor::zeros(Shape::new(vec![2, 2, 2, 2]).unwrap());
        assert_eq!(concentrate(&zero, 3).unwrap_err(), Error::ZeroState);
    }

    #[test]
    fn odd_order_uses_singleton_extract() {
        let t = random_state(&[2, 2, 3, 2, 2], &mut rng_from_seed(8));
        let tree = concentrate(&t, 2).unwrap();
        let first = &tree.levels[0];
        assert_eq!(first.extracts[2].dims, (2, 1));
        assert_eq!(first.tripartite_count(), 2);
        assert!(reconstruct(&tree).unwrap().distance(&t).unwrap() < 1e-10);
    }

    #[test]
    fn malformed_tree_is_rejected() {
        let t = random_state(&[2, 2, 2, 2], &mut rng_from_seed(9));
        let mut tree = concentrate(&t, 3).unwrap();
        tree.levels[0].residual_ranks[0] = 3;
        assert!(matches!(reconstruct(&tree), Err(Error::MalformedTree(_))));
        let mut tree = concentrate(&t, 3).unwrap();
        tree.terminal = random_state(&[2, 2], &mut rng_from_seed(1));
        assert!(matches!(reconstruct(&tree), Err(Error::MalformedTree(_))));
    }

    #[test]
    fn parameter_formula_by_hand() {
        assert_eq!(count_parameters(&[2, 2, 2, 2]).unwrap(), 2 * 15 - 2 * 12);
        assert_eq!(count_parameters(&[2, 2, 2, 2]).unwrap(), 6);
        assert_eq!(count_parameters(&[2, 2, 2]).unwrap(), -4);
        assert_eq!(count_parameters(&[1, 1, 1]).unwrap(), 0);
        assert_eq!(count_parameters(&[1]).unwrap(), 0);
        assert_eq!(count_parameters(&[usize::MAX, usize::MAX, usize::MAX]), Err(Error::Overflow));
    }

    #[test]
    fn batch_matches_single() {
        let states: Vec<DenseTensor> = (0..6)
            .map(|s| random_state(&[2, 3, 2, 2], &mut rng_from_seed(s)))
            .collect();
        let opts = ConcentrateOptions::default();
        for (t, tree) in states.iter().zip(concentrate_batch(&states, &opts)) {
            let single = concentrate_with(t, &opts).unwrap();
            assert_eq!(tree.unwrap().terminal, single.terminal);
        }
    }
}
