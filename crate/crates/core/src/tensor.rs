//! Dense complex tensors and the index primitives the decomposition is built
//! from: unfolding, folding, mode products, pair rescaling, wrapping,
//! vectorization and realignment.
//!
//! Layout is row-major (last index fastest). All indices are 0-based.

use std::fmt;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape {
    dims: Vec<usize>,
}

impl Shape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidShape(dims));
        }
        let volume = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        if volume.is_none_or(|v| v > isize::MAX as usize) {
            return Err(Error::InvalidShape(dims));
        }
        Ok(Shape { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn volume(&self) -> usize {
        self.dims.iter().product()
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims.len()];
        for k in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.dims[k + 1];
        }
        strides
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", parts.join("x"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Shape,
    data: Vec<C64>,
}

impl DenseTensor {
    pub fn new(shape: Shape, data: Vec<C64>) -> Result<Self> {
        if data.len() != shape.volume() {
            return Err(Error::LengthMismatch {
                expected: shape.volume(),
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn from_dims(dims: &[usize], data: Vec<C64>) -> Result<Self> {
        Self::new(Shape::new(dims.to_vec())?, data)
    }

    pub fn zeros(shape: Shape) -> Self {
        let data = vec![C64::new(0.0, 0.0); shape.volume()];
        DenseTensor { shape, data }
    }

    /// Computational basis tensor with a single unit entry at `index`.
    pub fn basis(dims: &[usize], index: &[usize]) -> Result<Self> {
        let shape = Shape::new(dims.to_vec())?;
        if index.len() != dims.len() || index.iter().zip(dims).any(|(&i, &d)| i >= d) {
            return Err(Error::DimensionMismatch(format!(
                "index {index:?} outside shape {dims:?}"
            )));
        }
        let mut t = Self::zeros(shape);
        let offset = t.offset(index);
        t.data[offset] = C64::new(1.0, 0.0);
        Ok(t)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn order(&self) -> usize {
        self.shape.order()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        index
            .iter()
            .zip(self.shape.strides())
            .map(|(i, s)| i * s)
            .sum()
    }

    pub fn get(&self, index: &[usize]) -> C64 {
        self.data[self.offset(index)]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: C64) -> Self {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::ZeroState);
        }
        Ok(self.scaled(C64::new(1.0 / n, 0.0)))
    }

    /// Frobenius distance `||self - other||`.
    pub fn distance(&self, other: &DenseTensor) -> Result<f64> {
        self.require_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    fn require_same_shape(&self, other: &DenseTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                left: self.dims().to_vec(),
                right: other.dims().to_vec(),
            });
        }
        Ok(())
    }

    /// Same coefficients under a new shape of equal volume.
    pub fn reshape(&self, dims: &[usize]) -> Result<Self> {
        let shape = Shape::new(dims.to_vec())?;
        if shape.volume() != self.shape.volume() {
            return Err(Error::DimensionMismatch(format!(
                "cannot reshape {} into {}",
                self.shape, shape
            )));
        }
        Ok(DenseTensor {
            shape,
            data: self.data.clone(),
        })
    }

    /// Reorders modes: mode `i` of the result is mode `perm[i]` of `self`.
    pub fn permute_modes(&self, perm: &[usize]) -> Result<Self> {
        let n = self.order();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::DimensionMismatch(format!(
                "{perm:?} is not a permutation of {n} modes"
            )));
        }
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return Ok(self.clone());
        }
        let old_strides = self.shape.strides();
        let dims: Vec<usize> = perm.iter().map(|&p| self.dims()[p]).collect();
        let src_strides: Vec<usize> = perm.iter().map(|&p| old_strides[p]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut index = vec![0usize; n];
        let mut src = 0usize;
        for _ in 0..self.data.len() {
            data.push(self.data[src]);
            for k in (0..n).rev() {
                index[k] += 1;
                src += src_strides[k];
                if index[k] < dims[k] {
                    break;
                }
                src -= src_strides[k] * dims[k];
                index[k] = 0;
            }
        }
        Ok(DenseTensor {
            shape: Shape::new(dims)?,
            data,
        })
    }
}

/// `<a|b>`: conjugate-linear in `a`.
pub fn inner_product(a: &DenseTensor, b: &DenseTensor) -> Result<C64> {
    a.require_same_shape(b)?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x.conj() * y).sum())
}

fn cyclic_order(order: usize, k: usize) -> Vec<usize> {
    (0..order).map(|i| (k + i) % order).collect()
}

fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Mode-`k` unfolding: a `J_k x prod(J_l, l != k)` matrix whose column index
/// runs over `j_{k+1}, ..., j_N, j_1, ..., j_{k-1}` with `j_{k+1}` slowest.
pub fn unfold(t: &DenseTensor, k: usize) -> Result<Matrix> {
    if k >= t.order() {
        return Err(Error::ModeOutOfRange {
            mode: k,
            order: t.order(),
        });
    }
    let p = t.permute_modes(&cyclic_order(t.order(), k))?;
    let rows = t.dims()[k];
    let cols = t.shape.volume() / rows;
    Ok(Matrix::from_row_slice(rows, cols, &p.data))
}

/// Inverse of [`unfold`] for the given target shape.
pub fn fold(m: &Matrix, k: usize, shape: &Shape) -> Result<DenseTensor> {
    if k >= shape.order() {
        return Err(Error::ModeOutOfRange {
            mode: k,
            order: shape.order(),
        });
    }
    let rows = shape.dims()[k];
    if m.nrows() != rows || m.ncols() * rows != shape.volume() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix cannot fold into mode {k} of {shape}",
            m.nrows(),
            m.ncols()
        )));
    }
    let perm = cyclic_order(shape.order(), k);
    let dims: Vec<usize> = perm.iter().map(|&p| shape.dims()[p]).collect();
    let mut data = Vec::with_capacity(shape.volume());
    for i in 0..m.nrows() {
        data.extend(m.row(i).iter().copied());
    }
    DenseTensor::from_dims(&dims, data)?.permute_modes(&inverse_permutation(&perm))
}

/// Mode-`k` product `t x_k a`: every mode-`k` fiber is multiplied by `a`.
pub fn mode_multiply(t: &DenseTensor, a: &Matrix, k: usize) -> Result<DenseTensor> {
    if k >= t.order() {
        return Err(Error::ModeOutOfRange {
            mode: k,
            order: t.order(),
        });
    }
    let dk = t.dims()[k];
    if a.ncols() != dk {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} operator on mode {k} of dimension {dk}",
            a.nrows(),
            a.ncols()
        )));
    }
    let outer: usize = t.dims()[..k].iter().product();
    let inner: usize = t.dims()[k + 1..].iter().product();
    let new_dk = a.nrows();
    let mut dims = t.dims().to_vec();
    dims[k] = new_dk;
    let mut data = vec![C64::new(0.0, 0.0); outer * new_dk * inner];
    for o in 0..outer {
        let src = &t.data[o * dk * inner..(o + 1) * dk * inner];
        let dst = &mut data[o * new_dk * inner..(o + 1) * new_dk * inner];
        for j in 0..dk {
            let fiber = &src[j * inner..(j + 1) * inner];
            for i in 0..new_dk {
                let coeff = a[(i, j)];
                if coeff == C64::new(0.0, 0.0) {
                    continue;
                }
                for (d, s) in dst[i * inner..(i + 1) * inner].iter_mut().zip(fiber) {
                    *d += coeff * s;
                }
            }
        }
    }
    DenseTensor::from_dims(&dims, data)
}

/// Grouping of tensor modes into composite modes of one or two members.
///
/// Groups are listed by ascending first member, members ascend within a
/// group, every mode appears exactly once, and a singleton group exists only
/// (and exactly once) when the number of modes is odd.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PairingPlan {
    groups: Vec<Vec<usize>>,
}

impl PairingPlan {
    pub fn new(groups: Vec<Vec<usize>>, order: usize) -> Result<Self> {
        let mut seen = vec![false; order];
        let mut singletons = 0;
        let mut prev_first = None;
        for g in &groups {
            match g.as_slice() {
                [_] => singletons += 1,
                [a, b] if a < b => {}
                _ => return Err(Error::InvalidPlan(format!("bad group {g:?}"))),
            }
            if prev_first.is_some_and(|p| p >= g[0]) {
                return Err(Error::InvalidPlan("groups must be ordered by first mode".into()));
            }
            prev_first = Some(g[0]);
            for &m in g {
                if m >= order || std::mem::replace(&mut seen[m], true) {
                    return Err(Error::InvalidPlan(format!(
                        "mode {m} repeated or out of range for order {order}"
                    )));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidPlan("plan does not cover every mode".into()));
        }
        if singletons != order % 2 {
            return Err(Error::InvalidPlan(format!(
                "order {order} needs exactly {} singleton group(s), plan has {singletons}",
                order % 2
            )));
        }
        Ok(PairingPlan { groups })
    }

    /// Adjacent pairs `(0,1)(2,3)...`, with a trailing singleton for odd order.
    pub fn adjacent(order: usize) -> Self {
        let groups = (0..order)
            .step_by(2)
            .map(|a| if a + 1 < order { vec![a, a + 1] } else { vec![a] })
            .collect();
        PairingPlan { groups }
    }

    /// Parses the `0-1,2-3,4` syntax and validates it against `order`.
    pub fn parse(spec: &str, order: usize) -> Result<Self> {
        let groups = spec
            .split(',')
            .map(|g| {
                g.trim()
                    .split('-')
                    .map(|m| {
                        m.trim()
                            .parse::<usize>()
                            .map_err(|_| Error::InvalidPlan(format!("cannot parse group '{g}'")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(groups, order)
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Number of source modes.
    pub fn order(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Number of composite modes, `ceil(order / 2)`.
    pub fn rescaled_order(&self) -> usize {
        self.groups.len()
    }

    /// Source modes in composite-mode order.
    pub fn permutation(&self) -> Vec<usize> {
        self.groups.iter().flatten().copied().collect()
    }

    pub fn rescaled_dims(&self, dims: &[usize]) -> Vec<usize> {
        self.groups
            .iter()
            .map(|g| g.iter().map(|&m| dims[m]).product())
            .collect()
    }

    /// `(I_a, I_b)` per composite mode; singletons give `(J, 1)`.
    pub fn factor_dims(&self, dims: &[usize]) -> Vec<(usize, usize)> {
        self.groups
            .iter()
            .map(|g| match g.as_slice() {
                [a, b] => (dims[*a], dims[*b]),
                [a] => (dims[*a], 1),
                _ => unreachable!("validated on construction"),
            })
            .collect()
    }

    pub fn is_pair(&self, k: usize) -> bool {
        self.groups[k].len() == 2
    }
}

impl fmt::Display for PairingPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .groups
            .iter()
            .map(|g| g.iter().map(|m| m.to_string()).collect::<Vec<_>>().join("-"))
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Merges each group of the plan into one composite mode. For a pair `(a, b)`
/// the composite index is `i_a * I_b + i_b`. Pure relabeling.
pub fn rescale(t: &DenseTensor, plan: &PairingPlan) -> Result<DenseTensor> {
    if plan.order() != t.order() {
        return Err(Error::InvalidPlan(format!(
            "plan covers {} modes, tensor has {}",
            plan.order(),
            t.order()
        )));
    }
    t.permute_modes(&plan.permutation())?
        .reshape(&plan.rescaled_dims(t.dims()))
}

/// Inverse of [`rescale`] back onto `original_dims`.
pub fn unrescale(t: &DenseTensor, plan: &PairingPlan, original_dims: &[usize]) -> Result<DenseTensor> {
    if plan.order() != original_dims.len() || t.dims() != plan.rescaled_dims(original_dims).as_slice() {
        return Err(Error::DimensionMismatch(format!(
            "tensor {} does not match plan {plan} over {original_dims:?}",
            t.shape()
        )));
    }
    let perm = plan.permutation();
    let permuted: Vec<usize> = perm.iter().map(|&m| original_dims[m]).collect();
    t.reshape(&permuted)?.permute_modes(&inverse_permutation(&perm))
}

/// Column-major wrapping of a length `i1 * i2` vector into an `i1 x i2`
/// matrix: entry `(i, j)` is `u[j * i1 + i]`.
pub fn wrap(u: &[C64], i1: usize, i2: usize) -> Result<Matrix> {
    if u.len() != i1 * i2 {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} cannot wrap into {i1}x{i2}",
            u.len()
        )));
    }
    Ok(Matrix::from_column_slice(i1, i2, u))
}

/// Column-major flattening; the inverse of [`wrap`].
pub fn vectorize(m: &Matrix) -> Vec<C64> {
    m.as_slice().to_vec()
}

/// Realignment of an `(i1 i2) x (i1 i2)` matrix with respect to `i1 x i2`.
///
/// The matrix is viewed as an `i1 x i1` grid of `i2 x i2` blocks `A_ij`.
/// Row `j * i1 + i` of the result is `vectorize(A_ij)^T`, so blocks are taken
/// down each block column in turn. `realign(X kron Y) = vec(X) vec(Y)^T`.
pub fn realign(a: &Matrix, i1: usize, i2: usize) -> Result<Matrix> {
    let side = i1 * i2;
    if a.nrows() != side || a.ncols() != side {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix cannot be realigned as ({i1}*{i2}) blocks",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(Matrix::from_fn(i1 * i1, i2 * i2, |row, col| {
        let (i, j) = (row % i1, row / i1);
        let (p, q) = (col % i2, col / i2);
        a[(i * i2 + p, j * i2 + q)]
    }))
}
