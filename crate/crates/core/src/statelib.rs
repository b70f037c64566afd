//! Deterministic state and operator generators.
//!
//! All randomness flows from [`rng_from_seed`], see [`PRNG_ALGORITHM`].

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::equivalence::LocalOperatorSet;
use crate::error::{Error, Result};
use crate::linalg::{kron, qr, Matrix};
use crate::tensor::{mode_multiply, DenseTensor, Shape};

/// Identity of the seeded generator. Orbits and random states are
/// reproducible for a fixed seed as long as this string is unchanged.
pub const PRNG_ALGORITHM: &str =
    "chacha20/rand_chacha-0.9/seed_from_u64; normals: rand_distr-0.5 StandardNormal; v1";

pub type StateRng = ChaCha20Rng;

pub fn rng_from_seed(seed: u64) -> StateRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Complex normal with `E|z|^2 = 1`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    C64::new(rng.sample::<f64, _>(StandardNormal) * s, rng.sample::<f64, _>(StandardNormal) * s)
}

pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    // fill in row-major order so the draw sequence is layout independent
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = complex_normal(rng);
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `sum_j |j...j> / sqrt(dim)` on `parties` modes of dimension `dim`.
    Ghz { parties: usize, dim: usize },
    /// Single-excitation qubit state `(|10..0> + ... + |0..01>) / sqrt(n)`.
    W { parties: usize },
    /// Tensor product of random local vectors.
    Product { dims: Vec<usize> },
    /// Complex Gaussian state, normalized.
    Random { dims: Vec<usize> },
    /// `a1|0001> + a2|0010> + a3|0100> + a4|1000>`.
    FourQubitExample { a: [f64; 4] },
    /// `b1|000000> + b2|010101> + b3|101010> + b4|111111>`.
    SixQubitExample { b: [f64; 4] },
}

impl Family {
    /// Short tag used on the command line.
    pub fn tag(&self) -> &'static str {
        match self {
            Family::Ghz { .. } => "ghz",
            Family::W { .. } => "w",
            Family::Product { .. } => "product",
            Family::Random { .. } => "random",
            Family::FourQubitExample { .. } => "paper4",
            Family::SixQubitExample { .. } => "paper6",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpec {
    pub family: Family,
    pub seed: u64,
}

impl StateSpec {
    pub fn new(family: Family, seed: u64) -> Self {
        StateSpec { family, seed }
    }
}

fn normalized_coefficients(xs: &[f64; 4]) -> Result<[f64; 4]> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidSpec("coefficients must be finite".into()));
    }
    let n = xs.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(Error::InvalidSpec("coefficients must not all vanish".into()));
    }
    Ok(xs.map(|x| x / n))
}

fn superposition(dims: &[usize], terms: &[(&[usize], f64)]) -> Result<DenseTensor> {
    let mut data = DenseTensor::zeros(Shape::new(dims.to_vec())?).into_data();
    let probe = DenseTensor::zeros(Shape::new(dims.to_vec())?);
    for (index, amp) in terms {
        data[probe.offset(index)] += C64::new(*amp, 0.0);
    }
    DenseTensor::from_dims(dims, data)
}

pub fn random_state<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> DenseTensor {
    let n: usize = dims.iter().product();
    let data = (0..n).map(|_| complex_normal(rng)).collect();
    DenseTensor::from_dims(dims, data)
        .expect("valid dims")
        .normalized()
        .expect("gaussian draw is nonzero")
}

pub fn make_state(spec: &StateSpec) -> Result<DenseTensor> {
    let mut rng = rng_from_seed(spec.seed);
    match &spec.family {
        Family::Ghz { parties, dim } => {
            if *parties == 0 || *dim == 0 {
                return Err(Error::InvalidSpec("ghz needs parties >= 1 and dim >= 1".into()));
            }
            let amp = 1.0 / (*dim as f64).sqrt();
            let indices: Vec<Vec<usize>> = (0..*dim).map(|j| vec![j; *parties]).collect();
            let terms: Vec<(&[usize], f64)> = indices.iter().map(|i| (i.as_slice(), amp)).collect();
            superposition(&vec![*dim; *parties], &terms)
        }
        Family::W { parties } => {
            if *parties == 0 {
                return Err(Error::InvalidSpec("w needs at least one party".into()));
            }
            let amp = 1.0 / (*parties as f64).sqrt();
            let indices: Vec<Vec<usize>> = (0..*parties)
                .map(|p| (0..*parties).map(|q| usize::from(p == q)).collect())
                .collect();
            let terms: Vec<(&[usize], f64)> = indices.iter().map(|i| (i.as_slice(), amp)).collect();
            superposition(&vec![2; *parties], &terms)
        }
        Family::Product { dims } => {
            Shape::new(dims.clone())?;
            let mut data = vec![C64::new(1.0, 0.0)];
            for &d in dims {
                let local = random_state(&[d], &mut rng).into_data();
                data = data.iter().flat_map(|x| local.iter().map(move |y| x * y)).collect();
            }
            DenseTensor::from_dims(dims, data)?.normalized()
        }
        Family::Random { dims } => {
            Shape::new(dims.clone())?;
            Ok(random_state(dims, &mut rng))
        }
        Family::FourQubitExample { a } => {
            let a = normalized_coefficients(a)?;
            superposition(
                &[2, 2, 2, 2],
                &[
                    (&[0, 0, 0, 1], a[0]),
                    (&[0, 0, 1, 0], a[1]),
                    (&[0, 1, 0, 0], a[2]),
                    (&[1, 0, 0, 0], a[3]),
                ],
            )
        }
        Family::SixQubitExample { b } => {
            let b = normalized_coefficients(b)?;
            superposition(
                &[2; 6],
                &[
                    (&[0, 0, 0, 0, 0, 0], b[0]),
                    (&[0, 1, 0, 1, 0, 1], b[1]),
                    (&[1, 0, 1, 0, 1, 0], b[2]),
                    (&[1, 1, 1, 1, 1, 1], b[3]),
                ],
            )
        }
    }
}

/// Haar-random `d x d` unitary: QR of a Ginibre matrix with the phases of
/// `R`'s diagonal moved into `Q`.
pub fn haar_unitary_with<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Matrix {
    let (mut q, r) = qr(&ginibre(d, d, rng));
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn haar_unitary(d: usize, seed: u64) -> Matrix {
    haar_unitary_with(d, &mut rng_from_seed(seed))
}

/// `U diag(s) V^dagger` with Haar `U`, `V` and `s` log-uniform on
/// `[cond_max^-1/2, cond_max^1/2]`, so the condition number is at most
/// `cond_max`.
pub fn random_invertible_with<R: Rng + ?Sized>(d: usize, cond_max: f64, rng: &mut R) -> Matrix {
    let cond_max = cond_max.max(1.0);
    let u = haar_unitary_with(d, rng);
    let v = haar_unitary_with(d, rng);
    let half = 0.5 * cond_max.ln();
    let s = Matrix::from_diagonal(&nalgebra::DVector::from_iterator(
        d,
        (0..d).map(|_| C64::new((rng.random_range(-half..=half)).exp(), 0.0)),
    ));
    u * s * v.adjoint()
}

pub fn random_invertible(d: usize, cond_max: f64, seed: u64) -> Matrix {
    random_invertible_with(d, cond_max, &mut rng_from_seed(seed))
}

/// `(A_1 kron ... kron A_N) state`, without renormalizing.
pub fn apply_operators(state: &DenseTensor, ops: &[Matrix]) -> Result<DenseTensor> {
    if ops.len() != state.order() {
        return Err(Error::DimensionMismatch(format!(
            "{} operators for an order-{} state",
            ops.len(),
            state.order()
        )));
    }
    for (k, (a, &d)) in ops.iter().zip(state.dims()).enumerate() {
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "operator {k} is {}x{}, mode has dimension {d}",
                a.nrows(),
                a.ncols()
            )));
        }
    }
    ops.iter()
        .enumerate()
        .try_fold(state.clone(), |t, (k, a)| mode_multiply(&t, a, k))
}

pub fn apply_local(state: &DenseTensor, ops: &LocalOperatorSet) -> Result<DenseTensor> {
    apply_operators(state, ops.ops())
}

/// Kronecker product of a list of operators in order.
pub fn kron_all(ops: &[Matrix]) -> Matrix {
    ops.iter()
        .skip(1)
        .fold(ops.first().cloned().unwrap_or_else(|| Matrix::identity(1, 1)), |acc, a| kron(&acc, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::hosvd;
    use crate::equivalence::EquivalenceMode;
    use crate::linalg::{condition_number, frobenius, unitarity_defect};

    #[test]
    fn single_term_four_qubit_example_is_basis_state() {
        let t = make_state(&StateSpec::new(Family::FourQubitExample { a: [1.0, 0.0, 0.0, 0.0] }, 0)).unwrap();
        assert_eq!(t, DenseTensor::basis(&[2, 2, 2, 2], &[0, 0, 0, 1]).unwrap());
    }

    #[test]
    fn coefficients_are_normalized() {
        let t = make_state(&StateSpec::new(Family::SixQubitExample { b: [4.0, 3.0, 2.0, 1.0] }, 0)).unwrap();
        assert!((t.norm() - 1.0).abs() < 1e-12);
        let n = 30f64.sqrt();
        assert!((t.get(&[0, 1, 0, 1, 0, 1]).re - 3.0 / n).abs() < 1e-15);
        let bad = StateSpec::new(Family::FourQubitExample { a: [0.0; 4] }, 0);
        assert!(make_state(&bad).is_err());
    }

    #[test]
    fn bell_state_schmidt_coefficients() {
        let t = make_state(&StateSpec::new(Family::Ghz { parties: 2, dim: 2 }, 0)).unwrap();
        let h = hosvd(&t).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!(h.mode_spectra[0].iter().all(|x| (x - s).abs() < 1e-14));
    }

    #[test]
    fn w_state_layout() {
        let t = make_state(&StateSpec::new(Family::W { parties: 3 }, 0)).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert!((t.get(&[1, 0, 0]).re - s).abs() < 1e-15);
        assert!((t.get(&[0, 0, 1]).re - s).abs() < 1e-15);
        assert_eq!(t.get(&[1, 1, 0]), C64::new(0.0, 0.0));
    }

    #[test]
    fn product_state_has_unit_local_ranks() {
        let t = make_state(&StateSpec::new(Family::Product { dims: vec![2, 3, 2] }, 5)).unwrap();
        assert_eq!(hosvd(&t).unwrap().local_ranks, vec![1, 1, 1]);
        assert!((t.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generators_are_deterministic() {
        let spec = StateSpec::new(Family::Random { dims: vec![2, 3, 2] }, 42);
        assert_eq!(make_state(&spec).unwrap(), make_state(&spec).unwrap());
        assert_eq!(haar_unitary(4, 9), haar_unitary(4, 9));
        assert_eq!(random_invertible(3, 10.0, 9), random_invertible(3, 10.0, 9));
    }

    #[test]
    fn distinct_seeds_give_distinct_states() {
        let mut far = 0;
        for s in 0..100u64 {
            let a = make_state(&StateSpec::new(Family::Random { dims: vec![2, 2, 2] }, 2 * s)).unwrap();
            let b = make_state(&StateSpec::new(Family::Random { dims: vec![2, 2, 2] }, 2 * s + 1)).unwrap();
            if a.distance(&b).unwrap() > 1e-3 {
                far += 1;
            }
        }
        assert_eq!(far, 100);
    }

    #[test]
    fn haar_unitaries_are_unitary() {
        for d in 1..=6 {
            for seed in 0..5 {
                let u = haar_unitary(d, seed);
                assert!(unitarity_defect(&u) < 1e-12);
            }
        }
        let u = haar_unitary(1, 3);
        assert!((u[(0, 0)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn haar_first_moment() {
        // E|U_00|^2 = 1/d; Var = (d-1)/(d^2 (d+1))
        let d = 3;
        let n = 10_000;
        let mut rng = rng_from_seed(2024);
        let samples: Vec<f64> = (0..n).map(|_| haar_unitary_with(d, &mut rng)[(0, 0)].norm_sqr()).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = (d as f64 - 1.0) / ((d * d) as f64 * (d as f64 + 1.0));
        let sigma = (var / n as f64).sqrt();
        assert!((mean - 1.0 / d as f64).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn invertible_respects_condition_bound() {
        for seed in 0..20 {
            let a = random_invertible(4, 10.0, seed);
            assert!(condition_number(&a) <= 10.0 * (1.0 + 1e-10));
        }
        let u = random_invertible(3, 1.0, 1);
        assert!(unitarity_defect(&u) < 1e-12);
    }

    #[test]
    fn apply_local_matches_elementwise_transformation() {
        let t = random_state(&[2, 2, 2], &mut rng_from_seed(1));
        let ops: Vec<Matrix> = (0..3).map(|s| random_invertible(2, 5.0, s)).collect();
        let out = apply_operators(&t, &ops).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let mut z = C64::new(0.0, 0.0);
                    for p in 0..2 {
                        for q in 0..2 {
                            for r in 0..2 {
                                z += ops[0][(i, p)] * ops[1][(j, q)] * ops[2][(k, r)] * t.get(&[p, q, r]);
                            }
                        }
                    }
                    assert!((z - out.get(&[i, j, k])).norm() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn unitary_action_preserves_norm() {
        let t = random_state(&[3, 2, 2, 3], &mut rng_from_seed(8));
        let ops: Vec<Matrix> = t.dims().iter().enumerate().map(|(k, &d)| haar_unitary(d, k as u64)).collect();
        let set = LocalOperatorSet::new(ops, EquivalenceMode::Lu).unwrap();
        let out = apply_local(&t, &set).unwrap();
        assert!((out.norm() - t.norm()).abs() < 1e-12);
        let id = LocalOperatorSet::identity(t.dims(), EquivalenceMode::Lu);
        assert_eq!(apply_local(&t, &id).unwrap(), t);
        assert!(apply_operators(&t, &[Matrix::identity(3, 3)]).is_err());
    }

    #[test]
    fn kron_all_of_single_and_pair() {
        let a = haar_unitary(2, 1);
        let b = haar_unitary(3, 2);
        assert!(frobenius(&(kron_all(&[a.clone(), b.clone()]) - kron(&a, &b))) < 1e-15);
        assert_eq!(kron_all(std::slice::from_ref(&a)), a);
    }
}
