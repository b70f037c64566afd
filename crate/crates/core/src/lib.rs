//! Concentration of multipartite pure states.
//!
//! A state on `I_1 x ... x I_N` is repeatedly pair-rescaled and decomposed by
//! a higher-order SVD. Each level peels off one tripartite state per
//! composite mode (the wrapped leading singular vectors) and leaves a smaller
//! core tensor, until only a bipartite or tripartite core remains. The
//! hierarchy reconstructs the state exactly and carries the data needed to
//! certify local-unitary (LU) and SLOCC equivalence.
//!
//! Index conventions (all 0-based):
//!
//! | quantity | code |
//! |---|---|
//! | coefficient layout | row-major, last index fastest |
//! | pair map `(i_a, i_b) -> j` | `j = i_a * I_b + i_b` ([`tensor::rescale`]) |
//! | mode-`k` unfolding columns | `j_{k+1} ... j_N j_1 ... j_{k-1}`, first slowest ([`tensor::unfold`]) |
//! | wrapping of `u` into `I_1 x I_2` | column-major, `W[i][j] = u[j * I_1 + i]` ([`tensor::wrap`]) |
//! | realignment rows | blocks `A_11, A_21, ..., A_{I_1 I_1}` ([`tensor::realign`]) |
//! | local rank cutoff | `sigma > 1e-10 * sigma_max` ([`decomposition::RANK_TOLERANCE`]) |
//! | equivalence residuals | relative Frobenius, `1e-8` ([`equivalence::EQUIVALENCE_TOLERANCE`]) |

pub mod decomposition;
pub mod equivalence;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod statelib;
pub mod tensor;

pub use num_complex::Complex64 as C64;

pub use decomposition::{
    check_all_orthogonal, concentrate, concentrate_with, count_parameters, count_tree_parameters,
    extract_tripartites, hosvd, reconstruct, ConcentrateOptions, ConcentrationTree, HosvdResult,
    Level, ParameterCount, TripartiteExtract,
};
pub use equivalence::{
    derive_certificate, invariant_filter, kron_factorize, realign_rank1_check, search_p_tilde,
    spectral_preservation_check, verify_certificate, EquivalenceCertificate, EquivalenceMode,
    EquivalenceVerdict, LocalOperatorSet, SpectralFunctional, Verdict,
};
pub use error::{Error, Result};
pub use exec::Execution;
pub use linalg::Matrix;
pub use statelib::{apply_local, haar_unitary, make_state, random_invertible, Family, StateSpec};
pub use tensor::{DenseTensor, PairingPlan, Shape};
