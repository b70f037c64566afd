//! JSON documents for states, concentration trees and operator lists.
//!
//! Doubles are written with the shortest decimal that round-trips, and
//! parsed exactly, so `write` then `read` is the identity on finite values.

use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use state_concentration::decomposition::TripartiteExtract;
use state_concentration::{ConcentrationTree, DenseTensor, Error as CoreError, Level, Matrix, PairingPlan, Shape, C64};

use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

type Pair = [f64; 2];

fn pair(z: &C64) -> Pair {
    [z.re, z.im]
}

fn complex(p: &Pair) -> C64 {
    C64::new(p[0], p[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorFile {
    pub format_version: u32,
    pub dims: Vec<usize>,
    /// Last index fastest.
    pub coeffs: Vec<Pair>,
}

impl TensorFile {
    pub fn from_tensor(t: &DenseTensor) -> Self {
        TensorFile {
            format_version: FORMAT_VERSION,
            dims: t.dims().to_vec(),
            coeffs: t.data().iter().map(pair).collect(),
        }
    }

    pub fn to_tensor(&self) -> Result<DenseTensor, CoreError> {
        DenseTensor::from_dims(&self.dims, self.coeffs.iter().map(complex).collect())
    }
}

/// Row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<Pair>,
}

impl MatrixFile {
    pub fn from_matrix(m: &Matrix) -> Self {
        MatrixFile {
            rows: m.nrows(),
            cols: m.ncols(),
            entries: (0..m.nrows())
                .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
                .map(|(i, j)| pair(&m[(i, j)]))
                .collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<Matrix, String> {
        if self.entries.len() != self.rows * self.cols {
            return Err(format!(
                "{}x{} matrix with {} entries",
                self.rows,
                self.cols,
                self.entries.len()
            ));
        }
        if self.entries.iter().flatten().any(|x| !x.is_finite()) {
            return Err("non-finite matrix entry".into());
        }
        Ok(Matrix::from_fn(self.rows, self.cols, |i, j| {
            complex(&self.entries[i * self.cols + j])
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeFile {
    pub rank: usize,
    /// `[I_a, I_b]`; `[J, 1]` for a singleton group.
    pub dims: [usize; 2],
    pub slices: Vec<MatrixFile>,
    pub complement: Vec<MatrixFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelFile {
    pub input_dims: Vec<usize>,
    pub pairing: Vec<Vec<usize>>,
    pub modes: Vec<ModeFile>,
    pub mode_spectra: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeFile {
    pub format_version: u32,
    pub original_dims: Vec<usize>,
    pub stop_order: usize,
    pub levels: Vec<LevelFile>,
    pub terminal: TensorFile,
}

impl TreeFile {
    pub fn from_tree(tree: &ConcentrationTree) -> Self {
        TreeFile {
            format_version: FORMAT_VERSION,
            original_dims: tree.original_shape.dims().to_vec(),
            stop_order: tree.stop_order,
            levels: tree
                .levels
                .iter()
                .map(|l| LevelFile {
                    input_dims: l.input_dims.clone(),
                    pairing: l.pairing.groups().to_vec(),
                    modes: l
                        .extracts
                        .iter()
                        .map(|e| ModeFile {
                            rank: e.rank(),
                            dims: [e.dims.0, e.dims.1],
                            slices: e.slices.iter().map(MatrixFile::from_matrix).collect(),
                            complement: e.complement_slices.iter().map(MatrixFile::from_matrix).collect(),
                        })
                        .collect(),
                    mode_spectra: l.mode_spectra.clone(),
                })
                .collect(),
            terminal: TensorFile::from_tensor(&tree.terminal),
        }
    }

    /// Rebuilds and structurally validates the tree.
    pub fn to_tree(&self) -> Result<ConcentrationTree, CoreError> {
        let malformed = |msg: String| CoreError::MalformedTree(msg);
        let mut levels = Vec::with_capacity(self.levels.len());
        for (l, lf) in self.levels.iter().enumerate() {
            let pairing = PairingPlan::new(lf.pairing.clone(), lf.input_dims.len())
                .map_err(|e| malformed(format!("level {l}: {e}")))?;
            let mut extracts = Vec::with_capacity(lf.modes.len());
            for (k, mf) in lf.modes.iter().enumerate() {
                let read = |ms: &[MatrixFile]| {
                    ms.iter()
                        .map(|m| m.to_matrix().map_err(|e| malformed(format!("level {l} mode {k}: {e}"))))
                        .collect::<Result<Vec<_>, _>>()
                };
                let extract = TripartiteExtract {
                    mode: k,
                    dims: (mf.dims[0], mf.dims[1]),
                    slices: read(&mf.slices)?,
                    complement_slices: read(&mf.complement)?,
                };
                if extract.rank() != mf.rank {
                    return Err(malformed(format!(
                        "level {l} mode {k}: rank {} but {} slices",
                        mf.rank,
                        extract.rank()
                    )));
                }
                extracts.push(extract);
            }
            levels.push(Level {
                input_dims: lf.input_dims.clone(),
                pairing,
                residual_ranks: lf.modes.iter().map(|m| m.rank).collect(),
                extracts,
                mode_spectra: lf.mode_spectra.clone(),
            });
        }
        let tree = ConcentrationTree {
            original_shape: Shape::new(self.original_dims.clone()).map_err(|e| malformed(e.to_string()))?,
            stop_order: self.stop_order,
            levels,
            terminal: self.terminal.to_tensor().map_err(|e| malformed(format!("terminal: {e}")))?,
        };
        tree.validate()?;
        Ok(tree)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpsFile {
    pub format_version: u32,
    /// One square operator per particle, in particle order.
    pub ops: Vec<MatrixFile>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Reads a state; a coefficient count that disagrees with the dims or a
/// non-finite coefficient is a parse error.
pub fn read_tensor(path: &Path) -> Result<DenseTensor, CliError> {
    let file: TensorFile = read_json(path)?;
    if file.format_version != FORMAT_VERSION {
        return Err(CliError::Parse {
            path: path.display().to_string(),
            message: format!("unsupported format_version {}", file.format_version),
        });
    }
    file.to_tensor().map_err(|e| CliError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn write_tensor(path: &Path, t: &DenseTensor) -> Result<(), CliError> {
    write_json(path, &TensorFile::from_tensor(t))
}
