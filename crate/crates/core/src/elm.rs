//! Complex single-hidden-layer extreme learning machine.
//!
//! Random fixed input layer, split-complex sigmoid hidden layer, output layer
//! solved as `W_out = T · O†`.

use std::io::{Read, Write};
use std::path::Path;

use faer::Mat;
use rand::Rng;

use crate::numerics::{self, gemm, ComplexMatrix, NormalEquations};
use crate::rng::{substream, Purpose};
use crate::{Error, Result, C64};

/// Columns per block when streaming samples through the hidden layer.
const BLOCK: usize = 1024;

const MAGIC: &[u8; 8] = b"JFSCEELM";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ElmDims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElmModel {
    /// `hidden × input`.
    pub w_in: ComplexMatrix,
    pub bias: Vec<C64>,
    /// `output × hidden`.
    pub w_out: ComplexMatrix,
    pub dims: ElmDims,
    pub seed: u64,
    pub trained: bool,
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn activate(z: C64) -> C64 {
    C64::new(sigmoid(z.re), sigmoid(z.im))
}

/// Random input layer (uniform on [−1, 1] for each real and imaginary part),
/// zero output layer.
pub fn elm_init(input: usize, hidden: usize, output: usize, seed: u64) -> Result<ElmModel> {
    if input == 0 || hidden == 0 || output == 0 {
        return Err(Error::InvalidArgument(format!(
            "ELM dimensions must be positive (got {input}, {hidden}, {output})"
        )));
    }
    let mut rng = substream(seed, Purpose::Weights, &[]);
    let mut draw = || C64::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
    let mut w_in = ComplexMatrix::zeros(hidden, input);
    for r in 0..hidden {
        for c in 0..input {
            w_in.set(r, c, draw());
        }
    }
    let bias = (0..hidden).map(|_| draw()).collect();
    Ok(ElmModel {
        w_in,
        bias,
        w_out: ComplexMatrix::zeros(output, hidden),
        dims: ElmDims { input, hidden, output },
        seed,
        trained: false,
    })
}

/// `σ(W_in x + b)` with the sigmoid applied to real and imaginary parts separately.
pub fn hidden_map(model: &ElmModel, x: &[C64]) -> Result<Vec<C64>> {
    check_len("ELM input", model.dims.input, x.len())?;
    Ok(model
        .w_in
        .mul_vec(x)
        .into_iter()
        .zip(&model.bias)
        .map(|(z, b)| activate(z + b))
        .collect())
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch { what, expected, actual });
    }
    Ok(())
}

fn stack_columns(rows: usize, columns: &[Vec<C64>], what: &'static str) -> Result<Mat<C64>> {
    for c in columns {
        check_len(what, rows, c.len())?;
    }
    Ok(Mat::from_fn(rows, columns.len(), |r, c| columns[c][r]))
}

impl ElmModel {
    pub fn dims(&self) -> ElmDims {
        self.dims
    }

    /// Hidden-layer outputs for a block of inputs, one column per sample.
    fn hidden_block(&self, inputs: &[Vec<C64>]) -> Result<Mat<C64>> {
        let x = stack_columns(self.dims.input, inputs, "ELM input")?;
        let mut o = gemm(self.w_in.as_faer(), x.as_ref());
        for c in 0..o.ncols() {
            for r in 0..o.nrows() {
                o[(r, c)] = activate(o[(r, c)] + self.bias[r]);
            }
        }
        Ok(o)
    }

    pub fn forward(&self, x: &[C64]) -> Result<Vec<C64>> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        Ok(self.w_out.mul_vec(&hidden_map(self, x)?))
    }

    /// Forward pass over many inputs, processed in column blocks.
    pub fn forward_batch(&self, inputs: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(BLOCK) {
            let o = self.hidden_block(chunk)?;
            let y = gemm(self.w_out.as_faer(), o.as_ref());
            out.extend((0..y.ncols()).map(|c| (0..y.nrows()).map(|r| y[(r, c)]).collect()));
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))?;
        f.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|reason| Error::ModelFormat {
            path: path.to_path_buf(),
            reason,
        })
    }

    /// Header (magic, version, dims, seed, trained flag) followed by `w_in`,
    /// `bias` and `w_out` row-major as little-endian `f64` (re, im) pairs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.dims;
        let n = d.hidden * d.input + d.hidden + d.output * d.hidden;
        let mut out = Vec::with_capacity(8 + 4 + 4 * 8 + 1 + 16 * n);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for v in [d.input as u64, d.hidden as u64, d.output as u64, self.seed] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(self.trained as u8);
        let mut put = |z: C64| {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        };
        self.w_in.to_row_major().into_iter().for_each(&mut put);
        self.bias.iter().copied().for_each(&mut put);
        self.w_out.to_row_major().into_iter().for_each(&mut put);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut cur = bytes;
        let mut take = |n: usize| -> std::result::Result<&[u8], String> {
            if cur.len() < n {
                return Err("truncated".into());
            }
            let (head, tail) = cur.split_at(n);
            cur = tail;
            Ok(head)
        };
        if take(8)? != MAGIC {
            return Err("bad magic".into());
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let mut header = [0u64; 4];
        for h in header.iter_mut() {
            *h = u64::from_le_bytes(take(8)?.try_into().unwrap());
        }
        let [input, hidden, output, seed] = header;
        let trained = match take(1)?[0] {
            0 => false,
            1 => true,
            other => return Err(format!("bad trained flag {other}")),
        };
        let (input, hidden, output) = (input as usize, hidden as usize, output as usize);
        if input == 0 || hidden == 0 || output == 0 {
            return Err("zero dimension".into());
        }
        let count = hidden
            .checked_mul(input)
            .and_then(|a| a.checked_add(hidden))
            .and_then(|a| a.checked_add(output.checked_mul(hidden)?))
            .ok_or("dimensions overflow")?;
        let payload = take(count.checked_mul(16).ok_or("dimensions overflow")?)?;
        let values: Vec<C64> = payload
            .chunks_exact(16)
            .map(|c| {
                C64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        if !cur.is_empty() {
            return Err("trailing bytes".into());
        }
        let (w_in, rest) = values.split_at(hidden * input);
        let (bias, w_out) = rest.split_at(hidden);
        Ok(ElmModel {
            w_in: ComplexMatrix::from_row_major(hidden, input, w_in).map_err(|e| e.to_string())?,
            bias: bias.to_vec(),
            w_out: ComplexMatrix::from_row_major(output, hidden, w_out).map_err(|e| e.to_string())?,
            dims: ElmDims { input, hidden, output },
            seed,
            trained,
        })
    }
}

/// Solves the output layer `W_out = T · O†` over the given samples.
///
/// With no more samples than hidden units the pseudoinverse of `O` is taken
/// directly by SVD. Larger sets stream through the hidden layer in blocks and
/// solve the normal equations `T Oᴴ (O Oᴴ)†` instead.
pub fn elm_train(model: &ElmModel, inputs: &[Vec<C64>], labels: &[Vec<C64>]) -> Result<ElmModel> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("ELM training needs at least one sample".into()));
    }
    check_len("ELM label count", inputs.len(), labels.len())?;
    let d = model.dims;
    let w_out = if inputs.len() <= d.hidden {
        let o = ComplexMatrix::from_faer(model.hidden_block(inputs)?);
        let t = stack_columns(d.output, labels, "ELM label")?;
        let o_pinv = numerics::pinv(&o, None)?;
        ComplexMatrix::from_faer(gemm(t.as_ref(), o_pinv.as_faer()))
    } else {
        let mut eq = NormalEquations::new(d.hidden, d.output);
        for (x, t) in inputs.chunks(BLOCK).zip(labels.chunks(BLOCK)) {
            let o = model.hidden_block(x)?;
            let t = stack_columns(d.output, t, "ELM label")?;
            eq.accumulate(o.as_ref(), t.as_ref())?;
        }
        eq.solve()?
    };
    if !w_out.is_finite() {
        return Err(Error::RankDeficient("ELM output solve produced non-finite weights"));
    }
    Ok(ElmModel {
        w_out,
        trained: true,
        ..model.clone()
    })
}

/// `W_out · σ(W_in x + b)`.
pub fn elm_forward(model: &ElmModel, x: &[C64]) -> Result<Vec<C64>> {
    model.forward(x)
}
