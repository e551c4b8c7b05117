//! Little-endian binary formats for tensors (`SPT1`), ensembles (`SPE1`)
//! and subspaces (`SPS1`), and the CSV form of a decomposition.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::decompose::DecompositionResult;
use crate::error::{Result, SpmError};
use crate::subspace::TensorSubspace;
use crate::tensor::{checked_pow, ComponentEnsemble, SymTensor, MAX_ORDER};

const TENSOR_MAGIC: &[u8; 4] = b"SPT1";
const ENSEMBLE_MAGIC: &[u8; 4] = b"SPE1";
const SUBSPACE_MAGIC: &[u8; 4] = b"SPS1";

/// Reject headers that would ask for absurd allocations.
const MAX_ENTRIES: usize = 1 << 28;

fn format_err(kind: &'static str, reason: impl Into<String>) -> SpmError {
    SpmError::Format {
        kind,
        reason: reason.into(),
    }
}

fn read_magic<R: Read>(r: &mut R, magic: &[u8; 4], kind: &'static str) -> Result<()> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    if &buf != magic {
        return Err(format_err(kind, format!("bad magic {buf:?}")));
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf) as usize)
}

fn read_f64s<R: Read>(r: &mut R, count: usize, kind: &'static str) -> Result<Vec<f64>> {
    if count > MAX_ENTRIES {
        return Err(format_err(kind, format!("{count} entries exceeds the size limit")));
    }
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => format_err(kind, "truncated payload"),
        _ => SpmError::Io(e),
    })?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn expect_eof<R: Read>(r: &mut R, kind: &'static str) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(format_err(kind, "trailing bytes after payload")),
    }
}

fn write_u32<W: Write>(w: &mut W, v: usize, kind: &'static str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| format_err(kind, format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64s<'a, W: Write>(w: &mut W, values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_tensor<W: Write>(w: &mut W, t: &SymTensor) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    write_u32(w, t.order(), "tensor")?;
    write_u32(w, t.dim(), "tensor")?;
    write_f64s(w, t.data())
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<SymTensor> {
    read_magic(r, TENSOR_MAGIC, "tensor")?;
    let m = read_u32(r)?;
    let d = read_u32(r)?;
    if m == 0 || m > MAX_ORDER || d == 0 {
        return Err(format_err("tensor", format!("unsupported shape: order {m}, dim {d}")));
    }
    let len = checked_pow(d, m).map_err(|_| format_err("tensor", "size overflow"))?;
    let data = read_f64s(r, len, "tensor")?;
    expect_eof(r, "tensor")?;
    let t = SymTensor::from_data_unchecked(d, m, data)?;
    if !t.is_symmetric(1e-12) {
        return Err(format_err("tensor", "payload is not symmetric"));
    }
    Ok(t)
}

pub fn write_ensemble<W: Write>(w: &mut W, e: &ComponentEnsemble) -> Result<()> {
    w.write_all(ENSEMBLE_MAGIC)?;
    write_u32(w, e.dim(), "ensemble")?;
    write_u32(w, e.order(), "ensemble")?;
    write_u32(w, e.rank(), "ensemble")?;
    write_f64s(w, e.weights().as_slice())?;
    write_f64s(w, e.components().as_slice())
}

pub fn read_ensemble<R: Read>(r: &mut R) -> Result<ComponentEnsemble> {
    read_magic(r, ENSEMBLE_MAGIC, "ensemble")?;
    let d = read_u32(r)?;
    let m = read_u32(r)?;
    let k = read_u32(r)?;
    let weights = read_f64s(r, k, "ensemble")?;
    let comps = read_f64s(r, d.saturating_mul(k), "ensemble")?;
    expect_eof(r, "ensemble")?;
    ComponentEnsemble::new(m, DVector::from_vec(weights), DMatrix::from_vec(d, k, comps))
}

/// Writes the basis and, when present, the singular values (zeros otherwise).
pub fn write_subspace<W: Write>(w: &mut W, s: &TensorSubspace) -> Result<()> {
    w.write_all(SUBSPACE_MAGIC)?;
    write_u32(w, s.dim(), "subspace")?;
    write_u32(w, s.half_order(), "subspace")?;
    write_u32(w, s.rank(), "subspace")?;
    match s.singular_values() {
        Some(v) => write_f64s(w, v)?,
        None => write_f64s(w, &vec![0.0; s.rank()])?,
    }
    write_f64s(w, s.basis().as_slice())
}

pub fn read_subspace<R: Read>(r: &mut R) -> Result<TensorSubspace> {
    read_magic(r, SUBSPACE_MAGIC, "subspace")?;
    let d = read_u32(r)?;
    let n = read_u32(r)?;
    let k = read_u32(r)?;
    if n == 0 || n > MAX_ORDER || d == 0 {
        return Err(format_err("subspace", format!("unsupported shape: order {n}, dim {d}")));
    }
    let rows = checked_pow(d, n).map_err(|_| format_err("subspace", "size overflow"))?;
    let values = read_f64s(r, k, "subspace")?;
    let basis = read_f64s(r, rows.saturating_mul(k), "subspace")?;
    expect_eof(r, "subspace")?;
    TensorSubspace::from_basis(d, n, DMatrix::from_vec(rows, k, basis))?.with_singular_values(values)
}

macro_rules! path_io {
    ($save:ident, $load:ident, $write:ident, $read:ident, $ty:ty) => {
        pub fn $save(path: impl AsRef<Path>, value: &$ty) -> Result<()> {
            let mut w = BufWriter::new(File::create(path)?);
            $write(&mut w, value)?;
            w.flush()?;
            Ok(())
        }

        pub fn $load(path: impl AsRef<Path>) -> Result<$ty> {
            $read(&mut BufReader::new(File::open(path)?))
        }
    };
}

path_io!(save_tensor, load_tensor, write_tensor, read_tensor, SymTensor);
path_io!(save_ensemble, load_ensemble, write_ensemble, read_ensemble, ComponentEnsemble);
path_io!(save_subspace, load_subspace, write_subspace, read_subspace, TensorSubspace);

/// One row per component: `k, lambda_hat, objective, restarts, a_hat_0, ...`.
pub fn decomposition_csv(res: &DecompositionResult) -> String {
    let d = res.components.first().map_or(0, |c| c.len());
    let mut out = String::from("k,lambda_hat,objective,restarts");
    for j in 0..d {
        out.push_str(&format!(",a_hat_{j}"));
    }
    out.push('\n');
    for (k, a) in res.components.iter().enumerate() {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{}",
            k + 1,
            res.weights[k],
            res.objectives[k],
            res.restarts[k]
        ));
        for v in a.iter() {
            out.push_str(&format!(",{v:.16e}"));
        }
        out.push('\n');
    }
    out
}
