//! Binary tensor container for debugging dumps and checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"WVT1"
//! ndim    u32
//! dims    ndim x u32
//! data    product(dims) x f32 (little-endian), row-major
//! ```
//!
//! Files may concatenate several tensors; readers consume them in order.

use std::io::{Read, Write};

use ndarray::{Array2, Array3, ArrayD, IxDyn};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"WVT1";

pub fn write_tensor<W: Write>(w: &mut W, dims: &[usize], data: &[f32]) -> Result<()> {
    let n: usize = dims.iter().product();
    if n != data.len() {
        return Err(Error::Shape(format!(
            "tensor container: dims {:?} do not match payload length {}",
            dims,
            data.len()
        )));
    }
    w.write_all(MAGIC)?;
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<(Vec<usize>, Vec<f32>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Data(format!(
            "tensor container: bad magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let ndim = u32::from_le_bytes(buf4) as usize;
    if ndim > 8 {
        return Err(Error::Data(format!("tensor container: ndim {ndim} > 8")));
    }
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        r.read_exact(&mut buf4)?;
        dims.push(u32::from_le_bytes(buf4) as usize);
    }
    let n: usize = dims.iter().product();
    let mut data = vec![0f32; n];
    for v in &mut data {
        r.read_exact(&mut buf4)?;
        *v = f32::from_le_bytes(buf4);
    }
    Ok((dims, data))
}

pub fn write_array2<W: Write>(w: &mut W, a: &Array2<f32>) -> Result<()> {
    let dims = [a.dim().0, a.dim().1];
    let owned;
    let slice = match a.as_slice() {
        Some(s) => s,
        None => {
            owned = a.iter().copied().collect::<Vec<_>>();
            &owned
        }
    };
    write_tensor(w, &dims, slice)
}

pub fn write_array3<W: Write>(w: &mut W, a: &Array3<f32>) -> Result<()> {
    let d = a.dim();
    let owned;
    let slice = match a.as_slice() {
        Some(s) => s,
        None => {
            owned = a.iter().copied().collect::<Vec<_>>();
            &owned
        }
    };
    write_tensor(w, &[d.0, d.1, d.2], slice)
}

pub fn read_arrayd<R: Read>(r: &mut R) -> Result<ArrayD<f32>> {
    let (dims, data) = read_tensor(r)?;
    ArrayD::from_shape_vec(IxDyn(&dims), data)
        .map_err(|e| Error::Data(format!("tensor container: {e}")))
}
