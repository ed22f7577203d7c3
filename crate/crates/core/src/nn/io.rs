//! Binary parameter format.
//!
//! ```text
//! magic      4 bytes  "TLMP"
//! version    u32 LE   1
//! activation u8       0 = tanh, 1 = relu
//! n_sizes    u32 LE
//! sizes      n_sizes × u32 LE   (input width first)
//! n_params   u64 LE
//! params     n_params × f64 LE  (order of Mlp::params_flat)
//! ```

use std::io::{Read, Write};

use super::{Activation, Mlp, NnError};

const MAGIC: &[u8; 4] = b"TLMP";
const VERSION: u32 = 1;

pub fn write_mlp<W: Write>(net: &Mlp, mut w: W) -> Result<(), NnError> {
    let sizes = net.sizes();
    let params = net.params_flat();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[net.activation().tag()])?;
    w.write_all(&(sizes.len() as u32).to_le_bytes())?;
    for s in sizes {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for p in params {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], NnError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_mlp<R: Read>(mut r: R) -> Result<Mlp, NnError> {
    if &read_array::<4, _>(&mut r)? != MAGIC {
        return Err(NnError::Format("missing magic".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(NnError::Format(format!("unsupported version {version}")));
    }
    let [tag] = read_array::<1, _>(&mut r)?;
    let activation =
        Activation::from_tag(tag).ok_or_else(|| NnError::Format(format!("activation tag {tag}")))?;
    let n_sizes = u32::from_le_bytes(read_array(&mut r)?) as usize;
    if !(2..=64).contains(&n_sizes) {
        return Err(NnError::Format(format!("{n_sizes} layer sizes")));
    }
    let sizes = (0..n_sizes)
        .map(|_| read_array::<4, _>(&mut r).map(|b| u32::from_le_bytes(b) as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let mut net = Mlp::zeros(&sizes, activation);
    let n_params = u64::from_le_bytes(read_array(&mut r)?) as usize;
    if n_params != net.param_count() {
        return Err(NnError::Format(format!(
            "{n_params} parameters for sizes {sizes:?} (expected {})",
            net.param_count()
        )));
    }
    let params = (0..n_params)
        .map(|_| read_array::<8, _>(&mut r).map(f64::from_le_bytes))
        .collect::<Result<Vec<_>, _>>()?;
    net.set_params_flat(&params)?;
    Ok(net)
}
