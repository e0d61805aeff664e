//! Binary model files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content                                                  |
//! |-------|----------------------------------------------------------|
//! | 4     | magic `DCRN`                                             |
//! | 4     | format version `u32` (currently 1)                       |
//! | 20    | rows, cols, input_dim, hidden_dim, neighbor_outputs (`u32`)|
//! | 4     | direction, aggregation, use_bias, init mode (`u8` each)   |
//! | 8     | ff_neurons, classes (`u32`)                              |
//! | rest  | every parameter block as `f64` LE, in [`ParamSet`] order |
//!
//! Block order is: per direction (forward first) the input, recurrent and
//! neighbor matrices for input gate, forget gate, output gate, candidate,
//! then the gate biases if enabled; then the head's feed-forward weight,
//! feed-forward bias, output weight and output bias. Matrices are row-major.

use std::path::Path;

use crate::error::Result;
use crate::fsio::{put_u32, read_bytes, write_atomic, Reader};
use crate::grid::{Aggregation, DcrnnModel, Direction, GridConfig, ModelSpec};
use crate::numkernel::ScaleMode;
use crate::params::ParamSet;

pub const MODEL_MAGIC: &[u8; 4] = b"DCRN";
pub const MODEL_VERSION: u32 = 1;

pub fn to_bytes(model: &DcrnnModel) -> Vec<u8> {
    let spec = model.spec();
    let g = &spec.grid;
    let mut out = Vec::with_capacity(40 + 8 * model.num_params());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    for v in [
        g.rows,
        g.cols,
        g.input_dim,
        g.hidden_dim,
        g.neighbor_outputs,
    ] {
        put_u32(&mut out, v);
    }
    out.push(match g.direction {
        Direction::Unidirectional => 0,
        Direction::Bidirectional => 1,
    });
    out.push(match g.aggregation {
        Aggregation::FullHidden => 0,
        Aggregation::LastUnitOnly => 1,
    });
    out.push(u8::from(g.use_bias));
    out.push(match spec.init {
        ScaleMode::FanBalanced => 0,
        ScaleMode::Fixed => 1,
    });
    put_u32(&mut out, spec.ff_neurons);
    put_u32(&mut out, spec.classes);
    for (_, block) in model.blocks() {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(buf: &[u8]) -> Result<DcrnnModel> {
    let mut r = Reader::new(buf, "model");
    if r.take(4)? != MODEL_MAGIC {
        return Err(r.error("bad magic"));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(r.error(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let direction = match r.u8()? {
        0 => Direction::Unidirectional,
        1 => Direction::Bidirectional,
        v => return Err(r.error(format!("unknown direction tag {v}"))),
    };
    let aggregation = match r.u8()? {
        0 => Aggregation::FullHidden,
        1 => Aggregation::LastUnitOnly,
        v => return Err(r.error(format!("unknown aggregation tag {v}"))),
    };
    let use_bias = match r.u8()? {
        0 => false,
        1 => true,
        v => return Err(r.error(format!("bad bias flag {v}"))),
    };
    let init = match r.u8()? {
        0 => ScaleMode::FanBalanced,
        1 => ScaleMode::Fixed,
        v => return Err(r.error(format!("unknown init tag {v}"))),
    };
    let ff_neurons = r.u32()? as usize;
    let classes = r.u32()? as usize;
    let [rows, cols, input_dim, hidden_dim, neighbor_outputs] = dims;
    let spec = ModelSpec {
        grid: GridConfig {
            rows,
            cols,
            input_dim,
            hidden_dim,
            neighbor_outputs,
            direction,
            aggregation,
            use_bias,
        },
        ff_neurons,
        classes,
        init,
    };
    let mut model = DcrnnModel::zeros(spec)?;
    let expected = 8 * model.num_params();
    if buf.len() != 40 + expected {
        return Err(r.error(format!(
            "header implies {expected} parameter bytes, file has {}",
            buf.len().saturating_sub(40)
        )));
    }
    for (_, block) in model.blocks_mut() {
        for v in block.iter_mut() {
            *v = r.f64()?;
        }
    }
    r.finish()?;
    Ok(model)
}

pub fn save(model: &DcrnnModel, path: &Path) -> Result<()> {
    write_atomic(path, &to_bytes(model))
}

pub fn load(path: &Path) -> Result<DcrnnModel> {
    from_bytes(&read_bytes(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::SeededRng;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let m = DcrnnModel::random(ModelSpec::eeg(), &mut SeededRng::new(1)).unwrap();
        let b = to_bytes(&m);
        assert_eq!(&b[..4], b"DCRN");
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(&b[8..12], &4u32.to_le_bytes());
        assert_eq!(&b[12..16], &5u32.to_le_bytes());
        assert_eq!(b[28], 1);
        assert_eq!(&b[32..36], &50u32.to_le_bytes());
        assert_eq!(b.len(), 40 + 8 * m.num_params());
        let first = m.blocks()[0].1[0];
        assert_eq!(&b[40..48], &first.to_le_bytes());
    }

    #[test]
    fn corrupt_files_rejected() {
        let m = DcrnnModel::random(ModelSpec::fault(), &mut SeededRng::new(2)).unwrap();
        let b = to_bytes(&m);
        assert!(from_bytes(&b[..b.len() - 8]).is_err());
        let mut tag = b.clone();
        tag[28] = 7;
        assert!(from_bytes(&tag).is_err());
        let mut magic = b.clone();
        magic[3] = b'X';
        assert!(from_bytes(&magic).is_err());
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dcrn");
        let m = DcrnnModel::random(ModelSpec::eeg(), &mut SeededRng::new(3)).unwrap();
        save(&m, &path).unwrap();
        assert!(load(&path).unwrap().bit_eq(&m));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            seed in any::<u64>(),
            rows in 1usize..4,
            cols in 1usize..4,
            hidden in 1usize..4,
            bi in any::<bool>(),
            last in any::<bool>(),
            bias in any::<bool>(),
        ) {
            let spec = ModelSpec {
                grid: GridConfig {
                    rows, cols, input_dim: 2, hidden_dim: hidden,
                    neighbor_outputs: 1,
                    direction: if bi { Direction::Bidirectional } else { Direction::Unidirectional },
                    aggregation: if last { Aggregation::LastUnitOnly } else { Aggregation::FullHidden },
                    use_bias: bias,
                },
                ff_neurons: 3,
                classes: 2,
                init: ScaleMode::Fixed,
            };
            let m = DcrnnModel::random(spec, &mut SeededRng::new(seed)).unwrap();
            let back = from_bytes(&to_bytes(&m)).unwrap();
            prop_assert!(back.bit_eq(&m));
            prop_assert_eq!(back.spec(), m.spec());
        }
    }
}
