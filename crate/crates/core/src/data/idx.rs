//! Parser for the IDX format used by the MNIST and Fashion-MNIST
//! distributions.

use super::DataError;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq)]
pub enum IdxData {
    /// `count` images of `rows x cols` pixels, flattened row-major and
    /// scaled to `[0, 1]`.
    Images {
        count: usize,
        rows: usize,
        cols: usize,
        pixels: Vec<f64>,
    },
    Labels(Vec<u8>),
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32, DataError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or(DataError::Idx {
            offset,
            reason: "header ends early".into(),
        })
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxData, DataError> {
    let magic = read_u32(bytes, 0)?;
    let dims = match magic {
        IMAGE_MAGIC => 3,
        LABEL_MAGIC => 1,
        other => {
            return Err(DataError::Idx {
                offset: 0,
                reason: format!("unexpected magic 0x{other:08x}"),
            })
        }
    };
    let mut shape = Vec::with_capacity(dims);
    for d in 0..dims {
        shape.push(read_u32(bytes, 4 + 4 * d)? as usize);
    }
    let header = 4 + 4 * dims;
    let payload = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(DataError::Idx {
            offset: 4,
            reason: format!("dimensions {shape:?} overflow"),
        })?;
    let end = header.checked_add(payload).ok_or(DataError::Idx {
        offset: 4,
        reason: format!("dimensions {shape:?} overflow"),
    })?;
    if bytes.len() < end {
        return Err(DataError::Idx {
            offset: bytes.len(),
            reason: format!("payload truncated: header promises {payload} bytes ending at {end}"),
        });
    }
    let body = &bytes[header..end];
    Ok(match magic {
        IMAGE_MAGIC => IdxData::Images {
            count: shape[0],
            rows: shape[1],
            cols: shape[2],
            pixels: body.iter().map(|&p| p as f64 / 255.0).collect(),
        },
        _ => IdxData::Labels(body.to_vec()),
    })
}

#[cfg(test)]
pub(crate) fn encode_images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    for v in [IMAGE_MAGIC, count, rows, cols] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

#[cfg(test)]
pub(crate) fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    for v in [LABEL_MAGIC, labels.len() as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(labels);
    out
}
