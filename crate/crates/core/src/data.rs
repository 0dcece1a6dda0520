//! IDX ingestion, binarization and synthetic datasets.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::BinaryMatrix;

/// Unsigned-byte IDX tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    /// Leading dimension (number of items).
    pub fn items(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    /// Product of the trailing dimensions.
    pub fn item_len(&self) -> usize {
        self.dims.iter().skip(1).product()
    }
}

const UBYTE: u8 = 0x08;

pub fn parse_idx(bytes: &[u8], origin: &str) -> Result<IdxArray> {
    let format = |message: String| Error::Format {
        path: origin.into(),
        message,
    };
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            path: origin.into(),
            expected: 4,
            actual: bytes.len() as u64,
        });
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(format(format!("bad IDX magic {:02x?}", &bytes[..4])));
    }
    if bytes[2] != UBYTE {
        return Err(format(format!("unsupported IDX element type 0x{:02x}", bytes[2])));
    }
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(format("IDX file declares zero dimensions".into()));
    }
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(Error::Truncated {
            path: origin.into(),
            expected: header as u64,
            actual: bytes.len() as u64,
        });
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|k| u32::from_be_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize)
        .collect();
    let payload = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
        .ok_or_else(|| format("IDX dimensions overflow".into()))?;
    let expected = payload + header as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::Truncated {
            path: origin.into(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..].to_vec(),
    })
}

pub fn load_idx(path: &Path) -> Result<IdxArray> {
    let bytes = fs::read(path)?;
    parse_idx(&bytes, &path.display().to_string())
}

pub fn encode_idx(array: &IdxArray) -> Result<Vec<u8>> {
    if array.dims.is_empty() || array.dims.len() > 255 {
        return Err(Error::invalid("IDX needs 1..=255 dimensions"));
    }
    let n: usize = array.dims.iter().product();
    if n != array.data.len() {
        return Err(Error::dim("IDX payload", n, array.data.len()));
    }
    let mut out = vec![0, 0, UBYTE, array.dims.len() as u8];
    for &d in &array.dims {
        let d = u32::try_from(d).map_err(|_| Error::invalid("IDX dimension exceeds u32"))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    Ok(out)
}

pub fn write_idx(path: &Path, array: &IdxArray) -> Result<()> {
    fs::write(path, encode_idx(array)?)?;
    Ok(())
}

/// `1` where `byte/255 > threshold`, one row per item.
pub fn binarize(images: &IdxArray, threshold: f64) -> Result<BinaryMatrix> {
    let scaled: Vec<f64> = images.data.iter().map(|&b| b as f64 / 255.0).collect();
    binarize_scaled(images.items(), images.item_len(), &scaled, threshold)
}

/// Same rule on intensities already in `[0, 1]`.
pub fn binarize_scaled(rows: usize, cols: usize, values: &[f64], threshold: f64) -> Result<BinaryMatrix> {
    BinaryMatrix::new(rows, cols, values.iter().map(|&x| (x > threshold) as u8).collect())
}

/// Which MNIST split to read from a directory of IDX files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn images_file(self) -> &'static str {
        match self {
            Split::Train => "train-images-idx3-ubyte",
            Split::Test => "t10k-images-idx3-ubyte",
        }
    }
}

/// Loads and binarizes (threshold 0.5) one split from `dir`.
pub fn load_mnist(dir: &Path, split: Split) -> Result<BinaryMatrix> {
    let images = load_idx(&dir.join(split.images_file()))?;
    if images.dims.len() != 3 {
        return Err(Error::Format {
            path: dir.join(split.images_file()),
            message: format!("expected a 3-d image tensor, got dims {:?}", images.dims),
        });
    }
    binarize(&images, 0.5)
}

/// Bars-and-stripes patterns on an `side × side` grid: pick an orientation,
/// then switch each full row (or column) on with probability 1/2.
pub fn synthetic_bars<R: Rng + ?Sized>(side: usize, count: usize, rng: &mut R) -> Result<BinaryMatrix> {
    if side == 0 || count == 0 {
        return Err(Error::invalid("synthetic_bars needs side >= 1 and count >= 1"));
    }
    let mut out = BinaryMatrix::zeros(count, side * side);
    for r in 0..count {
        let horizontal = rng.random_bool(0.5);
        let lines: Vec<bool> = (0..side).map(|_| rng.random_bool(0.5)).collect();
        let row = out.row_mut(r);
        for y in 0..side {
            for x in 0..side {
                let on = if horizontal { lines[y] } else { lines[x] };
                row[y * side + x] = on as u8;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn threshold_is_strict() {
        let img = IdxArray {
            dims: vec![1, 3],
            data: vec![128, 127, 0],
        };
        assert_eq!(binarize(&img, 0.5).unwrap().row(0), &[1, 0, 0]);
    }

    #[test]
    fn idx_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imgs");
        let a = IdxArray {
            dims: vec![3, 2, 2],
            data: (0..12).map(|k| (k * 21) as u8).collect(),
        };
        write_idx(&path, &a).unwrap();
        let raw = fs::read(&path).unwrap();
        assert_eq!(&raw[..4], &[0, 0, 8, 3]);
        assert_eq!(load_idx(&path).unwrap(), a);
        assert_eq!(encode_idx(&load_idx(&path).unwrap()).unwrap(), raw);

        match parse_idx(&raw[..raw.len() - 5], "t") {
            Err(Error::Truncated { expected, actual, .. }) => assert_eq!((expected, actual), (28, 23)),
            other => panic!("{other:?}"),
        }
        let mut bad = raw.clone();
        bad[2] = 0x0d;
        assert!(matches!(parse_idx(&bad, "t"), Err(Error::Format { .. })));
        bad[0] = 1;
        assert!(matches!(parse_idx(&bad, "t"), Err(Error::Format { .. })));
    }

    #[test]
    fn bars_family() {
        let mut rng = stream(3, Purpose::Dataset, 0, 0);
        let m = synthetic_bars(2, 400, &mut rng).unwrap();
        let family: HashSet<Vec<u8>> = [
            [0, 0, 0, 0],
            [1, 1, 1, 1],
            [1, 1, 0, 0],
            [0, 0, 1, 1],
            [1, 0, 1, 0],
            [0, 1, 0, 1],
        ]
        .iter()
        .map(|r| r.to_vec())
        .collect();
        let seen: HashSet<Vec<u8>> = m.iter_rows().map(<[u8]>::to_vec).collect();
        assert!(seen.is_subset(&family));
        assert_eq!(seen.len(), 6);
        let again = synthetic_bars(2, 400, &mut stream(3, Purpose::Dataset, 0, 0)).unwrap();
        assert_eq!(m, again);
    }

    proptest! {
        #[test]
        fn binarize_is_idempotent(values in proptest::collection::vec(0.0f64..=1.0, 12)) {
            let once = binarize_scaled(3, 4, &values, 0.5).unwrap();
            let as_real: Vec<f64> = once.as_slice().iter().map(|&b| b as f64).collect();
            prop_assert_eq!(binarize_scaled(3, 4, &as_real, 0.5).unwrap(), once);
        }

        #[test]
        fn idx_bytes_round_trip(n in 1usize..5, h in 1usize..5, w in 1usize..5, seed in any::<u64>()) {
            let mut rng = stream(seed, Purpose::Misc, 0, 0);
            let a = IdxArray { dims: vec![n, h, w], data: (0..n * h * w).map(|_| rand::Rng::random(&mut rng)).collect() };
            let bytes = encode_idx(&a).unwrap();
            prop_assert_eq!(&parse_idx(&bytes, "p").unwrap(), &a);
        }
    }
}
