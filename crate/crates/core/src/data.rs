//! IDX dataset loading, per-node partitioning and synthetic datasets.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{Error, Result};

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad IDX magic: expected {expected}, found {found}")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated IDX payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("IDX read failed: {0}")]
    Io(#[from] io::Error),
}

/// Feature rows with class labels. Images loaded from IDX are scaled to
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub images: Array2<f32>,
    pub labels: Vec<u8>,
}

impl LabeledDataset {
    pub fn new(images: Array2<f32>, labels: Vec<u8>) -> Result<Self> {
        if images.nrows() != labels.len() {
            return Err(IdxError::CountMismatch {
                images: images.nrows(),
                labels: labels.len(),
            }
            .into());
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.ncols()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            images: self.images.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Features widened to `f64` for the model.
    pub fn features_f64(&self) -> Array2<f64> {
        self.images.mapv(f64::from)
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &y in &self.labels {
            seen[y as usize] = true;
        }
        (0..=255u8).filter(|&c| seen[c as usize]).collect()
    }
}

fn open_maybe_gz(path: &Path) -> io::Result<Box<dyn Read>> {
    let mut file = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic)?;
    let head = io::Cursor::new(magic[..n].to_vec());
    let chained = head.chain(file);
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(GzDecoder::new(chained)))
    } else {
        Ok(Box::new(chained))
    }
}

fn read_be_u32(bytes: &[u8], at: usize) -> std::result::Result<u32, IdxError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or(IdxError::Truncated {
            expected: at + 4,
            found: bytes.len(),
        })
}

/// Parses an image IDX stream into `N × (rows·cols)` rows scaled by 1/255.
pub fn parse_idx_images<R: Read>(mut r: R) -> std::result::Result<Array2<f32>, IdxError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let magic = read_be_u32(&bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(IdxError::BadMagic {
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let n = read_be_u32(&bytes, 4)? as usize;
    let rows = read_be_u32(&bytes, 8)? as usize;
    let cols = read_be_u32(&bytes, 12)? as usize;
    let dim = rows * cols;
    let expected = 16 + n * dim;
    if bytes.len() < expected {
        return Err(IdxError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let pixels = bytes[16..expected]
        .iter()
        .map(|&b| b as f32 / 255.0)
        .collect();
    Ok(Array2::from_shape_vec((n, dim), pixels).expect("sized above"))
}

pub fn parse_idx_labels<R: Read>(mut r: R) -> std::result::Result<Vec<u8>, IdxError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let magic = read_be_u32(&bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(IdxError::BadMagic {
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    let n = read_be_u32(&bytes, 4)? as usize;
    if bytes.len() < 8 + n {
        return Err(IdxError::Truncated {
            expected: 8 + n,
            found: bytes.len(),
        });
    }
    Ok(bytes[8..8 + n].to_vec())
}

/// Loads an image/label IDX pair; either file may be gzip-compressed.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let images = parse_idx_images(open_maybe_gz(images_path).map_err(IdxError::Io)?)?;
    let labels = parse_idx_labels(open_maybe_gz(labels_path).map_err(IdxError::Io)?)?;
    LabeledDataset::new(images, labels)
}

/// Writes `ds` as an IDX pair with square images, quantizing features to
/// bytes. Gzips when `gzip` is set.
pub fn write_idx(
    ds: &LabeledDataset,
    images_path: &Path,
    labels_path: &Path,
    gzip: bool,
) -> Result<()> {
    let side = (ds.dim() as f64).sqrt() as usize;
    if side * side != ds.dim() {
        return Err(Error::shape("square image", ds.dim()));
    }
    let mut img = Vec::with_capacity(16 + ds.images.len());
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    img.extend_from_slice(&(side as u32).to_be_bytes());
    img.extend_from_slice(&(side as u32).to_be_bytes());
    img.extend(
        ds.images
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    lab.extend_from_slice(&ds.labels);
    for (path, bytes) in [(images_path, img), (labels_path, lab)] {
        let file = BufWriter::new(File::create(path)?);
        if gzip {
            let mut enc = GzEncoder::new(file, Compression::default());
            enc.write_all(&bytes)?;
            enc.finish()?.flush()?;
        } else {
            let mut file = file;
            file.write_all(&bytes)?;
            file.flush()?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum PartitionScheme {
    Iid,
    /// Each node samples only from `classes_per_node` consecutive classes.
    LabelSkew {
        classes_per_node: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionSpec {
    pub per_node: usize,
    #[serde(flatten)]
    pub scheme: PartitionScheme,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            per_node: 10,
            scheme: PartitionScheme::Iid,
        }
    }
}

/// Splits `ds` into `m` disjoint shards of `spec.per_node` sample indices.
pub fn partition<R: Rng + ?Sized>(
    ds: &LabeledDataset,
    m: usize,
    spec: &PartitionSpec,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if spec.per_node == 0 || m == 0 {
        return Err(Error::InfeasiblePartition(
            "need at least one node and one sample per node".into(),
        ));
    }
    let needed = m * spec.per_node;
    if needed > ds.len() {
        return Err(Error::InfeasiblePartition(format!(
            "{m} nodes x {} samples exceeds {} available",
            spec.per_node,
            ds.len()
        )));
    }
    match spec.scheme {
        PartitionScheme::Iid => {
            let picked = rand::seq::index::sample(rng, ds.len(), needed).into_vec();
            Ok(picked
                .chunks(spec.per_node)
                .map(<[usize]>::to_vec)
                .collect())
        }
        PartitionScheme::LabelSkew { classes_per_node } => {
            let classes = ds.classes();
            if classes_per_node == 0 || classes_per_node > classes.len() {
                return Err(Error::InfeasiblePartition(format!(
                    "classes_per_node {classes_per_node} not in 1..={}",
                    classes.len()
                )));
            }
            // shuffled pools per class, consumed front to back
            let mut pools: Vec<Vec<usize>> = classes
                .iter()
                .map(|&c| {
                    let mut pool: Vec<usize> =
                        (0..ds.len()).filter(|&i| ds.labels[i] == c).collect();
                    pool.shuffle(rng);
                    pool
                })
                .collect();
            let mut shards = Vec::with_capacity(m);
            for node in 0..m {
                let owned: Vec<usize> = (0..classes_per_node)
                    .map(|k| (node * classes_per_node + k) % classes.len())
                    .collect();
                let mut shard = Vec::with_capacity(spec.per_node);
                for s in 0..spec.per_node {
                    // round-robin over the owned classes, skipping exhausted ones
                    let pick = (0..owned.len())
                        .map(|k| owned[(s + k) % owned.len()])
                        .find(|&c| !pools[c].is_empty())
                        .ok_or_else(|| {
                            Error::InfeasiblePartition(format!("classes for node {node} exhausted"))
                        })?;
                    shard.push(pools[pick].pop().expect("non-empty"));
                }
                shards.push(shard);
            }
            Ok(shards)
        }
    }
}

/// `node,sample_index` rows.
pub fn write_manifest<W: Write>(w: W, shards: &[Vec<usize>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["node", "sample_index"])?;
    for (node, shard) in shards.iter().enumerate() {
        for &i in shard {
            out.write_record([node.to_string(), i.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Isotropic unit-variance Gaussian blobs centered at `separation · e_k`.
pub fn synthetic_blobs<R: Rng + ?Sized>(
    classes: usize,
    n_per_class: usize,
    dim: usize,
    separation: f64,
    rng: &mut R,
) -> Result<LabeledDataset> {
    if classes == 0 || n_per_class == 0 {
        return Err(Error::EmptyShard);
    }
    if dim < classes || classes > 256 {
        return Err(Error::InvalidParameter {
            name: "dim",
            reason: format!("need dim >= classes ({classes}), got {dim}"),
        });
    }
    let n = classes * n_per_class;
    let mut images = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for (row, mut x) in images.outer_iter_mut().enumerate() {
        let c = row % classes;
        for v in x.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        x[c] += separation as f32;
        labels.push(c as u8);
    }
    LabeledDataset::new(images, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn idx_images(n: u32, side: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = IMAGE_MAGIC.to_be_bytes().to_vec();
        for v in [n, side, side] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    fn toy(n: usize, classes: u8) -> LabeledDataset {
        LabeledDataset::new(
            Array2::from_shape_fn((n, 4), |(i, j)| ((i * 4 + j) % 256) as f32 / 255.0),
            (0..n).map(|i| (i % classes as usize) as u8).collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_white_image() {
        let img = parse_idx_images(&idx_images(1, 28, &[255; 784])[..]).unwrap();
        assert_eq!(img.dim(), (1, 784));
        assert!(img.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn distinct_errors() {
        let labels_as_images = {
            let mut b = IMAGE_MAGIC.to_be_bytes().to_vec();
            b.extend_from_slice(&1u32.to_be_bytes());
            b.push(3);
            b
        };
        assert!(matches!(
            parse_idx_labels(&labels_as_images[..]),
            Err(IdxError::BadMagic {
                expected: 2049,
                found: 2051
            })
        ));
        assert!(matches!(
            parse_idx_images(&idx_images(2, 2, &[0; 5])[..]),
            Err(IdxError::Truncated {
                expected: 24,
                found: 21
            })
        ));
        assert!(matches!(
            parse_idx_images(&[0u8, 0][..]),
            Err(IdxError::Truncated { .. })
        ));
        let err = LabeledDataset::new(Array2::zeros((2, 4)), vec![1]).unwrap_err();
        assert!(matches!(
            err,
            Error::Idx(IdxError::CountMismatch {
                images: 2,
                labels: 1
            })
        ));
    }

    #[test]
    fn round_trip_plain_and_gzip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy(7, 3);
        for gzip in [false, true] {
            let (ip, lp) = (
                dir.path().join(format!("i{gzip}")),
                dir.path().join(format!("l{gzip}")),
            );
            write_idx(&ds, &ip, &lp, gzip).unwrap();
            let back = load_idx(&ip, &lp).unwrap();
            assert_eq!(back, ds);
        }
        assert!(matches!(
            load_idx(&dir.path().join("missing"), &dir.path().join("missing")),
            Err(Error::Idx(IdxError::Io(_)))
        ));
    }

    #[test]
    fn iid_partition_examples() {
        let ds = toy(500, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shards = partition(&ds, 23, &PartitionSpec::default(), &mut rng).unwrap();
        assert_eq!(shards.len(), 23);
        assert!(shards.iter().all(|s| s.len() == 10));
        let all: HashSet<usize> = shards.iter().flatten().copied().collect();
        assert_eq!(all.len(), 230);

        let whole = PartitionSpec {
            per_node: 500,
            ..Default::default()
        };
        let one = partition(&ds, 1, &whole, &mut rng).unwrap();
        let mut idx = one[0].clone();
        idx.sort_unstable();
        assert_eq!(idx, (0..500).collect::<Vec<_>>());

        assert!(partition(&ds, 51, &PartitionSpec::default(), &mut rng).is_err());
        let again = partition(
            &ds,
            23,
            &PartitionSpec::default(),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(again, shards);
    }

    #[test]
    fn label_skew_is_homogeneous() {
        let ds = toy(1000, 10);
        let spec = PartitionSpec {
            per_node: 10,
            scheme: PartitionScheme::LabelSkew {
                classes_per_node: 1,
            },
        };
        let shards = partition(&ds, 23, &spec, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let all: HashSet<usize> = shards.iter().flatten().copied().collect();
        assert_eq!(all.len(), 230);
        for s in &shards {
            assert!(s.iter().all(|&i| ds.labels[i] == ds.labels[s[0]]));
        }
        let spec = PartitionSpec {
            per_node: 200,
            scheme: PartitionScheme::LabelSkew {
                classes_per_node: 1,
            },
        };
        assert!(partition(&ds, 2, &spec, &mut ChaCha8Rng::seed_from_u64(2)).is_err());
    }

    #[test]
    fn manifest_rows() {
        let mut out = Vec::new();
        write_manifest(&mut out, &[vec![4, 1], vec![7]]).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "node,sample_index\n0,4\n0,1\n1,7\n"
        );
    }

    #[test]
    fn blobs() {
        let a = synthetic_blobs(3, 5, 4, 100.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = synthetic_blobs(3, 5, 4, 100.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 15);
        // nearest-center readout separates them
        for (x, &y) in a.images.outer_iter().zip(&a.labels) {
            let best = (0..3).max_by(|&i, &j| x[i].total_cmp(&x[j])).unwrap();
            assert_eq!(best, y as usize);
        }
        assert!(synthetic_blobs(3, 0, 4, 1.0, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
    }

    proptest! {
        #[test]
        fn scaling_preserves_pixel_order(a in any::<u8>(), b in any::<u8>()) {
            let img = parse_idx_images(&idx_images(1, 1, &[a])[..]).unwrap();
            let img2 = parse_idx_images(&idx_images(1, 1, &[b])[..]).unwrap();
            prop_assert_eq!(a.cmp(&b), img[(0, 0)].partial_cmp(&img2[(0, 0)]).unwrap());
        }
    }
}
