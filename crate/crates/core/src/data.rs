//! MNIST ingestion and preprocessing.
//!
//! Raw images arrive in the big-endian IDX container format. From there two
//! preprocessing routes exist: flatten the 28×28 grid to a 784-vector
//! (optionally binarized per stage), or downsample to a 7×7 binary grid by
//! 4×4 block averaging against a 0.3 threshold. Class subsets remap labels
//! to contiguous indices in the order the subset lists them.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Which half of the dataset a container holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

/// Raw images and labels straight from the IDX files. Pixels are kept as
/// bytes; [0,1] scaling happens on materialization.
#[derive(Clone, Debug)]
pub struct RawDataset {
    pub split: Split,
    pub rows: usize,
    pub cols: usize,
    /// `len = n * rows * cols`, row-major per image.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let d = self.rows * self.cols;
        &self.pixels[i * d..(i + 1) * d]
    }

    /// Image scaled to [0,1].
    pub fn image_f64(&self, i: usize) -> Vec<f64> {
        self.image(i).iter().map(|&b| f64::from(b) / 255.0).collect()
    }
}

fn read_u32_be(r: &mut impl Read, what: &str, offset: usize) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Data(format!("{what}: truncated at byte offset {offset}: {e}")))?;
    Ok(u32::from_be_bytes(buf))
}

/// Load an IDX image/label pair into a [`RawDataset`].
///
/// Validates both magic numbers, the declared dimensions, and that image
/// and label counts agree.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<RawDataset> {
    let mut ir = BufReader::new(File::open(images_path).map_err(|e| {
        Error::Data(format!(
            "cannot open images file {}: {e}",
            images_path.display()
        ))
    })?);
    let magic = read_u32_be(&mut ir, "images", 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Data(format!(
            "images file {}: bad magic 0x{magic:08x} at offset 0, expected 0x{IMAGES_MAGIC:08x}",
            images_path.display()
        )));
    }
    let n = read_u32_be(&mut ir, "images", 4)? as usize;
    let rows = read_u32_be(&mut ir, "images", 8)? as usize;
    let cols = read_u32_be(&mut ir, "images", 12)? as usize;
    let mut pixels = vec![0u8; n * rows * cols];
    ir.read_exact(&mut pixels).map_err(|e| {
        Error::Data(format!(
            "images file {}: truncated pixel payload ({n} x {rows}x{cols}): {e}",
            images_path.display()
        ))
    })?;

    let mut lr = BufReader::new(File::open(labels_path).map_err(|e| {
        Error::Data(format!(
            "cannot open labels file {}: {e}",
            labels_path.display()
        ))
    })?);
    let magic = read_u32_be(&mut lr, "labels", 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Data(format!(
            "labels file {}: bad magic 0x{magic:08x} at offset 0, expected 0x{LABELS_MAGIC:08x}",
            labels_path.display()
        )));
    }
    let n_labels = read_u32_be(&mut lr, "labels", 4)? as usize;
    if n_labels != n {
        return Err(Error::Data(format!(
            "count mismatch: {n} images vs {n_labels} labels"
        )));
    }
    let mut labels = vec![0u8; n_labels];
    lr.read_exact(&mut labels).map_err(|e| {
        Error::Data(format!(
            "labels file {}: truncated label payload: {e}",
            labels_path.display()
        ))
    })?;
    if let Some(bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::Data(format!("label {bad} out of range 0-9")));
    }
    Ok(RawDataset {
        split,
        rows,
        cols,
        pixels,
        labels,
    })
}

/// Load the standard file pair for one split from a directory.
pub fn load_split(dir: &Path, split: Split) -> Result<RawDataset> {
    let (img, lab) = match split {
        Split::Train => ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        Split::Test => ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    };
    load_idx(&dir.join(img), &dir.join(lab), split)
}

/// Elementwise binarization: 1 where the pixel strictly exceeds the
/// threshold, else 0.
pub fn binarize(image: &[f64], threshold: f64) -> Vec<f64> {
    image
        .iter()
        .map(|&v| if v > threshold { 1.0 } else { 0.0 })
        .collect()
}

/// Block-average downsampling with thresholded binarization: each output
/// pixel is 1 iff the mean of its `block`×`block` patch strictly exceeds
/// `threshold`.
pub fn downsample_block_avg(
    image: &[f64],
    side: usize,
    block: usize,
    threshold: f64,
) -> Result<Vec<f64>> {
    if image.len() != side * side {
        return Err(Error::Data(format!(
            "image length {} is not {side}x{side}",
            image.len()
        )));
    }
    if block == 0 || side % block != 0 {
        return Err(Error::Data(format!(
            "side {side} is not divisible by block {block}"
        )));
    }
    let out_side = side / block;
    let area = (block * block) as f64;
    let mut out = vec![0.0; out_side * out_side];
    for by in 0..out_side {
        for bx in 0..out_side {
            let mut sum = 0.0;
            for y in 0..block {
                for x in 0..block {
                    sum += image[(by * block + y) * side + bx * block + x];
                }
            }
            if sum / area > threshold {
                out[by * out_side + bx] = 1.0;
            }
        }
    }
    Ok(out)
}

/// Ordered class subset with remapping onto `0..C-1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub classes: Vec<u8>,
}

impl SubsetSpec {
    pub fn new(classes: Vec<u8>) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::Config("subset needs at least 2 classes".into()));
        }
        let mut seen = [false; 10];
        for &c in &classes {
            if c > 9 {
                return Err(Error::Config(format!("class {c} out of range 0-9")));
            }
            if seen[c as usize] {
                return Err(Error::Config(format!("class {c} listed twice")));
            }
            seen[c as usize] = true;
        }
        Ok(Self { classes })
    }

    pub fn all_digits() -> Self {
        Self {
            classes: (0..10).collect(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Remapped index of an original label, if the label is in the subset.
    pub fn remap(&self, label: u8) -> Option<usize> {
        self.classes.iter().position(|&c| c == label)
    }
}

/// Filter a raw dataset to the subset's classes, preserving sample order.
pub fn select_classes(ds: &RawDataset, spec: &SubsetSpec) -> Result<RawDataset> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for i in 0..ds.len() {
        if spec.remap(ds.labels[i]).is_some() {
            pixels.extend_from_slice(ds.image(i));
            labels.push(ds.labels[i]);
        }
    }
    if labels.is_empty() {
        return Err(Error::Data("class subset selected no samples".into()));
    }
    Ok(RawDataset {
        split: ds.split,
        rows: ds.rows,
        cols: ds.cols,
        pixels,
        labels,
    })
}

/// Base preprocessing route for a profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PreprocMode {
    /// Flatten to `side*side` real values in [0,1]; stages may binarize.
    Flatten,
    /// Block-average to a binary grid (the 7×7 route).
    BlockDownsample { block: usize, threshold: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocConfig {
    pub mode: PreprocMode,
}

impl PreprocConfig {
    pub fn validate(&self) -> Result<()> {
        if let PreprocMode::BlockDownsample { block, threshold } = self.mode {
            if !(threshold > 0.0 && threshold < 1.0) {
                return Err(Error::Config(format!(
                    "block threshold must be in (0,1), got {threshold}"
                )));
            }
            if block == 0 {
                return Err(Error::Config("block size must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Per-stage input encoding applied on top of the preprocessed base.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum InputEncoding {
    /// Pixel values as-is ([0,1] reals; already 0/1 on the downsample route).
    Real,
    /// 1 where the value strictly exceeds the threshold.
    Binarized { threshold: f64 },
}

/// Preprocessed dataset ready for training: per-sample byte vectors plus
/// remapped labels. Bytes are raw grayscale (flatten route) or 0/1
/// (downsample route); stage encodings materialize `f64` views on demand.
#[derive(Clone, Debug)]
pub struct EncodedDataset {
    pub dim: usize,
    pub num_classes: usize,
    /// Original digit of each class index.
    pub class_digits: Vec<u8>,
    /// `len = n * dim`.
    samples: Vec<u8>,
    /// `true` when sample bytes are 0..=255 grayscale; `false` when 0/1.
    grayscale: bool,
    pub labels: Vec<usize>,
}

impl EncodedDataset {
    /// Apply subset selection and the base preprocessing route.
    pub fn build(ds: &RawDataset, spec: &SubsetSpec, preproc: &PreprocConfig) -> Result<Self> {
        preproc.validate()?;
        let side = ds.rows;
        if ds.cols != side {
            return Err(Error::Data("images must be square".into()));
        }
        let mut labels = Vec::new();
        let mut samples = Vec::new();
        let (dim, grayscale) = match preproc.mode {
            PreprocMode::Flatten => (side * side, true),
            PreprocMode::BlockDownsample { block, .. } => {
                if side % block != 0 {
                    return Err(Error::Data(format!(
                        "side {side} not divisible by block {block}"
                    )));
                }
                ((side / block) * (side / block), false)
            }
        };
        for i in 0..ds.len() {
            let Some(mapped) = spec.remap(ds.labels[i]) else {
                continue;
            };
            labels.push(mapped);
            match preproc.mode {
                PreprocMode::Flatten => samples.extend_from_slice(ds.image(i)),
                PreprocMode::BlockDownsample { block, threshold } => {
                    let img = ds.image_f64(i);
                    let down = downsample_block_avg(&img, side, block, threshold)?;
                    samples.extend(down.iter().map(|&v| v as u8));
                }
            }
        }
        if labels.is_empty() {
            return Err(Error::Data("no samples after subset selection".into()));
        }
        Ok(Self {
            dim,
            num_classes: spec.num_classes(),
            class_digits: spec.classes.clone(),
            samples,
            grayscale,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_bytes(&self, i: usize) -> &[u8] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    /// Materialize sample `i` under a stage encoding.
    pub fn materialize(&self, i: usize, encoding: InputEncoding) -> Vec<f64> {
        let bytes = self.sample_bytes(i);
        match (encoding, self.grayscale) {
            (InputEncoding::Real, true) => bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
            (InputEncoding::Real, false) => bytes.iter().map(|&b| f64::from(b)).collect(),
            (InputEncoding::Binarized { threshold }, true) => bytes
                .iter()
                .map(|&b| {
                    if f64::from(b) / 255.0 > threshold {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
            (InputEncoding::Binarized { threshold }, false) => bytes
                .iter()
                .map(|&b| if f64::from(b) > threshold { 1.0 } else { 0.0 })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_idx(
        dir: &Path,
        n: usize,
        rows: usize,
        cols: usize,
        pixel_of: impl Fn(usize, usize) -> u8,
        labels: &[u8],
        bad_label_magic: bool,
    ) -> (std::path::PathBuf, std::path::PathBuf) {
        let ip = dir.join("imgs");
        let lp = dir.join("labs");
        let mut f = File::create(&ip).unwrap();
        f.write_all(&IMAGES_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&(n as u32).to_be_bytes()).unwrap();
        f.write_all(&(rows as u32).to_be_bytes()).unwrap();
        f.write_all(&(cols as u32).to_be_bytes()).unwrap();
        for i in 0..n {
            for p in 0..rows * cols {
                f.write_all(&[pixel_of(i, p)]).unwrap();
            }
        }
        let mut f = File::create(&lp).unwrap();
        let magic = if bad_label_magic {
            0xdeadbeefu32
        } else {
            LABELS_MAGIC
        };
        f.write_all(&magic.to_be_bytes()).unwrap();
        f.write_all(&(labels.len() as u32).to_be_bytes()).unwrap();
        f.write_all(labels).unwrap();
        (ip, lp)
    }

    #[test]
    fn idx_round_trip_and_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_idx(
            dir.path(),
            3,
            4,
            4,
            |i, p| ((i * 16 + p) % 256) as u8,
            &[7, 0, 3],
            false,
        );
        let ds = load_idx(&ip, &lp, Split::Train).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.rows, 4);
        assert_eq!(ds.image(1)[0], 16);
        assert!((ds.image_f64(1)[0] - 16.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn bad_label_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_idx(dir.path(), 1, 2, 2, |_, _| 0, &[1], true);
        let err = load_idx(&ip, &lp, Split::Train).unwrap_err();
        assert!(err.to_string().contains("bad magic"));
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_idx(dir.path(), 2, 2, 2, |_, _| 0, &[1, 2, 3], false);
        assert!(load_idx(&ip, &lp, Split::Train).is_err());
    }

    #[test]
    fn binarize_is_strict() {
        assert_eq!(
            binarize(&[0.0, 0.5, 0.51, 1.0], 0.5),
            vec![0.0, 0.0, 1.0, 1.0]
        );
        assert_eq!(binarize(&[0.0; 4], 0.5), vec![0.0; 4]);
    }

    #[test]
    fn block_average_cases() {
        // all-zero image stays zero
        let img = vec![0.0; 28 * 28];
        let out = downsample_block_avg(&img, 28, 4, 0.3).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));

        // one 4x4 block with 5 pixels at 1.0: mean 0.3125 > 0.3 -> 1
        let mut img = vec![0.0; 28 * 28];
        for p in 0..5 {
            img[(p / 4) * 28 + (p % 4)] = 1.0;
        }
        let out = downsample_block_avg(&img, 28, 4, 0.3).unwrap();
        assert_eq!(out[0], 1.0);
        assert!(out[1..].iter().all(|&v| v == 0.0));

        // mean exactly at the threshold stays 0 (strict >): use 0.25 which
        // is exact in binary, with 4 of 16 pixels set.
        let mut img = vec![0.0; 28 * 28];
        for p in 0..4 {
            img[(p / 4) * 28 + (p % 4)] = 1.0;
        }
        let out = downsample_block_avg(&img, 28, 4, 0.25).unwrap();
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn tiled_pattern_survives_downsampling() {
        // Tile a binary 7x7 pattern by 4x4 and downsample back.
        let mut pattern = vec![0.0; 49];
        for (i, p) in pattern.iter_mut().enumerate() {
            *p = f64::from(i % 3 == 0);
        }
        let mut img = vec![0.0; 28 * 28];
        for y in 0..28 {
            for x in 0..28 {
                img[y * 28 + x] = pattern[(y / 4) * 7 + x / 4];
            }
        }
        let out = downsample_block_avg(&img, 28, 4, 0.3).unwrap();
        assert_eq!(out, pattern);
    }

    #[test]
    fn subset_selection_remaps_in_spec_order() {
        let dir = tempfile::tempdir().unwrap();
        let labels = [2u8, 5, 3, 4, 2, 9, 4];
        let (ip, lp) = write_idx(dir.path(), 7, 2, 2, |i, _| i as u8, &labels, false);
        let ds = load_idx(&ip, &lp, Split::Test).unwrap();
        let spec = SubsetSpec::new(vec![2, 3, 4]).unwrap();
        let sub = select_classes(&ds, &spec).unwrap();
        assert_eq!(sub.labels, vec![2, 3, 4, 2, 4]);
        // original order preserved; image payload follows the labels
        assert_eq!(sub.image(0)[0], 0);
        assert_eq!(sub.image(1)[0], 2);

        let enc = EncodedDataset::build(
            &ds,
            &spec,
            &PreprocConfig {
                mode: PreprocMode::Flatten,
            },
        )
        .unwrap();
        assert_eq!(enc.labels, vec![0, 1, 2, 0, 2]);
        assert_eq!(enc.num_classes, 3);
    }

    #[test]
    fn empty_subset_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_idx(dir.path(), 2, 2, 2, |_, _| 0, &[1, 1], false);
        let ds = load_idx(&ip, &lp, Split::Test).unwrap();
        let spec = SubsetSpec::new(vec![3, 4]).unwrap();
        assert!(select_classes(&ds, &spec).is_err());
    }

    #[test]
    fn remap_is_a_bijection_onto_contiguous_indices() {
        let spec = SubsetSpec::new(vec![5, 0, 7]).unwrap();
        let mapped: Vec<usize> = spec
            .classes
            .iter()
            .map(|&c| spec.remap(c).unwrap())
            .collect();
        assert_eq!(mapped, vec![0, 1, 2]);
        assert_eq!(spec.remap(3), None);
    }
}
