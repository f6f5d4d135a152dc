//! Datasets and image I/O.
//!
//! Three data sources feed the experiments: IDX image/label files (the
//! standard MNIST container format), a procedural seven-segment digit
//! generator that serves as a self-contained desk-scale stand-in for MNIST,
//! and low-dimensional Gaussian blobs for cheap tests. All images are
//! row-major grayscale tensors with values in `[0, 1]`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read as IoRead, Write as IoWrite};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::{Interval, Tensor};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Which split a dataset represents. Purely a tag; the loader does not
/// enforce anything about it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Images plus integer labels.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub samples: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub split_tag: Split,
}

impl LabeledDataset {
    /// Validates matching lengths, uniform sample shape, and the `[0, 1]`
    /// pixel range.
    pub fn new(samples: Vec<Tensor>, labels: Vec<usize>, split_tag: Split) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("dataset samples"));
        }
        if samples.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        let dim = samples[0].len();
        for s in &samples {
            if s.len() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "samples of mixed lengths {} and {}",
                    dim,
                    s.len()
                )));
            }
            if !s.data.iter().all(|v| (0.0..=1.0).contains(v)) {
                return Err(Error::ShapeMismatch(
                    "sample values outside [0, 1]".into(),
                ));
            }
        }
        Ok(LabeledDataset {
            samples,
            labels,
            split_tag,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// One more than the largest label present.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }
}

fn read_u32_be(r: &mut impl IoRead, path: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| Error::MalformedFile {
        path: path.to_string(),
        reason: "unexpected end of file in header".into(),
    })?;
    Ok(u32::from_be_bytes(buf))
}

/// Load an IDX image file and its companion IDX label file.
///
/// The format is the classic MNIST container: big-endian magic number
/// (`0x00000803` for images, `0x00000801` for labels), big-endian u32
/// dimensions, then raw u8 payload. Pixels are scaled to `[0, 1]` by
/// dividing by 255.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<LabeledDataset> {
    let img_display = images_path.display().to_string();
    let mut r = BufReader::new(File::open(images_path)?);
    let magic = read_u32_be(&mut r, &img_display)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            path: img_display,
            got: magic,
            expected: IDX_IMAGES_MAGIC,
        });
    }
    let count = read_u32_be(&mut r, &img_display)? as usize;
    let rows = read_u32_be(&mut r, &img_display)? as usize;
    let cols = read_u32_be(&mut r, &img_display)? as usize;
    let pixel_count = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::MalformedFile {
            path: img_display.clone(),
            reason: "image dimensions overflow".into(),
        })?;
    let mut pixels = vec![0u8; pixel_count];
    r.read_exact(&mut pixels).map_err(|_| Error::MalformedFile {
        path: img_display.clone(),
        reason: format!("expected {pixel_count} pixel bytes"),
    })?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::MalformedFile {
            path: img_display,
            reason: "trailing bytes after pixel data".into(),
        });
    }

    let lbl_display = labels_path.display().to_string();
    let mut r = BufReader::new(File::open(labels_path)?);
    let magic = read_u32_be(&mut r, &lbl_display)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            path: lbl_display,
            got: magic,
            expected: IDX_LABELS_MAGIC,
        });
    }
    let label_count = read_u32_be(&mut r, &lbl_display)? as usize;
    if label_count != count {
        return Err(Error::MalformedFile {
            path: lbl_display,
            reason: format!("{label_count} labels for {count} images"),
        });
    }
    let mut raw_labels = vec![0u8; label_count];
    r.read_exact(&mut raw_labels)
        .map_err(|_| Error::MalformedFile {
            path: lbl_display.clone(),
            reason: format!("expected {label_count} label bytes"),
        })?;
    if r.read(&mut trailing)? != 0 {
        return Err(Error::MalformedFile {
            path: lbl_display,
            reason: "trailing bytes after label data".into(),
        });
    }

    let dim = rows * cols;
    let samples = pixels
        .chunks_exact(dim)
        .map(|chunk| Tensor {
            shape: vec![dim],
            data: chunk.iter().map(|&b| b as f64 / 255.0).collect(),
        })
        .collect();
    let labels = raw_labels.into_iter().map(|b| b as usize).collect();
    LabeledDataset::new(samples, labels, split)
}

/// Write a dataset as a pair of IDX files (inverse of [`load_idx`]).
/// Pixels are quantized by `round(v * 255)` with halves rounding up.
pub fn write_idx(
    images_path: &Path,
    labels_path: &Path,
    data: &LabeledDataset,
    rows: usize,
    cols: usize,
) -> Result<()> {
    let dim = rows * cols;
    for s in &data.samples {
        if s.len() != dim {
            return Err(Error::ShapeMismatch(format!(
                "sample length {} does not match {rows}x{cols}",
                s.len()
            )));
        }
    }
    let mut w = BufWriter::new(File::create(images_path)?);
    w.write_all(&IDX_IMAGES_MAGIC.to_be_bytes())?;
    w.write_all(&(data.len() as u32).to_be_bytes())?;
    w.write_all(&(rows as u32).to_be_bytes())?;
    w.write_all(&(cols as u32).to_be_bytes())?;
    for s in &data.samples {
        let bytes: Vec<u8> = s.data.iter().map(|&v| quantize_byte(v)).collect();
        w.write_all(&bytes)?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(labels_path)?);
    w.write_all(&IDX_LABELS_MAGIC.to_be_bytes())?;
    w.write_all(&(data.len() as u32).to_be_bytes())?;
    let bytes: Vec<u8> = data.labels.iter().map(|&l| l as u8).collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Quantize a `[0, 1]` value to a byte, rounding halves up.
fn quantize_byte(v: f64) -> u8 {
    let clamped = v.clamp(0.0, 1.0);
    // f64::round rounds halves away from zero; values here are nonnegative,
    // so this is round-half-up.
    (clamped * 255.0).round() as u8
}

/// Dump a grayscale image as a binary PGM (P5) file, the simplest viewable
/// format that needs no external dependency.
pub fn dump_image(x: &Tensor, width: usize, height: usize, path: &Path) -> Result<()> {
    if x.len() != width * height {
        return Err(Error::ShapeMismatch(format!(
            "image of length {} does not match {width}x{height}",
            x.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{width} {height}\n255\n")?;
    let bytes: Vec<u8> = x.data.iter().map(|&v| quantize_byte(v)).collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Gaussian blob dataset for cheap tests: `num_classes` random centers in
/// `[0.2, 0.8]^dim`, samples at center + N(0, spread), clamped to the unit
/// box. Labels cycle through the classes.
///
/// The class centers depend only on `seed`, while the noise stream also
/// depends on `split`: calling with the same seed and both splits yields a
/// train and a test set over the *same* geometry with disjoint draws.
pub fn synthetic_blobs(
    n: usize,
    num_classes: usize,
    dim: usize,
    spread: f64,
    seed: u64,
    split: Split,
) -> LabeledDataset {
    assert!(n > 0 && num_classes > 0 && dim > 0, "blob parameters must be positive");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..dim).map(|_| rng.gen_range(0.2..0.8)).collect())
        .collect();
    if split == Split::Test {
        rng.set_stream(1);
    }
    let noise = Normal::new(0.0, spread).expect("spread must be finite and nonnegative");
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % num_classes;
        let data: Vec<f64> = centers[class]
            .iter()
            .map(|&c| (c + noise.sample(&mut rng)).clamp(0.0, 1.0))
            .collect();
        samples.push(Tensor {
            shape: vec![dim],
            data,
        });
        labels.push(class);
    }
    LabeledDataset {
        samples,
        labels,
        split_tag: split,
    }
}

// Seven-segment display geometry on the unit square. Each segment is a line
// segment; digits light a subset of them.
//
//      A
//    F   B
//      G
//    E   C
//      D
const SEGMENTS: [((f64, f64), (f64, f64)); 7] = [
    ((0.20, 0.15), (0.80, 0.15)), // A: top
    ((0.80, 0.15), (0.80, 0.50)), // B: upper right
    ((0.80, 0.50), (0.80, 0.85)), // C: lower right
    ((0.20, 0.85), (0.80, 0.85)), // D: bottom
    ((0.20, 0.50), (0.20, 0.85)), // E: lower left
    ((0.20, 0.15), (0.20, 0.50)), // F: upper left
    ((0.20, 0.50), (0.80, 0.50)), // G: middle
];

/// Segment masks per digit, bit i = SEGMENTS[i] (A = bit 0 ... G = bit 6).
const DIGIT_MASKS: [u8; 10] = [
    0b0111111, // 0: ABCDEF
    0b0000110, // 1: BC
    0b1011011, // 2: ABDEG
    0b1001111, // 3: ABCDG
    0b1100110, // 4: BCFG
    0b1101101, // 5: ACDFG
    0b1111101, // 6: ACDEFG
    0b0000111, // 7: ABC
    0b1111111, // 8: all
    0b1101111, // 9: ABCDFG
];

const DIGIT_SIDE: usize = 28;

/// Pixel width/height of the procedural digit images (28, matching MNIST).
pub const DIGIT_IMAGE_SIDE: usize = DIGIT_SIDE;

fn point_segment_distance(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((px - cx) * (px - cx) + (py - cy) * (py - cy)).sqrt()
}

fn render_digit(digit: usize, rng: &mut ChaCha20Rng) -> Tensor {
    let dx = rng.gen_range(-0.08..0.08);
    let dy = rng.gen_range(-0.08..0.08);
    let scale = rng.gen_range(0.75..1.0);
    let thickness = rng.gen_range(0.045..0.075);
    let intensity = rng.gen_range(0.8..1.0);
    let noise = Normal::new(0.0, 0.03).unwrap();
    let mask = DIGIT_MASKS[digit];

    let mut data = Vec::with_capacity(DIGIT_SIDE * DIGIT_SIDE);
    for row in 0..DIGIT_SIDE {
        for col in 0..DIGIT_SIDE {
            let u = (col as f64 + 0.5) / DIGIT_SIDE as f64;
            let v = (row as f64 + 0.5) / DIGIT_SIDE as f64;
            // Undo shift and scale to get canonical display coordinates.
            let cu = (u - 0.5 - dx) / scale + 0.5;
            let cv = (v - 0.5 - dy) / scale + 0.5;
            let mut value: f64 = 0.0;
            for (i, seg) in SEGMENTS.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    let d = point_segment_distance(cu, cv, seg.0, seg.1);
                    let glow = intensity * (-(d / thickness) * (d / thickness)).exp();
                    value = value.max(glow);
                }
            }
            data.push(value);
        }
    }
    for v in data.iter_mut() {
        *v = (*v + noise.sample(rng)).clamp(0.0, 1.0);
    }
    Tensor {
        shape: vec![DIGIT_SIDE * DIGIT_SIDE],
        data,
    }
}

/// Procedural 28x28 seven-segment digit dataset: a self-contained stand-in
/// for handwritten digits. Each sample draws a random shift, scale, stroke
/// thickness, and intensity, renders the digit's segments with a Gaussian
/// stroke profile, and adds pixel noise — so each class lives on a
/// continuous low-dimensional manifold in 784-dimensional space. Labels
/// cycle 0..=9.
pub fn synthetic_digits(n: usize, seed: u64, split: Split) -> LabeledDataset {
    assert!(n > 0, "dataset size must be positive");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let digit = i % 10;
        samples.push(render_digit(digit, &mut rng));
        labels.push(digit);
    }
    LabeledDataset {
        samples,
        labels,
        split_tag: split,
    }
}

/// A sample selected for attack: its dataset index, image, and true label.
#[derive(Debug, Clone)]
pub struct TargetSample {
    pub id: usize,
    pub x: Tensor,
    pub label: usize,
}

/// Select `n` correctly classified samples, uniformly at random from the
/// seeded shuffle of all correctly classified indices, returned in ascending
/// dataset order. Errors if fewer than `n` samples are classified correctly.
pub fn select_attack_targets(
    net: &Network,
    data: &LabeledDataset,
    n: usize,
    seed: u64,
) -> Result<Vec<TargetSample>> {
    if n == 0 {
        return Err(Error::EmptyInput("attack target count"));
    }
    let mut correct: Vec<usize> = Vec::new();
    for (i, (x, &label)) in data.samples.iter().zip(&data.labels).enumerate() {
        if net.predict(x)? == label {
            correct.push(i);
        }
    }
    if correct.len() < n {
        return Err(Error::InsufficientTargets {
            requested: n,
            available: correct.len(),
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    use rand::seq::SliceRandom;
    correct.shuffle(&mut rng);
    let mut chosen: Vec<usize> = correct.into_iter().take(n).collect();
    chosen.sort_unstable();
    Ok(chosen
        .into_iter()
        .map(|id| TargetSample {
            id,
            x: data.samples[id].clone(),
            label: data.labels[id],
        })
        .collect())
}

/// The box every dataset in this crate lives in.
pub const PIXEL_BOX: Interval = Interval::UNIT;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec, TrainConfig};

    #[test]
    fn idx_loader_reads_hand_built_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("imgs.idx");
        let labels = dir.path().join("lbls.idx");
        // Two 2x2 images: [0, 51, 102, 153] and [204, 255, 0, 255].
        let mut img_bytes = Vec::new();
        img_bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        img_bytes.extend_from_slice(&2u32.to_be_bytes());
        img_bytes.extend_from_slice(&2u32.to_be_bytes());
        img_bytes.extend_from_slice(&2u32.to_be_bytes());
        img_bytes.extend_from_slice(&[0, 51, 102, 153, 204, 255, 0, 255]);
        std::fs::write(&images, &img_bytes).unwrap();
        let mut lbl_bytes = Vec::new();
        lbl_bytes.extend_from_slice(&0x0000_0801u32.to_be_bytes());
        lbl_bytes.extend_from_slice(&2u32.to_be_bytes());
        lbl_bytes.extend_from_slice(&[7, 3]);
        std::fs::write(&labels, &lbl_bytes).unwrap();

        let ds = load_idx(&images, &labels, Split::Test).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.labels, vec![7, 3]);
        assert_eq!(ds.samples[0].data, vec![0.0, 0.2, 0.4, 0.6]);
        assert_eq!(ds.samples[1].data, vec![0.8, 1.0, 0.0, 1.0]);
        assert_eq!(ds.split_tag, Split::Test);
    }

    #[test]
    fn idx_loader_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("imgs.idx");
        let labels = dir.path().join("lbls.idx");
        let mut img_bytes = Vec::new();
        img_bytes.extend_from_slice(&0x0000_0801u32.to_be_bytes()); // label magic in image file
        img_bytes.extend_from_slice(&0u32.to_be_bytes());
        img_bytes.extend_from_slice(&1u32.to_be_bytes());
        img_bytes.extend_from_slice(&1u32.to_be_bytes());
        std::fs::write(&images, &img_bytes).unwrap();
        std::fs::write(&labels, b"").unwrap();
        match load_idx(&images, &labels, Split::Train) {
            Err(Error::BadMagic { got, expected, .. }) => {
                assert_eq!(got, 0x0000_0801);
                assert_eq!(expected, 0x0000_0803);
            }
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn idx_loader_rejects_count_mismatch_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synthetic_blobs(4, 2, 4, 0.05, 0, Split::Train);
        let images = dir.path().join("imgs.idx");
        let labels = dir.path().join("lbls.idx");
        write_idx(&images, &labels, &ds, 2, 2).unwrap();

        // Corrupt the label count.
        let mut lbl = std::fs::read(&labels).unwrap();
        lbl[7] = 9;
        let labels_bad = dir.path().join("bad.idx");
        std::fs::write(&labels_bad, &lbl).unwrap();
        assert!(matches!(
            load_idx(&images, &labels_bad, Split::Train),
            Err(Error::MalformedFile { .. })
        ));

        // Truncate the image payload.
        let img = std::fs::read(&images).unwrap();
        let images_bad = dir.path().join("badimg.idx");
        std::fs::write(&images_bad, &img[..img.len() - 3]).unwrap();
        assert!(matches!(
            load_idx(&images_bad, &labels, Split::Train),
            Err(Error::MalformedFile { .. })
        ));
    }

    #[test]
    fn idx_roundtrip_preserves_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synthetic_digits(6, 3, Split::Train);
        let images = dir.path().join("imgs.idx");
        let labels = dir.path().join("lbls.idx");
        write_idx(&images, &labels, &ds, 28, 28).unwrap();
        let back = load_idx(&images, &labels, Split::Train).unwrap();
        assert_eq!(back.labels, ds.labels);
        for (orig, loaded) in ds.samples.iter().zip(&back.samples) {
            for (&o, &l) in orig.data.iter().zip(&loaded.data) {
                // One quantization step of error at most.
                assert!((o - l).abs() <= 0.5 / 255.0 + 1e-12);
                // And a second roundtrip is exact.
                assert_eq!(quantize_byte(l), quantize_byte(o));
            }
        }
    }

    #[test]
    fn quantization_rounds_halves_up() {
        assert_eq!(quantize_byte(0.0), 0);
        assert_eq!(quantize_byte(1.0), 255);
        assert_eq!(quantize_byte(127.5 / 255.0), 128);
        assert_eq!(quantize_byte(-0.3), 0);
        assert_eq!(quantize_byte(1.7), 255);
    }

    #[test]
    fn pgm_dump_writes_expected_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let x = Tensor::vector(vec![0.0, 0.5, 1.0, 0.25]).unwrap();
        dump_image(&x, 2, 2, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let mut expected = b"P5\n2 2\n255\n".to_vec();
        expected.extend_from_slice(&[0, 128, 255, 64]);
        assert_eq!(bytes, expected);
    }

    #[test]
    fn pgm_dump_rejects_mismatched_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let x = Tensor::vector(vec![0.0; 5]).unwrap();
        assert!(dump_image(&x, 2, 2, &dir.path().join("x.pgm")).is_err());
    }

    #[test]
    fn blobs_are_deterministic_and_in_range() {
        let a = synthetic_blobs(50, 3, 6, 0.1, 7, Split::Train);
        let b = synthetic_blobs(50, 3, 6, 0.1, 7, Split::Train);
        let c = synthetic_blobs(50, 3, 6, 0.1, 8, Split::Train);
        assert_eq!(a.samples[10].data, b.samples[10].data);
        assert_ne!(a.samples[10].data, c.samples[10].data);
        for (s, &l) in a.samples.iter().zip(&a.labels) {
            assert!(l < 3);
            assert!(s.data.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_eq!(a.num_classes(), 3);
    }

    #[test]
    fn digits_have_mnist_shape_and_cycling_labels() {
        let ds = synthetic_digits(25, 1, Split::Train);
        assert_eq!(ds.len(), 25);
        for (i, (s, &l)) in ds.samples.iter().zip(&ds.labels).enumerate() {
            assert_eq!(s.len(), 784);
            assert_eq!(l, i % 10);
            assert!(s.data.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn digits_are_seed_deterministic() {
        let a = synthetic_digits(10, 42, Split::Train);
        let b = synthetic_digits(10, 42, Split::Train);
        let c = synthetic_digits(10, 43, Split::Train);
        assert_eq!(a.samples[3].data, b.samples[3].data);
        assert_ne!(a.samples[3].data, c.samples[3].data);
    }

    #[test]
    fn different_digit_classes_render_differently() {
        // distinct digits must be far apart relative to same-digit jitter.
        let ds = synthetic_digits(40, 5, Split::Train);
        let one_a = &ds.samples[1]; // label 1
        let one_b = &ds.samples[11]; // label 1 again
        let eight = &ds.samples[8]; // label 8
        let same = one_a.euclidean_distance(one_b).unwrap();
        let diff = one_a.euclidean_distance(eight).unwrap();
        assert!(
            diff > same,
            "between-class distance {diff} should exceed within-class {same}"
        );
    }

    #[test]
    fn target_selection_returns_correctly_classified_sorted_ids() {
        let data = synthetic_blobs(100, 2, 4, 0.08, 3, Split::Test);
        let specs = [
            LayerSpec {
                in_dim: 4,
                out_dim: 8,
                activation: Activation::Relu,
            },
            LayerSpec {
                in_dim: 8,
                out_dim: 2,
                activation: Activation::Identity,
            },
        ];
        let net = crate::nn::train(
            Network::new(&specs, 0).unwrap(),
            &data,
            &TrainConfig {
                learning_rate: 0.2,
                epochs: 30,
                batch_size: 16,
                seed: 1,
            },
        )
        .unwrap();
        let targets = select_attack_targets(&net, &data, 20, 9).unwrap();
        assert_eq!(targets.len(), 20);
        let ids: Vec<usize> = targets.iter().map(|t| t.id).collect();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(ids, sorted, "ids must be ascending and unique");
        for t in &targets {
            assert_eq!(net.predict(&t.x).unwrap(), t.label);
            assert_eq!(t.label, data.labels[t.id]);
        }
        // Same seed, same selection; different seed, (almost surely) different.
        let again = select_attack_targets(&net, &data, 20, 9).unwrap();
        assert_eq!(
            ids,
            again.iter().map(|t| t.id).collect::<Vec<_>>()
        );
    }

    #[test]
    fn target_selection_errors_when_not_enough_correct() {
        let data = synthetic_blobs(10, 2, 4, 0.08, 3, Split::Test);
        // An untrained net classifies ~half correctly at best.
        let specs = [
            LayerSpec {
                in_dim: 4,
                out_dim: 4,
                activation: Activation::Relu,
            },
            LayerSpec {
                in_dim: 4,
                out_dim: 2,
                activation: Activation::Identity,
            },
        ];
        let net = Network::new(&specs, 0).unwrap();
        match select_attack_targets(&net, &data, 11, 0) {
            Err(Error::InsufficientTargets { requested, .. }) => assert_eq!(requested, 11),
            other => panic!("expected InsufficientTargets, got {other:?}"),
        }
    }

    #[test]
    fn dataset_constructor_validates() {
        let t = Tensor::vector(vec![0.5, 0.5]).unwrap();
        assert!(LabeledDataset::new(vec![], vec![], Split::Train).is_err());
        assert!(LabeledDataset::new(vec![t.clone()], vec![0, 1], Split::Train).is_err());
        let bad = Tensor::vector(vec![1.5, 0.0]).unwrap();
        assert!(LabeledDataset::new(vec![bad], vec![0], Split::Train).is_err());
        assert!(LabeledDataset::new(vec![t], vec![0], Split::Train).is_ok());
    }
}
