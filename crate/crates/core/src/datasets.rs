//! The two 100-dimensional datasets, deterministic splits and the
//! likelihood baselines they are compared against.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{s, Array1, ArrayView1, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{bernoulli_xent_unchecked, sample_bernoulli, Matrix, RngState, Vector};

pub const IMAGE_SIDE: usize = 10;
pub const DIM: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const TEA_SIZE: usize = 243;
pub const CMNIST_SIZE: usize = 12_000;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const MNIST_SIDE: usize = 28;
const CROP_START: usize = 9;

/// A dataset of soft binary vectors: every entry is a probability in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftDataset {
    pub name: String,
    /// One sample per row.
    pub samples: Matrix,
}

impl SoftDataset {
    pub fn new(name: impl Into<String>, samples: Matrix) -> Result<Self> {
        if samples.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidArgument(
                "dataset entries must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn sample(&self, i: usize) -> ArrayView1<'_, f64> {
        self.samples.row(i)
    }

    /// Subset by row indices, keeping the name.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            samples: self.samples.select(Axis(0), indices),
        }
    }

    /// Replace every soft value by a Bernoulli draw with that probability.
    pub fn binarized(&self, rng: RngState) -> Self {
        let mut r = rng.rng();
        Self {
            name: self.name.clone(),
            samples: sample_bernoulli(&self.samples, &mut r),
        }
    }

    /// One sample per line, `dim` comma-separated decimal values.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        for row in self.samples.rows() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(name: impl Into<String>, input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(input);
        let mut values = Vec::new();
        let mut dim = None;
        let mut rows = 0;
        for rec in r.records() {
            let rec = rec?;
            match dim {
                None => dim = Some(rec.len()),
                Some(d) if d != rec.len() => {
                    return Err(Error::DimensionMismatch {
                        context: "dataset csv row",
                        expected: d,
                        actual: rec.len(),
                    })
                }
                _ => {}
            }
            for field in rec.iter() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::InvalidArgument(format!("not a number in dataset csv: {field:?}"))
                })?;
                values.push(v);
            }
            rows += 1;
        }
        let dim = dim.unwrap_or(0);
        let samples = Matrix::from_shape_vec((rows, dim), values)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Self::new(name, samples)
    }

    /// Write `<dir>/<name>.csv` plus the `<dir>/<name>.json` sidecar.
    pub fn save(&self, dir: &Path, seed: Option<u64>) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{}.csv", self.name));
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(csv_path)?))?;
        let meta = DatasetMeta {
            name: self.name.clone(),
            dim: self.dim(),
            count: self.len(),
            seed,
        };
        let mut json = serde_json::to_string_pretty(&meta)?;
        json.push('\n');
        std::fs::write(dir.join(format!("{}.json", self.name)), json)?;
        Ok(())
    }

    /// Load a dataset CSV; the name comes from the sidecar when present,
    /// otherwise from the file stem.
    pub fn load(csv_path: &Path) -> Result<Self> {
        let sidecar = csv_path.with_extension("json");
        let name = if sidecar.exists() {
            let meta: DatasetMeta = serde_json::from_slice(&std::fs::read(&sidecar)?)?;
            meta.name
        } else {
            csv_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "data".into())
        };
        Self::read_csv(
            name,
            std::io::BufReader::new(std::fs::File::open(csv_path)?),
        )
    }
}

/// JSON sidecar written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub dim: usize,
    pub count: usize,
    pub seed: Option<u64>,
}

/// The 243 images of a teapot and five cups sharing ten rows of liquid.
///
/// The left 10×5 block is the teapot, the right block holds five 2×5 cups
/// stacked top to bottom. Each cup holds 0, 1 or 2 rows; the teapot holds
/// whatever remains of the ten rows. Samples are ordered by the base-3
/// counter over the cup levels, the last cup being the fastest digit.
pub fn gen_tea() -> SoftDataset {
    let mut samples = Matrix::zeros((TEA_SIZE, DIM));
    for (index, mut img) in samples.rows_mut().into_iter().enumerate() {
        let mut levels = [0usize; 5];
        let mut rest = index;
        for level in levels.iter_mut().rev() {
            *level = rest % 3;
            rest /= 3;
        }
        let teapot_rows = IMAGE_SIDE - levels.iter().sum::<usize>();
        for row in IMAGE_SIDE - teapot_rows..IMAGE_SIDE {
            for col in 0..5 {
                img[row * IMAGE_SIDE + col] = 1.0;
            }
        }
        for (cup, &level) in levels.iter().enumerate() {
            let bottom = 2 * cup + 1;
            for row in (bottom + 1 - level)..=bottom {
                for col in 5..IMAGE_SIDE {
                    img[row * IMAGE_SIDE + col] = 1.0;
                }
            }
        }
    }
    SoftDataset {
        name: "tea".into(),
        samples,
    }
}

/// Images decoded from an IDX file.
#[derive(Debug, Clone)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn be_u32(bytes: &[u8], offset: usize, field: &'static str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::IdxParse {
            field,
            message: "file truncated".into(),
        })
}

/// Parse a big-endian IDX image file (magic `0x00000803`).
pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::IdxParse {
            field: "magic",
            message: format!("expected 0x{IDX_IMAGES_MAGIC:08x}, found 0x{magic:08x}"),
        });
    }
    let count = be_u32(bytes, 4, "count")? as usize;
    let rows = be_u32(bytes, 8, "rows")? as usize;
    let cols = be_u32(bytes, 12, "cols")? as usize;
    let expected = count * rows * cols;
    let payload = &bytes[16..];
    if payload.len() != expected {
        return Err(Error::IdxParse {
            field: "payload",
            message: format!("expected {expected} bytes, found {}", payload.len()),
        });
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: payload.to_vec(),
    })
}

/// Parse a big-endian IDX label file (magic `0x00000801`).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::IdxParse {
            field: "magic",
            message: format!("expected 0x{IDX_LABELS_MAGIC:08x}, found 0x{magic:08x}"),
        });
    }
    let count = be_u32(bytes, 4, "count")? as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(Error::IdxParse {
            field: "payload",
            message: format!("expected {count} bytes, found {}", payload.len()),
        });
    }
    Ok(payload.to_vec())
}

/// Crop the central 10×10 window (rows and columns 9..=18) of the first
/// 12000 MNIST training images, scaled to `[0, 1]`.
pub fn build_cmnist(mnist_train_images: &[u8]) -> Result<SoftDataset> {
    let idx = parse_idx_images(mnist_train_images)?;
    if idx.rows != MNIST_SIDE {
        return Err(Error::IdxParse {
            field: "rows",
            message: format!("expected {MNIST_SIDE}, found {}", idx.rows),
        });
    }
    if idx.cols != MNIST_SIDE {
        return Err(Error::IdxParse {
            field: "cols",
            message: format!("expected {MNIST_SIDE}, found {}", idx.cols),
        });
    }
    if idx.count < CMNIST_SIZE {
        return Err(Error::IdxParse {
            field: "count",
            message: format!("need at least {CMNIST_SIZE} images, found {}", idx.count),
        });
    }
    let image_len = MNIST_SIDE * MNIST_SIDE;
    let samples = Matrix::from_shape_fn((CMNIST_SIZE, DIM), |(n, k)| {
        let (r, c) = (k / IMAGE_SIDE + CROP_START, k % IMAGE_SIDE + CROP_START);
        f64::from(idx.pixels[n * image_len + r * MNIST_SIDE + c]) / 255.0
    });
    Ok(SoftDataset {
        name: "cmnist".into(),
        samples,
    })
}

/// Sizes of the three parts of a split and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub seed: u64,
}

impl SplitSpec {
    /// Three equal parts covering `floor(n/3)` samples each.
    pub fn thirds(n: usize, seed: u64) -> Self {
        Self {
            train: n / 3,
            valid: n / 3,
            test: n / 3,
            seed,
        }
    }
}

/// Train, validation and test parts of a dataset.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: SoftDataset,
    pub valid: SoftDataset,
    pub test: SoftDataset,
    /// Row indices of the source dataset, in shuffled order.
    pub order: Vec<usize>,
}

/// Fisher–Yates shuffle under the split seed, then contiguous slicing.
pub fn split(ds: &SoftDataset, spec: SplitSpec) -> Result<Split> {
    let total = spec.train + spec.valid + spec.test;
    if total > ds.len() {
        return Err(Error::InvalidSplit(format!(
            "parts sum to {total} but the dataset has {} samples",
            ds.len()
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut RngState::new(spec.seed).rng());
    let part = |range: std::ops::Range<usize>, suffix: &str| {
        let mut p = ds.select(&order[range]);
        p.name = format!("{}-{suffix}", ds.name);
        p
    };
    let a = spec.train;
    let b = a + spec.valid;
    Ok(Split {
        train: part(0..a, "train"),
        valid: part(a..b, "valid"),
        test: part(b..total, "test"),
        order,
    })
}

/// Log-likelihood of the uniform coding scheme, in nats per sample.
pub fn baseline_uniform(dim: usize) -> f64 {
    -(dim as f64) * std::f64::consts::LN_2
}

/// Per-pixel Bernoulli probabilities with add-one smoothing:
/// `p_i = (Σ_n x_ni + 1) / (N + 2)`.
pub fn fit_independent_bernoulli(train: &SoftDataset) -> Result<Vector> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = train.len() as f64;
    Ok(train
        .samples
        .sum_axis(Axis(0))
        .mapv(|s| (s + 1.0) / (n + 2.0)))
}

/// Mean log-likelihood per sample of `ds` under independent Bernoulli pixels.
pub fn independent_bernoulli_ll(p: &Array1<f64>, ds: &SoftDataset) -> Result<f64> {
    crate::error::check_dim("independent_bernoulli_ll", p.len(), ds.dim())?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total: f64 = ds
        .samples
        .rows()
        .into_iter()
        .map(|x| bernoulli_xent_unchecked(x, p.view()))
        .sum();
    Ok(total / ds.len() as f64)
}

/// `ln(1/243)`: every Tea image equally likely.
pub fn perfect_model_ll_tea() -> f64 {
    -(TEA_SIZE as f64).ln()
}

/// Center-crop helper exposed for tests and tooling: the 10×10 window of a
/// single 28×28 image.
pub fn crop_center(image: &[u8]) -> Vector {
    let img =
        ndarray::ArrayView2::from_shape((MNIST_SIDE, MNIST_SIDE), image).expect("28x28 image");
    img.slice(s![
        CROP_START..CROP_START + IMAGE_SIDE,
        CROP_START..CROP_START + IMAGE_SIDE
    ])
    .iter()
    .map(|&p| f64::from(p) / 255.0)
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn idx_bytes(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        b.extend_from_slice(&count.to_be_bytes());
        b.extend_from_slice(&rows.to_be_bytes());
        b.extend_from_slice(&cols.to_be_bytes());
        b.extend_from_slice(pixels);
        b
    }

    #[test]
    fn tea_has_243_distinct_samples_with_50_ones() {
        let tea = gen_tea();
        assert_eq!(tea.len(), 243);
        assert_eq!(tea.dim(), 100);
        let mut seen = HashSet::new();
        for row in tea.samples.rows() {
            assert_eq!(row.sum(), 50.0);
            let key: Vec<u8> = row.iter().map(|&v| v as u8).collect();
            assert!(seen.insert(key));
        }
    }

    #[test]
    fn tea_full_cups_empty_teapot() {
        let tea = gen_tea();
        let last = tea.sample(242);
        for r in 0..10 {
            for c in 0..5 {
                assert_eq!(last[r * 10 + c], 0.0);
            }
            for c in 5..10 {
                assert_eq!(last[r * 10 + c], 1.0);
            }
        }
        // All cups empty: the teapot is full.
        let first = tea.sample(0);
        assert!((0..10).all(|r| (0..5).all(|c| first[r * 10 + c] == 1.0)));
    }

    #[test]
    fn tea_rows_fill_bottom_up() {
        let tea = gen_tea();
        for img in tea.samples.rows() {
            for r in 0..10 {
                let teapot = img[r * 10];
                assert!((1..5).all(|c| img[r * 10 + c] == teapot));
                if r + 1 < 10 && teapot == 1.0 {
                    assert_eq!(img[(r + 1) * 10], 1.0);
                }
            }
            for cup in 0..5 {
                let top = img[(2 * cup) * 10 + 5];
                let bottom = img[(2 * cup + 1) * 10 + 5];
                assert!(top <= bottom, "liquid floats above an empty row");
            }
        }
        assert_eq!(gen_tea(), gen_tea());
    }

    #[test]
    fn idx_parse_errors_name_the_field() {
        let mut bad = idx_bytes(1, 28, 28, &[0; 784]);
        bad[3] = 0x01;
        let err = parse_idx_images(&bad).unwrap_err().to_string();
        assert!(err.contains("magic"), "{err}");

        let short = idx_bytes(2, 28, 28, &[0; 784]);
        let err = parse_idx_images(&short).unwrap_err().to_string();
        assert!(err.contains("payload"), "{err}");

        let wrong_rows = idx_bytes(1, 27, 28, &[0; 27 * 28]);
        let err = build_cmnist(&wrong_rows).unwrap_err().to_string();
        assert!(err.contains("rows"), "{err}");

        let too_few = idx_bytes(1, 28, 28, &[0; 784]);
        let err = build_cmnist(&too_few).unwrap_err().to_string();
        assert!(err.contains("count"), "{err}");

        assert!(parse_idx_images(&[0, 0]).is_err());
    }

    #[test]
    fn cmnist_crop_and_scaling() {
        let n = CMNIST_SIZE + 3;
        let mut pixels = vec![0u8; n * 784];
        // Image 1: a single saturated pixel at (9, 9) and one outside the crop.
        pixels[784 + 9 * 28 + 9] = 255;
        pixels[784 + 8 * 28 + 9] = 255;
        // Image 2: a mid-grey pixel at (18, 18).
        pixels[2 * 784 + 18 * 28 + 18] = 51;
        let ds = build_cmnist(&idx_bytes(n as u32, 28, 28, &pixels)).unwrap();
        assert_eq!(ds.len(), 12_000);
        assert_eq!(ds.dim(), 100);
        assert!(ds.sample(0).iter().all(|&v| v == 0.0));
        assert_eq!(ds.sample(1)[0], 1.0);
        assert_eq!(ds.sample(1).sum(), 1.0);
        assert!((ds.sample(2)[99] - 0.2).abs() < 1e-15);
        assert_eq!(crop_center(&pixels[784..2 * 784])[0], 1.0);
    }

    #[test]
    fn labels_parse() {
        let mut b = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
        b.extend_from_slice(&3u32.to_be_bytes());
        b.extend_from_slice(&[7, 2, 1]);
        assert_eq!(parse_idx_labels(&b).unwrap(), vec![7, 2, 1]);
    }

    #[test]
    fn split_is_a_deterministic_partition() {
        let tea = gen_tea();
        let spec = SplitSpec {
            train: 81,
            valid: 81,
            test: 81,
            seed: 5,
        };
        let a = split(&tea, spec).unwrap();
        let b = split(&tea, spec).unwrap();
        assert_eq!(a.order, b.order);
        assert_eq!(a.train.samples, b.train.samples);
        let mut idx = a.order.clone();
        idx.sort_unstable();
        assert_eq!(idx, (0..243).collect::<Vec<_>>());
        let all: HashSet<Vec<u8>> = [&a.train, &a.valid, &a.test]
            .iter()
            .flat_map(|p| {
                p.samples
                    .rows()
                    .into_iter()
                    .map(|r| r.iter().map(|&v| v as u8).collect::<Vec<u8>>())
                    .collect::<Vec<_>>()
            })
            .collect();
        assert_eq!(all.len(), 243);
        let other = split(&tea, SplitSpec { seed: 6, ..spec }).unwrap();
        assert_ne!(other.order, a.order);

        let too_big = SplitSpec {
            train: 200,
            valid: 81,
            test: 0,
            seed: 0,
        };
        assert!(matches!(split(&tea, too_big), Err(Error::InvalidSplit(_))));
    }

    #[test]
    fn baselines() {
        assert!((baseline_uniform(100) + 69.3147).abs() < 1e-4);
        assert!((baseline_uniform(1) + 2f64.ln()).abs() < 1e-15);
        assert_eq!(baseline_uniform(0), 0.0);
        let perfect = perfect_model_ll_tea();
        assert!((perfect + 5.4931).abs() < 1e-4);
        assert!((perfect.exp() * 243.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bernoulli_smoothing() {
        let ones = SoftDataset::new("ones", Matrix::ones((1, 4))).unwrap();
        let p = fit_independent_bernoulli(&ones).unwrap();
        assert!(p.iter().all(|&v| (v - 2.0 / 3.0).abs() < 1e-15));
        let empty = SoftDataset::new("e", Matrix::zeros((0, 4))).unwrap();
        assert!(fit_independent_bernoulli(&empty).is_err());
    }

    #[test]
    fn tea_baseline_ordering() {
        let tea = gen_tea();
        let parts = split(&tea, SplitSpec::thirds(243, 0)).unwrap();
        let p = fit_independent_bernoulli(&parts.train).unwrap();
        let ll = independent_bernoulli_ll(&p, &parts.valid).unwrap();
        assert!(baseline_uniform(100) < ll && ll < perfect_model_ll_tea());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let tea = gen_tea();
        let soft = SoftDataset::new("soft", tea.samples.mapv(|v| v * 0.3 + 0.1)).unwrap();
        let mut buf = Vec::new();
        soft.write_csv(&mut buf).unwrap();
        let back = SoftDataset::read_csv("soft", buf.as_slice()).unwrap();
        assert_eq!(back.samples, soft.samples);
        assert!(SoftDataset::read_csv("bad", "0.5,2.0\n".as_bytes()).is_err());
    }
}
