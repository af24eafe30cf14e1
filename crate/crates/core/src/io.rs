//! Dataset ingestion: IDX (MNIST / EMNIST) streams and PNG directories.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::error::{Error, IdxError, Result};
use crate::raster::DigitalImage;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Images with class labels; `labels[i]` indexes `class_names`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledDataset {
    pub images: Vec<DigitalImage>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(images: Vec<DigitalImage>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::InvalidInput(format!(
                "label {bad} outside class table of {}",
                class_names.len()
            )));
        }
        Ok(Self {
            images,
            labels,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    /// Common image size, or an error if sizes differ. `None` when empty.
    pub fn uniform_dims(&self) -> Result<Option<(usize, usize)>> {
        let Some(first) = self.images.first() else {
            return Ok(None);
        };
        let dims = first.dims();
        if let Some(bad) = self.images.iter().find(|im| im.dims() != dims) {
            return Err(Error::SizeMismatch {
                expected: dims,
                found: bad.dims(),
            });
        }
        Ok(Some(dims))
    }

    /// Items at `indices`, in that order, with the same class table.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// The first `k` items.
    pub fn take(&self, k: usize) -> Self {
        let k = k.min(self.len());
        self.subset(&(0..k).collect::<Vec<_>>())
    }

    /// Indices of the `rank`-th occurrence (0-based) of every class, in
    /// class order; `None` for classes with fewer occurrences.
    pub fn occurrence_index(&self, rank: usize) -> Vec<Option<usize>> {
        let mut seen = vec![0usize; self.class_count()];
        let mut out = vec![None; self.class_count()];
        for (i, &l) in self.labels.iter().enumerate() {
            if seen[l] == rank {
                out[l] = Some(i);
            }
            seen[l] += 1;
        }
        out
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

fn read_u32(reader: &mut impl Read, what: &'static str) -> std::result::Result<u32, IdxError> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf).map_err(|e| IdxError::Truncated {
        what,
        detail: format!("header: {e}"),
    })?;
    Ok(u32::from_be_bytes(buf))
}

fn expect_magic(reader: &mut impl Read, what: &'static str, expected: u32) -> std::result::Result<(), IdxError> {
    let found = read_u32(reader, what)?;
    if found != expected {
        return Err(IdxError::BadMagic {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// Decodes an IDX image stream and an IDX label stream. Pixel bytes are
/// divided by 255; the class table is `"0".."max label"`.
pub fn load_idx(mut image_bytes: impl Read, mut label_bytes: impl Read) -> Result<LabeledDataset> {
    expect_magic(&mut image_bytes, "images", IDX_IMAGES_MAGIC)?;
    let count = read_u32(&mut image_bytes, "images")? as usize;
    let rows = read_u32(&mut image_bytes, "images")? as usize;
    let cols = read_u32(&mut image_bytes, "images")? as usize;

    expect_magic(&mut label_bytes, "labels", IDX_LABELS_MAGIC)?;
    let label_count = read_u32(&mut label_bytes, "labels")? as usize;
    if label_count != count {
        return Err(IdxError::CountMismatch {
            images: count,
            labels: label_count,
        }
        .into());
    }

    let mut labels_raw = vec![0u8; count];
    label_bytes
        .read_exact(&mut labels_raw)
        .map_err(|e| IdxError::Truncated {
            what: "labels",
            detail: format!("expected {count} labels: {e}"),
        })?;

    let mut images = Vec::with_capacity(count);
    if count > 0 {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!("IDX images have size {rows}x{cols}")));
        }
        let mut buf = vec![0u8; rows * cols];
        for k in 0..count {
            image_bytes
                .read_exact(&mut buf)
                .map_err(|e| IdxError::Truncated {
                    what: "images",
                    detail: format!("image {k} of {count}: {e}"),
                })?;
            images.push(DigitalImage::from_bytes(rows, cols, &buf)?);
        }
    }

    let n_classes = labels_raw.iter().copied().max().map_or(0, |m| m as usize + 1);
    let class_names = (0..n_classes).map(|c| c.to_string()).collect();
    let labels = labels_raw.into_iter().map(usize::from).collect();
    LabeledDataset::new(images, labels, class_names)
}

/// Opens a file, transparently gunzipping when it starts with the gzip magic.
fn open_maybe_gz(path: &Path) -> Result<Box<dyn Read>> {
    let mut file = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut head = [0u8; 2];
    let n = file.get_mut().read(&mut head).map_err(|e| Error::io(path, e))?;
    let file = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    if n == 2 && head == [0x1f, 0x8b] {
        Ok(Box::new(GzDecoder::new(file)))
    } else {
        Ok(Box::new(file))
    }
}

pub fn load_idx_files(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    load_idx(open_maybe_gz(images)?, open_maybe_gz(labels)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Locates `<prefix>-images-idx3-ubyte[.gz]` / `<prefix>-labels-idx1-ubyte[.gz]`
/// in `dir`, trying the MNIST (`train`, `t10k`) and EMNIST
/// (`emnist-letters-train`, `emnist-letters-test`) prefixes.
pub fn find_idx_pair(dir: &Path, split: Split) -> Result<(PathBuf, PathBuf)> {
    let prefixes: &[&str] = match split {
        Split::Train => &["train", "emnist-letters-train"],
        Split::Test => &["t10k", "test", "emnist-letters-test"],
    };
    for prefix in prefixes {
        for ext in ["", ".gz"] {
            let img = dir.join(format!("{prefix}-images-idx3-ubyte{ext}"));
            let lab = dir.join(format!("{prefix}-labels-idx1-ubyte{ext}"));
            if img.is_file() && lab.is_file() {
                return Ok((img, lab));
            }
        }
    }
    Err(Error::io(
        dir,
        std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no {split:?} IDX image/label pair found"),
        ),
    ))
}

pub fn load_idx_dir(dir: &Path, split: Split) -> Result<LabeledDataset> {
    let (img, lab) = find_idx_pair(dir, split)?;
    load_idx_files(&img, &lab)
}

/// How PNG files are turned into digital images.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PngOptions {
    /// Map dark ink to high intensity.
    pub invert: bool,
    /// Area-average every image to this `(rows, cols)`.
    pub resize: Option<(usize, usize)>,
}

impl PngOptions {
    /// Omniglot: dark ink on white, 105×105, averaged down to 28×28.
    pub fn omniglot() -> Self {
        Self {
            invert: true,
            resize: Some((28, 28)),
        }
    }
}

pub fn load_png(path: &Path, options: PngOptions) -> Result<DigitalImage> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            source: other,
        },
    })?;
    let gray = img.to_luma16();
    let (w, h) = gray.dimensions();
    let pixels = gray.as_raw().iter().map(|&v| f64::from(v) / 65535.0).collect();
    let mut out = DigitalImage::from_clamped(h as usize, w as usize, pixels)?;
    if options.invert {
        out = out.inverted();
    }
    if let Some((r, c)) = options.resize {
        out = out.resize_area(r, c);
    }
    Ok(out)
}

pub fn save_png(image: &DigitalImage, path: &Path) -> Result<()> {
    let buf = image::GrayImage::from_raw(image.cols() as u32, image.rows() as u32, image.to_bytes())
        .expect("buffer matches dimensions");
    buf.save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            source: other,
        },
    })
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// Loads PNGs from `dir`. Each subdirectory is one class (named after it)
/// holding its PNG files; PNGs directly in `dir` form a class named `""`.
/// Files are taken in sorted path order. Without resizing, all images must
/// share one size.
pub fn load_png_dir(dir: &Path, options: PngOptions) -> Result<LabeledDataset> {
    let mut groups: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for entry in sorted_entries(dir)? {
        if entry.is_dir() {
            let name = entry
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let files: Vec<PathBuf> = sorted_entries(&entry)?.into_iter().filter(|p| is_png(p)).collect();
            if !files.is_empty() {
                groups.insert(name, files);
            }
        } else if is_png(&entry) {
            groups.entry(String::new()).or_default().push(entry);
        }
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut class_names = Vec::new();
    for (class, (name, files)) in groups.into_iter().enumerate() {
        class_names.push(name);
        for f in files {
            images.push(load_png(&f, options)?);
            labels.push(class);
        }
    }
    let ds = LabeledDataset::new(images, labels, class_names)?;
    ds.uniform_dims()?;
    Ok(ds)
}

/// One Omniglot one-shot run: 20 training images (one per class) and 20
/// test images, with the answer key mapping each test to its class.
#[derive(Debug, Clone)]
pub struct OmniglotRun {
    /// Training images; label `k` is the `k`-th training file.
    pub train: LabeledDataset,
    /// Test images labelled with the index of their correct training image.
    pub test: LabeledDataset,
}

/// Reads a run folder holding `class_labels.txt` whose lines pair a test
/// file with its training file, e.g. `run01/test/item01.png run01/training/class12.png`.
/// Paths are resolved by their last two components inside the run folder.
pub fn load_omniglot_run(run_dir: &Path, options: PngOptions) -> Result<OmniglotRun> {
    let key_path = run_dir.join("class_labels.txt");
    let text = std::fs::read_to_string(&key_path).map_err(|e| Error::io(&key_path, e))?;
    let layout = |detail: String| Error::Layout {
        path: run_dir.to_path_buf(),
        detail,
    };
    let resolve = |p: &str| -> Result<PathBuf> {
        let parts: Vec<&str> = p.split(['/', '\\']).filter(|s| !s.is_empty()).collect();
        if parts.len() < 2 {
            return Err(layout(format!("cannot resolve path {p:?}")));
        }
        Ok(run_dir.join(parts[parts.len() - 2]).join(parts[parts.len() - 1]))
    };

    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(layout(format!("line {}: expected two paths, got {line:?}", n + 1)));
        }
        pairs.push((resolve(fields[0])?, resolve(fields[1])?));
    }
    if pairs.is_empty() {
        return Err(layout("empty class_labels.txt".into()));
    }

    let train_dir = run_dir.join("training");
    let mut train_files: Vec<PathBuf> = sorted_entries(&train_dir)
        .map_err(|_| layout("missing training/ folder".into()))?
        .into_iter()
        .filter(|p| is_png(p))
        .collect();
    train_files.sort();
    let class_of = |p: &Path| train_files.iter().position(|t| t == p);

    let mut test_images = Vec::with_capacity(pairs.len());
    let mut test_labels = Vec::with_capacity(pairs.len());
    for (test, train) in &pairs {
        let class = class_of(train)
            .ok_or_else(|| layout(format!("answer {} is not a training image", train.display())))?;
        test_images.push(load_png(test, options)?);
        test_labels.push(class);
    }
    let class_names: Vec<String> = train_files
        .iter()
        .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    let train_images = train_files
        .iter()
        .map(|p| load_png(p, options))
        .collect::<Result<Vec<_>>>()?;
    let train = LabeledDataset::new(train_images, (0..class_names.len()).collect(), class_names.clone())?;
    let test = LabeledDataset::new(test_images, test_labels, class_names)?;
    let dims = train.uniform_dims()?;
    if let (Some(a), Some(b)) = (dims, test.uniform_dims()?) {
        if a != b {
            return Err(Error::SizeMismatch { expected: a, found: b });
        }
    }
    Ok(OmniglotRun { train, test })
}
