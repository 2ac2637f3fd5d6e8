//! Dataset machinery: the packed binary repository with its labels index,
//! deterministic synthetic word-image generation, noise transforms, dataset
//! splitting and input preprocessing.

mod noise;
mod preprocess;
mod render;
mod repository;

pub use noise::{add_salt_pepper, add_speckle, DEFAULT_SPECKLE_VARIANCE, DEFAULT_SP_DENSITY};
pub use preprocess::{preprocess_resize, preprocess_to, resample_bilinear, TARGET_HEIGHT, TARGET_WIDTH};
pub use render::{generate_samples, glyph_bitmask, render_word, RendererConfig, GLYPH_COLS, GLYPH_ROWS};
pub use repository::{LABELS_HEADER, PAYLOAD_HEADER_LEN};

use thiserror::Error;

use crate::rng::{stream_seed, SplitMix64};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("labels line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("record {index}: {message}")]
    Record { index: usize, message: String },
    #[error("word {word:?} contains out-of-vocabulary symbol {symbol:?}")]
    OutOfVocabulary { word: String, symbol: char },
    #[error("image extents {width}x{height} are invalid")]
    InvalidImage { width: u32, height: u32 },
    #[error("noise density {0} outside [0, 1]")]
    InvalidDensity(f64),
    #[error("noise variance {0} is negative")]
    InvalidVariance(f64),
    #[error("split ratios {0:?} must be positive and sum to 1")]
    InvalidRatios((f64, f64, f64)),
    #[error("empty repository")]
    EmptyRepository,
}

/// Font formatting recorded per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Regular,
    Bold,
}

impl Style {
    pub fn as_str(self) -> &'static str {
        match self {
            Style::Regular => "regular",
            Style::Bold => "bold",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "regular" => Some(Style::Regular),
            "bold" => Some(Style::Bold),
            _ => None,
        }
    }
}

/// One labeled word image: the text, its rendering attributes, and where its
/// payload lives in the blob.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub word: String,
    pub font_id: u32,
    pub style: Style,
    pub size_pt: u32,
    pub start_offset: u64,
    pub byte_length: u64,
}

/// Grayscale raster, row-major rows of `width` bytes; 0 is ink, 255 is
/// background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, DatasetError> {
        if width == 0 || height == 0 || pixels.len() != (width as usize) * (height as usize) {
            return Err(DatasetError::InvalidImage { width, height });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn blank(width: u32, height: u32) -> Result<Self, DatasetError> {
        let len = (width as usize) * (height as usize);
        Self::new(width, height, vec![255; len])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        self.pixels[(y * self.width + x) as usize] = value;
    }

    /// Ink a pixel if it lies inside the raster.
    pub(crate) fn ink_clipped(&mut self, x: i64, y: i64) {
        if x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64 {
            self.set(x as u32, y as u32, 0);
        }
    }
}

/// The packed dataset: an ordered record index over one concatenated blob of
/// image payloads. Immutable after construction; offsets always form a
/// running sum of payload lengths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Repository {
    records: Vec<SampleRecord>,
    blob: Vec<u8>,
}

/// Disjoint record-index sets produced by [`split_dataset`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validate: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn total(&self) -> usize {
        self.train.len() + self.validate.len() + self.test.len()
    }

    /// Serialize as `<set>\t<record index>` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, set) in [
            ("train", &self.train),
            ("validate", &self.validate),
            ("test", &self.test),
        ] {
            for &i in set.iter() {
                out.push_str(name);
                out.push('\t');
                out.push_str(&i.to_string());
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, DatasetError> {
        let mut split = SplitIndices::default();
        for (lineno, line) in text.lines().enumerate() {
            let err = |message: String| DatasetError::Parse {
                line: lineno + 1,
                message,
            };
            let (name, idx) = line
                .split_once('\t')
                .ok_or_else(|| err("expected <set>\\t<index>".into()))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("bad record index {idx:?}")))?;
            match name {
                "train" => split.train.push(idx),
                "validate" => split.validate.push(idx),
                "test" => split.test.push(idx),
                _ => return Err(err(format!("unknown set {name:?}"))),
            }
        }
        Ok(split)
    }
}

/// Seeded shuffle followed by a contiguous cut. Set sizes are floor-based
/// for validate/test with the remainder going to train; the three sets
/// partition the records.
pub fn split_dataset(
    repo: &Repository,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitIndices, DatasetError> {
    let n = repo.len();
    if n == 0 {
        return Err(DatasetError::EmptyRepository);
    }
    let (rt, rv, rs) = ratios;
    if rt <= 0.0 || rv <= 0.0 || rs <= 0.0 || (rt + rv + rs - 1.0).abs() > 1e-9 {
        return Err(DatasetError::InvalidRatios(ratios));
    }
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::new(stream_seed(seed, 0x73706C69)) // "spli"
        .shuffle(&mut order);
    let n_val = (rv * n as f64).floor() as usize;
    let n_test = (rs * n as f64).floor() as usize;
    let n_train = n - n_val - n_test;
    Ok(SplitIndices {
        train: order[..n_train].to_vec(),
        validate: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    })
}

/// Draw `count` distinct words of `min_len..=max_len` symbols from the
/// vocabulary, uniformly and reproducibly.
///
/// Panics if the vocabulary cannot provide `count` distinct words in that
/// length range.
pub fn sample_words(
    count: usize,
    min_len: usize,
    max_len: usize,
    vocab: &crate::model::Vocabulary,
    seed: u64,
) -> Vec<String> {
    assert!(min_len >= 1 && max_len >= min_len);
    let mut distinct = 0usize;
    let mut pow = vocab.size().saturating_pow(min_len as u32);
    for _ in min_len..=max_len {
        distinct = distinct.saturating_add(pow);
        pow = pow.saturating_mul(vocab.size());
    }
    assert!(
        count <= distinct,
        "only {distinct} distinct words of {min_len}..={max_len} symbols exist, asked for {count}"
    );
    let mut rng = SplitMix64::new(stream_seed(seed, 0x776F7264)); // "word"
    let mut seen = std::collections::HashSet::new();
    let mut words = Vec::with_capacity(count);
    while words.len() < count {
        let len = min_len + rng.below(max_len - min_len + 1);
        let word: String = (0..len)
            .map(|_| vocab.symbols()[rng.below(vocab.size())])
            .collect();
        if seen.insert(word.clone()) {
            words.push(word);
        }
    }
    words
}
