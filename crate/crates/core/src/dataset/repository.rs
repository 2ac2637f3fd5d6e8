//! The two-file dataset container: a tab-separated labels index and one
//! binary blob of sequentially packed image payloads.
//!
//! Payload layout: 4-byte little-endian width, 4-byte little-endian height,
//! then `width * height` raw grayscale bytes. No padding between payloads.

use std::fs;
use std::path::Path;

use super::{DatasetError, GrayImage, Repository, SampleRecord, Style};

/// First line of every labels file: format name and version.
pub const LABELS_HEADER: &str = "AMFDS\t1";

/// Width/height prefix bytes ahead of each payload's pixels.
pub const PAYLOAD_HEADER_LEN: u64 = 8;

fn encode_payload(img: &GrayImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + img.pixels().len());
    out.extend_from_slice(&img.width().to_le_bytes());
    out.extend_from_slice(&img.height().to_le_bytes());
    out.extend_from_slice(img.pixels());
    out
}

fn decode_payload(bytes: &[u8]) -> Result<GrayImage, String> {
    if bytes.len() < 8 {
        return Err(format!("payload of {} bytes is shorter than its header", bytes.len()));
    }
    let width = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let want = (width as usize) * (height as usize);
    if bytes.len() - 8 != want {
        return Err(format!(
            "payload declares {width}x{height} ({want} bytes) but carries {}",
            bytes.len() - 8
        ));
    }
    GrayImage::new(width, height, bytes[8..].to_vec()).map_err(|e| e.to_string())
}

impl Repository {
    /// Pack samples in order; offsets become the running sum of payload
    /// lengths.
    pub fn from_samples(
        samples: impl IntoIterator<Item = (String, u32, Style, u32, GrayImage)>,
    ) -> Self {
        let mut records = Vec::new();
        let mut blob = Vec::new();
        for (word, font_id, style, size_pt, image) in samples {
            let payload = encode_payload(&image);
            records.push(SampleRecord {
                word,
                font_id,
                style,
                size_pt,
                start_offset: blob.len() as u64,
                byte_length: payload.len() as u64,
            });
            blob.extend_from_slice(&payload);
        }
        Self { records, blob }
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn blob(&self) -> &[u8] {
        &self.blob
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Decode the image addressed by record `index`.
    pub fn image(&self, index: usize) -> Result<GrayImage, DatasetError> {
        let rec = self.records.get(index).ok_or(DatasetError::Record {
            index,
            message: "no such record".into(),
        })?;
        let start = rec.start_offset as usize;
        let end = start + rec.byte_length as usize;
        decode_payload(&self.blob[start..end]).map_err(|message| DatasetError::Record {
            index,
            message,
        })
    }

    /// Replace every image through `f`, repacking offsets. Words and
    /// attributes are preserved.
    pub fn map_images(
        &self,
        mut f: impl FnMut(usize, &SampleRecord, GrayImage) -> Result<GrayImage, DatasetError>,
    ) -> Result<Self, DatasetError> {
        let mut samples = Vec::with_capacity(self.len());
        for (i, rec) in self.records.iter().enumerate() {
            let img = f(i, rec, self.image(i)?)?;
            samples.push((rec.word.clone(), rec.font_id, rec.style, rec.size_pt, img));
        }
        Ok(Self::from_samples(samples))
    }

    /// Write the labels file and the blob file.
    pub fn write(
        &self,
        labels_path: impl AsRef<Path>,
        blob_path: impl AsRef<Path>,
    ) -> Result<(), DatasetError> {
        let mut labels = String::with_capacity(32 * self.records.len());
        labels.push_str(LABELS_HEADER);
        labels.push('\n');
        for r in &self.records {
            labels.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                r.word,
                r.font_id,
                r.style.as_str(),
                r.size_pt,
                r.start_offset,
                r.byte_length
            ));
        }
        fs::write(labels_path, labels)?;
        fs::write(blob_path, &self.blob)?;
        Ok(())
    }

    /// Read and fully validate a container: header, record fields,
    /// sequential packing, offsets in range and parseable payloads. Errors
    /// name the offending labels-file line.
    pub fn read(
        labels_path: impl AsRef<Path>,
        blob_path: impl AsRef<Path>,
    ) -> Result<Self, DatasetError> {
        let labels = fs::read_to_string(labels_path)?;
        let blob = fs::read(blob_path)?;
        Self::parse(&labels, blob)
    }

    pub fn parse(labels: &str, blob: Vec<u8>) -> Result<Self, DatasetError> {
        let parse_err = |line: usize, message: String| DatasetError::Parse { line, message };
        let mut lines = labels.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header == LABELS_HEADER => {}
            Some((_, header)) => {
                return Err(parse_err(1, format!("bad header {header:?}")));
            }
            None => return Err(parse_err(1, "empty labels file".into())),
        }

        let mut records = Vec::new();
        let mut expected_offset = 0u64;
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 6 {
                return Err(parse_err(
                    lineno,
                    format!("expected 6 tab-separated fields, got {}", fields.len()),
                ));
            }
            let word = fields[0].to_string();
            if word.is_empty() {
                return Err(parse_err(lineno, "empty word".into()));
            }
            let font_id: u32 = fields[1]
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad font id {:?}", fields[1])))?;
            let style = Style::parse(fields[2])
                .ok_or_else(|| parse_err(lineno, format!("bad style {:?}", fields[2])))?;
            let size_pt: u32 = fields[3]
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad size {:?}", fields[3])))?;
            let start_offset: u64 = fields[4]
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad offset {:?}", fields[4])))?;
            let byte_length: u64 = fields[5]
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad length {:?}", fields[5])))?;

            if start_offset != expected_offset {
                return Err(parse_err(
                    lineno,
                    format!("offset {start_offset} breaks sequential packing (expected {expected_offset})"),
                ));
            }
            let end = start_offset
                .checked_add(byte_length)
                .ok_or_else(|| parse_err(lineno, "offset overflow".into()))?;
            if end > blob.len() as u64 {
                return Err(parse_err(
                    lineno,
                    format!(
                        "payload [{start_offset}, {end}) extends past blob end ({})",
                        blob.len()
                    ),
                ));
            }
            decode_payload(&blob[start_offset as usize..end as usize])
                .map_err(|m| parse_err(lineno, m))?;

            expected_offset = end;
            records.push(SampleRecord {
                word,
                font_id,
                style,
                size_pt,
                start_offset,
                byte_length,
            });
        }
        if expected_offset != blob.len() as u64 {
            return Err(parse_err(
                records.len() + 1,
                format!(
                    "blob has {} trailing bytes past the last record",
                    blob.len() as u64 - expected_offset
                ),
            ));
        }
        Ok(Self { records, blob })
    }
}
