//! Minimal binary PGM (P5) reader/writer for standalone image input.

use std::path::Path;

use anyhow::{bail, Context};
use qocr_core::dataset::GrayImage;

pub fn read(path: &Path) -> anyhow::Result<GrayImage> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut pos = 0usize;

    let mut token = |bytes: &[u8]| -> anyhow::Result<String> {
        // Skip whitespace and '#' comment lines between header tokens.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            bail!("truncated PGM header");
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if token(&bytes)? != "P5" {
        bail!("not a binary PGM (P5) file");
    }
    let width: u32 = token(&bytes)?.parse().context("PGM width")?;
    let height: u32 = token(&bytes)?.parse().context("PGM height")?;
    let maxval: u32 = token(&bytes)?.parse().context("PGM maxval")?;
    if maxval != 255 {
        bail!("unsupported PGM maxval {maxval} (expected 255)");
    }
    pos += 1; // single whitespace after maxval
    let want = (width as usize) * (height as usize);
    if bytes.len() < pos + want {
        bail!("PGM pixel data truncated");
    }
    GrayImage::new(width, height, bytes[pos..pos + want].to_vec())
        .map_err(|e| anyhow::anyhow!("{e}"))
}

pub fn write(path: &Path, img: &GrayImage) -> anyhow::Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
