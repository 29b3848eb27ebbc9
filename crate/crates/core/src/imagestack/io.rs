//! Reading and writing radiograph stacks (16-bit TIFF and headerless raw).

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype, TiffEncoder};
use tiff::ColorType;

use crate::error::{Error, Result};
use crate::frame::Frame;

use super::SequenceMeta;

/// On-disk layout of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SequenceFormat {
    /// One multi-page TIFF, or a directory of (possibly multi-page) TIFF files
    /// read in lexical filename order.
    TiffStack,
    /// Headerless little-endian u16 frames, one file or a directory of `.raw`
    /// files; each file may hold several consecutive frames.
    RawU16 { width: usize, height: usize },
}

/// Undecoded detector counts of a whole sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawStack {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<Vec<u16>>,
}

impl RawStack {
    pub fn new(width: usize, height: usize) -> Self {
        RawStack {
            width,
            height,
            frames: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    fn push(&mut self, data: Vec<u16>, width: usize, height: usize) -> Result<()> {
        if self.frames.is_empty() && self.width == 0 {
            self.width = width;
            self.height = height;
        }
        if width != self.width || height != self.height {
            return Err(Error::DimensionMismatch {
                index: self.frames.len(),
                got_w: width,
                got_h: height,
                want_w: self.width,
                want_h: self.height,
            });
        }
        self.frames.push(data);
        Ok(())
    }

    /// Frame `index` as real intensities with timing from `meta`.
    pub fn frame(&self, index: usize, meta: &SequenceMeta) -> Result<Frame> {
        let data = self.frames.get(index).ok_or(Error::FrameOutOfRange {
            index,
            len: self.frames.len(),
        })?;
        let mut f = Frame::new(
            self.width,
            self.height,
            data.iter().map(|&v| v as f64).collect(),
        );
        f.pixel_pitch = meta.pixel_pitch;
        f.frame_index = index;
        f.time = index as f64 / meta.frame_rate;
        Ok(f)
    }

    pub fn to_frames(&self, meta: &SequenceMeta) -> Result<Vec<Frame>> {
        (0..self.len()).map(|i| self.frame(i, meta)).collect()
    }

    /// Quantises frames to u16 (rounded, clamped to the u16 range).
    pub fn from_frames(frames: &[Frame]) -> Result<RawStack> {
        let mut stack = RawStack::new(0, 0);
        for f in frames {
            let data = f
                .pixels
                .iter()
                .map(|v| v.round().clamp(0.0, u16::MAX as f64) as u16)
                .collect();
            stack.push(data, f.width, f.height)?;
        }
        Ok(stack)
    }
}

/// Reads a sequence and converts it to frames ordered by index.
pub fn load_sequence(path: &Path, format: SequenceFormat, meta: &SequenceMeta) -> Result<Vec<Frame>> {
    read_stack(path, format)?.to_frames(meta)
}

/// Reads a sequence as raw counts.
pub fn read_stack(path: &Path, format: SequenceFormat) -> Result<RawStack> {
    let files = list_inputs(path, format)?;
    let mut stack = RawStack::new(0, 0);
    for file in &files {
        match format {
            SequenceFormat::TiffStack => read_tiff_into(file, &mut stack)?,
            SequenceFormat::RawU16 { width, height } => {
                read_raw_into(file, width, height, &mut stack)?
            }
        }
    }
    if stack.is_empty() {
        return Err(Error::NoFrames(path.to_path_buf()));
    }
    Ok(stack)
}

fn list_inputs(path: &Path, format: SequenceFormat) -> Result<Vec<PathBuf>> {
    if !path.exists() {
        return Err(Error::read(path, "no such file or directory"));
    }
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let wanted: &[&str] = match format {
        SequenceFormat::TiffStack => &["tif", "tiff"],
        SequenceFormat::RawU16 { .. } => &["raw"],
    };
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::read(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| wanted.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn read_tiff_into(path: &Path, stack: &mut RawStack) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::read(path, e))?;
    let mut decoder = Decoder::new(BufReader::new(file)).map_err(|e| Error::read(path, e))?;
    loop {
        let (w, h) = decoder.dimensions().map_err(|e| Error::read(path, e))?;
        let data = match decoder.colortype().map_err(|e| Error::read(path, e))? {
            ColorType::Gray(8) | ColorType::Gray(16) => {
                match decoder.read_image().map_err(|e| Error::read(path, e))? {
                    DecodingResult::U8(v) => v.into_iter().map(u16::from).collect(),
                    DecodingResult::U16(v) => v,
                    _ => return Err(Error::read(path, "unexpected sample format")),
                }
            }
            ColorType::Gray(bits) => return Err(Error::BitDepth(bits as u16)),
            other => return Err(Error::read(path, format!("unsupported color type {other:?}"))),
        };
        let index = stack.len();
        stack
            .push(data, w as usize, h as usize)
            .map_err(|e| name_offender(e, path, index))?;
        if !decoder.more_images() {
            break;
        }
        decoder.next_image().map_err(|e| Error::read(path, e))?;
    }
    Ok(())
}

fn read_raw_into(path: &Path, width: usize, height: usize, stack: &mut RawStack) -> Result<()> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::read(path, e))?;
    let frame_bytes = width * height * 2;
    if frame_bytes == 0 || bytes.len() % frame_bytes != 0 {
        return Err(Error::read(
            path,
            format!(
                "size {} is not a multiple of one {width}x{height} u16 frame",
                bytes.len()
            ),
        ));
    }
    for chunk in bytes.chunks_exact(frame_bytes) {
        let data = chunk
            .chunks_exact(2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .collect();
        stack.push(data, width, height)?;
    }
    Ok(())
}

fn name_offender(err: Error, path: &Path, index: usize) -> Error {
    match err {
        Error::DimensionMismatch { .. } => Error::read(path, format!("frame {index}: {err}")),
        e => e,
    }
}

/// Writes all frames into one multi-page 16-bit TIFF.
pub fn write_tiff_stack(path: &Path, stack: &RawStack) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::write(path, e))?;
    let mut enc = TiffEncoder::new(BufWriter::new(file)).map_err(|e| Error::write(path, e))?;
    for data in &stack.frames {
        enc.write_image::<colortype::Gray16>(stack.width as u32, stack.height as u32, data)
            .map_err(|e| Error::write(path, e))?;
    }
    Ok(())
}

/// Writes all frames back to back as little-endian u16.
pub fn write_raw_stack(path: &Path, stack: &RawStack) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::write(path, e))?;
    let mut out = BufWriter::new(file);
    for data in &stack.frames {
        for v in data {
            out.write_all(&v.to_le_bytes())
                .map_err(|e| Error::write(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::write(path, e))
}

/// Writes real-valued grids as pages of a 64-bit float TIFF.
pub fn write_f64_pages(path: &Path, pages: &[&Frame]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::write(path, e))?;
    let mut enc = TiffEncoder::new(BufWriter::new(file)).map_err(|e| Error::write(path, e))?;
    for f in pages {
        enc.write_image::<colortype::Gray64Float>(f.width as u32, f.height as u32, &f.pixels)
            .map_err(|e| Error::write(path, e))?;
    }
    Ok(())
}

/// Reads every page of a 64-bit float TIFF written by [`write_f64_pages`].
pub fn read_f64_pages(path: &Path) -> Result<Vec<Frame>> {
    let file = File::open(path).map_err(|e| Error::read(path, e))?;
    let mut decoder = Decoder::new(BufReader::new(file)).map_err(|e| Error::read(path, e))?;
    let mut pages = Vec::new();
    loop {
        let (w, h) = decoder.dimensions().map_err(|e| Error::read(path, e))?;
        match decoder.read_image().map_err(|e| Error::read(path, e))? {
            DecodingResult::F64(v) => pages.push(Frame::new(w as usize, h as usize, v)),
            _ => return Err(Error::read(path, "expected 64-bit float samples")),
        }
        if !decoder.more_images() {
            break;
        }
        decoder.next_image().map_err(|e| Error::read(path, e))?;
    }
    Ok(pages)
}

/// Scales `[0, max_value]` to the full u16 range for inspection dumps.
pub fn to_u16_image(frame: &Frame, max_value: f64) -> Vec<u16> {
    let scale = if max_value > 0.0 {
        u16::MAX as f64 / max_value
    } else {
        0.0
    };
    frame
        .pixels
        .iter()
        .map(|v| (v * scale).round().clamp(0.0, u16::MAX as f64) as u16)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> SequenceMeta {
        SequenceMeta::default()
    }

    fn stack(n: usize, w: usize, h: usize) -> RawStack {
        RawStack {
            width: w,
            height: h,
            frames: (0..n)
                .map(|i| (0..w * h).map(|p| (p * 7 + i * 1000) as u16).collect())
                .collect(),
        }
    }

    #[test]
    fn tiff_roundtrip_and_timing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seq.tif");
        let s = stack(5, 6, 4);
        write_tiff_stack(&path, &s).unwrap();
        let frames = load_sequence(&path, SequenceFormat::TiffStack, &meta()).unwrap();
        assert_eq!(frames.len(), 5);
        for (i, f) in frames.iter().enumerate() {
            assert_eq!(f.frame_index, i);
            assert!((f.time - i as f64 * 0.01).abs() < 1e-12);
            assert_eq!(f.get(1, 0), s.frames[i][1] as f64);
        }
    }

    #[test]
    fn raw_directory_in_name_order() {
        let dir = tempfile::tempdir().unwrap();
        let s = stack(3, 4, 2);
        for (i, data) in s.frames.iter().enumerate().rev() {
            let single = RawStack {
                width: 4,
                height: 2,
                frames: vec![data.clone()],
            };
            write_raw_stack(&dir.path().join(format!("f{i:03}.raw")), &single).unwrap();
        }
        let fmt = SequenceFormat::RawU16 {
            width: 4,
            height: 2,
        };
        assert_eq!(read_stack(dir.path(), fmt).unwrap(), s);
    }

    #[test]
    fn empty_directory_has_no_frames() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_stack(dir.path(), SequenceFormat::TiffStack).unwrap_err();
        assert!(err.to_string().starts_with("no frames found"));
    }

    #[test]
    fn single_frame_at_time_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.tif");
        write_tiff_stack(&path, &stack(1, 3, 3)).unwrap();
        let frames = load_sequence(&path, SequenceFormat::TiffStack, &meta()).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].time, 0.0);
    }

    #[test]
    fn dimension_mismatch_names_file_and_frame() {
        let dir = tempfile::tempdir().unwrap();
        write_tiff_stack(&dir.path().join("a.tif"), &stack(2, 4, 4)).unwrap();
        write_tiff_stack(&dir.path().join("b.tif"), &stack(1, 5, 4)).unwrap();
        let err = read_stack(dir.path(), SequenceFormat::TiffStack).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("b.tif") && msg.contains("frame 2"), "{msg}");
    }

    #[test]
    fn missing_and_corrupt_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.tif");
        let err = read_stack(&missing, SequenceFormat::TiffStack).unwrap_err();
        assert!(err.to_string().contains("nope.tif"));
        let bad = dir.path().join("bad.tif");
        fs::write(&bad, b"not a tiff").unwrap();
        let err = read_stack(&bad, SequenceFormat::TiffStack).unwrap_err();
        assert!(err.to_string().contains("bad.tif"));
        let raw = dir.path().join("short.raw");
        fs::write(&raw, [0u8; 7]).unwrap();
        let fmt = SequenceFormat::RawU16 {
            width: 2,
            height: 2,
        };
        assert!(read_stack(&raw, fmt).is_err());
    }

    #[test]
    fn eight_bit_tiff_is_promoted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g8.tif");
        {
            let file = File::create(&path).unwrap();
            let mut enc = TiffEncoder::new(BufWriter::new(file)).unwrap();
            enc.write_image::<colortype::Gray8>(2, 2, &[1, 2, 3, 250]).unwrap();
        }
        let s = read_stack(&path, SequenceFormat::TiffStack).unwrap();
        assert_eq!(s.frames[0], vec![1, 2, 3, 250]);
    }

    #[test]
    fn float_pages_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cal.tif");
        let a = Frame::from_fn(3, 2, |x, y| x as f64 * 0.5 + y as f64);
        let b = Frame::filled(3, 2, -1.25);
        write_f64_pages(&path, &[&a, &b]).unwrap();
        let pages = read_f64_pages(&path).unwrap();
        assert_eq!(pages[0].pixels, a.pixels);
        assert_eq!(pages[1].pixels, b.pixels);
    }
}
